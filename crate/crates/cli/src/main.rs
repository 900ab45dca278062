mod corpus;

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tira_core::diagnostics::{has_errors, Diagnostic, Severity};
use tira_core::hub::{diff_documents, DirStore, Hub};
use tira_core::openapi::{parse_document, OpenApiDocument, SourceFormat};
use tira_core::resolver::{analyze, validate_service};
use tira_core::webhook::{HttpTemplateFetcher, Ingestor, LocalDirFetcher, WebhookConfig};
use tira_hub::ServerConfig;

const EXIT_FINDINGS: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "tira",
    version,
    about = "Transparency annotations for OpenAPI service descriptions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a spec and its x-tira annotations.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the effective transparency properties of every indicator.
    Profile { file: PathBuf },
    /// Aggregate a directory of services into a transparency report.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// JSON array of {sender, receiver, datum_names} edges.
        #[arg(long)]
        links: Option<PathBuf>,
        #[arg(long)]
        system_info: Option<PathBuf>,
        #[arg(long)]
        aliases: Option<PathBuf>,
        /// Emit the flow graph in Graphviz format instead.
        #[arg(long)]
        dot: bool,
    },
    /// Compare what two specs declare.
    Diff { before: PathBuf, after: PathBuf },
    /// Run the hub.
    Serve {
        #[arg(long, env = "TIRA_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "TIRA_BIND", default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Persistent store; without it state lives in memory only.
        #[arg(long, env = "TIRA_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Bearer token required on mutating routes.
        #[arg(long, env = "TIRA_TOKEN", hide_env_values = true)]
        token: Option<String>,
        #[arg(long, env = "TIRA_WEBHOOK_SECRET", hide_env_values = true)]
        webhook_secret: Option<String>,
        /// Read pushed files from <DIR>/<repo_name>/<path>.
        #[arg(long, conflicts_with = "fetch_url")]
        fetch_dir: Option<PathBuf>,
        /// URL template with {repo_url} {repo_name} {commit} {ref} {path}.
        #[arg(long)]
        fetch_url: Option<String>,
        /// Branches accepted when a push does not name its default branch.
        #[arg(long, value_delimiter = ',', default_value = "main,master")]
        branches: Vec<String>,
        #[arg(long)]
        any_ref: bool,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("tira: {message}");
    ExitCode::from(code)
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("output serializes")
    );
}

enum Loaded {
    Doc(Box<OpenApiDocument>),
    Rejected(Vec<Diagnostic>),
}

fn load(path: &Path) -> Result<Loaded, ExitCode> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    Ok(match parse_document(&text, SourceFormat::from_path(path)) {
        Ok(doc) => Loaded::Doc(Box::new(doc)),
        Err(d) => Loaded::Rejected(d),
    })
}

fn render_text(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        println!("{}: {d}", path.display());
    }
    let count = |s: Severity| diags.iter().filter(|d| d.severity == s).count();
    println!(
        "{} error(s), {} warning(s), {} note(s)",
        count(Severity::Error),
        count(Severity::Warning),
        count(Severity::Info)
    );
}

fn validate(file: &Path, format: Format) -> ExitCode {
    let diags = match load(file) {
        Ok(Loaded::Doc(doc)) => validate_service(&doc),
        Ok(Loaded::Rejected(d)) => d,
        Err(code) => return code,
    };
    match format {
        Format::Json => print_json(&diags),
        Format::Text => render_text(file, &diags),
    }
    if has_errors(&diags) {
        ExitCode::from(EXIT_FINDINGS)
    } else {
        ExitCode::SUCCESS
    }
}

fn profile(file: &Path) -> ExitCode {
    match load(file) {
        Ok(Loaded::Doc(doc)) => {
            print_json(&analyze(&doc));
            ExitCode::SUCCESS
        }
        Ok(Loaded::Rejected(d)) => {
            render_text(file, &d);
            ExitCode::from(EXIT_FINDINGS)
        }
        Err(code) => code,
    }
}

fn diff(before: &Path, after: &Path) -> ExitCode {
    let mut docs = Vec::new();
    for p in [before, after] {
        match load(p) {
            Ok(Loaded::Doc(d)) => docs.push(d),
            Ok(Loaded::Rejected(d)) => {
                render_text(p, &d);
                return ExitCode::from(EXIT_FINDINGS);
            }
            Err(code) => return code,
        }
    }
    print_json(&diff_documents(&docs[0], &docs[1]));
    ExitCode::SUCCESS
}

fn report(inputs: corpus::Inputs<'_>, dot: bool) -> ExitCode {
    let hub = match corpus::load(&inputs) {
        Ok(hub) => hub,
        Err(corpus::CorpusError::Io(msg)) => return fail(EXIT_USAGE, msg),
        Err(corpus::CorpusError::Invalid(lines)) => {
            for l in &lines {
                eprintln!("tira: {l}");
            }
            return ExitCode::from(EXIT_FINDINGS);
        }
    };
    if dot {
        print!("{}", hub.flow().graph.to_dot());
    } else {
        print_json(&hub.report());
    }
    ExitCode::SUCCESS
}

#[allow(clippy::too_many_arguments)]
fn serve(
    addr: SocketAddr,
    data_dir: Option<PathBuf>,
    config: ServerConfig,
    fetch_dir: Option<PathBuf>,
    fetch_url: Option<String>,
    branches: Vec<String>,
    any_ref: bool,
) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info,tower_http=warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let hub = match &data_dir {
        Some(dir) => DirStore::open(dir)
            .map_err(|e| e.to_string())
            .and_then(|s| Hub::open(s).map_err(|e| e.to_string())),
        None => {
            eprintln!("tira: no --data-dir given, state is kept in memory only");
            Ok(Hub::in_memory())
        }
    };
    let hub = match hub {
        Ok(h) => Arc::new(h),
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let mut ingestor = Ingestor::new(hub).with_config(WebhookConfig {
        branches,
        any_ref,
        ..WebhookConfig::default()
    });
    if let Some(dir) = fetch_dir {
        ingestor = ingestor.with_fetcher(LocalDirFetcher::new(dir));
    } else if let Some(t) = fetch_url {
        ingestor = ingestor.with_fetcher(HttpTemplateFetcher::new(t));
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let result = runtime.block_on(async move {
        let listener = tira_hub::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        tira_hub::serve(listener, tira_hub::router(ingestor, config), shutdown).await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Validate { file, format } => validate(&file, format),
        Command::Profile { file } => profile(&file),
        Command::Diff { before, after } => diff(&before, &after),
        Command::Report {
            dir,
            links,
            system_info,
            aliases,
            dot,
        } => report(
            corpus::Inputs {
                dir: &dir,
                links: links.as_deref(),
                system_info: system_info.as_deref(),
                aliases: aliases.as_deref(),
            },
            dot,
        ),
        Command::Serve {
            port,
            bind,
            data_dir,
            token,
            webhook_secret,
            fetch_dir,
            fetch_url,
            branches,
            any_ref,
        } => serve(
            SocketAddr::new(bind, port),
            data_dir,
            ServerConfig {
                token,
                webhook_secret,
            },
            fetch_dir,
            fetch_url,
            branches,
            any_ref,
        ),
    }
}
