use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde_json::Value;
use tira_core::aggregate::AliasTable;
use tira_core::flow::FlowEdge;
use tira_core::hub::{DirStore, Hub, NewService, SystemWideInfo, VersionOutcome, VersionSource};
use tira_core::webhook::{Action, Ingestor, PushEvent};

fn fixture(rel: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel);
    std::fs::read_to_string(p).unwrap()
}

fn open(dir: &Path) -> Hub {
    Hub::open(DirStore::open(dir).unwrap()).unwrap()
}

fn report_without_timestamp(hub: &Hub) -> Value {
    let mut v = serde_json::to_value(hub.report()).unwrap();
    v.as_object_mut().unwrap().remove("generated_at");
    v
}

#[test]
fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let hub = open(dir.path());
        let (weights, _) = hub
            .register_service(NewService::new("Weights", fixture("weight.yaml")))
            .unwrap();
        let out = hub
            .add_spec_version(
                &weights.id,
                &fixture("weight_retention.yaml"),
                VersionSource::ManualUpload,
            )
            .unwrap();
        assert!(matches!(out, VersionOutcome::Appended { .. }));
        hub.register_service(NewService::new(
            "Broker",
            fixture("fitness/broker/openapi.yaml"),
        ))
        .unwrap();
        hub.set_links(vec![FlowEdge {
            sender: "weights".into(),
            receiver: "broker".into(),
            datum_names: ["Weight".to_owned()].into(),
        }])
        .unwrap();
        hub.set_system_info(SystemWideInfo {
            third_country_safeguards: Some("adequacy decision".into()),
            ..SystemWideInfo::default()
        })
        .unwrap();
        hub.set_aliases(AliasTable {
            datums: BTreeMap::from([("stepcount".to_owned(), "Steps".to_owned())]),
            ..AliasTable::default()
        })
        .unwrap();
        report_without_timestamp(&hub)
    };

    let hub = open(dir.path());
    assert_eq!(report_without_timestamp(&hub), before);
    let detail = hub.service("weights").unwrap();
    assert_eq!(detail.versions.len(), 2);
    assert_eq!(hub.spec_text("weights", 1).unwrap(), fixture("weight.yaml"));
    assert_eq!(
        hub.spec_text("weights", 2).unwrap(),
        fixture("weight_retention.yaml")
    );
    assert_eq!(
        hub.diff_versions("weights", 1, 2)
            .unwrap()
            .properties_changed
            .len(),
        1
    );
    assert!(hub.datum("steps").is_some());
}

#[test]
fn webhook_replay_after_restart_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let event = PushEvent {
        repo_url: "https://git.example/acme/weights.git".into(),
        git_ref: "refs/heads/main".into(),
        head_commit: "abc".into(),
        changed_files: vec!["openapi.yaml".into()],
        inline_specs: Some(BTreeMap::from([(
            "openapi.yaml".to_owned(),
            fixture("weight.yaml"),
        )])),
        ..PushEvent::default()
    };
    {
        let ingestor = Ingestor::new(Arc::new(open(dir.path())));
        let out = ingestor.handle_push(&event).unwrap();
        assert_eq!(out[0].action, Action::Created);
        assert_eq!(out[0].service_id.as_deref(), Some("weights"));
    }
    let hub = Arc::new(open(dir.path()));
    let ingestor = Ingestor::new(hub.clone());
    let out = ingestor.handle_push(&event).unwrap();
    assert_eq!(out[0].action, Action::Unchanged);
    assert_eq!(hub.service("weights").unwrap().versions.len(), 1);
}
