use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub sender: String,
    pub receiver: String,
    #[serde(default)]
    pub datum_names: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("unknown service `{0}` in link")]
    UnknownEndpoint(String),
}

/// Directed personal-data flows between services. Parallel edges are
/// collapsed into one with the union of their datum names; cycles are
/// allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<FlowEdge>,
}

impl FlowGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = FlowEdge>,
    ) -> Result<Self, FlowError> {
        let nodes: BTreeSet<String> = nodes.into_iter().collect();
        let mut merged: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for e in edges {
            for end in [&e.sender, &e.receiver] {
                if !nodes.contains(end) {
                    return Err(FlowError::UnknownEndpoint(end.clone()));
                }
            }
            merged
                .entry((e.sender, e.receiver))
                .or_default()
                .extend(e.datum_names);
        }
        let edges = merged
            .into_iter()
            .map(|((sender, receiver), datum_names)| FlowEdge {
                sender,
                receiver,
                datum_names,
            })
            .collect();
        Ok(Self { nodes, edges })
    }

    fn successors(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            succ.entry(e.sender.as_str())
                .or_default()
                .push(e.receiver.as_str());
        }
        succ
    }

    /// Graphviz rendering; edges are labelled with their datum names.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph transparency_flow {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", dot_id(n));
        }
        for e in &self.edges {
            let label: Vec<&str> = e.datum_names.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                dot_id(&e.sender),
                dot_id(&e.receiver),
                dot_id(&label.join(", "))
            );
        }
        out.push_str("}\n");
        out
    }
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Every `(sender, receiver)` pair where `receiver` is reachable from
/// `sender` over one or more edges. Self pairs are left out, even on cycles.
pub fn flow_closure(graph: &FlowGraph) -> BTreeSet<(String, String)> {
    let succ = graph.successors();
    let mut out = BTreeSet::new();
    for start in &graph.nodes {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = succ
            .get(start.as_str())
            .into_iter()
            .flatten()
            .copied()
            .collect();
        while let Some(n) = queue.pop_front() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(next) = succ.get(n) {
                queue.extend(next.iter().copied());
            }
        }
        for n in seen {
            if n != start {
                out.insert((start.clone(), n.to_owned()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: &str, b: &str) -> FlowEdge {
        FlowEdge {
            sender: a.into(),
            receiver: b.into(),
            datum_names: BTreeSet::new(),
        }
    }

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> FlowGraph {
        FlowGraph::new(
            nodes.iter().map(|s| s.to_string()),
            edges.iter().map(|(a, b)| edge(a, b)),
        )
        .unwrap()
    }

    fn pairs(p: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        p.iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn two_hop_chain() {
        let g = graph(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        assert_eq!(
            flow_closure(&g),
            pairs(&[("A", "B"), ("A", "C"), ("B", "C")])
        );
    }

    #[test]
    fn fan_out() {
        let g = graph(&["A", "B", "C"], &[("A", "B"), ("A", "C")]);
        assert_eq!(flow_closure(&g), pairs(&[("A", "B"), ("A", "C")]));
    }

    #[test]
    fn cycles_have_no_self_pairs() {
        let g = graph(&["A", "B"], &[("A", "B"), ("B", "A")]);
        assert_eq!(flow_closure(&g), pairs(&[("A", "B"), ("B", "A")]));
    }

    #[test]
    fn parallel_edges_collapse() {
        let mut e1 = edge("A", "B");
        e1.datum_names.insert("Weight".into());
        let mut e2 = edge("A", "B");
        e2.datum_names.insert("Stepcount".into());
        let g = FlowGraph::new(["A".to_string(), "B".to_string()], [e1, e2]).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].datum_names.len(), 2);
    }

    #[test]
    fn unknown_endpoints_are_rejected() {
        let err = FlowGraph::new(["A".to_string()], [edge("A", "Z")]).unwrap_err();
        assert_eq!(err, FlowError::UnknownEndpoint("Z".into()));
    }

    #[test]
    fn dot_output_quotes_identifiers() {
        let g = graph(&["a\"b", "c"], &[("a\"b", "c")]);
        let dot = g.to_dot();
        assert!(dot.contains("\"a\\\"b\" -> \"c\""));
    }
}
