//! Ground-truth trojan labels: JSON map from circuit name to trojan nets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use thiserror::Error;

use crate::graph::CircuitGraph;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("malformed label file: {0}")]
    MalformedLabelFile(String),
    #[error("i/o error reading label file: {0}")]
    Io(#[from] std::io::Error),
}

/// A label referencing a net that does not exist in the named circuit.
/// Warning-level: collected and reported, never silently dropped.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct UnknownNet {
    pub circuit: String,
    pub net: String,
}

/// Parsed label file: `{ "<circuit>": ["net_a", "net_b", ...] }`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    circuits: BTreeMap<String, BTreeSet<String>>,
}

impl LabelMap {
    pub fn new(circuits: BTreeMap<String, BTreeSet<String>>) -> Self {
        LabelMap { circuits }
    }

    pub fn from_json(text: &str) -> Result<Self, LabelError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)
            .map_err(|e| LabelError::MalformedLabelFile(e.to_string()))?;
        let circuits = raw
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        Ok(LabelMap { circuits })
    }

    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self, LabelError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&String, Vec<&String>> = self
            .circuits
            .iter()
            .map(|(k, v)| (k, v.iter().collect()))
            .collect();
        serde_json::to_string_pretty(&raw).expect("label map serializes")
    }

    /// Trojan nets for a circuit; empty set when the circuit is unlisted.
    pub fn nets_for(&self, circuit: &str) -> BTreeSet<String> {
        self.circuits.get(circuit).cloned().unwrap_or_default()
    }

    pub fn circuits(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.circuits.iter()
    }

    pub fn total_labels(&self) -> usize {
        self.circuits.values().map(BTreeSet::len).sum()
    }

    /// Labels naming nets absent from the circuit's graph.
    pub fn unknown_nets(&self, graph: &CircuitGraph) -> Vec<UnknownNet> {
        self.nets_for(graph.name())
            .iter()
            .filter(|net| graph.net_id(net).is_none())
            .map(|net| UnknownNet {
                circuit: graph.name().to_string(),
                net: net.clone(),
            })
            .collect()
    }
}
