//! Cell library: the set of gate types a netlist may instantiate.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pseudo cell type used to represent `assign lhs = rhs;` statements.
/// Injected into every library; treated as a one-input buffer.
pub const ASSIGN_CELL: &str = "$assign";

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("cell `{0}` declares no input pins")]
    NoInputs(String),
    #[error("cell `{0}` has an empty pin name")]
    EmptyPinName(String),
    #[error("cell `{0}` repeats pin name `{1}`")]
    DuplicatePin(String, String),
    #[error("malformed cell library: {0}")]
    Malformed(String),
    #[error("i/o error reading cell library: {0}")]
    Io(#[from] std::io::Error),
}

/// One cell type: named input pins, a single output pin, and role flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEntry {
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default)]
    pub is_flip_flop: bool,
    #[serde(default)]
    pub is_buffer_or_inverter: bool,
}

/// Map from cell-type name to its pin definition.
///
/// Construction validates that every entry has at least one input pin,
/// exactly one output pin (enforced by the schema), and distinct pin
/// names. The `$assign` pseudo-cell is always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellLibrary {
    entries: BTreeMap<String, CellEntry>,
}

impl CellLibrary {
    /// Build a library from explicit entries. The `$assign` pseudo-cell is
    /// added automatically.
    pub fn new(entries: BTreeMap<String, CellEntry>) -> Result<Self, LibraryError> {
        let mut lib = CellLibrary { entries };
        lib.entries.insert(
            ASSIGN_CELL.to_string(),
            CellEntry {
                inputs: vec!["A".to_string()],
                output: "Y".to_string(),
                is_flip_flop: false,
                is_buffer_or_inverter: true,
            },
        );
        lib.validate()?;
        Ok(lib)
    }

    /// Parse a library from its JSON form: a map cell-type → entry.
    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let entries: BTreeMap<String, CellEntry> =
            serde_json::from_str(text).map_err(|e| LibraryError::Malformed(e.to_string()))?;
        Self::new(entries)
    }

    /// Read and parse a JSON library.
    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self, LibraryError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("library serializes")
    }

    pub fn get(&self, cell_type: &str) -> Option<&CellEntry> {
        self.entries.get(cell_type)
    }

    pub fn contains(&self, cell_type: &str) -> bool {
        self.entries.contains_key(cell_type)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CellEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn validate(&self) -> Result<(), LibraryError> {
        for (name, entry) in &self.entries {
            if entry.inputs.is_empty() {
                return Err(LibraryError::NoInputs(name.clone()));
            }
            if entry.output.is_empty() || entry.inputs.iter().any(String::is_empty) {
                return Err(LibraryError::EmptyPinName(name.clone()));
            }
            let mut seen = std::collections::BTreeSet::new();
            for pin in entry.inputs.iter().chain(std::iter::once(&entry.output)) {
                if !seen.insert(pin.as_str()) {
                    return Err(LibraryError::DuplicatePin(name.clone(), pin.clone()));
                }
            }
        }
        Ok(())
    }
}

/// The generic library shipped with the tool: AND/OR/NAND/NOR/XOR/XNOR at
/// arities 2–4, INV, BUF, MUX2, and a 1-input DFF.
pub fn default_library() -> CellLibrary {
    let mut entries = BTreeMap::new();
    let pin_names = ["A", "B", "C", "D"];
    for family in ["AND", "OR", "NAND", "NOR", "XOR", "XNOR"] {
        for arity in 2..=4usize {
            entries.insert(
                format!("{family}{arity}"),
                CellEntry {
                    inputs: pin_names[..arity].iter().map(|p| p.to_string()).collect(),
                    output: "Y".to_string(),
                    is_flip_flop: false,
                    is_buffer_or_inverter: false,
                },
            );
        }
    }
    for name in ["INV", "BUF"] {
        entries.insert(
            name.to_string(),
            CellEntry {
                inputs: vec!["A".to_string()],
                output: "Y".to_string(),
                is_flip_flop: false,
                is_buffer_or_inverter: true,
            },
        );
    }
    entries.insert(
        "MUX2".to_string(),
        CellEntry {
            inputs: vec!["A".to_string(), "B".to_string(), "S".to_string()],
            output: "Y".to_string(),
            is_flip_flop: false,
            is_buffer_or_inverter: false,
        },
    );
    entries.insert(
        "DFF".to_string(),
        CellEntry {
            inputs: vec!["D".to_string()],
            output: "Q".to_string(),
            is_flip_flop: true,
            is_buffer_or_inverter: false,
        },
    );
    CellLibrary::new(entries).expect("default library is valid")
}
