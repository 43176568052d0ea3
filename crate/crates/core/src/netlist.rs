//! Netlist representation: a single structural module bound to a cell
//! library, plus the canonical Verilog emitter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_lib::{CellLibrary, ASSIGN_CELL};

/// Errors raised while parsing or validating a netlist.
#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: u32,
        col: u32,
        message: String,
    },
    #[error("unsupported construct at line {line}: {construct}")]
    UnsupportedConstruct { line: u32, construct: String },
    #[error("unknown cell type `{cell}` at line {line}")]
    UnknownCell { line: u32, cell: String },
    #[error("cell `{cell}` has no pin `{pin}` (line {line})")]
    UnknownPin {
        line: u32,
        cell: String,
        pin: String,
    },
    #[error("instance `{instance}` leaves pin `{pin}` of `{cell}` unconnected (line {line})")]
    MissingPin {
        line: u32,
        cell: String,
        instance: String,
        pin: String,
    },
    #[error("instance `{instance}` connects pin `{pin}` more than once (line {line})")]
    DuplicatePinConnection {
        line: u32,
        instance: String,
        pin: String,
    },
    #[error("duplicate instance name `{0}`")]
    DuplicateInstance(String),
    #[error("net `{net}` has multiple drivers")]
    MultipleDrivers { net: String },
    #[error("net `{net}` is never driven (no gate output and no primary input binds it)")]
    UndrivenNet { net: String },
    #[error("port `{0}` appears in the header but has no input/output declaration")]
    UndeclaredPort(String),
    #[error("`{0}` is declared input/output but is missing from the port header")]
    PortNotInHeader(String),
}

/// A single cell instantiation. Connections keep source order so that
/// emission is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub cell_type: String,
    pub name: String,
    /// Ordered pin → net bindings.
    pub connections: Vec<(String, String)>,
    pub source_line: u32,
}

impl Instance {
    pub fn net_on(&self, pin: &str) -> Option<&str> {
        self.connections
            .iter()
            .find(|(p, _)| p == pin)
            .map(|(_, n)| n.as_str())
    }
}

/// A validated structural module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub module_name: String,
    pub primary_inputs: Vec<String>,
    pub primary_outputs: Vec<String>,
    pub instances: Vec<Instance>,
}

impl Netlist {
    /// The net driven by an instance, per its library entry.
    pub fn output_net<'a>(&self, inst: &'a Instance, lib: &CellLibrary) -> Option<&'a str> {
        let entry = lib.get(&inst.cell_type)?;
        inst.net_on(&entry.output)
    }

    /// All nets referenced by ports or connections, sorted.
    pub fn connected_nets(&self) -> BTreeSet<&str> {
        let mut nets: BTreeSet<&str> = BTreeSet::new();
        nets.extend(self.primary_inputs.iter().map(String::as_str));
        nets.extend(self.primary_outputs.iter().map(String::as_str));
        for inst in &self.instances {
            nets.extend(inst.connections.iter().map(|(_, n)| n.as_str()));
        }
        nets
    }

    /// Check the netlist invariants against a library: every cell known,
    /// every pin bound exactly once, single driver per net, no undriven
    /// connected nets.
    pub fn validate(&self, lib: &CellLibrary) -> Result<(), NetlistError> {
        let mut instance_names = BTreeSet::new();
        // net -> driver count
        let mut drivers: BTreeMap<&str, u32> = BTreeMap::new();
        for pi in &self.primary_inputs {
            *drivers.entry(pi.as_str()).or_insert(0) += 1;
        }
        for inst in &self.instances {
            if !instance_names.insert(inst.name.as_str()) {
                return Err(NetlistError::DuplicateInstance(inst.name.clone()));
            }
            let entry = lib
                .get(&inst.cell_type)
                .ok_or_else(|| NetlistError::UnknownCell {
                    line: inst.source_line,
                    cell: inst.cell_type.clone(),
                })?;
            let mut seen = BTreeSet::new();
            for (pin, _) in &inst.connections {
                if !seen.insert(pin.as_str()) {
                    return Err(NetlistError::DuplicatePinConnection {
                        line: inst.source_line,
                        instance: inst.name.clone(),
                        pin: pin.clone(),
                    });
                }
                if pin != &entry.output && !entry.inputs.iter().any(|p| p == pin) {
                    return Err(NetlistError::UnknownPin {
                        line: inst.source_line,
                        cell: inst.cell_type.clone(),
                        pin: pin.clone(),
                    });
                }
            }
            for pin in entry.inputs.iter().chain(std::iter::once(&entry.output)) {
                if !seen.contains(pin.as_str()) {
                    return Err(NetlistError::MissingPin {
                        line: inst.source_line,
                        cell: inst.cell_type.clone(),
                        instance: inst.name.clone(),
                        pin: pin.clone(),
                    });
                }
            }
            let out_net = inst.net_on(&entry.output).expect("checked above");
            *drivers.entry(out_net).or_insert(0) += 1;
        }
        for (net, count) in &drivers {
            if *count > 1 {
                return Err(NetlistError::MultipleDrivers {
                    net: (*net).to_string(),
                });
            }
        }
        for net in self.connected_nets() {
            if !drivers.contains_key(net) {
                return Err(NetlistError::UndrivenNet {
                    net: net.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Emit the canonical structural Verilog form. `parse_netlist` on the
    /// result reproduces this netlist field-by-field (source lines match
    /// the emitted layout).
    pub fn to_verilog(&self) -> String {
        let mut out = String::new();
        let ports: Vec<&str> = self
            .primary_inputs
            .iter()
            .chain(self.primary_outputs.iter())
            .map(String::as_str)
            .collect();
        let _ = writeln!(out, "module {} ({});", self.module_name, ports.join(", "));
        for pi in &self.primary_inputs {
            let _ = writeln!(out, "  input {pi};");
        }
        for po in &self.primary_outputs {
            let _ = writeln!(out, "  output {po};");
        }
        let port_set: BTreeSet<&str> = ports.iter().copied().collect();
        for net in self.connected_nets() {
            if !port_set.contains(net) {
                let _ = writeln!(out, "  wire {net};");
            }
        }
        for inst in &self.instances {
            if inst.cell_type == ASSIGN_CELL {
                let lhs = inst.net_on("Y").unwrap_or("?");
                let rhs = inst.net_on("A").unwrap_or("?");
                let _ = writeln!(out, "  assign {lhs} = {rhs};");
            } else {
                let conns: Vec<String> = inst
                    .connections
                    .iter()
                    .map(|(pin, net)| format!(".{pin}({net})"))
                    .collect();
                let _ = writeln!(
                    out,
                    "  {} {} ({});",
                    inst.cell_type,
                    inst.name,
                    conns.join(", ")
                );
            }
        }
        out.push_str("endmodule\n");
        out
    }
}
