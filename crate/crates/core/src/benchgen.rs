//! Synthetic circuit generation: random acyclic gate networks where every
//! gate lies on a path from a primary input to a primary output, plus
//! rare-event trigger + mux payload trojan insertion with exact labels.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_lib::CellLibrary;
use crate::netlist::{Instance, Netlist};

#[derive(Debug, Error)]
pub enum BenchgenError {
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),
    #[error("netlist has {available} usable internal nets, trigger needs {needed}")]
    InsufficientNets { needed: usize, available: usize },
    #[error("netlist has no gate-driven primary output to splice")]
    NoGateDrivenOutput,
    #[error("cell library lacks `{0}`, required for trojan insertion")]
    MissingCell(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_circuits: usize,
    /// Inclusive range of gate counts per circuit.
    pub gates_per_circuit: (usize, usize),
    pub pi_count: (usize, usize),
    pub po_count: (usize, usize),
    /// Probability that a gate is a flip-flop.
    pub ff_fraction: f64,
    /// Share of circuits that receive a trojan.
    pub trojan_fraction_of_circuits: f64,
    /// Trigger width n: the AND tree condition taps this many nets.
    pub trigger_width: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_circuits: 30,
            gates_per_circuit: (180, 280),
            pi_count: (8, 16),
            po_count: (4, 10),
            ff_fraction: 0.12,
            trojan_fraction_of_circuits: 0.34,
            trigger_width: 8,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), BenchgenError> {
        let range_ok = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if self.n_circuits == 0 {
            return Err(BenchgenError::InfeasibleConfig(
                "n_circuits must be >= 1".into(),
            ));
        }
        if !range_ok(self.gates_per_circuit) || !range_ok(self.pi_count) || !range_ok(self.po_count)
        {
            return Err(BenchgenError::InfeasibleConfig(
                "ranges must be nonempty with lower bound >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ff_fraction)
            || !(0.0..=1.0).contains(&self.trojan_fraction_of_circuits)
        {
            return Err(BenchgenError::InfeasibleConfig(
                "fractions must lie in [0, 1]".into(),
            ));
        }
        if self.trigger_width < 2 {
            return Err(BenchgenError::InfeasibleConfig(
                "trigger_width must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted comb-cell table; weights shape the arity distribution. The
/// mix leans on 3- and 4-input gates so that benign fanin statistics
/// overlap inserted trigger logic instead of leaving it trivially
/// separable.
const COMB_CELLS: &[(&str, usize, u32)] = &[
    ("AND2", 2, 10),
    ("AND3", 3, 6),
    ("AND4", 4, 4),
    ("OR2", 2, 8),
    ("OR3", 3, 4),
    ("OR4", 4, 3),
    ("NAND2", 2, 10),
    ("NAND3", 3, 5),
    ("NAND4", 4, 3),
    ("NOR2", 2, 7),
    ("NOR3", 3, 4),
    ("NOR4", 4, 2),
    ("XOR2", 2, 5),
    ("XOR3", 3, 3),
    ("XNOR2", 2, 4),
    ("XNOR3", 3, 2),
    ("INV", 1, 6),
    ("BUF", 1, 2),
    ("MUX2", 3, 6),
];

fn pick_comb_cell(rng: &mut ChaCha8Rng) -> (&'static str, usize) {
    let total: u32 = COMB_CELLS.iter().map(|(_, _, w)| w).sum();
    let mut roll = rng.gen_range(0..total);
    for &(name, arity, weight) in COMB_CELLS {
        if roll < weight {
            return (name, arity);
        }
        roll -= weight;
    }
    unreachable!("weights cover the roll")
}

fn pin_names(arity: usize) -> &'static [&'static str] {
    &["A", "B", "C", "D"][..arity]
}

/// Deterministic random circuit for (seed, index). Construction is in
/// topological order; a consumption plan guarantees that every net except
/// exactly `po_count` gate outputs acquires a reader, so every gate sits
/// on some PI -> PO path.
pub fn generate_circuit(cfg: &GenConfig, index: usize) -> Result<Netlist, BenchgenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 * 2);

    let n_gates = rng.gen_range(cfg.gates_per_circuit.0..=cfg.gates_per_circuit.1);
    let n_pi = rng.gen_range(cfg.pi_count.0..=cfg.pi_count.1);
    let n_po = rng.gen_range(cfg.po_count.0..=cfg.po_count.1);
    if n_po > n_gates {
        return Err(BenchgenError::InfeasibleConfig(format!(
            "po_count {n_po} exceeds gate count {n_gates}"
        )));
    }

    // choose all cells first so consumption capacity is known
    let mut cells: Vec<(String, usize)> = (0..n_gates)
        .map(|_| {
            if rng.gen_bool(cfg.ff_fraction) {
                ("DFF".to_string(), 1)
            } else {
                let (name, arity) = pick_comb_cell(&mut rng);
                (name.to_string(), arity)
            }
        })
        .collect();

    // every net except the po_count sinks needs a reader
    let needed: usize = n_pi + n_gates - n_po;
    let capacity: usize = cells.iter().map(|(_, a)| a).sum();
    if capacity < needed {
        // upgrade cells toward arity 4 until the plan fits
        let mut gap = needed - capacity;
        for cell in cells.iter_mut() {
            if gap == 0 {
                break;
            }
            let target = (cell.1 + gap).min(4);
            if target > cell.1 {
                let family = if cell.0 == "DFF" {
                    "AND"
                } else {
                    &cell.0[..cell.0.len().saturating_sub(1)]
                };
                let family = match family {
                    "AND" | "OR" | "NAND" | "NOR" | "XOR" | "XNOR" => family,
                    _ => "AND",
                };
                gap -= target - cell.1;
                *cell = (format!("{family}{target}"), target);
            }
        }
        if gap > 0 {
            return Err(BenchgenError::InfeasibleConfig(format!(
                "cannot consume {needed} nets with {n_gates} gates"
            )));
        }
    }

    let mut instances = Vec::with_capacity(n_gates);
    // pool of nets without a reader yet; primary inputs go first and are
    // always consumed before gate outputs
    let mut pi_pool: Vec<String> = (0..n_pi).map(|i| format!("pi{i}")).collect();
    let mut net_pool: Vec<String> = Vec::new();
    let mut consumed: Vec<String> = Vec::new();
    let mut to_consume = needed;

    for (g, (cell, arity)) in cells.iter().enumerate() {
        let out = format!("n{g}");
        let mut inputs: Vec<String> = Vec::with_capacity(*arity);
        let mut fresh = (*arity).min(pi_pool.len() + net_pool.len()).min(to_consume);
        to_consume -= fresh;
        while fresh > 0 {
            let net = if !pi_pool.is_empty() {
                let at = rng.gen_range(0..pi_pool.len());
                pi_pool.swap_remove(at)
            } else {
                let at = rng.gen_range(0..net_pool.len());
                net_pool.swap_remove(at)
            };
            consumed.push(net.clone());
            inputs.push(net);
            fresh -= 1;
        }
        while inputs.len() < *arity {
            // reuse an already-read net; raises fanout
            let net = if consumed.is_empty() {
                inputs[rng.gen_range(0..inputs.len())].clone()
            } else {
                consumed[rng.gen_range(0..consumed.len())].clone()
            };
            inputs.push(net);
        }
        let entry_pins = pin_names(if *cell == "DFF" { 1 } else { *arity });
        let mut connections: Vec<(String, String)> = Vec::with_capacity(arity + 1);
        if *cell == "DFF" {
            connections.push(("D".to_string(), inputs[0].clone()));
            connections.push(("Q".to_string(), out.clone()));
        } else if *cell == "MUX2" {
            connections.push(("A".to_string(), inputs[0].clone()));
            connections.push(("B".to_string(), inputs[1].clone()));
            connections.push(("S".to_string(), inputs[2].clone()));
            connections.push(("Y".to_string(), out.clone()));
        } else {
            for (pin, net) in entry_pins.iter().zip(inputs.iter()) {
                connections.push((pin.to_string(), net.clone()));
            }
            connections.push(("Y".to_string(), out.clone()));
        }
        instances.push(Instance {
            cell_type: cell.clone(),
            name: format!("g{g}"),
            connections,
            source_line: 0,
        });
        net_pool.push(out);
    }

    if to_consume > 0 || !pi_pool.is_empty() {
        return Err(BenchgenError::InfeasibleConfig(format!(
            "wiring plan left {to_consume} reads and {} inputs unplaced",
            pi_pool.len()
        )));
    }
    debug_assert_eq!(net_pool.len(), n_po);

    // the surviving pool nets become the primary outputs
    let mut rename: std::collections::BTreeMap<String, String> = Default::default();
    for (j, net) in net_pool.iter().enumerate() {
        rename.insert(net.clone(), format!("po{j}"));
    }
    for inst in instances.iter_mut() {
        for (_, net) in inst.connections.iter_mut() {
            if let Some(new) = rename.get(net) {
                *net = new.clone();
            }
        }
    }

    let netlist = Netlist {
        module_name: format!("syn{index:03}"),
        primary_inputs: (0..n_pi).map(|i| format!("pi{i}")).collect(),
        primary_outputs: (0..n_po).map(|j| format!("po{j}")).collect(),
        instances,
    };
    Ok(netlist)
}

/// Insert a rare-event trojan: an AND tree over `trigger_width` random
/// internal nets drives the select of a 2:1 mux spliced into a primary
/// output, leaking a random internal net when triggered. Returns the
/// modified netlist and the set of inserted gate output nets (the ground
/// truth labels). Host gates feeding the trigger stay unlabeled.
pub fn insert_trojan(
    netlist: &Netlist,
    lib: &CellLibrary,
    trigger_width: usize,
    seed: u64,
) -> Result<(Netlist, BTreeSet<String>), BenchgenError> {
    for cell in ["AND2", "AND3", "AND4", "MUX2"] {
        if !lib.contains(cell) {
            return Err(BenchgenError::MissingCell(cell.to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // internal nets: gate outputs, in instance order
    let internal: Vec<(usize, String)> = netlist
        .instances
        .iter()
        .enumerate()
        .filter_map(|(i, inst)| {
            netlist
                .output_net(inst, lib)
                .map(|net| (i, net.to_string()))
        })
        .collect();

    // pick a gate-driven primary output to splice
    let gate_driven_pos: Vec<&String> = netlist
        .primary_outputs
        .iter()
        .filter(|po| internal.iter().any(|(_, net)| net == *po))
        .collect();
    if gate_driven_pos.is_empty() {
        return Err(BenchgenError::NoGateDrivenOutput);
    }
    let target_po = gate_driven_pos[rng.gen_range(0..gate_driven_pos.len())].clone();

    // taps and leak source exclude the spliced output (no feedback)
    let usable: Vec<&String> = internal
        .iter()
        .map(|(_, net)| net)
        .filter(|net| **net != target_po)
        .collect();
    if usable.len() < trigger_width.max(1) {
        return Err(BenchgenError::InsufficientNets {
            needed: trigger_width,
            available: usable.len(),
        });
    }
    let mut tap_pool: Vec<&String> = usable.clone();
    tap_pool.shuffle(&mut rng);
    let taps: Vec<String> = tap_pool[..trigger_width]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let leak = usable[rng.gen_range(0..usable.len())].clone();

    // unique name prefix against pathological inputs
    let mut prefix = String::from("troj");
    while netlist
        .connected_nets()
        .iter()
        .any(|net| net.starts_with(&prefix))
    {
        prefix.push('x');
    }

    let mut result = netlist.clone();
    let mut labels = BTreeSet::new();
    let mut gate_idx = 0usize;

    // AND-tree reduction, up to 4 inputs per level
    let mut level: Vec<String> = taps;
    while level.len() > 1 {
        let mut next = Vec::new();
        for chunk in level.chunks(4) {
            if chunk.len() == 1 {
                next.push(chunk[0].clone());
                continue;
            }
            let out = format!("{prefix}_t{gate_idx}");
            let cell = format!("AND{}", chunk.len());
            let connections: Vec<(String, String)> = pin_names(chunk.len())
                .iter()
                .zip(chunk.iter())
                .map(|(pin, net)| (pin.to_string(), net.clone()))
                .chain(std::iter::once(("Y".to_string(), out.clone())))
                .collect();
            result.instances.push(Instance {
                cell_type: cell,
                name: format!("{prefix}_and{gate_idx}"),
                connections,
                source_line: 0,
            });
            labels.insert(out.clone());
            next.push(out);
            gate_idx += 1;
        }
        level = next;
    }
    let trigger_root = level.pop().expect("trigger tree has a root");

    // splice the payload mux: the old driver now feeds the mux's A input
    let pre_net = format!("{prefix}_pre");
    let driver = result
        .instances
        .iter_mut()
        .find(|inst| {
            inst.connections
                .iter()
                .any(|(pin, net)| net == &target_po && pin_is_output(lib, &inst.cell_type, pin))
        })
        .expect("target output is gate-driven");
    let output_pin = lib
        .get(&driver.cell_type)
        .expect("driver cell is in the library")
        .output
        .clone();
    for (pin, net) in driver.connections.iter_mut() {
        if net == &target_po && *pin == output_pin {
            *net = pre_net.clone();
        }
    }
    result.instances.push(Instance {
        cell_type: "MUX2".to_string(),
        name: format!("{prefix}_mux"),
        connections: vec![
            ("A".to_string(), pre_net),
            ("B".to_string(), leak),
            ("S".to_string(), trigger_root),
            ("Y".to_string(), target_po.clone()),
        ],
        source_line: 0,
    });
    labels.insert(target_po);

    Ok((result, labels))
}

fn pin_is_output(lib: &CellLibrary, cell: &str, pin: &str) -> bool {
    lib.get(cell).is_some_and(|entry| entry.output == pin)
}

/// One generated circuit with its ground-truth labels (empty when clean).
#[derive(Debug, Clone)]
pub struct GeneratedCircuit {
    pub name: String,
    pub netlist: Netlist,
    pub trojan_nets: BTreeSet<String>,
}

/// Deterministic corpus: circuit `i` derives from (seed, i); the infected
/// subset is a seeded choice of round(n · fraction) circuits.
pub fn generate_corpus(
    cfg: &GenConfig,
    lib: &CellLibrary,
) -> Result<Vec<GeneratedCircuit>, BenchgenError> {
    cfg.validate()?;
    let n_infected = ((cfg.n_circuits as f64) * cfg.trojan_fraction_of_circuits).round() as usize;
    let mut order: Vec<usize> = (0..cfg.n_circuits).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let infected: BTreeSet<usize> = order.into_iter().take(n_infected).collect();

    let mut out = Vec::with_capacity(cfg.n_circuits);
    for index in 0..cfg.n_circuits {
        let clean = generate_circuit(cfg, index)?;
        let (netlist, trojan_nets) = if infected.contains(&index) {
            let trojan_seed = cfg
                .seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(index as u64);
            insert_trojan(&clean, lib, cfg.trigger_width, trojan_seed)?
        } else {
            (clean, BTreeSet::new())
        };
        out.push(GeneratedCircuit {
            name: netlist.module_name.clone(),
            netlist,
            trojan_nets,
        });
    }
    Ok(out)
}
