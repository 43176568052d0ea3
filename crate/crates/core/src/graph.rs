//! Directed circuit graph built from a validated netlist.
//!
//! Nodes are gate instances plus one pseudo-node per primary input and per
//! primary output. Edges follow signal flow: one edge per connected input
//! pin, plus one edge into each primary-output pseudo-node. Cycles are
//! permitted only through flip-flop nodes.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cell_lib::CellLibrary;
use crate::netlist::Netlist;

pub type NodeId = usize;
pub type NetId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("combinational cycle through nets: {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("netlist is invalid: {0}")]
    InvalidNetlist(#[from] crate::netlist::NetlistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Gate,
    PrimaryInput,
    PrimaryOutput,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    /// Instance name for gates, port name for pseudo-nodes.
    pub name: String,
    pub is_ff: bool,
    /// Number of input pins (0 for PI pseudo-nodes, 1 for PO pseudo-nodes).
    pub fanin_count: usize,
    /// Net driven by this node (None for PO pseudo-nodes).
    pub output_net: Option<NetId>,
    /// Source line of the driving instance (0 for pseudo-nodes).
    pub source_line: u32,
}

impl Node {
    pub fn is_gate(&self) -> bool {
        self.kind == NodeKind::Gate
    }
}

#[derive(Debug, Clone)]
pub struct CircuitGraph {
    name: String,
    nodes: Vec<Node>,
    /// Input nets per node, one entry per connected input pin.
    input_nets: Vec<Vec<NetId>>,
    /// Sink nodes per net, one entry per consuming pin.
    net_sinks: Vec<Vec<NodeId>>,
    /// Driver node per net.
    net_driver: Vec<NodeId>,
    net_names: Vec<String>,
    net_ids: BTreeMap<String, NetId>,
    edge_count: usize,
}

impl CircuitGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate()
    }

    pub fn net_count(&self) -> usize {
        self.net_names.len()
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.net_names[net]
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.net_ids.get(name).copied()
    }

    /// Driver node of a net (a gate or a PI pseudo-node).
    pub fn driver_of(&self, net: NetId) -> NodeId {
        self.net_driver[net]
    }

    /// Consuming nodes of a net, one per connected pin (may repeat).
    pub fn sinks_of(&self, net: NetId) -> &[NodeId] {
        &self.net_sinks[net]
    }

    /// Input nets of a node, one per connected input pin (may repeat).
    pub fn inputs_of(&self, node: NodeId) -> &[NetId] {
        &self.input_nets[node]
    }

    /// Output net of a node, per `net_of_node` (None for PO pseudo-nodes).
    pub fn net_of_node(&self, node: NodeId) -> Option<NetId> {
        self.nodes[node].output_net
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.input_nets[node].len()
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.nodes[node]
            .output_net
            .map_or(0, |net| self.net_sinks[net].len())
    }

    /// Nets driven by gate instances (the sample universe), in id order.
    pub fn gate_nets(&self) -> Vec<NetId> {
        (0..self.net_count())
            .filter(|&n| self.nodes[self.net_driver[n]].is_gate())
            .collect()
    }

    /// Combinational depth per net: 0 for PI- and flip-flop-driven nets,
    /// otherwise 1 + max over the driver's input nets. Used for the
    /// deterministic sample order.
    pub fn comb_depth(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.net_count()];
        // Kahn order over the comb-only dependency relation.
        let mut pending: Vec<usize> = (0..self.net_count())
            .map(|n| {
                let d = self.net_driver[n];
                if self.nodes[d].is_gate() && !self.nodes[d].is_ff {
                    self.input_nets[d].len()
                } else {
                    0
                }
            })
            .collect();
        let mut queue: std::collections::VecDeque<NetId> =
            (0..self.net_count()).filter(|&n| pending[n] == 0).collect();
        while let Some(net) = queue.pop_front() {
            for &sink in &self.net_sinks[net] {
                let node = &self.nodes[sink];
                if !node.is_gate() || node.is_ff {
                    continue;
                }
                let Some(out) = node.output_net else {
                    continue;
                };
                depth[out] = depth[out].max(depth[net] + 1);
                pending[out] -= 1;
                if pending[out] == 0 {
                    queue.push_back(out);
                }
            }
        }
        depth
    }
}

/// Build the circuit graph, checking for combinational cycles (cycles are
/// legal only through flip-flop nodes).
pub fn build_graph(netlist: &Netlist, lib: &CellLibrary) -> Result<CircuitGraph, GraphError> {
    netlist.validate(lib)?;

    let mut net_ids: BTreeMap<String, NetId> = BTreeMap::new();
    let mut net_names: Vec<String> = Vec::new();
    let mut intern = |name: &str, net_ids: &mut BTreeMap<String, NetId>| -> NetId {
        if let Some(&id) = net_ids.get(name) {
            return id;
        }
        let id = net_names.len();
        net_names.push(name.to_string());
        net_ids.insert(name.to_string(), id);
        id
    };

    let mut nodes: Vec<Node> = Vec::new();
    let mut input_nets: Vec<Vec<NetId>> = Vec::new();
    let mut driver_of: BTreeMap<NetId, NodeId> = BTreeMap::new();

    for pi in &netlist.primary_inputs {
        let net = intern(pi, &mut net_ids);
        let id = nodes.len();
        nodes.push(Node {
            kind: NodeKind::PrimaryInput,
            name: pi.clone(),
            is_ff: false,
            fanin_count: 0,
            output_net: Some(net),
            source_line: 0,
        });
        input_nets.push(Vec::new());
        driver_of.insert(net, id);
    }
    for inst in &netlist.instances {
        let entry = lib.get(&inst.cell_type).expect("validated");
        let out_net = inst.net_on(&entry.output).expect("validated");
        let out = intern(out_net, &mut net_ids);
        let ins: Vec<NetId> = entry
            .inputs
            .iter()
            .map(|pin| intern(inst.net_on(pin).expect("validated"), &mut net_ids))
            .collect();
        let id = nodes.len();
        nodes.push(Node {
            kind: NodeKind::Gate,
            name: inst.name.clone(),
            is_ff: entry.is_flip_flop,
            fanin_count: ins.len(),
            output_net: Some(out),
            source_line: inst.source_line,
        });
        input_nets.push(ins);
        driver_of.insert(out, id);
    }
    for po in &netlist.primary_outputs {
        let net = intern(po, &mut net_ids);
        nodes.push(Node {
            kind: NodeKind::PrimaryOutput,
            name: po.clone(),
            is_ff: false,
            fanin_count: 1,
            output_net: None,
            source_line: 0,
        });
        input_nets.push(vec![net]);
    }

    let mut net_driver = vec![usize::MAX; net_names.len()];
    for (net, node) in driver_of {
        net_driver[net] = node;
    }
    debug_assert!(net_driver.iter().all(|&d| d != usize::MAX));

    let mut net_sinks: Vec<Vec<NodeId>> = vec![Vec::new(); net_names.len()];
    let mut edge_count = 0usize;
    for (node, ins) in input_nets.iter().enumerate() {
        for &net in ins {
            net_sinks[net].push(node);
            edge_count += 1;
        }
    }

    let graph = CircuitGraph {
        name: netlist.module_name.clone(),
        nodes,
        input_nets,
        net_sinks,
        net_driver,
        net_names,
        net_ids,
        edge_count,
    };
    check_combinational_cycles(&graph)?;
    Ok(graph)
}

/// Detect cycles in the graph with flip-flop nodes removed. Reports the
/// cycle's net names.
fn check_combinational_cycles(graph: &CircuitGraph) -> Result<(), GraphError> {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let n = graph.node_count();
    let mut color = vec![WHITE; n];
    let succs = |v: NodeId| -> Vec<NodeId> {
        if graph.node(v).is_ff {
            return Vec::new(); // removed from the combinational view
        }
        graph
            .net_of_node(v)
            .map(|net| {
                graph
                    .sinks_of(net)
                    .iter()
                    .copied()
                    .filter(|&s| !graph.node(s).is_ff)
                    .collect()
            })
            .unwrap_or_default()
    };
    for start in 0..n {
        if color[start] != WHITE || graph.node(start).is_ff {
            continue;
        }
        // iterative DFS with an explicit path stack
        let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
        let mut path: Vec<NodeId> = vec![start];
        color[start] = GRAY;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            let next = succs(v).get(*i).copied();
            *i += 1;
            match next {
                Some(w) if color[w] == GRAY => {
                    let pos = path.iter().position(|&p| p == w).unwrap_or(0);
                    let cycle: Vec<String> = path[pos..]
                        .iter()
                        .filter_map(|&p| graph.net_of_node(p))
                        .map(|net| graph.net_name(net).to_string())
                        .collect();
                    return Err(GraphError::CombinationalCycle(cycle));
                }
                Some(w) if color[w] == WHITE => {
                    color[w] = GRAY;
                    stack.push((w, 0));
                    path.push(w);
                }
                Some(_) => {}
                None => {
                    color[v] = BLACK;
                    stack.pop();
                    path.pop();
                }
            }
        }
    }
    Ok(())
}
