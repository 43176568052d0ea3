//! The five structural features computed per net.
//!
//! Level-counting convention: a net bound directly to a primary input or
//! output has distance 0, one intervening combinational gate adds 1, and
//! traversal never crosses a flip-flop. Walking upstream, a net driven by
//! a flip-flop has FFi 0; walking downstream, the flip-flop itself is a
//! node that must be entered, so a net feeding a flip-flop has FFo 1.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

use crate::graph::{CircuitGraph, NetId, NodeKind};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown net `{0}`")]
    UnknownNet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upstream,
    Downstream,
}

/// The five per-net features, in canonical order LGFi, FFi, FFo, PI, PO.
/// Distance fields hold the per-circuit sentinel when the corresponding
/// structure is unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub lgfi: u32,
    pub ffi: u32,
    pub ffo: u32,
    pub pi: u32,
    pub po: u32,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.lgfi as f64,
            self.ffi as f64,
            self.ffo as f64,
            self.pi as f64,
            self.po as f64,
        ]
    }

    pub fn get(&self, index: usize) -> u32 {
        match index {
            0 => self.lgfi,
            1 => self.ffi,
            2 => self.ffo,
            3 => self.pi,
            4 => self.po,
            _ => panic!("feature index out of range: {index}"),
        }
    }
}

fn resolve_net(graph: &CircuitGraph, net: &str) -> Result<NetId, FeatureError> {
    graph
        .net_id(net)
        .ok_or_else(|| FeatureError::UnknownNet(net.to_string()))
}

/// Total input-pin count over the distinct gate nodes within two upstream
/// levels of the net: the driving gate (level 1) and the gates driving its
/// inputs (level 2). PI pseudo-nodes contribute nothing; a gate reachable
/// twice is counted once.
pub fn compute_lgfi(graph: &CircuitGraph, net: &str) -> Result<u32, FeatureError> {
    let net = resolve_net(graph, net)?;
    let driver = graph.driver_of(net);
    if !graph.node(driver).is_gate() {
        return Ok(0); // primary input: no upstream gates
    }
    let mut gates: BTreeSet<usize> = BTreeSet::new();
    gates.insert(driver);
    for &input in graph.inputs_of(driver) {
        let level2 = graph.driver_of(input);
        if graph.node(level2).is_gate() {
            gates.insert(level2);
        }
    }
    Ok(gates
        .iter()
        .map(|&g| graph.node(g).fanin_count as u32)
        .sum())
}

/// Minimum logic levels to the nearest flip-flop, walking the chosen
/// direction. `None` when no flip-flop is reachable.
pub fn compute_ff_distance(
    graph: &CircuitGraph,
    net: &str,
    direction: Direction,
) -> Result<Option<u32>, FeatureError> {
    let net = resolve_net(graph, net)?;
    Ok(match direction {
        Direction::Upstream => bfs_up(graph, net, |node| node.is_ff),
        Direction::Downstream => bfs_down(graph, net, DownTarget::FlipFlop),
    })
}

/// Minimum logic levels to the nearest primary input (upstream) or primary
/// output (downstream). `None` when unreachable.
pub fn compute_io_distance(
    graph: &CircuitGraph,
    net: &str,
    direction: Direction,
) -> Result<Option<u32>, FeatureError> {
    let net = resolve_net(graph, net)?;
    Ok(match direction {
        Direction::Upstream => bfs_up(graph, net, |node| node.kind == NodeKind::PrimaryInput),
        Direction::Downstream => bfs_down(graph, net, DownTarget::PrimaryOutput),
    })
}

/// Upstream search: a net's distance is the number of combinational gates
/// entered before a driver satisfying `is_target` is reached. Flip-flop
/// drivers terminate the walk either way (distances never cross a FF).
fn bfs_up(
    graph: &CircuitGraph,
    start: NetId,
    is_target: impl Fn(&crate::graph::Node) -> bool,
) -> Option<u32> {
    let mut seen = vec![false; graph.net_count()];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back((start, 0u32));
    while let Some((net, dist)) = queue.pop_front() {
        let driver = graph.driver_of(net);
        let node = graph.node(driver);
        if is_target(node) {
            return Some(dist);
        }
        if !node.is_gate() || node.is_ff {
            continue; // PI pseudo-node or blocking flip-flop
        }
        for &input in graph.inputs_of(driver) {
            if !seen[input] {
                seen[input] = true;
                queue.push_back((input, dist + 1));
            }
        }
    }
    None
}

enum DownTarget {
    FlipFlop,
    PrimaryOutput,
}

/// Downstream search. Entering any gate node costs one level, including a
/// target flip-flop; reaching a PO pseudo-node is free.
fn bfs_down(graph: &CircuitGraph, start: NetId, target: DownTarget) -> Option<u32> {
    let mut seen = vec![false; graph.net_count()];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back((start, 0u32));
    while let Some((net, dist)) = queue.pop_front() {
        for &sink in graph.sinks_of(net) {
            let node = graph.node(sink);
            match target {
                DownTarget::FlipFlop => {
                    if node.is_ff {
                        return Some(dist + 1);
                    }
                }
                DownTarget::PrimaryOutput => {
                    if node.kind == NodeKind::PrimaryOutput {
                        return Some(dist);
                    }
                }
            }
            if node.is_gate() && !node.is_ff {
                if let Some(out) = graph.net_of_node(sink) {
                    if !seen[out] {
                        seen[out] = true;
                        queue.push_back((out, dist + 1));
                    }
                }
            }
        }
    }
    None
}

/// All four distance features for every net at once, via multi-source BFS
/// over the combinational step relation. Values are `None` when
/// unreachable; `lgfi` is computed separately.
pub struct NetDistances {
    pub ffi: Vec<Option<u32>>,
    pub ffo: Vec<Option<u32>>,
    pub pi: Vec<Option<u32>>,
    pub po: Vec<Option<u32>>,
}

/// Step relation m -> n: n's driver is a combinational gate reading m.
/// Forward BFS yields upstream-origin distances (FFi, PI); BFS over the
/// transpose yields downstream-origin distances (FFo, PO).
pub(crate) fn comb_step_relation(graph: &CircuitGraph) -> (Vec<Vec<NetId>>, Vec<Vec<NetId>>) {
    let n = graph.net_count();
    let mut forward: Vec<Vec<NetId>> = vec![Vec::new(); n];
    let mut backward: Vec<Vec<NetId>> = vec![Vec::new(); n];
    for (net, back) in backward.iter_mut().enumerate() {
        let driver = graph.driver_of(net);
        let node = graph.node(driver);
        if node.is_gate() && !node.is_ff {
            for &input in graph.inputs_of(driver) {
                forward[input].push(net);
                back.push(input);
            }
        }
    }
    (forward, backward)
}

/// Multi-source BFS with unit edge cost over an adjacency list.
pub(crate) fn multi_source_bfs(adj: &[Vec<NetId>], init: &[(NetId, u32)]) -> Vec<Option<u32>> {
    let mut dist: Vec<Option<u32>> = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    for &(net, d) in init {
        if dist[net].is_none() {
            dist[net] = Some(d);
            queue.push_back(net);
        }
    }
    while let Some(net) = queue.pop_front() {
        let d = dist[net].expect("queued nets have distances");
        for &next in &adj[net] {
            if dist[next].is_none() {
                dist[next] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    dist
}

pub fn all_distances(graph: &CircuitGraph) -> NetDistances {
    let (forward, backward) = comb_step_relation(graph);
    let n = graph.net_count();

    let ff_driven: Vec<(NetId, u32)> = (0..n)
        .filter(|&net| graph.node(graph.driver_of(net)).is_ff)
        .map(|net| (net, 0))
        .collect();
    let pi_driven: Vec<(NetId, u32)> = (0..n)
        .filter(|&net| graph.node(graph.driver_of(net)).kind == NodeKind::PrimaryInput)
        .map(|net| (net, 0))
        .collect();
    let ff_feeding: Vec<(NetId, u32)> = (0..n)
        .filter(|&net| graph.sinks_of(net).iter().any(|&s| graph.node(s).is_ff))
        .map(|net| (net, 1))
        .collect();
    let po_bound: Vec<(NetId, u32)> = (0..n)
        .filter(|&net| {
            graph
                .sinks_of(net)
                .iter()
                .any(|&s| graph.node(s).kind == NodeKind::PrimaryOutput)
        })
        .map(|net| (net, 0))
        .collect();

    NetDistances {
        ffi: multi_source_bfs(&forward, &ff_driven),
        ffo: multi_source_bfs(&backward, &ff_feeding),
        pi: multi_source_bfs(&forward, &pi_driven),
        po: multi_source_bfs(&backward, &po_bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_lib::default_library;
    use crate::graph::build_graph;
    use crate::parser::parse_netlist;
    use proptest::prelude::*;

    fn graph_of(text: &str) -> CircuitGraph {
        let lib = default_library();
        let nl = parse_netlist(text, &lib).unwrap();
        build_graph(&nl, &lib).unwrap()
    }

    #[test]
    fn lgfi_single_and2() {
        // Level-1 gate contributes its 2 pins; level 2 is empty (PIs).
        let g = graph_of(
            "module top (a, b, y);\n  input a, b;\n  output y;\n  AND2 g1 (.A(a), .B(b), .Y(y));\nendmodule\n",
        );
        assert_eq!(compute_lgfi(&g, "y").unwrap(), 2);
        assert_eq!(compute_lgfi(&g, "a").unwrap(), 0);
    }

    #[test]
    fn lgfi_two_levels() {
        // AND2 fed by two NAND2s: 2 + 2 + 2.
        let g = graph_of(
            "module top (a, b, c, d, y);\n  input a, b, c, d;\n  output y;\n  NAND2 g1 (.A(a), .B(b), .Y(t1));\n  NAND2 g2 (.A(c), .B(d), .Y(t2));\n  AND2 g3 (.A(t1), .B(t2), .Y(y));\nendmodule\n",
        );
        assert_eq!(compute_lgfi(&g, "y").unwrap(), 6);
    }

    #[test]
    fn lgfi_counts_distinct_gates_once() {
        // Both inputs of g3 come from the same NAND2.
        let g = graph_of(
            "module top (a, b, y);\n  input a, b;\n  output y;\n  NAND2 g1 (.A(a), .B(b), .Y(t));\n  AND2 g3 (.A(t), .B(t), .Y(y));\nendmodule\n",
        );
        assert_eq!(compute_lgfi(&g, "y").unwrap(), 4);
    }

    #[test]
    fn lgfi_unknown_net() {
        let g = graph_of(
            "module top (a, y);\n  input a;\n  output y;\n  INV g1 (.A(a), .Y(y));\nendmodule\n",
        );
        assert!(matches!(
            compute_lgfi(&g, "ghost"),
            Err(FeatureError::UnknownNet(_))
        ));
    }

    const FF_CHAIN: &str = "\
module top (a, y);
  input a;
  output y;
  DFF d1 (.D(a), .Q(q));
  INV g1 (.A(q), .Y(t));
  DFF d2 (.D(t), .Q(y));
endmodule
";

    #[test]
    fn ff_distance_boundaries() {
        let g = graph_of(FF_CHAIN);
        // q is driven by the FF itself.
        assert_eq!(
            compute_ff_distance(&g, "q", Direction::Upstream).unwrap(),
            Some(0)
        );
        // t feeds directly into d2.
        assert_eq!(
            compute_ff_distance(&g, "t", Direction::Downstream).unwrap(),
            Some(1)
        );
        // one intervening gate = 1
        assert_eq!(
            compute_ff_distance(&g, "t", Direction::Upstream).unwrap(),
            Some(1)
        );
        assert_eq!(
            compute_ff_distance(&g, "q", Direction::Downstream).unwrap(),
            Some(2)
        );
    }

    #[test]
    fn ff_distance_unreachable_in_pure_comb() {
        let g = graph_of(
            "module top (a, b, y);\n  input a, b;\n  output y;\n  AND2 g1 (.A(a), .B(b), .Y(y));\nendmodule\n",
        );
        assert_eq!(
            compute_ff_distance(&g, "y", Direction::Upstream).unwrap(),
            None
        );
        assert_eq!(
            compute_ff_distance(&g, "y", Direction::Downstream).unwrap(),
            None
        );
    }

    #[test]
    fn io_distance_boundaries() {
        let g = graph_of(
            "module top (a, b, y);\n  input a, b;\n  output y;\n  AND2 g1 (.A(a), .B(b), .Y(y));\nendmodule\n",
        );
        // primary-output net
        assert_eq!(
            compute_io_distance(&g, "y", Direction::Downstream).unwrap(),
            Some(0)
        );
        // PI -> AND2 -> net
        assert_eq!(
            compute_io_distance(&g, "y", Direction::Upstream).unwrap(),
            Some(1)
        );
        assert_eq!(
            compute_io_distance(&g, "a", Direction::Upstream).unwrap(),
            Some(0)
        );
    }

    #[test]
    fn io_distance_stops_at_ff() {
        let g = graph_of(FF_CHAIN);
        // q is behind a flip-flop: no upstream path to a PI.
        assert_eq!(
            compute_io_distance(&g, "q", Direction::Upstream).unwrap(),
            None
        );
        // t feeds only d2, so no downstream PO before the flip-flop.
        assert_eq!(
            compute_io_distance(&g, "t", Direction::Downstream).unwrap(),
            None
        );
    }

    #[test]
    fn batch_matches_single_net_ops() {
        let g = graph_of(
            "module top (a, b, c, y, z);\n  input a, b, c;\n  output y, z;\n  NAND2 g1 (.A(a), .B(b), .Y(t1));\n  DFF d1 (.D(t1), .Q(t2));\n  XOR2 g2 (.A(t2), .B(c), .Y(t3));\n  INV g3 (.A(t3), .Y(y));\n  AND2 g4 (.A(t1), .B(t3), .Y(z));\nendmodule\n",
        );
        let dist = all_distances(&g);
        for net in 0..g.net_count() {
            let name = g.net_name(net).to_string();
            assert_eq!(
                dist.ffi[net],
                compute_ff_distance(&g, &name, Direction::Upstream).unwrap(),
                "ffi mismatch on {name}"
            );
            assert_eq!(
                dist.ffo[net],
                compute_ff_distance(&g, &name, Direction::Downstream).unwrap(),
                "ffo mismatch on {name}"
            );
            assert_eq!(
                dist.pi[net],
                compute_io_distance(&g, &name, Direction::Upstream).unwrap(),
                "pi mismatch on {name}"
            );
            assert_eq!(
                dist.po[net],
                compute_io_distance(&g, &name, Direction::Downstream).unwrap(),
                "po mismatch on {name}"
            );
        }
    }

    /// Triangle step property: adjacent nets differ by at most one level of
    /// PI distance when both are finite.
    #[test]
    fn pi_distance_triangle_step() {
        let g = graph_of(
            "module top (a, b, y);\n  input a, b;\n  output y;\n  NAND2 g1 (.A(a), .B(b), .Y(t1));\n  INV g2 (.A(t1), .Y(t2));\n  AND2 g3 (.A(t1), .B(t2), .Y(y));\nendmodule\n",
        );
        let dist = all_distances(&g);
        let (forward, _) = comb_step_relation(&g);
        for (m, outs) in forward.iter().enumerate() {
            for &n in outs {
                if let (Some(a), Some(b)) = (dist.pi[m], dist.pi[n]) {
                    assert!(a.abs_diff(b) <= 1, "step property violated");
                }
            }
        }
    }

    fn transpose(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut t = vec![Vec::new(); adj.len()];
        for (m, outs) in adj.iter().enumerate() {
            for &n in outs {
                t[n].push(m);
            }
        }
        t
    }

    proptest! {
        /// Reversing all edges swaps upstream and downstream distances:
        /// dist(s -> t) over A equals dist(t -> s) over the transpose.
        #[test]
        fn bfs_reversal_swaps_directions(
            edges in proptest::collection::vec((0usize..30, 0usize..30), 0..120),
            s in 0usize..30,
            t in 0usize..30,
        ) {
            let mut adj = vec![Vec::new(); 30];
            for (m, n) in edges {
                adj[m].push(n);
            }
            let from_s = multi_source_bfs(&adj, &[(s, 0)]);
            let from_t_rev = multi_source_bfs(&transpose(&adj), &[(t, 0)]);
            prop_assert_eq!(from_s[t], from_t_rev[s]);
        }
    }

    proptest! {
        /// FFi from the forward multi-source batch matches an independent
        /// reverse search started at the net itself (reversed edges,
        /// flip-flop-driven nets as targets), on random circuits.
        #[test]
        fn ffi_via_reverse_search(recipe in proptest::collection::vec((0u8..8, 0usize..1000, 0usize..1000), 1..25)) {
            let mut text = String::from("module top (a, b, y);\n  input a, b;\n  output y;\n");
            let mut nets = vec!["a".to_string(), "b".to_string()];
            for (i, (kind, p1, p2)) in recipe.iter().enumerate() {
                let out = format!("t{i}");
                let in1 = nets[p1 % nets.len()].clone();
                let in2 = nets[p2 % nets.len()].clone();
                match kind {
                    0 => text.push_str(&format!("  DFF d{i} (.D({in1}), .Q({out}));\n")),
                    1 | 2 => text.push_str(&format!("  INV g{i} (.A({in1}), .Y({out}));\n")),
                    _ => text.push_str(&format!("  AND2 g{i} (.A({in1}), .B({in2}), .Y({out}));\n")),
                }
                nets.push(out);
            }
            let last = nets.last().unwrap().clone();
            text.push_str(&format!("  BUF gy (.A({last}), .Y(y));\nendmodule\n"));
            let g = graph_of(&text);
            let (forward, _) = comb_step_relation(&g);
            let ff_driven: Vec<usize> = (0..g.net_count())
                .filter(|&net| g.node(g.driver_of(net)).is_ff)
                .collect();
            let init: Vec<(usize, u32)> = ff_driven.iter().map(|&net| (net, 0)).collect();
            let ffi = multi_source_bfs(&forward, &init);
            let reversed = transpose(&forward);
            for (net, &got) in ffi.iter().enumerate() {
                let from_net = multi_source_bfs(&reversed, &[(net, 0)]);
                let oracle = ff_driven.iter().filter_map(|&f| from_net[f]).min();
                prop_assert_eq!(got, oracle, "net {}", g.net_name(net));
            }
        }
    }
}
