//! Library-level pipeline: generated corpus -> emitted Verilog -> parse ->
//! graph -> features -> split -> train -> sweep, plus cross-module
//! invariants that only show up end to end.

use std::collections::BTreeSet;

use netspect::benchgen::{generate_circuit, generate_corpus, GenConfig};
use netspect::cell_lib::default_library;
use netspect::dataset::{extract_all, stratified_split, Dataset, SentinelPolicy};
use netspect::gbt::{train, TrainConfig};
use netspect::graph::build_graph;
use netspect::parser::parse_netlist;
use netspect::stats::threshold_sweep;
use proptest::prelude::*;

fn small_config() -> GenConfig {
    GenConfig {
        n_circuits: 6,
        gates_per_circuit: (40, 80),
        pi_count: (4, 8),
        po_count: (2, 5),
        ff_fraction: 0.1,
        trojan_fraction_of_circuits: 0.5,
        trigger_width: 4,
        seed: 77,
    }
}

#[test]
fn corpus_flows_end_to_end() {
    let lib = default_library();
    let corpus = generate_corpus(&small_config(), &lib).unwrap();
    let mut parts = Vec::new();
    for circuit in &corpus {
        // through the text round trip, as the CLI would see it
        let text = circuit.netlist.to_verilog();
        let parsed = parse_netlist(&text, &lib).unwrap();
        let graph = build_graph(&parsed, &lib).unwrap();
        let trojans: BTreeSet<String> = circuit.trojan_nets.clone();
        parts.push(extract_all(&graph, &trojans, SentinelPolicy::MaxFinitePlusOne).unwrap());
    }
    let dataset = Dataset::merge(parts);
    let counts = dataset.class_counts();
    assert!(
        counts.n_trojan >= 6,
        "expected trojan samples, got {counts:?}"
    );

    let (train_ds, test_ds) = stratified_split(&dataset, 0.25, 7).unwrap();
    assert!(test_ds.class_counts().n_trojan >= 1);
    let model = train(&train_ds, &TrainConfig::default()).unwrap();
    let probas: Vec<f64> = test_ds
        .samples()
        .iter()
        .map(|s| model.predict_proba(&s.features))
        .collect();
    let labels: Vec<u8> = test_ds.samples().iter().map(|s| s.label).collect();
    let (best, rows) = threshold_sweep(&probas, &labels).unwrap();
    assert!(rows.iter().any(|r| r.threshold == best));
}

#[test]
fn trojan_labels_match_feature_rows() {
    let lib = default_library();
    let corpus = generate_corpus(&small_config(), &lib).unwrap();
    for circuit in corpus.iter().filter(|c| !c.trojan_nets.is_empty()) {
        let graph = build_graph(&circuit.netlist, &lib).unwrap();
        let ds = extract_all(
            &graph,
            &circuit.trojan_nets,
            SentinelPolicy::MaxFinitePlusOne,
        )
        .unwrap();
        let labeled: BTreeSet<String> = ds
            .samples()
            .iter()
            .filter(|s| s.label == 1)
            .map(|s| s.provenance.net.clone())
            .collect();
        assert_eq!(labeled, circuit.trojan_nets, "labels drifted in extraction");
        // provenance lines point at real instance lines in the emitted text
        let text = circuit.netlist.to_verilog();
        let reparsed = parse_netlist(&text, &lib).unwrap();
        let regraph = build_graph(&reparsed, &lib).unwrap();
        let reds = extract_all(
            &regraph,
            &circuit.trojan_nets,
            SentinelPolicy::MaxFinitePlusOne,
        )
        .unwrap();
        let lines: Vec<u32> = reds.samples().iter().map(|s| s.provenance.line).collect();
        assert!(lines.iter().all(|&l| l > 0), "line numbers missing");
    }
}

#[test]
fn rs232_scale_circuit_parses_and_extracts() {
    // gate counts in the low hundreds, matching small-benchmark scale
    let cfg = GenConfig {
        n_circuits: 1,
        gates_per_circuit: (215, 273),
        pi_count: (8, 12),
        po_count: (4, 8),
        ff_fraction: 0.12,
        trojan_fraction_of_circuits: 0.0,
        trigger_width: 4,
        seed: 5,
    };
    let lib = default_library();
    let nl = generate_circuit(&cfg, 0).unwrap();
    assert!((215..=273).contains(&nl.instances.len()));
    let parsed = parse_netlist(&nl.to_verilog(), &lib).unwrap();
    let graph = build_graph(&parsed, &lib).unwrap();
    let ds = extract_all(&graph, &BTreeSet::new(), SentinelPolicy::MaxFinitePlusOne).unwrap();
    assert_eq!(ds.len(), nl.instances.len());
}

#[test]
fn shared_graph_supports_concurrent_feature_queries() {
    let lib = default_library();
    let nl = generate_circuit(&small_config(), 0).unwrap();
    let graph = std::sync::Arc::new(build_graph(&nl, &lib).unwrap());
    let names: Vec<String> = (0..graph.net_count())
        .map(|n| graph.net_name(n).to_string())
        .collect();
    let mut handles = Vec::new();
    for chunk in names.chunks(names.len() / 4 + 1) {
        let graph = graph.clone();
        let chunk = chunk.to_vec();
        handles.push(std::thread::spawn(move || {
            chunk
                .iter()
                .map(|net| netspect::features::compute_lgfi(&graph, net).unwrap())
                .collect::<Vec<u32>>()
        }));
    }
    let mut concurrent = Vec::new();
    for h in handles {
        concurrent.extend(h.join().unwrap());
    }
    let serial: Vec<u32> = names
        .iter()
        .map(|net| netspect::features::compute_lgfi(&graph, net).unwrap())
        .collect();
    assert_eq!(concurrent, serial);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Emitting any generated netlist and re-parsing reproduces it
    /// field-by-field; a second emit round is byte-stable.
    #[test]
    fn emit_parse_round_trip(seed in 0u64..500, gates in 5usize..60) {
        let cfg = GenConfig {
            n_circuits: 1,
            gates_per_circuit: (gates, gates + 10),
            pi_count: (2, 6),
            po_count: (1, 4),
            ff_fraction: 0.15,
            trojan_fraction_of_circuits: 0.0,
            trigger_width: 2,
            seed,
        };
        let lib = default_library();
        let nl = generate_circuit(&cfg, 0).unwrap();
        let text = nl.to_verilog();
        let parsed = parse_netlist(&text, &lib).unwrap();
        // structural fields agree with the generator output
        prop_assert_eq!(&parsed.module_name, &nl.module_name);
        prop_assert_eq!(&parsed.primary_inputs, &nl.primary_inputs);
        prop_assert_eq!(&parsed.primary_outputs, &nl.primary_outputs);
        prop_assert_eq!(parsed.instances.len(), nl.instances.len());
        for (a, b) in parsed.instances.iter().zip(nl.instances.iter()) {
            prop_assert_eq!(&a.cell_type, &b.cell_type);
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.connections, &b.connections);
        }
        // emitted text is a fixed point: parse(emit(parse(emit)))) == parse(emit)
        let again = parse_netlist(&parsed.to_verilog(), &lib).unwrap();
        prop_assert_eq!(parsed, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Features extracted from a circuit and its emitted-and-reparsed twin
    /// agree byte for byte.
    #[test]
    fn extraction_survives_text_round_trip(seed in 0u64..200) {
        let cfg = GenConfig {
            n_circuits: 1,
            gates_per_circuit: (20, 50),
            pi_count: (3, 6),
            po_count: (2, 4),
            ff_fraction: 0.1,
            trojan_fraction_of_circuits: 1.0,
            trigger_width: 3,
            seed,
        };
        let lib = default_library();
        let corpus = generate_corpus(&cfg, &lib).unwrap();
        let circuit = &corpus[0];
        let g1 = build_graph(&circuit.netlist, &lib).unwrap();
        let d1 = extract_all(&g1, &circuit.trojan_nets, SentinelPolicy::MaxFinitePlusOne).unwrap();
        let reparsed = parse_netlist(&circuit.netlist.to_verilog(), &lib).unwrap();
        let g2 = build_graph(&reparsed, &lib).unwrap();
        let d2 = extract_all(&g2, &circuit.trojan_nets, SentinelPolicy::MaxFinitePlusOne).unwrap();
        // identical features, nets, and labels (source lines shift from 0
        // to the emitted layout, so they are not compared)
        prop_assert_eq!(d1.len(), d2.len());
        for (a, b) in d1.samples().iter().zip(d2.samples()) {
            prop_assert_eq!(&a.features, &b.features);
            prop_assert_eq!(&a.provenance.net, &b.provenance.net);
            prop_assert_eq!(a.label, b.label);
        }
    }
}
