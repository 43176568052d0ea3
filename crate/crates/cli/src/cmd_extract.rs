//! `netspect extract`: parse netlists, build graphs, compute features,
//! and write the feature CSV plus a metadata sidecar.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use netspect::cell_lib::{default_library, CellLibrary};
use netspect::dataset::{extract_all, Dataset, SentinelPolicy};
use netspect::graph::build_graph;
use netspect::labels::{LabelMap, UnknownNet};
use netspect::parser::parse_netlist;

use crate::provenance::{provenance, require_file, write_json_report, Provenance};

pub const META_SCHEMA: &str = "netspect-extract-meta";
pub const META_VERSION: u32 = 1;

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// JSON config (currently just `sentinel`); explicit flags override.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Netlist files (repeatable). Alternative to --corpus.
    #[arg(long = "netlist")]
    pub netlists: Vec<PathBuf>,
    /// Corpus directory produced by `benchgen` (manifest + labels).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Cell library JSON; the built-in generic library when omitted.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Trojan label JSON; everything benign when omitted.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output feature CSV (a `<out>.meta.json` sidecar is also written).
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed sentinel for unreachable distances instead of the per-circuit
    /// max-finite-plus-one.
    #[arg(long)]
    pub sentinel: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExtractConfig {
    sentinel: Option<u32>,
}

#[derive(Debug, Serialize)]
struct ExtractMeta {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    provenance: Provenance,
    sentinels: BTreeMap<String, u32>,
    n_samples: usize,
    n_benign: usize,
    n_trojan: usize,
    unknown_label_nets: Vec<UnknownNet>,
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let (netlist_paths, label_path) = match (&args.corpus, args.netlists.is_empty()) {
        (Some(dir), _) => {
            let (netlists, labels) = crate::cmd_benchgen::corpus_files(dir)?;
            (netlists, args.labels.clone().or(Some(labels)))
        }
        (None, false) => (args.netlists.clone(), args.labels.clone()),
        (None, true) => anyhow::bail!(crate::CliError::MissingInput(
            "no input: pass --netlist or --corpus".into()
        )),
    };
    for path in &netlist_paths {
        require_file(path, "netlist")?;
    }
    if let Some(path) = &args.library {
        require_file(path, "cell library file")?;
    }
    if let Some(path) = &label_path {
        require_file(path, "label file")?;
    }

    let lib = match &args.library {
        Some(path) => CellLibrary::from_json(&std::fs::read_to_string(path)?)?,
        None => default_library(),
    };
    let labels = match &label_path {
        Some(path) => LabelMap::from_json(&std::fs::read_to_string(path)?)?,
        None => LabelMap::default(),
    };
    let mut file_cfg = ExtractConfig::default();
    if let Some(path) = &args.config {
        require_file(path, "config file")?;
        file_cfg = serde_json::from_str(&std::fs::read_to_string(path)?)
            .with_context(|| format!("malformed config `{}`", path.display()))?;
    }
    let policy = match args.sentinel.or(file_cfg.sentinel) {
        Some(v) => SentinelPolicy::Fixed(v),
        None => SentinelPolicy::MaxFinitePlusOne,
    };

    let mut parts = Vec::new();
    let mut unknown = Vec::new();
    for path in &netlist_paths {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read `{}`", path.display()))?;
        let netlist =
            parse_netlist(&text, &lib).with_context(|| format!("parsing `{}`", path.display()))?;
        let graph = build_graph(&netlist, &lib)
            .with_context(|| format!("building graph for `{}`", path.display()))?;
        unknown.extend(labels.unknown_nets(&graph));
        let trojan_nets = labels.nets_for(graph.name());
        parts.push(extract_all(&graph, &trojan_nets, policy)?);
    }
    for warn in &unknown {
        log::warn!(
            "label references unknown net `{}` in circuit `{}`",
            warn.net,
            warn.circuit
        );
    }
    let dataset = Dataset::merge(parts);
    let counts = dataset.class_counts();

    let csv = dataset.to_csv_string();
    std::fs::write(&args.out, csv)
        .with_context(|| format!("cannot write `{}`", args.out.display()))?;

    let mut input_paths: Vec<&std::path::Path> =
        netlist_paths.iter().map(PathBuf::as_path).collect();
    if let Some(p) = &args.library {
        input_paths.push(p);
    }
    if let Some(p) = &label_path {
        input_paths.push(p);
    }
    let meta = ExtractMeta {
        schema: META_SCHEMA,
        version: META_VERSION,
        provenance: provenance(args, &input_paths)?,
        sentinels: dataset.sentinels().clone(),
        n_samples: dataset.len(),
        n_benign: counts.n_benign,
        n_trojan: counts.n_trojan,
        unknown_label_nets: unknown,
    };
    let meta_path = PathBuf::from(format!("{}.meta.json", args.out.display()));
    write_json_report(&meta_path, &meta)?;

    println!(
        "extracted {} samples ({} trojan) from {} netlists -> {}",
        dataset.len(),
        counts.n_trojan,
        netlist_paths.len(),
        args.out.display()
    );
    Ok(())
}
