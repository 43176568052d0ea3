//! `netspect benchgen`: write a synthetic corpus (netlists, labels,
//! manifest) to a directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use netspect::benchgen::{generate_corpus, GenConfig};
use netspect::cell_lib::default_library;
use netspect::labels::LabelMap;

use crate::provenance::{config_hash, write_json_report, TOOL_VERSION};

pub const MANIFEST_SCHEMA: &str = "netspect-corpus-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Args)]
pub struct BenchgenArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for netlists, labels.json, and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_circuits: Option<usize>,
    #[arg(long)]
    pub gates_min: Option<usize>,
    #[arg(long)]
    pub gates_max: Option<usize>,
    #[arg(long)]
    pub pi_min: Option<usize>,
    #[arg(long)]
    pub pi_max: Option<usize>,
    #[arg(long)]
    pub po_min: Option<usize>,
    #[arg(long)]
    pub po_max: Option<usize>,
    #[arg(long)]
    pub ff_fraction: Option<f64>,
    #[arg(long)]
    pub trojan_fraction: Option<f64>,
    #[arg(long)]
    pub trigger_width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: String,
    file: String,
    gates: usize,
    pis: usize,
    pos: usize,
    trojan_nets: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema: &'static str,
    version: u32,
    tool_version: &'static str,
    config_sha256: String,
    config: GenConfig,
    circuits: Vec<ManifestEntry>,
}

/// Manifest subset needed to re-read a corpus.
#[derive(Debug, Deserialize)]
pub struct ManifestIn {
    pub schema: String,
    pub circuits: Vec<ManifestEntryIn>,
}

#[derive(Debug, Deserialize)]
pub struct ManifestEntryIn {
    pub file: String,
}

fn resolve_config(args: &BenchgenArgs) -> Result<GenConfig> {
    let mut cfg: GenConfig = match &args.config {
        Some(path) => {
            crate::provenance::require_file(path, "config file")?;
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .with_context(|| format!("malformed config `{}`", path.display()))?
        }
        None => GenConfig::default(),
    };
    if let Some(v) = args.n_circuits {
        cfg.n_circuits = v;
    }
    if let Some(v) = args.gates_min {
        cfg.gates_per_circuit.0 = v;
    }
    if let Some(v) = args.gates_max {
        cfg.gates_per_circuit.1 = v;
    }
    if let Some(v) = args.pi_min {
        cfg.pi_count.0 = v;
    }
    if let Some(v) = args.pi_max {
        cfg.pi_count.1 = v;
    }
    if let Some(v) = args.po_min {
        cfg.po_count.0 = v;
    }
    if let Some(v) = args.po_max {
        cfg.po_count.1 = v;
    }
    if let Some(v) = args.ff_fraction {
        cfg.ff_fraction = v;
    }
    if let Some(v) = args.trojan_fraction {
        cfg.trojan_fraction_of_circuits = v;
    }
    if let Some(v) = args.trigger_width {
        cfg.trigger_width = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

pub fn run(args: &BenchgenArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let lib = default_library();
    let corpus = generate_corpus(&cfg, &lib)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create `{}`", args.out.display()))?;

    let mut labels: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();
    let mut entries = Vec::with_capacity(corpus.len());
    for circuit in &corpus {
        let file = format!("{}.v", circuit.name);
        std::fs::write(args.out.join(&file), circuit.netlist.to_verilog())?;
        labels.insert(circuit.name.clone(), circuit.trojan_nets.clone());
        entries.push(ManifestEntry {
            name: circuit.name.clone(),
            file,
            gates: circuit.netlist.instances.len(),
            pis: circuit.netlist.primary_inputs.len(),
            pos: circuit.netlist.primary_outputs.len(),
            trojan_nets: circuit.trojan_nets.iter().cloned().collect(),
        });
    }
    let label_map = LabelMap::new(labels);
    std::fs::write(args.out.join("labels.json"), label_map.to_json())?;

    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        version: MANIFEST_VERSION,
        tool_version: TOOL_VERSION,
        config_sha256: config_hash(&cfg),
        config: cfg,
        circuits: entries,
    };
    write_json_report(&args.out.join("manifest.json"), &manifest)?;

    let infected = corpus.iter().filter(|c| !c.trojan_nets.is_empty()).count();
    println!(
        "wrote {} circuits ({} trojan-infected) to {}",
        corpus.len(),
        infected,
        args.out.display()
    );
    Ok(())
}

/// Load a corpus directory written by `benchgen`: (netlist paths in
/// manifest order, label file path).
pub fn corpus_files(dir: &Path) -> Result<(Vec<PathBuf>, PathBuf)> {
    let manifest_path = dir.join("manifest.json");
    crate::provenance::require_file(&manifest_path, "corpus manifest")?;
    let manifest: ManifestIn = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
        .with_context(|| format!("malformed manifest `{}`", manifest_path.display()))?;
    if manifest.schema != MANIFEST_SCHEMA {
        anyhow::bail!("`{}` is not a corpus manifest", manifest_path.display());
    }
    let netlists: Vec<PathBuf> = manifest
        .circuits
        .iter()
        .map(|c| dir.join(&c.file))
        .collect();
    Ok((netlists, dir.join("labels.json")))
}
