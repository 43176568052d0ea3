//! `netspect train`: fit the boosted-tree model (and optionally the
//! 31-member property ensemble) from a feature CSV.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use netspect::dataset::Dataset;
use netspect::ensemble::train_ensemble;
use netspect::gbt::{degenerate_features, train, TrainConfig};
use netspect::FEATURE_NAMES;

use crate::provenance::require_file;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config file with TrainConfig fields; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training feature CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Output model file.
    #[arg(long = "model-out")]
    pub model_out: PathBuf,
    /// Also train the 31-member property ensemble into this file.
    #[arg(long = "ensemble-out")]
    pub ensemble_out: Option<PathBuf>,
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Positive-class weight; N_benign/N_trojan when omitted.
    #[arg(long)]
    pub positive_class_weight: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub min_child_weight: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validation slice used for ensemble vote weights.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileConfig {
    #[serde(flatten)]
    train: TrainConfig,
}

pub fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => {
            require_file(path, "config file")?;
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<FileConfig>(&text)
                .with_context(|| format!("malformed config `{}`", path.display()))?
                .train
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.n_estimators {
        cfg.n_estimators = v;
    }
    if let Some(v) = args.max_depth {
        cfg.max_depth = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.positive_class_weight {
        cfg.positive_class_weight = Some(v);
    }
    if let Some(v) = args.l2 {
        cfg.l2_leaf_regularization = v;
    }
    if let Some(v) = args.min_child_weight {
        cfg.min_child_weight = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    require_file(&args.features, "feature CSV")?;
    let cfg = resolve_config(args)?;
    let dataset = Dataset::from_csv_str(&std::fs::read_to_string(&args.features)?)?;
    let counts = dataset.class_counts();
    let weight = cfg
        .positive_class_weight
        .or_else(|| counts.imbalance_ratio());
    println!(
        "training on {} samples: {} benign, {} trojan",
        dataset.len(),
        counts.n_benign,
        counts.n_trojan
    );
    match weight {
        Some(w) => println!("positive_class_weight = {w}"),
        None => println!("positive_class_weight undefined (no trojan samples)"),
    }
    for f in degenerate_features(&dataset) {
        println!("warning: feature {} is constant", FEATURE_NAMES[f]);
    }

    let model = train(&dataset, &cfg)?;
    model.save(&args.model_out)?;
    println!("model -> {}", args.model_out.display());

    if let Some(path) = &args.ensemble_out {
        let ensemble = train_ensemble(&dataset, &cfg, args.validation_fraction, cfg.seed)?;
        ensemble.save(path)?;
        println!(
            "ensemble ({} members) -> {}",
            ensemble.members().len(),
            path.display()
        );
    }
    Ok(())
}
