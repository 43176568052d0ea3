//! `netspect evaluate` and `netspect sweep`: metrics with bootstrap CIs,
//! the threshold sweep, and paired McNemar comparisons with Bonferroni
//! correction.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use netspect::dataset::Dataset;
use netspect::gbt::BoostedTreeModel;
use netspect::stats::{
    bonferroni, bootstrap_ci, mcnemar, metrics, threshold_sweep, BonferroniResult, BootstrapCi,
    ConfusionMatrix, McNemarResult, MetricKind, MetricsReport, SweepRow,
};

use crate::provenance::{provenance, require_file, write_json_report, Provenance};
use crate::CliError;

pub const EVALUATION_SCHEMA: &str = "netspect-evaluation";
pub const EVALUATION_VERSION: u32 = 1;
pub const PREDICTIONS_SCHEMA: &str = "netspect-predictions";
pub const SWEEP_SCHEMA: &str = "netspect-sweep";

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON config with the tunables below; explicit flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Test feature CSV (labels included).
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Decision thresholds to evaluate (repeatable).
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub bootstrap_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Write this run's binary predictions (at the first threshold).
    #[arg(long = "preds-out")]
    pub preds_out: Option<PathBuf>,
    /// Two prediction files to compare with McNemar (repeatable in pairs).
    #[arg(long = "compare", num_args = 2, value_names = ["PREDS_A", "PREDS_B"])]
    pub compare: Vec<PathBuf>,
    /// Skip the bootstrap (faster smoke runs).
    #[arg(long)]
    pub no_bootstrap: bool,
}

/// Resolved evaluation tunables; hashed into report provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub thresholds: Vec<f64>,
    pub bootstrap_iters: usize,
    pub seed: u64,
    pub alpha: f64,
    pub no_bootstrap: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            thresholds: vec![0.5, 0.99],
            bootstrap_iters: 10000,
            seed: 42,
            alpha: 0.05,
            no_bootstrap: false,
        }
    }
}

fn resolve_config(args: &EvaluateArgs) -> Result<EvaluateConfig> {
    let mut cfg: EvaluateConfig = match &args.config {
        Some(path) => {
            require_file(path, "config file")?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("malformed config `{}`", path.display()))?
        }
        None => EvaluateConfig::default(),
    };
    if !args.thresholds.is_empty() {
        cfg.thresholds = args.thresholds.clone();
    }
    if let Some(v) = args.bootstrap_iters {
        cfg.bootstrap_iters = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if args.no_bootstrap {
        cfg.no_bootstrap = true;
    }
    Ok(cfg)
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub schema: String,
    pub version: u32,
    pub threshold: f64,
    pub predictions: Vec<u8>,
}

#[derive(Debug, Serialize)]
struct MetricCis {
    precision: BootstrapCi,
    recall: BootstrapCi,
    f1: BootstrapCi,
    fpr: BootstrapCi,
    accuracy: BootstrapCi,
}

#[derive(Debug, Serialize)]
struct ThresholdReport {
    threshold: f64,
    confusion: ConfusionMatrix,
    metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<MetricCis>,
}

#[derive(Debug, Serialize)]
struct Comparison {
    preds_a: String,
    preds_b: String,
    mcnemar: McNemarResult,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    provenance: Provenance,
    seed: u64,
    n: usize,
    bootstrap_iters: usize,
    thresholds: Vec<ThresholdReport>,
    sweep_best_threshold: f64,
    sweep: Vec<SweepRow>,
    comparisons: Vec<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bonferroni: Option<BonferroniResult>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    provenance: Provenance,
    best_threshold: f64,
    rows: Vec<SweepRow>,
}

fn load_rows(
    model: &Path,
    features: &Path,
) -> Result<(BoostedTreeModel, Dataset, Vec<f64>, Vec<u8>)> {
    require_file(model, "model file")?;
    require_file(features, "feature CSV")?;
    let model = BoostedTreeModel::load(model)?;
    let rows = Dataset::from_csv_str(&std::fs::read_to_string(features)?)?;
    let probas: Vec<f64> = rows
        .samples()
        .iter()
        .map(|s| model.predict_proba(&s.features))
        .collect();
    let labels: Vec<u8> = rows.samples().iter().map(|s| s.label).collect();
    Ok((model, rows, probas, labels))
}

fn load_predictions(path: &Path, expected_len: usize) -> Result<Vec<u8>> {
    require_file(path, "prediction file")?;
    let file: PredictionsFile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .with_context(|| format!("malformed prediction file `{}`", path.display()))?;
    if file.schema != PREDICTIONS_SCHEMA {
        anyhow::bail!("`{}` is not a predictions file", path.display());
    }
    if file.predictions.len() != expected_len {
        anyhow::bail!(CliError::MismatchedLengths(format!(
            "`{}` carries {} predictions, test set has {expected_len}",
            path.display(),
            file.predictions.len()
        )));
    }
    Ok(file.predictions)
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let (_model, _rows, probas, labels) = load_rows(&args.model, &args.features)?;
    let thresholds = cfg.thresholds.clone();
    for t in &thresholds {
        if !(*t > 0.0 && *t < 1.0) {
            anyhow::bail!("threshold {t} outside (0, 1)");
        }
    }

    let mut threshold_reports = Vec::with_capacity(thresholds.len());
    for &threshold in &thresholds {
        let preds: Vec<u8> = probas.iter().map(|&p| u8::from(p >= threshold)).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels)
            .map_err(|e| anyhow::Error::new(CliError::MismatchedLengths(e.to_string())))?;
        let bootstrap = if cfg.no_bootstrap {
            None
        } else {
            let ci = |kind: MetricKind| {
                bootstrap_ci(&preds, &labels, kind, cfg.bootstrap_iters, cfg.seed)
            };
            Some(MetricCis {
                precision: ci(MetricKind::Precision)?,
                recall: ci(MetricKind::Recall)?,
                f1: ci(MetricKind::F1)?,
                fpr: ci(MetricKind::Fpr)?,
                accuracy: ci(MetricKind::Accuracy)?,
            })
        };
        threshold_reports.push(ThresholdReport {
            threshold,
            confusion: cm,
            metrics: metrics(&cm),
            bootstrap,
        });
    }

    let (best_threshold, sweep_rows) = threshold_sweep(&probas, &labels)
        .map_err(|e| anyhow::Error::new(CliError::MismatchedLengths(e.to_string())))?;

    if let Some(path) = &args.preds_out {
        let threshold = thresholds[0];
        let file = PredictionsFile {
            schema: PREDICTIONS_SCHEMA.to_string(),
            version: 1,
            threshold,
            predictions: probas.iter().map(|&p| u8::from(p >= threshold)).collect(),
        };
        write_json_report(path, &file)?;
    }

    let mut comparisons = Vec::new();
    let mut p_values = Vec::new();
    for pair in args.compare.chunks(2) {
        let preds_a = load_predictions(&pair[0], labels.len())?;
        let preds_b = load_predictions(&pair[1], labels.len())?;
        let result = mcnemar(&preds_a, &preds_b, &labels, true)
            .map_err(|e| anyhow::Error::new(CliError::MismatchedLengths(e.to_string())))?;
        p_values.push(result.p_value);
        comparisons.push(Comparison {
            preds_a: pair[0].display().to_string(),
            preds_b: pair[1].display().to_string(),
            mcnemar: result,
        });
    }
    let bonferroni_result = if p_values.is_empty() {
        None
    } else {
        Some(bonferroni(&p_values, cfg.alpha)?)
    };

    let mut input_paths: Vec<&Path> = vec![args.model.as_path(), args.features.as_path()];
    for p in &args.compare {
        input_paths.push(p);
    }
    let report = EvaluationReport {
        schema: EVALUATION_SCHEMA,
        version: EVALUATION_VERSION,
        provenance: provenance(&cfg, &input_paths)?,
        seed: cfg.seed,
        n: labels.len(),
        bootstrap_iters: if cfg.no_bootstrap {
            0
        } else {
            cfg.bootstrap_iters
        },
        thresholds: threshold_reports,
        sweep_best_threshold: best_threshold,
        sweep: sweep_rows,
        comparisons,
        bonferroni: bonferroni_result,
    };
    write_json_report(&args.out, &report)?;
    println!(
        "evaluated {} rows; best sweep threshold {:.4} -> {}",
        labels.len(),
        best_threshold,
        args.out.display()
    );
    Ok(())
}

pub fn run_sweep(args: &SweepArgs) -> Result<()> {
    let (_model, _rows, probas, labels) = load_rows(&args.model, &args.features)?;
    let (best_threshold, rows) = threshold_sweep(&probas, &labels)
        .map_err(|e| anyhow::Error::new(CliError::MismatchedLengths(e.to_string())))?;
    let report = SweepReport {
        schema: SWEEP_SCHEMA,
        version: 1,
        provenance: provenance(args, &[args.model.as_path(), args.features.as_path()])?,
        best_threshold,
        rows,
    };
    write_json_report(&args.out, &report)?;
    println!(
        "sweep over {} rows; best threshold {:.4} -> {}",
        labels.len(),
        best_threshold,
        args.out.display()
    );
    Ok(())
}
