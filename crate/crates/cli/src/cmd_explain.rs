//! `netspect explain`: one explanation record per input row through the
//! chosen backend, with full coverage enforced.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use netspect::attribution::{
    gradient_explain, lime_explain, shapley_explain_prepared, PerturbationConfig, ProbabilityModel,
    ShapleyBackground, TrainStats,
};
use netspect::cases::{correspondence, explain_case, CaseIndex, DEFAULT_REVIEW_THRESHOLD};
use netspect::dataset::Dataset;
use netspect::ensemble::PropertyEnsemble;
use netspect::explain::{AttributionExplanation, Explanation};
use netspect::gbt::BoostedTreeModel;

use crate::provenance::{provenance, require_file, write_json_report, Provenance};
use crate::CliError;

pub const EXPLANATIONS_SCHEMA: &str = "netspect-explanations";
pub const EXPLANATIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Property,
    Case,
    Lime,
    Shap,
    Gradient,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// JSON config with the tunables below; explicit flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rows to explain.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Boosted-tree model (required except for --knn-majority case mode).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Property ensemble file (method = property).
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Training CSV backing case retrieval, surrogate sampling pools, and
    /// the Shapley background (methods case/lime/shap).
    #[arg(long = "train-features")]
    pub train_features: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbors retrieved per case explanation.
    #[arg(long)]
    pub k: Option<usize>,
    /// Classify by neighbor majority instead of the model.
    #[arg(long)]
    pub knn_majority: bool,
    /// Correspondence below this flags the record for review.
    #[arg(long)]
    pub review_threshold: Option<f64>,
    /// Standardize features for neighbor distances.
    #[arg(long)]
    pub standardize: bool,
    /// Decision threshold used to report the predicted class.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub background_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolved explain tunables; the provenance hash covers this plus the
/// input paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub k: usize,
    pub knn_majority: bool,
    pub review_threshold: f64,
    pub standardize: bool,
    pub threshold: f64,
    pub n_samples: usize,
    pub kernel_width: Option<f64>,
    pub epsilon: f64,
    pub background_size: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        let p = PerturbationConfig::default();
        ExplainConfig {
            k: 5,
            knn_majority: false,
            review_threshold: DEFAULT_REVIEW_THRESHOLD,
            standardize: false,
            threshold: 0.5,
            n_samples: p.n_samples,
            kernel_width: None,
            epsilon: p.epsilon,
            background_size: p.background_size,
            seed: p.seed,
        }
    }
}

fn resolve_config(args: &ExplainArgs) -> Result<ExplainConfig> {
    let mut cfg: ExplainConfig = match &args.config {
        Some(path) => {
            require_file(path, "config file")?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("malformed config `{}`", path.display()))?
        }
        None => ExplainConfig::default(),
    };
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if args.knn_majority {
        cfg.knn_majority = true;
    }
    if let Some(v) = args.review_threshold {
        cfg.review_threshold = v;
    }
    if args.standardize {
        cfg.standardize = true;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = args.n_samples {
        cfg.n_samples = v;
    }
    if let Some(v) = args.kernel_width {
        cfg.kernel_width = Some(v);
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.background_size {
        cfg.background_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct ExplanationRecord {
    circuit: String,
    net: String,
    line: u32,
    label: u8,
    wall_time_ns: u64,
    explanation: Explanation,
}

#[derive(Debug, Serialize)]
struct ExplanationReport {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    provenance: Provenance,
    method: Method,
    n_rows: usize,
    records: Vec<ExplanationRecord>,
}

fn mismatch(message: &str) -> anyhow::Error {
    anyhow::Error::new(CliError::MethodModelMismatch(message.into()))
}

pub fn run(args: &ExplainArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    require_file(&args.features, "feature CSV")?;
    let needs_train = matches!(args.method, Method::Case | Method::Lime | Method::Shap);
    if needs_train && args.train_features.is_none() {
        return Err(mismatch(&format!(
            "method `{:?}` needs --train-features",
            args.method
        )));
    }
    if matches!(args.method, Method::Property) && args.ensemble.is_none() {
        return Err(mismatch("method `property` needs --ensemble"));
    }
    let needs_model = match args.method {
        Method::Property => false,
        Method::Case => !cfg.knn_majority,
        _ => true,
    };
    if needs_model && args.model.is_none() {
        return Err(mismatch(&format!(
            "method `{:?}` needs --model",
            args.method
        )));
    }
    for path in [&args.model, &args.ensemble, &args.train_features]
        .into_iter()
        .flatten()
    {
        require_file(path, "input file")?;
    }

    let rows = Dataset::from_csv_str(&std::fs::read_to_string(&args.features)?)?;
    let model: Option<BoostedTreeModel> = match &args.model {
        Some(path) => Some(BoostedTreeModel::load(path)?),
        None => None,
    };
    let train: Option<Dataset> = match &args.train_features {
        Some(path) => Some(Dataset::from_csv_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };

    let perturbation = PerturbationConfig {
        n_samples: cfg.n_samples,
        kernel_width: cfg
            .kernel_width
            .unwrap_or_else(|| PerturbationConfig::default().kernel_width),
        seed: cfg.seed,
        epsilon: cfg.epsilon,
        background_size: cfg.background_size,
    };

    let mut records = Vec::with_capacity(rows.len());
    match args.method {
        Method::Property => {
            let ensemble = PropertyEnsemble::load(args.ensemble.as_ref().expect("checked"))?;
            for sample in rows.samples() {
                let start = Instant::now();
                let vote = ensemble.predict_weighted_vote(&sample.features);
                let explanation = ensemble.explain_property(&vote, &sample.features);
                records.push(record(sample, start, Explanation::Property(explanation)));
            }
        }
        Method::Case => {
            let train = train.as_ref().expect("checked");
            let index = if cfg.standardize {
                CaseIndex::build_standardized(train)?
            } else {
                CaseIndex::build(train)?
            };
            for sample in rows.samples() {
                let start = Instant::now();
                let neighbors = index.knn(&sample.features, cfg.k);
                let (prediction, probability) = match (&model, cfg.knn_majority) {
                    (Some(m), false) => {
                        let p = m.predict_proba(&sample.features);
                        (u8::from(p >= cfg.threshold), Some(p))
                    }
                    _ => (neighbors.majority_class(), None),
                };
                let score = correspondence(&neighbors, prediction);
                let explanation = explain_case(
                    prediction,
                    probability,
                    &neighbors,
                    &score,
                    cfg.review_threshold,
                );
                records.push(record(sample, start, Explanation::Case(explanation)));
            }
        }
        Method::Lime => {
            let model = model.as_ref().expect("checked");
            let stats = TrainStats::from_dataset(train.as_ref().expect("checked"))?;
            for (i, sample) in rows.samples().iter().enumerate() {
                let start = Instant::now();
                // per-sample generator stream keeps records independent
                let cfg = PerturbationConfig {
                    seed: perturbation.seed ^ (i as u64),
                    ..perturbation.clone()
                };
                let x = sample.features.as_array();
                let result = lime_explain(model, &x, &stats, &cfg)?;
                let wall = start.elapsed().as_nanos() as u64;
                records.push(ExplanationRecord {
                    circuit: sample.provenance.circuit.clone(),
                    net: sample.provenance.net.clone(),
                    line: sample.provenance.line,
                    label: sample.label,
                    wall_time_ns: wall,
                    explanation: Explanation::Attribution(AttributionExplanation::from_vector(
                        &result.attribution,
                        x,
                        wall,
                        result.used_ridge,
                    )),
                });
            }
        }
        Method::Shap => {
            let model = model.as_ref().expect("checked");
            let background = TrainStats::background_sample(
                train.as_ref().expect("checked"),
                cfg.background_size,
                cfg.seed,
            );
            let prepared = ShapleyBackground::prepare_for(model, &background)?;
            for sample in rows.samples() {
                let start = Instant::now();
                let x = sample.features.as_array();
                let attr = shapley_explain_prepared(model, &x, &prepared);
                let wall = start.elapsed().as_nanos() as u64;
                // local accuracy self-check on every record
                let total: f64 = attr.values.iter().sum();
                let fx = model.probability(&x);
                if (total - (fx - attr.baseline)).abs() >= 1e-9 {
                    anyhow::bail!("local accuracy violated on net `{}`", sample.provenance.net);
                }
                records.push(ExplanationRecord {
                    circuit: sample.provenance.circuit.clone(),
                    net: sample.provenance.net.clone(),
                    line: sample.provenance.line,
                    label: sample.label,
                    wall_time_ns: wall,
                    explanation: Explanation::Attribution(AttributionExplanation::from_vector(
                        &attr, x, wall, false,
                    )),
                });
            }
        }
        Method::Gradient => {
            let model = model.as_ref().expect("checked");
            for sample in rows.samples() {
                let start = Instant::now();
                let x = sample.features.as_array();
                let attr = gradient_explain(model, &x, cfg.epsilon)?;
                let wall = start.elapsed().as_nanos() as u64;
                records.push(ExplanationRecord {
                    circuit: sample.provenance.circuit.clone(),
                    net: sample.provenance.net.clone(),
                    line: sample.provenance.line,
                    label: sample.label,
                    wall_time_ns: wall,
                    explanation: Explanation::Attribution(AttributionExplanation::from_vector(
                        &attr, x, wall, false,
                    )),
                });
            }
        }
    }

    // full coverage: one record per input row, no skips
    anyhow::ensure!(
        records.len() == rows.len(),
        "coverage violated: {} records for {} rows",
        records.len(),
        rows.len()
    );

    let mut input_paths: Vec<&std::path::Path> = vec![args.features.as_path()];
    for p in [&args.model, &args.ensemble, &args.train_features]
        .into_iter()
        .flatten()
    {
        input_paths.push(p);
    }
    let report = ExplanationReport {
        schema: EXPLANATIONS_SCHEMA,
        version: EXPLANATIONS_VERSION,
        provenance: provenance(&cfg, &input_paths)?,
        method: args.method,
        n_rows: rows.len(),
        records,
    };
    write_json_report(&args.out, &report)?;
    println!(
        "explained {} rows with {:?} -> {}",
        rows.len(),
        args.method,
        args.out.display()
    );
    Ok(())
}

fn record(
    sample: &netspect::dataset::LabeledSample,
    start: Instant,
    explanation: Explanation,
) -> ExplanationRecord {
    ExplanationRecord {
        circuit: sample.provenance.circuit.clone(),
        net: sample.provenance.net.clone(),
        line: sample.provenance.line,
        label: sample.label,
        wall_time_ns: start.elapsed().as_nanos() as u64,
        explanation,
    }
}
