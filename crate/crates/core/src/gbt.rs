//! Gradient-boosted regression trees: binary classifier with logistic
//! loss, second-order (Newton) boosting, exact greedy splits over the five
//! integer features, and minority-class weighting.
//!
//! Training is fully deterministic: split search iterates features in
//! index order and thresholds in ascending order, and a tie on gain keeps
//! the earlier candidate.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::features::FeatureVector;
use crate::{FEATURE_COUNT, FEATURE_NAMES};

pub const MODEL_SCHEMA: &str = "netspect-model";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// All five features available for splitting.
pub(crate) const ALL_FEATURES: u8 = 0b11111;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset contains a single class; training requires both")]
    SingleClassDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model schema mismatch: found `{found}` v{found_version}, expected `{expected}` v{expected_version}")]
    SchemaVersionMismatch {
        expected: String,
        expected_version: u32,
        found: String,
        found_version: u32,
    },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// `None` resolves to N_benign / N_trojan at training time.
    pub positive_class_weight: Option<f64>,
    pub l2_leaf_regularization: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_estimators: 100,
            max_depth: 5,
            learning_rate: 0.1,
            positive_class_weight: None,
            l2_leaf_regularization: 1.0,
            min_child_weight: 1.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.n_estimators == 0 {
            return Err(ModelError::InvalidConfig(
                "n_estimators must be >= 1".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(ModelError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if let Some(w) = self.positive_class_weight {
            if w <= 0.0 || w.is_nan() {
                return Err(ModelError::InvalidConfig(format!(
                    "positive_class_weight must be > 0, got {w}"
                )));
            }
        }
        if self.l2_leaf_regularization < 0.0 || self.min_child_weight < 0.0 {
            return Err(ModelError::InvalidConfig(
                "regularization terms must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `TrainConfig` with the positive-class weight resolved to its numeric
/// value; stored inside each model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub positive_class_weight: f64,
    pub l2_leaf_regularization: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A single regression tree; root at index 0. Left child takes
/// `x[feature] < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn output(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    fn collect_features(&self, into: &mut BTreeSet<usize>) {
        for node in &self.nodes {
            if let TreeNode::Split { feature, .. } = node {
                into.insert(*feature);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedTreeModel {
    pub config: ConfigSnapshot,
    pub base_score: f64,
    pub feature_names: Vec<String>,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    version: u32,
    model: BoostedTreeModel,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probabilities are kept strictly inside (0, 1) so that log-loss and
/// downstream ratios stay finite.
pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(1e-15, 1.0 - 1e-15)
}

impl BoostedTreeModel {
    pub fn from_parts(config: ConfigSnapshot, base_score: f64, trees: Vec<Tree>) -> Self {
        BoostedTreeModel {
            config,
            base_score,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            trees,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Raw additive score: base plus learning-rate-scaled tree outputs.
    pub fn score(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.score_prefix(x, self.trees.len())
    }

    /// Score using only the first `n_trees` trees (for staged diagnostics).
    pub fn score_prefix(&self, x: &[f64; FEATURE_COUNT], n_trees: usize) -> f64 {
        let sum: f64 = self.trees[..n_trees.min(self.trees.len())]
            .iter()
            .map(|t| t.output(x))
            .sum();
        self.base_score + self.config.learning_rate * sum
    }

    /// Trojan probability for raw (possibly non-integer) feature values.
    pub fn probability_raw(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        clamp_probability(sigmoid(self.score(x)))
    }

    pub fn predict_proba(&self, features: &FeatureVector) -> f64 {
        self.probability_raw(&features.as_array())
    }

    /// 1 iff the predicted probability is at least the threshold.
    /// Requires 0 < threshold < 1.
    pub fn classify(&self, features: &FeatureVector, threshold: f64) -> u8 {
        assert!(
            threshold > 0.0 && threshold < 1.0,
            "threshold must lie strictly between 0 and 1"
        );
        u8::from(self.predict_proba(features) >= threshold)
    }

    /// Features appearing in at least one split.
    pub fn split_features_used(&self) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        for tree in &self.trees {
            tree.collect_features(&mut set);
        }
        set
    }

    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            version: MODEL_SCHEMA_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        let schema = value
            .get("schema")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if schema != MODEL_SCHEMA || version != MODEL_SCHEMA_VERSION {
            return Err(ModelError::SchemaVersionMismatch {
                expected: MODEL_SCHEMA.to_string(),
                expected_version: MODEL_SCHEMA_VERSION,
                found: schema,
                found_version: version,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Features that are constant across the dataset; such features can never
/// be split on and are reported as warnings.
pub fn degenerate_features(dataset: &Dataset) -> Vec<usize> {
    let samples = dataset.samples();
    (0..FEATURE_COUNT)
        .filter(|&f| {
            samples
                .windows(2)
                .all(|w| w[0].features.get(f) == w[1].features.get(f))
        })
        .filter(|_| !samples.is_empty())
        .collect()
}

/// Train with all five features available.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<BoostedTreeModel, ModelError> {
    train_masked(dataset, config, ALL_FEATURES)
}

/// Train allowing splits only on features whose bit is set in
/// `feature_mask` (used by the property ensemble).
pub(crate) fn train_masked(
    dataset: &Dataset,
    config: &TrainConfig,
    feature_mask: u8,
) -> Result<BoostedTreeModel, ModelError> {
    config.validate()?;
    let counts = dataset.class_counts();
    if counts.n_benign == 0 || counts.n_trojan == 0 {
        return Err(ModelError::SingleClassDataset);
    }
    let weight = match config.positive_class_weight {
        Some(w) => w,
        None => counts.imbalance_ratio().expect("n_trojan checked above"),
    };

    for f in degenerate_features(dataset) {
        log::warn!(
            "feature {} is constant over the training set and will never be split on",
            FEATURE_NAMES[f]
        );
    }

    let n = dataset.len();
    let xs: Vec<[f64; FEATURE_COUNT]> = dataset
        .samples()
        .iter()
        .map(|s| s.features.as_array())
        .collect();
    let ys: Vec<f64> = dataset.samples().iter().map(|s| s.label as f64).collect();
    let ws: Vec<f64> = dataset
        .samples()
        .iter()
        .map(|s| if s.label == 1 { weight } else { 1.0 })
        .collect();

    let base_score = 0.0; // logit(0.5)
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_estimators);

    for _ in 0..config.n_estimators {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = ws[i] * (p - ys[i]);
            hess[i] = ws[i] * p * (1.0 - p);
        }
        let indices: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        grow_node(
            &mut nodes,
            indices,
            0,
            &xs,
            &grad,
            &hess,
            config,
            feature_mask,
        );
        let tree = Tree { nodes };
        for i in 0..n {
            scores[i] += config.learning_rate * tree.output(&xs[i]);
        }
        trees.push(tree);
    }

    Ok(BoostedTreeModel {
        config: ConfigSnapshot {
            n_estimators: config.n_estimators,
            max_depth: config.max_depth,
            learning_rate: config.learning_rate,
            positive_class_weight: weight,
            l2_leaf_regularization: config.l2_leaf_regularization,
            min_child_weight: config.min_child_weight,
            seed: config.seed,
        },
        base_score,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        trees,
    })
}

fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    let denom = h + l2;
    if denom <= 1e-16 {
        0.0
    } else {
        -g / denom
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    nodes: &mut Vec<TreeNode>,
    indices: Vec<usize>,
    depth: usize,
    xs: &[[f64; FEATURE_COUNT]],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
    feature_mask: u8,
) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode::Leaf { value: 0.0 });

    let l2 = config.l2_leaf_regularization;
    let g_total: f64 = indices.iter().map(|&i| grad[i]).sum();
    let h_total: f64 = indices.iter().map(|&i| hess[i]).sum();

    let best = if depth < config.max_depth && indices.len() >= 2 {
        best_split(
            &indices,
            xs,
            grad,
            hess,
            config,
            feature_mask,
            g_total,
            h_total,
        )
    } else {
        None
    };

    match best {
        None => {
            nodes[id] = TreeNode::Leaf {
                value: leaf_value(g_total, h_total, l2),
            };
        }
        Some((feature, threshold)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| xs[i][feature] < threshold);
            let left = grow_node(
                nodes,
                left_idx,
                depth + 1,
                xs,
                grad,
                hess,
                config,
                feature_mask,
            );
            let right = grow_node(
                nodes,
                right_idx,
                depth + 1,
                xs,
                grad,
                hess,
                config,
                feature_mask,
            );
            nodes[id] = TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
    }
    id
}

/// Exact greedy split search with the second-order gain formula. Splits
/// with non-positive gain or a child hessian sum below `min_child_weight`
/// are rejected. Ties keep the lowest feature index, then lowest threshold
/// (candidates are scanned in that order and replaced only on strictly
/// higher gain).
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn best_split(
    indices: &[usize],
    xs: &[[f64; FEATURE_COUNT]],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
    feature_mask: u8,
    g_total: f64,
    h_total: f64,
) -> Option<(usize, f64)> {
    let l2 = config.l2_leaf_regularization;
    let parent = g_total * g_total / (h_total + l2);
    let mut best: Option<(f64, usize, f64)> = None;

    for feature in 0..FEATURE_COUNT {
        if feature_mask & (1 << feature) == 0 {
            continue;
        }
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| {
            xs[a][feature]
                .partial_cmp(&xs[b][feature])
                .expect("feature values are finite")
                .then_with(|| a.cmp(&b))
        });
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        for w in 0..order.len() - 1 {
            let i = order[w];
            g_left += grad[i];
            h_left += hess[i];
            let v = xs[i][feature];
            let v_next = xs[order[w + 1]][feature];
            if v == v_next {
                continue;
            }
            let h_right = h_total - h_left;
            if h_left < config.min_child_weight || h_right < config.min_child_weight {
                continue;
            }
            let g_right = g_total - g_left;
            let gain = 0.5
                * (g_left * g_left / (h_left + l2) + g_right * g_right / (h_right + l2) - parent);
            if gain <= 0.0 {
                continue;
            }
            let threshold = 0.5 * (v + v_next);
            if best.is_none_or(|(bg, _, _)| gain > bg) {
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Weighted logistic loss of predictions against labels, using the same
/// per-sample weights as training.
pub fn weighted_log_loss(probas: &[f64], labels: &[u8], positive_weight: f64) -> f64 {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for (&p, &y) in probas.iter().zip(labels) {
        let p = clamp_probability(p);
        let (w, term) = if y == 1 {
            (positive_weight, -p.ln())
        } else {
            (1.0, -(1.0 - p).ln())
        };
        total += w * term;
        weight_sum += w;
    }
    total / weight_sum
}
