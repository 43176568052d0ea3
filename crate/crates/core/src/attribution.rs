//! Feature-attribution explainers: perturbation-based local surrogate,
//! exact Shapley values by coalition enumeration, and forward-difference
//! gradients. All three work against any probability-output model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::gbt::{BoostedTreeModel, TreeNode};
use crate::{FEATURE_COUNT, FEATURE_NAMES};

const N_COALITIONS: usize = 1 << FEATURE_COUNT; // 32

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("perturbation config invalid: {0}")]
    InvalidConfig(String),
    #[error("training statistics are empty")]
    EmptyTrainStats,
    #[error("background set is empty")]
    EmptyBackground,
}

/// Anything that maps a raw 5-feature point to a trojan probability.
pub trait ProbabilityModel {
    fn probability(&self, x: &[f64; FEATURE_COUNT]) -> f64;

    /// Probabilities for all 2^5 coalition blends of `x` over `background`:
    /// entry `mask` takes feature i from `x` when bit i of `mask` is set,
    /// from `background` otherwise. The default evaluates each blend
    /// separately; implementations may batch as long as results are
    /// identical.
    fn coalition_probabilities(
        &self,
        x: &[f64; FEATURE_COUNT],
        background: &[f64; FEATURE_COUNT],
    ) -> [f64; N_COALITIONS] {
        let mut out = [0.0; N_COALITIONS];
        for (mask, slot) in out.iter_mut().enumerate() {
            let mut blended = *background;
            for i in 0..FEATURE_COUNT {
                if mask & (1 << i) != 0 {
                    blended[i] = x[i];
                }
            }
            *slot = self.probability(&blended);
        }
        out
    }

    /// Collapse background points this model cannot distinguish (same
    /// side of every decision it ever takes). The default keeps the list
    /// as-is; implementations may merge points with identical behavior.
    fn collapse_background(
        &self,
        weighted: Vec<([f64; FEATURE_COUNT], f64)>,
    ) -> Vec<([f64; FEATURE_COUNT], f64)> {
        weighted
    }

    /// Weighted mean of coalition probabilities over a deduplicated
    /// background: v[mask] = Σ count·p(mask, b) / total. The default loops
    /// `coalition_probabilities`; implementations may share work across
    /// background points as long as the values agree.
    fn coalition_mean(
        &self,
        x: &[f64; FEATURE_COUNT],
        weighted_background: &[([f64; FEATURE_COUNT], f64)],
        total: f64,
    ) -> [f64; N_COALITIONS] {
        let mut v = [0.0f64; N_COALITIONS];
        for (b, count) in weighted_background {
            let probs = self.coalition_probabilities(x, b);
            for (acc, p) in v.iter_mut().zip(probs.iter()) {
                *acc += count * p;
            }
        }
        for acc in v.iter_mut() {
            *acc /= total;
        }
        v
    }
}

impl ProbabilityModel for BoostedTreeModel {
    fn probability(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.probability_raw(x)
    }

    /// Batched evaluation. One descent per tree carries the set of
    /// coalition masks, splitting it only where `x` and `background` fall
    /// on different sides of a node. Masks agreeing on every diverging
    /// feature take identical branches in every tree, so scores are
    /// computed once per equivalence class. Values match the per-mask
    /// default up to float re-association (within 1e-12).
    fn coalition_probabilities(
        &self,
        x: &[f64; FEATURE_COUNT],
        background: &[f64; FEATURE_COUNT],
    ) -> [f64; N_COALITIONS] {
        // `shared` collects leaves reached by all masks alike; diverging
        // leaves are recorded as (mask-set, value) groups. The buffer is
        // reused across calls; the common fully-shared tree walk stays
        // inline and allocation-free.
        let mut shared = 0.0f64;
        let mut diverging = 0usize; // feature bits where any path split
        GROUP_SCRATCH.with(|cell| {
            let mut groups = cell.borrow_mut();
            groups.clear();
            'trees: for tree in self.trees() {
                let nodes = tree.nodes();
                let mut at = 0usize;
                loop {
                    match &nodes[at] {
                        TreeNode::Leaf { value } => {
                            shared += value;
                            continue 'trees;
                        }
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            let x_left = x[*feature] < *threshold;
                            let b_left = background[*feature] < *threshold;
                            if x_left == b_left {
                                at = if x_left { *left } else { *right };
                            } else {
                                descend(
                                    nodes,
                                    at,
                                    u32::MAX,
                                    x,
                                    background,
                                    &mut shared,
                                    &mut groups,
                                    &mut diverging,
                                );
                                continue 'trees;
                            }
                        }
                    }
                }
            }
            finish_coalitions(self, shared, &groups, diverging)
        })
    }

    /// Points on the same side of every threshold in the forest are
    /// interchangeable: every traversal, blended or not, is identical.
    fn collapse_background(
        &self,
        weighted: Vec<([f64; FEATURE_COUNT], f64)>,
    ) -> Vec<([f64; FEATURE_COUNT], f64)> {
        let thresholds = self.forest_thresholds();
        let mut cells: Vec<([u16; FEATURE_COUNT], [f64; FEATURE_COUNT], f64)> =
            Vec::with_capacity(weighted.len());
        'points: for (b, count) in weighted {
            let mut key = [0u16; FEATURE_COUNT];
            for (f, slot) in key.iter_mut().enumerate() {
                *slot = thresholds[f].partition_point(|&t| t <= b[f]) as u16;
            }
            for (k, _, c) in cells.iter_mut() {
                if *k == key {
                    *c += count;
                    continue 'points;
                }
            }
            cells.push((key, b, count));
        }
        cells.into_iter().map(|(_, b, c)| (b, c)).collect()
    }

    /// Shared-path batching. x's path through each tree is recorded once
    /// per call, background points collapse to forest cells (points no
    /// node can tell apart), and for each cell the diverging trees come
    /// from precomputed per-rank tree bitsets, so clean trees cost
    /// nothing.
    fn coalition_mean(
        &self,
        x: &[f64; FEATURE_COUNT],
        weighted_background: &[([f64; FEATURE_COUNT], f64)],
        total: f64,
    ) -> [f64; N_COALITIONS] {
        struct PathStep {
            node: u32,
            /// index of the node's threshold in the per-feature sorted list
            rank: u16,
            feature: u8,
            x_left: bool,
        }

        let all_thresholds = self.forest_thresholds();

        // x's realized path per tree
        let n_trees = self.trees().len();
        let mut steps: Vec<PathStep> = Vec::with_capacity(n_trees * 6);
        let mut spans: Vec<(u32, u32, f64)> = Vec::with_capacity(n_trees);
        for tree in self.trees() {
            let nodes = tree.nodes();
            let start = steps.len() as u32;
            let mut at = 0usize;
            let leaf = loop {
                match &nodes[at] {
                    TreeNode::Leaf { value } => break *value,
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let x_left = x[*feature] < *threshold;
                        let rank =
                            all_thresholds[*feature].partition_point(|t| t < threshold) as u16;
                        steps.push(PathStep {
                            node: at as u32,
                            rank,
                            feature: *feature as u8,
                            x_left,
                        });
                        at = if x_left { *left } else { *right };
                    }
                }
            };
            spans.push((start, steps.len() as u32, leaf));
        }
        let clean_sum: f64 = spans.iter().map(|&(_, _, leaf)| leaf).sum();

        // For every feature and background rank, the set of trees whose
        // x-path disagrees at that rank, as tree bitsets. A step at
        // threshold index i disagrees with rank r when x went left and
        // r > i, or x went right and r <= i.
        let words = n_trees.div_ceil(64);
        let mut dirty_bits: [Vec<u64>; FEATURE_COUNT] = Default::default();
        for (f, bits) in dirty_bits.iter_mut().enumerate() {
            bits.resize((all_thresholds[f].len() + 1) * words, 0);
        }
        for (tree_idx, &(lo, hi, _)) in spans.iter().enumerate() {
            let (word, bit) = (tree_idx / 64, 1u64 << (tree_idx % 64));
            for step in &steps[lo as usize..hi as usize] {
                let f = step.feature as usize;
                let n_ranks = all_thresholds[f].len() + 1;
                let i = step.rank as usize;
                let ranks = if step.x_left {
                    (i + 1)..n_ranks
                } else {
                    0..(i + 1)
                };
                for r in ranks {
                    dirty_bits[f][r * words + word] |= bit;
                }
            }
        }

        // collapse background points into forest cells
        let mut cells: Vec<([u16; FEATURE_COUNT], [f64; FEATURE_COUNT], f64)> =
            Vec::with_capacity(weighted_background.len());
        'points: for (b, count) in weighted_background {
            let mut key = [0u16; FEATURE_COUNT];
            for (f, slot) in key.iter_mut().enumerate() {
                *slot = all_thresholds[f].partition_point(|&t| t <= b[f]) as u16;
            }
            for (k, _, c) in cells.iter_mut() {
                if *k == key {
                    *c += count;
                    continue 'points;
                }
            }
            cells.push((key, *b, *count));
        }

        let lr = self.config.learning_rate;
        let mut v = [0.0f64; N_COALITIONS];
        let mut dirty_words: Vec<u64> = vec![0; words];

        GROUP_SCRATCH.with(|cell| {
            let mut groups = cell.borrow_mut();
            for (key, b, count) in &cells {
                for (w, slot) in dirty_words.iter_mut().enumerate() {
                    *slot = (0..FEATURE_COUNT)
                        .map(|f| dirty_bits[f][key[f] as usize * words + w])
                        .fold(0, |acc, bits| acc | bits);
                }

                groups.clear();
                let mut shared = clean_sum;
                let mut diverging = 0usize;
                for (w, &word_bits) in dirty_words.iter().enumerate() {
                    let mut bits = word_bits;
                    while bits != 0 {
                        let tree_idx = w * 64 + bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        let (lo, hi, x_leaf) = spans[tree_idx];
                        shared -= x_leaf; // replaced by the walked contribution
                        let nodes = self.trees()[tree_idx].nodes();
                        let mut mask_set = u32::MAX;
                        for step in &steps[lo as usize..hi as usize] {
                            let f = step.feature as usize;
                            let disagrees = if step.x_left {
                                key[f] > step.rank
                            } else {
                                key[f] <= step.rank
                            };
                            if !disagrees {
                                continue;
                            }
                            diverging |= 1 << f;
                            let with_feature = mask_set & coalition_masks_with(f);
                            let without_feature = mask_set & !with_feature;
                            let b_next = match &nodes[step.node as usize] {
                                TreeNode::Split { left, right, .. } => {
                                    if step.x_left {
                                        *right
                                    } else {
                                        *left
                                    }
                                }
                                TreeNode::Leaf { .. } => unreachable!("path steps are splits"),
                            };
                            // shallow siblings usually end right here
                            if let TreeNode::Leaf { value } = &nodes[b_next] {
                                push_group(&mut groups, without_feature, *value);
                            } else {
                                descend(
                                    nodes,
                                    b_next,
                                    without_feature,
                                    x,
                                    b,
                                    &mut shared,
                                    &mut groups,
                                    &mut diverging,
                                );
                            }
                            mask_set = with_feature;
                        }
                        // the with-feature remainder finishes on x's leaf
                        push_group(&mut groups, mask_set, x_leaf);
                    }
                }
                let probability_of = |mask: usize| {
                    let mut sum = shared;
                    for &(set, value) in groups.iter() {
                        if set & (1u32 << mask) != 0 {
                            sum += value;
                        }
                    }
                    crate::gbt::clamp_probability(crate::gbt::sigmoid(self.base_score + lr * sum))
                };
                if diverging == 0 {
                    let p = probability_of(0);
                    for acc in v.iter_mut() {
                        *acc += count * p;
                    }
                } else {
                    let mut cache = [f64::NAN; N_COALITIONS];
                    for (mask, acc) in v.iter_mut().enumerate() {
                        let key = mask & diverging;
                        if cache[key].is_nan() {
                            cache[key] = probability_of(key);
                        }
                        *acc += count * cache[key];
                    }
                }
            }
        });
        for acc in v.iter_mut() {
            *acc /= total;
        }
        v
    }
}

thread_local! {
    static GROUP_SCRATCH: std::cell::RefCell<Vec<(u32, f64)>> =
        std::cell::RefCell::new(Vec::with_capacity(256));
}

fn finish_coalitions(
    model: &BoostedTreeModel,
    shared: f64,
    groups: &[(u32, f64)],
    diverging: usize,
) -> [f64; N_COALITIONS] {
    let lr = model.config.learning_rate;
    let probability_of = |mask: usize| {
        let mut sum = shared;
        for &(set, value) in groups {
            if set & (1u32 << mask) != 0 {
                sum += value;
            }
        }
        crate::gbt::clamp_probability(crate::gbt::sigmoid(model.base_score + lr * sum))
    };
    let mut out = [0.0; N_COALITIONS];
    if diverging == 0 {
        let p = probability_of(0);
        out.fill(p);
        return out;
    }
    // one sigmoid per distinct key mask ∩ diverging
    let mut cache = [f64::NAN; N_COALITIONS];
    for (mask, slot) in out.iter_mut().enumerate() {
        let key = mask & diverging;
        if cache[key].is_nan() {
            cache[key] = probability_of(key);
        }
        *slot = cache[key];
    }
    out
}

impl BoostedTreeModel {
    /// Distinct split thresholds per feature over the whole forest, sorted.
    fn forest_thresholds(&self) -> [Vec<f64>; FEATURE_COUNT] {
        let mut thresholds: [Vec<f64>; FEATURE_COUNT] = Default::default();
        for tree in self.trees() {
            for node in tree.nodes() {
                if let TreeNode::Split {
                    feature, threshold, ..
                } = node
                {
                    thresholds[*feature].push(*threshold);
                }
            }
        }
        for list in thresholds.iter_mut() {
            list.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            list.dedup();
        }
        thresholds
    }
}

/// Accumulate a leaf value under its mask-set. Divergences repeat the
/// same few mask patterns across trees, so find-or-add over the compact
/// list beats collecting and sorting the raw events.
fn push_group(groups: &mut Vec<(u32, f64)>, mask_set: u32, value: f64) {
    for (set, sum) in groups.iter_mut() {
        if *set == mask_set {
            *sum += value;
            return;
        }
    }
    groups.push((mask_set, value));
}

/// Walk one tree for a set of coalition masks at once. `mask_set` is a
/// bitset over the 32 masks still following this branch. Leaves reached
/// with the full set fold into `shared`; the rest are recorded per group.
/// The straight-line (non-diverging) path is iterative; recursion happens
/// only where the paths of `x` and `background` actually split.
#[allow(clippy::too_many_arguments)]
fn descend(
    nodes: &[TreeNode],
    mut at: usize,
    mut mask_set: u32,
    x: &[f64; FEATURE_COUNT],
    background: &[f64; FEATURE_COUNT],
    shared: &mut f64,
    groups: &mut Vec<(u32, f64)>,
    diverging: &mut usize,
) {
    loop {
        match &nodes[at] {
            TreeNode::Leaf { value } => {
                if mask_set == u32::MAX {
                    *shared += value;
                } else {
                    push_group(groups, mask_set, *value);
                }
                return;
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let x_left = x[*feature] < *threshold;
                let b_left = background[*feature] < *threshold;
                if x_left == b_left {
                    at = if x_left { *left } else { *right };
                    continue;
                }
                *diverging |= 1 << *feature;
                let with_feature = mask_set & coalition_masks_with(*feature);
                let without_feature = mask_set & !coalition_masks_with(*feature);
                let (x_next, b_next) = if x_left {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                if without_feature != 0 {
                    descend(
                        nodes,
                        b_next,
                        without_feature,
                        x,
                        background,
                        shared,
                        groups,
                        diverging,
                    );
                }
                if with_feature == 0 {
                    return;
                }
                at = x_next;
                mask_set = with_feature;
            }
        }
    }
}

/// Bitset over the 32 coalition masks selecting those containing each
/// feature, built once at compile time.
const MASKS_WITH: [u32; FEATURE_COUNT] = {
    let mut table = [0u32; FEATURE_COUNT];
    let mut f = 0;
    while f < FEATURE_COUNT {
        let mut mask = 0;
        while mask < N_COALITIONS {
            if mask & (1 << f) != 0 {
                table[f] |= 1 << mask;
            }
            mask += 1;
        }
        f += 1;
    }
    table
};

fn coalition_masks_with(feature: usize) -> u32 {
    MASKS_WITH[feature]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributionMethod {
    Lime,
    Shapley,
    Gradient,
}

impl AttributionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethod::Lime => "lime",
            AttributionMethod::Shapley => "shapley",
            AttributionMethod::Gradient => "gradient",
        }
    }
}

/// Per-feature attribution scores. Positive values push toward the trojan
/// class. The baseline is method-specific: v(∅) for Shapley, f(x) for
/// gradient, the surrogate intercept for the local surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub method: AttributionMethod,
    pub values: [f64; FEATURE_COUNT],
    pub baseline: f64,
}

/// Sampling parameters shared by the perturbation explainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub background_size: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            n_samples: 1000,
            kernel_width: 0.75 * (FEATURE_COUNT as f64).sqrt(),
            seed: 42,
            epsilon: 0.01,
            background_size: 100,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.n_samples < 10 {
            return Err(AttributionError::InvalidConfig(
                "n_samples must be >= 10".into(),
            ));
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return Err(AttributionError::InvalidConfig(
                "epsilon must be > 0".into(),
            ));
        }
        if self.kernel_width <= 0.0 || self.kernel_width.is_nan() {
            return Err(AttributionError::InvalidConfig(
                "kernel_width must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature empirical pools and moments of a training set; the sampling
/// basis for the local surrogate.
#[derive(Debug, Clone)]
pub struct TrainStats {
    pools: Vec<Vec<f64>>,
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl TrainStats {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, AttributionError> {
        if dataset.is_empty() {
            return Err(AttributionError::EmptyTrainStats);
        }
        let n = dataset.len() as f64;
        let mut pools: Vec<Vec<f64>> = (0..FEATURE_COUNT)
            .map(|_| Vec::with_capacity(dataset.len()))
            .collect();
        for s in dataset.samples() {
            let arr = s.features.as_array();
            for (f, pool) in pools.iter_mut().enumerate() {
                pool.push(arr[f]);
            }
        }
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [0.0; FEATURE_COUNT];
        for f in 0..FEATURE_COUNT {
            mean[f] = pools[f].iter().sum::<f64>() / n;
            let var = pools[f].iter().map(|v| (v - mean[f]).powi(2)).sum::<f64>() / n;
            std[f] = var.sqrt();
        }
        Ok(TrainStats { pools, mean, std })
    }

    fn standardize(&self, x: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let mut z = [0.0; FEATURE_COUNT];
        for f in 0..FEATURE_COUNT {
            z[f] = if self.std[f] > 0.0 {
                (x[f] - self.mean[f]) / self.std[f]
            } else {
                0.0
            };
        }
        z
    }

    /// Seeded background subsample (without replacement) for the Shapley
    /// value function.
    pub fn background_sample(
        dataset: &Dataset,
        size: usize,
        seed: u64,
    ) -> Vec<[f64; FEATURE_COUNT]> {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..dataset.len()).collect();
        indices.shuffle(&mut rng);
        indices
            .into_iter()
            .take(size.max(1).min(dataset.len()))
            .map(|i| dataset.samples()[i].features.as_array())
            .collect()
    }
}

/// Result of a surrogate fit; `used_ridge` reports the singular-matrix
/// fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeResult {
    pub attribution: AttributionVector,
    pub used_ridge: bool,
}

/// Local surrogate: draw perturbations from the per-feature empirical
/// pools, weight them by exponential kernel over standardized distance,
/// and fit weighted least squares of the model probability on the
/// standardized features. Coefficients are the attribution values; the
/// intercept is the baseline.
pub fn lime_explain(
    model: &dyn ProbabilityModel,
    x: &[f64; FEATURE_COUNT],
    stats: &TrainStats,
    cfg: &PerturbationConfig,
) -> Result<LimeResult, AttributionError> {
    cfg.validate()?;
    if stats.pools[0].is_empty() {
        return Err(AttributionError::EmptyTrainStats);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zx = stats.standardize(x);

    let k = FEATURE_COUNT + 1; // intercept + features
    let mut xtwx = vec![vec![0.0f64; k]; k];
    let mut xtwy = vec![0.0f64; k];

    for _ in 0..cfg.n_samples {
        let mut sample = [0.0; FEATURE_COUNT];
        for (f, slot) in sample.iter_mut().enumerate() {
            let pool = &stats.pools[f];
            *slot = pool[rng.gen_range(0..pool.len())];
        }
        let y = model.probability(&sample);
        let zs = stats.standardize(&sample);
        let d2: f64 = zs.iter().zip(zx.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let w = (-d2 / (cfg.kernel_width * cfg.kernel_width)).exp();

        let mut row = [0.0; 6];
        row[0] = 1.0;
        row[1..].copy_from_slice(&zs);
        for i in 0..k {
            for j in 0..k {
                xtwx[i][j] += w * row[i] * row[j];
            }
            xtwy[i] += w * row[i] * y;
        }
    }

    let (beta, used_ridge) = match solve_linear(&xtwx, &xtwy) {
        Some(beta) => (beta, false),
        None => {
            log::warn!("surrogate normal equations singular; retrying with ridge 1e-6");
            let mut ridged = xtwx.clone();
            for (i, row) in ridged.iter_mut().enumerate() {
                row[i] += 1e-6;
            }
            let beta = solve_linear(&ridged, &xtwy).ok_or_else(|| {
                AttributionError::InvalidConfig("surrogate fit singular even with ridge".into())
            })?;
            (beta, true)
        }
    };

    let mut values = [0.0; FEATURE_COUNT];
    values.copy_from_slice(&beta[1..]);
    Ok(LimeResult {
        attribution: AttributionVector {
            method: AttributionMethod::Lime,
            values,
            baseline: beta[0],
        },
        used_ridge,
    })
}

/// Gaussian elimination with partial pivoting; `None` when a pivot
/// degenerates.
fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            let (pivot_rows, rest) = m.split_at_mut(row);
            let pivot = &pivot_rows[col];
            for (c, cell) in rest[0].iter_mut().enumerate().skip(col) {
                *cell -= factor * pivot[c];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in (row + 1)..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// A background set prepared for repeated Shapley queries: duplicate
/// points collapse to weighted unique rows (the mean is unchanged).
#[derive(Debug, Clone)]
pub struct ShapleyBackground {
    weighted: Vec<([f64; FEATURE_COUNT], f64)>,
    total: f64,
}

impl ShapleyBackground {
    pub fn prepare(background: &[[f64; FEATURE_COUNT]]) -> Result<Self, AttributionError> {
        if background.is_empty() {
            return Err(AttributionError::EmptyBackground);
        }
        let mut sorted: Vec<&[f64; FEATURE_COUNT]> = background.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("feature values are finite"));
        let mut weighted: Vec<([f64; FEATURE_COUNT], f64)> = Vec::with_capacity(sorted.len());
        for b in sorted {
            match weighted.last_mut() {
                Some((u, count)) if u == b => *count += 1.0,
                _ => weighted.push((*b, 1.0)),
            }
        }
        Ok(ShapleyBackground {
            weighted,
            total: background.len() as f64,
        })
    }

    /// Prepare against a specific model, letting it merge background
    /// points it cannot distinguish. Exact: merged points produce
    /// identical model behavior by construction.
    pub fn prepare_for(
        model: &dyn ProbabilityModel,
        background: &[[f64; FEATURE_COUNT]],
    ) -> Result<Self, AttributionError> {
        let prepared = Self::prepare(background)?;
        Ok(ShapleyBackground {
            weighted: model.collapse_background(prepared.weighted),
            total: prepared.total,
        })
    }

    pub fn unique_len(&self) -> usize {
        self.weighted.len()
    }
}

/// Exact Shapley values over all 2^5 coalitions with an interventional
/// value function: v(S) is the mean model output with coalition features
/// taken from `x` and the rest from each background point. The baseline is
/// v(∅); local accuracy Σφ = f(x) − v(∅) holds by telescoping.
pub fn shapley_explain(
    model: &dyn ProbabilityModel,
    x: &[f64; FEATURE_COUNT],
    background: &[[f64; FEATURE_COUNT]],
) -> Result<AttributionVector, AttributionError> {
    let prepared = ShapleyBackground::prepare(background)?;
    Ok(shapley_explain_prepared(model, x, &prepared))
}

/// `shapley_explain` against a background prepared once; the fast path for
/// explaining many samples.
pub fn shapley_explain_prepared(
    model: &dyn ProbabilityModel,
    x: &[f64; FEATURE_COUNT],
    background: &ShapleyBackground,
) -> AttributionVector {
    let v = model.coalition_mean(x, &background.weighted, background.total);

    // φ_i = Σ_{S ⊆ F\{i}} |S|!(|F|−|S|−1)!/|F|! (v(S∪{i}) − v(S))
    const FACT: [f64; 6] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];
    let mut values = [0.0; FEATURE_COUNT];
    for (i, value) in values.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..N_COALITIONS {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = FACT[s] * FACT[FEATURE_COUNT - s - 1] / FACT[FEATURE_COUNT];
            *value += weight * (v[mask | bit] - v[mask]);
        }
    }
    AttributionVector {
        method: AttributionMethod::Shapley,
        values,
        baseline: v[0],
    }
}

/// Forward-difference gradient: g_i = (f(x + ε·e_i) − f(x)) / ε. The
/// baseline is f(x).
pub fn gradient_explain(
    model: &dyn ProbabilityModel,
    x: &[f64; FEATURE_COUNT],
    epsilon: f64,
) -> Result<AttributionVector, AttributionError> {
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(AttributionError::InvalidConfig(
            "epsilon must be > 0".into(),
        ));
    }
    let fx = model.probability(x);
    let mut values = [0.0; FEATURE_COUNT];
    for (i, value) in values.iter_mut().enumerate() {
        let mut bumped = *x;
        bumped[i] += epsilon;
        *value = (model.probability(&bumped) - fx) / epsilon;
    }
    Ok(AttributionVector {
        method: AttributionMethod::Gradient,
        values,
        baseline: fx,
    })
}

/// Feature names ordered by descending |attribution|, ties by feature
/// index.
pub fn rank_features(attr: &AttributionVector) -> [&'static str; FEATURE_COUNT] {
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    order.sort_by(|&a, &b| {
        attr.values[b]
            .abs()
            .partial_cmp(&attr.values[a].abs())
            .expect("attributions are finite")
            .then_with(|| a.cmp(&b))
    });
    let mut out = [""; FEATURE_COUNT];
    for (slot, &f) in out.iter_mut().zip(order.iter()) {
        *slot = FEATURE_NAMES[f];
    }
    out
}
