//! Evaluation statistics: confusion-matrix metrics, threshold sweeps,
//! bootstrap confidence intervals, McNemar and Spearman tests, effect
//! sizes, and Bonferroni correction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("prediction and label lists have different lengths ({0} vs {1})")]
    MismatchedLengths(usize, usize),
    #[error("input is constant; rank correlation is undefined")]
    ConstantInput,
    #[error("groups have zero pooled variance; effect size undefined")]
    ZeroVariance,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[u8], labels: &[u8]) -> Result<Self, StatsError> {
        if preds.len() != labels.len() {
            return Err(StatsError::MismatchedLengths(preds.len(), labels.len()));
        }
        let mut cm = ConfusionMatrix {
            true_pos: 0,
            false_pos: 0,
            true_neg: 0,
            false_neg: 0,
        };
        for (&p, &y) in preds.iter().zip(labels) {
            match (p, y) {
                (1, 1) => cm.true_pos += 1,
                (1, 0) => cm.false_pos += 1,
                (0, 0) => cm.true_neg += 1,
                _ => cm.false_neg += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Which denominators were zero; the corresponding metric is reported as
/// 0 instead of NaN so reports always render.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub fpr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub accuracy: f64,
    pub undefined: UndefinedFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Exact metric evaluation from counts.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let (precision, p_undef) = ratio(cm.true_pos, cm.true_pos + cm.false_pos);
    let (recall, r_undef) = ratio(cm.true_pos, cm.true_pos + cm.false_neg);
    let (fpr, fpr_undef) = ratio(cm.false_pos, cm.false_pos + cm.true_neg);
    let f1_den = precision + recall;
    let (f1, f1_undef) = if p_undef || r_undef || f1_den == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / f1_den, false)
    };
    let accuracy = if cm.total() == 0 {
        0.0
    } else {
        (cm.true_pos + cm.true_neg) as f64 / cm.total() as f64
    };
    MetricsReport {
        precision,
        recall,
        f1,
        fpr,
        accuracy,
        undefined: UndefinedFlags {
            precision: p_undef,
            recall: r_undef,
            f1: f1_undef,
            fpr: fpr_undef,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Evaluate every distinct predicted probability plus 0.5 and 0.99 as a
/// classification threshold; the best threshold maximizes F1, ties going
/// to the lower threshold.
pub fn threshold_sweep(probas: &[f64], labels: &[u8]) -> Result<(f64, Vec<SweepRow>), StatsError> {
    if probas.len() != labels.len() {
        return Err(StatsError::MismatchedLengths(probas.len(), labels.len()));
    }
    if probas.is_empty() {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    let mut candidates: Vec<f64> = probas.to_vec();
    candidates.push(0.5);
    candidates.push(0.99);
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("probabilities are finite"));
    candidates.dedup();

    let mut rows = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64)> = None; // (f1, threshold)
    for &threshold in &candidates {
        let preds: Vec<u8> = probas.iter().map(|&p| u8::from(p >= threshold)).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, labels)?;
        let report = metrics(&cm);
        // strictly-greater comparison keeps the lowest threshold on ties
        if best.is_none_or(|(f1, _)| report.f1 > f1) {
            best = Some((report.f1, threshold));
        }
        rows.push(SweepRow {
            threshold,
            confusion: cm,
            metrics: report,
        });
    }
    Ok((best.expect("candidates nonempty").1, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
    F1,
    Fpr,
}

impl MetricKind {
    /// None when the metric's denominator is zero for this matrix.
    fn evaluate(&self, cm: &ConfusionMatrix) -> Option<f64> {
        let report = metrics(cm);
        let (value, undefined) = match self {
            MetricKind::Accuracy => (report.accuracy, cm.total() == 0),
            MetricKind::Precision => (report.precision, report.undefined.precision),
            MetricKind::Recall => (report.recall, report.undefined.recall),
            MetricKind::F1 => (report.f1, report.undefined.f1),
            MetricKind::Fpr => (report.fpr, report.undefined.fpr),
        };
        (!undefined).then_some(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    /// Resamples where the metric was undefined, excluded from the
    /// percentiles.
    pub excluded: usize,
}

/// Percentile bootstrap over (prediction, label) pairs. Iteration `i`
/// draws with its own generator seeded `seed + i`, so results are
/// independent of iteration order.
pub fn bootstrap_ci(
    preds: &[u8],
    labels: &[u8],
    metric: MetricKind,
    n_iter: usize,
    seed: u64,
) -> Result<BootstrapCi, StatsError> {
    if preds.len() != labels.len() {
        return Err(StatsError::MismatchedLengths(preds.len(), labels.len()));
    }
    if n_iter < 100 {
        return Err(StatsError::InvalidParameter(format!(
            "bootstrap needs >= 100 iterations, got {n_iter}"
        )));
    }
    let n = preds.len();
    if n == 0 {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    let mut kept = Vec::with_capacity(n_iter);
    let mut excluded = 0usize;
    for i in 0..n_iter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut cm = ConfusionMatrix {
            true_pos: 0,
            false_pos: 0,
            true_neg: 0,
            false_neg: 0,
        };
        for _ in 0..n {
            let j = rng.gen_range(0..n);
            match (preds[j], labels[j]) {
                (1, 1) => cm.true_pos += 1,
                (1, 0) => cm.false_pos += 1,
                (0, 0) => cm.true_neg += 1,
                _ => cm.false_neg += 1,
            }
        }
        match metric.evaluate(&cm) {
            Some(v) => kept.push(v),
            None => excluded += 1,
        }
    }
    if kept.is_empty() {
        return Err(StatsError::InvalidParameter(
            "metric undefined in every bootstrap resample".into(),
        ));
    }
    kept.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    Ok(BootstrapCi {
        lo: percentile(&kept, 2.5),
        hi: percentile(&kept, 97.5),
        excluded,
    })
}

/// Linear-interpolation percentile over a sorted slice.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub statistic: f64,
    pub p_value: f64,
    /// a correct, b wrong
    pub b: u64,
    /// a wrong, b correct
    pub c: u64,
}

/// McNemar's test on paired predictions. With continuity correction the
/// statistic is (|b−c|−1)²/(b+c), clamped at zero; without, (b−c)²/(b+c).
/// b + c = 0 yields (0, 1.0).
pub fn mcnemar(
    preds_a: &[u8],
    preds_b: &[u8],
    labels: &[u8],
    continuity_correction: bool,
) -> Result<McNemarResult, StatsError> {
    if preds_a.len() != labels.len() {
        return Err(StatsError::MismatchedLengths(preds_a.len(), labels.len()));
    }
    if preds_b.len() != labels.len() {
        return Err(StatsError::MismatchedLengths(preds_b.len(), labels.len()));
    }
    let mut b = 0u64;
    let mut c = 0u64;
    for i in 0..labels.len() {
        let a_correct = preds_a[i] == labels[i];
        let b_correct = preds_b[i] == labels[i];
        match (a_correct, b_correct) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    if b + c == 0 {
        return Ok(McNemarResult {
            statistic: 0.0,
            p_value: 1.0,
            b,
            c,
        });
    }
    let diff = (b as f64 - c as f64).abs();
    let numerator = if continuity_correction {
        (diff - 1.0).max(0.0).powi(2)
    } else {
        diff.powi(2)
    };
    let statistic = numerator / (b + c) as f64;
    let chi2 = ChiSquared::new(1.0).expect("df 1 is valid");
    let p_value = (1.0 - chi2.cdf(statistic)).clamp(0.0, 1.0);
    Ok(McNemarResult {
        statistic,
        p_value,
        b,
        c,
    })
}

/// Average ranks with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("values are finite")
    });
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank ties; p-value from the
/// t approximation with n−2 degrees of freedom.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::MismatchedLengths(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: n });
    }
    let constant = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    if constant(xs) || constant(ys) {
        return Err(StatsError::ConstantInput);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    let rho = cov / (vx.sqrt() * vy.sqrt());
    let rho = rho.clamp(-1.0, 1.0);

    let df = (n - 2) as f64;
    let p_value = if 1.0 - rho * rho < 1e-15 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok((rho, p_value))
}

/// Cohen's d with pooled standard deviation.
pub fn cohens_d(group_a: &[f64], group_b: &[f64]) -> Result<f64, StatsError> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            got: group_a.len().min(group_b.len()),
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ma = mean(group_a);
    let mb = mean(group_b);
    let ssq = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let na = group_a.len() as f64;
    let nb = group_b.len() as f64;
    let pooled_var = (ssq(group_a, ma) + ssq(group_b, mb)) / (na + nb - 2.0);
    if pooled_var <= 0.0 {
        if ma == mb {
            return Ok(0.0); // identical groups: no effect, even with zero spread
        }
        return Err(StatsError::ZeroVariance);
    }
    Ok((ma - mb) / pooled_var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub value: f64,
    /// True when the Haldane +0.5 correction was applied to a zero cell.
    pub haldane_corrected: bool,
}

/// Odds ratio of correct classification between two confusion matrices,
/// with the Haldane correction (+0.5 to every cell) when any cell is zero.
pub fn odds_ratio(cm_a: &ConfusionMatrix, cm_b: &ConfusionMatrix) -> OddsRatio {
    let correct_a = (cm_a.true_pos + cm_a.true_neg) as f64;
    let wrong_a = (cm_a.false_pos + cm_a.false_neg) as f64;
    let correct_b = (cm_b.true_pos + cm_b.true_neg) as f64;
    let wrong_b = (cm_b.false_pos + cm_b.false_neg) as f64;
    let needs_correction = correct_a == 0.0 || wrong_a == 0.0 || correct_b == 0.0 || wrong_b == 0.0;
    let (ca, wa, cb, wb) = if needs_correction {
        (
            correct_a + 0.5,
            wrong_a + 0.5,
            correct_b + 0.5,
            wrong_b + 0.5,
        )
    } else {
        (correct_a, wrong_a, correct_b, wrong_b)
    };
    OddsRatio {
        value: (ca / wa) / (cb / wb),
        haldane_corrected: needs_correction,
    }
}

/// Fold change from `from` to `to` (e.g. a false-positive rate dropping
/// from 5.6% to 0.25% is a ~22.4-fold reduction).
pub fn fold_change(from: f64, to: f64) -> Result<f64, StatsError> {
    if to == 0.0 {
        return Err(StatsError::InvalidParameter(
            "fold change against zero is undefined".into(),
        ));
    }
    Ok(from / to)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonferroniResult {
    pub threshold: f64,
    /// Reject (significant) per test: p <= alpha / k.
    pub reject: Vec<bool>,
}

pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<BonferroniResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidParameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if p_values.is_empty() {
        return Err(StatsError::TooFewObservations { needed: 1, got: 0 });
    }
    let threshold = alpha / p_values.len() as f64;
    Ok(BonferroniResult {
        threshold,
        reject: p_values.iter().map(|&p| p <= threshold).collect(),
    })
}
