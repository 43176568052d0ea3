//! Case-based explanation: exact k-nearest-neighbor retrieval over the
//! training set with distance-weighted correspondence scoring and full
//! provenance, explaining predictions through concrete precedents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Provenance};
use crate::features::FeatureVector;
use crate::FEATURE_COUNT;

/// Correspondence below this value flags a prediction for manual review.
pub const DEFAULT_REVIEW_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot build a case index from an empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone)]
struct CasePoint {
    point: [f64; FEATURE_COUNT],
    label: u8,
    provenance: Provenance,
}

/// Exact index over the training samples. Queries are a linear scan;
/// distance is Euclidean over raw feature values, optionally standardized
/// per feature.
#[derive(Debug, Clone)]
pub struct CaseIndex {
    points: Vec<CasePoint>,
    scale: Option<[(f64, f64); FEATURE_COUNT]>, // (mean, std) when standardizing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: f64,
    pub label: u8,
    pub circuit: String,
    pub net: String,
    pub line: u32,
}

/// Neighbors sorted by distance ascending; ties keep insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceScore {
    /// C(c) for the predicted class, in [0, 1].
    pub value: f64,
    /// w(c) per class (benign, trojan).
    pub per_class_weights: [f64; 2],
}

impl CaseIndex {
    pub fn build(train: &Dataset) -> Result<Self, CaseError> {
        Self::build_inner(train, false)
    }

    /// Standardize each feature to zero mean and unit variance before
    /// measuring distance.
    pub fn build_standardized(train: &Dataset) -> Result<Self, CaseError> {
        Self::build_inner(train, true)
    }

    fn build_inner(train: &Dataset, standardize: bool) -> Result<Self, CaseError> {
        if train.is_empty() {
            return Err(CaseError::EmptyDataset);
        }
        let points: Vec<CasePoint> = train
            .samples()
            .iter()
            .map(|s| CasePoint {
                point: s.features.as_array(),
                label: s.label,
                provenance: s.provenance.clone(),
            })
            .collect();
        let scale = standardize.then(|| {
            let n = points.len() as f64;
            let mut out = [(0.0, 0.0); FEATURE_COUNT];
            for (f, slot) in out.iter_mut().enumerate() {
                let mean = points.iter().map(|p| p.point[f]).sum::<f64>() / n;
                let var = points
                    .iter()
                    .map(|p| (p.point[f] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                *slot = (mean, var.sqrt());
            }
            out
        });
        Ok(CaseIndex { points, scale })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn distance(&self, a: &[f64; FEATURE_COUNT], b: &[f64; FEATURE_COUNT]) -> f64 {
        let mut acc = 0.0;
        match &self.scale {
            None => {
                for f in 0..FEATURE_COUNT {
                    acc += (a[f] - b[f]).powi(2);
                }
            }
            Some(scale) => {
                for f in 0..FEATURE_COUNT {
                    let (mean, std) = scale[f];
                    if std > 0.0 {
                        let za = (a[f] - mean) / std;
                        let zb = (b[f] - mean) / std;
                        acc += (za - zb).powi(2);
                    }
                }
            }
        }
        acc.sqrt()
    }

    /// The k nearest neighbors of `query` (all points when k exceeds the
    /// index size). Exact: equivalent to sorting every distance.
    pub fn knn(&self, query: &FeatureVector, k: usize) -> NeighborSet {
        assert!(k >= 1, "k must be >= 1");
        let q = query.as_array();
        // (distance, insertion index) with stable tie-breaking
        let mut scored: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.distance(&q, &p.point), i))
            .collect();
        let take = k.min(scored.len());
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distances are finite")
                .then_with(|| a.1.cmp(&b.1))
        });
        let neighbors = scored[..take]
            .iter()
            .map(|&(distance, i)| {
                let p = &self.points[i];
                Neighbor {
                    distance,
                    label: p.label,
                    circuit: p.provenance.circuit.clone(),
                    net: p.provenance.net.clone(),
                    line: p.provenance.line,
                }
            })
            .collect();
        NeighborSet { neighbors }
    }
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Unweighted majority vote over neighbor labels; ties go to benign.
    pub fn majority_class(&self) -> u8 {
        let trojans = self.neighbors.iter().filter(|n| n.label == 1).count();
        u8::from(2 * trojans > self.neighbors.len())
    }
}

/// Distance-weighted correspondence: w(c) = Σ 1/(d_i + 1)^2 over the
/// neighbors of class c, C(c) = w(c) / Σ_j w(j). Every term is strictly
/// positive, so the normalization is always defined and Σ_c C(c) = 1.
pub fn correspondence(neighbors: &NeighborSet, predicted_class: u8) -> CorrespondenceScore {
    let mut weights = [0.0f64; 2];
    for n in &neighbors.neighbors {
        weights[n.label as usize] += 1.0 / (n.distance + 1.0).powi(2);
    }
    let total: f64 = weights[0] + weights[1];
    CorrespondenceScore {
        value: if total > 0.0 {
            weights[predicted_class as usize] / total
        } else {
            0.0
        },
        per_class_weights: weights,
    }
}

/// A case-based explanation record: the prediction, its correspondence
/// against retrieved precedents, and each neighbor with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseExplanation {
    pub prediction: u8,
    /// Classifier probability when the prediction came from a model
    /// (hybrid mode); None in pure majority-vote mode.
    pub probability: Option<f64>,
    pub correspondence: f64,
    pub per_class_weights: [f64; 2],
    pub needs_review: bool,
    pub neighbors: Vec<Neighbor>,
}

pub fn explain_case(
    prediction: u8,
    probability: Option<f64>,
    neighbors: &NeighborSet,
    score: &CorrespondenceScore,
    review_threshold: f64,
) -> CaseExplanation {
    CaseExplanation {
        prediction,
        probability,
        correspondence: score.value,
        per_class_weights: score.per_class_weights,
        needs_review: score.value < review_threshold,
        neighbors: neighbors.neighbors.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn fv(values: [u32; 5]) -> FeatureVector {
        FeatureVector {
            lgfi: values[0],
            ffi: values[1],
            ffo: values[2],
            pi: values[3],
            po: values[4],
        }
    }

    fn dataset_from(points: &[([u32; 5], u8)]) -> Dataset {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, (p, label))| LabeledSample {
                features: fv(*p),
                label: *label,
                provenance: Provenance {
                    circuit: "c".into(),
                    net: format!("n{i}"),
                    line: i as u32 + 1,
                },
            })
            .collect();
        Dataset::new(samples, BTreeMap::new())
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let ds = Dataset::new(Vec::new(), BTreeMap::new());
        assert!(matches!(
            CaseIndex::build(&ds),
            Err(CaseError::EmptyDataset)
        ));
    }

    #[test]
    fn single_point_index_always_returns_it() {
        let ds = dataset_from(&[([1, 2, 3, 4, 5], 1)]);
        let index = CaseIndex::build(&ds).unwrap();
        assert_eq!(index.len(), 1);
        let ns = index.knn(&fv([9, 9, 9, 9, 9]), 5);
        assert_eq!(ns.len(), 1);
        assert_eq!(ns.neighbors[0].net, "n0");
    }

    #[test]
    fn exact_match_has_distance_zero_and_comes_first() {
        let ds = dataset_from(&[([5, 5, 5, 5, 5], 0), ([1, 1, 1, 1, 1], 1)]);
        let index = CaseIndex::build(&ds).unwrap();
        let ns = index.knn(&fv([1, 1, 1, 1, 1]), 2);
        assert_eq!(ns.neighbors[0].distance, 0.0);
        assert_eq!(ns.neighbors[0].label, 1);
    }

    #[test]
    fn knn_matches_hand_sorted_distances() {
        // crafted 10-point set; query at the origin
        let pts: Vec<([u32; 5], u8)> = (0..10)
            .map(|i| {
                let v = [i, 0, 0, 0, 0];
                (v, (i % 2) as u8)
            })
            .collect();
        let ds = dataset_from(&pts);
        let index = CaseIndex::build(&ds).unwrap();
        let ns = index.knn(&fv([0, 0, 0, 0, 0]), 5);
        let got: Vec<f64> = ns.neighbors.iter().map(|n| n.distance).collect();
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let ds = dataset_from(&[([2, 0, 0, 0, 0], 0), ([0, 2, 0, 0, 0], 1)]);
        let index = CaseIndex::build(&ds).unwrap();
        let ns = index.knn(&fv([0, 0, 0, 0, 0]), 2);
        assert_eq!(ns.neighbors[0].net, "n0");
        assert_eq!(ns.neighbors[1].net, "n1");
    }

    #[test]
    fn knn_equals_linear_scan_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<([u32; 5], u8)> = (0..500)
            .map(|_| {
                let mut v = [0u32; 5];
                for slot in v.iter_mut() {
                    *slot = rng.gen_range(0..40);
                }
                (v, rng.gen_range(0..2) as u8)
            })
            .collect();
        let ds = dataset_from(&pts);
        let index = CaseIndex::build(&ds).unwrap();
        for _ in 0..200 {
            let mut q = [0u32; 5];
            for slot in q.iter_mut() {
                *slot = rng.gen_range(0..40);
            }
            let query = fv(q);
            let got = index.knn(&query, 7);
            // oracle: full sort of all distances
            let qa = query.as_array();
            let mut all: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, (p, _))| {
                    let pa = fv(*p).as_array();
                    let d2: f64 = qa.iter().zip(pa.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    (d2.sqrt(), i)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for (n, &(d, i)) in got.neighbors.iter().zip(all.iter().take(7)) {
                assert_eq!(n.distance, d);
                assert_eq!(n.net, format!("n{i}"));
            }
        }
    }

    fn neighbor(distance: f64, label: u8) -> Neighbor {
        Neighbor {
            distance,
            label,
            circuit: "c".into(),
            net: "n".into(),
            line: 1,
        }
    }

    #[test]
    fn correspondence_unanimous_is_one() {
        let ns = NeighborSet {
            neighbors: vec![neighbor(0.5, 1), neighbor(1.0, 1), neighbor(2.0, 1)],
        };
        let score = correspondence(&ns, 1);
        assert_relative_eq!(score.value, 1.0);
    }

    #[test]
    fn correspondence_symmetric_split_is_half() {
        let ns = NeighborSet {
            neighbors: vec![neighbor(1.5, 0), neighbor(1.5, 1)],
        };
        let score = correspondence(&ns, 1);
        assert_relative_eq!(score.value, 0.5);
    }

    #[test]
    fn correspondence_matches_direct_equation() {
        // trojan distances [0,1,1,2], benign [2]
        let ns = NeighborSet {
            neighbors: vec![
                neighbor(0.0, 1),
                neighbor(1.0, 1),
                neighbor(1.0, 1),
                neighbor(2.0, 1),
                neighbor(2.0, 0),
            ],
        };
        let score = correspondence(&ns, 1);
        let w_trojan = 1.0 + 0.25 + 0.25 + 1.0 / 9.0;
        let w_benign = 1.0 / 9.0;
        assert_relative_eq!(score.per_class_weights[1], w_trojan, epsilon = 1e-12);
        assert_relative_eq!(score.per_class_weights[0], w_benign, epsilon = 1e-12);
        assert_relative_eq!(
            score.value,
            w_trojan / (w_trojan + w_benign),
            epsilon = 1e-12
        );
        assert_relative_eq!(score.value, 0.9355, epsilon = 1e-4);
    }

    #[test]
    fn correspondence_sums_to_one_over_classes() {
        let ns = NeighborSet {
            neighbors: vec![neighbor(0.3, 0), neighbor(2.5, 1), neighbor(4.0, 0)],
        };
        let c0 = correspondence(&ns, 0).value;
        let c1 = correspondence(&ns, 1).value;
        assert_relative_eq!(c0 + c1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correspondence_is_order_invariant_and_monotone_in_distance() {
        let mut neighbors = vec![
            neighbor(0.0, 1),
            neighbor(1.0, 0),
            neighbor(2.0, 1),
            neighbor(3.0, 0),
        ];
        let a = correspondence(
            &NeighborSet {
                neighbors: neighbors.clone(),
            },
            1,
        );
        neighbors.reverse();
        let b = correspondence(&NeighborSet { neighbors }, 1);
        assert_eq!(a.value, b.value);

        // moving a predicted-class neighbor closer strictly raises C
        let base = NeighborSet {
            neighbors: vec![neighbor(2.0, 1), neighbor(1.0, 0)],
        };
        let closer = NeighborSet {
            neighbors: vec![neighbor(1.0, 1), neighbor(1.0, 0)],
        };
        assert!(correspondence(&closer, 1).value > correspondence(&base, 1).value);
    }

    #[test]
    fn majority_vote_ties_go_benign() {
        let ns = NeighborSet {
            neighbors: vec![neighbor(1.0, 1), neighbor(1.0, 0)],
        };
        assert_eq!(ns.majority_class(), 0);
        let ns = NeighborSet {
            neighbors: vec![neighbor(1.0, 1), neighbor(1.0, 1), neighbor(1.0, 0)],
        };
        assert_eq!(ns.majority_class(), 1);
    }

    #[test]
    fn low_correspondence_sets_review_flag() {
        let ns = NeighborSet {
            neighbors: vec![neighbor(0.0, 0), neighbor(0.0, 1)],
        };
        let score = correspondence(&ns, 1); // 0.5 < 0.70
        let expl = explain_case(1, Some(0.9), &ns, &score, DEFAULT_REVIEW_THRESHOLD);
        assert!(expl.needs_review);
        let ns2 = NeighborSet {
            neighbors: vec![neighbor(0.0, 1), neighbor(3.0, 0)],
        };
        let score2 = correspondence(&ns2, 1);
        let expl2 = explain_case(1, Some(0.9), &ns2, &score2, DEFAULT_REVIEW_THRESHOLD);
        assert!(!expl2.needs_review);
    }

    #[test]
    fn standardized_index_ignores_constant_features() {
        let ds = dataset_from(&[([0, 7, 0, 0, 0], 0), ([10, 7, 0, 0, 0], 1)]);
        let index = CaseIndex::build_standardized(&ds).unwrap();
        let ns = index.knn(&fv([5, 7, 0, 0, 0]), 2);
        // distances depend only on the varying feature
        assert_relative_eq!(ns.neighbors[0].distance, ns.neighbors[1].distance);
    }
}
