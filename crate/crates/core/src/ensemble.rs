//! Property-pattern ensemble: one classifier per nonempty subset of the
//! five features (31 members), votes weighted by per-class effectiveness
//! (precision × accuracy × recall × specificity on a held-out validation
//! slice), with pattern-text explanations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{stratified_split, Dataset, SplitError};
use crate::features::FeatureVector;
use crate::gbt::{train_masked, BoostedTreeModel, ModelError, TrainConfig};
use crate::{FEATURE_COUNT, FEATURE_NAMES};

pub const PROPERTY_COUNT: usize = 31;
pub const ENSEMBLE_SCHEMA: &str = "netspect-ensemble";
pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("invalid validation fraction {0}")]
    InvalidValidationFraction(f64),
    #[error("ensemble schema mismatch: found `{found}` v{found_version}")]
    SchemaVersionMismatch { found: String, found_version: u32 },
    #[error("corrupt ensemble file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Security phrasing per feature, used to render pattern descriptions.
const FEATURE_PHRASES: [&str; FEATURE_COUNT] = [
    "fanin complexity",
    "upstream flip-flop distance",
    "downstream flip-flop distance",
    "input proximity",
    "output proximity",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDescriptor {
    /// 1..=31
    pub id: u8,
    /// Sorted feature indices in the subset.
    pub feature_subset: Vec<usize>,
    pub description: String,
}

impl PropertyDescriptor {
    pub fn mask(&self) -> u8 {
        self.feature_subset.iter().fold(0u8, |m, &f| m | (1 << f))
    }
}

/// All 31 nonempty feature subsets, ordered by subset size then
/// lexicographically by feature indices.
pub fn enumerate_properties() -> Vec<PropertyDescriptor> {
    let mut subsets: Vec<Vec<usize>> = (1u8..32)
        .map(|mask| {
            (0..FEATURE_COUNT)
                .filter(|&f| mask & (1 << f) != 0)
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .enumerate()
        .map(|(i, feature_subset)| {
            let phrases: Vec<&str> = feature_subset.iter().map(|&f| FEATURE_PHRASES[f]).collect();
            let names: Vec<&str> = feature_subset.iter().map(|&f| FEATURE_NAMES[f]).collect();
            let description = format!(
                "{} pattern over {}",
                phrases.join(" combined with "),
                names.join("/")
            );
            PropertyDescriptor {
                id: (i + 1) as u8,
                feature_subset,
                description,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub descriptor: PropertyDescriptor,
    pub model: BoostedTreeModel,
    /// E_PARS per class (benign, trojan), each in [0, 1].
    pub effectiveness: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyEnsemble {
    members: Vec<EnsembleMember>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    schema: String,
    version: u32,
    ensemble: PropertyEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberVote {
    pub property_id: u8,
    pub vote: u8,
    /// The effectiveness weight backing this vote.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub predicted_class: u8,
    /// Summed weights per class (benign, trojan).
    pub per_class_confidence: [f64; 2],
    pub votes: Vec<MemberVote>,
}

/// One rendered winning-class pattern in an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPattern {
    pub property_id: u8,
    pub weight: f64,
    pub description: String,
    /// Pattern text with the sample's actual feature values substituted.
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyExplanation {
    pub predicted_class: u8,
    pub per_class_confidence: [f64; 2],
    /// Winning-class voters, heaviest first.
    pub patterns: Vec<RenderedPattern>,
}

/// Per-class effectiveness E_PARS: the product of precision, accuracy,
/// recall, and specificity computed one-vs-rest; zero-denominator factors
/// evaluate to 0.
pub fn effectiveness(preds: &[u8], labels: &[u8]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (class, slot) in out.iter_mut().enumerate() {
        let class = class as u8;
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut tn = 0.0;
        let mut fn_ = 0.0;
        for (&p, &y) in preds.iter().zip(labels) {
            match (p == class, y == class) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, false) => tn += 1.0,
                (false, true) => fn_ += 1.0,
            }
        }
        let frac = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let precision = frac(tp, tp + fp);
        let accuracy = frac(tp + tn, tp + fp + tn + fn_);
        let recall = frac(tp, tp + fn_);
        let specificity = frac(tn, tn + fp);
        *slot = precision * accuracy * recall * specificity;
    }
    out
}

/// Train the 31 members: each sees only its subset's features; vote
/// weights come from an internal stratified validation slice.
pub fn train_ensemble(
    train: &Dataset,
    config: &TrainConfig,
    validation_fraction: f64,
    seed: u64,
) -> Result<PropertyEnsemble, EnsembleError> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(EnsembleError::InvalidValidationFraction(
            validation_fraction,
        ));
    }
    let (fit, val) = stratified_split(train, validation_fraction, seed)?;
    let val_labels: Vec<u8> = val.samples().iter().map(|s| s.label).collect();

    let mut members = Vec::with_capacity(PROPERTY_COUNT);
    for descriptor in enumerate_properties() {
        let model = train_masked(&fit, config, descriptor.mask())?;
        let preds: Vec<u8> = val
            .samples()
            .iter()
            .map(|s| model.classify(&s.features, 0.5))
            .collect();
        let effectiveness = effectiveness(&preds, &val_labels);
        members.push(EnsembleMember {
            descriptor,
            model,
            effectiveness,
        });
    }
    Ok(PropertyEnsemble { members })
}

impl PropertyEnsemble {
    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    /// Binary member votes aggregated by per-class effectiveness weight;
    /// the argmax wins and ties go to benign.
    pub fn predict_weighted_vote(&self, features: &FeatureVector) -> VoteResult {
        let mut per_class_confidence = [0.0f64; 2];
        let mut votes = Vec::with_capacity(self.members.len());
        for member in &self.members {
            let vote = member.model.classify(features, 0.5);
            let weight = member.effectiveness[vote as usize];
            per_class_confidence[vote as usize] += weight;
            votes.push(MemberVote {
                property_id: member.descriptor.id,
                vote,
                weight,
            });
        }
        let predicted_class = u8::from(per_class_confidence[1] > per_class_confidence[0]);
        VoteResult {
            predicted_class,
            per_class_confidence,
            votes,
        }
    }

    /// Render the winning-class voters, heaviest first, with the sample's
    /// actual feature values substituted into each pattern.
    pub fn explain_property(
        &self,
        vote: &VoteResult,
        features: &FeatureVector,
    ) -> PropertyExplanation {
        let mut patterns: Vec<RenderedPattern> = vote
            .votes
            .iter()
            .filter(|v| v.vote == vote.predicted_class)
            .map(|v| {
                let member = &self.members[(v.property_id - 1) as usize];
                let values: Vec<String> = member
                    .descriptor
                    .feature_subset
                    .iter()
                    .map(|&f| format!("{}={}", FEATURE_NAMES[f], features.get(f)))
                    .collect();
                let verdict = if vote.predicted_class == 1 {
                    "matches rare-event trigger signature"
                } else {
                    "consistent with benign structure"
                };
                RenderedPattern {
                    property_id: v.property_id,
                    weight: v.weight,
                    description: member.descriptor.description.clone(),
                    rendered: format!(
                        "{} ({}) {}",
                        member.descriptor.description,
                        values.join(", "),
                        verdict
                    ),
                }
            })
            .collect();
        patterns.sort_by(|a, b| {
            b.weight
                .partial_cmp(&a.weight)
                .expect("weights are finite")
                .then_with(|| a.property_id.cmp(&b.property_id))
        });
        PropertyExplanation {
            predicted_class: vote.predicted_class,
            per_class_confidence: vote.per_class_confidence,
            patterns,
        }
    }

    pub fn to_json(&self) -> String {
        let file = EnsembleFile {
            schema: ENSEMBLE_SCHEMA.to_string(),
            version: ENSEMBLE_SCHEMA_VERSION,
            ensemble: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EnsembleError::CorruptFile(e.to_string()))?;
        let schema = value
            .get("schema")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if schema != ENSEMBLE_SCHEMA || version != ENSEMBLE_SCHEMA_VERSION {
            return Err(EnsembleError::SchemaVersionMismatch {
                found: schema,
                found_version: version,
            });
        }
        let file: EnsembleFile =
            serde_json::from_value(value).map_err(|e| EnsembleError::CorruptFile(e.to_string()))?;
        Ok(file.ensemble)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EnsembleError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EnsembleError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabeledSample, Provenance};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    #[test]
    fn property_count_and_histogram() {
        let props = enumerate_properties();
        assert_eq!(props.len(), PROPERTY_COUNT);
        let mut histogram = [0usize; 6];
        for p in &props {
            histogram[p.feature_subset.len()] += 1;
        }
        assert_eq!(histogram, [0, 5, 10, 10, 5, 1]);
        // ids dense 1..=31, subsets sorted by size then lexicographically
        for (i, p) in props.iter().enumerate() {
            assert_eq!(p.id as usize, i + 1);
        }
        assert_eq!(props[0].feature_subset, vec![0]);
        assert_eq!(props[30].feature_subset, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn descriptor_for_lgfi_po_mentions_both_phrases() {
        let props = enumerate_properties();
        let p = props
            .iter()
            .find(|p| p.feature_subset == vec![0, 4])
            .expect("LGFi+PO subset exists");
        assert!(p.description.contains("fanin"), "{}", p.description);
        assert!(
            p.description.contains("output proximity"),
            "{}",
            p.description
        );
    }

    #[test]
    fn effectiveness_perfect_and_degenerate() {
        // perfect member: all four factors 1 for both classes
        let preds = [0u8, 0, 1, 1];
        assert_eq!(effectiveness(&preds, &preds), [1.0, 1.0]);
        // all-benign predictor: trojan recall factor 0
        let labels = [0u8, 0, 1, 1];
        let all_benign = [0u8, 0, 0, 0];
        let e = effectiveness(&all_benign, &labels);
        assert_eq!(e[1], 0.0);
        // class 0 also scores 0: its one-vs-rest specificity factor is 0
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn effectiveness_stays_in_unit_interval() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(1..30);
            let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            for e in effectiveness(&preds, &labels) {
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }

    fn training_dataset() -> Dataset {
        let mut samples = Vec::new();
        for i in 0..120u32 {
            let trojan = i % 12 == 0;
            samples.push(LabeledSample {
                features: FeatureVector {
                    lgfi: if trojan { 12 + i % 4 } else { i % 10 },
                    ffi: i % 5,
                    ffo: i % 7,
                    pi: i % 4,
                    po: if trojan { i % 2 } else { 2 + i % 6 },
                },
                label: u8::from(trojan),
                provenance: Provenance {
                    circuit: format!("c{}", i % 2),
                    net: format!("n{i}"),
                    line: i,
                },
            });
        }
        Dataset::new(samples, BTreeMap::new())
    }

    #[test]
    fn members_split_only_on_their_subset() {
        let ds = training_dataset();
        let cfg = TrainConfig {
            n_estimators: 10,
            ..TrainConfig::default()
        };
        let ensemble = train_ensemble(&ds, &cfg, 0.2, 42).unwrap();
        assert_eq!(ensemble.members().len(), 31);
        for member in ensemble.members() {
            let allowed: std::collections::BTreeSet<usize> =
                member.descriptor.feature_subset.iter().copied().collect();
            let used = member.model.split_features_used();
            assert!(
                used.is_subset(&allowed),
                "member {} split outside its subset: {:?} vs {:?}",
                member.descriptor.id,
                used,
                allowed
            );
            for e in member.effectiveness {
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }

    fn two_member_ensemble(weights: [[f64; 2]; 2], votes_to: [u8; 2]) -> PropertyEnsemble {
        // leaf-only models forcing fixed votes
        use crate::gbt::{ConfigSnapshot, Tree};
        let snapshot = ConfigSnapshot {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 1.0,
            positive_class_weight: 1.0,
            l2_leaf_regularization: 1.0,
            min_child_weight: 1.0,
            seed: 42,
        };
        let props = enumerate_properties();
        let members = (0..2)
            .map(|i| EnsembleMember {
                descriptor: props[i].clone(),
                model: BoostedTreeModel::from_parts(
                    snapshot.clone(),
                    0.0,
                    vec![Tree::leaf(if votes_to[i] == 1 { 5.0 } else { -5.0 })],
                ),
                effectiveness: weights[i],
            })
            .collect();
        PropertyEnsemble { members }
    }

    #[test]
    fn weighted_vote_two_member_hand_computation() {
        // weights {0.9 for class 0} vs {0.8 for class 1} -> class 0 wins
        let ensemble = two_member_ensemble([[0.9, 0.1], [0.3, 0.8]], [0, 1]);
        let fv = FeatureVector {
            lgfi: 1,
            ffi: 1,
            ffo: 1,
            pi: 1,
            po: 1,
        };
        let vote = ensemble.predict_weighted_vote(&fv);
        assert_eq!(vote.predicted_class, 0);
        assert_relative_eq!(vote.per_class_confidence[0], 0.9);
        assert_relative_eq!(vote.per_class_confidence[1], 0.8);
    }

    #[test]
    fn unanimous_vote_lists_all_patterns() {
        let ds = training_dataset();
        let cfg = TrainConfig {
            n_estimators: 10,
            ..TrainConfig::default()
        };
        let ensemble = train_ensemble(&ds, &cfg, 0.2, 42).unwrap();
        // strongly trojan-looking sample
        let fv = FeatureVector {
            lgfi: 14,
            ffi: 2,
            ffo: 3,
            pi: 1,
            po: 0,
        };
        let vote = ensemble.predict_weighted_vote(&fv);
        let explanation = ensemble.explain_property(&vote, &fv);
        let winners = vote
            .votes
            .iter()
            .filter(|v| v.vote == vote.predicted_class)
            .count();
        assert_eq!(explanation.patterns.len(), winners);
        if winners == 31 {
            assert_eq!(explanation.patterns.len(), 31);
        }
        // confidence > 0 implies at least one winning voter
        if vote.per_class_confidence[vote.predicted_class as usize] > 0.0 {
            assert!(!explanation.patterns.is_empty());
        }
        // rendered text embeds concrete values
        let first = &explanation.patterns[0];
        assert!(
            first.rendered.contains('='),
            "rendered pattern lacks values: {}",
            first.rendered
        );
    }

    #[test]
    fn vote_is_permutation_invariant() {
        let ds = training_dataset();
        let cfg = TrainConfig {
            n_estimators: 5,
            ..TrainConfig::default()
        };
        let mut ensemble = train_ensemble(&ds, &cfg, 0.2, 1).unwrap();
        let fv = FeatureVector {
            lgfi: 13,
            ffi: 1,
            ffo: 2,
            pi: 3,
            po: 0,
        };
        let before = ensemble.predict_weighted_vote(&fv);
        ensemble.members.reverse();
        let after = ensemble.predict_weighted_vote(&fv);
        assert_eq!(before.predicted_class, after.predicted_class);
        assert_relative_eq!(
            before.per_class_confidence[0],
            after.per_class_confidence[0],
            epsilon = 1e-12
        );
        assert_relative_eq!(
            before.per_class_confidence[1],
            after.per_class_confidence[1],
            epsilon = 1e-12
        );
    }

    #[test]
    fn raising_winning_weight_never_flips_prediction() {
        let mut ensemble = two_member_ensemble([[0.9, 0.1], [0.3, 0.8]], [0, 1]);
        let fv = FeatureVector {
            lgfi: 1,
            ffi: 1,
            ffo: 1,
            pi: 1,
            po: 1,
        };
        let before = ensemble.predict_weighted_vote(&fv);
        assert_eq!(before.predicted_class, 0);
        // raise the winning member's weight for its class
        ensemble.members[0].effectiveness[0] = 0.95;
        let after = ensemble.predict_weighted_vote(&fv);
        assert_eq!(after.predicted_class, 0);
    }

    #[test]
    fn argmax_ties_go_benign() {
        let ensemble = two_member_ensemble([[0.5, 0.1], [0.3, 0.5]], [0, 1]);
        let fv = FeatureVector {
            lgfi: 1,
            ffi: 1,
            ffo: 1,
            pi: 1,
            po: 1,
        };
        let vote = ensemble.predict_weighted_vote(&fv);
        assert_eq!(vote.per_class_confidence[0], vote.per_class_confidence[1]);
        assert_eq!(vote.predicted_class, 0);
    }

    #[test]
    fn ensemble_json_round_trip() {
        let ds = training_dataset();
        let cfg = TrainConfig {
            n_estimators: 3,
            ..TrainConfig::default()
        };
        let ensemble = train_ensemble(&ds, &cfg, 0.2, 9).unwrap();
        let back = PropertyEnsemble::from_json(&ensemble.to_json()).unwrap();
        assert_eq!(ensemble, back);
        assert!(matches!(
            PropertyEnsemble::from_json("{\"schema\": \"other\"}"),
            Err(EnsembleError::SchemaVersionMismatch { .. })
        ));
    }
}
