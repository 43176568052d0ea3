//! The shared explanation type: one tagged union covering all five
//! backend outputs.

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMethod, AttributionVector};
use crate::cases::CaseExplanation;
use crate::ensemble::PropertyExplanation;
use crate::FEATURE_COUNT;

/// An attribution record as emitted in reports: the vector plus the
/// inputs, ranking, and measured wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionExplanation {
    pub method: AttributionMethod,
    pub feature_values: [f64; FEATURE_COUNT],
    pub attributions: [f64; FEATURE_COUNT],
    pub baseline: f64,
    pub ranking: Vec<String>,
    pub wall_time_ns: u64,
    /// Set when the surrogate fit needed the ridge fallback.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ridge_fallback: bool,
}

impl AttributionExplanation {
    pub fn from_vector(
        vector: &AttributionVector,
        feature_values: [f64; FEATURE_COUNT],
        wall_time_ns: u64,
        ridge_fallback: bool,
    ) -> Self {
        AttributionExplanation {
            method: vector.method,
            feature_values,
            attributions: vector.values,
            baseline: vector.baseline,
            ranking: crate::attribution::rank_features(vector)
                .iter()
                .map(|s| s.to_string())
                .collect(),
            wall_time_ns,
            ridge_fallback,
        }
    }
}

/// One explanation from any of the five backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Explanation {
    Property(PropertyExplanation),
    Case(CaseExplanation),
    Attribution(AttributionExplanation),
}

impl Explanation {
    /// The class this explanation argues for, when the backend predicts.
    pub fn predicted_class(&self) -> Option<u8> {
        match self {
            Explanation::Property(p) => Some(p.predicted_class),
            Explanation::Case(c) => Some(c.prediction),
            Explanation::Attribution(_) => None,
        }
    }
}
