//! Gate-level netlist analysis and explainable trojan-gate detection.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`cell_lib`] / [`netlist`] / [`parser`] — parse a structural Verilog
//!    subset against a cell library.
//! 2. [`graph`] — build a validated directed circuit graph.
//! 3. [`features`] / [`dataset`] — extract the five structural features
//!    (LGFi, FFi, FFo, PI, PO) per net and assemble labeled datasets.
//! 4. [`gbt`] — gradient-boosted tree classifier with minority-class
//!    weighting.
//! 5. [`ensemble`] / [`cases`] / [`attribution`] — five explanation
//!    backends: property-pattern voting, case-based neighbor retrieval,
//!    and three feature-attribution methods.
//! 6. [`stats`] — confusion-matrix metrics, threshold sweeps, bootstrap
//!    confidence intervals, and paired significance tests.
//! 7. [`benchgen`] — synthetic circuit generation with trigger/payload
//!    trojan insertion for end-to-end testing.

pub mod attribution;
pub mod benchgen;
pub mod cases;
pub mod cell_lib;
pub mod dataset;
pub mod ensemble;
pub mod explain;
pub mod features;
pub mod gbt;
pub mod graph;
pub mod labels;
pub mod netlist;
pub mod parser;
pub mod stats;

pub use cell_lib::CellLibrary;
pub use dataset::{Dataset, LabeledSample, Provenance};
pub use explain::Explanation;
pub use features::FeatureVector;
pub use gbt::{BoostedTreeModel, TrainConfig};
pub use graph::CircuitGraph;
pub use netlist::Netlist;

/// Canonical feature order used everywhere a feature index appears.
pub const FEATURE_NAMES: [&str; 5] = ["LGFi", "FFi", "FFo", "PI", "PO"];

/// Number of structural features per net.
pub const FEATURE_COUNT: usize = 5;
