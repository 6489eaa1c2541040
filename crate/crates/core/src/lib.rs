//! Adaptive ensemble for tabular regression: gradient-boosted trees and a
//! dropout MLP combined per input by a softmax gating network.
//!
//! The gating network is fed per-sample meta-features: the raw input,
//! tree-variance and Monte-Carlo-dropout confidence values, fused feature
//! importances (gain importance blended with Integrated Gradients), and the
//! two base predictions. Training runs in three phases: fit the base
//! learners, generate meta-features on a held-out slice, then fit the gate.
//!
//! Everything is seeded and deterministic: the same data and configuration
//! produce bit-identical models and predictions.

pub mod attribution;
pub mod error;
pub mod gbrt;
pub mod metalearner;
pub mod neuralnet;
pub mod numkit;
pub mod pipeline;

pub use error::{DmlError, Result};
pub use gbrt::{GbrtConfig, GbrtModel};
pub use metalearner::{GateConfig, GateProbabilities, GatingNet, MetaFeatures, MetaSample};
pub use neuralnet::{McPrediction, MlpConfig, MlpModel};
pub use numkit::{Dataset, SplitSpec, Standardizer};
pub use pipeline::{DmlConfig, DmlModel, EvaluationReport, PredictionReport, SelectionStats};
