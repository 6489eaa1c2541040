//! Three-phase training, per-sample inference, evaluation against the
//! static baselines, selection statistics, and model persistence.
//!
//! Training: (1) carve a meta-validation slice off the training data,
//! (2) fit the tree ensemble and the network on the remainder, (3) generate
//! meta-features on the held-out slice and fit the gate on them. The base
//! learners never see the meta slice, so the gate learns from honest
//! out-of-sample residual behavior.
//!
//! Inference standardizes the raw input, queries both base models, assembles
//! the same meta-features, and blends the base predictions with the gate's
//! weights. The Monte Carlo seed of every sample derives from the model seed
//! and a stable hash of the standardized input, so repeated predictions are
//! bit-identical without global state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{combined_importance, integrated_gradients, AttributionConfig};
use crate::error::{DmlError, Result};
use crate::gbrt::{GbrtConfig, GbrtModel};
use crate::metalearner::{GateConfig, GateProbabilities, GatingNet, MetaFeatures, MetaSample};
use crate::neuralnet::{MlpConfig, MlpModel};
use crate::numkit::{
    self, hash_f64_slice, mix_seed, train_test_split, Dataset, SplitSpec, Standardizer,
};

/// Version of the model file layout this build reads and writes.
pub const MODEL_FORMAT_VERSION: u64 = 1;

const SPLIT_SALT: u64 = 1;
const GBRT_SALT: u64 = 2;
const MLP_SALT: u64 = 3;
const GATE_SALT: u64 = 4;
const MC_SALT: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    pub gbrt: GbrtConfig,
    pub mlp: MlpConfig,
    pub gate: GateConfig,
    /// Monte Carlo dropout passes per prediction.
    pub mc_samples: usize,
    pub attribution: AttributionConfig,
    /// Fraction of the training data held out for meta-learning.
    pub meta_fraction: f64,
    pub seed: u64,
}

impl Default for DmlConfig {
    fn default() -> Self {
        DmlConfig {
            gbrt: GbrtConfig::default(),
            mlp: MlpConfig::default(),
            gate: GateConfig::default(),
            mc_samples: 100,
            attribution: AttributionConfig::default(),
            meta_fraction: 0.25,
            seed: 0,
        }
    }
}

impl DmlConfig {
    /// Default configuration with all component seeds derived from one
    /// master seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut config = DmlConfig::default();
        config.set_seed(seed);
        config
    }

    /// Re-derive every component seed from `seed`, keeping other settings.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.gbrt.seed = mix_seed(seed, GBRT_SALT);
        self.mlp.seed = mix_seed(seed, MLP_SALT);
        self.gate.seed = mix_seed(seed, GATE_SALT);
    }

    pub fn validate(&self) -> Result<()> {
        self.gbrt.validate()?;
        self.mlp.validate()?;
        self.gate.validate()?;
        if self.mc_samples == 0 {
            return Err(DmlError::invalid("mc_samples must be positive"));
        }
        if !(self.meta_fraction > 0.0 && self.meta_fraction < 1.0) {
            return Err(DmlError::invalid(format!(
                "meta_fraction must lie in (0, 1), got {}",
                self.meta_fraction
            )));
        }
        if self.attribution.steps == 0 {
            return Err(DmlError::invalid("attribution needs at least one step"));
        }
        if !(0.0..=1.0).contains(&self.attribution.lambda) {
            return Err(DmlError::invalid("lambda must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Progress notifications emitted by [`DmlModel::train_with_events`].
#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    SplitDone {
        base_rows: usize,
        meta_rows: usize,
    },
    GbrtDone {
        seconds: f64,
    },
    MlpDone {
        seconds: f64,
    },
    MetaFeaturesDone {
        rows: usize,
        seconds: f64,
    },
    GateDone {
        seconds: f64,
    },
}

/// Everything produced for one input: base predictions, confidences, fused
/// importances, gate probabilities, weights, and the final blend.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub prediction: f64,
    pub y_xgb: f64,
    pub y_nn: f64,
    pub p: GateProbabilities,
    pub w_xgb: f64,
    pub w_nn: f64,
    pub c_xgb: f64,
    pub c_nn: f64,
    pub importance: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// The four-way comparison of Table-style baselines, computed from the same
/// per-sample base predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    pub gbrt: Metrics,
    pub nn: Metrics,
    pub average: Metrics,
    pub dml: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub mean: f64,
    pub std: f64,
}

/// Population statistics of the gate probabilities over a dataset, plus how
/// often each option wins the argmax (ties go to the lowest index).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStats {
    pub xgb: ClassStats,
    pub nn: ClassStats,
    pub hybrid: ClassStats,
    pub argmax_counts: [usize; 3],
    pub n_samples: usize,
}

impl SelectionStats {
    pub fn argmax_shares(&self) -> [f64; 3] {
        let n = self.n_samples as f64;
        [
            self.argmax_counts[0] as f64 / n,
            self.argmax_counts[1] as f64 / n,
            self.argmax_counts[2] as f64 / n,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlModel {
    gbrt: GbrtModel,
    mlp: MlpModel,
    gate: GatingNet,
    feature_standardizer: Standardizer,
    meta_standardizer: Standardizer,
    attribution: AttributionConfig,
    mc_samples: usize,
    seed: u64,
}

impl DmlModel {
    pub fn train(train: &Dataset, config: &DmlConfig) -> Result<Self> {
        Self::train_with_events(train, config, |_| {})
    }

    pub fn train_with_events(
        train: &Dataset,
        config: &DmlConfig,
        mut on_event: impl FnMut(TrainEvent),
    ) -> Result<Self> {
        config.validate()?;
        let phase = DmlError::in_phase;

        // phase 0: standardize features on the full training split, then
        // carve the meta-validation slice
        let feature_standardizer = Standardizer::fit(train).map_err(phase("split"))?;
        let std_train = feature_standardizer
            .transform_dataset(train)
            .map_err(phase("split"))?;
        let (base, meta) = train_test_split(
            &std_train,
            &SplitSpec {
                train_fraction: 1.0 - config.meta_fraction,
                seed: mix_seed(config.seed, SPLIT_SALT),
            },
        )
        .map_err(phase("split"))?;
        on_event(TrainEvent::SplitDone {
            base_rows: base.n_rows(),
            meta_rows: meta.n_rows(),
        });

        // phase 1: base learners, fitted only on the base slice
        let started = std::time::Instant::now();
        let gbrt = GbrtModel::fit(&base, &config.gbrt).map_err(phase("gbrt"))?;
        on_event(TrainEvent::GbrtDone {
            seconds: started.elapsed().as_secs_f64(),
        });

        let started = std::time::Instant::now();
        let mlp = MlpModel::fit(&base, &config.mlp).map_err(phase("mlp"))?;
        on_event(TrainEvent::MlpDone {
            seconds: started.elapsed().as_secs_f64(),
        });

        // phase 2: meta-features on the held-out slice
        let started = std::time::Instant::now();
        let mut raw_meta = Vec::with_capacity(meta.n_rows());
        for x in meta.rows() {
            let parts = meta_parts(
                &gbrt,
                &mlp,
                &config.attribution,
                config.mc_samples,
                config.seed,
                x,
            )
            .map_err(phase("meta-features"))?;
            raw_meta.push(parts);
        }
        let meta_standardizer =
            Standardizer::fit_rows(&raw_meta.iter().map(|p| p.z_raw.clone()).collect::<Vec<_>>())
                .map_err(phase("meta-features"))?;
        let mut samples = Vec::with_capacity(raw_meta.len());
        for (parts, &y) in raw_meta.iter().zip(meta.targets()) {
            let z_std = meta_standardizer
                .transform_row(&parts.z_raw)
                .map_err(phase("meta-features"))?;
            samples.push(MetaSample {
                z: MetaFeatures::from_vec(z_std).map_err(phase("meta-features"))?,
                y_xgb: parts.y_xgb,
                y_nn: parts.y_nn,
                y,
            });
        }
        on_event(TrainEvent::MetaFeaturesDone {
            rows: samples.len(),
            seconds: started.elapsed().as_secs_f64(),
        });

        // phase 3: gate
        let started = std::time::Instant::now();
        let gate = GatingNet::fit(&samples, &config.gate).map_err(phase("gate"))?;
        on_event(TrainEvent::GateDone {
            seconds: started.elapsed().as_secs_f64(),
        });

        Self::from_parts(
            gbrt,
            mlp,
            gate,
            feature_standardizer,
            meta_standardizer,
            config.attribution.clone(),
            config.mc_samples,
            config.seed,
        )
    }

    /// Assemble a model from trained components, checking that all
    /// dimensions are mutually consistent.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        gbrt: GbrtModel,
        mlp: MlpModel,
        gate: GatingNet,
        feature_standardizer: Standardizer,
        meta_standardizer: Standardizer,
        attribution: AttributionConfig,
        mc_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let d = feature_standardizer.dim();
        if gbrt.n_features() != d {
            return Err(DmlError::invalid(format!(
                "tree model expects {} features, standardizer has {}",
                gbrt.n_features(),
                d
            )));
        }
        if mlp.input_dim() != d {
            return Err(DmlError::invalid(format!(
                "network expects {} inputs, standardizer has {}",
                mlp.input_dim(),
                d
            )));
        }
        let expected_meta = MetaFeatures::dim_for(d);
        if gate.input_dim() != expected_meta {
            return Err(DmlError::invalid(format!(
                "gate expects {} meta-features, layout requires {}",
                gate.input_dim(),
                expected_meta
            )));
        }
        if meta_standardizer.dim() != expected_meta {
            return Err(DmlError::invalid(format!(
                "meta standardizer has {} dimensions, layout requires {}",
                meta_standardizer.dim(),
                expected_meta
            )));
        }
        if mc_samples == 0 {
            return Err(DmlError::invalid("mc_samples must be positive"));
        }
        attribution.validate(d)?;
        Ok(DmlModel {
            gbrt,
            mlp,
            gate,
            feature_standardizer,
            meta_standardizer,
            attribution,
            mc_samples,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_standardizer.dim()
    }

    pub fn gbrt(&self) -> &GbrtModel {
        &self.gbrt
    }

    pub fn mlp(&self) -> &MlpModel {
        &self.mlp
    }

    pub fn gate(&self) -> &GatingNet {
        &self.gate
    }

    pub fn predict(&self, x_raw: &[f64]) -> Result<PredictionReport> {
        if x_raw.len() != self.n_features() {
            return Err(DmlError::invalid(format!(
                "expected {} features, got {}",
                self.n_features(),
                x_raw.len()
            )));
        }
        if !x_raw.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite feature value"));
        }
        let x_std = self.feature_standardizer.transform_row(x_raw)?;
        let parts = meta_parts(
            &self.gbrt,
            &self.mlp,
            &self.attribution,
            self.mc_samples,
            self.seed,
            &x_std,
        )?;
        let z_std = self.meta_standardizer.transform_row(&parts.z_raw)?;
        let p = self.gate.forward(&MetaFeatures::from_vec(z_std)?)?;
        let (w_xgb, w_nn) = p.weights();
        Ok(PredictionReport {
            prediction: w_xgb * parts.y_xgb + w_nn * parts.y_nn,
            y_xgb: parts.y_xgb,
            y_nn: parts.y_nn,
            p,
            w_xgb,
            w_nn,
            c_xgb: parts.c_xgb,
            c_nn: parts.c_nn,
            importance: parts.importance,
        })
    }

    /// Metric triples for the tree model, the network (MC mean), their
    /// simple average, and the gated blend, all from one pass over `test`.
    pub fn evaluate(&self, test: &Dataset) -> Result<EvaluationReport> {
        let n = test.n_rows();
        let mut y_xgb = Vec::with_capacity(n);
        let mut y_nn = Vec::with_capacity(n);
        let mut y_avg = Vec::with_capacity(n);
        let mut y_dml = Vec::with_capacity(n);
        for x in test.rows() {
            let report = self.predict(x)?;
            y_xgb.push(report.y_xgb);
            y_nn.push(report.y_nn);
            y_avg.push(0.5 * (report.y_xgb + report.y_nn));
            y_dml.push(report.prediction);
        }
        let truth = test.targets();
        let metrics = |pred: &[f64]| -> Result<Metrics> {
            Ok(Metrics {
                rmse: numkit::rmse(pred, truth)?,
                mae: numkit::mae(pred, truth)?,
                r2: numkit::r2(pred, truth)?,
            })
        };
        Ok(EvaluationReport {
            gbrt: metrics(&y_xgb)?,
            nn: metrics(&y_nn)?,
            average: metrics(&y_avg)?,
            dml: metrics(&y_dml)?,
        })
    }

    pub fn selection_stats(&self, data: &Dataset) -> Result<SelectionStats> {
        let mut per_class: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut argmax_counts = [0usize; 3];
        for x in data.rows() {
            let report = self.predict(x)?;
            let p = report.p.as_array();
            for c in 0..3 {
                per_class[c].push(p[c]);
            }
            argmax_counts[report.p.argmax()] += 1;
        }
        let stats = |values: &[f64]| {
            let (mean, var) = numkit::population_mean_variance(values);
            ClassStats {
                mean,
                std: var.sqrt(),
            }
        };
        Ok(SelectionStats {
            xgb: stats(&per_class[0]),
            nn: stats(&per_class[1]),
            hybrid: stats(&per_class[2]),
            argmax_counts,
            n_samples: data.n_rows(),
        })
    }

    /// Mean fused importance over a dataset, renormalized to sum 1 when any
    /// sample produced a nonzero vector.
    pub fn mean_fused_importance(&self, data: &Dataset) -> Result<Vec<f64>> {
        let d = self.n_features();
        let mut acc = vec![0.0; d];
        for x in data.rows() {
            let report = self.predict(x)?;
            for (a, v) in acc.iter_mut().zip(&report.importance) {
                *a += v;
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            for a in &mut acc {
                *a /= total;
            }
        }
        Ok(acc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| DmlError::Parse {
            offset: 0,
            message: format!("serialization failed: {e}"),
        })?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| parse_error(&text, &e))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| DmlError::Parse {
                offset: 0,
                message: "missing or non-integer format_version".into(),
            })?;
        if version != MODEL_FORMAT_VERSION {
            return Err(DmlError::UnsupportedFormat {
                found: version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        match serde_json::from_value::<ModelDocument>(value) {
            Ok(doc) => validate_loaded(doc.model),
            // reparse from text to recover the byte position of the problem
            Err(_) => match serde_json::from_str::<ModelDocument>(&text) {
                Ok(doc) => validate_loaded(doc.model),
                Err(e) => Err(parse_error(&text, &e)),
            },
        }
    }
}

fn validate_loaded(model: DmlModel) -> Result<DmlModel> {
    DmlModel::from_parts(
        model.gbrt,
        model.mlp,
        model.gate,
        model.feature_standardizer,
        model.meta_standardizer,
        model.attribution,
        model.mc_samples,
        model.seed,
    )
}

fn parse_error(text: &str, err: &serde_json::Error) -> DmlError {
    let (line, column) = (err.line(), err.column());
    let offset = if line == 0 {
        0
    } else {
        text.lines()
            .take(line - 1)
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + column.saturating_sub(1)
    };
    DmlError::Parse {
        offset,
        message: err.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u64,
    model: DmlModel,
}

struct MetaParts {
    y_xgb: f64,
    y_nn: f64,
    c_xgb: f64,
    c_nn: f64,
    importance: Vec<f64>,
    z_raw: Vec<f64>,
}

/// Base predictions, confidences, fused importance, and the raw meta-feature
/// vector for one standardized input. Shared by training and inference so
/// the gate sees identically-constructed features in both.
fn meta_parts(
    gbrt: &GbrtModel,
    mlp: &MlpModel,
    attribution: &AttributionConfig,
    mc_samples: usize,
    master_seed: u64,
    x_std: &[f64],
) -> Result<MetaParts> {
    let y_xgb = gbrt.predict(x_std)?;
    let c_xgb = gbrt.confidence(x_std)?;
    let mc_seed = mix_seed(mix_seed(master_seed, MC_SALT), hash_f64_slice(x_std));
    let mc = mlp.mc_predict(x_std, mc_samples, mc_seed)?;
    let ig = integrated_gradients(mlp, x_std, attribution)?;
    let importance = combined_importance(gbrt.gain_importance(), &ig, attribution.lambda)?;
    let z = MetaFeatures::build(x_std, c_xgb, mc.variance, &importance, y_xgb, mc.mean)?;
    Ok(MetaParts {
        y_xgb,
        y_nn: mc.mean,
        c_xgb,
        c_nn: mc.variance,
        importance,
        z_raw: z.values().to_vec(),
    })
}
