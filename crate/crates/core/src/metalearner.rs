//! Meta-feature assembly, the softmax gating network, and its training loss.
//!
//! The gate maps a per-sample meta-feature vector to three probabilities:
//! trust the trees, trust the network, or take their average. Its loss is
//! the squared error of the blended prediction plus an exploration term
//! `alpha * KL(p || uniform)` that discourages collapsing onto one option.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::neuralnet::{check_layer_chain, sgd_momentum_step, ForwardScratch, Layer};
use crate::numkit::softmax;

/// Per-sample gate input, laid out as
/// `[x (D) | c_xgb | c_nn | importance (D) | y_xgb | y_nn]`, total 2D+4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    values: Vec<f64>,
}

impl MetaFeatures {
    pub fn build(
        x: &[f64],
        c_xgb: f64,
        c_nn: f64,
        importance: &[f64],
        y_xgb: f64,
        y_nn: f64,
    ) -> Result<Self> {
        if importance.len() != x.len() {
            return Err(DmlError::invalid(format!(
                "importance has {} entries for {} features",
                importance.len(),
                x.len()
            )));
        }
        if x.is_empty() {
            return Err(DmlError::invalid("meta-features need at least one raw feature"));
        }
        if !(c_xgb.is_finite() && c_xgb >= 0.0 && c_nn.is_finite() && c_nn >= 0.0) {
            return Err(DmlError::invalid(
                "confidence values must be finite and nonnegative",
            ));
        }
        let finite = x.iter().chain(importance).all(|v| v.is_finite())
            && y_xgb.is_finite()
            && y_nn.is_finite();
        if !finite {
            return Err(DmlError::invalid("meta-feature inputs must be finite"));
        }
        let mut values = Vec::with_capacity(2 * x.len() + 4);
        values.extend_from_slice(x);
        values.push(c_xgb);
        values.push(c_nn);
        values.extend_from_slice(importance);
        values.push(y_xgb);
        values.push(y_nn);
        Ok(MetaFeatures { values })
    }

    /// Wrap an already-assembled (e.g. standardized) vector; the length must
    /// be a valid 2D+4 layout.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() < 6 || (values.len() - 4) % 2 != 0 {
            return Err(DmlError::invalid(format!(
                "{} values do not form a 2D+4 meta-feature layout",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("meta-feature values must be finite"));
        }
        Ok(MetaFeatures { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub const fn dim_for(n_raw_features: usize) -> usize {
        2 * n_raw_features + 4
    }
}

/// Gate output probabilities for the three combination options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateProbabilities {
    pub p_xgb: f64,
    pub p_nn: f64,
    pub p_hybrid: f64,
}

impl GateProbabilities {
    pub fn new(p_xgb: f64, p_nn: f64, p_hybrid: f64) -> Result<Self> {
        let p = [p_xgb, p_nn, p_hybrid];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(DmlError::invalid("probabilities must lie in [0, 1]"));
        }
        if ((p_xgb + p_nn + p_hybrid) - 1.0).abs() > 1e-9 {
            return Err(DmlError::invalid("probabilities must sum to 1"));
        }
        Ok(GateProbabilities {
            p_xgb,
            p_nn,
            p_hybrid,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_xgb, self.p_nn, self.p_hybrid]
    }

    /// Collapse the three options into two base-model weights: the hybrid
    /// mass splits evenly, so w_xgb + w_nn = 1.
    pub fn weights(&self) -> (f64, f64) {
        (
            self.p_xgb + 0.5 * self.p_hybrid,
            self.p_nn + 0.5 * self.p_hybrid,
        )
    }

    /// Blended prediction p₁·ŷ_xgb + p₂·ŷ_nn + p₃·(ŷ_xgb + ŷ_nn)/2.
    pub fn combine(&self, y_xgb: f64, y_nn: f64) -> f64 {
        self.p_xgb * y_xgb + self.p_nn * y_nn + self.p_hybrid * 0.5 * (y_xgb + y_nn)
    }

    /// Index of the most probable option (ties go to the lowest index).
    pub fn argmax(&self) -> usize {
        let p = self.as_array();
        let mut best = 0;
        for (i, v) in p.iter().enumerate().skip(1) {
            if *v > p[best] {
                best = i;
            }
        }
        best
    }

    /// KL(p ‖ uniform) = Σ p_c ln(3 p_c), with 0·ln(0) read as 0.
    pub fn kl_uniform(&self) -> f64 {
        self.as_array()
            .iter()
            .map(|&p| if p > 0.0 { p * (3.0 * p).ln() } else { 0.0 })
            .sum()
    }
}

/// One training example for the gate: standardized meta-features plus the
/// base predictions and the true target in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSample {
    pub z: MetaFeatures,
    pub y_xgb: f64,
    pub y_nn: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight of the KL-to-uniform exploration term.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            hidden_sizes: vec![128, 64],
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            alpha: 0.01,
            seed: 0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(DmlError::invalid("hidden layer widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(DmlError::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DmlError::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(DmlError::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(DmlError::invalid("alpha must be nonnegative"));
        }
        Ok(())
    }
}

/// Batch value of the gate objective: mean squared error of the blended
/// prediction plus `alpha` times the mean KL(p ‖ uniform).
pub fn meta_loss(
    p: &[GateProbabilities],
    y_xgb: &[f64],
    y_nn: &[f64],
    y: &[f64],
    alpha: f64,
) -> Result<f64> {
    if p.len() != y_xgb.len() || p.len() != y_nn.len() || p.len() != y.len() {
        return Err(DmlError::invalid("meta_loss batch lengths differ"));
    }
    if p.is_empty() {
        return Err(DmlError::invalid("meta_loss needs a nonempty batch"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DmlError::invalid("alpha must be nonnegative"));
    }
    let n = p.len() as f64;
    let mut data = 0.0;
    let mut kl = 0.0;
    for i in 0..p.len() {
        let err = p[i].combine(y_xgb[i], y_nn[i]) - y[i];
        data += err * err;
        kl += p[i].kl_uniform();
    }
    Ok(data / n + alpha * kl / n)
}

/// ReLU stack mapping meta-features to three softmax logits. No dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingNet {
    layers: Vec<Layer>,
    input_dim: usize,
}

impl GatingNet {
    pub fn from_parameters(layers: Vec<Layer>) -> Result<Self> {
        let input_dim = check_layer_chain(&layers, 3)?;
        Ok(GatingNet { layers, input_dim })
    }

    /// Seeded He-initialized gate with untrained weights.
    pub fn init(input_dim: usize, config: &GateConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(DmlError::invalid("input dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.hidden_sizes.len() + 1);
        let mut dim = input_dim;
        for &h in &config.hidden_sizes {
            layers.push(Layer::he_init(dim, h, &mut rng));
            dim = h;
        }
        layers.push(Layer::he_init(dim, 3, &mut rng));
        Ok(GatingNet { layers, input_dim })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, z: &MetaFeatures) -> Result<GateProbabilities> {
        if z.dim() != self.input_dim {
            return Err(DmlError::invalid(format!(
                "gate expects {} meta-features, got {}",
                self.input_dim,
                z.dim()
            )));
        }
        let mut scratch = ForwardScratch::new(&self.layers);
        scratch.deterministic_forward(&self.layers, z.values());
        let p = softmax(scratch.output())?;
        GateProbabilities::new(p[0], p[1], p[2])
    }

    /// Train on the meta-set with mini-batch gradient descent; gradients flow
    /// through the softmax and the blended prediction.
    pub fn fit(samples: &[MetaSample], config: &GateConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(DmlError::invalid("gate training needs a nonempty meta-set"));
        }
        let dim = samples[0].z.dim();
        if samples.iter().any(|s| s.z.dim() != dim) {
            return Err(DmlError::invalid("meta-samples have inconsistent dimensions"));
        }
        let mut net = Self::init(dim, config)?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let mut velocity: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect();
        let mut grads = velocity.clone();
        let mut indices: Vec<usize> = (0..samples.len()).collect();
        let mut scratch = ForwardScratch::new(&net.layers);

        for epoch in 0..config.epochs {
            indices.shuffle(&mut rng);
            for batch in indices.chunks(config.batch_size) {
                for g in &mut grads {
                    g.weights.iter_mut().for_each(|w| *w = 0.0);
                    g.biases.iter_mut().for_each(|b| *b = 0.0);
                }
                let mut batch_loss = 0.0;
                for &i in batch {
                    batch_loss += accumulate_sample_gradient(
                        &net.layers,
                        &mut scratch,
                        &samples[i],
                        config.alpha,
                        batch.len() as f64,
                        &mut grads,
                    )?;
                }
                if !batch_loss.is_finite() {
                    return Err(DmlError::Diverged {
                        epoch,
                        message: "gate mini-batch loss became non-finite".into(),
                    });
                }
                sgd_momentum_step(
                    &mut net.layers,
                    &mut velocity,
                    &grads,
                    config.learning_rate,
                    config.momentum,
                );
            }
        }
        Ok(net)
    }

    /// Full-batch objective value and its parameter gradients, in layer
    /// shape. Used for training diagnostics and gradient verification.
    pub fn loss_and_gradients(
        &self,
        samples: &[MetaSample],
        alpha: f64,
    ) -> Result<(f64, Vec<Layer>)> {
        if samples.is_empty() {
            return Err(DmlError::invalid("loss needs a nonempty meta-set"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(DmlError::invalid("alpha must be nonnegative"));
        }
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect();
        let mut scratch = ForwardScratch::new(&self.layers);
        let mut total = 0.0;
        for sample in samples {
            total += accumulate_sample_gradient(
                &self.layers,
                &mut scratch,
                sample,
                alpha,
                samples.len() as f64,
                &mut grads,
            )?;
        }
        Ok((total, grads))
    }
}

/// Forward one sample, add its share of the batch loss gradient into
/// `grads`, and return its share of the loss value.
fn accumulate_sample_gradient(
    layers: &[Layer],
    scratch: &mut ForwardScratch,
    sample: &MetaSample,
    alpha: f64,
    batch_len: f64,
    grads: &mut [Layer],
) -> Result<f64> {
    scratch.deterministic_forward(layers, sample.z.values());
    let p_vec = softmax(scratch.output())?;
    let p = GateProbabilities::new(p_vec[0], p_vec[1], p_vec[2])?;

    let a = sample.y_xgb;
    let b = sample.y_nn;
    let selectors = [a, b, 0.5 * (a + b)];
    let err = p.combine(a, b) - sample.y;
    let kl = p.kl_uniform();
    let loss_share = (err * err + alpha * kl) / batch_len;

    // loss gradient w.r.t. the probabilities (data term only)
    let gp: Vec<f64> = selectors
        .iter()
        .map(|s| 2.0 * err * s / batch_len)
        .collect();
    // pull back through the softmax: J^T g = p ⊙ (g − <g, p>);
    // the KL term contributes p_c (ln(3 p_c) − KL) directly, which stays
    // bounded as p_c → 0.
    let dot: f64 = gp.iter().zip(&p_vec).map(|(g, p)| g * p).sum();
    let upstream: Vec<f64> = (0..3)
        .map(|c| {
            let data = p_vec[c] * (gp[c] - dot);
            let explore = if p_vec[c] > 0.0 {
                p_vec[c] * ((3.0 * p_vec[c]).ln() - kl) * alpha / batch_len
            } else {
                0.0
            };
            data + explore
        })
        .collect();
    scratch.backward_params(layers, sample.z.values(), &upstream, grads);
    Ok(loss_share)
}
