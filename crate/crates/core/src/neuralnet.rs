//! Fully-connected ReLU regression network with inverted dropout.
//!
//! Dropout applies to every hidden activation and never to the input;
//! surviving units are scaled by 1/(1-rate) during stochastic passes, so the
//! deterministic pass needs no rescaling. Monte Carlo prediction runs T
//! stochastic passes whose mask streams derive from (seed, pass index),
//! making the result reproducible and order-independent.
//!
//! Training is mini-batch gradient descent with momentum on mean squared
//! error. Targets are standardized internally and outputs un-standardized on
//! the way out, which keeps fixed-step descent stable without changing the
//! visible units. The ReLU subgradient at exactly 0 is taken as 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::numkit::{population_mean_variance, Dataset};

/// One affine layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    pub fn he_init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Layer {
        let scale = (2.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) * scale)
            .collect();
        Layer {
            weights,
            biases: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Layer {
        Layer {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let dot: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(dot + self.biases[o]);
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.biases.iter().all(|b| b.is_finite())
    }
}

/// Validate that `layers` chain dimensionally and end in `output_dim`.
pub(crate) fn check_layer_chain(layers: &[Layer], output_dim: usize) -> Result<usize> {
    let Some(first) = layers.first() else {
        return Err(DmlError::invalid("network needs at least one layer"));
    };
    let mut dim = first.in_dim;
    for (i, layer) in layers.iter().enumerate() {
        if layer.in_dim != dim {
            return Err(DmlError::invalid(format!(
                "layer {} expects input {} but receives {}",
                i, layer.in_dim, dim
            )));
        }
        if layer.weights.len() != layer.in_dim * layer.out_dim
            || layer.biases.len() != layer.out_dim
        {
            return Err(DmlError::invalid(format!("layer {} has inconsistent shapes", i)));
        }
        if !layer.is_finite() {
            return Err(DmlError::invalid(format!("layer {} has non-finite parameters", i)));
        }
        dim = layer.out_dim;
    }
    if dim != output_dim {
        return Err(DmlError::invalid(format!(
            "network ends in dimension {}, expected {}",
            dim, output_dim
        )));
    }
    Ok(first.in_dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Hidden layer widths; empty means a single linear layer.
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_sizes: vec![128, 64, 32],
            dropout_rate: 0.3,
            epochs: 150,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(DmlError::invalid("hidden layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(DmlError::invalid(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
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
        Ok(())
    }
}

/// Monte Carlo predictive sample set with its population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl McPrediction {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(DmlError::invalid("prediction needs at least one sample"));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite prediction sample"));
        }
        let (mean, variance) = population_mean_variance(&samples);
        Ok(McPrediction {
            samples,
            mean,
            variance,
        })
    }
}

/// Predictive variance of a Monte Carlo dropout sample set.
pub fn confidence_nn(mc: &McPrediction) -> f64 {
    mc.variance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Layer>,
    dropout_rate: f64,
    input_dim: usize,
    target_mean: f64,
    target_std: f64,
}

impl MlpModel {
    /// Seeded He-initialized network with untrained weights, mapping
    /// `input_dim` inputs to one output. Output calibration is identity.
    pub fn init(input_dim: usize, config: &MlpConfig) -> Result<Self> {
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
        layers.push(Layer::he_init(dim, 1, &mut rng));
        Ok(MlpModel {
            layers,
            dropout_rate: config.dropout_rate,
            input_dim,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    /// Wrap explicit parameters; output calibration is identity.
    pub fn from_parameters(layers: Vec<Layer>, dropout_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(DmlError::invalid("dropout_rate must lie in [0, 1)"));
        }
        let input_dim = check_layer_chain(&layers, 1)?;
        Ok(MlpModel {
            layers,
            dropout_rate,
            input_dim,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    pub fn fit(train: &Dataset, config: &MlpConfig) -> Result<Self> {
        Self::fit_inner(train, config, false).map(|(model, _)| model)
    }

    /// Like [`MlpModel::fit`] but also returns the deterministic full-set MSE
    /// (standardized targets) after every epoch. The extra passes draw no
    /// randomness, so the fitted parameters equal `fit`'s exactly.
    pub fn fit_with_history(train: &Dataset, config: &MlpConfig) -> Result<(Self, Vec<f64>)> {
        Self::fit_inner(train, config, true)
    }

    fn fit_inner(train: &Dataset, config: &MlpConfig, record: bool) -> Result<(Self, Vec<f64>)> {
        let mut model = Self::init(train.n_features(), config)?;

        let (t_mean, t_var) = population_mean_variance(train.targets());
        let t_std = t_var.sqrt();
        model.target_mean = t_mean;
        model.target_std = if t_std <= 1e-12 * (1.0 + t_mean.abs()) {
            1.0
        } else {
            t_std
        };
        let y_std: Vec<f64> = train
            .targets()
            .iter()
            .map(|y| (y - model.target_mean) / model.target_std)
            .collect();

        // momentum and gradient buffers mirror the layer parameter shapes
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let mut velocity: Vec<Layer> = model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.in_dim, l.out_dim))
            .collect();
        let mut grads: Vec<Layer> = velocity.clone();
        let mut indices: Vec<usize> = (0..train.n_rows()).collect();
        let mut pass = ForwardScratch::new(&model.layers);
        let mut history = Vec::new();

        for epoch in 0..config.epochs {
            use rand::seq::SliceRandom;
            indices.shuffle(&mut rng);

            for batch in indices.chunks(config.batch_size) {
                for g in &mut grads {
                    g.weights.iter_mut().for_each(|w| *w = 0.0);
                    g.biases.iter_mut().for_each(|b| *b = 0.0);
                }
                let mut batch_loss = 0.0;
                for &i in batch {
                    let out = pass.stochastic_forward(
                        &model.layers,
                        model.dropout_rate,
                        train.row(i),
                        &mut rng,
                    );
                    let err = out - y_std[i];
                    batch_loss += err * err;
                    let upstream = 2.0 * err / batch.len() as f64;
                    pass.backward_params(&model.layers, train.row(i), &[upstream], &mut grads);
                }
                if !batch_loss.is_finite() {
                    return Err(DmlError::Diverged {
                        epoch,
                        message: "mini-batch loss became non-finite".into(),
                    });
                }
                sgd_momentum_step(
                    &mut model.layers,
                    &mut velocity,
                    &grads,
                    config.learning_rate,
                    config.momentum,
                );
            }

            if record {
                let mse = train
                    .rows()
                    .zip(&y_std)
                    .map(|(x, y)| {
                        let out = pass.deterministic_forward(&model.layers, x);
                        (out - y) * (out - y)
                    })
                    .sum::<f64>()
                    / train.n_rows() as f64;
                history.push(mse);
            }
        }
        Ok((model, history))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(DmlError::invalid(format!(
                "expected {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite input value"));
        }
        Ok(())
    }

    /// Deterministic pass: no masks, no rescaling.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut pass = ForwardScratch::new(&self.layers);
        let raw = pass.deterministic_forward(&self.layers, x);
        Ok(raw * self.target_std + self.target_mean)
    }

    /// T stochastic passes with fresh per-pass mask streams. Pass t draws its
    /// masks from stream t of the seeded generator, so results do not depend
    /// on evaluation order and are reproducible per (seed, T).
    pub fn mc_predict(&self, x: &[f64], t_samples: usize, seed: u64) -> Result<McPrediction> {
        self.check_input(x)?;
        if t_samples == 0 {
            return Err(DmlError::invalid("mc_predict needs at least one sample"));
        }
        if self.dropout_rate == 0.0 {
            // no masks to draw: every pass equals the deterministic one
            let value = self.forward(x)?;
            return McPrediction::from_samples(vec![value; t_samples]);
        }
        let mut pass = ForwardScratch::new(&self.layers);
        let mut samples = Vec::with_capacity(t_samples);
        for t in 0..t_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let raw = pass.stochastic_forward(&self.layers, self.dropout_rate, x, &mut rng);
            samples.push(raw * self.target_std + self.target_mean);
        }
        McPrediction::from_samples(samples)
    }

    /// Exact gradient of the deterministic `forward` with respect to `x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut pass = ForwardScratch::new(&self.layers);
        pass.deterministic_forward(&self.layers, x);
        let mut grad = pass.backward_input(&self.layers);
        for g in &mut grad {
            *g *= self.target_std;
        }
        Ok(grad)
    }

    /// Smallest |pre-activation| over all hidden units at `x`; infinite for a
    /// network without hidden layers. Gradients are non-smooth where this is
    /// near zero, so gradient checks sample away from such points.
    pub fn kink_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut pass = ForwardScratch::new(&self.layers);
        pass.deterministic_forward(&self.layers, x);
        let mut min = f64::INFINITY;
        for z in &pass.pre_activations[..self.layers.len().saturating_sub(1)] {
            for v in z {
                min = min.min(v.abs());
            }
        }
        Ok(min)
    }
}

/// Reusable buffers for one forward/backward evaluation. Shared with the
/// gating network, whose head is wider than one unit.
///
/// `activations[l]` is the input to layer l (so `activations[0]` = x);
/// `pre_activations[l]` is layer l's affine output before ReLU/dropout;
/// `mask_scales[l]` is the applied dropout multiplier (0 or 1/(1-rate)).
pub(crate) struct ForwardScratch {
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    mask_scales: Vec<Vec<f64>>,
    deltas: Vec<f64>,
    deltas_next: Vec<f64>,
}

/// One heavy-ball update: v ← momentum·v − lr·g, θ ← θ + v.
pub(crate) fn sgd_momentum_step(
    layers: &mut [Layer],
    velocity: &mut [Layer],
    grads: &[Layer],
    learning_rate: f64,
    momentum: f64,
) {
    for (layer, (v, g)) in layers.iter_mut().zip(velocity.iter_mut().zip(grads)) {
        for (w, (vw, gw)) in layer
            .weights
            .iter_mut()
            .zip(v.weights.iter_mut().zip(&g.weights))
        {
            *vw = momentum * *vw - learning_rate * gw;
            *w += *vw;
        }
        for (b, (vb, gb)) in layer
            .biases
            .iter_mut()
            .zip(v.biases.iter_mut().zip(&g.biases))
        {
            *vb = momentum * *vb - learning_rate * gb;
            *b += *vb;
        }
    }
}

fn run_forward(
    activations: &mut [Vec<f64>],
    pre_activations: &mut [Vec<f64>],
    layers: &[Layer],
    x: &[f64],
    mut mask: impl FnMut(usize, &mut Vec<f64>),
) -> f64 {
    activations[0].clear();
    activations[0].extend_from_slice(x);
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let (inputs, rest) = activations.split_at_mut(l + 1);
        let z = &mut pre_activations[l];
        layer.affine(&inputs[l], z);
        let out = &mut rest[0];
        out.clear();
        if l == last {
            out.extend_from_slice(z);
        } else {
            out.extend(z.iter().map(|v| v.max(0.0)));
            mask(l, out);
        }
    }
    activations[layers.len()][0]
}

impl ForwardScratch {
    pub(crate) fn new(layers: &[Layer]) -> Self {
        ForwardScratch {
            activations: vec![Vec::new(); layers.len() + 1],
            pre_activations: vec![Vec::new(); layers.len()],
            mask_scales: vec![Vec::new(); layers.len()],
            deltas: Vec::new(),
            deltas_next: Vec::new(),
        }
    }

    /// Output vector of the most recent forward pass.
    pub(crate) fn output(&self) -> &[f64] {
        self.activations.last().expect("scratch always has layers + 1 slots")
    }

    pub(crate) fn deterministic_forward(&mut self, layers: &[Layer], x: &[f64]) -> f64 {
        run_forward(
            &mut self.activations,
            &mut self.pre_activations,
            layers,
            x,
            |_, _| {},
        )
    }

    fn stochastic_forward(
        &mut self,
        layers: &[Layer],
        dropout_rate: f64,
        x: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let keep_scale = 1.0 / (1.0 - dropout_rate);
        let mask_scales = &mut self.mask_scales;
        run_forward(
            &mut self.activations,
            &mut self.pre_activations,
            layers,
            x,
            |l, a| {
                let scales = &mut mask_scales[l];
                scales.clear();
                for v in a.iter_mut() {
                    let s = if rng.random::<f64>() < dropout_rate {
                        0.0
                    } else {
                        keep_scale
                    };
                    scales.push(s);
                    *v *= s;
                }
            },
        )
    }

    /// Accumulate parameter gradients for the most recent forward pass.
    /// `upstream` is the loss gradient w.r.t. the final pre-activations.
    pub(crate) fn backward_params(
        &mut self,
        layers: &[Layer],
        x: &[f64],
        upstream: &[f64],
        grads: &mut [Layer],
    ) {
        debug_assert_eq!(self.activations[0], x);
        self.deltas.clear();
        self.deltas.extend_from_slice(upstream);
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let grad = &mut grads[l];
            let input = &self.activations[l];
            // d loss / d z_l arrives in self.deltas
            for o in 0..layer.out_dim {
                let d = self.deltas[o];
                grad.biases[o] += d;
                let row = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            // propagate to the previous layer's pre-activation
            self.deltas_next.clear();
            self.deltas_next.resize(layer.in_dim, 0.0);
            for o in 0..layer.out_dim {
                let d = self.deltas[o];
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, w) in self.deltas_next.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            let z_prev = &self.pre_activations[l - 1];
            let scales = &self.mask_scales[l - 1];
            for (j, d) in self.deltas_next.iter_mut().enumerate() {
                let relu_grad = if z_prev[j] > 0.0 { 1.0 } else { 0.0 };
                let scale = if scales.is_empty() { 1.0 } else { scales[j] };
                *d *= relu_grad * scale;
            }
            std::mem::swap(&mut self.deltas, &mut self.deltas_next);
        }
    }

    /// Gradient of the most recent deterministic forward w.r.t. the input.
    fn backward_input(&mut self, layers: &[Layer]) -> Vec<f64> {
        self.deltas.clear();
        self.deltas.push(1.0);
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            self.deltas_next.clear();
            self.deltas_next.resize(layer.in_dim, 0.0);
            for o in 0..layer.out_dim {
                let d = self.deltas[o];
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, w) in self.deltas_next.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            if l > 0 {
                let z_prev = &self.pre_activations[l - 1];
                for (j, d) in self.deltas_next.iter_mut().enumerate() {
                    if z_prev[j] <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            std::mem::swap(&mut self.deltas, &mut self.deltas_next);
        }
        self.deltas.clone()
    }
}
