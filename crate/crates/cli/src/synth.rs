//! Deterministic synthetic regression benchmarks.

use clap::ValueEnum;
use dml_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Affine target; a least-squares fit explains it exactly
    Linear,
    /// Depth-2 axis-aligned step target; one shallow tree explains it exactly
    Tree,
    /// Alternating rows from a step-function regime and a smooth nonlinear
    /// regime, with an explicit regime-indicator feature
    TwoRegime,
}

const LINEAR_WEIGHTS: [f64; 6] = [1.5, -2.0, 0.5, 0.0, 1.0, -0.75];
const LINEAR_INTERCEPT: f64 = 0.3;

fn tree_target(x: &[f64]) -> f64 {
    if x[0] <= 0.2 {
        if x[1] <= -0.4 {
            0.95
        } else {
            1.15
        }
    } else if x[1] <= 0.6 {
        1.05
    } else {
        1.25
    }
}

fn step_regime_target(u: &[f64]) -> f64 {
    let mut y = 0.2;
    if u[0] > 0.25 {
        y += 1.0;
    }
    if u[1] > -0.3 {
        y -= 1.2;
    }
    if u[2] > 0.9 {
        y += 0.8;
    }
    y
}

fn smooth_regime_target(u: &[f64]) -> f64 {
    1.5 * (1.1 * u[0]).sin() * (0.9 * u[1]).cos() + 0.4 * u[2] * u[3] + 0.3 * u[4].tanh()
}

/// Generate `n_rows` samples of the requested kind. Rows of the two-regime
/// kind alternate between the regimes, so any prefix stays balanced.
pub fn generate(kind: SynthKind, n_rows: usize, noise_std: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng| -> f64 {
        if noise_std > 0.0 {
            noise_std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        } else {
            0.0
        }
    };
    let mut rows = Vec::with_capacity(n_rows);
    let mut targets = Vec::with_capacity(n_rows);
    let feature_names: Vec<String>;

    match kind {
        SynthKind::Linear => {
            feature_names = (1..=6).map(|i| format!("x{i}")).collect();
            for _ in 0..n_rows {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = x
                    .iter()
                    .zip(&LINEAR_WEIGHTS)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
                    + LINEAR_INTERCEPT
                    + noise(&mut rng);
                rows.push(x);
                targets.push(y);
            }
        }
        SynthKind::Tree => {
            feature_names = (1..=6).map(|i| format!("x{i}")).collect();
            for _ in 0..n_rows {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = tree_target(&x) + noise(&mut rng);
                rows.push(x);
                targets.push(y);
            }
        }
        SynthKind::TwoRegime => {
            feature_names = std::iter::once("regime".to_string())
                .chain((1..=5).map(|i| format!("x{i}")))
                .collect();
            for i in 0..n_rows {
                let regime = (i % 2) as f64;
                let u: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = if regime == 0.0 {
                    step_regime_target(&u)
                } else {
                    smooth_regime_target(&u)
                } + noise(&mut rng);
                let mut x = Vec::with_capacity(6);
                x.push(regime);
                x.extend_from_slice(&u);
                rows.push(x);
                targets.push(y);
            }
        }
    }

    Dataset::from_rows(&rows, targets, feature_names)
        .expect("generated data is finite and rectangular by construction")
}
