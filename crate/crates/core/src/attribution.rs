//! Integrated Gradients attribution and fusion with tree importances.
//!
//! Attributions follow the straight path from a baseline to the input,
//! integrating the exact network gradient with a midpoint Riemann rule:
//!
//! IG_i ≈ (x_i − x'_i) · (1/m) Σ_j ∂f/∂x_i at x' + ((j−0.5)/m)(x − x')
//!
//! The midpoint rule is exact for affine networks at any step count. The
//! default baseline is the zero vector in standardized feature space, i.e.
//! the training feature means in raw units.

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::neuralnet::MlpModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// Integration baseline x'. `None` means the zero vector.
    pub baseline: Option<Vec<f64>>,
    /// Number of midpoint integration steps.
    pub steps: usize,
    /// Mixing weight for the tree importance in [`combined_importance`].
    pub lambda: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            baseline: None,
            steps: 50,
            lambda: 0.5,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(DmlError::invalid("attribution needs at least one step"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DmlError::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if let Some(b) = &self.baseline {
            if b.len() != dim {
                return Err(DmlError::invalid(format!(
                    "baseline has {} entries for {} features",
                    b.len(),
                    dim
                )));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(DmlError::invalid("baseline must be finite"));
            }
        }
        Ok(())
    }
}

/// Midpoint-rule Integrated Gradients of the deterministic network output.
pub fn integrated_gradients(
    model: &MlpModel,
    x: &[f64],
    config: &AttributionConfig,
) -> Result<Vec<f64>> {
    let d = model.input_dim();
    config.validate(d)?;
    if x.len() != d {
        return Err(DmlError::invalid(format!(
            "expected {} inputs, got {}",
            d,
            x.len()
        )));
    }
    let zeros;
    let baseline: &[f64] = match &config.baseline {
        Some(b) => b,
        None => {
            zeros = vec![0.0; d];
            &zeros
        }
    };
    if x == baseline {
        return Ok(vec![0.0; d]);
    }

    let m = config.steps;
    let mut acc = vec![0.0; d];
    let mut point = vec![0.0; d];
    for j in 1..=m {
        let alpha = (j as f64 - 0.5) / m as f64;
        for i in 0..d {
            point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        }
        let grad = model.input_gradient(&point)?;
        for i in 0..d {
            acc[i] += grad[i];
        }
    }
    Ok((0..d)
        .map(|i| (x[i] - baseline[i]) * acc[i] / m as f64)
        .collect())
}

fn l1_normalized(values: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let abs: Vec<f64> = values.collect();
    let total: f64 = abs.iter().sum();
    if total > 0.0 {
        abs.into_iter().map(|v| v / total).collect()
    } else {
        vec![0.0; len]
    }
}

/// Blend tree gain importance with per-sample |IG| attributions.
///
/// Each side is first L1-normalized to a distribution so `lambda` acts as a
/// convex mixing weight despite the incomparable raw scales. An all-zero
/// side carries no information and cedes its weight to the other side; when
/// both are zero the result is all-zero.
pub fn combined_importance(xgb_imp: &[f64], ig: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if xgb_imp.len() != ig.len() {
        return Err(DmlError::invalid(format!(
            "importance vectors have mismatched lengths {} and {}",
            xgb_imp.len(),
            ig.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DmlError::invalid(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if xgb_imp.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DmlError::invalid(
            "tree importance entries must be finite and nonnegative",
        ));
    }
    if !ig.iter().all(|v| v.is_finite()) {
        return Err(DmlError::invalid("attribution entries must be finite"));
    }

    let d = xgb_imp.len();
    let tree = l1_normalized(xgb_imp.iter().cloned(), d);
    let grad = l1_normalized(ig.iter().map(|v| v.abs()), d);
    let tree_zero = tree.iter().all(|v| *v == 0.0);
    let grad_zero = grad.iter().all(|v| *v == 0.0);
    Ok(match (tree_zero, grad_zero) {
        (false, true) => tree,
        (true, false) => grad,
        (true, true) => vec![0.0; d],
        (false, false) => tree
            .iter()
            .zip(&grad)
            .map(|(t, g)| lambda * t + (1.0 - lambda) * g)
            .collect(),
    })
}
