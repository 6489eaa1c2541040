//! Numeric substrate: dense datasets, standardization, seeded splitting,
//! regression metrics, softmax, and deterministic seed/hash helpers.
//!
//! All variance-like statistics in this crate use the population convention
//! (divide by the count), which stays well-defined for a single sample.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

/// Dense row-major feature matrix with a target vector and feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// `features` is row-major with `targets.len() * n_features` entries.
    /// Rejects empty data, shape mismatches, and non-finite values.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        targets: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n_rows = targets.len();
        if n_rows == 0 {
            return Err(DmlError::invalid("dataset must contain at least one row"));
        }
        if n_features == 0 {
            return Err(DmlError::invalid("dataset must have at least one feature"));
        }
        if features.len() != n_rows * n_features {
            return Err(DmlError::invalid(format!(
                "feature buffer holds {} values, expected {} rows x {} features",
                features.len(),
                n_rows,
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(DmlError::invalid(format!(
                "{} feature names for {} features",
                feature_names.len(),
                n_features
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite feature value"));
        }
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite target value"));
        }
        Ok(Dataset {
            features,
            n_features,
            targets,
            feature_names,
        })
    }

    /// Build from per-row feature vectors; every row must have the same length.
    pub fn from_rows(
        rows: &[Vec<f64>],
        targets: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(DmlError::invalid(format!(
                "{} feature rows for {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(DmlError::invalid(format!(
                    "row {} has {} features, expected {}",
                    i,
                    row.len(),
                    d
                )));
            }
            features.extend_from_slice(row);
        }
        Dataset::new(features, d, targets, feature_names)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// New dataset containing the given rows, in the given order.
    fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset::new(features, self.n_features, targets, self.feature_names.clone())
    }
}

/// Per-column affine map to zero mean and unit scale.
///
/// Uses population statistics. Columns whose spread is indistinguishable
/// from rounding noise get their std forced to 1, so transforming a
/// constant column yields zeros instead of amplified dust.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

const CONSTANT_COLUMN_EPS: f64 = 1e-12;

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.n_rows() < 2 {
            return Err(DmlError::invalid(
                "standardizer needs at least two rows to fit",
            ));
        }
        Self::fit_columns(data.n_features(), data.n_rows(), |r, c| data.row(r)[c])
    }

    /// Fit on a plain row-major slice of vectors (used for meta-features).
    pub fn fit_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(DmlError::invalid(
                "standardizer needs at least two rows to fit",
            ));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(DmlError::invalid("rows have inconsistent lengths"));
        }
        Self::fit_columns(d, rows.len(), |r, c| rows[r][c])
    }

    fn fit_columns(d: usize, n: usize, at: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for c in 0..d {
            let mut sum = 0.0;
            for r in 0..n {
                sum += at(r, c);
            }
            let mean = sum / n as f64;
            let mut ss = 0.0;
            for r in 0..n {
                let dev = at(r, c) - mean;
                ss += dev * dev;
            }
            let std = (ss / n as f64).sqrt();
            means[c] = mean;
            stds[c] = if std <= CONSTANT_COLUMN_EPS * (1.0 + mean.abs()) {
                1.0
            } else {
                std
            };
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(DmlError::invalid(format!(
                "expected {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn inverse_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(DmlError::invalid(format!(
                "expected {} features, got {}",
                self.dim(),
                z.len()
            )));
        }
        Ok(z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    /// Standardize every feature row; targets pass through untouched.
    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let mut features = Vec::with_capacity(data.n_rows() * data.n_features());
        for row in data.rows() {
            features.extend_from_slice(&self.transform_row(row)?);
        }
        Dataset::new(
            features,
            data.n_features(),
            data.targets().to_vec(),
            data.feature_names().to_vec(),
        )
    }
}

/// Deterministic train/test partition request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Shuffle rows with a seeded permutation and cut at
/// `floor(n * train_fraction)`. The same spec always produces the same
/// partition; both sides must end up non-empty.
pub fn train_test_split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DmlError::invalid(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = data.n_rows();
    let n_train = ((n as f64) * spec.train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(DmlError::invalid(format!(
            "split of {} rows at fraction {} leaves an empty side",
            n, spec.train_fraction
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let train = data.select(&indices[..n_train])?;
    let test = data.select(&indices[n_train..])?;
    Ok((train, test))
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(DmlError::invalid(format!(
            "prediction length {} does not match truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(DmlError::invalid("metrics need at least one value"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// R² = 1 − SS_res / SS_tot. Undefined when the truth vector is constant.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let (min, max) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return Err(DmlError::UndefinedMetric(
            "R² is undefined for a constant truth vector".into(),
        ));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(DmlError::invalid("softmax of an empty vector"));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(DmlError::invalid("softmax input must be finite"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Population mean and variance. When every entry is bit-identical the
/// result is exact: (x₀, 0).
pub fn population_mean_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let first = xs[0];
    if xs.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var)
}

/// splitmix64 step; used to derive independent sub-seeds from a master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the little-endian bytes of each value. Stable across
/// platforms and builds, so it can seed per-sample randomness.
pub fn hash_f64_slice(xs: &[f64]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for v in xs {
        for byte in v.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let targets: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        Dataset::from_rows(&rows, targets, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new(vec![], 1, vec![], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![1.0], 1, vec![1.0], vec![]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![1.0], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![f64::NAN], 1, vec![1.0], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![1.0], 1, vec![f64::INFINITY], vec!["a".into()]).is_err());
    }

    #[test]
    fn standardize_constant_column_gets_unit_std() {
        let data = Dataset::from_rows(
            &[vec![1.0], vec![1.0], vec![1.0]],
            vec![0.0, 0.0, 0.0],
            vec!["c".into()],
        )
        .unwrap();
        let s = Standardizer::fit(&data).unwrap();
        assert_eq!(s.means(), &[1.0]);
        assert_eq!(s.stds(), &[1.0]);
    }

    #[test]
    fn standardize_two_point_column_uses_population_std() {
        // column {0, 2}: mean 1, population variance ((−1)² + 1²)/2 = 1
        let data = Dataset::from_rows(
            &[vec![0.0], vec![2.0]],
            vec![0.0, 0.0],
            vec!["c".into()],
        )
        .unwrap();
        let s = Standardizer::fit(&data).unwrap();
        assert_eq!(s.means(), &[1.0]);
        assert_eq!(s.stds(), &[1.0]);
    }

    #[test]
    fn standardize_is_near_identity_on_standardized_column() {
        let data = Dataset::from_rows(
            &[vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]],
            vec![0.0; 4],
            vec!["c".into()],
        )
        .unwrap();
        let s = Standardizer::fit(&data).unwrap();
        assert!(s.means()[0].abs() < 1e-12);
        assert!((s.stds()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_fit_requires_two_rows() {
        let data = toy(1);
        assert!(matches!(
            Standardizer::fit(&data),
            Err(DmlError::InvalidInput(_))
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let data = toy(10);
        let (train, test) = train_test_split(
            &data,
            &SplitSpec {
                train_fraction: 0.8,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(train.n_rows(), 8);
        assert_eq!(test.n_rows(), 2);
    }

    #[test]
    fn split_matches_benchmark_sizes() {
        let data = toy(20640);
        let (train, test) = train_test_split(
            &data,
            &SplitSpec {
                train_fraction: 0.8,
                seed: 42,
            },
        )
        .unwrap();
        assert_eq!(train.n_rows(), 16512);
        assert_eq!(test.n_rows(), 4128);
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let data = toy(37);
        let spec = SplitSpec {
            train_fraction: 0.6,
            seed: 7,
        };
        let (a_train, a_test) = train_test_split(&data, &spec).unwrap();
        let (b_train, b_test) = train_test_split(&data, &spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);

        let mut seen: Vec<f64> = a_train
            .targets()
            .iter()
            .chain(a_test.targets())
            .cloned()
            .collect();
        seen.sort_by(f64::total_cmp);
        let mut expect: Vec<f64> = data.targets().to_vec();
        expect.sort_by(f64::total_cmp);
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let data = toy(10);
        for f in [0.0, 1.0, -0.5, 1.5] {
            assert!(train_test_split(
                &data,
                &SplitSpec {
                    train_fraction: f,
                    seed: 0
                }
            )
            .is_err());
        }
    }

    #[test]
    fn metrics_on_perfect_fit() {
        let truth = [1.0, 2.0, 3.0];
        assert_eq!(rmse(&truth, &truth).unwrap(), 0.0);
        assert_eq!(mae(&truth, &truth).unwrap(), 0.0);
        assert_eq!(r2(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn r2_of_mean_predictor_is_zero() {
        let truth = [1.0, 2.0, 3.0, 6.0];
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        let pred = vec![mean; truth.len()];
        assert!(r2(&pred, &truth).unwrap().abs() < 1e-12);
    }

    #[test]
    fn metrics_hand_computed_case() {
        // pred [0,0], truth [3,4]: rmse = sqrt((9+16)/2), mae = (3+4)/2
        let pred = [0.0, 0.0];
        let truth = [3.0, 4.0];
        assert!((rmse(&pred, &truth).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&pred, &truth).unwrap(), 3.5);
    }

    #[test]
    fn metrics_reject_mismatch_and_constant_truth() {
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(matches!(
            r2(&[1.0, 2.0], &[5.0, 5.0]),
            Err(DmlError::UndefinedMetric(_))
        ));
        // constant vector whose mean does not round exactly
        assert!(r2(&[0.1, 0.1, 0.1], &[0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn population_stats_exact_for_identical_entries() {
        let (mean, var) = population_mean_variance(&[0.1, 0.1, 0.1]);
        assert_eq!(mean, 0.1);
        assert_eq!(var, 0.0);
        let (mean, var) = population_mean_variance(&[0.0, 2.0]);
        assert_eq!(mean, 1.0);
        assert_eq!(var, 1.0);
    }

    #[test]
    fn seed_helpers_are_stable() {
        assert_eq!(mix_seed(42, 1), mix_seed(42, 1));
        assert_ne!(mix_seed(42, 1), mix_seed(42, 2));
        assert_eq!(hash_f64_slice(&[1.0, 2.0]), hash_f64_slice(&[1.0, 2.0]));
        assert_ne!(hash_f64_slice(&[1.0, 2.0]), hash_f64_slice(&[2.0, 1.0]));
    }
}
