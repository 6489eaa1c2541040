//! Property suite for the numeric invariants the library promises.

use dml_core::gbrt::{GbrtModel, TreeNode};
use dml_core::metalearner::GateProbabilities;
use dml_core::numkit::{mae, rmse, softmax, Standardizer};
use proptest::collection::vec;
use proptest::prelude::*;

fn tree_strategy(n_features: usize) -> impl Strategy<Value = TreeNode> {
    let leaf = (-10.0..10.0f64).prop_map(|value| TreeNode::Leaf { value });
    leaf.prop_recursive(3, 24, 2, move |inner| {
        (0..n_features, -5.0..5.0f64, inner.clone(), inner).prop_map(
            |(feature, threshold, left, right)| TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            },
        )
    })
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        logits in vec(-50.0..50.0f64, 1..8),
        shift in -30.0..30.0f64,
    ) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let a = softmax(&logits).unwrap();
        let b = softmax(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.iter().all(|p| *p >= 0.0 && *p <= 1.0));
    }

    #[test]
    fn rmse_dominates_mae(pairs in vec((-100.0..100.0f64, -100.0..100.0f64), 1..40)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let rmse = rmse(&pred, &truth).unwrap();
        let mae = mae(&pred, &truth).unwrap();
        prop_assert!(mae >= 0.0);
        prop_assert!(rmse + 1e-12 >= mae, "rmse {rmse} < mae {mae}");
    }

    #[test]
    fn standardize_then_invert_is_identity(
        rows in (1usize..5).prop_flat_map(|d| vec(vec(-1e4..1e4f64, d..=d), 2..20)),
    ) {
        let standardizer = Standardizer::fit_rows(&rows).unwrap();
        for row in &rows {
            let z = standardizer.transform_row(row).unwrap();
            let back = standardizer.inverse_row(&z).unwrap();
            for (orig, rec) in row.iter().zip(&back) {
                let tol = 1e-10 * orig.abs().max(1.0);
                prop_assert!((orig - rec).abs() <= tol, "{orig} became {rec}");
            }
        }
    }

    #[test]
    fn gate_weights_are_a_convex_pair(
        logits in vec(-100.0..100.0f64, 3..=3),
        y_xgb in -50.0..50.0f64,
        y_nn in -50.0..50.0f64,
    ) {
        let p = softmax(&logits).unwrap();
        let p = GateProbabilities::new(p[0], p[1], p[2]).unwrap();
        let (w_xgb, w_nn) = p.weights();
        prop_assert!((w_xgb + w_nn - 1.0).abs() < 1e-9);
        let blended = w_xgb * y_xgb + w_nn * y_nn;
        prop_assert!(blended >= y_xgb.min(y_nn) - 1e-9);
        prop_assert!(blended <= y_xgb.max(y_nn) + 1e-9);
        prop_assert!(p.kl_uniform() >= 0.0);
    }

    #[test]
    fn boosted_prediction_decomposes(
        (n_features, trees, x) in (1usize..4).prop_flat_map(|d| {
            (Just(d), vec(tree_strategy(d), 1..6), vec(-8.0..8.0f64, d..=d))
        }),
        base_score in -10.0..10.0f64,
        learning_rate in 0.01..1.0f64,
    ) {
        let model = GbrtModel::from_parts(
            base_score,
            trees,
            learning_rate,
            vec![0.0; n_features],
            n_features,
        )
        .unwrap();
        let contributions = model.per_tree_contributions(&x).unwrap();
        let recombined = base_score + contributions.iter().sum::<f64>();
        let direct = model.predict(&x).unwrap();
        prop_assert!((direct - recombined).abs() < 1e-10);
        prop_assert!(model.confidence(&x).unwrap() >= 0.0);
    }
}
