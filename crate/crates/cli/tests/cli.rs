//! Behavior tests driving the compiled `dml` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dml_core::gbrt::{GbrtConfig, GbrtModel};
use dml_core::numkit::r2;

fn dml(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf8 stdout")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("utf8 stderr")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// CSV parsed into (header, numeric rows); non-numeric cells become NaN.
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .expect("header present")
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

const QUICK_CONFIG: &str = "\
gbrt.n_estimators=15\n\
gbrt.max_depth=3\n\
mlp.hidden_sizes=16,8\n\
mlp.epochs=40\n\
mlp.learning_rate=0.005\n\
gate.hidden_sizes=16\n\
gate.epochs=40\n\
gate.learning_rate=0.005\n\
mc_samples=10\n\
ig_steps=10\n";

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["linear", "tree", "two-regime"] {
        let run = |name: &str| {
            let out = dml(
                dir.path(),
                &[
                    "synth", "--kind", kind, "--rows", "40", "--noise-std", "0.2", "--seed",
                    "9", "--out", name,
                ],
            );
            assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
            std::fs::read(dir.path().join(name)).unwrap()
        };
        assert_eq!(run("a.csv"), run("b.csv"), "kind {kind}");
    }
}

/// Least-squares fit via the normal equations, solved with Gaussian
/// elimination. Independent of anything in the library.
fn affine_fit_r2(rows: &[Vec<f64>], targets: &[f64]) -> f64 {
    let d = rows[0].len() + 1;
    let mut ata = vec![vec![0.0; d]; d];
    let mut atb = vec![0.0; d];
    for (row, &y) in rows.iter().zip(targets) {
        let ext: Vec<f64> = row.iter().cloned().chain(std::iter::once(1.0)).collect();
        for i in 0..d {
            atb[i] += ext[i] * y;
            for j in 0..d {
                ata[i][j] += ext[i] * ext[j];
            }
        }
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
            .unwrap();
        ata.swap(col, pivot);
        atb.swap(col, pivot);
        let diag = ata[col][col];
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = ata[r][col] / diag;
            for c in 0..d {
                ata[r][c] -= factor * ata[col][c];
            }
            atb[r] -= factor * atb[col];
        }
    }
    let coef: Vec<f64> = (0..d).map(|i| atb[i] / ata[i][i]).collect();
    let pred: Vec<f64> = rows
        .iter()
        .map(|row| {
            row.iter().zip(&coef).map(|(x, w)| x * w).sum::<f64>() + coef[d - 1]
        })
        .collect();
    r2(&pred, targets).unwrap()
}

#[test]
fn noiseless_linear_kind_is_affine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "linear", "--rows", "300", "--noise-std", "0", "--seed", "4",
            "--out", "lin.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("lin.csv")).unwrap();
    let (header, rows) = parse_csv(&text);
    assert_eq!(header.last().unwrap(), "target");
    let features: Vec<Vec<f64>> = rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect();
    let targets: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
    assert!(affine_fit_r2(&features, &targets) > 0.999);
}

#[test]
fn noiseless_tree_kind_is_one_shallow_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "tree", "--rows", "400", "--noise-std", "0", "--seed", "5",
            "--out", "tree.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("tree.csv")).unwrap();
    let (header, rows) = parse_csv(&text);
    let names: Vec<String> = header[..header.len() - 1].to_vec();
    let features: Vec<Vec<f64>> = rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect();
    let targets: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
    let data = dml_core::Dataset::from_rows(&features, targets.clone(), names).unwrap();
    // the target is a depth-2 tree, but greedy splitting may pick a different
    // root; one deeper tree still carves out every plateau exactly
    let config = GbrtConfig {
        n_estimators: 1,
        learning_rate: 1.0,
        max_depth: 5,
        min_samples_leaf: 1,
        seed: 0,
    };
    let model = GbrtModel::fit(&data, &config).unwrap();
    let pred: Vec<f64> = data.rows().map(|x| model.predict(x).unwrap()).collect();
    assert!(r2(&pred, data.targets()).unwrap() > 0.999);
}

#[test]
fn train_writes_a_deterministic_model_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.cfg", QUICK_CONFIG);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "two-regime", "--rows", "100", "--noise-std", "0.1", "--seed",
            "2", "--out", "data.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);

    let run = |name: &str| {
        let out = dml(
            dir.path(),
            &[
                "train", "data.csv", "--out", name, "--config", "quick.cfg", "--seed", "3",
            ],
        );
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("config.seed=3"), "{text}");
        assert!(text.contains("phase.gbrt status=ok"), "{text}");
        assert!(text.contains("phase.gate status=ok"), "{text}");
        assert!(text.contains(&format!("model.path={name}")), "{text}");
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("m1.json");
    assert!(dir.path().join("m1.json").exists());
    let b = run("m2.json");
    assert_eq!(a, b, "same seed must produce byte-identical model files");
}

#[test]
fn train_rejects_missing_target_column() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "a,b\n1.0,2.0\n3.0,4.0\n");
    let out = dml(dir.path(), &["train", "bad.csv", "--out", "m.json"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("\"target\""), "{}", stderr(&out));
}

#[test]
fn train_rejects_bad_cells_with_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.csv",
        "a,target\n1.0,2.0\nbroken,4.0\n",
    );
    let out = dml(dir.path(), &["train", "bad.csv", "--out", "m.json"]);
    assert_eq!(exit_code(&out), 2);
    let message = stderr(&out);
    assert!(message.contains("row 2"), "{message}");
    assert!(message.contains("\"a\""), "{message}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.cfg", "definitely_not_a_key=1\n");
    write(dir.path(), "d.csv", "a,target\n1.0,2.0\n2.0,3.0\n");
    let out = dml(
        dir.path(),
        &["train", "d.csv", "--out", "m.json", "--config", "bad.cfg"],
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("definitely_not_a_key"));
}

#[test]
fn compare_emits_exactly_four_rows_and_fits_clean_tree_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "tree", "--rows", "2000", "--noise-std", "0", "--seed", "11",
            "--out", "tree.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    write(
        dir.path(),
        "fit.cfg",
        "mlp.dropout_rate=0\nmlp.epochs=600\nmlp.learning_rate=0.01\nmlp.batch_size=32\nmc_samples=5\n",
    );
    let out = dml(
        dir.path(),
        &["compare", "tree.csv", "--config", "fit.cfg", "--seed", "11"],
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(header, vec!["model", "rmse", "mae", "r2"]);
    assert_eq!(rows.len(), 4, "expected exactly 4 data rows");
    let text = stdout(&out);
    for name in ["gbrt", "nn", "average", "dml"] {
        assert!(text.contains(&format!("\n{name},")), "{text}");
    }
    for row in &rows {
        assert_eq!(row.len(), 4);
        let rmse = row[1];
        assert!(rmse < 0.05, "rmse {rmse} not under 0.05 in {text}");
    }
}

#[test]
fn predict_preserves_rows_and_recombines() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.cfg", QUICK_CONFIG);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "linear", "--rows", "120", "--noise-std", "0.1", "--seed",
            "6", "--out", "data.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let out = dml(
        dir.path(),
        &[
            "train", "data.csv", "--out", "m.json", "--config", "quick.cfg", "--seed", "1",
        ],
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let out = dml(dir.path(), &["predict", "data.csv", "--model", "m.json"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(
        header,
        vec![
            "prediction", "y_xgb", "y_nn", "p_xgb", "p_nn", "p_hybrid", "w_xgb", "w_nn",
            "c_xgb", "c_nn"
        ]
    );
    assert_eq!(rows.len(), 120, "one output row per input row");
    for row in &rows {
        let [prediction, y_xgb, y_nn, p_xgb, p_nn, p_hybrid, w_xgb, w_nn, c_xgb, c_nn] =
            row.as_slice()
        else {
            panic!("wrong column count");
        };
        // values are printed at six decimals; allow that rounding
        assert!((prediction - (w_xgb * y_xgb + w_nn * y_nn)).abs() < 2e-6);
        assert!((w_xgb + w_nn - 1.0).abs() < 2e-6);
        assert!((p_xgb + p_nn + p_hybrid - 1.0).abs() < 2e-6);
        assert!(*c_xgb >= 0.0 && *c_nn >= 0.0);
    }
}

#[test]
fn predict_of_header_only_input_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.cfg", QUICK_CONFIG);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "linear", "--rows", "80", "--noise-std", "0", "--seed", "8",
            "--out", "data.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let out = dml(
        dir.path(),
        &[
            "train", "data.csv", "--out", "m.json", "--config", "quick.cfg", "--seed", "2",
        ],
    );
    assert_eq!(exit_code(&out), 0);

    write(
        dir.path(),
        "empty.csv",
        "x1,x2,x3,x4,x5,x6,target\n",
    );
    let out = dml(dir.path(), &["predict", "empty.csv", "--model", "m.json"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("prediction,"));
}

#[test]
fn predict_arity_mismatch_names_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.cfg", QUICK_CONFIG);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "linear", "--rows", "80", "--noise-std", "0", "--seed", "8",
            "--out", "data.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let out = dml(
        dir.path(),
        &[
            "train", "data.csv", "--out", "m.json", "--config", "quick.cfg", "--seed", "2",
        ],
    );
    assert_eq!(exit_code(&out), 0);

    write(dir.path(), "narrow.csv", "a,b,target\n1.0,2.0,3.0\n");
    let out = dml(dir.path(), &["predict", "narrow.csv", "--model", "m.json"]);
    assert_eq!(exit_code(&out), 2);
    let message = stderr(&out);
    assert!(message.contains('6') && message.contains('2'), "{message}");
}

#[test]
fn missing_model_file_is_a_persistence_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", "a,target\n1.0,2.0\n");
    let out = dml(dir.path(), &["predict", "d.csv", "--model", "nope.json"]);
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn inspect_prints_stats_reference_and_importances() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.cfg", QUICK_CONFIG);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "two-regime", "--rows", "200", "--noise-std", "0.1",
            "--seed", "3", "--out", "data.csv",
        ],
    );
    assert_eq!(exit_code(&out), 0);
    let out = dml(
        dir.path(),
        &[
            "train", "data.csv", "--out", "m.json", "--config", "quick.cfg", "--seed", "4",
        ],
    );
    assert_eq!(exit_code(&out), 0);

    let out = dml(dir.path(), &["inspect", "data.csv", "--model", "m.json"]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("# reference means"), "{text}");
    assert!(text.contains("0.485"), "reference values shown: {text}");

    let class_block: Vec<&str> = text.lines().skip(1).take(3).collect();
    let mut mean_sum = 0.0;
    let mut share_sum = 0.0;
    for line in class_block {
        let cells: Vec<&str> = line.split(',').collect();
        mean_sum += cells[1].parse::<f64>().unwrap();
        share_sum += cells[3].parse::<f64>().unwrap();
    }
    assert!((mean_sum - 1.0).abs() < 1e-5, "class means sum to {mean_sum}");
    assert!((share_sum - 1.0).abs() < 1e-5, "argmax shares sum to {share_sum}");

    let importance_sum: f64 = text
        .lines()
        .skip_while(|l| !l.starts_with("feature,"))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((importance_sum - 1.0).abs() < 1e-5, "importances sum to {importance_sum}");
}

#[test]
fn synth_rejects_unknown_kind_and_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "fractal", "--rows", "10", "--out", "x.csv",
        ],
    );
    assert_eq!(exit_code(&out), 1);
    let out = dml(
        dir.path(),
        &[
            "synth", "--kind", "linear", "--rows", "0", "--out", "x.csv",
        ],
    );
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dml(dir.path(), &["--help"]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("train"));
}
