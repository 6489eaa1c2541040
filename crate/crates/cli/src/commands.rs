//! Command implementations. Progress lines go to standard error; summaries,
//! tables, and reports go to standard output.

use std::path::Path;

use dml_core::numkit::{train_test_split, SplitSpec};
use dml_core::pipeline::TrainEvent;
use dml_core::{Dataset, DmlError, DmlModel};

use crate::config::{Overrides, RunConfig};
use crate::csvio::{self, FeatureTable};
use crate::synth::{self, SynthKind};
use crate::CliError;

fn train_error(e: DmlError) -> CliError {
    CliError::Train(e.to_string())
}

fn persist_error(e: DmlError) -> CliError {
    CliError::Persist(e.to_string())
}

fn progress(event: &TrainEvent) {
    match event {
        TrainEvent::SplitDone {
            base_rows,
            meta_rows,
        } => eprintln!("split: {base_rows} base rows, {meta_rows} meta rows"),
        TrainEvent::GbrtDone { seconds } => eprintln!("trees fitted in {seconds:.2}s"),
        TrainEvent::MlpDone { seconds } => eprintln!("network fitted in {seconds:.2}s"),
        TrainEvent::MetaFeaturesDone { rows, seconds } => {
            eprintln!("meta-features for {rows} rows in {seconds:.2}s")
        }
        TrainEvent::GateDone { seconds } => eprintln!("gate fitted in {seconds:.2}s"),
    }
}

fn phase_line(event: &TrainEvent) -> String {
    match event {
        TrainEvent::SplitDone {
            base_rows,
            meta_rows,
        } => format!("phase.split status=ok base_rows={base_rows} meta_rows={meta_rows}"),
        TrainEvent::GbrtDone { seconds } => {
            format!("phase.gbrt status=ok seconds={seconds:.3}")
        }
        TrainEvent::MlpDone { seconds } => format!("phase.mlp status=ok seconds={seconds:.3}"),
        TrainEvent::MetaFeaturesDone { rows, seconds } => {
            format!("phase.meta_features status=ok rows={rows} seconds={seconds:.3}")
        }
        TrainEvent::GateDone { seconds } => {
            format!("phase.gate status=ok seconds={seconds:.3}")
        }
    }
}

pub fn train(
    data_path: &Path,
    out: &Path,
    target_col: &str,
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), CliError> {
    let run = RunConfig::load(config_path, overrides)?;
    for line in run.echo_lines() {
        println!("config.{line}");
    }
    let data = csvio::read_dataset(data_path, target_col)?;
    println!(
        "data.rows={} data.features={} data.feature_names={}",
        data.n_rows(),
        data.n_features(),
        data.feature_names().join(",")
    );
    eprintln!(
        "training on {} rows x {} features",
        data.n_rows(),
        data.n_features()
    );
    let model = DmlModel::train_with_events(&data, &run.dml, |event| {
        progress(&event);
        println!("{}", phase_line(&event));
    })
    .map_err(train_error)?;
    model.save(out).map_err(persist_error)?;
    println!("model.path={}", out.display());
    eprintln!("model written to {}", out.display());
    Ok(())
}

pub fn compare(
    data_path: &Path,
    target_col: &str,
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), CliError> {
    let run = RunConfig::load(config_path, overrides)?;
    for line in run.echo_lines() {
        eprintln!("config.{line}");
    }
    let data = csvio::read_dataset(data_path, target_col)?;
    let (train_set, test_set) = train_test_split(
        &data,
        &SplitSpec {
            train_fraction: run.train_fraction,
            seed: run.dml.seed,
        },
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    eprintln!(
        "split: {} train rows, {} test rows",
        train_set.n_rows(),
        test_set.n_rows()
    );
    let model =
        DmlModel::train_with_events(&train_set, &run.dml, |event| progress(&event))
            .map_err(train_error)?;
    eprintln!("evaluating {} test rows", test_set.n_rows());
    let report = model.evaluate(&test_set).map_err(|e| match e {
        DmlError::UndefinedMetric(_) => CliError::Data(e.to_string()),
        other => CliError::Train(other.to_string()),
    })?;

    println!("model,rmse,mae,r2");
    for (name, m) in [
        ("gbrt", report.gbrt),
        ("nn", report.nn),
        ("average", report.average),
        ("dml", report.dml),
    ] {
        println!("{name},{:.6},{:.6},{:.6}", m.rmse, m.mae, m.r2);
    }
    Ok(())
}

fn check_arity(model: &DmlModel, table: &FeatureTable) -> Result<(), CliError> {
    if table.feature_names.len() != model.n_features() {
        return Err(CliError::Data(format!(
            "model expects {} features, data has {}",
            model.n_features(),
            table.feature_names.len()
        )));
    }
    Ok(())
}

pub fn predict(model_path: &Path, data_path: &Path, target_col: &str) -> Result<(), CliError> {
    let model = DmlModel::load(model_path).map_err(persist_error)?;
    let table = csvio::read_feature_table(data_path, target_col)?;
    check_arity(&model, &table)?;

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let emit = |out: &mut dyn std::io::Write, line: String| {
        writeln!(out, "{line}").map_err(|e| CliError::Data(format!("write failed: {e}")))
    };
    emit(
        &mut out,
        "prediction,y_xgb,y_nn,p_xgb,p_nn,p_hybrid,w_xgb,w_nn,c_xgb,c_nn".to_string(),
    )?;
    for (i, row) in table.rows.iter().enumerate() {
        let r = model
            .predict(row)
            .map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))?;
        emit(
            &mut out,
            format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.prediction,
                r.y_xgb,
                r.y_nn,
                r.p.p_xgb,
                r.p.p_nn,
                r.p.p_hybrid,
                r.w_xgb,
                r.w_nn,
                r.c_xgb,
                r.c_nn
            ),
        )?;
    }
    Ok(())
}

pub fn inspect(model_path: &Path, data_path: &Path, target_col: &str) -> Result<(), CliError> {
    let model = DmlModel::load(model_path).map_err(persist_error)?;
    let table = csvio::read_feature_table(data_path, target_col)?;
    check_arity(&model, &table)?;
    if table.rows.is_empty() {
        return Err(CliError::Data(
            "selection statistics need at least one data row".into(),
        ));
    }
    // targets are not consulted by the statistics
    let data = Dataset::from_rows(
        &table.rows,
        vec![0.0; table.rows.len()],
        table.feature_names.clone(),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    let stats = model
        .selection_stats(&data)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let shares = stats.argmax_shares();
    println!("class,mean,std,argmax_share");
    for (name, class, share) in [
        ("xgb", stats.xgb, shares[0]),
        ("nn", stats.nn, shares[1]),
        ("hybrid", stats.hybrid, shares[2]),
    ] {
        println!("{name},{:.6},{:.6},{share:.6}", class.mean, class.std);
    }
    println!(
        "# reference means (California Housing benchmark, not asserted): \
         xgb=0.485 nn=0.335 hybrid=0.180"
    );

    let importance = model
        .mean_fused_importance(&data)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("feature,importance");
    for (name, value) in data.feature_names().iter().zip(&importance) {
        println!("{name},{value:.6}");
    }
    Ok(())
}

pub fn synth(
    kind: SynthKind,
    rows: usize,
    noise_std: f64,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if rows == 0 {
        return Err(CliError::Usage("synth needs at least one row".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(CliError::Usage(format!(
            "noise_std must be a nonnegative number, got {noise_std}"
        )));
    }
    let data = synth::generate(kind, rows, noise_std, seed);
    csvio::write_dataset(&data, "target", out)?;
    eprintln!("wrote {rows} rows to {}", out.display());
    Ok(())
}
