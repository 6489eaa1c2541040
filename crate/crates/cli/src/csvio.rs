//! CSV ingestion with coordinate-bearing schema errors.
//!
//! Schema: comma delimiter, mandatory header row, one target column by name,
//! every other column parsed as a real-valued feature in header order. Rows
//! with mismatched arity or non-numeric cells are rejected with their row
//! number (1-based, excluding the header) and column name.

use std::path::Path;

use dml_core::Dataset;

use crate::CliError;

/// Feature matrix read from CSV: header names and row-major values.
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64, CliError> {
    let parsed: f64 = value.trim().parse().map_err(|_| {
        CliError::Data(format!(
            "row {row}, column {column:?}: cannot parse {value:?} as a number"
        ))
    })?;
    if !parsed.is_finite() {
        return Err(CliError::Data(format!(
            "row {row}, column {column:?}: non-finite value {value:?}"
        )));
    }
    Ok(parsed)
}

/// Read features and targets; the target column must exist.
pub fn read_dataset(path: &Path, target_col: &str) -> Result<Dataset, CliError> {
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let Some(target_idx) = headers.iter().position(|h| h == target_col) else {
        return Err(CliError::Data(format!(
            "target column {target_col:?} not found in {}",
            path.display()
        )));
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(CliError::Data(format!(
            "{} has no feature columns besides the target",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record =
            record.map_err(|e| CliError::Data(format!("row {row_no}: {e}")))?;
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, value) in record.iter().enumerate() {
            let parsed = parse_cell(value, row_no, &headers[j])?;
            if j == target_idx {
                targets.push(parsed);
            } else {
                features.push(parsed);
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{} contains a header but no data rows",
            path.display()
        )));
    }
    Dataset::from_rows(&rows, targets, feature_names)
        .map_err(|e| CliError::Data(e.to_string()))
}

/// Read feature rows only; a target column is dropped when present. Zero
/// data rows is legal here (prediction of an empty file is a no-op).
pub fn read_feature_table(path: &Path, target_col: &str) -> Result<FeatureTable, CliError> {
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let target_idx = headers.iter().position(|h| h == target_col);
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(CliError::Data(format!(
            "{} has no feature columns",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record =
            record.map_err(|e| CliError::Data(format!("row {row_no}: {e}")))?;
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, value) in record.iter().enumerate() {
            if Some(j) == target_idx {
                continue;
            }
            features.push(parse_cell(value, row_no, &headers[j])?);
        }
        rows.push(features);
    }
    Ok(FeatureTable {
        feature_names,
        rows,
    })
}

/// Write a dataset as CSV with fixed six-decimal formatting.
pub fn write_dataset(data: &Dataset, target_col: &str, path: &Path) -> Result<(), CliError> {
    use std::io::Write;
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = |line: String| {
        writeln!(out, "{line}").map_err(|e| CliError::Data(format!("write failed: {e}")))
    };
    write(format!("{},{}", data.feature_names().join(","), target_col))?;
    for (row, target) in data.rows().zip(data.targets()) {
        let cells: Vec<String> = row
            .iter()
            .chain(std::iter::once(target))
            .map(|v| format!("{v:.6}"))
            .collect();
        write(cells.join(","))?;
    }
    Ok(())
}
