//! Input parsing and staged, all-or-nothing output writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::error::{CliError, CliResult};

/// Lossless text form of a float (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub labels: Option<Vec<String>>,
    pub values: Vec<f64>,
}

fn parse_value(field: &str, line: usize) -> CliResult<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
        return Err(CliError::validation(format!("missing value on line {line}")));
    }
    let v: f64 = f
        .parse()
        .map_err(|_| CliError::validation(format!("line {line}: '{f}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::validation(format!("line {line}: value is not finite")));
    }
    Ok(v)
}

fn read_records(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::validation(format!("malformed CSV in {}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CliError::validation(format!("{} contains no data", path.display())));
    }
    Ok(out)
}

fn is_header(rec: &csv::StringRecord) -> bool {
    rec.iter().next_back().map(|f| f.parse::<f64>().is_err()).unwrap_or(false)
}

/// Reads either `date,value` rows under a header or a single headerless
/// numeric column.
pub fn read_series(path: &Path) -> CliResult<Series> {
    let records = read_records(path)?;
    let header = is_header(&records[0]);
    let width = records[0].len();
    if header && width != 2 {
        return Err(CliError::validation(format!(
            "{}: expected a 'date,value' header, found {width} columns",
            path.display()
        )));
    }
    if !header && width != 1 {
        return Err(CliError::validation(format!(
            "{}: headerless input must have a single column, found {width}",
            path.display()
        )));
    }
    let start = usize::from(header);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in records.iter().enumerate().skip(start) {
        let line = k + 1;
        if rec.len() != width {
            return Err(CliError::validation(format!(
                "line {line}: expected {width} columns, found {}",
                rec.len()
            )));
        }
        if header {
            labels.push(rec[0].to_string());
        }
        values.push(parse_value(&rec[width - 1], line)?);
    }
    Ok(Series {
        labels: header.then_some(labels),
        values,
    })
}

/// Numeric table with a header row; returns column names and rows.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let records = read_records(path)?;
    if !is_header(&records[0]) {
        return Err(CliError::validation(format!("{}: a header row is required", path.display())));
    }
    let names: Vec<String> = records[0].iter().map(str::to_string).collect();
    let mut rows = Vec::with_capacity(records.len() - 1);
    for (k, rec) in records.iter().enumerate().skip(1) {
        if rec.len() != names.len() {
            return Err(CliError::validation(format!(
                "line {}: expected {} columns, found {}",
                k + 1,
                names.len(),
                rec.len()
            )));
        }
        rows.push(rec.iter().map(|f| parse_value(f, k + 1)).collect::<CliResult<Vec<f64>>>()?);
    }
    Ok((names, rows))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files in a staging directory next to the destination and
/// moves them into place only on `commit`, so a failed run leaves nothing
/// behind.
pub struct OutputSet {
    dest: PathBuf,
    staging: TempDir,
    files: Vec<String>,
}

impl OutputSet {
    pub fn new(dest: &Path) -> CliResult<Self> {
        fs::create_dir_all(dest)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dest.display())))?;
        let staging = tempfile::Builder::new().prefix(".volatil-staging-").tempdir_in(dest)?;
        Ok(Self {
            dest: dest.to_path_buf(),
            staging,
            files: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let path = self.staging.path().join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.staging.path().join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let target = self.dest.join(f);
            fs::rename(self.staging.path().join(f), &target)?;
            out.push(target);
        }
        Ok(out)
    }
}
