//! Sample files and study output.
//!
//! Sample CSV: header `x_1,...,x_d,y`, one point per row. Sample JSON:
//! `{"x": [[x_1, ..., x_d], ...], "y": [...]}`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bstt::regression::SampleSet;
use bstt::Dictionary;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::study::StudyResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guessed from the extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown sample format {s:?}"))),
        }
    }
}

/// Points and targets before a dictionary is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSamples {
    /// `M × d`.
    pub points: DMatrix<f64>,
    pub targets: Vec<f64>,
}

impl RawSamples {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> RawSamples {
        RawSamples {
            points: self.points.select_rows(rows),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    pub fn with_dictionary(&self, dictionary: Dictionary) -> Result<SampleSet> {
        Ok(SampleSet::new(
            self.points.clone(),
            self.targets.clone(),
            dictionary,
        )?)
    }
}

fn check_header(fields: &[&str]) -> Result<usize> {
    let n = fields.len();
    if n < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs at least one x column and a y column".into(),
        });
    }
    for (i, f) in fields[..n - 1].iter().enumerate() {
        if f.trim() != format!("x_{}", i + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "column {} is {:?}, expected \"x_{}\"",
                    i + 1,
                    f.trim(),
                    i + 1
                ),
            });
        }
    }
    if fields[n - 1].trim() != "y" {
        return Err(Error::Parse {
            line: 1,
            message: format!("last column is {:?}, expected \"y\"", fields[n - 1].trim()),
        });
    }
    Ok(n - 1)
}

fn parse_value(field: &str, line: u64, column: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: {:?} is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {column}: non-finite value {v}"),
        });
    }
    Ok(v)
}

fn read_csv(path: &Path) -> Result<RawSamples> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let fields: Vec<&str> = header.iter().collect();
    let d = check_header(&fields)?;
    let mut values = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 1 {
            return Err(Error::Dimension {
                row: row + 1,
                line,
                found: record.len(),
                expected: d + 1,
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v = parse_value(field, line, c + 1)?;
            if c < d {
                values.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no sample rows".into(),
        });
    }
    Ok(RawSamples {
        points: DMatrix::from_row_slice(targets.len(), d, &values),
        targets,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDocument {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn read_json(path: &Path) -> Result<RawSamples> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: SampleDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let d = doc.x.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no sample points".into(),
        });
    }
    if doc.x.len() != doc.y.len() {
        return Err(Error::Config(format!(
            "{} points but {} targets",
            doc.x.len(),
            doc.y.len()
        )));
    }
    if let Some(row) = doc.x.iter().position(|r| r.len() != d) {
        return Err(Error::Dimension {
            row: row + 1,
            line: 0,
            found: doc.x[row].len(),
            expected: d,
        });
    }
    Ok(RawSamples {
        points: DMatrix::from_fn(doc.y.len(), d, |i, k| doc.x[i][k]),
        targets: doc.y,
    })
}

/// Reads a sample file without choosing a dictionary.
pub fn read_samples(path: &Path, format: Format) -> Result<RawSamples> {
    match format {
        Format::Csv => read_csv(path),
        Format::Json => read_json(path),
    }
}

/// Reads a sample file into a validated sample set.
pub fn ingest_samples(path: &Path, format: Format, dictionary: Dictionary) -> Result<SampleSet> {
    read_samples(path, format)?.with_dictionary(dictionary)
}

/// Writes samples in the CSV layout read by [`ingest_samples`]. Values are
/// printed in shortest round-trip form, so reading them back is exact.
pub fn write_samples_csv(path: &Path, points: &DMatrix<f64>, targets: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let d = points.ncols();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    header.push("y".into());
    let mut text = header.join(",");
    text.push('\n');
    for (i, y) in targets.iter().enumerate() {
        for k in 0..d {
            text.push_str(&format!("{:?},", points[(i, k)]));
        }
        text.push_str(&format!("{y:?}\n"));
    }
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.jsonl` (one record per trial), `<prefix>.quantiles.csv`
/// and `<prefix>.meta.json`. Returns the paths in that order.
pub fn emit_study(result: &StudyResult, prefix: &Path) -> Result<Vec<PathBuf>> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let jsonl = with_suffix(prefix, ".jsonl");
    fs::write(&jsonl, result.to_jsonl()?).map_err(|e| Error::io(&jsonl, e))?;

    let csv_path = with_suffix(prefix, ".quantiles.csv");
    let csv_err = |e: csv::Error| Error::io(&csv_path, e.into());
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    w.write_record(["space", "M", "q15", "median", "q85", "failed"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
    for q in &result.quantiles {
        w.write_record([
            q.space.to_string(),
            q.m.to_string(),
            opt(q.q15),
            opt(q.median),
            opt(q.q85),
            q.failed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let meta = with_suffix(prefix, ".meta.json");
    fs::write(
        &meta,
        serde_json::to_string_pretty(&result.meta_document())?,
    )
    .map_err(|e| Error::io(&meta, e))?;
    Ok(vec![jsonl, csv_path, meta])
}
