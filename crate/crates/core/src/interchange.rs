//! On-disk interchange formats.
//!
//! Matrices are headerless comma-separated files with one example per line,
//! LF line endings and shortest round-trip decimal floats. Label and
//! prediction files have a single integer column. MCD samples use a long
//! format: `example_id,pass_id,p_0,...,p_{c-1}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confidence::{McdSamples, SIMPLEX_TOL};
use crate::error::{Error, Result};
use crate::knowledge_base::KnowledgeBase;
use crate::matrix::DenseMatrix;
use crate::synthetic::{Emulation, SynthConfig, SyntheticSet};

pub const TRAIN_FEATURES: &str = "train_features.csv";
pub const TRAIN_LABELS: &str = "train_labels.csv";
pub const FEATURES: &str = "features.csv";
pub const LABELS: &str = "labels.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PROBS: &str = "probs.csv";
pub const MCD: &str = "mcd.csv";
pub const KB: &str = "kb.json";
pub const META: &str = "meta.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_owned(),
        message: format!("line {line}: {msg}"),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, i + 1, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(out)
}

/// Reads a numeric matrix. An empty file yields `0 x expected_cols`
/// (or 0 x 0 without an expectation).
pub fn read_matrix(path: &Path, expected_cols: Option<usize>) -> Result<DenseMatrix> {
    let records = read_records(path)?;
    let mut rows = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let row: Vec<f64> = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(path, i + 1, format!("not a number: \"{v}\"")))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {first} columns, found {}", row.len()),
                ));
            }
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(path, i + 1, format!("non-finite value {v}")));
        }
        rows.push(row);
    }
    let cols = expected_cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if let Some(first) = rows.first() {
        if first.len() != cols {
            return Err(parse_err(
                path,
                1,
                format!("expected {cols} columns, found {}", first.len()),
            ));
        }
    }
    DenseMatrix::from_rows_with_cols(&rows, cols)
}

/// Reads a single column of class indices.
pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    read_records(path)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.len() != 1 {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected 1 column, found {}", rec.len()),
                ));
            }
            rec[0]
                .parse::<usize>()
                .map_err(|_| parse_err(path, i + 1, format!("not a class index: \"{}\"", rec[0])))
        })
        .collect()
}

/// Checks that every index is below `classes`.
pub fn check_indices(path: &Path, indices: &[usize], classes: usize) -> Result<()> {
    match indices.iter().position(|&c| c >= classes) {
        Some(i) => Err(parse_err(
            path,
            i + 1,
            format!("class index {} >= {classes} classes", indices[i]),
        )),
        None => Ok(()),
    }
}

/// Reads a probability matrix and checks that each row is on the simplex.
pub fn read_probs(path: &Path, classes: usize) -> Result<DenseMatrix> {
    let m = read_matrix(path, Some(classes))?;
    for (i, row) in m.row_iter().enumerate() {
        check_prob_row(path, i + 1, row)?;
    }
    Ok(m)
}

fn check_prob_row(path: &Path, line: usize, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| *p < 0.0) {
        return Err(parse_err(path, line, "negative probability"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(parse_err(path, line, format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// Reads long-format MCD samples for `examples` examples of `classes` classes.
///
/// Rows may come in any order, but every example must have the same set of
/// pass ids `0..T`.
pub fn read_mcd(path: &Path, examples: usize, classes: usize) -> Result<McdSamples> {
    let records = read_records(path)?;
    let mut entries: Vec<(usize, usize, Vec<f64>)> = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 1;
        if rec.len() != classes + 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", classes + 2, rec.len()),
            ));
        }
        let id = |s: &str, what| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line, format!("bad {what} \"{s}\"")))
        };
        let example = id(&rec[0], "example_id")?;
        let pass = id(&rec[1], "pass_id")?;
        if example >= examples {
            return Err(parse_err(
                path,
                line,
                format!("example_id {example} >= {examples} examples"),
            ));
        }
        let probs: Vec<f64> = rec[2..]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("not a number: \"{v}\"")))
            })
            .collect::<Result<_>>()?;
        check_prob_row(path, line, &probs)?;
        entries.push((example, pass, probs));
    }
    if examples == 0 {
        return McdSamples::new(2, DenseMatrix::zeros(0, classes));
    }
    if entries.len() % examples != 0 {
        return Err(Error::validation(format!(
            "{}: {} rows is not a whole number of passes for {examples} examples",
            path.display(),
            entries.len()
        )));
    }
    let passes = entries.len() / examples;
    entries.sort_by_key(|(e, p, _)| (*e, *p));
    for (i, (e, p, _)) in entries.iter().enumerate() {
        if *e != i / passes || *p != i % passes {
            return Err(Error::validation(format!(
                "{}: expected passes 0..{passes} for every example; example {} pass {} is out of place",
                path.display(),
                e,
                p
            )));
        }
    }
    let data: Vec<f64> = entries.into_iter().flat_map(|(_, _, p)| p).collect();
    McdSamples::new(passes, DenseMatrix::new(examples * passes, classes, data)?)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn join_row(row: &[f64]) -> String {
    row.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = create(path)?;
    for row in m.row_iter() {
        writeln!(w, "{}", join_row(row)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_indices(path: &Path, v: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    for x in v {
        writeln!(w, "{x}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_mcd(path: &Path, mcd: &McdSamples) -> Result<()> {
    let mut w = create(path)?;
    for (i, row) in mcd.data().row_iter().enumerate() {
        writeln!(w, "{},{},{}", i / mcd.passes(), i % mcd.passes(), join_row(row)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::from_json(&read_text(path)?).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Generator configuration file. `kb` is a path relative to the config file;
/// when absent the bundled traffic-sign KB is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfigFile {
    pub seed: u64,
    #[serde(default)]
    pub kb: Option<PathBuf>,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    pub misprediction_rate: f64,
    pub mcd_passes: usize,
    #[serde(default)]
    pub emulation: Emulation,
}

impl SynthConfigFile {
    pub fn load(path: &Path) -> Result<SynthConfig> {
        Self::load_with_kb_source(path).map(|(cfg, _)| cfg)
    }

    /// Like [`SynthConfigFile::load`], also returning the KB JSON text so it
    /// can be copied next to the generated data unchanged.
    pub fn load_with_kb_source(path: &Path) -> Result<(SynthConfig, String)> {
        let file: SynthConfigFile = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let (kb, kb_json) = match &file.kb {
            Some(rel) => {
                let kb_path = path.parent().unwrap_or(Path::new(".")).join(rel);
                (load_kb(&kb_path)?, read_text(&kb_path)?)
            }
            None => (
                KnowledgeBase::bundled_traffic_signs(),
                KnowledgeBase::bundled_traffic_signs_json().to_owned(),
            ),
        };
        let cfg = SynthConfig {
            seed: file.seed,
            feature_dim: file.feature_dim,
            train_per_class: file.train_per_class,
            test_per_class: file.test_per_class,
            spread: file.spread,
            misprediction_rate: file.misprediction_rate,
            mcd_passes: file.mcd_passes,
            kb,
            emulation: file.emulation,
        };
        cfg.validate()?;
        Ok((cfg, kb_json))
    }
}

/// Writes a generated set plus its KB and generator metadata into `dir`.
pub fn write_synthetic_set(dir: &Path, set: &SyntheticSet, kb: &KnowledgeBase, kb_json: &str) -> Result<()> {
    debug_assert_eq!(kb.fingerprint(), set.meta.kb_fingerprint);
    write_matrix(&dir.join(TRAIN_FEATURES), &set.train_features)?;
    write_indices(&dir.join(TRAIN_LABELS), &set.train_labels)?;
    write_matrix(&dir.join(FEATURES), &set.test_features)?;
    write_indices(&dir.join(LABELS), &set.test_labels)?;
    write_indices(&dir.join(PREDICTIONS), &set.predictions)?;
    write_matrix(&dir.join(PROBS), &set.probs)?;
    write_mcd(&dir.join(MCD), &set.mcd)?;
    write_text(&dir.join(KB), kb_json)?;
    let meta = serde_json::to_string_pretty(&set.meta).expect("meta serializes") + "\n";
    write_text(&dir.join(META), &meta)
}
