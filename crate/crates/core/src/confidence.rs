//! Confidence scores and error detection.
//!
//! Every score is oriented as a distance: 0 means confident, larger means
//! less trustworthy. A prediction is rejected when its score exceeds a
//! threshold.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::BoundProjection;
use crate::error::{Error, Result};
use crate::knowledge_base::{PrototypeSet, SemanticVector};
use crate::matrix::{dot, DenseMatrix};

/// Tolerance on `Σ p = 1` for probability rows.
pub const SIMPLEX_TOL: f64 = 1e-6;

pub const DEFAULT_NND_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Semantic,
    Softmax,
    Nnd,
    Mcd,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 4] = [Self::Semantic, Self::Softmax, Self::Nnd, Self::Mcd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Semantic => "semantic",
            Self::Softmax => "softmax",
            Self::Nnd => "nnd",
            Self::Mcd => "mcd",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scoring method \"{s}\" (expected semantic, softmax, nnd or mcd)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub example_id: usize,
    pub predicted: usize,
    pub true_class: Option<usize>,
    pub score: f64,
    pub method: ScoreMethod,
}

impl ScoreRecord {
    /// `Some(true)` when the prediction is wrong; `None` without ground truth.
    pub fn is_misprediction(&self) -> Option<bool> {
        self.true_class.map(|t| t != self.predicted)
    }
}

/// `1 - cos θ` between two equal-length vectors.
///
/// A zero `s_pred` scores 1 (no attribute evidence); a zero `s_y` is an error.
pub fn cosine_distance(s_pred: &[f64], s_y: &[f64]) -> Result<f64> {
    if s_pred.len() != s_y.len() {
        return Err(Error::shape(
            "semantic_distance",
            format!("length {}", s_y.len()),
            format!("length {}", s_pred.len()),
        ));
    }
    let ny = dot(s_y, s_y);
    if ny.is_nan() || ny <= 0.0 {
        return Err(Error::validation("reference vector has zero norm"));
    }
    let np = dot(s_pred, s_pred);
    if np == 0.0 {
        return Ok(1.0);
    }
    let d = 1.0 - dot(s_pred, s_y) / (np * ny).sqrt();
    // Rounding can push an exact match a hair below zero.
    Ok(d.max(0.0))
}

/// Semantic distance between a projected vector and a class prototype.
pub fn semantic_distance(s_pred: &SemanticVector, s_y: &SemanticVector) -> Result<f64> {
    cosine_distance(s_pred.as_slice(), s_y.as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReading {
    pub group: String,
    pub value: String,
    pub weight: f64,
}

/// Per-group reading of a projected vector and how it relates to the prototypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub groups: Vec<GroupReading>,
    /// The binarized vector is some class's prototype.
    pub valid: bool,
    /// The binarized vector is the predicted class's prototype.
    pub matches_prediction: bool,
    /// Class whose prototype the binarized vector equals, when valid.
    pub matched_class: Option<usize>,
}

impl Explanation {
    pub fn is_error(&self) -> bool {
        !(self.valid && self.matches_prediction)
    }

    /// `"round, red, crossed out=yes, ..."` style summary: the argmax value of each group.
    pub fn attribute_string(&self) -> String {
        self.groups
            .iter()
            .map(|g| format!("{}={}", g.group, g.value))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Binarizes `s_pred` by per-group argmax and checks it against the prototypes.
pub fn detect_error(s_pred: &SemanticVector, predicted: usize, protos: &PrototypeSet) -> Result<Explanation> {
    let expected = protos.get(predicted)?;
    if !s_pred.same_layout(expected) {
        return Err(Error::validation(
            "projected vector layout does not match the prototype layout",
        ));
    }
    let picks = s_pred.group_argmax();
    let layout = s_pred.layout();
    let groups = layout
        .segments()
        .zip(&picks)
        .map(|((group, seg), &v)| GroupReading {
            group: group.name.clone(),
            value: group.values[v].clone(),
            weight: s_pred.as_slice()[seg.start + v],
        })
        .collect();
    let binary = s_pred.binarize();
    let matched_class = protos.find(&binary);
    Ok(Explanation {
        groups,
        valid: matched_class.is_some(),
        matches_prediction: &binary == expected,
        matched_class,
    })
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::validation(format!("{what}: empty probability vector")));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::validation(format!("{what}: invalid probability {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::validation(format!("{what}: probabilities sum to {sum}")));
    }
    Ok(())
}

/// `1 - max p`.
pub fn softmax_score(probs: &[f64]) -> Result<f64> {
    check_simplex(probs, "softmax_score")?;
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 - max).max(0.0))
}

/// Mean Euclidean distance from `feature` to its `k` nearest rows of `train`.
pub fn nnd_score(feature: &[f64], train: &DenseMatrix, k: usize) -> Result<f64> {
    if train.rows() == 0 {
        return Err(Error::validation("nnd_score: empty training set"));
    }
    if k == 0 || k > train.rows() {
        return Err(Error::validation(format!(
            "nnd_score: k must be in 1..={}, got {k}",
            train.rows()
        )));
    }
    if feature.len() != train.cols() {
        return Err(Error::shape(
            "nnd_score",
            format!("feature of length {}", train.cols()),
            format!("length {}", feature.len()),
        ));
    }
    let mut sq: Vec<f64> = train
        .row_iter()
        .map(|r| r.iter().zip(feature).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    sq.select_nth_unstable_by(k - 1, f64::total_cmp);
    let mut nearest = sq[..k].to_vec();
    // Fixed summation order keeps the result independent of the selection permutation.
    nearest.sort_by(f64::total_cmp);
    Ok(nearest.iter().map(|d| d.sqrt()).sum::<f64>() / k as f64)
}

/// Unbiased sample variance of the predicted class's probability over T passes.
///
/// `samples` is T x c, one softmax output per stochastic forward pass.
pub fn mcd_score(samples: &DenseMatrix, predicted: usize) -> Result<f64> {
    mcd_variance(samples.as_slice(), samples.cols(), predicted)
}

fn mcd_variance(flat: &[f64], classes: usize, predicted: usize) -> Result<f64> {
    let passes = flat.len().checked_div(classes).unwrap_or(0);
    if passes < 2 {
        return Err(Error::validation(format!(
            "mcd_score needs at least 2 passes, got {passes}"
        )));
    }
    if predicted >= classes {
        return Err(Error::Index {
            what: "class",
            index: predicted,
            len: classes,
            row: None,
        });
    }
    let mut column = Vec::with_capacity(passes);
    for row in flat.chunks_exact(classes) {
        check_simplex(row, "mcd sample")?;
        column.push(row[predicted]);
    }
    // Sorted accumulation makes the result invariant to pass order; shifting
    // by the first value makes identical passes give exactly zero.
    column.sort_by(f64::total_cmp);
    let shift = column[0];
    let mean = column.iter().map(|p| p - shift).sum::<f64>() / passes as f64;
    let ss: f64 = column.iter().map(|p| (p - shift - mean).powi(2)).sum();
    Ok(ss / (passes - 1) as f64)
}

/// Stochastic-pass softmax outputs for a batch: `passes` rows per example,
/// stored example-major.
#[derive(Debug, Clone, PartialEq)]
pub struct McdSamples {
    passes: usize,
    data: DenseMatrix,
}

impl McdSamples {
    pub fn new(passes: usize, data: DenseMatrix) -> Result<Self> {
        if passes < 2 {
            return Err(Error::validation(format!("MCD needs at least 2 passes, got {passes}")));
        }
        if data.rows() % passes != 0 {
            return Err(Error::validation(format!(
                "{} MCD rows is not a multiple of {passes} passes",
                data.rows()
            )));
        }
        Ok(Self { passes, data })
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn classes(&self) -> usize {
        self.data.cols()
    }

    pub fn num_examples(&self) -> usize {
        self.data.rows() / self.passes
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    /// Flattened `passes x classes` block for one example.
    pub fn example(&self, i: usize) -> &[f64] {
        let width = self.passes * self.classes();
        &self.data.as_slice()[i * width..(i + 1) * width]
    }

    pub fn example_matrix(&self, i: usize) -> Result<DenseMatrix> {
        DenseMatrix::new(self.passes, self.classes(), self.example(i).to_vec())
    }
}

/// Everything a batch of scorers may need. Only `predictions` is mandatory;
/// each method checks for its own inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoringInputs<'a> {
    pub predictions: &'a [usize],
    pub labels: Option<&'a [usize]>,
    /// Test features, m x n.
    pub features: Option<&'a DenseMatrix>,
    pub projection: Option<&'a BoundProjection<'a>>,
    pub prototypes: Option<&'a PrototypeSet>,
    /// Softmax outputs, m x c.
    pub probs: Option<&'a DenseMatrix>,
    pub train_features: Option<&'a DenseMatrix>,
    pub mcd: Option<&'a McdSamples>,
    pub nnd_k: usize,
}

impl ScoringInputs<'_> {
    /// Names of artifacts `method` needs but that are absent.
    pub fn missing_for(&self, method: ScoreMethod) -> Vec<&'static str> {
        let mut missing = Vec::new();
        let mut need = |present: bool, name| {
            if !present {
                missing.push(name);
            }
        };
        match method {
            ScoreMethod::Semantic => {
                need(self.features.is_some(), "features");
                need(self.projection.is_some(), "model");
                need(self.prototypes.is_some(), "kb");
            }
            ScoreMethod::Softmax => need(self.probs.is_some(), "probs"),
            ScoreMethod::Nnd => {
                need(self.features.is_some(), "features");
                need(self.train_features.is_some(), "train-features");
            }
            ScoreMethod::Mcd => need(self.mcd.is_some(), "mcd"),
        }
        missing
    }

    fn check_alignment(&self) -> Result<usize> {
        let m = self.predictions.len();
        let check = |name: &str, rows: Option<usize>| match rows {
            Some(r) if r != m => Err(Error::validation(format!(
                "row count mismatch: {m} predictions but {r} {name} rows"
            ))),
            _ => Ok(()),
        };
        check("label", self.labels.map(<[usize]>::len))?;
        check("feature", self.features.map(DenseMatrix::rows))?;
        check("probability", self.probs.map(DenseMatrix::rows))?;
        check("MCD example", self.mcd.map(McdSamples::num_examples))?;
        Ok(m)
    }
}

/// Scores every example with `method`, ordered by example id.
pub fn score_batch(method: ScoreMethod, inputs: &ScoringInputs<'_>) -> Result<Vec<ScoreRecord>> {
    let missing = inputs.missing_for(method);
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "method {method} requires missing input(s): {}",
            missing.join(", ")
        )));
    }
    let m = inputs.check_alignment()?;
    let k = if inputs.nnd_k == 0 { DEFAULT_NND_K } else { inputs.nnd_k };
    let nnd_k = inputs.train_features.map_or(k, |t| k.min(t.rows()));

    let score_one = |i: usize| -> Result<f64> {
        let predicted = inputs.predictions[i];
        match method {
            ScoreMethod::Semantic => {
                let projection = inputs.projection.expect("checked");
                let protos = inputs.prototypes.expect("checked");
                let features = inputs.features.expect("checked");
                let s_pred = projection.project(features.row(i))?;
                semantic_distance(&s_pred, protos.get(predicted)?)
            }
            ScoreMethod::Softmax => softmax_score(inputs.probs.expect("checked").row(i)),
            ScoreMethod::Nnd => nnd_score(
                inputs.features.expect("checked").row(i),
                inputs.train_features.expect("checked"),
                nnd_k,
            ),
            ScoreMethod::Mcd => {
                let mcd = inputs.mcd.expect("checked");
                mcd_variance(mcd.example(i), mcd.classes(), predicted)
            }
        }
    };

    (0..m)
        .into_par_iter()
        .map(|i| {
            let score = score_one(i)?;
            Ok(ScoreRecord {
                example_id: i,
                predicted: inputs.predictions[i],
                true_class: inputs.labels.map(|l| l[i]),
                score,
                method,
            })
        })
        .collect()
}
