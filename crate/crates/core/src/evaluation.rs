//! Selective-classification benchmark: ROC sweep, AUC and reports.
//!
//! Positives are mispredictions. An example is flagged (rejected) when its
//! score is strictly greater than the threshold ε.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::confidence::{score_batch, ScoreMethod, ScoreRecord, ScoringInputs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// ε producing this point; `±∞` for the end sentinels.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

fn outcomes(records: &[ScoreRecord]) -> Result<Vec<(f64, bool)>> {
    records
        .iter()
        .map(|r| {
            let wrong = r
                .is_misprediction()
                .ok_or_else(|| Error::validation(format!("record {} has no true class", r.example_id)))?;
            if !(r.score.is_finite()) {
                return Err(Error::validation(format!(
                    "record {} has non-finite score {}",
                    r.example_id, r.score
                )));
            }
            Ok((r.score, wrong))
        })
        .collect()
}

fn class_counts(outcomes: &[(f64, bool)]) -> Result<(usize, usize)> {
    let positives = outcomes.iter().filter(|(_, wrong)| *wrong).count();
    let negatives = outcomes.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::validation(format!(
            "ROC undefined: {positives} mispredictions and {negatives} correct predictions"
        )));
    }
    Ok((positives, negatives))
}

/// ROC curve of "flag when score > ε" for detecting mispredictions.
///
/// ε runs over `+∞`, every distinct score (descending) and `-∞`. Consecutive
/// thresholds that land on the same (fpr, tpr) keep only the first.
pub fn roc(records: &[ScoreRecord]) -> Result<RocCurve> {
    let mut data = outcomes(records)?;
    let (positives, negatives) = class_counts(&data)?;
    data.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < data.len() {
        let value = data[i].0;
        // Flagged at ε = value: everything strictly above it, already counted.
        push_point(&mut points, fp as f64 / n, tp as f64 / p, value);
        while i < data.len() && data[i].0 == value {
            if data[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    push_point(&mut points, 1.0, 1.0, f64::NEG_INFINITY);
    let auc = trapezoid(&points);
    Ok(RocCurve { auc, points })
}

fn push_point(points: &mut Vec<RocPoint>, fpr: f64, tpr: f64, threshold: f64) {
    let last = points.last().expect("curve starts with a sentinel");
    if last.fpr != fpr || last.tpr != tpr {
        points.push(RocPoint { fpr, tpr, threshold });
    }
}

/// Trapezoidal area under a polyline of ROC points.
pub fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5)
        .sum()
}

/// AUC as the Mann-Whitney statistic `P(score_wrong > score_correct)` with
/// ties counted as one half, computed from midranks.
pub fn rank_auc(records: &[ScoreRecord]) -> Result<f64> {
    let mut data = outcomes(records)?;
    let (positives, negatives) = class_counts(&data)?;
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Rank sums doubled to stay integral under midranks.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < data.len() {
        let mut j = i;
        while j < data.len() && data[j].0 == data[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, midrank (i + 1 + j) / 2
        let twice_mid = (i + 1 + j) as u128;
        let wrong_in_tie = data[i..j].iter().filter(|(_, w)| *w).count() as u128;
        twice_rank_sum += twice_mid * wrong_in_tie;
        i = j;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectiveOutcome {
    /// Fraction of examples kept (score ≤ ε).
    pub coverage: f64,
    /// Accuracy on the kept examples; `None` when nothing is kept.
    pub accuracy: Option<f64>,
}

/// Coverage and accuracy after rejecting every example with score > ε.
pub fn selective_accuracy(records: &[ScoreRecord], epsilon: f64) -> Result<SelectiveOutcome> {
    let data = outcomes(records)?;
    if data.is_empty() {
        return Err(Error::validation("selective_accuracy needs at least one record"));
    }
    let kept: Vec<bool> = data.iter().filter(|(s, _)| *s <= epsilon).map(|(_, w)| !*w).collect();
    let coverage = kept.len() as f64 / data.len() as f64;
    let accuracy = (!kept.is_empty()).then(|| kept.iter().filter(|c| **c).count() as f64 / kept.len() as f64);
    Ok(SelectiveOutcome { coverage, accuracy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub correct: usize,
    pub mispredicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model_fingerprint: Option<String>,
    pub kb_fingerprint: Option<String>,
    pub positive_class: String,
    pub flag_rule: String,
    pub nnd_k: Option<usize>,
    pub mcd_passes: Option<usize>,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub methods: BTreeMap<ScoreMethod, RocCurve>,
    pub counts: Counts,
    pub meta: ReportMeta,
    #[serde(skip)]
    pub records: BTreeMap<ScoreMethod, Vec<ScoreRecord>>,
}

/// Fingerprints copied into the report metadata.
#[derive(Debug, Clone, Default)]
pub struct BenchProvenance {
    pub model_fingerprint: Option<String>,
    pub kb_fingerprint: Option<String>,
    pub timestamp: Option<u64>,
}

/// Scores the same example set with every requested method and builds one ROC curve per method.
pub fn bench(inputs: &ScoringInputs<'_>, methods: &[ScoreMethod], provenance: BenchProvenance) -> Result<BenchReport> {
    if methods.is_empty() {
        return Err(Error::Config("no scoring methods requested".into()));
    }
    let labels = inputs
        .labels
        .ok_or_else(|| Error::Config("benchmark requires labels".into()))?;
    let missing: Vec<String> = methods
        .iter()
        .flat_map(|&m| inputs.missing_for(m).into_iter().map(move |a| format!("{a} (for {m})")))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required input(s): {}",
            missing.join(", ")
        )));
    }
    if labels.len() != inputs.predictions.len() {
        return Err(Error::validation(format!(
            "row count mismatch: {} labels, {} predictions",
            labels.len(),
            inputs.predictions.len()
        )));
    }
    let mispredicted = labels.iter().zip(inputs.predictions).filter(|(l, p)| l != p).count();
    let counts = Counts {
        total: labels.len(),
        correct: labels.len() - mispredicted,
        mispredicted,
    };

    let mut curves = BTreeMap::new();
    let mut records = BTreeMap::new();
    for &method in methods {
        let recs = score_batch(method, inputs)?;
        curves.insert(method, roc(&recs)?);
        records.insert(method, recs);
    }
    let uses = |m| methods.contains(&m);
    Ok(BenchReport {
        methods: curves,
        counts,
        meta: ReportMeta {
            model_fingerprint: provenance.model_fingerprint,
            kb_fingerprint: provenance.kb_fingerprint,
            positive_class: "misprediction".into(),
            flag_rule: "score > threshold".into(),
            nnd_k: uses(ScoreMethod::Nnd).then(|| {
                let k = if inputs.nnd_k == 0 {
                    crate::confidence::DEFAULT_NND_K
                } else {
                    inputs.nnd_k
                };
                inputs.train_features.map_or(k, |t| k.min(t.rows()))
            }),
            mcd_passes: uses(ScoreMethod::Mcd).then(|| inputs.mcd.map(|m| m.passes())).flatten(),
            timestamp: provenance.timestamp,
        },
        records,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::validation(format!("bench report: {e}")))
    }

    /// `method,fpr,tpr,threshold` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,fpr,tpr,threshold\n");
        for (method, curve) in &self.methods {
            for p in &curve.points {
                writeln!(out, "{method},{},{},{}", p.fpr, p.tpr, format_threshold(p.threshold))
                    .expect("writing to a String");
            }
        }
        out
    }

    /// Plain-text AUC table.
    pub fn auc_table(&self) -> String {
        let mut out = format!("{:<10} {:>8}\n", "method", "auc");
        for (method, curve) in &self.methods {
            writeln!(out, "{:<10} {:>8.4}", method.name(), curve.auc).expect("writing to a String");
        }
        out
    }
}

fn format_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".into()
    } else if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        t.to_string()
    }
}

// Points travel as [fpr, tpr, threshold]; JSON has no infinities, so the
// sentinels are written as the strings "inf" / "-inf".
impl Serialize for RocPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(3)?;
        t.serialize_element(&self.fpr)?;
        t.serialize_element(&self.tpr)?;
        if self.threshold.is_finite() {
            t.serialize_element(&self.threshold)?;
        } else {
            t.serialize_element(&format_threshold(self.threshold))?;
        }
        t.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Number(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for RocPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = RocPoint;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("[fpr, tpr, threshold]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<RocPoint, A::Error> {
                let fpr = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let tpr = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let thr: ThresholdRepr = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(2, &self))?;
                let threshold = match thr {
                    ThresholdRepr::Number(v) => v,
                    ThresholdRepr::Text(s) if s == "inf" => f64::INFINITY,
                    ThresholdRepr::Text(s) if s == "-inf" => f64::NEG_INFINITY,
                    ThresholdRepr::Text(s) => return Err(de::Error::custom(format!("bad threshold \"{s}\""))),
                };
                Ok(RocPoint { fpr, tpr, threshold })
            }
        }

        deserializer.deserialize_tuple(3, PointVisitor)
    }
}
