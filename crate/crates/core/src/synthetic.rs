//! Seeded stand-in for a trained classifier.
//!
//! Each attribute value gets a random direction in feature space and each
//! class centroid is the sum of its attribute directions plus a
//! class-specific residual, so features carry the attribute structure a
//! trained network's last hidden layer would. Examples are the centroid plus
//! isotropic Gaussian noise. A fixed number of test examples are replaced by
//! blends of their own centroid and a confuser's, and the emulated classifier
//! predicts the confuser for them. Softmax outputs and Monte-Carlo dropout
//! passes are emitted to match: peaked and stable for clean examples, flatter
//! and noisier for blended ones.
//!
//! Every random draw comes from `ChaCha8Rng` seeded with `seed`, with one
//! stream per purpose (see [`Stream`]), so outputs are bit-identical for a
//! given configuration.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::confidence::McdSamples;
use crate::error::{Error, Result};
use crate::knowledge_base::KnowledgeBase;
use crate::matrix::DenseMatrix;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), set_stream(purpose)";

/// Centroids closer than this many noise standard deviations are redrawn.
pub const MIN_SEPARATION_SIGMAS: f64 = 10.0;

const MAX_CENTROID_ATTEMPTS: usize = 10_000;

/// Independent ChaCha streams, one per kind of draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Centroids = 0,
    TrainNoise = 1,
    TestNoise = 2,
    Corruption = 3,
    Logits = 4,
    Dropout = 5,
}

/// Shape of the emulated classifier's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emulation {
    /// Standard deviation of the coordinates of each attribute-value direction.
    pub attribute_scale: f64,
    /// Standard deviation of the class-specific centroid residual.
    pub residual_scale: f64,
    /// Range of the blend weight placed on the confuser class.
    pub blend_weight: [f64; 2],
    /// Logit margin of the predicted class for clean examples.
    pub clean_margin: [f64; 2],
    /// Logit margin of the predicted class for blended examples.
    pub blended_margin: [f64; 2],
    /// Logit noise per dropout pass.
    pub clean_dropout_noise: f64,
    pub blended_dropout_noise: f64,
}

impl Default for Emulation {
    fn default() -> Self {
        Self {
            attribute_scale: 1.0,
            residual_scale: 0.3,
            blend_weight: [0.2, 0.55],
            clean_margin: [6.0, 12.0],
            blended_margin: [3.0, 9.0],
            clean_dropout_noise: 0.3,
            blended_dropout_noise: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Noise standard deviation σ.
    pub spread: f64,
    pub misprediction_rate: f64,
    pub mcd_passes: usize,
    pub kb: KnowledgeBase,
    pub emulation: Emulation,
}

impl SynthConfig {
    /// 64 features, 50 train and 20 test examples per class, σ = 0.1, 5%
    /// mispredictions, 100 dropout passes.
    pub fn new(kb: KnowledgeBase, seed: u64) -> Self {
        Self {
            seed,
            feature_dim: 64,
            train_per_class: 50,
            test_per_class: 20,
            spread: 0.1,
            misprediction_rate: 0.05,
            mcd_passes: 100,
            kb,
            emulation: Emulation::default(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.kb.num_classes()
    }

    pub fn num_test(&self) -> usize {
        self.num_classes() * self.test_per_class
    }

    /// Exact number of corrupted test examples: `round(rate * m_test)`.
    pub fn num_mispredictions(&self) -> usize {
        (self.misprediction_rate * self.num_test() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(format!("synthetic config: {msg}")));
        if !(0.0..=1.0).contains(&self.misprediction_rate) {
            return bad(format!("misprediction rate {} outside [0, 1]", self.misprediction_rate));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be > 0, got {}", self.spread));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1".into());
        }
        if self.train_per_class == 0 {
            return bad("train_per_class must be >= 1".into());
        }
        if self.mcd_passes < 2 {
            return bad(format!("mcd_passes must be >= 2, got {}", self.mcd_passes));
        }
        let e = &self.emulation;
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(e.attribute_scale > 0.0 && e.residual_scale >= 0.0) {
            return bad("attribute_scale must be > 0 and residual_scale >= 0".into());
        }
        if !range_ok(e.blend_weight) || e.blend_weight[0] < 0.0 || e.blend_weight[1] > 1.0 {
            return bad("blend_weight must be an ordered range inside [0, 1]".into());
        }
        if !range_ok(e.clean_margin) || !range_ok(e.blended_margin) {
            return bad("logit margins must be ordered finite ranges".into());
        }
        if !(e.clean_dropout_noise >= 0.0 && e.blended_dropout_noise >= 0.0) {
            return bad("dropout noise must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub rng: String,
    pub seed: u64,
    pub streams: Vec<Stream>,
    pub classes: usize,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    pub misprediction_rate: f64,
    pub mispredictions: usize,
    pub mcd_passes: usize,
    pub kb_fingerprint: String,
    pub emulation: Emulation,
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub centroids: DenseMatrix,
    pub train_features: DenseMatrix,
    pub train_labels: Vec<usize>,
    pub test_features: DenseMatrix,
    pub test_labels: Vec<usize>,
    pub predictions: Vec<usize>,
    /// Softmax outputs for the test set, m x c.
    pub probs: DenseMatrix,
    pub mcd: McdSamples,
    /// Which test examples were blended (and mispredicted).
    pub corrupted: Vec<bool>,
    pub meta: GeneratorMeta,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticSet> {
    cfg.validate()?;
    let c = cfg.num_classes();
    let n = cfg.feature_dim;
    let em = &cfg.emulation;
    let noise = Normal::new(0.0, cfg.spread).map_err(|e| Error::validation(e.to_string()))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let centroids = draw_centroids(cfg)?;

    let mut rng = stream(cfg.seed, Stream::TrainNoise);
    let mut train = Vec::with_capacity(c * cfg.train_per_class * n);
    let mut train_labels = Vec::with_capacity(c * cfg.train_per_class);
    for class in 0..c {
        for _ in 0..cfg.train_per_class {
            train.extend(centroids.row(class).iter().map(|mu| mu + noise.sample(&mut rng)));
            train_labels.push(class);
        }
    }
    let train_features = DenseMatrix::new(train_labels.len(), n, train)?;

    let m = cfg.num_test();
    let test_labels: Vec<usize> = (0..c)
        .flat_map(|class| std::iter::repeat(class).take(cfg.test_per_class))
        .collect();
    let mut corrupted = vec![false; m];
    let mut confuser = vec![0usize; m];
    let mut blend = vec![0.0f64; m];
    let mut rng = stream(cfg.seed, Stream::Corruption);
    for i in index::sample(&mut rng, m, cfg.num_mispredictions()).into_vec() {
        corrupted[i] = true;
    }
    for i in 0..m {
        if corrupted[i] {
            let other = rng.random_range(0..c - 1);
            confuser[i] = if other >= test_labels[i] { other + 1 } else { other };
            blend[i] = uniform(&mut rng, em.blend_weight);
        }
    }
    let predictions: Vec<usize> = (0..m)
        .map(|i| if corrupted[i] { confuser[i] } else { test_labels[i] })
        .collect();

    let mut rng = stream(cfg.seed, Stream::TestNoise);
    let mut test = Vec::with_capacity(m * n);
    for i in 0..m {
        let own = centroids.row(test_labels[i]);
        if corrupted[i] {
            let other = centroids.row(confuser[i]);
            let t = blend[i];
            test.extend(
                own.iter()
                    .zip(other)
                    .map(|(a, b)| (1.0 - t) * a + t * b + noise.sample(&mut rng)),
            );
        } else {
            test.extend(own.iter().map(|mu| mu + noise.sample(&mut rng)));
        }
    }
    let test_features = DenseMatrix::new(m, n, test)?;

    let mut rng = stream(cfg.seed, Stream::Logits);
    let mut logits = Vec::with_capacity(m);
    for i in 0..m {
        let mut l: Vec<f64> = (0..c).map(|_| std_normal.sample(&mut rng)).collect();
        if corrupted[i] {
            let margin = uniform(&mut rng, em.blended_margin);
            l[predictions[i]] += margin;
            l[test_labels[i]] += rng.random_range(0.0..1.0) * margin;
        } else {
            l[predictions[i]] += uniform(&mut rng, em.clean_margin);
        }
        // The emulated classifier predicts its own argmax.
        let top = argmax(&l);
        if top != predictions[i] {
            l.swap(top, predictions[i]);
        }
        logits.push(l);
    }
    let probs_rows: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
    let probs = DenseMatrix::from_rows_with_cols(&probs_rows, c)?;

    let mut rng = stream(cfg.seed, Stream::Dropout);
    let mut mcd = Vec::with_capacity(m * cfg.mcd_passes * c);
    for i in 0..m {
        let tau = if corrupted[i] {
            em.blended_dropout_noise
        } else {
            em.clean_dropout_noise
        };
        for _ in 0..cfg.mcd_passes {
            let noisy: Vec<f64> = logits[i]
                .iter()
                .map(|l| l + tau * std_normal.sample(&mut rng))
                .collect();
            mcd.extend(softmax(&noisy));
        }
    }
    let mcd = McdSamples::new(cfg.mcd_passes, DenseMatrix::new(m * cfg.mcd_passes, c, mcd)?)?;

    let meta = GeneratorMeta {
        rng: RNG_ALGORITHM.to_owned(),
        seed: cfg.seed,
        streams: vec![
            Stream::Centroids,
            Stream::TrainNoise,
            Stream::TestNoise,
            Stream::Corruption,
            Stream::Logits,
            Stream::Dropout,
        ],
        classes: c,
        feature_dim: n,
        train_per_class: cfg.train_per_class,
        test_per_class: cfg.test_per_class,
        spread: cfg.spread,
        misprediction_rate: cfg.misprediction_rate,
        mispredictions: cfg.num_mispredictions(),
        mcd_passes: cfg.mcd_passes,
        kb_fingerprint: cfg.kb.fingerprint().to_owned(),
        emulation: em.clone(),
    };

    Ok(SyntheticSet {
        centroids,
        train_features,
        train_labels,
        test_features,
        test_labels,
        predictions,
        probs,
        mcd,
        corrupted,
        meta,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn draw_centroids(cfg: &SynthConfig) -> Result<DenseMatrix> {
    let c = cfg.num_classes();
    let n = cfg.feature_dim;
    let em = &cfg.emulation;
    let min_sq = (MIN_SEPARATION_SIGMAS * cfg.spread).powi(2);
    let attr = Normal::new(0.0, em.attribute_scale).map_err(|e| Error::validation(e.to_string()))?;
    let residual = Normal::new(0.0, em.residual_scale).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = stream(cfg.seed, Stream::Centroids);

    // One direction per attribute value, k x n.
    let k = cfg.kb.dim();
    let directions: Vec<f64> = (0..k * n).map(|_| attr.sample(&mut rng)).collect();
    let layout = cfg.kb.layout();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(c);
    for (class, entry) in cfg.kb.classes().iter().enumerate() {
        let mut base = vec![0.0; n];
        for (g, &v) in entry.values.iter().enumerate() {
            let d = layout.segment(g).start + v;
            for (b, x) in base.iter_mut().zip(&directions[d * n..(d + 1) * n]) {
                *b += x;
            }
        }
        let mut attempts = 0;
        let candidate = loop {
            attempts += 1;
            let cand: Vec<f64> = base.iter().map(|b| b + residual.sample(&mut rng)).collect();
            let far_enough = rows
                .iter()
                .all(|r| r.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sq);
            if far_enough {
                break cand;
            }
            if attempts >= MAX_CENTROID_ATTEMPTS {
                return Err(Error::validation(format!(
                    "synthetic config: could not place centroid {class} at least {MIN_SEPARATION_SIGMAS}σ from the others; lower spread or raise attribute_scale"
                )));
            }
        };
        rows.push(candidate);
    }
    DenseMatrix::from_rows_with_cols(&rows, n)
}
