//! Linear projection from classifier features into attribute space.
//!
//! Examples are stored as rows: `F` is m x n, `S` is m x k and the projection
//! `W` is k x n, so a single feature row `f` maps to `s = W f` and the whole
//! set to `F Wᵀ`. The fit minimizes the tied-weights objective
//!
//! ```text
//! J(W) = ‖F − S W‖²_F + λ ‖F Wᵀ − S‖²_F
//! ```
//!
//! whose stationarity condition is the Sylvester equation
//! `(SᵀS) W + W (λ FᵀF) = (1 + λ) SᵀF`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge_base::{KnowledgeBase, Layout, SemanticVector};
use crate::matrix::{sylvester_residual, sylvester_solve, DenseMatrix};

pub const DEFAULT_LAMBDA: f64 = 0.1;

const MODEL_FORMAT: &str = "semshield-projection/1";

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lambda: f64,
    /// Shift applied to the Sylvester denominators when the system is singular.
    pub ridge: f64,
    /// Standardize each feature column (zero mean, unit variance) before fitting.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            ridge: 0.0,
            standardize: false,
        }
    }
}

/// Per-feature affine map `(x - mean) / scale` learned at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(features: &DenseMatrix) -> Self {
        let (m, n) = features.shape();
        let mut mean = vec![0.0; n];
        for row in features.row_iter() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut var = vec![0.0; n];
        for row in features.row_iter() {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / m as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, mu), sd)| (x - mu) / sd)
            .collect()
    }

    fn apply(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        let data: Vec<f64> = features.row_iter().flat_map(|r| self.apply_row(r)).collect();
        DenseMatrix::new(features.rows(), features.cols(), data)
    }
}

/// Fitted projection `W` plus the metadata needed to use it safely.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    w: DenseMatrix,
    lambda: f64,
    ridge: f64,
    kb_fingerprint: Option<String>,
    standardizer: Option<Standardizer>,
    fit_residual: f64,
}

/// Fits `W` from features (m x n) and semantic annotations (m x k).
pub fn fit(features: &DenseMatrix, annotations: &DenseMatrix, opts: &FitOptions) -> Result<ProjectionModel> {
    let m = features.rows();
    if m == 0 {
        return Err(Error::validation("fit needs at least one example"));
    }
    if annotations.rows() != m {
        return Err(Error::shape(
            "fit",
            format!("{m} annotation rows (row count mismatch)"),
            format!("{} rows", annotations.rows()),
        ));
    }
    if !(opts.lambda > 0.0 && opts.lambda.is_finite()) {
        return Err(Error::validation(format!("lambda must be > 0, got {}", opts.lambda)));
    }

    let standardizer = opts.standardize.then(|| Standardizer::fit(features));
    let scaled;
    let f = match &standardizer {
        Some(st) => {
            scaled = st.apply(features)?;
            &scaled
        }
        None => features,
    };

    let (a, b, c) = normal_equations(f, annotations, opts.lambda)?;
    let w = sylvester_solve(&a, &b, &c, opts.ridge)?;
    let fit_residual = sylvester_residual(&a, &b, &c, &w)?;
    Ok(ProjectionModel {
        w,
        lambda: opts.lambda,
        ridge: opts.ridge,
        kb_fingerprint: None,
        standardizer,
        fit_residual,
    })
}

/// Fits against the annotations that `kb` induces for `labels` and records
/// the KB fingerprint in the model.
pub fn fit_for_kb(
    kb: &KnowledgeBase,
    features: &DenseMatrix,
    labels: &[usize],
    opts: &FitOptions,
) -> Result<ProjectionModel> {
    if labels.len() != features.rows() {
        return Err(Error::validation(format!(
            "row count mismatch: {} feature rows, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let annotations = kb.annotate(labels)?;
    let mut model = fit(features, &annotations, opts)?;
    model.kb_fingerprint = Some(kb.fingerprint().to_owned());
    Ok(model)
}

/// Coefficients `(SᵀS, λ FᵀF, (1 + λ) SᵀF)` of the fit's Sylvester system.
pub fn normal_equations(
    features: &DenseMatrix,
    annotations: &DenseMatrix,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    let a = annotations.t_matmul(annotations)?;
    let b = features.t_matmul(features)?.scale(lambda);
    let c = annotations.t_matmul(features)?.scale(1.0 + lambda);
    Ok((a, b, c))
}

impl ProjectionModel {
    /// Wraps an explicit `W` (k x n).
    pub fn from_weights(w: DenseMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::validation(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self {
            w,
            lambda,
            ridge: 0.0,
            kb_fingerprint: None,
            standardizer: None,
            fit_residual: 0.0,
        })
    }

    pub fn with_kb_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.kb_fingerprint = Some(fingerprint.into());
        self
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn semantic_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn kb_fingerprint(&self) -> Option<&str> {
        self.kb_fingerprint.as_deref()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    /// Relative residual of the Sylvester system at fit time.
    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    /// `W f` as a plain vector.
    pub fn project_raw(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.feature_dim() {
            return Err(Error::shape(
                "project",
                format!("feature of length {}", self.feature_dim()),
                format!("length {}", feature.len()),
            ));
        }
        match &self.standardizer {
            Some(st) => self.w.mul_vec(&st.apply_row(feature)),
            None => self.w.mul_vec(feature),
        }
    }

    /// Projects every row of `features` (m x n) to an m x k matrix.
    pub fn project_batch(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.rows() == 0 {
            return Ok(DenseMatrix::zeros(0, self.semantic_dim()));
        }
        if features.cols() != self.feature_dim() {
            return Err(Error::shape(
                "project_batch",
                format!("{} feature columns", self.feature_dim()),
                format!("{} columns", features.cols()),
            ));
        }
        let rows: Vec<Vec<f64>> = features
            .row_iter()
            .map(|r| self.project_raw(r))
            .collect::<Result<_>>()?;
        DenseMatrix::from_rows_with_cols(&rows, self.semantic_dim())
    }

    /// Attaches the knowledge base layout, checking dimension and fingerprint.
    pub fn bind(&self, kb: &KnowledgeBase) -> Result<BoundProjection<'_>> {
        if self.semantic_dim() != kb.dim() {
            return Err(Error::validation(format!(
                "model projects to {} dimensions but the knowledge base has k = {}",
                self.semantic_dim(),
                kb.dim()
            )));
        }
        if let Some(fp) = &self.kb_fingerprint {
            if fp != kb.fingerprint() {
                return Err(Error::validation(format!(
                    "model was fitted with knowledge base {} but {} was supplied",
                    short(fp),
                    short(kb.fingerprint())
                )));
            }
        }
        Ok(BoundProjection {
            model: self,
            layout: Arc::clone(kb.layout()),
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_owned(),
            feature_dim: self.feature_dim(),
            semantic_dim: self.semantic_dim(),
            lambda: self.lambda,
            ridge: self.ridge,
            kb_fingerprint: self.kb_fingerprint.clone(),
            fit_residual: self.fit_residual,
            standardization: self.standardizer.clone(),
            w: self.w.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("projection model: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::validation(format!(
                "unsupported model format \"{}\" (expected \"{MODEL_FORMAT}\")",
                doc.format
            )));
        }
        let (k, n) = (doc.semantic_dim, doc.feature_dim);
        let w_shape = if doc.w.rows() == 0 { (0, n) } else { doc.w.shape() };
        if w_shape != (k, n) {
            return Err(Error::shape(
                "model load",
                format!("w of shape {k}x{n}"),
                format!("{}x{}", w_shape.0, w_shape.1),
            ));
        }
        if let Some(st) = &doc.standardization {
            if st.mean.len() != n || st.scale.len() != n || st.scale.iter().any(|s| s.is_nan() || *s <= 0.0) {
                return Err(Error::validation("model standardization does not match feature dim"));
            }
        }
        let mut model = Self::from_weights(doc.w, doc.lambda)?;
        model.ridge = doc.ridge;
        model.kb_fingerprint = doc.kb_fingerprint;
        model.standardizer = doc.standardization;
        model.fit_residual = doc.fit_residual;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    feature_dim: usize,
    semantic_dim: usize,
    lambda: f64,
    ridge: f64,
    kb_fingerprint: Option<String>,
    fit_residual: f64,
    standardization: Option<Standardizer>,
    w: DenseMatrix,
}

/// A model paired with the attribute layout it projects into.
#[derive(Debug, Clone)]
pub struct BoundProjection<'a> {
    model: &'a ProjectionModel,
    layout: Arc<Layout>,
}

impl BoundProjection<'_> {
    pub fn model(&self) -> &ProjectionModel {
        self.model
    }

    pub fn project(&self, feature: &[f64]) -> Result<SemanticVector> {
        SemanticVector::new(self.model.project_raw(feature)?, Arc::clone(&self.layout))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_kb() -> KnowledgeBase {
        KnowledgeBase::from_json(
            r#"{"groups":[{"name":"g","values":["x","y"]},{"name":"h","values":["p","q"]}],
                "classes":[{"label":"a","attributes":{"g":"x","h":"p"}},
                           {"label":"b","attributes":{"g":"y","h":"q"}},
                           {"label":"c","attributes":{"g":"x","h":"q"}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn identity_task_recovers_identity() {
        // F = S = I gives SᵀS = FᵀF = SᵀF = I, so W = I solves 2W = 2I at λ = 1.
        let f = DenseMatrix::identity(4);
        let opts = FitOptions {
            lambda: 1.0,
            ..FitOptions::default()
        };
        let model = fit(&f, &f, &opts).unwrap();
        assert!(model.weights().sub(&DenseMatrix::identity(4)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rank_one_input_is_singular_without_ridge() {
        let f = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let s = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let err = fit(&f, &s, &FitOptions::default()).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        assert!(err.to_string().contains("increase lambda"));
        let opts = FitOptions {
            ridge: 1e-3,
            ..FitOptions::default()
        };
        let model = fit(&f, &s, &opts).unwrap();
        assert_eq!(model.weights().shape(), (2, 3));
    }

    #[test]
    fn input_validation() {
        let f = DenseMatrix::identity(3);
        let s = DenseMatrix::zeros(2, 3);
        assert!(matches!(fit(&f, &s, &FitOptions::default()), Err(Error::Shape { .. })));
        let opts = FitOptions {
            lambda: 0.0,
            ..FitOptions::default()
        };
        assert!(matches!(fit(&f, &f, &opts), Err(Error::Validation(_))));
        assert!(fit(
            &DenseMatrix::zeros(0, 3),
            &DenseMatrix::zeros(0, 3),
            &FitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn projection_linearity_and_batch() {
        let w = DenseMatrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]]).unwrap();
        let model = ProjectionModel::from_weights(w, 0.1).unwrap();
        assert_eq!(model.project_raw(&[0.0; 3]).unwrap(), vec![0.0, 0.0]);
        let f = [0.3, -1.2, 2.0];
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let p = model.project_raw(&f).unwrap();
        let p2 = model.project_raw(&f2).unwrap();
        for (a, b) in p.iter().zip(&p2) {
            assert_eq!(2.0 * a, *b);
        }
        let batch = DenseMatrix::from_rows(&[f]).unwrap();
        assert_eq!(model.project_batch(&batch).unwrap().row(0), p.as_slice());
        assert_eq!(model.project_batch(&DenseMatrix::zeros(0, 0)).unwrap().shape(), (0, 2));
        assert!(model.project_raw(&[1.0]).is_err());
    }

    #[test]
    fn identity_projection_passes_through() {
        let model = ProjectionModel::from_weights(DenseMatrix::identity(3), 0.1).unwrap();
        assert_eq!(model.project_raw(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn bind_checks_fingerprint_and_dim() {
        let kb = tiny_kb();
        let model = ProjectionModel::from_weights(DenseMatrix::zeros(4, 2), 0.1).unwrap();
        assert!(model.bind(&kb).is_ok());
        let wrong = model.clone().with_kb_fingerprint("deadbeef");
        assert!(matches!(wrong.bind(&kb), Err(Error::Validation(_))));
        let bad_dim = ProjectionModel::from_weights(DenseMatrix::zeros(3, 2), 0.1).unwrap();
        assert!(bad_dim.bind(&kb).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let kb = tiny_kb();
        let f =
            DenseMatrix::from_rows(&[[0.3, 1.7, -0.2], [1.1, -0.4, 0.9], [0.05, 0.6, 2.2], [0.9, 0.1, 0.3]]).unwrap();
        let opts = FitOptions {
            standardize: true,
            ..FitOptions::default()
        };
        let model = fit_for_kb(&kb, &f, &[0, 1, 2, 0], &opts).unwrap();
        let back = ProjectionModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), model.to_json());
        assert!(ProjectionModel::from_json(&model.to_json().replace("semshield-projection/1", "other")).is_err());
    }

    #[test]
    fn standardized_projection_matches_manual() {
        let f = DenseMatrix::from_rows(&[[1.0, 10.0], [3.0, 30.0], [2.0, 50.0]]).unwrap();
        let s = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let opts = FitOptions {
            standardize: true,
            ..FitOptions::default()
        };
        let model = fit(&f, &s, &opts).unwrap();
        let st = model.standardizer().unwrap();
        let z = st.apply_row(&[2.5, 20.0]);
        let want = model.weights().mul_vec(&z).unwrap();
        assert_eq!(model.project_raw(&[2.5, 20.0]).unwrap(), want);
    }
}
