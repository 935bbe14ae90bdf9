//! Interpretable confidence scores and error detection for pretrained
//! classifiers.
//!
//! Features from a classifier's last hidden layer are projected linearly into
//! a space of human-readable attributes defined by a [`KnowledgeBase`]. The
//! cosine distance between the projection and the predicted class's
//! prototype is a confidence score; a per-group argmax turns the projection
//! into an attribute configuration that either is or is not a known class,
//! which doubles as an error check with a readable explanation.
//!
//! ```
//! use semshield_core::{KnowledgeBase, synthetic, embedding, confidence};
//!
//! let kb = KnowledgeBase::bundled_traffic_signs();
//! let mut cfg = synthetic::SynthConfig::new(kb.clone(), 7);
//! cfg.train_per_class = 10;
//! cfg.test_per_class = 2;
//! cfg.mcd_passes = 2;
//! let set = synthetic::generate(&cfg).unwrap();
//!
//! let model = embedding::fit_for_kb(&kb, &set.train_features, &set.train_labels,
//!                                   &embedding::FitOptions::default()).unwrap();
//! let projection = model.bind(&kb).unwrap();
//! let protos = kb.build_prototypes();
//! let s = projection.project(set.test_features.row(0)).unwrap();
//! let d = confidence::semantic_distance(&s, protos.get(set.predictions[0]).unwrap()).unwrap();
//! assert!(d >= 0.0);
//! ```

pub mod confidence;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod interchange;
pub mod knowledge_base;
pub mod matrix;
pub mod synthetic;

pub use confidence::{
    cosine_distance, detect_error, mcd_score, nnd_score, score_batch, semantic_distance, softmax_score, Explanation,
    McdSamples, ScoreMethod, ScoreRecord, ScoringInputs,
};
pub use embedding::{fit, fit_for_kb, BoundProjection, FitOptions, ProjectionModel, DEFAULT_LAMBDA};
pub use error::{Error, Result};
pub use evaluation::{bench, rank_auc, roc, selective_accuracy, BenchReport, RocCurve, RocPoint};
pub use knowledge_base::{AttributeGroup, KnowledgeBase, Layout, PrototypeSet, SemanticVector};
pub use matrix::{sylvester_solve, sym_eigen, DenseMatrix, SymEigen};
