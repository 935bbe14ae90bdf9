use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use semshield_core::evaluation::BenchProvenance;
use semshield_core::interchange::{self, SynthConfigFile};
use semshield_core::{
    bench, detect_error, fit_for_kb, score_batch, semantic_distance, synthetic, DenseMatrix, Error, FitOptions,
    KnowledgeBase, ProjectionModel, Result, ScoreMethod, ScoringInputs,
};
use serde::Serialize;

use crate::args::{BenchArgs, DetectArgs, FitArgs, GenArgs, ProjectionInputs, ScoreArgs};

fn row_count_mismatch(a: (&str, usize), b: (&str, usize)) -> Result<()> {
    if a.1 == b.1 {
        return Ok(());
    }
    Err(Error::Validation(format!(
        "row count mismatch: {} has {} rows, {} has {}",
        a.0, a.1, b.0, b.1
    )))
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Opens `path`, or stdout when `None`.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_error(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut out: Box<dyn Write>, path: Option<&Path>) -> Result<()> {
    out.flush().map_err(io_error(path.unwrap_or(Path::new("<stdout>"))))
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let kb = interchange::load_kb(&args.kb)?;
    let features = interchange::read_matrix(&args.features, None)?;
    let labels = interchange::read_indices(&args.labels)?;
    row_count_mismatch(("features", features.rows()), ("labels", labels.len()))?;
    interchange::check_indices(&args.labels, &labels, kb.num_classes())?;

    let opts = FitOptions {
        lambda: args.lambda,
        ridge: args.ridge,
        standardize: args.standardize,
    };
    let start = Instant::now();
    let model = fit_for_kb(&kb, &features, &labels, &opts)?;
    let elapsed = start.elapsed();
    interchange::write_text(&args.out, &model.to_json())?;

    println!("fit residual: {:e}", model.fit_residual());
    println!("wall time: {:.3} s", elapsed.as_secs_f64());
    Ok(())
}

/// Inputs shared by `detect` and `score`, loaded and cross-checked.
struct Loaded {
    kb: KnowledgeBase,
    model: ProjectionModel,
    features: DenseMatrix,
    predictions: Vec<usize>,
}

fn load_projection_inputs(inputs: &ProjectionInputs) -> Result<Loaded> {
    let model = ProjectionModel::load(&inputs.model)?;
    let kb = interchange::load_kb(&inputs.kb)?;
    let features = interchange::read_matrix(&inputs.features, Some(model.feature_dim()))?;
    let predictions = interchange::read_indices(&inputs.predictions)?;
    interchange::check_indices(&inputs.predictions, &predictions, kb.num_classes())?;
    row_count_mismatch(("features", features.rows()), ("predictions", predictions.len()))?;
    Ok(Loaded {
        kb,
        model,
        features,
        predictions,
    })
}

#[derive(Serialize)]
struct DetectLine<'a> {
    example_id: usize,
    predicted: usize,
    predicted_label: &'a str,
    explanation: &'a [semshield_core::confidence::GroupReading],
    attributes: String,
    valid: bool,
    #[serde(rename = "match")]
    matches: bool,
    matched_class: Option<usize>,
    distance: f64,
}

pub fn detect(args: &DetectArgs) -> Result<()> {
    let loaded = load_projection_inputs(&args.inputs)?;
    let projection = loaded.model.bind(&loaded.kb)?;
    let protos = loaded.kb.build_prototypes();

    let results: Vec<_> = (0..loaded.features.rows())
        .into_par_iter()
        .map(|i| {
            let s = projection.project(loaded.features.row(i))?;
            let predicted = loaded.predictions[i];
            let explanation = detect_error(&s, predicted, &protos)?;
            let distance = semantic_distance(&s, protos.get(predicted)?)?;
            Ok((explanation, distance))
        })
        .collect::<Result<_>>()?;

    let path = args.out.as_deref();
    let mut out = sink(path)?;
    let where_ = path.unwrap_or(Path::new("<stdout>"));
    for (i, (explanation, distance)) in results.iter().enumerate() {
        let predicted = loaded.predictions[i];
        let line = DetectLine {
            example_id: i,
            predicted,
            predicted_label: &loaded.kb.classes()[predicted].label,
            explanation: &explanation.groups,
            attributes: explanation.attribute_string(),
            valid: explanation.valid,
            matches: explanation.matches_prediction,
            matched_class: explanation.matched_class,
            distance: *distance,
        };
        let text = serde_json::to_string(&line).expect("detect line serializes");
        writeln!(out, "{text}").map_err(io_error(where_))?;
    }
    finish(out, path)
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let loaded = load_projection_inputs(&args.inputs)?;
    let projection = loaded.model.bind(&loaded.kb)?;
    let protos = loaded.kb.build_prototypes();
    let inputs = ScoringInputs {
        predictions: &loaded.predictions,
        labels: None,
        features: Some(&loaded.features),
        projection: Some(&projection),
        prototypes: Some(&protos),
        probs: None,
        train_features: None,
        mcd: None,
        nnd_k: 0,
    };
    let records = score_batch(ScoreMethod::Semantic, &inputs)?;

    let path = args.out.as_deref();
    let mut out = sink(path)?;
    let where_ = path.unwrap_or(Path::new("<stdout>"));
    for r in &records {
        writeln!(out, "{},{}", r.example_id, r.score).map_err(io_error(where_))?;
    }
    finish(out, path)
}

pub fn bench_cmd(args: &BenchArgs) -> Result<()> {
    let labels = interchange::read_indices(&args.labels)?;
    let predictions = interchange::read_indices(&args.predictions)?;
    row_count_mismatch(("labels", labels.len()), ("predictions", predictions.len()))?;

    let kb = args.kb.as_deref().map(interchange::load_kb).transpose()?;
    let model = args.model.as_deref().map(ProjectionModel::load).transpose()?;
    let projection = match (&model, &kb) {
        (Some(m), Some(kb)) => Some(m.bind(kb)?),
        _ => None,
    };
    let protos = kb.as_ref().map(KnowledgeBase::build_prototypes);

    let features = args
        .features
        .as_deref()
        .map(|p| interchange::read_matrix(p, model.as_ref().map(ProjectionModel::feature_dim)))
        .transpose()?;
    if let Some(f) = &features {
        row_count_mismatch(("features", f.rows()), ("predictions", predictions.len()))?;
    }
    let train_features = args
        .train_features
        .as_deref()
        .map(|p| interchange::read_matrix(p, features.as_ref().map(DenseMatrix::cols)))
        .transpose()?;

    let classes = kb.as_ref().map(KnowledgeBase::num_classes);
    let probs = match &args.probs {
        Some(p) => {
            let cols = match classes {
                Some(c) => c,
                None => interchange::read_matrix(p, None)?.cols(),
            };
            let probs = interchange::read_probs(p, cols)?;
            row_count_mismatch(("probs", probs.rows()), ("predictions", predictions.len()))?;
            Some(probs)
        }
        None => None,
    };
    let classes = classes.or(probs.as_ref().map(DenseMatrix::cols));
    if let Some(c) = classes {
        interchange::check_indices(&args.labels, &labels, c)?;
        interchange::check_indices(&args.predictions, &predictions, c)?;
    }
    let mcd = match &args.mcd {
        Some(p) => {
            let c =
                classes.ok_or_else(|| Error::Config("--mcd needs --kb or --probs to fix the class count".into()))?;
            Some(interchange::read_mcd(p, predictions.len(), c)?)
        }
        None => None,
    };

    let inputs = ScoringInputs {
        predictions: &predictions,
        labels: Some(&labels),
        features: features.as_ref(),
        projection: projection.as_ref(),
        prototypes: protos.as_ref(),
        probs: probs.as_ref(),
        train_features: train_features.as_ref(),
        mcd: mcd.as_ref(),
        nnd_k: args.nnd_k,
    };
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).ok();
    let provenance = BenchProvenance {
        model_fingerprint: model.as_ref().map(ProjectionModel::fingerprint),
        kb_fingerprint: kb.as_ref().map(|k| k.fingerprint().to_owned()),
        timestamp,
    };
    let report = bench(&inputs, &args.methods, provenance)?;

    interchange::write_text(&args.out, &report.to_json())?;
    if let Some(csv) = &args.emit_csv {
        interchange::write_text(csv, &report.to_csv())?;
    }
    print!("{}", report.auc_table());
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let (cfg, kb_json) = SynthConfigFile::load_with_kb_source(&args.config)?;
    let set = synthetic::generate(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(io_error(&args.out_dir))?;
    interchange::write_synthetic_set(&args.out_dir, &set, &cfg.kb, &kb_json)?;
    println!(
        "wrote {} train and {} test examples ({} mispredicted) to {}",
        set.train_labels.len(),
        set.test_labels.len(),
        set.meta.mispredictions,
        args.out_dir.display()
    );
    Ok(())
}
