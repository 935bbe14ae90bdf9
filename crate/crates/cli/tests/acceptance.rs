//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semshield_core::confidence::{cosine_distance, DEFAULT_NND_K};
use semshield_core::evaluation::{trapezoid, BenchProvenance};
use semshield_core::interchange::{self, SynthConfigFile};
use semshield_core::{
    bench, detect_error, fit, fit_for_kb, roc, semantic_distance, sylvester_solve, synthetic, DenseMatrix, FitOptions,
    KnowledgeBase, RocCurve, ScoreMethod, ScoreRecord, ScoringInputs, SemanticVector,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Random orthogonal matrix by modified Gram-Schmidt on a Gaussian-ish matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let data = (0..n * n).map(|idx| cols[idx % n][idx / n]).collect();
    DenseMatrix::new(n, n, data).unwrap()
}

/// Q diag(eigs) Qᵀ.
fn psd_with_spectrum(rng: &mut ChaCha8Rng, eigs: &[f64]) -> DenseMatrix {
    let q = random_orthogonal(rng, eigs.len());
    let scaled = q.matmul(&DenseMatrix::from_diag(eigs).unwrap()).unwrap();
    let m = scaled.matmul(&q.transpose()).unwrap();
    // Exact symmetry: average with the transpose.
    m.add(&m.transpose()).unwrap().scale(0.5)
}

fn sylvester_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut min_pair = f64::INFINITY;
    for _ in 0..50 {
        let (k, n) = (rng.random_range(1..=12), rng.random_range(1..=12));
        // a is only semidefinite: its smallest eigenvalue is exactly zero.
        let mut ea: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        ea[0] = 0.0;
        let eb: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..3.0)).collect();
        min_pair = min_pair.min(eb.iter().copied().fold(f64::INFINITY, f64::min));
        let a = psd_with_spectrum(&mut rng, &ea);
        let b = psd_with_spectrum(&mut rng, &eb);
        let w_true = random_matrix(&mut rng, k, n);
        let c = a.matmul(&w_true).unwrap().add(&w_true.matmul(&b).unwrap()).unwrap();
        let w = match sylvester_solve(&a, &b, &c, 0.0) {
            Ok(w) => w,
            Err(e) => return outcome(false, format!("solve failed: {e}")),
        };
        let err = w.sub(&w_true).unwrap().frobenius_norm() / w_true.frobenius_norm();
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(1),
        format!(
            "50 cases, worst relative error {worst:.2e} (≤ 1e-6), min pair sum {min_pair:.1e}, {elapsed:.2?} (< 1 s)"
        ),
    )
}

fn objective(f: &DenseMatrix, s: &DenseMatrix, w: &DenseMatrix, lambda: f64) -> f64 {
    let recon = f.sub(&s.matmul(w).unwrap()).unwrap().frobenius_norm();
    let enc = f.matmul(&w.transpose()).unwrap().sub(s).unwrap().frobenius_norm();
    recon * recon + lambda * enc * enc
}

fn sae_stationarity() -> Outcome {
    let start = Instant::now();
    let kb = KnowledgeBase::bundled_traffic_signs();
    let mut cfg = synthetic::SynthConfig::new(kb.clone(), 500);
    cfg.test_per_class = 1;
    cfg.mcd_passes = 2;
    let set = synthetic::generate(&cfg).unwrap();
    let total = set.train_labels.len();
    let idx: Vec<usize> = (0..500).map(|i| i * total / 500).collect();
    let f = set.train_features.select_rows(&idx).unwrap();
    let labels: Vec<usize> = idx.iter().map(|&i| set.train_labels[i]).collect();
    let s = kb.annotate(&labels).unwrap();
    let lambda = 0.1;
    let model = fit(
        &f,
        &s,
        &FitOptions {
            lambda,
            ..FitOptions::default()
        },
    )
    .unwrap();
    let w = model.weights();

    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let coords = 24;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let (i, j) = (rng.random_range(0..w.rows()), rng.random_range(0..w.cols()));
        let bump = |delta: f64| {
            let mut data = w.clone().into_vec();
            data[i * w.cols() + j] += delta;
            DenseMatrix::new(w.rows(), w.cols(), data).unwrap()
        };
        let g = (objective(&f, &s, &bump(h), lambda) - objective(&f, &s, &bump(-h), lambda)) / (2.0 * h);
        worst = worst.max(g.abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(5) && (f.rows(), f.cols(), s.cols()) == (500, 64, 49),
        format!(
            "m={} n={} k={} λ={lambda}, max |∂J/∂W| over {coords} coords {worst:.2e} (≤ 1e-4), {elapsed:.2?} (< 5 s)",
            f.rows(),
            f.cols(),
            s.cols()
        ),
    )
}

fn semantic_distance_formula() -> Outcome {
    let kb = KnowledgeBase::bundled_traffic_signs();
    let layout = kb.layout().clone();
    let proto = kb.encode_class(14).unwrap();
    let self_d = semantic_distance(&proto, &proto).unwrap();

    // Support disjoint from the prototype's ones.
    let ortho: Vec<f64> = proto
        .as_slice()
        .iter()
        .map(|&v| if v == 0.0 { 1.0 } else { 0.0 })
        .collect();
    let ortho_d = semantic_distance(&SemanticVector::new(ortho, layout.clone()).unwrap(), &proto).unwrap();

    let hand = cosine_distance(&[1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap();
    let hand_expected = 1.0 - 1.0 / 2f64.sqrt();

    let examples_ok = self_d.abs() <= 1e-12 && (ortho_d - 1.0).abs() <= 1e-12 && (hand - hand_expected).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s: Vec<f64> = (0..kb.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = kb.encode_class(rng.random_range(0..kb.num_classes())).unwrap();
        let alpha = 10f64.powf(rng.random_range(-4.0..4.0));
        let scaled: Vec<f64> = s.iter().map(|v| alpha * v).collect();
        let d = semantic_distance(&SemanticVector::new(s, layout.clone()).unwrap(), &y).unwrap();
        let ds = semantic_distance(&SemanticVector::new(scaled, layout.clone()).unwrap(), &y).unwrap();
        worst = worst.max((d - ds).abs());
    }
    outcome(
        examples_ok && worst <= 1e-12,
        format!(
            "self {self_d:.1e}, orthogonal {ortho_d}, (1,0,1,0)·(1,0,0,0) {hand:.12} vs {hand_expected:.12}; \
             1000 scale pairs worst {worst:.1e} (≤ 1e-12)"
        ),
    )
}

fn pairwise_auc(records: &[ScoreRecord]) -> f64 {
    let wrong: Vec<f64> = records
        .iter()
        .filter(|r| r.true_class != Some(r.predicted))
        .map(|r| r.score)
        .collect();
    let right: Vec<f64> = records
        .iter()
        .filter(|r| r.true_class == Some(r.predicted))
        .map(|r| r.score)
        .collect();
    let mut total = 0.0;
    for w in &wrong {
        for c in &right {
            total += if w > c {
                1.0
            } else if w == c {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (wrong.len() * right.len()) as f64
}

fn auc_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    let mut tie_share = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(4..200);
        let levels = rng.random_range(1..8);
        let mut recs: Vec<ScoreRecord> = (0..m)
            .map(|i| ScoreRecord {
                example_id: i,
                predicted: 0,
                true_class: Some(usize::from(rng.random_bool(0.25))),
                score: rng.random_range(0..levels) as f64 / levels as f64,
                method: ScoreMethod::Semantic,
            })
            .collect();
        recs[0].true_class = Some(1);
        recs[1].true_class = Some(0);
        let distinct = {
            let mut v: Vec<u64> = recs.iter().map(|r| r.score.to_bits()).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        tie_share += 1.0 - distinct as f64 / m as f64;
        let curve = roc(&recs).unwrap();
        worst = worst.max((curve.auc - pairwise_auc(&recs)).abs());
    }
    let mean_tied = tie_share / 100.0;
    outcome(
        worst <= 1e-12,
        format!(
            "100 record sets, {:.0}% tied scores on average, worst |trapezoid − pairwise| {worst:.1e} (≤ 1e-12)",
            mean_tied * 100.0
        ),
    )
}

fn curve_valid(c: &RocCurve) -> bool {
    let (first, last) = (c.points.first().unwrap(), c.points.last().unwrap());
    (first.fpr, first.tpr) == (0.0, 0.0)
        && (last.fpr, last.tpr) == (1.0, 1.0)
        && c.points
            .windows(2)
            .all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr)
        && (0.0..=1.0).contains(&c.auc)
        && (c.auc - trapezoid(&c.points)).abs() <= 1e-12
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic.json")
}

struct EndToEnd {
    benchmark: Outcome,
    detection: Outcome,
}

fn end_to_end() -> EndToEnd {
    let start = Instant::now();
    let cfg = SynthConfigFile::load(&bundled_config()).unwrap();
    let kb = cfg.kb.clone();
    let set = synthetic::generate(&cfg).unwrap();
    let model = fit_for_kb(&kb, &set.train_features, &set.train_labels, &FitOptions::default()).unwrap();
    let projection = model.bind(&kb).unwrap();
    let protos = kb.build_prototypes();
    let inputs = ScoringInputs {
        predictions: &set.predictions,
        labels: Some(&set.test_labels),
        features: Some(&set.test_features),
        projection: Some(&projection),
        prototypes: Some(&protos),
        probs: Some(&set.probs),
        train_features: Some(&set.train_features),
        mcd: Some(&set.mcd),
        nnd_k: DEFAULT_NND_K,
    };
    let report = bench(&inputs, &ScoreMethod::ALL, BenchProvenance::default()).unwrap();
    let elapsed = start.elapsed();

    let auc = |m| report.methods[&m].auc;
    let (sem, soft) = (auc(ScoreMethod::Semantic), auc(ScoreMethod::Softmax));
    let all_valid = report.methods.len() == 4 && report.methods.values().all(curve_valid);
    let benchmark = outcome(
        sem >= 0.90 && sem >= soft - 0.02 && all_valid && elapsed < Duration::from_secs(30),
        format!(
            "{} test / {} mispredicted; AUC semantic {sem:.4} (≥ 0.90, ≥ softmax − 0.02), softmax {soft:.4}, \
             nnd {:.4}, mcd {:.4}; 4 valid curves: {all_valid}; {elapsed:.2?} (< 30 s)",
            report.counts.total,
            report.counts.mispredicted,
            auc(ScoreMethod::Nnd),
            auc(ScoreMethod::Mcd)
        ),
    );

    let (mut blended, mut caught, mut clean, mut clean_ok) = (0, 0, 0, 0);
    for i in 0..set.predictions.len() {
        let s = projection.project(set.test_features.row(i)).unwrap();
        let e = detect_error(&s, set.predictions[i], &protos).unwrap();
        if set.corrupted[i] {
            blended += 1;
            caught += usize::from(e.is_error());
        } else if set.predictions[i] == set.test_labels[i] {
            clean += 1;
            clean_ok += usize::from(e.valid && e.matches_prediction);
        }
    }
    let caught_rate = caught as f64 / blended as f64;
    let clean_rate = clean_ok as f64 / clean as f64;
    let detection = outcome(
        caught_rate >= 0.70 && clean_rate >= 0.99,
        format!(
            "blended flagged {caught}/{blended} = {:.1}% (≥ 70%), clean valid+match {clean_ok}/{clean} = {:.1}% (≥ 99%)",
            caught_rate * 100.0,
            clean_rate * 100.0
        ),
    );
    EndToEnd { benchmark, detection }
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_semshield"))
        .args(args)
        .output()
        .unwrap()
}

fn without_timestamp(report: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(report).unwrap();
    v["meta"].as_object_mut().unwrap().remove("timestamp");
    serde_json::to_string_pretty(&v).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg_path = d.join("config.json");
    interchange::write_text(
        &cfg_path,
        r#"{"seed": 31, "feature_dim": 64, "train_per_class": 20, "test_per_class": 8,
            "spread": 0.1, "misprediction_rate": 0.05, "mcd_passes": 10}"#,
    )
    .unwrap();
    let p = |name: &str| d.join(name).to_str().unwrap().to_owned();
    let data = |name: &str| d.join("data").join(name).to_str().unwrap().to_owned();
    assert!(run(&["gen", "--config", &p("config.json"), "--out-dir", &p("data")])
        .status
        .success());

    let mut models = Vec::new();
    let mut reports = Vec::new();
    let mut csvs = Vec::new();
    let mut stdouts = Vec::new();
    for round in 0..2 {
        let model = p(&format!("model{round}.json"));
        let ok = run(&[
            "fit",
            "--features",
            &data(interchange::TRAIN_FEATURES),
            "--labels",
            &data(interchange::TRAIN_LABELS),
            "--kb",
            &data(interchange::KB),
            "--out",
            &model,
        ])
        .status
        .success();
        if !ok {
            return outcome(false, "fit failed");
        }
        models.push(std::fs::read(&model).unwrap());

        let report = p(&format!("report{round}.json"));
        let csv = p(&format!("report{round}.csv"));
        let threads = if round == 0 { "1" } else { "3" };
        let out = Command::new(env!("CARGO_BIN_EXE_semshield"))
            .env("SEMSHIELD_THREADS", threads)
            .args([
                "bench",
                "--model",
                &model,
                "--kb",
                &data(interchange::KB),
                "--features",
                &data(interchange::FEATURES),
                "--labels",
                &data(interchange::LABELS),
                "--predictions",
                &data(interchange::PREDICTIONS),
                "--probs",
                &data(interchange::PROBS),
                "--mcd",
                &data(interchange::MCD),
                "--train-features",
                &data(interchange::TRAIN_FEATURES),
                "--methods",
                "semantic,softmax,nnd,mcd",
                "--out",
                &report,
                "--emit-csv",
                &csv,
            ])
            .output()
            .unwrap();
        if !out.status.success() {
            return outcome(false, format!("bench failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        reports.push(without_timestamp(&std::fs::read_to_string(&report).unwrap()));
        csvs.push(std::fs::read(&csv).unwrap());
        stdouts.push(out.stdout);
    }
    let same_model = models[0] == models[1];
    let same_report = reports[0] == reports[1];
    let same_csv = csvs[0] == csvs[1] && stdouts[0] == stdouts[1];
    outcome(
        same_model && same_report && same_csv,
        format!(
            "model bytes identical: {same_model}; report identical without timestamp: {same_report}; \
             CSV and AUC table identical: {same_csv} (1 vs 3 threads)"
        ),
    )
}

fn kb_dimensions() -> Outcome {
    let kb = KnowledgeBase::bundled_traffic_signs();
    let sizes: Vec<usize> = kb.groups().iter().map(|g| g.values.len()).collect();
    let ok = sizes == [5, 4, 2, 29, 9] && kb.num_classes() == 43 && kb.dim() == 49;
    outcome(
        ok,
        format!("group sizes {sizes:?}, {} classes, k = {}", kb.num_classes(), kb.dim()),
    )
}

fn main() {
    // Stay quiet under `cargo test -- --list` and friends.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let e2e = end_to_end();
    let results = [
        ("Sylvester recovery", sylvester_recovery()),
        ("SAE stationarity", sae_stationarity()),
        ("Semantic distance formula", semantic_distance_formula()),
        ("AUC oracle equivalence", auc_equivalence()),
        ("End-to-end benchmark", e2e.benchmark),
        ("Error detection", e2e.detection),
        ("Determinism", determinism()),
        ("Knowledge-base dimensions", kb_dimensions()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
