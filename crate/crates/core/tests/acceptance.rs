//! One line per acceptance criterion, then a single assertion that all passed.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use genreseq::clustering::{kmeans, KMeansConfig, RatingProfile};
use genreseq::evaluation::{
    confusion_counts, metrics, select_trim_clusters, trim_genres, ClusterMetrics, Metric, MetricValues, MovieGenreMatrix,
};
use genreseq::experiment::{execute, random_stochastic, run_experiment, ExperimentConfig, ExperimentOutcome, Stage};
use genreseq::ingest::{generate_synthetic, load_sequences, simulate_corpus, CorpusSpec, SyntheticSpec};
use genreseq::recurrent::CellKind;
use genreseq::transition::{atv, FeatureMode, TransitionModel};
use genreseq::{GenreVector, N_GENRES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DATA_ENV: &str = "GENRESEQ_MOVIELENS_DIR";
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const ESTIMATOR_TOL: f64 = 0.02;
const REPRO_USERS: usize = 10_000;
const REPRO_BUDGET: Duration = Duration::from_secs(15 * 60);
const LIFT: f64 = 0.05;
const ATV_GAP: f64 = 0.1;

struct Verdict {
    id: &'static str,
    name: &'static str,
    pass: bool,
    details: String,
}

fn verdict(id: &'static str, name: &'static str, pass: bool, details: String) -> Verdict {
    println!("criterion {id} {name}: {} ({details})", if pass { "PASS" } else { "FAIL" });
    Verdict { id, name, pass, details }
}

fn gradient_fidelity() -> Verdict {
    let started = Instant::now();
    let mut worst = 0.0_f64;
    for cell in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        for seed in 0..20 {
            let inst = common::grad_instance(cell, N_GENRES, 8, 4, 1000 + seed);
            worst = worst.max(common::max_relative_error(&inst));
        }
    }
    let elapsed = started.elapsed();
    verdict(
        "1",
        "gradient fidelity",
        worst < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!("max relative error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn estimator_oracle() -> Verdict {
    let planted = random_stochastic(77);
    let (seqs, planted) = generate_synthetic(&SyntheticSpec {
        n_users: 10_000,
        planted_matrix: planted,
        genres_per_movie: (1, 1),
        seed: 78,
    })
    .unwrap();
    let model = TransitionModel::estimate(0, &seqs);
    let err = model.probs.max_abs_diff(&planted);
    let rows_exact = (0..N_GENRES).all(|g| {
        let v = atv(&GenreVector::multi_hot([g]).unwrap(), &model.probs).unwrap();
        v.values() == model.probs.row(g)
    });
    verdict(
        "2",
        "estimator oracle",
        err < ESTIMATOR_TOL && rows_exact,
        format!("max abs error {err:.4}, singleton ATV equals rows: {rows_exact}"),
    )
}

fn worked_examples() -> Verdict {
    let metric_set: BTreeSet<Metric> = [Metric::Precision, Metric::Recall].into();
    let clusters: Vec<ClusterMetrics> = [(1usize, 0.6, 0.8), (2, 0.9, 0.55), (3, 0.45, 0.7)]
        .iter()
        .map(|&(c, precision, recall)| {
            let values = MetricValues {
                precision,
                recall,
                accuracy: 0.9,
                f1: 2.0 * precision * recall / (precision + recall),
            };
            ClusterMetrics::new(c, values, &metric_set)
        })
        .collect();
    let selected = select_trim_clusters(&clusters, 0.5);
    let selection_ok = selected == BTreeSet::from([3]);

    // 20 users with 5 movies each; a few columns are pinned around the cutoff of 10.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts: Vec<[u32; N_GENRES]> = (0..20)
        .map(|_| std::array::from_fn(|_| if rng.gen_bool(0.4) { rng.gen_range(1..=2) } else { 0 }))
        .collect();
    let pinned = [(0usize, 10u32), (6, 3), (17, 9), (9, 0), (4, 11)];
    for &(g, total) in &pinned {
        for (u, row) in counts.iter_mut().enumerate() {
            row[g] = u32::from((u as u32) < total);
        }
    }
    let m = MovieGenreMatrix {
        cluster: 3,
        counts,
        length: 100,
    };
    let expected: BTreeSet<usize> = (0..N_GENRES)
        .filter(|&g| m.counts.iter().map(|r| r[g]).sum::<u32>() < 10)
        .collect();
    let (trimmed, zeroed) = trim_genres(&m, 0.1);
    let columns_ok = (0..N_GENRES).all(|g| {
        m.counts.iter().zip(&trimmed.counts).all(|(a, b)| if expected.contains(&g) { b[g] == 0 } else { b[g] == a[g] })
    });
    let trim_ok = zeroed == expected && columns_ok && !zeroed.contains(&0) && zeroed.contains(&6) && zeroed.contains(&17);
    verdict(
        "3",
        "worked-example fidelity",
        selection_ok && trim_ok,
        format!("selected {selected:?}, zeroed {zeroed:?} (expected {expected:?})"),
    )
}

fn oracle_metrics(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> MetricValues {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..preds.len() {
        for j in 0..preds[i].len() {
            let yes = preds[i][j] > 0.5;
            let truth = targets[i][j] == 1.0;
            if yes && truth {
                tp += 1;
            } else if yes {
                fp += 1;
            } else if truth {
                fn_ += 1;
            } else {
                tn += 1;
            }
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (recall * precision) / (recall + precision)
    };
    MetricValues {
        recall,
        precision,
        accuracy,
        f1,
    }
}

fn metric_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=100);
        let width = rng.gen_range(1..=N_GENRES);
        let density = rng.gen_range(0.0..1.0);
        let preds: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..width).map(|_| if rng.gen_bool(0.05) { 0.5 } else { rng.gen::<f64>() }).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..width).map(|_| f64::from(u8::from(rng.gen_bool(density)))).collect())
            .collect();
        let got = metrics(&confusion_counts(&preds, &targets, 0.5).unwrap());
        if got != oracle_metrics(&preds, &targets) {
            mismatches += 1;
        }
    }
    let degenerate = metrics(&confusion_counts(&[[0.1, 0.2]; 5], &[[0.0, 0.0]; 5], 0.5).unwrap());
    let degenerate_ok = degenerate
        == MetricValues {
            recall: 0.0,
            precision: 0.0,
            accuracy: 1.0,
            f1: 0.0,
        };
    verdict(
        "4",
        "metric oracle",
        mismatches == 0 && degenerate_ok,
        format!("{mismatches} mismatches in 1000 instances, degenerate case ok: {degenerate_ok}"),
    )
}

struct Reproduction {
    outcome: ExperimentOutcome,
    elapsed: Duration,
    eligible: usize,
    source: String,
    _scratch: Option<tempfile::TempDir>,
}

fn reproduction_run() -> Reproduction {
    let (dir, scratch, source) = match std::env::var_os(DATA_ENV) {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            let source = format!("files in {}", dir.display());
            (dir, None, source)
        }
        None => {
            let tmp = tempfile::tempdir().unwrap();
            simulate_corpus(&CorpusSpec::default()).unwrap().write(tmp.path()).unwrap();
            (tmp.path().to_path_buf(), Some(tmp), "simulated corpus".to_string())
        }
    };
    let (ratings, movies) = (dir.join("ratings.csv"), dir.join("movies.csv"));
    let eligible = load_sequences(&ratings, &movies).unwrap().sequences.len();
    let out = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        ratings_path: Some(ratings),
        movies_path: Some(movies),
        max_users: Some(REPRO_USERS),
        k: 7,
        modes: vec![FeatureMode::Product, FeatureMode::GenreOnly],
        seed: 2020,
        out_dir: out.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let started = Instant::now();
    let outcome = execute(&config).unwrap();
    Reproduction {
        outcome,
        elapsed: started.elapsed(),
        eligible,
        source,
        _scratch: scratch,
    }
}

const CELLS: [CellKind; 3] = [CellKind::Rnn, CellKind::Lstm, CellKind::Gru];

fn directional(run: &Reproduction) -> Verdict {
    let report = &run.outcome.report;
    let mut pass = run.eligible >= REPRO_USERS && run.outcome.users >= REPRO_USERS && run.elapsed < REPRO_BUDGET;
    let mut parts = vec![format!(
        "{}, {} eligible, {} sampled, {:.0}s",
        run.source,
        run.eligible,
        run.outcome.users,
        run.elapsed.as_secs_f64()
    )];
    for cell in CELLS {
        let row = |s| report.find(cell, FeatureMode::Product, s).unwrap();
        let (bc, best) = (row(Stage::BeforeClustering).f1, row(Stage::AcBest).f1);
        let (bt, at) = (row(Stage::BtWorst).recall, row(Stage::AtWorst).recall);
        let lift_ok = best >= bc + LIFT;
        let recall_ok = at >= bt;
        let accuracy_ok = report
            .rows
            .iter()
            .filter(|r| r.cell == cell && r.mode == FeatureMode::Product)
            .all(|r| r.accuracy >= r.recall.max(r.precision).max(r.f1));
        pass &= lift_ok && recall_ok && accuracy_ok;
        parts.push(format!(
            "{cell}: (a) AC-best F1 {best:.4} vs BC F1 {bc:.4} {}; (b) AT-worst recall {at:.4} vs BT-worst {bt:.4} {}; (c) accuracy largest {}",
            ok(lift_ok),
            ok(recall_ok),
            ok(accuracy_ok)
        ));
    }
    verdict("5", "directional reproduction", pass, parts.join("; "))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "not met"
    }
}

fn atv_effect(run: &Reproduction) -> Verdict {
    let report = &run.outcome.report;
    let mut pass = true;
    let mut parts = Vec::new();
    for cell in CELLS {
        let f1 = |m| report.find(cell, m, Stage::AcMean).unwrap().f1;
        let (genre_only, product) = (f1(FeatureMode::GenreOnly), f1(FeatureMode::Product));
        let gap = (genre_only - product).abs();
        pass &= gap < ATV_GAP;
        parts.push(format!("{cell}: GenreOnly {genre_only:.4} vs Product {product:.4}, gap {gap:.4}"));
    }
    verdict("6", "ATV-effect report", pass, parts.join("; "))
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = ExperimentConfig {
        synthetic_users: Some(300),
        k: 3,
        epochs: 3,
        hidden_dim: 6,
        seed: 31,
        out_dir: a.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    run_experiment(&config).unwrap();
    run_experiment(&ExperimentConfig {
        out_dir: b.path().to_path_buf(),
        ..config
    })
    .unwrap();
    let first = std::fs::read(a.path().join("report.csv")).unwrap();
    let second = std::fs::read(b.path().join("report.csv")).unwrap();
    verdict(
        "7",
        "determinism",
        first == second,
        format!("{} and {} bytes, identical: {}", first.len(), second.len(), first == second),
    )
}

fn kmeans_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut increases = 0;
    for instance in 0..100 {
        let n = rng.gen_range(10..200);
        let dim = rng.gen_range(1..=N_GENRES);
        let profiles: Vec<RatingProfile> = (0..n)
            .map(|u| RatingProfile {
                user_id: u,
                profile: (0..dim).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.5..=5.0) }).collect(),
            })
            .collect();
        let model = kmeans(
            &profiles,
            KMeansConfig {
                k: rng.gen_range(1..=8),
                seed: instance,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        increases += model.inertia_trace.windows(2).filter(|w| w[1] > w[0]).count();
    }

    let profiles: Vec<RatingProfile> = (0..50)
        .map(|u| RatingProfile {
            user_id: u,
            profile: (0..N_GENRES).map(|_| rng.gen_range(0.0..=5.0)).collect(),
        })
        .collect();
    let model = kmeans(
        &profiles,
        KMeansConfig {
            k: 1,
            ..KMeansConfig::default()
        },
    )
    .unwrap();
    let mean_err = (0..N_GENRES)
        .map(|g| {
            let mean = profiles.iter().map(|p| p.profile[g]).sum::<f64>() / profiles.len() as f64;
            (model.centroids[0][g] - mean).abs()
        })
        .fold(0.0, f64::max);
    verdict(
        "8",
        "k-means property suite",
        increases == 0 && mean_err < 1e-9,
        format!("{increases} inertia increases over 100 instances, k=1 centroid error {mean_err:.1e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let reproduction = reproduction_run();
    let verdicts = [
        gradient_fidelity(),
        estimator_oracle(),
        worked_examples(),
        metric_oracle(),
        directional(&reproduction),
        atv_effect(&reproduction),
        determinism(),
        kmeans_properties(),
    ];
    let failed: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("criterion {} {}: {}", v.id, v.name, v.details))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
