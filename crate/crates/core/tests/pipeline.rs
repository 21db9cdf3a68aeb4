use std::fs;
use std::path::Path;
use std::process::Command;

use genreseq::evaluation::MetricValues;
use genreseq::experiment::{
    execute, parse_report_csv, run_experiment, ClusterRef, ExperimentConfig, Phase, PlantedKind, ReportRow, Stage,
};
use genreseq::ingest::{simulate_corpus, CorpusSpec};
use genreseq::recurrent::CellKind;
use genreseq::transition::FeatureMode;
use genreseq::Error;

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        synthetic_users: Some(240),
        k: 3,
        cells: vec![CellKind::Gru],
        modes: vec![FeatureMode::Product],
        epochs: 3,
        hidden_dim: 8,
        seed: 11,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn close(a: &MetricValues, b: &MetricValues) -> bool {
    let d = |x: f64, y: f64| (x - y).abs() < 1e-12;
    d(a.recall, b.recall) && d(a.precision, b.precision) && d(a.accuracy, b.accuracy) && d(a.f1, b.f1)
}

#[test]
fn identity_chain_is_learned() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        synthetic_users: Some(900),
        synthetic_planted: PlantedKind::Identity,
        synthetic_genres_min: 1,
        synthetic_genres_max: 1,
        k: 3,
        cells: vec![CellKind::Gru],
        modes: vec![FeatureMode::GenreOnly],
        epochs: 200,
        hidden_dim: 16,
        seed: 5,
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let outcome = execute(&config).unwrap();
    let mean = outcome.report.find(CellKind::Gru, FeatureMode::GenreOnly, Stage::AcMean).unwrap();
    assert!(mean.recall > 0.9, "AC-mean recall {}", mean.recall);
}

#[test]
fn report_structure_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        cells: vec![CellKind::Gru, CellKind::Rnn],
        modes: vec![FeatureMode::Product, FeatureMode::Concat],
        ..small_config(dir.path())
    };
    let outcome = run_experiment(&config).unwrap();
    let report = &outcome.report;
    assert_eq!(report.rows.len(), 2 * 2 * Stage::ALL.len());
    assert_eq!(report.clusters.len(), 2 * 2 * 2 * config.k);

    for (block, (&cell, &mode)) in report
        .rows
        .chunks(Stage::ALL.len())
        .zip(config.cells.iter().flat_map(|c| config.modes.iter().map(move |m| (c, m))))
    {
        let stages: Vec<Stage> = block.iter().map(|r| r.stage).collect();
        assert_eq!(stages, Stage::ALL);
        assert!(block.iter().all(|r| r.cell == cell && r.mode == mode));
        assert_eq!(block[0].cluster, ClusterRef::All);

        let ac: Vec<MetricValues> = report
            .clusters
            .iter()
            .filter(|c| c.cell == cell && c.mode == mode && c.phase == Phase::AfterClustering)
            .map(|c| c.values)
            .collect();
        let at: Vec<_> = report
            .clusters
            .iter()
            .filter(|c| c.cell == cell && c.mode == mode && c.phase == Phase::AfterTrimming)
            .collect();
        assert_eq!(ac.len(), config.k);

        let n = ac.len() as f64;
        let mean = MetricValues {
            recall: ac.iter().map(|v| v.recall).sum::<f64>() / n,
            precision: ac.iter().map(|v| v.precision).sum::<f64>() / n,
            accuracy: ac.iter().map(|v| v.accuracy).sum::<f64>() / n,
            f1: ac.iter().map(|v| v.f1).sum::<f64>() / n,
        };
        let row = |s: Stage| block.iter().find(|r| r.stage == s).unwrap();
        assert!(close(&row(Stage::AcMean).values(), &mean));
        assert_eq!(row(Stage::BtMean).values(), row(Stage::AcMean).values());
        assert_eq!(row(Stage::BtWorst).values(), row(Stage::AcWorst).values());

        let best_f1 = ac.iter().map(|v| v.f1).fold(f64::MIN, f64::max);
        let worst_f1 = ac.iter().map(|v| v.f1).fold(f64::MAX, f64::min);
        assert_eq!(row(Stage::AcBest).f1, best_f1);
        assert_eq!(row(Stage::AcWorst).f1, worst_f1);
        let ClusterRef::Index(w) = row(Stage::AcWorst).cluster else { panic!("worst row names a cluster") };
        assert_eq!(ac[w].f1, worst_f1);

        for (c, t) in at.iter().enumerate() {
            if !t.trimmed {
                assert_eq!(t.values, ac[c], "untrimmed cluster keeps its clustered metrics");
                assert!(t.zeroed.is_empty());
            }
        }
    }

    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let parsed = parse_report_csv(&csv).unwrap();
    let expected: Vec<ReportRow> = report.rows.iter().map(ReportRow::rounded).collect();
    assert_eq!(parsed, expected);
    let json: Vec<ReportRow> = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json, report.rows);
    assert!(dir.path().join("clusters.csv").exists());
}

#[test]
fn identical_configs_give_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = ExperimentConfig {
        dump_transitions: true,
        ..small_config(a.path())
    };
    run_experiment(&config).unwrap();
    run_experiment(&ExperimentConfig {
        out_dir: b.path().to_path_buf(),
        ..config.clone()
    })
    .unwrap();
    for name in ["report.csv", "report.json", "clusters.csv", "transitions_all.csv", "transitions_0.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let other = execute(&ExperimentConfig { seed: 12, ..config }).unwrap();
    let first = fs::read_to_string(a.path().join("report.csv")).unwrap();
    assert_ne!(other.report.to_csv(), first, "a different seed changes the run");
}

#[test]
fn movielens_files_end_to_end() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let corpus = simulate_corpus(&CorpusSpec {
        n_users: 150,
        n_movies: 300,
        ..CorpusSpec::default()
    })
    .unwrap();
    let (movies, ratings) = corpus.write(data.path()).unwrap();
    let config = ExperimentConfig {
        ratings_path: Some(ratings),
        movies_path: Some(movies),
        synthetic_users: None,
        max_users: Some(100),
        ..small_config(out.path())
    };
    let outcome = run_experiment(&config).unwrap();
    assert_eq!(outcome.users, 100);
    assert_eq!(outcome.clustering.assignment.len(), 100);
    assert_eq!(outcome.report.rows.len(), Stage::ALL.len());
}

#[test]
fn errors_surface() {
    let out = tempfile::tempdir().unwrap();
    let missing = ExperimentConfig {
        ratings_path: Some(out.path().join("nope.csv")),
        movies_path: Some(out.path().join("movies.csv")),
        synthetic_users: None,
        ..small_config(out.path())
    };
    assert!(matches!(run_experiment(&missing), Err(Error::FileNotFound(_))));
    assert!(!out.path().join("report.csv").exists());

    let too_few = ExperimentConfig {
        synthetic_users: Some(2),
        ..small_config(out.path())
    };
    assert!(matches!(execute(&too_few), Err(Error::TooFewUsers { k: 3, users: 2 })));
    let bad = ExperimentConfig {
        split_fraction: 1.5,
        ..small_config(out.path())
    };
    assert!(matches!(execute(&bad), Err(Error::Config(_))));
}

#[test]
fn cli_runs_and_reports_errors() {
    let out = tempfile::tempdir().unwrap();
    let config_path = out.path().join("run.toml");
    fs::write(&config_path, "k = 2\nepochs = 2\nhidden_dim = 4\ncells = [\"RNN\"]\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_genreseq"))
        .args(["--config", config_path.to_str().unwrap(), "--synthetic", "80", "--mode", "Sum,GenreOnly"])
        .args(["--seed", "3", "--out", out.path().to_str().unwrap()])
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = parse_report_csv(&fs::read_to_string(out.path().join("report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * Stage::ALL.len());
    assert!(rows.iter().all(|r| r.cell == CellKind::Rnn));

    let failed = Command::new(env!("CARGO_BIN_EXE_genreseq"))
        .args(["--ratings", "/nonexistent/ratings.csv", "--movies", "/nonexistent/movies.csv"])
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("genreseq: error:"));

    let sim = tempfile::tempdir().unwrap();
    let made = Command::new(env!("CARGO_BIN_EXE_mlsim"))
        .args(["--out", sim.path().to_str().unwrap(), "--users", "30", "--movies", "50"])
        .output()
        .unwrap();
    assert!(made.status.success());
    assert!(sim.path().join("ratings.csv").exists() && sim.path().join("movies.csv").exists());
}
