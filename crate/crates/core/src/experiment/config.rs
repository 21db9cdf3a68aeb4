use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::evaluation::{Metric, DEFAULT_THRESHOLD};
use crate::genre::{GenreMatrix, MatrixKind, N_GENRES};
use crate::ingest::SyntheticSpec;
use crate::recurrent::{CellKind, TrainConfig};
use crate::transition::FeatureMode;

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "GENRESEQ_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantedKind {
    Identity,
    Uniform,
    Random,
}

impl std::str::FromStr for PlantedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(PlantedKind::Identity),
            "uniform" => Ok(PlantedKind::Uniform),
            "random" => Ok(PlantedKind::Random),
            _ => Err(Error::Config(format!("unknown planted matrix kind {s:?}"))),
        }
    }
}

/// A seeded row-stochastic matrix with entries proportional to U(0, 1) draws.
pub fn random_stochastic(seed: u64) -> GenreMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(N_GENRES * N_GENRES);
    for _ in 0..N_GENRES {
        let row: Vec<f64> = (0..N_GENRES).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        values.extend(row.into_iter().map(|v| v / total));
    }
    GenreMatrix::from_values(N_GENRES, MatrixKind::RowStochastic, values).expect("rows sum to one")
}

/// Flat key-value experiment configuration. Every key has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ratings_path: Option<PathBuf>,
    pub movies_path: Option<PathBuf>,
    /// Users to generate from a planted chain instead of reading files.
    pub synthetic_users: Option<usize>,
    pub synthetic_planted: PlantedKind,
    pub synthetic_genres_min: usize,
    pub synthetic_genres_max: usize,
    /// Seeded subsample of eligible users.
    pub max_users: Option<usize>,

    pub k: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub eta: f64,
    pub theta: f64,
    pub trim_metrics: Vec<Metric>,
    pub threshold: f64,
    pub cells: Vec<CellKind>,
    pub modes: Vec<FeatureMode>,
    pub split_fraction: f64,
    pub seed: u64,

    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,

    pub out_dir: PathBuf,
    pub dump_transitions: bool,
    /// Weight cluster means by cluster size instead of averaging clusters equally.
    pub weighted_means: bool,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        ExperimentConfig {
            ratings_path: None,
            movies_path: None,
            synthetic_users: None,
            synthetic_planted: PlantedKind::Random,
            synthetic_genres_min: 1,
            synthetic_genres_max: 3,
            max_users: None,
            k: DEFAULT_K,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            kmeans_tol: DEFAULT_TOL,
            eta: 0.5,
            theta: 0.1,
            trim_metrics: vec![Metric::Precision, Metric::Recall],
            threshold: DEFAULT_THRESHOLD,
            cells: CellKind::ALL.to_vec(),
            modes: FeatureMode::ALL.to_vec(),
            split_fraction: 0.8,
            seed: 0,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            epochs: train.epochs,
            batch_size: train.batch_size,
            hidden_dim: train.hidden_dim,
            init_scale: train.init_scale,
            out_dir: PathBuf::from("out"),
            dump_transitions: false,
            weighted_means: false,
            workers: None,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.ratings_path, &self.movies_path, self.synthetic_users) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            (None, None, None) => return Err(Error::Config("no data source: give ratings/movies paths or synthetic users".into())),
            (_, _, Some(_)) => return Err(Error::Config("synthetic users and input files are mutually exclusive".into())),
            _ => return Err(Error::Config("ratings and movies paths must be given together".into())),
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        open_unit("eta", self.eta)?;
        open_unit("theta", self.theta)?;
        open_unit("split", self.split_fraction)?;
        open_unit("threshold", self.threshold)?;
        if self.cells.is_empty() || self.modes.is_empty() || self.trim_metrics.is_empty() {
            return Err(Error::Config("cells, modes and trim_metrics must be non-empty".into()));
        }
        if self.max_users == Some(0) || self.workers == Some(0) {
            return Err(Error::Config("max_users and workers must be positive".into()));
        }
        self.train_config(0).validate()?;
        if self.synthetic_users.is_some() {
            self.synthetic_spec()?;
        }
        Ok(())
    }

    /// Training hyperparameters with the given seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            hidden_dim: self.hidden_dim,
            seed,
            init_scale: self.init_scale,
        }
    }

    pub fn trim_metric_set(&self) -> BTreeSet<Metric> {
        self.trim_metrics.iter().copied().collect()
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let n_users = self.synthetic_users.ok_or_else(|| Error::Config("no synthetic users configured".into()))?;
        let planted_matrix = match self.synthetic_planted {
            PlantedKind::Identity => GenreMatrix::identity(N_GENRES),
            PlantedKind::Uniform => GenreMatrix::uniform(N_GENRES),
            PlantedKind::Random => random_stochastic(super::derive_seed(self.seed, &[super::TAG_PLANTED])),
        };
        let (lo, hi) = (self.synthetic_genres_min, self.synthetic_genres_max);
        if lo == 0 || lo > hi || hi > N_GENRES {
            return Err(Error::Config(format!("synthetic genres per movie {lo}..={hi} outside 1..={N_GENRES}")));
        }
        Ok(SyntheticSpec {
            n_users,
            planted_matrix,
            genres_per_movie: (lo, hi),
            seed: super::derive_seed(self.seed, &[super::TAG_SYNTHETIC]),
        })
    }

    /// Worker count: environment override, then config, then available cores.
    pub fn worker_count(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|&n: &usize| n > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.k, 7);
        assert_eq!(c.eta, 0.5);
        assert_eq!(c.theta, 0.1);
        assert_eq!(c.split_fraction, 0.8);
        assert_eq!(c.trim_metrics, vec![Metric::Precision, Metric::Recall]);
        assert!(c.validate().is_err(), "no data source");
    }

    #[test]
    fn toml_round_trip_and_flat_keys() {
        let text = r#"
            synthetic_users = 200
            synthetic_planted = "identity"
            cells = ["GRU"]
            modes = ["Product", "GenreOnly"]
            trim_metrics = ["precision", "recall", "accuracy"]
            eta = 0.4
            epochs = 3
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.cells, vec![CellKind::Gru]);
        assert_eq!(c.modes, vec![FeatureMode::Product, FeatureMode::GenreOnly]);
        assert_eq!(c.synthetic_planted, PlantedKind::Identity);
        assert_eq!(c.epochs, 3);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert!(ExperimentConfig::from_toml_str("bogus_key = 1").is_err());
    }

    #[test]
    fn invalid_values() {
        let base = ExperimentConfig {
            synthetic_users: Some(10),
            ..Default::default()
        };
        base.validate().unwrap();
        for bad in [
            ExperimentConfig { eta: 1.0, ..base.clone() },
            ExperimentConfig { theta: 0.0, ..base.clone() },
            ExperimentConfig { split_fraction: 1.0, ..base.clone() },
            ExperimentConfig { cells: vec![], ..base.clone() },
            ExperimentConfig { k: 0, ..base.clone() },
            ExperimentConfig { ratings_path: Some("r.csv".into()), ..base.clone() },
            ExperimentConfig { synthetic_genres_min: 0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn random_planted_is_stochastic_and_seeded() {
        let a = random_stochastic(1);
        assert_eq!(a, random_stochastic(1));
        assert_ne!(a, random_stochastic(2));
    }
}
