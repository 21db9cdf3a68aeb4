//! End-to-end experiment: ingest, baseline, clustering, per-cluster models,
//! trimming and the aggregate report.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::UserSequence;

mod config;
mod report;
mod run;

pub use config::{random_stochastic, ExperimentConfig, PlantedKind, WORKERS_ENV};
pub use report::{
    emit_report, parse_report_csv, write_transitions, ClusterRef, ClusterRow, EvalReport, Phase, ReportRow, Stage,
    CLUSTERS_HEADER, REPORT_HEADER,
};
pub use run::{execute, load_input, run_experiment, ExperimentOutcome};

pub(crate) const TAG_SPLIT: u64 = 1;
pub(crate) const TAG_TRAIN: u64 = 2;
pub(crate) const TAG_SAMPLE: u64 = 3;
pub(crate) const TAG_KMEANS: u64 = 4;
pub(crate) const TAG_SYNTHETIC: u64 = 5;
pub(crate) const TAG_PLANTED: u64 = 6;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for one stage of the pipeline.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Seeded user-level split. The first `ceil(fraction * n)` users of a
/// shuffled order form the training part; both parts keep input order.
pub fn split_users(
    sequences: &[UserSequence],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<UserSequence>, Vec<UserSequence>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = sequences.len();
    let n_train = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train.min(n)] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train.min(n)));
    for (s, t) in sequences.iter().zip(in_train) {
        if t { train.push(s.clone()) } else { test.push(s.clone()) }
    }
    Ok((train, test))
}
