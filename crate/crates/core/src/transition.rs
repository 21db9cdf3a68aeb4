//! Genre-to-genre transition estimation, average transition vectors (ATV),
//! and the four training feature encodings.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genre::{GenreMatrix, GenreVector, MatrixKind};
use crate::ingest::{UserSequence, SEQUENCE_LEN};

/// Input steps per sample; the last movie of a sequence is the target.
pub const INPUT_STEPS: usize = SEQUENCE_LEN - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub cluster: usize,
    pub counts: GenreMatrix,
    pub probs: GenreMatrix,
}

impl TransitionModel {
    pub fn estimate(cluster: usize, sequences: &[UserSequence]) -> Self {
        let counts = count_transitions(sequences);
        let probs = normalize_transitions(&counts);
        TransitionModel { cluster, counts, probs }
    }
}

/// Accumulate the genre cross product of every consecutive movie pair.
pub(crate) fn count_windows<'a, I, W>(n: usize, windows: I) -> GenreMatrix
where
    I: IntoIterator<Item = W>,
    W: IntoIterator<Item = &'a GenreVector>,
{
    let mut counts = GenreMatrix::zero_counts(n);
    for window in windows {
        let supports: Vec<Vec<usize>> = window.into_iter().map(GenreVector::support).collect();
        for pair in supports.windows(2) {
            for &i in &pair[0] {
                for &j in &pair[1] {
                    counts.add(i, j, 1.0);
                }
            }
        }
    }
    counts
}

pub fn count_transitions(sequences: &[UserSequence]) -> GenreMatrix {
    count_windows(crate::genre::N_GENRES, sequences.iter().map(|s| s.genres()))
}

/// Row-normalize counts. Rows without any count become uniform.
pub fn normalize_transitions(counts: &GenreMatrix) -> GenreMatrix {
    let n = counts.n();
    let mut probs = GenreMatrix::zero_counts(n).with_kind(MatrixKind::RowStochastic);
    for i in 0..n {
        let row = counts.row(i);
        let total: f64 = row.iter().sum();
        let normalized: Vec<f64> = if total > 0.0 {
            row.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        probs.set_row(i, &normalized);
    }
    probs
}

/// Mean of the transition rows indexed by the movie's genres.
pub fn atv(prev_genres: &GenreVector, probs: &GenreMatrix) -> Result<GenreVector> {
    if prev_genres.len() != probs.n() {
        return Err(Error::ShapeMismatch(format!(
            "genre vector of length {} against a {}x{} matrix",
            prev_genres.len(),
            probs.n(),
            probs.n()
        )));
    }
    let support = prev_genres.support();
    if support.is_empty() {
        return Err(Error::EmptyGenreSupport);
    }
    let mut out = vec![0.0; probs.n()];
    for &i in &support {
        for (o, p) in out.iter_mut().zip(probs.row(i)) {
            *o += p;
        }
    }
    let k = support.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    GenreVector::from_values(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    Sum,
    Product,
    Concat,
    GenreOnly,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [FeatureMode::Sum, FeatureMode::Product, FeatureMode::Concat, FeatureMode::GenreOnly];

    /// Feature width for `n` genres.
    pub fn width(self, n: usize) -> usize {
        match self {
            FeatureMode::Concat => 2 * n,
            _ => n,
        }
    }

    pub fn uses_atv(self) -> bool {
        self != FeatureMode::GenreOnly
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Sum => "Sum",
            FeatureMode::Product => "Product",
            FeatureMode::Concat => "Concat",
            FeatureMode::GenreOnly => "GenreOnly",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(FeatureMode::Sum),
            "product" => Ok(FeatureMode::Product),
            "concat" => Ok(FeatureMode::Concat),
            "genreonly" | "genre-only" | "genre_only" => Ok(FeatureMode::GenreOnly),
            _ => Err(Error::Config(format!("unknown feature mode {s:?}"))),
        }
    }
}

pub fn combine(genre: &[f64], atv: &[f64], mode: FeatureMode) -> Result<Vec<f64>> {
    if genre.len() != atv.len() {
        return Err(Error::ShapeMismatch(format!(
            "genre vector of length {} and ATV of length {}",
            genre.len(),
            atv.len()
        )));
    }
    Ok(match mode {
        FeatureMode::Sum => genre.iter().zip(atv).map(|(g, a)| g + a).collect(),
        FeatureMode::Product => genre.iter().zip(atv).map(|(g, a)| g * a).collect(),
        FeatureMode::Concat => genre.iter().chain(atv).copied().collect(),
        FeatureMode::GenreOnly => genre.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user_id: u32,
    /// Genre vectors of all five movies, oldest first.
    pub movies: Vec<GenreVector>,
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Training samples for one feature mode, built against one transition matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub mode: FeatureMode,
    pub probs: Arc<GenreMatrix>,
    pub samples: Vec<Sample>,
    /// Samples removed because an input movie lost every genre to masking.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.mode.width(self.probs.n())
    }

    /// Masked genre windows (all five movies) for re-estimating transitions.
    pub fn movie_windows(&self) -> impl Iterator<Item = &[GenreVector]> + '_ {
        self.samples.iter().map(|s| s.movies.as_slice())
    }
}

fn make_sample(user_id: u32, movies: Vec<GenreVector>, probs: &GenreMatrix, mode: FeatureMode) -> Result<Sample> {
    let mut inputs = Vec::with_capacity(INPUT_STEPS);
    for g in &movies[..INPUT_STEPS] {
        let features = if mode.uses_atv() {
            combine(g.values(), atv(g, probs)?.values(), mode)?
        } else {
            g.values().to_vec()
        };
        inputs.push(features);
    }
    let target = movies[INPUT_STEPS].values().to_vec();
    Ok(Sample {
        user_id,
        movies,
        inputs,
        target,
    })
}

/// One sample per sequence: steps 1..4 combined with their own ATV; the
/// genres of movie 5 as target.
pub fn build_dataset(sequences: &[UserSequence], probs: &Arc<GenreMatrix>, mode: FeatureMode) -> Dataset {
    let samples = sequences
        .iter()
        .map(|s| {
            make_sample(s.user_id(), s.genres().cloned().collect(), probs, mode)
                .expect("valid sequences have non-empty genre sets")
        })
        .collect();
    Dataset {
        mode,
        probs: Arc::clone(probs),
        samples,
        dropped: 0,
    }
}

/// Zero the given genre dimensions in every movie, recompute each input's
/// ATV from the masked genre set, and drop samples whose input movie lost
/// all of its genres.
pub fn apply_trim_to_dataset(dataset: &Dataset, zeroed: &BTreeSet<usize>) -> Dataset {
    if zeroed.is_empty() {
        return dataset.clone();
    }
    let mut samples = Vec::with_capacity(dataset.samples.len());
    let mut dropped = dataset.dropped;
    for s in &dataset.samples {
        let movies: Vec<GenreVector> = s.movies.iter().map(|g| g.masked(zeroed.iter().copied())).collect();
        if movies[..INPUT_STEPS].iter().any(|g| g.count_nonzero() == 0) {
            dropped += 1;
            continue;
        }
        samples.push(make_sample(s.user_id, movies, &dataset.probs, dataset.mode).expect("non-empty inputs"));
    }
    Dataset {
        mode: dataset.mode,
        probs: Arc::clone(&dataset.probs),
        samples,
        dropped,
    }
}

/// Transition matrix estimated on sequences with `zeroed` genres removed.
pub fn masked_transitions(sequences: &[UserSequence], zeroed: &BTreeSet<usize>) -> GenreMatrix {
    let masked: Vec<Vec<GenreVector>> = sequences
        .iter()
        .map(|s| s.genres().map(|g| g.masked(zeroed.iter().copied())).collect())
        .collect();
    let counts = count_windows(crate::genre::N_GENRES, masked.iter().map(|w| w.iter()));
    normalize_transitions(&counts)
}
