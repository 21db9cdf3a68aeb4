//! Synthetic sequences with a planted genre transition matrix, used as an
//! estimation oracle.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RatingEvent, SequenceEvent, UserSequence, SEQUENCE_LEN};
use crate::error::{Error, Result};
use crate::genre::{GenreMatrix, GenreVector, MatrixKind, N_GENRES};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub planted_matrix: GenreMatrix,
    /// Inclusive range of genres per movie.
    pub genres_per_movie: (usize, usize),
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::InvalidSpec("n_users must be positive".into()));
        }
        if self.planted_matrix.n() != N_GENRES || self.planted_matrix.kind() != MatrixKind::RowStochastic {
            return Err(Error::InvalidSpec(format!(
                "planted matrix must be a {N_GENRES}x{N_GENRES} row-stochastic matrix"
            )));
        }
        let (lo, hi) = self.genres_per_movie;
        if lo == 0 || lo > hi || hi > N_GENRES {
            return Err(Error::InvalidSpec(format!("genres_per_movie {lo}..={hi} outside 1..={N_GENRES}")));
        }
        Ok(())
    }
}

/// Draw up to `count` distinct indices, each round picking proportionally to
/// the remaining weights. Stops early when the remaining mass is zero.
pub(crate) fn weighted_distinct<R: Rng>(rng: &mut R, weights: &[f64], count: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut x = rng.gen::<f64>() * total;
        let mut chosen = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            chosen = Some(i);
            if x < wi {
                break;
            }
            x -= wi;
        }
        let Some(i) = chosen else { break };
        picked.push(i);
        w[i] = 0.0;
    }
    picked.sort_unstable();
    picked
}

/// Movie id for a genre set: its bitmask, so identical sets share an id.
fn movie_id(genres: &[usize]) -> u32 {
    genres.iter().fold(0u32, |acc, &g| acc | (1 << g))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<UserSequence>, GenreMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.genres_per_movie;
    let planted = &spec.planted_matrix;
    let mut sequences = Vec::with_capacity(spec.n_users);

    for u in 0..spec.n_users {
        let user_id = u as u32 + 1;
        let mut events = Vec::with_capacity(SEQUENCE_LEN);
        let mut genres: Vec<usize> = {
            let g = rng.gen_range(lo..=hi);
            let mut v = sample(&mut rng, N_GENRES, g).into_vec();
            v.sort_unstable();
            v
        };
        for t in 0..SEQUENCE_LEN {
            if t > 0 {
                let mut next = vec![0.0; N_GENRES];
                for &i in &genres {
                    for (acc, p) in next.iter_mut().zip(planted.row(i)) {
                        *acc += p / genres.len() as f64;
                    }
                }
                let g = rng.gen_range(lo..=hi);
                genres = weighted_distinct(&mut rng, &next, g);
            }
            let rating = rng.gen_range(1..=10) as f64 * 0.5;
            events.push(SequenceEvent {
                event: RatingEvent {
                    user_id,
                    movie_id: movie_id(&genres),
                    rating,
                    timestamp: t as i64 + 1,
                },
                genres: GenreVector::multi_hot(genres.iter().copied())?,
            });
        }
        sequences.push(UserSequence::new(user_id, events)?);
    }
    Ok((sequences, planted.clone()))
}
