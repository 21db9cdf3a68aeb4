//! A MovieLens-format corpus simulator.
//!
//! Produces `movies.csv` / `ratings.csv` pairs with the same schema as the
//! public ml-* releases: a catalog whose genre frequencies follow ml-25m's,
//! a small share of genre-less movies, quoted titles with commas, users
//! with latent taste profiles, short-history users that the pipeline drops,
//! and timestamp ties.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synthetic::weighted_distinct;
use super::{RatingEvent, MOVIES_HEADER, NO_GENRES, RATINGS_HEADER};
use crate::error::{Error, Result};
use crate::genre::{GENRE_NAMES, N_GENRES};

/// Approximate ml-25m movie counts per genre, in alphabet order.
const GENRE_FREQUENCY: [f64; N_GENRES] = [
    7348.0, 4145.0, 2929.0, 2935.0, 16870.0, 5319.0, 5605.0, 25606.0, 2731.0, 353.0, 5989.0, 195.0, 1054.0, 2925.0,
    7719.0, 3595.0, 8654.0, 1874.0, 1399.0,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_users: usize,
    pub n_movies: usize,
    /// Number of latent taste archetypes users are drawn from.
    pub n_archetypes: usize,
    /// Probability that the next movie continues a genre of the previous one.
    pub stickiness: f64,
    /// Mean of the (shifted exponential) history length.
    pub mean_history: f64,
    pub max_history: usize,
    pub no_genre_share: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_users: 12_000,
            n_movies: 4_000,
            n_archetypes: 10,
            stickiness: 0.35,
            mean_history: 18.0,
            max_history: 80,
            no_genre_share: 0.02,
            seed: 2020,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMovie {
    pub movie_id: u32,
    pub title: String,
    /// Empty for movies listed without genres.
    pub genres: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub movies: Vec<CorpusMovie>,
    pub ratings: Vec<RatingEvent>,
}

struct Archetype {
    taste: Vec<f64>,
}

fn archetypes<R: Rng>(rng: &mut R, count: usize) -> Vec<Archetype> {
    let base: Vec<f64> = GENRE_FREQUENCY.iter().map(|f| f.sqrt()).collect();
    (0..count)
        .map(|a| {
            let mut taste = base.clone();
            // archetype 0 is the omnivore: popularity-driven, no favourites
            if a > 0 {
                let n_fav = rng.gen_range(2..=3);
                for g in weighted_distinct(rng, &base, n_fav) {
                    taste[g] *= 10.0;
                }
            }
            let total: f64 = taste.iter().sum();
            Archetype {
                taste: taste.into_iter().map(|t| t / total).collect(),
            }
        })
        .collect()
}

fn title(rng: &mut impl Rng, movie_id: u32) -> String {
    let year = rng.gen_range(1930..=2019);
    if movie_id % 9 == 0 {
        format!("Picture {movie_id}, The ({year})")
    } else {
        format!("Picture {movie_id} ({year})")
    }
}

pub fn simulate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    if spec.n_users == 0 || spec.n_movies < N_GENRES || spec.n_archetypes == 0 || spec.max_history < 1 {
        return Err(Error::InvalidSpec("corpus needs users, archetypes and at least 19 movies".into()));
    }
    if !(0.0..1.0).contains(&spec.stickiness) || !(0.0..1.0).contains(&spec.no_genre_share) {
        return Err(Error::InvalidSpec("stickiness and no_genre_share must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut movies = Vec::with_capacity(spec.n_movies);
    for m in 0..spec.n_movies {
        let movie_id = m as u32 + 1;
        let genres = if m >= N_GENRES && rng.gen::<f64>() < spec.no_genre_share {
            Vec::new()
        } else if m < N_GENRES {
            // every genre gets at least one movie
            vec![m]
        } else {
            let k = match rng.gen::<f64>() {
                x if x < 0.35 => 1,
                x if x < 0.70 => 2,
                x if x < 0.90 => 3,
                _ => 4,
            };
            weighted_distinct(&mut rng, &GENRE_FREQUENCY, k)
        };
        movies.push(CorpusMovie {
            movie_id,
            title: title(&mut rng, movie_id),
            genres,
        });
    }

    // Zipf-like popularity; movies listed without genres still get watched.
    let popularity: Vec<f64> = (0..spec.n_movies).map(|r| 1.0 / (r as f64 + 10.0).powf(0.8)).collect();
    let by_genre: Vec<(Vec<usize>, WeightedIndex<f64>)> = (0..N_GENRES)
        .map(|g| {
            let ids: Vec<usize> = movies
                .iter()
                .enumerate()
                .filter(|(_, m)| m.genres.contains(&g))
                .map(|(i, _)| i)
                .collect();
            let w = WeightedIndex::new(ids.iter().map(|&i| popularity[i])).expect("every genre has a movie");
            (ids, w)
        })
        .collect();
    let any_movie = WeightedIndex::new(&popularity).expect("non-empty catalog");

    let types = archetypes(&mut rng, spec.n_archetypes);
    let mut ratings = Vec::new();
    let epoch_start = 946_684_800i64; // 2000-01-01
    let span = 19 * 365 * 86_400i64;

    for u in 0..spec.n_users {
        let user_id = u as u32 + 1;
        let archetype = &types[rng.gen_range(0..types.len())];
        let taste: Vec<f64> = {
            let raw: Vec<f64> = archetype.taste.iter().map(|t| t * rng.gen_range(0.5..1.5)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|t| t / total).collect()
        };
        let peak = taste.iter().cloned().fold(0.0, f64::max);
        let taste_index = WeightedIndex::new(&taste).expect("positive taste");
        let generosity = rng.gen_range(-0.5..0.5);

        let extra = (-rng.gen::<f64>().max(1e-12).ln() * (spec.mean_history - 3.0).max(0.0)) as usize;
        let length = (3 + extra).min(spec.max_history);
        let mut seen = HashSet::with_capacity(length);
        let mut prev: Option<usize> = None;
        let mut ts = epoch_start + rng.gen_range(0..span);

        for _ in 0..length {
            let mut pick = None;
            for _attempt in 0..20 {
                let candidate = if rng.gen::<f64>() < 0.03 {
                    any_movie.sample(&mut rng)
                } else {
                    let genre = match prev {
                        Some(p) if !movies[p].genres.is_empty() && rng.gen::<f64>() < spec.stickiness => {
                            let gs = &movies[p].genres;
                            gs[rng.gen_range(0..gs.len())]
                        }
                        _ => taste_index.sample(&mut rng),
                    };
                    let (ids, w) = &by_genre[genre];
                    ids[w.sample(&mut rng)]
                };
                if seen.insert(candidate) {
                    pick = Some(candidate);
                    break;
                }
            }
            let Some(m) = pick else { break };
            let movie = &movies[m];
            let affinity = if movie.genres.is_empty() {
                0.5
            } else {
                movie.genres.iter().map(|&g| taste[g] / peak).sum::<f64>() / movie.genres.len() as f64
            };
            let noise: f64 = (0..3).map(|_| rng.gen_range(-0.6..0.6)).sum();
            let raw = 2.4 + 2.6 * affinity + generosity + noise;
            let rating = ((raw * 2.0).round() / 2.0).clamp(0.5, 5.0);
            ratings.push(RatingEvent {
                user_id,
                movie_id: movie.movie_id,
                rating,
                timestamp: ts,
            });
            if rng.gen::<f64>() > 0.05 {
                ts += rng.gen_range(60..5 * 86_400);
            }
            prev = Some(m);
        }
    }
    Ok(Corpus { movies, ratings })
}

impl Corpus {
    /// Write `movies.csv` and `ratings.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let movies_path = dir.join("movies.csv");
        let ratings_path = dir.join("ratings.csv");

        let mut w = csv::Writer::from_path(&movies_path)?;
        w.write_record(MOVIES_HEADER)?;
        for m in &self.movies {
            let genres = if m.genres.is_empty() {
                NO_GENRES.to_string()
            } else {
                m.genres.iter().map(|&g| GENRE_NAMES[g]).collect::<Vec<_>>().join("|")
            };
            w.write_record([m.movie_id.to_string(), m.title.clone(), genres])?;
        }
        w.flush()?;

        let mut out = std::io::BufWriter::new(fs::File::create(&ratings_path)?);
        writeln!(out, "{}", RATINGS_HEADER.join(","))?;
        for r in &self.ratings {
            writeln!(out, "{},{},{:.1},{}", r.user_id, r.movie_id, r.rating, r.timestamp)?;
        }
        out.flush()?;
        Ok((movies_path, ratings_path))
    }
}
