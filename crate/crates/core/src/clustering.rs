//! Per-user genre rating profiles and k-means over them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genre::N_GENRES;
use crate::ingest::UserSequence;

pub const DEFAULT_K: usize = 7;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Average rating per genre over a user's window; 0 where the genre is unseen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingProfile {
    pub user_id: u32,
    pub profile: Vec<f64>,
}

pub fn rating_profile(seq: &UserSequence) -> RatingProfile {
    let mut sum = [0.0; N_GENRES];
    let mut count = [0usize; N_GENRES];
    for e in seq.events() {
        for g in e.genres.support() {
            sum[g] += e.event.rating;
            count[g] += 1;
        }
    }
    let profile = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    RatingProfile {
        user_id: seq.user_id(),
        profile,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<u32, usize>,
    pub inertia: f64,
    /// Inertia after each assignment step, ending with the final assignment.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn cluster_of(&self, user_id: u32) -> Option<usize> {
        self.assignment.get(&user_id).copied()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignment.values() {
            sizes[c] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: DEFAULT_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn assign_cluster(profile: &RatingProfile, model: &ClusterModel) -> usize {
    nearest(&profile.profile, &model.centroids).0
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut x = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if x < d {
                    break;
                }
                x -= d;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[idx] = true;
        let c = points[idx].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign_all(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (c, d) = nearest(p, centroids);
        labels.push(c);
        dists.push(d);
    }
    let inertia = dists.iter().sum();
    (labels, dists, inertia)
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// A cluster left empty by an assignment step is reseeded at the point
/// farthest from its own centroid, so k stays fixed.
pub fn kmeans(profiles: &[RatingProfile], config: KMeansConfig) -> Result<ClusterModel> {
    let KMeansConfig { k, seed, max_iter, tol } = config;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > profiles.len() {
        return Err(Error::TooFewUsers { k, users: profiles.len() });
    }
    let dim = profiles[0].profile.len();
    if profiles.iter().any(|p| p.profile.len() != dim) {
        return Err(Error::ShapeMismatch("profiles differ in length".into()));
    }
    let points: Vec<&[f64]> = profiles.iter().map(|p| p.profile.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&points, k, &mut rng);
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let (labels, dists, inertia) = assign_all(&points, &centroids);
        trace.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / n as f64).collect()
                }
            })
            .collect();

        let mut taken = vec![false; points.len()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..points.len())
                .filter(|&i| !taken[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                taken[i] = true;
                next[c] = points[i].to_vec();
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }

    let (labels, _, inertia) = assign_all(&points, &centroids);
    trace.push(inertia);
    let assignment = profiles.iter().zip(labels).map(|(p, c)| (p.user_id, c)).collect();
    Ok(ClusterModel {
        k,
        centroids,
        assignment,
        inertia,
        inertia_trace: trace,
        iterations,
    })
}
