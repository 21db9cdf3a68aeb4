//! Micro-averaged multi-label metrics and sub-genre trimming.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genre::N_GENRES;
use crate::ingest::UserSequence;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Pooled confusion counts over every (sample, genre) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// A cell is predicted positive iff its probability is strictly above `threshold`.
pub fn confusion_counts<P, T>(predictions: &[P], targets: &[T], threshold: f64) -> Result<ConfusionCounts>
where
    P: AsRef<[f64]>,
    T: AsRef<[f64]>,
{
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in predictions.iter().zip(targets) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() {
            return Err(Error::LengthMismatch { left: p.len(), right: t.len() });
        }
        for (&prob, &truth) in p.iter().zip(t) {
            match (prob > threshold, truth > 0.5) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Recall, precision, accuracy and F1; a zero denominator yields 0.
pub fn metrics(c: &ConfusionCounts) -> MetricValues {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let accuracy = ratio(c.tp + c.tn, c.total());
    let f1 = if recall + precision == 0.0 {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Recall,
    Precision,
    Accuracy,
    F1,
}

impl Metric {
    pub fn of(self, v: &MetricValues) -> f64 {
        match self {
            Metric::Recall => v.recall,
            Metric::Precision => v.precision,
            Metric::Accuracy => v.accuracy,
            Metric::F1 => v.f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recall" => Ok(Metric::Recall),
            "precision" => Ok(Metric::Precision),
            "accuracy" => Ok(Metric::Accuracy),
            "f1" | "f1-score" => Ok(Metric::F1),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// Metric set used for the trimming decision unless configured otherwise.
pub fn default_trim_metrics() -> BTreeSet<Metric> {
    [Metric::Precision, Metric::Recall].into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub cluster: usize,
    pub values: MetricValues,
    /// Minimum over the configured metric set.
    pub p_min: f64,
}

impl ClusterMetrics {
    pub fn new(cluster: usize, values: MetricValues, metric_set: &BTreeSet<Metric>) -> Self {
        let p_min = metric_set.iter().map(|m| m.of(&values)).fold(f64::INFINITY, f64::min);
        ClusterMetrics { cluster, values, p_min }
    }
}

/// Clusters whose worst configured metric falls below `eta`.
pub fn select_trim_clusters(all: &[ClusterMetrics], eta: f64) -> BTreeSet<usize> {
    all.iter().filter(|m| m.p_min < eta).map(|m| m.cluster).collect()
}

/// Per-user genre occurrence counts for one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovieGenreMatrix {
    pub cluster: usize,
    /// One row per user; `counts[u][j]` is how many of the user's movies carry genre `j`.
    pub counts: Vec<[u32; N_GENRES]>,
    /// Total movie events in the cluster.
    pub length: usize,
}

impl MovieGenreMatrix {
    pub fn from_sequences(cluster: usize, sequences: &[UserSequence]) -> Self {
        let counts = sequences
            .iter()
            .map(|s| {
                let mut row = [0u32; N_GENRES];
                for g in s.genres() {
                    for j in g.support() {
                        row[j] += 1;
                    }
                }
                row
            })
            .collect();
        let length = sequences.iter().map(|s| s.events().len()).sum();
        MovieGenreMatrix { cluster, counts, length }
    }

    pub fn genre_totals(&self) -> [u64; N_GENRES] {
        let mut totals = [0u64; N_GENRES];
        for row in &self.counts {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c as u64;
            }
        }
        totals
    }
}

/// Zero every genre column whose total falls below `theta * length`.
pub fn trim_genres(m: &MovieGenreMatrix, theta: f64) -> (MovieGenreMatrix, BTreeSet<usize>) {
    let cutoff = theta * m.length as f64;
    let zeroed: BTreeSet<usize> = m
        .genre_totals()
        .iter()
        .enumerate()
        .filter(|(_, &g)| (g as f64) < cutoff)
        .map(|(j, _)| j)
        .collect();
    let mut trimmed = m.clone();
    for row in &mut trimmed.counts {
        for &j in &zeroed {
            row[j] = 0;
        }
    }
    (trimmed, zeroed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genre::{genre_index, GenreVector};
    use crate::ingest::{RatingEvent, SequenceEvent};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_direct() {
        let c = confusion_counts(&[vec![0.9, 0.1]], &[vec![1.0, 0.0]], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 0, fn_: 0, tn: 1 });
    }

    #[test]
    fn threshold_tie_is_negative() {
        let c = confusion_counts(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, fn_: 1, tn: 1 });
    }

    #[test]
    fn length_mismatch() {
        let r = confusion_counts(&[vec![0.5]], &[vec![1.0], vec![0.0]], 0.5);
        assert!(matches!(r, Err(Error::LengthMismatch { left: 1, right: 2 })));
    }

    #[test]
    fn counts_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let preds: Vec<Vec<f64>> = (0..50).map(|_| (0..N_GENRES).map(|_| rng.gen()).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..50).map(|_| (0..N_GENRES).map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 }).collect()).collect();
        let c = confusion_counts(&preds, &targets, 0.5).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for s in 0..50 {
            for g in 0..N_GENRES {
                let yes = preds[s][g] > 0.5;
                let truth = targets[s][g] == 1.0;
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
        assert_eq!(c, ConfusionCounts { tp, fp, fn_, tn });
        assert_eq!(c.total(), 50 * N_GENRES as u64);
    }

    #[test]
    fn metric_formulas() {
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 5 });
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.f1, 0.75);

        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 10 });
        assert_eq!((m.precision, m.recall, m.accuracy, m.f1), (0.0, 0.0, 1.0, 0.0));

        let m = metrics(&ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 });
        assert_eq!(m.f1, 0.5);
        assert_eq!(metrics(&ConfusionCounts::default()).accuracy, 0.0);
    }

    proptest! {
        #[test]
        fn accuracy_identity(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 1u64..500) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            let m = metrics(&c);
            prop_assert_eq!(m.accuracy, (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64);
            for v in [m.recall, m.precision, m.accuracy, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn selection_monotone_in_eta(pmins in proptest::collection::vec(0.0f64..1.0, 1..10), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let all: Vec<ClusterMetrics> = pmins
                .iter()
                .enumerate()
                .map(|(i, &p)| ClusterMetrics { cluster: i, values: MetricValues::default(), p_min: p })
                .collect();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(select_trim_clusters(&all, lo).is_subset(&select_trim_clusters(&all, hi)));
        }
    }

    fn with_pmin(cluster: usize, precision: f64, recall: f64) -> ClusterMetrics {
        let values = MetricValues { recall, precision, accuracy: 0.9, f1: 0.0 };
        ClusterMetrics::new(cluster, values, &default_trim_metrics())
    }

    #[test]
    fn selection_cases() {
        let all = [with_pmin(2, 0.6, 0.8), with_pmin(7, 0.9, 0.55), with_pmin(3, 0.45, 0.7)];
        assert_eq!(all[1].p_min, 0.55);
        assert_eq!(select_trim_clusters(&all, 0.5), [3].into());
        assert!(select_trim_clusters(&all, 0.4).is_empty());
        assert_eq!(select_trim_clusters(&all, 1.0 - 1e-12).len(), 3);
    }

    fn seq(user: u32, movies: &[Vec<usize>]) -> UserSequence {
        let events = movies
            .iter()
            .enumerate()
            .map(|(t, g)| SequenceEvent {
                event: RatingEvent { user_id: user, movie_id: t as u32, rating: 4.0, timestamp: t as i64 },
                genres: GenreVector::multi_hot(g.iter().copied()).unwrap(),
            })
            .collect();
        UserSequence::new(user, events).unwrap()
    }

    #[test]
    fn trim_is_idempotent_and_noop_when_dense() {
        let seqs: Vec<UserSequence> = (0..4).map(|u| seq(u, &vec![vec![0, 7]; 5])).collect();
        let m = MovieGenreMatrix::from_sequences(0, &seqs);
        assert_eq!(m.length, 20);
        assert!(m.counts.iter().all(|r| r.iter().sum::<u32>() >= 5));
        let (once, zeroed) = trim_genres(&m, 0.1);
        // every genre other than Action and Drama has total 0 < 2
        assert_eq!(zeroed.len(), N_GENRES - 2);
        let (twice, zeroed2) = trim_genres(&once, 0.1);
        assert_eq!(once, twice);
        assert_eq!(zeroed, zeroed2);
        assert_eq!(once.counts, m.counts);
    }

    #[test]
    fn trim_keeps_columns_at_threshold() {
        let doc = genre_index("Documentary").unwrap();
        let mut movies = vec![vec![7]; 5];
        movies[0] = vec![7, doc];
        // 2 users → length 10, theta 0.2 → cutoff 2: Documentary total 2 survives
        let seqs = vec![seq(1, &movies), seq(2, &movies)];
        let (_, zeroed) = trim_genres(&MovieGenreMatrix::from_sequences(0, &seqs), 0.2);
        assert!(!zeroed.contains(&doc));
        assert!(!zeroed.contains(&7));
    }
}
