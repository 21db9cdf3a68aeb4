use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{emit_report, write_transitions, ClusterRef, ClusterRow, EvalReport, Phase, ReportRow, Stage};
use super::{derive_seed, split_users, TAG_KMEANS, TAG_SAMPLE, TAG_SPLIT, TAG_TRAIN};
use crate::clustering::{kmeans, rating_profile, ClusterModel, KMeansConfig, RatingProfile};
use crate::error::{Error, Result};
use crate::evaluation::{
    confusion_counts, metrics, select_trim_clusters, trim_genres, ClusterMetrics, MetricValues, MovieGenreMatrix,
};
use crate::genre::GenreMatrix;
use crate::ingest::{generate_synthetic, load_sequences, SequenceSet, UserSequence};
use crate::recurrent::{train, CellKind, ForwardCache};
use crate::transition::{
    apply_trim_to_dataset, build_dataset, count_transitions, masked_transitions, normalize_transitions, Dataset,
    FeatureMode, TransitionModel,
};

/// Everything produced by one run besides the files on disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub users: usize,
    pub dropped_users: usize,
    pub removed_events: usize,
    pub clustering: ClusterModel,
    pub global_transitions: GenreMatrix,
    pub cluster_transitions: Vec<TransitionModel>,
    /// Genres each cluster would lose to trimming.
    pub zeroed: Vec<BTreeSet<usize>>,
    /// Clusters trimmed per (cell, mode).
    pub trimmed: BTreeMap<(CellKind, FeatureMode), BTreeSet<usize>>,
}

/// Eligible sequences from files or the synthetic generator, subsampled
/// to `max_users` when configured.
pub fn load_input(config: &ExperimentConfig) -> Result<SequenceSet> {
    let mut set = match (&config.ratings_path, &config.movies_path) {
        (Some(r), Some(m)) => load_sequences(r, m)?,
        _ => {
            let (sequences, _) = generate_synthetic(&config.synthetic_spec()?)?;
            SequenceSet {
                sequences,
                ..SequenceSet::default()
            }
        }
    };
    if let Some(max) = config.max_users {
        let n = set.sequences.len();
        if max < n {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[TAG_SAMPLE]));
            let mut keep = sample(&mut rng, n, max).into_vec();
            keep.sort_unstable();
            let mut all: Vec<Option<UserSequence>> = set.sequences.into_iter().map(Some).collect();
            set.sequences = keep.into_iter().map(|i| all[i].take().expect("distinct indices")).collect();
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scope {
    Global,
    Cluster(usize),
}

impl Scope {
    fn tag(self) -> u64 {
        match self {
            Scope::Global => u64::MAX,
            Scope::Cluster(c) => c as u64,
        }
    }
}

struct Split {
    train: Vec<UserSequence>,
    test: Vec<UserSequence>,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    values: MetricValues,
    test_samples: usize,
}

fn train_seed(config: &ExperimentConfig, scope: Scope, cell: CellKind, mode: FeatureMode) -> u64 {
    derive_seed(config.seed, &[TAG_TRAIN, scope.tag(), cell as u64, mode as u64])
}

fn fit_and_score(
    train_set: &Dataset,
    test_set: &Dataset,
    cell: CellKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Scored> {
    let test_samples = test_set.len();
    if train_set.is_empty() {
        warn!("{cell}/{}: empty training set, reporting zero metrics", train_set.mode);
        return Ok(Scored {
            values: MetricValues::default(),
            test_samples,
        });
    }
    let outcome = train(&train_set.samples, cell, &config.train_config(seed))?;
    let mut cache = ForwardCache::new(outcome.params.shape());
    let mut predictions = Vec::with_capacity(test_samples);
    for s in &test_set.samples {
        predictions.push(cache.run(&s.inputs, &outcome.params)?.to_vec());
    }
    let targets: Vec<&[f64]> = test_set.samples.iter().map(|s| s.target.as_slice()).collect();
    let counts = confusion_counts(&predictions, &targets, config.threshold)?;
    Ok(Scored {
        values: metrics(&counts),
        test_samples,
    })
}

fn mean_values(items: &[(MetricValues, f64)]) -> MetricValues {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut m = MetricValues::default();
    if total <= 0.0 {
        return m;
    }
    for (v, w) in items {
        m.recall += v.recall * w;
        m.precision += v.precision * w;
        m.accuracy += v.accuracy * w;
        m.f1 += v.f1 * w;
    }
    m.recall /= total;
    m.precision /= total;
    m.accuracy /= total;
    m.f1 /= total;
    m
}

/// Index of the highest (or lowest) F1; ties go to the lowest cluster.
fn extreme_by_f1(values: &[MetricValues], best: bool) -> usize {
    let mut pick = 0;
    for (c, v) in values.iter().enumerate().skip(1) {
        let better = if best { v.f1 > values[pick].f1 } else { v.f1 < values[pick].f1 };
        if better {
            pick = c;
        }
    }
    pick
}

/// Run the full pipeline in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let started = Instant::now();
    let data = load_input(config)?;
    let seqs = &data.sequences;
    info!(
        "{} eligible users ({} dropped, {} events removed)",
        seqs.len(),
        data.dropped_users,
        data.removed_events
    );
    if seqs.len() < config.k {
        return Err(Error::TooFewUsers {
            k: config.k,
            users: seqs.len(),
        });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    // Baseline split and transitions over all users.
    let (bc_train, bc_test) = split_users(seqs, config.split_fraction, derive_seed(config.seed, &[TAG_SPLIT, Scope::Global.tag()]))?;
    let global_transitions = normalize_transitions(&count_transitions(&bc_train));

    let profiles: Vec<RatingProfile> = seqs.iter().map(rating_profile).collect();
    let clustering = kmeans(
        &profiles,
        KMeansConfig {
            k: config.k,
            seed: derive_seed(config.seed, &[TAG_KMEANS]),
            max_iter: config.kmeans_max_iter,
            tol: config.kmeans_tol,
        },
    )?;
    info!(
        "k-means: {} iterations, inertia {:.4}, sizes {:?}",
        clustering.iterations,
        clustering.inertia,
        clustering.cluster_sizes()
    );

    let k = config.k;
    let mut members: Vec<Vec<UserSequence>> = vec![Vec::new(); k];
    for s in seqs {
        let c = clustering.cluster_of(s.user_id()).expect("every profile is assigned");
        members[c].push(s.clone());
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let splits: Vec<Split> = members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            let seed = derive_seed(config.seed, &[TAG_SPLIT, Scope::Cluster(c).tag()]);
            split_users(m, config.split_fraction, seed).map(|(train, test)| Split { train, test })
        })
        .collect::<Result<_>>()?;
    let cluster_transitions: Vec<TransitionModel> =
        splits.iter().enumerate().map(|(c, s)| TransitionModel::estimate(c, &s.train)).collect();

    // Datasets per (scope, mode), shared by every cell.
    let global_probs = Arc::new(global_transitions.clone());
    let cluster_probs: Vec<Arc<GenreMatrix>> = cluster_transitions.iter().map(|t| Arc::new(t.probs.clone())).collect();
    let mut scopes = vec![Scope::Global];
    scopes.extend((0..k).map(Scope::Cluster));
    let dataset_keys: Vec<(Scope, FeatureMode)> =
        scopes.iter().flat_map(|&s| config.modes.iter().map(move |&m| (s, m))).collect();
    let built: Vec<(Dataset, Dataset)> = pool.install(|| {
        dataset_keys
            .par_iter()
            .map(|&(scope, mode)| match scope {
                Scope::Global => (build_dataset(&bc_train, &global_probs, mode), build_dataset(&bc_test, &global_probs, mode)),
                Scope::Cluster(c) => (
                    build_dataset(&splits[c].train, &cluster_probs[c], mode),
                    build_dataset(&splits[c].test, &cluster_probs[c], mode),
                ),
            })
            .collect()
    });
    let datasets: BTreeMap<(Scope, FeatureMode), (Dataset, Dataset)> = dataset_keys.into_iter().zip(built).collect();

    // Baseline and per-cluster models.
    let tasks: Vec<(Scope, CellKind, FeatureMode)> = scopes
        .iter()
        .flat_map(|&s| config.cells.iter().flat_map(move |&c| config.modes.iter().map(move |&m| (s, c, m))))
        .collect();
    info!("training {} models", tasks.len());
    let scored: Vec<Scored> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(scope, cell, mode)| {
                let (tr, te) = &datasets[&(scope, mode)];
                let r = fit_and_score(tr, te, cell, config, train_seed(config, scope, cell, mode));
                if let Ok(s) = &r {
                    info!("{scope:?} {cell} {mode}: f1 {:.4}", s.values.f1);
                }
                r
            })
            .collect::<Result<_>>()
    })?;
    let results: BTreeMap<(Scope, CellKind, FeatureMode), Scored> = tasks.into_iter().zip(scored).collect();

    // Trimming: genre cutoffs come from each cluster's training users.
    let metric_set = config.trim_metric_set();
    let zeroed: Vec<BTreeSet<usize>> = splits
        .iter()
        .enumerate()
        .map(|(c, s)| trim_genres(&MovieGenreMatrix::from_sequences(c, &s.train), config.theta).1)
        .collect();
    let mut trimmed: BTreeMap<(CellKind, FeatureMode), BTreeSet<usize>> = BTreeMap::new();
    let mut cluster_metrics: BTreeMap<(CellKind, FeatureMode), Vec<ClusterMetrics>> = BTreeMap::new();
    for &cell in &config.cells {
        for &mode in &config.modes {
            let cm: Vec<ClusterMetrics> = (0..k)
                .map(|c| ClusterMetrics::new(c, results[&(Scope::Cluster(c), cell, mode)].values, &metric_set))
                .collect();
            trimmed.insert((cell, mode), select_trim_clusters(&cm, config.eta));
            cluster_metrics.insert((cell, mode), cm);
        }
    }

    // Retraining is only needed where trimming actually removes a genre;
    // otherwise the trimmed data equals the clustered data.
    let at_tasks: Vec<(usize, CellKind, FeatureMode)> = trimmed
        .iter()
        .flat_map(|(&(cell, mode), set)| set.iter().map(move |&c| (c, cell, mode)))
        .filter(|&(c, _, _)| !zeroed[c].is_empty())
        .collect();
    let at_keys: BTreeSet<(usize, FeatureMode)> = at_tasks.iter().map(|&(c, _, m)| (c, m)).collect();
    let at_keys: Vec<(usize, FeatureMode)> = at_keys.into_iter().collect();
    let at_built: Vec<(Dataset, Dataset)> = pool.install(|| {
        at_keys
            .par_iter()
            .map(|&(c, mode)| {
                let probs = Arc::new(masked_transitions(&splits[c].train, &zeroed[c]));
                let tr = apply_trim_to_dataset(&build_dataset(&splits[c].train, &probs, mode), &zeroed[c]);
                let te = apply_trim_to_dataset(&build_dataset(&splits[c].test, &probs, mode), &zeroed[c]);
                (tr, te)
            })
            .collect()
    });
    let at_datasets: BTreeMap<(usize, FeatureMode), (Dataset, Dataset)> = at_keys.into_iter().zip(at_built).collect();
    info!("retraining {} trimmed models", at_tasks.len());
    let at_scored: Vec<Scored> = pool.install(|| {
        at_tasks
            .par_iter()
            .map(|&(c, cell, mode)| {
                let (tr, te) = &at_datasets[&(c, mode)];
                fit_and_score(tr, te, cell, config, train_seed(config, Scope::Cluster(c), cell, mode))
            })
            .collect::<Result<_>>()
    })?;
    let at_results: BTreeMap<(usize, CellKind, FeatureMode), Scored> = at_tasks.into_iter().zip(at_scored).collect();

    // Aggregate rows and per-cluster detail.
    let weight = |c: usize| if config.weighted_means { sizes[c] as f64 } else { 1.0 };
    let mut report = EvalReport::default();
    for &cell in &config.cells {
        for &mode in &config.modes {
            let selected = &trimmed[&(cell, mode)];
            let ac: Vec<MetricValues> = (0..k).map(|c| results[&(Scope::Cluster(c), cell, mode)].values).collect();
            let at: Vec<Scored> = (0..k)
                .map(|c| {
                    at_results
                        .get(&(c, cell, mode))
                        .copied()
                        .unwrap_or(results[&(Scope::Cluster(c), cell, mode)])
                })
                .collect();
            let at_values: Vec<MetricValues> = at.iter().map(|s| s.values).collect();
            let weighted = |v: &[MetricValues]| -> Vec<(MetricValues, f64)> {
                v.iter().enumerate().map(|(c, &m)| (m, weight(c))).collect()
            };
            let (best, worst, at_worst) =
                (extreme_by_f1(&ac, true), extreme_by_f1(&ac, false), extreme_by_f1(&at_values, false));
            let ac_mean = mean_values(&weighted(&ac));
            let row = |stage, cluster, v| ReportRow::new(cell, mode, stage, cluster, v);
            report.rows.extend([
                row(Stage::BeforeClustering, ClusterRef::All, results[&(Scope::Global, cell, mode)].values),
                row(Stage::AcBest, ClusterRef::Index(best), ac[best]),
                row(Stage::AcWorst, ClusterRef::Index(worst), ac[worst]),
                row(Stage::AcMean, ClusterRef::Mean, ac_mean),
                row(Stage::BtMean, ClusterRef::Mean, ac_mean),
                row(Stage::BtWorst, ClusterRef::Index(worst), ac[worst]),
                row(Stage::AtWorst, ClusterRef::Index(at_worst), at_values[at_worst]),
                row(Stage::AtMean, ClusterRef::Mean, mean_values(&weighted(&at_values))),
            ]);

            let cm = &cluster_metrics[&(cell, mode)];
            for c in 0..k {
                let is_trimmed = selected.contains(&c);
                report.clusters.push(ClusterRow {
                    cell,
                    mode,
                    phase: Phase::AfterClustering,
                    cluster: c,
                    users: sizes[c],
                    test_samples: results[&(Scope::Cluster(c), cell, mode)].test_samples,
                    values: ac[c],
                    p_min: cm[c].p_min,
                    trimmed: is_trimmed,
                    zeroed: Vec::new(),
                });
            }
            for c in 0..k {
                let is_trimmed = selected.contains(&c);
                report.clusters.push(ClusterRow {
                    cell,
                    mode,
                    phase: Phase::AfterTrimming,
                    cluster: c,
                    users: sizes[c],
                    test_samples: at[c].test_samples,
                    values: at[c].values,
                    p_min: ClusterMetrics::new(c, at[c].values, &metric_set).p_min,
                    trimmed: is_trimmed,
                    zeroed: if is_trimmed { zeroed[c].iter().copied().collect() } else { Vec::new() },
                });
            }
        }
    }
    info!("experiment finished in {:.1}s", started.elapsed().as_secs_f64());

    Ok(ExperimentOutcome {
        report,
        users: seqs.len(),
        dropped_users: data.dropped_users,
        removed_events: data.removed_events,
        clustering,
        global_transitions,
        cluster_transitions,
        zeroed,
        trimmed,
    })
}

/// Run the pipeline and write the report files under `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = execute(config)?;
    emit_report(&outcome.report, &config.out_dir)?;
    if config.dump_transitions {
        write_transitions(&config.out_dir, "all", &outcome.global_transitions)?;
        for t in &outcome.cluster_transitions {
            write_transitions(&config.out_dir, &t.cluster.to_string(), &t.probs)?;
        }
    }
    Ok(outcome)
}
