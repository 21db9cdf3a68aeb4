use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use genreseq::evaluation::Metric;
use genreseq::experiment::{run_experiment, ExperimentConfig, PlantedKind, Stage};
use genreseq::recurrent::CellKind;
use genreseq::transition::FeatureMode;

/// Cluster users, train recurrent genre predictors, trim weak clusters and
/// write the evaluation report.
#[derive(Debug, Parser)]
#[command(name = "genreseq", version)]
struct Args {
    /// TOML configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    movies: Option<PathBuf>,
    /// Generate this many users from a planted transition matrix instead of reading files.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Planted matrix for --synthetic: identity, uniform or random.
    #[arg(long)]
    planted: Option<PlantedKind>,
    #[arg(long)]
    max_users: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Metric set for trimming selection, comma separated.
    #[arg(long, value_delimiter = ',')]
    trim_metrics: Option<Vec<Metric>>,
    /// Cell kinds, comma separated (RNN, LSTM, GRU).
    #[arg(long, value_delimiter = ',')]
    cell: Option<Vec<CellKind>>,
    /// Feature modes, comma separated (Sum, Product, Concat, GenreOnly).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<FeatureMode>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training fraction of each user split.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every transition matrix as CSV.
    #[arg(long)]
    dump_transitions: bool,
    /// Weight cluster means by cluster size.
    #[arg(long)]
    weighted_means: bool,
}

fn build_config(args: Args) -> genreseq::Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if args.ratings.is_some() || args.movies.is_some() {
        c.ratings_path = args.ratings.or(c.ratings_path);
        c.movies_path = args.movies.or(c.movies_path);
        c.synthetic_users = None;
    }
    if let Some(n) = args.synthetic {
        c.synthetic_users = Some(n);
        c.ratings_path = None;
        c.movies_path = None;
    }
    macro_rules! set {
        ($($arg:ident => $key:ident),* $(,)?) => {
            $(if let Some(v) = args.$arg { c.$key = v; })*
        };
    }
    set!(
        planted => synthetic_planted,
        k => k,
        eta => eta,
        theta => theta,
        trim_metrics => trim_metrics,
        cell => cells,
        mode => modes,
        seed => seed,
        split => split_fraction,
        epochs => epochs,
        hidden => hidden_dim,
        lr => learning_rate,
        batch_size => batch_size,
        out => out_dir,
    );
    if args.max_users.is_some() {
        c.max_users = args.max_users;
    }
    if args.workers.is_some() {
        c.workers = args.workers;
    }
    c.dump_transitions |= args.dump_transitions;
    c.weighted_means |= args.weighted_means;
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = build_config(args).and_then(|config| {
        let outcome = run_experiment(&config)?;
        Ok((config, outcome))
    });
    match result {
        Ok((config, outcome)) => {
            println!(
                "{} users, {} clusters, report written to {}",
                outcome.users,
                config.k,
                config.out_dir.display()
            );
            for r in outcome.report.rows.iter().filter(|r| matches!(r.stage, Stage::BeforeClustering | Stage::AcMean | Stage::AtMean)) {
                println!("{}", r.to_csv_line());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("genreseq: error: {e}");
            ExitCode::FAILURE
        }
    }
}
