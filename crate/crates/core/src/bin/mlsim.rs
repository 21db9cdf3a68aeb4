use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use genreseq::ingest::{simulate_corpus, CorpusSpec};

/// Write a simulated corpus as movies.csv and ratings.csv in MovieLens layout.
#[derive(Debug, Parser)]
#[command(name = "mlsim", version)]
struct Args {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    movies: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let defaults = CorpusSpec::default();
    let spec = CorpusSpec {
        n_users: args.users.unwrap_or(defaults.n_users),
        n_movies: args.movies.unwrap_or(defaults.n_movies),
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let written = simulate_corpus(&spec).and_then(|corpus| {
        let paths = corpus.write(&args.out)?;
        Ok((corpus.movies.len(), corpus.ratings.len(), paths))
    });
    match written {
        Ok((movies, ratings, (m, r))) => {
            println!("{movies} movies -> {}", m.display());
            println!("{ratings} ratings -> {}", r.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mlsim: error: {e}");
            ExitCode::FAILURE
        }
    }
}
