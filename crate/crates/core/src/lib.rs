//! Next-movie genre prediction from short viewing sequences.
//!
//! The pipeline reads MovieLens-format ratings, keeps each user's five most
//! recent genre-bearing events, clusters users by their rating profile,
//! estimates genre transition matrices per cluster, and trains recurrent
//! multi-label classifiers on genre and transition features. Clusters that
//! predict poorly can be retrained after their rare genres are trimmed.

pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod genre;
pub mod ingest;
pub mod recurrent;
pub mod transition;

pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig};
pub use genre::{GenreMatrix, GenreVector, N_GENRES};
