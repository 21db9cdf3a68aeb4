//! MovieLens-format loading and per-user sequence construction.
//!
//! A user's sequence is the five most recent rated movies (by timestamp,
//! ties by ascending movie id) among movies that carry at least one genre.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genre::{encode_genres, GenreVector, N_GENRES};

mod simulate;
mod synthetic;

pub use simulate::{simulate_corpus, Corpus, CorpusMovie, CorpusSpec};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Events per user sequence.
pub const SEQUENCE_LEN: usize = 5;

pub const MIN_RATING: f64 = 0.5;
pub const MAX_RATING: f64 = 5.0;

pub const MOVIES_HEADER: [&str; 3] = ["movieId", "title", "genres"];
pub const RATINGS_HEADER: [&str; 4] = ["userId", "movieId", "rating", "timestamp"];
pub const NO_GENRES: &str = "(no genres listed)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user_id: u32,
    pub movie_id: u32,
    pub rating: f64,
    pub timestamp: i64,
}

impl RatingEvent {
    fn order_key(&self) -> (u32, i64, u32) {
        (self.user_id, self.timestamp, self.movie_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvent {
    pub event: RatingEvent,
    pub genres: GenreVector,
}

/// One user's five most recent movie events, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSequence {
    user_id: u32,
    events: Vec<SequenceEvent>,
}

impl UserSequence {
    pub fn new(user_id: u32, events: Vec<SequenceEvent>) -> Result<Self> {
        if events.len() != SEQUENCE_LEN {
            return Err(Error::InvalidSequence(format!(
                "user {user_id}: expected {SEQUENCE_LEN} events, got {}",
                events.len()
            )));
        }
        for pair in events.windows(2) {
            let (a, b) = (&pair[0].event, &pair[1].event);
            if (a.timestamp, a.movie_id) > (b.timestamp, b.movie_id) {
                return Err(Error::InvalidSequence(format!(
                    "user {user_id}: events out of chronological order"
                )));
            }
        }
        for e in &events {
            if e.event.user_id != user_id {
                return Err(Error::InvalidSequence(format!(
                    "user {user_id}: event belongs to user {}",
                    e.event.user_id
                )));
            }
            if e.genres.len() != N_GENRES || !e.genres.is_multi_hot() || e.genres.count_nonzero() == 0 {
                return Err(Error::InvalidSequence(format!(
                    "user {user_id}: movie {} has an invalid genre vector",
                    e.event.movie_id
                )));
            }
        }
        Ok(UserSequence { user_id, events })
    }

    pub fn user_id(&self) -> u32 {
        self.user_id
    }

    pub fn events(&self) -> &[SequenceEvent] {
        &self.events
    }

    pub fn genres(&self) -> impl Iterator<Item = &GenreVector> + '_ {
        self.events.iter().map(|e| &e.genres)
    }
}

/// Movie id to multi-hot genres, plus the number of genre-less movies omitted.
#[derive(Debug, Clone, Default)]
pub struct MovieCatalog {
    pub genres: HashMap<u32, GenreVector>,
    pub skipped: usize,
}

impl MovieCatalog {
    pub fn get(&self, movie_id: u32) -> Option<&GenreVector> {
        self.genres.get(&movie_id)
    }

    pub fn len(&self) -> usize {
        self.genres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genres.is_empty()
    }
}

/// Sequences plus the tally of users that could not form one.
#[derive(Debug, Clone, Default)]
pub struct SequenceSet {
    pub sequences: Vec<UserSequence>,
    pub dropped_users: usize,
    /// Events discarded because their movie is unknown or has no genres.
    pub removed_events: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header {:?}, got {:?}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, what: &str) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::MalformedRow {
        line: line_of(record),
        reason: format!("unparsable {what} {raw:?}"),
    })
}

pub fn load_movies(path: impl AsRef<Path>) -> Result<MovieCatalog> {
    parse_movies(open(path.as_ref())?)
}

pub fn parse_movies<R: Read>(input: R) -> Result<MovieCatalog> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &MOVIES_HEADER)?;
    let mut catalog = MovieCatalog::default();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != MOVIES_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 columns, got {}", record.len()),
            });
        }
        let movie_id: u32 = parse_field(&record, 0, "movieId")?;
        let field = record[2].trim();
        if field.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty genre field".into(),
            });
        }
        if field == NO_GENRES {
            catalog.skipped += 1;
            continue;
        }
        let names: Vec<&str> = field.split('|').collect();
        catalog.genres.insert(movie_id, encode_genres(&names)?);
    }
    Ok(catalog)
}

/// Ratings grouped by user id, each group in (timestamp, movie id) order.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingEvent>> {
    parse_ratings(open(path.as_ref())?)
}

pub fn parse_ratings<R: Read>(input: R) -> Result<Vec<RatingEvent>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &RATINGS_HEADER)?;
    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = line_of(&record);
        if record.len() != RATINGS_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 4 columns, got {}", record.len()),
            });
        }
        let rating: f64 = parse_field(&record, 2, "rating")?;
        if !(MIN_RATING..=MAX_RATING).contains(&rating) {
            return Err(Error::RatingOutOfRange { line, rating });
        }
        events.push(RatingEvent {
            user_id: parse_field(&record, 0, "userId")?,
            movie_id: parse_field(&record, 1, "movieId")?,
            rating,
            timestamp: parse_field(&record, 3, "timestamp")?,
        });
    }
    events.sort_by_key(RatingEvent::order_key);
    Ok(events)
}

/// Build one sequence per user with at least five events on genre-carrying
/// movies. Events on unknown or genre-less movies are removed before the
/// length test.
pub fn build_sequences(events: &[RatingEvent], movies: &MovieCatalog) -> SequenceSet {
    let mut out = SequenceSet::default();
    for group in events.chunk_by(|a, b| a.user_id == b.user_id) {
        let user_id = group[0].user_id;
        let valid: Vec<SequenceEvent> = group
            .iter()
            .filter_map(|e| {
                movies.get(e.movie_id).map(|g| SequenceEvent {
                    event: *e,
                    genres: g.clone(),
                })
            })
            .collect();
        out.removed_events += group.len() - valid.len();
        if valid.len() < SEQUENCE_LEN {
            out.dropped_users += 1;
            continue;
        }
        let recent = valid[valid.len() - SEQUENCE_LEN..].to_vec();
        match UserSequence::new(user_id, recent) {
            Ok(seq) => out.sequences.push(seq),
            // only reachable when the input was not sorted as load_ratings sorts it
            Err(_) => out.dropped_users += 1,
        }
    }
    out
}

/// Load both files and build sequences.
pub fn load_sequences(ratings: impl AsRef<Path>, movies: impl AsRef<Path>) -> Result<SequenceSet> {
    let catalog = load_movies(movies)?;
    let events = load_ratings(ratings)?;
    Ok(build_sequences(&events, &catalog))
}
