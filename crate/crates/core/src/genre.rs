//! The fixed genre alphabet and the vector/matrix value types built on it.
//!
//! Genre order is frozen: column positions in reports and matrix dumps are
//! stable across runs and datasets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of genres in the alphabet.
pub const N_GENRES: usize = 19;

pub const GENRE_NAMES: [&str; N_GENRES] = [
    "Action",
    "Adventure",
    "Animation",
    "Children",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "IMAX",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// Ordered genre names with a reverse index.
#[derive(Debug, Clone)]
pub struct GenreAlphabet {
    names: Vec<&'static str>,
    index: HashMap<&'static str, usize>,
}

impl GenreAlphabet {
    /// The shared MovieLens alphabet.
    pub fn standard() -> &'static GenreAlphabet {
        static ALPHABET: OnceLock<GenreAlphabet> = OnceLock::new();
        ALPHABET.get_or_init(|| {
            let names = GENRE_NAMES.to_vec();
            let index = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
            GenreAlphabet { names, index }
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&'static str> {
        self.names.get(index).copied()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownGenre(name.to_string()))
    }
}

/// Position of `name` in the standard alphabet.
pub fn genre_index(name: &str) -> Result<usize> {
    GenreAlphabet::standard().index_of(name)
}

/// Multi-hot encoding of a movie's genre names. Duplicates collapse.
pub fn encode_genres<S: AsRef<str>>(names: &[S]) -> Result<GenreVector> {
    if names.is_empty() {
        return Err(Error::EmptyGenreList);
    }
    let mut values = vec![0.0; N_GENRES];
    for name in names {
        values[genre_index(name.as_ref())?] = 1.0;
    }
    Ok(GenreVector(values))
}

/// Non-negative per-genre values: a multi-hot indicator for a movie, or a
/// probability distribution for transition rows and ATVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreVector(Vec<f64>);

impl GenreVector {
    pub fn zeros(len: usize) -> Self {
        GenreVector(vec![0.0; len])
    }

    /// Multi-hot vector over the standard alphabet with ones at `indices`.
    pub fn multi_hot(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut values = vec![0.0; N_GENRES];
        for i in indices {
            if i >= N_GENRES {
                return Err(Error::InvalidVector(format!("genre index {i} out of range")));
            }
            values[i] = 1.0;
        }
        Ok(GenreVector(values))
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidVector(format!("entry {v} is not a non-negative real")));
        }
        Ok(GenreVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of non-zero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_multi_hot(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Copy with the given dimensions set to zero.
    pub fn masked(&self, zeroed: impl IntoIterator<Item = usize>) -> Self {
        let mut values = self.0.clone();
        for i in zeroed {
            if let Some(v) = values.get_mut(i) {
                *v = 0.0;
            }
        }
        GenreVector(values)
    }

    pub fn genre_names(&self) -> Vec<&'static str> {
        let alphabet = GenreAlphabet::standard();
        self.support().into_iter().filter_map(|i| alphabet.name(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Counts,
    RowStochastic,
}

/// Square genre-by-genre matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreMatrix {
    n: usize,
    kind: MatrixKind,
    values: Vec<f64>,
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl GenreMatrix {
    pub fn zero_counts(n: usize) -> Self {
        GenreMatrix {
            n,
            kind: MatrixKind::Counts,
            values: vec![0.0; n * n],
        }
    }

    /// Validating constructor from row-major values.
    pub fn from_values(n: usize, kind: MatrixKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidMatrix("negative or non-finite entry".into()));
        }
        let m = GenreMatrix { n, kind, values };
        match kind {
            MatrixKind::Counts => {
                if m.values.iter().any(|v| v.fract() != 0.0) {
                    return Err(Error::InvalidMatrix("count entries must be integers".into()));
                }
            }
            MatrixKind::RowStochastic => {
                for i in 0..n {
                    let s: f64 = m.row(i).iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::InvalidMatrix(format!("row {i} sums to {s}")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>], kind: MatrixKind) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("rows must have length n".into()));
        }
        Self::from_values(n, kind, rows.concat())
    }

    /// Row-stochastic identity: every genre transitions to itself.
    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        GenreMatrix {
            n,
            kind: MatrixKind::RowStochastic,
            values,
        }
    }

    pub fn uniform(n: usize) -> Self {
        GenreMatrix {
            n,
            kind: MatrixKind::RowStochastic,
            values: vec![1.0 / n as f64; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, by: f64) {
        self.values[i * self.n + j] += by;
    }

    pub(crate) fn set_row(&mut self, i: usize, row: &[f64]) {
        self.values[i * self.n..(i + 1) * self.n].copy_from_slice(row);
    }

    pub(crate) fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &GenreMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV dump: a header of genre names (a blank corner cell first), then one
    /// labelled row per source genre.
    pub fn to_csv(&self) -> String {
        let label = |i: usize| -> String {
            match GenreAlphabet::standard().name(i) {
                Some(name) if self.n == N_GENRES => name.to_string(),
                _ => format!("g{i}"),
            }
        };
        let mut out = String::from("from");
        for j in 0..self.n {
            out.push(',');
            out.push_str(&label(j));
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&label(i));
            for v in self.row(i) {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}
