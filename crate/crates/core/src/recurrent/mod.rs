//! Recurrent cells (RNN, LSTM, GRU) with a sigmoid multi-label head,
//! backpropagation through time, and a seeded momentum-SGD trainer.
//!
//! Parameters live in one flat buffer partitioned into named row-major
//! blocks; gradients share the layout, so the optimizer and the
//! finite-difference checks can treat them as plain vectors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod cells;
mod checkpoint;
pub(crate) mod linalg;
mod train;

pub use cells::{
    backward, backward_into, bce_loss, forward_sequence, gru_step, lstm_step, rnn_step, ForwardCache, LstmState,
};
pub use checkpoint::{format_checkpoint, parse_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use linalg::sigmoid;
pub use train::{batch_gradient, train, SequenceSample, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    #[serde(rename = "RNN")]
    Rnn,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Rnn, CellKind::Lstm, CellKind::Gru];
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Rnn => "RNN",
            CellKind::Lstm => "LSTM",
            CellKind::Gru => "GRU",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RNN" => Ok(CellKind::Rnn),
            "LSTM" => Ok(CellKind::Lstm),
            "GRU" => Ok(CellKind::Gru),
            _ => Err(Error::Config(format!("unknown cell kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    /// Bias vectors; initialized to zero.
    pub bias: bool,
}

impl BlockSpec {
    fn weight(name: &'static str, rows: usize, cols: usize) -> Self {
        BlockSpec { name, rows, cols, bias: false }
    }

    fn bias(name: &'static str, rows: usize) -> Self {
        BlockSpec { name, rows, cols: 1, bias: true }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Shape {
    pub fn new(cell: CellKind, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::ShapeMismatch("dimensions must be positive".into()));
        }
        Ok(Shape {
            cell,
            input_dim,
            hidden_dim,
            output_dim,
        })
    }

    /// Width of the `[h_{t-1}, x_t]` concatenation consumed by gate matrices.
    pub fn concat_dim(&self) -> usize {
        self.hidden_dim + self.input_dim
    }

    pub fn blocks(&self) -> Vec<BlockSpec> {
        let (i, h, o, z) = (self.input_dim, self.hidden_dim, self.output_dim, self.concat_dim());
        let mut blocks = match self.cell {
            CellKind::Rnn => vec![BlockSpec::weight("U", h, i), BlockSpec::weight("W", h, h), BlockSpec::bias("b", h)],
            CellKind::Lstm => vec![
                BlockSpec::weight("W_f", h, z),
                BlockSpec::bias("b_f", h),
                BlockSpec::weight("W_i", h, z),
                BlockSpec::bias("b_i", h),
                BlockSpec::weight("W_c", h, z),
                BlockSpec::bias("b_c", h),
                BlockSpec::weight("W_o", h, z),
                BlockSpec::bias("b_o", h),
            ],
            // the gate equations carry no bias terms
            CellKind::Gru => vec![
                BlockSpec::weight("W_z", h, z),
                BlockSpec::weight("W_r", h, z),
                BlockSpec::weight("W", h, z),
            ],
        };
        blocks.push(BlockSpec::weight("V", o, h));
        blocks.push(BlockSpec::bias("output_bias", o));
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(BlockSpec::len).sum()
    }

    fn block_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for b in self.blocks() {
            if b.name == name {
                return Some(offset..offset + b.len());
            }
            offset += b.len();
        }
        None
    }

    fn sizes(&self) -> Vec<usize> {
        self.blocks().iter().map(BlockSpec::len).collect()
    }
}

pub(crate) fn split<'a>(mut values: &'a [f64], sizes: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let (head, tail) = values.split_at(s);
        out.push(head);
        values = tail;
    }
    out
}

pub(crate) fn split_mut<'a>(mut values: &'a mut [f64], sizes: &[usize]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let (head, tail) = std::mem::take(&mut values).split_at_mut(s);
        out.push(head);
        values = tail;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    shape: Shape,
    values: Vec<f64>,
}

impl NetParams {
    pub fn zeros(shape: Shape) -> Self {
        NetParams {
            shape,
            values: vec![0.0; shape.param_count()],
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn init<R: Rng>(shape: Shape, scale: f64, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(shape.param_count());
        for b in shape.blocks() {
            if b.bias {
                values.extend(std::iter::repeat(0.0).take(b.len()));
            } else {
                values.extend((0..b.len()).map(|_| rng.gen_range(-scale..=scale)));
            }
        }
        NetParams { shape, values }
    }

    pub fn from_values(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} cell expects {} parameters, got {}",
                shape.cell,
                shape.param_count(),
                values.len()
            )));
        }
        Ok(NetParams { shape, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn cell(&self) -> CellKind {
        self.shape.cell
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.shape.block_range(name).map(|r| &self.values[r])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.shape.block_range(name).map(move |r| &mut self.values[r])
    }

    /// Output probabilities for one input sequence.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(forward_sequence(inputs, self)?.0)
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        split(&self.values, &self.shape.sizes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    shape: Shape,
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(shape: Shape) -> Self {
        Gradients {
            shape,
            values: vec![0.0; shape.param_count()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.shape.block_range(name).map(|r| &self.values[r])
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
