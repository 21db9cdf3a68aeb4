//! Plain-text parameter checkpoints.
//!
//! ```text
//! genreseq-checkpoint 1
//! cell GRU
//! dims <input_dim> <hidden_dim> <output_dim>
//! block <name> <rows> <cols>
//! <cols space-separated values>      (one line per row)
//! ...
//! end
//! ```
//!
//! Blocks appear in layout order. Values use Rust's shortest round-trip
//! float formatting, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CellKind, NetParams, Shape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "genreseq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn format_checkpoint(params: &NetParams) -> String {
    let s = params.shape();
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "cell {}", s.cell);
    let _ = writeln!(out, "dims {} {} {}", s.input_dim, s.hidden_dim, s.output_dim);
    for b in s.blocks() {
        let _ = writeln!(out, "block {} {} {}", b.name, b.rows, b.cols);
        let values = params.block(b.name).expect("layout block");
        for row in values.chunks(b.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn parse_checkpoint(text: &str) -> Result<NetParams> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));

    let header = next("header")?;
    let version = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad("missing magic"))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(bad(format!("unsupported version {version}")));
    }
    let cell: CellKind = next("cell")?
        .strip_prefix("cell ")
        .ok_or_else(|| bad("expected cell line"))?
        .trim()
        .parse()
        .map_err(|_| bad("unknown cell"))?;
    let dims: Vec<usize> = next("dims")?
        .strip_prefix("dims ")
        .ok_or_else(|| bad("expected dims line"))?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let [input_dim, hidden_dim, output_dim] = dims[..] else {
        return Err(bad("dims needs three values"));
    };
    let shape = Shape::new(cell, input_dim, hidden_dim, output_dim)?;

    let mut values = Vec::with_capacity(shape.param_count());
    for b in shape.blocks() {
        let head = next("block")?;
        let expected = format!("block {} {} {}", b.name, b.rows, b.cols);
        if head.trim() != expected {
            return Err(bad(format!("expected {expected:?}, found {head:?}")));
        }
        for _ in 0..b.rows {
            let row: Vec<f64> = next("row")?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad value {v:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != b.cols {
                return Err(bad(format!("block {} row has {} values, expected {}", b.name, row.len(), b.cols)));
            }
            values.extend(row);
        }
    }
    if next("end")?.trim() != "end" {
        return Err(bad("missing end marker"));
    }
    NetParams::from_values(shape, values)
}

pub fn write_checkpoint(params: &NetParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_checkpoint(params))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<NetParams> {
    parse_checkpoint(&fs::read_to_string(path)?)
}
