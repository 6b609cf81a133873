//! Text checkpoint layout:
//!
//! ```text
//! dialsat-checkpoint 1
//! tensors <count>
//! <name> <rank> <dim_0> ... <dim_{rank-1}>
//! <v_0> <v_1> ... (one line of shortest round-trip decimals)
//! ...
//! ```
//!
//! Names contain no whitespace. Values use Rust's shortest round-trip float
//! formatting, so save followed by load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Tensor, TensorError};

const MAGIC: &str = "dialsat-checkpoint 1";

fn err(m: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(m.into())
}

pub fn write_checkpoint(tensors: &[(String, Tensor)]) -> Result<String, TensorError> {
    let mut out = format!("{MAGIC}\ntensors {}\n", tensors.len());
    for (name, t) in tensors {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(err(format!("invalid tensor name {name:?}")));
        }
        write!(out, "{name} {}", t.shape().len()).expect("string write");
        for d in t.shape() {
            write!(out, " {d}").expect("string write");
        }
        out.push('\n');
        for (i, v) in t.data().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_checkpoint(text: &str) -> Result<Vec<(String, Tensor)>, TensorError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(err("missing header"));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("tensors "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| err("missing tensor count"))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let header = lines.next().ok_or_else(|| err("truncated file"))?;
        let mut parts = header.split_whitespace();
        let name = parts.next().ok_or_else(|| err("empty tensor header"))?.to_string();
        let rank: usize = parts
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| err(format!("{name}: bad rank")))?;
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| err(format!("{name}: bad dimension {d:?}"))))
            .collect::<Result<_, _>>()?;
        if shape.len() != rank {
            return Err(err(format!("{name}: rank {rank} but {} dimensions", shape.len())));
        }
        let body = lines.next().ok_or_else(|| err(format!("{name}: missing values")))?;
        let data: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| err(format!("{name}: bad value {v:?}"))))
            .collect::<Result<_, _>>()?;
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save_checkpoint(path: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<(), TensorError> {
    let text = write_checkpoint(tensors)?;
    fs::write(path.as_ref(), text).map_err(|e| err(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>, TensorError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| err(format!("{}: {e}", path.as_ref().display())))?;
    parse_checkpoint(&text)
}
