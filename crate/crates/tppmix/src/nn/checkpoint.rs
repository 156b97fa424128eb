//! Plain-text model checkpoints.
//!
//! One structured-text document per model: a header, `meta` key/value lines
//! describing the architecture, then one `param` block per parameter with
//! shape metadata and the row-major values in decimal. Values are written
//! with 17 significant digits so loading reproduces them bit-exactly.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::param::{Init, ParamSet};

const MAGIC: &str = "tppmix-params v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
}

/// Architecture metadata stored alongside the parameters.
pub type Meta = Vec<(String, String)>;

/// Writes `params` with metadata to `out`.
pub fn write_params<W: Write>(out: &mut W, meta: &Meta, params: &ParamSet) -> Result<(), CheckpointError> {
    writeln!(out, "{MAGIC}")?;
    for (k, v) in meta {
        writeln!(out, "meta {k} {v}")?;
    }
    for p in params.iter() {
        writeln!(out, "param {} {} {}", p.name, p.rows, p.cols)?;
        let mut line = String::new();
        for (i, v) in p.value.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            // 17 significant digits: exact f64 round-trip.
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Reads a checkpoint document into metadata plus a fresh [`ParamSet`].
pub fn read_params<R: BufRead>(input: R) -> Result<(Meta, ParamSet), CheckpointError> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| CheckpointError::Parse("empty document".into()))??;
    if first.trim() != MAGIC {
        return Err(CheckpointError::Parse(format!("bad header {first:?}")));
    }

    let mut meta = Meta::new();
    let mut params = ParamSet::new();
    let mut rng = NoRng;
    let mut saw_end = false;

    while let Some(line) = lines.next() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end" {
            saw_end = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once(' ')
                .ok_or_else(|| CheckpointError::Parse(format!("bad meta line {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("param ") {
            let mut fields = rest.split_whitespace();
            let name = fields
                .next()
                .ok_or_else(|| CheckpointError::Parse("param line missing name".into()))?;
            let rows: usize = parse_field(fields.next(), "rows")?;
            let cols: usize = parse_field(fields.next(), "cols")?;
            let values_line = lines
                .next()
                .ok_or_else(|| CheckpointError::Parse(format!("missing values for {name}")))??;
            let values: Vec<f64> = values_line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| CheckpointError::Parse(format!("bad value {v:?}: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if values.len() != rows * cols {
                return Err(CheckpointError::Parse(format!(
                    "{name}: expected {} values, found {}",
                    rows * cols,
                    values.len()
                )));
            }
            let id = params.add(name, rows, cols, Init::Zeros, &mut rng);
            params.get_mut(id).value = values;
        } else {
            return Err(CheckpointError::Parse(format!("unexpected line {line:?}")));
        }
    }
    if !saw_end {
        return Err(CheckpointError::Parse("missing end marker".into()));
    }
    Ok((meta, params))
}

/// Copies values from `source` into `target`, matching on name and shape.
/// Optimizer moments in `target` are reset.
pub fn load_into(target: &mut ParamSet, source: &ParamSet) -> Result<(), CheckpointError> {
    if target.len() != source.len() {
        return Err(CheckpointError::Mismatch(format!(
            "parameter count {} vs {}",
            source.len(),
            target.len()
        )));
    }
    for (dst, src) in target.iter_mut().zip(source.iter()) {
        if dst.name != src.name || dst.rows != src.rows || dst.cols != src.cols {
            return Err(CheckpointError::Mismatch(format!(
                "parameter {} ({}x{}) vs {} ({}x{})",
                src.name, src.rows, src.cols, dst.name, dst.rows, dst.cols
            )));
        }
        dst.value.copy_from_slice(&src.value);
        dst.grad.fill(0.0);
        dst.moment1.fill(0.0);
        dst.moment2.fill(0.0);
    }
    Ok(())
}

/// Looks up a metadata value by key.
pub fn meta_value<'m>(meta: &'m Meta, key: &str) -> Option<&'m str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, CheckpointError> {
    field
        .ok_or_else(|| CheckpointError::Parse(format!("param line missing {what}")))?
        .parse()
        .map_err(|_| CheckpointError::Parse(format!("bad {what} field")))
}

/// Zero-filled parameters never sample, so reading needs no entropy.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("checkpoint loading does not sample")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("checkpoint loading does not sample")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("checkpoint loading does not sample")
    }
    fn try_fill_bytes(&mut self, _dest: &mut [u8]) -> Result<(), rand::Error> {
        unreachable!("checkpoint loading does not sample")
    }
}
