//! Event sequences and the line-oriented dataset file.
//!
//! A sequence is a strictly increasing list of timestamps in `(0, T]` with an
//! optional cluster label. Datasets are stored one JSON record per line:
//! `{"id":…,"label":…,"t_max":…,"timestamps":[…]}` with `label` set to `-1`
//! when unknown. Record ids are stable identities: all per-sequence seeding
//! and all iteration over subsets happens in id order, so reading a permuted
//! file reproduces the same results.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("record {0}: {1}")]
    Record(usize, String),
    #[error("timestamps must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("timestamp {0} outside (0, {1}]")]
    OutOfRange(f64, f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("sequences disagree on the horizon: {0} vs {1}")]
    MixedHorizons(f64, f64),
    #[error("malformed dataset line {0}: {1}")]
    Parse(usize, String),
}

/// One observed event sequence on `(0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    timestamps: Vec<f64>,
    t_max: f64,
    pub label: Option<usize>,
}

impl EventSequence {
    /// Validates the invariants: positive horizon, strictly increasing
    /// timestamps, all inside `(0, t_max]`. Empty sequences are valid.
    pub fn new(timestamps: Vec<f64>, t_max: f64) -> Result<Self, DataError> {
        if !(t_max > 0.0) {
            return Err(DataError::BadHorizon(t_max));
        }
        let mut prev = 0.0;
        for (i, &t) in timestamps.iter().enumerate() {
            if !(t > 0.0 && t <= t_max) || !t.is_finite() {
                return Err(DataError::OutOfRange(t, t_max));
            }
            if t <= prev && i > 0 {
                return Err(DataError::NotIncreasing(i));
            }
            prev = t;
        }
        Ok(Self { timestamps, t_max, label: None })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Inter-event times `a_i = t_i - t_{i-1}` with `t_0 = 0`; all positive.
    pub fn inter_event_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.timestamps
            .iter()
            .map(|&t| {
                let a = t - prev;
                prev = t;
                a
            })
            .collect()
    }

    /// Number of events in `[start, end)`.
    pub fn count_in(&self, start: f64, end: f64) -> usize {
        self.timestamps.iter().filter(|&&t| t >= start && t < end).count()
    }
}

/// A loaded dataset: sequences with stable record ids.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: u64,
    pub seq: EventSequence,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: u64,
    label: i64,
    t_max: f64,
    timestamps: Vec<f64>,
}

impl Dataset {
    pub fn new(entries: Vec<DatasetEntry>) -> Self {
        Self { entries }
    }

    /// Wraps plain sequences, assigning ids by position.
    pub fn from_sequences(seqs: Vec<EventSequence>) -> Self {
        Self {
            entries: seqs
                .into_iter()
                .enumerate()
                .map(|(i, seq)| DatasetEntry { id: i as u64, seq })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sequences(&self) -> impl Iterator<Item = &EventSequence> {
        self.entries.iter().map(|e| &e.seq)
    }

    /// True labels in entry order, if every record carries one.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.entries.iter().map(|e| e.seq.label).collect()
    }

    /// The common horizon; errors if the file mixes horizons or is empty.
    pub fn horizon(&self) -> Result<f64, DataError> {
        let first = self.entries.first().ok_or(DataError::Empty)?.seq.t_max();
        for e in &self.entries {
            if e.seq.t_max() != first {
                return Err(DataError::MixedHorizons(first, e.seq.t_max()));
            }
        }
        Ok(first)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), DataError> {
        for e in &self.entries {
            let rec = Record {
                id: e.id,
                label: e.seq.label.map_or(-1, |l| l as i64),
                t_max: e.seq.t_max(),
                timestamps: e.seq.timestamps().to_vec(),
            };
            let line = serde_json::to_string(&rec)
                .map_err(|err| DataError::Record(e.id as usize, err.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<(), DataError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write(&mut out)
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| DataError::Parse(lineno + 1, e.to_string()))?;
            let mut seq = EventSequence::new(rec.timestamps, rec.t_max)
                .map_err(|e| DataError::Parse(lineno + 1, e.to_string()))?;
            if rec.label >= 0 {
                seq.label = Some(rec.label as usize);
            }
            entries.push(DatasetEntry { id: rec.id, seq });
        }
        Ok(Self { entries })
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self, DataError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
