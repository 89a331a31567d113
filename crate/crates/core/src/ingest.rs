//! JSONL record ingestion, label schema, embedding reduction and splitting.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "a1", "severity": 3, "possibility": 2, "risk": 2, "embedding": [[...768 numbers...], ...]}
//! {"id": "a2", "severity": 1, "possibility": 4, "risk": 1, "hts": [0.1, -0.3, ...]}
//! ```
//!
//! Exactly one of `embedding` / `hts` must be present. A line holding only a
//! `meta` key is treated as a file header and carries no record.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::synth::seeded_rng;

pub const EMBEDDING_WIDTH: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Severity,
    Possibility,
    Risk,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Severity, Aspect::Possibility, Aspect::Risk];

    pub fn num_classes(self) -> usize {
        match self {
            Aspect::Severity | Aspect::Possibility => 5,
            Aspect::Risk => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Severity => "severity",
            Aspect::Possibility => "possibility",
            Aspect::Risk => "risk",
        }
    }

    /// Level (1-based) of this aspect in `labels`.
    pub fn level(self, labels: &Labels) -> u8 {
        match self {
            Aspect::Severity => labels.severity,
            Aspect::Possibility => labels.possibility,
            Aspect::Risk => labels.risk,
        }
    }

    /// Zero-based class index of this aspect in `labels`.
    pub fn class_index(self, labels: &Labels) -> usize {
        self.level(labels) as usize - 1
    }

    /// Per-level counts of the 5869-record reference corpus.
    pub fn corpus_counts(self) -> &'static [usize] {
        match self {
            Aspect::Severity => &[1570, 2732, 1353, 170, 44],
            Aspect::Possibility => &[419, 1760, 1607, 1134, 949],
            Aspect::Risk => &[2902, 2577, 335, 55],
        }
    }

    /// Reference corpus proportions scaled to `total` records by largest
    /// remainder (ties to the lower level), with at least one per level.
    pub fn reference_counts(self, total: usize) -> Vec<usize> {
        let base = self.corpus_counts();
        let sum: usize = base.iter().sum();
        let exact: Vec<f64> = base
            .iter()
            .map(|&c| c as f64 * total as f64 / sum as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..base.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = counts.iter().sum();
        for &i in order.iter().take(total.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        for c in counts.iter_mut() {
            *c = (*c).max(1);
        }
        counts
    }
}

impl std::str::FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "severity" => Ok(Aspect::Severity),
            "possibility" => Ok(Aspect::Possibility),
            "risk" => Ok(Aspect::Risk),
            other => Err(Error::invalid(format!("unknown aspect '{other}'"))),
        }
    }
}

/// Severity and possibility take levels 1..=5, risk 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labels {
    pub severity: u8,
    pub possibility: u8,
    pub risk: u8,
}

impl Labels {
    pub fn new(severity: u8, possibility: u8, risk: u8) -> Self {
        Self {
            severity,
            possibility,
            risk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for aspect in Aspect::ALL {
            let level = aspect.level(self) as usize;
            if !(1..=aspect.num_classes()).contains(&level) {
                return Err(Error::invalid(format!(
                    "{} level {level} outside 1..={}",
                    aspect.name(),
                    aspect.num_classes()
                )));
            }
        }
        Ok(())
    }
}

/// Token-by-dimension embedding matrix, row-major, `EMBEDDING_WIDTH` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("embedding matrix has no tokens"));
        }
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != EMBEDDING_WIDTH)
        {
            return Err(Error::invalid(format!(
                "embedding row {i} has width {}, expected {EMBEDDING_WIDTH}",
                r.len()
            )));
        }
        let tokens = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains a non-finite value"));
        }
        Ok(Self { tokens, data })
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * EMBEDDING_WIDTH..(t + 1) * EMBEDDING_WIDTH]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(EMBEDDING_WIDTH)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReduceAxis {
    /// Mean over tokens per embedding column; a 768-point series.
    #[default]
    OverTokens,
    /// Mean over columns per token; a `tokens`-point series.
    OverDims,
}

pub fn reduce_to_hts(matrix: &EmbeddingMatrix, axis: ReduceAxis) -> Result<TimeSeries> {
    if matrix.tokens == 0 {
        return Err(Error::invalid("embedding matrix has no tokens"));
    }
    let values = match axis {
        ReduceAxis::OverTokens => {
            let mut sums = vec![0.0; EMBEDDING_WIDTH];
            for row in matrix.rows() {
                for (s, v) in sums.iter_mut().zip(row) {
                    *s += v;
                }
            }
            sums.iter().map(|s| s / matrix.tokens as f64).collect()
        }
        ReduceAxis::OverDims => matrix
            .rows()
            .map(|r| r.iter().sum::<f64>() / EMBEDDING_WIDTH as f64)
            .collect(),
    };
    TimeSeries::new(values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Embedding(EmbeddingMatrix),
    Hts(TimeSeries),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaeRecord {
    pub id: String,
    pub labels: Labels,
    pub payload: Payload,
}

impl HaeRecord {
    /// The record's time series, reducing an embedding along `axis`.
    pub fn hts(&self, axis: ReduceAxis) -> Result<TimeSeries> {
        match &self.payload {
            Payload::Hts(ts) => Ok(ts.clone()),
            Payload::Embedding(m) => reduce_to_hts(m, axis),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    severity: i64,
    possibility: i64,
    risk: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hts: Option<Vec<f64>>,
}

fn header_meta(value: &serde_json::Value) -> Option<&serde_json::Value> {
    match value {
        serde_json::Value::Object(map) if map.len() == 1 => map.get("meta"),
        _ => None,
    }
}

fn record_from_value(value: serde_json::Value, line: usize) -> Result<HaeRecord> {
    let raw: RawRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
        line,
        msg: e.to_string(),
    })?;
    let schema = |msg: String| Error::Schema { line, msg };
    let level = |name: &str, v: i64, max: i64| {
        if (1..=max).contains(&v) {
            Ok(v as u8)
        } else {
            Err(schema(format!("{name} {v} outside 1..={max}")))
        }
    };
    let labels = Labels {
        severity: level("severity", raw.severity, 5)?,
        possibility: level("possibility", raw.possibility, 5)?,
        risk: level("risk", raw.risk, 4)?,
    };
    let payload = match (raw.embedding, raw.hts) {
        (Some(rows), None) => {
            Payload::Embedding(EmbeddingMatrix::from_rows(rows).map_err(|e| schema(e.to_string()))?)
        }
        (None, Some(values)) => {
            Payload::Hts(TimeSeries::new(values).map_err(|e| schema(e.to_string()))?)
        }
        (Some(_), Some(_)) => return Err(schema("both 'embedding' and 'hts' present".into())),
        (None, None) => return Err(schema("neither 'embedding' nor 'hts' present".into())),
    };
    Ok(HaeRecord {
        id: raw.id,
        labels,
        payload,
    })
}

/// A parsed JSONL file: optional header metadata plus records in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: Option<serde_json::Value>,
    pub records: Vec<HaeRecord>,
}

/// Parses a JSONL stream. Blank lines are skipped; errors carry 1-based
/// line numbers.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut meta = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if let Some(m) = header_meta(&value) {
            meta = Some(m.clone());
            continue;
        }
        records.push(record_from_value(value, line_no)?);
    }
    Ok(Dataset { meta, records })
}

pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<HaeRecord>> {
    Ok(read_dataset(reader)?.records)
}

/// Writes records as JSONL, preceded by a `{"meta": ...}` header line when
/// `meta` is given.
pub fn write_dataset<W: Write>(
    mut writer: W,
    meta: Option<&serde_json::Value>,
    records: &[HaeRecord],
) -> Result<()> {
    if let Some(m) = meta {
        serde_json::to_writer(&mut writer, &serde_json::json!({ "meta": m }))?;
        writer.write_all(b"\n")?;
    }
    for r in records {
        let (embedding, hts) = match &r.payload {
            Payload::Embedding(m) => (Some(m.rows().map(<[f64]>::to_vec).collect()), None),
            Payload::Hts(ts) => (None, Some(ts.values().to_vec())),
        };
        let raw = RawRecord {
            id: r.id.clone(),
            severity: r.labels.severity.into(),
            possibility: r.labels.possibility.into(),
            risk: r.labels.risk.into(),
            embedding,
            hts,
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Train/test/validation partition of record ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle then a contiguous 8:1:1 cut; test and validation each get
/// `floor(n / 10)` and the remainder goes to train.
pub fn split_dataset(records: &[HaeRecord], seed: u64) -> Result<SplitAssignment> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    split_ids(&ids, seed)
}

pub fn split_ids(ids: &[&str], seed: u64) -> Result<SplitAssignment> {
    if ids.len() < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 records to split, got {}",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let tenth = ids.len() / 10;
    let n_train = ids.len() - 2 * tenth;
    let take = |r: &[usize]| r.iter().map(|&i| ids[i].to_string()).collect::<Vec<_>>();
    Ok(SplitAssignment {
        train: take(&order[..n_train]),
        test: take(&order[n_train..n_train + tenth]),
        validation: take(&order[n_train + tenth..]),
        seed,
    })
}
