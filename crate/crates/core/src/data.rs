//! Trial records, datasets and the landmark snapshot of surrogate information.
//!
//! A dataset is immutable once validated. The CSV layout is
//! `id,arm,x,delta,s_time` where an empty `s_time` means the surrogate event
//! was not observed during follow-up.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["id", "arm", "x", "delta", "s_time"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn from_label(label: u8) -> Option<Arm> {
        match label {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn index(self) -> usize {
        self.label() as usize
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// One trial participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub arm: Arm,
    /// Observed follow-up time, the earlier of death and censoring.
    pub x: f64,
    /// Whether `x` is a primary event time.
    pub delta: bool,
    /// Observed surrogate event time, present only when it occurred by `x`.
    pub s_time: Option<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, arm: Arm, x: f64, delta: bool, s_time: Option<f64>) -> Self {
        SubjectRecord {
            id: id.into(),
            arm,
            x,
            delta,
            s_time,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.x > 0.0) {
            return Err(Error::Validation(format!(
                "x must be positive and finite for id {}",
                self.id
            )));
        }
        if let Some(s) = self.s_time {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Validation(format!(
                    "s_time must be positive and finite for id {}",
                    self.id
                )));
            }
            if s > self.x {
                return Err(Error::Validation(format!(
                    "s_time exceeds x for id {}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// True when the surrogate is known not to have occurred by `t0`, i.e.
    /// `S > t0` in the observed-data sense.
    pub fn surrogate_after(&self, t0: f64) -> bool {
        match self.s_time {
            Some(s) => s > t0,
            None => true,
        }
    }
}

/// Validated collection of records with both arms present and unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    records: Vec<SubjectRecord>,
    counts: [usize; 2],
}

impl TrialDataset {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut counts = [0usize; 2];
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {}", r.id)));
            }
            counts[r.arm.index()] += 1;
        }
        for arm in Arm::BOTH {
            if counts[arm.index()] == 0 {
                return Err(Error::Validation(format!("arm {arm} empty")));
            }
        }
        Ok(TrialDataset { records, counts })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.counts[arm.index()]
    }

    /// The same subjects with treatment labels exchanged.
    pub fn with_swapped_arms(&self) -> TrialDataset {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                arm: r.arm.other(),
                ..r.clone()
            })
            .collect();
        TrialDataset {
            records,
            counts: [self.counts[1], self.counts[0]],
        }
    }

    /// Applies `f` to every observed surrogate time. The result is
    /// re-validated.
    pub fn map_surrogate(&self, f: impl Fn(f64) -> f64) -> Result<TrialDataset> {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                s_time: r.s_time.map(&f),
                ..r.clone()
            })
            .collect();
        TrialDataset::new(records)
    }
}

/// Reads a dataset from CSV text with the exact header `id,arm,x,delta,s_time`.
pub fn ingest_csv<R: Read>(source: R) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            row: 0,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        records.push(parse_row(&row, row_no)?);
    }
    TrialDataset::new(records)
}

fn parse_row(row: &csv::StringRecord, row_no: usize) -> Result<SubjectRecord> {
    let bad = |message: String| Error::Parse {
        row: row_no,
        message,
    };
    if row.len() != CSV_HEADER.len() {
        return Err(bad(format!("expected 5 fields, found {}", row.len())));
    }
    let id = row[0].to_string();
    if id.is_empty() {
        return Err(bad("empty id".into()));
    }
    let arm = match &row[1] {
        "0" => Arm::Control,
        "1" => Arm::Treated,
        other => return Err(bad(format!("arm must be 0 or 1, found `{other}`"))),
    };
    let x: f64 = row[2]
        .parse()
        .map_err(|_| bad(format!("x is not a number: `{}`", &row[2])))?;
    let delta = match &row[3] {
        "0" => false,
        "1" => true,
        other => return Err(bad(format!("delta must be 0 or 1, found `{other}`"))),
    };
    let s_time = match &row[4] {
        "" => None,
        s => Some(
            s.parse::<f64>()
                .map_err(|_| bad(format!("s_time is not a number: `{s}`")))?,
        ),
    };
    Ok(SubjectRecord {
        id,
        arm,
        x,
        delta,
        s_time,
    })
}

/// Writes the dataset in the ingest format. Reals use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &TrialDataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in data.records() {
        let s = r.s_time.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.id.as_str(),
            if r.arm == Arm::Treated { "1" } else { "0" },
            &r.x.to_string(),
            if r.delta { "1" } else { "0" },
            &s,
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Surrogate information frozen at the landmark time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotKind {
    /// Follow-up ended by the landmark; primary event before `t0`.
    PrimaryBeforeT0,
    /// Alive past the landmark with the surrogate observed at `s <= t0`.
    SurrogateByT0(f64),
    /// Alive past the landmark without a surrogate event by `t0`.
    NeitherByT0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSnapshot {
    pub kind: SnapshotKind,
    pub t0: f64,
}

/// Classifies a record at landmark `t0`. Records with `x <= t0` map to
/// [`SnapshotKind::PrimaryBeforeT0`]; censored ones among them receive zero
/// weight downstream.
pub fn snapshot(record: &SubjectRecord, t0: f64) -> Result<SurrogateSnapshot> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Argument(format!(
            "landmark t0 must be positive, got {t0}"
        )));
    }
    let kind = if record.x <= t0 {
        SnapshotKind::PrimaryBeforeT0
    } else {
        match record.s_time {
            Some(s) if s <= t0 => SnapshotKind::SurrogateByT0(s),
            _ => SnapshotKind::NeitherByT0,
        }
    };
    Ok(SurrogateSnapshot { kind, t0 })
}
