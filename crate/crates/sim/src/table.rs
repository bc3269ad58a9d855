//! Per-trial result rows and their CSV file.
//!
//! Columns: `scenario_id, seed, tx_power_dbm, receiver, ber, nmse, md, fa,
//! throughput_bits, iterations_run`. A metric a receiver does not produce
//! (BER of a channel-only estimator) or a receiver that failed leaves the
//! field empty.

use std::fs::{File, OpenOptions};
use std::path::Path;

use gfree_core::metrics::TrialOutcome;
use serde::{Deserialize, Serialize};

use crate::config::Receiver;

pub const COLUMNS: [&str; 10] = [
    "scenario_id",
    "seed",
    "tx_power_dbm",
    "receiver",
    "ber",
    "nmse",
    "md",
    "fa",
    "throughput_bits",
    "iterations_run",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario_id: String,
    pub seed: u64,
    pub tx_power_dbm: f64,
    pub receiver: String,
    pub ber: Option<f64>,
    pub nmse: Option<f64>,
    pub md: Option<usize>,
    pub fa: Option<usize>,
    pub throughput_bits: Option<f64>,
    pub iterations_run: Option<usize>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Row {
    pub fn from_outcome(
        scenario_id: &str,
        seed: u64,
        tx_power_dbm: f64,
        receiver: Receiver,
        outcome: Result<&TrialOutcome, &gfree_core::Error>,
    ) -> Self {
        let mut row = Row {
            scenario_id: scenario_id.to_owned(),
            seed,
            tx_power_dbm,
            receiver: receiver.name().to_owned(),
            ber: None,
            nmse: None,
            md: None,
            fa: None,
            throughput_bits: None,
            iterations_run: None,
        };
        if let Ok(o) = outcome {
            row.nmse = finite(o.nmse);
            row.iterations_run = Some(o.iterations_run);
            if !receiver.channel_only() {
                row.ber = finite(o.ber);
                row.md = Some(o.md_count);
                row.fa = Some(o.fa_count);
                row.throughput_bits = finite(o.effective_throughput_bits);
            }
        }
        row
    }

    /// True when the receiver produced no result at all.
    pub fn failed(&self) -> bool {
        self.iterations_run.is_none()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results file {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("results file {path} has header {found:?}, expected {expected:?}")]
    Header {
        path: String,
        found: Vec<String>,
        expected: Vec<String>,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TableError + '_ {
    move |source| TableError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> TableError + '_ {
    move |source| TableError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>, TableError> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rd.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header != COLUMNS {
        return Err(TableError::Header {
            path: path.display().to_string(),
            found: header,
            expected: COLUMNS.iter().map(|s| s.to_string()).collect(),
        });
    }
    rd.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Writes header and rows, replacing the file atomically.
pub fn write_rows(path: &Path, rows: &[Row]) -> Result<(), TableError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&tmp).map_err(csv_err(&tmp))?;
        w.write_record(COLUMNS).map_err(csv_err(&tmp))?;
        for r in rows {
            w.serialize(r).map_err(csv_err(&tmp))?;
        }
        w.flush().map_err(io(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io(path))
}

/// Appends rows to an existing file, flushing after each batch.
pub struct Appender {
    w: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self, TableError> {
        let f = OpenOptions::new().append(true).open(path).map_err(io(path))?;
        Ok(Self {
            w: csv::WriterBuilder::new().has_headers(false).from_writer(f),
            path: path.to_owned(),
        })
    }

    pub fn append(&mut self, rows: &[Row]) -> Result<(), TableError> {
        for r in rows {
            self.w.serialize(r).map_err(csv_err(&self.path))?;
        }
        self.w.flush().map_err(io(&self.path))
    }
}
