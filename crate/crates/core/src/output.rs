//! CSV formats for per-run rows, per-cell aggregates and post dumps.
//!
//! Floats are written with six significant digits. Aggregates are always
//! computed from the rounded rows, so re-aggregating a raw file reproduces
//! the aggregated file byte for byte.

use std::io::{Read, Write};

use thiserror::Error;

use crate::runner::{mean, standard_error, PostRecord, RunResult};

pub const RAW_HEADER: [&str; 8] = ["f", "ell", "network", "run", "T", "q_hat", "tau", "n_posts"];
pub const AGG_HEADER: [&str; 8] = [
    "f",
    "ell",
    "mean_q",
    "se_q",
    "mean_tau",
    "se_tau",
    "n_runs",
    "n_tau_defined",
];
pub const POST_HEADER: [&str; 3] = ["post_id", "quality", "popularity"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unexpected CSV header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: Vec<String> },
    #[error("row {row}: bad value {value:?} in column `{column}`")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

/// Six significant digits, printed in the shortest form that round-trips.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// `x` as it will read back from a CSV file.
pub fn round_float(x: f64) -> f64 {
    format_float(x).parse().expect("formatted float parses")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// One line of the raw results file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub f: f64,
    pub ell: f64,
    pub network: usize,
    pub run: usize,
    pub steps: u64,
    pub q_hat: f64,
    pub tau: Option<f64>,
    pub n_posts: u64,
}

impl RawRow {
    /// Rounded exactly as a write/read cycle would.
    pub fn from_result(r: &RunResult) -> Self {
        Self {
            f: round_float(r.f),
            ell: round_float(r.ell),
            network: r.network_index,
            run: r.run_index,
            steps: r.steps,
            q_hat: round_float(r.q_hat),
            tau: r.tau.map(round_float),
            n_posts: r.n_posts,
        }
    }

    fn record(&self) -> [String; 8] {
        [
            format_float(self.f),
            format_float(self.ell),
            self.network.to_string(),
            self.run.to_string(),
            self.steps.to_string(),
            format_float(self.q_hat),
            format_opt(self.tau),
            self.n_posts.to_string(),
        ]
    }

    /// Identity of the run within a sweep, stable across a CSV round trip.
    pub fn key(&self) -> RunKey {
        RunKey {
            f: format_float(self.f),
            ell: format_float(self.ell),
            network: self.network,
            run: self.run,
        }
    }

    /// Sweep output order: f, then ell, then network, then run.
    pub fn sort_key_cmp(a: &Self, b: &Self) -> std::cmp::Ordering {
        a.f.total_cmp(&b.f)
            .then(a.ell.total_cmp(&b.ell))
            .then(a.network.cmp(&b.network))
            .then(a.run.cmp(&b.run))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub f: String,
    pub ell: String,
    pub network: usize,
    pub run: usize,
}

/// Aggregate over all runs of one (f, ell) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub f: f64,
    pub ell: f64,
    pub mean_q: f64,
    pub se_q: Option<f64>,
    pub mean_tau: Option<f64>,
    pub se_tau: Option<f64>,
    pub n_runs: usize,
    pub n_tau_defined: usize,
}

impl SweepCell {
    fn record(&self) -> [String; 8] {
        [
            format_float(self.f),
            format_float(self.ell),
            format_float(self.mean_q),
            format_opt(self.se_q),
            format_opt(self.mean_tau),
            format_opt(self.se_tau),
            self.n_runs.to_string(),
            self.n_tau_defined.to_string(),
        ]
    }
}

/// Group rows by (f, ell) and summarise. Undefined tau values are skipped.
pub fn aggregate(rows: &[RawRow]) -> Vec<SweepCell> {
    let mut sorted: Vec<&RawRow> = rows.iter().collect();
    sorted.sort_by(|a, b| RawRow::sort_key_cmp(a, b));
    sorted
        .chunk_by(|a, b| a.f.to_bits() == b.f.to_bits() && a.ell.to_bits() == b.ell.to_bits())
        .map(|rows| {
            let (f, ell) = (rows[0].f, rows[0].ell);
            let qs: Vec<f64> = rows.iter().map(|r| r.q_hat).collect();
            let taus: Vec<f64> = rows.iter().filter_map(|r| r.tau).collect();
            SweepCell {
                f,
                ell,
                mean_q: mean(&qs).expect("cells are never empty"),
                se_q: standard_error(&qs),
                mean_tau: mean(&taus),
                se_tau: standard_error(&taus),
                n_runs: rows.len(),
                n_tau_defined: taus.len(),
            }
        })
        .collect()
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

pub fn write_raw<W: Write>(w: W, rows: &[RawRow]) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(RAW_HEADER)?;
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush()?;
    Ok(())
}

/// Append rows without a header, for checkpoint files.
pub fn append_raw<W: Write>(w: W, rows: &[RawRow]) -> Result<(), OutputError> {
    let mut out = writer(w);
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_aggregated<W: Write>(w: W, cells: &[SweepCell]) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(AGG_HEADER)?;
    for cell in cells {
        out.write_record(cell.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_posts<W: Write>(w: W, posts: &[PostRecord]) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(POST_HEADER)?;
    for p in posts {
        out.write_record([p.id.to_string(), format_float(p.quality), p.popularity.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), OutputError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(OutputError::Header {
            found: found.iter().map(str::to_string).collect(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    row: usize,
) -> Result<T, OutputError> {
    let raw = rec.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|_| OutputError::Field {
        row,
        column: RAW_HEADER[idx],
        value: raw.to_string(),
    })
}

/// Parse a raw results file. A checkpoint without a header is accepted when
/// `require_header` is false.
pub fn read_raw<R: Read>(r: R, require_header: bool) -> Result<Vec<RawRow>, OutputError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(false).from_reader(r);
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if i == 0 && (require_header || rec.get(0) == Some("f")) {
            check_header(&rec, &RAW_HEADER)?;
            saw_header = true;
            continue;
        }
        let row = i + 1;
        let tau_raw = rec.get(6).unwrap_or("").trim();
        let tau = if tau_raw.is_empty() {
            None
        } else {
            Some(field::<f64>(&rec, 6, row)?)
        };
        rows.push(RawRow {
            f: field(&rec, 0, row)?,
            ell: field(&rec, 1, row)?,
            network: field(&rec, 2, row)?,
            run: field(&rec, 3, row)?,
            steps: field(&rec, 4, row)?,
            q_hat: field(&rec, 5, row)?,
            tau,
            n_posts: field(&rec, 7, row)?,
        });
    }
    if require_header && !saw_header {
        return Err(OutputError::Header {
            found: Vec::new(),
            expected: RAW_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(rows)
}
