//! Metrics files.
//!
//! JSONL: the first line is `{"header": {...}}` carrying the seed, then one
//! [`MetricsRow`] object per line with keys in [`METRIC_FIELDS`] order.
//!
//! CSV: a `# seed=.. rounds=.. strategy=..` comment line, a header row with
//! the columns of [`CSV_COLUMNS`], then one row per round. Missing optional
//! values are empty cells. Line numbers in errors count the comment line.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::MetricsFormat;
use crate::regions::RegionHistogram;
use crate::scheduler::StrategyKind;
use crate::trainer::{MetricsRow, METRIC_FIELDS};

pub const CSV_COLUMNS: [&str; 16] = [
    "step",
    "entropy",
    "reward_mean",
    "grad_norm",
    "clip_frac",
    "eps_up_mean",
    "eps_lo_mean",
    "regions.e1",
    "regions.e2",
    "regions.e3",
    "regions.e4",
    "regions.neutral",
    "od_state",
    "pass1",
    "passk",
    "elapsed_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsHeader {
    pub seed: u64,
    pub rounds: u64,
    pub strategy: StrategyKind,
    pub columns: Vec<String>,
}

impl MetricsHeader {
    pub fn new(seed: u64, rounds: u64, strategy: StrategyKind) -> Self {
        Self {
            seed,
            rounds,
            strategy,
            columns: METRIC_FIELDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: MetricsHeader,
}

/// A malformed metrics file; `line` is 1-based.
#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct MetricsError {
    pub line: usize,
    pub message: String,
}

enum Sink<W: Write> {
    Jsonl(W),
    Csv(Box<csv::Writer<W>>),
}

/// Streams rows to a metrics file as they are produced.
pub struct MetricsWriter<W: Write> {
    sink: Sink<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, format: MetricsFormat, header: &MetricsHeader) -> std::io::Result<Self> {
        let sink = match format {
            MetricsFormat::Jsonl => {
                let line = serde_json::to_string(&HeaderLine { header: header.clone() })?;
                writeln!(out, "{line}")?;
                Sink::Jsonl(out)
            }
            MetricsFormat::Csv => {
                writeln!(
                    out,
                    "# seed={} rounds={} strategy={}",
                    header.seed,
                    header.rounds,
                    strategy_name(header.strategy)
                )?;
                let mut w = csv::Writer::from_writer(out);
                w.write_record(CSV_COLUMNS)?;
                Sink::Csv(Box::new(w))
            }
        };
        Ok(Self { sink })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> std::io::Result<()> {
        match &mut self.sink {
            Sink::Jsonl(out) => {
                let line = serde_json::to_string(row)?;
                writeln!(out, "{line}")
            }
            Sink::Csv(w) => Ok(w.write_record(csv_cells(row))?),
        }
    }

    pub fn finish(self) -> std::io::Result<W> {
        match self.sink {
            Sink::Jsonl(mut out) => {
                out.flush()?;
                Ok(out)
            }
            Sink::Csv(w) => w.into_inner().map_err(|e| e.into_error()),
        }
    }
}

fn strategy_name(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Static => "static",
        StrategyKind::Id => "id",
        StrategyKind::Did => "did",
        StrategyKind::Od => "od",
        StrategyKind::Fixed => "fixed",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_cells(row: &MetricsRow) -> Vec<String> {
    vec![
        row.step.to_string(),
        row.entropy.to_string(),
        row.reward_mean.to_string(),
        row.grad_norm.to_string(),
        row.clip_frac.to_string(),
        row.eps_up_mean.to_string(),
        row.eps_lo_mean.to_string(),
        row.regions.e1.to_string(),
        row.regions.e2.to_string(),
        row.regions.e3.to_string(),
        row.regions.e4.to_string(),
        row.regions.neutral.to_string(),
        row.od_state.to_string(),
        opt(row.pass1),
        opt(row.passk),
        opt(row.elapsed_s),
    ]
}

/// Reads a metrics file written by [`MetricsWriter`]; the format follows the
/// file extension (`.csv`, anything else is JSONL).
pub fn read_metrics(path: &Path) -> Result<(MetricsHeader, Vec<MetricsRow>), MetricsError> {
    let file = std::fs::File::open(path).map_err(|e| MetricsError {
        line: 0,
        message: format!("cannot open {}: {e}", path.display()),
    })?;
    let reader = std::io::BufReader::new(file);
    if path.extension().is_some_and(|e| e == "csv") {
        parse_csv(reader)
    } else {
        parse_jsonl(reader)
    }
}

fn io_err(line: usize, e: std::io::Error) -> MetricsError {
    MetricsError {
        line,
        message: e.to_string(),
    }
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<(MetricsHeader, Vec<MetricsRow>), MetricsError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| io_err(1, e))?;
            serde_json::from_str::<HeaderLine>(&line)
                .map_err(|e| MetricsError {
                    line: 1,
                    message: format!("bad header: {e}"),
                })?
                .header
        }
        None => {
            return Err(MetricsError {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| io_err(n, e))?;
        let row: MetricsRow = serde_json::from_str(&line).map_err(|e| MetricsError {
            line: n,
            message: format!("bad row: {e}"),
        })?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn parse_header_comment(line: &str) -> Result<MetricsHeader, String> {
    let body = line.strip_prefix('#').ok_or("missing `# seed=..` header")?;
    let mut seed = None;
    let mut rounds = None;
    let mut strategy = None;
    for part in body.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("bad header item `{part}`"))?;
        match k {
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| e.to_string())?),
            "rounds" => rounds = Some(v.parse::<u64>().map_err(|e| e.to_string())?),
            "strategy" => strategy = Some(v.parse::<StrategyKind>()?),
            other => return Err(format!("unknown header item `{other}`")),
        }
    }
    Ok(MetricsHeader::new(
        seed.ok_or("header lacks seed")?,
        rounds.ok_or("header lacks rounds")?,
        strategy.ok_or("header lacks strategy")?,
    ))
}

pub fn parse_csv<R: Read>(mut reader: R) -> Result<(MetricsHeader, Vec<MetricsRow>), MetricsError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| io_err(0, e))?;
    let first = text.lines().next().unwrap_or_default();
    let header = parse_header_comment(first).map_err(|message| MetricsError { line: 1, message })?;

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns = rdr.headers().map_err(|e| MetricsError {
        line: 2,
        message: e.to_string(),
    })?;
    if columns.iter().ne(CSV_COLUMNS) {
        return Err(MetricsError {
            line: 2,
            message: format!("unexpected columns `{}`", columns.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| MetricsError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cells: Vec<&str> = record.iter().collect();
        rows.push(parse_csv_row(&cells).map_err(|message| MetricsError { line, message })?);
    }
    Ok((header, rows))
}

fn parse_csv_row(cells: &[&str]) -> Result<MetricsRow, String> {
    if cells.len() != CSV_COLUMNS.len() {
        return Err(format!("expected {} cells, found {}", CSV_COLUMNS.len(), cells.len()));
    }
    let f = |i: usize| -> Result<f64, String> {
        cells[i]
            .parse::<f64>()
            .map_err(|e| format!("{}: `{}` ({e})", CSV_COLUMNS[i], cells[i]))
    };
    let u = |i: usize| -> Result<u64, String> {
        cells[i]
            .parse::<u64>()
            .map_err(|e| format!("{}: `{}` ({e})", CSV_COLUMNS[i], cells[i]))
    };
    let o = |i: usize| -> Result<Option<f64>, String> {
        if cells[i].is_empty() {
            Ok(None)
        } else {
            f(i).map(Some)
        }
    };
    let od_state = u(12)?;
    Ok(MetricsRow {
        step: u(0)?,
        entropy: f(1)?,
        reward_mean: f(2)?,
        grad_norm: f(3)?,
        clip_frac: f(4)?,
        eps_up_mean: f(5)?,
        eps_lo_mean: f(6)?,
        regions: RegionHistogram {
            e1: u(7)?,
            e2: u(8)?,
            e3: u(9)?,
            e4: u(10)?,
            neutral: u(11)?,
        },
        od_state: u8::try_from(od_state).map_err(|_| format!("od_state {od_state} out of range"))?,
        pass1: o(13)?,
        passk: o(14)?,
        elapsed_s: o(15)?,
    })
}
