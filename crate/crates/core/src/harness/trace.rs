//! Regret traces and their CSV persistence.
//!
//! Trace schema (`#schema=trace-v1`): columns
//! `t,arm,reward,inst_regret,cum_regret,epoch,wall_ms`.
//! Aggregate schema (`#schema=aggregate-v1`): columns
//! `t,mean_cum_regret,std_cum_regret`.
//! Floats are written with nine significant digits and round-trip losslessly
//! at that precision. Comment lines start with `#` and carry the schema tag,
//! the config hash and run metadata.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_SCHEMA: &str = "trace-v1";
pub const AGGREGATE_SCHEMA: &str = "aggregate-v1";
const TRACE_HEADER: &str = "t,arm,reward,inst_regret,cum_regret,epoch,wall_ms";
const AGGREGATE_HEADER: &str = "t,mean_cum_regret,std_cum_regret";

/// One bandit round in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub arm: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub epoch: u64,
    pub wall_ms: f64,
}

/// Per-round log of one (algorithm, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<TraceRow>,
}

impl RegretTrace {
    pub fn final_cum_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }

    pub fn cum_regret_at(&self, t: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.t == t)
            .map(|r| r.cum_regret)
    }
}

/// Mean and standard deviation of cumulative regret per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub mean_cum: Vec<f64>,
    pub std_cum: Vec<f64>,
    pub runs: usize,
    pub config_hash: String,
}

/// Nine significant digits, scientific notation.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_trace_csv(trace: &RegretTrace, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "#schema={TRACE_SCHEMA}");
    let _ = writeln!(out, "#config_hash={}", trace.config_hash);
    let _ = writeln!(out, "#algorithm={}", trace.algorithm);
    let _ = writeln!(out, "#seed={}", trace.seed);
    let _ = writeln!(out, "{TRACE_HEADER}");
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            r.arm,
            fmt_f64(r.reward),
            fmt_f64(r.inst_regret),
            fmt_f64(r.cum_regret),
            r.epoch,
            fmt_f64(r.wall_ms)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_field<T: std::str::FromStr>(
    path: &str,
    line: usize,
    name: &str,
    value: &str,
) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("bad {name} '{value}'"),
    })
}

struct CsvDoc {
    meta: std::collections::BTreeMap<String, String>,
    header: String,
    data: Vec<(usize, Vec<String>)>,
}

fn read_csv_doc(path: &Path, want_schema: &str) -> Result<CsvDoc> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut meta = std::collections::BTreeMap::new();
    let mut header = None;
    let mut data = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(stripped) = line.strip_prefix('#') {
            if let Some((k, v)) = stripped.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if header.is_none() {
            header = Some(line.to_string());
            continue;
        }
        data.push((line_no, line.split(',').map(str::to_string).collect()));
    }
    let schema = meta.get("schema").cloned().unwrap_or_default();
    if schema != want_schema {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: format!("expected schema {want_schema}, found '{schema}'"),
        });
    }
    Ok(CsvDoc {
        meta,
        header: header.unwrap_or_default(),
        data,
    })
}

pub fn read_trace_csv(path: &Path) -> Result<RegretTrace> {
    let display = path.display().to_string();
    let doc = read_csv_doc(path, TRACE_SCHEMA)?;
    if doc.header != TRACE_HEADER {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: format!("unexpected trace header '{}'", doc.header),
        });
    }
    let mut rows = Vec::with_capacity(doc.data.len());
    for (line_no, fields) in &doc.data {
        if fields.len() != 7 {
            return Err(Error::Parse {
                path: display.clone(),
                line: *line_no,
                msg: format!("expected 7 columns, got {}", fields.len()),
            });
        }
        rows.push(TraceRow {
            t: parse_field(&display, *line_no, "t", &fields[0])?,
            arm: parse_field(&display, *line_no, "arm", &fields[1])?,
            reward: parse_field(&display, *line_no, "reward", &fields[2])?,
            inst_regret: parse_field(&display, *line_no, "inst_regret", &fields[3])?,
            cum_regret: parse_field(&display, *line_no, "cum_regret", &fields[4])?,
            epoch: parse_field(&display, *line_no, "epoch", &fields[5])?,
            wall_ms: parse_field(&display, *line_no, "wall_ms", &fields[6])?,
        });
    }
    Ok(RegretTrace {
        algorithm: doc.meta.get("algorithm").cloned().unwrap_or_default(),
        seed: doc
            .meta
            .get("seed")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0),
        config_hash: doc.meta.get("config_hash").cloned().unwrap_or_default(),
        rows,
    })
}

pub fn write_aggregate_csv(agg: &Aggregate, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "#schema={AGGREGATE_SCHEMA}");
    let _ = writeln!(out, "#config_hash={}", agg.config_hash);
    let _ = writeln!(out, "#algorithm={}", agg.algorithm);
    let _ = writeln!(out, "#runs={}", agg.runs);
    let _ = writeln!(out, "{AGGREGATE_HEADER}");
    for (i, (m, s)) in agg.mean_cum.iter().zip(agg.std_cum.iter()).enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, fmt_f64(*m), fmt_f64(*s));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Aggregate> {
    let display = path.display().to_string();
    let doc = read_csv_doc(path, AGGREGATE_SCHEMA)?;
    if doc.header != AGGREGATE_HEADER {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: format!("unexpected aggregate header '{}'", doc.header),
        });
    }
    let mut mean = Vec::with_capacity(doc.data.len());
    let mut std = Vec::with_capacity(doc.data.len());
    for (line_no, fields) in &doc.data {
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: display.clone(),
                line: *line_no,
                msg: format!("expected 3 columns, got {}", fields.len()),
            });
        }
        mean.push(parse_field(&display, *line_no, "mean", &fields[1])?);
        std.push(parse_field(&display, *line_no, "std", &fields[2])?);
    }
    Ok(Aggregate {
        algorithm: doc.meta.get("algorithm").cloned().unwrap_or_default(),
        mean_cum: mean,
        std_cum: std,
        runs: doc
            .meta
            .get("runs")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0),
        config_hash: doc.meta.get("config_hash").cloned().unwrap_or_default(),
    })
}
