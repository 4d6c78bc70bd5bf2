//! Artifact writers and loaders: plan JSON, trace/frontier/latency CSV and
//! the grid comparison report.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressor::{CompressedModel, KeepSet};
use crate::ddpg::TraceRow;
use crate::latency::TradeoffPoint;
use crate::reward::RewardTerms;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad header: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}: {msg}")]
    Field { row: usize, msg: String },
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros
/// removed, scientific notation outside [1e-5, 1e9).
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // rounding can bump the exponent, so read it back from the formatted value
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), ReportError> {
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(ReportError::Header {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T, ReportError> {
    let raw = rec.get(i).ok_or_else(|| ReportError::Field {
        row,
        msg: format!("missing column {i}"),
    })?;
    raw.parse().map_err(|_| ReportError::Field {
        row,
        msg: format!("cannot parse {raw:?}"),
    })
}

fn flag_field(rec: &csv::StringRecord, i: usize, row: usize) -> Result<bool, ReportError> {
    match rec.get(i) {
        Some("1") => Ok(true),
        Some("0") => Ok(false),
        other => Err(ReportError::Field {
            row,
            msg: format!("expected 0/1, got {other:?}"),
        }),
    }
}

pub const TRACE_HEADER: [&str; 7] = ["episode", "R_episode", "kappa", "nu", "rho", "sigma", "best_so_far"];

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            fmt_sig9(r.reward),
            fmt_sig9(r.kappa),
            fmt_sig9(r.nu),
            fmt_sig9(r.rho),
            fmt_sig9(r.sigma),
            fmt_sig9(r.best_so_far),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TRACE_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(TraceRow {
            episode: field(&rec, 0, i)?,
            reward: field(&rec, 1, i)?,
            kappa: field(&rec, 2, i)?,
            nu: field(&rec, 3, i)?,
            rho: field(&rec, 4, i)?,
            sigma: field(&rec, 5, i)?,
            best_so_far: field(&rec, 6, i)?,
        });
    }
    Ok(rows)
}

pub const FRONTIER_HEADER: [&str; 8] = [
    "split_id",
    "device_flops",
    "feature_elements",
    "kappa",
    "reward",
    "latency_s",
    "dominated",
    "reference",
];

pub fn write_frontier<W: Write>(out: W, points: &[TradeoffPoint]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRONTIER_HEADER)?;
    for p in points {
        w.write_record([
            p.split_id.to_string(),
            p.device_flops.to_string(),
            p.feature_elements.to_string(),
            fmt_sig9(p.kappa),
            fmt_sig9(p.reward),
            fmt_sig9(p.latency_s),
            flag(p.dominated).to_string(),
            flag(p.reference).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Frontier rows as written; server FLOPs are not part of the CSV and
/// read back as 0.
pub fn read_frontier<R: Read>(input: R) -> Result<Vec<TradeoffPoint>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &FRONTIER_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(TradeoffPoint {
            split_id: field(&rec, 0, i)?,
            device_flops: field(&rec, 1, i)?,
            server_flops: 0,
            feature_elements: field(&rec, 2, i)?,
            kappa: field(&rec, 3, i)?,
            reward: field(&rec, 4, i)?,
            latency_s: field(&rec, 5, i)?,
            dominated: flag_field(&rec, 6, i)?,
            reference: flag_field(&rec, 7, i)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub profile: String,
    /// "searched", "reference" or "server".
    pub plan: String,
    pub split_id: Option<usize>,
    pub rate: f64,
    pub device_s: f64,
    pub transmit_s: f64,
    pub server_s: f64,
    pub latency_s: f64,
}

pub const LATENCY_HEADER: [&str; 8] = [
    "profile",
    "plan",
    "split_id",
    "rate",
    "device_s",
    "transmit_s",
    "server_s",
    "latency_s",
];

pub fn write_latency<W: Write>(out: W, rows: &[LatencyRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LATENCY_HEADER)?;
    for r in rows {
        w.write_record([
            r.profile.clone(),
            r.plan.clone(),
            r.split_id.map_or_else(String::new, |s| s.to_string()),
            fmt_sig9(r.rate),
            fmt_sig9(r.device_s),
            fmt_sig9(r.transmit_s),
            fmt_sig9(r.server_s),
            fmt_sig9(r.latency_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_latency<R: Read>(input: R) -> Result<Vec<LatencyRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &LATENCY_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let split = rec.get(2).unwrap_or("");
        rows.push(LatencyRow {
            profile: field(&rec, 0, i)?,
            plan: field(&rec, 1, i)?,
            split_id: if split.is_empty() { None } else { Some(field(&rec, 2, i)?) },
            rate: field(&rec, 3, i)?,
            device_s: field(&rec, 4, i)?,
            transmit_s: field(&rec, 5, i)?,
            server_s: field(&rec, 6, i)?,
            latency_s: field(&rec, 7, i)?,
        });
    }
    Ok(rows)
}

/// The searched compression plan with its accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReport {
    pub split_layer_id: usize,
    pub seed: u64,
    pub episodes: usize,
    pub actions: Vec<f64>,
    pub encoder_ratio: f64,
    pub keep_sets: Vec<KeepSet>,
    pub terms: RewardTerms,
    pub device_flops: u64,
    pub server_flops: u64,
    pub feature_elements: usize,
    pub original_device_flops: u64,
    pub original_feature_elements: usize,
}

impl PlanReport {
    pub fn new(model: &CompressedModel, terms: RewardTerms, seed: u64, episodes: usize) -> Self {
        Self {
            split_layer_id: model.plan.split_layer_id,
            seed,
            episodes,
            actions: model.plan.actions.clone(),
            encoder_ratio: model.plan.encoder_ratio,
            keep_sets: model.plan.keep_sets.clone(),
            terms,
            device_flops: model.flops.device_flops,
            server_flops: model.flops.server_flops,
            feature_elements: model.flops.feature_elements,
            original_device_flops: model.original_device_flops,
            original_feature_elements: model.original_feature_elements,
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_plan<R: Read>(input: R) -> Result<PlanReport, ReportError> {
    Ok(serde_json::from_reader(input)?)
}

/// Exhaustive grid optimum R* against the learned plan's R_opt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCheckReport {
    pub split_layer_id: usize,
    pub grid: Vec<f64>,
    pub evaluated: u64,
    pub grid_actions: Vec<f64>,
    pub grid_reward: f64,
    pub search_actions: Vec<f64>,
    pub search_reward: f64,
    /// R_opt / R* (0 when R* is 0).
    pub ratio: f64,
}

pub fn read_gridcheck<R: Read>(input: R) -> Result<GridCheckReport, ReportError> {
    Ok(serde_json::from_reader(input)?)
}
