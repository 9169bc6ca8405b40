//! Report rows and their CSV / JSON encodings.
//!
//! CSV columns, in order:
//!
//! ```text
//! experiment, kind, case, n, d, eps, delta, rate, alpha,
//! reps, medbias, medbias_se, p_le, p_ge,
//! bound_kind, rhs, rhs_raw, rhs_se, certified, holds_3se,
//! diagnostics, seed [, wall_time_s]
//! ```
//!
//! Absent values are empty cells. `diagnostics` is `key=value` pairs joined
//! by `;` in key order. `wall_time_s` is present only when timing is
//! recorded, since it is the one column that differs between reruns.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundKind, BoundReport};
use crate::error::Result;
use crate::median_bias::MedBiasEstimate;
use crate::simlab::config::ExperimentConfig;

/// Number of joint standard errors allowed by `holds_3se`.
pub const HOLDS_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl GridPoint {
    pub fn n(n: usize) -> Self {
        Self { n, ..Self::default() }
    }
}

/// The right-hand side of a comparison, without the profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub kind: BoundKind,
    pub rhs: f64,
    pub rhs_raw: f64,
    pub rhs_std_err: f64,
    pub certified: bool,
    /// lhs ≤ rhs + 3 joint s.e. (or |lhs − rhs| ≤ 3 joint s.e. for equalities).
    pub holds_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub kind: String,
    pub case: String,
    pub grid: GridPoint,
    pub medbias: MedBiasEstimate,
    pub bound: Option<BoundSummary>,
    pub diagnostics: BTreeMap<String, f64>,
    /// ε/δ/η grids and profiles.
    pub profiles: BTreeMap<String, Vec<f64>>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ReportRow {
    pub fn new(experiment: &str, kind: &str, case: String, grid: GridPoint, medbias: MedBiasEstimate, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            kind: kind.to_string(),
            case,
            grid,
            medbias,
            bound: None,
            diagnostics: BTreeMap::new(),
            profiles: BTreeMap::new(),
            seed,
            wall_time_s: None,
        }
    }

    /// Attaches a bound; its params become profiles.
    pub fn with_bound(mut self, report: BoundReport) -> Self {
        self.bound = Some(BoundSummary {
            kind: report.kind,
            rhs: report.rhs,
            rhs_raw: report.rhs_raw,
            rhs_std_err: report.rhs_std_err,
            certified: report.certified,
            holds_3se: report.holds_within(HOLDS_Z),
        });
        self.profiles.extend(report.params);
        self
    }

    pub fn with_diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn diag(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

const COLUMNS: [&str; 22] = [
    "experiment",
    "kind",
    "case",
    "n",
    "d",
    "eps",
    "delta",
    "rate",
    "alpha",
    "reps",
    "medbias",
    "medbias_se",
    "p_le",
    "p_ge",
    "bound_kind",
    "rhs",
    "rhs_raw",
    "rhs_se",
    "certified",
    "holds_3se",
    "diagnostics",
    "seed",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ReportRow], writer: W, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_timing {
        header.push("wall_time_s");
    }
    w.write_record(&header)?;
    for r in rows {
        let b = r.bound.as_ref();
        let diagnostics = r
            .diagnostics
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let mut rec = vec![
            r.experiment.clone(),
            r.kind.clone(),
            r.case.clone(),
            r.grid.n.to_string(),
            opt(r.grid.d),
            opt(r.grid.eps),
            opt(r.grid.delta),
            opt(r.grid.rate),
            opt(r.grid.alpha),
            r.medbias.reps.to_string(),
            r.medbias.point.to_string(),
            r.medbias.std_err.to_string(),
            r.medbias.p_le.to_string(),
            r.medbias.p_ge.to_string(),
            opt(b.map(|b| b.kind.as_str())),
            opt(b.map(|b| b.rhs)),
            opt(b.map(|b| b.rhs_raw)),
            opt(b.map(|b| b.rhs_std_err)),
            opt(b.map(|b| b.certified)),
            opt(b.map(|b| b.holds_3se)),
            diagnostics,
            r.seed.to_string(),
        ];
        if with_timing {
            rec.push(opt(r.wall_time_s));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Full report: the config that produced it and every row with profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

pub fn write_json<W: Write>(config: &ExperimentConfig, rows: &[ReportRow], mut writer: W) -> Result<()> {
    let report = JsonReport {
        config: config.clone(),
        rows: rows.to_vec(),
    };
    serde_json::to_writer_pretty(&mut writer, &report)?;
    writer.write_all(b"\n")?;
    Ok(())
}
