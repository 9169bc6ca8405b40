//! Experiment configuration files (JSON).
//!
//! ```json
//! {
//!   "id": "median-n5",
//!   "kind": "convex_thm1",
//!   "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 5}],
//!   "reps": 100000,
//!   "master_seed": 20240601,
//!   "output": {"path": "median.csv"}
//! }
//! ```
//!
//! `kind` selects the experiment and the remaining keys of that variant;
//! `reps`, `master_seed`, `workers`, `output` and `record_timing` are common
//! to all kinds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BERRY_ESSEEN_CONSTANT;
use crate::error::{Error, Result};
use crate::objectives::{LocationFamily, ObjectiveKind};
use crate::plm::{Alignment, PlmDgp};
use crate::simlab::dgp::{LinearDesign, UnivariateLaw};

/// Smallest accepted replication count.
pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(flatten)]
    pub spec: ExperimentSpec,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Adds a wall-time column; off by default so reports stay byte-stable.
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

impl OutputSpec {
    /// Explicit format, else inferred from the extension (default CSV).
    pub fn resolved_format(&self) -> OutputFormat {
        self.format.unwrap_or_else(|| format_for_path(&self.path))
    }
}

pub fn format_for_path(path: &Path) -> OutputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    }
}

/// One univariate (law, objective, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateCase {
    pub law: UnivariateLaw,
    pub objective: ObjectiveKind,
    pub n: usize,
    /// Target; defaults to the median of `law`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
}

impl UnivariateCase {
    pub fn target(&self) -> f64 {
        self.theta0.unwrap_or_else(|| self.law.median())
    }

    fn validate(&self) -> Result<()> {
        self.law.validate()?;
        self.objective.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.n == 0 {
            return Err(Error::Config("case sample size must be positive".into()));
        }
        if let Some(t) = self.theta0 {
            if !t.is_finite() {
                return Err(Error::Config("theta0 must be finite".into()));
            }
        }
        Ok(())
    }
}

/// How d grows with n in the dimension-scaling experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DimRule {
    /// d = ⌈n^{1/4}⌉.
    QuarterPower,
    /// d = ⌈√n / 2⌉.
    HalfSqrt,
    Fixed { d: usize },
}

impl DimRule {
    pub fn dim(&self, n: usize) -> usize {
        let n = n as f64;
        match *self {
            DimRule::QuarterPower => n.powf(0.25).ceil() as usize,
            DimRule::HalfSqrt => (n.sqrt() / 2.0).ceil() as usize,
            DimRule::Fixed { d } => d,
        }
    }
}

/// Nuisance estimation in the partial linear experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "nuisance", rename_all = "snake_case")]
pub enum PlmNuisance {
    /// Corrupted nuisances with √|D₂|·r_n² = constant·n^exponent.
    RateSchedule {
        constant: f64,
        exponent: f64,
        #[serde(default = "aligned")]
        alignment: Alignment,
    },
    Series { degree: usize },
    Knn { k: usize },
    Oracle,
}

fn aligned() -> Alignment {
    Alignment::Aligned
}

impl PlmNuisance {
    /// Perturbation size r_n for a total sample of n with |D₂| = `d2`.
    pub fn rate(&self, n: usize, d2: usize) -> Option<f64> {
        match *self {
            PlmNuisance::RateSchedule { constant, exponent, .. } => {
                Some((constant * (n as f64).powf(exponent) / (d2 as f64).sqrt()).sqrt())
            }
            _ => None,
        }
    }
}

fn default_grid_points() -> usize {
    201
}

fn default_search_points() -> usize {
    2001
}

fn default_eta_points() -> usize {
    61
}

fn default_be_constant() -> f64 {
    BERRY_ESSEEN_CONSTANT
}

/// Experiment kinds and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    /// Convex M-estimators against the strict-sign bound.
    ConvexThm1 { cases: Vec<UnivariateCase> },
    /// Differentiable Z-estimators against the exact weak-sign identity.
    ZExact { cases: Vec<UnivariateCase> },
    /// ε-profile bound for non-differentiable objectives.
    NondiffEps { cases: Vec<UnivariateCase>, eps: Vec<f64> },
    /// Log-likelihood-ratio lower bounds for the location MLE.
    MleLlr {
        family: LocationFamily,
        n: Vec<usize>,
        eps: Vec<f64>,
        #[serde(default)]
        theta0: f64,
    },
    /// δ-profile bound for non-convex objectives.
    NonconvexDelta {
        cases: Vec<UnivariateCase>,
        delta: Vec<f64>,
        #[serde(default = "default_grid_points")]
        convexity_points: usize,
        #[serde(default = "default_search_points")]
        search_points: usize,
    },
    /// Berry–Esseen approximation of the strict-sign gap.
    CltAsymptotic {
        cases: Vec<UnivariateCase>,
        #[serde(default = "default_be_constant")]
        constant: f64,
    },
    /// Algebraic checks of residualized least squares.
    FwlAlgebra {
        design: LinearDesign,
        n: Vec<usize>,
        d: Vec<usize>,
    },
    /// Partialled θ̂ against the S_n/correction bound.
    Proposition {
        design: LinearDesign,
        n: Vec<usize>,
        d: Vec<usize>,
        #[serde(default = "default_eta_points")]
        eta_points: usize,
    },
    /// Partialled θ̂ with d tied to n.
    DimScaling {
        design: LinearDesign,
        n: Vec<usize>,
        dim_rule: DimRule,
        #[serde(default = "default_eta_points")]
        eta_points: usize,
    },
    /// Sample-split partial linear model.
    PlmRate {
        dgp: PlmDgp,
        n: Vec<usize>,
        nuisance: PlmNuisance,
    },
    /// Coverage of the min/max-of-batches interval.
    Hulc { cases: Vec<UnivariateCase>, alpha: f64 },
}

/// (kind, description) for every experiment kind.
pub const EXPERIMENT_KINDS: &[(&str, &str)] = &[
    ("convex_thm1", "convex M-estimator: MC median bias vs strict-sign bound"),
    ("z_exact", "smooth Z-estimator: MC median bias vs exact weak-sign identity"),
    ("nondiff_eps", "objective comparisons at θ₀ ± ε: ε-profile bound"),
    ("mle_llr", "location MLE: log-likelihood-ratio lower bounds on the ε comparisons"),
    ("nonconvex_delta", "non-convex objective: bound with η₁(δ) + η₂(δ) penalty"),
    ("clt_asymptotic", "Berry–Esseen estimate of the strict-sign gap (not certified)"),
    ("fwl_algebra", "residualized least squares: joint-solve agreement and score decomposition"),
    ("proposition", "partialled θ̂: S_n / correction bound"),
    ("dim_scaling", "partialled θ̂ with d = d(n): median-bias trajectory"),
    ("plm_rate", "sample-split partial linear model: product-of-rates bound"),
    ("hulc", "min/max-of-batches interval coverage"),
];

impl ExperimentSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::ConvexThm1 { .. } => "convex_thm1",
            ExperimentSpec::ZExact { .. } => "z_exact",
            ExperimentSpec::NondiffEps { .. } => "nondiff_eps",
            ExperimentSpec::MleLlr { .. } => "mle_llr",
            ExperimentSpec::NonconvexDelta { .. } => "nonconvex_delta",
            ExperimentSpec::CltAsymptotic { .. } => "clt_asymptotic",
            ExperimentSpec::FwlAlgebra { .. } => "fwl_algebra",
            ExperimentSpec::Proposition { .. } => "proposition",
            ExperimentSpec::DimScaling { .. } => "dim_scaling",
            ExperimentSpec::PlmRate { .. } => "plm_rate",
            ExperimentSpec::Hulc { .. } => "hulc",
        }
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::Config(format!("{name} grid must be non-empty")))
    } else {
        Ok(())
    }
}

fn positive_sizes(name: &str, v: &[usize]) -> Result<()> {
    nonempty(name, v)?;
    if v.contains(&0) {
        return Err(Error::Config(format!("{name} grid must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("experiment id must be non-empty".into()));
        }
        if self.reps < MIN_REPS {
            return Err(Error::Config(format!("reps must be at least {MIN_REPS}, got {}", self.reps)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let cases = |cases: &[UnivariateCase]| -> Result<()> {
            nonempty("cases", cases)?;
            cases.iter().try_for_each(UnivariateCase::validate)
        };
        match &self.spec {
            ExperimentSpec::ConvexThm1 { cases: c } => {
                cases(c)?;
                if let Some(bad) = c.iter().find(|c| !c.objective.is_convex()) {
                    return Err(Error::Config(format!("convex_thm1 needs convex objectives, got {:?}", bad.objective)));
                }
            }
            ExperimentSpec::ZExact { cases: c } | ExperimentSpec::CltAsymptotic { cases: c, .. } => {
                cases(c)?;
                if let Some(bad) = c.iter().find(|c| !c.objective.is_convex()) {
                    return Err(Error::Config(format!(
                        "{} needs a monotone score, got {:?}",
                        self.spec.kind_name(),
                        bad.objective
                    )));
                }
                if let ExperimentSpec::CltAsymptotic { constant, .. } = &self.spec {
                    if !(*constant > 0.0) {
                        return Err(Error::Config("Berry–Esseen constant must be positive".into()));
                    }
                }
            }
            ExperimentSpec::NondiffEps { cases: c, eps } => {
                cases(c)?;
                if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Config(
                        "eps grid needs >= 2 positive, strictly decreasing values".into(),
                    ));
                }
                if let Some(bad) = c.iter().find(|c| !c.objective.is_convex()) {
                    return Err(Error::Config(format!("nondiff_eps needs convex objectives, got {:?}", bad.objective)));
                }
            }
            ExperimentSpec::MleLlr { family, n, eps, theta0 } => {
                family.validate().map_err(|e| Error::Config(e.to_string()))?;
                positive_sizes("n", n)?;
                nonempty("eps", eps)?;
                if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) || !theta0.is_finite() {
                    return Err(Error::Config("eps must be positive and theta0 finite".into()));
                }
            }
            ExperimentSpec::NonconvexDelta {
                cases: c,
                delta,
                convexity_points,
                search_points,
            } => {
                cases(c)?;
                nonempty("delta", delta)?;
                if delta.iter().any(|&d| !(d >= 0.0)) {
                    return Err(Error::Config("delta grid must be non-negative".into()));
                }
                if *convexity_points < 2 || *search_points < 3 {
                    return Err(Error::Config("convexity_points >= 2 and search_points >= 3 required".into()));
                }
            }
            ExperimentSpec::FwlAlgebra { design, n, d } | ExperimentSpec::Proposition { design, n, d, .. } => {
                design.validate()?;
                positive_sizes("n", n)?;
                nonempty("d", d)?;
                if let ExperimentSpec::Proposition { eta_points, .. } = &self.spec {
                    if *eta_points == 0 {
                        return Err(Error::Config("eta_points must be positive".into()));
                    }
                }
            }
            ExperimentSpec::DimScaling { design, n, eta_points, .. } => {
                design.validate()?;
                positive_sizes("n", n)?;
                if *eta_points == 0 {
                    return Err(Error::Config("eta_points must be positive".into()));
                }
            }
            ExperimentSpec::PlmRate { dgp, n, nuisance } => {
                dgp.validate()?;
                positive_sizes("n", n)?;
                if n.iter().any(|&v| v < 4) {
                    return Err(Error::Config("partial linear model needs n >= 4".into()));
                }
                match *nuisance {
                    PlmNuisance::RateSchedule { constant, exponent, .. } => {
                        if !(constant >= 0.0 && constant.is_finite() && exponent.is_finite()) {
                            return Err(Error::Config("rate schedule needs finite constant >= 0".into()));
                        }
                    }
                    PlmNuisance::Knn { k: 0 } => return Err(Error::Config("knn needs k >= 1".into())),
                    _ => {}
                }
            }
            ExperimentSpec::Hulc { cases: c, alpha } => {
                cases(c)?;
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "id": "t",
        "kind": "convex_thm1",
        "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 5}],
        "reps": 100,
        "master_seed": 18446744073709551615
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.master_seed, u64::MAX);
        assert_eq!(cfg.spec.kind_name(), "convex_thm1");
        let back = ExperimentConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_few_reps_and_unknown_names() {
        let few = MINIMAL.replace("\"reps\": 100", "\"reps\": 99");
        assert!(matches!(ExperimentConfig::from_json_str(&few), Err(Error::Config(_))));
        let unknown = MINIMAL.replace("\"normal\"", "\"cauchy_like\"");
        assert!(matches!(ExperimentConfig::from_json_str(&unknown), Err(Error::Config(_))));
        let kind = MINIMAL.replace("convex_thm1", "no_such_kind");
        assert!(matches!(ExperimentConfig::from_json_str(&kind), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_empty_grids() {
        let empty = MINIMAL.replace(
            r#"[{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 5}]"#,
            "[]",
        );
        assert!(ExperimentConfig::from_json_str(&empty).is_err());
    }

    #[test]
    fn every_kind_is_listed() {
        assert_eq!(EXPERIMENT_KINDS.len(), 11);
    }

    #[test]
    fn dim_rules() {
        let q: Vec<usize> = [100, 400, 1600].iter().map(|&n| DimRule::QuarterPower.dim(n)).collect();
        let h: Vec<usize> = [100, 400, 1600].iter().map(|&n| DimRule::HalfSqrt.dim(n)).collect();
        assert_eq!(q, vec![4, 5, 7]);
        assert_eq!(h, vec![5, 10, 20]);
    }

    #[test]
    fn output_format_inference() {
        assert_eq!(format_for_path(Path::new("a/b.json")), OutputFormat::Json);
        assert_eq!(format_for_path(Path::new("a/b.csv")), OutputFormat::Csv);
        assert_eq!(format_for_path(Path::new("a/b")), OutputFormat::Csv);
    }
}
