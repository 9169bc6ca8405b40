//! Least squares with nuisance covariates, reduced to a univariate problem.
//!
//! For the joint problem min_{θ,λ} Σ (Yᵢ − θTᵢ − λᵀXᵢ)², the θ-coordinate
//! equals the slope of the residualized regression
//! θ̂ = Σ R̂_{T,i} R̂_{Y,i} / Σ R̂_{T,i}², where R̂_T and R̂_Y are the
//! residuals of T and Y on X. Profiling λ out of a jointly convex objective
//! leaves a convex function of θ, so every univariate bound applies to θ̂
//! through the score Σ R̂_{T,i}(R̂_{Y,i} − θ₀R̂_{T,i}).
//!
//! With population coefficients β_T, β_Y and R_T = T − Xβ_T,
//! R_Y = Y − Xβ_Y, the score splits exactly as
//!
//! ```text
//! Σ R̂_T(R̂_Y − θ₀R̂_T) = S_n + Σ (R̂_T − R_T)(R_Y − θ₀R_T)
//! S_n = Σ R_T(R_Y − θ₀R_T)
//! ```
//!
//! because Σ R̂_{T,i}Xᵢ = 0 kills the remaining cross term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::median_bias::half_minus_min;

/// Relative singular-value cutoff below which the design counts as collinear.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Response y, treatment t and an n×d covariate matrix x.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub y: DVector<f64>,
    pub t: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, t: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("regression data"));
        }
        if t.len() != n || x.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "inconsistent lengths: y={n}, t={}, x has {} rows",
                t.len(),
                x.nrows()
            )));
        }
        if y.iter().chain(&t).chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry in regression data".into()));
        }
        Ok(Self {
            y: DVector::from_vec(y),
            t: DVector::from_vec(t),
            x,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Reads the `y,t,x1..xd` CSV layout (header row required).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names.len() < 2 || names[0] != "y" || names[1] != "t" {
            return Err(Error::Config(format!(
                "regression CSV must start with columns y,t; got {:?}",
                names
            )));
        }
        for (j, name) in names[2..].iter().enumerate() {
            if *name != format!("x{}", j + 1) {
                return Err(Error::Config(format!(
                    "covariate column {} must be named x{}, got {name:?}",
                    j + 3,
                    j + 1
                )));
            }
        }
        let d = names.len() - 2;
        let (mut y, mut t, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != d + 2 {
                return Err(Error::Config(format!("row {} has {} fields, expected {}", line + 2, record.len(), d + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {}: {e}: {s:?}", line + 2)))
            };
            y.push(parse(&record[0])?);
            t.push(parse(&record[1])?);
            for j in 0..d {
                xs.push(parse(&record[j + 2])?);
            }
        }
        let n = y.len();
        let x = DMatrix::from_row_slice(n, d, &xs);
        Self::new(y, t, x)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "t".to_string()];
        header.extend((1..=self.d()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.y[i].to_string(), self.t[i].to_string()];
            row.extend((0..self.d()).map(|j| self.x[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of the residualized least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialledFit {
    pub theta_hat: f64,
    pub r_t_hat: DVector<f64>,
    pub r_y_hat: DVector<f64>,
    pub beta_t_hat: DVector<f64>,
    pub beta_y_hat: DVector<f64>,
    /// max_j |Σᵢ R̂_{T,i} x_{ij}|, the normal-equation residual.
    pub orthogonality_residual: f64,
}

/// Solves the joint least-squares problem through residualization.
///
/// A Householder QR of `[x | t | y]` gives a triangular factor whose
/// leading (d+1)×(d+1) block shares its singular values with `[x | t]`;
/// the rank test and both nuisance regressions come from that factor.
pub fn fwl_estimate(data: &RegressionData) -> Result<PartialledFit> {
    let n = data.n();
    let d = data.d();
    if n < d + 1 {
        return Err(Error::Degenerate(format!("{n} observations cannot identify {} coefficients", d + 1)));
    }
    let mut stacked = DMatrix::<f64>::zeros(n, d + 2);
    stacked.view_mut((0, 0), (n, d)).copy_from(&data.x);
    stacked.set_column(d, &data.t);
    stacked.set_column(d + 1, &data.y);
    let r = stacked.qr().r();

    let block = r.view((0, 0), (d + 1, d + 1)).into_owned();
    check_rank(&block)?;

    let (beta_t_hat, beta_y_hat) = if d == 0 {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let rxx = r.view((0, 0), (d, d)).into_owned();
        let rhs_t = r.view((0, d), (d, 1)).into_owned();
        let rhs_y = r.view((0, d + 1), (d, 1)).into_owned();
        let bt = rxx
            .solve_upper_triangular(&rhs_t)
            .ok_or_else(|| Error::Degenerate("singular covariate block".into()))?;
        let by = rxx
            .solve_upper_triangular(&rhs_y)
            .ok_or_else(|| Error::Degenerate("singular covariate block".into()))?;
        (bt.column(0).into_owned(), by.column(0).into_owned())
    };
    let r_t_hat = &data.t - &data.x * &beta_t_hat;
    let r_y_hat = &data.y - &data.x * &beta_y_hat;
    let denom = r_t_hat.norm_squared();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("treatment residuals vanish".into()));
    }
    let theta_hat = r_t_hat.dot(&r_y_hat) / denom;
    let orthogonality_residual = if d == 0 {
        0.0
    } else {
        (data.x.transpose() * &r_t_hat).amax()
    };
    Ok(PartialledFit {
        theta_hat,
        r_t_hat,
        r_y_hat,
        beta_t_hat,
        beta_y_hat,
        orthogonality_residual,
    })
}

fn check_rank(block: &DMatrix<f64>) -> Result<()> {
    let svd = block.clone().svd(false, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    let cutoff = RANK_CUTOFF * largest;
    if largest > 0.0 && sv.iter().all(|&s| s > cutoff) {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let directions = sv
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(k, _)| v_t.row(k).iter().copied().collect())
        .collect();
    Err(Error::Collinear {
        smallest_sv: sv.min(),
        directions,
    })
}

/// Exact split of the partialled score at θ₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDecomposition {
    /// Σ R̂_{T,i}(R̂_{Y,i} − θ₀R̂_{T,i}).
    pub total: f64,
    /// S_n = Σ R_{T,i}(R_{Y,i} − θ₀R_{T,i}).
    pub s_n: f64,
    /// Σ (R̂_{T,i} − R_{T,i})(R_{Y,i} − θ₀R_{T,i}) = −(β̂_T − β_T)ᵀ Σ Xᵢ(R_{Y,i} − θ₀R_{T,i}).
    pub correction: f64,
    /// Σ R̂_{T,i}((R̂_{Y,i} − R_{Y,i}) − θ₀(R̂_{T,i} − R_{T,i})), zero by the normal equations.
    pub remainder: f64,
    /// Σ Xᵢ(R_{Y,i} − θ₀R_{T,i}), mean zero at the population coefficients.
    pub moment: Vec<f64>,
    /// Floating-point scale used for the identity checks.
    pub scale: f64,
}

/// Relative tolerance of the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-8;

pub fn score_decompose(
    data: &RegressionData,
    fit: &PartialledFit,
    theta0: f64,
    beta_t: &[f64],
    beta_y: &[f64],
) -> Result<ScoreDecomposition> {
    let d = data.d();
    if beta_t.len() != d || beta_y.len() != d {
        return Err(Error::InvalidArgument(format!(
            "population coefficients have lengths {}/{} for d = {d}",
            beta_t.len(),
            beta_y.len()
        )));
    }
    let bt = DVector::from_column_slice(beta_t);
    let by = DVector::from_column_slice(beta_y);
    let r_t = &data.t - &data.x * &bt;
    let r_y = &data.y - &data.x * &by;
    let a = &r_y - &r_t * theta0;
    let a_hat = &fit.r_y_hat - &fit.r_t_hat * theta0;

    let mut total = 0.0;
    let mut s_n = 0.0;
    let mut correction = 0.0;
    let mut remainder = 0.0;
    let mut scale = 0.0;
    for i in 0..data.n() {
        let dt = fit.r_t_hat[i] - r_t[i];
        let dy = fit.r_y_hat[i] - r_y[i];
        let tot = fit.r_t_hat[i] * a_hat[i];
        let s = r_t[i] * a[i];
        let c = dt * a[i];
        let rem = fit.r_t_hat[i] * (dy - theta0 * dt);
        total += tot;
        s_n += s;
        correction += c;
        remainder += rem;
        scale += tot.abs() + s.abs() + c.abs() + rem.abs();
    }
    let moment: Vec<f64> = (data.x.transpose() * &a).iter().copied().collect();
    let scale = 1.0 + scale;
    let tol = IDENTITY_TOL * scale;
    if remainder.abs() > tol {
        return Err(Error::Identity {
            what: "cross-term cancellation",
            residual: remainder.abs(),
            tolerance: tol,
        });
    }
    let gap = (total - s_n - correction).abs();
    if gap > tol {
        return Err(Error::Identity {
            what: "score decomposition",
            residual: gap,
            tolerance: tol,
        });
    }
    Ok(ScoreDecomposition {
        total,
        s_n,
        correction,
        remainder,
        moment,
        scale,
    })
}

/// Proposition-style bound on the median bias of the partialled θ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionBound {
    pub value: f64,
    pub best_eta: f64,
    pub eta: Vec<f64>,
    /// Bound at each η of the grid.
    pub profile: Vec<f64>,
    /// True when the bound is 1/2 at every grid point.
    pub vacuous: bool,
}

/// inf over η of (1/2 − min{P̂(S_n ≤ −η), P̂(S_n ≥ η)})₊ + P̂(|correction| > η).
pub fn proposition_bound(
    s_n_draws: &[f64],
    correction_draws: &[f64],
    eta_grid: &[f64],
) -> Result<PropositionBound> {
    if eta_grid.is_empty() {
        return Err(Error::Empty("η grid"));
    }
    if s_n_draws.is_empty() {
        return Err(Error::Empty("S_n draws"));
    }
    if s_n_draws.len() != correction_draws.len() {
        return Err(Error::InvalidArgument(format!(
            "{} S_n draws but {} correction draws",
            s_n_draws.len(),
            correction_draws.len()
        )));
    }
    if eta_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("η grid must be positive".into()));
    }
    let reps = s_n_draws.len() as f64;
    let profile: Vec<f64> = eta_grid
        .iter()
        .map(|&eta| {
            let mut le = 0usize;
            let mut ge = 0usize;
            let mut miss = 0usize;
            for (&s, &c) in s_n_draws.iter().zip(correction_draws) {
                le += usize::from(s <= -eta);
                ge += usize::from(s >= eta);
                miss += usize::from(c.abs() > eta);
            }
            half_minus_min(le as f64 / reps, ge as f64 / reps) + miss as f64 / reps
        })
        .collect();
    let (best, &value) = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    Ok(PropositionBound {
        value: value.min(0.5),
        best_eta: eta_grid[best],
        eta: eta_grid.to_vec(),
        vacuous: profile.iter().all(|&v| v >= 0.5),
        profile,
    })
}

/// Geometric η grid spanning [lo, hi]·sd(S_n) with `points` points.
pub fn default_eta_grid(s_n_draws: &[f64], points: usize, lo: f64, hi: f64) -> Vec<f64> {
    let n = s_n_draws.len().max(1) as f64;
    let mean = s_n_draws.iter().sum::<f64>() / n;
    let var = s_n_draws.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(f64::MIN_POSITIVE);
    geometric_grid(lo * sd, hi * sd, points)
}

pub(crate) fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (ratio * k as f64).exp()).collect()
}
