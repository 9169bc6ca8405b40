//! Partial linear model with a single sample split.
//!
//! Data follow Yᵢ = θ₀Tᵢ + g₀(Xᵢ) + Uᵢ and Tᵢ = m₀(Xᵢ) + Vᵢ with
//! E[U | T, X] = 0 and E[V | X] = 0. Nuisance estimates m̂, ĝ are trained on
//! the first fold D₁; θ̂ solves the score on the second fold D₂:
//!
//! ```text
//! Z_n(θ) = Σ_{i∈D₂} R̂_{T,i}(R̂_{Y,i} − Tᵢθ),   R̂_T = T − m̂(X),  R̂_Y = Y − ĝ(X).
//! ```
//!
//! ĝ targets g₀ = E[Y − θ₀T | X], not E[Y | X]. Conditionally on D₁ the
//! score at θ₀ has mean Σ_{D₂} E[(ĝ − g₀)(m̂ − m₀)], which is bounded by
//! |D₂|·‖ĝ − g₀‖₂·‖m̂ − m₀‖₂.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::median_bias::half_minus_min;
use crate::partialling::RegressionData;
use crate::quadrature::{normal_expectation, GaussLegendre};

/// Number of Monte-Carlo points for L² norms when X is multivariate.
pub const NORM_MC_POINTS: usize = 100_000;

/// Law of the covariate vector X ∈ ℝ^d (independent coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform01 { d: usize },
    StdNormal { d: usize },
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match *self {
            CovariateLaw::Uniform01 { d } | CovariateLaw::StdNormal { d } => d,
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            CovariateLaw::Uniform01 { .. } => out.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            CovariateLaw::StdNormal { .. } => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        }
    }

    /// E[f(X)] and its standard error (zero for deterministic quadrature).
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> (f64, f64) {
        match *self {
            CovariateLaw::Uniform01 { d: 1 } => {
                let rule = GaussLegendre::new(32);
                (rule.integrate_composite(|x| f(&[x]), 0.0, 1.0, 64), 0.0)
            }
            CovariateLaw::StdNormal { d: 1 } => (normal_expectation(|x| f(&[x])), 0.0),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_c0_4a_1a);
                let mut x = vec![0.0; self.dim()];
                let mut sum = 0.0;
                let mut sq = 0.0;
                for _ in 0..NORM_MC_POINTS {
                    self.sample_into(&mut rng, &mut x);
                    let v = f(&x);
                    sum += v;
                    sq += v * v;
                }
                let n = NORM_MC_POINTS as f64;
                let mean = sum / n;
                let var = (sq / n - mean * mean).max(0.0);
                (mean, (var / n).sqrt())
            }
        }
    }

    /// An orthonormal pair (h, h̃) in L²(P_X), depending on the first
    /// coordinate only, indexed by a seed-derived phase.
    fn perturbation(&self, which: PerturbationSlot, phase: f64, x: &[f64]) -> f64 {
        let x0 = x[0];
        match (self, which) {
            (CovariateLaw::Uniform01 { .. }, PerturbationSlot::First) => SQRT_2 * (2.0 * PI * x0 + phase).sin(),
            (CovariateLaw::Uniform01 { .. }, PerturbationSlot::Second) => SQRT_2 * (2.0 * PI * x0 + phase).cos(),
            // For Gaussian X the phase only selects a sign.
            (CovariateLaw::StdNormal { .. }, PerturbationSlot::First) => phase.cos().signum() * x0,
            (CovariateLaw::StdNormal { .. }, PerturbationSlot::Second) => {
                phase.cos().signum() * (x0 * x0 - 1.0) / SQRT_2
            }
        }
    }
}

/// Which member of the orthonormal perturbation pair a corrupted fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSlot {
    First,
    Second,
}

/// Named smooth regression functions of x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum SmoothFn {
    Zero,
    /// intercept + coefᵀx.
    Linear { intercept: f64, coef: Vec<f64> },
    /// amp·sin(2π·freq·x₁).
    Sine { amp: f64, freq: f64 },
    /// Σ_k coefs[k]·x₁^k.
    Polynomial { coefs: Vec<f64> },
}

impl SmoothFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SmoothFn::Zero => 0.0,
            SmoothFn::Linear { intercept, coef } => {
                intercept + coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            SmoothFn::Sine { amp, freq } => amp * (2.0 * PI * freq * x[0]).sin(),
            SmoothFn::Polynomial { coefs } => coefs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            SmoothFn::Linear { coef, .. } if coef.len() != d => Err(Error::Config(format!(
                "linear function has {} coefficients for d = {d}",
                coef.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Centered noise laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseLaw {
    Zero,
    Normal { sd: f64 },
    /// scale·(Exp(1) − 1).
    CenteredExp { scale: f64 },
    Uniform { half_width: f64 },
}

impl NoiseLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            NoiseLaw::CenteredExp { scale } => scale * (rng.sample::<f64, _>(Exp1) - 1.0),
            NoiseLaw::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Normal { sd } => sd,
            NoiseLaw::CenteredExp { scale } => scale,
            NoiseLaw::Uniform { half_width } => half_width / 3f64.sqrt(),
        }
    }
}

/// Fully specified partial-linear data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlmDgp {
    pub theta0: f64,
    pub g0: SmoothFn,
    pub m0: SmoothFn,
    pub u: NoiseLaw,
    pub v: NoiseLaw,
    pub x: CovariateLaw,
}

impl PlmDgp {
    pub fn validate(&self) -> Result<()> {
        let d = self.x.dim();
        if d == 0 {
            return Err(Error::Config("partial linear model needs d >= 1".into()));
        }
        self.g0.validate(d)?;
        self.m0.validate(d)?;
        if !self.theta0.is_finite() {
            return Err(Error::Config("theta0 must be finite".into()));
        }
        Ok(())
    }
}

/// One simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PlmData {
    pub x: DMatrix<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlmData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn subset(&self, idx: &[usize]) -> PlmData {
        let d = self.x.ncols();
        PlmData {
            x: DMatrix::from_fn(idx.len(), d, |r, c| self.x[(idx[r], c)]),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Same sample in the `partialling` layout.
    pub fn to_regression_data(&self) -> Result<RegressionData> {
        RegressionData::new(self.y.clone(), self.t.clone(), self.x.clone())
    }
}

/// Draws n observations from the model.
pub fn simulate_plm<R: Rng + ?Sized>(dgp: &PlmDgp, n: usize, rng: &mut R) -> PlmData {
    let d = dgp.x.dim();
    let mut x = DMatrix::zeros(n, d);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        dgp.x.sample_into(rng, &mut row);
        let v = dgp.v.sample(rng);
        let u = dgp.u.sample(rng);
        let ti = dgp.m0.eval(&row) + v;
        y.push(dgp.theta0 * ti + dgp.g0.eval(&row) + u);
        t.push(ti);
        for (j, &val) in row.iter().enumerate() {
            x[(i, j)] = val;
        }
    }
    PlmData { x, t, y }
}

/// Seeded 50/50 split; returns sorted (D₁, D₂) index sets.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = n / 2;
    let mut d1 = idx[..half].to_vec();
    let mut d2 = idx[half..].to_vec();
    d1.sort_unstable();
    d2.sort_unstable();
    (d1, d2)
}

/// Whether the corrupted nuisances share one perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Aligned,
    Orthogonal,
}

/// How the nuisances are estimated on D₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum NuisanceMethod {
    /// Least squares on an additive polynomial basis of the given degree.
    Series { degree: usize },
    Knn { k: usize },
    Oracle,
    /// g₀ + r·h and m₀ + r·h̃ with unit-norm h, h̃.
    Corrupted {
        rate: f64,
        alignment: Alignment,
        seed: u64,
    },
}

/// A fitted regression function, immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub enum NuisanceFn {
    Known(SmoothFn),
    Perturbed {
        base: SmoothFn,
        rate: f64,
        law: CovariateLaw,
        slot: PerturbationSlot,
        phase: f64,
    },
    Series {
        degree: usize,
        coefs: Vec<f64>,
    },
    Knn {
        points: DMatrix<f64>,
        values: Vec<f64>,
        k: usize,
    },
    /// a(x) − coef·b(x).
    Difference {
        a: Box<NuisanceFn>,
        b: Box<NuisanceFn>,
        coef: f64,
    },
}

impl NuisanceFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            NuisanceFn::Known(f) => f.eval(x),
            NuisanceFn::Perturbed {
                base,
                rate,
                law,
                slot,
                phase,
            } => base.eval(x) + rate * law.perturbation(*slot, *phase, x),
            NuisanceFn::Series { degree, coefs } => {
                let mut acc = coefs[0];
                let mut k = 1;
                for &v in x {
                    let mut p = 1.0;
                    for _ in 0..*degree {
                        p *= v;
                        acc += coefs[k] * p;
                        k += 1;
                    }
                }
                acc
            }
            NuisanceFn::Knn { points, values, k } => knn_predict(points, values, *k, x),
            NuisanceFn::Difference { a, b, coef } => a.eval(x) - coef * b.eval(x),
        }
    }
}

fn series_design(x: &DMatrix<f64>, degree: usize) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut basis = DMatrix::zeros(n, 1 + d * degree);
    for i in 0..n {
        basis[(i, 0)] = 1.0;
        let mut k = 1;
        for j in 0..d {
            let mut p = 1.0;
            for _ in 0..degree {
                p *= x[(i, j)];
                basis[(i, k)] = p;
                k += 1;
            }
        }
    }
    basis
}

fn fit_series(x: &DMatrix<f64>, target: &[f64], degree: usize) -> Result<NuisanceFn> {
    let basis = series_design(x, degree);
    let rhs = DVector::from_column_slice(target);
    let coefs = basis
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Degenerate(format!("series fit failed: {e}")))?;
    Ok(NuisanceFn::Series {
        degree,
        coefs: coefs.iter().copied().collect(),
    })
}

fn knn_predict(points: &DMatrix<f64>, values: &[f64], k: usize, x: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = (0..points.nrows())
        .map(|i| {
            let d2: f64 = x.iter().enumerate().map(|(j, v)| (points[(i, j)] - v).powi(2)).sum();
            (d2, i)
        })
        .collect();
    let k = k.min(dist.len());
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist[..k].iter().map(|&(_, i)| values[i]).sum::<f64>() / k as f64
}

/// Trains (m̂, ĝ) on D₁.
///
/// Learned methods regress T and Y on X, form a D₁ partialling estimate θ̃,
/// and return ĝ = ℓ̂ − θ̃·m̂ so that ĝ targets g₀ rather than E[Y | X].
pub fn fit_nuisance(dgp: &PlmDgp, d1: &PlmData, method: &NuisanceMethod) -> Result<(NuisanceFn, NuisanceFn)> {
    if d1.n() == 0 {
        return Err(Error::Empty("first fold"));
    }
    match *method {
        NuisanceMethod::Oracle => Ok((NuisanceFn::Known(dgp.m0.clone()), NuisanceFn::Known(dgp.g0.clone()))),
        NuisanceMethod::Corrupted { rate, alignment, seed } => {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidArgument(format!("corruption rate must be >= 0, got {rate}")));
            }
            let phase = 2.0 * PI * ChaCha8Rng::seed_from_u64(seed).random::<f64>();
            let g_slot = PerturbationSlot::First;
            let m_slot = match alignment {
                Alignment::Aligned => PerturbationSlot::First,
                Alignment::Orthogonal => PerturbationSlot::Second,
            };
            let m_hat = NuisanceFn::Perturbed {
                base: dgp.m0.clone(),
                rate,
                law: dgp.x,
                slot: m_slot,
                phase,
            };
            let g_hat = NuisanceFn::Perturbed {
                base: dgp.g0.clone(),
                rate,
                law: dgp.x,
                slot: g_slot,
                phase,
            };
            Ok((m_hat, g_hat))
        }
        NuisanceMethod::Series { degree } => {
            let size = 1 + d1.x.ncols() * degree;
            if size > d1.n() {
                return Err(Error::InvalidArgument(format!(
                    "series basis of size {size} exceeds |D1| = {}",
                    d1.n()
                )));
            }
            let m_hat = fit_series(&d1.x, &d1.t, degree)?;
            let l_hat = fit_series(&d1.x, &d1.y, degree)?;
            Ok(partial_out(d1, m_hat, l_hat))
        }
        NuisanceMethod::Knn { k } => {
            if k == 0 || k > d1.n() {
                return Err(Error::InvalidArgument(format!("knn needs 1 <= k <= |D1|, got k = {k}")));
            }
            let m_hat = NuisanceFn::Knn {
                points: d1.x.clone(),
                values: d1.t.clone(),
                k,
            };
            let l_hat = NuisanceFn::Knn {
                points: d1.x.clone(),
                values: d1.y.clone(),
                k,
            };
            Ok(partial_out(d1, m_hat, l_hat))
        }
    }
}

fn partial_out(d1: &PlmData, m_hat: NuisanceFn, l_hat: NuisanceFn) -> (NuisanceFn, NuisanceFn) {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..d1.n() {
        let x = d1.row(i);
        let rt = d1.t[i] - m_hat.eval(&x);
        let ry = d1.y[i] - l_hat.eval(&x);
        num += rt * ry;
        den += rt * rt;
    }
    let theta_tilde = if den > 0.0 { num / den } else { 0.0 };
    let g_hat = NuisanceFn::Difference {
        a: Box::new(l_hat),
        b: Box::new(m_hat.clone()),
        coef: theta_tilde,
    };
    (m_hat, g_hat)
}

/// θ̂ on D₂ with the affine score Z_n(θ) = `intercept` − θ·`slope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlmEstimate {
    pub theta_hat: f64,
    /// Σ R̂_{T,i}R̂_{Y,i}.
    pub intercept: f64,
    /// Σ R̂_{T,i}Tᵢ.
    pub slope: f64,
    /// Σ |R̂_{T,i}R̂_{Y,i}| + |R̂_{T,i}Tᵢ|, the floating-point scale of Z_n.
    pub scale: f64,
}

impl PlmEstimate {
    pub fn z(&self, theta: f64) -> f64 {
        self.intercept - theta * self.slope
    }
}

pub fn plm_theta(d2: &PlmData, m_hat: &NuisanceFn, g_hat: &NuisanceFn) -> Result<PlmEstimate> {
    if d2.n() == 0 {
        return Err(Error::Empty("second fold"));
    }
    let mut intercept = 0.0;
    let mut slope = 0.0;
    let mut scale = 0.0;
    for i in 0..d2.n() {
        let x = d2.row(i);
        let rt = d2.t[i] - m_hat.eval(&x);
        let ry = d2.y[i] - g_hat.eval(&x);
        intercept += rt * ry;
        slope += rt * d2.t[i];
        scale += (rt * ry).abs() + (rt * d2.t[i]).abs();
    }
    if !(slope.abs() > 1e-12 * scale) {
        return Err(Error::Degenerate("score has zero slope in θ".into()));
    }
    Ok(PlmEstimate {
        theta_hat: intercept / slope,
        intercept,
        slope,
        scale,
    })
}

/// The four-term expansion of Z_n(θ₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZExpansion {
    pub z: f64,
    /// Σ R_T(R_Y − Tθ₀), Σ R_T(R̂_Y − R_Y), Σ (R̂_T − R_T)(R_Y − Tθ₀), Σ (R̂_T − R_T)(R̂_Y − R_Y).
    pub terms: [f64; 4],
    pub scale: f64,
}

pub fn z_expansion(d2: &PlmData, dgp: &PlmDgp, m_hat: &NuisanceFn, g_hat: &NuisanceFn) -> ZExpansion {
    let mut z = 0.0;
    let mut terms = [0.0; 4];
    let mut scale = 0.0;
    for i in 0..d2.n() {
        let x = d2.row(i);
        let t = d2.t[i];
        let r_t = t - dgp.m0.eval(&x);
        let r_y = d2.y[i] - dgp.g0.eval(&x);
        let rh_t = t - m_hat.eval(&x);
        let rh_y = d2.y[i] - g_hat.eval(&x);
        let a = r_y - t * dgp.theta0;
        let parts = [r_t * a, r_t * (rh_y - r_y), (rh_t - r_t) * a, (rh_t - r_t) * (rh_y - r_y)];
        let zi = rh_t * (rh_y - t * dgp.theta0);
        z += zi;
        scale += zi.abs();
        for (acc, p) in terms.iter_mut().zip(parts) {
            *acc += p;
            scale += p.abs();
        }
    }
    ZExpansion { z, terms, scale: 1.0 + scale }
}

/// Conditional bias of Z_n(θ₀) given D₁ and its Cauchy–Schwarz bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBias {
    pub cond_bias: f64,
    pub product_bound: f64,
    pub norm_g: f64,
    pub norm_m: f64,
    /// Standard error of the integrals (zero under deterministic quadrature).
    pub std_err: f64,
}

pub fn plm_conditional_bias(
    dgp: &PlmDgp,
    m_hat: &NuisanceFn,
    g_hat: &NuisanceFn,
    d2_size: usize,
) -> Result<ConditionalBias> {
    let eg = |x: &[f64]| g_hat.eval(x) - dgp.g0.eval(x);
    let em = |x: &[f64]| m_hat.eval(x) - dgp.m0.eval(x);
    let (cross, se_cross) = dgp.x.expectation(|x| eg(x) * em(x));
    let (gg, se_g) = dgp.x.expectation(|x| eg(x).powi(2));
    let (mm, se_m) = dgp.x.expectation(|x| em(x).powi(2));
    if ![cross, gg, mm].iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("quadrature produced a non-finite value".into()));
    }
    let norm_g = gg.max(0.0).sqrt();
    let norm_m = mm.max(0.0).sqrt();
    let size = d2_size as f64;
    // Cauchy–Schwarz also holds for the quadrature inner product; only a
    // rounding-sized excess is clamped, anything larger is reported as is.
    let product_bound = size * norm_g * norm_m;
    let raw = size * cross;
    let excess = raw.abs() - product_bound;
    let cond_bias = if excess > 0.0 && excess <= 1e-10 * product_bound {
        raw.clamp(-product_bound, product_bound)
    } else {
        raw
    };
    Ok(ConditionalBias {
        cond_bias,
        product_bound,
        norm_g,
        norm_m,
        std_err: size * se_cross.max(se_g).max(se_m),
    })
}

/// (1/2 − min{P̂(Zᶜ ≤ −|b|), P̂(Zᶜ ≥ |b|)})₊ with per-replication pairs
/// (centered score, conditional bias).
pub fn plm_medbias_bound(z_centered_draws: &[f64], cond_bias_draws: &[f64]) -> Result<f64> {
    if z_centered_draws.len() != cond_bias_draws.len() {
        return Err(Error::InvalidArgument(format!(
            "{} centered scores but {} bias values",
            z_centered_draws.len(),
            cond_bias_draws.len()
        )));
    }
    if z_centered_draws.is_empty() {
        return Err(Error::Empty("centered score draws"));
    }
    let mut le = 0usize;
    let mut ge = 0usize;
    for (&z, &b) in z_centered_draws.iter().zip(cond_bias_draws) {
        le += usize::from(z <= -b.abs());
        ge += usize::from(z >= b.abs());
    }
    let n = z_centered_draws.len() as f64;
    Ok(half_minus_min(le as f64 / n, ge as f64 / n))
}

/// Everything computed for one split of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PlmSplitFit {
    pub d1_indices: Vec<usize>,
    pub d2_indices: Vec<usize>,
    pub m_hat: NuisanceFn,
    pub g_hat: NuisanceFn,
    pub theta_hat: f64,
    pub z_at_theta0: f64,
    pub cond_bias: f64,
    pub product_bound: f64,
    pub norm_g: f64,
    pub norm_m: f64,
}

pub fn fit_split(dgp: &PlmDgp, data: &PlmData, method: &NuisanceMethod, split_seed: u64) -> Result<PlmSplitFit> {
    let (d1_indices, d2_indices) = split_indices(data.n(), split_seed);
    let d1 = data.subset(&d1_indices);
    let d2 = data.subset(&d2_indices);
    let (m_hat, g_hat) = fit_nuisance(dgp, &d1, method)?;
    let est = plm_theta(&d2, &m_hat, &g_hat)?;
    let cb = plm_conditional_bias(dgp, &m_hat, &g_hat, d2.n())?;
    Ok(PlmSplitFit {
        d1_indices,
        d2_indices,
        theta_hat: est.theta_hat,
        z_at_theta0: est.z(dgp.theta0),
        cond_bias: cb.cond_bias,
        product_bound: cb.product_bound,
        norm_g: cb.norm_g,
        norm_m: cb.norm_m,
        m_hat,
        g_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dgp(u: NoiseLaw, v: NoiseLaw) -> PlmDgp {
        PlmDgp {
            theta0: 1.25,
            g0: SmoothFn::Sine { amp: 1.0, freq: 1.0 },
            m0: SmoothFn::Polynomial { coefs: vec![0.5, -1.0, 2.0] },
            u,
            v,
            x: CovariateLaw::Uniform01 { d: 1 },
        }
    }

    const N1: NoiseLaw = NoiseLaw::Normal { sd: 1.0 };

    #[test]
    fn noise_free_model_is_exact() {
        let dgp = dgp(NoiseLaw::Zero, NoiseLaw::Zero);
        let data = simulate_plm(&dgp, 50, &mut ChaCha8Rng::seed_from_u64(1));
        for i in 0..50 {
            let x = data.row(i);
            assert_eq!(data.t[i], dgp.m0.eval(&x));
            assert_eq!(data.y[i], dgp.theta0 * data.t[i] + dgp.g0.eval(&x));
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let dgp = dgp(N1, N1);
        let a = simulate_plm(&dgp, 20, &mut ChaCha8Rng::seed_from_u64(9));
        let b = simulate_plm(&dgp, 20, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_laws_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for law in [N1, NoiseLaw::CenteredExp { scale: 2.0 }, NoiseLaw::Uniform { half_width: 3.0 }] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let se = law.sd() / (n as f64).sqrt();
            assert!(mean.abs() <= 3.0 * se, "{law:?}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn split_is_a_partition() {
        let (d1, d2) = split_indices(11, 4);
        assert_eq!(d1.len(), 5);
        assert_eq!(d2.len(), 6);
        let mut all: Vec<usize> = d1.iter().chain(&d2).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(split_indices(11, 4), (d1, d2));
    }

    #[test]
    fn oracle_nuisances() {
        let dgp = dgp(NoiseLaw::Zero, N1);
        let data = simulate_plm(&dgp, 40, &mut ChaCha8Rng::seed_from_u64(3));
        let (m, g) = fit_nuisance(&dgp, &data, &NuisanceMethod::Oracle).unwrap();
        let cb = plm_conditional_bias(&dgp, &m, &g, 20).unwrap();
        assert_eq!((cb.norm_g, cb.norm_m, cb.cond_bias, cb.product_bound), (0.0, 0.0, 0.0, 0.0));
        let est = plm_theta(&data, &m, &g).unwrap();
        assert!((est.theta_hat - dgp.theta0).abs() < 1e-12);
        assert!(est.z(est.theta_hat).abs() <= 1e-10 * est.scale);
    }

    #[test]
    fn corrupted_nuisances_have_prescribed_norms() {
        for law in [CovariateLaw::Uniform01 { d: 1 }, CovariateLaw::StdNormal { d: 1 }] {
            let mut dgp = dgp(N1, N1);
            dgp.x = law;
            let data = simulate_plm(&dgp, 10, &mut ChaCha8Rng::seed_from_u64(3));
            for seed in [0, 1, 2] {
                let aligned = NuisanceMethod::Corrupted { rate: 0.1, alignment: Alignment::Aligned, seed };
                let (m, g) = fit_nuisance(&dgp, &data, &aligned).unwrap();
                let cb = plm_conditional_bias(&dgp, &m, &g, 100).unwrap();
                assert!((cb.norm_g - 0.1).abs() < 1e-6 && (cb.norm_m - 0.1).abs() < 1e-6);
                assert!((cb.cond_bias - 100.0 * 0.01).abs() < 1e-6);
                assert!((cb.cond_bias - cb.product_bound).abs() < 1e-6);

                let orth = NuisanceMethod::Corrupted { rate: 0.1, alignment: Alignment::Orthogonal, seed };
                let (m, g) = fit_nuisance(&dgp, &data, &orth).unwrap();
                let cb = plm_conditional_bias(&dgp, &m, &g, 100).unwrap();
                assert!(cb.cond_bias.abs() < 1e-9);
                assert!((cb.product_bound - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn theta_matches_grid_root() {
        let dgp = dgp(N1, N1);
        let data = simulate_plm(&dgp, 200, &mut ChaCha8Rng::seed_from_u64(5));
        let (m, g) = fit_nuisance(&dgp, &data, &NuisanceMethod::Series { degree: 3 }).unwrap();
        let est = plm_theta(&data, &m, &g).unwrap();
        // Grid search for the sign change of Z_n, refined three times.
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..4 {
            let step = (hi - lo) / 1000.0;
            let k = (0..1000)
                .find(|&k| {
                    let a = est.z(lo + k as f64 * step);
                    let b = est.z(lo + (k + 1) as f64 * step);
                    a.signum() != b.signum()
                })
                .unwrap();
            let new_lo = lo + k as f64 * step;
            hi = new_lo + step;
            lo = new_lo;
        }
        assert!((est.theta_hat - 0.5 * (lo + hi)).abs() < 1e-8);
    }

    #[test]
    fn zero_slope_is_degenerate() {
        let dgp = dgp(NoiseLaw::Zero, NoiseLaw::Zero);
        let data = simulate_plm(&dgp, 10, &mut ChaCha8Rng::seed_from_u64(1));
        let (m, g) = fit_nuisance(&dgp, &data, &NuisanceMethod::Oracle).unwrap();
        assert!(matches!(plm_theta(&data, &m, &g), Err(Error::Degenerate(_))));
    }

    #[test]
    fn expansion_reproduces_score() {
        let dgp = dgp(NoiseLaw::CenteredExp { scale: 1.0 }, N1);
        let data = simulate_plm(&dgp, 300, &mut ChaCha8Rng::seed_from_u64(6));
        for method in [
            NuisanceMethod::Series { degree: 2 },
            NuisanceMethod::Knn { k: 10 },
            NuisanceMethod::Corrupted { rate: 0.3, alignment: Alignment::Aligned, seed: 1 },
        ] {
            let fit = fit_split(&dgp, &data, &method, 7).unwrap();
            let d2 = data.subset(&fit.d2_indices);
            let e = z_expansion(&d2, &dgp, &fit.m_hat, &fit.g_hat);
            assert!((e.z - e.terms.iter().sum::<f64>()).abs() <= 1e-8 * e.scale);
            assert!((e.z - fit.z_at_theta0).abs() <= 1e-8 * e.scale);
            assert!(fit.cond_bias.abs() <= fit.product_bound);
        }
    }

    #[test]
    fn basis_larger_than_fold_is_rejected() {
        let dgp = dgp(N1, N1);
        let data = simulate_plm(&dgp, 5, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(fit_nuisance(&dgp, &data, &NuisanceMethod::Series { degree: 5 }).is_err());
        assert!(fit_nuisance(&dgp, &data, &NuisanceMethod::Knn { k: 0 }).is_err());
    }

    #[test]
    fn series_error_decreases_with_degree() {
        let dgp = PlmDgp {
            m0: SmoothFn::Sine { amp: 1.0, freq: 0.5 },
            ..dgp(N1, N1)
        };
        let data = simulate_plm(&dgp, 500, &mut ChaCha8Rng::seed_from_u64(8));
        let norms: Vec<f64> = (1..=3)
            .map(|degree| {
                let (m, g) = fit_nuisance(&dgp, &data, &NuisanceMethod::Series { degree }).unwrap();
                plm_conditional_bias(&dgp, &m, &g, 1).unwrap().norm_m
            })
            .collect();
        assert!(norms[1] < norms[0] / 3.0 && norms[2] < norms[0] / 3.0, "{norms:?}");
    }

    #[test]
    fn medbias_bound_edge_cases() {
        let z = [-2.0, -1.0, 1.0, 2.0];
        assert_eq!(plm_medbias_bound(&z, &[0.0; 4]).unwrap(), 0.0);
        assert_eq!(plm_medbias_bound(&z, &[5.0; 4]).unwrap(), 0.5);
        assert!(plm_medbias_bound(&z, &[0.0; 3]).is_err());
    }

    #[test]
    fn multivariate_norms_use_monte_carlo() {
        let law = CovariateLaw::StdNormal { d: 2 };
        let (m, se) = law.expectation(|x| x[0] * x[0] + x[1] * x[1]);
        assert!(se > 0.0);
        assert!((m - 2.0).abs() < 4.0 * se);
    }
}
