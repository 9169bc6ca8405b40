//! Upper bounds on the median bias of univariate M/Z-estimators.
//!
//! All bounds take empirical (or exact) probabilities of sign events of the
//! estimating function at the target and return a number in [0, 1/2]:
//!
//! - [`convex_bound`]: strict-sign probabilities of Ṁ_n(θ₀), convex M_n.
//! - [`z_exact_medbias`]: weak-sign probabilities; an equality for smooth
//!   Z-estimators whose Taylor denominator does not vanish.
//! - [`nondiff_bound`]: objective comparisons M_n(θ₀) < M_n(θ₀ ± ε) over a
//!   decreasing ε grid, for objectives without a usable derivative.
//! - [`nonconvex_bound`]: the convex bound inflated by the probability that
//!   M_n is not convex near θ₀ or θ̂ is far from θ₀.
//! - [`clt_asymptotic_bound`]: a Berry–Esseen estimate; not certified.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{check_probability, Error, Result};
use crate::median_bias::{half_minus_min, joint_std_err, MedBiasEstimate, SignProbabilities};
use crate::objectives::{loglik_ratio_sum, LocationFamily, ObjectiveFamily};

/// Universal Berry–Esseen constant used by [`clt_asymptotic_bound`]
/// (Shevtsova's 0.56 for independent summands).
pub const BERRY_ESSEEN_CONSTANT: f64 = 0.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    ConvexThm1,
    NondiffEps,
    NonconvexDelta,
    ZExact,
    MleLlr,
    CltAsymptotic,
    Proposition,
    PlmSplit,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::ConvexThm1 => "convex_thm1",
            BoundKind::NondiffEps => "nondiff_eps",
            BoundKind::NonconvexDelta => "nonconvex_delta",
            BoundKind::ZExact => "z_exact",
            BoundKind::MleLlr => "mle_llr",
            BoundKind::CltAsymptotic => "clt_asymptotic",
            BoundKind::Proposition => "proposition",
            BoundKind::PlmSplit => "plm_split",
        }
    }

    /// `ZExact` is an equality target; all other kinds are upper bounds.
    pub fn is_equality(&self) -> bool {
        matches!(self, BoundKind::ZExact)
    }
}

/// Comparison of a Monte-Carlo median bias with one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: MedBiasEstimate,
    /// Bound clamped to [0, 1/2].
    pub rhs: f64,
    /// Bound before clamping.
    pub rhs_raw: f64,
    pub rhs_std_err: f64,
    pub kind: BoundKind,
    /// False for bounds that rest on an asymptotic approximation.
    pub certified: bool,
    /// Grid values and profiles (ε, δ, η) used to compute the bound.
    pub params: BTreeMap<String, Vec<f64>>,
}

impl BoundReport {
    pub fn new(kind: BoundKind, lhs: MedBiasEstimate, rhs_raw: f64, rhs_std_err: f64) -> Self {
        Self {
            lhs,
            rhs: rhs_raw.clamp(0.0, 0.5),
            rhs_raw,
            rhs_std_err,
            kind,
            certified: kind != BoundKind::CltAsymptotic,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, values: Vec<f64>) -> Self {
        self.params.insert(key.to_string(), values);
        self
    }

    pub fn joint_std_err(&self) -> f64 {
        joint_std_err(self.lhs.std_err, self.rhs_std_err)
    }

    /// For upper bounds: lhs ≤ rhs + z·se. For the equality kind:
    /// |lhs − rhs| ≤ z·se.
    pub fn holds_within(&self, z: f64) -> bool {
        let slack = z * self.joint_std_err();
        if self.kind.is_equality() {
            (self.lhs.point - self.rhs).abs() <= slack
        } else {
            self.lhs.point <= self.rhs + slack
        }
    }
}

/// Binomial standard error of an empirical frequency.
pub fn frequency_std_err(q: f64, reps: usize) -> f64 {
    if reps == 0 {
        0.0
    } else {
        (q * (1.0 - q) / reps as f64).sqrt()
    }
}

/// Bound from the strict-sign probabilities of Ṁ_n(θ₀) for convex M_n.
/// An atom at zero is not redistributed and simply weakens the bound.
pub fn convex_bound(sp: &SignProbabilities) -> f64 {
    half_minus_min(sp.p_neg, sp.p_pos)
}

/// Exact median bias of a smooth Z-estimator from `P(Ṁ_n(θ₀) ≥ 0)` and
/// `P(Ṁ_n(θ₀) ≤ 0)`.
pub fn z_exact_medbias(p_weak_ge: f64, p_weak_le: f64) -> Result<f64> {
    check_probability("P(score >= 0)", p_weak_ge)?;
    check_probability("P(score <= 0)", p_weak_le)?;
    Ok(half_minus_min(p_weak_ge, p_weak_le))
}

/// One replication of the objective at θ₀ and at θ₀ ± ε for each grid ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondiffDraw {
    pub at_target: f64,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl NondiffDraw {
    pub fn from_objective(obj: &ObjectiveFamily, theta0: f64, eps_grid: &[f64]) -> Self {
        Self {
            at_target: obj.eval(theta0),
            plus: eps_grid.iter().map(|e| obj.eval(theta0 + e)).collect(),
            minus: eps_grid.iter().map(|e| obj.eval(theta0 - e)).collect(),
        }
    }
}

/// ε-profile of the bound for non-differentiable objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondiffProfile {
    pub eps: Vec<f64>,
    /// P̂(M_n(θ₀) < M_n(θ₀ + ε)).
    pub p_plus: Vec<f64>,
    /// P̂(M_n(θ₀) < M_n(θ₀ − ε)).
    pub p_minus: Vec<f64>,
    pub bound: Vec<f64>,
    /// Standard error of each bound value.
    pub std_err: Vec<f64>,
    /// The bound at the finest ε; the ε ↓ 0 limit is not extrapolated.
    pub value: f64,
    pub reps: usize,
}

pub fn nondiff_bound(eps_grid: &[f64], draws: &[NondiffDraw]) -> Result<NondiffProfile> {
    if eps_grid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ε grid needs at least 2 points, got {}",
            eps_grid.len()
        )));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite()))
        || eps_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument(
            "ε grid must be positive and strictly decreasing".into(),
        ));
    }
    if draws.is_empty() {
        return Err(Error::Empty("objective draws"));
    }
    let k = eps_grid.len();
    let mut plus = vec![0usize; k];
    let mut minus = vec![0usize; k];
    for d in draws {
        if d.plus.len() != k || d.minus.len() != k {
            return Err(Error::InvalidArgument(format!(
                "draw carries {}/{} comparisons for a grid of {k}",
                d.plus.len(),
                d.minus.len()
            )));
        }
        for j in 0..k {
            plus[j] += usize::from(d.at_target < d.plus[j]);
            minus[j] += usize::from(d.at_target < d.minus[j]);
        }
    }
    let reps = draws.len();
    let n = reps as f64;
    let p_plus: Vec<f64> = plus.iter().map(|&c| c as f64 / n).collect();
    let p_minus: Vec<f64> = minus.iter().map(|&c| c as f64 / n).collect();
    let bound: Vec<f64> = p_plus.iter().zip(&p_minus).map(|(&a, &b)| half_minus_min(a, b)).collect();
    let std_err = p_plus
        .iter()
        .zip(&p_minus)
        .map(|(&a, &b)| frequency_std_err(a.min(b), reps))
        .collect();
    Ok(NondiffProfile {
        eps: eps_grid.to_vec(),
        value: bound[k - 1],
        p_plus,
        p_minus,
        bound,
        std_err,
        reps,
    })
}

/// Empirical log-likelihood-ratio lower bounds for the MLE, together with
/// the probabilities they bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlrBounds {
    /// P̂(Σ centered LLR(+ε) ≤ 0).
    pub lower_plus: f64,
    /// P̂(Σ centered LLR(−ε) ≤ 0).
    pub lower_minus: f64,
    /// P̂(M_n(θ₀) < M_n(θ₀ + ε)), measured directly.
    pub direct_plus: f64,
    /// P̂(M_n(θ₀) < M_n(θ₀ − ε)), measured directly.
    pub direct_minus: f64,
    pub reps: usize,
}

/// Lower bounds on P(M_n(θ₀) < M_n(θ₀ ± ε)) for the negative log-likelihood
/// of `family`. `expected_llr(e)` must return the per-observation
/// expectation E[log p_{θ₀+e}(X)/p_{θ₀}(X)] under the data law.
pub fn mle_llr_lower_bounds<E>(
    family: &LocationFamily,
    data_draws: &[Vec<f64>],
    theta0: f64,
    eps: f64,
    expected_llr: E,
) -> Result<LlrBounds>
where
    E: Fn(f64) -> f64,
{
    if data_draws.is_empty() {
        return Err(Error::Empty("data draws"));
    }
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::Identifiability(0.0));
    }
    let mean_plus = expected_llr(eps);
    let mean_minus = expected_llr(-eps);
    for m in [mean_plus, mean_minus] {
        if !(m < 0.0) {
            return Err(Error::Identifiability(m));
        }
    }
    let mut counts = [0usize; 4];
    for data in data_draws {
        let n = data.len() as f64;
        let lp = loglik_ratio_sum(family, data, theta0, eps);
        let lm = loglik_ratio_sum(family, data, theta0, -eps);
        counts[0] += usize::from(lp - n * mean_plus <= 0.0);
        counts[1] += usize::from(lm - n * mean_minus <= 0.0);
        counts[2] += usize::from(lp < 0.0);
        counts[3] += usize::from(lm < 0.0);
    }
    let reps = data_draws.len();
    let f = |c: usize| c as f64 / reps as f64;
    Ok(LlrBounds {
        lower_plus: f(counts[0]),
        lower_minus: f(counts[1]),
        direct_plus: f(counts[2]),
        direct_minus: f(counts[3]),
        reps,
    })
}

/// One δ grid point: η₁(δ) = 1 − P(M_n convex on [θ₀−δ, θ₀+δ]) and
/// η₂(δ) = P(|θ̂ − θ₀| > δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub delta: f64,
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconvexBound {
    /// convex_bound + min_δ(η₁ + η₂), unclamped.
    pub raw: f64,
    /// `raw` clamped to [0, 1/2].
    pub clamped: f64,
    pub best_delta: f64,
    /// convex_bound + η₁(δ) + η₂(δ) at every grid point.
    pub per_delta: Vec<f64>,
}

pub fn nonconvex_bound(sp: &SignProbabilities, eta_profile: &[EtaPoint]) -> Result<NonconvexBound> {
    if eta_profile.is_empty() {
        return Err(Error::Empty("δ grid"));
    }
    for p in eta_profile {
        check_probability("eta1", p.eta1)?;
        check_probability("eta2", p.eta2)?;
        if !(p.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("δ must be non-negative, got {}", p.delta)));
        }
    }
    let base = convex_bound(sp);
    let mut best = 0;
    for (j, p) in eta_profile.iter().enumerate() {
        let q = &eta_profile[best];
        if p.eta1 + p.eta2 < q.eta1 + q.eta2 {
            best = j;
        }
    }
    let penalty = eta_profile[best].eta1 + eta_profile[best].eta2;
    let raw = base + penalty;
    Ok(NonconvexBound {
        raw,
        clamped: raw.clamp(0.0, 0.5),
        best_delta: eta_profile[best].delta,
        per_delta: eta_profile.iter().map(|p| base + p.eta1 + p.eta2).collect(),
    })
}

/// Per-replication indicators (not convex on the δ-window, |θ̂−θ₀| > δ)
/// for every δ in `deltas`.
pub fn eta_indicators(
    obj: &ObjectiveFamily,
    estimate: f64,
    theta0: f64,
    deltas: &[f64],
    grid_points: usize,
) -> Vec<(bool, bool)> {
    deltas
        .iter()
        .map(|&d| {
            let nonconvex = !obj.is_convex_on(theta0 - d, theta0 + d, grid_points);
            (nonconvex, (estimate - theta0).abs() > d)
        })
        .collect()
}

/// Aggregates [`eta_indicators`] over replications.
pub fn eta_profile(deltas: &[f64], indicators: &[Vec<(bool, bool)>]) -> Result<Vec<EtaPoint>> {
    if indicators.is_empty() {
        return Err(Error::Empty("η indicators"));
    }
    let reps = indicators.len() as f64;
    deltas
        .iter()
        .enumerate()
        .map(|(j, &delta)| {
            let mut a = 0usize;
            let mut b = 0usize;
            for row in indicators {
                let (nc, far) = *row.get(j).ok_or_else(|| {
                    Error::InvalidArgument("indicator row shorter than δ grid".into())
                })?;
                a += usize::from(nc);
                b += usize::from(far);
            }
            Ok(EtaPoint {
                delta,
                eta1: a as f64 / reps,
                eta2: b as f64 / reps,
            })
        })
        .collect()
}

/// Moments of one summand of the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummandMoments {
    pub mean: f64,
    pub variance: f64,
    pub abs_third: f64,
}

/// Berry–Esseen estimate `C·E|ξ|³/(σ³√n) + atom/2` of the gap
/// 1/2 − min strict-sign probability of a sum of `n` i.i.d. summands.
pub fn clt_asymptotic_bound(moments: &SummandMoments, n: usize, constant: f64, atom: f64) -> Result<f64> {
    if !(moments.variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "summand variance must be positive, got {}",
            moments.variance
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("number of summands must be positive".into()));
    }
    let sd = moments.variance.sqrt();
    if moments.mean.abs() > 1e-12 * (1.0 + sd) {
        return Err(Error::InvalidArgument(format!(
            "summands must be centered, mean is {}",
            moments.mean
        )));
    }
    if !moments.abs_third.is_finite() || moments.abs_third < 0.0 {
        return Err(Error::InvalidArgument("third absolute moment must be finite".into()));
    }
    check_probability("atom", atom)?;
    let lyapunov = moments.abs_third / (sd * sd * sd * (n as f64).sqrt());
    Ok(constant * lyapunov + 0.5 * atom)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P(Binom(n, 1/2) = k), computed by multiplicative recurrence.
    fn binom_half_pmf(n: u64, k: u64) -> f64 {
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * 0.5f64.powi(n as i32)
    }

    #[test]
    fn convex_bound_examples() {
        assert_eq!(convex_bound(&SignProbabilities::new(0.5, 0.0, 0.5).unwrap()), 0.0);
        let b = convex_bound(&SignProbabilities::new(0.2, 0.1, 0.7).unwrap());
        assert!((b - 0.3).abs() < 1e-15);
        assert!((convex_bound(&SignProbabilities::new(0.6, 0.0, 0.4).unwrap()) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn even_n_median_atom_weakens_bound() {
        // Ṁ_n(θ₀) = 2B − 4 with B ~ Binom(4, 1/2).
        let p_neg: f64 = (0..=1).map(|k| binom_half_pmf(4, k)).sum();
        let p_zero = binom_half_pmf(4, 2);
        let p_pos: f64 = (3..=4).map(|k| binom_half_pmf(4, k)).sum();
        assert_eq!(p_neg, 5.0 / 16.0);
        assert_eq!(p_zero, 6.0 / 16.0);
        let b = convex_bound(&SignProbabilities::new(p_neg, p_zero, p_pos).unwrap());
        assert!((b - 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn z_exact_examples() {
        assert_eq!(z_exact_medbias(0.5, 0.5).unwrap(), 0.0);
        assert!(z_exact_medbias(1.2, 0.5).is_err());
    }

    #[test]
    fn nondiff_constant_objective_is_vacuous() {
        let draws: Vec<NondiffDraw> = (0..10)
            .map(|_| NondiffDraw {
                at_target: 1.0,
                plus: vec![1.0, 1.0],
                minus: vec![1.0, 1.0],
            })
            .collect();
        let p = nondiff_bound(&[1.0, 0.5], &draws).unwrap();
        assert_eq!(p.value, 0.5);
        assert_eq!(p.p_plus, vec![0.0, 0.0]);
    }

    #[test]
    fn nondiff_grid_validation() {
        let d = NondiffDraw {
            at_target: 0.0,
            plus: vec![1.0],
            minus: vec![1.0],
        };
        assert!(nondiff_bound(&[1.0], &[d.clone()]).is_err());
        assert!(nondiff_bound(&[0.5, 1.0], &[d.clone()]).is_err());
        assert!(nondiff_bound(&[1.0, 0.5], &[d]).is_err());
    }

    #[test]
    fn llr_rejects_zero_eps() {
        let family = LocationFamily::NormalLocation { sigma: 1.0 };
        let draws = vec![vec![0.1, -0.2]];
        let r = mle_llr_lower_bounds(&family, &draws, 0.0, 0.0, |e| family.expected_llr(e));
        assert!(matches!(r, Err(Error::Identifiability(_))));
        let r = mle_llr_lower_bounds(&family, &draws, 0.0, 0.5, |_| 0.1);
        assert!(matches!(r, Err(Error::Identifiability(_))));
    }

    #[test]
    fn llr_lower_bound_never_exceeds_direct_probability() {
        let family = LocationFamily::LogisticLocation { scale: 1.0 };
        let draws: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..7).map(|j| ((i * 7 + j) as f64 * 0.37).sin() * 2.0).collect())
            .collect();
        let b = mle_llr_lower_bounds(&family, &draws, 0.0, 0.3, |e| family.expected_llr(e)).unwrap();
        assert!(b.lower_plus <= b.direct_plus);
        assert!(b.lower_minus <= b.direct_minus);
    }

    #[test]
    fn nonconvex_reductions() {
        let sp = SignProbabilities::new(0.3, 0.1, 0.6).unwrap();
        let zero = [EtaPoint { delta: f64::INFINITY, eta1: 0.0, eta2: 0.0 }];
        let b = nonconvex_bound(&sp, &zero).unwrap();
        assert_eq!(b.raw.to_bits(), convex_bound(&sp).to_bits());
        assert_eq!(b.clamped.to_bits(), convex_bound(&sp).to_bits());

        let ones = [
            EtaPoint { delta: 0.1, eta1: 1.0, eta2: 1.0 },
            EtaPoint { delta: 1.0, eta1: 1.0, eta2: 1.0 },
        ];
        assert_eq!(nonconvex_bound(&sp, &ones).unwrap().clamped, 0.5);

        let mixed = [
            EtaPoint { delta: 0.1, eta1: 0.0, eta2: 0.4 },
            EtaPoint { delta: 1.0, eta1: 0.05, eta2: 0.01 },
        ];
        let b = nonconvex_bound(&sp, &mixed).unwrap();
        assert_eq!(b.best_delta, 1.0);
        assert!((b.raw - (0.2 + 0.06)).abs() < 1e-15);
        assert!(nonconvex_bound(&sp, &[]).is_err());
        assert!(nonconvex_bound(&sp, &[EtaPoint { delta: 1.0, eta1: 1.5, eta2: 0.0 }]).is_err());
    }

    #[test]
    fn berry_esseen_examples() {
        let pm1 = SummandMoments { mean: 0.0, variance: 1.0, abs_third: 1.0 };
        let b = clt_asymptotic_bound(&pm1, 100, BERRY_ESSEEN_CONSTANT, 0.0).unwrap();
        assert!((b - 0.056).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for n in [1, 10, 100, 1000, 100_000] {
            let b = clt_asymptotic_bound(&pm1, n, BERRY_ESSEEN_CONSTANT, 0.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 0.002);
        let bad = SummandMoments { mean: 0.0, variance: 0.0, abs_third: 1.0 };
        assert!(clt_asymptotic_bound(&bad, 10, BERRY_ESSEEN_CONSTANT, 0.0).is_err());
    }

    #[test]
    fn berry_esseen_dominates_median_score_gap() {
        // Median score at n = 100: Ṁ = 2B − 100, B ~ Binom(100, 1/2).
        let p_neg: f64 = (0..50).map(|k| binom_half_pmf(100, k)).sum();
        let gap = 0.5 - p_neg;
        assert!((gap - 0.5 * binom_half_pmf(100, 50)).abs() < 1e-12);
        let pm1 = SummandMoments { mean: 0.0, variance: 1.0, abs_third: 1.0 };
        let b = clt_asymptotic_bound(&pm1, 100, BERRY_ESSEEN_CONSTANT, 0.0).unwrap();
        assert!(b >= gap, "{b} < {gap}");
    }

    #[test]
    fn report_tolerance_logic() {
        let lhs = MedBiasEstimate::from_frequencies(0.45, 0.56, 10_000).unwrap();
        let r = BoundReport::new(BoundKind::ConvexThm1, lhs, 0.04, 0.0);
        assert!(r.holds_within(3.0));
        let r = BoundReport::new(BoundKind::ConvexThm1, lhs, 0.0, 0.0);
        assert!(!r.holds_within(3.0));
        let r = BoundReport::new(BoundKind::ZExact, lhs, 0.05, 0.0);
        assert!(r.holds_within(3.0));
        assert!(BoundReport::new(BoundKind::CltAsymptotic, lhs, 0.9, 0.0).rhs == 0.5);
    }
}
