//! The median-bias functional and its Monte-Carlo plug-in.
//!
//! For an estimator θ̂ of θ₀ the median bias is
//!
//! ```text
//! (1/2 − min{P(θ̂ ≤ θ₀), P(θ̂ ≥ θ₀)})₊
//! ```
//!
//! It is zero exactly when θ₀ is a median of the law of θ̂. Boundary events
//! θ̂ = θ₀ count toward both probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Probabilities of the three sign events of a real statistic S:
/// `P(S < 0)`, `P(S = 0)` and `P(S > 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignProbabilities {
    pub p_neg: f64,
    pub p_zero: f64,
    pub p_pos: f64,
}

impl SignProbabilities {
    /// Validated constructor for exact (non-empirical) probabilities.
    pub fn new(p_neg: f64, p_zero: f64, p_pos: f64) -> Result<Self> {
        check_probability("p_neg", p_neg)?;
        check_probability("p_zero", p_zero)?;
        check_probability("p_pos", p_pos)?;
        let total = p_neg + p_zero + p_pos;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "sign probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            p_neg,
            p_zero,
            p_pos,
        })
    }

    /// Empirical frequencies from counts. `p_pos` takes the remainder so the
    /// three fields sum to one.
    pub fn from_counts(neg: usize, zero: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Empty("sign counts"));
        }
        if neg + zero > total {
            return Err(Error::InvalidArgument(format!(
                "counts {neg} + {zero} exceed total {total}"
            )));
        }
        let n = total as f64;
        let pos = total - neg - zero;
        Ok(Self {
            p_neg: neg as f64 / n,
            p_zero: zero as f64 / n,
            p_pos: pos as f64 / n,
        })
    }

    /// `P(S ≤ 0)`.
    pub fn p_nonpos(&self) -> f64 {
        self.p_neg + self.p_zero
    }

    /// `P(S ≥ 0)`.
    pub fn p_nonneg(&self) -> f64 {
        self.p_pos + self.p_zero
    }
}

/// Median bias from the two one-sided coverage probabilities.
pub fn med_bias(p_le: f64, p_ge: f64) -> Result<f64> {
    check_probability("p_le", p_le)?;
    check_probability("p_ge", p_ge)?;
    Ok(half_minus_min(p_le, p_ge))
}

/// `(1/2 − min{a, b})₊` without validation; shared by every bound.
pub(crate) fn half_minus_min(a: f64, b: f64) -> f64 {
    (0.5 - a.min(b)).max(0.0)
}

/// Empirical sign frequencies of `statistic_draws`, treating values within
/// `zero_tol` of zero as ties.
pub fn sign_probabilities(statistic_draws: &[f64], zero_tol: f64) -> Result<SignProbabilities> {
    if statistic_draws.is_empty() {
        return Err(Error::Empty("statistic draws"));
    }
    if !(zero_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "zero_tol must be non-negative, got {zero_tol}"
        )));
    }
    let mut neg = 0;
    let mut zero = 0;
    for &s in statistic_draws {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite statistic {s}")));
        }
        if s < -zero_tol {
            neg += 1;
        } else if s <= zero_tol {
            zero += 1;
        }
    }
    SignProbabilities::from_counts(neg, zero, statistic_draws.len())
}

/// Replications of an estimator together with its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDraws {
    pub values: Vec<f64>,
    pub target: f64,
    pub seed: u64,
}

impl EstimatorDraws {
    pub fn new(values: Vec<f64>, target: f64, seed: u64) -> Self {
        Self {
            values,
            target,
            seed,
        }
    }
}

/// Monte-Carlo estimate of the median bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedBiasEstimate {
    pub point: f64,
    pub std_err: f64,
    pub reps: usize,
    pub p_le: f64,
    pub p_ge: f64,
}

impl MedBiasEstimate {
    /// Builds the estimate from the one-sided frequencies over `reps`
    /// replications. The standard error is the binomial one on the
    /// coverage branch that determines the point value.
    pub fn from_frequencies(p_le: f64, p_ge: f64, reps: usize) -> Result<Self> {
        if reps == 0 {
            return Err(Error::Empty("replications"));
        }
        let point = med_bias(p_le, p_ge)?;
        let q = p_le.min(p_ge);
        let std_err = (q * (1.0 - q) / reps as f64).sqrt();
        Ok(Self {
            point,
            std_err,
            reps,
            p_le,
            p_ge,
        })
    }
}

/// Plug-in median bias of a set of estimator draws.
pub fn mc_med_bias(draws: &EstimatorDraws) -> Result<MedBiasEstimate> {
    if draws.values.is_empty() {
        return Err(Error::Empty("estimator draws"));
    }
    if !draws.target.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target {} is not finite",
            draws.target
        )));
    }
    let mut le = 0usize;
    let mut ge = 0usize;
    for &v in &draws.values {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite estimate {v}")));
        }
        if v <= draws.target {
            le += 1;
        }
        if v >= draws.target {
            ge += 1;
        }
    }
    let n = draws.values.len() as f64;
    MedBiasEstimate::from_frequencies(le as f64 / n, ge as f64 / n, draws.values.len())
}

/// Standard error for the difference of two Monte-Carlo quantities computed
/// on independent (or, conservatively, arbitrary) replications.
pub fn joint_std_err(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn med_bias_examples() {
        assert_eq!(med_bias(0.5, 0.5).unwrap(), 0.0);
        assert!((med_bias(0.2, 0.9).unwrap() - 0.3).abs() < 1e-15);
        assert!((med_bias(0.30, 0.40).unwrap() - 0.20).abs() < 1e-15);
        assert_eq!(med_bias(0.6, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn med_bias_rejects_non_probabilities() {
        assert!(med_bias(-0.1, 0.5).is_err());
        assert!(med_bias(0.5, 1.5).is_err());
        assert!(med_bias(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn sign_probability_counting() {
        let sp = sign_probabilities(&[-1.0, -2.0, 3.0], 0.0).unwrap();
        assert_eq!(sp.p_neg, 2.0 / 3.0);
        assert_eq!(sp.p_zero, 0.0);
        assert_eq!(sp.p_pos, 1.0 / 3.0);

        let sp = sign_probabilities(&[0.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!((sp.p_neg, sp.p_zero, sp.p_pos), (0.0, 1.0, 0.0));

        let sp = sign_probabilities(&[-1e-13, 1e-13, 2.0], 1e-12).unwrap();
        assert_eq!(sp.p_zero, 2.0 / 3.0);
    }

    #[test]
    fn sign_probabilities_rejects_empty() {
        assert!(matches!(sign_probabilities(&[], 0.0), Err(Error::Empty(_))));
        assert!(sign_probabilities(&[1.0], -1.0).is_err());
    }

    #[test]
    fn degenerate_estimator_has_no_bias() {
        let est = mc_med_bias(&EstimatorDraws::new(vec![1.5; 100], 1.5, 0)).unwrap();
        assert_eq!(est.point, 0.0);
        assert_eq!(est.p_le, 1.0);
        assert_eq!(est.p_ge, 1.0);
        assert_eq!(est.reps, 100);
    }

    #[test]
    fn one_sided_estimator_is_maximally_biased() {
        let est = mc_med_bias(&EstimatorDraws::new(vec![2.0, 3.0, 4.0], 1.0, 0)).unwrap();
        assert_eq!(est.point, 0.5);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn exact_sign_probabilities_validate_sum() {
        assert!(SignProbabilities::new(0.2, 0.2, 0.2).is_err());
        assert!(SignProbabilities::new(0.25, 0.5, 0.25).is_ok());
    }

    proptest! {
        #[test]
        fn swap_symmetry(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(med_bias(a, b).unwrap(), med_bias(b, a).unwrap());
        }

        #[test]
        fn monotone_in_coverage(a in 0.0f64..=1.0, b in 0.0f64..=1.0, bump in 0.0f64..=1.0) {
            let lo = med_bias(a, b).unwrap();
            let hi = med_bias((a + bump).min(1.0), (b + bump).min(1.0)).unwrap();
            prop_assert!(hi <= lo);
        }

        #[test]
        fn empirical_sign_frequencies_sum_to_one(xs in prop::collection::vec(-5i32..5, 1..200)) {
            let draws: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let sp = sign_probabilities(&draws, 0.0).unwrap();
            prop_assert!((sp.p_neg + sp.p_zero + sp.p_pos - 1.0).abs() < 1e-15);
            prop_assert!(sp.p_pos >= 0.0);
        }

        #[test]
        fn invariant_under_monotone_transforms(
            xs in prop::collection::vec(-3.0f64..3.0, 1..100),
            target in -3.0f64..3.0,
        ) {
            let base = mc_med_bias(&EstimatorDraws::new(xs.clone(), target, 0)).unwrap();
            let f = |v: f64| v.exp() * 2.0 + 1.0;
            let moved: Vec<f64> = xs.iter().map(|&v| f(v)).collect();
            let other = mc_med_bias(&EstimatorDraws::new(moved, f(target), 0)).unwrap();
            prop_assert_eq!(base.point, other.point);
        }

        #[test]
        fn weak_coverages_overlap(xs in prop::collection::vec(-3.0f64..3.0, 1..100), target in -3.0f64..3.0) {
            let est = mc_med_bias(&EstimatorDraws::new(xs, target, 0)).unwrap();
            prop_assert!(est.p_le + est.p_ge >= 1.0 - 1e-12);
            prop_assert!(est.point >= 0.0 && est.point <= 0.5);
        }
    }
}
