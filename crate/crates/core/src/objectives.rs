//! Univariate location objectives θ ↦ M_n(θ) = Σᵢ ρ(Xᵢ, θ) and their
//! one-sided derivatives.
//!
//! Every convex family reports the subgradient interval `[g_left, g_right]`
//! of M_n at θ; away from kinks the two ends coincide. The Tukey biweight is
//! included as a non-convex comparison objective (convex core, flat tails).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Parametric location family with a closed-form log-density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LocationFamily {
    NormalLocation { sigma: f64 },
    LogisticLocation { scale: f64 },
}

impl LocationFamily {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            LocationFamily::NormalLocation { sigma } => sigma,
            LocationFamily::LogisticLocation { scale } => scale,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "location family scale must be positive, got {v}"
            )))
        }
    }

    /// log p_θ(x).
    pub fn log_density(&self, x: f64, theta: f64) -> f64 {
        match *self {
            LocationFamily::NormalLocation { sigma } => {
                let z = (x - theta) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            LocationFamily::LogisticLocation { scale } => {
                // log p = -z - 2·log(1 + e^{-z}) - log s, symmetric in z.
                let z = ((x - theta) / scale).abs();
                -z - 2.0 * (-z).exp().ln_1p() - scale.ln()
            }
        }
    }

    /// Likelihood score u_θ(x) = ∂/∂θ log p_θ(x).
    pub fn score(&self, x: f64, theta: f64) -> f64 {
        match *self {
            LocationFamily::NormalLocation { sigma } => (x - theta) / (sigma * sigma),
            LocationFamily::LogisticLocation { scale } => {
                ((x - theta) / (2.0 * scale)).tanh() / scale
            }
        }
    }

    /// E_{θ}[log p_{θ+ε}(X) − log p_{θ}(X)] for X drawn from the family
    /// itself, i.e. minus the Kullback–Leibler divergence of a shift by ε.
    pub fn expected_llr(&self, eps: f64) -> f64 {
        match *self {
            LocationFamily::NormalLocation { sigma } => -eps * eps / (2.0 * sigma * sigma),
            LocationFamily::LogisticLocation { scale } => {
                let rule = GaussLegendre::new(32);
                let f = |x: f64| {
                    let ld = self.log_density(x, 0.0);
                    ld.exp() * (self.log_density(x, eps) - ld)
                };
                let reach = 60.0 * scale + eps.abs();
                rule.integrate_composite(f, -reach, reach, 120)
            }
        }
    }
}

/// Which loss ρ(x, θ) defines the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// |x − θ|; minimized by the sample median.
    AbsDev,
    /// Check loss (τ − 1{x ≤ θ})(x − θ).
    Quantile { tau: f64 },
    /// |x − θ|^p with p ≥ 1.
    Lp { p: f64 },
    /// −log p_θ(x).
    NegLoglik(LocationFamily),
    /// Tukey biweight with tuning constant c. Not convex.
    Biweight { c: f64 },
}

impl ObjectiveKind {
    pub fn is_convex(&self) -> bool {
        !matches!(self, ObjectiveKind::Biweight { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ObjectiveKind::AbsDev => Ok(()),
            ObjectiveKind::Quantile { tau } if tau > 0.0 && tau < 1.0 => Ok(()),
            ObjectiveKind::Quantile { tau } => Err(Error::InvalidArgument(format!(
                "quantile level must lie in (0, 1), got {tau}"
            ))),
            ObjectiveKind::Lp { p } if p >= 1.0 && p.is_finite() => Ok(()),
            ObjectiveKind::Lp { p } => Err(Error::InvalidArgument(format!(
                "L_p objective needs p >= 1 for convexity, got {p}"
            ))),
            ObjectiveKind::NegLoglik(family) => family.validate(),
            ObjectiveKind::Biweight { c } if c > 0.0 && c.is_finite() => Ok(()),
            ObjectiveKind::Biweight { c } => Err(Error::InvalidArgument(format!(
                "biweight tuning constant must be positive, got {c}"
            ))),
        }
    }

    /// Per-observation loss.
    pub fn loss(&self, x: f64, theta: f64) -> f64 {
        let r = x - theta;
        match *self {
            ObjectiveKind::AbsDev => r.abs(),
            ObjectiveKind::Quantile { tau } => {
                if x <= theta {
                    (tau - 1.0) * r
                } else {
                    tau * r
                }
            }
            ObjectiveKind::Lp { p } => r.abs().powf(p),
            ObjectiveKind::NegLoglik(family) => -family.log_density(x, theta),
            ObjectiveKind::Biweight { c } => {
                let cap = c * c / 6.0;
                if r.abs() >= c {
                    cap
                } else {
                    let u = 1.0 - (r / c).powi(2);
                    cap * (1.0 - u * u * u)
                }
            }
        }
    }

    /// Left and right derivatives of the per-observation loss in θ.
    pub fn slope(&self, x: f64, theta: f64) -> (f64, f64) {
        match *self {
            ObjectiveKind::AbsDev => {
                if x < theta {
                    (1.0, 1.0)
                } else if x > theta {
                    (-1.0, -1.0)
                } else {
                    (-1.0, 1.0)
                }
            }
            ObjectiveKind::Quantile { tau } => {
                if x < theta {
                    (1.0 - tau, 1.0 - tau)
                } else if x > theta {
                    (-tau, -tau)
                } else {
                    (-tau, 1.0 - tau)
                }
            }
            ObjectiveKind::Lp { p } => {
                let r = theta - x;
                if r == 0.0 {
                    if p == 1.0 {
                        (-1.0, 1.0)
                    } else {
                        (0.0, 0.0)
                    }
                } else {
                    let g = p * r.abs().powf(p - 1.0) * r.signum();
                    (g, g)
                }
            }
            ObjectiveKind::NegLoglik(family) => {
                let g = -family.score(x, theta);
                (g, g)
            }
            ObjectiveKind::Biweight { c } => {
                let r = x - theta;
                let g = if r.abs() >= c {
                    0.0
                } else {
                    let u = 1.0 - (r / c).powi(2);
                    -r * u * u
                };
                (g, g)
            }
        }
    }
}

/// Subgradient interval of M_n at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subgradient {
    pub left: f64,
    pub right: f64,
}

impl Subgradient {
    pub fn contains_zero(&self, slack: f64) -> bool {
        self.left - slack <= 0.0 && 0.0 <= self.right + slack
    }
}

/// An objective θ ↦ Σᵢ ρ(Xᵢ, θ) over a fixed sample. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveFamily {
    kind: ObjectiveKind,
    data: Vec<f64>,
}

impl ObjectiveFamily {
    pub fn new(kind: ObjectiveKind, data: Vec<f64>) -> Result<Self> {
        kind.validate()?;
        if data.is_empty() {
            return Err(Error::Empty("objective data"));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite observation {x}")));
        }
        Ok(Self { kind, data })
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_convex(&self) -> bool {
        self.kind.is_convex()
    }

    /// Tolerance anchor `1 + max|Xᵢ| + |θ|`.
    pub fn scale(&self, theta: f64) -> f64 {
        1.0 + self.data.iter().fold(0.0f64, |m, x| m.max(x.abs())) + theta.abs()
    }

    /// M_n(θ).
    pub fn eval(&self, theta: f64) -> f64 {
        self.data.iter().map(|&x| self.kind.loss(x, theta)).sum()
    }

    /// Subgradient interval of M_n at θ.
    pub fn dot_m(&self, theta: f64) -> Subgradient {
        let (left, right) = self
            .data
            .iter()
            .map(|&x| self.kind.slope(x, theta))
            .fold((0.0, 0.0), |(l, r), (a, b)| (l + a, r + b));
        Subgradient { left, right }
    }

    /// Whether the subgradient is nondecreasing on a grid of `points`
    /// equally spaced probes covering [lo, hi].
    pub fn is_convex_on(&self, lo: f64, hi: f64, points: usize) -> bool {
        if hi <= lo {
            return true;
        }
        let points = points.max(2);
        let step = (hi - lo) / (points - 1) as f64;
        let slack = 1e-12 * self.scale(lo.abs().max(hi.abs()));
        let mut prev_right = f64::NEG_INFINITY;
        for k in 0..points {
            let theta = lo + k as f64 * step;
            let g = self.dot_m(theta);
            if g.left > g.right + slack || g.left + slack < prev_right {
                return false;
            }
            prev_right = g.right;
        }
        true
    }
}

/// Σᵢ log p_{θ₀+ε}(Xᵢ) − log p_{θ₀}(Xᵢ).
pub fn loglik_ratio_sum(family: &LocationFamily, data: &[f64], theta0: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    data.iter()
        .map(|&x| family.log_density(x, theta0 + eps) - family.log_density(x, theta0))
        .sum()
}
