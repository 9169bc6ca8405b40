//! Data-generating processes addressable by name from experiment configs.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::LocationFamily;
use crate::partialling::RegressionData;

/// I.i.d. laws for univariate location experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum UnivariateLaw {
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    Laplace {
        #[serde(default = "one")]
        scale: f64,
    },
    Logistic {
        #[serde(default)]
        location: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Uniform {
        #[serde(default = "one")]
        half_width: f64,
    },
    /// scale·(Exp(1) − 1): mean zero, median scale·(ln 2 − 1).
    CenteredExp {
        #[serde(default = "one")]
        scale: f64,
    },
    /// N(0,1) with probability 1 − eps, N(0, scale²) otherwise.
    Contaminated { eps: f64, scale: f64 },
    StudentT { df: f64 },
}

fn one() -> f64 {
    1.0
}

impl UnivariateLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            UnivariateLaw::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            UnivariateLaw::Laplace { scale }
            | UnivariateLaw::Uniform { half_width: scale }
            | UnivariateLaw::CenteredExp { scale } => scale > 0.0 && scale.is_finite(),
            UnivariateLaw::Logistic { location, scale } => location.is_finite() && scale > 0.0,
            UnivariateLaw::Contaminated { eps, scale } => (0.0..=1.0).contains(&eps) && scale > 0.0,
            UnivariateLaw::StudentT { df } => df > 0.0 && df.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid law parameters: {self:?}")))
        }
    }

    /// The data law matching a location model at θ.
    pub fn from_family(family: &LocationFamily, theta: f64) -> Self {
        match *family {
            LocationFamily::NormalLocation { sigma } => UnivariateLaw::Normal { mean: theta, sd: sigma },
            LocationFamily::LogisticLocation { scale } => UnivariateLaw::Logistic { location: theta, scale },
        }
    }

    /// Median of the law.
    pub fn median(&self) -> f64 {
        match *self {
            UnivariateLaw::Normal { mean, .. } => mean,
            UnivariateLaw::Logistic { location, .. } => location,
            UnivariateLaw::CenteredExp { scale } => scale * (std::f64::consts::LN_2 - 1.0),
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            UnivariateLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            UnivariateLaw::Laplace { scale } => {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            }
            UnivariateLaw::Logistic { location, scale } => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                location + scale * (u / (1.0 - u)).ln()
            }
            UnivariateLaw::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            UnivariateLaw::CenteredExp { scale } => scale * (rng.sample::<f64, _>(Exp1) - 1.0),
            UnivariateLaw::Contaminated { eps, scale } => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < eps {
                    scale * z
                } else {
                    z
                }
            }
            UnivariateLaw::StudentT { df } => StudentT::new(df).expect("validated df").sample(rng),
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Covariate law for the linear partialling design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "covariates", rename_all = "snake_case")]
pub enum CovariateDesign {
    /// Xᵢ ~ N(0, I_d).
    Gaussian,
    /// Xᵢ = sᵢZᵢ with Zᵢ ~ N(0, I_d) and sᵢ drawn from `scales` with
    /// probabilities `probs`.
    ScaleMixture { scales: Vec<f64>, probs: Vec<f64> },
}

/// Linear design with nuisance covariates:
///
/// ```text
/// Tᵢ = β_Tᵀ Xᵢ + Vᵢ,   Yᵢ = θ₀Tᵢ + γᵀXᵢ + Uᵢ,   Uᵢ = κ·wᵢ·Vᵢ + Wᵢ,
/// ```
///
/// with Vᵢ, Wᵢ ~ N(0, 1) independent of Xᵢ, and wᵢ a mean-zero function of
/// the covariate scale (sᵢ²/E[s²] − 1 for a scale mixture, ‖Xᵢ‖²/d − 1 for
/// the Gaussian design). E[XU] = 0 and E[VU] = 0, so β_T and β_Y = θ₀β_T + γ
/// are the population projection coefficients, while the coupling κ makes
/// the leverage-weighted cross moment Σ Pᵢᵢ UᵢVᵢ biased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDesign {
    #[serde(flatten)]
    pub covariates: CovariateDesign,
    #[serde(default)]
    pub theta0: f64,
    /// Every coordinate of β_T equals `beta_t / √d`.
    #[serde(default = "half")]
    pub beta_t: f64,
    /// Every coordinate of γ equals `gamma / √d`.
    #[serde(default = "half")]
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
}

fn half() -> f64 {
    0.5
}

/// A design instance at fixed (n, d) with its population coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSample {
    pub data: RegressionData,
    pub beta_t: Vec<f64>,
    pub beta_y: Vec<f64>,
    pub theta0: f64,
}

impl LinearDesign {
    pub fn validate(&self) -> Result<()> {
        if let CovariateDesign::ScaleMixture { scales, probs } = &self.covariates {
            if scales.is_empty() || scales.len() != probs.len() {
                return Err(Error::Config("scale mixture needs matching non-empty scales/probs".into()));
            }
            if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) || probs.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Config("scale mixture needs positive scales and non-negative probs".into()));
            }
            if ((probs.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
                return Err(Error::Config("scale mixture probabilities must sum to 1".into()));
            }
        }
        if ![self.theta0, self.beta_t, self.gamma, self.kappa].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("design coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let root = (d.max(1) as f64).sqrt();
        let bt = vec![self.beta_t / root; d];
        let by = vec![self.theta0 * self.beta_t / root + self.gamma / root; d];
        (bt, by)
    }

    fn second_moment_of_scale(&self) -> f64 {
        match &self.covariates {
            CovariateDesign::Gaussian => 1.0,
            CovariateDesign::ScaleMixture { scales, probs } => {
                scales.iter().zip(probs).map(|(s, p)| p * s * s).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, d: usize, rng: &mut R) -> Result<LinearSample> {
        let (bt, by) = self.coefficients(d);
        let gamma = self.gamma / (d.max(1) as f64).sqrt();
        let es2 = self.second_moment_of_scale();
        let mut x = DMatrix::zeros(n, d);
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let s = match &self.covariates {
                CovariateDesign::Gaussian => 1.0,
                CovariateDesign::ScaleMixture { scales, probs } => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = scales[scales.len() - 1];
                    for (sc, p) in scales.iter().zip(probs) {
                        acc += p;
                        if u < acc {
                            pick = *sc;
                            break;
                        }
                    }
                    pick
                }
            };
            let mut norm2 = 0.0;
            let mut xb = 0.0;
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                norm2 += z * z;
                let v = s * z;
                x[(i, j)] = v;
                xb += v;
            }
            let w = match &self.covariates {
                CovariateDesign::Gaussian if d > 0 => norm2 / d as f64 - 1.0,
                CovariateDesign::Gaussian => 0.0,
                CovariateDesign::ScaleMixture { .. } => s * s / es2 - 1.0,
            };
            let v: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let u = self.kappa * w * v + e;
            let ti = bt.first().copied().unwrap_or(0.0) * xb + v;
            t.push(ti);
            y.push(self.theta0 * ti + gamma * xb + u);
        }
        Ok(LinearSample {
            data: RegressionData::new(y, t, x)?,
            beta_t: bt,
            beta_y: by,
            theta0: self.theta0,
        })
    }
}
