//! One runner per experiment kind.
//!
//! Grid points are numbered in emission order and each gets the seed
//! `derive_seed(master_seed, point, "grid-point")`; replication i of a point
//! draws from `derive_seed(point_seed, i, <stream>)`. Aggregation folds the
//! replications in index order.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::bounds::{
    clt_asymptotic_bound, convex_bound, eta_indicators, eta_profile, frequency_std_err, mle_llr_lower_bounds,
    nondiff_bound, nonconvex_bound, z_exact_medbias, BoundKind, BoundReport, NondiffDraw, SummandMoments,
};
use crate::error::{Error, Result};
use crate::median_bias::{half_minus_min, mc_med_bias, EstimatorDraws, MedBiasEstimate, SignProbabilities};
use crate::objectives::{LocationFamily, ObjectiveFamily, ObjectiveKind, Subgradient};
use crate::partialling::{default_eta_grid, fwl_estimate, proposition_bound, score_decompose, RegressionData};
use crate::plm::{fit_split, simulate_plm, z_expansion, NuisanceMethod, PlmDgp};
use crate::simlab::config::{ExperimentConfig, ExperimentSpec, PlmNuisance, UnivariateCase};
use crate::simlab::dgp::{LinearDesign, UnivariateLaw};
use crate::simlab::engine::{resolve_workers, Engine};
use crate::simlab::hulc::{hulc_batches, hulc_interval, hulc_miss_probability};
use crate::simlab::report::{GridPoint, ReportRow};
use crate::simlab::seed::derive_seed;
use crate::solver::{minimize_convex, minimize_global, solve_z, Bracket};

const DATA_STREAM: &str = "data";
const DEFAULT_SEARCH_POINTS: usize = 2001;

/// Runs `config` on a pool sized by [`resolve_workers`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let engine = Engine::new(resolve_workers(None, config.workers)?)?;
    run_experiment_on(config, &engine)
}

/// Runs `config` on an existing pool. The output does not depend on the
/// pool size.
pub fn run_experiment_on(config: &ExperimentConfig, engine: &Engine) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let mut ctx = Ctx {
        config,
        engine,
        point: 0,
        rows: Vec::new(),
    };
    match &config.spec {
        ExperimentSpec::ConvexThm1 { cases } => cases.iter().try_for_each(|c| ctx.convex_thm1(c))?,
        ExperimentSpec::ZExact { cases } => cases.iter().try_for_each(|c| ctx.z_exact(c))?,
        ExperimentSpec::NondiffEps { cases, eps } => cases.iter().try_for_each(|c| ctx.nondiff(c, eps))?,
        ExperimentSpec::MleLlr { family, n, eps, theta0 } => {
            n.iter().try_for_each(|&n| ctx.mle_llr(family, n, eps, *theta0))?
        }
        ExperimentSpec::NonconvexDelta {
            cases,
            delta,
            convexity_points,
            search_points,
        } => cases
            .iter()
            .try_for_each(|c| ctx.nonconvex(c, delta, *convexity_points, *search_points))?,
        ExperimentSpec::CltAsymptotic { cases, constant } => cases.iter().try_for_each(|c| ctx.clt(c, *constant))?,
        ExperimentSpec::FwlAlgebra { design, n, d } => {
            for &n in n {
                for &d in d {
                    ctx.fwl_algebra(design, n, d)?;
                }
            }
        }
        ExperimentSpec::Proposition { design, n, d, eta_points } => {
            for &n in n {
                for &d in d {
                    ctx.proposition(design, n, d, *eta_points)?;
                }
            }
        }
        ExperimentSpec::DimScaling {
            design,
            n,
            dim_rule,
            eta_points,
        } => n
            .iter()
            .try_for_each(|&n| ctx.proposition(design, n, dim_rule.dim(n), *eta_points))?,
        ExperimentSpec::PlmRate { dgp, n, nuisance } => n.iter().try_for_each(|&n| ctx.plm(dgp, n, nuisance))?,
        ExperimentSpec::Hulc { cases, alpha } => cases.iter().try_for_each(|c| ctx.hulc(c, *alpha))?,
    }
    Ok(ctx.rows)
}

/// Compact label `tag(k=v,...)` of a serde-tagged value.
fn tagged_label(value: &Value, tag: &str) -> String {
    let Value::Object(map) = value else {
        return value.to_string();
    };
    let name = map.get(tag).and_then(Value::as_str).unwrap_or("?");
    let params: Vec<String> = map
        .iter()
        .filter(|(k, _)| k.as_str() != tag)
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect();
    if params.is_empty() {
        name.to_string()
    } else {
        format!("{name}({})", params.join(","))
    }
}

pub fn law_label(law: &UnivariateLaw) -> String {
    tagged_label(&serde_json::to_value(law).unwrap_or(Value::Null), "law")
}

pub fn objective_label(obj: &ObjectiveKind) -> String {
    tagged_label(&serde_json::to_value(obj).unwrap_or(Value::Null), "kind")
}

fn case_label(case: &UnivariateCase) -> String {
    format!("{}/{}", law_label(&case.law), objective_label(&case.objective))
}

/// θ̂ for a location objective: bisection when convex, grid plus golden
/// section otherwise.
pub fn fit_location(obj: &ObjectiveFamily, search_points: usize) -> Result<f64> {
    let bracket = Bracket::around(obj.data(), 1.0)?;
    if obj.is_convex() {
        minimize_convex(obj, &bracket)
    } else {
        minimize_global(obj, &bracket, search_points)
    }
}

/// −1 if the right derivative is negative, +1 if the left derivative is
/// positive, 0 if the subgradient contains 0.
pub fn strict_sign(g: Subgradient) -> i8 {
    if g.left > 0.0 {
        1
    } else if g.right < 0.0 {
        -1
    } else {
        0
    }
}

fn sign_probabilities_of(signs: impl Iterator<Item = i8>, reps: usize) -> Result<SignProbabilities> {
    let (mut neg, mut zero) = (0, 0);
    for s in signs {
        match s {
            -1 => neg += 1,
            0 => zero += 1,
            _ => {}
        }
    }
    SignProbabilities::from_counts(neg, zero, reps)
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut s, mut sq) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        s += v;
        sq += v * v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / nf).sqrt())
}

/// θ̂ from the normal equations of the joint regression of y on [t | x].
pub fn joint_solve_theta(data: &RegressionData) -> Result<f64> {
    let n = data.n();
    let d = data.d();
    let mut z = DMatrix::zeros(n, d + 1);
    z.set_column(0, &data.t);
    z.view_mut((0, 1), (n, d)).copy_from(&data.x);
    let gram = z.transpose() * &z;
    let rhs = z.transpose() * &data.y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("joint normal equations are not positive definite".into()))?;
    Ok(chol.solve(&rhs)[0])
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    engine: &'a Engine,
    point: u64,
    rows: Vec<ReportRow>,
}

impl Ctx<'_> {
    fn reps(&self) -> usize {
        self.config.reps
    }

    fn next_point(&mut self) -> u64 {
        let s = derive_seed(self.config.master_seed, self.point, "grid-point");
        self.point += 1;
        s
    }

    fn row(&self, case: String, grid: GridPoint, lhs: MedBiasEstimate, seed: u64) -> ReportRow {
        ReportRow::new(&self.config.id, self.config.spec.kind_name(), case, grid, lhs, seed)
    }

    fn push(&mut self, mut rows: Vec<ReportRow>, started: Instant) {
        if self.config.record_timing {
            let t = started.elapsed().as_secs_f64();
            rows.iter_mut().for_each(|r| r.wall_time_s = Some(t));
        }
        self.rows.extend(rows);
    }

    fn convex_thm1(&mut self, case: &UnivariateCase) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let obj = ObjectiveFamily::new(case.objective, case.law.sample_n(case.n, rng))?;
            Ok((fit_location(&obj, DEFAULT_SEARCH_POINTS)?, strict_sign(obj.dot_m(theta0))))
        })?;
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let sp = sign_probabilities_of(draws.iter().map(|d| d.1), draws.len())?;
        let rhs = convex_bound(&sp);
        let se = frequency_std_err(sp.p_neg.min(sp.p_pos), draws.len());
        let row = self
            .row(case_label(case), GridPoint::n(case.n), lhs, seed)
            .with_bound(BoundReport::new(BoundKind::ConvexThm1, lhs, rhs, se))
            .with_diag("theta0", theta0)
            .with_diag("p_neg", sp.p_neg)
            .with_diag("p_zero", sp.p_zero)
            .with_diag("p_pos", sp.p_pos);
        self.push(vec![row], started);
        Ok(())
    }

    fn z_exact(&mut self, case: &UnivariateCase) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let obj = ObjectiveFamily::new(case.objective, case.law.sample_n(case.n, rng))?;
            let bracket = Bracket::around(obj.data(), 1.0)?;
            let g = obj.dot_m(theta0);
            Ok((solve_z(&obj, &bracket)?, 0.5 * (g.left + g.right)))
        })?;
        let reps = draws.len();
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let ge = draws.iter().filter(|d| d.1 >= 0.0).count() as f64 / reps as f64;
        let le = draws.iter().filter(|d| d.1 <= 0.0).count() as f64 / reps as f64;
        let rhs = z_exact_medbias(ge, le)?;
        let se = frequency_std_err(ge.min(le), reps);
        let row = self
            .row(case_label(case), GridPoint::n(case.n), lhs, seed)
            .with_bound(BoundReport::new(BoundKind::ZExact, lhs, rhs, se))
            .with_diag("theta0", theta0)
            .with_diag("p_score_ge", ge)
            .with_diag("p_score_le", le);
        self.push(vec![row], started);
        Ok(())
    }

    fn nondiff(&mut self, case: &UnivariateCase, eps: &[f64]) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let obj = ObjectiveFamily::new(case.objective, case.law.sample_n(case.n, rng))?;
            Ok((fit_location(&obj, DEFAULT_SEARCH_POINTS)?, NondiffDraw::from_objective(&obj, theta0, eps)))
        })?;
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let comparisons: Vec<NondiffDraw> = draws.into_iter().map(|d| d.1).collect();
        let profile = nondiff_bound(eps, &comparisons)?;
        let rows = eps
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let report = BoundReport::new(BoundKind::NondiffEps, lhs, profile.bound[j], profile.std_err[j])
                    .with_param("eps", profile.eps.clone())
                    .with_param("bound", profile.bound.clone())
                    .with_param("p_plus", profile.p_plus.clone())
                    .with_param("p_minus", profile.p_minus.clone());
                let grid = GridPoint {
                    eps: Some(e),
                    ..GridPoint::n(case.n)
                };
                self.row(case_label(case), grid, lhs, seed)
                    .with_bound(report)
                    .with_diag("theta0", theta0)
                    .with_diag("finest_bound", profile.value)
            })
            .collect();
        self.push(rows, started);
        Ok(())
    }

    fn mle_llr(&mut self, family: &LocationFamily, n: usize, eps: &[f64], theta0: f64) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let law = UnivariateLaw::from_family(family, theta0);
        let kind = ObjectiveKind::NegLoglik(*family);
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let data = law.sample_n(n, rng);
            let obj = ObjectiveFamily::new(kind, data)?;
            let bracket = Bracket::around(obj.data(), 1.0)?;
            Ok((minimize_convex(&obj, &bracket)?, obj))
        })?;
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let samples: Vec<Vec<f64>> = draws.into_iter().map(|d| d.1.data().to_vec()).collect();
        let case = format!("{}/{}", law_label(&law), objective_label(&kind));
        let mut rows = Vec::with_capacity(eps.len());
        for &e in eps {
            let b = mle_llr_lower_bounds(family, &samples, theta0, e, |x| family.expected_llr(x))?;
            let q_lower = b.lower_plus.min(b.lower_minus);
            let se_lower = frequency_std_err(q_lower, b.reps);
            let se_direct = frequency_std_err(b.direct_plus.min(b.direct_minus), b.reps);
            let consistent = b.lower_plus <= b.direct_plus + 3.0 * frequency_std_err(b.direct_plus, b.reps)
                && b.lower_minus <= b.direct_minus + 3.0 * frequency_std_err(b.direct_minus, b.reps);
            let grid = GridPoint {
                eps: Some(e),
                ..GridPoint::n(n)
            };
            rows.push(
                self.row(case.clone(), grid, lhs, seed)
                    .with_bound(BoundReport::new(BoundKind::MleLlr, lhs, half_minus_min(b.lower_plus, b.lower_minus), se_lower))
                    .with_diag("theta0", theta0)
                    .with_diag("lower_plus", b.lower_plus)
                    .with_diag("lower_minus", b.lower_minus)
                    .with_diag("direct_plus", b.direct_plus)
                    .with_diag("direct_minus", b.direct_minus)
                    .with_diag("direct_bound", half_minus_min(b.direct_plus, b.direct_minus))
                    .with_diag("direct_bound_se", se_direct)
                    .with_diag("lower_consistent", f64::from(u8::from(consistent))),
            );
        }
        self.push(rows, started);
        Ok(())
    }

    fn nonconvex(&mut self, case: &UnivariateCase, deltas: &[f64], conv_points: usize, search: usize) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let obj = ObjectiveFamily::new(case.objective, case.law.sample_n(case.n, rng))?;
            let est = fit_location(&obj, search)?;
            let ind = eta_indicators(&obj, est, theta0, deltas, conv_points);
            Ok((est, strict_sign(obj.dot_m(theta0)), ind))
        })?;
        let reps = draws.len();
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let sp = sign_probabilities_of(draws.iter().map(|d| d.1), reps)?;
        let indicators: Vec<Vec<(bool, bool)>> = draws.into_iter().map(|d| d.2).collect();
        let profile = eta_profile(deltas, &indicators)?;
        let bound = nonconvex_bound(&sp, &profile)?;
        let base_se = frequency_std_err(sp.p_neg.min(sp.p_pos), reps);
        let eta1: Vec<f64> = profile.iter().map(|p| p.eta1).collect();
        let eta2: Vec<f64> = profile.iter().map(|p| p.eta2).collect();
        let rows = profile
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let se = (base_se.powi(2)
                    + frequency_std_err(p.eta1, reps).powi(2)
                    + frequency_std_err(p.eta2, reps).powi(2))
                .sqrt();
                let report = BoundReport::new(BoundKind::NonconvexDelta, lhs, bound.per_delta[j], se)
                    .with_param("delta", deltas.to_vec())
                    .with_param("eta1", eta1.clone())
                    .with_param("eta2", eta2.clone())
                    .with_param("per_delta", bound.per_delta.clone());
                let grid = GridPoint {
                    delta: Some(p.delta),
                    ..GridPoint::n(case.n)
                };
                self.row(case_label(case), grid, lhs, seed)
                    .with_bound(report)
                    .with_diag("theta0", theta0)
                    .with_diag("convex_bound", convex_bound(&sp))
                    .with_diag("min_bound_raw", bound.raw)
                    .with_diag("min_bound", bound.clamped)
                    .with_diag("best_delta", bound.best_delta)
            })
            .collect();
        self.push(rows, started);
        Ok(())
    }

    fn clt(&mut self, case: &UnivariateCase, constant: f64) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let obj = ObjectiveFamily::new(case.objective, case.law.sample_n(case.n, rng))?;
            let mut m = [0.0; 3];
            for &x in obj.data() {
                let (l, r) = case.objective.slope(x, theta0);
                let psi = 0.5 * (l + r);
                m[0] += psi;
                m[1] += psi * psi;
                m[2] += psi.abs().powi(3);
            }
            Ok((fit_location(&obj, DEFAULT_SEARCH_POINTS)?, strict_sign(obj.dot_m(theta0)), m))
        })?;
        let reps = draws.len();
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let sp = sign_probabilities_of(draws.iter().map(|d| d.1), reps)?;
        let total = (reps * case.n) as f64;
        let mut sums = [0.0; 3];
        for d in &draws {
            for k in 0..3 {
                sums[k] += d.2[k];
            }
        }
        let mean = sums[0] / total;
        let second = sums[1] / total;
        let mean_se = ((second - mean * mean).max(0.0) / total).sqrt();
        // Moments about zero: the score is centered at θ₀ by construction of
        // the target, and the MC mean is reported for inspection.
        let moments = SummandMoments {
            mean: 0.0,
            variance: second,
            abs_third: sums[2] / total,
        };
        let rhs = clt_asymptotic_bound(&moments, case.n, constant, sp.p_zero)?;
        let row = self
            .row(case_label(case), GridPoint::n(case.n), lhs, seed)
            .with_bound(BoundReport::new(BoundKind::CltAsymptotic, lhs, rhs, 0.0).with_param("constant", vec![constant]))
            .with_diag("theta0", theta0)
            .with_diag("summand_mean", mean)
            .with_diag("summand_mean_se", mean_se)
            .with_diag("summand_variance", moments.variance)
            .with_diag("summand_abs_third", moments.abs_third)
            .with_diag("atom", sp.p_zero)
            .with_diag("convex_bound", convex_bound(&sp));
        self.push(vec![row], started);
        Ok(())
    }

    fn fwl_algebra(&mut self, design: &LinearDesign, n: usize, d: usize) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let s = design.sample(n, d, rng)?;
            let fit = fwl_estimate(&s.data)?;
            let joint = joint_solve_theta(&s.data)?;
            let rel = (fit.theta_hat - joint).abs() / joint.abs().max(1.0);
            let (ok, rem, gap, s_n, corr, m0, msum) =
                match score_decompose(&s.data, &fit, s.theta0, &s.beta_t, &s.beta_y) {
                    Ok(dec) => {
                        let gap = (dec.total - dec.s_n - dec.correction).abs() / dec.scale;
                        let m0 = dec.moment.first().copied().unwrap_or(0.0);
                        let msum = dec.moment.iter().sum::<f64>() / (d.max(1) as f64).sqrt();
                        (true, dec.remainder.abs() / dec.scale, gap, dec.s_n, dec.correction, m0, msum)
                    }
                    Err(Error::Identity { .. }) => (false, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN),
                    Err(e) => return Err(e),
                };
            Ok((fit.theta_hat, rel, ok, rem, gap, s_n, corr, m0, msum))
        })?;
        let reps = draws.len();
        let theta0 = design.theta0;
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let ok: Vec<_> = draws.iter().filter(|d| d.2).collect();
        let max = |f: fn(&&_) -> f64| ok.iter().map(f).fold(0.0f64, f64::max);
        let (s_mean, s_se) = mean_and_se(ok.iter().map(|d| d.5));
        let (c_mean, c_se) = mean_and_se(ok.iter().map(|d| d.6));
        let (m_mean, m_se) = mean_and_se(ok.iter().map(|d| d.7));
        let (ms_mean, ms_se) = mean_and_se(ok.iter().map(|d| d.8));
        let row = self
            .row(String::new(), GridPoint { d: Some(d), ..GridPoint::n(n) }, lhs, seed)
            .with_diag("theta0", theta0)
            .with_diag("max_rel_err_joint", draws.iter().map(|d| d.1).fold(0.0, f64::max))
            .with_diag("identity_failures", (reps - ok.len()) as f64)
            .with_diag("max_remainder_ratio", max(|d| d.3))
            .with_diag("max_decomposition_ratio", max(|d| d.4))
            .with_diag("s_n_mean", s_mean)
            .with_diag("s_n_se", s_se)
            .with_diag("correction_mean", c_mean)
            .with_diag("correction_se", c_se)
            .with_diag("moment1_mean", m_mean)
            .with_diag("moment1_se", m_se)
            .with_diag("moment_sum_mean", ms_mean)
            .with_diag("moment_sum_se", ms_se);
        self.push(vec![row], started);
        Ok(())
    }

    fn proposition(&mut self, design: &LinearDesign, n: usize, d: usize, eta_points: usize) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let s = design.sample(n, d, rng)?;
            let fit = fwl_estimate(&s.data)?;
            let dec = score_decompose(&s.data, &fit, s.theta0, &s.beta_t, &s.beta_y)?;
            Ok((fit.theta_hat, dec.s_n, dec.correction))
        })?;
        let reps = draws.len();
        let theta0 = design.theta0;
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), theta0, seed))?;
        let s_n: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let corr: Vec<f64> = draws.iter().map(|d| d.2).collect();
        let grid = default_eta_grid(&s_n, eta_points, 1e-3, 3.0);
        let prop = proposition_bound(&s_n, &corr, &grid)?;
        let eta = prop.best_eta;
        let r = reps as f64;
        let le = s_n.iter().filter(|&&s| s <= -eta).count() as f64 / r;
        let ge = s_n.iter().filter(|&&s| s >= eta).count() as f64 / r;
        let miss = corr.iter().filter(|c| c.abs() > eta).count() as f64 / r;
        let se = frequency_std_err(le.min(ge), reps).hypot(frequency_std_err(miss, reps));
        let (s_mean, s_se) = mean_and_se(s_n.iter().copied());
        let (c_mean, c_se) = mean_and_se(corr.iter().copied());
        let report = BoundReport::new(BoundKind::Proposition, lhs, prop.value, se)
            .with_param("eta", prop.eta.clone())
            .with_param("profile", prop.profile.clone());
        let row = self
            .row(String::new(), GridPoint { d: Some(d), ..GridPoint::n(n) }, lhs, seed)
            .with_bound(report)
            .with_diag("theta0", theta0)
            .with_diag("best_eta", eta)
            .with_diag("vacuous", f64::from(u8::from(prop.vacuous)))
            .with_diag("s_n_mean", s_mean)
            .with_diag("s_n_sd", s_se * r.sqrt())
            .with_diag("correction_mean", c_mean)
            .with_diag("correction_sd", c_se * r.sqrt());
        self.push(vec![row], started);
        Ok(())
    }

    fn plm(&mut self, dgp: &PlmDgp, n: usize, nuisance: &PlmNuisance) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let d2 = n - n / 2;
        let rate = nuisance.rate(n, d2);
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng: &mut ChaCha8Rng| {
            let data = simulate_plm(dgp, n, rng);
            let split_seed: u64 = rng.random();
            let method = match *nuisance {
                PlmNuisance::RateSchedule { alignment, .. } => NuisanceMethod::Corrupted {
                    rate: rate.unwrap_or(0.0),
                    alignment,
                    seed: rng.random(),
                },
                PlmNuisance::Series { degree } => NuisanceMethod::Series { degree },
                PlmNuisance::Knn { k } => NuisanceMethod::Knn { k },
                PlmNuisance::Oracle => NuisanceMethod::Oracle,
            };
            let fit = fit_split(dgp, &data, &method, split_seed)?;
            let second = data.subset(&fit.d2_indices);
            let e = z_expansion(&second, dgp, &fit.m_hat, &fit.g_hat);
            let expansion_ok = (e.z - e.terms.iter().sum::<f64>()).abs() <= 1e-8 * e.scale;
            Ok((
                fit.theta_hat,
                fit.z_at_theta0,
                fit.cond_bias,
                fit.product_bound,
                expansion_ok,
                fit.norm_g,
                fit.norm_m,
            ))
        })?;
        let reps = draws.len();
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.0).collect(), dgp.theta0, seed))?;
        let centered: Vec<f64> = draws.iter().map(|d| d.1 - d.2).collect();
        let bias: Vec<f64> = draws.iter().map(|d| d.2).collect();
        let rhs = crate::plm::plm_medbias_bound(&centered, &bias)?;
        let q = (0.5 - rhs).min(0.5);
        let se = frequency_std_err(q, reps);
        let violations = draws.iter().filter(|d| d.2.abs() > d.3).count();
        let expansion_failures = draws.iter().filter(|d| !d.4).count();
        let (cb_mean, _) = mean_and_se(draws.iter().map(|d| d.2));
        let (pb_mean, _) = mean_and_se(draws.iter().map(|d| d.3));
        let (ng, _) = mean_and_se(draws.iter().map(|d| d.5));
        let (nm, _) = mean_and_se(draws.iter().map(|d| d.6));
        let grid = GridPoint { rate, ..GridPoint::n(n) };
        let mut row = self
            .row(String::new(), grid, lhs, seed)
            .with_bound(BoundReport::new(BoundKind::PlmSplit, lhs, rhs, se))
            .with_diag("theta0", dgp.theta0)
            .with_diag("d2_size", d2 as f64)
            .with_diag("cauchy_schwarz_violations", violations as f64)
            .with_diag("expansion_failures", expansion_failures as f64)
            .with_diag("cond_bias_mean", cb_mean)
            .with_diag("product_bound_mean", pb_mean)
            .with_diag("norm_g_mean", ng)
            .with_diag("norm_m_mean", nm);
        if let Some(r) = rate {
            row = row.with_diag("root_d2_rate_sq", (d2 as f64).sqrt() * r * r);
        }
        self.push(vec![row], started);
        Ok(())
    }

    fn hulc(&mut self, case: &UnivariateCase, alpha: f64) -> Result<()> {
        let started = Instant::now();
        let seed = self.next_point();
        let theta0 = case.target();
        let b = hulc_batches(alpha)?;
        let batch = case.n / b;
        let draws = self.engine.replicate(self.reps(), seed, DATA_STREAM, |_, rng| {
            let data = case.law.sample_n(case.n, rng);
            let estimator = |xs: &[f64]| fit_location(&ObjectiveFamily::new(case.objective, xs.to_vec())?, DEFAULT_SEARCH_POINTS);
            let (lo, hi) = hulc_interval(&data, alpha, estimator)?;
            let first = estimator(&data[..batch])?;
            Ok((lo <= theta0 && theta0 <= hi, first))
        })?;
        let reps = draws.len();
        let lhs = mc_med_bias(&EstimatorDraws::new(draws.iter().map(|d| d.1).collect(), theta0, seed))?;
        let coverage = draws.iter().filter(|d| d.0).count() as f64 / reps as f64;
        let grid = GridPoint {
            alpha: Some(alpha),
            ..GridPoint::n(case.n)
        };
        let row = self
            .row(case_label(case), grid, lhs, seed)
            .with_diag("theta0", theta0)
            .with_diag("batches", b as f64)
            .with_diag("batch_size", batch as f64)
            .with_diag("coverage", coverage)
            .with_diag("coverage_se", frequency_std_err(coverage, reps))
            .with_diag("target_coverage", 1.0 - hulc_miss_probability(b));
        self.push(vec![row], started);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::config::ExperimentConfig;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json_str(json).unwrap()
    }

    #[test]
    fn labels_are_compact() {
        assert_eq!(law_label(&UnivariateLaw::Laplace { scale: 1.0 }), "laplace(scale=1.0)");
        assert_eq!(objective_label(&ObjectiveKind::AbsDev), "abs_dev");
        assert_eq!(objective_label(&ObjectiveKind::Lp { p: 1.5 }), "lp(p=1.5)");
    }

    #[test]
    fn strict_sign_cases() {
        assert_eq!(strict_sign(Subgradient { left: 1.0, right: 2.0 }), 1);
        assert_eq!(strict_sign(Subgradient { left: -2.0, right: -1.0 }), -1);
        assert_eq!(strict_sign(Subgradient { left: -1.0, right: 1.0 }), 0);
        assert_eq!(strict_sign(Subgradient { left: 0.0, right: 0.0 }), 0);
    }

    #[test]
    fn minimal_run_is_deterministic() {
        let c = cfg(r#"{"id": "m", "kind": "convex_thm1", "reps": 100, "master_seed": 3,
            "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 5},
                      {"law": {"law": "laplace"}, "objective": {"kind": "lp", "p": 2.0}, "n": 4}]}"#);
        let a = run_experiment_on(&c, &Engine::new(1).unwrap()).unwrap();
        let b = run_experiment_on(&c, &Engine::new(3).unwrap()).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.bound.unwrap().holds_3se));
    }

    #[test]
    fn every_kind_runs() {
        let configs = [
            r#"{"kind": "z_exact", "cases": [{"law": {"law": "centered_exp"}, "objective": {"kind": "neg_loglik", "family": "normal_location", "sigma": 1.0}, "n": 10, "theta0": 0.0}]}"#,
            r#"{"kind": "nondiff_eps", "eps": [1.0, 0.5, 0.25], "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 7}]}"#,
            r#"{"kind": "mle_llr", "family": {"family": "logistic_location", "scale": 1.0}, "n": [20], "eps": [0.2, 0.1]}"#,
            r#"{"kind": "nonconvex_delta", "delta": [0.5, 1.0], "convexity_points": 21, "search_points": 101, "cases": [{"law": {"law": "normal"}, "objective": {"kind": "biweight", "c": 4.685}, "n": 10}]}"#,
            r#"{"kind": "clt_asymptotic", "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 20}]}"#,
            r#"{"kind": "fwl_algebra", "design": {"covariates": "gaussian", "kappa": 1.0}, "n": [30], "d": [3]}"#,
            r#"{"kind": "proposition", "design": {"covariates": "gaussian"}, "n": [30], "d": [2]}"#,
            r#"{"kind": "dim_scaling", "design": {"covariates": "scale_mixture", "scales": [1.0, 5.0], "probs": [0.5, 0.5], "kappa": 2.0}, "n": [40], "dim_rule": {"rule": "half_sqrt"}}"#,
            r#"{"kind": "plm_rate", "dgp": {"theta0": 1.0, "g0": {"fn": "sine", "amp": 1.0, "freq": 1.0}, "m0": {"fn": "zero"}, "u": {"law": "normal", "sd": 1.0}, "v": {"law": "normal", "sd": 1.0}, "x": {"law": "uniform01", "d": 1}}, "n": [40], "nuisance": {"nuisance": "rate_schedule", "constant": 1.0, "exponent": 0.0}}"#,
            r#"{"kind": "hulc", "alpha": 0.05, "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 30}]}"#,
        ];
        let engine = Engine::new(2).unwrap();
        for body in configs {
            let json = format!(r#"{{"id": "k", "reps": 100, "master_seed": 1, {}"#, &body[1..]);
            let c = cfg(&json);
            let rows = run_experiment_on(&c, &engine).unwrap_or_else(|e| panic!("{json}: {e}"));
            assert!(!rows.is_empty(), "{json}");
            assert!(rows.iter().all(|r| r.kind == c.spec.kind_name()));
        }
    }

    #[test]
    fn joint_solve_matches_fwl() {
        use rand::SeedableRng;
        let design = LinearDesign {
            covariates: crate::simlab::dgp::CovariateDesign::Gaussian,
            theta0: 0.7,
            beta_t: 1.0,
            gamma: 0.5,
            kappa: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = design.sample(50, 5, &mut rng).unwrap();
        let a = fwl_estimate(&s.data).unwrap().theta_hat;
        let b = joint_solve_theta(&s.data).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}
