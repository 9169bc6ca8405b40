//! Univariate convex minimization and Z-root finding by bisection on the sign
//! of the subgradient.
//!
//! Bisection keeps the invariant that the left probe has a negative right
//! derivative and the right probe a nonnegative one, so the returned point
//! satisfies the sign implications
//!
//! ```text
//! g_right(θ₀) < 0  ⇒  θ̂ ≥ θ₀      and      g_left(θ₀) > 0  ⇒  θ̂ ≤ θ₀
//! ```
//!
//! up to the bracket tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{ObjectiveFamily, Subgradient};

const MAX_ITERATIONS: usize = 200;

/// A search interval [lo, hi] with absolute tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    lo: f64,
    hi: f64,
    tol: f64,
}

impl Bracket {
    /// Bracket with the default tolerance `1e-10·(1 + |lo| + |hi|)`.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Self::with_tol(lo, hi, 1e-10 * (1.0 + lo.abs() + hi.abs()))
    }

    pub fn with_tol(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "bracket needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("bracket tolerance must be positive, got {tol}")));
        }
        Ok(Self { lo, hi, tol })
    }

    /// Smallest bracket covering the data, widened by `pad` on each side.
    pub fn around(data: &[f64], pad: f64) -> Result<Self> {
        let (mn, mx) = data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !mn.is_finite() {
            return Err(Error::Empty("bracket data"));
        }
        Self::new(mn - pad, mx + pad)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Probes seen during one bisection run, kept sorted to detect a
/// non-monotone subgradient.
struct ProbeLog {
    probes: Vec<(f64, Subgradient)>,
    slack: f64,
}

impl ProbeLog {
    fn new(slack: f64) -> Self {
        Self {
            probes: Vec::with_capacity(2 * MAX_ITERATIONS + 2),
            slack,
        }
    }

    fn record(&mut self, theta: f64, g: Subgradient) -> Result<()> {
        if g.left > g.right + self.slack {
            return Err(Error::NonConvex { lo: theta, hi: theta });
        }
        let at = self.probes.partition_point(|(t, _)| *t < theta);
        if at > 0 {
            let (t, prev) = self.probes[at - 1];
            if prev.right > g.left + self.slack {
                return Err(Error::NonConvex { lo: t, hi: theta });
            }
        }
        if let Some(&(t, next)) = self.probes.get(at) {
            if g.right > next.left + self.slack {
                return Err(Error::NonConvex { lo: theta, hi: t });
            }
        }
        self.probes.insert(at, (theta, g));
        Ok(())
    }
}

/// Locates the set {θ : 0 ∈ ∂f(θ)} ∩ [lo, hi] = [a, b] for a nondecreasing
/// set-valued `f`, clamping to the bracket ends when the root lies outside.
fn zero_set<F>(f: &F, bracket: &Bracket, slack: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Subgradient,
{
    let mut log = ProbeLog::new(slack);
    let g_lo = f(bracket.lo);
    let g_hi = f(bracket.hi);
    log.record(bracket.lo, g_lo)?;
    log.record(bracket.hi, g_hi)?;

    // a = inf{θ : g_right(θ) ≥ 0}
    let a = if g_lo.right >= 0.0 {
        bracket.lo
    } else if g_hi.right < 0.0 {
        bracket.hi
    } else {
        let (mut l, mut h) = (bracket.lo, bracket.hi);
        let mut it = 0;
        while h - l > bracket.tol {
            it += 1;
            if it > MAX_ITERATIONS {
                return Err(Error::NoConvergence { iterations: MAX_ITERATIONS });
            }
            let m = 0.5 * (l + h);
            if m <= l || m >= h {
                break;
            }
            let g = f(m);
            log.record(m, g)?;
            if g.right < 0.0 {
                l = m;
            } else {
                h = m;
            }
        }
        0.5 * (l + h)
    };

    // b = sup{θ : g_left(θ) ≤ 0}
    let b = if g_hi.left <= 0.0 {
        bracket.hi
    } else if g_lo.left > 0.0 {
        bracket.lo
    } else {
        let (mut l, mut h) = (a.max(bracket.lo), bracket.hi);
        // g_left(a) may exceed zero only when a sits inside the tolerance
        // band of a kink; restart from the bracket end in that case.
        if f(l).left > 0.0 {
            l = bracket.lo;
        }
        let mut it = 0;
        while h - l > bracket.tol {
            it += 1;
            if it > MAX_ITERATIONS {
                return Err(Error::NoConvergence { iterations: MAX_ITERATIONS });
            }
            let m = 0.5 * (l + h);
            if m <= l || m >= h {
                break;
            }
            let g = f(m);
            log.record(m, g)?;
            if g.left <= 0.0 {
                l = m;
            } else {
                h = m;
            }
        }
        0.5 * (l + h)
    };
    Ok((a.min(b), a.max(b)))
}

fn slack_for(obj: &ObjectiveFamily, bracket: &Bracket) -> f64 {
    1e-12 * obj.scale(bracket.lo.abs().max(bracket.hi.abs())) * obj.data().len() as f64
}

/// Minimizer of a convex objective over the bracket. When the minimizer set
/// is an interval the midpoint is returned; when the minimum is attained at
/// an end of the bracket that end is returned.
pub fn minimize_convex(obj: &ObjectiveFamily, bracket: &Bracket) -> Result<f64> {
    if !obj.is_convex() {
        return Err(Error::InvalidArgument(format!(
            "{:?} is not a convex objective; use minimize_global",
            obj.kind()
        )));
    }
    let (a, b) = zero_set(&|t| obj.dot_m(t), bracket, slack_for(obj, bracket))?;
    Ok(0.5 * (a + b))
}

/// Root of the estimating equation Ṁ_n(θ) = 0 inside the bracket.
/// Accepts either sign orientation of the estimating function.
pub fn solve_z(obj: &ObjectiveFamily, bracket: &Bracket) -> Result<f64> {
    solve_estimating_equation(|t| obj.dot_m(t), bracket, slack_for(obj, bracket))
}

/// Root of a monotone (in either direction) set-valued estimating function.
pub fn solve_estimating_equation<F>(f: F, bracket: &Bracket, slack: f64) -> Result<f64>
where
    F: Fn(f64) -> Subgradient,
{
    let g_lo = f(bracket.lo);
    let g_hi = f(bracket.hi);
    let (a, b) = if g_lo.right <= 0.0 && g_hi.left >= 0.0 {
        zero_set(&f, bracket, slack)?
    } else if g_lo.left >= 0.0 && g_hi.right <= 0.0 {
        let neg = |t: f64| {
            let g = f(t);
            Subgradient {
                left: -g.right,
                right: -g.left,
            }
        };
        zero_set(&neg, bracket, slack)?
    } else {
        return Err(Error::NoBracketedRoot {
            lo: bracket.lo,
            hi: bracket.hi,
        });
    };
    Ok(0.5 * (a + b))
}

/// Global minimizer of a possibly non-convex objective: the best point of a
/// `grid_points` grid, refined by golden-section search between its
/// neighbours.
pub fn minimize_global(obj: &ObjectiveFamily, bracket: &Bracket, grid_points: usize) -> Result<f64> {
    let grid_points = grid_points.max(3);
    let step = (bracket.hi - bracket.lo) / (grid_points - 1) as f64;
    let at = |k: usize| bracket.lo + k as f64 * step;
    let mut best = 0;
    let mut best_val = obj.eval(bracket.lo);
    for k in 1..grid_points {
        let v = obj.eval(at(k));
        if v < best_val {
            best = k;
            best_val = v;
        }
    }
    let mut l = at(best.saturating_sub(1));
    let mut h = at((best + 1).min(grid_points - 1));
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = h - inv_phi * (h - l);
    let mut d = l + inv_phi * (h - l);
    let (mut fc, mut fd) = (obj.eval(c), obj.eval(d));
    let mut it = 0;
    while h - l > bracket.tol {
        it += 1;
        if it > MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations: MAX_ITERATIONS });
        }
        if fc <= fd {
            h = d;
            d = c;
            fd = fc;
            c = h - inv_phi * (h - l);
            fc = obj.eval(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + inv_phi * (h - l);
            fd = obj.eval(d);
        }
    }
    let candidate = 0.5 * (l + h);
    Ok(if obj.eval(candidate) <= best_val { candidate } else { at(best) })
}
