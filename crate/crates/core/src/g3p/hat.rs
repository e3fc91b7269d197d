//! Proposal, crossing points and the Laplace hat of the modified rejection
//! sampler, all in unit scale (`α = 1`) and in the standardized variable
//! `t = (x − μ)/σ`.
//!
//! With `g` the target density of `t` and `h` the `N(0, ω²)` proposal with
//! `ω² = 1/(2σ²)`, the log ratio collapses to
//!
//! ```text
//! ln r(t) = ln A + γ ln x + κ x + μ²,   κ = ρ − 2μ,   A = σ ω C_f √(2π)
//! ```

use super::{unit_exact, ApproxRegime, G3pMoments, G3pParams, UnitExact};
use crate::error::G3pError;
use crate::quad::{integrate_pieces, QuadOptions};
use crate::specfun::{lambert_w, normal_cdf, WBranch, W_BRANCH_POINT};
use serde::{Deserialize, Serialize};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Scale-free hat parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatParams {
    pub mu: f64,
    pub sigma: f64,
    pub omega2: f64,
    pub t1: f64,
    pub t2: f64,
    pub tmax: f64,
    pub lap_b: f64,
    pub lap_c: f64,
    pub lap_delta: f64,
    pub lap_l: f64,
    pub lap_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProbs {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct UnitTarget {
    pub gamma: f64,
    pub rho: f64,
    pub mu: f64,
    pub sigma: f64,
    pub omega2: f64,
    ln_a: f64,
    kappa: f64,
    ln_h0: f64,
}

impl UnitTarget {
    pub fn new(gamma: u32, rho: f64, ex: &UnitExact) -> Self {
        let sigma = ex.sigma2.sqrt();
        let omega2 = 0.5 / ex.sigma2;
        let ln_omega = 0.5 * omega2.ln();
        Self {
            gamma: gamma as f64,
            rho,
            mu: ex.mu,
            sigma,
            omega2,
            ln_a: sigma.ln() + ln_omega + ex.ln_norm + LN_SQRT_2PI,
            kappa: rho - 2.0 * ex.mu,
            ln_h0: -ln_omega - LN_SQRT_2PI,
        }
    }

    #[inline]
    pub fn x(&self, t: f64) -> f64 {
        self.sigma * t + self.mu
    }

    #[inline]
    pub fn ln_r(&self, t: f64) -> f64 {
        let x = self.x(t);
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_a + self.gamma * x.ln() + self.kappa * x + self.mu * self.mu
    }

    #[inline]
    pub fn ln_h(&self, t: f64) -> f64 {
        self.ln_h0 - 0.5 * t * t / self.omega2
    }

    /// `ln d(t)` with `d = g − h`; `−∞` where `g ≤ h`.
    #[inline]
    pub fn ln_d(&self, t: f64) -> f64 {
        let lr = self.ln_r(t);
        if lr <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_h(t) + lr.exp_m1().ln()
    }

    /// First and second derivatives of `ln d`, from those of `ln g` and
    /// `ln h` so that nothing underflows in the tails.
    pub fn ln_d_derivs(&self, t: f64) -> (f64, f64) {
        let x = self.x(t);
        let s = self.sigma;
        let gl = s * (self.gamma / x - 2.0 * x + self.rho);
        let gll = s * s * (-self.gamma / (x * x) - 2.0);
        let hl = -t / self.omega2;
        let hll = -1.0 / self.omega2;
        let lr = self.ln_r(t);
        let rm1 = lr.exp_m1();
        let r = rm1 + 1.0;
        let d1 = (r * gl - hl) / rm1;
        let d2 = (r * (gl * gl + gll) - (hl * hl + hll)) / rm1 - d1 * d1;
        (d1, d2)
    }

    /// Crossing points `t1 < tmax < t2` where `r = 1`.
    pub fn crossings(&self) -> Result<(f64, f64, f64), G3pError> {
        let g = self.gamma;
        let k = self.kappa;
        if !(k < 0.0) {
            return Err(G3pError::Hat(format!("non-negative slope kappa = {k}")));
        }
        // x^γ e^{κx} = Q  ⇔  (κx/γ) e^{κx/γ} = (κ/γ) Q^{1/γ}
        let ln_q = -self.mu * self.mu - self.ln_a;
        let arg = -((-k / g).ln() + ln_q / g).exp();
        let arg = arg.max(W_BRANCH_POINT);
        let w0 = lambert_w(arg, WBranch::Principal)?;
        let wm = lambert_w(arg, WBranch::NegativeOne)?;
        let polish = |mut x: f64| {
            for _ in 0..2 {
                let phi = g * x.ln() + k * x - ln_q;
                let dphi = g / x + k;
                if dphi.abs() > 1e-300 {
                    let nx = x - phi / dphi;
                    if nx > 0.0 && nx.is_finite() {
                        x = nx;
                    }
                }
            }
            x
        };
        let x1 = polish(g * w0 / k);
        let x2 = polish(g * wm / k);
        let xm = -g / k;
        let to_t = |x: f64| (x - self.mu) / self.sigma;
        Ok((to_t(x1), to_t(x2), to_t(xm)))
    }
}

pub(crate) fn unit_target(gamma: u32, rho: f64) -> Result<UnitTarget, G3pError> {
    let ex = unit_exact(gamma, rho)?;
    Ok(UnitTarget::new(gamma, rho, &ex))
}

/// Laplace hat in log form: `ln s(t) = ln_peak − |t − b|/δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LaplaceFit {
    pub l: f64,
    pub r: f64,
    pub delta: f64,
    pub b: f64,
    pub ln_c: f64,
}

impl LaplaceFit {
    #[inline]
    pub fn ln_s(&self, t: f64) -> f64 {
        self.ln_c - LN_SQRT_2PI - (t - self.b).abs() / self.delta
    }
}

/// Envelope for the Step-3 inner rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Hat {
    Laplace(LaplaceFit),
    /// Constant envelope at the maximum of `d`; used when the Newton solve fails.
    Box { ln_height: f64 },
}

/// Mode of `d` on `(t1, t2)`: Newton on `(ln d)'` safeguarded by bisection.
pub(crate) fn d_mode(target: &UnitTarget, t1: f64, t2: f64) -> f64 {
    let (mut lo, mut hi) = (t1, t2);
    let mut t = 0.5 * (t1 + t2);
    for _ in 0..100 {
        let (d1, d2) = target.ln_d_derivs(t);
        if d1 > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - d1 / d2;
        let next = if d2 < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-13 * (1.0 + t.abs()) || hi - lo <= 1e-13 * (1.0 + t.abs()) {
            return next;
        }
        t = next;
    }
    t
}

/// Solves `(ln d)'(L) = 1/δ`, `(ln d)'(R) = −1/δ`, `δ = (R − L)/2`.
pub(crate) fn solve_laplace(
    target: &UnitTarget,
    t1: f64,
    t2: f64,
    start: Option<(f64, f64)>,
) -> Result<LaplaceFit, G3pError> {
    let m = d_mode(target, t1, t2);
    let (mut l, mut r) = match start {
        Some((l0, r0)) if t1 < l0 && l0 < m && m < r0 && r0 < t2 => (l0, r0),
        _ => {
            let (_, d2) = target.ln_d_derivs(m);
            let sd = if d2 < 0.0 { 1.0 / (-d2).sqrt() } else { 0.25 * (t2 - t1) };
            (m - sd.min(0.5 * (m - t1)), m + sd.min(0.5 * (t2 - m)))
        }
    };
    let residual = |l: f64, r: f64| {
        let half = 0.5 * (r - l);
        let (a, _) = target.ln_d_derivs(l);
        let (b, _) = target.ln_d_derivs(r);
        (a * half - 1.0, b * half + 1.0)
    };
    let mut converged = false;
    for _ in 0..100 {
        let w = r - l;
        let (dl1, dl2) = target.ln_d_derivs(l);
        let (dr1, dr2) = target.ln_d_derivs(r);
        let f1 = dl1 - 2.0 / w;
        let f2 = dr1 + 2.0 / w;
        let q = 2.0 / (w * w);
        let (j11, j12, j21, j22) = (dl2 - q, q, q, dr2 - q);
        let det = j11 * j22 - j12 * j21;
        if !det.is_finite() || det == 0.0 {
            break;
        }
        let mut sl = -(f1 * j22 - j12 * f2) / det;
        let mut sr = -(j11 * f2 - j21 * f1) / det;
        let mut ok = false;
        for _ in 0..60 {
            let (nl, nr) = (l + sl, r + sr);
            if t1 < nl && nl < m && m < nr && nr < t2 {
                ok = true;
                break;
            }
            sl *= 0.5;
            sr *= 0.5;
        }
        if !ok {
            break;
        }
        l += sl;
        r += sr;
        if sl.abs() <= 1e-14 * (1.0 + l.abs()) && sr.abs() <= 1e-14 * (1.0 + r.abs()) {
            converged = true;
            break;
        }
    }
    let (e1, e2) = residual(l, r);
    if !(e1.abs() <= 1e-9 && e2.abs() <= 1e-9)
        && (!converged || !(e1.abs() <= 1e-7 && e2.abs() <= 1e-7)) {
            return Err(G3pError::Hat(format!(
                "Laplace tangency did not converge (residuals {e1:.3e}, {e2:.3e})"
            )));
        }
    let delta = 0.5 * (r - l);
    let (ldl, ldr) = (target.ln_d(l), target.ln_d(r));
    let b = 0.5 * (l + r + delta * (ldr - ldl));
    let ln_c = 1.0 + LN_SQRT_2PI + 0.5 * (ldl + ldr);
    Ok(LaplaceFit {
        l,
        r,
        delta,
        b,
        ln_c,
    })
}

/// Hat for Step 3: Laplace when the tangency solve succeeds, otherwise a box.
/// Coverage is checked on a grid and the Laplace height raised if needed.
pub(crate) fn build_hat(target: &UnitTarget, t1: f64, t2: f64, start: Option<(f64, f64)>) -> Hat {
    match solve_laplace(target, t1, t2, start) {
        Ok(mut fit) => {
            let n = 16;
            let mut excess = f64::NEG_INFINITY;
            for i in 1..n {
                let t = t1 + (t2 - t1) * i as f64 / n as f64;
                excess = excess.max(target.ln_d(t) - fit.ln_s(t));
            }
            if excess > 0.0 {
                fit.ln_c += excess + 1e-9;
            }
            Hat::Laplace(fit)
        }
        Err(_) => {
            let m = d_mode(target, t1, t2);
            Hat::Box {
                ln_height: target.ln_d(m) + 1e-9,
            }
        }
    }
}

fn require_exact(params: &G3pParams) -> Result<(), G3pError> {
    params.validate()?;
    if params.beta == 0.0 || params.regime() != ApproxRegime::Exact {
        return Err(G3pError::Hat(format!(
            "hat parameters need the exact regime with beta != 0, got {:?}",
            params
        )));
    }
    Ok(())
}

/// All hat parameters for an exact-regime `params`. The moments are those
/// of `params` in its own scale.
pub fn hat_params(params: &G3pParams, moments: &G3pMoments) -> Result<HatParams, G3pError> {
    require_exact(params)?;
    let a = params.alpha;
    let ex = unit_exact(params.gamma, params.ratio())?;
    let unit = UnitExact {
        mu: moments.mu * a,
        sigma2: moments.sigma2 * a * a,
        ln_norm: ex.ln_norm,
    };
    let target = UnitTarget::new(params.gamma, params.ratio(), &unit);
    let (t1, t2, tmax) = target.crossings()?;
    let fit = solve_laplace(&target, t1, t2, None)?;
    Ok(HatParams {
        mu: target.mu,
        sigma: target.sigma,
        omega2: target.omega2,
        t1,
        t2,
        tmax,
        lap_b: fit.b,
        lap_c: fit.ln_c.exp(),
        lap_delta: fit.delta,
        lap_l: fit.l,
        lap_r: fit.r,
    })
}

/// Probabilities of ending in Step 1, 2 or 3 of the sampler.
pub fn step_acceptance_probs(params: &G3pParams) -> Result<StepProbs, G3pError> {
    require_exact(params)?;
    let target = unit_target(params.gamma, params.ratio())?;
    let (t1, t2, _) = target.crossings()?;
    let omega = target.omega2.sqrt();
    let e1 = normal_cdf(t2 / omega) - normal_cdf(t1 / omega);
    let m = d_mode(&target, t1, t2);
    let pts = [t1, 0.5 * (t1 + m), m, 0.5 * (m + t2), t2];
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_intervals: 400,
    };
    let e3 = integrate_pieces(|t| target.ln_d(t).exp(), &pts, opts).value.max(0.0);
    Ok(StepProbs {
        e1,
        e2: 1.0 - e1 - e3,
        e3,
    })
}
