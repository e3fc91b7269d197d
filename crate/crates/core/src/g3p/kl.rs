//! Kullback–Leibler divergence between `G3p` and its limit laws.

use super::{exact_moments, ln_normalizer, mode, unit_normal_gamma, G3pParams};
use crate::error::G3pError;
use crate::quad::{integrate_pieces, QuadOptions};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KlReference {
    /// Moment-matched Gamma(d, c), `d = μ²/σ²`, `c = μ/σ²`.
    GammaLimit,
    /// Normal(β/(2α²), 1/(2α²)).
    NormalBeta,
    /// Normal with the large-order ratio approximation of the moments.
    NormalGamma,
}

/// Both directions; `q` is the G3p target and `p` the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlPair {
    /// `KL(q‖p)`.
    pub target_to_ref: f64,
    /// `KL(p‖q)`.
    pub ref_to_target: f64,
}

pub fn kl_divergence(params: &G3pParams, reference: KlReference) -> Result<KlPair, G3pError> {
    params.validate()?;
    let a = params.alpha;
    let b = params.beta;
    let g = params.gamma as f64;
    let lq = move |x: f64| g * x.ln() - a * a * x * x + b * x;
    match reference {
        KlReference::GammaLimit => {
            let m = exact_moments(params)?;
            let d = m.mu * m.mu / m.sigma2;
            let c = m.mu / m.sigma2;
            let ln_cf = ln_normalizer(params)?;
            let closed = (g + 1.0) * c.ln() + (d - 1.0 - g) * digamma(d)
                - d * (1.0 + b / c - a * a * (d + 1.0) / (c * c))
                - ln_gamma(d)
                - ln_cf;
            let lp = move |x: f64| (d - 1.0) * x.ln() - c * x;
            let sd = m.sigma2.sqrt();
            let hi = m.mu + 40.0 * sd;
            let (fwd, _) = interval_kl(&lq, &lp, mode(params).min(hi), ((d - 1.0) / c).clamp(0.0, hi), 0.0, hi);
            Ok(KlPair {
                target_to_ref: fwd.max(0.0),
                ref_to_target: closed.max(0.0),
            })
        }
        KlReference::NormalBeta | KlReference::NormalGamma => {
            let (mu, s2) = if reference == KlReference::NormalBeta {
                (b / (2.0 * a * a), 1.0 / (2.0 * a * a))
            } else {
                let u = unit_normal_gamma(params.gamma, params.ratio());
                (u.mu / a, u.sigma2 / (a * a))
            };
            let sd = s2.sqrt();
            let lo = (mu - 5.0 * sd).max(0.0);
            let hi = mu + 5.0 * sd;
            if !(hi > lo) {
                return Err(G3pError::Domain(hi));
            }
            let lp = move |x: f64| -0.5 * (x - mu) * (x - mu) / s2;
            let (fwd, back) = interval_kl(&lq, &lp, mode(params).clamp(lo, hi), mu.clamp(lo, hi), lo, hi);
            Ok(KlPair {
                target_to_ref: fwd.max(0.0),
                ref_to_target: back.max(0.0),
            })
        }
    }
}

/// `(KL(q‖p), KL(p‖q))` for the two unnormalized log densities, each
/// renormalized on `[lo, hi]`. `xq`, `xp` locate the maxima on the interval.
fn interval_kl<Q: Fn(f64) -> f64, P: Fn(f64) -> f64>(
    lq: &Q,
    lp: &P,
    xq: f64,
    xp: f64,
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    let mq = lq(xq.max(f64::MIN_POSITIVE));
    let mp = lp(xp.max(f64::MIN_POSITIVE));
    let n = 64;
    let pts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_intervals: 200,
    };
    let guard = |x: f64, f: &dyn Fn(f64) -> f64| if x > 0.0 { f(x) } else { 0.0 };
    let zq = integrate_pieces(|x| guard(x, &|x| (lq(x) - mq).exp()), &pts, opts).value;
    let zp = integrate_pieces(|x| guard(x, &|x| (lp(x) - mp).exp()), &pts, opts).value;
    let eq = integrate_pieces(
        |x| guard(x, &|x| (lq(x) - mq).exp() * (lq(x) - lp(x))),
        &pts,
        opts,
    )
    .value
        / zq;
    let ep = integrate_pieces(
        |x| guard(x, &|x| (lp(x) - mp).exp() * (lp(x) - lq(x))),
        &pts,
        opts,
    )
    .value
        / zp;
    let cq = -mq - zq.ln();
    let cp = -mp - zp.ln();
    (eq + cq - cp, ep + cp - cq)
}
