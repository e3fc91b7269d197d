//! The three-parameter Gamma distribution
//!
//! ```text
//! f(x) = C_f · x^γ · exp(−α² x² + β x),   x > 0
//! ```
//!
//! with integer `γ ≥ 1`, `α > 0` and real `β`. The family is closed under
//! scaling: if `X ~ G3p(γ, α, β)` then `αX ~ G3p(γ, 1, β/α)`. Everything that
//! needs iteration is therefore computed once in unit scale, as a function of
//! `γ` and `ρ = β/α` only, and divided by `α` at the end.

mod hat;
mod kl;
mod sample;
mod table;

pub use hat::{hat_params, step_acceptance_probs, HatParams, StepProbs};
pub use kl::{kl_divergence, KlPair, KlReference};
pub use sample::{sample, G3pSampler, SamplerStats};
pub use table::{SamplerTables, TableRecord, TABLE_MAGIC, TABLE_VERSION};

use crate::error::G3pError;
use crate::specfun::{erfcx, ln_pcf_integral, mills_complement, pcf_integral_ratio, pcf_integral_ratios_small};
use libm::erfc;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// `β/α` at or below which the Gamma limit replaces the exact sampler.
pub const GAMMA_LIMIT_RATIO: f64 = -20.0;
/// `β/α` at or above which the Normal limit replaces the exact sampler.
pub const NORMAL_BETA_RATIO: f64 = 50.0;
/// `γ` at or above which the large-order Normal limit is used.
pub const NORMAL_GAMMA_ORDER: u32 = 200;

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G3pParams {
    pub gamma: u32,
    pub alpha: f64,
    pub beta: f64,
}

impl G3pParams {
    pub fn new(gamma: u32, alpha: f64, beta: f64) -> Result<Self, G3pError> {
        let p = Self { gamma, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), G3pError> {
        if self.gamma < 1 || !(self.alpha > 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(G3pError::InvalidParams {
                gamma: self.gamma,
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }

    /// The scale-free ratio `β/α`.
    pub fn ratio(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn regime(&self) -> ApproxRegime {
        regime_of(self.gamma, self.ratio())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G3pMoments {
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ApproxRegime {
    Exact,
    /// `β/α → −∞`: Gamma(γ+1, rate −β).
    GammaLimit,
    /// `β/α → +∞`: Normal(β/(2α²), 1/(2α²)).
    NormalBeta,
    /// `γ → ∞`: Normal with the large-order ratio approximation.
    NormalGamma,
}

impl ApproxRegime {
    pub fn is_normal(self) -> bool {
        matches!(self, ApproxRegime::NormalBeta | ApproxRegime::NormalGamma)
    }
}

pub fn regime_of(gamma: u32, ratio: f64) -> ApproxRegime {
    if ratio <= GAMMA_LIMIT_RATIO {
        ApproxRegime::GammaLimit
    } else if gamma >= NORMAL_GAMMA_ORDER {
        ApproxRegime::NormalGamma
    } else if ratio >= NORMAL_BETA_RATIO {
        ApproxRegime::NormalBeta
    } else {
        ApproxRegime::Exact
    }
}

/// Exact unit-scale quantities for `G3p(γ, 1, ρ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct UnitExact {
    pub mu: f64,
    pub sigma2: f64,
    /// `ln C_f` of the unit-scale density.
    pub ln_norm: f64,
}

fn pcf_z(ratio: f64) -> f64 {
    -ratio * FRAC_1_SQRT_2
}

pub(crate) fn unit_exact(gamma: u32, ratio: f64) -> Result<UnitExact, G3pError> {
    let nu = gamma as f64 + 1.0;
    let z = pcf_z(ratio);
    let ln_i = ln_pcf_integral(nu, z)?;
    let (r1, r2) = if gamma <= 3 && z < 8.0 {
        let r = pcf_integral_ratios_small(z);
        (r[gamma as usize], r[gamma as usize + 1])
    } else {
        (pcf_integral_ratio(nu, z)?, pcf_integral_ratio(nu + 1.0, z)?)
    };
    let mu = r1 * FRAC_1_SQRT_2;
    let sigma2 = 0.5 * r1 * (r2 - r1);
    Ok(UnitExact {
        mu,
        sigma2,
        ln_norm: 0.5 * nu * 2f64.ln() - ln_i,
    })
}

/// Unit-scale moments from the large-order ratio approximation.
fn unit_normal_gamma(gamma: u32, ratio: f64) -> G3pMoments {
    let z = pcf_z(ratio);
    let g = gamma as f64;
    let root = |v: f64| (z * z + 4.0 * v - 2.0).sqrt();
    // ½(−z + √(z² + 4v − 2)), rationalized when z > 0
    let approx = |v: f64| {
        if z > 0.0 {
            0.5 * (4.0 * v - 2.0) / (z + root(v))
        } else {
            0.5 * (-z + root(v))
        }
    };
    let r1 = approx(g + 1.0);
    // r2 − r1 without cancellation for large |z|
    let gap = 2.0 / (root(g + 2.0) + root(g + 1.0));
    G3pMoments {
        mu: r1 / SQRT_2,
        sigma2: 0.5 * r1 * gap,
    }
}

/// Mean and variance; limit formulas outside the exact regime.
pub fn moments(params: &G3pParams) -> Result<G3pMoments, G3pError> {
    params.validate()?;
    let a = params.alpha;
    let b = params.beta;
    let g = params.gamma as f64;
    Ok(match params.regime() {
        ApproxRegime::Exact => {
            let u = unit_exact(params.gamma, params.ratio())?;
            G3pMoments {
                mu: u.mu / a,
                sigma2: u.sigma2 / (a * a),
            }
        }
        ApproxRegime::GammaLimit => G3pMoments {
            mu: (g + 1.0) / (-b),
            sigma2: (g + 1.0) / (b * b),
        },
        ApproxRegime::NormalBeta => G3pMoments {
            mu: b / (2.0 * a * a),
            sigma2: 1.0 / (2.0 * a * a),
        },
        ApproxRegime::NormalGamma => {
            let m = unit_normal_gamma(params.gamma, params.ratio());
            G3pMoments {
                mu: m.mu / a,
                sigma2: m.sigma2 / (a * a),
            }
        }
    })
}

/// Exact moments regardless of regime.
pub fn exact_moments(params: &G3pParams) -> Result<G3pMoments, G3pError> {
    params.validate()?;
    let u = unit_exact(params.gamma, params.ratio())?;
    let a = params.alpha;
    Ok(G3pMoments {
        mu: u.mu / a,
        sigma2: u.sigma2 / (a * a),
    })
}

/// `ln C_f`, the log normalizing constant in the original scale.
pub fn ln_normalizer(params: &G3pParams) -> Result<f64, G3pError> {
    params.validate()?;
    let nu = params.gamma as f64 + 1.0;
    let z = pcf_z(params.ratio());
    // C_f = (2α²)^{ν/2} / I(ν, z); equivalently Γ(ν) D_{−ν}(z) e^{z²/4} in the denominator
    Ok(0.5 * nu * (2.0 * params.alpha * params.alpha).ln() - ln_pcf_integral(nu, z)?)
}

pub fn log_density(params: &G3pParams, x: f64) -> Result<f64, G3pError> {
    if !(x > 0.0) {
        return Err(G3pError::Domain(x));
    }
    let ln_c = ln_normalizer(params)?;
    let a = params.alpha;
    Ok(ln_c + params.gamma as f64 * x.ln() - a * a * x * x + params.beta * x)
}

/// Mode of the density, `(β + √(β² + 8α²γ)) / (4α²)`.
pub fn mode(params: &G3pParams) -> f64 {
    let a2 = params.alpha * params.alpha;
    let b = params.beta;
    let g = params.gamma as f64;
    let disc = (b * b + 8.0 * a2 * g).sqrt();
    if b >= 0.0 {
        (b + disc) / (4.0 * a2)
    } else {
        2.0 * g / (disc - b)
    }
}

/// Closed-form CDF of `G3p(1, α, β)`.
pub fn cdf_gamma1(alpha: f64, beta: f64, x: f64) -> Result<f64, G3pError> {
    Ok((1.0 - sf_gamma1(alpha, beta, x)?).clamp(0.0, 1.0))
}

/// Closed-form survival function `P(X > x)` of `G3p(1, α, β)`, accurate in the upper tail.
pub fn sf_gamma1(alpha: f64, beta: f64, x: f64) -> Result<f64, G3pError> {
    if !(alpha > 0.0) || !beta.is_finite() {
        return Err(G3pError::InvalidParams {
            gamma: 1,
            alpha,
            beta,
        });
    }
    if x.is_nan() || x < 0.0 {
        return Err(G3pError::Domain(x));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(survival_gamma1(alpha, beta, x).clamp(0.0, 1.0))
}

/// `P(X > x)` for `X ~ G3p(1, α, β)`, written in terms of `s = αx − a`,
/// `a = β/(2α)` so that the exponent becomes `a² − s²`.
fn survival_gamma1(alpha: f64, beta: f64, x: f64) -> f64 {
    let a = beta / (2.0 * alpha);
    let ax = alpha * x;
    let s = ax - a;
    if a >= 0.0 {
        let den = (-a * a).exp() + SQRT_PI * a * erfc(-a);
        let num = if s >= 0.0 {
            (-s * s).exp() * (1.0 + SQRT_PI * a * erfcx(s))
        } else {
            (-s * s).exp() + SQRT_PI * a * erfc(s)
        };
        num / den
    } else {
        // b = −a > 0 and s = αx + b > b
        let b = -a;
        let log_scale = -ax * (ax + 2.0 * b);
        let num = mills_complement(s) + SQRT_PI * ax * erfcx(s);
        log_scale.exp() * num / mills_complement(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_pieces, QuadOptions};

    fn p(g: u32, a: f64, b: f64) -> G3pParams {
        G3pParams::new(g, a, b).unwrap()
    }

    // unnormalized density integrated on a breakpoint grid
    fn quad_moment(par: &G3pParams, k: i32) -> f64 {
        let m = mode(par);
        let s = 1.0 / par.alpha;
        let hi = m + 40.0 * s + 40.0 / (-par.beta).max(1e-3).min(1e3);
        let lnf = |x: f64| par.gamma as f64 * x.ln() - par.alpha * par.alpha * x * x + par.beta * x;
        let top = lnf(m);
        let pts: Vec<f64> = (0..=200).map(|i| hi * i as f64 / 200.0).collect();
        let opts = QuadOptions::default();
        let z = integrate_pieces(|x| if x > 0.0 { (lnf(x) - top).exp() } else { 0.0 }, &pts, opts).value;
        integrate_pieces(|x| if x > 0.0 { x.powi(k) * (lnf(x) - top).exp() } else { 0.0 }, &pts, opts).value / z
    }

    #[test]
    fn scale_equivariance_of_mean() {
        let a = moments(&p(2, 2.0, 2.0)).unwrap();
        let b = moments(&p(2, 1.0, 1.0)).unwrap();
        assert!((a.mu - 0.5 * b.mu).abs() < 1e-14);
        assert!((a.sigma2 - 0.25 * b.sigma2).abs() < 1e-14);
    }

    #[test]
    fn gamma_limit_moments() {
        let m = moments(&p(3, 1.0, -50.0)).unwrap();
        assert!((m.mu - 4.0 / 50.0).abs() < 1e-15);
        assert!((m.sigma2 - 4.0 / 2500.0).abs() < 1e-15);
        // the exact moments are close to the limit there
        let e = exact_moments(&p(3, 1.0, -50.0)).unwrap();
        assert!((e.mu - m.mu).abs() / m.mu < 0.01);
        assert!((e.sigma2 - m.sigma2).abs() / m.sigma2 < 0.03);
        let q1 = quad_moment(&p(3, 1.0, -50.0), 1);
        assert!((e.mu - q1).abs() / q1 < 1e-10);
    }

    #[test]
    fn exact_moments_match_quadrature() {
        for &(g, a, b) in &[(4, 2.75, 3.3), (1, 1.0, 0.7), (1, 0.5, -4.0), (1, 2.0, 40.0), (7, 1.3, -2.0), (50, 0.5, 1.0)] {
            let par = p(g, a, b);
            let m = exact_moments(&par).unwrap();
            let q1 = quad_moment(&par, 1);
            let q2 = quad_moment(&par, 2) - q1 * q1;
            assert!((m.mu - q1).abs() / q1 < 1e-10, "{par:?} mean {} vs {}", m.mu, q1);
            assert!((m.sigma2 - q2).abs() / q2 < 1e-8, "{par:?} var {} vs {}", m.sigma2, q2);
        }
        // frozen reference for the figure parameters
        let m = exact_moments(&p(4, 2.75, 3.3)).unwrap();
        assert!((m.mu - 0.661_060_593_183_588_1).abs() < 1e-12);
        assert!((m.sigma2 - 0.037_808_806_685_603_31).abs() < 1e-12);
    }

    #[test]
    fn density_normalizes_and_peaks_at_mode() {
        let par = p(4, 2.75, 3.3);
        let pts: Vec<f64> = (0..=100).map(|i| 6.0 * i as f64 / 100.0).collect();
        let mass = integrate_pieces(
            |x| if x > 0.0 { log_density(&par, x).unwrap().exp() } else { 0.0 },
            &pts,
            QuadOptions::default(),
        )
        .value;
        assert!((mass - 1.0).abs() < 1e-8);
        let m = mode(&par);
        let h = 1e-5;
        let d = (log_density(&par, m + h).unwrap() - log_density(&par, m - h).unwrap()) / (2.0 * h);
        assert!(d.abs() < 1e-6);
        assert!((log_density(&par, 1.0).unwrap() - -0.783_537_163_950_366_8).abs() < 1e-10);
        assert!(log_density(&par, 0.0).is_err());
    }

    #[test]
    fn cdf_gamma1_limits_and_oracle() {
        assert_eq!(cdf_gamma1(2.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(cdf_gamma1(2.0, 1.0, f64::INFINITY).unwrap(), 1.0);
        assert!((cdf_gamma1(2.0, 1.0, 1e3).unwrap() - 1.0).abs() < 1e-15);
        assert!(cdf_gamma1(2.0, 1.0, -1.0).is_err());
        let par = p(1, 2.0, 1.0);
        let pts: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64 / 20.0).collect();
        let f = integrate_pieces(|x| log_density(&par, x.max(1e-300)).unwrap().exp(), &pts, QuadOptions::default()).value;
        let c = cdf_gamma1(2.0, 1.0, 0.5).unwrap();
        assert!((c - f).abs() < 1e-12);
        assert!((c - 0.536_353_924_276_600_1).abs() < 1e-12);
        let mut prev = 0.0;
        for i in 1..400 {
            let v = cdf_gamma1(0.7, -3.0, i as f64 * 0.01).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(regime_of(3, -20.0), ApproxRegime::GammaLimit);
        assert_eq!(regime_of(300, 1.0), ApproxRegime::NormalGamma);
        assert_eq!(regime_of(3, 50.0), ApproxRegime::NormalBeta);
        assert_eq!(regime_of(3, 49.0), ApproxRegime::Exact);
    }

    #[test]
    fn normal_gamma_moments_match_exact_for_large_gamma() {
        let par = p(150, 1.0, 2.0);
        let e = exact_moments(&par).unwrap();
        let n = unit_normal_gamma(150, 2.0);
        assert!((e.mu - n.mu).abs() / e.mu < 1e-3);
        assert!((e.sigma2 - n.sigma2).abs() / e.sigma2 < 0.02);
    }

    #[test]
    fn normal_gamma_variance_survives_extreme_ratios() {
        for rho in [1e4, 1e8, -1e4] {
            let m = unit_normal_gamma(1225, rho);
            assert!(m.mu > 0.0 && m.sigma2 > 0.0 && m.sigma2.is_finite(), "{rho}: {m:?}");
        }
        // large positive ratio approaches the Normal(ρ/2, ½) limit
        assert!((unit_normal_gamma(1225, 1e8).sigma2 - 0.5).abs() < 1e-6);
    }
}
