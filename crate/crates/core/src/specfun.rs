//! Special functions behind the G3p kernels: Lambert W on both real
//! branches, the error-function family, and parabolic cylinder functions of
//! negative order.
//!
//! Parabolic cylinder values are carried in log space. For `ν > 0`
//!
//! ```text
//! D_{-ν}(z) = e^{-z²/4} / Γ(ν) · I(ν, z),   I(ν, z) = ∫₀^∞ t^{ν-1} e^{-t²/2 - z t} dt
//! ```
//!
//! and `I` is what the G3p normalizer and moments actually need, so it is
//! exposed directly through [`ln_pcf_integral`] and [`pcf_integral_ratio`].

use crate::error::SpecFunError;
use crate::quad::{integrate_pieces, QuadOptions};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Branch point of the Lambert W function, `-1/e`.
pub const W_BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

/// Order at and above which [`pcf_ratio`] switches to the large-order
/// approximation.
pub const PCF_RATIO_THRESHOLD: f64 = 200.0;

/// Largest `ν` accepted by the quadrature path.
pub const PCF_MAX_NU: f64 = 1.0e5;
/// Largest `|z|` accepted by the quadrature path.
pub const PCF_MAX_Z: f64 = 1.0e4;

const SQRT_PI: f64 = 1.772_453_850_905_516;
const LN_SQRT_HALF_PI: f64 = 0.225_791_352_644_727_43;
/// Below this argument the scaled functions come from `erfc` directly.
const ERFCX_CF_SWITCH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WBranch {
    Principal,
    NegativeOne,
}

/// Lambert W on the requested real branch.
pub fn lambert_w(x: f64, branch: WBranch) -> Result<f64, SpecFunError> {
    let domain = SpecFunError::Domain {
        what: "lambert_w",
        x,
    };
    if !x.is_finite() && !(x == f64::INFINITY && branch == WBranch::Principal) {
        return Err(domain);
    }
    // a few ulps below the branch point are treated as rounding noise
    if x < W_BRANCH_POINT {
        if x >= W_BRANCH_POINT - 4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return Err(domain);
    }
    match branch {
        WBranch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if x == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
        }
        WBranch::NegativeOne => {
            if x >= 0.0 {
                return Err(domain);
            }
        }
    }
    let p2 = 2.0 * (std::f64::consts::E * x + 1.0);
    if p2 <= 0.0 {
        return Ok(-1.0);
    }
    let p = p2.sqrt();
    let sgn = if branch == WBranch::Principal { 1.0 } else { -1.0 };
    let mut w = if p < 0.5 {
        -1.0 + sgn * p - p2 / 3.0 + sgn * 11.0 / 72.0 * p * p2
    } else if branch == WBranch::Principal {
        if x < 3.0 {
            let l = x.ln_1p();
            l * (1.0 - l.ln_1p() / (2.0 + l))
        } else {
            let l1 = x.ln();
            let l2 = l1.ln();
            l1 - l2 + l2 / l1
        }
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    if p < 1e-6 {
        // the series is exact to rounding this close to the branch point
        return Ok(w);
    }
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    // near the branch point rounding keeps the step from settling
    if (w * w.exp() - x).abs() <= 1e-13 * x.abs() {
        return Ok(w);
    }
    Err(SpecFunError::NoConvergence { what: "lambert_w" })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErfValues {
    pub erf: f64,
    pub erfc: f64,
    pub normal_cdf: f64,
}

pub fn erf_family(x: f64) -> ErfValues {
    ErfValues {
        erf: libm::erf(x),
        erfc: libm::erfc(x),
        normal_cdf: normal_cdf(x),
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Continued-fraction tail `K(y)` with `erfcx(y) = 1 / (√π (y + K))`.
fn erfc_cf_tail(y: f64) -> f64 {
    // term counts reach full double precision on each range
    let terms = if y < 6.0 {
        32
    } else if y < 10.0 {
        16
    } else {
        10
    };
    let mut tail = 0.0;
    for n in (1..=terms).rev() {
        tail = (n as f64 * 0.5) / (y + tail);
    }
    tail
}

/// Scaled complementary error function `e^{y²} erfc(y)`.
pub fn erfcx(y: f64) -> f64 {
    if y >= ERFCX_CF_SWITCH {
        1.0 / (SQRT_PI * (y + erfc_cf_tail(y)))
    } else {
        (y * y).exp() * libm::erfc(y)
    }
}

/// `ln erfcx(y)`, finite for every finite `y`.
pub fn ln_erfcx(y: f64) -> f64 {
    if y >= ERFCX_CF_SWITCH {
        -(SQRT_PI * (y + erfc_cf_tail(y))).ln()
    } else {
        y * y + libm::erfc(y).ln()
    }
}

/// `1 − √π·y·erfcx(y)`, free of cancellation for large positive `y`.
pub fn mills_complement(y: f64) -> f64 {
    if y >= ERFCX_CF_SWITCH {
        let k = erfc_cf_tail(y);
        k / (y + k)
    } else {
        1.0 - SQRT_PI * y * erfcx(y)
    }
}

/// Order of a parabolic cylinder function `D_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcfOrder(pub f64);

/// A real number stored as `sign · exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSigned {
    pub ln_abs: f64,
    pub sign: f64,
}

impl LogSigned {
    pub fn value(self) -> f64 {
        self.sign * self.ln_abs.exp()
    }
}

fn check_range(nu: f64, z: f64) -> Result<(), SpecFunError> {
    if !(nu.is_finite() && z.is_finite()) || nu > PCF_MAX_NU || z.abs() > PCF_MAX_Z {
        return Err(SpecFunError::OutOfRange {
            what: "parabolic cylinder",
            order: -nu,
            z,
        });
    }
    Ok(())
}

/// `ln I(ν, z)` for `ν ≥ 1`.
pub fn ln_pcf_integral(nu: f64, z: f64) -> Result<f64, SpecFunError> {
    if nu < 1.0 || nu.is_nan() {
        return Err(SpecFunError::Domain {
            what: "ln_pcf_integral",
            x: nu,
        });
    }
    check_range(nu, z)?;
    let y = z * FRAC_1_SQRT_2;
    if nu == 1.0 {
        return Ok(LN_SQRT_HALF_PI + ln_erfcx(y));
    }
    if nu == 2.0 {
        return Ok(mills_complement(y).ln());
    }
    Ok(ln_pcf_integral_quad(nu, z))
}

/// Log-space quadrature of `I(ν, z)`, independent of the closed forms.
pub fn ln_pcf_integral_quad(nu: f64, z: f64) -> f64 {
    let a = nu - 1.0;
    let phi = |t: f64| {
        if t <= 0.0 {
            if a == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            a * t.ln() - 0.5 * t * t - z * t
        }
    };
    let peak = if a > 0.0 {
        // positive root of t² + z t − a, written to avoid cancellation
        let disc = (z * z + 4.0 * a).sqrt();
        if z < 0.0 {
            0.5 * (-z + disc)
        } else {
            2.0 * a / (z + disc)
        }
    } else {
        (-z).max(0.0)
    };
    let width = if peak > 0.0 {
        1.0 / (a / (peak * peak) + 1.0).sqrt()
    } else {
        1.0 / (z.abs() + 1.0)
    };
    let phi_max = phi(peak);
    let cutoff = -60.0;
    let mut hi = peak + width;
    let mut step = width;
    while phi(hi) - phi_max > cutoff {
        step *= 2.0;
        hi = peak + step;
    }
    let mut lo = (peak - width).max(0.0);
    step = width;
    while lo > 0.0 && phi(lo) - phi_max > cutoff {
        step *= 2.0;
        lo = (peak - step).max(0.0);
    }
    let mut pts = vec![lo];
    for cand in [peak - 4.0 * width, peak, peak + 4.0 * width, hi] {
        let last = *pts.last().expect("non-empty");
        if cand > last && cand <= hi {
            pts.push(cand);
        }
    }
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-14,
        max_intervals: 400,
    };
    let r = integrate_pieces(|t| (phi(t) - phi_max).exp(), &pts, opts);
    phi_max + r.value.ln()
}

/// Continued fraction `I(ν+1)/I(ν) = ν / (z + (ν+1)/(z + (ν+2)/(z + …)))`,
/// fast for moderately large positive `z`.
fn ratio_cf(nu: f64, z: f64) -> Option<f64> {
    // modified Lentz
    let tiny = 1e-300;
    let mut f = z.max(tiny);
    let mut c = f;
    let mut d = 0.0;
    for n in 1..=500 {
        let an = nu + n as f64;
        d = z + an * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Some(nu / f);
        }
    }
    None
}

/// Largest integer order served by the closed-form recursion.
const SMALL_ORDER_MAX: usize = 5;

/// `[I(2)/I(1), I(3)/I(2), …]` up to order `SMALL_ORDER_MAX`, from the
/// closed forms at orders 1, 2 and the recursion
/// `I(ν+1) = (ν−1) I(ν−1) − z I(ν)`. Stable for `z < 8`.
pub fn pcf_integral_ratios_small(z: f64) -> [f64; SMALL_ORDER_MAX] {
    let y = z * FRAC_1_SQRT_2;
    let sqrt_half_pi = (0.5 * PI).sqrt();
    let mut out = [0.0; SMALL_ORDER_MAX];
    out[0] = if y < 0.0 {
        ((-ln_erfcx(y)).exp() - SQRT_PI * y) / sqrt_half_pi
    } else {
        mills_complement(y) / (sqrt_half_pi * erfcx(y))
    };
    for k in 1..SMALL_ORDER_MAX {
        out[k] = k as f64 / out[k - 1] - z;
    }
    out
}

/// `I(ν+1, z) / I(ν, z)` for `ν ≥ 1`.
pub fn pcf_integral_ratio(nu: f64, z: f64) -> Result<f64, SpecFunError> {
    if nu < 1.0 || nu.is_nan() {
        return Err(SpecFunError::Domain {
            what: "pcf_integral_ratio",
            x: nu,
        });
    }
    check_range(nu, z)?;
    let small_integer = nu.fract() == 0.0 && nu <= SMALL_ORDER_MAX as f64;
    if z >= if small_integer { 8.0 } else { 2.0 } {
        if let Some(r) = ratio_cf(nu, z) {
            return Ok(r);
        }
    }
    if small_integer {
        return Ok(pcf_integral_ratios_small(z)[nu as usize - 1]);
    }
    Ok((ln_pcf_integral(nu + 1.0, z)? - ln_pcf_integral(nu, z)?).exp())
}

/// `D_v(z)` in log form for `v = 0` or `v ≤ −1`.
pub fn pcf_d(order: PcfOrder, z: f64) -> Result<LogSigned, SpecFunError> {
    let v = order.0;
    if v == 0.0 {
        return Ok(LogSigned {
            ln_abs: -0.25 * z * z,
            sign: 1.0,
        });
    }
    if v > -1.0 || v.is_nan() {
        return Err(SpecFunError::OutOfRange {
            what: "pcf_d",
            order: v,
            z,
        });
    }
    let nu = -v;
    Ok(LogSigned {
        ln_abs: -0.25 * z * z - ln_gamma(nu) + ln_pcf_integral(nu, z)?,
        sign: 1.0,
    })
}

/// Large-order approximation of `ν D_{−ν−1}(z) / D_{−ν}(z)`.
pub fn pcf_ratio_approx(nu: f64, z: f64) -> f64 {
    0.5 * (-z + (z * z + 4.0 * nu - 2.0).sqrt())
}

/// `ν D_{−ν−1}(z) / D_{−ν}(z)` with the default switch order.
pub fn pcf_ratio(nu: f64, z: f64) -> Result<f64, SpecFunError> {
    pcf_ratio_with_threshold(nu, z, PCF_RATIO_THRESHOLD)
}

pub fn pcf_ratio_with_threshold(nu: f64, z: f64, threshold: f64) -> Result<f64, SpecFunError> {
    if nu < 1.0 || nu.is_nan() {
        return Err(SpecFunError::Domain {
            what: "pcf_ratio",
            x: nu,
        });
    }
    if nu >= threshold {
        return Ok(pcf_ratio_approx(nu, z));
    }
    // ν D_{−ν−1}/D_{−ν} = I(ν+1)/I(ν) since Γ(ν+1) = νΓ(ν)
    pcf_integral_ratio(nu, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn lambert_trivial_points() {
        assert_eq!(lambert_w(0.0, WBranch::Principal).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E, WBranch::Principal).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w(W_BRANCH_POINT, WBranch::NegativeOne).unwrap(), -1.0);
    }

    #[test]
    fn lambert_negative_one_matches_bisection() {
        // bisection on w e^w over (−50, −1), where it is decreasing
        let target = -0.2;
        let (mut lo, mut hi) = (-50.0_f64, -1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = lambert_w(target, WBranch::NegativeOne).unwrap();
        assert!((w - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((w - -2.542_641_357_773_526_3).abs() < 1e-13);
    }

    #[test]
    fn lambert_residuals_across_domain() {
        let mut xs: Vec<f64> = (0..200)
            .map(|i| W_BRANCH_POINT + (i as f64 + 0.5) * (-W_BRANCH_POINT) / 200.0)
            .collect();
        xs.extend([1e-300, 1e-10, 0.3, 2.0, 50.0, 1e5, 1e200]);
        for &x in &xs {
            let w0 = lambert_w(x, WBranch::Principal).unwrap();
            assert!(w0 >= -1.0);
            let res = (w0 * w0.exp() - x).abs() / x.abs().max(1e-300);
            assert!(res <= 1e-12, "W0({x}) residual {res}");
            if x < 0.0 {
                let wm = lambert_w(x, WBranch::NegativeOne).unwrap();
                assert!(wm <= -1.0);
                let res = (wm * wm.exp() - x).abs() / x.abs();
                assert!(res <= 1e-12, "W-1({x}) residual {res}");
            }
        }
        for x in [-1e-300, -1e-100, -1e-8] {
            let wm = lambert_w(x, WBranch::NegativeOne).unwrap();
            assert!(rel(wm * wm.exp(), x) <= 1e-12);
        }
    }

    #[test]
    fn lambert_domain_errors() {
        assert!(lambert_w(-0.4, WBranch::Principal).is_err());
        assert!(lambert_w(0.0, WBranch::NegativeOne).is_err());
        assert!(lambert_w(1.0, WBranch::NegativeOne).is_err());
    }

    #[test]
    fn erf_basics() {
        let v = erf_family(0.0);
        assert_eq!(v.erf, 0.0);
        assert_eq!(v.erfc, 1.0);
        for i in -100..=100 {
            let x = i as f64 / 10.0;
            let v = erf_family(x);
            assert!((v.erf + v.erfc - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn normal_cdf_matches_simpson() {
        // Simpson on the density over [0, 1.96]
        let n = 2000;
        let h = 1.96 / n as f64;
        let dens = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let mut s = dens(0.0) + dens(1.96);
        for i in 1..n {
            s += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 0.5 + s * h / 3.0;
        assert!(rel(normal_cdf(1.96), oracle) < 1e-13);
        assert!(rel(normal_cdf(1.96), 0.975_002_104_851_779_6) < 1e-14);
    }

    #[test]
    fn erfcx_continuity_at_switch() {
        // frozen 40-digit references on both sides of the switch
        assert!(rel(erfcx(2.0), 0.255_395_676_310_505_74) < 1e-14);
        assert!(rel(erfcx(ERFCX_CF_SWITCH), 0.136_999_457_625_061_39) < 1e-14);
        assert!(rel(erfcx(ERFCX_CF_SWITCH - 1e-12), 0.136_999_457_625_061_39) < 1e-11);
        assert!(rel(mills_complement(ERFCX_CF_SWITCH), 0.028_699_135_041_971_51) < 1e-13);
        assert!(rel(mills_complement(ERFCX_CF_SWITCH - 1e-12), 0.028_699_135_041_971_51) < 1e-10);
        assert!(rel(ln_erfcx(30.0), -(SQRT_PI * 30.0).ln() + (1.0 - 1.0 / 1800.0_f64).ln()) < 1e-6);
    }

    #[test]
    fn pcf_trivial_orders() {
        let d0 = pcf_d(PcfOrder(0.0), 1.2).unwrap();
        assert!((d0.ln_abs - -1.44 / 4.0).abs() < 1e-15);
        let d1 = pcf_d(PcfOrder(-1.0), 0.0).unwrap().value();
        assert!(rel(d1, (PI / 2.0).sqrt()) < 1e-14);
        assert!(pcf_d(PcfOrder(0.5), 1.0).is_err());
    }

    #[test]
    fn pcf_frozen_values() {
        // high-precision references (50-digit arithmetic)
        let d = pcf_d(PcfOrder(-5.0), -2.3).unwrap();
        assert!((d.ln_abs - 3.202_094_667_951_231_7).abs() < 1e-10);
        let d = pcf_d(PcfOrder(-30.0), 5.5).unwrap();
        assert!((d.ln_abs - -67.524_284_029_705_03).abs() < 1e-9);
        let d = pcf_d(PcfOrder(-100.0), -20.0).unwrap();
        assert!((d.ln_abs - 48.339_942_819_561_59).abs() < 1e-9);
        let d = pcf_d(PcfOrder(-1.0), 40.0).unwrap();
        assert!((d.ln_abs - -403.689_503_480_549_1).abs() < 1e-9);
    }

    #[test]
    fn pcf_closed_forms_agree_with_quadrature() {
        for &z in &[-30.0, -5.0, -0.3, 0.0, 0.7, 2.9, 3.0, 12.0, 80.0] {
            for nu in [1.0, 2.0] {
                let a = ln_pcf_integral(nu, z).unwrap();
                let b = ln_pcf_integral_quad(nu, z);
                assert!((a - b).abs() < 1e-11 * a.abs().max(1.0), "nu {nu} z {z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pcf_recurrence() {
        // D_v = z D_{v−1} − (v−1) D_{v−2}
        let z = 0.7;
        let d = |v: f64| pcf_d(PcfOrder(v), z).unwrap().value();
        let lhs = d(-1.0);
        let rhs = z * d(-2.0) + 2.0 * d(-3.0);
        assert!(rel(lhs, rhs) < 1e-8);
        for nu in [1.0, 2.5, 7.0, 30.0, 98.0] {
            for z in [-20.0, -4.0, 0.0, 1.5, 9.0, 20.0] {
                let l = |m: f64| pcf_d(PcfOrder(-nu - m), z).unwrap().ln_abs;
                // D_{−ν} = z D_{−ν−1} + (ν+1) D_{−ν−2}, scaled by D_{−ν}
                let r1 = (l(1.0) - l(0.0)).exp();
                let r2 = (l(2.0) - l(0.0)).exp();
                let res = (1.0 - z * r1 - (nu + 1.0) * r2).abs();
                assert!(res < 1e-8, "nu {nu} z {z}: residual {res}");
            }
        }
    }

    #[test]
    fn pcf_ratio_values() {
        assert!(rel(pcf_ratio(2.0, 1.0).unwrap(), 0.904_271_233_329_691_8) < 1e-12);
        let big = pcf_ratio(1e6, 0.0).unwrap();
        assert!(rel(big, (4e6_f64 - 2.0).sqrt() / 2.0) < 1e-15);
        // ratio form against the direct integral path
        for (nu, z) in [(3.0, -1.0), (7.5, 4.0), (40.0, 2.5)] {
            let direct = (ln_pcf_integral_quad(nu + 1.0, z) - ln_pcf_integral_quad(nu, z)).exp();
            assert!(rel(pcf_ratio(nu, z).unwrap(), direct) < 1e-11);
        }
    }

    #[test]
    fn pcf_ratio_switch_continuity_near_zero() {
        for z in [-0.1, 0.0, 0.05, 0.1] {
            let below = pcf_ratio_with_threshold(200.0, z, f64::INFINITY).unwrap();
            let above = pcf_ratio(200.0, z).unwrap();
            assert!((below - above).abs() < 1e-4, "z {z}: {below} vs {above}");
        }
    }

    #[test]
    fn pcf_out_of_range() {
        assert!(ln_pcf_integral(2e5, 0.0).is_err());
        assert!(ln_pcf_integral(3.0, 2e4).is_err());
    }
}
