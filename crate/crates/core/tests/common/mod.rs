//! Test-side oracles, independent of the library's special functions.
#![allow(dead_code)]

use mghs_core::sampler::{edges, init_state, ChainState};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, InverseGamma};

/// CDF of `G3p(γ, 1, ρ)` tabulated by Simpson's rule on the unnormalized
/// density, linearly interpolated between nodes.
pub struct GridCdf {
    h: f64,
    cum: Vec<f64>,
}

impl GridCdf {
    pub fn new(gamma: u32, rho: f64, n: usize) -> Self {
        let g = gamma as f64;
        let lnf = |x: f64| if x > 0.0 { g * x.ln() - x * x + rho * x } else { f64::NEG_INFINITY };
        let mode = (rho + (rho * rho + 8.0 * g).sqrt()) / 4.0;
        let top = lnf(mode);
        let mut hi = mode + 1.0;
        while lnf(hi) - top > -60.0 {
            hi += 1.0;
        }
        let h = hi / n as f64;
        let f: Vec<f64> = (0..=n).map(|i| (lnf(i as f64 * h) - top).exp()).collect();
        let mut cum = vec![0.0; n + 1];
        // Simpson on pairs of panels, trapezoid-corrected midpoints
        for i in 1..=n {
            let a = (i - 1) as f64 * h;
            let m = (lnf(a + 0.5 * h) - top).exp();
            cum[i] = cum[i - 1] + h / 6.0 * (f[i - 1] + 4.0 * m + f[i]);
        }
        let total = cum[n];
        for c in cum.iter_mut() {
            *c /= total;
        }
        Self { h, cum }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let u = x / self.h;
        let i = u.floor() as usize;
        if i + 1 >= self.cum.len() {
            return 1.0;
        }
        let w = u - i as f64;
        self.cum[i] * (1.0 - w) + self.cum[i + 1] * w
    }
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic<F: Fn(f64) -> f64>(mut xs: Vec<f64>, cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `P(κ ≥ t)` by Simpson quadrature of the κ density on `[t, 1]`, in the
/// variable `v = √(1−κ)` that removes the square-root kink at `κ = 1`.
pub fn kappa_tail_oracle(alpha: f64, beta: f64, t: f64) -> f64 {
    // κ = 1/(1+u²), f(u) ∝ u e^{−αu² + βu}, |du/dκ| = 1/(2κ²u), |dκ/dv| = 2v
    let ln_g = |v: f64| {
        let k = 1.0 - v * v;
        if k <= 0.0 || v <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let u2 = v * v / k;
        -alpha * u2 + beta * u2.sqrt() - 2.0 * k.ln() + v.ln()
    };
    let n = 20_000;
    let top = (0..=n).map(|i| ln_g(i as f64 / n as f64)).fold(f64::NEG_INFINITY, f64::max);
    let g = |v: f64| (ln_g(v) - top).exp();
    let total = simpson(g, 0.0, 1.0, n);
    simpson(g, 0.0, (1.0 - t).sqrt(), n) / total
}

/// Log joint density with every normalizing constant, built from dense
/// covariance matrices rather than the library's whitened form.
pub fn log_joint_oracle(s: &ChainState, ys: &[DMatrix<f64>]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let (kk, p) = (s.k(), s.p());
    let mut lp = 0.0;
    for k in 0..kk {
        let y = &ys[k];
        let n = y.nrows() as f64;
        let det = s.omega[k].clone().lu().determinant();
        let mut quad = 0.0;
        for row in y.row_iter() {
            let v = row.transpose();
            quad += (v.transpose() * &s.omega[k] * &v)[(0, 0)];
        }
        lp += 0.5 * n * det.ln() - 0.5 * n * p as f64 * ln2pi - 0.5 * quad;
    }
    for (i, j) in edges(p) {
        let d = DMatrix::from_fn(kk, kk, |a, b| {
            if a == b {
                (s.tau2[a] * s.lambda2[a][(i, j)]).sqrt()
            } else {
                0.0
            }
        });
        let cov = &d * &s.r * &d;
        let w = DMatrix::from_fn(kk, 1, |k, _| s.omega[k][(i, j)]);
        let q = (w.transpose() * cov.clone().try_inverse().unwrap() * &w)[(0, 0)];
        lp += -0.5 * kk as f64 * ln2pi - 0.5 * cov.lu().determinant().ln() - 0.5 * q;
        for k in 0..kk {
            let (l2, e) = (s.lambda2[k][(i, j)], s.eta[k][(i, j)]);
            lp += InverseGamma::new(0.5, 1.0 / e).unwrap().ln_pdf(l2);
            lp += InverseGamma::new(0.5, 1.0).unwrap().ln_pdf(e);
        }
    }
    for k in 0..kk {
        lp += InverseGamma::new(0.5, 1.0 / s.zeta[k]).unwrap().ln_pdf(s.tau2[k]);
        lp += InverseGamma::new(0.5, 1.0).unwrap().ln_pdf(s.zeta[k]);
    }
    lp
}

pub fn random_state(kk: usize, p: usize, rng: &mut ChaCha8Rng) -> ChainState {
    let mut s = init_state(kk, p).unwrap();
    for k in 0..kk {
        let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.sample(StandardNormal));
        s.omega[k] = &a * a.transpose() / p as f64 + DMatrix::identity(p, p);
        s.sigma[k] = s.omega[k].clone().try_inverse().unwrap();
        for (i, j) in edges(p) {
            let (l2, e) = (rng.random_range(0.05..4.0), rng.random_range(0.1..3.0));
            s.lambda2[k][(i, j)] = l2;
            s.lambda2[k][(j, i)] = l2;
            s.eta[k][(i, j)] = e;
            s.eta[k][(j, i)] = e;
        }
        s.tau2[k] = rng.random_range(0.05..2.0);
        s.zeta[k] = rng.random_range(0.2..3.0);
    }
    let b = DMatrix::<f64>::from_fn(kk, kk + 2, |_, _| rng.sample(StandardNormal));
    let psi = &b * b.transpose();
    let r = DMatrix::from_fn(kk, kk, |a, c| psi[(a, c)] / (psi[(a, a)] * psi[(c, c)]).sqrt());
    s.set_r(r).unwrap();
    s
}
