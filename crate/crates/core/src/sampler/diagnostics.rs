use super::{edges, ChainState, GroupData};
use crate::error::SamplerError;
use nalgebra::DVector;

/// Unnormalized log joint posterior of `(Ω, λ², η, τ², ζ, R)`.
///
/// Gaussian likelihood, the `N_K(0, Δ_ij R Δ_ij)` edge prior, and the
/// inverse-gamma augmentation of the half-Cauchy scales, with densities taken
/// with respect to the variances `λ²` and `τ²`. Returns `−∞` when some `Ω_k`
/// is not positive definite.
pub fn log_joint_posterior(state: &ChainState, data: &GroupData) -> f64 {
    let p = state.p();
    let kk = state.k();
    let mut lp = 0.0;
    for k in 0..kk {
        let Some(chol) = state.omega[k].clone().cholesky() else {
            return f64::NEG_INFINITY;
        };
        let ln_det = 2.0 * chol.l().diagonal().map(f64::ln).sum();
        let trace = data.scatter[k].component_mul(&state.omega[k]).sum();
        lp += 0.5 * data.n[k] as f64 * ln_det - 0.5 * trace;
    }

    let Some(r_chol) = state.r.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let ln_det_r = 2.0 * r_chol.l().diagonal().map(f64::ln).sum();
    let mut x = DVector::zeros(kk);
    for (i, j) in edges(p) {
        let mut ln_delta = 0.0;
        for k in 0..kk {
            let d = state.delta(i, j, k);
            ln_delta += d.ln();
            x[k] = state.omega[k][(i, j)] / d;
        }
        let q = x.dot(&r_chol.solve(&x));
        lp += -ln_delta - 0.5 * ln_det_r - 0.5 * q;
        for k in 0..kk {
            lp += half_cauchy_aug(state.lambda2[k][(i, j)], state.eta[k][(i, j)]);
        }
    }
    for k in 0..kk {
        lp += half_cauchy_aug(state.tau2[k], state.zeta[k]);
    }
    lp
}

/// `log IG(v; ½, 1/a) + log IG(a; ½, 1)` without constants.
#[inline]
fn half_cauchy_aug(v: f64, a: f64) -> f64 {
    -1.5 * v.ln() - 1.0 / (a * v) - 2.0 * a.ln() - 1.0 / a
}

/// Gelman–Rubin potential scale reduction factor of one scalar.
///
/// Chains are trimmed to the shortest length `T`. With `W` the mean
/// within-chain variance and `B/T` the variance of the chain means,
/// `PSRF = √(((T−1)/T·W + B/T) / W)`; a zero `W` gives 1.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64, SamplerError> {
    let m = chains.len();
    if m < 2 {
        return Err(SamplerError::Config(format!("psrf needs at least 2 chains, got {m}")));
    }
    let t = chains.iter().map(Vec::len).min().unwrap_or(0);
    if t < 10 {
        return Err(SamplerError::Config(format!("psrf needs at least 10 draws, got {t}")));
    }
    let tf = t as f64;
    let mut means = Vec::with_capacity(m);
    let mut w = 0.0;
    for c in chains {
        let c = &c[..t];
        let mean = c.iter().sum::<f64>() / tf;
        w += c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (tf - 1.0);
        means.push(mean);
    }
    w /= m as f64;
    if !(w > 0.0) {
        return Ok(1.0);
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_t = means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>() / (m as f64 - 1.0);
    let v_hat = (tf - 1.0) / tf * w + b_over_t;
    Ok((v_hat / w).sqrt())
}

/// Column-wise [`psrf`]: `chains[c][t][s]` is scalar `s` at draw `t` of chain `c`.
pub fn psrf_columns(chains: &[Vec<Vec<f64>>]) -> Result<Vec<f64>, SamplerError> {
    let ns = chains.first().and_then(|c| c.first()).map_or(0, Vec::len);
    (0..ns)
        .map(|s| {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|row| row[s]).collect()).collect();
            psrf(&per_chain)
        })
        .collect()
}
