use super::{conditional_coefs, edges, ChainState, GroupData};
use crate::error::SamplerError;
use crate::g3p::{G3pParams, G3pSampler};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};

/// Ridge added once to a matrix whose Cholesky factorization fails.
pub const JITTER: f64 = 1e-10;

fn cholesky_with_jitter(mut m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let t = m.transpose();
    m = (m + t) * 0.5;
    for i in 0..m.nrows() {
        m[(i, i)] += JITTER;
    }
    m.cholesky()
}

/// `b / E` with `E ~ Exp(1)`: a draw from InverseGamma(1, b).
fn inv_gamma_one<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    b / e
}

/// Gibbs update of column `j` of `Ω_k`, with `Σ_k` kept in step by rank-one algebra.
pub fn update_omega_column<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &GroupData,
    k: usize,
    j: usize,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let p = state.p();
    let m = p - 1;
    let idx: Vec<usize> = (0..p).filter(|&i| i != j).collect();
    let s = &data.scatter[k];
    let s_jj = s[(j, j)];
    let mu = state.mu[k];
    let tau2 = state.tau2[k];

    // O = Ω_{-j}⁻¹ = Σ_{-j} − σ_j σ_jᵀ / σ_jj
    let o = {
        let sig = &state.sigma[k];
        let sjj = sig[(j, j)];
        DMatrix::from_fn(m, m, |a, b| {
            let (ia, ib) = (idx[a], idx[b]);
            sig[(ia, ib)] - sig[(ia, j)] * sig[(ib, j)] / sjj
        })
    };

    let mut w = &o * s_jj;
    let mut rhs = DVector::zeros(m);
    for (a, &i) in idx.iter().enumerate() {
        let delta = (tau2 * state.lambda2[k][(i, j)]).sqrt();
        let d = delta * delta * mu;
        w[(a, a)] += 1.0 / d;
        // D⁻¹ m with m_i = δ c_i
        rhs[a] = state.cond_mean_factor(i, j, k) / (delta * mu) - s[(i, j)];
    }
    let chol = cholesky_with_jitter(w).ok_or(SamplerError::NotPositiveDefinite {
        iteration: state.iteration,
        group: k,
        column: j,
        what: "precision of the column draw",
    })?;
    let mut v = chol.solve(&rhs);
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or(SamplerError::NotPositiveDefinite {
            iteration: state.iteration,
            group: k,
            column: j,
            what: "triangular solve",
        })?;
    v += noise;

    let shape = data.n[k] as f64 / 2.0 + 1.0;
    let gamma: f64 = Gamma::new(shape, 2.0 / s_jj)
        .map_err(|e| SamplerError::Data(format!("group {k} column {j}: {e}")))?
        .sample(rng);

    let ov = &o * &v;
    let omega = &mut state.omega[k];
    for (a, &i) in idx.iter().enumerate() {
        omega[(i, j)] = v[a];
        omega[(j, i)] = v[a];
    }
    omega[(j, j)] = gamma + v.dot(&ov);

    let sig = &mut state.sigma[k];
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate().skip(a) {
            let val = o[(a, b)] + ov[a] * ov[b] / gamma;
            sig[(ia, ib)] = val;
            sig[(ib, ia)] = val;
        }
        sig[(ia, j)] = -ov[a] / gamma;
        sig[(j, ia)] = -ov[a] / gamma;
    }
    sig[(j, j)] = 1.0 / gamma;
    Ok(())
}

/// Draws `λ²_{ij,k}` then `η_{ij,k}` for every `i ≠ j`.
pub fn update_shrinkage_column<R: Rng + ?Sized>(
    state: &mut ChainState,
    k: usize,
    j: usize,
    sampler: &mut G3pSampler<'_>,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let p = state.p();
    let mu = state.mu[k];
    let tau2 = state.tau2[k];
    for i in (0..p).filter(|&i| i != j) {
        let w = state.omega[k][(i, j)];
        let alpha = 1.0 / state.eta[k][(i, j)] + w * w / (2.0 * tau2 * mu);
        let beta = w * state.cond_mean_factor(i, j, k) / (tau2.sqrt() * mu);
        let u = sampler.sample(&G3pParams::new(1, alpha.sqrt(), beta)?, rng)?;
        let l2 = 1.0 / (u * u);
        let eta = inv_gamma_one(1.0 + 1.0 / l2, rng);
        state.lambda2[k][(i, j)] = l2;
        state.lambda2[k][(j, i)] = l2;
        state.eta[k][(i, j)] = eta;
        state.eta[k][(j, i)] = eta;
    }
    Ok(())
}

/// Draws `τ²_k` then `ζ_k` for every group.
pub fn update_global_shrinkage<R: Rng + ?Sized>(
    state: &mut ChainState,
    sampler: &mut G3pSampler<'_>,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let p = state.p();
    let order = (p * (p - 1) / 2) as u32;
    for k in 0..state.k() {
        let mu = state.mu[k];
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (i, j) in edges(p) {
            let w = state.omega[k][(i, j)];
            let l2 = state.lambda2[k][(i, j)];
            quad += w * w / (l2 * mu);
            lin += w * state.cond_mean_factor(i, j, k) / (l2.sqrt() * mu);
        }
        let alpha = 1.0 / state.zeta[k] + 0.5 * quad;
        let u = sampler.sample(&G3pParams::new(order, alpha.sqrt(), lin)?, rng)?;
        let tau2 = 1.0 / (u * u);
        state.tau2[k] = tau2;
        state.zeta[k] = inv_gamma_one(1.0 + 1.0 / tau2, rng);
    }
    Ok(())
}

/// `ε_{ij,k} = ω^k_ij / V_k` with `V_k = √(Σ_{i<j} (ω^k_ij)²)`; rows follow `edge_index`.
pub fn expanded_edges(state: &ChainState) -> DMatrix<f64> {
    let p = state.p();
    let kk = state.k();
    let ne = p * (p - 1) / 2;
    let mut eps = DMatrix::zeros(ne, kk);
    for k in 0..kk {
        for (e, (i, j)) in edges(p).enumerate() {
            eps[(e, k)] = state.omega[k][(i, j)];
        }
        let v = eps.column(k).norm();
        if v > 0.0 {
            eps.column_mut(k).unscale_mut(v);
        }
    }
    eps
}

/// Proposals of `R` with some conditional variance `μ_k` below this are
/// rejected. Near that boundary the edge priors become degenerate and the
/// chain can no longer leave it in floating point.
pub const MIN_CONDITIONAL_VARIANCE: f64 = 1e-8;

/// Parameter-expanded MH step for `R`; returns whether the proposal was accepted.
/// A no-op returning `false` when `K = 1`.
pub fn update_r<R: Rng + ?Sized>(state: &mut ChainState, rng: &mut R) -> Result<bool, SamplerError> {
    let kk = state.k();
    if kk < 2 {
        return Ok(false);
    }
    let p = state.p();
    let df = p * (p - 1) / 2;
    let fail = |what: &str| SamplerError::Correlation {
        iteration: state.iteration,
        what: what.to_string(),
    };

    // H = Σ_{i<j} Δ⁻¹ ε εᵀ Δ⁻¹
    let eps = expanded_edges(state);
    let mut h = DMatrix::zeros(kk, kk);
    let mut x = DVector::zeros(kk);
    for (e, (i, j)) in edges(p).enumerate() {
        for k in 0..kk {
            x[k] = eps[(e, k)] / state.delta(i, j, k);
        }
        h.ger(1.0, &x, &x, 1.0);
    }

    // Ψ ~ IW(df, H): with H = L Lᵀ and Bartlett factor A of Wishart(df, I),
    // Ψ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ, the inverse of L⁻ᵀ A Aᵀ L⁻¹ ~ Wishart(df, H⁻¹)
    let Some(h_chol) = cholesky_with_jitter(h) else {
        return Ok(false);
    };
    let mut a = DMatrix::zeros(kk, kk);
    for r in 0..kk {
        let chi = ChiSquared::new((df - r) as f64).map_err(|e| fail(&e.to_string()))?;
        a[(r, r)] = chi.sample(rng).sqrt();
        for c in 0..r {
            a[(r, c)] = rng.sample(StandardNormal);
        }
    }
    let a_inv_t = a
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(kk, kk))
        .ok_or_else(|| fail("Bartlett factor is singular"))?;
    let la = h_chol.l() * a_inv_t;
    let psi = &la * la.transpose();
    let d = DVector::from_fn(kk, |r, _| 1.0 / psi[(r, r)].sqrt());
    let mut r_star = DMatrix::from_fn(kk, kk, |r, c| psi[(r, c)] * d[r] * d[c]);
    for r in 0..kk {
        r_star[(r, r)] = 1.0;
        for c in 0..r {
            let v = 0.5 * (r_star[(r, c)] + r_star[(c, r)]);
            r_star[(r, c)] = v;
            r_star[(c, r)] = v;
        }
    }

    match conditional_coefs(&r_star) {
        Some((_, mu)) if mu.min() >= MIN_CONDITIONAL_VARIANCE => {}
        _ => {
            state.boundary_rejections += 1;
            return Ok(false);
        }
    }
    let ln_det = |m: &DMatrix<f64>| m.clone().cholesky().map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum());
    let Some(ld_star) = ln_det(&r_star) else {
        return Ok(false);
    };
    let ld = ln_det(&state.r).ok_or_else(|| fail("current R is not positive definite"))?;
    let log_ratio = 0.5 * (kk as f64 + 1.0) * (ld_star - ld);
    let u: f64 = 1.0 - rng.random::<f64>();
    if u.ln() < log_ratio {
        state.set_r(r_star)?;
        Ok(true)
    } else {
        Ok(false)
    }
}
