//! Metropolis-within-Gibbs sampler for the multiple graphical horseshoe.
//!
//! One sweep updates, for every group `k` and column `j`, the precision
//! column `(ω_j, ω_jj)` and the local variances `λ²_{·j,k}`; then the global
//! variances `τ²_k`; then the group correlation matrix `R` by a
//! parameter-expanded Metropolis–Hastings step.
//!
//! Edge `(i, j)` of group `k` has conditional prior
//! `ω^k_ij | ω^{-k}_ij ~ N(δ_k c_k, δ_k² μ_k)` with `δ_k = √(τ²_k λ²_{ij,k})`,
//! `c_k = Σ_{k'≠k} b_{kk'} ω^{k'}_ij / δ_{k'}`, `b_k = R_{-k}⁻¹ r_k` and
//! `μ_k = 1 − r_kᵀ b_k`.

mod chain;
mod diagnostics;
mod updates;

pub use chain::{
    read_kappa_csv, read_trace_csv, run_chain, run_chain_with, sweep, ChainConfig, ChainTrace, TraceRow, TraceSummary,
};
pub use diagnostics::{log_joint_posterior, psrf, psrf_columns};
pub use updates::{
    expanded_edges, update_global_shrinkage, update_omega_column, update_r, update_shrinkage_column, JITTER, MIN_CONDITIONAL_VARIANCE,
};

use crate::error::SamplerError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Observations and scatter matrices for `K` groups over the same `p` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    /// `n_k × p` observation matrices; empty when built from scatter matrices.
    pub y: Vec<DMatrix<f64>>,
    /// `S_k = Y_kᵀ Y_k`.
    pub scatter: Vec<DMatrix<f64>>,
    pub n: Vec<usize>,
    pub k: usize,
    pub p: usize,
}

impl GroupData {
    pub fn from_observations(y: Vec<DMatrix<f64>>) -> Result<Self, SamplerError> {
        if y.is_empty() {
            return Err(SamplerError::Data("no groups".into()));
        }
        let p = y[0].ncols();
        for (g, yk) in y.iter().enumerate() {
            if yk.ncols() != p {
                return Err(SamplerError::Data(format!(
                    "group {g} has {} columns, expected {p}",
                    yk.ncols()
                )));
            }
            if yk.nrows() == 0 {
                return Err(SamplerError::Data(format!("group {g} has no rows")));
            }
            if let Some((idx, _)) = yk.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(SamplerError::Data(format!(
                    "group {}: non-finite value at row {}, column {}",
                    g + 1,
                    idx % yk.nrows() + 1,
                    idx / yk.nrows() + 1
                )));
            }
        }
        let scatter: Vec<DMatrix<f64>> = y.iter().map(|yk| yk.tr_mul(yk)).collect();
        let n = y.iter().map(|yk| yk.nrows()).collect();
        let mut data = Self::from_scatter(scatter, n)?;
        data.y = y;
        Ok(data)
    }

    pub fn from_scatter(scatter: Vec<DMatrix<f64>>, n: Vec<usize>) -> Result<Self, SamplerError> {
        if scatter.is_empty() || scatter.len() != n.len() {
            return Err(SamplerError::Data("scatter/size count mismatch".into()));
        }
        let p = scatter[0].nrows();
        if p < 2 {
            return Err(SamplerError::Data(format!("need at least 2 variables, got {p}")));
        }
        for (g, s) in scatter.iter().enumerate() {
            if s.nrows() != p || s.ncols() != p {
                return Err(SamplerError::Data(format!("group {g}: scatter is not {p}×{p}")));
            }
            for j in 0..p {
                if !(s[(j, j)] > 0.0) {
                    return Err(SamplerError::Data(format!("group {g}: column {j} has zero scatter")));
                }
            }
        }
        Ok(Self {
            y: Vec::new(),
            k: scatter.len(),
            p,
            scatter,
            n,
        })
    }

    /// Copy with every column of every group centred and scaled to unit variance.
    pub fn standardized(&self) -> Result<Self, SamplerError> {
        if self.y.is_empty() {
            return Err(SamplerError::Data("standardization needs raw observations".into()));
        }
        Self::from_observations(self.y.iter().map(standardize_columns).collect())
    }
}

/// Centre each column and scale it to unit (n−1) variance; constant columns are only centred.
pub fn standardize_columns(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows() as f64;
    let mut out = y.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let var = if n > 1.0 { col.norm_squared() / (n - 1.0) } else { 0.0 };
        if var > 0.0 {
            col /= var.sqrt();
        }
    }
    out
}

/// Full state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub omega: Vec<DMatrix<f64>>,
    /// Kept equal to `omega[k]⁻¹` by rank-one updates.
    pub sigma: Vec<DMatrix<f64>>,
    /// Off-diagonal `λ²_{ij,k}`; the diagonal is unused.
    pub lambda2: Vec<DMatrix<f64>>,
    pub eta: Vec<DMatrix<f64>>,
    pub tau2: DVector<f64>,
    pub zeta: DVector<f64>,
    pub r: DMatrix<f64>,
    pub mu: DVector<f64>,
    /// Row `k` holds `R_{-k}⁻¹ r_k` scattered over `k' ≠ k` (zero at `k' = k`).
    coef: DMatrix<f64>,
    /// Completed sweeps.
    pub iteration: usize,
    /// `R` proposals rejected for crossing [`MIN_CONDITIONAL_VARIANCE`].
    pub boundary_rejections: usize,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.omega.len()
    }

    pub fn p(&self) -> usize {
        self.omega[0].nrows()
    }

    /// Regression coefficients of group `k` on the others in `R`.
    pub fn coef(&self) -> &DMatrix<f64> {
        &self.coef
    }

    /// Replaces `R` and refreshes `μ` and the regression coefficients.
    pub fn set_r(&mut self, r: DMatrix<f64>) -> Result<(), SamplerError> {
        let (coef, mu) = conditional_coefs(&r).ok_or_else(|| SamplerError::Correlation {
            iteration: self.iteration,
            what: "R is not positive definite".into(),
        })?;
        self.r = r;
        self.coef = coef;
        self.mu = mu;
        Ok(())
    }

    /// `δ_{ij,k}`.
    #[inline]
    pub fn delta(&self, i: usize, j: usize, k: usize) -> f64 {
        (self.tau2[k] * self.lambda2[k][(i, j)]).sqrt()
    }

    /// `c_k = r_kᵀ R_{-k}⁻¹ Δ_{ij,-k}⁻¹ ω^{-k}_ij`.
    #[inline]
    pub fn cond_mean_factor(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut c = 0.0;
        for kk in 0..self.k() {
            if kk != k {
                c += self.coef[(k, kk)] * self.omega[kk][(i, j)] / self.delta(i, j, kk);
            }
        }
        c
    }

    /// Shrinkage weights `κ = λ²/(1+λ²)` of group `k`, zero on the diagonal.
    pub fn kappa(&self, k: usize) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                0.0
            } else {
                let l2 = self.lambda2[k][(i, j)];
                l2 / (1.0 + l2)
            }
        })
    }

    /// Checks the documented state invariants; returns the first violation.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        let p = self.p();
        for k in 0..self.k() {
            if self.omega[k].clone().cholesky().is_none() {
                return Err(format!("Ω_{k} not positive definite"));
            }
            let prod = &self.omega[k] * &self.sigma[k];
            let dev = (prod - DMatrix::<f64>::identity(p, p)).amax();
            if dev > tol {
                return Err(format!("Ω_{k}Σ_{k} deviates from I by {dev:e}"));
            }
            for i in 0..p {
                for j in 0..p {
                    if i == j {
                        continue;
                    }
                    if self.omega[k][(i, j)] != self.omega[k][(j, i)] {
                        return Err(format!("Ω_{k} asymmetric at ({i},{j})"));
                    }
                    let (l, e) = (self.lambda2[k][(i, j)], self.eta[k][(i, j)]);
                    if !(l > 0.0 && e > 0.0 && l.is_finite() && e.is_finite()) {
                        return Err(format!("λ²/η out of range at ({i},{j},{k}): {l}, {e}"));
                    }
                    if l != self.lambda2[k][(j, i)] || e != self.eta[k][(j, i)] {
                        return Err(format!("λ²/η asymmetric at ({i},{j},{k})"));
                    }
                }
            }
            if !(self.tau2[k] > 0.0 && self.zeta[k] > 0.0) {
                return Err(format!("τ²/ζ out of range in group {k}"));
            }
            if !(self.mu[k] > 0.0 && self.mu[k] <= 1.0 + 1e-12) {
                return Err(format!("μ_{k} = {} outside (0, 1]", self.mu[k]));
            }
        }
        if self.r.clone().cholesky().is_none() {
            return Err("R not positive definite".into());
        }
        if (0..self.k()).any(|k| (self.r[(k, k)] - 1.0).abs() > 1e-12) {
            return Err("R diagonal not 1".into());
        }
        Ok(())
    }
}

/// Identity/ones starting state.
pub fn init_state(k: usize, p: usize) -> Result<ChainState, SamplerError> {
    if k < 1 || p < 2 {
        return Err(SamplerError::Config(format!("need K ≥ 1 and p ≥ 2, got K={k}, p={p}")));
    }
    let eye = DMatrix::<f64>::identity(p, p);
    let ones = DMatrix::from_element(p, p, 1.0);
    Ok(ChainState {
        omega: vec![eye.clone(); k],
        sigma: vec![eye; k],
        lambda2: vec![ones.clone(); k],
        eta: vec![ones; k],
        tau2: DVector::from_element(k, 1.0),
        zeta: DVector::from_element(k, 1.0),
        r: DMatrix::identity(k, k),
        mu: DVector::from_element(k, 1.0),
        coef: DMatrix::zeros(k, k),
        iteration: 0,
        boundary_rejections: 0,
    })
}

/// `(b, μ)` from `P = R⁻¹`: `R_{-k}⁻¹ r_k = −P_{-k,k}/P_kk` and `μ_k = 1/P_kk`.
fn conditional_coefs(r: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let k = r.nrows();
    let prec = r.clone().cholesky()?.inverse();
    let mut coef = DMatrix::zeros(k, k);
    let mut mu = DVector::zeros(k);
    for a in 0..k {
        let paa = prec[(a, a)];
        mu[a] = (1.0 / paa).min(1.0);
        for b in 0..k {
            if b != a {
                coef[(a, b)] = -prec[(b, a)] / paa;
            }
        }
    }
    Some((coef, mu))
}

/// Flattened upper-triangle index of `(i, j)`, `i < j`, row-major.
#[inline]
pub fn edge_index(i: usize, j: usize, p: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// `(i, j)` pairs with `i < j`, in `edge_index` order.
pub fn edges(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
}

/// Serializable `ChainState` snapshot with matrices as nested row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub omega: Vec<Vec<Vec<f64>>>,
    pub tau2: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    pub iteration: usize,
}

/// Matrix as nested row vectors.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of [`rows`].
pub fn from_rows(v: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = v.len();
    let nc = v.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| v[i][j])
}

impl From<&ChainState> for StateSnapshot {
    fn from(s: &ChainState) -> Self {
        Self {
            omega: s.omega.iter().map(rows).collect(),
            tau2: s.tau2.iter().copied().collect(),
            r: rows(&s.r),
            iteration: s.iteration,
        }
    }
}
