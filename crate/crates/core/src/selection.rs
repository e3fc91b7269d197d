//! Posterior edge selection: the median probability model and the cut model
//! over an inclusion vector `z` and a threshold `t^α ~ Beta(a, b)`.
//!
//! The cut model only reads the chain: `z` and `t^α` are updated from the
//! current full-conditional coefficients of `κ = λ²/(1+λ²)` with their own
//! random stream, and nothing flows back into the chain.

use crate::error::{G3pError, SamplerError};
use crate::g3p::sf_gamma1;
use crate::sampler::{edges, run_chain_with, ChainConfig, ChainState, ChainTrace, GroupData};
use crate::Adjacency;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Mpm,
    Cut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub a: f64,
    pub b: f64,
    /// Cut steps per recorded chain draw.
    pub iterations: usize,
    pub mode: SelectionMode,
    /// Accept `t^α` proposals on the likelihood ratio alone (proposal = prior).
    pub hastings_correction: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            a: 30.0,
            b: 25.0,
            iterations: 1,
            mode: SelectionMode::Cut,
            hastings_correction: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.a > 0.0 && self.b > 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(SamplerError::Config(format!(
                "Beta prior needs a, b > 0, got a={}, b={}",
                self.a, self.b
            )));
        }
        if self.iterations < 1 {
            return Err(SamplerError::Config("selection iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// `P(κ ≥ t | φ)` for the κ full conditional with coefficients `(α_λ, β_λ)`.
///
/// With `u = √((1−κ)/κ)`, `u ~ G3p(1, √α_λ, β_λ)` and `κ ≥ t ⇔ u ≤ √((1−t)/t)`.
pub fn kappa_tail_prob(alpha_lambda: f64, beta_lambda: f64, t: f64) -> Result<f64, G3pError> {
    let (q, _) = kappa_tail_pair(alpha_lambda, beta_lambda, t)?;
    Ok(q)
}

/// `(q, 1 − q)` with both sides computed without cancellation.
fn kappa_tail_pair(alpha_lambda: f64, beta_lambda: f64, t: f64) -> Result<(f64, f64), G3pError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(G3pError::Domain(t));
    }
    if t == 0.0 {
        return Ok((1.0, 0.0));
    }
    if t == 1.0 {
        return Ok((0.0, 1.0));
    }
    let x = ((1.0 - t) / t).sqrt();
    let sf = sf_gamma1(alpha_lambda.sqrt(), beta_lambda, x)?;
    Ok((1.0 - sf, sf))
}

/// Full-conditional `(α_λ, β_λ)` of every edge of group `k`, in `edge_index` order.
pub fn kappa_coefficients(state: &ChainState, k: usize) -> Vec<(f64, f64)> {
    let mu = state.mu[k];
    let tau2 = state.tau2[k];
    edges(state.p())
        .map(|(i, j)| {
            let w = state.omega[k][(i, j)];
            let alpha = 1.0 / state.eta[k][(i, j)] + w * w / (2.0 * tau2 * mu);
            let beta = w * state.cond_mean_factor(i, j, k) / (tau2.sqrt() * mu);
            (alpha, beta)
        })
        .collect()
}

/// Cut-model state of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct CutState {
    pub z: Vec<bool>,
    pub t_alpha: f64,
    pub z_count: Vec<u64>,
    pub steps: u64,
    pub accepted: u64,
}

impl CutState {
    pub fn new(n_edges: usize, config: &SelectionConfig) -> Self {
        Self {
            z: vec![false; n_edges],
            t_alpha: config.a / (config.a + config.b),
            z_count: vec![0; n_edges],
            steps: 0,
            accepted: 0,
        }
    }

    pub fn z_frequency(&self) -> Vec<f64> {
        let n = self.steps.max(1) as f64;
        self.z_count.iter().map(|&c| c as f64 / n).collect()
    }
}

/// `Σ_e ln q_e^{z_e} (1 − q_e)^{1−z_e}` at threshold `t`.
fn ln_bernoulli(coeffs: &[(f64, f64)], z: &[bool], t: f64) -> Result<f64, G3pError> {
    let mut s = 0.0;
    for (&(a, b), &ze) in coeffs.iter().zip(z) {
        let (q, q_c) = kappa_tail_pair(a, b, t)?;
        s += if ze { q.ln() } else { q_c.ln() };
    }
    Ok(s)
}

/// One Gibbs draw of `z` followed by one independence MH update of `t^α`.
pub fn cut_step<R: Rng + ?Sized>(
    coeffs: &[(f64, f64)],
    sel: &mut CutState,
    config: &SelectionConfig,
    rng: &mut R,
) -> Result<(), SamplerError> {
    for (e, &(a, b)) in coeffs.iter().enumerate() {
        let q = kappa_tail_prob(a, b, sel.t_alpha)?;
        sel.z[e] = rng.random::<f64>() < q;
    }
    let prior = Beta::new(config.a, config.b).map_err(|e| SamplerError::Config(e.to_string()))?;
    let t_star: f64 = prior.sample(rng);
    let ln_like = ln_bernoulli(coeffs, &sel.z, t_star)? - ln_bernoulli(coeffs, &sel.z, sel.t_alpha)?;
    let ln_ratio = if config.hastings_correction {
        ln_like
    } else {
        let ln_prior = |t: f64| (config.a - 1.0) * t.ln() + (config.b - 1.0) * (1.0 - t).ln();
        ln_like + ln_prior(t_star) - ln_prior(sel.t_alpha)
    };
    let u: f64 = 1.0 - rng.random::<f64>();
    if u.ln() < ln_ratio {
        sel.t_alpha = t_star;
        sel.accepted += 1;
    }
    sel.steps += 1;
    for (c, &ze) in sel.z_count.iter_mut().zip(&sel.z) {
        *c += ze as u64;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Per group, symmetric `p × p` inclusion frequency (zero diagonal).
    pub z_frequency: Vec<Vec<Vec<f64>>>,
    /// Per recorded step, `t^α` of every group.
    pub t_alpha_draws: Vec<Vec<f64>>,
    pub acceptance_rate: Vec<f64>,
}

impl SelectionResult {
    pub fn z_frequency_matrices(&self) -> Vec<DMatrix<f64>> {
        self.z_frequency
            .iter()
            .map(|m| DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j]))
            .collect()
    }

    /// Posterior mean of `t^α` per group.
    pub fn t_alpha_mean(&self) -> Vec<f64> {
        let k = self.t_alpha_draws.first().map_or(0, Vec::len);
        let n = self.t_alpha_draws.len().max(1) as f64;
        (0..k)
            .map(|g| self.t_alpha_draws.iter().map(|d| d[g]).sum::<f64>() / n)
            .collect()
    }
}

/// Runs a chain with the cut model interleaved after every recorded draw.
/// The returned trace is identical to [`crate::sampler::run_chain`] on the same inputs.
pub fn run_chain_with_selection(
    data: &GroupData,
    chain: &ChainConfig,
    config: &SelectionConfig,
) -> Result<(ChainTrace, SelectionResult), SamplerError> {
    config.validate()?;
    let p = data.p;
    let ne = p * (p - 1) / 2;
    let mut cut: Vec<CutState> = (0..data.k).map(|_| CutState::new(ne, config)).collect();
    let mut rng = chain.selection_rng();
    let mut t_draws = Vec::new();
    let trace = run_chain_with(data, chain, |state, _| {
        for (k, sel) in cut.iter_mut().enumerate() {
            let coeffs = kappa_coefficients(state, k);
            for _ in 0..config.iterations {
                cut_step(&coeffs, sel, config, &mut rng)?;
            }
        }
        t_draws.push(cut.iter().map(|c| c.t_alpha).collect());
        Ok(())
    })?;
    let z_frequency = cut
        .iter()
        .map(|c| {
            let f = c.z_frequency();
            let mut m = vec![vec![0.0; p]; p];
            for (e, (i, j)) in edges(p).enumerate() {
                m[i][j] = f[e];
                m[j][i] = f[e];
            }
            m
        })
        .collect();
    let acceptance_rate = cut
        .iter()
        .map(|c| c.accepted as f64 / c.steps.max(1) as f64)
        .collect();
    Ok((
        trace,
        SelectionResult {
            z_frequency,
            t_alpha_draws: t_draws,
            acceptance_rate,
        },
    ))
}

/// Edge sets per group. MPM keeps `κ̂ ≥ ½`; Cut keeps z-frequency `≥ ½`.
pub fn select(
    kappa_mean: &[DMatrix<f64>],
    selection: Option<&SelectionResult>,
    mode: SelectionMode,
) -> Result<Vec<Adjacency>, SamplerError> {
    let scores: Vec<DMatrix<f64>> = match mode {
        SelectionMode::Mpm => kappa_mean.to_vec(),
        SelectionMode::Cut => selection
            .ok_or_else(|| SamplerError::Config("cut selection needs a selection result".into()))?
            .z_frequency_matrices(),
    };
    Ok(scores
        .iter()
        .map(|s| DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| i != j && s[(i, j)] >= 0.5))
        .collect())
}

/// CSV rows `i,j,group,included,frequency` (1-based) over the upper triangle.
pub fn write_adjacency_csv<W: Write>(
    w: W,
    adjacency: &[Adjacency],
    scores: &[DMatrix<f64>],
) -> Result<(), SamplerError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["i", "j", "group", "included", "frequency"])?;
    for (g, (adj, sc)) in adjacency.iter().zip(scores).enumerate() {
        for (i, j) in edges(adj.nrows()) {
            wr.write_record(&[
                (i + 1).to_string(),
                (j + 1).to_string(),
                (g + 1).to_string(),
                (adj[(i, j)] as u8).to_string(),
                sc[(i, j)].to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads [`write_adjacency_csv`] output back into `(adjacency, scores)`.
pub fn read_adjacency_csv<R: std::io::Read>(
    r: R,
    p: usize,
    k: usize,
) -> Result<(Vec<Adjacency>, Vec<DMatrix<f64>>), SamplerError> {
    let mut adj = vec![Adjacency::from_element(p, p, false); k];
    let mut sc = vec![DMatrix::zeros(p, p); k];
    let mut rd = csv::Reader::from_reader(r);
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| SamplerError::Data(format!("adjacency row {}, column {}: invalid", line + 1, c + 1));
        let idx = |c: usize, hi: usize| -> Result<usize, SamplerError> {
            rec.get(c)
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&v| v >= 1 && v <= hi)
                .map(|v| v - 1)
                .ok_or_else(|| bad(c))
        };
        let (i, j, g) = (idx(0, p)?, idx(1, p)?, idx(2, k)?);
        let inc = rec.get(3).and_then(|s| s.parse::<u8>().ok()).ok_or_else(|| bad(3))? == 1;
        let f = rec.get(4).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(4))?;
        adj[g][(i, j)] = inc;
        adj[g][(j, i)] = inc;
        sc[g][(i, j)] = f;
        sc[g][(j, i)] = f;
    }
    Ok((adj, sc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `P(κ ≥ t)` by direct quadrature of `κ⁻² exp(−α(1−κ)/κ + β√((1−κ)/κ))`.
    fn tail_by_quadrature(a: f64, b: f64, t: f64) -> f64 {
        let f = |k: f64| {
            if k <= 0.0 || k >= 1.0 {
                return 0.0;
            }
            let u2 = (1.0 - k) / k;
            (-a * u2 + b * u2.sqrt()).exp() / (k * k)
        };
        let o = QuadOptions::default();
        integrate(f, t, 1.0, o).value / integrate(f, 0.0, 1.0, o).value
    }

    #[test]
    fn tail_endpoints() {
        assert_eq!(kappa_tail_prob(1.5, 0.4, 0.0).unwrap(), 1.0);
        assert_eq!(kappa_tail_prob(1.5, 0.4, 1.0).unwrap(), 0.0);
        assert!(kappa_tail_prob(1.5, 0.4, 1.5).is_err());
    }

    #[test]
    fn tail_matches_quadrature() {
        let v = kappa_tail_prob(1.5, 0.4, 0.5).unwrap();
        assert!((v - tail_by_quadrature(1.5, 0.4, 0.5)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn all_certain_edges_are_included() {
        // α → 0, β ≫ 0 puts κ at 1; t = 0 would make q exactly 1
        let coeffs = vec![(1e-6, 50.0); 3];
        let cfg = SelectionConfig::default();
        let mut s = CutState::new(3, &cfg);
        s.t_alpha = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for e in 0..3 {
            s.z[e] = rng.random::<f64>() < kappa_tail_prob(coeffs[e].0, coeffs[e].1, 0.0).unwrap();
        }
        assert!(s.z.iter().all(|&z| z));
        s.t_alpha = 0.5;
        for _ in 0..200 {
            cut_step(&coeffs, &mut s, &cfg, &mut rng).unwrap();
            assert!(s.t_alpha > 0.0 && s.t_alpha < 1.0);
        }
    }

    #[test]
    fn corrected_and_uncorrected_rules_agree_under_flat_prior() {
        let coeffs = vec![(1.0, 0.3), (0.5, -0.2), (2.0, 1.0)];
        let flat = |hc| SelectionConfig {
            a: 1.0,
            b: 1.0,
            hastings_correction: hc,
            ..SelectionConfig::default()
        };
        let run = |cfg: SelectionConfig| {
            let mut s = CutState::new(3, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            for _ in 0..500 {
                cut_step(&coeffs, &mut s, &cfg, &mut rng).unwrap();
            }
            (s.t_alpha, s.z_count)
        };
        assert_eq!(run(flat(true)), run(flat(false)));
    }

    #[test]
    fn mpm_threshold_is_half() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.6, 0.0]);
        assert!(select(&[k], None, SelectionMode::Mpm).unwrap()[0][(0, 1)]);
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.54, 0.54, 0.0]);
        let sel = SelectionResult {
            z_frequency: vec![vec![vec![0.0, 0.3], vec![0.3, 0.0]]],
            t_alpha_draws: vec![vec![0.55]],
            acceptance_rate: vec![0.5],
        };
        assert!(select(&[k.clone()], None, SelectionMode::Mpm).unwrap()[0][(0, 1)]);
        assert!(!select(&[k], Some(&sel), SelectionMode::Cut).unwrap()[0][(0, 1)]);
    }

    #[test]
    fn adjacency_csv_round_trip() {
        let adj = vec![DMatrix::from_fn(4, 4, |i, j| i != j && (i + j) % 2 == 1)];
        let sc = vec![DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.1 * (i + j) as f64 })];
        let mut buf = Vec::new();
        write_adjacency_csv(&mut buf, &adj, &sc).unwrap();
        let (a2, s2) = read_adjacency_csv(&buf[..], 4, 1).unwrap();
        assert_eq!(a2, adj);
        assert_eq!(s2, sc);
    }
}
