use super::diagnostics::log_joint_posterior;
use super::updates::{update_global_shrinkage, update_omega_column, update_r, update_shrinkage_column};
use super::{edges, from_rows, init_state, rows, ChainState, GroupData};
use crate::error::SamplerError;
use crate::g3p::{G3pSampler, SamplerStats, SamplerTables};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub burnin: usize,
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    /// Chain id; selects an independent ChaCha stream under the same seed.
    pub chain: u64,
    /// Hold `R = I` (independent graphical horseshoe per group).
    pub freeze_r_identity: bool,
    pub g3p_table: Option<Arc<SamplerTables>>,
    /// Keep every thinned `κ` draw (needed for edge-wise PSRF).
    pub record_kappa: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burnin: 5000,
            iterations: 10000,
            thin: 1,
            seed: 0,
            chain: 0,
            freeze_r_identity: false,
            g3p_table: None,
            record_kappa: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations < 1 {
            return Err(SamplerError::Config("iterations must be ≥ 1".into()));
        }
        if self.thin < 1 {
            return Err(SamplerError::Config("thin must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Random stream driving the chain.
    pub fn chain_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * self.chain);
        rng
    }

    /// Random stream reserved for edge selection, disjoint from [`Self::chain_rng`].
    pub fn selection_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * self.chain + 1);
        rng
    }
}

/// One full iteration in the fixed order: columns of every group, global
/// scales, then `R`. Returns whether an `R` proposal was accepted.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &GroupData,
    freeze_r_identity: bool,
    sampler: &mut G3pSampler<'_>,
    rng: &mut R,
) -> Result<bool, SamplerError> {
    for k in 0..state.k() {
        for j in 0..state.p() {
            update_omega_column(state, data, k, j, rng)?;
            update_shrinkage_column(state, k, j, sampler, rng)?;
        }
    }
    update_global_shrinkage(state, sampler, rng)?;
    let accepted = if freeze_r_identity { false } else { update_r(state, rng)? };
    state.iteration += 1;
    Ok(accepted)
}

/// Thinned draws and post-burnin running means of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub k: usize,
    pub p: usize,
    /// Sweep index (1-based, counting burn-in) of each thinned draw.
    pub draw_iterations: Vec<usize>,
    /// Per draw: `κ` for every group, group-major, edges in `edge_index` order.
    pub kappa_draws: Vec<Vec<f64>>,
    pub tau2_draws: Vec<Vec<f64>>,
    /// Per draw: upper triangle of `R`, row-major.
    pub r_draws: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub omega_mean: Vec<DMatrix<f64>>,
    pub sigma_mean: Vec<DMatrix<f64>>,
    pub kappa_mean: Vec<DMatrix<f64>>,
    pub r_mean: DMatrix<f64>,
    pub r_accepted: usize,
    pub r_proposals: usize,
    /// Post-burnin `R` proposals rejected at the conditional-variance floor.
    pub r_boundary_rejections: usize,
    pub g3p_stats: SamplerStats,
    pub elapsed_secs: f64,
    pub final_state: ChainState,
}

impl ChainTrace {
    pub fn r_acceptance_rate(&self) -> f64 {
        if self.r_proposals == 0 {
            0.0
        } else {
            self.r_accepted as f64 / self.r_proposals as f64
        }
    }

    /// Monitored scalars of every thinned draw.
    pub fn rows(&self) -> Vec<TraceRow> {
        (0..self.log_posterior.len())
            .map(|d| TraceRow {
                draw: d,
                iteration: self.draw_iterations[d],
                log_posterior: self.log_posterior[d],
                tau2: self.tau2_draws[d].clone(),
                r: self.r_draws[d].clone(),
            })
            .collect()
    }

    pub fn summary(&self, config: &ChainConfig) -> TraceSummary {
        TraceSummary {
            k: self.k,
            p: self.p,
            seed: config.seed,
            chain: config.chain,
            burnin: config.burnin,
            iterations: config.iterations,
            thin: config.thin,
            freeze_r_identity: config.freeze_r_identity,
            draws: self.log_posterior.len(),
            omega_mean: self.omega_mean.iter().map(rows).collect(),
            sigma_mean: self.sigma_mean.iter().map(rows).collect(),
            kappa_mean: self.kappa_mean.iter().map(rows).collect(),
            r_mean: rows(&self.r_mean),
            r_accepted: self.r_accepted,
            r_proposals: self.r_proposals,
            r_boundary_rejections: self.r_boundary_rejections,
            r_acceptance_rate: self.r_acceptance_rate(),
            g3p_stats: self.g3p_stats,
            elapsed_secs: self.elapsed_secs,
        }
    }

    /// CSV of the monitored scalars: `draw,iteration,log_posterior,tau2_1..,r_1_2..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SamplerError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["draw".to_string(), "iteration".into(), "log_posterior".into()];
        header.extend((1..=self.k).map(|k| format!("tau2_{k}")));
        header.extend(edges(self.k).map(|(a, b)| format!("r_{}_{}", a + 1, b + 1)));
        wr.write_record(&header)?;
        for row in self.rows() {
            let mut rec = vec![row.draw.to_string(), row.iteration.to_string(), row.log_posterior.to_string()];
            rec.extend(row.tau2.iter().map(f64::to_string));
            rec.extend(row.r.iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// CSV of the thinned `κ` draws: `draw,k{g}_{i}_{j}..` with 1-based labels.
    pub fn write_kappa_csv<W: Write>(&self, w: W) -> Result<(), SamplerError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["draw".to_string()];
        for g in 1..=self.k {
            header.extend(edges(self.p).map(|(i, j)| format!("k{g}_{}_{}", i + 1, j + 1)));
        }
        wr.write_record(&header)?;
        for (d, row) in self.kappa_draws.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads a file written by [`ChainTrace::write_csv`].
pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>, SamplerError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let n_tau = header.iter().filter(|h| h.starts_with("tau2_")).count();
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64, SamplerError> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| SamplerError::Data(format!("trace row {}, column {}: not a number", line + 1, c + 1)))
        };
        let vals: Vec<f64> = (0..rec.len()).map(num).collect::<Result<_, _>>()?;
        out.push(TraceRow {
            draw: vals[0] as usize,
            iteration: vals[1] as usize,
            log_posterior: vals[2],
            tau2: vals[3..3 + n_tau].to_vec(),
            r: vals[3 + n_tau..].to_vec(),
        });
    }
    Ok(out)
}

/// Reads a file written by [`ChainTrace::write_kappa_csv`] (one row per draw, `draw` column dropped).
pub fn read_kappa_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>, SamplerError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>()
                    .map_err(|_| SamplerError::Data(format!("kappa row {}, column {}: not a number", line + 1, c + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub draw: usize,
    pub iteration: usize,
    pub log_posterior: f64,
    pub tau2: Vec<f64>,
    pub r: Vec<f64>,
}

/// JSON summary of a chain: posterior means, acceptance and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub chain: u64,
    pub burnin: usize,
    pub iterations: usize,
    pub thin: usize,
    pub freeze_r_identity: bool,
    pub draws: usize,
    pub omega_mean: Vec<Vec<Vec<f64>>>,
    pub sigma_mean: Vec<Vec<Vec<f64>>>,
    pub kappa_mean: Vec<Vec<Vec<f64>>>,
    pub r_mean: Vec<Vec<f64>>,
    pub r_accepted: usize,
    pub r_proposals: usize,
    pub r_boundary_rejections: usize,
    pub r_acceptance_rate: f64,
    pub g3p_stats: SamplerStats,
    pub elapsed_secs: f64,
}

impl TraceSummary {
    pub fn omega_mean_matrices(&self) -> Vec<DMatrix<f64>> {
        self.omega_mean.iter().map(|m| from_rows(m)).collect()
    }

    pub fn kappa_mean_matrices(&self) -> Vec<DMatrix<f64>> {
        self.kappa_mean.iter().map(|m| from_rows(m)).collect()
    }
}

pub fn run_chain(data: &GroupData, config: &ChainConfig) -> Result<ChainTrace, SamplerError> {
    run_chain_with(data, config, |_, _| Ok(()))
}

/// [`run_chain`] calling `observer(state, draw)` after every thinned draw.
/// The observer cannot touch the chain's state or random stream.
pub fn run_chain_with<F>(data: &GroupData, config: &ChainConfig, mut observer: F) -> Result<ChainTrace, SamplerError>
where
    F: FnMut(&ChainState, usize) -> Result<(), SamplerError>,
{
    config.validate()?;
    let start = Instant::now();
    let (kk, p) = (data.k, data.p);
    let mut state = init_state(kk, p)?;
    let mut rng = config.chain_rng();
    let mut sampler = match config.g3p_table.as_deref() {
        Some(t) => G3pSampler::with_table(t),
        None => G3pSampler::new(),
    };
    let zeros = vec![DMatrix::<f64>::zeros(p, p); kk];
    let mut trace = ChainTrace {
        k: kk,
        p,
        draw_iterations: Vec::new(),
        kappa_draws: Vec::new(),
        tau2_draws: Vec::new(),
        r_draws: Vec::new(),
        log_posterior: Vec::new(),
        omega_mean: zeros.clone(),
        sigma_mean: zeros.clone(),
        kappa_mean: zeros,
        r_mean: DMatrix::zeros(kk, kk),
        r_accepted: 0,
        r_proposals: 0,
        r_boundary_rejections: 0,
        g3p_stats: SamplerStats::default(),
        elapsed_secs: 0.0,
        final_state: state.clone(),
    };
    let propose_r = kk > 1 && !config.freeze_r_identity;
    let total = config.burnin + config.iterations;
    for it in 0..total {
        let floor_hits = state.boundary_rejections;
        let accepted = sweep(&mut state, data, config.freeze_r_identity, &mut sampler, &mut rng)?;
        if it < config.burnin {
            continue;
        }
        if propose_r {
            trace.r_proposals += 1;
            trace.r_accepted += accepted as usize;
            trace.r_boundary_rejections += state.boundary_rejections - floor_hits;
        }
        let post = it - config.burnin;
        let w = 1.0 / (post + 1) as f64;
        for k in 0..kk {
            running_mean(&mut trace.omega_mean[k], &state.omega[k], w);
            running_mean(&mut trace.sigma_mean[k], &state.sigma[k], w);
            running_mean(&mut trace.kappa_mean[k], &state.kappa(k), w);
        }
        running_mean(&mut trace.r_mean, &state.r, w);
        if (post + 1).is_multiple_of(config.thin) {
            trace.draw_iterations.push(it + 1);
            if config.record_kappa {
                let mut row = Vec::with_capacity(kk * p * (p - 1) / 2);
                for k in 0..kk {
                    row.extend(edges(p).map(|(i, j)| {
                        let l2 = state.lambda2[k][(i, j)];
                        l2 / (1.0 + l2)
                    }));
                }
                trace.kappa_draws.push(row);
            }
            trace.tau2_draws.push(state.tau2.iter().copied().collect());
            trace.r_draws.push(edges(kk).map(|(a, b)| state.r[(a, b)]).collect());
            trace.log_posterior.push(log_joint_posterior(&state, data));
            observer(&state, trace.log_posterior.len() - 1)?;
        }
    }
    trace.g3p_stats = sampler.stats;
    trace.elapsed_secs = start.elapsed().as_secs_f64();
    trace.final_state = state;
    Ok(trace)
}

#[inline]
fn running_mean(acc: &mut DMatrix<f64>, x: &DMatrix<f64>, w: f64) {
    acc.zip_apply(x, |a, b| *a += w * (b - *a));
}
