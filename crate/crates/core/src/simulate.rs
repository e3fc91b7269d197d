//! Block-structured precision matrices for the four multi-group scenarios and
//! Gaussian data drawn from them.
//!
//! Within each block of `block_size` variables every pair is an edge with
//! probability `edge_prob`, with a raw weight uniform on `±[0.4, 0.6]`. Each
//! row of the raw weights is divided by `1.5 ×` its absolute sum, the result
//! is symmetrized and the diagonal set to 1 (the construction of Danaher et
//! al.). Groups share raw weights according to the scenario, so identical
//! supports give identical precision matrices.

use crate::error::SimulateError;
use crate::io::write_matrix_csv;
use crate::sampler::{edges, GroupData};
use crate::Adjacency;
use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Within-block edge probability giving `p₀ ≈ 82.5` edges per group at
/// `p = 50` with blocks of 10 (`82.5 / (5 · 45)`).
pub const DEFAULT_EDGE_PROB: f64 = 0.3667;
pub const DEFAULT_PERTURB_FRAC: f64 = 0.25;
const RESCALE_FACTOR: f64 = 1.5;
const MAX_RESCALES: usize = 8;
const MAX_REGENERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// A different precision matrix per group.
    Independent,
    /// Groups `2m` and `2m+1` share a precision matrix.
    Coupled,
    /// Group 1 is the base; every other group toggles a fraction of its edges.
    P2020,
    /// One precision matrix for all groups.
    FullDependence,
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "independent" => Ok(Self::Independent),
            "coupled" => Ok(Self::Coupled),
            "p2020" => Ok(Self::P2020),
            "full-dependence" | "full" => Ok(Self::FullDependence),
            other => Err(format!("unknown scenario '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: ScenarioKind,
    pub k: usize,
    pub p: usize,
    pub n: usize,
    pub block_size: usize,
    pub edge_prob: f64,
    pub perturb_frac: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Four groups, blocks of 10 and the calibrated edge probability.
    pub fn new(scenario: ScenarioKind, p: usize, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            k: 4,
            p,
            n,
            block_size: 10,
            edge_prob: DEFAULT_EDGE_PROB,
            perturb_frac: DEFAULT_PERTURB_FRAC,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::Spec(m));
        if self.k < 1 || self.n < 1 {
            return bad(format!("need K ≥ 1 and n ≥ 1, got K={}, n={}", self.k, self.n));
        }
        if self.block_size != 5 && self.block_size != 10 {
            return bad(format!("block size must be 5 or 10, got {}", self.block_size));
        }
        if self.p < self.block_size || !self.p.is_multiple_of(self.block_size) {
            return bad(format!("p={} is not a multiple of the block size {}", self.p, self.block_size));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) || !(0.0..=1.0).contains(&self.perturb_frac) {
            return bad("edge_prob and perturb_frac must lie in [0, 1]".into());
        }
        if self.scenario == ScenarioKind::Coupled && !self.k.is_multiple_of(2) {
            return bad(format!("coupled scenario needs an even K, got {}", self.k));
        }
        Ok(())
    }
}

/// True precision matrices and their supports.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSet {
    pub omega: Vec<DMatrix<f64>>,
    pub adjacency: Vec<Adjacency>,
    /// Blocks regenerated because rescaling did not give a positive definite block.
    pub regenerated: usize,
}

/// Data plus ground truth for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub data: GroupData,
    pub truth: PrecisionSet,
}

fn raw_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let m = rng.random_range(0.4..0.6);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

fn in_same_block(i: usize, j: usize, b: usize) -> bool {
    i / b == j / b
}

/// Row-dominance rescale of a raw weight matrix; `None` if no scale works.
fn stabilize(raw: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = raw.nrows();
    let mut factor = RESCALE_FACTOR;
    for _ in 0..MAX_RESCALES {
        let mut a = raw.clone();
        for i in 0..p {
            let s: f64 = (0..p).filter(|&j| j != i).map(|j| raw[(i, j)].abs()).sum();
            if s > 0.0 {
                for j in 0..p {
                    a[(i, j)] /= factor * s;
                }
            }
        }
        let mut omega = (&a + a.transpose()) * 0.5;
        omega.fill_diagonal(1.0);
        if omega.clone().cholesky().is_some() {
            return Some(omega);
        }
        factor *= RESCALE_FACTOR;
    }
    None
}

fn stabilize_by_blocks(raw: &DMatrix<f64>, b: usize) -> Option<DMatrix<f64>> {
    let p = raw.nrows();
    let mut omega = DMatrix::identity(p, p);
    for start in (0..p).step_by(b) {
        let block = stabilize(&raw.view((start, start), (b, b)).into_owned())?;
        omega.view_mut((start, start), (b, b)).copy_from(&block);
    }
    Some(omega)
}

fn random_raw<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> DMatrix<f64> {
    let p = spec.p;
    let mut raw = DMatrix::zeros(p, p);
    for (i, j) in edges(p) {
        if in_same_block(i, j, spec.block_size) && rng.random::<f64>() < spec.edge_prob {
            let w = raw_weight(rng);
            raw[(i, j)] = w;
            raw[(j, i)] = w;
        }
    }
    raw
}

/// Deletes and adds `round(perturb_frac · E / 2)` within-block edges each,
/// so the support differs from `base` in about `perturb_frac · E` pairs.
fn perturb<R: Rng + ?Sized>(base: &DMatrix<f64>, spec: &ScenarioSpec, rng: &mut R) -> DMatrix<f64> {
    let p = spec.p;
    let (on, off): (Vec<_>, Vec<_>) = edges(p)
        .filter(|&(i, j)| in_same_block(i, j, spec.block_size))
        .partition(|&(i, j)| base[(i, j)] != 0.0);
    let m = ((spec.perturb_frac * on.len() as f64) / 2.0).round() as usize;
    let m = m.min(on.len()).min(off.len());
    let mut raw = base.clone();
    for idx in sample_indices(rng, on.len(), m) {
        let (i, j) = on[idx];
        raw[(i, j)] = 0.0;
        raw[(j, i)] = 0.0;
    }
    for idx in sample_indices(rng, off.len(), m) {
        let (i, j) = off[idx];
        let w = raw_weight(rng);
        raw[(i, j)] = w;
        raw[(j, i)] = w;
    }
    raw
}

/// Raw weight matrix whose stabilized form is positive definite, regenerating on failure.
fn draw_stable<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
    regenerated: &mut usize,
    make: impl Fn(&mut R) -> DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), SimulateError> {
    for _ in 0..MAX_REGENERATIONS {
        let raw = make(rng);
        if let Some(omega) = stabilize_by_blocks(&raw, spec.block_size) {
            return Ok((raw, omega));
        }
        *regenerated += 1;
    }
    Err(SimulateError::Exhausted(MAX_REGENERATIONS))
}

pub fn generate_precision_set<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<PrecisionSet, SimulateError> {
    spec.validate()?;
    let mut regenerated = 0;
    let mut omega = Vec::with_capacity(spec.k);
    match spec.scenario {
        ScenarioKind::Independent => {
            for _ in 0..spec.k {
                omega.push(draw_stable(spec, rng, &mut regenerated, |r| random_raw(spec, r))?.1);
            }
        }
        ScenarioKind::Coupled => {
            for _ in 0..spec.k / 2 {
                let (_, o) = draw_stable(spec, rng, &mut regenerated, |r| random_raw(spec, r))?;
                omega.push(o.clone());
                omega.push(o);
            }
        }
        ScenarioKind::FullDependence => {
            let (_, o) = draw_stable(spec, rng, &mut regenerated, |r| random_raw(spec, r))?;
            omega = vec![o; spec.k];
        }
        ScenarioKind::P2020 => {
            let (base, o) = draw_stable(spec, rng, &mut regenerated, |r| random_raw(spec, r))?;
            omega.push(o);
            for _ in 1..spec.k {
                omega.push(draw_stable(spec, rng, &mut regenerated, |r| perturb(&base, spec, r))?.1);
            }
        }
    }
    let adjacency = omega
        .iter()
        .map(|o| DMatrix::from_fn(spec.p, spec.p, |i, j| i != j && o[(i, j)] != 0.0))
        .collect();
    Ok(PrecisionSet {
        omega,
        adjacency,
        regenerated,
    })
}

/// `n` rows drawn i.i.d. from `N(0, Σ)`.
pub fn sample_mvn<R: Rng + ?Sized>(sigma: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>, SimulateError> {
    let p = sigma.nrows();
    let l = sigma.clone().cholesky().ok_or(SimulateError::NotPositiveDefinite)?.l();
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((l * z).transpose())
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = generate_precision_set(spec, &mut rng)?;
    let mut y = Vec::with_capacity(spec.k);
    for o in &truth.omega {
        let sigma = o.clone().cholesky().ok_or(SimulateError::NotPositiveDefinite)?.inverse();
        y.push(sample_mvn(&sigma, spec.n, &mut rng)?);
    }
    let data = GroupData::from_observations(y).map_err(|e| SimulateError::Spec(e.to_string()))?;
    Ok(Scenario {
        spec: *spec,
        data,
        truth,
    })
}

/// JSON ground truth written next to the group CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub spec: ScenarioSpec,
    pub group_files: Vec<String>,
    pub omega: Vec<Vec<Vec<f64>>>,
    pub adjacency: Vec<Vec<Vec<u8>>>,
    pub edge_counts: Vec<usize>,
    pub regenerated: usize,
    pub magnitude_range: [f64; 2],
    pub rescale_factor: f64,
}

impl TruthManifest {
    pub fn new(scenario: &Scenario, group_files: Vec<String>) -> Self {
        let t = &scenario.truth;
        Self {
            spec: scenario.spec,
            group_files,
            omega: t.omega.iter().map(crate::sampler::rows).collect(),
            adjacency: t
                .adjacency
                .iter()
                .map(|a| a.row_iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect())
                .collect(),
            edge_counts: t.adjacency.iter().map(edge_count).collect(),
            regenerated: t.regenerated,
            magnitude_range: [0.4, 0.6],
            rescale_factor: RESCALE_FACTOR,
        }
    }

    pub fn omega_matrices(&self) -> Vec<DMatrix<f64>> {
        self.omega.iter().map(|m| crate::sampler::from_rows(m)).collect()
    }

    pub fn adjacency_matrices(&self) -> Vec<Adjacency> {
        self.adjacency
            .iter()
            .map(|m| DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j] != 0))
            .collect()
    }
}

/// Number of edges (upper triangle) in an adjacency matrix.
pub fn edge_count(a: &Adjacency) -> usize {
    edges(a.nrows()).filter(|&(i, j)| a[(i, j)]).count()
}

/// Writes `group_{k}.csv` (1-based) and `truth.json` into `dir`.
pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<TruthManifest, SimulateError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, y) in scenario.data.y.iter().enumerate() {
        let name = format!("group_{}.csv", k + 1);
        write_matrix_csv(BufWriter::new(File::create(dir.join(&name))?), y)?;
        files.push(name);
    }
    let manifest = TruthManifest::new(scenario, files);
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("truth.json"))?), &manifest)?;
    Ok(manifest)
}
