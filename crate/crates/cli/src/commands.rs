use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{digest, InputDigest};
use anyhow::Context;
use mghs_core::g3p::{kl_divergence, ln_normalizer, KlReference};
use mghs_core::io::read_matrix_file;
use mghs_core::metrics::{auc, confusion_metrics, frobenius_loss, write_metrics_csv, MetricsRow};
use mghs_core::quad::{integrate, QuadOptions};
use mghs_core::sampler::{edges, from_rows, psrf, psrf_columns, read_kappa_csv, read_trace_csv, rows};
use mghs_core::selection::{run_chain_with_selection, select, write_adjacency_csv};
use mghs_core::simulate::{generate_scenario, write_scenario, TruthManifest};
use mghs_core::{G3pParams, G3pSampler, GroupData, ScenarioSpec, SelectionMode, SelectionResult};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// What a command read, plus notes for the manifest.
#[derive(Default)]
pub struct Outcome {
    pub inputs: Vec<InputDigest>,
    pub notes: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn simulate(cfg: &Config) -> Result<Outcome, CliError> {
    let spec = ScenarioSpec {
        k: cfg.groups,
        ..ScenarioSpec::new(cfg.scenario, cfg.p, cfg.n, cfg.seed)
    };
    spec.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let scenario = generate_scenario(&spec)?;
    let truth = write_scenario(&cfg.out_dir, &scenario)?;
    println!(
        "simulated {:?}: K={} p={} n={}, true edges per group {:?}",
        spec.scenario, spec.k, spec.p, spec.n, truth.edge_counts
    );
    Ok(Outcome::default())
}

/// Posterior means pooled over chains, as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    /// `mghs`, or `ghs` when R is frozen or there is a single group.
    pub model: String,
    pub k: usize,
    pub p: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub standardized: bool,
    pub omega_mean: Vec<Vec<Vec<f64>>>,
    pub kappa_mean: Vec<Vec<Vec<f64>>>,
    pub r_mean: Vec<Vec<f64>>,
    pub z_frequency: Vec<Vec<Vec<f64>>>,
    pub t_alpha_mean: Vec<Vec<f64>>,
    pub r_acceptance_rate: Vec<f64>,
    /// Per chain: post-burnin `R` proposals rejected at the conditional-variance floor.
    pub r_boundary_rejections: Vec<usize>,
}

impl Posterior {
    fn matrices(m: &[Vec<Vec<f64>>]) -> Vec<DMatrix<f64>> {
        m.iter().map(|x| from_rows(x)).collect()
    }
}

/// Group files: every path as given, or `group_<n>.csv` in numeric order for a directory.
fn resolve_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::MissingInput {
            path: PathBuf::from("<data>"),
            message: "no group files or data directory given".into(),
        });
    }
    if inputs.len() == 1 && inputs[0].is_dir() {
        let mut found: Vec<(usize, PathBuf)> = fs::read_dir(&inputs[0])
            .with_context(|| format!("listing {}", inputs[0].display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?;
                let idx = name.strip_prefix("group_")?.strip_suffix(".csv")?.parse().ok()?;
                Some((idx, p))
            })
            .collect();
        found.sort();
        if found.is_empty() {
            return Err(CliError::MissingInput {
                path: inputs[0].clone(),
                message: "directory holds no group_<n>.csv files".into(),
            });
        }
        return Ok(found.into_iter().map(|(_, p)| p).collect());
    }
    for p in inputs {
        if !p.is_file() {
            return Err(CliError::MissingInput {
                path: p.clone(),
                message: "no such file".into(),
            });
        }
    }
    Ok(inputs.to_vec())
}

pub fn fit(cfg: &Config, inputs: &[PathBuf]) -> Result<Outcome, CliError> {
    let files = resolve_inputs(inputs)?;
    let mut out = Outcome::default();
    let mut ys = Vec::new();
    for f in &files {
        out.inputs.push(digest(f)?);
        ys.push(read_matrix_file(f)?);
    }
    let mut data = GroupData::from_observations(ys)?;
    if cfg.standardize {
        data = data.standardized()?;
    }
    let ghs = data.k == 1 || cfg.freeze_r;
    if data.k == 1 {
        out.notes.push("single group: graphical horseshoe mode, R step skipped".into());
    } else if cfg.freeze_r {
        out.notes.push("R frozen at identity: independent graphical horseshoe per group".into());
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let selection = cfg.selection();
    let runs: Vec<_> = pool.install(|| {
        (0..cfg.chains as u64)
            .into_par_iter()
            .map(|c| run_chain_with_selection(&data, &cfg.chain(c), &selection))
            .collect()
    });

    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let (k, p) = (data.k, data.p);
    let nc = cfg.chains as f64;
    let mut omega = vec![DMatrix::<f64>::zeros(p, p); k];
    let mut kappa = omega.clone();
    let mut zf = omega.clone();
    let mut r_mean = DMatrix::<f64>::zeros(k, k);
    let mut t_alpha = Vec::new();
    let mut r_acc = Vec::new();
    let mut r_floor = Vec::new();
    let mut draws = 0;
    for (c, run) in runs.into_iter().enumerate() {
        let (trace, sel) = run?;
        let dir = cfg.out_dir.join(format!("chain_{c}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        trace.write_csv(create(&dir.join("trace.csv"))?)?;
        trace.write_kappa_csv(create(&dir.join("kappa.csv"))?)?;
        write_json(&dir.join("summary.json"), &trace.summary(&cfg.chain(c as u64)))?;
        write_json(&dir.join("selection.json"), &sel)?;
        for g in 0..k {
            omega[g] += &trace.omega_mean[g] / nc;
            kappa[g] += &trace.kappa_mean[g] / nc;
        }
        for (g, m) in sel.z_frequency_matrices().iter().enumerate() {
            zf[g] += m / nc;
        }
        r_mean += &trace.r_mean / nc;
        t_alpha.push(sel.t_alpha_mean());
        r_acc.push(trace.r_acceptance_rate());
        r_floor.push(trace.r_boundary_rejections);
        draws = trace.log_posterior.len();
        println!(
            "chain {c}: {} draws in {:.1} s, R acceptance {:.3}",
            draws,
            trace.elapsed_secs,
            trace.r_acceptance_rate()
        );
        if trace.r_boundary_rejections > 0 {
            eprintln!(
                "warning: chain {c}: {} of {} R proposals hit the conditional-variance floor; R is near singular and κ may be unreliable",
                trace.r_boundary_rejections, trace.r_proposals
            );
        }
    }
    let post = Posterior {
        model: if ghs { "ghs" } else { "mghs" }.into(),
        k,
        p,
        chains: cfg.chains,
        draws_per_chain: draws,
        standardized: cfg.standardize,
        omega_mean: omega.iter().map(rows).collect(),
        kappa_mean: kappa.iter().map(rows).collect(),
        r_mean: rows(&r_mean),
        z_frequency: zf.iter().map(rows).collect(),
        t_alpha_mean: t_alpha,
        r_acceptance_rate: r_acc,
        r_boundary_rejections: r_floor,
    };
    write_json(&cfg.out_dir.join("posterior.json"), &post)?;
    Ok(out)
}

fn scores_and_adjacency(post: &Posterior, mode: SelectionMode) -> Result<(Vec<DMatrix<f64>>, Vec<mghs_core::Adjacency>), CliError> {
    let kappa = Posterior::matrices(&post.kappa_mean);
    let sel = SelectionResult {
        z_frequency: post.z_frequency.clone(),
        t_alpha_draws: Vec::new(),
        acceptance_rate: Vec::new(),
    };
    let adj = select(&kappa, Some(&sel), mode)?;
    let scores = match mode {
        SelectionMode::Mpm => kappa,
        SelectionMode::Cut => sel.z_frequency_matrices(),
    };
    Ok((scores, adj))
}

pub fn select_edges(cfg: &Config, fit_dir: &Path) -> Result<Outcome, CliError> {
    let path = fit_dir.join("posterior.json");
    let post: Posterior = read_json(&path)?;
    let (scores, adj) = scores_and_adjacency(&post, cfg.select_mode)?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    write_adjacency_csv(create(&cfg.out_dir.join("adjacency.csv"))?, &adj, &scores)?;
    let counts: Vec<usize> = adj
        .iter()
        .map(|a| edges(a.nrows()).filter(|&(i, j)| a[(i, j)]).count())
        .collect();
    println!("{:?} selection: edges per group {counts:?}", cfg.select_mode);
    Ok(Outcome {
        inputs: vec![digest(&path)?],
        notes: Vec::new(),
    })
}

pub fn metrics(cfg: &Config, fit_dir: &Path, truth_path: &Path) -> Result<Outcome, CliError> {
    let post_path = fit_dir.join("posterior.json");
    let post: Posterior = read_json(&post_path)?;
    let truth: TruthManifest = read_json(truth_path)?;
    let true_adj = truth.adjacency_matrices();
    let kappa = Posterior::matrices(&post.kappa_mean);
    let area = auc(&kappa, &true_adj)?;
    let frob = frobenius_loss(&Posterior::matrices(&post.omega_mean), &truth.omega_matrices())?;
    let scenario = serde_json::to_value(truth.spec.scenario)?.as_str().unwrap_or_default().to_string();
    let mut table = Vec::new();
    for mode in [SelectionMode::Mpm, SelectionMode::Cut] {
        let (_, adj) = scores_and_adjacency(&post, mode)?;
        let r = confusion_metrics(&adj, &true_adj)?;
        let tag = serde_json::to_value(mode)?.as_str().unwrap_or_default().to_string();
        table.push(MetricsRow {
            method: format!("{}_{tag}", post.model),
            scenario: scenario.clone(),
            replicate: truth.spec.seed as usize,
            accuracy: r.accuracy,
            mcc: r.mcc,
            tpr: r.tpr,
            fpr: r.fpr,
            auc: Some(area),
            frobenius: Some(frob),
        });
    }
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    write_metrics_csv(create(&cfg.out_dir.join("metrics.csv"))?, &table)?;
    println!("method       acc    mcc    tpr    fpr    auc    frob");
    for r in &table {
        println!(
            "{:<10} {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}",
            r.method, r.accuracy, r.mcc, r.tpr, r.fpr, area, frob
        );
    }
    Ok(Outcome {
        inputs: vec![digest(&post_path)?, digest(truth_path)?],
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub chains: usize,
    pub draws: usize,
    pub psrf_log_posterior: f64,
    pub psrf_kappa_max: f64,
    /// Per group, share of edge-wise κ PSRF values at most 1.2.
    pub kappa_share_below_1_2: Vec<f64>,
    pub log_posterior: Vec<Vec<f64>>,
}

pub fn diagnose(cfg: &Config, fit_dir: &Path) -> Result<Outcome, CliError> {
    let mut dirs: Vec<(usize, PathBuf)> = fs::read_dir(fit_dir)
        .map_err(|e| CliError::MissingInput {
            path: fit_dir.to_path_buf(),
            message: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| Some((p.file_name()?.to_str()?.strip_prefix("chain_")?.parse().ok()?, p.clone())))
        .collect();
    dirs.sort();
    if dirs.len() < 2 {
        return Err(CliError::Invalid(format!(
            "diagnose needs at least 2 chains in {}, found {}",
            fit_dir.display(),
            dirs.len()
        )));
    }
    let mut out = Outcome::default();
    let mut kappa = Vec::new();
    let mut lp = Vec::new();
    for (_, d) in &dirs {
        let (kp, tp) = (d.join("kappa.csv"), d.join("trace.csv"));
        out.inputs.push(digest(&kp)?);
        out.inputs.push(digest(&tp)?);
        kappa.push(read_kappa_csv(File::open(&kp).context("opening kappa draws")?)?);
        lp.push(read_trace_csv(File::open(&tp).context("opening trace")?)?.iter().map(|r| r.log_posterior).collect::<Vec<f64>>());
    }
    let values = psrf_columns(&kappa)?;
    let post: Posterior = read_json(&fit_dir.join("posterior.json"))?;
    let ne = post.p * (post.p - 1) / 2;
    let shares: Vec<f64> = values
        .chunks(ne.max(1))
        .map(|c| c.iter().filter(|&&v| v <= 1.2).count() as f64 / c.len() as f64)
        .collect();
    let diag = Diagnostics {
        chains: dirs.len(),
        draws: lp.iter().map(Vec::len).min().unwrap_or(0),
        psrf_log_posterior: psrf(&lp)?,
        psrf_kappa_max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        kappa_share_below_1_2: shares,
        log_posterior: lp,
    };
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    write_json(&cfg.out_dir.join("diagnostics.json"), &diag)?;
    println!(
        "{} chains × {} draws: log-posterior PSRF {:.3}, κ PSRF ≤ 1.2 per group {:?}",
        diag.chains, diag.draws, diag.psrf_log_posterior, diag.kappa_share_below_1_2
    );
    Ok(out)
}

/// KS statistic of `xs` against the G3p CDF, integrated between sorted draws.
fn ks_against_density(params: &G3pParams, mut xs: Vec<f64>) -> Result<f64, CliError> {
    xs.sort_by(f64::total_cmp);
    let ln_c = ln_normalizer(params)?;
    let (g, a, b) = (params.gamma as f64, params.alpha, params.beta);
    let f = |x: f64| if x > 0.0 { (ln_c + g * x.ln() - a * a * x * x + b * x).exp() } else { 0.0 };
    let opts = QuadOptions { rel_tol: 1e-10, ..QuadOptions::default() };
    let n = xs.len() as f64;
    let (mut cdf, mut prev, mut d) = (0.0, 0.0, 0.0f64);
    for (i, &x) in xs.iter().enumerate() {
        cdf += integrate(f, prev, x, opts).value;
        prev = x;
        d = d.max(cdf - i as f64 / n).max((i + 1) as f64 / n - cdf);
    }
    Ok(d)
}

pub fn g3p_check(cfg: &Config) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // 1% critical value, Bonferroni-corrected over the 40 cells
    let tol = 2.12 / (cfg.g3p_draws as f64).sqrt();
    let mut all_ok = true;
    let mut line = |name: &str, ok: bool, detail: String| {
        all_ok &= ok;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let (mut worst_ks, mut worst_ppd) = (0.0f64, 0.0f64);
    for g in [1u32, 3, 10, 50] {
        for rho in [-5.0, -1.0, 0.5, 3.0, 8.0] {
            for a in [0.5, 2.0] {
                let params = G3pParams::new(g, a, rho * a)?;
                let mut s = G3pSampler::new();
                let xs = (0..cfg.g3p_draws).map(|_| s.sample(&params, &mut rng)).collect::<Result<Vec<_>, _>>()?;
                worst_ks = worst_ks.max(ks_against_density(&params, xs)?);
                worst_ppd = worst_ppd.max(s.stats.proposals_per_draw());
            }
        }
    }
    line("KS grid", worst_ks < tol, format!("max KS {worst_ks:.4} over 40 cells, critical value {tol:.4}"));
    line("proposals", worst_ppd <= 10.0, format!("max mean proposals per draw {worst_ppd:.3}"));

    let unit = |g: u32, r: f64| G3pParams::new(g, 1.0, r);
    let k1 = kl_divergence(&unit(1, 0.002)?, KlReference::NormalBeta)?;
    line("KL γ=1 β/α=0.002", (k1.target_to_ref - 0.284).abs() <= 0.01, format!("{:.4} (table 0.284)", k1.target_to_ref));
    let k2 = kl_divergence(&unit(100, 8.0)?, KlReference::NormalBeta)?;
    line("KL γ=100 β/α=8", (k2.ref_to_target - 49.973).abs() <= 0.5, format!("{:.3} (table 49.973)", k2.ref_to_target));
    let mut worst50 = 0.0f64;
    for r in [0.002, 0.2, 0.5, 1.0, 3.0, 5.0, 8.0] {
        let k = kl_divergence(&unit(50, r)?, KlReference::NormalGamma)?;
        worst50 = worst50.max(k.target_to_ref).max(k.ref_to_target);
    }
    line("KL γ=50 row", worst50 < 1e-3, format!("max {worst50:.2e}"));
    for g in [1u32, 3, 10] {
        let v: Vec<f64> = [-1.0, -5.0, -20.0]
            .iter()
            .map(|&r| kl_divergence(&unit(g, r)?, KlReference::GammaLimit).map(|k| k.target_to_ref))
            .collect::<Result<_, _>>()?;
        line(
            &format!("Gamma limit γ={g}"),
            v[2] < 1e-3 && v[0] > v[1] && v[1] > v[2],
            format!("{:.2e} / {:.2e} / {:.2e}", v[0], v[1], v[2]),
        );
    }
    if all_ok {
        Ok(Outcome::default())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("g3p-check found failures")))
    }
}
