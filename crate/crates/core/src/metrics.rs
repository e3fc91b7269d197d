//! Structure-recovery and forecast scores. Edge counts are pooled over the
//! upper triangles of all groups.

use crate::error::MetricsError;
use crate::sampler::edges;
use crate::Adjacency;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if den == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / den.sqrt()
        }
    }

    pub fn add(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub pooled: ConfusionCounts,
    pub per_group: Vec<ConfusionCounts>,
    pub accuracy: f64,
    pub mcc: f64,
    pub tpr: f64,
    pub fpr: f64,
}

fn check_shapes<A, B>(est: &[DMatrix<A>], truth: &[DMatrix<B>]) -> Result<(), MetricsError>
where
    A: nalgebra::Scalar,
    B: nalgebra::Scalar,
{
    if est.len() != truth.len() {
        return Err(MetricsError::Shape(format!("{} estimates vs {} truths", est.len(), truth.len())));
    }
    for (g, (e, t)) in est.iter().zip(truth).enumerate() {
        if e.shape() != t.shape() || e.nrows() != e.ncols() {
            return Err(MetricsError::Shape(format!(
                "group {g}: {:?} vs {:?}",
                e.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}

pub fn confusion_metrics(est: &[Adjacency], truth: &[Adjacency]) -> Result<ConfusionReport, MetricsError> {
    check_shapes(est, truth)?;
    let mut pooled = ConfusionCounts::default();
    let mut per_group = Vec::with_capacity(est.len());
    for (e, t) in est.iter().zip(truth) {
        let mut c = ConfusionCounts::default();
        for (i, j) in edges(e.nrows()) {
            match (e[(i, j)], t[(i, j)]) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        pooled.add(&c);
        per_group.push(c);
    }
    Ok(ConfusionReport {
        accuracy: pooled.accuracy(),
        mcc: pooled.mcc(),
        tpr: pooled.tpr(),
        fpr: pooled.fpr(),
        pooled,
        per_group,
    })
}

/// Mann–Whitney AUC with midranks for ties.
pub fn auc_scores(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::Shape("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Pooled AUC of per-edge scores (e.g. posterior mean `κ`) against the true supports.
pub fn auc(scores: &[DMatrix<f64>], truth: &[Adjacency]) -> Result<f64, MetricsError> {
    check_shapes(scores, truth)?;
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (sc, t) in scores.iter().zip(truth) {
        for (i, j) in edges(sc.nrows()) {
            s.push(sc[(i, j)]);
            l.push(t[(i, j)]);
        }
    }
    auc_scores(&s, &l)
}

/// `(1/K) Σ_k ‖Ω̂_k − Ω_k‖_F`.
pub fn frobenius_loss(est: &[DMatrix<f64>], truth: &[DMatrix<f64>]) -> Result<f64, MetricsError> {
    check_shapes(est, truth)?;
    if est.is_empty() {
        return Err(MetricsError::Shape("no groups".into()));
    }
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).norm()).sum::<f64>() / est.len() as f64)
}

/// Average absolute error of the best linear predictor `ŷ₂ = Σ̂₂₁ Σ̂₁₁⁻¹ y₁`
/// over the rows of `test` and the columns in `second`, with `Σ̂ = Ω̂⁻¹`.
pub fn aafe(test: &DMatrix<f64>, omega_hat: &DMatrix<f64>, first: &[usize], second: &[usize]) -> Result<f64, MetricsError> {
    let p = omega_hat.nrows();
    if test.ncols() != p || omega_hat.ncols() != p {
        return Err(MetricsError::Shape(format!(
            "test has {} columns, estimate is {}×{}",
            test.ncols(),
            p,
            omega_hat.ncols()
        )));
    }
    let mut seen = vec![false; p];
    for &c in first.iter().chain(second) {
        if c >= p || seen[c] {
            return Err(MetricsError::Shape(format!("column {c} out of range or repeated")));
        }
        seen[c] = true;
    }
    if seen.iter().any(|s| !s) || first.is_empty() || second.is_empty() || test.nrows() == 0 {
        return Err(MetricsError::Shape("partition must cover every column with two non-empty blocks".into()));
    }
    let sigma = omega_hat.clone().cholesky().ok_or(MetricsError::Singular)?.inverse();
    let s11 = sigma.select_rows(first).select_columns(first);
    let s21 = sigma.select_rows(second).select_columns(first);
    // B = Σ₂₁ Σ₁₁⁻¹, via Σ₁₁ Bᵀ = Σ₁₂
    let bt = s11
        .cholesky()
        .ok_or(MetricsError::Singular)?
        .solve(&s21.transpose());
    let y1 = test.select_columns(first);
    let y2 = test.select_columns(second);
    let err = y2 - y1 * bt;
    Ok(err.abs().sum() / (err.nrows() * err.ncols()) as f64)
}

/// Mean of [`aafe`] over groups.
pub fn mean_aafe(tests: &[DMatrix<f64>], omega_hat: &[DMatrix<f64>], first: &[usize], second: &[usize]) -> Result<f64, MetricsError> {
    if tests.len() != omega_hat.len() || tests.is_empty() {
        return Err(MetricsError::Shape("one test set per group required".into()));
    }
    let mut s = 0.0;
    for (t, o) in tests.iter().zip(omega_hat) {
        s += aafe(t, o, first, second)?;
    }
    Ok(s / tests.len() as f64)
}

/// One output row per (method, scenario, replicate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub scenario: String,
    pub replicate: usize,
    pub accuracy: f64,
    pub mcc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub auc: Option<f64>,
    pub frobenius: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(r: R) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}
