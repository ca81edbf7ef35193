//! L1-penalized logistic regression and repeated stratified cross-validation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Labels;
use crate::seed;
use crate::stats;
use crate::transform::LogAbundanceMatrix;

/// Stopping tolerance on the optimality-condition violation.
pub const TOLERANCE: f64 = 1e-6;
const MAX_SWEEPS: usize = 20_000;

/// Penalties tried when none is given.
pub const PENALTY_LADDER: [f64; 7] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub sweeps: usize,
}

impl LogisticFit {
    /// Linear score `b + w·x` for one row of `x`.
    pub fn score(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.intercept + (0..x.ncols()).map(|k| x[(row, k)] * self.weights[k]).sum::<f64>()
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn mean_loss(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(e, t)| softplus(*e) - t * e).sum::<f64>() / eta.len() as f64
}

/// Mean logistic loss plus `penalty · Σ|w|`.
pub fn objective(x: &DMatrix<f64>, y: &[bool], w: &DVector<f64>, b: f64, penalty: f64) -> f64 {
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let eta: Vec<f64> = (0..x.nrows())
        .map(|i| b + (0..x.ncols()).map(|k| x[(i, k)] * w[k]).sum::<f64>())
        .collect();
    mean_loss(&eta, &yf) + penalty * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes mean logistic loss plus `penalty · Σ|w_j|` by cyclic coordinate
/// descent. Each coordinate first tries a proximal Newton step and falls back
/// to the curvature bound `mean(x_j²)/4`, which always decreases the objective.
pub fn l1_logistic_fit(x: &DMatrix<f64>, y: &[bool], penalty: f64) -> Result<LogisticFit> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows, {} labels", y.len())));
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::invalid(format!("penalty {penalty} must be positive")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    let nf = n as f64;
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let cols: Vec<Vec<f64>> = (0..d).map(|k| x.column(k).iter().copied().collect()).collect();
    let bound: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / (4.0 * nf))
        .collect();

    let mut w = DVector::zeros(d);
    let mut b = 0.0;
    let mut eta = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut converged = false;
    let mut sweeps = 0;

    // One coordinate update along direction `col` (None for the intercept).
    let update = |coef: &mut f64,
                      col: Option<&[f64]>,
                      bound: f64,
                      pen: f64,
                      eta: &mut Vec<f64>,
                      trial: &mut Vec<f64>| {
        let xi = |i: usize| col.map_or(1.0, |c| c[i]);
        let (mut g, mut h) = (0.0, 0.0);
        for i in 0..n {
            let s = sigmoid(eta[i]);
            let v = xi(i);
            g += v * (s - yf[i]);
            h += v * v * s * (1.0 - s);
        }
        g /= nf;
        h /= nf;
        let base = mean_loss(eta, &yf) + pen * coef.abs();
        for curvature in [h, bound] {
            if curvature <= 0.0 {
                continue;
            }
            let proposal = soft_threshold(*coef - g / curvature, pen / curvature);
            let step = proposal - *coef;
            if step == 0.0 {
                return;
            }
            for i in 0..n {
                trial[i] = eta[i] + step * xi(i);
            }
            if mean_loss(trial, &yf) + pen * proposal.abs() <= base || curvature == bound {
                *coef = proposal;
                std::mem::swap(eta, trial);
                return;
            }
        }
    };

    while sweeps < MAX_SWEEPS {
        if kkt_violation(&cols, &yf, &eta, &w, penalty) <= TOLERANCE {
            converged = true;
            break;
        }
        sweeps += 1;
        update(&mut b, None, 0.25, 0.0, &mut eta, &mut trial);
        for k in 0..d {
            if bound[k] == 0.0 {
                continue;
            }
            let mut wk = w[k];
            update(&mut wk, Some(&cols[k]), bound[k], penalty, &mut eta, &mut trial);
            w[k] = wk;
        }
    }
    Ok(LogisticFit {
        weights: w,
        intercept: b,
        converged,
        sweeps,
    })
}

/// Largest violation of the optimality conditions.
fn kkt_violation(cols: &[Vec<f64>], y: &[f64], eta: &[f64], w: &DVector<f64>, penalty: f64) -> f64 {
    let n = eta.len() as f64;
    let resid: Vec<f64> = eta.iter().zip(y).map(|(e, t)| sigmoid(*e) - t).collect();
    let mut worst = (resid.iter().sum::<f64>() / n).abs();
    for (k, c) in cols.iter().enumerate() {
        let g = c.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n;
        let v = if w[k] != 0.0 {
            (g + penalty * w[k].signum()).abs()
        } else {
            (g.abs() - penalty).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Fold index per sample, stratified by class.
pub fn stratified_folds<R: Rng>(is_case: &[bool], folds: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n_case = is_case.iter().filter(|&&c| c).count();
    let minority = n_case.min(is_case.len() - n_case);
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if folds > minority {
        return Err(Error::invalid(format!(
            "{folds} folds exceed the minority class size {minority}"
        )));
    }
    let mut cases: Vec<usize> = (0..is_case.len()).filter(|&j| is_case[j]).collect();
    let mut ctrls: Vec<usize> = (0..is_case.len()).filter(|&j| !is_case[j]).collect();
    cases.shuffle(rng);
    ctrls.shuffle(rng);
    let mut fold = vec![0; is_case.len()];
    for (k, &j) in cases.iter().chain(ctrls.iter()).enumerate() {
        fold[j] = k % folds;
    }
    Ok(fold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Auc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    /// `None` selects a penalty from [`PENALTY_LADDER`].
    pub penalty: Option<f64>,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 100,
            penalty: None,
            seed: 0,
            metric: Metric::Accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub feature_subset: Vec<usize>,
    pub metric: Metric,
    /// Held-out score of every (repeat, fold), repeat-major.
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub penalty: f64,
    /// Subset members with nonzero weight in a fit on all samples.
    pub selected_features: Vec<usize>,
    /// Mean score at each ladder penalty when the penalty was selected.
    pub ladder: Vec<(f64, f64)>,
}

/// Standardizes columns of `x` with statistics of the rows in `train`.
fn standardize(x: &DMatrix<f64>, train: &[usize]) -> DMatrix<f64> {
    let mut out = x.clone();
    let nt = train.len() as f64;
    for k in 0..x.ncols() {
        let mean = train.iter().map(|&i| x[(i, k)]).sum::<f64>() / nt;
        let var = train.iter().map(|&i| (x[(i, k)] - mean).powi(2)).sum::<f64>() / nt;
        let sd = var.sqrt();
        for i in 0..x.nrows() {
            out[(i, k)] = if sd > 0.0 { (x[(i, k)] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Area under the ROC curve by the rank-sum formula, ties counted half.
pub fn auc(scores: &[f64], y: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !y[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if y[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        f64::NAN
    } else {
        wins / pairs
    }
}

fn fold_score(
    x: &DMatrix<f64>,
    y: &[bool],
    fold: &[usize],
    k: usize,
    penalty: f64,
    metric: Metric,
) -> Result<f64> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != k).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == k).collect();
    let xs = standardize(x, &train);
    let fit = l1_logistic_fit(
        &xs.select_rows(&train),
        &train.iter().map(|&i| y[i]).collect::<Vec<_>>(),
        penalty,
    )?;
    let scores: Vec<f64> = test.iter().map(|&i| fit.score(&xs, i)).collect();
    let truth: Vec<bool> = test.iter().map(|&i| y[i]).collect();
    Ok(match metric {
        Metric::Accuracy => {
            let hits = scores
                .iter()
                .zip(&truth)
                .filter(|(s, t)| (**s > 0.0) == **t)
                .count();
            hits as f64 / test.len() as f64
        }
        Metric::Auc => auc(&scores, &truth),
    })
}

fn cv_scores(
    x: &DMatrix<f64>,
    y: &[bool],
    folds: usize,
    repeats: usize,
    penalty: f64,
    seed: u64,
    metric: Metric,
) -> Result<Vec<f64>> {
    let partitions: Vec<Vec<usize>> = (0..repeats)
        .map(|r| stratified_folds(y, folds, &mut seed::rng(seed, "cv-partition", r as u64)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..repeats)
        .flat_map(|r| (0..folds).map(move |k| (r, k)))
        .collect();
    jobs.par_iter()
        .map(|&(r, k)| fold_score(x, y, &partitions[r], k, penalty, metric))
        .collect()
}

/// Picks the ladder penalty with the flattest neighbourhood among those
/// within 0.02 of the best mean score.
fn select_penalty(scores: &[(f64, f64)]) -> f64 {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut choice = (f64::INFINITY, scores[0].0);
    for k in 0..scores.len() {
        if scores[k].1 < best - 0.02 {
            continue;
        }
        let left = if k > 0 { (scores[k].1 - scores[k - 1].1).abs() } else { 0.0 };
        let right = if k + 1 < scores.len() {
            (scores[k].1 - scores[k + 1].1).abs()
        } else {
            0.0
        };
        let change = left.max(right);
        if change < choice.0 {
            choice = (change, scores[k].0);
        }
    }
    choice.1
}

/// Repeated stratified k-fold cross-validation on taxa `subset` of `l`.
pub fn cross_validate(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    subset: &[usize],
    opts: &CvOptions,
) -> Result<CvReport> {
    if subset.is_empty() {
        return Err(Error::invalid("feature subset is empty"));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= l.n_taxa()) {
        return Err(Error::invalid(format!("feature {bad} is out of range")));
    }
    if opts.repeats == 0 {
        return Err(Error::invalid("at least one repeat is required"));
    }
    let y = labels.case_mask(l.samples())?;
    let x = l.values().select_rows(subset).transpose();
    let mut ladder = Vec::new();
    let penalty = match opts.penalty {
        Some(p) => p,
        None => {
            let pilot = opts.repeats.min(10);
            for &p in &PENALTY_LADDER {
                let s = cv_scores(
                    &x,
                    &y,
                    opts.folds,
                    pilot,
                    p,
                    seed::derive(opts.seed, "penalty-ladder", 0),
                    opts.metric,
                )?;
                ladder.push((p, stats::mean(&s)));
            }
            select_penalty(&ladder)
        }
    };
    let fold_scores = cv_scores(&x, &y, opts.folds, opts.repeats, penalty, opts.seed, opts.metric)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let full = l1_logistic_fit(&standardize(&x, &all), &y, penalty)?;
    let selected_features = subset
        .iter()
        .enumerate()
        .filter(|(k, _)| full.weights[*k] != 0.0)
        .map(|(_, &i)| i)
        .collect();
    Ok(CvReport {
        feature_subset: subset.to_vec(),
        metric: opts.metric,
        mean: stats::mean(&fold_scores),
        sd: stats::sd(&fold_scores),
        fold_scores,
        penalty,
        selected_features,
        ladder,
    })
}

/// CSV of `(subset_name, mean, sd)` rows.
pub fn summary_csv(reports: &[(String, CvReport)]) -> String {
    let mut out = String::from("subset_name,mean_score,sd\n");
    for (name, r) in reports {
        let _ = writeln!(out, "{name},{},{}", r.mean, r.sd);
    }
    out
}
