//! Stability diagnostics for fitted models and association results.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assoc::{self, CurvePoint, Method, TestOptions};
use crate::error::{Error, Result};
use crate::ingest::{CountMatrix, Labels};
use crate::linalg;
use crate::maxent;
use crate::seed;
use crate::stats;
use crate::transform::{self, LogAbundanceMatrix, Normalization, Scheme};

/// Spectrum and per-group fields of one pooled fit.
struct FieldFit {
    eigenvalues: Vec<f64>,
    h_case: DVector<f64>,
    h_ctrl: DVector<f64>,
}

impl FieldFit {
    fn delta(&self) -> DVector<f64> {
        &self.h_case - &self.h_ctrl
    }
}

fn fit_fields(x: &DMatrix<f64>, is_case: &[bool], lambda_min: f64) -> Result<FieldFit> {
    let mean = linalg::row_means(x);
    let c = linalg::covariance(x, &mean);
    let pinv = maxent::pseudo_inverse(&c, lambda_min)?;
    if pinv.retained == 0 {
        return Err(Error::DegenerateCovariance(lambda_min));
    }
    let cols = |want: bool| -> Vec<usize> { (0..is_case.len()).filter(|&j| is_case[j] == want).collect() };
    let m_case = linalg::row_means(&x.select_columns(&cols(true)));
    let m_ctrl = linalg::row_means(&x.select_columns(&cols(false)));
    Ok(FieldFit {
        eigenvalues: pinv.eigenvalues,
        h_case: &pinv.j * m_case,
        h_ctrl: &pinv.j * m_ctrl,
    })
}

/// Mean and spread of one quantity across subsamples, with the label-blind
/// bootstrap band where one applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub quantity: String,
    pub index: usize,
    pub full: f64,
    pub mean: f64,
    pub sd: f64,
    pub null_mean: Option<f64>,
    pub null_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub fraction: f64,
    pub repeats: usize,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn rows_for(&self, quantity: &str) -> Vec<&StabilityRow> {
        self.rows.iter().filter(|r| r.quantity == quantity).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,index,mean,sd,null_mean,null_sd\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.quantity,
                r.index,
                r.mean,
                r.sd,
                opt(r.null_mean),
                opt(r.null_sd)
            );
        }
        out
    }
}

fn summarize(values: &[Vec<f64>], k: usize) -> (f64, f64) {
    let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
    (stats::mean(&col), stats::sd(&col))
}

/// Refits on stratified subsamples of `fraction` of each group, and on
/// label-blind bootstraps of the same size for a null band on `Δh`.
pub fn subsample_stability(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    fraction: f64,
    repeats: usize,
    lambda_min: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} is not in (0,1]")));
    }
    let mask = labels.case_mask(l.samples())?;
    let cases: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    let ctrls: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
    let k_case = (fraction * cases.len() as f64).round() as usize;
    let k_ctrl = (fraction * ctrls.len() as f64).round() as usize;
    if k_case < 2 || k_ctrl < 2 {
        return Err(Error::invalid(format!(
            "subsample of {k_case} cases and {k_ctrl} controls is degenerate"
        )));
    }
    let x = l.values();
    let full = fit_fields(x, &mask, lambda_min)?;
    let p = l.n_taxa();

    let fits: Vec<(FieldFit, DVector<f64>)> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed, "stability-subsample", r as u64);
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, cases.len(), k_case)
                .into_iter()
                .map(|k| cases[k])
                .chain(
                    rand::seq::index::sample(&mut rng, ctrls.len(), k_ctrl)
                        .into_iter()
                        .map(|k| ctrls[k]),
                )
                .collect();
            idx.sort_unstable();
            let sub_mask: Vec<bool> = idx.iter().map(|&j| mask[j]).collect();
            let fit = fit_fields(&x.select_columns(&idx), &sub_mask, lambda_min)?;

            let mut rng = seed::rng(seed, "stability-bootstrap", r as u64);
            let boot: Vec<usize> = (0..k_case + k_ctrl)
                .map(|_| rng.gen_range(0..mask.len()))
                .collect();
            let boot_mask: Vec<bool> = (0..boot.len()).map(|k| k < k_case).collect();
            let null = fit_fields(&x.select_columns(&boot), &boot_mask, lambda_min)?.delta();
            Ok((fit, null))
        })
        .collect::<Result<_>>()?;

    let eig: Vec<Vec<f64>> = fits.iter().map(|f| f.0.eigenvalues.clone()).collect();
    let hc: Vec<Vec<f64>> = fits.iter().map(|f| f.0.h_case.iter().copied().collect()).collect();
    let hk: Vec<Vec<f64>> = fits.iter().map(|f| f.0.h_ctrl.iter().copied().collect()).collect();
    let dh: Vec<Vec<f64>> = fits.iter().map(|f| f.0.delta().iter().copied().collect()).collect();
    let nulls: Vec<Vec<f64>> = fits.iter().map(|f| f.1.iter().copied().collect()).collect();
    let full_dh = full.delta();

    let mut rows = Vec::new();
    let mut push = |quantity: &str, k: usize, full: f64, data: &[Vec<f64>], null: Option<&[Vec<f64>]>| {
        let (mean, sd) = if data.is_empty() { (f64::NAN, 0.0) } else { summarize(data, k) };
        let band = null.filter(|n| !n.is_empty()).map(|n| summarize(n, k));
        rows.push(StabilityRow {
            quantity: quantity.to_string(),
            index: k,
            full,
            mean,
            sd,
            null_mean: band.map(|b| b.0),
            null_sd: band.map(|b| b.1),
        });
    };
    for k in 0..p {
        push("eigenvalue", k, full.eigenvalues[k], &eig, None);
    }
    for k in 0..p {
        push("h_case", k, full.h_case[k], &hc, None);
    }
    for k in 0..p {
        push("h_ctrl", k, full.h_ctrl[k], &hk, None);
    }
    for k in 0..p {
        push("delta_h", k, full_dh[k], &dh, Some(&nulls));
    }
    Ok(StabilityReport {
        fraction,
        repeats,
        rows,
    })
}

/// Elementwise agreement of the case and control covariance matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceComparison {
    /// Off-diagonal `(control, case)` covariance pairs, `i < j`.
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of case covariances on control covariances.
    pub slope: f64,
    /// Slope of control covariances on case covariances.
    pub reverse_slope: f64,
    pub r: f64,
    /// `r` for label-blind random partitions of the same sizes.
    pub baseline_r: Vec<f64>,
    pub baseline_r_mean: f64,
    pub baseline_r_sd: f64,
}

impl CovarianceComparison {
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("control,case\n");
        for (a, b) in &self.pairs {
            let _ = writeln!(out, "{a},{b}");
        }
        out
    }
}

fn offdiag_cov(x: &DMatrix<f64>, cols: &[usize]) -> Vec<f64> {
    let sub = x.select_columns(cols);
    let c = linalg::covariance(&sub, &linalg::row_means(&sub));
    let p = c.nrows();
    (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .map(|(i, j)| c[(i, j)])
        .collect()
}

pub fn compare_group_covariances(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    repeats: usize,
    seed: u64,
) -> Result<CovarianceComparison> {
    let mask = labels.case_mask(l.samples())?;
    let cases: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    let ctrls: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
    if cases.len() < 3 || ctrls.len() < 3 {
        return Err(Error::invalid("each group needs at least 3 samples"));
    }
    if l.n_taxa() < 2 {
        return Err(Error::invalid("covariance comparison needs at least 2 taxa"));
    }
    let x = l.values();
    let a = offdiag_cov(x, &ctrls);
    let b = offdiag_cov(x, &cases);
    let small = cases.len().min(ctrls.len());
    let baseline_r: Vec<f64> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut idx: Vec<usize> = (0..mask.len()).collect();
            idx.shuffle(&mut seed::rng(seed, "covariance-baseline", r as u64));
            let (first, second) = idx.split_at(small);
            stats::pearson(&offdiag_cov(x, first), &offdiag_cov(x, second))
        })
        .collect();
    Ok(CovarianceComparison {
        slope: stats::ols_slope(&a, &b),
        reverse_slope: stats::ols_slope(&b, &a),
        r: stats::pearson(&a, &b),
        baseline_r_mean: if repeats == 0 { f64::NAN } else { stats::mean(&baseline_r) },
        baseline_r_sd: stats::sd(&baseline_r),
        baseline_r,
        pairs: a.into_iter().zip(b).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSweep {
    /// Pooled covariance eigenvalues, descending.
    pub spectrum: Vec<f64>,
    /// `(retained modes, significant taxa)`.
    pub points: Vec<(usize, usize)>,
}

impl LambdaSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("retained,n_significant,cutoff_eigenvalue\n");
        for &(k, n) in &self.points {
            let cut = if k == 0 { f64::INFINITY } else { self.spectrum[k - 1] };
            let _ = writeln!(out, "{k},{n},{cut}");
        }
        out
    }
}

/// Direct-association detection counts as a function of the number of
/// retained covariance modes.
pub fn lambda_sweep(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    retained_counts: &[usize],
    opts: &TestOptions,
) -> Result<LambdaSweep> {
    let (_, c) = maxent::estimate_moments(l)?;
    let spectrum = linalg::symmetric_eigen(&c).values;
    let points = retained_counts
        .iter()
        .map(|&k| {
            let pinv = maxent::pseudo_inverse_top_k(&c, k)?;
            let t = assoc::daa_with_interactions(l, labels, &pinv.j, pinv.retained, opts)?;
            Ok((k, t.n_significant()))
        })
        .collect::<Result<_>>()?;
    Ok(LambdaSweep { spectrum, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeCurves {
    pub scheme: Scheme,
    pub curves: Vec<(Method, Vec<CurvePoint>)>,
    /// Full-data `Δh` under this scheme.
    pub delta_h: Vec<f64>,
}

/// Detection curves per normalization scheme on identically seeded
/// subsamples.
#[allow(clippy::too_many_arguments)]
pub fn normalization_comparison(
    counts: &CountMatrix,
    labels: &Labels,
    schemes: &[Scheme],
    base: Normalization,
    sizes: &[usize],
    repeats: usize,
    methods: &[Method],
    opts: &TestOptions,
) -> Result<Vec<SchemeCurves>> {
    if schemes.is_empty() {
        return Err(Error::invalid("no normalization schemes given"));
    }
    schemes
        .iter()
        .map(|&scheme| {
            let l = transform::log_transform(counts, Normalization { scheme, ..base })?;
            let mask = labels.case_mask(l.samples())?;
            let delta_h = fit_fields(l.values(), &mask, opts.lambda_min)?
                .delta()
                .iter()
                .copied()
                .collect();
            let curves = methods
                .iter()
                .map(|&m| Ok((m, assoc::detection_curve(&l, labels, sizes, repeats, m, opts)?)))
                .collect::<Result<_>>()?;
            Ok(SchemeCurves {
                scheme,
                curves,
                delta_h,
            })
        })
        .collect()
}

pub fn normalization_csv(results: &[SchemeCurves]) -> String {
    let mut out = String::from("scheme,method,size,mean,sd\n");
    for s in results {
        for (m, pts) in &s.curves {
            for p in pts {
                let _ = writeln!(out, "{},{},{},{},{}", s.scheme, m, p.size, p.mean, p.sd);
            }
        }
    }
    out
}
