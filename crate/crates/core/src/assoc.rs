//! Per-taxon association tests between cases and controls.
//!
//! The naive test compares mean log-abundances. Direct association analysis
//! compares host fields `h = J m`, with `J` fitted once on the pooled samples
//! and held fixed across label permutations. Both use the same two-sided
//! permutation test and Benjamini-Hochberg correction.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Labels;
use crate::maxent::{self, DEFAULT_LAMBDA_MIN};
use crate::seed;
use crate::stats;
use crate::transform::LogAbundanceMatrix;

/// Relative slack under which a permuted statistic counts as a tie.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Daa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Daa => "daa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Method::Naive),
            "daa" => Ok(Method::Daa),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

/// Settings shared by every permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub n_perm: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Add-one smoothing of permutation p-values.
    pub smoothed: bool,
    pub lambda_min: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            n_perm: 10_000,
            seed: 0,
            alpha: 0.05,
            smoothed: true,
            lambda_min: DEFAULT_LAMBDA_MIN,
        }
    }
}

/// One taxon's test result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonAssociation {
    pub taxon: String,
    /// Mean difference (naive) or field difference (direct), case minus control.
    pub statistic: f64,
    pub p: f64,
    pub q: f64,
    pub significant: bool,
    pub mean_case: f64,
    pub mean_ctrl: f64,
    pub field_case: Option<f64>,
    pub field_ctrl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationTable {
    pub method: Method,
    pub rows: Vec<TaxonAssociation>,
    pub n_perm: usize,
    pub alpha: f64,
    pub smoothed: bool,
    /// Number of covariance modes used for the direct test.
    pub retained: Option<usize>,
}

impl AssociationTable {
    pub fn significant_indices(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.significant)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_significant(&self) -> usize {
        self.rows.iter().filter(|r| r.significant).count()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.p).collect()
    }

    pub fn statistics(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.statistic).collect()
    }

    /// Tab-separated report, one row per taxon.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        match self.method {
            Method::Daa => {
                out.push_str("taxon\th_case\th_ctrl\tdelta_h\tdelta_h_rel\tp\tq\tsignificant\n");
                for r in &self.rows {
                    let hc = r.field_case.unwrap_or(f64::NAN);
                    let hk = r.field_ctrl.unwrap_or(f64::NAN);
                    let rel = if hk != 0.0 {
                        format!("{}", r.statistic / hk.abs())
                    } else {
                        String::new()
                    };
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.taxon, hc, hk, r.statistic, rel, r.p, r.q, r.significant
                    );
                }
            }
            Method::Naive => {
                out.push_str("taxon\tl_case\tl_ctrl\tdelta_l\tratio\tp\tq\tsignificant\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.taxon,
                        r.mean_case,
                        r.mean_ctrl,
                        r.statistic,
                        r.statistic.exp(),
                        r.p,
                        r.q,
                        r.significant
                    );
                }
            }
        }
        out
    }
}

fn group_sizes(is_case: &[bool]) -> Result<(usize, usize)> {
    let n_case = is_case.iter().filter(|&&c| c).count();
    let n_ctrl = is_case.len() - n_case;
    if n_case < 2 {
        return Err(Error::invalid(format!("case group has {n_case} samples, need 2")));
    }
    if n_ctrl < 2 {
        return Err(Error::invalid(format!("control group has {n_ctrl} samples, need 2")));
    }
    Ok((n_case, n_ctrl))
}

/// Per-group means of each row.
fn group_means(x: &DMatrix<f64>, is_case: &[bool], case: &mut [f64], ctrl: &mut [f64]) {
    case.iter_mut().for_each(|v| *v = 0.0);
    ctrl.iter_mut().for_each(|v| *v = 0.0);
    let (mut nc, mut nk) = (0usize, 0usize);
    for (j, &c) in is_case.iter().enumerate() {
        let col = x.column(j);
        let target = if c {
            nc += 1;
            &mut *case
        } else {
            nk += 1;
            &mut *ctrl
        };
        for (t, v) in target.iter_mut().zip(col.iter()) {
            *t += v;
        }
    }
    case.iter_mut().for_each(|v| *v /= nc as f64);
    ctrl.iter_mut().for_each(|v| *v /= nk as f64);
}

fn statistic(
    case: &[f64],
    ctrl: &[f64],
    j: Option<&DMatrix<f64>>,
    diff: &mut DVector<f64>,
    out: &mut DVector<f64>,
) {
    for (d, (a, b)) in diff.iter_mut().zip(case.iter().zip(ctrl)) {
        *d = a - b;
    }
    match j {
        Some(j) => j.mul_to(diff, out),
        None => out.copy_from(diff),
    }
}

struct Scratch {
    labels: Vec<bool>,
    case: Vec<f64>,
    ctrl: Vec<f64>,
    diff: DVector<f64>,
    stat: DVector<f64>,
    exceed: Vec<u64>,
}

impl Scratch {
    fn new(labels: &[bool], p: usize) -> Self {
        Self {
            labels: labels.to_vec(),
            case: vec![0.0; p],
            ctrl: vec![0.0; p],
            diff: DVector::zeros(p),
            stat: DVector::zeros(p),
            exceed: vec![0; p],
        }
    }
}

/// Observed statistics, group means and permutation exceedance counts.
struct PermutationOutcome {
    observed: DVector<f64>,
    mean_case: Vec<f64>,
    mean_ctrl: Vec<f64>,
    exceed: Vec<u64>,
}

fn permutation_test(
    x: &DMatrix<f64>,
    is_case: &[bool],
    j: Option<&DMatrix<f64>>,
    n_perm: usize,
    seed: u64,
) -> PermutationOutcome {
    let p = x.nrows();
    let mut s = Scratch::new(is_case, p);
    group_means(x, is_case, &mut s.case, &mut s.ctrl);
    statistic(&s.case, &s.ctrl, j, &mut s.diff, &mut s.stat);
    let observed = s.stat.clone();
    let threshold: Vec<f64> = observed.iter().map(|v| v.abs() * (1.0 - TIE_TOL)).collect();

    let exceed = (0..n_perm)
        .into_par_iter()
        .fold(
            || Scratch::new(is_case, p),
            |mut sc, k| {
                sc.labels.copy_from_slice(is_case);
                let mut rng = seed::rng(seed, "label-permutation", k as u64);
                sc.labels.shuffle(&mut rng);
                group_means(x, &sc.labels, &mut sc.case, &mut sc.ctrl);
                statistic(&sc.case, &sc.ctrl, j, &mut sc.diff, &mut sc.stat);
                for ((e, v), t) in sc.exceed.iter_mut().zip(sc.stat.iter()).zip(&threshold) {
                    if v.abs() >= *t {
                        *e += 1;
                    }
                }
                sc
            },
        )
        .map(|sc| sc.exceed)
        .reduce(
            || vec![0; p],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    PermutationOutcome {
        observed,
        mean_case: s.case,
        mean_ctrl: s.ctrl,
        exceed,
    }
}

fn p_values(exceed: &[u64], n_perm: usize, smoothed: bool) -> Vec<f64> {
    exceed
        .iter()
        .map(|&e| {
            if smoothed {
                (1 + e) as f64 / (n_perm + 1) as f64
            } else {
                e as f64 / n_perm as f64
            }
        })
        .collect()
}

fn validate(l: &LogAbundanceMatrix, labels: &Labels, opts: &TestOptions) -> Result<Vec<bool>> {
    if opts.n_perm == 0 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    let mask = labels.case_mask(l.samples())?;
    group_sizes(&mask)?;
    Ok(mask)
}

fn build_table(
    method: Method,
    l: &LogAbundanceMatrix,
    out: PermutationOutcome,
    j: Option<(&DMatrix<f64>, usize)>,
    opts: &TestOptions,
) -> Result<AssociationTable> {
    let p = p_values(&out.exceed, opts.n_perm, opts.smoothed);
    let bh = if opts.smoothed {
        stats::bh_fdr(&p, opts.alpha)?
    } else {
        stats::bh_adjust(&p, opts.alpha)?
    };
    let fields = j.map(|(j, _)| {
        (
            j * DVector::from_column_slice(&out.mean_case),
            j * DVector::from_column_slice(&out.mean_ctrl),
        )
    });
    let rows = (0..l.n_taxa())
        .map(|i| TaxonAssociation {
            taxon: l.taxa()[i].clone(),
            statistic: out.observed[i],
            p: p[i],
            q: bh.q[i],
            significant: bh.significant[i],
            mean_case: out.mean_case[i],
            mean_ctrl: out.mean_ctrl[i],
            field_case: fields.as_ref().map(|(hc, _)| hc[i]),
            field_ctrl: fields.as_ref().map(|(_, hk)| hk[i]),
        })
        .collect();
    Ok(AssociationTable {
        method,
        rows,
        n_perm: opts.n_perm,
        alpha: opts.alpha,
        smoothed: opts.smoothed,
        retained: j.map(|(_, r)| r),
    })
}

/// Permutation test on differences of mean log-abundance.
pub fn naive_mwas(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    opts: &TestOptions,
) -> Result<AssociationTable> {
    let mask = validate(l, labels, opts)?;
    let out = permutation_test(l.values(), &mask, None, opts.n_perm, opts.seed);
    build_table(Method::Naive, l, out, None, opts)
}

/// Direct association analysis with `J` fitted on the pooled samples.
pub fn daa(l: &LogAbundanceMatrix, labels: &Labels, opts: &TestOptions) -> Result<AssociationTable> {
    validate(l, labels, opts)?;
    let (_, c) = maxent::estimate_moments(l)?;
    let pinv = maxent::pseudo_inverse(&c, opts.lambda_min)?;
    if pinv.retained == 0 {
        return Err(Error::DegenerateCovariance(opts.lambda_min));
    }
    daa_with_interactions(l, labels, &pinv.j, pinv.retained, opts)
}

/// Direct association analysis with a caller-supplied interaction matrix.
pub fn daa_with_interactions(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    j: &DMatrix<f64>,
    retained: usize,
    opts: &TestOptions,
) -> Result<AssociationTable> {
    let mask = validate(l, labels, opts)?;
    if j.nrows() != l.n_taxa() || j.ncols() != l.n_taxa() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} interactions for {} taxa",
            j.nrows(),
            j.ncols(),
            l.n_taxa()
        )));
    }
    let out = permutation_test(l.values(), &mask, Some(j), opts.n_perm, opts.seed);
    build_table(Method::Daa, l, out, Some((j, retained)), opts)
}

pub fn run_method(
    method: Method,
    l: &LogAbundanceMatrix,
    labels: &Labels,
    opts: &TestOptions,
) -> Result<AssociationTable> {
    match method {
        Method::Naive => naive_mwas(l, labels, opts),
        Method::Daa => daa(l, labels, opts),
    }
}

/// Fold change `exp(|mean_case - mean_ctrl|)` per taxon.
pub fn effect_sizes(l: &LogAbundanceMatrix, labels: &Labels) -> Result<Vec<f64>> {
    let mask = labels.case_mask(l.samples())?;
    let p = l.n_taxa();
    let (mut a, mut b) = (vec![0.0; p], vec![0.0; p]);
    group_means(l.values(), &mask, &mut a, &mut b);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs().exp()).collect())
}

/// Column indices of a subsample of `size` that keeps the case fraction,
/// sorted ascending.
pub fn stratified_subsample<R: Rng>(is_case: &[bool], size: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = is_case.len();
    let (n_case, n_ctrl) = group_sizes(is_case)?;
    if size > n {
        return Err(Error::invalid(format!("subsample of {size} exceeds {n} samples")));
    }
    if size < 4 {
        return Err(Error::invalid(format!("subsample of {size} is too small")));
    }
    let want = (size as f64 * n_case as f64 / n as f64).round() as usize;
    let k_case = want.clamp(2, size - 2).min(n_case);
    let k_ctrl = size - k_case;
    if k_ctrl > n_ctrl {
        return Err(Error::invalid(format!(
            "subsample of {size} needs {k_ctrl} controls, only {n_ctrl} available"
        )));
    }
    let cases: Vec<usize> = (0..n).filter(|&j| is_case[j]).collect();
    let ctrls: Vec<usize> = (0..n).filter(|&j| !is_case[j]).collect();
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, n_case, k_case)
        .into_iter()
        .map(|k| cases[k])
        .chain(
            rand::seq::index::sample(rng, n_ctrl, k_ctrl)
                .into_iter()
                .map(|k| ctrls[k]),
        )
        .collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Detection counts at one subsample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub size: usize,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
    /// Median fold change of the significant taxa per repeat; NaN when none.
    pub median_fold_change: Vec<f64>,
}

impl CurvePoint {
    /// Mean of the finite per-repeat median fold changes.
    pub fn mean_median_fold_change(&self) -> f64 {
        let v: Vec<f64> = self
            .median_fold_change
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .collect();
        stats::mean(&v)
    }
}

/// Subsample seed for repeat `r` at `size`.
pub(crate) fn subsample_rng(seed: u64, size: usize, r: usize) -> rand_chacha::ChaCha8Rng {
    seed::rng(seed::derive(seed, "curve-size", size as u64), "curve-repeat", r as u64)
}

/// Significant-taxon counts as a function of cohort size.
pub fn detection_curve(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    sizes: &[usize],
    repeats: usize,
    method: Method,
    opts: &TestOptions,
) -> Result<Vec<CurvePoint>> {
    let mask = labels.case_mask(l.samples())?;
    group_sizes(&mask)?;
    if let Some(&s) = sizes.iter().find(|&&s| s > l.n_samples()) {
        return Err(Error::invalid(format!(
            "size {s} exceeds the {} available samples",
            l.n_samples()
        )));
    }
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..repeats).map(move |r| (s, r)))
        .collect();
    let results: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(size, r)| {
            let idx = stratified_subsample(&mask, size, &mut subsample_rng(opts.seed, size, r))?;
            let sub = l.select_samples(&idx);
            let table = run_method(method, &sub, labels, opts)?;
            let fold = effect_sizes(&sub, labels)?;
            let sig: Vec<f64> = table.significant_indices().iter().map(|&i| fold[i]).collect();
            Ok((table.n_significant(), stats::median(&sig)))
        })
        .collect::<Result<_>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let chunk = &results[k * repeats..(k + 1) * repeats];
            let counts: Vec<usize> = chunk.iter().map(|c| c.0).collect();
            let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            CurvePoint {
                size,
                mean: if repeats == 0 { f64::NAN } else { stats::mean(&as_f) },
                sd: stats::sd(&as_f),
                counts,
                median_fold_change: chunk.iter().map(|c| c.1).collect(),
            }
        })
        .collect())
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("size,mean,sd,median_fold_change\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.size,
            p.mean,
            p.sd,
            p.mean_median_fold_change()
        );
    }
    out
}

/// Pooled p-values under label permutation and their distance from uniform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub sorted_p: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

impl Calibration {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,p,uniform_quantile\n");
        let n = self.sorted_p.len() as f64;
        for (k, p) in self.sorted_p.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", k + 1, p, (k as f64 + 0.5) / n);
        }
        out
    }
}

/// Runs `method` on `repeats` globally permuted labelings.
pub fn pvalue_calibration(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    method: Method,
    repeats: usize,
    opts: &TestOptions,
) -> Result<Calibration> {
    let mask = labels.case_mask(l.samples())?;
    let per_repeat: Vec<Vec<f64>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut perm = mask.clone();
            perm.shuffle(&mut seed::rng(opts.seed, "null-labels", r as u64));
            let null_labels = Labels::from_mask(l.samples(), &perm)?;
            let o = TestOptions {
                seed: seed::derive(opts.seed, "null-test", r as u64),
                ..*opts
            };
            Ok(run_method(method, l, &null_labels, &o)?.p_values())
        })
        .collect::<Result<_>>()?;
    let mut sorted_p: Vec<f64> = per_repeat.into_iter().flatten().collect();
    sorted_p.sort_by(f64::total_cmp);
    let ks_statistic = if sorted_p.is_empty() {
        0.0
    } else {
        stats::ks_uniform_statistic(&sorted_p)
    };
    Ok(Calibration {
        ks_p_value: stats::ks_uniform_pvalue(ks_statistic, sorted_p.len()),
        ks_statistic,
        sorted_p,
    })
}
