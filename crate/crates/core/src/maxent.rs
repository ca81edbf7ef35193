//! Gaussian maximum-entropy model of log-abundances.
//!
//! The model is `P(l) ∝ exp(Σ h_i l_i + ½ Σ J_ij l_i l_j)`. Matching the first
//! two moments gives `C = J⁻¹` and `m = J⁻¹ h`, so the fit reduces to a
//! thresholded pseudoinverse of the sample covariance. The partition function
//! is eliminated analytically and never computed.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Eigen};
use crate::seed;
use crate::stats;
use crate::transform::LogAbundanceMatrix;

/// Default absolute eigenvalue cutoff for the pseudoinverse.
pub const DEFAULT_LAMBDA_MIN: f64 = 0.01;

const SYMMETRY_TOL: f64 = 1e-10;
const CLIP_TOL: f64 = 1e-8;

/// Sample mean and covariance (divisor n-1) of each taxon row.
pub fn estimate_moments(l: &LogAbundanceMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if l.n_samples() < 2 {
        return Err(Error::invalid(format!(
            "moments need at least 2 samples, got {}",
            l.n_samples()
        )));
    }
    let m = linalg::row_means(l.values());
    let c = linalg::covariance(l.values(), &m);
    Ok((m, c))
}

/// Result of a thresholded pseudoinverse.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub j: DMatrix<f64>,
    pub retained: usize,
    /// Eigenvalues of the input, descending.
    pub eigenvalues: Vec<f64>,
}

fn check_symmetric(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            c.nrows(),
            c.ncols()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let asym = linalg::max_asymmetry(c);
    if asym > SYMMETRY_TOL * linalg::max_abs(c).max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn inverse_from_modes(eig: &Eigen, keep: usize) -> DMatrix<f64> {
    let n = eig.vectors.nrows();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..keep {
        let u = eig.vectors.column(k);
        let w = 1.0 / eig.values[k];
        for a in 0..n {
            let ua = u[a] * w;
            for b in a..n {
                j[(a, b)] += ua * u[b];
            }
        }
    }
    linalg::mirror_upper(&mut j);
    j
}

/// Inverts the eigenvalues of `c` that are at least `lambda_min`, zeroing the
/// rest.
pub fn pseudo_inverse(c: &DMatrix<f64>, lambda_min: f64) -> Result<PseudoInverse> {
    if !(lambda_min > 0.0 && lambda_min.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda_min {lambda_min} must be positive"
        )));
    }
    check_symmetric(c)?;
    let eig = linalg::symmetric_eigen(c);
    let retained = eig.values.iter().take_while(|&&v| v >= lambda_min).count();
    Ok(PseudoInverse {
        j: inverse_from_modes(&eig, retained),
        retained,
        eigenvalues: eig.values,
    })
}

/// Pseudoinverse that keeps the `k` largest eigenvalues; non-positive modes
/// are never inverted.
pub fn pseudo_inverse_top_k(c: &DMatrix<f64>, k: usize) -> Result<PseudoInverse> {
    check_symmetric(c)?;
    if k > c.nrows() {
        return Err(Error::invalid(format!(
            "cannot retain {k} of {} eigenvalues",
            c.nrows()
        )));
    }
    let eig = linalg::symmetric_eigen(c);
    let retained = eig.values.iter().take(k).take_while(|&&v| v > 0.0).count();
    Ok(PseudoInverse {
        j: inverse_from_modes(&eig, retained),
        retained,
        eigenvalues: eig.values,
    })
}

/// Host fields `h = J m`.
pub fn infer_fields(j: &DMatrix<f64>, m: &DVector<f64>) -> Result<DVector<f64>> {
    if j.ncols() != m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} interactions against {} means",
            j.nrows(),
            j.ncols(),
            m.len()
        )));
    }
    Ok(j * m)
}

/// Fitted model parameters.
#[derive(Debug, Clone)]
pub struct MaxEntModel {
    pub taxa: Vec<String>,
    pub m: DVector<f64>,
    pub c: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub h: DVector<f64>,
    pub lambda_min: f64,
    pub retained: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    taxa: Vec<String>,
    m: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    lambda_min: f64,
    retained: usize,
    h: Vec<f64>,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(fmt_num).collect();
    format!("[{}]", parts.join(", "))
}

impl MaxEntModel {
    /// Builds a model from a mean and covariance.
    pub fn from_moments(
        taxa: Vec<String>,
        m: DVector<f64>,
        c: DMatrix<f64>,
        lambda_min: f64,
    ) -> Result<Self> {
        if taxa.len() != m.len() || c.nrows() != m.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} taxa, {} means, {}x{} covariance",
                taxa.len(),
                m.len(),
                c.nrows(),
                c.ncols()
            )));
        }
        let pinv = pseudo_inverse(&c, lambda_min)?;
        let h = infer_fields(&pinv.j, &m)?;
        Ok(Self {
            taxa,
            m,
            c,
            j: pinv.j,
            h,
            lambda_min,
            retained: pinv.retained,
            eigenvalues: pinv.eigenvalues,
        })
    }

    /// Fits the model to all samples of `l`.
    pub fn fit(l: &LogAbundanceMatrix, lambda_min: f64) -> Result<Self> {
        let (m, c) = estimate_moments(l)?;
        Self::from_moments(l.taxa().to_vec(), m, c, lambda_min)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Serializes to JSON with 17 significant digits per number.
    pub fn to_json(&self) -> String {
        let taxa = serde_json::to_string(&self.taxa).expect("strings serialize");
        let rows: Vec<String> = self
            .c
            .row_iter()
            .map(|r| fmt_vec(r.iter().copied()))
            .collect();
        let mut out = String::from("{\n");
        let _ = writeln!(out, "  \"taxa\": {taxa},");
        let _ = writeln!(out, "  \"m\": {},", fmt_vec(self.m.iter().copied()));
        let _ = writeln!(out, "  \"C\": [\n    {}\n  ],", rows.join(",\n    "));
        let _ = writeln!(out, "  \"lambda_min\": {},", fmt_num(self.lambda_min));
        let _ = writeln!(out, "  \"retained\": {},", self.retained);
        let _ = writeln!(out, "  \"h\": {}", fmt_vec(self.h.iter().copied()));
        out.push_str("}\n");
        out
    }

    /// Parses JSON written by [`to_json`](Self::to_json); `J` and `h` are
    /// recomputed from `C` and `m`.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Json {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let p = f.taxa.len();
        if f.c.len() != p || f.c.iter().any(|r| r.len() != p) || f.m.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "model file {origin} is not {p}-dimensional throughout"
            )));
        }
        let c = DMatrix::from_fn(p, p, |i, j| f.c[i][j]);
        let model = Self::from_moments(f.taxa, DVector::from_vec(f.m), c, f.lambda_min)?;
        if model.retained != f.retained {
            return Err(Error::invalid(format!(
                "model file {origin} records {} retained eigenvalues, recomputation gives {}",
                f.retained, model.retained
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Draws `n` samples named `{prefix}{k}`.
    pub fn sample(&self, n: usize, seed: u64, prefix: &str) -> Result<LogAbundanceMatrix> {
        let values = sample(&self.m, &self.c, n, seed)?;
        LogAbundanceMatrix::new(
            self.taxa.clone(),
            sample_names(prefix, n),
            values,
            None,
        )
    }
}

/// Zero-padded sample ids `prefix0001, prefix0002, ...`.
pub fn sample_names(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len().max(4);
    (1..=n).map(|k| format!("{prefix}{k:0width$}")).collect()
}

/// Factor `L` with `L Lᵀ = C` from the eigendecomposition, after clipping
/// negligibly negative eigenvalues.
pub fn covariance_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(c)?;
    let eig = linalg::symmetric_eigen(c);
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let mut l = eig.vectors.clone();
    for (k, &v) in eig.values.iter().enumerate() {
        if v < -CLIP_TOL * top || (v < 0.0 && top == 0.0) {
            return Err(Error::Indefinite(v));
        }
        let s = v.max(0.0).sqrt();
        l.column_mut(k).scale_mut(s);
    }
    Ok(l)
}

/// `n` independent draws from `N(m, C)`, one per column.
pub fn sample(m: &DVector<f64>, c: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if c.nrows() != m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} means against {}x{} covariance",
            m.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    let l = covariance_factor(c)?;
    let p = m.len();
    let mut rng = seed::rng(seed, "mvn-sample", 0);
    let mut out = DMatrix::zeros(p, n);
    let mut z = DVector::zeros(p);
    for j in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let x = &l * &z;
        for i in 0..p {
            out[(i, j)] = m[i] + x[i];
        }
    }
    Ok(out)
}

/// Gaussian third noncentral moment `E[l_i l_j l_k]`.
pub fn third_noncentral(m: &DVector<f64>, c: &DMatrix<f64>, i: usize, j: usize, k: usize) -> f64 {
    m[i] * m[j] * m[k] + m[i] * c[(j, k)] + m[j] * c[(i, k)] + m[k] * c[(i, j)]
}

/// Gaussian fourth central moment by Isserlis' theorem.
pub fn fourth_central(c: &DMatrix<f64>, i: usize, j: usize, k: usize, l: usize) -> f64 {
    c[(i, j)] * c[(k, l)] + c[(i, l)] * c[(j, k)] + c[(i, k)] * c[(j, l)]
}

/// Index tuples `i ≤ j ≤ k` in lexicographic order.
pub fn triples(p: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..p {
        for j in i..p {
            for k in j..p {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Index tuples `i ≤ j ≤ k ≤ l` in lexicographic order.
pub fn quadruples(p: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i in 0..p {
        for j in i..p {
            for k in j..p {
                for l in k..p {
                    out.push([i, j, k, l]);
                }
            }
        }
    }
    out
}

/// Model-implied higher moments over [`triples`] and [`quadruples`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HigherMoments {
    pub third_noncentral: Vec<f64>,
    /// Identically zero for a Gaussian.
    pub third_central: Vec<f64>,
    pub fourth_central: Vec<f64>,
}

pub fn predict_higher_moments(m: &DVector<f64>, c: &DMatrix<f64>) -> Result<HigherMoments> {
    if c.nrows() != m.len() || c.ncols() != m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} means against {}x{} covariance",
            m.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    let t = triples(m.len());
    Ok(HigherMoments {
        third_noncentral: t
            .iter()
            .map(|&[i, j, k]| third_noncentral(m, c, i, j, k))
            .collect(),
        third_central: vec![0.0; t.len()],
        fourth_central: quadruples(m.len())
            .iter()
            .map(|&[i, j, k, l]| fourth_central(c, i, j, k, l))
            .collect(),
    })
}

/// Empirical moments of the data in the same layout as [`HigherMoments`].
pub fn observed_higher_moments(x: &DMatrix<f64>) -> HigherMoments {
    let (p, n) = x.shape();
    let nf = n as f64;
    let mean = linalg::row_means(x);
    let rows: Vec<Vec<f64>> = (0..p).map(|i| x.row(i).iter().copied().collect()).collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .zip(mean.iter())
        .map(|(r, mu)| r.iter().map(|v| v - mu).collect())
        .collect();
    let pair_index = |i: usize, j: usize| i * p - i * (i + 1) / 2 + j;
    let product = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u * v).collect() };
    let raw_pairs: Vec<Vec<f64>> = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .map(|(i, j)| product(&rows[i], &rows[j]))
        .collect();
    let cen_pairs: Vec<Vec<f64>> = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .map(|(i, j)| product(&centered[i], &centered[j]))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() / nf;

    let t = triples(p);
    let third_noncentral = t
        .par_iter()
        .map(|&[i, j, k]| dot(&raw_pairs[pair_index(i, j)], &rows[k]))
        .collect();
    let third_central = t
        .par_iter()
        .map(|&[i, j, k]| dot(&cen_pairs[pair_index(i, j)], &centered[k]))
        .collect();
    let fourth_central = quadruples(p)
        .par_iter()
        .map(|&[i, j, k, l]| dot(&cen_pairs[pair_index(i, j)], &cen_pairs[pair_index(k, l)]))
        .collect();
    HigherMoments {
        third_noncentral,
        third_central,
        fourth_central,
    }
}

/// Agreement between observed and model-predicted higher moments.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub third_noncentral_pred: Vec<f64>,
    pub third_noncentral_obs: Vec<f64>,
    pub third_central_obs: Vec<f64>,
    pub fourth_central_pred: Vec<f64>,
    pub fourth_central_obs: Vec<f64>,
    /// Pearson r per order; `None` when undefined (fewer than two distinct
    /// values).
    pub r_third: Option<f64>,
    pub r_fourth: Option<f64>,
    /// The same correlations for a Gaussian sample of equal size drawn from
    /// the fitted moments.
    pub baseline_r_third: Option<f64>,
    pub baseline_r_fourth: Option<f64>,
}

fn defined_r(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let r = stats::pearson(x, y);
    r.is_finite().then_some(r)
}

/// Compares observed third and fourth moments with Gaussian predictions
/// from the fitted mean and covariance.
pub fn validate_moments(l: &LogAbundanceMatrix, seed: u64) -> Result<MomentReport> {
    let (m, c) = estimate_moments(l)?;
    let pred = predict_higher_moments(&m, &c)?;
    let obs = observed_higher_moments(l.values());
    let base = observed_higher_moments(&sample(&m, &c, l.n_samples(), seed::derive(seed, "moment-baseline", 0))?);
    Ok(MomentReport {
        n_samples: l.n_samples(),
        r_third: defined_r(&pred.third_noncentral, &obs.third_noncentral),
        r_fourth: defined_r(&pred.fourth_central, &obs.fourth_central),
        baseline_r_third: defined_r(&pred.third_noncentral, &base.third_noncentral),
        baseline_r_fourth: defined_r(&pred.fourth_central, &base.fourth_central),
        third_noncentral_pred: pred.third_noncentral,
        third_noncentral_obs: obs.third_noncentral,
        third_central_obs: obs.third_central,
        fourth_central_pred: pred.fourth_central,
        fourth_central_obs: obs.fourth_central,
    })
}
