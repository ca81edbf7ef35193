//! Interaction and correlation networks with permutation significance.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::maxent;
use crate::seed;
use crate::stats;
use crate::transform::LogAbundanceMatrix;

const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// Entries of the pseudoinverse `J`.
    Interaction,
    /// Pearson correlations of log-abundances.
    Correlation,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Interaction => "interaction",
            EdgeKind::Correlation => "correlation",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interaction" => Ok(EdgeKind::Interaction),
            "correlation" => Ok(EdgeKind::Correlation),
            _ => Err(Error::invalid(format!("unknown edge kind '{s}'"))),
        }
    }
}

/// Pairwise weights of the given kind computed from rows of `x`.
pub fn weights_of(x: &DMatrix<f64>, kind: EdgeKind, lambda_min: f64) -> Result<DMatrix<f64>> {
    let mean = linalg::row_means(x);
    let c = linalg::covariance(x, &mean);
    match kind {
        EdgeKind::Correlation => Ok(linalg::correlation_from_covariance(&c)),
        EdgeKind::Interaction => Ok(maxent::pseudo_inverse(&c, lambda_min)?.j),
    }
}

/// Weights with per-pair permutation p- and q-values.
#[derive(Debug, Clone)]
pub struct EdgeSignificance {
    pub kind: EdgeKind,
    pub weights: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// BH-adjusted over all unordered pairs; the diagonal is 1.
    pub q: DMatrix<f64>,
}

/// Permutation null that shuffles every taxon's row independently.
pub fn edge_significance(
    l: &LogAbundanceMatrix,
    kind: EdgeKind,
    n_perm: usize,
    lambda_min: f64,
    seed: u64,
) -> Result<EdgeSignificance> {
    let (p, n) = (l.n_taxa(), l.n_samples());
    if n < 3 {
        return Err(Error::invalid(format!("network needs at least 3 samples, got {n}")));
    }
    if n_perm == 0 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    let x = l.values();
    let observed = weights_of(x, kind, lambda_min)?;
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .collect();
    let threshold: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| observed[(i, j)].abs() * (1.0 - TIE_TOL))
        .collect();

    let exceed = (0..n_perm)
        .into_par_iter()
        .map(|k| -> Result<Vec<u64>> {
            let mut rng = seed::rng(seed, "network-permutation", k as u64);
            let mut shuffled = x.clone();
            let mut row: Vec<f64> = vec![0.0; n];
            for i in 0..p {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                row.shuffle(&mut rng);
                for (j, r) in row.iter().enumerate() {
                    shuffled[(i, j)] = *r;
                }
            }
            let w = weights_of(&shuffled, kind, lambda_min)?;
            Ok(pairs
                .iter()
                .zip(&threshold)
                .map(|(&(i, j), t)| u64::from(w[(i, j)].abs() >= *t))
                .collect())
        })
        .try_reduce(
            || vec![0; pairs.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let pv: Vec<f64> = exceed
        .iter()
        .map(|&e| (1 + e) as f64 / (n_perm + 1) as f64)
        .collect();
    let qv = stats::bh_qvalues(&pv)?;
    let mut pm = DMatrix::from_element(p, p, 1.0);
    let mut qm = DMatrix::from_element(p, p, 1.0);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        pm[(i, j)] = pv[k];
        pm[(j, i)] = pv[k];
        qm[(i, j)] = qv[k];
        qm[(j, i)] = qv[k];
    }
    Ok(EdgeSignificance {
        kind,
        weights: observed,
        p: pm,
        q: qm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeList {
    pub kind: EdgeKind,
    pub pos_cutoff: f64,
    pub neg_cutoff: f64,
    pub alpha: f64,
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("taxon_a\ttaxon_b\tkind\tweight\tq\n");
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", e.a, e.b, self.kind, e.weight, e.q);
        }
        out
    }
}

/// Default cutoffs `(positive, negative)` for interaction networks.
pub const DEFAULT_CUTOFFS: (f64, f64) = (0.27, -0.15);

/// Pairs with `weight > pos_cutoff` or `weight < neg_cutoff` and `q < alpha`,
/// strongest first.
pub fn extract_edges(
    taxa: &[String],
    weights: &DMatrix<f64>,
    q: &DMatrix<f64>,
    kind: EdgeKind,
    pos_cutoff: f64,
    neg_cutoff: f64,
    alpha: f64,
) -> Result<EdgeList> {
    let p = taxa.len();
    if weights.shape() != (p, p) || q.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "{p} taxa with {:?} weights and {:?} q-values",
            weights.shape(),
            q.shape()
        )));
    }
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let w = weights[(i, j)];
            if (w > pos_cutoff || w < neg_cutoff) && q[(i, j)] < alpha {
                edges.push(Edge {
                    a: taxa[i].clone(),
                    b: taxa[j].clone(),
                    weight: w,
                    q: q[(i, j)],
                });
            }
        }
    }
    edges.sort_by(|x, y| y.weight.abs().total_cmp(&x.weight.abs()));
    Ok(EdgeList {
        kind,
        pos_cutoff,
        neg_cutoff,
        alpha,
        edges,
    })
}
