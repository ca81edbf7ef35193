//! Normalization of read counts into natural-log abundances.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CountMatrix;

/// Normalization applied before taking logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Total-sum scaling: `ln((c + pc) / N_j)`.
    Tss,
    /// Per-taxon centring of `ln(c + pc)` across samples.
    Clr,
    /// Cumulative-sum scaling up to a per-sample count quantile.
    Css,
    /// `ln(c + pc)` with no scaling.
    None,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Tss, Scheme::Clr, Scheme::Css, Scheme::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Tss => "tss",
            Scheme::Clr => "clr",
            Scheme::Css => "css",
            Scheme::None => "none",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tss" => Ok(Scheme::Tss),
            "clr" => Ok(Scheme::Clr),
            "css" => Ok(Scheme::Css),
            "none" => Ok(Scheme::None),
            _ => Err(Error::invalid(format!("unknown normalization '{s}'"))),
        }
    }
}

/// How a [`LogAbundanceMatrix`] was derived from counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scheme: Scheme,
    pub pseudocount: f64,
    pub css_quantile: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            scheme: Scheme::Tss,
            pseudocount: 1.0,
            css_quantile: 0.5,
        }
    }
}

/// Log-abundances, taxa in rows and samples in columns.
///
/// `normalization` is `None` for values that did not come from counts, such
/// as draws from a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAbundanceMatrix {
    taxa: Vec<String>,
    samples: Vec<String>,
    values: DMatrix<f64>,
    normalization: Option<Normalization>,
}

impl LogAbundanceMatrix {
    pub fn new(
        taxa: Vec<String>,
        samples: Vec<String>,
        values: DMatrix<f64>,
        normalization: Option<Normalization>,
    ) -> Result<Self> {
        if values.nrows() != taxa.len() || values.ncols() != samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} values for {} taxa and {} samples",
                values.nrows(),
                values.ncols(),
                taxa.len(),
                samples.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-abundances"));
        }
        Ok(Self {
            taxa,
            samples,
            values,
            normalization,
        })
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Keeps the given sample columns, in the order given.
    pub fn select_samples(&self, cols: &[usize]) -> LogAbundanceMatrix {
        LogAbundanceMatrix {
            taxa: self.taxa.clone(),
            samples: cols.iter().map(|&j| self.samples[j].clone()).collect(),
            values: self.values.select_columns(cols),
            normalization: self.normalization,
        }
    }

    /// Keeps the given taxon rows, in the order given.
    pub fn select_taxa(&self, rows: &[usize]) -> LogAbundanceMatrix {
        LogAbundanceMatrix {
            taxa: rows.iter().map(|&i| self.taxa[i].clone()).collect(),
            samples: self.samples.clone(),
            values: self.values.select_rows(rows),
            normalization: self.normalization,
        }
    }

    /// Concatenates samples of two matrices over the same taxa.
    pub fn concat_samples(&self, other: &LogAbundanceMatrix) -> Result<LogAbundanceMatrix> {
        if self.taxa != other.taxa {
            return Err(Error::DimensionMismatch("taxa differ".into()));
        }
        let p = self.n_taxa();
        let (n1, n2) = (self.n_samples(), other.n_samples());
        let mut values = DMatrix::zeros(p, n1 + n2);
        values.columns_mut(0, n1).copy_from(&self.values);
        values.columns_mut(n1, n2).copy_from(&other.values);
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        LogAbundanceMatrix::new(self.taxa.clone(), samples, values, self.normalization)
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-sample cumulative-sum scaling factors: the sum of a sample's positive
/// counts that do not exceed the `q` quantile of those counts.
pub fn css_factors(m: &CountMatrix, q: f64) -> Result<Vec<f64>> {
    (0..m.n_samples())
        .map(|j| {
            let mut pos: Vec<f64> = m
                .counts()
                .column(j)
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| c as f64)
                .collect();
            if pos.is_empty() {
                return Err(Error::ZeroTotal(m.samples()[j].clone()));
            }
            pos.sort_by(f64::total_cmp);
            let qv = quantile_sorted(&pos, q);
            Ok(pos.iter().filter(|&&c| c <= qv).sum())
        })
        .collect()
}

/// Converts counts to log-abundances under `norm`.
pub fn log_transform(m: &CountMatrix, norm: Normalization) -> Result<LogAbundanceMatrix> {
    let pc = norm.pseudocount;
    if !(pc > 0.0 && pc.is_finite()) {
        return Err(Error::invalid(format!("pseudocount {pc} must be positive")));
    }
    if !(norm.css_quantile > 0.0 && norm.css_quantile <= 1.0) {
        return Err(Error::invalid(format!(
            "CSS quantile {} is not in (0,1]",
            norm.css_quantile
        )));
    }
    let (p, n) = (m.n_taxa(), m.n_samples());
    let counts = m.counts();
    let scale: Vec<f64> = match norm.scheme {
        Scheme::Tss => m
            .totals()
            .iter()
            .zip(m.samples())
            .map(|(&t, s)| {
                if t == 0 {
                    Err(Error::ZeroTotal(s.clone()))
                } else {
                    Ok(t as f64)
                }
            })
            .collect::<Result<_>>()?,
        Scheme::Css => css_factors(m, norm.css_quantile)?,
        Scheme::Clr | Scheme::None => vec![1.0; n],
    };
    let mut values = DMatrix::from_fn(p, n, |i, j| ((counts[(i, j)] as f64 + pc) / scale[j]).ln());
    if norm.scheme == Scheme::Clr {
        for mut row in values.row_iter_mut() {
            let mean = row.sum() / n as f64;
            row.add_scalar_mut(-mean);
        }
    }
    LogAbundanceMatrix::new(
        m.taxa().to_vec(),
        m.samples().to_vec(),
        values,
        Some(norm),
    )
}

/// Tab-separated log-abundance table in the count-table layout.
pub fn format_value_table(l: &LogAbundanceMatrix) -> String {
    let mut out = String::from("taxon");
    for s in l.samples() {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (i, t) in l.taxa().iter().enumerate() {
        out.push_str(t);
        for j in 0..l.n_samples() {
            out.push('\t');
            out.push_str(&l.values()[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses [`format_value_table`] output; values are used as given.
pub fn parse_value_table_str(text: &str, origin: &str) -> Result<LogAbundanceMatrix> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, 1, "empty table".into()))?;
    let samples: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    let mut taxa = Vec::new();
    let mut values = Vec::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != samples.len() + 1 {
            return Err(err(
                line_no,
                1,
                format!("expected {} cells, found {}", samples.len() + 1, cells.len()),
            ));
        }
        for (k, c) in cells[1..].iter().enumerate() {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| err(line_no, k + 2, format!("'{c}' is not a number")))?;
            if !v.is_finite() {
                return Err(err(line_no, k + 2, format!("'{c}' is not finite")));
            }
            values.push(v);
        }
        taxa.push(cells[0].to_string());
    }
    let dup = |names: &[String]| {
        let mut seen = std::collections::HashSet::new();
        names.iter().find(|n| !seen.insert(n.as_str())).cloned()
    };
    if let Some(d) = dup(&taxa).or_else(|| dup(&samples)) {
        return Err(Error::invalid(format!("{origin}: duplicate name '{d}'")));
    }
    let values = DMatrix::from_row_slice(taxa.len(), samples.len(), &values);
    LogAbundanceMatrix::new(taxa, samples, values, None)
}
