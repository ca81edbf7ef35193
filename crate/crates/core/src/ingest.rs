//! Count tables, sample labels and the prevalence filter.
//!
//! Count tables are tab-separated: a header row of sample ids (the first
//! header cell is a free-form label for the taxon column), then one row per
//! taxon with the taxon name followed by non-negative integer read counts.
//! Label files are two-column TSV of `sample<TAB>case|control`; blank lines
//! and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Raw reads, taxa in rows and samples in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    taxa: Vec<String>,
    samples: Vec<String>,
    counts: DMatrix<u64>,
}

impl CountMatrix {
    pub fn new(taxa: Vec<String>, samples: Vec<String>, counts: DMatrix<u64>) -> Result<Self> {
        if counts.nrows() != taxa.len() || counts.ncols() != samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} counts for {} taxa and {} samples",
                counts.nrows(),
                counts.ncols(),
                taxa.len(),
                samples.len()
            )));
        }
        if let Some(d) = first_duplicate(&taxa) {
            return Err(Error::invalid(format!("duplicate taxon '{d}'")));
        }
        if let Some(d) = first_duplicate(&samples) {
            return Err(Error::invalid(format!("duplicate sample '{d}'")));
        }
        Ok(Self {
            taxa,
            samples,
            counts,
        })
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Column totals.
    pub fn totals(&self) -> Vec<u64> {
        (0..self.n_samples())
            .map(|j| self.counts.column(j).iter().sum())
            .collect()
    }

    /// Keeps the given taxa rows, in the order given.
    pub fn select_taxa(&self, rows: &[usize]) -> CountMatrix {
        let taxa = rows.iter().map(|&i| self.taxa[i].clone()).collect();
        let counts = self.counts.select_rows(rows);
        CountMatrix {
            taxa,
            samples: self.samples.clone(),
            counts,
        }
    }
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = HashSet::new();
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .map(String::as_str)
}

/// Phenotype group of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Case,
    Control,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Case => "case",
            Group::Control => "control",
        }
    }

    fn parse(s: &str) -> Option<Group> {
        match s.to_ascii_lowercase().as_str() {
            "case" => Some(Group::Case),
            "control" => Some(Group::Control),
            _ => None,
        }
    }
}

/// Case/control assignment keyed by sample id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labels {
    assignment: BTreeMap<String, Group>,
}

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one label; relabelling a sample is an error.
    pub fn insert(&mut self, sample: impl Into<String>, group: Group) -> Result<()> {
        let sample = sample.into();
        if self.assignment.contains_key(&sample) {
            return Err(Error::DuplicateLabel(sample));
        }
        self.assignment.insert(sample, group);
        Ok(())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Group)>,
        S: Into<String>,
    {
        let mut labels = Labels::new();
        for (s, g) in pairs {
            labels.insert(s, g)?;
        }
        Ok(labels)
    }

    pub fn get(&self, sample: &str) -> Option<Group> {
        self.assignment.get(sample).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Group)> {
        self.assignment.iter().map(|(s, g)| (s.as_str(), *g))
    }

    /// Case indicator aligned with `samples`; every sample must be labelled
    /// and both groups must be present.
    pub fn case_mask(&self, samples: &[String]) -> Result<Vec<bool>> {
        let mask = samples
            .iter()
            .map(|s| {
                self.get(s)
                    .map(|g| g == Group::Case)
                    .ok_or_else(|| Error::MissingLabel(s.clone()))
            })
            .collect::<Result<Vec<bool>>>()?;
        if !mask.iter().any(|&c| c) {
            return Err(Error::EmptyGroup("case"));
        }
        if mask.iter().all(|&c| c) {
            return Err(Error::EmptyGroup("control"));
        }
        Ok(mask)
    }

    /// Labels for `samples` with the groups exchanged.
    pub fn swapped(&self) -> Labels {
        let assignment = self
            .assignment
            .iter()
            .map(|(s, g)| {
                let g = match g {
                    Group::Case => Group::Control,
                    Group::Control => Group::Case,
                };
                (s.clone(), g)
            })
            .collect();
        Labels { assignment }
    }

    /// Labels built from a case mask aligned with `samples`.
    pub fn from_mask(samples: &[String], is_case: &[bool]) -> Result<Labels> {
        if samples.len() != is_case.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples, {} labels",
                samples.len(),
                is_case.len()
            )));
        }
        Labels::from_pairs(samples.iter().zip(is_case).map(|(s, &c)| {
            (
                s.clone(),
                if c { Group::Case } else { Group::Control },
            )
        }))
    }
}

fn parse_error(path: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        message: message.into(),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a count table from disk.
pub fn parse_count_table(path: impl AsRef<Path>) -> Result<CountMatrix> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_count_table_str(&text, &path.display().to_string())
}

/// Parses count-table text; `origin` names the source in error messages.
pub fn parse_count_table_str(text: &str, origin: &str) -> Result<CountMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_error(origin, 1, 1, "empty table"))?;
    let samples: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    if samples.is_empty() {
        return Err(parse_error(origin, header_line, 2, "header has no sample ids"));
    }
    let mut seen = HashSet::new();
    for (k, s) in samples.iter().enumerate() {
        if !seen.insert(s.as_str()) {
            return Err(parse_error(
                origin,
                header_line,
                k + 2,
                format!("duplicate sample id '{s}'"),
            ));
        }
    }

    let mut taxa = Vec::new();
    let mut values = Vec::new();
    let mut seen_taxa = HashSet::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != samples.len() + 1 {
            return Err(parse_error(
                origin,
                line_no,
                cells.len().min(samples.len() + 1),
                format!(
                    "expected {} cells, found {}",
                    samples.len() + 1,
                    cells.len()
                ),
            ));
        }
        let name = cells[0].to_string();
        if !seen_taxa.insert(name.clone()) {
            return Err(parse_error(
                origin,
                line_no,
                1,
                format!("duplicate taxon '{name}'"),
            ));
        }
        for (k, cell) in cells[1..].iter().enumerate() {
            let v: u64 = cell.trim().parse().map_err(|_| {
                parse_error(
                    origin,
                    line_no,
                    k + 2,
                    format!("'{cell}' is not a non-negative integer"),
                )
            })?;
            values.push(v);
        }
        taxa.push(name);
    }
    if taxa.is_empty() {
        return Err(parse_error(origin, header_line, 1, "table has no taxa"));
    }
    let counts = DMatrix::from_row_slice(taxa.len(), samples.len(), &values);
    CountMatrix::new(taxa, samples, counts)
}

/// Serializes a count table in the format read by [`parse_count_table`].
pub fn format_count_table(m: &CountMatrix) -> String {
    let mut out = String::from("taxon");
    for s in &m.samples {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (i, t) in m.taxa.iter().enumerate() {
        out.push_str(t);
        for j in 0..m.n_samples() {
            let _ = write!(out, "\t{}", m.counts[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn write_count_table(m: &CountMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_count_table(m)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a label file from disk.
pub fn parse_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_labels_str(&text, &path.display().to_string())
}

pub fn parse_labels_str(text: &str, origin: &str) -> Result<Labels> {
    let mut labels = Labels::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 2 {
            return Err(parse_error(
                origin,
                line_no,
                1,
                format!("expected 2 cells, found {}", cells.len()),
            ));
        }
        let group = Group::parse(cells[1].trim()).ok_or_else(|| {
            parse_error(
                origin,
                line_no,
                2,
                format!("group '{}' is neither case nor control", cells[1]),
            )
        })?;
        labels.insert(cells[0], group).map_err(|_| {
            parse_error(
                origin,
                line_no,
                1,
                format!("sample '{}' is labelled more than once", cells[0]),
            )
        })?;
    }
    Ok(labels)
}

/// Writes labels for `samples` in their given order.
pub fn format_labels(labels: &Labels, samples: &[String]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        let g = labels.get(s).ok_or_else(|| Error::MissingLabel(s.clone()))?;
        let _ = writeln!(out, "{s}\t{}", g.as_str());
    }
    Ok(out)
}

pub fn write_labels(labels: &Labels, samples: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_labels(labels, samples)?)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Per-group fraction of samples with a nonzero count, as `(case, control)`.
pub fn prevalence(m: &CountMatrix, labels: &Labels) -> Result<Vec<(f64, f64)>> {
    let mask = labels.case_mask(&m.samples)?;
    let n_case = mask.iter().filter(|&&c| c).count() as f64;
    let n_ctrl = mask.len() as f64 - n_case;
    Ok((0..m.n_taxa())
        .map(|i| {
            let (mut pc, mut pk) = (0usize, 0usize);
            for (j, &is_case) in mask.iter().enumerate() {
                if m.counts[(i, j)] > 0 {
                    if is_case {
                        pc += 1;
                    } else {
                        pk += 1;
                    }
                }
            }
            (pc as f64 / n_case, pk as f64 / n_ctrl)
        })
        .collect())
}

/// Keeps taxa present in more than `threshold` of either group.
pub fn filter_prevalence(m: &CountMatrix, labels: &Labels, threshold: f64) -> Result<CountMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "prevalence threshold {threshold} is not in (0,1)"
        )));
    }
    let keep: Vec<usize> = prevalence(m, labels)?
        .iter()
        .enumerate()
        .filter(|(_, (pc, pk))| *pc > threshold || *pk > threshold)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFilterResult(threshold));
    }
    Ok(m.select_taxa(&keep))
}
