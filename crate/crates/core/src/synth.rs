//! Synthetic case/control cohorts with known direct effects.
//!
//! A ground-truth model supplies `(m, C, h)`. Planted effects scale selected
//! host fields, `h_i → h_i (1 + δ_i)`, and the case mean follows from the
//! forward map `m_case = m + C Δh`. Controls are drawn from `N(m, C)` or
//! bootstrapped from real control samples; cases from `N(m_case, C)`.

use std::collections::BTreeSet;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CountMatrix, Group, Labels};
use crate::linalg;
use crate::maxent::{self, MaxEntModel, DEFAULT_LAMBDA_MIN};
use crate::seed;
use crate::stats;
use crate::transform::LogAbundanceMatrix;

/// Fractional change `δ` applied to the host field of taxon `index` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub index: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub planted: Vec<PlantedEffect>,
    pub n_cases: usize,
    pub n_controls: usize,
    pub seed: u64,
}

/// Bundled effect sets on taxa 0, 10, 18, 26, 32 and 44 of a 47-taxon model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Moderate effects, 13% to 36%.
    Main,
    /// Small effects, 12% to 17%.
    Small,
    /// Large effects, 28% to 129%.
    Large,
}

pub const PRESET_INDICES: [usize; 6] = [0, 10, 18, 26, 32, 44];

impl Preset {
    pub fn deltas(self) -> [f64; 6] {
        match self {
            Preset::Main => [-0.18, 0.24, -0.36, 0.17, -0.13, 0.18],
            Preset::Small => [-0.17, 0.14, -0.12, 0.16, -0.14, 0.13],
            Preset::Large => [-0.44, 1.29, -0.72, 0.67, -0.28, 1.12],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Main => "main",
            Preset::Small => "small",
            Preset::Large => "large",
        }
    }

    pub fn planted(self) -> Vec<PlantedEffect> {
        PRESET_INDICES
            .iter()
            .zip(self.deltas())
            .map(|(&index, delta)| PlantedEffect { index, delta })
            .collect()
    }

    pub fn spec(self, n_cases: usize, n_controls: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            planted: self.planted(),
            n_cases,
            n_controls,
            seed,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "main" | "table-s2-main" => Ok(Preset::Main),
            "small" | "table-s2-small" => Ok(Preset::Small),
            "large" | "table-s2-large" => Ok(Preset::Large),
            _ => Err(Error::invalid(format!("unknown preset '{s}'"))),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.planted {
            if e.index >= dim {
                return Err(Error::invalid(format!(
                    "planted index {} is out of range for {dim} taxa",
                    e.index
                )));
            }
            if !seen.insert(e.index) {
                return Err(Error::invalid(format!("planted index {} repeats", e.index)));
            }
            if !e.delta.is_finite() || 1.0 + e.delta == 0.0 {
                return Err(Error::invalid(format!(
                    "effect {} on taxon {} is not allowed",
                    e.delta, e.index
                )));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.planted.iter().map(|e| e.index).collect();
        t.sort_unstable();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FittedFromData,
    ProcedurallyGenerated,
}

#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub model: MaxEntModel,
    pub provenance: Provenance,
}

/// Knobs of the procedural generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOptions {
    /// Probability that a taxon pair interacts.
    pub density: f64,
    /// Spectral margin: partial correlations are scaled to radius `1 - margin`.
    pub margin: f64,
    /// Probability that an interaction is positive.
    pub positive_fraction: f64,
    /// Marginal log-abundance variances are drawn from this range.
    pub variance_range: (f64, f64),
    /// Smallest allowed `|h_i| / sqrt(J_ii)`.
    pub min_field_score: f64,
    /// Average mean log-abundance across taxa.
    pub mean_level: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            density: 0.6,
            margin: 0.1,
            positive_fraction: 0.7,
            variance_range: (1.0, 3.0),
            min_field_score: 3.0,
            mean_level: -2.0,
        }
    }
}

/// Procedural ground truth with `dim` taxa and interaction `density`.
pub fn make_ground_truth(dim: usize, density: f64, seed: u64) -> Result<GroundTruthModel> {
    make_ground_truth_with(
        dim,
        &GeneratorOptions {
            density,
            ..GeneratorOptions::default()
        },
        seed,
    )
}

/// Procedural ground truth.
///
/// Interactions form a sparse signed partial-correlation matrix `P` scaled to
/// spectral radius `1 - margin`, so `K = I - P` is positive definite. `J` is
/// `K` rescaled so that each marginal variance hits its drawn target. Means
/// follow a Zipf rank-abundance law shifted to average `mean_level` and are
/// nudged until every host field is at least `min_field_score` conditional
/// standard deviations from zero.
pub fn make_ground_truth_with(
    dim: usize,
    opts: &GeneratorOptions,
    seed: u64,
) -> Result<GroundTruthModel> {
    if dim < 2 {
        return Err(Error::invalid(format!("ground truth needs at least 2 taxa, got {dim}")));
    }
    if !(opts.density > 0.0 && opts.density <= 1.0) {
        return Err(Error::invalid(format!(
            "density {} is not in (0,1]",
            opts.density
        )));
    }
    if !(opts.margin > 0.0 && opts.margin < 1.0) {
        return Err(Error::invalid(format!("margin {} is not in (0,1)", opts.margin)));
    }
    let (vlo, vhi) = opts.variance_range;
    if !(vlo > 0.0 && vhi >= vlo) {
        return Err(Error::invalid("variance range must be positive and ordered"));
    }
    let mut rng = seed::rng(seed, "ground-truth", 0);

    let mut p = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            if rng.gen::<f64>() < opts.density {
                let mag = rng.gen_range(0.2..1.0);
                let v = if rng.gen::<f64>() < opts.positive_fraction { mag } else { -mag };
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
    }
    let radius = linalg::symmetric_eigen(&p)
        .values
        .iter()
        .fold(0.0f64, |r, v| r.max(v.abs()));
    if radius > 0.0 {
        p *= (1.0 - opts.margin) / radius;
    }
    let k = DMatrix::<f64>::identity(dim, dim) - &p;
    let k_inv = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("interaction matrix is not positive definite"))?
        .inverse();

    let var: Vec<f64> = (0..dim)
        .map(|_| if vhi > vlo { rng.gen_range(vlo..vhi) } else { vlo })
        .collect();
    let sqrt_d: Vec<f64> = (0..dim).map(|i| (k_inv[(i, i)] / var[i]).sqrt()).collect();
    let mut c = DMatrix::from_fn(dim, dim, |i, j| k_inv[(i, j)] / (sqrt_d[i] * sqrt_d[j]));
    linalg::mirror_upper(&mut c);

    let harmonic: f64 = (1..=dim).map(|r| 1.0 / r as f64).sum();
    let mut ranks: Vec<usize> = (1..=dim).collect();
    ranks.shuffle(&mut rng);
    let mut m0: Vec<f64> = (0..dim)
        .map(|i| (1.0 / (ranks[i] as f64 * harmonic)).ln() - var[i] / 2.0)
        .collect();
    let shift = opts.mean_level - stats::mean(&m0);
    m0.iter_mut().for_each(|v| *v += shift);

    // Work in whitened units u = sqrt(d) m, where the field score is (K u)_i.
    let target = opts.min_field_score * 1.05;
    let mut u = DVector::from_iterator(dim, (0..dim).map(|i| sqrt_d[i] * m0[i]));
    for _ in 0..200 {
        let t = &k * &u;
        let mut changed = false;
        for i in 0..dim {
            if t[i].abs() < opts.min_field_score {
                let goal = if t[i] > 0.0 { target } else { -target };
                u[i] += goal - t[i];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let m = DVector::from_iterator(dim, (0..dim).map(|i| u[i] / sqrt_d[i]));
    let taxa = taxon_names(dim);
    let model = MaxEntModel::from_moments(taxa, m, c, DEFAULT_LAMBDA_MIN)?;
    Ok(GroundTruthModel {
        model,
        provenance: Provenance::ProcedurallyGenerated,
    })
}

/// `taxon01`, `taxon02`, ...
pub fn taxon_names(dim: usize) -> Vec<String> {
    let width = dim.to_string().len().max(2);
    (1..=dim).map(|k| format!("taxon{k:0width$}")).collect()
}

/// Ground truth from real data: covariance from all samples, means from the
/// controls.
pub fn ground_truth_from_data(
    l: &LogAbundanceMatrix,
    labels: &Labels,
    lambda_min: f64,
) -> Result<GroundTruthModel> {
    let mask = labels.case_mask(l.samples())?;
    let (_, c) = maxent::estimate_moments(l)?;
    let ctrl: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
    let m = linalg::row_means(&l.values().select_columns(&ctrl));
    let model = MaxEntModel::from_moments(l.taxa().to_vec(), m, c, lambda_min)?;
    Ok(GroundTruthModel {
        model,
        provenance: Provenance::FittedFromData,
    })
}

/// Median `|corr_ij|` over pairs with nonzero interaction; `None` without any.
pub fn median_interacting_correlation(model: &MaxEntModel, tol: f64) -> Option<f64> {
    let corr = linalg::correlation_from_covariance(&model.c);
    let scale = linalg::max_abs(&model.j);
    let mut vals = Vec::new();
    for i in 0..model.dim() {
        for j in (i + 1)..model.dim() {
            if model.j[(i, j)].abs() > tol * scale {
                vals.push(corr[(i, j)].abs());
            }
        }
    }
    (!vals.is_empty()).then(|| stats::median(&vals))
}

/// Case fields and means after planting `spec`'s effects.
pub fn plant_effects(
    gt: &GroundTruthModel,
    spec: &SyntheticSpec,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let model = &gt.model;
    spec.validate(model.dim())?;
    let mut delta_h = DVector::zeros(model.dim());
    for e in &spec.planted {
        delta_h[e.index] = model.h[e.index] * e.delta;
    }
    let h_case = &model.h + &delta_h;
    let m_case = &model.m + &model.c * &delta_h;
    Ok((h_case, m_case))
}

/// A generated cohort with its ground truth.
#[derive(Debug, Clone)]
pub struct Cohort {
    /// Cases first, then controls.
    pub data: LogAbundanceMatrix,
    pub labels: Labels,
    pub truth: Vec<usize>,
}

/// Draws a cohort; `controls`, when given, are resampled with replacement
/// instead of simulated.
pub fn generate_cohort(
    gt: &GroundTruthModel,
    spec: &SyntheticSpec,
    controls: Option<&LogAbundanceMatrix>,
) -> Result<Cohort> {
    let model = &gt.model;
    let (_, m_case) = plant_effects(gt, spec)?;
    if spec.n_cases == 0 || spec.n_controls == 0 {
        return Err(Error::invalid("both groups need at least one sample"));
    }
    let case_values = maxent::sample(&m_case, &model.c, spec.n_cases, seed::derive(spec.seed, "cases", 0))?;
    let cases = LogAbundanceMatrix::new(
        model.taxa.clone(),
        maxent::sample_names("case", spec.n_cases),
        case_values,
        None,
    )?;
    let ctrl_names = maxent::sample_names("ctrl", spec.n_controls);
    let ctrls = match controls {
        None => LogAbundanceMatrix::new(
            model.taxa.clone(),
            ctrl_names,
            maxent::sample(&model.m, &model.c, spec.n_controls, seed::derive(spec.seed, "controls", 0))?,
            None,
        )?,
        Some(real) => {
            if real.taxa() != model.taxa.as_slice() {
                return Err(Error::DimensionMismatch(
                    "control samples and model have different taxa".into(),
                ));
            }
            if real.n_samples() == 0 {
                return Err(Error::EmptyGroup("control"));
            }
            let mut rng = seed::rng(spec.seed, "control-bootstrap", 0);
            let idx: Vec<usize> = (0..spec.n_controls)
                .map(|_| rng.gen_range(0..real.n_samples()))
                .collect();
            let picked = real.values().select_columns(&idx);
            LogAbundanceMatrix::new(model.taxa.clone(), ctrl_names, picked, None)?
        }
    };
    let data = cases.concat_samples(&ctrls)?;
    let labels = Labels::from_pairs(
        cases
            .samples()
            .iter()
            .map(|s| (s.clone(), Group::Case))
            .chain(ctrls.samples().iter().map(|s| (s.clone(), Group::Control))),
    )?;
    Ok(Cohort {
        data,
        labels,
        truth: spec.truth(),
    })
}

/// Comparison of a detected set with the planted set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Score {
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub missed: Vec<usize>,
}

pub fn score(detected: &[usize], truth: &[usize]) -> Score {
    let d: BTreeSet<usize> = detected.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    Score {
        true_positives: d.intersection(&t).copied().collect(),
        false_positives: d.difference(&t).copied().collect(),
        missed: t.difference(&d).copied().collect(),
    }
}

/// Read counts at a fixed depth from relative abundances `exp(l)` closed to
/// one per sample.
pub fn to_counts(l: &LogAbundanceMatrix, depth: u64) -> Result<CountMatrix> {
    let (p, n) = (l.n_taxa(), l.n_samples());
    let mut counts = DMatrix::<u64>::zeros(p, n);
    for j in 0..n {
        let col = l.values().column(j);
        let top = col.max();
        let w: Vec<f64> = col.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = w.iter().sum();
        for i in 0..p {
            counts[(i, j)] = (depth as f64 * w[i] / total).round() as u64;
        }
    }
    CountMatrix::new(l.taxa().to_vec(), l.samples().to_vec(), counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_must_be_positive() {
        assert!(make_ground_truth(10, 0.0, 1).is_err());
        assert!(make_ground_truth(10, 1.5, 1).is_err());
        assert!(make_ground_truth(1, 0.3, 1).is_err());
    }

    #[test]
    fn presets_match_their_names() {
        assert_eq!("table-s2-main".parse::<Preset>().unwrap(), Preset::Main);
        assert_eq!(Preset::Large.deltas()[1], 1.29);
        assert_eq!(Preset::Main.planted().len(), 6);
    }

    #[test]
    fn empty_planting_is_identity() {
        let gt = make_ground_truth(8, 0.5, 3).unwrap();
        let spec = SyntheticSpec {
            planted: vec![],
            n_cases: 2,
            n_controls: 2,
            seed: 0,
        };
        let (h, m) = plant_effects(&gt, &spec).unwrap();
        assert_eq!(h, gt.model.h);
        assert_eq!(m, gt.model.m);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let gt = make_ground_truth(5, 0.5, 3).unwrap();
        let bad = |planted| SyntheticSpec {
            planted,
            n_cases: 2,
            n_controls: 2,
            seed: 0,
        };
        let e = |index, delta| PlantedEffect { index, delta };
        assert!(plant_effects(&gt, &bad(vec![e(5, 0.1)])).is_err());
        assert!(plant_effects(&gt, &bad(vec![e(1, 0.1), e(1, 0.2)])).is_err());
        assert!(plant_effects(&gt, &bad(vec![e(1, -1.0)])).is_err());
    }

    #[test]
    fn score_partitions_detections() {
        let s = score(&[1, 2, 7], &[2, 3]);
        assert_eq!(s.true_positives, vec![2]);
        assert_eq!(s.false_positives, vec![1, 7]);
        assert_eq!(s.missed, vec![3]);
    }
}
