//! Command-line front end.
//!
//! Every subcommand writes its results under `--out` together with a
//! `manifest.json` recording the configuration, tool version, seed and the
//! SHA-256 of every input file. Outputs depend only on the manifest, not on
//! the number of worker threads.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assoc::{self, Method, TestOptions};
use crate::classify::{self, CvOptions, Metric};
use crate::error::{Error, Result};
use crate::ingest::{self, CountMatrix, Labels};
use crate::maxent::{self, MaxEntModel};
use crate::network::{self, EdgeKind};
use crate::robustness;
use crate::synth::{self, Preset, SyntheticSpec};
use crate::transform::{self, LogAbundanceMatrix, Normalization, Scheme};

#[derive(Debug, Parser)]
#[command(name = "daa", version, about = "Direct association analysis for case/control microbiome data")]
struct Cli {
    /// Worker threads (defaults to all cores); never affects results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Fit the maximum-entropy model and write it as JSON.
    Fit(FitArgs),
    /// Per-taxon association test.
    Assoc(AssocArgs),
    /// Significant-taxon counts against subsample size.
    Curve(CurveArgs),
    /// Generate a synthetic cohort with planted direct effects.
    Synth(SynthArgs),
    /// Significant interaction or correlation edges.
    Network(NetworkArgs),
    /// Cross-validated classification accuracy of taxon subsets.
    Classify(ClassifyArgs),
    /// Compare observed higher moments with model predictions.
    Validate(ValidateArgs),
    /// Stability and sensitivity diagnostics.
    Robustness(RobustnessArgs),
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// Count table (TSV, taxa by samples).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Log-abundance table used as is instead of normalized counts.
    #[arg(long, conflicts_with = "counts")]
    values: Option<PathBuf>,
    /// Sample labels (TSV: sample, case|control).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Keep taxa present in more than this fraction of either group.
    #[arg(long)]
    prevalence: Option<f64>,
    #[arg(long, default_value = "tss", value_parser = parse_scheme)]
    norm: Scheme,
    #[arg(long, default_value_t = 1.0)]
    pseudocount: f64,
    #[arg(long, default_value_t = 0.5)]
    css_quantile: f64,
    #[arg(long, default_value_t = maxent::DEFAULT_LAMBDA_MIN)]
    lambda_min: f64,
    #[arg(long, default_value_t = 10_000)]
    permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report raw permutation frequencies, which may be zero.
    #[arg(long)]
    unsmoothed: bool,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct AssocArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value = "daa", value_parser = parse_method)]
    method: Method,
    /// Also run this many label-permuted null analyses.
    #[arg(long, default_value_t = 0)]
    null_repeats: usize,
}

#[derive(Debug, Args, Serialize)]
struct CurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value = "daa", value_parser = parse_method)]
    method: Method,
    /// Comma-separated subsample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Bundled effect set: main, small or large.
    #[arg(long, value_parser = parse_preset, conflicts_with = "spec")]
    preset: Option<Preset>,
    /// Effect specification JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_cases: Option<usize>,
    #[arg(long)]
    n_controls: Option<usize>,
    /// Ground-truth model JSON; a procedural model is used otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 47)]
    dim: usize,
    #[arg(long, default_value_t = 0.6)]
    density: f64,
    /// Seed of the procedural ground-truth model.
    #[arg(long, default_value_t = 1)]
    truth_seed: u64,
    /// Reads per sample in the written count table.
    #[arg(long, default_value_t = 30_000)]
    depth: u64,
}

#[derive(Debug, Args, Serialize)]
struct NetworkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value = "interaction", value_parser = parse_kind)]
    kind: EdgeKind,
    #[arg(long, default_value_t = network::DEFAULT_CUTOFFS.0, allow_hyphen_values = true)]
    pos_cutoff: f64,
    #[arg(long, default_value_t = network::DEFAULT_CUTOFFS.1, allow_hyphen_values = true)]
    neg_cutoff: f64,
}

#[derive(Debug, Args, Serialize)]
struct ClassifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Named subset `NAME=taxonA,taxonB,...`; `NAME=all` uses every taxon.
    #[arg(long = "subset", required = true)]
    subsets: Vec<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    cv_repeats: usize,
    /// Fixed L1 penalty; chosen from a ladder when absent.
    #[arg(long)]
    penalty: Option<f64>,
    /// Report ROC AUC instead of accuracy.
    #[arg(long)]
    auc: bool,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Analysis {
    Stability,
    Covariance,
    Lambda,
    Normalization,
}

#[derive(Debug, Args, Serialize)]
struct RobustnessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    analysis: Analysis,
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    /// Comma-separated retained-eigenvalue counts for the sweep.
    #[arg(long, value_delimiter = ',')]
    retained: Vec<usize>,
    /// Comma-separated subsample sizes for the normalization comparison.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<EdgeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Invalid configuration, reported with exit status 2.
struct Usage(String);

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), Usage> {
    if cond {
        Ok(())
    } else {
        Err(Usage(msg.into()))
    }
}

impl Common {
    fn validate(&self, needs_labels: bool, needs_data: bool) -> std::result::Result<(), Usage> {
        if needs_data {
            check(
                self.counts.is_some() || self.values.is_some(),
                "one of --counts or --values is required",
            )?;
        }
        if needs_labels {
            check(self.labels.is_some(), "--labels is required")?;
        }
        if let Some(p) = self.prevalence {
            check(p > 0.0 && p < 1.0, "--prevalence must be in (0,1)")?;
            check(self.labels.is_some(), "--prevalence needs --labels")?;
        }
        check(self.pseudocount > 0.0 && self.pseudocount.is_finite(), "--pseudocount must be positive")?;
        check(self.css_quantile > 0.0 && self.css_quantile <= 1.0, "--css-quantile must be in (0,1]")?;
        check(self.lambda_min > 0.0 && self.lambda_min.is_finite(), "--lambda-min must be positive")?;
        check(self.permutations > 0, "--permutations must be positive")?;
        check(self.fdr > 0.0 && self.fdr < 1.0, "--fdr must be in (0,1)")?;
        Ok(())
    }

    fn norm(&self) -> Normalization {
        Normalization {
            scheme: self.norm,
            pseudocount: self.pseudocount,
            css_quantile: self.css_quantile,
        }
    }

    fn test_options(&self) -> TestOptions {
        TestOptions {
            n_perm: self.permutations,
            seed: self.seed,
            alpha: self.fdr,
            smoothed: !self.unsmoothed,
            lambda_min: self.lambda_min,
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        [&self.counts, &self.values, &self.labels]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect()
    }
}

/// Loaded inputs.
struct Data {
    counts: Option<CountMatrix>,
    values: LogAbundanceMatrix,
    labels: Option<Labels>,
}

fn load(common: &Common) -> Result<Data> {
    let labels = common.labels.as_ref().map(ingest::parse_labels).transpose()?;
    if let Some(path) = &common.values {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let values = transform::parse_value_table_str(&text, &path.display().to_string())?;
        return Ok(Data {
            counts: None,
            values,
            labels,
        });
    }
    let path = common
        .counts
        .as_ref()
        .ok_or_else(|| Error::invalid("no input table"))?;
    let mut counts = ingest::parse_count_table(path)?;
    if let (Some(t), Some(l)) = (common.prevalence, &labels) {
        counts = ingest::filter_prevalence(&counts, l, t)?;
    }
    let values = transform::log_transform(&counts, common.norm())?;
    Ok(Data {
        counts: Some(counts),
        values,
        labels,
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects named outputs and writes them with a manifest.
struct Output<'a> {
    dir: &'a Path,
    files: Vec<(String, Vec<u8>)>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), content.into()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    fn finish(mut self, command: &Command, seed: u64, inputs: &[&Path]) -> Result<()> {
        std::fs::create_dir_all(self.dir).map_err(|e| Error::io(self.dir.display().to_string(), e))?;
        #[derive(Serialize)]
        struct InputHash {
            path: String,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest<'c> {
            tool: &'static str,
            version: &'static str,
            command: &'c Command,
            seed: u64,
            inputs: Vec<InputHash>,
            outputs: Vec<String>,
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs: inputs
                .iter()
                .map(|p| {
                    Ok(InputHash {
                        path: p.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect::<Result<_>>()?,
            outputs: self.files.iter().map(|f| f.0.clone()).collect(),
        };
        self.add_json("manifest.json", &manifest)?;
        for (name, content) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

fn require_labels(data: &Data) -> Result<&Labels> {
    data.labels
        .as_ref()
        .ok_or_else(|| Error::invalid("labels are required"))
}

fn validate(command: &Command) -> std::result::Result<(), Usage> {
    match command {
        Command::Fit(a) => a.common.validate(false, true),
        Command::Assoc(a) => a.common.validate(true, true),
        Command::Curve(a) => {
            a.common.validate(true, true)?;
            check(a.repeats > 0, "--repeats must be positive")
        }
        Command::Synth(a) => {
            a.common.validate(false, false)?;
            check(
                a.preset.is_some() || a.spec.is_some(),
                "one of --preset or --spec is required",
            )?;
            check(a.depth > 0, "--depth must be positive")?;
            check(a.density > 0.0 && a.density <= 1.0, "--density must be in (0,1]")?;
            check(
                a.common.counts.is_some() == a.common.labels.is_some() || a.common.values.is_some(),
                "--counts and --labels must be given together",
            )
        }
        Command::Network(a) => a.common.validate(false, true),
        Command::Classify(a) => {
            a.common.validate(true, true)?;
            check(a.folds >= 2, "--folds must be at least 2")?;
            check(a.cv_repeats > 0, "--cv-repeats must be positive")?;
            check(a.penalty.map_or(true, |p| p > 0.0), "--penalty must be positive")?;
            for s in &a.subsets {
                check(s.contains('='), format!("subset '{s}' is not NAME=taxa"))?;
            }
            Ok(())
        }
        Command::Validate(a) => a.common.validate(false, true),
        Command::Robustness(a) => {
            a.common.validate(true, true)?;
            match a.analysis {
                Analysis::Stability => check(
                    a.fraction > 0.0 && a.fraction <= 1.0,
                    "--fraction must be in (0,1]",
                ),
                Analysis::Normalization => {
                    check(a.common.counts.is_some(), "normalization comparison needs --counts")?;
                    check(!a.sizes.is_empty(), "--sizes is required")
                }
                Analysis::Covariance | Analysis::Lambda => Ok(()),
            }
        }
    }
}

fn common_of(command: &Command) -> &Common {
    match command {
        Command::Fit(a) => &a.common,
        Command::Assoc(a) => &a.common,
        Command::Curve(a) => &a.common,
        Command::Synth(a) => &a.common,
        Command::Network(a) => &a.common,
        Command::Classify(a) => &a.common,
        Command::Validate(a) => &a.common,
        Command::Robustness(a) => &a.common,
    }
}

fn spectrum_csv(eigenvalues: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (k, v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", k + 1);
    }
    out
}

fn resolve_subset(spec: &str, taxa: &[String]) -> Result<(String, Vec<usize>)> {
    let (name, list) = spec
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("subset '{spec}' is not NAME=taxa")))?;
    if list == "all" {
        return Ok((name.to_string(), (0..taxa.len()).collect()));
    }
    let idx = list
        .split(',')
        .map(|t| {
            taxa.iter()
                .position(|x| x == t)
                .ok_or_else(|| Error::invalid(format!("unknown taxon '{t}' in subset {name}")))
        })
        .collect::<Result<_>>()?;
    Ok((name.to_string(), idx))
}

fn execute(command: &Command) -> Result<()> {
    let common = common_of(command);
    let mut out = Output::new(&common.out);
    let mut inputs: Vec<PathBuf> = common.inputs().into_iter().map(Path::to_path_buf).collect();
    match command {
        Command::Fit(_) => {
            let data = load(common)?;
            let model = MaxEntModel::fit(&data.values, common.lambda_min)?;
            out.add("model.json", model.to_json());
            out.add("spectrum.csv", spectrum_csv(&model.eigenvalues));
        }
        Command::Assoc(a) => {
            let data = load(common)?;
            let labels = require_labels(&data)?;
            let opts = common.test_options();
            let table = assoc::run_method(a.method, &data.values, labels, &opts)?;
            out.add(&format!("assoc_{}.tsv", a.method), table.to_tsv());
            if a.null_repeats > 0 {
                let cal = assoc::pvalue_calibration(&data.values, labels, a.method, a.null_repeats, &opts)?;
                out.add(&format!("calibration_{}.csv", a.method), cal.to_csv());
                out.add(
                    &format!("calibration_{}_ks.csv", a.method),
                    format!("n,ks_statistic,ks_p_value\n{},{},{}\n", cal.sorted_p.len(), cal.ks_statistic, cal.ks_p_value),
                );
            }
        }
        Command::Curve(a) => {
            let data = load(common)?;
            let labels = require_labels(&data)?;
            let pts = assoc::detection_curve(&data.values, labels, &a.sizes, a.repeats, a.method, &common.test_options())?;
            out.add(&format!("curve_{}.csv", a.method), assoc::curve_to_csv(&pts));
            out.add_json(&format!("curve_{}.json", a.method), &pts)?;
        }
        Command::Synth(a) => {
            let mut spec = match (&a.preset, &a.spec) {
                (Some(p), _) => p.spec(275, 189, common.seed),
                (None, Some(path)) => {
                    inputs.push(path.clone());
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                    serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| Error::Json {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?
                }
                (None, None) => return Err(Error::invalid("no effect specification")),
            };
            spec.seed = common.seed;
            if let Some(n) = a.n_cases {
                spec.n_cases = n;
            }
            if let Some(n) = a.n_controls {
                spec.n_controls = n;
            }
            let real = if common.counts.is_some() || common.values.is_some() {
                Some(load(common)?)
            } else {
                None
            };
            let (gt, controls) = match (&real, &a.model) {
                (_, Some(path)) => {
                    inputs.push(path.clone());
                    let model = MaxEntModel::load(path)?;
                    let gt = synth::GroundTruthModel {
                        model,
                        provenance: synth::Provenance::FittedFromData,
                    };
                    (gt, None)
                }
                (Some(data), None) => {
                    let labels = require_labels(data)?;
                    let gt = synth::ground_truth_from_data(&data.values, labels, common.lambda_min)?;
                    let mask = labels.case_mask(data.values.samples())?;
                    let ctrl: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
                    (gt, Some(data.values.select_samples(&ctrl)))
                }
                (None, None) => (synth::make_ground_truth(a.dim, a.density, a.truth_seed)?, None),
            };
            let cohort = synth::generate_cohort(&gt, &spec, controls.as_ref())?;
            let counts = synth::to_counts(&cohort.data, a.depth)?;
            out.add("counts.tsv", ingest::format_count_table(&counts));
            out.add("log_abundance.tsv", transform::format_value_table(&cohort.data));
            out.add("labels.tsv", ingest::format_labels(&cohort.labels, cohort.data.samples())?);
            out.add("ground_truth.json", gt.model.to_json());
            out.add_json("spec.json", &spec)?;
            #[derive(Serialize)]
            struct Truth<'t> {
                provenance: synth::Provenance,
                planted: Vec<usize>,
                planted_taxa: Vec<&'t str>,
            }
            out.add_json(
                "truth.json",
                &Truth {
                    provenance: gt.provenance,
                    planted_taxa: cohort.truth.iter().map(|&i| gt.model.taxa[i].as_str()).collect(),
                    planted: cohort.truth.clone(),
                },
            )?;
        }
        Command::Network(a) => {
            let data = load(common)?;
            let sig = network::edge_significance(&data.values, a.kind, common.permutations, common.lambda_min, common.seed)?;
            let edges = network::extract_edges(
                data.values.taxa(),
                &sig.weights,
                &sig.q,
                a.kind,
                a.pos_cutoff,
                a.neg_cutoff,
                common.fdr,
            )?;
            out.add(&format!("edges_{}.tsv", a.kind), edges.to_tsv());
        }
        Command::Classify(a) => {
            let data = load(common)?;
            let labels = require_labels(&data)?;
            let opts = CvOptions {
                folds: a.folds,
                repeats: a.cv_repeats,
                penalty: a.penalty,
                seed: common.seed,
                metric: if a.auc { Metric::Auc } else { Metric::Accuracy },
            };
            let reports = a
                .subsets
                .iter()
                .map(|s| {
                    let (name, idx) = resolve_subset(s, data.values.taxa())?;
                    Ok((name, classify::cross_validate(&data.values, labels, &idx, &opts)?))
                })
                .collect::<Result<Vec<_>>>()?;
            out.add("cv_summary.csv", classify::summary_csv(&reports));
            out.add_json("cv_report.json", &reports)?;
        }
        Command::Validate(_) => {
            let data = load(common)?;
            let report = maxent::validate_moments(&data.values, common.seed)?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.add(
                "moments_summary.csv",
                format!(
                    "order,r,baseline_r\nthird_noncentral,{},{}\nfourth_central,{},{}\n",
                    opt(report.r_third),
                    opt(report.baseline_r_third),
                    opt(report.r_fourth),
                    opt(report.baseline_r_fourth)
                ),
            );
            out.add_json("moments.json", &report)?;
        }
        Command::Robustness(a) => {
            let data = load(common)?;
            let labels = require_labels(&data)?;
            match a.analysis {
                Analysis::Stability => {
                    let r = robustness::subsample_stability(&data.values, labels, a.fraction, a.repeats, common.lambda_min, common.seed)?;
                    out.add("stability.csv", r.to_csv());
                }
                Analysis::Covariance => {
                    let r = robustness::compare_group_covariances(&data.values, labels, a.repeats, common.seed)?;
                    out.add("covariance_pairs.csv", r.pairs_csv());
                    out.add(
                        "covariance_summary.csv",
                        format!(
                            "slope,reverse_slope,r,baseline_r_mean,baseline_r_sd\n{},{},{},{},{}\n",
                            r.slope, r.reverse_slope, r.r, r.baseline_r_mean, r.baseline_r_sd
                        ),
                    );
                }
                Analysis::Lambda => {
                    let counts: Vec<usize> = if a.retained.is_empty() {
                        (1..=data.values.n_taxa()).collect()
                    } else {
                        a.retained.clone()
                    };
                    let r = robustness::lambda_sweep(&data.values, labels, &counts, &common.test_options())?;
                    out.add("lambda_sweep.csv", r.to_csv());
                    out.add("spectrum.csv", spectrum_csv(&r.spectrum));
                }
                Analysis::Normalization => {
                    let counts = data
                        .counts
                        .as_ref()
                        .ok_or_else(|| Error::invalid("normalization comparison needs counts"))?;
                    let r = robustness::normalization_comparison(
                        counts,
                        labels,
                        &Scheme::ALL,
                        common.norm(),
                        &a.sizes,
                        a.repeats,
                        &[Method::Naive, Method::Daa],
                        &common.test_options(),
                    )?;
                    out.add("normalization.csv", robustness::normalization_csv(&r));
                    out.add_json("normalization.json", &r)?;
                }
            }
        }
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    out.finish(command, common.seed, &input_refs)
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit status: 0 on success, 2 for usage errors, 1 for data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(Usage(msg)) = validate(&cli.command) {
        eprintln!("error: {msg}");
        return 2;
    }
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => {
                eprintln!("error: cannot start {n} threads: {e}");
                return 1;
            }
        },
        None => execute(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
