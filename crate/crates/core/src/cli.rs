//! Command-line front end. Every flag also reads a `HYPO_*` environment
//! variable; every command writes `run.json` next to its outputs.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::classifier::{loocv_evaluate, CvMode, CvReport, KernelChoice, PipelineConfig};
use crate::cluster::{cluster_table, KmeansConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, qc_expression_association, ExcludedParticipant, ExpressionAuMap, FeatureTable, PeakConfig};
use crate::ingest::{load_cohort, ParseConfig, DEFAULT_CONFIDENCE_THRESHOLD};
use crate::logit::{figure1_report, fit_table, write_figure1_csv};
use crate::stats::table2_analysis;
use crate::synth::{generate_features, generate_recordings, write_synthetic_cohort, CohortSpec};

pub const RUN_FILE: &str = "run.json";
/// Version stamped on every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "hypomimia", version, about = "AU-variance features, group statistics and PD classification")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "HYPO_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a calibrated synthetic cohort (manifest + AU CSVs).
    Synth(SynthArgs),
    /// Parse and validate a manifest's recordings; report QC.
    Ingest(IngestArgs),
    /// Extract the gated-variance feature table.
    Features(InputArgs),
    /// Per-feature Mann–Whitney comparison with Bonferroni adjustment.
    Stats(InputArgs),
    /// SMOTE + SVM leave-one-out evaluation.
    Classify(ClassifyArgs),
    /// Logistic regression weights with Wald tests.
    Regress(RegressArgs),
    /// PCA projection and k-means clusters.
    Cluster(ClusterArgs),
    /// Run features, stats, classify, regress and cluster together.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory (created if absent).
    #[arg(long, env = "HYPO_OUT")]
    pub out: PathBuf,
    /// Master seed for every random stream.
    #[arg(long, env = "HYPO_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Cohort manifest (JSON).
    #[arg(long, env = "HYPO_MANIFEST")]
    pub manifest: Option<PathBuf>,
    /// Precomputed feature table (CSV), instead of a manifest.
    #[arg(long, env = "HYPO_FEATURES")]
    pub features: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    #[command(flatten)]
    pub source: Source,
    /// Frames below this tracking confidence are dropped.
    #[arg(long, env = "HYPO_CONFIDENCE_THRESHOLD", default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub confidence_threshold: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, env = "HYPO_N_PD", default_value_t = 61)]
    pub n_pd: usize,
    #[arg(long, env = "HYPO_N_NONPD", default_value_t = 543)]
    pub n_nonpd: usize,
    /// Write only the feature table, no recordings.
    #[arg(long, env = "HYPO_FEATURES_ONLY")]
    pub features_only: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct IngestArgs {
    #[arg(long, env = "HYPO_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "HYPO_CONFIDENCE_THRESHOLD", default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    pub confidence_threshold: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    FoldSafe,
    PaperFaithful,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Args, Debug, Clone)]
pub struct SvmArgs {
    #[arg(long, env = "HYPO_MODE", value_enum, default_value_t = ModeArg::FoldSafe)]
    pub mode: ModeArg,
    #[arg(long, env = "HYPO_KERNEL", value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    #[arg(long, env = "HYPO_C", default_value_t = 1.0)]
    pub c: f64,
    /// RBF width (default: 1 / (d · mean feature variance)).
    #[arg(long, env = "HYPO_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long, env = "HYPO_SMOTE_K", default_value_t = 5)]
    pub smote_k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
    /// z-score features (default on).
    #[arg(long, env = "HYPO_STANDARDIZE")]
    pub standardize: Option<bool>,
}

#[derive(Args, Debug, Clone)]
pub struct RegressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// z-score features before fitting (default on).
    #[arg(long, env = "HYPO_STANDARDIZE")]
    pub standardize: Option<bool>,
}

#[derive(Args, Debug, Clone)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, env = "HYPO_K", default_value_t = 3)]
    pub k: usize,
    /// z-score features before PCA (default off).
    #[arg(long, env = "HYPO_STANDARDIZE")]
    pub standardize: Option<bool>,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
    #[arg(long, env = "HYPO_K", default_value_t = 3)]
    pub k: usize,
    /// Override the per-step default (classify and regress on, cluster off).
    #[arg(long, env = "HYPO_STANDARDIZE")]
    pub standardize: Option<bool>,
}

/// Published figures from the clinical cohort, carried as labelled
/// metadata only.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct ReferenceMetrics {
    pub reference_only: bool,
    pub note: &'static str,
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
}

pub const REFERENCE_METRICS: ReferenceMetrics = ReferenceMetrics {
    reference_only: true,
    note: "published result on the private clinical cohort; not a target for synthetic data",
    accuracy: 0.956,
    f1: 0.95,
    auc: 0.94,
    precision: 0.958,
    recall: 0.943,
};

/// Collects the files a command writes, relative to `--out`.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, data: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.into_bytes())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.bytes(name, buf)
    }

    fn finish(mut self, command: &str, seed: u64, inputs: Value, config: Value) -> Result<Vec<String>> {
        let mut artifacts = self.written.clone();
        artifacts.push(RUN_FILE.to_string());
        let run = json!({
            "tool": "hypomimia",
            "version": env!("CARGO_PKG_VERSION"),
            "format_version": FORMAT_VERSION,
            "command": command,
            "seed": seed,
            "inputs": inputs,
            "config": config,
            "artifacts": artifacts,
        });
        self.json(RUN_FILE, &run)?;
        Ok(self.written)
    }
}

fn parse_config(threshold: f64) -> Result<ParseConfig> {
    let c = ParseConfig {
        confidence_threshold: threshold,
    };
    c.validate()?;
    Ok(c)
}

fn path_str(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| Value::String(p.display().to_string()))
}

/// Feature table from either input, plus participants excluded during
/// extraction.
fn load_table(input: &InputArgs) -> Result<(FeatureTable, Vec<ExcludedParticipant>)> {
    let pc = parse_config(input.confidence_threshold)?;
    match (&input.source.manifest, &input.source.features) {
        (Some(m), _) => {
            let cohort = load_cohort(m, &pc)?;
            let ex = extract_features(&cohort, &ExpressionAuMap::default())?;
            Ok((ex.table, ex.excluded))
        }
        (None, Some(f)) => {
            let file = std::fs::File::open(f).map_err(|e| Error::io(f, e))?;
            let table = FeatureTable::read_csv(file).map_err(|e| Error::in_file(f, e))?;
            Ok((table, Vec::new()))
        }
        (None, None) => Err(Error::Config("one of --manifest or --features is required".into())),
    }
}

fn input_json(input: &InputArgs) -> Value {
    json!({
        "manifest": path_str(&input.source.manifest),
        "features": path_str(&input.source.features),
    })
}

fn pipeline_config(svm: &SvmArgs, standardize: bool, seed: u64) -> (PipelineConfig, CvMode) {
    let config = PipelineConfig {
        kernel: match svm.kernel {
            KernelArg::Linear => KernelChoice::Linear,
            KernelArg::Rbf => KernelChoice::Rbf,
        },
        gamma: svm.gamma,
        c: svm.c,
        smote_k: svm.smote_k,
        standardize,
        seed,
        ..Default::default()
    };
    let mode = match svm.mode {
        ModeArg::FoldSafe => CvMode::FoldSafe,
        ModeArg::PaperFaithful => CvMode::PaperFaithful,
    };
    (config, mode)
}

fn write_features(out: &mut Outputs, table: &FeatureTable, excluded: &[ExcludedParticipant]) -> Result<()> {
    out.csv("features.csv", |w| table.write_csv(w))?;
    let missing_cells: usize = table.rows.iter().map(|r| r.missing_count()).sum();
    out.json(
        "features.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "features": table.features.iter().map(|f| f.name()).collect::<Vec<_>>(),
            "participants": table.len(),
            "pd": table.rows.iter().filter(|r| r.pd_label).count(),
            "missing_cells": missing_cells,
            "excluded": excluded,
            "policy": {
                "variance_divisor": "n-1",
                "never_active": "zero_fill",
                "ml_rows": "complete_only",
            },
        }),
    )
}

fn write_stats(out: &mut Outputs, table: &FeatureTable) -> Result<()> {
    let t2 = table2_analysis(table)?;
    out.csv("table2.csv", |w| t2.write_csv(w))?;
    out.json(
        "table2.json",
        &json!({ "format_version": FORMAT_VERSION, "family_size": t2.family_size, "rows": t2.rows }),
    )
}

fn write_classify(out: &mut Outputs, table: &FeatureTable, config: &PipelineConfig, mode: CvMode) -> Result<()> {
    let complete = table.without_missing();
    let ids: Vec<String> = complete.rows.iter().map(|r| r.participant_id.clone()).collect();
    let report: CvReport = loocv_evaluate(&complete.matrix(), &complete.labels(), &ids, config, mode)?;
    out.json(
        "metrics.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "mode": mode.name(),
            "participants": complete.len(),
            "dropped_incomplete": table.len() - complete.len(),
            "synthetic_rows": report.synthetic_rows,
            "metrics": report.metrics,
            "metrics_original_rows": report.metrics_original_rows,
            "reference": REFERENCE_METRICS,
        }),
    )?;
    out.csv("predictions.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["index", "participant_id", "pd_label", "decision_value", "predicted", "synthetic", "converged"])?;
        for f in &report.folds {
            c.write_record([
                f.index.to_string(),
                f.id.clone(),
                u8::from(f.label).to_string(),
                f.decision_value.to_string(),
                u8::from(f.predicted).to_string(),
                f.synthetic.to_string(),
                f.converged.to_string(),
            ])?;
        }
        c.flush().map_err(|e| Error::io("predictions.csv", e))?;
        Ok(())
    })
}

fn write_regress(out: &mut Outputs, table: &FeatureTable, standardize: bool) -> Result<()> {
    let complete = table.without_missing();
    let fit = fit_table(&complete, standardize)?;
    let rows = figure1_report(&fit)?;
    out.csv("figure1.csv", |w| write_figure1_csv(&rows, w))?;
    out.json(
        "figure1.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "standardized": fit.standardized,
            "participants": complete.len(),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "log_likelihood": fit.log_likelihood,
            "intercept": fit.intercept(),
            "negative_weights": rows.iter().filter(|r| r.weight < 0.0).count(),
            "weights": rows,
        }),
    )
}

fn write_cluster(out: &mut Outputs, table: &FeatureTable, k: usize, standardize: bool, seed: u64) -> Result<()> {
    let complete = table.without_missing();
    let config = KmeansConfig {
        k,
        ..Default::default()
    };
    let analysis = cluster_table(&complete, standardize, &config, seed)?;
    out.csv("figure2_points.csv", |w| analysis.write_points_csv(w))?;
    let mut text = analysis.clusters_json()?;
    text.push('\n');
    out.bytes("figure2_clusters.json", text.into_bytes())
}

fn kmeans_json(k: usize) -> Value {
    let d = KmeansConfig::default();
    json!({ "k": k, "restarts": d.restarts, "max_iter": d.max_iter })
}

/// Runs one parsed command; returns the artifact names written.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::Synth(a) => {
            let spec = CohortSpec {
                n_pd: a.n_pd,
                n_nonpd: a.n_nonpd,
                seed: a.out.seed,
                ..Default::default()
            };
            let mut out = Outputs::new(&a.out.out)?;
            if a.features_only {
                let table = generate_features(&spec)?;
                out.csv("features.csv", |w| table.write_csv(w))?;
            } else {
                let synth = generate_recordings(&spec)?;
                write_synthetic_cohort(&a.out.out, &synth)?;
                for w in &synth.warnings {
                    eprintln!("warning: {w}");
                }
                out.written.push(crate::synth::MANIFEST_FILE.into());
                out.written.push(crate::synth::TARGETS_FILE.into());
            }
            let config = json!({
                "n_pd": spec.n_pd, "n_nonpd": spec.n_nonpd, "features_only": a.features_only,
                "fps": spec.fps, "duration": spec.duration, "bumps": spec.bumps,
                "targets": spec.targets,
            });
            out.finish("synth", a.out.seed, Value::Null, config)
        }
        Command::Ingest(a) => {
            let pc = parse_config(a.confidence_threshold)?;
            let cohort = load_cohort(&a.manifest, &pc)?;
            let qc = qc_expression_association(&cohort, &ExpressionAuMap::default(), &PeakConfig::default())?;
            let mut out = Outputs::new(&a.out.out)?;
            out.json(
                "ingest.json",
                &json!({
                    "format_version": FORMAT_VERSION,
                    "participants": cohort.participants.len(),
                    "recordings": cohort.recordings.len(),
                    "files": cohort.file_stats,
                    "warnings": cohort.warnings().collect::<Vec<_>>(),
                    "qc": qc,
                }),
            )?;
            let config = json!({ "confidence_threshold": a.confidence_threshold, "peaks": PeakConfig::default() });
            out.finish("ingest", a.out.seed, json!({ "manifest": a.manifest.display().to_string() }), config)
        }
        Command::Features(a) => {
            let (table, excluded) = load_table(a)?;
            let mut out = Outputs::new(&a.out.out)?;
            write_features(&mut out, &table, &excluded)?;
            let config = json!({ "confidence_threshold": a.confidence_threshold });
            out.finish("features", a.out.seed, input_json(a), config)
        }
        Command::Stats(a) => {
            let (table, _) = load_table(a)?;
            let mut out = Outputs::new(&a.out.out)?;
            write_stats(&mut out, &table)?;
            let config = json!({ "confidence_threshold": a.confidence_threshold, "test": "mann-whitney", "adjustment": "bonferroni" });
            out.finish("stats", a.out.seed, input_json(a), config)
        }
        Command::Classify(a) => {
            let (config, mode) = pipeline_config(&a.svm, a.standardize.unwrap_or(true), a.input.out.seed);
            config.validate()?;
            let (table, _) = load_table(&a.input)?;
            let mut out = Outputs::new(&a.input.out.out)?;
            write_classify(&mut out, &table, &config, mode)?;
            let cfg = json!({ "confidence_threshold": a.input.confidence_threshold, "mode": mode.name(), "pipeline": config });
            out.finish("classify", a.input.out.seed, input_json(&a.input), cfg)
        }
        Command::Regress(a) => {
            let (table, _) = load_table(&a.input)?;
            let standardize = a.standardize.unwrap_or(true);
            let mut out = Outputs::new(&a.input.out.out)?;
            write_regress(&mut out, &table, standardize)?;
            let cfg = json!({ "confidence_threshold": a.input.confidence_threshold, "standardize": standardize });
            out.finish("regress", a.input.out.seed, input_json(&a.input), cfg)
        }
        Command::Cluster(a) => {
            KmeansConfig { k: a.k, ..Default::default() }.validate()?;
            let (table, _) = load_table(&a.input)?;
            let standardize = a.standardize.unwrap_or(false);
            let mut out = Outputs::new(&a.input.out.out)?;
            write_cluster(&mut out, &table, a.k, standardize, a.input.out.seed)?;
            let cfg = json!({ "confidence_threshold": a.input.confidence_threshold, "standardize": standardize, "kmeans": kmeans_json(a.k) });
            out.finish("cluster", a.input.out.seed, input_json(&a.input), cfg)
        }
        Command::Report(a) => {
            let seed = a.input.out.seed;
            let (config, mode) = pipeline_config(&a.svm, a.standardize.unwrap_or(true), seed);
            config.validate()?;
            KmeansConfig { k: a.k, ..Default::default() }.validate()?;
            let (table, excluded) = load_table(&a.input)?;
            let regress_std = a.standardize.unwrap_or(true);
            let cluster_std = a.standardize.unwrap_or(false);
            let mut out = Outputs::new(&a.input.out.out)?;
            write_features(&mut out, &table, &excluded)?;
            write_stats(&mut out, &table)?;
            write_classify(&mut out, &table, &config, mode)?;
            write_regress(&mut out, &table, regress_std)?;
            write_cluster(&mut out, &table, a.k, cluster_std, seed)?;
            let cfg = json!({
                "confidence_threshold": a.input.confidence_threshold,
                "classify": { "mode": mode.name(), "pipeline": config },
                "regress": { "standardize": regress_std },
                "cluster": { "standardize": cluster_std, "kmeans": kmeans_json(a.k) },
            });
            out.finish("report", seed, input_json(&a.input), cfg)
        }
    }
}

/// [`execute`] on a pool of `--threads` workers.
pub fn dispatch(cli: &Cli) -> Result<Vec<String>> {
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| execute(cli))),
        None => execute(cli),
    }
}

fn error_json(kind: &str, message: &str, exit_code: i32) -> String {
    json!({ "error": { "kind": kind, "message": message, "exit_code": exit_code } }).to_string()
}

/// Parses `args`, runs the command on a pool of `--threads` workers and
/// returns the process exit status. Failures go to stderr as one JSON line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            eprintln!("{}", error_json("usage", e.to_string().trim(), 2));
            return 2;
        }
    };
    match dispatch(&cli) {
        Ok(artifacts) => {
            println!("{}", json!({ "status": "ok", "artifacts": artifacts }));
            0
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_json(e.kind(), &e.to_string(), code));
            code
        }
    }
}
