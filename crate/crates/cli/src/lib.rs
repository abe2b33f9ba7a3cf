//! Command-line front end. [`cli_dispatch`] parses arguments, runs one
//! subcommand and maps the outcome onto an exit code.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bnplc::io::{
    cluster_summary, load_longitudinal_csv, read_partition_csv, read_trace, with_writer,
    write_cluster_summary, write_dendrogram_json, write_index_table, write_longitudinal_csv,
    write_partition_csv, write_predictions_csv, write_study_csv, write_study_json, write_trace,
    DendrogramFile, LoadOptions, OutputMeta, PredictionRow, TraceFile,
};
use bnplc::mcmc::{run_chain, run_conditional_chain, run_two_component, SamplerConfig, Truncation};
use bnplc::model::Patient;
use bnplc::partition::{agglomerate, coclustering, select_partition, PartitionEstimate, PartitionMethod, SelectParams};
use bnplc::prediction::{best_threshold, classify, predict_patients, roc_auc, sensitivity_specificity, DrawPredictor};
use bnplc::rng::stream;
use bnplc::simulation::{
    application_mimic, cross_validate, eval_metrics, generate_dataset, run_study, scenario_by_name,
    CvConfig, StudyConfig, StudyReport, MIMIC_SEED,
};
use bnplc::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bnplc", version, about = "Classify sparse longitudinal profiles with a Dirichlet-process mixture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labelled data set in long CSV format.
    Simulate(SimulateArgs),
    /// Fit the mixture model and write the posterior trace.
    Fit(FitArgs),
    /// Posterior predictive disease probabilities from a trace.
    Predict(PredictArgs),
    /// Point estimate of the clustering from a mixture trace.
    Partition(PartitionArgs),
    /// Refit with assignments fixed at a partition and summarise its clusters.
    Refit(RefitArgs),
    /// Replicate simulation study.
    Study(StudyArgs),
    /// Repeated random-holdout cross-validation on a data set.
    Cv(CvArgs),
    /// Fit the two-component baseline model.
    Baseline(BaselineArgs),
}

fn parse_truncation(s: &str) -> std::result::Result<Truncation, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Truncation::Auto);
    }
    match s.parse::<usize>() {
        Ok(h) if h > 0 => Ok(Truncation::Fixed(h)),
        _ => Err(format!("expected `auto` or a positive integer, got {s:?}")),
    }
}

fn parse_method(s: &str) -> std::result::Result<PartitionMethod, String> {
    s.parse::<PartitionMethod>().map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct SamplerArgs {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iterations: Option<usize>,
    /// Defaults to half the iterations when only --iterations is given.
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// `auto` or a fixed number of components.
    #[arg(long, value_parser = parse_truncation)]
    truncation: Option<Truncation>,
    /// JSON file with sampler settings; flags override it.
    #[arg(long = "sampler-config")]
    sampler_config: Option<PathBuf>,
}

impl SamplerArgs {
    fn build(&self) -> Result<SamplerConfig> {
        let mut c = match &self.sampler_config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)?
            }
            None => SamplerConfig::default(),
        };
        c.seed = self.seed;
        if let Some(n) = self.iterations {
            c.iterations = n;
            if self.burn_in.is_none() {
                c.burn_in = n / 2;
            }
        }
        if let Some(b) = self.burn_in {
            c.burn_in = b;
        }
        if let Some(t) = self.thin {
            c.thin = t;
        }
        if let Some(t) = self.truncation {
            c.truncation = t;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Long-format CSV: patient_id,disease,day,value (optionally .gz).
    #[arg(long)]
    data: PathBuf,
    /// Apply the natural log to every value on load.
    #[arg(long)]
    log: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Vec<Patient>> {
        ensure_file(&self.data)?;
        let loaded = load_longitudinal_csv(&self.data, LoadOptions { log: self.log })?;
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        Ok(loaded.patients)
    }
}

#[derive(Args, Debug, Clone)]
struct SelectArgs {
    #[arg(long, default_value = "avg-silhouette", value_parser = parse_method)]
    method: PartitionMethod,
    /// Cut height for avg-h.
    #[arg(long = "h", default_value_t = 0.75)]
    height: f64,
    /// Largest cluster count tried by the index-based methods.
    #[arg(long)]
    kmax: Option<usize>,
    /// Cluster count for avg-K and ward-K (default: posterior median).
    #[arg(long)]
    k: Option<usize>,
}

impl SelectArgs {
    fn params(&self) -> SelectParams {
        SelectParams {
            height: self.height,
            k_max: self.kmax,
            k: self.k,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// sim1, sim2 or mimic (the 173-patient application-like cohort).
    #[arg(long)]
    scenario: String,
    /// Number of patients (ignored for mimic).
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate without random intercepts or serial noise.
    #[arg(long)]
    noise_free: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generating cluster of each patient.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Trace file (JSON lines; .gz compresses).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Classify as diseased when the probability exceeds this value.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Credible level of the reported interval.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Relative cost of a false positive when choosing a threshold from the
    /// ROC curve of labelled data.
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    select: SelectArgs,
    /// Directory for partition.csv, dendrogram.json and index.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct RefitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Partition CSV from `partition`.
    #[arg(long)]
    partition: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Conditional trace file.
    #[arg(long)]
    out: PathBuf,
    /// Cluster summary JSON.
    #[arg(long)]
    summary: PathBuf,
    /// Time grid as start:end:step.
    #[arg(long, default_value = "10:80:1")]
    grid: String,
    /// Include pointwise 95% trajectory bands.
    #[arg(long)]
    bands: bool,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long = "n-train", default_value_t = 200)]
    n_train: usize,
    #[arg(long = "n-test", default_value_t = 5000)]
    n_test: usize,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Comma-separated partition methods (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<PartitionMethod>>,
    /// Score partition methods through a conditional refit.
    #[arg(long)]
    refit: bool,
    #[arg(long = "no-two-component")]
    no_two_component: bool,
    #[command(flatten)]
    select: StudySelectArgs,
    #[arg(long)]
    threads: Option<usize>,
    /// Summary table (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Full report with per-replicate values (JSON).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct StudySelectArgs {
    #[arg(long = "h", default_value_t = 0.75)]
    height: f64,
    #[arg(long)]
    kmax: Option<usize>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 25)]
    folds: usize,
    /// Held-out patients per fold: a fraction below 1 or a count.
    #[arg(long = "test-size", default_value_t = 0.2)]
    test_size: f64,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long = "two-component")]
    two_component: bool,
    /// Partition methods scored through a conditional refit on each fold.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<PartitionMethod>,
    #[command(flatten)]
    select: StudySelectArgs,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Runs the command line `argv` (including the program name).
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Partition(a) => partition(a),
        Command::Refit(a) => refit(a),
        Command::Study(a) => study(a),
        Command::Cv(a) => cv(a),
        Command::Baseline(a) => baseline(a),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Error::InvalidArgument(format!(
            "output directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn ensure_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{} does not exist", path.display())))
    }
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    scenario: &'a str,
    n: usize,
    noise_free: bool,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    if let Some(t) = &a.truth {
        ensure_parent(t)?;
    }
    let (patients, clusters) = if a.scenario == "mimic" {
        (application_mimic(&mut stream(a.seed, "mimic"))?, None)
    } else {
        let mut sc = scenario_by_name(&a.scenario)?;
        if a.noise_free {
            sc = sc.noise_free();
        }
        let (ps, truth) = generate_dataset(&sc, a.n, &mut stream(a.seed, "simulate"))?;
        (ps, Some(truth.clusters))
    };
    let meta = OutputMeta::new(
        a.seed,
        &SimulateConfig {
            scenario: &a.scenario,
            n: patients.len(),
            noise_free: a.noise_free,
        },
    );
    write_longitudinal_csv(&a.out, &patients, &meta)?;
    if let Some(t) = &a.truth {
        let clusters = clusters.ok_or_else(|| {
            Error::InvalidArgument("the mimic cohort has no generating clusters".into())
        })?;
        with_writer(t, |w| {
            writeln!(w, "{}", meta.comment_line())?;
            writeln!(w, "patient_id,cluster_label")?;
            for (p, c) in patients.iter().zip(&clusters) {
                writeln!(w, "{},{}", p.id, c + 1)?;
            }
            Ok(())
        })?;
    }
    if a.scenario == "mimic" && a.seed != MIMIC_SEED {
        log::info!("the bundled mimic file uses seed {MIMIC_SEED}");
    }
    println!("wrote {} patients to {}", patients.len(), a.out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = a.sampler.build()?;
    ensure_parent(&a.out)?;
    let data = a.data.load()?;
    let trace = run_chain(&data, &cfg)?;
    println!(
        "truncation {}; {} draws; mean non-empty clusters {:.2}",
        trace.truncation,
        trace.draws.len(),
        trace.mean_nonempty()
    );
    let acc = &trace.diagnostics.acceptance;
    println!("acceptance: {}", serde_json::to_string(acc)?);
    write_trace(&a.out, &TraceFile::mixture(trace, &cfg))
}

fn prediction_rows<P: DrawPredictor>(
    draws: &[P],
    data: &[Patient],
    level: f64,
    threshold: f64,
) -> Result<Vec<PredictionRow>> {
    let preds = predict_patients(draws, data, level)?;
    Ok(data
        .iter()
        .zip(preds)
        .map(|(p, r)| PredictionRow {
            patient_id: p.id.clone(),
            prob: r.prob,
            lower: r.interval.0,
            upper: r.interval.1,
            classified: classify(r.prob, threshold),
        })
        .collect())
}

fn report_accuracy(data: &[Patient], rows: &[PredictionRow], threshold: f64, cost: f64) -> Result<()> {
    if data.iter().any(|p| p.disease.is_none()) {
        return Ok(());
    }
    let labels: Vec<bool> = data.iter().map(|p| p.disease == Some(true)).collect();
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Ok(());
    }
    let probs: Vec<f64> = rows.iter().map(|r| r.prob).collect();
    let m = eval_metrics(&probs, &labels)?;
    println!("loss {:.4}; misclassified {:.1}%; AUC {:.3}", m.loss, m.pct_error, m.auc);
    let (se, sp) = sensitivity_specificity(&probs, &labels, threshold);
    println!("threshold {threshold}: sensitivity {se:.3}, specificity {sp:.3}");
    let roc = roc_auc(&probs, &labels)?;
    let best = best_threshold(&roc.curve, cost)?;
    let (se, sp) = sensitivity_specificity(&probs, &labels, best);
    println!("ROC-selected threshold {best:.4}: sensitivity {se:.3}, specificity {sp:.3}");
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    ensure_file(&a.trace)?;
    ensure_parent(&a.out)?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::InvalidArgument(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let file = read_trace(&a.trace)?;
    let data = a.data.load()?;
    let rows = match &file {
        TraceFile::Mixture { trace, .. } => prediction_rows(&trace.draws, &data, a.level, a.threshold)?,
        TraceFile::TwoComponent { trace, .. } => prediction_rows(&trace.draws, &data, a.level, a.threshold)?,
    };
    let h = file.header();
    let meta = OutputMeta {
        version: bnplc::io::VERSION.to_string(),
        seed: h.seed,
        config_hash: h.config_hash.clone(),
    };
    write_predictions_csv(&a.out, &rows, &meta)?;
    report_accuracy(&data, &rows, a.threshold, a.cost)?;
    println!("wrote {} predictions to {}", rows.len(), a.out.display());
    Ok(())
}

fn mixture_trace(path: &Path) -> Result<(bnplc::io::TraceHeader, bnplc::PosteriorTrace)> {
    ensure_file(path)?;
    match read_trace(path)? {
        TraceFile::Mixture { header, trace } => Ok((header, trace)),
        TraceFile::TwoComponent { .. } => Err(Error::InvalidArgument(
            "this command needs a mixture trace, not a two-component one".into(),
        )),
    }
}

#[derive(Serialize)]
struct PartitionConfig<'a> {
    trace_config: &'a str,
    method: PartitionMethod,
    select: SelectParams,
}

fn partition(a: PartitionArgs) -> Result<()> {
    if !a.out_dir.is_dir() {
        return Err(Error::InvalidArgument(format!("{} is not a directory", a.out_dir.display())));
    }
    let (header, trace) = mixture_trace(&a.trace)?;
    let params = a.select.params();
    let est = select_partition(&trace, a.select.method, &params)?;
    let meta = OutputMeta::new(
        header.seed,
        &PartitionConfig {
            trace_config: &header.config_hash,
            method: a.select.method,
            select: params,
        },
    );
    write_partition_csv(&a.out_dir.join("partition.csv"), &trace.patient_ids, &est, &meta)?;
    if let Some(linkage) = a.select.method.linkage() {
        let dendrogram = agglomerate(&coclustering(&trace)?, linkage)?;
        write_dendrogram_json(
            &a.out_dir.join("dendrogram.json"),
            &DendrogramFile {
                meta: meta.clone(),
                patient_ids: trace.patient_ids.clone(),
                dendrogram,
            },
        )?;
    }
    if !est.index_values.is_empty() {
        write_index_table(&a.out_dir.join("index.csv"), est.method, &est.index_values, &meta)?;
    }
    println!(
        "{}: {} clusters, sizes {:?}",
        est.method,
        est.n_clusters(),
        est.cluster_sizes()
    );
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("grid must be start:end:step, got {s:?}"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && start <= end && start.is_finite() && end.is_finite()) {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn refit(a: RefitArgs) -> Result<()> {
    let mut cfg = a.sampler.build()?;
    ensure_file(&a.partition)?;
    ensure_parent(&a.out)?;
    ensure_parent(&a.summary)?;
    let grid = parse_grid(&a.grid)?;
    let data = a.data.load()?;
    let file = read_partition_csv(&a.partition)?;
    let by_id: HashMap<&str, usize> = file
        .patient_ids
        .iter()
        .zip(&file.labels)
        .map(|(id, &l)| (id.as_str(), l))
        .collect();
    let labels = data
        .iter()
        .map(|p| {
            by_id
                .get(p.id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidData(format!("patient {} is not in the partition file", p.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if file.labels.len() != data.len() {
        return Err(Error::InvalidData(format!(
            "partition lists {} patients, data has {}",
            file.labels.len(),
            data.len()
        )));
    }
    let est = PartitionEstimate::new(labels, file.method.unwrap_or(PartitionMethod::Dahl));
    if a.sampler.truncation.is_none() {
        cfg.truncation = Truncation::Auto;
    }
    let trace = run_conditional_chain(&data, &est, &cfg)?;
    let summary = cluster_summary(&trace, &est, true, &grid, a.bands)?;
    let meta = OutputMeta::new(cfg.seed, &cfg);
    write_trace(&a.out, &TraceFile::mixture(trace, &cfg))?;
    write_cluster_summary(&a.summary, &summary, &meta)?;
    for c in &summary.clusters {
        println!(
            "cluster {}: {} patients, disease rate {:.3} [{:.3}, {:.3}]",
            c.label, c.size, c.phi_mean, c.phi_interval.0, c.phi_interval.1
        );
    }
    Ok(())
}

fn print_report(report: &StudyReport) {
    for s in &report.summary {
        let mut line = format!("{:<16}", s.method);
        for (k, m) in &s.metrics {
            line.push_str(&format!(" {k}={:.4}", m.mean));
        }
        println!("{line}");
    }
    for f in &report.failures {
        eprintln!("replicate {} failed: {}", f.replicate, f.message);
    }
}

fn write_report(report: &StudyReport, seed: u64, config: &impl Serialize, out: &Path, json: Option<&Path>) -> Result<()> {
    let meta = OutputMeta::new(seed, config);
    write_study_csv(out, report, &meta)?;
    if let Some(j) = json {
        write_study_json(j, report, &meta)?;
    }
    print_report(report);
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    let sc = scenario_by_name(&a.scenario)?;
    ensure_parent(&a.out)?;
    if let Some(j) = &a.json {
        ensure_parent(j)?;
    }
    let config = StudyConfig {
        n_train: a.n_train,
        n_test: a.n_test,
        seed: a.sampler.seed,
        sampler: a.sampler.build()?,
        two_component: !a.no_two_component,
        partition_methods: a.methods.unwrap_or_else(|| PartitionMethod::ALL.to_vec()),
        refit: a.refit,
        select: SelectParams {
            height: a.select.height,
            k_max: a.select.kmax,
            k: None,
        },
        threads: a.threads,
    };
    let report = run_study(&sc, a.replicates, &config)?;
    write_report(&report, config.seed, &config, &a.out, a.json.as_deref())
}

fn cv(a: CvArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    if let Some(j) = &a.json {
        ensure_parent(j)?;
    }
    let sampler = a.sampler.build()?;
    let data = a.data.load()?;
    let fraction = if a.test_size >= 1.0 {
        a.test_size / data.len() as f64
    } else {
        a.test_size
    };
    let config = CvConfig {
        folds: a.folds,
        holdout_fraction: fraction,
        seed: a.sampler.seed,
        sampler,
        two_component: a.two_component,
        refit_methods: a.methods,
        select: SelectParams {
            height: a.select.height,
            k_max: a.select.kmax,
            k: None,
        },
        threads: a.threads,
    };
    let report = cross_validate(&data, &config)?;
    write_report(&report, config.seed, &config, &a.out, a.json.as_deref())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let cfg = a.sampler.build()?;
    ensure_parent(&a.out)?;
    let data = a.data.load()?;
    let trace = run_two_component(&data, &cfg)?;
    let nd = trace.draws.len().max(1) as f64;
    println!(
        "{} draws; prevalence {:.3}",
        trace.draws.len(),
        trace.draws.iter().map(|d| d.state.phi).sum::<f64>() / nd
    );
    write_trace(&a.out, &TraceFile::two_component(trace, &cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("10:12:1").unwrap(), vec![10.0, 11.0, 12.0]);
        assert_eq!(parse_grid("0:1:0.25").unwrap().len(), 5);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn truncation_flag() {
        assert_eq!(parse_truncation("auto"), Ok(Truncation::Auto));
        assert_eq!(parse_truncation("12"), Ok(Truncation::Fixed(12)));
        assert!(parse_truncation("0").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::InvalidData("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(
            exit_code(&Error::NotPositiveDefinite { pivot: 0, value: -1.0 }),
            EXIT_NUMERICAL
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_dispatch(["bnplc", "nonsense"]), EXIT_USAGE);
        assert_eq!(cli_dispatch(["bnplc", "--help"]), EXIT_OK);
    }
}
