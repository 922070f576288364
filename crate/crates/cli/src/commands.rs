use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use causal_patterns::clustering::{
    clusterwise_gc, hard_assign, kmeans, misallocation_rate, ClusterAssignment, GcReport,
};
use causal_patterns::io::{format_f64, write_matrix_csv};
use causal_patterns::mppcca::{self, e_step_with_log_likelihood, FitConfig, MppccaModel, Responsibilities};
use causal_patterns::pcca::Ridge;
use causal_patterns::synthgen::{
    gen_exp1, gen_exp2, gen_motion_pair, Exp1Params, Exp2Params, LabeledSeries, MotionParams,
};
use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{pick, FileConfig};
use crate::exit::{CliError, CliResult, InputContext};
use crate::pipeline::{prepare, prepare_with, read_input, InputArgs, PipelineDocument, Prepared};
use crate::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Three consecutive regimes of 1000 samples with different causal strength.
    Exp1,
    /// A 399-sample causal window inside 3000 samples of independent noise.
    Exp2,
    /// Two 21-channel marker recordings (`a_*` follows `b_*` in alternate episodes).
    Motion,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Generator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of frames for the motion recording [default: 36000].
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Directory for blocks.csv and preprocess.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of mixture components K [default: 3].
    #[arg(short = 'k', long)]
    pub clusters: Option<usize>,
    /// Latent dimension of each component [default: 1].
    #[arg(long)]
    pub dt: Option<usize>,
    /// Ridge added to each component covariance [default: 1e-6].
    #[arg(long)]
    pub eta_c: Option<f64>,
    /// Ridge for the regression-weight solve [default: 1e-6].
    #[arg(long)]
    pub eta_wx: Option<f64>,
    /// Relative log-likelihood change treated as converged [default: 1e-6].
    #[arg(long)]
    pub tol: Option<f64>,
    /// EM iterations per restart [default: 200].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Independent k-means-initialized restarts [default: 10].
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Base seed for the restarts [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Constrain each noise covariance to be block diagonal.
    #[arg(long)]
    pub block_diagonal: bool,
    /// Directory for the fit artifacts.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Recording the model was fitted on (or another with the same layout).
    #[arg(long)]
    pub input: PathBuf,
    /// Fitted model.
    #[arg(long)]
    pub model: PathBuf,
    /// Stored preprocessing [default: preprocess.json next to the model].
    #[arg(long)]
    pub preprocess: Option<PathBuf>,
    /// Integer ground-truth column of the input [default: truth_label].
    #[arg(long)]
    pub truth_column: Option<String>,
    /// Seed of the k-means baseline [default: 0].
    #[arg(long)]
    pub kmeans_seed: Option<u64>,
    /// Directory for report.json and samples.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["labels", "resp", "truth_column"]))]
pub struct GcArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Stored preprocessing to re-apply instead of the embedding options.
    #[arg(long)]
    pub preprocess: Option<PathBuf>,
    /// CSV with one integer label per regression sample.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Column of --labels holding the labels.
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Responsibilities CSV (as written by fit); samples go to their argmax.
    #[arg(long)]
    pub resp: Option<PathBuf>,
    /// Integer column of the input to use as labels.
    #[arg(long)]
    pub truth_column: Option<String>,
    /// Directory for gc.csv and gc.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value).context("serializing JSON")?)
}

pub fn generate(args: &GenerateArgs, file: &FileConfig) -> CliResult<Status> {
    let seed = pick(args.seed, file.seed, 0);
    let mut buf = Vec::new();
    let summary = match args.experiment {
        Experiment::Exp1 | Experiment::Exp2 => {
            let series: LabeledSeries = if args.experiment == Experiment::Exp1 {
                gen_exp1(&Exp1Params::default(), seed)?
            } else {
                gen_exp2(&Exp2Params::default(), seed)?
            };
            series.write_csv(&mut buf)?;
            let segments: Vec<String> = series
                .segments()
                .iter()
                .map(|(label, start, end)| format!("label {label}: [{start}, {end})"))
                .collect();
            format!("T = {}; {}", series.len(), segments.join(", "))
        }
        Experiment::Motion => {
            let params = MotionParams {
                frames: args.frames.unwrap_or(MotionParams::default().frames),
                ..MotionParams::default()
            };
            let (a, b, coupled) = gen_motion_pair(&params, seed).input_context(|| "motion parameters")?;
            let mut headers = vec!["t".to_string()];
            headers.extend((0..params.channels).map(|c| format!("a_{c}")));
            headers.extend((0..params.channels).map(|c| format!("b_{c}")));
            headers.push("truth_label".into());
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&headers).context("writing CSV")?;
            for (t, label) in coupled.iter().enumerate() {
                let mut record = vec![t.to_string()];
                record.extend(a.row(t).iter().chain(b.row(t).iter()).map(|&v| format_f64(v)));
                record.push(label.to_string());
                w.write_record(&record).context("writing CSV")?;
            }
            w.flush()?;
            drop(w);
            format!(
                "T = {}; {} channels per person; coupled episodes of {} frames",
                params.frames, params.channels, params.episode
            )
        }
    };
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(&buf)?;
            w.flush()?;
            println!("{summary}");
        }
        None => {
            std::io::stdout().write_all(&buf)?;
            eprintln!("{summary}");
        }
    }
    Ok(Status::Done)
}

fn block_headers(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |j| format!("{prefix}_{j}"))
}

pub fn preprocess(args: &PreprocessArgs, file: &FileConfig) -> CliResult<Status> {
    let prepared = prepare(&args.input, file)?;
    let data = &prepared.dataset;
    ensure_dir(&args.out_dir)?;

    let mut headers = vec!["t".to_string()];
    headers.extend(block_headers("x", data.dx()));
    headers.extend(block_headers("y1", data.d1()));
    headers.extend(block_headers("y2", data.d2()));
    let rows = DMatrix::from_fn(data.len(), 1, |n, _| prepared.input_row(n) as f64);
    let all = causal_patterns::linalg::hstack(&[&rows, data.x(), data.y1(), data.y2()]);
    write_matrix_csv(create(&args.out_dir.join("blocks.csv"))?, &headers, &all)?;
    write_text(&args.out_dir.join("preprocess.json"), &to_json(&prepared.document)?)?;
    println!(
        "{} samples; dx = {}, d1 = {}, d2 = {}",
        data.len(),
        data.dx(),
        data.d1(),
        data.d2()
    );
    Ok(Status::Done)
}

pub fn fit(args: &FitArgs, file: &FileConfig) -> CliResult<Status> {
    let defaults = FitConfig::default();
    let config = FitConfig {
        eta_c: pick(args.eta_c, file.eta_c, defaults.eta_c),
        eta_wx: pick(args.eta_wx, file.eta_wx, defaults.eta_wx),
        tol: pick(args.tol, file.tol, defaults.tol),
        max_iters: pick(args.max_iters, file.max_iters, defaults.max_iters),
        restarts: pick(args.restarts, file.restarts, defaults.restarts),
        seed: pick(args.seed, file.seed, defaults.seed),
        enforce_block_diagonal: args.block_diagonal || file.block_diagonal.unwrap_or(false),
        ..defaults
    };
    if !(config.eta_c >= 0.0 && config.eta_wx >= 0.0 && config.tol >= 0.0) {
        return Err(CliError::input(anyhow::anyhow!(
            "eta_c, eta_wx and tol must be nonnegative"
        )));
    }
    let k = pick(args.clusters, file.clusters, 3);
    let dt = pick(args.dt, file.dt, 1);

    let prepared = prepare(&args.input, file)?;
    let result = mppcca::fit(&prepared.dataset, k, dt, &config)?;

    ensure_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("model.json"), &result.model.to_json()?)?;
    write_text(&args.out_dir.join("preprocess.json"), &to_json(&prepared.document)?)?;
    let resp_headers: Vec<String> = block_headers("r", k).collect();
    write_matrix_csv(
        create(&args.out_dir.join("resp.csv"))?,
        &resp_headers,
        result.responsibilities.matrix(),
    )?;
    let mut trace = csv::Writer::from_writer(create(&args.out_dir.join("trace.csv"))?);
    trace
        .write_record(["iteration", "log_likelihood"])
        .context("writing trace")?;
    for (i, ll) in result.trace.log_likelihood_per_iter.iter().enumerate() {
        trace
            .write_record([(i + 1).to_string(), format_f64(*ll)])
            .context("writing trace")?;
    }
    trace.flush()?;

    let t = &result.trace;
    println!(
        "{} after {} iterations; log-likelihood {}; best restart {} of {}",
        if t.converged { "converged" } else { "not converged" },
        t.n_iters,
        t.log_likelihood_per_iter.last().copied().unwrap_or(f64::NAN),
        t.best_restart,
        config.restarts
    );
    if !t.monotonicity_violations.is_empty() {
        log::warn!("log-likelihood decreased at iterations {:?}", t.monotonicity_violations);
    }
    Ok(if t.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

#[derive(Debug, Serialize)]
struct Misallocation {
    mppcca: f64,
    kmeans: f64,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    n_samples: usize,
    k: usize,
    log_likelihood: f64,
    misallocation: Option<Misallocation>,
    mppcca_gc: GcReport,
    kmeans_gc: GcReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_gc: Option<GcReport>,
}

fn load_model(path: &Path) -> CliResult<MppccaModel> {
    let text = std::fs::read_to_string(path).input_context(|| format!("reading {}", path.display()))?;
    MppccaModel::from_json(&text).input_context(|| format!("parsing {}", path.display()))
}

pub fn eval(args: &EvalArgs, file: &FileConfig) -> CliResult<Status> {
    let model = load_model(&args.model)?;
    let doc_path = args
        .preprocess
        .clone()
        .unwrap_or_else(|| args.model.parent().unwrap_or(Path::new(".")).join("preprocess.json"));
    let prepared = prepare_with(&args.input, PipelineDocument::load(&doc_path)?)?;
    let data = &prepared.dataset;
    let truth_column = args
        .truth_column
        .clone()
        .or(file.truth_column.clone())
        .unwrap_or("truth_label".into());
    let truth = if prepared.table.headers.contains(&truth_column) {
        Some(ClusterAssignment::from_labels(prepared.aligned_labels(&truth_column)?))
    } else if args.truth_column.is_some() {
        return Err(CliError::input(anyhow::anyhow!("column '{truth_column}' not found")));
    } else {
        None
    };

    let (resp, log_likelihood) = e_step_with_log_likelihood(&model, data)?;
    let est = hard_assign(&resp);
    let baseline = kmeans(&data.joint(), model.k(), pick(args.kmeans_seed, file.kmeans_seed, 0))?;
    let misallocation = match &truth {
        Some(truth) => Some(Misallocation {
            mppcca: misallocation_rate(&est, truth)?,
            kmeans: misallocation_rate(&baseline, truth)?,
        }),
        None => None,
    };
    let report = EvalReport {
        n_samples: data.len(),
        k: model.k(),
        log_likelihood,
        misallocation,
        mppcca_gc: clusterwise_gc(data, &est, Ridge::default())?,
        kmeans_gc: clusterwise_gc(data, &baseline, Ridge::default())?,
        truth_gc: truth
            .as_ref()
            .map(|t| clusterwise_gc(data, t, Ridge::default()))
            .transpose()?,
    };

    ensure_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("report.json"), &to_json(&report)?)?;
    write_samples(
        &args.out_dir.join("samples.csv"),
        &prepared,
        truth.as_ref(),
        &est,
        &baseline,
    )?;

    if let Some(m) = &report.misallocation {
        println!("misallocation: mppcca {:.4}, k-means {:.4}", m.mppcca, m.kmeans);
    }
    let gcs: Vec<String> = report
        .mppcca_gc
        .per_cluster
        .iter()
        .map(|c| c.gc_index.map_or("n/a".into(), |v| format!("{v:.4e}")))
        .collect();
    println!(
        "cluster GC: [{}]; whole series {:.4e}",
        gcs.join(", "),
        report.mppcca_gc.whole_series_gc
    );
    Ok(Status::Done)
}

/// One row per regression sample for plotting.
fn write_samples(
    path: &Path,
    prepared: &Prepared,
    truth: Option<&ClusterAssignment>,
    est: &ClusterAssignment,
    baseline: &ClusterAssignment,
) -> CliResult<()> {
    let doc = &prepared.document;
    let scalar = doc.cause_columns.len() == 1 && doc.effect_columns.len() == 1;
    let mut headers = vec!["index".to_string(), "t".to_string()];
    if scalar {
        headers.extend(["x".to_string(), "y".to_string()]);
    }
    if truth.is_some() {
        headers.push("truth".into());
    }
    headers.extend(["label".to_string(), "kmeans_label".to_string()]);
    let (cause, effect) = if scalar {
        (
            prepared.table.column(&doc.cause_columns[0])?,
            prepared.table.column(&doc.effect_columns[0])?,
        )
    } else {
        (Vec::new(), Vec::new())
    };

    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&headers).context("writing samples")?;
    for n in 0..prepared.dataset.len() {
        let t = prepared.input_row(n);
        let mut record = vec![n.to_string(), t.to_string()];
        if scalar {
            record.push(format_f64(cause[t]));
            record.push(format_f64(effect[t]));
        }
        if let Some(truth) = truth {
            record.push(truth.labels()[n].to_string());
        }
        record.push(est.labels()[n].to_string());
        record.push(baseline.labels()[n].to_string());
        w.write_record(&record).context("writing samples")?;
    }
    w.flush()?;
    Ok(())
}

pub fn gc(args: &GcArgs, file: &FileConfig) -> CliResult<Status> {
    let prepared = match &args.preprocess {
        Some(path) => prepare_with(&args.input.input, PipelineDocument::load(path)?)?,
        None => prepare(&args.input, file)?,
    };
    let n = prepared.dataset.len();
    let labels: Vec<usize> = if let Some(path) = &args.labels {
        read_input(path)?
            .label_column(&args.label_column)
            .input_context(|| format!("reading labels from {}", path.display()))?
    } else if let Some(path) = &args.resp {
        let table = read_input(path)?;
        let resp = Responsibilities::new(table.values).input_context(|| format!("validating {}", path.display()))?;
        hard_assign(&resp).labels().to_vec()
    } else {
        let column = args
            .truth_column
            .as_deref()
            .expect("argument group requires a label source");
        prepared.aligned_labels(column)?
    };
    if labels.len() != n {
        return Err(CliError::input(anyhow::anyhow!(
            "{} labels for {n} regression samples",
            labels.len()
        )));
    }
    let report = clusterwise_gc(
        &prepared.dataset,
        &ClusterAssignment::from_labels(labels),
        Ridge::default(),
    )?;

    ensure_dir(&args.out_dir)?;
    report.write_csv(create(&args.out_dir.join("gc.csv"))?)?;
    write_text(&args.out_dir.join("gc.json"), &report.to_json()?)?;
    for c in &report.per_cluster {
        match (c.gc_index, &c.flag) {
            (Some(v), _) => println!("cluster {}: n = {}, GC = {v:.4e}", c.cluster_id, c.n_samples),
            (None, flag) => println!(
                "cluster {}: n = {}, no estimate ({})",
                c.cluster_id,
                c.n_samples,
                flag.as_deref().unwrap_or("")
            ),
        }
    }
    println!("whole series: GC = {:.4e}", report.whole_series_gc);
    Ok(Status::Done)
}
