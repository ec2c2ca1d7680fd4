//! `pulse-csc` command line: synthetic data, training, streaming inference,
//! evaluation and plot-ready reports.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pulse_csc::checkpoint;
use pulse_csc::eval::box_stats;
use pulse_csc::pipeline::{
    denoise_records, evaluate_records, read_dataset, sha256_file, write_dataset, DatasetRecord,
    EvalReport, ExperimentConfig, RunManifest,
};
use pulse_csc::synth::{make_dataset, SegmentRecord};
use pulse_csc::training::{split_by_subject, train, write_history_csv};
use pulse_csc::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "pulse-csc", version, about = "Unfolded convolutional sparse coding for PPG denoising")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML), or a run manifest (JSON) to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Forward-backward band-pass filtering for synthesized data.
    #[arg(long, global = true)]
    zero_phase: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PULSE_CSC_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired clean/corrupted dataset.
    Synth,
    /// Train on a dataset; writes checkpoint, history and the held-out split.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Sliding-window denoising of every record in a dataset.
    Denoise {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// SNR and heart-rate metrics of a denoised dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
    },
    /// Boxplot and Bland–Altman tables from eval metrics.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),
    #[error("output {path} failed to parse back: {msg}")]
    ParseBack { path: PathBuf, msg: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                Error::Io(_) => 1,
                Error::Config(_) => 2,
                Error::Schema { .. } | Error::Json(_) => 3,
                Error::Checkpoint(_) => 4,
                Error::FsMismatch { .. } => 5,
                _ => 6,
            },
            CliError::MissingCheckpoint(_) => 4,
            CliError::ParseBack { .. } => 7,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(&cli.common)?;
    std::fs::create_dir_all(&cli.common.out).map_err(Error::from)?;
    let out = cli.common.out.as_path();
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, out),
        Command::Train { data } => cmd_train(&cfg, data, out),
        Command::Denoise { model, data } => cmd_denoise(&cfg, model, data, out),
        Command::Eval { data } => cmd_eval(&cfg, data, out),
        Command::Report { metrics } => cmd_report(metrics, out),
    }
}

/// Flags override the config file, which overrides built-in defaults.
fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(Error::from)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<RunManifest>(&text).map_err(Error::from)?.config
            } else {
                ExperimentConfig::from_toml_str(&text)?
            }
        }
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.zero_phase {
        cfg.synth.zero_phase = true;
    }
    Ok(cfg)
}

fn parse_back_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::ParseBack {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::from)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    std::io::Write::flush(&mut w).map_err(Error::from)?;
    Ok(())
}

fn check_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_back_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_back_err(path, e))
}

fn check_dataset(path: &Path, expected: usize) -> CliResult<()> {
    let back = read_dataset(path).map_err(|e| parse_back_err(path, e))?;
    if back.len() != expected {
        return Err(parse_back_err(path, format!("{} records, expected {expected}", back.len())));
    }
    Ok(())
}

/// Reads every row and checks the header.
fn check_csv(path: &Path, header: &[&str]) -> CliResult<usize> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| parse_back_err(path, e))?;
    let found: Vec<String> =
        rd.headers().map_err(|e| parse_back_err(path, e))?.iter().map(String::from).collect();
    if found != header {
        return Err(parse_back_err(path, format!("header {found:?}")));
    }
    let mut rows = 0;
    for r in rd.records() {
        r.map_err(|e| parse_back_err(path, e))?;
        rows += 1;
    }
    Ok(rows)
}

fn finish_manifest(mut m: RunManifest, out: &Path, outputs: &[&Path]) -> CliResult<()> {
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    let path = out.join("manifest.json");
    m.write(&path)?;
    check_json::<RunManifest>(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn hash_input(m: &mut RunManifest, path: &Path) -> CliResult<()> {
    m.dataset_hashes.insert(path.display().to_string(), sha256_file(path)?);
    Ok(())
}

fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let c = cfg.resolved();
    let records: Vec<DatasetRecord> =
        make_dataset(&c.synth)?.iter().map(DatasetRecord::from_segment).collect();
    let path = out.join("dataset.jsonl");
    write_dataset(&path, &records)?;
    check_dataset(&path, records.len())?;
    let mut m = RunManifest::new("synth", cfg);
    hash_input(&mut m, &path)?;
    finish_manifest(m, out, &[&path])
}

fn to_segments(records: &[DatasetRecord]) -> CliResult<Vec<SegmentRecord>> {
    Ok(records.iter().map(|r| r.to_segment()).collect::<pulse_csc::Result<_>>()?)
}

fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> CliResult<()> {
    let c = cfg.resolved();
    let records = read_dataset(data)?;
    let (tr, va, te) = split_by_subject(&records, |r| r.subject_id.as_str(), &c.split)?;
    let n = tr[0].samples.len();
    if let Some(r) = tr.iter().chain(&va).find(|r| r.samples.len() != n) {
        return Err(Error::Config(format!(
            "training records must share one length: {} vs {n} samples (subject {})",
            r.samples.len(),
            r.subject_id
        ))
        .into());
    }
    let init = c.model.build(c.train.lambda, n)?;
    let outcome = train(init, &to_segments(&tr)?, &to_segments(&va)?, &c.train)?;

    let ckpt = out.join("model.ckpt");
    checkpoint::save(&outcome.model, &ckpt)?;
    if checkpoint::load(&ckpt).map_err(|e| parse_back_err(&ckpt, e))? != outcome.model {
        return Err(parse_back_err(&ckpt, "reloaded weights differ"));
    }
    let hist = out.join("history.csv");
    write_history_csv(&outcome.history, File::create(&hist).map_err(Error::from)?)?;
    let rows = check_csv(&hist, &["epoch", "train_loss", "val_loss", "sparsity", "wall_ms"])?;
    if rows != outcome.history.len() {
        return Err(parse_back_err(&hist, format!("{rows} rows")));
    }
    let test = out.join("test.jsonl");
    write_dataset(&test, &te)?;
    check_dataset(&test, te.len())?;

    let mut m = RunManifest::new("train", cfg);
    hash_input(&mut m, data)?;
    m.checkpoint = Some(ckpt.display().to_string());
    let best = &outcome.history[outcome.best_epoch - 1];
    m.metrics = Some(serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
        "best_val_loss": best.val_loss,
        "train_records": tr.len(),
        "val_records": va.len(),
        "test_records": te.len(),
    }));
    finish_manifest(m, out, &[&ckpt, &hist, &test])
}

fn cmd_denoise(cfg: &ExperimentConfig, model: &Path, data: &Path, out: &Path) -> CliResult<()> {
    if !model.exists() {
        return Err(CliError::MissingCheckpoint(model.to_path_buf()));
    }
    let net = checkpoint::load(model)?;
    let records = read_dataset(data)?;
    let denoised = denoise_records(&net, &records, &cfg.eval)?;
    let path = out.join("denoised.jsonl");
    write_dataset(&path, &denoised)?;
    check_dataset(&path, denoised.len())?;
    let mut m = RunManifest::new("denoise", cfg);
    hash_input(&mut m, data)?;
    m.checkpoint = Some(model.display().to_string());
    finish_manifest(m, out, &[&path])
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    metric: &'a str,
    stage: &'a str,
    n: usize,
    mean: f64,
    std: f64,
}

const SUMMARY_HEADER: [&str; 5] = ["metric", "stage", "n", "mean", "std"];

fn cmd_eval(cfg: &ExperimentConfig, data: &Path, out: &Path) -> CliResult<()> {
    let records = read_dataset(data)?;
    let report = evaluate_records(&records, &cfg.eval)?;
    let metrics = out.join("metrics.json");
    write_json(&metrics, &report)?;
    if check_json::<EvalReport>(&metrics)? != report {
        return Err(parse_back_err(&metrics, "reloaded metrics differ"));
    }

    let summary = out.join("summary.csv");
    let mut w = csv_writer(&summary, &SUMMARY_HEADER)?;
    let mut rows = 0;
    for (metric, stage, s) in [
        ("snr_db", "pre", &report.snr_pre),
        ("snr_db", "post", &report.snr_post),
        ("mae_hr_bpm", "pre", &report.mae_pre),
        ("mae_hr_bpm", "post", &report.mae_post),
    ] {
        if let Some(s) = s {
            csv_row(&mut w, SummaryRow { metric, stage, n: s.n, mean: s.mean, std: s.std })?;
            rows += 1;
        }
    }
    w.flush().map_err(Error::from)?;
    drop(w);
    if check_csv(&summary, &SUMMARY_HEADER)? != rows {
        return Err(parse_back_err(&summary, "row count"));
    }
    for (label, s) in [("SNR pre", &report.snr_pre), ("SNR post", &report.snr_post)] {
        if let Some(s) = s {
            log::info!("{label}: {:.2} ± {:.2} dB (n={})", s.mean, s.std, s.n);
        }
    }

    let mut m = RunManifest::new("eval", cfg);
    hash_input(&mut m, data)?;
    m.metrics = Some(serde_json::json!({
        "snr_pre": report.snr_pre,
        "snr_post": report.snr_post,
        "mae_pre": report.mae_pre,
        "mae_post": report.mae_post,
    }));
    finish_manifest(m, out, &[&metrics, &summary])
}

#[derive(Serialize)]
struct BoxRow<'a> {
    metric: &'a str,
    grouping: &'a str,
    group: &'a str,
    stage: &'a str,
    n: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    p_improved: Option<f64>,
    p_worsened: Option<f64>,
    stars: &'a str,
}

const BOX_HEADER: [&str; 13] = [
    "metric", "grouping", "group", "stage", "n", "min", "q1", "median", "q3", "max",
    "p_improved", "p_worsened", "stars",
];

#[derive(Serialize)]
struct PointRow<'a> {
    stage: &'a str,
    mean_bpm: f64,
    diff_bpm: f64,
}

const POINT_HEADER: [&str; 3] = ["stage", "mean_bpm", "diff_bpm"];

#[derive(Serialize)]
struct LineRow<'a> {
    stage: &'a str,
    n: usize,
    mean_diff: f64,
    sd_diff: f64,
    loa_low: f64,
    loa_high: f64,
    slope: f64,
    intercept: f64,
}

const LINE_HEADER: [&str; 8] =
    ["stage", "n", "mean_diff", "sd_diff", "loa_low", "loa_high", "slope", "intercept"];

/// Writer with the header already in place, so empty tables still parse.
fn csv_writer(path: &Path, header: &[&str]) -> CliResult<csv::Writer<File>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Core(Error::Io(e.into())))?;
    w.write_record(header).map_err(|e| CliError::Core(Error::Io(e.into())))?;
    Ok(w)
}

fn csv_row<T: Serialize>(w: &mut csv::Writer<File>, row: T) -> CliResult<()> {
    w.serialize(row).map_err(|e| CliError::Core(Error::Io(e.into())))
}

fn cmd_report(metrics: &Path, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(metrics).map_err(Error::from)?;
    let report: EvalReport = serde_json::from_str(&text).map_err(Error::from)?;

    let boxes = out.join("boxplot.csv");
    let mut w = csv_writer(&boxes, &BOX_HEADER)?;
    let mut n_box = 0;
    for c in &report.comparisons {
        for (stage, values) in [("pre", &c.pre), ("post", &c.post)] {
            let Some(b) = box_stats(values) else { continue };
            csv_row(
                &mut w,
                BoxRow {
                    metric: &c.metric,
                    grouping: &c.grouping,
                    group: &c.group,
                    stage,
                    n: b.n,
                    min: b.min,
                    q1: b.q1,
                    median: b.median,
                    q3: b.q3,
                    max: b.max,
                    p_improved: c.p_improved,
                    p_worsened: c.p_worsened,
                    stars: &c.stars,
                },
            )?;
            n_box += 1;
        }
    }
    w.flush().map_err(Error::from)?;
    drop(w);

    let points = out.join("bland_altman_points.csv");
    let lines = out.join("bland_altman_lines.csv");
    let mut pw = csv_writer(&points, &POINT_HEADER)?;
    let mut lw = csv_writer(&lines, &LINE_HEADER)?;
    let (mut n_points, mut n_lines) = (0, 0);
    for (stage, ba) in [("pre", &report.bland_altman_pre), ("post", &report.bland_altman_post)] {
        let Some(ba) = ba else { continue };
        for &(mean_bpm, diff_bpm) in &ba.points {
            csv_row(&mut pw, PointRow { stage, mean_bpm, diff_bpm })?;
            n_points += 1;
        }
        csv_row(
            &mut lw,
            LineRow {
                stage,
                n: ba.n,
                mean_diff: ba.mean_diff,
                sd_diff: ba.sd_diff,
                loa_low: ba.loa_low,
                loa_high: ba.loa_high,
                slope: ba.slope,
                intercept: ba.intercept,
            },
        )?;
        n_lines += 1;
    }
    pw.flush().map_err(Error::from)?;
    lw.flush().map_err(Error::from)?;
    drop((pw, lw));

    for (path, header, rows) in [
        (&boxes, &BOX_HEADER[..], n_box),
        (&points, &POINT_HEADER[..], n_points),
        (&lines, &LINE_HEADER[..], n_lines),
    ] {
        if rows == 0 {
            log::warn!("{} has no rows", path.display());
        }
        if check_csv(path, header)? != rows {
            return Err(parse_back_err(path, "row count"));
        }
        log::info!("wrote {} ({rows} rows)", path.display());
    }
    Ok(())
}
