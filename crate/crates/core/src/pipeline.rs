//! End-to-end plumbing: dataset files, streaming inference, experiment
//! configuration, corpus evaluation and run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csc::Dictionary;
use crate::error::{Error, Result};
use crate::eval::{
    self, aligned_pairs, bland_altman, detect_peaks, hr_from_peaks, hr_single_window, mean_std,
    snr_db, Alternative, BlandAltman, Grouping, HrSeries, PeakConfig, SegmentHr,
};
use crate::signal::{normalize_01, Signal};
use crate::synth::{make_dataset, ArtifactKind, ArtifactSpec, SegmentRecord, SynthConfig};
use crate::training::{split_by_subject, train, EpochRecord, SplitSpec, TrainConfig};
use crate::unfolded::{init_ista, init_random, UnfoldedModel};

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub subject_id: String,
    pub fs: f64,
    /// Clean (reference) samples.
    pub samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_noisy: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_denoised: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<ArtifactSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_hr: Option<f64>,
}

impl DatasetRecord {
    fn check(&self, line: usize) -> Result<()> {
        let bad = |msg: String| Error::Schema { line, msg };
        if self.subject_id.is_empty() {
            return Err(bad("empty subject_id".into()));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(bad(format!("invalid fs {}", self.fs)));
        }
        if self.samples.is_empty() {
            return Err(bad("empty samples".into()));
        }
        for (name, s) in [
            ("samples", Some(&self.samples)),
            ("samples_noisy", self.samples_noisy.as_ref()),
            ("samples_denoised", self.samples_denoised.as_ref()),
        ] {
            let Some(s) = s else { continue };
            if s.len() != self.samples.len() {
                return Err(bad(format!(
                    "{name} has {} samples, expected {}",
                    s.len(),
                    self.samples.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("{name} contains non-finite values")));
            }
        }
        Ok(())
    }

    /// The signal fed to the denoiser: the noisy samples when present.
    pub fn input_samples(&self) -> &[f64] {
        self.samples_noisy.as_deref().unwrap_or(&self.samples)
    }

    pub fn from_segment(r: &SegmentRecord) -> Self {
        Self {
            subject_id: r.subject_id.clone(),
            fs: r.clean.fs(),
            samples: r.clean.samples().to_vec(),
            samples_noisy: Some(r.noisy.samples().to_vec()),
            samples_denoised: None,
            artifact: r.artifact,
            activity: r.activity.clone(),
            ground_truth_hr: r.ground_truth_hr,
        }
    }

    pub fn to_segment(&self) -> Result<SegmentRecord> {
        Ok(SegmentRecord {
            subject_id: self.subject_id.clone(),
            clean: Signal::new(self.samples.clone(), self.fs)?,
            noisy: Signal::new(self.input_samples().to_vec(), self.fs)?,
            artifact: self.artifact,
            ground_truth_hr: self.ground_truth_hr,
            activity: self.activity.clone(),
        })
    }
}

/// Parses newline-delimited records; blank lines are skipped and the sampling
/// rate must be uniform.
pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut out: Vec<DatasetRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.check(i + 1)?;
        if let Some(first) = out.first() {
            if first.fs != rec.fs {
                return Err(Error::FsMismatch {
                    expected: first.fs,
                    found: rec.fs,
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    parse_dataset(BufReader::new(std::fs::File::open(path)?))
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[DatasetRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    pub signal: Signal,
    /// Set when the input was shorter than one window and was padded.
    pub padded: bool,
}

/// Mirror extension (without repeating the edge sample) to `len` samples.
fn reflect_pad(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![x[0]; len];
    }
    let period = 2 * (n - 1);
    (0..len)
        .map(|i| {
            let k = i % period;
            x[if k < n { k } else { period - k }]
        })
        .collect()
}

/// Window start offsets; the last window is aligned to the signal end.
pub fn window_starts(len: usize, win: usize, step: usize) -> Vec<usize> {
    if len < win {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=len - win).step_by(step.max(1)).collect();
    if *starts.last().unwrap() + win < len {
        starts.push(len - win);
    }
    starts
}

/// Sliding-window inference with overlap averaging. Each window is min-max
/// normalized, denoised, mapped back through the inverse of its normalization
/// and accumulated; every output sample is the mean over covering windows.
pub fn denoise_stream(
    model: &UnfoldedModel,
    x: &Signal,
    window_s: f64,
    step_s: f64,
) -> Result<StreamOutput> {
    let fs = x.fs();
    let win = (window_s * fs).round() as usize;
    let step = (step_s * fs).round() as usize;
    if win == 0 || step == 0 {
        return Err(Error::Config("window and step must span at least one sample".into()));
    }
    if model.n_train() != 0 && model.n_train() != win {
        return Err(Error::FsMismatch {
            expected: model.n_train() as f64 / window_s,
            found: fs,
        });
    }
    let padded = x.len() < win;
    let src: Vec<f64> = if padded {
        reflect_pad(x.samples(), win)
    } else {
        x.samples().to_vec()
    };
    let starts = window_starts(src.len(), win, step);
    let outputs: Vec<Result<Vec<f64>>> = starts
        .par_iter()
        .map(|&s| {
            let w = Signal::new(src[s..s + win].to_vec(), fs)?;
            let norm = normalize_01(&w);
            let y = model.denoise(norm.signal.samples())?;
            Ok(norm.denormalize(&y))
        })
        .collect();
    let mut acc = vec![0.0; src.len()];
    let mut count = vec![0u32; src.len()];
    for (&s, out) in starts.iter().zip(outputs) {
        for (i, v) in out?.into_iter().enumerate() {
            acc[s + i] += v;
            count[s + i] += 1;
        }
    }
    let mut y: Vec<f64> = acc.iter().zip(&count).map(|(a, c)| a / *c as f64).collect();
    y.truncate(x.len());
    Ok(StreamOutput {
        signal: Signal::new(y, fs)?,
        padded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Random,
    /// ISTA-equivalent weights around a random unit-norm dictionary.
    Ista,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub m: usize,
    pub l: usize,
    pub k: usize,
    pub init: InitScheme,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            m: 32,
            l: 50,
            k: 10,
            init: InitScheme::Random,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn build(&self, lambda: f64, n: usize) -> Result<UnfoldedModel> {
        if self.m == 0 || self.l == 0 || self.k == 0 {
            return Err(Error::Config("m, l and k must be positive".into()));
        }
        match self.init {
            InitScheme::Random => init_random(self.m, self.l, self.k, self.seed),
            InitScheme::Ista => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                let d = Dictionary::random(self.m, self.l, &mut rng)?;
                Ok(init_ista(&d, lambda, n, self.k)?.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub peaks: PeakConfig,
    /// Sliding HR window; `None` evaluates each record as one window.
    pub hr_window_s: Option<f64>,
    pub hr_step_s: f64,
    pub stream_window_s: f64,
    pub stream_step_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            peaks: PeakConfig::default(),
            hr_window_s: None,
            hr_step_s: 2.0,
            stream_window_s: 10.0,
            stream_step_s: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed; when set it overrides every component seed.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Propagates the master seed, if any, into every component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(s) = c.seed {
            c.synth.seed = s;
            c.model.seed = s;
            c.train.seed = s;
            c.split.seed = s;
        }
        c
    }
}

/// Metrics of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub subject_id: String,
    pub kind: Option<ArtifactKind>,
    pub duration_s: Option<f64>,
    pub activity: Option<String>,
    pub snr_pre_db: Option<f64>,
    pub snr_post_db: Option<f64>,
    pub snr_post_capped: bool,
    pub hr_ref: HrSeries,
    pub hr_pre: Option<HrSeries>,
    pub hr_post: Option<HrSeries>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Self {
            n: values.len(),
            mean,
            std,
        })
    }
}

/// Per-subject values of one metric within one group, before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub metric: String,
    pub grouping: String,
    pub group: String,
    pub subjects: Vec<String>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    /// One-sided p-value for improvement after denoising.
    pub p_improved: Option<f64>,
    pub p_worsened: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_records: usize,
    pub n_subjects: usize,
    pub snr_pre: Option<Summary>,
    pub snr_post: Option<Summary>,
    pub snr_post_capped: usize,
    /// Per-subject MAE of the heart rate, bpm.
    pub mae_pre: Option<Summary>,
    pub mae_post: Option<Summary>,
    pub comparisons: Vec<GroupComparison>,
    pub bland_altman_pre: Option<BlandAltman>,
    pub bland_altman_post: Option<BlandAltman>,
    pub records: Vec<RecordMetrics>,
}

fn pre_stage(m: &RecordMetrics) -> Option<&HrSeries> {
    m.hr_pre.as_ref()
}

fn post_stage(m: &RecordMetrics) -> Option<&HrSeries> {
    m.hr_post.as_ref()
}

fn hr_series(x: &[f64], fs: f64, cfg: &EvalConfig) -> HrSeries {
    let peaks = detect_peaks(x, fs, &cfg.peaks);
    match cfg.hr_window_s {
        Some(w) => hr_from_peaks(&peaks, fs, x.len(), w, cfg.hr_step_s),
        None => hr_single_window(&peaks, fs, x.len()),
    }
}

pub fn record_metrics(r: &DatasetRecord, cfg: &EvalConfig) -> Result<RecordMetrics> {
    let y = &r.samples;
    let snr = |x: &[f64]| snr_db(y, x);
    let pre = r.samples_noisy.as_deref().map(snr).transpose()?;
    let post = r.samples_denoised.as_deref().map(snr).transpose()?;
    Ok(RecordMetrics {
        subject_id: r.subject_id.clone(),
        kind: r.artifact.map(|a| a.kind),
        duration_s: r.artifact.map(|a| a.duration_s),
        activity: r.activity.clone(),
        snr_pre_db: pre.map(|s| s.db),
        snr_post_db: post.map(|s| s.db),
        snr_post_capped: post.is_some_and(|s| s.capped),
        hr_ref: hr_series(y, r.fs, cfg),
        hr_pre: r.samples_noisy.as_deref().map(|x| hr_series(x, r.fs, cfg)),
        hr_post: r.samples_denoised.as_deref().map(|x| hr_series(x, r.fs, cfg)),
    })
}

fn segment_hr(m: &RecordMetrics, est: &HrSeries) -> SegmentHr {
    SegmentHr {
        subject_id: m.subject_id.clone(),
        kind: m.kind,
        duration_s: m.duration_s,
        activity: m.activity.clone(),
        est: est.clone(),
        reference: m.hr_ref.clone(),
    }
}

/// Per-subject mean of a per-record value, keyed by group label.
fn subject_means(
    metrics: &[RecordMetrics],
    label: impl Fn(&RecordMetrics) -> Option<String>,
    value: impl Fn(&RecordMetrics) -> Option<f64>,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for m in metrics {
        if let (Some(g), Some(v)) = (label(m), value(m)) {
            let e = acc.entry(g).or_default().entry(m.subject_id.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, s)| (g, s.into_iter().map(|(k, (v, n))| (k, v / n as f64)).collect()))
        .collect()
}

fn grouped_mae(
    metrics: &[RecordMetrics],
    grouping: Option<Grouping>,
    stage: impl Fn(&RecordMetrics) -> Option<&HrSeries>,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let segs: Vec<SegmentHr> = metrics
        .iter()
        .filter_map(|m| stage(m).map(|e| segment_hr(m, e)))
        .collect();
    let g = match grouping {
        Some(g) => eval::group_mae(&segs, g),
        None => {
            let mut all = segs.clone();
            for s in &mut all {
                s.activity = Some("all".into());
            }
            eval::group_mae(&all, Grouping::Activity)
        }
    };
    g.groups.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
}

fn compare(
    metric: &str,
    grouping: &str,
    pre: &BTreeMap<String, BTreeMap<String, f64>>,
    post: &BTreeMap<String, BTreeMap<String, f64>>,
    higher_is_better: bool,
) -> Vec<GroupComparison> {
    let mut out = Vec::new();
    for (group, pre_s) in pre {
        let Some(post_s) = post.get(group) else { continue };
        let subjects: Vec<String> =
            pre_s.keys().filter(|s| post_s.contains_key(*s)).cloned().collect();
        if subjects.is_empty() {
            continue;
        }
        let a: Vec<f64> = subjects.iter().map(|s| post_s[s]).collect();
        let b: Vec<f64> = subjects.iter().map(|s| pre_s[s]).collect();
        let (better, worse) = if higher_is_better {
            (Alternative::BLess, Alternative::ALess)
        } else {
            (Alternative::ALess, Alternative::BLess)
        };
        let p_improved = eval::wilcoxon_signed_rank(&a, &b, better).ok().map(|r| r.p_value);
        let p_worsened = eval::wilcoxon_signed_rank(&a, &b, worse).ok().map(|r| r.p_value);
        let best = match (p_improved, p_worsened) {
            (Some(x), Some(y)) => x.min(y),
            _ => 1.0,
        };
        out.push(GroupComparison {
            metric: metric.into(),
            grouping: grouping.into(),
            group: group.clone(),
            subjects,
            pre: b,
            post: a,
            p_improved,
            p_worsened,
            stars: eval::stars(best).into(),
        });
    }
    out
}

fn pooled_bland_altman(
    metrics: &[RecordMetrics],
    stage: impl Fn(&RecordMetrics) -> Option<&HrSeries>,
) -> Option<BlandAltman> {
    let mut r = Vec::new();
    let mut e = Vec::new();
    for m in metrics {
        if let Some(s) = stage(m) {
            for (est, reference) in aligned_pairs(s, &m.hr_ref) {
                e.push(est);
                r.push(reference);
            }
        }
    }
    bland_altman(&r, &e).ok()
}

/// Corpus evaluation of records carrying clean, noisy and/or denoised samples.
pub fn evaluate_records(records: &[DatasetRecord], cfg: &EvalConfig) -> Result<EvalReport> {
    let metrics: Vec<RecordMetrics> = records
        .par_iter()
        .map(|r| record_metrics(r, cfg))
        .collect::<Result<_>>()?;
    let subjects: BTreeSet<&str> = metrics.iter().map(|m| m.subject_id.as_str()).collect();

    let pre_snr: Vec<f64> = metrics.iter().filter_map(|m| m.snr_pre_db).collect();
    let post_snr: Vec<f64> = metrics.iter().filter_map(|m| m.snr_post_db).collect();

    let flat = |g: &BTreeMap<String, BTreeMap<String, f64>>| -> Vec<f64> {
        g.values().flat_map(|s| s.values().copied()).collect()
    };
    let mae_pre_all = grouped_mae(&metrics, None, pre_stage);
    let mae_post_all = grouped_mae(&metrics, None, post_stage);

    let mut comparisons = Vec::new();
    let groupings: [(&str, Option<Grouping>); 4] = [
        ("all", None),
        ("artifact_kind", Some(Grouping::ArtifactKind)),
        ("duration_bin", Some(Grouping::DurationBin)),
        ("activity", Some(Grouping::Activity)),
    ];
    for (name, g) in groupings {
        let label = |m: &RecordMetrics| -> Option<String> {
            match g {
                None => Some("all".into()),
                Some(Grouping::ArtifactKind) => m.kind.map(|k| k.label().into()),
                Some(Grouping::DurationBin) => {
                    m.duration_s.map(|d| eval::duration_bin_label(eval::duration_bin(d)))
                }
                Some(Grouping::Activity) => m.activity.clone(),
            }
        };
        let sp = subject_means(&metrics, label, |m| m.snr_pre_db);
        let sq = subject_means(&metrics, label, |m| m.snr_post_db);
        comparisons.extend(compare("snr_db", name, &sp, &sq, true));
        let mp = grouped_mae(&metrics, g, pre_stage);
        let mq = grouped_mae(&metrics, g, post_stage);
        comparisons.extend(compare("mae_hr_bpm", name, &mp, &mq, false));
    }

    Ok(EvalReport {
        n_records: records.len(),
        n_subjects: subjects.len(),
        snr_pre: Summary::of(&pre_snr),
        snr_post: Summary::of(&post_snr),
        snr_post_capped: metrics.iter().filter(|m| m.snr_post_capped).count(),
        mae_pre: Summary::of(&flat(&mae_pre_all)),
        mae_post: Summary::of(&flat(&mae_post_all)),
        comparisons,
        bland_altman_pre: pooled_bland_altman(&metrics, pre_stage),
        bland_altman_post: pooled_bland_altman(&metrics, post_stage),
        records: metrics,
    })
}

/// Denoises every record's input with [`denoise_stream`].
pub fn denoise_records(
    model: &UnfoldedModel,
    records: &[DatasetRecord],
    cfg: &EvalConfig,
) -> Result<Vec<DatasetRecord>> {
    records
        .iter()
        .map(|r| {
            let x = Signal::new(r.input_samples().to_vec(), r.fs)?;
            let out = denoise_stream(model, &x, cfg.stream_window_s, cfg.stream_step_s)?;
            if out.padded {
                log::warn!("record of subject {} padded to one window", r.subject_id);
            }
            let mut d = r.clone();
            d.samples_denoised = Some(out.signal.into_samples());
            Ok(d)
        })
        .collect()
}

/// Provenance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub checkpoint: Option<String>,
    /// File name → SHA-256 of its contents.
    pub dataset_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub metrics: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        let c = config.resolved();
        let seeds = BTreeMap::from([
            ("synth".to_string(), c.synth.seed),
            ("model".to_string(), c.model.seed),
            ("train".to_string(), c.train.seed),
            ("split".to_string(), c.split.seed),
        ]);
        Self {
            command: command.into(),
            config: config.clone(),
            seeds,
            checkpoint: None,
            dataset_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            metrics: None,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))?)
    }
}

/// Outcome of an in-memory synth → train → denoise → eval run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub model: UnfoldedModel,
    pub history: Vec<EpochRecord>,
    pub test_records: Vec<DatasetRecord>,
    pub report: EvalReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let c = cfg.resolved();
    let data = make_dataset(&c.synth)?;
    let (tr, va, te) = split_by_subject(&data, |r| r.subject_id.as_str(), &c.split)?;
    let n = tr[0].noisy.len();
    let init = c.model.build(c.train.lambda, n)?;
    let out = train(init, &tr, &va, &c.train)?;
    let test: Vec<DatasetRecord> = te.iter().map(DatasetRecord::from_segment).collect();
    let test_records = denoise_records(&out.model, &test, &c.eval)?;
    let report = evaluate_records(&test_records, &c.eval)?;
    Ok(ExperimentOutput {
        model: out.model,
        history: out.history,
        test_records,
        report,
    })
}
