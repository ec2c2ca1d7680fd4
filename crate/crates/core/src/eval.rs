//! Evaluation: SNR, systolic peak detection, heart rate, per-subject MAE,
//! grouping, Wilcoxon signed-rank tests and Bland–Altman agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::synth::ArtifactKind;

/// Finite stand-in for a perfect reconstruction.
pub const SNR_CAP_DB: f64 = 120.0;
pub const HR_MIN_BPM: f64 = 20.0;
pub const HR_MAX_BPM: f64 = 250.0;
/// Largest effective sample size for which exact Wilcoxon p-values are used.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    pub db: f64,
    /// Set when the error energy vanished and `db` is [`SNR_CAP_DB`].
    pub capped: bool,
}

/// `10 log10(Σ y² / Σ (ŷ - y)²)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<Snr> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let sig: f64 = reference.iter().map(|v| v * v).sum();
    if sig == 0.0 {
        return Err(Error::UndefinedReference);
    }
    let err: f64 = reference.iter().zip(estimate).map(|(a, b)| (b - a).powi(2)).sum();
    let db = 10.0 * (sig / err).log10();
    if db >= SNR_CAP_DB {
        Ok(Snr {
            db: SNR_CAP_DB,
            capped: true,
        })
    } else {
        Ok(Snr { db, capped: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Minimum prominence as a fraction of the 10th–90th percentile range.
    pub prominence_frac: f64,
    pub min_separation_s: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            prominence_frac: 0.3,
            min_separation_s: 0.3,
        }
    }
}

/// Linear-interpolated percentile of unsorted data, `q` in `[0, 100]`.
pub fn percentile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    percentile_sorted(&s, q)
}

fn percentile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Prominence of the strict local maximum at `i`: its height above the higher
/// of the two minima reached before climbing to a taller sample.
fn prominence(x: &[f64], i: usize) -> f64 {
    let h = x[i];
    let mut left_min = h;
    for &v in x[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Systolic peaks: strict local maxima with sufficient prominence, thinned
/// greedily by height to the minimum separation.
pub fn detect_peaks(x: &[f64], fs: f64, cfg: &PeakConfig) -> Vec<usize> {
    if x.len() < 3 {
        return Vec::new();
    }
    let spread = percentile(x, 90.0) - percentile(x, 10.0);
    let min_prom = cfg.prominence_frac * spread;
    let mut cands: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1])
        .filter(|&i| {
            let p = prominence(x, i);
            p >= min_prom && p > 0.0
        })
        .collect();
    cands.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let min_sep = cfg.min_separation_s * fs;
    let mut keep: Vec<usize> = Vec::new();
    for c in cands {
        if keep.iter().all(|&k| (c as f64 - k as f64).abs() >= min_sep) {
            keep.push(c);
        }
    }
    keep.sort_unstable();
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrWindow {
    pub start_s: f64,
    /// `None` when fewer than two peaks fall in the window or the rate is
    /// outside the physiological range.
    pub hr_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    pub window_s: f64,
    pub step_s: f64,
    pub windows: Vec<HrWindow>,
}

impl HrSeries {
    pub fn reliable(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().filter_map(|w| w.hr_bpm)
    }
}

/// `60 / mean(inter-peak interval)` over the peaks (sample indices).
pub fn hr_of_peaks(peaks: &[usize], fs: f64) -> Option<f64> {
    if peaks.len() < 2 {
        return None;
    }
    let span = (peaks[peaks.len() - 1] - peaks[0]) as f64 / fs;
    let hr = 60.0 * (peaks.len() - 1) as f64 / span;
    (hr > HR_MIN_BPM && hr < HR_MAX_BPM).then_some(hr)
}

/// Sliding-window heart rate over a signal of `len` samples.
pub fn hr_from_peaks(peaks: &[usize], fs: f64, len: usize, window_s: f64, step_s: f64) -> HrSeries {
    let win = (window_s * fs).round() as usize;
    let step = ((step_s * fs).round() as usize).max(1);
    let mut windows = Vec::new();
    let mut start = 0usize;
    while start + win <= len {
        let inside: Vec<usize> =
            peaks.iter().copied().filter(|&p| p >= start && p < start + win).collect();
        windows.push(HrWindow {
            start_s: start as f64 / fs,
            hr_bpm: hr_of_peaks(&inside, fs),
        });
        start += step;
    }
    HrSeries {
        window_s,
        step_s,
        windows,
    }
}

/// One window spanning the whole signal.
pub fn hr_single_window(peaks: &[usize], fs: f64, len: usize) -> HrSeries {
    let dur = len as f64 / fs;
    HrSeries {
        window_s: dur,
        step_s: dur,
        windows: vec![HrWindow {
            start_s: 0.0,
            hr_bpm: hr_of_peaks(peaks, fs),
        }],
    }
}

/// Mean absolute HR difference over aligned windows where both are reliable.
pub fn mae_hr(est: &HrSeries, reference: &HrSeries) -> Result<f64> {
    let pairs = aligned_pairs(est, reference);
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(pairs.iter().map(|(e, r)| (e - r).abs()).sum::<f64>() / pairs.len() as f64)
}

/// `(est, ref)` pairs of windows with equal starts and reliable rates.
pub fn aligned_pairs(est: &HrSeries, reference: &HrSeries) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut j = 0;
    for w in &est.windows {
        while j < reference.windows.len() && reference.windows[j].start_s < w.start_s - 1e-9 {
            j += 1;
        }
        if let Some(r) = reference.windows.get(j) {
            if (r.start_s - w.start_s).abs() <= 1e-9 {
                if let (Some(a), Some(b)) = (w.hr_bpm, r.hr_bpm) {
                    out.push((a, b));
                }
            }
        }
    }
    out
}

pub const DURATION_BINS: usize = 5;

/// Index of the 2-second duration bin `((2b, 2b + 2]`) holding `duration_s`.
pub fn duration_bin(duration_s: f64) -> usize {
    ((duration_s / 2.0).ceil() as isize - 1).clamp(0, DURATION_BINS as isize - 1) as usize
}

pub fn duration_bin_label(bin: usize) -> String {
    format!("({},{}]", 2 * bin, 2 * bin + 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    ArtifactKind,
    DurationBin,
    Activity,
}

/// Evaluation metadata and rates of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentHr {
    pub subject_id: String,
    pub kind: Option<ArtifactKind>,
    pub duration_s: Option<f64>,
    pub activity: Option<String>,
    pub est: HrSeries,
    pub reference: HrSeries,
}

impl SegmentHr {
    pub fn group_label(&self, g: Grouping) -> Option<String> {
        match g {
            Grouping::ArtifactKind => self.kind.map(|k| k.label().to_string()),
            Grouping::DurationBin => self.duration_s.map(|d| duration_bin_label(duration_bin(d))),
            Grouping::Activity => self.activity.clone(),
        }
    }
}

/// Group label → per-subject MAE values (subject id, bpm).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupedMae {
    pub groups: BTreeMap<String, Vec<(String, f64)>>,
}

/// Per subject and group, MAE over that subject's aligned reliable windows.
pub fn group_mae(segments: &[SegmentHr], grouping: Grouping) -> GroupedMae {
    let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    let mut skipped = 0usize;
    for s in segments {
        let Some(label) = s.group_label(grouping) else {
            skipped += 1;
            continue;
        };
        let entry = acc.entry(label).or_default().entry(s.subject_id.clone()).or_default();
        for (e, r) in aligned_pairs(&s.est, &s.reference) {
            entry.0 += (e - r).abs();
            entry.1 += 1;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} segments lack metadata for {grouping:?} grouping");
    }
    let mut out = GroupedMae::default();
    for (label, subjects) in acc {
        let vals: Vec<(String, f64)> = subjects
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(s, (sum, n))| (s, sum / n as f64))
            .collect();
        if vals.is_empty() {
            log::warn!("group {label} has no reliable windows, omitted");
            continue;
        }
        out.groups.insert(label, vals);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    ALess,
    /// `b` tends to be smaller than `a`.
    BLess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

impl WilcoxonResult {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// Nonzero differences with doubled average ranks of their magnitudes, so
/// tied ranks stay integral.
fn signed_doubled_ranks(a: &[f64], b: &[f64]) -> Result<Vec<(bool, u64)>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} values", a.len(), b.len())));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::UndefinedTest);
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut out = Vec::with_capacity(d.len());
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j + 1 < d.len() && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        // Average of ranks i+1..=j+1, doubled.
        let r2 = (i + 1 + j + 1) as u64;
        for v in &d[i..=j] {
            out.push((*v > 0.0, r2));
        }
        i = j + 1;
    }
    Ok(out)
}

/// Exact one-sided p-value from the null distribution of the signed-rank
/// statistic, computed by dynamic programming over the doubled ranks.
pub fn wilcoxon_exact(a: &[f64], b: &[f64], alt: Alternative) -> Result<WilcoxonResult> {
    let ranks = signed_doubled_ranks(a, b)?;
    let total: u64 = ranks.iter().map(|r| r.1).sum();
    let w2: u64 = ranks.iter().filter(|r| r.0).map(|r| r.1).sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &(_, r) in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks.len() as i32);
    let tail: f64 = match alt {
        Alternative::ALess => counts[..=w2 as usize].iter().sum(),
        Alternative::BLess => counts[w2 as usize..].iter().sum(),
    };
    Ok(WilcoxonResult {
        p_value: (tail / all).min(1.0),
        w_plus: w2 as f64 / 2.0,
        n: ranks.len(),
        exact: true,
    })
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal(a: &[f64], b: &[f64], alt: Alternative) -> Result<WilcoxonResult> {
    let ranks = signed_doubled_ranks(a, b)?;
    let n = ranks.len() as f64;
    let w = ranks.iter().filter(|r| r.0).map(|r| r.1 as f64 / 2.0).sum::<f64>();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let mut j = i;
        while j + 1 < ranks.len() && ranks[j + 1].1 == ranks[i].1 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Err(Error::UndefinedTest);
    }
    let sd = var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alt {
        Alternative::ALess => std.cdf((w - mean + 0.5) / sd),
        Alternative::BLess => 1.0 - std.cdf((w - mean - 0.5) / sd),
    };
    Ok(WilcoxonResult {
        p_value: p.clamp(0.0, 1.0),
        w_plus: w,
        n: ranks.len(),
        exact: false,
    })
}

/// Matched-pairs signed-rank test: exact for up to
/// [`WILCOXON_EXACT_MAX_N`] nonzero differences, normal approximation above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alt: Alternative) -> Result<WilcoxonResult> {
    let n = signed_doubled_ranks(a, b)?.len();
    if n <= WILCOXON_EXACT_MAX_N {
        wilcoxon_exact(a, b, alt)
    } else {
        wilcoxon_normal(a, b, alt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Least-squares line of difference on mean.
    pub slope: f64,
    pub intercept: f64,
    /// `(mean, difference)` per pair.
    pub points: Vec<(f64, f64)>,
}

/// Agreement of paired rates; differences are `reference - estimate`.
pub fn bland_altman(reference: &[f64], estimate: &[f64]) -> Result<BlandAltman> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "{} reference vs {} estimated values",
            reference.len(),
            estimate.len()
        )));
    }
    let n = reference.len();
    if n < 3 {
        return Err(Error::InsufficientData { need: 3, got: n });
    }
    let points: Vec<(f64, f64)> =
        reference.iter().zip(estimate).map(|(r, e)| ((r + e) / 2.0, r - e)).collect();
    let nf = n as f64;
    let mean_diff = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sd_diff =
        (points.iter().map(|p| (p.1 - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - mean_diff)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(BlandAltman {
        n,
        mean_diff,
        sd_diff,
        loa_low: mean_diff - 1.96 * sd_diff,
        loa_high: mean_diff + 1.96 * sd_diff,
        slope,
        intercept: mean_diff - slope * mx,
        points,
    })
}

/// Bland–Altman over aligned reliable windows of two series.
pub fn bland_altman_series(reference: &HrSeries, estimate: &HrSeries) -> Result<BlandAltman> {
    let (e, r): (Vec<f64>, Vec<f64>) = aligned_pairs(estimate, reference).into_iter().unzip();
    bland_altman(&r, &e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(BoxStats {
        n: s.len(),
        min: s[0],
        q1: percentile_sorted(&s, 25.0),
        median: percentile_sorted(&s, 50.0),
        q3: percentile_sorted(&s, 75.0),
        max: s[s.len() - 1],
    })
}

/// Mean and sample standard deviation (`n - 1`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
