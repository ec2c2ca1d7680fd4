//! Synthetic pulse waveforms and a probabilistic motion-artifact model used to
//! build paired clean/corrupted training corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{BandPassSpec, Preprocessor, Signal};

/// Systolic bump width as a fraction of the beat period.
const SYSTOLIC_WIDTH: f64 = 0.10;
const DIASTOLIC_WIDTH: f64 = 0.16;
const DIASTOLIC_RATIO: f64 = 0.35;
const DIASTOLIC_DELAY: f64 = 0.35;
/// Per-beat relative change of the inter-beat interval.
const IBI_STEP: f64 = 0.02;
/// Bound of the inter-beat interval around the nominal period.
const IBI_BOUND: f64 = 0.05;

pub const FIR_TAPS: usize = 129;
pub const ARTIFACT_BAND_HZ: (f64, f64) = (0.5, 18.0);
pub const TAPER_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    DeviceDisplacement,
    ForearmMotion,
    HandMotion,
    PoorContact,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::DeviceDisplacement,
        ArtifactKind::ForearmMotion,
        ArtifactKind::HandMotion,
        ArtifactKind::PoorContact,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ArtifactKind::DeviceDisplacement => "device_displacement",
            ArtifactKind::ForearmMotion => "forearm_motion",
            ArtifactKind::HandMotion => "hand_motion",
            ArtifactKind::PoorContact => "poor_contact",
        }
    }
}

impl std::fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One motion artifact: amplitude is relative to the clean-signal RMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    pub amplitude: f64,
    /// dB per Hz.
    pub spectral_slope: f64,
    pub duration_s: f64,
    pub start_s: f64,
}

impl ArtifactSpec {
    pub fn validate(&self, segment_s: f64) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Domain(format!("artifact amplitude {}", self.amplitude)));
        }
        if !(self.duration_s > 0.0 && self.start_s >= 0.0)
            || self.start_s + self.duration_s > segment_s + 1e-9
        {
            return Err(Error::Domain(format!(
                "artifact window [{}, {}] outside segment of {segment_s} s",
                self.start_s,
                self.start_s + self.duration_s
            )));
        }
        Ok(())
    }
}

/// Log-normal amplitude and normal slope distribution of one artifact kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindParams {
    pub amp_mu: f64,
    pub amp_sigma: f64,
    pub slope_mu: f64,
    pub slope_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactParamTable {
    pub device_displacement: KindParams,
    pub forearm_motion: KindParams,
    pub hand_motion: KindParams,
    pub poor_contact: KindParams,
    pub duration_range_s: (f64, f64),
}

impl Default for ArtifactParamTable {
    fn default() -> Self {
        let kp = |amp_mu, amp_sigma| KindParams {
            amp_mu,
            amp_sigma,
            slope_mu: -1.5,
            slope_sigma: 0.5,
        };
        Self {
            device_displacement: kp(0.8, 0.5),
            forearm_motion: kp(0.3, 0.5),
            hand_motion: kp(0.0, 0.5),
            poor_contact: kp(0.5, 0.6),
            duration_range_s: (1.0, 10.0),
        }
    }
}

impl ArtifactParamTable {
    pub fn get(&self, kind: ArtifactKind) -> &KindParams {
        match kind {
            ArtifactKind::DeviceDisplacement => &self.device_displacement,
            ArtifactKind::ForearmMotion => &self.forearm_motion,
            ArtifactKind::HandMotion => &self.hand_motion,
            ArtifactKind::PoorContact => &self.poor_contact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in ArtifactKind::ALL {
            let p = self.get(k);
            if !(p.amp_sigma > 0.0 && p.slope_sigma > 0.0) {
                return Err(Error::Config(format!("{k}: distribution widths must be positive")));
            }
        }
        let (lo, hi) = self.duration_range_s;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("bad duration range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// A clean pulse segment and the times of its beats (seconds).
pub fn synth_clean_ppg(
    duration_s: f64,
    fs: f64,
    hr_bpm: f64,
    seed: u64,
) -> Result<(Signal, Vec<f64>)> {
    if !(30.0..=200.0).contains(&hr_bpm) {
        return Err(Error::Domain(format!("heart rate {hr_bpm} bpm outside [30, 200]")));
    }
    if !(duration_s > 0.0 && fs > 0.0) {
        return Err(Error::Domain("duration and fs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * fs).round() as usize;
    let period = 60.0 / hr_bpm;
    let mut x = vec![0.0; n];
    let mut beats = Vec::new();
    let mut ibi = period;
    // Start two periods early so the first visible beats carry full tails.
    let mut tb = rng.random_range(0.0..period) - 2.0 * period;
    while tb < duration_s + period {
        if tb >= 0.0 && tb < duration_s {
            beats.push(tb);
        }
        let (s1, s2) = (SYSTOLIC_WIDTH * ibi, DIASTOLIC_WIDTH * ibi);
        let t2 = tb + DIASTOLIC_DELAY * ibi;
        let lo = (((tb - 5.0 * s1) * fs).floor().max(0.0)) as usize;
        let hi = (((t2 + 5.0 * s2) * fs).ceil().max(0.0) as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / fs;
            *v += (-(t - tb).powi(2) / (2.0 * s1 * s1)).exp()
                + DIASTOLIC_RATIO * (-(t - t2).powi(2) / (2.0 * s2 * s2)).exp();
        }
        ibi = (ibi * (1.0 + rng.random_range(-IBI_STEP..IBI_STEP)))
            .clamp((1.0 - IBI_BOUND) * period, (1.0 + IBI_BOUND) * period);
        tb += ibi;
    }
    Ok((Signal::new(x, fs)?, beats))
}

pub fn sample_artifact(
    kind: ArtifactKind,
    table: &ArtifactParamTable,
    segment_s: f64,
    seed: u64,
) -> ArtifactSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = table.get(kind);
    let (lo, hi) = table.duration_range_s;
    let hi = hi.min(segment_s);
    let duration_s = if hi > lo { rng.random_range(lo..hi) } else { hi };
    let start_s = rng.random_range(0.0..=(segment_s - duration_s));
    let amplitude = LogNormal::new(p.amp_mu, p.amp_sigma).expect("sigma > 0").sample(&mut rng);
    let spectral_slope =
        Normal::new(p.slope_mu, p.slope_sigma).expect("sigma > 0").sample(&mut rng);
    ArtifactSpec {
        kind,
        amplitude,
        spectral_slope,
        duration_s,
        start_s,
    }
}

/// Linear-phase FIR by frequency sampling: `20 log10 |H(f)| = slope (f - 0.5)`
/// on the artifact band, zero response elsewhere.
pub fn artifact_fir(slope_db_per_hz: f64, fs: f64) -> Vec<f64> {
    let n = FIR_TAPS;
    let half = n / 2;
    let (lo, hi) = ARTIFACT_BAND_HZ;
    let amp: Vec<f64> = (0..=half)
        .map(|k| {
            let f = k as f64 * fs / n as f64;
            if (lo..=hi).contains(&f) {
                10f64.powf(slope_db_per_hz * (f - lo) / 20.0)
            } else {
                0.0
            }
        })
        .collect();
    (0..n)
        .map(|i| {
            let c = i as f64 - half as f64;
            let s: f64 = (1..=half)
                .map(|k| {
                    amp[k] * (2.0 * std::f64::consts::PI * k as f64 * c / n as f64).cos()
                })
                .sum();
            (amp[0] + 2.0 * s) / n as f64
        })
        .collect()
}

/// Half-open sample range covered by the artifact.
pub fn support(spec: &ArtifactSpec, fs: f64, n: usize) -> (usize, usize) {
    let i0 = ((spec.start_s * fs).round() as usize).min(n);
    let i1 = (((spec.start_s + spec.duration_s) * fs).round() as usize).clamp(i0, n);
    (i0, i1)
}

/// Filtered white noise scaled to RMS `amplitude · reference_rms` over its
/// support, with raised-cosine on/off tapers and zeros elsewhere.
pub fn render_artifact(
    spec: &ArtifactSpec,
    fs: f64,
    n: usize,
    reference_rms: f64,
    seed: u64,
) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = artifact_fir(spec.spectral_slope, fs);
    let noise: Vec<f64> = (0..n + h.len() - 1).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; n];
    let (i0, i1) = support(spec, fs, n);
    if i1 == i0 {
        return Signal::new(out, fs);
    }
    for (t, o) in out.iter_mut().enumerate().take(i1).skip(i0) {
        *o = h.iter().rev().zip(&noise[t..t + h.len()]).map(|(a, b)| a * b).sum();
    }
    let rms = (out[i0..i1].iter().map(|v| v * v).sum::<f64>() / (i1 - i0) as f64).sqrt();
    let gain = if rms > 0.0 { spec.amplitude * reference_rms / rms } else { 0.0 };
    let nt = ((TAPER_S * fs).round() as usize).min((i1 - i0) / 2);
    for (j, v) in out[i0..i1].iter_mut().enumerate() {
        let edge = j.min(i1 - i0 - 1 - j);
        let w = if edge < nt {
            0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / nt as f64).cos()
        } else {
            1.0
        };
        *v *= gain * w;
    }
    Signal::new(out, fs)
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// A paired clean/corrupted segment, both preprocessed.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub clean: Signal,
    pub noisy: Signal,
    pub artifact: Option<ArtifactSpec>,
    pub ground_truth_hr: Option<f64>,
    pub activity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub segments_per_subject: usize,
    pub fs: f64,
    pub segment_s: f64,
    /// Discarded lead-in that absorbs the band-pass transient.
    pub preroll_s: f64,
    /// Per-subject baseline heart rate range (bpm).
    pub hr_range: (f64, f64),
    /// Per-segment jitter of the subject heart rate (relative).
    pub hr_jitter: f64,
    pub table: ArtifactParamTable,
    pub band: BandPassSpec,
    pub zero_phase: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            segments_per_subject: 10,
            fs: 125.0,
            segment_s: 10.0,
            preroll_s: 4.0,
            hr_range: (50.0, 110.0),
            hr_jitter: 0.05,
            table: ArtifactParamTable::default(),
            band: BandPassSpec::default(),
            zero_phase: false,
            seed: 0,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, subject: u64, index: u64, stream: u64) -> u64 {
    mix_seed(mix_seed(mix_seed(mix_seed(master) ^ subject) ^ index) ^ stream)
}

pub fn subject_kind(subject: usize) -> ArtifactKind {
    ArtifactKind::ALL[subject % 4]
}

pub fn subject_name(subject: usize) -> String {
    format!("S{subject:04}")
}

/// One corrupted segment per (subject, index); subjects cycle through the four
/// artifact kinds.
pub fn make_dataset(cfg: &SynthConfig) -> Result<Vec<SegmentRecord>> {
    if cfg.n_subjects == 0 || cfg.n_subjects % 4 != 0 {
        return Err(Error::Config(format!(
            "n_subjects must be a positive multiple of 4, got {}",
            cfg.n_subjects
        )));
    }
    if cfg.segments_per_subject == 0 {
        return Err(Error::Config("segments_per_subject must be at least 1".into()));
    }
    cfg.table.validate()?;
    let pre = Preprocessor::new(&cfg.band, cfg.fs, cfg.zero_phase)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_subjects)
        .flat_map(|s| (0..cfg.segments_per_subject).map(move |i| (s, i)))
        .collect();
    jobs.par_iter()
        .map(|&(s, i)| make_segment(cfg, &pre, s, i))
        .collect()
}

fn make_segment(
    cfg: &SynthConfig,
    pre: &Preprocessor,
    subject: usize,
    index: usize,
) -> Result<SegmentRecord> {
    let seed = |stream| derive_seed(cfg.seed, subject as u64, index as u64, stream);
    let mut hr_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, subject as u64, u64::MAX, 0));
    let (lo, hi) = cfg.hr_range;
    let base_hr = if hi > lo { hr_rng.random_range(lo..hi) } else { lo };
    let mut rng = ChaCha8Rng::seed_from_u64(seed(0));
    let hr = (base_hr * (1.0 + rng.random_range(-cfg.hr_jitter..=cfg.hr_jitter))).clamp(30.0, 200.0);

    let total_s = cfg.segment_s + cfg.preroll_s;
    let (raw, beats) = synth_clean_ppg(total_s, cfg.fs, hr, seed(1))?;
    let skip = (cfg.preroll_s * cfg.fs).round() as usize;
    let n = raw.len() - skip;
    let seg_beats: Vec<f64> = beats.iter().filter(|&&b| b >= cfg.preroll_s).copied().collect();
    let gt_hr = (seg_beats.len() >= 2).then(|| {
        60.0 * (seg_beats.len() - 1) as f64 / (seg_beats[seg_beats.len() - 1] - seg_beats[0])
    });

    let spec = sample_artifact(subject_kind(subject), &cfg.table, cfg.segment_s, seed(2));
    let ref_rms = rms(&raw.samples()[skip..]);
    let art = render_artifact(&spec, cfg.fs, n, ref_rms, seed(3))?;
    let mut corrupted = raw.samples().to_vec();
    for (c, a) in corrupted[skip..].iter_mut().zip(art.samples()) {
        *c += a;
    }
    let corrupted = Signal::new(corrupted, cfg.fs)?;
    Ok(SegmentRecord {
        subject_id: subject_name(subject),
        clean: pre.apply_skipping(&raw, skip).signal,
        noisy: pre.apply_skipping(&corrupted, skip).signal,
        artifact: Some(spec),
        ground_truth_hr: gt_hr,
        activity: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_ppg_beat_count_and_spacing() {
        let (x, beats) = synth_clean_ppg(10.0, 125.0, 60.0, 4).unwrap();
        assert_eq!(x.len(), 1250);
        assert!((9..=11).contains(&beats.len()));
        let mean = (beats[beats.len() - 1] - beats[0]) / (beats.len() - 1) as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }

    #[test]
    fn clean_ppg_rejects_out_of_range_rate() {
        assert!(synth_clean_ppg(10.0, 125.0, 25.0, 0).is_err());
        assert!(synth_clean_ppg(10.0, 125.0, 201.0, 0).is_err());
    }

    #[test]
    fn fir_is_symmetric_with_band_shape() {
        let h = artifact_fir(-1.5, 125.0);
        assert_eq!(h.len(), FIR_TAPS);
        for i in 0..FIR_TAPS {
            assert!((h[i] - h[FIR_TAPS - 1 - i]).abs() < 1e-15);
        }
        // Sampled response at a grid frequency inside the band.
        let k = 10usize;
        let f = k as f64 * 125.0 / FIR_TAPS as f64;
        let resp: f64 = h
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v * (2.0 * std::f64::consts::PI * k as f64 * (i as f64 - 64.0) / FIR_TAPS as f64)
                    .cos()
            })
            .sum();
        assert!((20.0 * resp.log10() - (-1.5 * (f - 0.5))).abs() < 1e-9);
    }

    #[test]
    fn artifact_is_zero_outside_support() {
        let spec = ArtifactSpec {
            kind: ArtifactKind::HandMotion,
            amplitude: 1.0,
            spectral_slope: -1.0,
            duration_s: 3.0,
            start_s: 2.5,
        };
        let a = render_artifact(&spec, 125.0, 1250, 1.0, 9).unwrap();
        let (i0, i1) = support(&spec, 125.0, 1250);
        assert!(a.samples()[..i0].iter().all(|v| *v == 0.0));
        assert!(a.samples()[i1..].iter().all(|v| *v == 0.0));
        assert!(a.samples()[i0 + 20..i1 - 20].iter().all(|v| *v != 0.0));
    }

    #[test]
    fn dataset_balance_and_shape() {
        let cfg = SynthConfig {
            n_subjects: 8,
            segments_per_subject: 2,
            ..Default::default()
        };
        let d = make_dataset(&cfg).unwrap();
        assert_eq!(d.len(), 16);
        for kind in ArtifactKind::ALL {
            let subjects: std::collections::BTreeSet<_> = d
                .iter()
                .filter(|r| r.artifact.unwrap().kind == kind)
                .map(|r| r.subject_id.clone())
                .collect();
            assert_eq!(subjects.len(), 2);
        }
        for r in &d {
            assert_eq!(r.clean.len(), 1250);
            assert_eq!(r.noisy.len(), 1250);
            assert_eq!(r.clean.fs(), 125.0);
        }
        assert!(make_dataset(&SynthConfig {
            n_subjects: 6,
            ..Default::default()
        })
        .is_err());
    }
}
