//! Signal container and the preprocessing chain: band-pass filtering,
//! rational resampling and min-max amplitude normalization.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled real-valued sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    fs: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSignal(format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Copy of the samples in `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Signal {
        Signal {
            samples: self.samples[start..end].to_vec(),
            fs: self.fs,
        }
    }
}

/// Chebyshev type-II band-pass parameters.
///
/// `order` is the order of the low-pass prototype; the band-pass realization
/// has twice as many poles. `low_hz`/`high_hz` are the -3 dB passband edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandPassSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub stop_atten_db: f64,
}

impl Default for BandPassSpec {
    fn default() -> Self {
        Self {
            order: 4,
            low_hz: 0.5,
            high_hz: 18.0,
            stop_atten_db: 40.0,
        }
    }
}

impl BandPassSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Error::InvalidSpec(format!(
                "order must be even and positive, got {}",
                self.order
            )));
        }
        if !(self.stop_atten_db > 0.0 && self.stop_atten_db.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "stopband attenuation must be positive, got {}",
                self.stop_atten_db
            )));
        }
        let nyquist = fs / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::InvalidSpec(format!(
                "band edges must satisfy 0 < {} < {} < {nyquist} (Nyquist)",
                self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Both poles strictly inside the unit circle (Jury conditions).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }
}

/// Cascade of second-order sections applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
}

impl BiquadCascade {
    pub fn identity() -> Self {
        Self {
            sections: vec![Biquad::IDENTITY],
        }
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// Complex frequency response at `freq_hz` for sampling rate `fs`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(freq_hz, fs).norm().log10()
    }

    fn run(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut s1, mut s2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + s1;
                s1 = s.b1 * input - s.a1 * y + s2;
                s2 = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }
}

/// Zeros, poles and gain of an analog or digital filter.
struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

fn cheby2_prototype(order: usize, stop_atten_db: f64) -> Zpk {
    let n = order as f64;
    let eps = 1.0 / (10f64.powf(0.1 * stop_atten_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;

    let ms: Vec<i64> = if order % 2 == 1 {
        (-(order as i64) + 1..0)
            .step_by(2)
            .chain((2..order as i64).step_by(2))
            .collect()
    } else {
        (-(order as i64) + 1..order as i64).step_by(2).collect()
    };
    let zeros: Vec<Complex64> = ms
        .iter()
        .map(|&m| Complex64::new(0.0, 1.0 / (m as f64 * PI / (2.0 * n)).sin()))
        .collect();

    let poles: Vec<Complex64> = (-(order as i64) + 1..order as i64)
        .step_by(2)
        .map(|m| {
            let p = -Complex64::from_polar(1.0, PI * m as f64 / (2.0 * n));
            let p = Complex64::new(mu.sinh() * p.re, mu.cosh() * p.im);
            1.0 / p
        })
        .collect();

    let num: Complex64 = poles.iter().map(|p| -p).product();
    let den: Complex64 = zeros.iter().map(|z| -z).product();
    let gain = (num / den).re;

    // Rescale so the -3 dB point sits at 1 rad/s instead of the stopband edge.
    let w3 = 1.0 / ((1.0 / eps).acosh() / n).cosh();
    let scale = 1.0 / w3;
    let degree = poles.len() as i32 - zeros.len() as i32;
    Zpk {
        zeros: zeros.into_iter().map(|z| z * scale).collect(),
        poles: poles.into_iter().map(|p| p * scale).collect(),
        gain: gain * scale.powi(degree),
    }
}

fn lowpass_to_bandpass(proto: Zpk, center: f64, bandwidth: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let split = |roots: &[Complex64]| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(2 * roots.len());
        for r in roots {
            let half = r * bandwidth / 2.0;
            let disc = (half * half - center * center).sqrt();
            out.push(half + disc);
            out.push(half - disc);
        }
        out
    };
    let mut zeros = split(&proto.zeros);
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    Zpk {
        zeros,
        poles: split(&proto.poles),
        gain: proto.gain * bandwidth.powi(degree as i32),
    }
}

fn bilinear(analog: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = analog.poles.len() - analog.zeros.len();
    let map = |r: &Complex64| (fs2 + r) / (fs2 - r);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    let num: Complex64 = analog.zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = analog.poles.iter().map(|p| fs2 - p).product();
    Zpk {
        zeros,
        poles: analog.poles.iter().map(map).collect(),
        gain: analog.gain * (num / den).re,
    }
}

/// Quadratic factors `1 + c1 x + c2 x^2` (in z^-1) from a root set closed
/// under conjugation. Each factor carries a representative root for pairing.
fn quadratic_factors(roots: &[Complex64]) -> Result<Vec<([f64; 2], Complex64)>> {
    const TOL: f64 = 1e-9;
    let mut complex: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > TOL).collect();
    let mut reals: Vec<f64> = roots.iter().filter(|r| r.im.abs() <= TOL).map(|r| r.re).collect();
    let negatives = roots.iter().filter(|r| r.im < -TOL).count();
    if negatives != complex.len() {
        return Err(Error::DesignFailure("roots are not closed under conjugation".into()));
    }
    complex.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    reals.sort_by(|a, b| b.abs().total_cmp(&a.abs()));

    let mut out: Vec<([f64; 2], Complex64)> = complex
        .into_iter()
        .map(|r| ([-2.0 * r.re, r.norm_sqr()], r))
        .collect();
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => out.push(([-(a + b), a * b], Complex64::new(*a, 0.0))),
            [a] => out.push(([-a, 0.0], Complex64::new(*a, 0.0))),
            _ => unreachable!(),
        }
    }
    Ok(out)
}

fn zpk_to_sections(digital: &Zpk, ref_omega: f64) -> Result<BiquadCascade> {
    let pole_factors = quadratic_factors(&digital.poles)?;
    let mut zero_factors = quadratic_factors(&digital.zeros)?;
    if pole_factors.len() != zero_factors.len() {
        return Err(Error::DesignFailure("pole and zero section counts differ".into()));
    }

    // Poles closest to the unit circle first, each matched to the nearest zero pair.
    let mut sections = Vec::with_capacity(pole_factors.len());
    for (a, p) in pole_factors {
        let (idx, _) = zero_factors
            .iter()
            .enumerate()
            .map(|(i, (_, z))| (i, (z - p).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("zero factors remain");
        let (b, _) = zero_factors.swap_remove(idx);
        let mut s = Biquad {
            b0: 1.0,
            b1: b[0],
            b2: b[1],
            a1: a[0],
            a2: a[1],
        };
        let g = s.response(ref_omega).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::DesignFailure("section has zero gain at band center".into()));
        }
        s.b0 /= g;
        s.b1 /= g;
        s.b2 /= g;
        sections.push(s);
    }

    let e = Complex64::from_polar(1.0, ref_omega);
    let num: Complex64 = digital.zeros.iter().map(|z| e - z).product();
    let den: Complex64 = digital.poles.iter().map(|p| e - p).product();
    let target = digital.gain * num / den;
    let cascade = BiquadCascade { sections };
    let current = cascade
        .sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(ref_omega));
    let correction = (target / current).re;
    let mut cascade = cascade;
    let first = &mut cascade.sections[0];
    first.b0 *= correction;
    first.b1 *= correction;
    first.b2 *= correction;
    Ok(cascade)
}

/// Chebyshev type-II band-pass as a cascade of biquads.
///
/// The analog prototype is rescaled so that `low_hz` and `high_hz` are the
/// -3 dB edges, band-transformed around the prewarped edges and discretized
/// with the bilinear transform. Stopband ripple peaks at `-stop_atten_db`.
pub fn design_cheby2_bandpass(spec: &BandPassSpec, fs: f64) -> Result<BiquadCascade> {
    spec.validate(fs)?;
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
    let proto = cheby2_prototype(spec.order, spec.stop_atten_db);
    let analog = lowpass_to_bandpass(proto, (wl * wh).sqrt(), wh - wl);
    let digital = bilinear(analog, fs);
    if digital.poles.iter().any(|p| !(p.norm() < 1.0)) {
        return Err(Error::DesignFailure("pole on or outside the unit circle".into()));
    }
    let center_hz = (spec.low_hz * spec.high_hz).sqrt();
    let cascade = zpk_to_sections(&digital, 2.0 * PI * center_hz / fs)?;
    let finite = cascade
        .sections
        .iter()
        .all(|s| [s.b0, s.b1, s.b2, s.a1, s.a2].iter().all(|c| c.is_finite()));
    if !finite || !cascade.is_stable() {
        return Err(Error::DesignFailure("unstable or non-finite sections".into()));
    }
    Ok(cascade)
}

/// Single causal pass, direct-form II transposed per section.
pub fn filter_signal(x: &Signal, cascade: &BiquadCascade) -> Signal {
    let mut out = x.samples.clone();
    cascade.run(&mut out);
    Signal {
        samples: out,
        fs: x.fs,
    }
}

/// Forward-backward filtering: zero phase, squared magnitude.
pub fn filter_zero_phase(x: &Signal, cascade: &BiquadCascade) -> Signal {
    let mut out = x.samples.clone();
    cascade.run(&mut out);
    out.reverse();
    cascade.run(&mut out);
    out.reverse();
    Signal {
        samples: out,
        fs: x.fs,
    }
}

const MAX_RATIO_TERM: u64 = 1_000_000;
const TAPS_PER_SIDE: u64 = 32;
const KAISER_BETA: f64 = 8.0;

/// Best rational approximation `p/q` of `r` by continued fractions, exact to
/// 1e-12 relative, with both terms bounded.
fn rational_ratio(r: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut x = r;
    for _ in 0..64 {
        let a = x.floor();
        if a > MAX_RATIO_TERM as f64 {
            return None;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if h2 > MAX_RATIO_TERM || k2 > MAX_RATIO_TERM {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - r).abs() <= 1e-12 * r {
            return Some((h1, k1));
        }
        let frac = x - a as f64;
        if frac <= 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Polyphase rational resampling with a Kaiser-windowed sinc low-pass at
/// `min(fs, target_fs) / 2`.
///
/// Every polyphase branch is normalized to unit DC gain and the input is
/// extended with its edge values, so constants are preserved exactly.
pub fn resample(x: &Signal, target_fs: f64) -> Result<Signal> {
    if !(target_fs.is_finite() && target_fs > 0.0) {
        return Err(Error::InvalidSignal(format!("target rate must be positive, got {target_fs}")));
    }
    if target_fs == x.fs {
        return Ok(x.clone());
    }
    let (up, down) = rational_ratio(target_fs / x.fs).ok_or(Error::UnsupportedRatio {
        from: x.fs,
        to: target_fs,
    })?;
    let n_in = x.len();
    let n_out = (n_in as f64 * up as f64 / down as f64).round() as usize;
    if n_in == 0 {
        return Signal::new(Vec::new(), target_fs);
    }

    let widest = up.max(down);
    let half_len = (TAPS_PER_SIDE * widest) as i64;
    let cutoff = 0.5 / widest as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let tap = |d: i64| -> f64 {
        let t = d as f64;
        let sinc = if d == 0 {
            1.0
        } else {
            let a = 2.0 * PI * cutoff * t;
            a.sin() / a
        };
        let r = t / half_len as f64;
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
        sinc * w
    };

    let up_i = up as i64;
    let mut phases: HashMap<i64, (i64, Vec<f64>)> = HashMap::new();
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let t = m as i64 * down as i64;
        let phase = t.rem_euclid(up_i);
        let base = t.div_euclid(up_i);
        let (j_min, weights) = phases.entry(phase).or_insert_with(|| {
            // distance t - n*up = phase + j*up with j = base - n
            let j_lo = (-half_len - phase).div_euclid(up_i) + 1;
            let j_hi = (half_len - phase).div_euclid(up_i);
            let mut w: Vec<f64> = (j_lo..=j_hi).map(|j| tap(phase + j * up_i)).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            (j_lo, w)
        });
        let mut acc = 0.0;
        for (offset, w) in weights.iter().enumerate() {
            let j = *j_min + offset as i64;
            let n = (base - j).clamp(0, n_in as i64 - 1) as usize;
            acc += w * x.samples[n];
        }
        out.push(acc);
    }
    Signal::new(out, target_fs)
}

/// Result of min-max normalization, keeping the affine map for inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub signal: Signal,
    pub offset: f64,
    pub scale: f64,
    /// Set when the input was constant; the output is then all 0.5.
    pub degenerate: bool,
}

impl Normalized {
    /// Maps normalized-domain samples back to the original amplitude.
    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        if self.degenerate {
            return vec![self.offset; values.len()];
        }
        values.iter().map(|v| v * self.scale + self.offset).collect()
    }
}

pub fn normalize_01(x: &Signal) -> Normalized {
    let (min, max) = x
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x.is_empty() || max <= min {
        let offset = if x.is_empty() { 0.0 } else { min };
        return Normalized {
            signal: Signal {
                samples: vec![0.5; x.len()],
                fs: x.fs,
            },
            offset,
            scale: 0.0,
            degenerate: true,
        };
    }
    let scale = max - min;
    Normalized {
        signal: Signal {
            samples: x.samples.iter().map(|v| (v - min) / scale).collect(),
            fs: x.fs,
        },
        offset: min,
        scale,
        degenerate: false,
    }
}

/// Band-pass then normalize, the preprocessing applied to every segment.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cascade: BiquadCascade,
    zero_phase: bool,
}

impl Preprocessor {
    pub fn new(spec: &BandPassSpec, fs: f64, zero_phase: bool) -> Result<Self> {
        Ok(Self {
            cascade: design_cheby2_bandpass(spec, fs)?,
            zero_phase,
        })
    }

    pub fn cascade(&self) -> &BiquadCascade {
        &self.cascade
    }

    pub fn filter(&self, x: &Signal) -> Signal {
        if self.zero_phase {
            filter_zero_phase(x, &self.cascade)
        } else {
            filter_signal(x, &self.cascade)
        }
    }

    /// Filters `x`, keeps the samples from `skip` onward and normalizes them.
    pub fn apply_skipping(&self, x: &Signal, skip: usize) -> Normalized {
        let filtered = self.filter(x);
        normalize_01(&filtered.slice(skip.min(filtered.len()), filtered.len()))
    }

    pub fn apply(&self, x: &Signal) -> Normalized {
        self.apply_skipping(x, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize, amp: f64) -> Signal {
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin()).collect();
        Signal::new(s, fs).unwrap()
    }

    #[test]
    fn signal_rejects_bad_inputs() {
        assert!(Signal::new(vec![1.0, f64::NAN], 125.0).is_err());
        assert!(Signal::new(vec![1.0], 0.0).is_err());
        assert!(Signal::new(vec![1.0], -3.0).is_err());
    }

    #[test]
    fn default_design_meets_band_requirements() {
        let c = design_cheby2_bandpass(&BandPassSpec::default(), 125.0).unwrap();
        assert_eq!(c.sections.len(), 4);
        assert!(c.is_stable());
        assert!(c.magnitude_db(0.05, 125.0) <= -40.0);
        assert!(c.magnitude_db(40.0, 125.0) <= -40.0);
        assert!(c.magnitude_db(3.0, 125.0) >= -3.0);
        // -3 dB edges land on the requested band edges
        assert!((c.magnitude_db(0.5, 125.0) + 3.0103).abs() < 1e-3);
        assert!((c.magnitude_db(18.0, 125.0) + 3.0103).abs() < 1e-3);
    }

    #[test]
    fn edges_above_nyquist_rejected() {
        let spec = BandPassSpec {
            low_hz: 70.0,
            high_hz: 80.0,
            ..Default::default()
        };
        assert!(matches!(design_cheby2_bandpass(&spec, 125.0), Err(Error::InvalidSpec(_))));
        let odd = BandPassSpec {
            order: 3,
            ..Default::default()
        };
        assert!(matches!(design_cheby2_bandpass(&odd, 125.0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn zero_and_identity_filtering() {
        let z = Signal::zeros(64, 125.0).unwrap();
        let c = design_cheby2_bandpass(&BandPassSpec::default(), 125.0).unwrap();
        assert!(filter_signal(&z, &c).samples().iter().all(|&v| v == 0.0));

        let mut imp = vec![0.0; 16];
        imp[0] = 1.0;
        let x = Signal::new(imp.clone(), 125.0).unwrap();
        let y = filter_signal(&x, &BiquadCascade::identity());
        assert_eq!(y.samples(), &imp[..]);
        assert_eq!(y.fs(), 125.0);
    }

    #[test]
    fn sinusoid_steady_state_matches_response() {
        let fs = 125.0;
        let c = design_cheby2_bandpass(&BandPassSpec::default(), fs).unwrap();
        let x = sine(10.0, fs, 2000, 1.0);
        let y = filter_signal(&x, &c);
        let tail = &y.samples()[250..];
        let peak = tail.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let expected_db = c.magnitude_db(10.0, fs);
        let measured_db = 20.0 * peak.log10();
        assert!((measured_db - expected_db).abs() < 0.5, "{measured_db} vs {expected_db}");
    }

    #[test]
    fn resample_identity_and_constant() {
        let x = sine(1.0, 64.0, 100, 1.0);
        assert_eq!(resample(&x, 64.0).unwrap(), x);

        let c = Signal::new(vec![3.25; 640], 64.0).unwrap();
        let y = resample(&c, 125.0).unwrap();
        assert_eq!(y.len(), 1250);
        assert!(y.samples().iter().all(|v| (v - 3.25).abs() < 1e-6));
    }

    #[test]
    fn resample_sinusoid_64_to_125() {
        let x = sine(1.0, 64.0, 640, 1.0);
        let y = resample(&x, 125.0).unwrap();
        assert_eq!(y.len(), 1250);
        let trim = 125;
        for (i, v) in y.samples().iter().enumerate().take(1250 - trim).skip(trim) {
            let expected = (2.0 * PI * i as f64 / 125.0).sin();
            assert!((v - expected).abs() < 0.01, "sample {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn resample_rejects_irrational_ratio() {
        let x = sine(1.0, 64.0, 64, 1.0);
        assert!(matches!(resample(&x, 64.0 * PI), Err(Error::UnsupportedRatio { .. })));
        assert_eq!(rational_ratio(125.0 / 64.0), Some((125, 64)));
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_01(&Signal::new(vec![0.0, 5.0, 10.0], 1.0).unwrap());
        assert_eq!(n.signal.samples(), &[0.0, 0.5, 1.0]);
        assert!(!n.degenerate);
        let n = normalize_01(&Signal::new(vec![-1.0, 1.0], 1.0).unwrap());
        assert_eq!(n.signal.samples(), &[0.0, 1.0]);
        let n = normalize_01(&Signal::new(vec![3.0, 3.0, 3.0], 1.0).unwrap());
        assert_eq!(n.signal.samples(), &[0.5, 0.5, 0.5]);
        assert!(n.degenerate);
        assert_eq!(n.denormalize(&[0.1, 0.9]), vec![3.0, 3.0]);
    }

    #[test]
    fn denormalize_inverts() {
        let x = Signal::new(vec![2.0, -1.0, 4.5, 0.25], 1.0).unwrap();
        let n = normalize_01(&x);
        let back = n.denormalize(n.signal.samples());
        for (a, b) in back.iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
