//! Unfolded iterative-shrinkage encoder followed by a single-convolution
//! dictionary decoder.
//!
//! Fold `k` computes `X_{k+1} = T_{θ_k}(W1_k * y + W2_{k-1} * X_k)` with
//! `X_0 = 0`, so fold 0 has no `W2` term and the encoder holds `2K - 1`
//! convolution banks. All convolutions are true convolutions under the
//! center-anchored "same" convention of [`crate::csc`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::conv::conv_acc;
use crate::csc::{
    estimate_lipschitz, reconstruct, softplus, softplus_inv, Dictionary, Shrinkage, SparseCode,
};
use crate::error::{Error, Result};

/// Default effective threshold for randomly initialized folds.
pub const DEFAULT_INIT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct UnfoldedModel {
    pub(crate) m: usize,
    pub(crate) l: usize,
    pub(crate) k: usize,
    pub(crate) w1_len: usize,
    pub(crate) w2_len: usize,
    pub(crate) n_train: usize,
    pub(crate) shrinkage: Shrinkage,
    pub(crate) decoder: Dictionary,
    /// `K` banks, each `M x w1_len` (output channel major).
    pub(crate) w1: Vec<Vec<f64>>,
    /// `K - 1` banks, each `M x M x w2_len` (output, input, tap).
    pub(crate) w2: Vec<Vec<f64>>,
    /// `K` raw threshold vectors of length `M`.
    pub(crate) theta: Vec<Vec<f64>>,
    pub(crate) revision: u64,
}

/// Equality of shape, shrinkage and parameters; the revision counter is ignored.
impl PartialEq for UnfoldedModel {
    fn eq(&self, other: &Self) -> bool {
        (self.m, self.l, self.k, self.w1_len, self.w2_len, self.n_train)
            == (other.m, other.l, other.k, other.w1_len, other.w2_len, other.n_train)
            && self.shrinkage == other.shrinkage
            && self.decoder == other.decoder
            && self.w1 == other.w1
            && self.w2 == other.w2
            && self.theta == other.theta
    }
}

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) revision: u64,
    pub(crate) input: Vec<f64>,
    /// Pre-activations `W1_k * y + W2_{k-1} * X_k`, one per fold.
    pub pre: Vec<SparseCode>,
    /// Codes `X_1 .. X_K`.
    pub codes: Vec<SparseCode>,
    /// Reconstruction `D ⋆ X_K`.
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn final_code(&self) -> &SparseCode {
        self.codes.last().expect("at least one fold")
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

/// Energy dropped when ISTA-derived kernels are cut to the model length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TruncationReport {
    pub w1_dropped_energy: f64,
    pub w2_dropped_energy: f64,
    pub w1_total_energy: f64,
    pub w2_total_energy: f64,
}

impl UnfoldedModel {
    pub fn num_kernels(&self) -> usize {
        self.m
    }

    pub fn kernel_len(&self) -> usize {
        self.l
    }

    pub fn folds(&self) -> usize {
        self.k
    }

    pub fn w1_len(&self) -> usize {
        self.w1_len
    }

    pub fn w2_len(&self) -> usize {
        self.w2_len
    }

    /// Segment length the model was trained on (0 if never trained).
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn set_n_train(&mut self, n: usize) {
        self.n_train = n;
    }

    pub fn shrinkage(&self) -> Shrinkage {
        self.shrinkage
    }

    pub fn set_shrinkage(&mut self, s: Shrinkage) {
        self.shrinkage = s;
        self.revision += 1;
    }

    pub fn decoder(&self) -> &Dictionary {
        &self.decoder
    }

    pub fn w1_bank(&self, fold: usize) -> &[f64] {
        &self.w1[fold]
    }

    pub fn w2_bank(&self, fold: usize) -> &[f64] {
        &self.w2[fold]
    }

    pub fn raw_thresholds(&self, fold: usize) -> &[f64] {
        &self.theta[fold]
    }

    pub fn effective_thresholds(&self, fold: usize) -> Vec<f64> {
        self.theta[fold].iter().map(|&r| softplus(r)).collect()
    }

    /// Number of encoder convolution banks (`2K - 1`).
    pub fn encoder_banks(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// Mutation counter; traces remember the value they were produced at.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Parameter groups in storage order: decoder, `W1[0..K)`, `W2[0..K-1)`,
    /// `theta[0..K)`.
    pub fn param_groups(&self) -> Vec<&[f64]> {
        let mut g: Vec<&[f64]> = vec![self.decoder.as_slice()];
        g.extend(self.w1.iter().map(Vec::as_slice));
        g.extend(self.w2.iter().map(Vec::as_slice));
        g.extend(self.theta.iter().map(Vec::as_slice));
        g
    }

    /// Mutable parameter groups; bumps the revision counter.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.revision += 1;
        let mut g: Vec<&mut [f64]> = vec![self.decoder.as_mut_slice()];
        g.extend(self.w1.iter_mut().map(Vec::as_mut_slice));
        g.extend(self.w2.iter_mut().map(Vec::as_mut_slice));
        g.extend(self.theta.iter_mut().map(Vec::as_mut_slice));
        g
    }

    pub fn num_params(&self) -> usize {
        self.param_groups().iter().map(|g| g.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn project_decoder(&mut self) {
        self.decoder.project_unit_norm();
        self.revision += 1;
    }

    /// Builds a model from explicit parameters; shapes are checked.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        decoder: Dictionary,
        k: usize,
        w1_len: usize,
        w2_len: usize,
        w1: Vec<Vec<f64>>,
        w2: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        n_train: usize,
    ) -> Result<Self> {
        let (m, l) = (decoder.num_kernels(), decoder.kernel_len());
        if k == 0 {
            return Err(Error::Shape("at least one fold required".into()));
        }
        if w1.len() != k || w2.len() != k - 1 || theta.len() != k {
            return Err(Error::Shape(format!(
                "expected {k} W1 banks, {} W2 banks and {k} threshold vectors, got {}, {}, {}",
                k - 1,
                w1.len(),
                w2.len(),
                theta.len()
            )));
        }
        if w1.iter().any(|b| b.len() != m * w1_len)
            || w2.iter().any(|b| b.len() != m * m * w2_len)
            || theta.iter().any(|t| t.len() != m)
        {
            return Err(Error::Shape("parameter bank has the wrong size".into()));
        }
        let model = Self {
            m,
            l,
            k,
            w1_len,
            w2_len,
            n_train,
            shrinkage: Shrinkage::Exact,
            decoder,
            w1,
            w2,
            theta,
            revision: 0,
        };
        if !model.is_finite() {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(model)
    }

    /// Runs the encoder and decoder on `y`.
    pub fn forward(&self, y: &[f64]) -> Result<ForwardTrace> {
        self.forward_with(y, |fold, prev, z| {
            let bank = &self.w2[fold - 1];
            for i in 0..self.m {
                let out = z.column_mut(i);
                for p in 0..self.m {
                    let off = (i * self.m + p) * self.w2_len;
                    conv_acc(&bank[off..off + self.w2_len], prev.column(p), out);
                }
            }
        })
    }

    /// Forward pass with a caller-supplied recurrence: `recur(fold, X_fold, Z)`
    /// must add the `W2` contribution of fold `fold >= 1` into `Z`.
    fn forward_with<F>(&self, y: &[f64], recur: F) -> Result<ForwardTrace>
    where
        F: Fn(usize, &SparseCode, &mut SparseCode),
    {
        let n = y.len();
        if n < self.l {
            return Err(Error::InputTooShort {
                len: n,
                kernel: self.l,
            });
        }
        let mut pre = Vec::with_capacity(self.k);
        let mut codes: Vec<SparseCode> = Vec::with_capacity(self.k);
        for fold in 0..self.k {
            let mut z = SparseCode::zeros(n, self.m);
            let bank = &self.w1[fold];
            for i in 0..self.m {
                conv_acc(&bank[i * self.w1_len..(i + 1) * self.w1_len], y, z.column_mut(i));
            }
            if fold > 0 {
                recur(fold, &codes[fold - 1], &mut z);
            }
            let mut x = SparseCode::zeros(n, self.m);
            for (i, &raw) in self.theta[fold].iter().enumerate() {
                let th = softplus(raw);
                for (xo, zi) in x.column_mut(i).iter_mut().zip(z.column(i)) {
                    *xo = self.shrinkage.apply(*zi, th);
                }
            }
            pre.push(z);
            codes.push(x);
        }
        let output = reconstruct(&self.decoder, codes.last().expect("k >= 1"))?;
        Ok(ForwardTrace {
            revision: self.revision,
            input: y.to_vec(),
            pre,
            codes,
            output,
        })
    }

    /// Reconstruction only.
    pub fn denoise(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(y)?.output)
    }
}

/// Places a kernel given by offset `u` (`out[s] = Σ w(u) x[s - u]`) into a
/// buffer of length `len` anchored at `len / 2`; returns the dropped energy.
fn place_by_offset(
    dst: &mut [f64],
    taps: impl IntoIterator<Item = (isize, f64)>,
) -> f64 {
    let anchor = (dst.len() / 2) as isize;
    let mut dropped = 0.0;
    for (u, v) in taps {
        let t = anchor + u;
        if t >= 0 && (t as usize) < dst.len() {
            dst[t as usize] += v;
        } else {
            dropped += v * v;
        }
    }
    dropped
}

fn ista_banks(
    d0: &Dictionary,
    c: f64,
    k: usize,
    w1_len: usize,
    w2_len: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, TruncationReport) {
    let (m, l) = (d0.num_kernels(), d0.kernel_len());
    let a = (l / 2) as isize;
    let mut report = TruncationReport::default();

    // W1: scaled correlation with d_i, as a convolution with offsets u = a - j.
    let mut w1_bank = vec![0.0; m * w1_len];
    for i in 0..m {
        let taps = d0.kernel(i).iter().enumerate().map(|(j, v)| (a - j as isize, v / c));
        report.w1_total_energy += d0.kernel(i).iter().map(|v| (v / c).powi(2)).sum::<f64>();
        report.w1_dropped_energy +=
            place_by_offset(&mut w1_bank[i * w1_len..(i + 1) * w1_len], taps);
    }

    // W2: identity minus the scaled Gram kernel g_ip[u] = Σ_j d_i[j] d_p[j + u].
    let mut w2_bank = vec![0.0; m * m * w2_len];
    for i in 0..m {
        for p in 0..m {
            let (di, dp) = (d0.kernel(i), d0.kernel(p));
            let mut taps: Vec<(isize, f64)> = Vec::with_capacity(2 * l);
            for u in -(l as isize - 1)..l as isize {
                let mut g = 0.0;
                for (j, dv) in di.iter().enumerate() {
                    let q = j as isize + u;
                    if q >= 0 && (q as usize) < l {
                        g += dv * dp[q as usize];
                    }
                }
                let mut v = -g / c;
                if i == p && u == 0 {
                    v += 1.0;
                }
                taps.push((u, v));
            }
            report.w2_total_energy += taps.iter().map(|(_, v)| v * v).sum::<f64>();
            let off = (i * m + p) * w2_len;
            report.w2_dropped_energy += place_by_offset(&mut w2_bank[off..off + w2_len], taps);
        }
    }
    let w2_count = k - 1;
    report.w1_total_energy *= k as f64;
    report.w1_dropped_energy *= k as f64;
    report.w2_total_energy *= w2_count as f64;
    report.w2_dropped_energy *= w2_count as f64;
    (vec![w1_bank; k], vec![w2_bank; w2_count], report)
}

fn init_ista_with_lengths(
    d0: &Dictionary,
    lambda: f64,
    n: usize,
    k: usize,
    w1_len: usize,
    w2_len: usize,
) -> Result<(UnfoldedModel, TruncationReport)> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if k == 0 {
        return Err(Error::Shape("at least one fold required".into()));
    }
    if d0.max_norm_deviation() > crate::csc::UNIT_NORM_TOL {
        return Err(Error::Domain("initial dictionary must have unit-norm kernels".into()));
    }
    let c = estimate_lipschitz(d0, n)?;
    let (w1, w2, report) = ista_banks(d0, c, k, w1_len, w2_len);
    let raw = softplus_inv(lambda / c)?;
    let theta = vec![vec![raw; d0.num_kernels()]; k];
    if report.w1_dropped_energy + report.w2_dropped_energy > 0.0 {
        log::debug!(
            "ISTA init truncation: W1 dropped {:.3e} of {:.3e}, W2 dropped {:.3e} of {:.3e}",
            report.w1_dropped_energy,
            report.w1_total_energy,
            report.w2_dropped_energy,
            report.w2_total_energy
        );
    }
    let model = UnfoldedModel::from_parts(d0.clone(), k, w1_len, w2_len, w1, w2, theta, n)?;
    Ok((model, report))
}

/// ISTA-equivalent initialization with kernel length `L` for every bank.
///
/// `W1_k = (1/c) reverse(D0)`, `W2_k = δ - (1/c) reverse(D0) * D0`, thresholds
/// `λ/c`, decoder `D0`. The exact `W2` kernel spans `2L - 1` taps (and `W1`
/// needs `L + 1` for even `L`); the excess is cut and its energy reported.
pub fn init_ista(
    d0: &Dictionary,
    lambda: f64,
    n: usize,
    k: usize,
) -> Result<(UnfoldedModel, TruncationReport)> {
    let l = d0.kernel_len();
    init_ista_with_lengths(d0, lambda, n, k, l, l)
}

/// ISTA-equivalent model without truncation.
///
/// `W1` has the smallest odd length `>= L`, so the scaled reversed kernels fit
/// exactly, and the `W2` banks hold the full `2L - 1` tap Gram kernels. With
/// zero-padded "same" convolutions the operator `δ - (1/c) Dᵀ D` is Toeplitz
/// only away from the borders, so [`IstaHarness::forward`] applies it in its
/// factored form; it then reproduces [`crate::csc::ista_iterate`] exactly.
#[derive(Debug, Clone)]
pub struct IstaHarness {
    pub model: UnfoldedModel,
    pub dictionary: Dictionary,
    /// Step constant (Lipschitz estimate) shared with the ISTA solver.
    pub step_constant: f64,
}

impl IstaHarness {
    pub fn forward(&self, y: &[f64]) -> Result<ForwardTrace> {
        let d = &self.dictionary;
        let c = self.step_constant;
        self.model.forward_with(y, |_, prev, z| {
            let back = crate::csc::correlate_adjoint(d, &reconstruct(d, prev).expect("shape"));
            for ((zv, xv), gv) in z.as_mut_slice().iter_mut().zip(prev.as_slice()).zip(back.as_slice()) {
                *zv += xv - gv / c;
            }
        })
    }
}

pub fn init_ista_untruncated(
    d0: &Dictionary,
    lambda: f64,
    n: usize,
    k: usize,
) -> Result<IstaHarness> {
    let l = d0.kernel_len();
    let w1_len = l | 1;
    let (model, _) = init_ista_with_lengths(d0, lambda, n, k, w1_len, 2 * l - 1)?;
    Ok(IstaHarness {
        model,
        dictionary: d0.clone(),
        step_constant: estimate_lipschitz(d0, n)?,
    })
}

/// Random initialization: white-noise decoder normalized to unit kernels,
/// encoder banks `N(0, 1/(fan_in * L))`, thresholds `softplus⁻¹(0.05)`.
pub fn init_random(m: usize, l: usize, k: usize, seed: u64) -> Result<UnfoldedModel> {
    if k == 0 {
        return Err(Error::Shape("at least one fold required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decoder = Dictionary::random(m, l, &mut rng)?;
    let mut normal = |std: f64, len: usize| -> Vec<f64> {
        (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let w1: Vec<Vec<f64>> = (0..k).map(|_| normal(1.0 / (l as f64).sqrt(), m * l)).collect();
    let w2: Vec<Vec<f64>> = (1..k)
        .map(|_| normal(1.0 / ((m * l) as f64).sqrt(), m * m * l))
        .collect();
    let raw = softplus_inv(DEFAULT_INIT_THRESHOLD)?;
    let theta = vec![vec![raw; m]; k];
    UnfoldedModel::from_parts(decoder, k, l, l, w1, w2, theta, 0)
}
