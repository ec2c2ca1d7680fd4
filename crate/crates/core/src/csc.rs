//! Convolutional sparse coding model: a dictionary of short kernels, sparse
//! per-kernel activations, the synthesis operator and its adjoint, shrinkage
//! functions, and a plain ISTA solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::conv::{conv_acc, corr_acc};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Magnitude below which an activation counts as zero for density reports.
pub const ZERO_TOL: f64 = 1e-8;

/// `M` kernels of length `L`, stored kernel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    m: usize,
    l: usize,
    kernels: Vec<f64>,
}

impl Dictionary {
    /// Builds a dictionary whose kernels must already have unit norm.
    pub fn new(m: usize, l: usize, kernels: Vec<f64>) -> Result<Self> {
        let d = Self::from_raw(m, l, kernels)?;
        if let Some(i) = (0..m).find(|&i| (norm(d.kernel(i)) - 1.0).abs() > UNIT_NORM_TOL) {
            return Err(Error::Domain(format!("kernel {i} does not have unit norm")));
        }
        Ok(d)
    }

    /// Builds a dictionary and rescales every kernel to unit norm.
    pub fn normalized(m: usize, l: usize, kernels: Vec<f64>) -> Result<Self> {
        let mut d = Self::from_raw(m, l, kernels)?;
        if (0..m).any(|i| norm(d.kernel(i)) == 0.0) {
            return Err(Error::Domain("cannot normalize an all-zero kernel".into()));
        }
        d.project_unit_norm();
        Ok(d)
    }

    fn from_raw(m: usize, l: usize, kernels: Vec<f64>) -> Result<Self> {
        if m == 0 || l == 0 {
            return Err(Error::Shape(format!("dictionary needs M >= 1 and L >= 1, got {m}x{l}")));
        }
        if kernels.len() != m * l {
            return Err(Error::Shape(format!(
                "expected {} kernel taps, got {}",
                m * l,
                kernels.len()
            )));
        }
        if kernels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite kernel tap".into()));
        }
        Ok(Self { m, l, kernels })
    }

    /// I.i.d. standard normal taps, each kernel normalized.
    pub fn random(m: usize, l: usize, rng: &mut impl Rng) -> Result<Self> {
        let taps = (0..m * l).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self::normalized(m, l, taps)
    }

    /// Single kernel that is a unit impulse at the anchor tap.
    pub fn identity(l: usize) -> Self {
        let mut k = vec![0.0; l];
        k[l / 2] = 1.0;
        Self { m: 1, l, kernels: k }
    }

    pub fn num_kernels(&self) -> usize {
        self.m
    }

    pub fn kernel_len(&self) -> usize {
        self.l
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        &self.kernels[i * self.l..(i + 1) * self.l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kernels
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.kernels
    }

    /// Rescales every nonzero kernel to unit l2 norm.
    pub fn project_unit_norm(&mut self) {
        for k in self.kernels.chunks_mut(self.l) {
            let n = norm(k);
            if n > 0.0 {
                k.iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    /// Largest deviation of a kernel norm from one.
    pub fn max_norm_deviation(&self) -> f64 {
        self.kernels
            .chunks(self.l)
            .map(|k| (norm(k) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `N x M` activations stored channel-major (one contiguous column per kernel).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl SparseCode {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            data: vec![0.0; n * m],
        }
    }

    pub fn from_columns(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::Shape(format!("expected {} activations, got {}", n * m, data.len())));
        }
        Ok(Self { n, m, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_kernels(&self) -> usize {
        self.m
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.data[i * self.n + t]
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Fraction of activations with magnitude above [`ZERO_TOL`].
    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().filter(|v| v.abs() > ZERO_TOL).count() as f64 / self.data.len() as f64
    }

    pub fn inner(&self, other: &SparseCode) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("softplus inverse needs y > 0, got {y}")));
    }
    Ok(y + (-(-y).exp_m1()).ln())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact soft threshold `sign(x) max(|x| - theta, 0)`.
pub fn soft_threshold(x: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {theta}")));
    }
    Ok(Shrinkage::Exact.apply(x, theta))
}

/// Difference-of-softplus surrogate of the soft threshold with sharpness `beta`.
pub fn smooth_soft_threshold(x: f64, theta: f64, beta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {theta}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("sharpness must be positive, got {beta}")));
    }
    Ok(Shrinkage::Smooth { beta }.apply(x, theta))
}

/// Shrinkage nonlinearity applied after each fold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shrinkage {
    Exact,
    Smooth { beta: f64 },
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::Exact
    }
}

impl Shrinkage {
    #[inline]
    pub fn apply(&self, x: f64, theta: f64) -> f64 {
        match *self {
            Shrinkage::Exact => {
                if x > theta {
                    x - theta
                } else if x < -theta {
                    x + theta
                } else {
                    0.0
                }
            }
            Shrinkage::Smooth { beta } => {
                (softplus(beta * (x - theta)) - softplus(-beta * (x + theta))) / beta
            }
        }
    }

    /// Partial derivatives `(d/dx, d/dtheta)`; the exact form uses 0 at the kinks.
    #[inline]
    pub fn partials(&self, x: f64, theta: f64) -> (f64, f64) {
        match *self {
            Shrinkage::Exact => {
                if x > theta {
                    (1.0, -1.0)
                } else if x < -theta {
                    (1.0, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Shrinkage::Smooth { beta } => {
                let up = sigmoid(beta * (x - theta));
                let down = sigmoid(-beta * (x + theta));
                (up + down, down - up)
            }
        }
    }
}

/// Raw per-kernel thresholds; the effective threshold is `softplus(raw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    pub raw: Vec<f64>,
}

impl ThresholdVector {
    pub fn from_effective(values: &[f64]) -> Result<Self> {
        Ok(Self {
            raw: values.iter().map(|&v| softplus_inv(v)).collect::<Result<_>>()?,
        })
    }

    pub fn effective(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| softplus(r)).collect()
    }
}

fn check_code_shape(d: &Dictionary, x: &SparseCode) -> Result<()> {
    if x.m != d.m {
        return Err(Error::Shape(format!(
            "code has {} channels, dictionary has {} kernels",
            x.m, d.m
        )));
    }
    Ok(())
}

/// Synthesis `sum_i d_i * x_i`.
pub fn reconstruct(d: &Dictionary, x: &SparseCode) -> Result<Vec<f64>> {
    check_code_shape(d, x)?;
    let mut out = vec![0.0; x.n];
    for i in 0..d.m {
        conv_acc(d.kernel(i), x.column(i), &mut out);
    }
    Ok(out)
}

/// Adjoint of [`reconstruct`]: column `i` is `r` correlated with `d_i`.
pub fn correlate_adjoint(d: &Dictionary, r: &[f64]) -> SparseCode {
    let mut code = SparseCode::zeros(r.len(), d.m);
    for i in 0..d.m {
        corr_acc(d.kernel(i), r, code.column_mut(i));
    }
    code
}

const MAX_OPERATOR_APPLICATIONS: usize = 1000;
const KRYLOV_BASIS: usize = 48;
const EIG_TOL: f64 = 1e-6;
/// The estimate counts as settled once it rose by less than `STALL_TOL`
/// (relative) over the last `STALL_WINDOW` operator applications.
const STALL_TOL: f64 = 1e-9;
const STALL_WINDOW: usize = 24;
const START_SEED: u64 = 0x5eed_c0de;

/// Largest eigenvalue of `X -> D^T D X` on length-`n` codes.
///
/// Power iteration from a seeded random start, with the top eigenvalue
/// extracted from the generated Krylov space by restarted Lanczos. Stops once
/// the Ritz residual is below `1e-6` of the estimate, so the returned value
/// is within that relative distance of an eigenvalue, or once the Ritz value
/// has settled (long codes have a tightly clustered spectral top where the
/// residual stalls while the value is already converged).
pub fn estimate_lipschitz(d: &Dictionary, n: usize) -> Result<f64> {
    if n < d.l {
        return Err(Error::InputTooShort { len: n, kernel: d.l });
    }
    let dim = n * d.m;
    let apply = |v: &[f64]| -> Vec<f64> {
        let code = SparseCode { n, m: d.m, data: v.to_vec() };
        let y = reconstruct(d, &code).expect("shape checked");
        correlate_adjoint(d, &y).data
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut applications = 0;
    let mut trail: Vec<f64> = Vec::new();
    while applications < MAX_OPERATOR_APPLICATIONS {
        let nrm = dot(&start, &start).sqrt();
        start.iter_mut().for_each(|v| *v /= nrm);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz = (0.0, vec![1.0]);
        for j in 0..KRYLOV_BASIS {
            let mut w = apply(&basis[j]);
            applications += 1;
            let alpha = dot(&basis[j], &w);
            alphas.push(alpha);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wv, qv)| *wv -= c * qv);
                }
            }
            let beta = dot(&w, &w).sqrt();

            let k = alphas.len();
            let mut t = vec![vec![0.0; k]; k];
            for i in 0..k {
                t[i][i] = alphas[i];
                if i + 1 < k {
                    t[i][i + 1] = betas[i];
                    t[i + 1][i] = betas[i];
                }
            }
            let (vals, vecs) = symmetric_eigen(t);
            let top = (0..k).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("k >= 1");
            let theta = vals[top];
            let s: Vec<f64> = (0..k).map(|r| vecs[r][top]).collect();
            let residual = beta * s[k - 1].abs();
            ritz = (theta, s);
            if theta <= 0.0 {
                return Ok(0.0);
            }
            trail.push(theta);
            let settled = trail.len() > STALL_WINDOW
                && theta - trail[trail.len() - 1 - STALL_WINDOW] <= STALL_TOL * theta;
            if residual <= EIG_TOL * theta || beta <= f64::EPSILON * theta || settled {
                return Ok(theta);
            }
            if applications >= MAX_OPERATOR_APPLICATIONS {
                break;
            }
            betas.push(beta);
            basis.push(w.into_iter().map(|v| v / beta).collect());
        }
        // restart from the current Ritz vector
        let s = &ritz.1;
        start = vec![0.0; dim];
        for (coef, q) in s.iter().zip(&basis) {
            start.iter_mut().zip(q).for_each(|(a, b)| *a += coef * b);
        }
    }
    Err(Error::Convergence(MAX_OPERATOR_APPLICATIONS))
}

/// `½‖y − D⋆X‖² + λ‖X‖₁`.
pub fn objective(y: &[f64], d: &Dictionary, x: &SparseCode, lambda: f64) -> Result<f64> {
    let yhat = reconstruct(d, x)?;
    let rss: f64 = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * rss + lambda * x.l1_norm())
}

/// Runs `iters` ISTA steps with step `1/c`, returning the code and the
/// objective after every step.
pub fn ista_iterate(
    y: &[f64],
    d: &Dictionary,
    lambda: f64,
    iters: usize,
    c: f64,
) -> Result<(SparseCode, Vec<f64>)> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if iters == 0 {
        return Err(Error::Domain("at least one iteration required".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("step constant must be positive, got {c}")));
    }
    let theta = lambda / c;
    let mut x = SparseCode::zeros(y.len(), d.m);
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let yhat = reconstruct(d, &x)?;
        let residual: Vec<f64> = y.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        let grad = correlate_adjoint(d, &residual);
        for (xv, gv) in x.data.iter_mut().zip(&grad.data) {
            *xv = Shrinkage::Exact.apply(*xv + gv / c, theta);
        }
        history.push(objective(y, d, &x, lambda)?);
    }
    Ok((x, history))
}

/// ISTA from `X = 0` with step size from [`estimate_lipschitz`].
pub fn ista_encode(y: &[f64], d: &Dictionary, lambda: f64, iters: usize) -> Result<SparseCode> {
    let c = estimate_lipschitz(d, y.len())?;
    Ok(ista_iterate(y, d, lambda, iters, c)?.0)
}
