//! Supervised training of [`UnfoldedModel`]: loss, reverse-mode gradients,
//! Adam with unit-norm projection, early stopping and subject-level splits.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{corr_acc, corr_acc_masked, kernel_grad_acc};
use crate::csc::{sigmoid, softplus, Shrinkage, SparseCode};
use crate::error::{Error, Result};
use crate::synth::SegmentRecord;
use crate::unfolded::{ForwardTrace, UnfoldedModel};

/// Segments per parallel work unit. Fixed so that the gradient reduction
/// order does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub l2_w: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub shrinkage: Shrinkage,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            l2_w: 1e-3,
            lr: 1e-4,
            batch_size: 256,
            patience: 10,
            max_epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            shrinkage: Shrinkage::Exact,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("lr", self.lr),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.l2_w >= 0.0 && self.l2_w.is_finite()) {
            return Err(Error::Config(format!("l2_w must be non-negative, got {}", self.l2_w)));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("Adam moments must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience and max_epochs must be at least 1".into(),
            ));
        }
        if let Shrinkage::Smooth { beta } = self.shrinkage {
            if !(beta > 0.0) {
                return Err(Error::Config(format!("smooth beta must be positive, got {beta}")));
            }
        }
        Ok(())
    }
}

/// One gradient array per parameter group, in [`UnfoldedModel::param_groups`]
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    groups: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &UnfoldedModel) -> Self {
        Self {
            groups: model.param_groups().iter().map(|g| vec![0.0; g.len()]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.groups
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.groups {
            for v in g {
                *v *= s;
            }
        }
    }

    fn congruent(&self, model: &UnfoldedModel) -> bool {
        let p = model.param_groups();
        p.len() == self.groups.len() && p.iter().zip(&self.groups).all(|(a, b)| a.len() == b.len())
    }
}

/// Index ranges of the parameter groups.
struct Layout {
    k: usize,
}

impl Layout {
    fn decoder(&self) -> usize {
        0
    }
    fn w1(&self, fold: usize) -> usize {
        1 + fold
    }
    fn w2(&self, fold: usize) -> usize {
        1 + self.k + fold
    }
    fn theta(&self, fold: usize) -> usize {
        1 + self.k + (self.k - 1) + fold
    }
    fn is_decay_target(&self, group: usize) -> bool {
        group >= 1 && group < 1 + self.k + (self.k - 1)
    }
}

/// `½‖target − ŷ‖² + λ‖X_K‖₁` for one segment, with the forward trace.
pub fn loss(
    model: &UnfoldedModel,
    noisy: &[f64],
    target: &[f64],
    lambda: f64,
) -> Result<(f64, ForwardTrace)> {
    if noisy.len() != target.len() {
        return Err(Error::Shape(format!(
            "input has {} samples, target {}",
            noisy.len(),
            target.len()
        )));
    }
    let trace = model.forward(noisy)?;
    Ok((loss_from_trace(&trace, target, lambda), trace))
}

fn loss_from_trace(trace: &ForwardTrace, target: &[f64], lambda: f64) -> f64 {
    let rec: f64 = trace.output.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * rec + lambda * trace.final_code().l1_norm()
}

/// `(l2_w / 2)(‖W1‖² + ‖W2‖²)`.
pub fn weight_penalty(model: &UnfoldedModel, l2_w: f64) -> f64 {
    let lay = Layout { k: model.folds() };
    let groups = model.param_groups();
    let sq: f64 = groups
        .iter()
        .enumerate()
        .filter(|(i, _)| lay.is_decay_target(*i))
        .map(|(_, g)| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    0.5 * l2_w * sq
}

/// Exact gradients of [`loss`] with respect to every parameter.
pub fn backward(
    model: &UnfoldedModel,
    trace: &ForwardTrace,
    target: &[f64],
    lambda: f64,
) -> Result<GradientSet> {
    if trace.revision != model.revision() {
        return Err(Error::StaleTrace {
            trace: trace.revision,
            model: model.revision(),
        });
    }
    let y = trace.input();
    let n = y.len();
    if target.len() != n {
        return Err(Error::Shape(format!("input has {n} samples, target {}", target.len())));
    }
    let (m, k) = (model.num_kernels(), model.folds());
    let (w1_len, w2_len) = (model.w1_len(), model.w2_len());
    let lay = Layout { k };
    let mut grads = GradientSet::zeros_like(model);
    let shrink = model.shrinkage();

    let resid: Vec<f64> = trace.output.iter().zip(target).map(|(a, b)| a - b).collect();
    let xk = trace.final_code();
    let dec = model.decoder();
    let l = dec.kernel_len();
    // With the exact threshold the code gradient is only consumed on the
    // code support (the shrinkage derivative vanishes elsewhere).
    let exact = matches!(shrink, Shrinkage::Exact);
    let adjoint = |k: &[f64], r: &[f64], out: &mut [f64], support: &[f64]| {
        if exact {
            corr_acc_masked(k, r, out, support);
        } else {
            corr_acc(k, r, out);
        }
    };
    let mut g_code = SparseCode::zeros(n, m);
    {
        let gd = &mut grads.groups[lay.decoder()];
        for i in 0..m {
            kernel_grad_acc(&resid, xk.column(i), &mut gd[i * l..(i + 1) * l]);
            adjoint(dec.kernel(i), &resid, g_code.column_mut(i), xk.column(i));
        }
    }
    for (g, x) in g_code.as_mut_slice().iter_mut().zip(xk.as_slice()) {
        *g += lambda * sign(*x);
    }

    for fold in (0..k).rev() {
        let z = &trace.pre[fold];
        let raw = model.raw_thresholds(fold);
        let mut g_pre = SparseCode::zeros(n, m);
        for i in 0..m {
            let th = softplus(raw[i]);
            let mut g_th = 0.0;
            for ((gp, gx), zi) in g_pre
                .column_mut(i)
                .iter_mut()
                .zip(g_code.column(i))
                .zip(z.column(i))
            {
                let (dx, dth) = shrink.partials(*zi, th);
                *gp = gx * dx;
                g_th += gx * dth;
            }
            grads.groups[lay.theta(fold)][i] += g_th * sigmoid(raw[i]);
        }
        {
            let gw1 = &mut grads.groups[lay.w1(fold)];
            for i in 0..m {
                kernel_grad_acc(g_pre.column(i), y, &mut gw1[i * w1_len..(i + 1) * w1_len]);
            }
        }
        if fold == 0 {
            break;
        }
        let prev = &trace.codes[fold - 1];
        let bank = model.w2_bank(fold - 1);
        let mut g_prev = SparseCode::zeros(n, m);
        let gw2 = &mut grads.groups[lay.w2(fold - 1)];
        for i in 0..m {
            let gi = g_pre.column(i);
            for p in 0..m {
                let off = (i * m + p) * w2_len;
                kernel_grad_acc(gi, prev.column(p), &mut gw2[off..off + w2_len]);
                adjoint(&bank[off..off + w2_len], gi, g_prev.column_mut(p), prev.column(p));
            }
        }
        g_code = g_prev;
    }
    Ok(grads)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adam first/second moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &UnfoldedModel) -> Self {
        let z: Vec<Vec<f64>> = model.param_groups().iter().map(|g| vec![0.0; g.len()]).collect();
        Self {
            t: 0,
            m: z.clone(),
            v: z,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub(crate) fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((p, g), mi), vi) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
        let mh = *mi / bc1;
        let vh = *vi / bc2;
        *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// Adam step with `l2_w · W` added to the `W1`/`W2` gradients, followed by
/// projection of the decoder kernels onto the unit sphere.
pub fn adam_step(
    model: &mut UnfoldedModel,
    grads: &GradientSet,
    cfg: &TrainConfig,
    state: &mut AdamState,
) -> Result<()> {
    if !grads.congruent(model) {
        return Err(Error::Shape("gradient set does not match the model".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    let lay = Layout { k: model.folds() };
    state.t += 1;
    let t = state.t;
    let groups = model.param_groups_mut();
    for (gi, param) in groups.into_iter().enumerate() {
        let g = &grads.groups[gi];
        let decayed: Vec<f64>;
        let g = if lay.is_decay_target(gi) && cfg.l2_w > 0.0 {
            decayed = g.iter().zip(param.iter()).map(|(g, w)| g + cfg.l2_w * w).collect();
            &decayed
        } else {
            g
        };
        adam_update(param, g, &mut state.m[gi], &mut state.v[gi], t, cfg);
    }
    model.project_decoder();
    if !model.is_finite() {
        return Err(Error::Diverged("non-finite parameter after update".into()));
    }
    Ok(())
}

/// Patience-based stopping on a validation metric.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best
    }
}

/// One row of the training history (`epoch` counts from 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, weight penalty included.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Fraction of exactly-zero entries of `X_K` on the validation set.
    pub sparsity: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: UnfoldedModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn write_history_csv<W: std::io::Write>(history: &[EpochRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in history {
        wr.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean loss and mean gradient over `batch` (indices into `data`).
pub fn batch_gradient(
    model: &UnfoldedModel,
    data: &[SegmentRecord],
    batch: &[usize],
    lambda: f64,
) -> Result<(f64, GradientSet)> {
    let partial: Vec<Result<(f64, GradientSet)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = GradientSet::zeros_like(model);
            let mut total = 0.0;
            for &idx in chunk {
                let rec = &data[idx];
                let (l, trace) = loss(model, rec.noisy.samples(), rec.clean.samples(), lambda)?;
                let g = backward(model, &trace, rec.clean.samples(), lambda)?;
                acc.add_assign(&g);
                total += l;
            }
            Ok((total, acc))
        })
        .collect();
    let mut grads = GradientSet::zeros_like(model);
    let mut total = 0.0;
    for p in partial {
        let (l, g) = p?;
        total += l;
        grads.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Mean data loss and fraction of zero code entries over `data`.
pub fn evaluate(model: &UnfoldedModel, data: &[SegmentRecord], lambda: f64) -> Result<(f64, f64)> {
    let per: Vec<Result<(f64, f64)>> = data
        .par_iter()
        .map(|rec| {
            let (l, trace) = loss(model, rec.noisy.samples(), rec.clean.samples(), lambda)?;
            Ok((l, 1.0 - trace.final_code().density()))
        })
        .collect();
    let (mut tl, mut ts) = (0.0, 0.0);
    for p in per {
        let (l, s) = p?;
        tl += l;
        ts += s;
    }
    let n = data.len() as f64;
    Ok((tl / n, ts / n))
}

/// Mini-batch training with early stopping on the validation loss. Returns the
/// snapshot with the lowest validation loss.
pub fn train(
    init: UnfoldedModel,
    train_set: &[SegmentRecord],
    val_set: &[SegmentRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be nonempty".into()));
    }
    let mut model = init;
    model.set_shrinkage(cfg.shrinkage);
    model.set_n_train(train_set[0].noisy.len());
    let mut state = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (l, grads) = batch_gradient(&model, train_set, batch, cfg.lambda)?;
            let l = l + weight_penalty(&model, cfg.l2_w);
            if !l.is_finite() {
                return Err(Error::Diverged(format!("loss became {l} in epoch {epoch}")));
            }
            adam_step(&mut model, &grads, cfg, &mut state)?;
            epoch_loss += l;
            batches += 1;
        }
        let (val_loss, sparsity) = evaluate(&model, val_set, cfg.lambda)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("validation loss became {val_loss}")));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_loss,
            sparsity,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        log::info!(
            "epoch {epoch}: train {:.5} val {val_loss:.5} sparsity {sparsity:.3}",
            epoch_loss / batches as f64
        );
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: stopper.best_epoch().unwrap_or(0),
    })
}

/// Train/validation/test fractions for [`split_by_subject`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }

    /// Subject counts per split by the largest-remainder rule (ties go to the
    /// earlier split); every split receives at least one subject.
    pub fn counts(&self, n_subjects: usize) -> Result<[usize; 3]> {
        self.validate()?;
        if n_subjects < 3 {
            return Err(Error::Config(format!(
                "need at least 3 subjects to split, got {n_subjects}"
            )));
        }
        let quotas = [self.train, self.val, self.test].map(|f| f * n_subjects as f64);
        let mut counts = quotas.map(|q| q.floor() as usize);
        let mut rem: Vec<(usize, f64)> =
            quotas.iter().enumerate().map(|(i, q)| (i, q - q.floor())).collect();
        rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let missing = n_subjects - counts.iter().sum::<usize>();
        for &(i, _) in rem.iter().take(missing) {
            counts[i] += 1;
        }
        for i in 0..3 {
            if counts[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], usize::MAX - j)).unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
        Ok(counts)
    }
}

/// Partitions records by subject into train/validation/test lists.
pub fn split_by_subject<T: Clone>(
    records: &[T],
    subject: impl Fn(&T) -> &str,
    spec: &SplitSpec,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let subjects: BTreeSet<&str> = records.iter().map(&subject).collect();
    let counts = spec.counts(subjects.len())?;
    let mut ids: Vec<&str> = subjects.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let rank: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let pos = rank[subject(r)];
        match (pos >= counts[0]) as u8 + (pos >= counts[0] + counts[1]) as u8 {
            0 => out.0.push(r.clone()),
            1 => out.1.push(r.clone()),
            _ => out.2.push(r.clone()),
        }
    }
    Ok(out)
}
