//! "Same"-length 1-D convolution primitives shared by the sparse-coding
//! operators and the unfolded network.
//!
//! A kernel `k` of length `P` is anchored at `a = P / 2`:
//! `(k * x)[t] = sum_j k[j] x[t + a - j]`, with `x` zero outside `[0, N)`.

#[inline]
fn valid_range(n: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// `out[t] += w * x[t + shift]` wherever `t + shift` is in range.
#[inline]
fn axpy_shifted(w: f64, x: &[f64], out: &mut [f64], shift: isize) {
    let (lo, hi) = valid_range(out.len().min(x.len()), shift);
    if lo >= hi || w == 0.0 {
        return;
    }
    let src = &x[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
    for (o, s) in out[lo..hi].iter_mut().zip(src) {
        *o += w * s;
    }
}

#[inline]
fn dot_shifted(g: &[f64], x: &[f64], shift: isize) -> f64 {
    let (lo, hi) = valid_range(g.len().min(x.len()), shift);
    if lo >= hi {
        return 0.0;
    }
    let src = &x[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
    dot(&g[lo..hi], src)
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Inputs with fewer than `len / SPARSE_RATIO` nonzeros take the scatter
/// paths below.
const SPARSE_RATIO: usize = 3;

#[inline]
fn is_sparse(x: &[f64]) -> bool {
    x.iter().filter(|v| **v != 0.0).count() * SPARSE_RATIO < x.len()
}

/// `out += kernel * x`.
pub(crate) fn conv_acc(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    let a = (kernel.len() / 2) as isize;
    if is_sparse(x) {
        // out[s + j - a] += k[j] x[s] for every nonzero x[s].
        let n = out.len().min(x.len()) as isize;
        for (s, &v) in x.iter().enumerate().take(n as usize) {
            if v == 0.0 {
                continue;
            }
            let base = s as isize - a;
            let j0 = (-base).max(0);
            let j1 = (n - base).min(kernel.len() as isize);
            if j0 >= j1 {
                continue;
            }
            let dst = &mut out[(base + j0) as usize..(base + j1) as usize];
            for (o, k) in dst.iter_mut().zip(&kernel[j0 as usize..j1 as usize]) {
                *o += v * k;
            }
        }
        return;
    }
    for (j, &w) in kernel.iter().enumerate() {
        axpy_shifted(w, x, out, a - j as isize);
    }
}

/// `out += kernel ⋆ r`, the adjoint of [`conv_acc`] in `x`.
pub(crate) fn corr_acc(kernel: &[f64], r: &[f64], out: &mut [f64]) {
    let a = (kernel.len() / 2) as isize;
    for (j, &w) in kernel.iter().enumerate() {
        axpy_shifted(w, r, out, j as isize - a);
    }
}

/// [`corr_acc`] evaluated only where `mask` is nonzero.
pub(crate) fn corr_acc_masked(kernel: &[f64], r: &[f64], out: &mut [f64], mask: &[f64]) {
    let a = (kernel.len() / 2) as isize;
    let n = r.len().min(out.len()) as isize;
    for (s, o) in out.iter_mut().enumerate() {
        if mask[s] == 0.0 {
            continue;
        }
        // out[s] += sum_j k[j] r[s - a + j]
        let base = s as isize - a;
        let j0 = (-base).max(0);
        let j1 = (n - base).min(kernel.len() as isize);
        if j0 < j1 {
            *o += dot(
                &kernel[j0 as usize..j1 as usize],
                &r[(base + j0) as usize..(base + j1) as usize],
            );
        }
    }
}

/// `grad[j] += sum_t g[t] x[t + a - j]`: gradient of `<g, kernel * x>` with
/// respect to the kernel taps, `a = grad.len() / 2`.
pub(crate) fn kernel_grad_acc(g: &[f64], x: &[f64], grad: &mut [f64]) {
    let p = grad.len() as isize;
    let a = p / 2;
    let n = g.len().min(x.len()) as isize;
    if is_sparse(x) {
        // grad[j] += x[s] g[s - a + j]
        for (s, &v) in x.iter().enumerate().take(n as usize) {
            if v == 0.0 {
                continue;
            }
            let base = s as isize - a;
            let j0 = (-base).max(0);
            let j1 = (n - base).min(p);
            if j0 >= j1 {
                continue;
            }
            let src = &g[(base + j0) as usize..(base + j1) as usize];
            for (o, gv) in grad[j0 as usize..j1 as usize].iter_mut().zip(src) {
                *o += v * gv;
            }
        }
        return;
    }
    if is_sparse(g) {
        // grad[j] += g[t] x[t + a - j]
        for (t, &v) in g.iter().enumerate().take(n as usize) {
            if v == 0.0 {
                continue;
            }
            let top = t as isize + a;
            let j0 = (top - n + 1).max(0);
            let j1 = (top + 1).min(p);
            for j in j0..j1 {
                grad[j as usize] += v * x[(top - j) as usize];
            }
        }
        return;
    }
    for (j, out) in grad.iter_mut().enumerate() {
        *out += dot_shifted(g, x, a - j as isize);
    }
}
