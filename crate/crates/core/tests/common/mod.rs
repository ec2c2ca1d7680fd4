//! Oracles shared by integration test targets.

use pulse_csc::csc::softplus;
use pulse_csc::unfolded::UnfoldedModel;

/// Straight-line evaluation of `½‖y − D⋆X_K‖² + λ‖X_K‖₁`, written directly
/// from the definitions with explicit index arithmetic.
pub fn reference_loss(model: &UnfoldedModel, yn: &[f64], y: &[f64], lambda: f64) -> f64 {
    let n = yn.len();
    let m = model.num_kernels();
    let conv = |k: &[f64], x: &[f64]| -> Vec<f64> {
        let a = (k.len() / 2) as isize;
        (0..n)
            .map(|t| {
                k.iter()
                    .enumerate()
                    .filter_map(|(j, w)| {
                        let s = t as isize + a - j as isize;
                        (s >= 0 && (s as usize) < n).then(|| w * x[s as usize])
                    })
                    .sum()
            })
            .collect()
    };
    let shrink = model.shrinkage();
    let mut x: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    for fold in 0..model.folds() {
        let w1 = model.w1_bank(fold);
        let l1 = model.w1_len();
        let mut z: Vec<Vec<f64>> = (0..m).map(|i| conv(&w1[i * l1..(i + 1) * l1], yn)).collect();
        if fold > 0 {
            let w2 = model.w2_bank(fold - 1);
            let l2 = model.w2_len();
            for (i, zi) in z.iter_mut().enumerate() {
                for (p, xp) in x.iter().enumerate() {
                    let off = (i * m + p) * l2;
                    for (a, b) in zi.iter_mut().zip(conv(&w2[off..off + l2], xp)) {
                        *a += b;
                    }
                }
            }
        }
        let raw = model.raw_thresholds(fold);
        x = z
            .iter()
            .enumerate()
            .map(|(i, zi)| zi.iter().map(|v| shrink.apply(*v, softplus(raw[i]))).collect())
            .collect();
    }
    let d = model.decoder();
    let mut yhat = vec![0.0; n];
    for (i, xi) in x.iter().enumerate() {
        for (a, b) in yhat.iter_mut().zip(conv(d.kernel(i), xi)) {
            *a += b;
        }
    }
    let rec: f64 = yhat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let l1: f64 = x.iter().flatten().map(|v| v.abs()).sum();
    0.5 * rec + lambda * l1
}
