use ndarray::{Array3, ArrayView3};

use super::Real;
use crate::linking::{LinkMatrix, MaskTensor};

/// `log(1 + Σ e^v)` and the softmax weights `e^v / (1 + Σ e^v)`.
fn log1p_sum_exp<T: Real>(values: &[T]) -> (T, Vec<T>) {
    let m = values.iter().fold(T::zero(), |a, &b| a.max(b));
    let base = (-m).exp();
    let exps: Vec<T> = values.iter().map(|&v| (v - m).exp()).collect();
    let s = base + exps.iter().copied().sum::<T>();
    (m + s.ln(), exps.into_iter().map(|e| e / s).collect())
}

/// Negative and negated positive scores of one channel's unmasked cells,
/// with their flat offsets.
fn split_cells<T: Real>(z: &[T], gold: &[u8], mask: &[u8], base: usize) -> (Vec<usize>, Vec<T>, Vec<usize>, Vec<T>) {
    let (mut neg_idx, mut neg, mut pos_idx, mut pos) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (o, &v) in z.iter().enumerate() {
        if mask[o] == 0 {
            continue;
        }
        if gold[o] != 0 {
            pos_idx.push(base + o);
            pos.push(-v);
        } else {
            neg_idx.push(base + o);
            neg.push(v);
        }
    }
    (neg_idx, neg, pos_idx, pos)
}

/// Per-channel `log(1 + Σ_neg e^Z) + log(1 + Σ_pos e^-Z)` over unmasked
/// cells, summed over channels.
pub fn circle_loss<T: Real>(z: ArrayView3<'_, T>, gold: &LinkMatrix, mask: &MaskTensor) -> T {
    circle_loss_with_grad(z, gold, mask).0
}

/// Loss and its gradient with respect to `z`; masked cells get zero gradient.
pub fn circle_loss_with_grad<T: Real>(z: ArrayView3<'_, T>, gold: &LinkMatrix, mask: &MaskTensor) -> (T, Array3<T>) {
    let flat = z.as_slice().expect("standard layout");
    let cells = z.shape()[1] * z.shape()[2];
    let mut grad = Array3::zeros(z.raw_dim());
    let g = grad.as_slice_mut().expect("standard layout");
    let mut loss = T::zero();
    for c in 0..z.shape()[0] {
        let r = c * cells..(c + 1) * cells;
        let (neg_idx, neg, pos_idx, pos) =
            split_cells(&flat[r.clone()], &gold.as_slice()[r.clone()], &mask.as_slice()[r], c * cells);
        let (ln, wn) = log1p_sum_exp(&neg);
        let (lp, wp) = log1p_sum_exp(&pos);
        for (o, w) in neg_idx.into_iter().zip(wn) {
            g[o] = w;
        }
        for (o, w) in pos_idx.into_iter().zip(wp) {
            g[o] = -w;
        }
        loss += ln + lp;
    }
    (loss, grad)
}
