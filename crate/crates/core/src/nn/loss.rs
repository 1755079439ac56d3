use ndarray::{Array2, ArrayView1, ArrayView2};

use super::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Scalar>(logits: ArrayView2<'_, F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn log_softmax_row<F: Scalar>(row: ArrayView1<'_, F>) -> Vec<F> {
    let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
    row.iter().map(|&v| v - lse).collect()
}

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax_rows<F: Scalar>(m: ArrayView2<'_, F>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Weighted softmax cross-entropy. Returns `Σ_i w_i · -log p_i[t_i]` and its
/// gradient with respect to the logits. Rows with zero weight contribute
/// nothing.
pub fn cross_entropy<F: Scalar>(
    logits: ArrayView2<'_, F>,
    targets: &[usize],
    weights: &[F],
) -> (F, Array2<F>) {
    assert_eq!(logits.nrows(), targets.len());
    assert_eq!(logits.nrows(), weights.len());
    let mut grad = softmax_rows(logits);
    let mut loss = F::zero();
    for ((mut g, &t), &w) in grad.rows_mut().into_iter().zip(targets).zip(weights) {
        if w == F::zero() {
            g.fill(F::zero());
            continue;
        }
        loss -= w * g[t].max(F::min_positive_value()).ln();
        g[t] -= F::one();
        g.mapv_inplace(|v| v * w);
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        let p = softmax_rows(array![[0.0f64, 0.0, 0.0]].view());
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_rows(array![[2f64.ln(), 0.0, 0.0]].view());
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((p[[0, 1]] - 0.25).abs() < 1e-15);
        let shifted = softmax_rows(array![[1000.0 + 2f64.ln(), 1000.0, 1000.0]].view());
        for (a, b) in p.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax_rows(array![[1.0f64, 3.0, 3.0], [2.0, 2.0, 2.0]].view()), vec![1, 0]);
    }

    #[test]
    fn zero_weight_rows_are_inert() {
        let (loss, g) = cross_entropy(array![[1.0f64, 2.0]].view(), &[0], &[0.0]);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
