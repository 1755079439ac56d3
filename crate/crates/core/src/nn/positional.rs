use ndarray::Array2;

use super::{cst, Scalar};

/// Fixed sinusoidal position table of shape `(len, dim)`:
/// `PE[p, 2i] = sin(p / 10000^(2i/dim))`, `PE[p, 2i+1] = cos(..)`.
pub fn sinusoidal_encoding<F: Scalar>(len: usize, dim: usize) -> Array2<F> {
    Array2::from_shape_fn((len, dim), |(pos, j)| {
        let pair = (j / 2 * 2) as f64;
        let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
        cst(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
