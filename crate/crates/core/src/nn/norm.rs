use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::{cst, slice_mut, ParamView, Parameters, Scalar};

const EPS: f64 = 1e-5;

/// Layer normalization over the feature axis with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<F> {
    normalized: Array2<F>,
    inv_std: Array1<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, LayerNormCache<F>) {
        let d = cst::<F>(x.ncols() as f64);
        let eps = cst::<F>(EPS);
        let mut normalized = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<F>() / d;
            let is = F::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * is);
            *s = is;
        }
        let out = &normalized * &self.gamma + &self.beta;
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let xhat = &cache.normalized;
        grad.gamma += &(&dy * xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let d = cst::<F>(xhat.ncols() as f64);
        let dxhat = &dy * &self.gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        Zip::from(dx.rows_mut())
            .and(dxhat.rows())
            .and(xhat.rows())
            .and(&cache.inv_std)
            .for_each(|mut out, g, xh, &is| {
                let sum_g = g.sum();
                let sum_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<F>();
                Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| {
                    *o = is / d * (d * gi - sum_g - xi * sum_gx);
                });
            });
        dx
    }
}

impl<F: Scalar> Parameters<F> for LayerNorm<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        vec![
            ParamView::new("gamma", &self.gamma),
            ParamView::new("beta", &self.beta),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![slice_mut(&mut self.gamma), slice_mut(&mut self.beta)]
    }
}
