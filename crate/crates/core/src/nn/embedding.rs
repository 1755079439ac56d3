use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{normal_init, slice_mut, ParamView, Parameters, Scalar};

/// Lookup table mapping token indices to rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F> {
    pub table: Array2<F>,
}

impl<F: Scalar> Embedding<F> {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self {
            table: Array2::zeros((vocab, dim)),
        }
    }

    pub fn init<R: Rng + ?Sized>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            table: normal_init(rng, (vocab, dim), 1.0),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn forward(&self, indices: &[usize]) -> Array2<F> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
            row.assign(&self.table.row(i));
        }
        out
    }

    pub fn backward(&self, indices: &[usize], dy: ArrayView2<'_, F>, grad: &mut Self) {
        for (row, &i) in dy.rows().into_iter().zip(indices) {
            let mut g = grad.table.row_mut(i);
            g += &row;
        }
    }
}

impl<F: Scalar> Parameters<F> for Embedding<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        vec![ParamView::new("table", &self.table)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![slice_mut(&mut self.table)]
    }
}
