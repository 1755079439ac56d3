use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{slice_mut, uniform_init, ParamView, Parameters, Scalar};

/// Affine map `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `±1/sqrt(input)` for weights and bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: uniform_init(rng, (input, output), bound),
            bias: uniform_init(rng, output, bound),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`.
    pub fn backward(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    /// Like [`Linear::backward`] without computing the input gradient.
    pub fn backward_params(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, grad: &mut Self) {
        general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

impl<F: Scalar> Parameters<F> for Linear<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        vec![
            ParamView::new("weight", &self.weight),
            ParamView::new("bias", &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![slice_mut(&mut self.weight), slice_mut(&mut self.bias)]
    }
}
