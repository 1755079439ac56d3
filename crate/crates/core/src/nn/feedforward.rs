use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{cst, nest, tanh, Linear, ParamView, Parameters, Scalar};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<F: Scalar>(x: F) -> F {
    let half = cst::<F>(0.5);
    let inner = cst::<F>(GELU_C) * (x + cst::<F>(GELU_A) * x * x * x);
    half * x * (F::one() + tanh(inner))
}

pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let half = cst::<F>(0.5);
    let c = cst::<F>(GELU_C);
    let a = cst::<F>(GELU_A);
    let inner = c * (x + a * x * x * x);
    let t = tanh(inner);
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + cst::<F>(3.0) * a * x * x)
}

/// Position-wise `Linear -> GELU -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<F> {
    pub up: Linear<F>,
    pub down: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache<F> {
    input: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

impl<F: Scalar> FeedForward<F> {
    pub fn zeros(dim: usize, inner: usize) -> Self {
        Self {
            up: Linear::zeros(dim, inner),
            down: Linear::zeros(inner, dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, inner: usize, rng: &mut R) -> Self {
        Self {
            up: Linear::init(dim, inner, rng),
            down: Linear::init(inner, dim, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, FeedForwardCache<F>) {
        let pre = self.up.forward(x);
        let act = pre.mapv(gelu);
        let out = self.down.forward(act.view());
        (out, FeedForwardCache { input: x.to_owned(), pre, act })
    }

    pub fn backward(&self, cache: &FeedForwardCache<F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let d_act = self.down.backward(cache.act.view(), dy, &mut grad.down);
        let d_pre = d_act * &cache.pre.mapv(gelu_grad);
        self.up.backward(cache.input.view(), d_pre.view(), &mut grad.up)
    }
}

impl<F: Scalar> Parameters<F> for FeedForward<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("up", self.up.tensors());
        t.extend(nest("down", self.down.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.up.tensors_mut();
        t.extend(self.down.tensors_mut());
        t
    }
}
