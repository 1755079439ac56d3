use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{cst, nest, softmax_rows, Linear, ParamView, Parameters, Scalar};

/// Bidirectional (unmasked) multi-head scaled dot-product self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<F> {
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub output: Linear<F>,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    input: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Per-head attention weights, each `(n, n)`.
    pub weights: Vec<Array2<F>>,
    context: Array2<F>,
}

impl<F: Scalar> MultiHeadAttention<F> {
    pub fn zeros(dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            query: Linear::zeros(dim, dim),
            key: Linear::zeros(dim, dim),
            value: Linear::zeros(dim, dim),
            output: Linear::zeros(dim, dim),
            heads,
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            query: Linear::init(dim, dim, rng),
            key: Linear::init(dim, dim, rng),
            value: Linear::init(dim, dim, rng),
            output: Linear::init(dim, dim, rng),
            heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.query.output_dim() / self.heads
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, AttentionCache<F>) {
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let dk = self.head_dim();
        let scale = F::one() / cst::<F>(dk as f64).sqrt();
        let mut context = Array2::zeros(q.raw_dim());
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let a = softmax_rows(scores.view());
            context.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            weights.push(a);
        }
        let out = self.output.forward(context.view());
        let cache = AttentionCache {
            input: x.to_owned(),
            q,
            k,
            v,
            weights,
            context,
        };
        (out, cache)
    }

    pub fn backward(&self, cache: &AttentionCache<F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let d_context = self.output.backward(cache.context.view(), dy, &mut grad.output);
        let dk = self.head_dim();
        let scale = F::one() / cst::<F>(dk as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dkm = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, a) in cache.weights.iter().enumerate() {
            let cols = s![.., h * dk..(h + 1) * dk];
            let d_ctx = d_context.slice(cols);
            let da = d_ctx.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&d_ctx));
            // softmax backward: dS = A ⊙ (dA - rowsum(dA ⊙ A))
            let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (a * &(&da - &row_dot)) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dkm.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let x = cache.input.view();
        let mut dx = self.query.backward(x, dq.view(), &mut grad.query);
        dx += &self.key.backward(x, dkm.view(), &mut grad.key);
        dx += &self.value.backward(x, dv.view(), &mut grad.value);
        dx
    }
}

impl<F: Scalar> Parameters<F> for MultiHeadAttention<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("query", self.query.tensors());
        t.extend(nest("key", self.key.tensors()));
        t.extend(nest("value", self.value.tensors()));
        t.extend(nest("output", self.output.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.query.tensors_mut();
        t.extend(self.key.tensors_mut());
        t.extend(self.value.tensors_mut());
        t.extend(self.output.tensors_mut());
        t
    }
}
