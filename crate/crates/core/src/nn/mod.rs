//! Minimal differentiable layers with explicit forward and backward passes.
//!
//! Every layer processes one sequence at a time as an `(n, features)` matrix.
//! Forward passes return the output together with whatever the backward pass
//! needs; backward passes accumulate parameter gradients into a value of the
//! layer's own type and return the gradient with respect to the input.
//! Layers are generic over [`Scalar`] so the same code runs in `f32` for
//! training and serving and in `f64` for finite-difference checks.

mod attention;
mod embedding;
mod feedforward;
mod gru;
mod linear;
mod loss;
mod norm;
mod positional;
mod transformer;

use std::fmt::{Debug, Display};

use ndarray::{ArrayBase, Data, DataMut, Dimension, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub use attention::{AttentionCache, MultiHeadAttention};
pub use embedding::Embedding;
pub use feedforward::{gelu, gelu_grad, FeedForward, FeedForwardCache};
pub use gru::{BiGruCache, BiGruLayer, GruCache, GruDirection};
pub use linear::Linear;
pub use loss::{argmax_rows, cross_entropy, log_softmax_row, softmax_rows};
pub use norm::{LayerNorm, LayerNormCache};
pub use positional::sinusoidal_encoding;
pub use transformer::{apply_dropout, BlockCache, EncoderBlock};

/// Floating-point element type of every tensor.
pub trait Scalar: NdFloat + FromPrimitive + Default + std::iter::Sum + Debug + Display {}

impl<T: NdFloat + FromPrimitive + Default + std::iter::Sum + Debug + Display> Scalar for T {}

pub(crate) fn cst<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

/// Rational minimax approximation of tanh, within a few ulp in `f32` and
/// branch-free so loops over it vectorize.
fn tanh_f32(x: f32) -> f32 {
    const A: [f32; 7] = [
        4.893_524_6e-3,
        6.372_619_3e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_672e-11,
        2.000_188e-13,
        -2.760_768_5e-16,
    ];
    const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347e-4, 1.198_258_4e-6];
    let x = x.clamp(-7.905_311, 7.905_311);
    let x2 = x * x;
    let mut p = A[6];
    for &a in A[..6].iter().rev() {
        p = p * x2 + a;
    }
    let q = ((B[3] * x2 + B[2]) * x2 + B[1]) * x2 + B[0];
    x * p / q
}

/// `tanh` that takes the fast path for `f32`; `f64` keeps the exact libm call.
pub fn tanh<F: Scalar>(x: F) -> F {
    if std::any::TypeId::of::<F>() == std::any::TypeId::of::<f32>() {
        let v = x.to_f32().expect("f32");
        F::from_f32(tanh_f32(v)).expect("f32")
    } else {
        x.tanh()
    }
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    let half = cst::<F>(0.5);
    half + half * tanh(half * x)
}

/// A borrowed parameter tensor with its hierarchical name.
#[derive(Debug, Clone)]
pub struct ParamView<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

impl<'a, F: Scalar> ParamView<'a, F> {
    pub fn new<S, D>(name: &str, a: &'a ArrayBase<S, D>) -> Self
    where
        S: Data<Elem = F>,
        D: Dimension,
    {
        Self {
            name: name.to_string(),
            shape: a.shape().to_vec(),
            data: a.as_slice().expect("parameters are contiguous"),
        }
    }
}

pub(crate) fn slice_mut<S, D, F>(a: &mut ArrayBase<S, D>) -> &mut [F]
where
    S: DataMut<Elem = F>,
    D: Dimension,
{
    a.as_slice_mut().expect("parameters are contiguous")
}

/// Prefixes child tensor names with `prefix.`.
pub fn nest<'a, F>(prefix: &str, views: Vec<ParamView<'a, F>>) -> Vec<ParamView<'a, F>> {
    views
        .into_iter()
        .map(|mut v| {
            v.name = format!("{prefix}.{}", v.name);
            v
        })
        .collect()
}

/// Anything holding trainable tensors. Both methods must enumerate the same
/// tensors in the same order.
pub trait Parameters<F: Scalar> {
    fn tensors(&self) -> Vec<ParamView<'_, F>>;
    fn tensors_mut(&mut self) -> Vec<&mut [F]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn fill(&mut self, value: F) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn scale(&mut self, factor: F) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Elementwise `self += other`.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s.data).for_each(|(d, &v)| *d += v);
        }
    }

    /// Elementwise `self += alpha * other`.
    fn add_scaled(&mut self, other: &Self, alpha: F)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s.data).for_each(|(d, &v)| *d += alpha * v);
        }
    }

    fn squared_norm(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// All parameters flattened in enumeration order.
    fn flatten(&self) -> Vec<F> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

/// A zero-filled gradient buffer shaped like `p`.
pub fn zeros_like<F: Scalar, P: Parameters<F> + Clone>(p: &P) -> P {
    let mut g = p.clone();
    g.fill(F::zero());
    g
}

/// Copies every tensor of `src` into `dst`, converting element types.
/// Both must have identical structure.
pub fn copy_params<F: Scalar, G: Scalar>(dst: &mut impl Parameters<F>, src: &impl Parameters<G>) {
    let src = src.tensors();
    let dst = dst.tensors_mut();
    assert_eq!(src.len(), dst.len(), "parameter structure mismatch");
    for (d, s) in dst.into_iter().zip(src) {
        assert_eq!(d.len(), s.data.len(), "tensor {} size mismatch", s.name);
        for (a, &b) in d.iter_mut().zip(s.data) {
            *a = F::from_f64(b.to_f64().expect("finite")).expect("representable");
        }
    }
}

pub fn uniform_init<F: Scalar, R: Rng + ?Sized, Sh: ndarray::ShapeBuilder>(
    rng: &mut R,
    shape: Sh,
    bound: f64,
) -> ndarray::Array<F, Sh::Dim> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    ndarray::Array::from_shape_simple_fn(shape, || cst::<F>(dist.sample(rng)))
}

pub fn normal_init<F: Scalar, R: Rng + ?Sized, Sh: ndarray::ShapeBuilder>(
    rng: &mut R,
    shape: Sh,
    std: f64,
) -> ndarray::Array<F, Sh::Dim> {
    let dist = Normal::new(0.0, std).expect("valid std");
    ndarray::Array::from_shape_simple_fn(shape, || cst::<F>(dist.sample(rng)))
}
