use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::ModelConfig;
use crate::nn::{nest, BiGruCache, BiGruLayer, Linear, ParamView, Parameters, Scalar};

/// Coordinates -> linear projection -> stacked BiGRU -> per-position logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricDecoder<F> {
    pub input: Linear<F>,
    pub layers: Vec<BiGruLayer<F>>,
    pub head: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct GeometricCache<F> {
    coords: Array2<F>,
    layers: Vec<BiGruCache<F>>,
    top: Array2<F>,
}

impl<F: Scalar> GeometricDecoder<F> {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.hidden;
        Self {
            input: Linear::init(2, d, rng),
            layers: (0..cfg.layers).map(|_| BiGruLayer::init(d, d / 2, rng)).collect(),
            head: Linear::init(d, cfg.vocab_size, rng),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden;
        Self {
            input: Linear::zeros(2, d),
            layers: (0..cfg.layers).map(|_| BiGruLayer::zeros(d, d / 2)).collect(),
            head: Linear::zeros(d, cfg.vocab_size),
        }
    }

    pub fn forward(&self, coords: ArrayView2<'_, F>) -> Array2<F> {
        self.forward_cached(coords).0
    }

    pub fn forward_cached(&self, coords: ArrayView2<'_, F>) -> (Array2<F>, GeometricCache<F>) {
        let mut h = self.input.forward(coords);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, c) = layer.forward(h.view());
            caches.push(c);
            h = out;
        }
        let logits = self.head.forward(h.view());
        let cache = GeometricCache {
            coords: coords.to_owned(),
            layers: caches,
            top: h,
        };
        (logits, cache)
    }

    pub fn backward(&self, cache: &GeometricCache<F>, d_logits: ArrayView2<'_, F>, grad: &mut Self) {
        let mut dh = self.head.backward(cache.top.view(), d_logits, &mut grad.head);
        for ((layer, c), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            dh = layer.backward(c, dh.view(), g);
        }
        self.input.backward_params(cache.coords.view(), dh.view(), &mut grad.input);
    }
}

impl<F: Scalar> Parameters<F> for GeometricDecoder<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("input", self.input.tensors());
        for (i, l) in self.layers.iter().enumerate() {
            t.extend(nest(&format!("bigru{i}"), l.tensors()));
        }
        t.extend(nest("head", self.head.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.input.tensors_mut();
        for l in &mut self.layers {
            t.extend(l.tensors_mut());
        }
        t.extend(self.head.tensors_mut());
        t
    }
}
