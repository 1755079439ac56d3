use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, RngCore};

use super::ModelConfig;
use crate::nn::{
    nest, sinusoidal_encoding, BlockCache, Embedding, EncoderBlock, LayerNorm, LayerNormCache,
    Linear, ParamView, Parameters, Scalar,
};

/// LayerNorm followed by a projection to vocabulary logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LmHead<F> {
    pub norm: LayerNorm<F>,
    pub proj: Linear<F>,
}

impl<F: Scalar> LmHead<F> {
    fn init<R: Rng + ?Sized>(d: usize, v: usize, rng: &mut R) -> Self {
        Self {
            norm: LayerNorm::new(d),
            proj: Linear::init(d, v, rng),
        }
    }

    fn zeros(d: usize, v: usize) -> Self {
        Self {
            norm: LayerNorm::new(d),
            proj: Linear::zeros(d, v),
        }
    }

    fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, LayerNormCache<F>, Array2<F>) {
        let (n, c) = self.norm.forward(x);
        (self.proj.forward(n.view()), c, n)
    }

    fn backward(&self, norm_cache: &LayerNormCache<F>, normed: &Array2<F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let dn = self.proj.backward(normed.view(), dy, &mut grad.proj);
        self.norm.backward(norm_cache, dn.view(), &mut grad.norm)
    }
}

impl<F: Scalar> Parameters<F> for LmHead<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("norm", self.norm.tensors());
        t.extend(nest("proj", self.proj.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.norm.tensors_mut();
        t.extend(self.proj.tensors_mut());
        t
    }
}

/// Character embedding with sinusoidal positions, pre-LN encoder blocks, a
/// final LM head, and auxiliary LM heads after each intermediate block.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDecoder<F> {
    pub embedding: Embedding<F>,
    pub blocks: Vec<EncoderBlock<F>>,
    pub aux_heads: Vec<LmHead<F>>,
    pub head: LmHead<F>,
    positional: Array2<F>,
    dropout: f64,
}

#[derive(Debug, Clone)]
pub struct SemanticOutput<F> {
    pub logits: Array2<F>,
    /// One entry per intermediate block.
    pub aux_logits: Vec<Array2<F>>,
}

type HeadCache<F> = (LayerNormCache<F>, Array2<F>);

#[derive(Debug, Clone)]
pub struct SemanticCache<F> {
    pub blocks: Vec<BlockCache<F>>,
    aux: Vec<HeadCache<F>>,
    head: HeadCache<F>,
}

impl<F: Scalar> SemanticDecoder<F> {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, v) = (cfg.hidden, cfg.vocab_size);
        Self {
            embedding: Embedding::init(v, d, rng),
            blocks: (0..cfg.layers)
                .map(|_| EncoderBlock::init(d, cfg.heads, cfg.ff_inner(), rng))
                .collect(),
            aux_heads: (1..cfg.layers).map(|_| LmHead::init(d, v, rng)).collect(),
            head: LmHead::init(d, v, rng),
            positional: sinusoidal_encoding(cfg.max_len, d),
            dropout: cfg.dropout,
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, v) = (cfg.hidden, cfg.vocab_size);
        Self {
            embedding: Embedding::zeros(v, d),
            blocks: (0..cfg.layers)
                .map(|_| EncoderBlock::zeros(d, cfg.heads, cfg.ff_inner()))
                .collect(),
            aux_heads: (1..cfg.layers).map(|_| LmHead::zeros(d, v)).collect(),
            head: LmHead::zeros(d, v),
            positional: sinusoidal_encoding(cfg.max_len, d),
            dropout: cfg.dropout,
        }
    }

    pub fn max_len(&self) -> usize {
        self.positional.nrows()
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.dropout = p;
    }

    /// `Embed(index) + position`. Panics if `indices` exceeds `max_len`.
    pub fn embed(&self, indices: &[usize]) -> Array2<F> {
        self.embedding.forward(indices) + &self.positional.slice(s![..indices.len(), ..])
    }

    pub fn embed_backward(&self, indices: &[usize], d_embedded: ArrayView2<'_, F>, grad: &mut Self) {
        self.embedding.backward(indices, d_embedded, &mut grad.embedding);
    }

    /// Eval-mode forward over an already embedded sequence.
    pub fn forward(&self, embedded: ArrayView2<'_, F>) -> SemanticOutput<F> {
        self.forward_cached(embedded, None).0
    }

    /// Dropout is active only when `rng` is provided.
    pub fn forward_cached<'r>(
        &self,
        embedded: ArrayView2<'_, F>,
        mut rng: Option<&mut (dyn RngCore + 'r)>,
    ) -> (SemanticOutput<F>, SemanticCache<F>) {
        let mut h = embedded.to_owned();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut aux_logits = Vec::with_capacity(self.aux_heads.len());
        let mut aux = Vec::with_capacity(self.aux_heads.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let (out, c) = block.forward(h.view(), self.dropout, rng.as_deref_mut());
            blocks.push(c);
            h = out;
            if let Some(head) = self.aux_heads.get(i) {
                let (logits, nc, normed) = head.forward(h.view());
                aux_logits.push(logits);
                aux.push((nc, normed));
            }
        }
        let (logits, nc, normed) = self.head.forward(h.view());
        let cache = SemanticCache {
            blocks,
            aux,
            head: (nc, normed),
        };
        (SemanticOutput { logits, aux_logits }, cache)
    }

    /// Returns the gradient with respect to the embedded input. `d_aux` may be
    /// empty (no auxiliary loss) or hold one entry per auxiliary head.
    pub fn backward(
        &self,
        cache: &SemanticCache<F>,
        d_logits: ArrayView2<'_, F>,
        d_aux: &[Array2<F>],
        grad: &mut Self,
    ) -> Array2<F> {
        assert!(d_aux.is_empty() || d_aux.len() == self.aux_heads.len());
        let (nc, normed) = &cache.head;
        let mut dh = self.head.backward(nc, normed, d_logits, &mut grad.head);
        for i in (0..self.blocks.len()).rev() {
            if let (Some(head), Some(d)) = (self.aux_heads.get(i), d_aux.get(i)) {
                let (nc, normed) = &cache.aux[i];
                dh += &head.backward(nc, normed, d.view(), &mut grad.aux_heads[i]);
            }
            dh = self.blocks[i].backward(&cache.blocks[i], dh.view(), &mut grad.blocks[i]);
        }
        dh
    }
}

impl<F: Scalar> Parameters<F> for SemanticDecoder<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("embedding", self.embedding.tensors());
        for (i, b) in self.blocks.iter().enumerate() {
            t.extend(nest(&format!("block{i}"), b.tensors()));
        }
        for (i, h) in self.aux_heads.iter().enumerate() {
            t.extend(nest(&format!("aux{i}"), h.tensors()));
        }
        t.extend(nest("head", self.head.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.embedding.tensors_mut();
        for b in &mut self.blocks {
            t.extend(b.tensors_mut());
        }
        for h in &mut self.aux_heads {
            t.extend(h.tensors_mut());
        }
        t.extend(self.head.tensors_mut());
        t
    }
}
