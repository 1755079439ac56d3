use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore};

use super::{
    cst, nest, AttentionCache, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache,
    MultiHeadAttention, ParamView, Parameters, Scalar,
};

/// Inverted dropout. Returns the scaled keep mask, or `None` when inactive.
pub fn apply_dropout<'r, F: Scalar>(
    x: &mut Array2<F>,
    p: f64,
    rng: Option<&mut (dyn RngCore + 'r)>,
) -> Option<Array2<F>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = cst::<F>(1.0 / (1.0 - p));
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
        if rng.random_bool(p) {
            F::zero()
        } else {
            keep
        }
    });
    *x *= &mask;
    Some(mask)
}

/// Pre-LN encoder block:
/// `h = x + Drop(Attn(LN1(x)))`, `y = h + Drop(FFN(LN2(h)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock<F> {
    pub norm_attn: LayerNorm<F>,
    pub attention: MultiHeadAttention<F>,
    pub norm_ff: LayerNorm<F>,
    pub feed_forward: FeedForward<F>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<F> {
    norm_attn: LayerNormCache<F>,
    pub attention: AttentionCache<F>,
    attn_mask: Option<Array2<F>>,
    norm_ff: LayerNormCache<F>,
    feed_forward: FeedForwardCache<F>,
    ff_mask: Option<Array2<F>>,
}

impl<F: Scalar> EncoderBlock<F> {
    pub fn zeros(dim: usize, heads: usize, inner: usize) -> Self {
        Self {
            norm_attn: LayerNorm::new(dim),
            attention: MultiHeadAttention::zeros(dim, heads),
            norm_ff: LayerNorm::new(dim),
            feed_forward: FeedForward::zeros(dim, inner),
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, heads: usize, inner: usize, rng: &mut R) -> Self {
        Self {
            norm_attn: LayerNorm::new(dim),
            attention: MultiHeadAttention::init(dim, heads, rng),
            norm_ff: LayerNorm::new(dim),
            feed_forward: FeedForward::init(dim, inner, rng),
        }
    }

    pub fn forward<'r>(
        &self,
        x: ArrayView2<'_, F>,
        dropout: f64,
        mut rng: Option<&mut (dyn RngCore + 'r)>,
    ) -> (Array2<F>, BlockCache<F>) {
        let (a, norm_attn) = self.norm_attn.forward(x);
        let (mut att, attention) = self.attention.forward(a.view());
        let attn_mask = apply_dropout(&mut att, dropout, rng.as_deref_mut());
        let h = &x + &att;
        let (b, norm_ff) = self.norm_ff.forward(h.view());
        let (mut f, feed_forward) = self.feed_forward.forward(b.view());
        let ff_mask = apply_dropout(&mut f, dropout, rng.as_deref_mut());
        let y = h + &f;
        let cache = BlockCache {
            norm_attn,
            attention,
            attn_mask,
            norm_ff,
            feed_forward,
            ff_mask,
        };
        (y, cache)
    }

    pub fn backward(&self, cache: &BlockCache<F>, dy: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let mut df = dy.to_owned();
        if let Some(m) = &cache.ff_mask {
            df *= m;
        }
        let db = self.feed_forward.backward(&cache.feed_forward, df.view(), &mut grad.feed_forward);
        let mut dh = self.norm_ff.backward(&cache.norm_ff, db.view(), &mut grad.norm_ff);
        dh += &dy;
        let mut datt = dh.clone();
        if let Some(m) = &cache.attn_mask {
            datt *= m;
        }
        let da = self.attention.backward(&cache.attention, datt.view(), &mut grad.attention);
        let mut dx = self.norm_attn.backward(&cache.norm_attn, da.view(), &mut grad.norm_attn);
        dx += &dh;
        dx
    }
}

impl<F: Scalar> Parameters<F> for EncoderBlock<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("ln1", self.norm_attn.tensors());
        t.extend(nest("attn", self.attention.tensors()));
        t.extend(nest("ln2", self.norm_ff.tensors()));
        t.extend(nest("ff", self.feed_forward.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.norm_attn.tensors_mut();
        t.extend(self.attention.tensors_mut());
        t.extend(self.norm_ff.tensors_mut());
        t.extend(self.feed_forward.tensors_mut());
        t
    }
}
