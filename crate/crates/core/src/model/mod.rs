//! The two-stage decoder: a BiGRU geometric stage, confidence masking, and a
//! Transformer-encoder semantic stage acting as a masked character LM.

mod decode;
mod geometric;
mod semantic;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{VocabSpec, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::nn::{nest, ParamView, Parameters, Scalar};

pub use decode::{
    confidence_mask, decode_with, mask_decisions, MaskedInput, normalize_points, pixel_prediction_map,
    softmax_confidence, DecodedText, Decoder, GeometricOnly, GeometricStage, MaskDecision,
    PredictionGrid, Provenance, SemanticStage,
};
pub use geometric::{GeometricCache, GeometricDecoder};
pub use semantic::{LmHead, SemanticCache, SemanticDecoder, SemanticOutput};

pub const DEFAULT_TAU: f64 = 0.45;
pub const DEFAULT_MAX_LEN: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.1;
/// Feed-forward inner width as a multiple of the hidden size.
pub const FF_MULTIPLIER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Stacked layers per decoder.
    pub layers: usize,
    /// Hidden size `d_h`; each GRU direction uses half of it.
    pub hidden: usize,
    pub heads: usize,
    pub vocab_size: usize,
    /// Confidence threshold for masking.
    pub tau: f64,
    pub max_len: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Head count follows `hidden / 64`, at least one.
    pub fn new(layers: usize, hidden: usize) -> Self {
        Self {
            layers,
            hidden,
            heads: (hidden / 64).max(1),
            vocab_size: VOCAB_SIZE,
            tau: DEFAULT_TAU,
            max_len: DEFAULT_MAX_LEN,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return fail(format!("hidden size {} must be even and positive", self.hidden));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return fail(format!("hidden size {} not divisible by {} heads", self.hidden, self.heads));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail(format!("tau {} must lie in (0, 1)", self.tau));
        }
        if self.vocab_size != VOCAB_SIZE {
            return fail(format!("vocab size {} must be {VOCAB_SIZE}", self.vocab_size));
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn ff_inner(&self) -> usize {
        self.hidden * FF_MULTIPLIER
    }
}

/// Geometric and semantic decoders plus the settings that bind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SancdModel<F> {
    pub config: ModelConfig,
    pub vocab: VocabSpec,
    pub geometric: GeometricDecoder<F>,
    pub semantic: SemanticDecoder<F>,
}

impl<F: Scalar> SancdModel<F> {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, vocab: VocabSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Config("vocabulary size disagrees with the model".into()));
        }
        let geometric = GeometricDecoder::init(&config, rng);
        let semantic = SemanticDecoder::init(&config, rng);
        Ok(Self {
            config,
            vocab,
            geometric,
            semantic,
        })
    }

    pub fn zeros(config: ModelConfig, vocab: VocabSpec) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            geometric: GeometricDecoder::zeros(&config),
            semantic: SemanticDecoder::zeros(&config),
            config,
            vocab,
        })
    }

    /// Same model in another element type.
    pub fn cast<G: Scalar>(&self) -> SancdModel<G> {
        let mut out = SancdModel::<G>::zeros(self.config.clone(), self.vocab.clone())
            .expect("validated config");
        crate::nn::copy_params(&mut out.geometric, &self.geometric);
        crate::nn::copy_params(&mut out.semantic, &self.semantic);
        out
    }

    pub fn tau(&self) -> F {
        F::from_f64(self.config.tau).expect("tau")
    }
}

impl<F: Scalar> Parameters<F> for SancdModel<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut t = nest("geometric", self.geometric.tensors());
        t.extend(nest("semantic", self.semantic.tensors()));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.geometric.tensors_mut();
        t.extend(self.semantic.tensors_mut());
        t
    }
}
