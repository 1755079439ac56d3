use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{GeometricDecoder, SancdModel, SemanticDecoder};
use crate::data::{SessionMeta, TouchPoint, VocabSpec};
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, cst, softmax_rows, Scalar};

/// Produces per-position logits from normalized coordinates.
pub trait GeometricStage<F> {
    fn geometric_logits(&self, coords: ArrayView2<'_, F>) -> Array2<F>;
}

/// Embeds discrete indices and maps the embedded sequence to logits.
pub trait SemanticStage<F> {
    fn embed_indices(&self, indices: &[usize]) -> Array2<F>;
    fn semantic_logits(&self, embedded: ArrayView2<'_, F>) -> Array2<F>;
}

impl<F: Scalar> GeometricStage<F> for GeometricDecoder<F> {
    fn geometric_logits(&self, coords: ArrayView2<'_, F>) -> Array2<F> {
        self.forward(coords)
    }
}

impl<F: Scalar> SemanticStage<F> for SemanticDecoder<F> {
    fn embed_indices(&self, indices: &[usize]) -> Array2<F> {
        self.embed(indices)
    }

    fn semantic_logits(&self, embedded: ArrayView2<'_, F>) -> Array2<F> {
        self.forward(embedded).logits
    }
}

/// `(x / screen_w, y / screen_h)` as an `n x 2` matrix.
pub fn normalize_points<F: Scalar>(points: &[TouchPoint], meta: &SessionMeta) -> Array2<F> {
    let (w, h) = (f64::from(meta.screen_w), f64::from(meta.screen_h));
    Array2::from_shape_fn((points.len(), 2), |(i, j)| {
        let p = points[i];
        cst(if j == 0 { p.x / w } else { p.y / h })
    })
}

/// Row-wise softmax probabilities.
pub fn softmax_confidence<F: Scalar>(logits: ArrayView2<'_, F>) -> Array2<F> {
    softmax_rows(logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskDecision {
    Kept(usize),
    Masked,
}

/// Keeps the argmax (lowest index on ties) when its probability is at least `tau`.
pub fn mask_decisions<F: Scalar>(probs: ArrayView2<'_, F>, tau: F) -> Vec<MaskDecision> {
    argmax_rows(probs)
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            if probs[[i, j]] >= tau {
                MaskDecision::Kept(j)
            } else {
                MaskDecision::Masked
            }
        })
        .collect()
}

/// Semantic-stage input after confidence masking.
#[derive(Debug, Clone)]
pub struct MaskedInput<F> {
    pub indices: Vec<usize>,
    pub masked: Vec<usize>,
    pub embedded: Array2<F>,
}

pub fn confidence_mask<F: Scalar, S: SemanticStage<F> + ?Sized>(
    probs: ArrayView2<'_, F>,
    tau: F,
    semantic: &S,
    mask_index: usize,
) -> MaskedInput<F> {
    let mut masked = Vec::new();
    let indices: Vec<usize> = mask_decisions(probs, tau)
        .into_iter()
        .enumerate()
        .map(|(i, d)| match d {
            MaskDecision::Kept(j) => j,
            MaskDecision::Masked => {
                masked.push(i);
                mask_index
            }
        })
        .collect();
    let embedded = semantic.embed_indices(&indices);
    MaskedInput {
        indices,
        masked,
        embedded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Geometric prediction cleared the threshold.
    Kept,
    /// Position was masked and filled by the semantic stage.
    MaskedFilled,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedText {
    pub indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl DecodedText {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn text(&self, vocab: &VocabSpec) -> String {
        vocab.decode_text(&self.indices)
    }
}

fn check_length(n: usize, max: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot decode an empty point sequence".into()));
    }
    if n > max {
        return Err(Error::SequenceLength { len: n, max });
    }
    Ok(())
}

/// Geometric logits, confidence masking, semantic logits, per-position argmax.
pub fn decode_with<F, G, S>(
    geometric: &G,
    semantic: &S,
    points: &[TouchPoint],
    meta: &SessionMeta,
    tau: F,
    mask_index: usize,
    max_len: usize,
) -> Result<DecodedText>
where
    F: Scalar,
    G: GeometricStage<F> + ?Sized,
    S: SemanticStage<F> + ?Sized,
{
    check_length(points.len(), max_len)?;
    let coords = normalize_points::<F>(points, meta);
    let probs = softmax_confidence(geometric.geometric_logits(coords.view()).view());
    let input = confidence_mask(probs.view(), tau, semantic, mask_index);
    let logits = semantic.semantic_logits(input.embedded.view());
    let mut provenance = vec![Provenance::Kept; points.len()];
    for &i in &input.masked {
        provenance[i] = Provenance::MaskedFilled;
    }
    Ok(DecodedText {
        indices: argmax_rows(logits.view()),
        provenance,
    })
}

/// Anything that turns a touch sequence into characters.
pub trait Decoder: Send + Sync {
    fn decode(&self, points: &[TouchPoint], meta: &SessionMeta) -> Result<DecodedText>;
    fn max_len(&self) -> usize;
    fn vocab(&self) -> &VocabSpec;
}

impl<F: Scalar> SancdModel<F> {
    pub fn decode(&self, points: &[TouchPoint], meta: &SessionMeta) -> Result<DecodedText> {
        decode_with(
            &self.geometric,
            &self.semantic,
            points,
            meta,
            self.tau(),
            self.vocab.mask_index(),
            self.config.max_len,
        )
    }

    /// Argmax of the geometric stage alone.
    pub fn decode_geometric(&self, points: &[TouchPoint], meta: &SessionMeta) -> Result<DecodedText> {
        check_length(points.len(), self.config.max_len)?;
        let logits = self.geometric.forward(normalize_points::<F>(points, meta).view());
        Ok(DecodedText {
            indices: argmax_rows(logits.view()),
            provenance: vec![Provenance::Kept; points.len()],
        })
    }
}

impl<F: Scalar> Decoder for SancdModel<F> {
    fn decode(&self, points: &[TouchPoint], meta: &SessionMeta) -> Result<DecodedText> {
        SancdModel::decode(self, points, meta)
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn vocab(&self) -> &VocabSpec {
        &self.vocab
    }
}

/// The geometric-only ablation of a full model.
#[derive(Debug, Clone, Copy)]
pub struct GeometricOnly<'a, F>(pub &'a SancdModel<F>);

impl<F: Scalar> Decoder for GeometricOnly<'_, F> {
    fn decode(&self, points: &[TouchPoint], meta: &SessionMeta) -> Result<DecodedText> {
        self.0.decode_geometric(points, meta)
    }

    fn max_len(&self) -> usize {
        self.0.config.max_len
    }

    fn vocab(&self) -> &VocabSpec {
        &self.0.vocab
    }
}

/// Predicted next character for a candidate tap at each grid cell centre.
/// `chars[row][col]` covers `x = col * step`, `y = row * step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub w: u32,
    pub h: u32,
    pub step: u32,
    pub chars: Vec<Vec<char>>,
}

impl PredictionGrid {
    pub fn rows(&self) -> usize {
        self.chars.len()
    }

    pub fn cols(&self) -> usize {
        self.chars.first().map_or(0, Vec::len)
    }
}

pub fn pixel_prediction_map<D: Decoder + ?Sized>(
    decoder: &D,
    prefix: &[TouchPoint],
    meta: &SessionMeta,
    step: u32,
) -> Result<PredictionGrid> {
    if step == 0 {
        return Err(Error::InvalidArgument("grid step must be at least 1".into()));
    }
    check_length(prefix.len() + 1, decoder.max_len())?;
    let cols = meta.screen_w.div_ceil(step);
    let rows = meta.screen_h.div_ceil(step);
    let t_ms = prefix.last().map_or(0, |p| p.t_ms);
    let half = f64::from(step) / 2.0;
    let mut seq = prefix.to_vec();
    seq.push(TouchPoint::new(0.0, 0.0, t_ms));
    let last = prefix.len();
    let mut chars = Vec::with_capacity(rows as usize);
    for r in 0..rows {
        let mut row = Vec::with_capacity(cols as usize);
        for c in 0..cols {
            seq[last].x = f64::from(c * step) + half;
            seq[last].y = f64::from(r * step) + half;
            let decoded = decoder.decode(&seq, meta)?;
            let glyph = decoder
                .vocab()
                .decode_text(&decoded.indices[last..])
                .chars()
                .next()
                .unwrap_or(crate::data::SPECIAL_GLYPH);
            row.push(glyph);
        }
        chars.push(row);
    }
    Ok(PredictionGrid {
        w: meta.screen_w,
        h: meta.screen_h,
        step,
        chars,
    })
}
