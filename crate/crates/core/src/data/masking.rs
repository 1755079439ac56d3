use rand::Rng;

use super::VocabSpec;
use crate::error::{Error, Result};

pub const MASK_SELECT_PROBABILITY: f64 = 0.15;
const MASK_BRANCH_MASK: f64 = 0.8;
const MASK_BRANCH_RANDOM: f64 = 0.1;

/// What happens to a position chosen for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskBranch {
    Mask,
    Random,
    Keep,
}

/// Random decisions consumed by [`make_masked_batch`].
pub trait MaskingSource {
    fn select(&mut self) -> bool;
    fn branch(&mut self) -> MaskBranch;
    /// Uniform index in `0..n`.
    fn pick(&mut self, n: usize) -> usize;
}

impl<R: Rng + ?Sized> MaskingSource for R {
    fn select(&mut self) -> bool {
        self.random_bool(MASK_SELECT_PROBABILITY)
    }

    fn branch(&mut self) -> MaskBranch {
        let u: f64 = self.random();
        if u < MASK_BRANCH_MASK {
            MaskBranch::Mask
        } else if u < MASK_BRANCH_MASK + MASK_BRANCH_RANDOM {
            MaskBranch::Random
        } else {
            MaskBranch::Keep
        }
    }

    fn pick(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

/// Masked-LM training example at character granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedCharExample {
    pub input_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
    pub loss_mask: Vec<bool>,
}

impl MaskedCharExample {
    pub fn len(&self) -> usize {
        self.target_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_indices.is_empty()
    }

    pub fn selected(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

pub fn make_masked_batch<S: MaskingSource + ?Sized>(
    text: &str,
    vocab: &VocabSpec,
    rng: &mut S,
) -> Result<MaskedCharExample> {
    if text.is_empty() {
        return Err(Error::InvalidArgument("masked example from empty text".into()));
    }
    Ok(mask_indices(&vocab.encode_text(text), vocab, rng))
}

/// Selects positions with probability 0.15; selected positions become
/// `[mask]` 80% of the time, a random regular token 10%, and stay as-is 10%.
pub fn mask_indices<S: MaskingSource + ?Sized>(
    targets: &[usize],
    vocab: &VocabSpec,
    rng: &mut S,
) -> MaskedCharExample {
    let regular = vocab.regular_indices();
    let mut input = targets.to_vec();
    let mut loss_mask = vec![false; targets.len()];
    for i in 0..targets.len() {
        if !rng.select() {
            continue;
        }
        loss_mask[i] = true;
        match rng.branch() {
            MaskBranch::Mask => input[i] = vocab.mask_index(),
            MaskBranch::Random => input[i] = regular[rng.pick(regular.len())],
            MaskBranch::Keep => {}
        }
    }
    MaskedCharExample {
        input_indices: input,
        target_indices: targets.to_vec(),
        loss_mask,
    }
}
