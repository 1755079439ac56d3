//! Dataset records, vocabulary, splitting and the random transforms applied
//! to training data.

mod augment;
mod corpus;
mod jsonl;
mod masking;
mod split;
mod vocab;

use serde::{Deserialize, Serialize};

pub use augment::{augment, ShiftSource, MAX_SHIFT_PX, SHIFT_PROBABILITY};
pub use corpus::{preprocess_line, preprocess_corpus, MAX_CORPUS_CHARS};
pub use jsonl::{load_dataset, parse_dataset, save_dataset, serialize_dataset};
pub use masking::{
    make_masked_batch, mask_indices, MaskBranch, MaskedCharExample, MaskingSource,
    MASK_SELECT_PROBABILITY,
};
pub use split::{participants, split_by_participant, SplitSpec};
pub use vocab::{VocabSpec, SPECIAL_GLYPH, VOCAB_SIZE};

/// A single touch event in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchPoint {
    pub x: f64,
    pub y: f64,
    /// Milliseconds since the start of the phrase.
    pub t_ms: i64,
}

impl TouchPoint {
    pub fn new(x: f64, y: f64, t_ms: i64) -> Self {
        Self { x, y, t_ms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant_id: String,
    pub age: u32,
    pub device: String,
    pub screen_w: u32,
    pub screen_h: u32,
}

impl SessionMeta {
    pub fn new(participant_id: impl Into<String>, screen_w: u32, screen_h: u32) -> Self {
        Self {
            participant_id: participant_id.into(),
            age: 0,
            device: String::new(),
            screen_w,
            screen_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceCorpus {
    #[serde(alias = "1BW", alias = "1bw")]
    OneBillionWord,
    #[serde(alias = "MacK")]
    MacKenzie,
    Common,
    Synthetic,
}

/// A touch point paired with the index of the character it was meant to type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keystroke {
    pub point: TouchPoint,
    pub char_index: usize,
}

/// One typed phrase: ground-truth text aligned one-to-one with touch points.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedPhrase {
    pub meta: SessionMeta,
    pub phrase: String,
    pub points: Vec<Keystroke>,
    pub source_corpus: SourceCorpus,
}

impl TypedPhrase {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn touch_points(&self) -> Vec<TouchPoint> {
        self.points.iter().map(|k| k.point).collect()
    }

    pub fn char_indices(&self) -> Vec<usize> {
        self.points.iter().map(|k| k.char_index).collect()
    }
}
