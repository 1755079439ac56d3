pub mod analysis;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod service;
pub mod synthetic;
pub mod training;
#[cfg(any(test, feature = "test-support"))]
pub mod testing;

pub use error::{Error, Result};

pub use data::{TouchPoint, TypedPhrase, VocabSpec};
pub use metrics::CorpusScores;
pub use model::{DecodedText, Decoder, GeometricOnly, ModelConfig, PredictionGrid, SancdModel};
pub use service::{DecodeResponse, SessionRegistry};
pub use training::{Checkpoint, EvalReport, TrainConfig, TrainReport, TrainState};
