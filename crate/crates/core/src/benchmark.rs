//! Desk-scale semantic-correction benchmark.
//!
//! Synthetic users type a shared phrase set drawn from the builtin corpus; the
//! semantic decoder is pretrained on the whole corpus. The full schedule is
//! compared against its own geometric-only output and against the schedule
//! with geometric pretraining skipped.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{participants, split_by_participant, SplitSpec, VocabSpec};
use crate::error::{Error, Result};
use crate::model::{GeometricOnly, ModelConfig, SancdModel};
use crate::synthetic::{builtin_corpus, synthesize_dataset, SynthSpec};
use crate::training::{evaluate, finetune, pretrain_geometric, pretrain_semantic, EvalReport, TrainConfig, Trainable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub synth: SynthSpec,
    /// Number of leading builtin phrases the users type.
    pub phrase_set: usize,
    pub train_users: usize,
    pub val_users: usize,
    pub model: ModelConfig,
    pub lm: TrainConfig,
    /// Leading corpus phrases used for LM validation.
    pub lm_val_phrases: usize,
    pub geometric: TrainConfig,
    pub finetune: TrainConfig,
    pub data_seed: u64,
    pub init_seed: u64,
    pub run_ablation: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        let mut synth = SynthSpec::default();
        synth.population.key_noise_sigma = 55.0;
        let mut model = ModelConfig::new(2, 64);
        model.heads = 4;
        let mut lm = TrainConfig {
            max_epochs: 200,
            patience: None,
            ..TrainConfig::default()
        };
        lm.optimizer.semantic.lr = 3e-3;
        let geometric = TrainConfig {
            max_epochs: 80,
            patience: Some(10),
            ..TrainConfig::default()
        };
        let mut ft = TrainConfig {
            max_epochs: 120,
            patience: Some(16),
            ..TrainConfig::default()
        };
        ft.optimizer.semantic.lr = 3e-3;
        Self {
            synth,
            phrase_set: 300,
            train_users: 40,
            val_users: 5,
            model,
            lm,
            lm_val_phrases: 100,
            geometric,
            finetune: ft,
            data_seed: 0,
            init_seed: 1,
            run_ablation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub full: EvalReport,
    pub geometric_only: EvalReport,
    /// Full pipeline trained without geometric pretraining.
    pub ablation: Option<EvalReport>,
    pub lm_masked_accuracy: Option<f64>,
    pub finetune_epochs: usize,
    pub seconds: f64,
}

impl BenchmarkReport {
    /// Geometric-only CER minus full-pipeline CER, in points.
    pub fn correction_gain(&self) -> f64 {
        self.geometric_only.cer_pct - self.full.cer_pct
    }
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    let started = Instant::now();
    let vocab = VocabSpec::english();
    let corpus = builtin_corpus();
    if spec.phrase_set == 0 || spec.phrase_set > corpus.len() {
        return Err(Error::Config(format!("phrase_set must lie in 1..={}", corpus.len())));
    }
    let data = synthesize_dataset(
        &spec.synth,
        &corpus[..spec.phrase_set],
        &vocab,
        &mut ChaCha8Rng::seed_from_u64(spec.data_seed),
    )?;
    let split = SplitSpec::by_counts(&participants(&data), spec.train_users, spec.val_users)?;
    let (train, val, test) = split_by_participant(&data, &split)?;

    let mut model = SancdModel::<f32>::init(spec.model.clone(), vocab, &mut ChaCha8Rng::seed_from_u64(spec.init_seed))?;
    let lm_val = &corpus[..spec.lm_val_phrases.clamp(1, corpus.len())];
    let lm = pretrain_semantic(&mut model, &corpus, lm_val, &spec.lm)?;
    let lm_only = spec.run_ablation.then(|| model.clone());

    pretrain_geometric(&mut model, &train, &val, &spec.geometric)?;
    let (ft, _) = finetune(&mut model, &train, &val, &spec.finetune, Trainable::BOTH)?;
    let full = evaluate(&model, &test, "test")?;
    let geometric_only = evaluate(&GeometricOnly(&model), &test, "test")?;

    let ablation = match lm_only {
        Some(mut m) => {
            finetune(&mut m, &train, &val, &spec.finetune, Trainable::BOTH)?;
            Some(evaluate(&m, &test, "test")?)
        }
        None => None,
    };
    Ok(BenchmarkReport {
        full,
        geometric_only,
        ablation,
        lm_masked_accuracy: lm.best_metric,
        finetune_epochs: ft.epochs.len(),
        seconds: started.elapsed().as_secs_f64(),
    })
}
