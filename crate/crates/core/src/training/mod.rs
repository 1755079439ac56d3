//! Semantic pretraining as a masked character LM, geometric pretraining, and
//! alternating fine-tuning where one decoder is frozen while the other trains.

mod checkpoint;
mod optim;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, make_masked_batch, TypedPhrase, VocabSpec};
use crate::error::{Error, Result};
use crate::metrics::corpus_scores;
use crate::model::{confidence_mask, normalize_points, softmax_confidence, Decoder, GeometricDecoder, GeometricOnly, SancdModel, SemanticDecoder};
use crate::nn::{argmax_rows, cross_entropy, zeros_like, Parameters};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_with_vocab,
    save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    FORMAT_VERSION,
};
pub use optim::{
    clip_global_norm, global_norm, sgd_step, AdamSpec, AdamState, EarlyStopping, OptimizerSpec,
    SgdSpec, StopDecision,
};

/// Weight of each auxiliary LM head relative to the final head.
pub const AUX_LOSS_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    PretrainS,
    PretrainG,
    FinetuneS,
    FinetuneG,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerSpec,
    /// Sequences per parameter update.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// `None` trains for `max_epochs` regardless of validation.
    pub patience: Option<usize>,
    pub aux_weight: f64,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSpec::default(),
            batch_size: 16,
            max_epochs: 50,
            patience: Some(3),
            aux_weight: AUX_LOSS_WEIGHT,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if !(self.aux_weight >= 0.0) {
            return Err(Error::Config("aux_weight must be non-negative".into()));
        }
        Ok(())
    }

    fn stopper(&self) -> Option<EarlyStopping> {
        self.patience.map(EarlyStopping::new)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    /// Mean per-position loss over the epoch.
    pub loss: f64,
    /// Validation metric after the epoch.
    pub metric: f64,
    /// Largest gradient norm applied in the epoch (after clipping, if any).
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    fn record(&mut self, log: EpochLog, stop: &mut Option<EarlyStopping>) -> bool {
        let improved = self.best_metric.is_none_or(|b| log.metric > b);
        if improved {
            self.best_metric = Some(log.metric);
            self.best_epoch = Some(log.epoch);
        }
        tracing::info!(epoch = log.epoch, phase = ?log.phase, loss = log.loss, metric = log.metric, "epoch done");
        self.epochs.push(log);
        match stop {
            Some(s) => {
                let halt = s.update(self.epochs.last().expect("pushed").metric) == StopDecision::Stop;
                self.stopped_early |= halt;
                halt
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub phase: Phase,
    pub seed: u64,
    pub best_checkpoint: Option<String>,
    #[serde(skip)]
    pub adam: Option<AdamState<SemanticDecoder<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub set: String,
    pub n_phrases: usize,
    pub cer_pct: f64,
    pub wer_pct: f64,
    pub char_acc: f64,
}

/// Decodes every phrase and scores it against its ground truth.
pub fn evaluate<D: Decoder + ?Sized>(decoder: &D, data: &[TypedPhrase], set: &str) -> Result<EvalReport> {
    let mut hyps = Vec::with_capacity(data.len());
    for p in data {
        let decoded = decoder.decode(&p.touch_points(), &p.meta)?;
        hyps.push(decoded.text(decoder.vocab()));
    }
    let scores = corpus_scores(hyps.iter().map(String::as_str).zip(data.iter().map(|p| p.phrase.as_str())))?;
    Ok(EvalReport {
        set: set.to_string(),
        n_phrases: data.len(),
        cer_pct: scores.cer_pct,
        wer_pct: scores.wer_pct,
        char_acc: scores.char_acc,
    })
}

fn phase_rng(seed: u64, phase: Phase) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((phase as u64 + 1) << 56))
}

fn diverged(phase: Phase, epoch: usize, batch: usize, loss: f64, norm: f64) -> Error {
    Error::Diverged(format!(
        "{phase:?} epoch {epoch} batch {batch}: loss {loss}, gradient norm {norm}"
    ))
}

/// Semantic loss (final head plus weighted auxiliary heads) for one sequence;
/// backpropagates into `grad` and returns the weighted loss.
fn semantic_step(
    model: &SemanticDecoder<f32>,
    inputs: &[usize],
    targets: &[usize],
    weights: &[f32],
    aux_weight: f32,
    grad: &mut SemanticDecoder<f32>,
    rng: &mut dyn RngCore,
) -> f64 {
    let embedded = model.embed(inputs);
    let (out, cache) = model.forward_cached(embedded.view(), Some(rng));
    let (mut loss, d_final) = cross_entropy(out.logits.view(), targets, weights);
    let aux_w: Vec<f32> = weights.iter().map(|w| w * aux_weight).collect();
    let mut d_aux = Vec::with_capacity(out.aux_logits.len());
    for a in &out.aux_logits {
        let (l, d) = cross_entropy(a.view(), targets, &aux_w);
        loss += l;
        d_aux.push(d);
    }
    let d_embedded = model.backward(&cache, d_final.view(), &d_aux, grad);
    model.embed_backward(inputs, d_embedded.view(), grad);
    f64::from(loss)
}

/// Masked-position accuracy of the semantic decoder under a fixed masking draw.
pub fn masked_accuracy(model: &SemanticDecoder<f32>, texts: &[String], vocab: &VocabSpec, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut total) = (0usize, 0usize);
    for t in texts {
        let ex = make_masked_batch(t, vocab, &mut rng)?;
        if ex.selected() == 0 {
            continue;
        }
        let out = model.forward(model.embed(&ex.input_indices).view());
        let pred = argmax_rows(out.logits.view());
        for i in (0..ex.len()).filter(|&i| ex.loss_mask[i]) {
            total += 1;
            hits += usize::from(pred[i] == ex.target_indices[i]);
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

fn check_texts(texts: &[String], max_len: usize) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::InvalidArgument("no training text".into()));
    }
    for t in texts {
        let n = t.chars().count();
        if n == 0 || n > max_len {
            return Err(Error::SequenceLength { len: n, max: max_len });
        }
    }
    Ok(())
}

fn check_phrases(data: &[TypedPhrase], max_len: usize, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} set is empty")));
    }
    for p in data {
        if p.is_empty() || p.len() > max_len {
            return Err(Error::SequenceLength { len: p.len(), max: max_len });
        }
    }
    Ok(())
}

/// BERT-style masked character LM on raw text. The best epoch by masked
/// accuracy on `val` is kept.
pub fn pretrain_semantic(
    model: &mut SancdModel<f32>,
    train: &[String],
    val: &[String],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_texts(train, model.config.max_len)?;
    check_texts(val, model.config.max_len)?;
    let phase = Phase::PretrainS;
    let mut rng = phase_rng(cfg.seed, phase);
    let mut adam = AdamState::new(&model.semantic);
    let mut stop = cfg.stopper();
    let mut report = TrainReport::default();
    let mut best = model.semantic.clone();
    let mut grad = zeros_like(&model.semantic);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let aux = cfg.aux_weight as f32;
    let val_seed = cfg.seed.wrapping_add(1);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut count, mut max_norm) = (0.0, 0usize, 0.0f64);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let examples = chunk
                .iter()
                .map(|&i| make_masked_batch(&train[i], &model.vocab, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let selected: usize = examples.iter().map(|e| e.selected()).sum();
            if selected == 0 {
                continue;
            }
            grad.fill(0.0);
            let inv = 1.0 / selected as f32;
            let mut batch_loss = 0.0;
            for ex in &examples {
                let weights: Vec<f32> = ex.loss_mask.iter().map(|&m| if m { inv } else { 0.0 }).collect();
                batch_loss += semantic_step(&model.semantic, &ex.input_indices, &ex.target_indices, &weights, aux, &mut grad, &mut rng);
            }
            let norm = global_norm(&grad);
            if !batch_loss.is_finite() || !norm.is_finite() {
                return Err(diverged(phase, epoch, b, batch_loss, norm));
            }
            max_norm = max_norm.max(norm);
            adam.update(&mut model.semantic, &grad, &cfg.optimizer.semantic);
            loss_sum += batch_loss * selected as f64;
            count += selected;
        }
        let metric = masked_accuracy(&model.semantic, val, &model.vocab, val_seed)?;
        let log = EpochLog {
            epoch,
            phase,
            loss: if count == 0 { 0.0 } else { loss_sum / count as f64 },
            metric,
            max_grad_norm: max_norm,
        };
        if report.best_metric.is_none_or(|b| metric > b) {
            best.clone_from(&model.semantic);
        }
        if report.record(log, &mut stop) {
            break;
        }
    }
    model.semantic = best;
    Ok(report)
}

fn coords_of(p: &TypedPhrase, do_augment: bool, rng: &mut ChaCha8Rng) -> Array2<f32> {
    if do_augment {
        let shifted = augment(p, rng);
        normalize_points(&shifted.touch_points(), &shifted.meta)
    } else {
        normalize_points(&p.touch_points(), &p.meta)
    }
}

/// One epoch of clipped SGD on per-position geometric cross-entropy.
fn geometric_epoch(
    geo: &mut GeometricDecoder<f32>,
    data: &[TypedPhrase],
    cfg: &TrainConfig,
    phase: Phase,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut grad = zeros_like(geo);
    let (mut loss_sum, mut count, mut max_norm) = (0.0, 0usize, 0.0f64);
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let total: usize = chunk.iter().map(|&i| data[i].len()).sum();
        let inv = 1.0 / total as f32;
        grad.fill(0.0);
        let mut batch_loss = 0.0f64;
        for &i in chunk {
            let p = &data[i];
            let coords = coords_of(p, cfg.augment, rng);
            let (logits, cache) = geo.forward_cached(coords.view());
            let weights = vec![inv; p.len()];
            let (l, d) = cross_entropy(logits.view(), &p.char_indices(), &weights);
            batch_loss += f64::from(l);
            geo.backward(&cache, d.view(), &mut grad);
        }
        let raw = global_norm(&grad);
        if !batch_loss.is_finite() || !raw.is_finite() {
            return Err(diverged(phase, epoch, b, batch_loss, raw));
        }
        let norm = sgd_step(geo, &mut grad, &cfg.optimizer.geometric);
        max_norm = max_norm.max(norm);
        loss_sum += batch_loss * total as f64;
        count += total;
    }
    Ok((loss_sum / count.max(1) as f64, max_norm))
}

/// Per-position cross-entropy of the geometric decoder alone. The best epoch
/// by geometric-only character accuracy on `val` is kept.
pub fn pretrain_geometric(
    model: &mut SancdModel<f32>,
    train: &[TypedPhrase],
    val: &[TypedPhrase],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_phrases(train, model.config.max_len, "training")?;
    check_phrases(val, model.config.max_len, "validation")?;
    let phase = Phase::PretrainG;
    let mut rng = phase_rng(cfg.seed, phase);
    let mut stop = cfg.stopper();
    let mut report = TrainReport::default();
    let mut best = model.geometric.clone();
    for epoch in 1..=cfg.max_epochs {
        let (loss, max_grad_norm) = geometric_epoch(&mut model.geometric, train, cfg, phase, epoch, &mut rng)?;
        let metric = evaluate(&GeometricOnly(model), val, "val")?.char_acc;
        if report.best_metric.is_none_or(|b| metric > b) {
            best.clone_from(&model.geometric);
        }
        let log = EpochLog {
            epoch,
            phase,
            loss,
            metric,
            max_grad_norm,
        };
        if report.record(log, &mut stop) {
            break;
        }
    }
    model.geometric = best;
    Ok(report)
}

/// One epoch of the semantic decoder on confidence-masked geometric output,
/// scored against the ground truth at every position.
fn semantic_finetune_epoch(
    model: &mut SancdModel<f32>,
    data: &[TypedPhrase],
    cfg: &TrainConfig,
    adam: &mut AdamState<SemanticDecoder<f32>>,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let phase = Phase::FinetuneS;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut grad = zeros_like(&model.semantic);
    let tau = model.config.tau as f32;
    let mask_index = model.vocab.mask_index();
    let aux = cfg.aux_weight as f32;
    let (mut loss_sum, mut count, mut max_norm) = (0.0, 0usize, 0.0f64);
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let total: usize = chunk.iter().map(|&i| data[i].len()).sum();
        let inv = 1.0 / total as f32;
        grad.fill(0.0);
        let mut batch_loss = 0.0f64;
        for &i in chunk {
            let p = &data[i];
            let coords = coords_of(p, cfg.augment, rng);
            let probs = softmax_confidence(model.geometric.forward(coords.view()).view());
            let masked = confidence_mask(probs.view(), tau, &model.semantic, mask_index);
            let weights = vec![inv; p.len()];
            batch_loss += semantic_step(&model.semantic, &masked.indices, &p.char_indices(), &weights, aux, &mut grad, rng);
        }
        let norm = global_norm(&grad);
        if !batch_loss.is_finite() || !norm.is_finite() {
            return Err(diverged(phase, epoch, b, batch_loss, norm));
        }
        max_norm = max_norm.max(norm);
        adam.update(&mut model.semantic, &grad, &cfg.optimizer.semantic);
        loss_sum += batch_loss * total as f64;
        count += total;
    }
    Ok((loss_sum / count.max(1) as f64, max_norm))
}

/// Which decoders the alternation may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub geometric: bool,
    pub semantic: bool,
}

impl Trainable {
    pub const BOTH: Self = Self {
        geometric: true,
        semantic: true,
    };
    pub const NONE: Self = Self {
        geometric: false,
        semantic: false,
    };
}

/// Alternates one-epoch phases, semantic first, each with the other decoder
/// frozen. Each phase counts as an epoch for early stopping on full-pipeline
/// validation character accuracy; the best model is kept.
pub fn finetune(
    model: &mut SancdModel<f32>,
    train: &[TypedPhrase],
    val: &[TypedPhrase],
    cfg: &TrainConfig,
    trainable: Trainable,
) -> Result<(TrainReport, TrainState)> {
    cfg.validate()?;
    check_phrases(train, model.config.max_len, "training")?;
    check_phrases(val, model.config.max_len, "validation")?;
    let mut rng = phase_rng(cfg.seed, Phase::FinetuneS);
    let mut adam = AdamState::new(&model.semantic);
    let mut stop = cfg.stopper();
    let mut report = TrainReport::default();
    let mut best = model.clone();
    let phases: Vec<Phase> = [(trainable.semantic, Phase::FinetuneS), (trainable.geometric, Phase::FinetuneG)]
        .into_iter()
        .filter_map(|(on, p)| on.then_some(p))
        .collect();
    let mut state = TrainState {
        epoch: 0,
        phase: Phase::FinetuneS,
        seed: cfg.seed,
        best_checkpoint: None,
        adam: None,
    };
    if phases.is_empty() {
        return Ok((report, state));
    }
    for epoch in 1..=cfg.max_epochs {
        let phase = phases[(epoch - 1) % phases.len()];
        let (loss, max_grad_norm) = match phase {
            Phase::FinetuneS => semantic_finetune_epoch(model, train, cfg, &mut adam, epoch, &mut rng)?,
            _ => geometric_epoch(&mut model.geometric, train, cfg, phase, epoch, &mut rng)?,
        };
        let metric = evaluate(model, val, "val")?.char_acc;
        if report.best_metric.is_none_or(|b| metric > b) {
            best.clone_from(model);
        }
        state.epoch = epoch;
        state.phase = phase;
        let log = EpochLog {
            epoch,
            phase,
            loss,
            metric,
            max_grad_norm,
        };
        if report.record(log, &mut stop) {
            break;
        }
    }
    *model = best;
    state.adam = Some(adam);
    Ok((report, state))
}
