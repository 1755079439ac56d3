//! Subcommands of the `imk` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use imk_core::analysis::{char_position_stats, export_analysis, scale_offset_stats, z_series};
use imk_core::benchmark::{run_benchmark, BenchmarkSpec};
use imk_core::data::{load_dataset, participants, preprocess_corpus, save_dataset, split_by_participant, SplitSpec};
use imk_core::metrics::corpus_scores;
use imk_core::synthetic::{builtin_corpus, synthesize_dataset, SynthSpec};
use imk_core::training::{
    evaluate, finetune, load_checkpoint_with_vocab, pretrain_geometric, pretrain_semantic, save_checkpoint,
    OptimizerSpec, Trainable,
};
use imk_core::{GeometricOnly, ModelConfig, SancdModel, SessionRegistry, TrainConfig, TypedPhrase, VocabSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::http::{self, ServeOptions};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "imk", version, about = "Invisible-keyboard touch decoding toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-key position, drift and scale/offset statistics as CSV tables.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic JSONL dataset.
    Synth {
        /// JSON synthesis spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// One phrase per line; the builtin phrase list when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-character pretraining of the semantic decoder.
    PretrainLm {
        #[arg(long)]
        corpus: PathBuf,
        /// Held-out lines; the tail of the corpus when omitted.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pretraining of the geometric decoder on typed data.
    PretrainGeo {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Alternating fine-tuning of both decoders.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        init: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip the semantic stage.
        #[arg(long)]
        geometric_only: bool,
        #[arg(long, default_value = "test")]
        set: String,
    },
    /// CER and WER between line-aligned hypothesis and reference files.
    Metrics {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Synthetic semantic-correction benchmark.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HTTP decode service.
    Serve {
        #[arg(long, env = "IMK_CKPT")]
        ckpt: PathBuf,
        #[arg(long, env = "IMK_ADDR", default_value = DEFAULT_ADDR)]
        addr: String,
        /// Directory of static UI assets.
        #[arg(long)]
        ui: Option<PathBuf>,
        #[arg(long, env = "IMK_API_BASE", default_value = "")]
        api_base: String,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON with optional `model`, `optimizer` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary JSON; the English vocabulary when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Overrides `train.optimizer` when present.
    pub optimizer: Option<OptimizerSpec>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::new(2, 64),
            optimizer: None,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn train_config(&self, seed: Option<u64>) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(o) = self.optimizer {
            t.optimizer = o;
        }
        if let Some(s) = seed {
            t.seed = s;
        }
        t
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn vocab_of(common: &Common) -> Result<VocabSpec> {
    match &common.vocab {
        Some(p) => Ok(VocabSpec::from_json_file(p)?),
        None => Ok(VocabSpec::english()),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}

fn starting_model(init: Option<&Path>, cfg: &RunConfig, vocab: &VocabSpec, seed: u64) -> Result<SancdModel<f32>> {
    match init {
        Some(p) => Ok(load_checkpoint_with_vocab(p, vocab)?.model),
        None => Ok(SancdModel::init(cfg.model.clone(), vocab.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?),
    }
}

/// Explicit validation data, else the last tenth of participants, else the
/// training data itself.
pub fn train_val(data: Vec<TypedPhrase>, val: Option<Vec<TypedPhrase>>) -> Result<(Vec<TypedPhrase>, Vec<TypedPhrase>)> {
    if let Some(v) = val {
        return Ok((data, v));
    }
    let ids = participants(&data);
    if ids.len() < 2 {
        return Ok((data.clone(), data));
    }
    let n_val = ids.len().div_ceil(10);
    let split = SplitSpec::by_counts(&ids, ids.len() - n_val, n_val)?;
    let (train, val, _) = split_by_participant(&data, &split)?;
    Ok((train, val))
}

/// Explicit validation lines, else the last twentieth of the corpus (when it
/// has at least 20 lines), else the corpus itself.
pub fn corpus_val(corpus: Vec<String>, val: Option<Vec<String>>) -> (Vec<String>, Vec<String>) {
    match val {
        Some(v) => (corpus, v),
        None if corpus.len() >= 20 => {
            let cut = corpus.len() - corpus.len() / 20;
            let val = corpus[cut..].to_vec();
            (corpus[..cut].to_vec(), val)
        }
        None => (corpus.clone(), corpus),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { data, out } => {
            let data = load_dataset(&data, &VocabSpec::english())?;
            if data.is_empty() {
                bail!("dataset is empty");
            }
            let stats = char_position_stats(&data);
            let z = z_series(&data, &stats);
            let so = scale_offset_stats(&data);
            export_analysis(&stats, &z, &so, &out)?;
            print_json(&serde_json::json!({
                "scale_x": so.scale_x, "scale_y": so.scale_y,
                "offset_x": so.offset_x, "offset_y": so.offset_y,
            }))
        }
        Command::Synth { spec, corpus, seed, out } => {
            let spec: SynthSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SynthSpec::default(),
            };
            let vocab = VocabSpec::english();
            let corpus = match corpus {
                Some(p) => {
                    let lines = read_lines(&p)?;
                    preprocess_corpus(lines.iter().map(String::as_str), &vocab)
                }
                None => builtin_corpus(),
            };
            if corpus.is_empty() {
                bail!("corpus has no usable phrases");
            }
            let data = synthesize_dataset(&spec, &corpus, &vocab, &mut ChaCha8Rng::seed_from_u64(seed))?;
            save_dataset(&out, &data)?;
            tracing::info!(phrases = data.len(), path = %out.display(), "dataset written");
            Ok(())
        }
        Command::PretrainLm { corpus, val, init, common } => {
            let vocab = vocab_of(&common)?;
            let cfg = load_config(&common)?;
            let clean = |p: &Path| -> Result<Vec<String>> {
                let lines = read_lines(p)?;
                Ok(preprocess_corpus(lines.iter().map(String::as_str), &vocab))
            };
            let lines = clean(&corpus)?;
            let val = val.as_deref().map(clean).transpose()?;
            let (train, val) = corpus_val(lines, val);
            let tc = cfg.train_config(common.seed);
            let mut model = starting_model(init.as_deref(), &cfg, &vocab, tc.seed)?;
            let report = pretrain_semantic(&mut model, &train, &val, &tc)?;
            save_checkpoint(&common.out, &model, None)?;
            print_json(&report)
        }
        Command::PretrainGeo { data, val, init, common } => {
            let vocab = vocab_of(&common)?;
            let cfg = load_config(&common)?;
            let data = load_dataset(&data, &vocab)?;
            let val = val.map(|p| load_dataset(&p, &vocab)).transpose()?;
            let (train, val) = train_val(data, val)?;
            let tc = cfg.train_config(common.seed);
            let mut model = starting_model(init.as_deref(), &cfg, &vocab, tc.seed)?;
            let report = pretrain_geometric(&mut model, &train, &val, &tc)?;
            save_checkpoint(&common.out, &model, None)?;
            print_json(&report)
        }
        Command::Finetune { data, val, init, common } => {
            let vocab = vocab_of(&common)?;
            let cfg = load_config(&common)?;
            let data = load_dataset(&data, &vocab)?;
            let val = val.map(|p| load_dataset(&p, &vocab)).transpose()?;
            let (train, val) = train_val(data, val)?;
            let tc = cfg.train_config(common.seed);
            let mut model = starting_model(Some(&init), &cfg, &vocab, tc.seed)?;
            let (report, state) = finetune(&mut model, &train, &val, &tc, Trainable::BOTH)?;
            save_checkpoint(&common.out, &model, Some(&state))?;
            print_json(&report)
        }
        Command::Eval { data, ckpt, report, geometric_only, set } => {
            let vocab = VocabSpec::english();
            let model = load_checkpoint_with_vocab(&ckpt, &vocab)?.model;
            let data = load_dataset(&data, &vocab)?;
            let r = if geometric_only {
                evaluate(&GeometricOnly(&model), &data, &set)?
            } else {
                evaluate(&model, &data, &set)?
            };
            if let Some(p) = report {
                write_json(&p, &r)?;
            }
            print_json(&r)
        }
        Command::Metrics { hyp, reference } => {
            let (h, r) = (read_lines(&hyp)?, read_lines(&reference)?);
            if h.len() != r.len() {
                bail!("{} hypothesis lines but {} reference lines", h.len(), r.len());
            }
            let s = corpus_scores(h.iter().map(String::as_str).zip(r.iter().map(String::as_str)))?;
            print_json(&serde_json::json!({ "cer_pct": s.cer_pct, "wer_pct": s.wer_pct }))
        }
        Command::Benchmark { config, seed, out } => {
            let mut spec: BenchmarkSpec = match config {
                Some(p) => read_json(&p)?,
                None => BenchmarkSpec::default(),
            };
            if let Some(s) = seed {
                spec.data_seed = s;
            }
            let report = run_benchmark(&spec)?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            print_json(&report)
        }
        Command::Serve { ckpt, addr, ui, api_base } => {
            let model = load_checkpoint_with_vocab(&ckpt, &VocabSpec::english())?.model;
            let opts = ServeOptions { api_base, ui_dir: ui };
            serve(model, &addr, opts)
        }
    }
}

fn serve(model: SancdModel<f32>, addr: &str, opts: ServeOptions) -> Result<()> {
    let registry = Arc::new(SessionRegistry::new(Arc::new(model)));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let sweeper = Arc::clone(&registry);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let n = sweeper.expire_idle(Instant::now());
                if n > 0 {
                    tracing::debug!(expired = n, "idle sessions dropped");
                }
            }
        });
        http::serve(listener, http::router(registry, &opts)).await?;
        Ok(())
    })
}
