//! Simulated typists: each user has a private, drifting, scaled copy of a
//! QWERTY layout and taps with Gaussian noise around it.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Keystroke, SessionMeta, SourceCorpus, TouchPoint, TypedPhrase, VocabSpec};
use crate::error::{Error, Result};

pub const KEY_PITCH: f64 = 100.0;
pub const NOMINAL_SCREEN: (u32, u32) = (1080, 1920);
/// Inter-key interval bounds in milliseconds.
pub const INTERVAL_MS: (i64, i64) = (150, 350);
const MIN_SCALE: f64 = 0.2;

/// A few hundred everyday English phrases, one per line.
pub const BUILTIN_PHRASES: &str = include_str!("../assets/phrases.txt");

pub fn builtin_corpus() -> Vec<String> {
    BUILTIN_PHRASES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Key centres in pixels on a nominal screen.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLayout {
    pub screen: (u32, u32),
    keys: HashMap<char, (f64, f64)>,
}

impl ReferenceLayout {
    /// Rows of 10, 9 (+ apostrophe) and 7 keys, staggered by half a key, with a
    /// space bar below, in the bottom part of a 1080x1920 screen.
    pub fn qwerty() -> Self {
        let mut keys = HashMap::new();
        let rows: [(&str, f64); 3] = [("qwertyuiop", 0.0), ("asdfghjkl'", 0.5), ("zxcvbnm", 1.0)];
        let top = 1450.0;
        let left = 90.0;
        for (r, (row, stagger)) in rows.iter().enumerate() {
            for (i, c) in row.chars().enumerate() {
                let x = left + (i as f64 + stagger) * KEY_PITCH;
                keys.insert(c, (x, top + r as f64 * KEY_PITCH));
            }
        }
        keys.insert(' ', (540.0, top + 3.0 * KEY_PITCH));
        Self {
            screen: NOMINAL_SCREEN,
            keys,
        }
    }

    pub fn center_of(&self, c: char) -> Option<(f64, f64)> {
        self.keys.get(&c).copied()
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.keys.keys().copied()
    }

    /// Centre of the keys' bounding box.
    pub fn layout_center(&self) -> (f64, f64) {
        let xs = self.keys.values().map(|k| k.0);
        let ys = self.keys.values().map(|k| k.1);
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MentalModel {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_0: (f64, f64),
    /// Random-walk step std per keystroke, per axis.
    pub drift_per_keystroke: f64,
    pub key_noise_sigma: f64,
    /// Where the user's imagined layout centre sits on screen.
    pub anchor: (f64, f64),
    pub seed: u64,
}

impl MentalModel {
    /// Taps land exactly on the reference key centres.
    pub fn identity(layout: &ReferenceLayout) -> Self {
        Self {
            scale_x: 1.0,
            scale_y: 1.0,
            offset_0: (0.0, 0.0),
            drift_per_keystroke: 0.0,
            key_noise_sigma: 0.0,
            anchor: layout.layout_center(),
            seed: 0,
        }
    }
}

/// Mean and standard deviation of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub std: f64,
}

impl NormalParams {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        Normal::new(self.mean, self.std).expect("validated std").sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Population {
    pub scale_x: NormalParams,
    pub scale_y: NormalParams,
    pub offset_x: NormalParams,
    pub offset_y: NormalParams,
    pub drift_per_keystroke: f64,
    pub key_noise_sigma: f64,
}

impl Default for Population {
    fn default() -> Self {
        Self {
            scale_x: NormalParams::new(0.99, 0.27),
            scale_y: NormalParams::new(0.95, 0.28),
            offset_x: NormalParams::new(-2.00, 25.68),
            offset_y: NormalParams::new(-7.13, 29.44),
            drift_per_keystroke: 0.0,
            key_noise_sigma: 0.0,
        }
    }
}

impl Population {
    /// Every user types exactly on the reference layout.
    pub fn identity() -> Self {
        Self {
            scale_x: NormalParams::new(1.0, 0.0),
            scale_y: NormalParams::new(1.0, 0.0),
            offset_x: NormalParams::new(0.0, 0.0),
            offset_y: NormalParams::new(0.0, 0.0),
            drift_per_keystroke: 0.0,
            key_noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub phrases_per_user: usize,
    pub screen_w: u32,
    pub screen_h: u32,
    pub population: Population,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 50,
            phrases_per_user: 40,
            screen_w: NOMINAL_SCREEN.0,
            screen_h: NOMINAL_SCREEN.1,
            population: Population::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.population;
        let stds = [p.scale_x.std, p.scale_y.std, p.offset_x.std, p.offset_y.std];
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        if self.screen_w == 0 || self.screen_h == 0 {
            return Err(Error::Config("screen dimensions must be positive".into()));
        }
        if stds.iter().chain([&p.drift_per_keystroke, &p.key_noise_sigma]).any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("population spreads must be finite and non-negative".into()));
        }
        for s in [p.scale_x, p.scale_y] {
            if s.mean <= MIN_SCALE && s.std == 0.0 {
                return Err(Error::Config(format!("scale mean {} must exceed {MIN_SCALE}", s.mean)));
            }
        }
        Ok(())
    }
}

fn truncated_scale<R: Rng + ?Sized>(p: NormalParams, rng: &mut R) -> f64 {
    loop {
        let v = p.sample(rng);
        if v > MIN_SCALE {
            return v;
        }
    }
}

/// Scales are redrawn until above 0.2.
pub fn sample_mental_model<R: Rng + ?Sized>(spec: &SynthSpec, layout: &ReferenceLayout, rng: &mut R) -> MentalModel {
    let p = &spec.population;
    let center = layout.layout_center();
    let anchor = (
        center.0 * f64::from(spec.screen_w) / f64::from(layout.screen.0),
        center.1 * f64::from(spec.screen_h) / f64::from(layout.screen.1),
    );
    MentalModel {
        scale_x: truncated_scale(p.scale_x, rng),
        scale_y: truncated_scale(p.scale_y, rng),
        offset_0: (p.offset_x.sample(rng), p.offset_y.sample(rng)),
        drift_per_keystroke: p.drift_per_keystroke,
        key_noise_sigma: p.key_noise_sigma,
        anchor,
        seed: rng.next_u64(),
    }
}

fn normal_or_zero<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    NormalParams::new(0.0, std).sample(rng)
}

/// Types `text` under `mm`. The walk starts at `offset_0` and moves before
/// every keystroke after the first.
pub fn synthesize_phrase<R: Rng + ?Sized>(
    text: &str,
    meta: SessionMeta,
    mm: &MentalModel,
    layout: &ReferenceLayout,
    vocab: &VocabSpec,
    rng: &mut R,
) -> Result<TypedPhrase> {
    let lower = text.to_lowercase();
    let center = layout.layout_center();
    let mut walk = mm.offset_0;
    let mut t_ms = 0i64;
    let mut points = Vec::with_capacity(lower.len());
    for (i, c) in lower.chars().enumerate() {
        let (kx, ky) = layout.center_of(c).ok_or(Error::Unencodable(c))?;
        let char_index = vocab.index_of(c).ok_or(Error::Unencodable(c))?;
        if i > 0 {
            walk.0 += normal_or_zero(mm.drift_per_keystroke, rng);
            walk.1 += normal_or_zero(mm.drift_per_keystroke, rng);
            t_ms += rng.random_range(INTERVAL_MS.0..=INTERVAL_MS.1);
        }
        let x = mm.anchor.0 + mm.scale_x * (kx - center.0) + walk.0 + normal_or_zero(mm.key_noise_sigma, rng);
        let y = mm.anchor.1 + mm.scale_y * (ky - center.1) + walk.1 + normal_or_zero(mm.key_noise_sigma, rng);
        points.push(Keystroke {
            point: TouchPoint::new(x, y, t_ms),
            char_index,
        });
    }
    Ok(TypedPhrase {
        meta,
        phrase: lower,
        points,
        source_corpus: SourceCorpus::Synthetic,
    })
}

pub fn participant_id(user: usize) -> String {
    format!("synth-{:04}", user + 1)
}

/// `n_users x phrases_per_user` phrases; phrase `k` overall is
/// `corpus[k % corpus.len()]`. Each user draws from its own seeded stream.
pub fn synthesize_dataset<R: Rng + ?Sized>(
    spec: &SynthSpec,
    corpus: &[String],
    vocab: &VocabSpec,
    rng: &mut R,
) -> Result<Vec<TypedPhrase>> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("phrase corpus is empty".into()));
    }
    let layout = ReferenceLayout::qwerty();
    let mut out = Vec::with_capacity(spec.n_users * spec.phrases_per_user);
    for u in 0..spec.n_users {
        let mm = sample_mental_model(spec, &layout, rng);
        let mut user_rng = ChaCha8Rng::seed_from_u64(mm.seed);
        let mut meta = SessionMeta::new(participant_id(u), spec.screen_w, spec.screen_h);
        meta.device = "synthetic".into();
        for k in 0..spec.phrases_per_user {
            let text = &corpus[(u * spec.phrases_per_user + k) % corpus.len()];
            out.push(synthesize_phrase(text, meta.clone(), &mm, &layout, vocab, &mut user_rng)?);
        }
    }
    Ok(out)
}
