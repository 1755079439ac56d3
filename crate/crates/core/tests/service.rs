use std::sync::Arc;
use std::time::{Duration, Instant};

use imk_core::data::{participants, split_by_participant, SessionMeta, SplitSpec, TouchPoint, VocabSpec};
use imk_core::model::{DecodedText, Decoder, ModelConfig, Provenance, SancdModel};
use imk_core::service::{SessionRegistry, SESSION_IDLE_TIMEOUT};
use imk_core::synthetic::{synthesize_dataset, ReferenceLayout, SynthSpec};
use imk_core::training::{pretrain_geometric, TrainConfig};
use imk_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Maps each point to a letter by its x coordinate; once three or more points
/// exist, the first character becomes 'z'.
struct Rewriting {
    vocab: VocabSpec,
    max_len: usize,
}

impl Rewriting {
    fn new(max_len: usize) -> Self {
        Self {
            vocab: VocabSpec::english(),
            max_len,
        }
    }
}

impl Decoder for Rewriting {
    fn decode(&self, points: &[TouchPoint], _meta: &SessionMeta) -> Result<DecodedText> {
        let mut indices: Vec<usize> = points
            .iter()
            .map(|p| self.vocab.encode_char((b'a' + (p.x as u32 / 100 % 26) as u8) as char))
            .collect();
        let mut provenance = vec![Provenance::Kept; points.len()];
        if points.len() >= 3 {
            indices[0] = self.vocab.encode_char('z');
            provenance[0] = Provenance::MaskedFilled;
        }
        Ok(DecodedText { indices, provenance })
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn vocab(&self) -> &VocabSpec {
        &self.vocab
    }
}

struct Constant(VocabSpec);

impl Decoder for Constant {
    fn decode(&self, points: &[TouchPoint], _meta: &SessionMeta) -> Result<DecodedText> {
        Ok(DecodedText {
            indices: vec![self.0.encode_char('q'); points.len()],
            provenance: vec![Provenance::Kept; points.len()],
        })
    }

    fn max_len(&self) -> usize {
        256
    }

    fn vocab(&self) -> &VocabSpec {
        &self.0
    }
}

struct Geometric(SancdModel<f32>);

impl Decoder for Geometric {
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

fn registry() -> SessionRegistry {
    SessionRegistry::new(Arc::new(Rewriting::new(256)))
}

fn model_registry() -> (SessionRegistry, Arc<SancdModel<f32>>) {
    let m = Arc::new(
        SancdModel::<f32>::init(ModelConfig::new(2, 32), VocabSpec::english(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap(),
    );
    (SessionRegistry::new(m.clone()), m)
}

fn trace(n: usize) -> Vec<TouchPoint> {
    (0..n)
        .map(|i| TouchPoint::new((i * 137 % 1080) as f64, 1450.0 + (i * 59 % 400) as f64, 180 * i as i64))
        .collect()
}

#[test]
fn create_validates_dimensions_and_issues_distinct_ids() {
    let r = registry();
    let a = r.create_session(1080, 1920).unwrap();
    let b = r.create_session(1080, 1920).unwrap();
    assert_ne!(a, b);
    assert_eq!(r.len(), 2);
    let fresh = r.current(&a).unwrap();
    assert_eq!(fresh.text, "");
    assert!(fresh.provenance.is_empty());
    assert!(matches!(r.create_session(0, 100), Err(Error::InvalidArgument(_))));
    assert!(matches!(r.create_session(100, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn first_point_decodes_one_char() {
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    let out = r.push_point(&id, 250.0, 1500.0, 0).unwrap();
    assert_eq!(out.text, "c");
    assert_eq!(out.provenance, vec![Provenance::Kept]);
    assert_eq!(out.wpm, None);
    assert!(out.latency_ms >= 0.0);
}

#[test]
fn five_points_match_direct_decode() {
    let stub = Rewriting::new(256);
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    let pts = trace(5);
    let mut last = None;
    for p in &pts {
        last = Some(r.push_point(&id, p.x, p.y, p.t_ms).unwrap());
    }
    let direct = stub.decode(&pts, &SessionMeta::new("x", 1080, 1920)).unwrap();
    let last = last.unwrap();
    assert_eq!(last.text, direct.text(&stub.vocab));
    assert_eq!(last.provenance, direct.provenance);
}

#[test]
fn later_point_revises_earlier_character() {
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    r.push_point(&id, 0.0, 0.0, 0).unwrap();
    let second = r.push_point(&id, 100.0, 0.0, 10).unwrap();
    let third = r.push_point(&id, 200.0, 0.0, 20).unwrap();
    assert_eq!(second.text, "ab");
    assert_eq!(third.text, "zbc");
    assert_ne!(second.text.chars().next(), third.text.chars().next());
    assert_eq!(third.provenance[0], Provenance::MaskedFilled);
}

#[test]
fn pop_inverts_push() {
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    let a = r.push_point(&id, 0.0, 0.0, 0).unwrap();
    let ab = r.push_point(&id, 100.0, 0.0, 200).unwrap();
    let popped = r.pop_point(&id).unwrap();
    assert_eq!(popped.text, a.text);
    assert_eq!(popped.provenance, a.provenance);
    let again = r.push_point(&id, 100.0, 0.0, 200).unwrap();
    assert_eq!((again.text, again.provenance, again.wpm), (ab.text, ab.provenance, ab.wpm));
    r.pop_point(&id).unwrap();
    let empty = r.pop_point(&id).unwrap();
    assert_eq!(empty.text, "");
    assert!(matches!(r.pop_point(&id), Err(Error::EmptySession)));
}

#[test]
fn rejects_unknown_sessions_regressions_and_overflow() {
    let r = SessionRegistry::new(Arc::new(Rewriting::new(3)));
    assert!(matches!(r.push_point("nope", 0.0, 0.0, 0), Err(Error::SessionNotFound(_))));
    assert!(matches!(r.pop_point("nope"), Err(Error::SessionNotFound(_))));
    assert!(matches!(r.heatmap("nope", 40), Err(Error::SessionNotFound(_))));
    let id = r.create_session(1080, 1920).unwrap();
    r.push_point(&id, 0.0, 0.0, 100).unwrap();
    assert!(matches!(
        r.push_point(&id, 0.0, 0.0, 99),
        Err(Error::Ordering { t_ms: 99, prev_ms: 100 })
    ));
    r.push_point(&id, 0.0, 0.0, 100).unwrap();
    r.push_point(&id, 0.0, 0.0, 150).unwrap();
    let err = r.push_point(&id, 0.0, 0.0, 200).unwrap_err();
    assert!(matches!(err, Error::Capacity { max: 3 }));
    assert!(err.to_string().contains("new session"));
    assert_eq!(r.current(&id).unwrap().text.len(), 3);
    assert!(matches!(r.push_point(&id, f64::NAN, 0.0, 300), Err(Error::InvalidArgument(_))));
}

#[test]
fn wpm_from_first_and_last_timestamps() {
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    r.push_point(&id, 0.0, 0.0, 1_000).unwrap();
    let out = r.push_point(&id, 0.0, 0.0, 61_000).unwrap();
    // (2 - 1) chars / 1 minute / 5 chars per word
    assert!((out.wpm.unwrap() - 0.2).abs() < 1e-12);
    let same_time = r.create_session(1080, 1920).unwrap();
    r.push_point(&same_time, 0.0, 0.0, 5).unwrap();
    assert_eq!(r.push_point(&same_time, 0.0, 0.0, 5).unwrap().wpm, None);
}

#[test]
fn heatmap_shape_and_uniform_stub() {
    let r = SessionRegistry::new(Arc::new(Constant(VocabSpec::english())));
    let id = r.create_session(1080, 1920).unwrap();
    let g = r.heatmap(&id, 40).unwrap();
    assert_eq!((g.rows(), g.cols()), (48, 27));
    assert!(g.chars.iter().flatten().all(|&c| c == 'q'));
    let odd = r.create_session(1000, 999).unwrap();
    let g = r.heatmap(&odd, 300).unwrap();
    assert_eq!((g.cols(), g.rows()), (4, 4));
    assert!(matches!(r.heatmap(&id, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn idle_sessions_expire() {
    let r = registry();
    let id = r.create_session(1080, 1920).unwrap();
    assert_eq!(r.expire_idle(Instant::now() + SESSION_IDLE_TIMEOUT - Duration::from_secs(1)), 0);
    assert_eq!(r.expire_idle(Instant::now() + SESSION_IDLE_TIMEOUT + Duration::from_secs(1)), 1);
    assert!(matches!(r.current(&id), Err(Error::SessionNotFound(_))));

    let quick = SessionRegistry::with_idle_timeout(Arc::new(Rewriting::new(8)), Duration::from_millis(1));
    let id = quick.create_session(1080, 1920).unwrap();
    std::thread::sleep(Duration::from_millis(20));
    assert!(matches!(quick.push_point(&id, 0.0, 0.0, 0), Err(Error::SessionNotFound(_))));
    assert!(quick.is_empty());
}

#[test]
fn interleaved_sessions_match_serial_runs() {
    let (r, model) = model_registry();
    let meta = SessionMeta::new("x", 1080, 1920);
    let a_pts = trace(12);
    let b_pts: Vec<TouchPoint> = trace(12).into_iter().map(|p| TouchPoint::new(1079.0 - p.x, p.y, p.t_ms)).collect();
    let a = r.create_session(1080, 1920).unwrap();
    let b = r.create_session(1080, 1920).unwrap();
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    for (pa, pb) in a_pts.iter().zip(&b_pts) {
        ra.push(r.push_point(&a, pa.x, pa.y, pa.t_ms).unwrap().text);
        rb.push(r.push_point(&b, pb.x, pb.y, pb.t_ms).unwrap().text);
    }
    for k in 1..=a_pts.len() {
        assert_eq!(ra[k - 1], model.decode(&a_pts[..k], &meta).unwrap().text(&model.vocab));
        assert_eq!(rb[k - 1], model.decode(&b_pts[..k], &meta).unwrap().text(&model.vocab));
    }
}

#[test]
fn concurrent_sessions_on_threads_match_direct_decode() {
    let (r, model) = model_registry();
    let r = Arc::new(r);
    let meta = SessionMeta::new("x", 1080, 1920);
    let handles: Vec<_> = (0..4)
        .map(|k| {
            let r = r.clone();
            std::thread::spawn(move || {
                let id = r.create_session(1080, 1920).unwrap();
                let pts: Vec<TouchPoint> =
                    trace(20).into_iter().map(|p| TouchPoint::new((p.x + 97.0 * k as f64) % 1080.0, p.y, p.t_ms)).collect();
                let mut last = String::new();
                for p in &pts {
                    last = r.push_point(&id, p.x, p.y, p.t_ms).unwrap().text;
                }
                (pts, last)
            })
        })
        .collect();
    for h in handles {
        let (pts, last) = h.join().unwrap();
        assert_eq!(last, model.decode(&pts, &meta).unwrap().text(&model.vocab));
    }
}

#[test]
fn heatmap_names_keys_at_their_centres_after_training() {
    let vocab = VocabSpec::english();
    let mut spec = SynthSpec {
        n_users: 6,
        phrases_per_user: 40,
        ..SynthSpec::default()
    };
    spec.population.scale_x.std = 0.0;
    spec.population.scale_y.std = 0.0;
    spec.population.offset_x.std = 0.0;
    spec.population.offset_y.std = 0.0;
    spec.population.scale_x.mean = 1.0;
    spec.population.scale_y.mean = 1.0;
    spec.population.offset_x.mean = 0.0;
    spec.population.offset_y.mean = 0.0;
    spec.population.key_noise_sigma = 10.0;
    let corpus = imk_core::synthetic::builtin_corpus();
    let data = synthesize_dataset(&spec, &corpus, &vocab, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let split = SplitSpec::by_counts(&participants(&data), 5, 1).unwrap();
    let (train, val, _) = split_by_participant(&data, &split).unwrap();
    let mut m = SancdModel::<f32>::init(ModelConfig::new(1, 64), vocab, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        max_epochs: 60,
        patience: None,
        ..TrainConfig::default()
    };
    let report = pretrain_geometric(&mut m, &train, &val, &cfg).unwrap();
    assert!(report.best_metric.unwrap() > 0.95, "{:?}", report.best_metric);

    let r = SessionRegistry::new(Arc::new(Geometric(m)));
    let id = r.create_session(1080, 1920).unwrap();
    for k in val[0].points.iter().take(6) {
        r.push_point(&id, k.point.x, k.point.y, k.point.t_ms).unwrap();
    }
    let step = 20;
    let grid = r.heatmap(&id, step).unwrap();
    let layout = ReferenceLayout::qwerty();
    let typed: String = train.iter().map(|p| p.phrase.as_str()).collect();
    let total_chars = typed.chars().count() as f64;
    let (mut hits, mut total) = (0, 0);
    for c in layout.chars() {
        let (x, y) = layout.center_of(c).unwrap();
        let cell = grid.chars[(y as u32 / step) as usize][(x as u32 / step) as usize];
        let share = typed.chars().filter(|&t| t == c).count() as f64 / total_chars;
        if share >= 0.01 {
            assert_eq!(cell, c, "centre of frequent key {c:?}");
        }
        total += 1;
        hits += usize::from(cell == c);
    }
    assert!(hits * 10 >= total * 8, "{hits}/{total} key centres predicted as their key");
}
