use imk_core::data::{SessionMeta, TouchPoint, VocabSpec};
use imk_core::model::{
    decode_with, mask_decisions, pixel_prediction_map, softmax_confidence, DecodedText, Decoder,
    GeometricStage, MaskDecision, ModelConfig, Provenance, SancdModel, SemanticStage,
};
use imk_core::nn::{normal_init, softmax_rows};
use imk_core::Result;
use ndarray::{s, Array2, ArrayView2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn meta() -> SessionMeta {
    SessionMeta::new("p", 1080, 1920)
}

fn points(n: usize) -> Vec<TouchPoint> {
    (0..n)
        .map(|i| TouchPoint::new(37.0 * i as f64 % 1080.0, 1500.0 + 13.0 * i as f64, 200 * i as i64))
        .collect()
}

fn seeded(layers: usize, hidden: usize, seed: u64) -> SancdModel<f32> {
    SancdModel::init(ModelConfig::new(layers, hidden), VocabSpec::english(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Ignores coordinates; puts 0.9 on the scripted character (or spreads
/// probability where the script holds `None`).
struct ScriptedGeometric(Vec<Option<usize>>);

impl GeometricStage<f64> for ScriptedGeometric {
    fn geometric_logits(&self, coords: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((coords.nrows(), 31));
        for (i, c) in self.0.iter().take(coords.nrows()).enumerate() {
            if let Some(c) = c {
                // exp(l) / (exp(l) + 30) = 0.9
                out[[i, *c]] = 270f64.ln();
            }
        }
        out
    }
}

/// One-hot embedding; logits equal the embedding, except that a mask between
/// 'h' and 'l' becomes 'e'.
struct OneHotSemantic;

impl SemanticStage<f64> for OneHotSemantic {
    fn embed_indices(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), 31));
        for (i, &c) in indices.iter().enumerate() {
            out[[i, c]] = 1.0;
        }
        out
    }

    fn semantic_logits(&self, embedded: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = embedded.to_owned();
        let v = VocabSpec::english();
        let (h, e, l, m) = (v.encode_char('h'), v.encode_char('e'), v.encode_char('l'), v.mask_index());
        for i in 1..out.nrows().saturating_sub(1) {
            if embedded[[i, m]] == 1.0 && embedded[[i - 1, h]] == 1.0 && embedded[[i + 1, l]] == 1.0 {
                out.row_mut(i).fill(0.0);
                out[[i, e]] = 1.0;
            }
        }
        out
    }
}

fn scripted(text: &str) -> Vec<Option<usize>> {
    let v = VocabSpec::english();
    text.chars().map(|c| if c == '_' { None } else { Some(v.encode_char(c)) }).collect()
}

#[test]
fn stub_identity_path_reproduces_truth() {
    let v = VocabSpec::english();
    let geo = ScriptedGeometric(scripted("hello world"));
    let out = decode_with(&geo, &OneHotSemantic, &points(11), &meta(), 0.45, v.mask_index(), 256).unwrap();
    assert_eq!(out.text(&v), "hello world");
    assert!(out.provenance.iter().all(|p| *p == Provenance::Kept));
}

#[test]
fn stub_fills_masked_position() {
    let v = VocabSpec::english();
    let geo = ScriptedGeometric(scripted("h_llo"));
    let out = decode_with(&geo, &OneHotSemantic, &points(5), &meta(), 0.45, v.mask_index(), 256).unwrap();
    assert_eq!(out.text(&v), "hello");
    assert_eq!(out.provenance[1], Provenance::MaskedFilled);
    assert_eq!(out.provenance.iter().filter(|p| **p == Provenance::Kept).count(), 4);
}

#[test]
fn reversing_input_changes_outputs() {
    let m = seeded(2, 16, 3);
    let x: Array2<f32> = normal_init(&mut ChaCha8Rng::seed_from_u64(9), (6, 2), 0.5);
    let reversed = x.slice(s![..;-1, ..]).to_owned();
    let a = m.geometric.forward(x.view());
    let b = m.geometric.forward(reversed.view());
    let b_back = b.slice(s![..;-1, ..]).to_owned();
    assert_ne!(a, b_back);
}

#[test]
fn eval_forward_is_bitwise_deterministic() {
    let pts = points(9);
    let a = seeded(2, 32, 5);
    let b = seeded(2, 32, 5);
    assert_eq!(a, b);
    let la = a.geometric.forward(imk_core::model::normalize_points::<f32>(&pts[..1], &meta()).view());
    let lb = b.geometric.forward(imk_core::model::normalize_points::<f32>(&pts[..1], &meta()).view());
    assert_eq!(la, lb);
    assert_eq!(a.decode(&pts, &meta()).unwrap(), b.decode(&pts, &meta()).unwrap());
    assert_eq!(a.decode(&pts, &meta()).unwrap(), a.decode(&pts, &meta()).unwrap());
}

#[test]
fn semantic_single_position_is_finite() {
    let m = seeded(2, 16, 7);
    let out = m.semantic.forward(m.semantic.embed(&[4]).view());
    assert_eq!(out.logits.dim(), (1, 31));
    assert!(out.logits.iter().all(|v| v.is_finite()));
    assert_eq!(out.aux_logits.len(), 1);
}

#[test]
fn semantic_is_permutation_equivariant_without_positions() {
    let m = SancdModel::<f64>::init(ModelConfig::new(2, 16), VocabSpec::english(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let idx = [3, 17, 26, 0, 8];
    let perm = [2, 0, 4, 1, 3];
    let x = m.semantic.embedding.forward(&idx);
    let xp = m.semantic.embedding.forward(&perm.map(|p| idx[p]));
    let y = m.semantic.forward(x.view()).logits;
    let yp = m.semantic.forward(xp.view()).logits;
    for (i, &p) in perm.iter().enumerate() {
        for k in 0..31 {
            assert!((yp[[i, k]] - y[[p, k]]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let m = SancdModel::<f64>::init(ModelConfig::new(1, 128), VocabSpec::english(), &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
    let x: Array2<f64> = normal_init(&mut ChaCha8Rng::seed_from_u64(14), (7, 128), 1.0);
    let (_, cache) = m.semantic.forward_cached(x.view(), None);
    let weights = &cache.blocks[0].attention.weights;
    assert_eq!(weights.len(), 2);
    for w in weights {
        for row in w.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}

struct ConstantDecoder(VocabSpec);

impl Decoder for ConstantDecoder {
    fn decode(&self, points: &[TouchPoint], _: &SessionMeta) -> Result<DecodedText> {
        Ok(DecodedText {
            indices: vec![self.0.encode_char('k'); points.len()],
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

#[test]
fn position_blind_decoder_gives_uniform_grid() {
    let grid = pixel_prediction_map(&ConstantDecoder(VocabSpec::english()), &points(3), &meta(), 100).unwrap();
    assert_eq!((grid.rows(), grid.cols()), (20, 11));
    assert!(grid.chars.iter().flatten().all(|&c| c == 'k'));
}

#[test]
fn full_width_step_gives_single_column() {
    let m = seeded(1, 8, 1);
    let grid = pixel_prediction_map(&m, &points(2), &meta(), 1080).unwrap();
    assert_eq!(grid.cols(), 1);
    assert_eq!(grid.rows(), 2);
    assert!(pixel_prediction_map(&m, &[], &meta(), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_normalized_and_shift_invariant(
        vals in prop::collection::vec(-30.0f64..30.0, 31 * 3),
        shift in -500.0f64..500.0,
    ) {
        let logits = Array2::from_shape_vec((3, 31), vals).unwrap();
        let p = softmax_confidence(logits.view());
        let q = softmax_rows((&logits + shift).view());
        for r in 0..3 {
            prop_assert!((p.row(r).sum() - 1.0).abs() < 1e-6);
        }
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!(p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
        prop_assert_eq!(mask_decisions(p.view(), 0.3), mask_decisions(q.view(), 0.3));
    }

    #[test]
    fn masked_set_grows_with_tau(
        vals in prop::collection::vec(-5.0f64..5.0, 31 * 6),
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let p = softmax_confidence(Array2::from_shape_vec((6, 31), vals).unwrap().view());
        let a = mask_decisions(p.view(), lo);
        let b = mask_decisions(p.view(), hi);
        for (x, y) in a.iter().zip(&b) {
            if *x == MaskDecision::Masked {
                prop_assert_eq!(*y, MaskDecision::Masked);
            }
        }
    }
}

#[test]
fn decode_length_matches_input_up_to_max_len() {
    let mut cfg = ModelConfig::new(1, 8);
    cfg.max_len = 40;
    let m = SancdModel::<f32>::init(cfg, VocabSpec::english(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for n in 1..=40 {
        let out = m.decode(&points(n), &meta()).unwrap();
        assert_eq!(out.len(), n);
        assert_eq!(out.provenance.len(), n);
    }
    assert!(m.decode(&points(41), &meta()).is_err());
}
