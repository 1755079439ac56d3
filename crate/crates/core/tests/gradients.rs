//! Analytic gradients against central finite differences at f64.

use imk_core::data::VocabSpec;
use imk_core::model::{ModelConfig, SancdModel};
use imk_core::nn::{
    cross_entropy, normal_init, zeros_like, BiGruLayer, Embedding, EncoderBlock, FeedForward,
    GruDirection, LayerNorm, Linear, MultiHeadAttention, Parameters,
};
use imk_core::testing::{check_input, check_params, GradCheck};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const CONFIGS: u64 = 20;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    normal_init(rng, (r, c), 1.0)
}

fn project(out: &Array2<f64>, proj: &Array2<f64>) -> f64 {
    (out * proj).sum()
}

fn assert_ok(label: &str, seed: u64, report: &GradCheck) {
    assert!(report.checked > 0, "{label}: nothing checked");
    assert!(
        report.max_rel_error < TOL,
        "{label} seed {seed}: rel error {:.3e} at {}",
        report.max_rel_error,
        report.worst
    );
}

/// Runs `body` over random small shapes, each with its own seed.
fn over_configs(mut body: impl FnMut(u64, &mut ChaCha8Rng, usize, usize)) {
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(1..=5);
        let d = 2 * rng.random_range(1..=8);
        body(seed, &mut rng, n, d);
    }
}

#[test]
fn linear() {
    over_configs(|seed, rng, n, d| {
        let out = rng.random_range(1..=7);
        let layer = Linear::<f64>::init(d, out, rng);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, out);
        let mut g = zeros_like(&layer);
        let dx = layer.backward(x.view(), r.view(), &mut g);
        assert_ok("linear", seed, &check_params(&layer, &g, |p| project(&p.forward(x.view()), &r), 64));
        assert_ok("linear dx", seed, &check_input(&x, &dx, |x| project(&layer.forward(x.view()), &r)));
    });
}

#[test]
fn gru_direction() {
    over_configs(|seed, rng, n, d| {
        let h = rng.random_range(1..=8);
        let cell = GruDirection::<f64>::init(d, h, rng);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, h);
        let (_, cache) = cell.forward(x.view());
        let mut g = zeros_like(&cell);
        let dx = cell.backward(&cache, r.view(), &mut g);
        let f = |c: &GruDirection<f64>, x: &Array2<f64>| project(&c.forward(x.view()).0, &r);
        assert_ok("gru", seed, &check_params(&cell, &g, |c| f(c, &x), 64));
        assert_ok("gru dx", seed, &check_input(&x, &dx, |x| f(&cell, x)));
    });
}

#[test]
fn bigru_stack() {
    over_configs(|seed, rng, n, d| {
        let layers: Vec<BiGruLayer<f64>> = (0..2).map(|_| BiGruLayer::init(d, d / 2, rng)).collect();
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, d);
        let run = |ls: &[BiGruLayer<f64>], x: &Array2<f64>| {
            let mut h = x.clone();
            let mut caches = Vec::new();
            for l in ls {
                let (o, c) = l.forward(h.view());
                caches.push(c);
                h = o;
            }
            (h, caches)
        };
        let (_, caches) = run(&layers, &x);
        let mut grads: Vec<_> = layers.iter().map(zeros_like).collect();
        let mut dh = r.clone();
        for i in (0..layers.len()).rev() {
            dh = layers[i].backward(&caches[i], dh.view(), &mut grads[i]);
        }
        for i in 0..layers.len() {
            let report = check_params(
                &layers[i],
                &grads[i],
                |p| {
                    let mut ls = layers.clone();
                    ls[i] = p.clone();
                    project(&run(&ls, &x).0, &r)
                },
                48,
            );
            assert_ok(&format!("bigru layer {i}"), seed, &report);
        }
        assert_ok("bigru dx", seed, &check_input(&x, &dh, |x| project(&run(&layers, x).0, &r)));
    });
}

#[test]
fn embedding() {
    over_configs(|seed, rng, n, d| {
        let table = Embedding::<f64>::init(31, d, rng);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..31)).collect();
        let r = rand_mat(rng, n, d);
        let mut g = zeros_like(&table);
        table.backward(&idx, r.view(), &mut g);
        assert_ok("embedding", seed, &check_params(&table, &g, |t| project(&t.forward(&idx), &r), 10_000));
    });
}

#[test]
fn layer_norm() {
    over_configs(|seed, rng, n, d| {
        let mut ln = LayerNorm::<f64>::new(d);
        ln.gamma = normal_init(rng, d, 1.0);
        ln.beta = normal_init(rng, d, 1.0);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, d);
        let (_, cache) = ln.forward(x.view());
        let mut g = zeros_like(&ln);
        let dx = ln.backward(&cache, r.view(), &mut g);
        let f = |l: &LayerNorm<f64>, x: &Array2<f64>| project(&l.forward(x.view()).0, &r);
        assert_ok("layer norm", seed, &check_params(&ln, &g, |l| f(l, &x), 64));
        assert_ok("layer norm dx", seed, &check_input(&x, &dx, |x| f(&ln, x)));
    });
}

#[test]
fn attention() {
    over_configs(|seed, rng, n, d| {
        let heads = if d % 4 == 0 { 2 } else { 1 };
        let attn = MultiHeadAttention::<f64>::init(d, heads, rng);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, d);
        let (_, cache) = attn.forward(x.view());
        let mut g = zeros_like(&attn);
        let dx = attn.backward(&cache, r.view(), &mut g);
        let f = |a: &MultiHeadAttention<f64>, x: &Array2<f64>| project(&a.forward(x.view()).0, &r);
        assert_ok("attention", seed, &check_params(&attn, &g, |a| f(a, &x), 48));
        assert_ok("attention dx", seed, &check_input(&x, &dx, |x| f(&attn, x)));
    });
}

#[test]
fn feed_forward() {
    over_configs(|seed, rng, n, d| {
        let ff = FeedForward::<f64>::init(d, 4 * d, rng);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, d);
        let (_, cache) = ff.forward(x.view());
        let mut g = zeros_like(&ff);
        let dx = ff.backward(&cache, r.view(), &mut g);
        let f = |m: &FeedForward<f64>, x: &Array2<f64>| project(&m.forward(x.view()).0, &r);
        assert_ok("feed forward", seed, &check_params(&ff, &g, |m| f(m, &x), 48));
        assert_ok("feed forward dx", seed, &check_input(&x, &dx, |x| f(&ff, x)));
    });
}

#[test]
fn encoder_block() {
    over_configs(|seed, rng, n, d| {
        let mut block = EncoderBlock::<f64>::init(d, 1, 4 * d, rng);
        block.norm_attn.gamma = normal_init(rng, d, 1.0);
        block.norm_ff.beta = normal_init(rng, d, 1.0);
        let x = rand_mat(rng, n, d);
        let r = rand_mat(rng, n, d);
        let (_, cache) = block.forward(x.view(), 0.0, None);
        let mut g = zeros_like(&block);
        let dx = block.backward(&cache, r.view(), &mut g);
        let f = |b: &EncoderBlock<f64>, x: &Array2<f64>| project(&b.forward(x.view(), 0.0, None).0, &r);
        assert_ok("encoder block", seed, &check_params(&block, &g, |b| f(b, &x), 32));
        assert_ok("encoder block dx", seed, &check_input(&x, &dx, |x| f(&block, x)));
    });
}

/// Cross-entropy through both full decoders of a small model, auxiliary heads included.
#[test]
fn full_model_heads() {
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let layers = 1 + (seed as usize % 2);
        let model = SancdModel::<f64>::init(ModelConfig::new(layers, 8), VocabSpec::english(), &mut rng).unwrap();
        let n = rng.random_range(1..=5);
        let coords = rand_mat(&mut rng, n, 2);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..31)).collect();
        let inputs: Vec<usize> = (0..n).map(|_| rng.random_range(0..31)).collect();
        let weights: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.5 }).collect();

        let geo_loss = |m: &SancdModel<f64>| cross_entropy(m.geometric.forward(coords.view()).view(), &targets, &weights).0;
        let sem_loss = |m: &SancdModel<f64>| {
            let out = m.semantic.forward(m.semantic.embed(&inputs).view());
            let mut l = cross_entropy(out.logits.view(), &targets, &weights).0;
            for a in &out.aux_logits {
                l += 0.3 * cross_entropy(a.view(), &targets, &weights).0;
            }
            l
        };

        let mut grad = zeros_like(&model);
        let (logits, cache) = model.geometric.forward_cached(coords.view());
        let (_, dl) = cross_entropy(logits.view(), &targets, &weights);
        model.geometric.backward(&cache, dl.view(), &mut grad.geometric);

        let embedded = model.semantic.embed(&inputs);
        let (out, cache) = model.semantic.forward_cached(embedded.view(), None);
        let (_, dl) = cross_entropy(out.logits.view(), &targets, &weights);
        let daux: Vec<Array2<f64>> = out
            .aux_logits
            .iter()
            .map(|a| cross_entropy(a.view(), &targets, &weights).1 * 0.3)
            .collect();
        let de = model.semantic.backward(&cache, dl.view(), &daux, &mut grad.semantic);
        model.semantic.embed_backward(&inputs, de.view(), &mut grad.semantic);

        let total = |m: &SancdModel<f64>| geo_loss(m) + sem_loss(m);
        let report = check_params(&model, &grad, total, 24);
        assert_ok("full model", seed, &report);
        assert!(grad.all_finite());
    }
}
