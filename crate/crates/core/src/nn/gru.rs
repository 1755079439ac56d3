use ndarray::{concatenate, linalg::general_mat_mul, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{nest, sigmoid, slice_mut, tanh, uniform_init, ParamView, Parameters, Scalar};

/// One direction of a GRU with gates ordered `[reset, update, candidate]`:
///
/// ```text
/// r = σ(x Wxr + bxr + h Whr + bhr)
/// z = σ(x Wxz + bxz + h Whz + bhz)
/// n = tanh(x Wxn + bxn + r ⊙ (h Whn + bhn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruDirection<F> {
    pub w_input: Array2<F>,
    pub b_input: Array1<F>,
    pub w_hidden: Array2<F>,
    pub b_hidden: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct GruCache<F> {
    input: Array2<F>,
    /// Hidden states `h_0 .. h_n`, row 0 is the zero initial state.
    states: Array2<F>,
    reset: Array2<F>,
    update: Array2<F>,
    candidate: Array2<F>,
    /// `h_{t-1} Whn + bhn`, needed for the reset-gate gradient.
    hidden_cand: Array2<F>,
}

/// `out += v · M` for a row-major `M` of shape `(v.len(), out.len())`.
fn vec_mat_acc<F: Scalar>(v: &[F], m: &[F], out: &mut [F]) {
    let cols = out.len();
    for (k, &a) in v.iter().enumerate() {
        if a == F::zero() {
            continue;
        }
        let row = &m[k * cols..(k + 1) * cols];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += a * w;
        }
    }
}

/// `out += M · v` for a row-major `M` of shape `(out.len(), v.len())`.
fn mat_vec_acc<F: Scalar>(m: &[F], v: &[F], out: &mut [F]) {
    let cols = v.len();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &m[k * cols..(k + 1) * cols];
        let mut acc = F::zero();
        for (&w, &a) in row.iter().zip(v) {
            acc += w * a;
        }
        *o += acc;
    }
}

impl<F: Scalar> GruDirection<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((input, 3 * hidden)),
            b_input: Array1::zeros(3 * hidden),
            w_hidden: Array2::zeros((hidden, 3 * hidden)),
            b_hidden: Array1::zeros(3 * hidden),
        }
    }

    /// Uniform in `±1/sqrt(hidden)`.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let b = 1.0 / (hidden as f64).sqrt();
        Self {
            w_input: uniform_init(rng, (input, 3 * hidden), b),
            b_input: uniform_init(rng, 3 * hidden, b),
            w_hidden: uniform_init(rng, (hidden, 3 * hidden), b),
            b_hidden: uniform_init(rng, 3 * hidden, b),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, GruCache<F>) {
        let n = x.nrows();
        let h = self.hidden();
        let gx = x.dot(&self.w_input) + &self.b_input;
        let gx = gx.as_slice().expect("contiguous");
        let wh = self.w_hidden.as_slice().expect("contiguous");
        let bh = self.b_hidden.as_slice().expect("contiguous");

        let mut states = Array2::zeros((n + 1, h));
        let mut reset = Array2::zeros((n, h));
        let mut update = Array2::zeros((n, h));
        let mut candidate = Array2::zeros((n, h));
        let mut hidden_cand = Array2::zeros((n, h));
        {
            let hs = states.as_slice_mut().expect("contiguous");
            let rs = reset.as_slice_mut().expect("contiguous");
            let zs = update.as_slice_mut().expect("contiguous");
            let ns = candidate.as_slice_mut().expect("contiguous");
            let hn = hidden_cand.as_slice_mut().expect("contiguous");
            let mut gh = vec![F::zero(); 3 * h];
            for t in 0..n {
                gh.copy_from_slice(bh);
                let (prev, next) = hs.split_at_mut((t + 1) * h);
                let prev = &prev[t * h..];
                vec_mat_acc(prev, wh, &mut gh);
                let g = &gx[t * 3 * h..(t + 1) * 3 * h];
                for j in 0..h {
                    let r = sigmoid(g[j] + gh[j]);
                    let z = sigmoid(g[h + j] + gh[h + j]);
                    let c = tanh(g[2 * h + j] + r * gh[2 * h + j]);
                    next[j] = (F::one() - z) * c + z * prev[j];
                    rs[t * h + j] = r;
                    zs[t * h + j] = z;
                    ns[t * h + j] = c;
                    hn[t * h + j] = gh[2 * h + j];
                }
            }
        }
        let out = states.slice(s![1.., ..]).to_owned();
        let cache = GruCache {
            input: x.to_owned(),
            states,
            reset,
            update,
            candidate,
            hidden_cand,
        };
        (out, cache)
    }

    /// Backpropagation through time. `d_out` holds gradients for `h_1 .. h_n`.
    pub fn backward(&self, cache: &GruCache<F>, d_out: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let n = cache.input.nrows();
        let h = self.hidden();
        let mut dgx = Array2::<F>::zeros((n, 3 * h));
        let mut dgh = Array2::<F>::zeros((n, 3 * h));
        {
            let dgx_s = dgx.as_slice_mut().expect("contiguous");
            let dgh_s = dgh.as_slice_mut().expect("contiguous");
            let hs = cache.states.as_slice().expect("contiguous");
            let rs = cache.reset.as_slice().expect("contiguous");
            let zs = cache.update.as_slice().expect("contiguous");
            let ns = cache.candidate.as_slice().expect("contiguous");
            let hn = cache.hidden_cand.as_slice().expect("contiguous");
            let wh = self.w_hidden.as_slice().expect("contiguous");
            let mut dh_next = vec![F::zero(); h];
            for t in (0..n).rev() {
                let base = t * 3 * h;
                for j in 0..h {
                    let dh = d_out[[t, j]] + dh_next[j];
                    let (r, z, c) = (rs[t * h + j], zs[t * h + j], ns[t * h + j]);
                    let hp = hs[t * h + j];
                    let dc = dh * (F::one() - z);
                    let dz = dh * (hp - c);
                    let dac = dc * (F::one() - c * c);
                    let dr = dac * hn[t * h + j];
                    let dar = dr * r * (F::one() - r);
                    let daz = dz * z * (F::one() - z);
                    dgx_s[base + j] = dar;
                    dgx_s[base + h + j] = daz;
                    dgx_s[base + 2 * h + j] = dac;
                    dgh_s[base + j] = dar;
                    dgh_s[base + h + j] = daz;
                    dgh_s[base + 2 * h + j] = dac * r;
                    dh_next[j] = dh * z;
                }
                mat_vec_acc(wh, &dgh_s[base..base + 3 * h], &mut dh_next);
            }
        }
        let prev_states = cache.states.slice(s![..n, ..]);
        general_mat_mul(F::one(), &prev_states.t(), &dgh, F::one(), &mut grad.w_hidden);
        grad.b_hidden += &dgh.sum_axis(Axis(0));
        general_mat_mul(F::one(), &cache.input.t(), &dgx, F::one(), &mut grad.w_input);
        grad.b_input += &dgx.sum_axis(Axis(0));
        dgx.dot(&self.w_input.t())
    }
}

impl<F: Scalar> Parameters<F> for GruDirection<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        vec![
            ParamView::new("w_input", &self.w_input),
            ParamView::new("b_input", &self.b_input),
            ParamView::new("w_hidden", &self.w_hidden),
            ParamView::new("b_hidden", &self.b_hidden),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            slice_mut(&mut self.w_input),
            slice_mut(&mut self.b_input),
            slice_mut(&mut self.w_hidden),
            slice_mut(&mut self.b_hidden),
        ]
    }
}

/// Forward and backward GRUs whose per-step states are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruLayer<F> {
    pub forward_dir: GruDirection<F>,
    pub backward_dir: GruDirection<F>,
}

#[derive(Debug, Clone)]
pub struct BiGruCache<F> {
    fwd: GruCache<F>,
    bwd: GruCache<F>,
}

impl<F: Scalar> BiGruLayer<F> {
    pub fn zeros(input: usize, hidden_per_dir: usize) -> Self {
        Self {
            forward_dir: GruDirection::zeros(input, hidden_per_dir),
            backward_dir: GruDirection::zeros(input, hidden_per_dir),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden_per_dir: usize, rng: &mut R) -> Self {
        Self {
            forward_dir: GruDirection::init(input, hidden_per_dir, rng),
            backward_dir: GruDirection::init(input, hidden_per_dir, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward_dir.hidden() + self.backward_dir.hidden()
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, BiGruCache<F>) {
        let (of, fwd) = self.forward_dir.forward(x);
        let (ob, bwd) = self.backward_dir.forward(x.slice(s![..;-1, ..]));
        let out = concatenate(Axis(1), &[of.view(), ob.slice(s![..;-1, ..])])
            .expect("matching row counts");
        (out, BiGruCache { fwd, bwd })
    }

    pub fn backward(&self, cache: &BiGruCache<F>, d_out: ArrayView2<'_, F>, grad: &mut Self) -> Array2<F> {
        let hf = self.forward_dir.hidden();
        let d_fwd = d_out.slice(s![.., ..hf]);
        let d_bwd = d_out.slice(s![..;-1, hf..]);
        let dx_f = self.forward_dir.backward(&cache.fwd, d_fwd, &mut grad.forward_dir);
        let dx_b = self.backward_dir.backward(&cache.bwd, d_bwd, &mut grad.backward_dir);
        dx_f + &dx_b.slice(s![..;-1, ..])
    }
}

impl<F: Scalar> Parameters<F> for BiGruLayer<F> {
    fn tensors(&self) -> Vec<ParamView<'_, F>> {
        let mut v = nest("fwd", self.forward_dir.tensors());
        v.extend(nest("bwd", self.backward_dir.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = self.forward_dir.tensors_mut();
        v.extend(self.backward_dir.tensors_mut());
        v
    }
}
