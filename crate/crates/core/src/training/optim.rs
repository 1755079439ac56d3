use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{zeros_like, Parameters, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSpec {
    pub lr: f64,
    /// Global L2 norm the gradient is clipped to before each step.
    pub grad_clip_norm: f64,
}

impl Default for SgdSpec {
    fn default() -> Self {
        Self {
            lr: 3.0,
            grad_clip_norm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSpec {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSpec {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// SGD for the geometric decoder, Adam for the semantic decoder.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSpec {
    pub geometric: SgdSpec,
    pub semantic: AdamSpec,
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometric;
        let s = &self.semantic;
        if !(g.lr > 0.0 && g.grad_clip_norm > 0.0 && s.lr > 0.0 && s.eps > 0.0) {
            return Err(Error::Config("learning rates, clip norm and eps must be positive".into()));
        }
        if !((0.0..1.0).contains(&s.beta1) && (0.0..1.0).contains(&s.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn global_norm<F: Scalar, P: Parameters<F>>(grads: &P) -> f64 {
    grads.squared_norm().to_f64().unwrap_or(f64::NAN).sqrt()
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the norm
/// after clipping.
pub fn clip_global_norm<F: Scalar, P: Parameters<F>>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.scale(F::from_f64(factor).expect("finite"));
        global_norm(grads)
    } else {
        norm
    }
}

/// Clipped SGD step; returns the post-clip gradient norm.
pub fn sgd_step<F: Scalar, P: Parameters<F>>(params: &mut P, grads: &mut P, spec: &SgdSpec) -> f64 {
    let norm = clip_global_norm(grads, spec.grad_clip_norm);
    params.add_scaled(grads, F::from_f64(-spec.lr).expect("finite"));
    norm
}

/// First and second moments with the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub step: u64,
    pub m: P,
    pub v: P,
}

impl<P> AdamState<P> {
    pub fn new<F: Scalar>(params: &P) -> Self
    where
        P: Parameters<F> + Clone,
    {
        Self {
            step: 0,
            m: zeros_like(params),
            v: zeros_like(params),
        }
    }

    pub fn update<F: Scalar>(&mut self, params: &mut P, grads: &P, spec: &AdamSpec)
    where
        P: Parameters<F>,
    {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (spec.beta1, spec.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let f = |x: f64| F::from_f64(x).expect("finite");
        let (fb1, fb2, f1b1, f1b2) = (f(b1), f(b2), f(1.0 - b1), f(1.0 - b2));
        let step = f(spec.lr / c1);
        let inv_c2 = f(1.0 / c2);
        let eps = f(spec.eps);
        let g = grads.tensors();
        for (((p, m), v), g) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(g.iter())
        {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data.iter()) {
                *m = fb1 * *m + f1b1 * g;
                *v = fb2 * *v + f1b2 * g * g;
                *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks a metric where larger is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_value: Option<f64>,
    pub epochs_since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_value: None,
            epochs_since_best: 0,
        }
    }

    /// Stops once more than `patience` epochs in a row fail to improve.
    pub fn update(&mut self, value: f64) -> StopDecision {
        if self.best_value.is_none_or(|b| value > b) {
            self.best_value = Some(value);
            self.epochs_since_best = 0;
            return StopDecision::Improved;
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self::new(3)
    }
}
