//! Finite-difference gradient oracle, independent of any backward pass.
//!
//! Only compiled for tests or with the `test-support` feature.

use ndarray::Array2;

use crate::nn::Parameters;

/// Relative-error denominator floor; gradients smaller than this are compared
/// (effectively) in absolute terms.
pub const REL_FLOOR: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: String,
}

impl GradCheck {
    pub fn merge(mut self, other: GradCheck) -> GradCheck {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }

    fn record(&mut self, label: String, analytic: f64, numeric: f64) {
        let err = rel_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = err;
            self.worst = format!("{label}: analytic {analytic:e} numeric {numeric:e}");
        }
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `loss` for every
/// parameter element (or an evenly strided subset of at most `max_per_tensor`).
pub fn check_params<P, L>(params: &P, analytic: &P, loss: L, max_per_tensor: usize) -> GradCheck
where
    P: Parameters<f64> + Clone,
    L: Fn(&P) -> f64,
{
    let names: Vec<String> = params.tensors().iter().map(|t| t.name.clone()).collect();
    let analytic_flat: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut probe = params.clone();
    let mut report = GradCheck::default();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic_flat[ti].len();
        let stride = len.div_ceil(max_per_tensor.max(1)).max(1);
        for ei in (0..len).step_by(stride) {
            let original = probe.tensors_mut()[ti][ei];
            probe.tensors_mut()[ti][ei] = original + FD_STEP;
            let plus = loss(&probe);
            probe.tensors_mut()[ti][ei] = original - FD_STEP;
            let minus = loss(&probe);
            probe.tensors_mut()[ti][ei] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            report.record(format!("{name}[{ei}]"), analytic_flat[ti][ei], numeric);
        }
    }
    report
}

/// Central-difference check of an input gradient.
pub fn check_input<L>(x: &Array2<f64>, analytic: &Array2<f64>, loss: L) -> GradCheck
where
    L: Fn(&Array2<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut report = GradCheck::default();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let original = probe[[r, c]];
        probe[[r, c]] = original + FD_STEP;
        let plus = loss(&probe);
        probe[[r, c]] = original - FD_STEP;
        let minus = loss(&probe);
        probe[[r, c]] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        report.record(format!("input[{r},{c}]"), analytic[[r, c]], numeric);
    }
    report
}
