//! Central finite-difference validation of autodiff gradients.
//!
//! A coordinate is compared only if nudging it by `±h` leaves every
//! indicator decision of the forward pass unchanged (same [`MaskTrace`]
//! signature at `x - h`, `x` and `x + h`). Coordinates that straddle a mask
//! boundary are counted and skipped.

use super::graph::{Graph, MaskTrace, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest norm-wise relative error over input tensors.
    pub max_rel_error: f64,
    /// Largest element-wise relative error.
    pub max_elem_error: f64,
    pub checked: usize,
    pub boundary: usize,
    /// Smallest indicator argument at the base point.
    pub min_margin: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_elem_error: self.max_elem_error.max(other.max_elem_error),
            checked: self.checked + other.checked,
            boundary: self.boundary + other.boundary,
            min_margin: self.min_margin.min(other.min_margin),
        }
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        Self {
            max_rel_error: 0.0,
            max_elem_error: 0.0,
            checked: 0,
            boundary: 0,
            min_margin: f64::INFINITY,
        }
    }
}

/// `|a - b| / max(1e-12, |a| + |b|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// `‖a - b‖ / max(1e-12, ‖a‖ + ‖b‖)`
pub fn norm_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    diff / scale.max(1e-12)
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, MaskTrace)>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let g = Graph::new().with_mask_trace();
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&g, &vars)?.item()?;
    Ok((out, g.mask_trace().unwrap_or_default()))
}

/// Checks the gradient of scalar `f` with respect to every element of every
/// input tensor.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let g = Graph::new().with_mask_trace();
    let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&g, &vars)?;
    let base = g.mask_trace().unwrap_or_default();
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        min_margin: base.min_margin,
        ..Default::default()
    };
    let mut probe = inputs.to_vec();
    for (t, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|g| g.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; inputs[t].len()]);
        let (mut kept_ad, mut kept_fd) = (Vec::new(), Vec::new());
        for (i, &ad) in analytic.iter().enumerate() {
            let x0 = inputs[t].data()[i];
            probe[t].data_mut()[i] = x0 + h;
            let (plus, sig_plus) = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = x0 - h;
            let (minus, sig_minus) = evaluate(&f, &probe)?;
            probe[t].data_mut()[i] = x0;
            if sig_plus.signature != base.signature || sig_minus.signature != base.signature {
                report.boundary += 1;
                continue;
            }
            let fd = (plus - minus) / (2.0 * h);
            report.max_elem_error = report.max_elem_error.max(relative_error(ad, fd));
            report.checked += 1;
            kept_ad.push(ad);
            kept_fd.push(fd);
        }
        report.max_rel_error = report.max_rel_error.max(norm_relative_error(&kept_ad, &kept_fd));
    }
    Ok(report)
}

/// Single-input form of [`finite_diff_check_many`].
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    finite_diff_check_many(|g, v| f(g, v[0]), std::slice::from_ref(x), h)
}
