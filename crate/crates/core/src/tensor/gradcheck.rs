use super::TensorError;

/// A scalar function with an analytic gradient.
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> Result<f64, TensorError>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, TensorError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max rel err {:.3e} over {} coords (worst #{}: analytic {:.6e}, numeric {:.6e}) {}",
            self.max_rel_err,
            self.coordinates,
            self.worst_index,
            self.analytic,
            self.numeric,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are judged on absolute central-difference noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Relative error `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the analytic gradient of `f` at `point` against central
/// differences `(f(x+h) - f(x-h)) / 2h` on every coordinate.
pub fn grad_check<F: Differentiable + ?Sized>(
    f: &F,
    point: &[f64],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError> {
    let analytic = f.gradient(point)?;
    if analytic.len() != point.len() {
        return Err(TensorError::ShapeMismatch {
            op: "grad_check",
            left: (analytic.len(), 1),
            right: (point.len(), 1),
        });
    }
    if analytic.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
        coordinates: point.len(),
        tolerance: tol,
        passed: true,
    };
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f.value(&x)?;
        x[i] = orig - h;
        let minus = f.value(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::NonFinite { op: "grad_check" });
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_err || i == 0 {
            report.max_rel_err = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}
