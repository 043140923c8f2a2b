//! Central finite-difference checks for analytic gradients.

use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose ±step evaluation crossed a kink (ReLU, max, |·|).
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_coordinate: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Compares `analytic(i)` to `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every
/// coordinate in `coords`.
///
/// `eval(i, delta)` must return the function value with coordinate `i` shifted
/// by `delta`, together with the branch signature of that evaluation.
/// Coordinates whose perturbed signatures differ from the unperturbed one are
/// skipped, since the function is not differentiable across the step there.
pub fn check<A, E>(coords: &[usize], step: f64, analytic: A, mut eval: E) -> Result<GradCheckReport>
where
    A: Fn(usize) -> f64,
    E: FnMut(usize, f64) -> Result<(f64, u64)>,
{
    let mut report = GradCheckReport::default();
    let Some(&first) = coords.first() else { return Ok(report) };
    let (_, base_sig) = eval(first, 0.0)?;
    for &i in coords {
        let (fp, sp) = eval(i, step)?;
        let (fm, sm) = eval(i, -step)?;
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let err = relative_error(analytic(i), numeric);
        report.checked += 1;
        if report.worst_coordinate.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_coordinate = Some(i);
        }
    }
    Ok(report)
}
