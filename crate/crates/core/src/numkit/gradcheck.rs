use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares an analytic gradient against central differences.
///
/// `loss_fn` maps a parameter vector to `(loss, analytic_gradient)`. The
/// analytic gradient is taken at `params`; each coordinate is then perturbed
/// by `±h`. Returns the largest `|a - c| / (|a| + |c| + 1e-12)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::validation(format!("finite-difference step must be > 0, got {h}")));
    }
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            term: "finite_diff_check loss".into(),
            value: loss,
        });
    }
    if analytic.len() != params.len() {
        return Err(Error::validation(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let (up, _) = loss_fn(&probe)?;
        probe[i] = params[i] - h;
        let (down, _) = loss_fn(&probe)?;
        probe[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Divergence {
                term: format!("finite_diff_check loss at parameter {i}"),
                value: if up.is_finite() { down } else { up },
            });
        }
        let central = (up - down) / (2.0 * h);
        let a = analytic[i];
        worst = worst.max((a - central).abs() / (a.abs() + central.abs() + 1e-12));
    }
    Ok(worst)
}
