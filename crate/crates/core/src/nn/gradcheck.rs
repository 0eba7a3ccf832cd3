use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` around `theta`.
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<F>(theta: &[f64], analytic: &[f64], mut loss: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    if !loss(theta).is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut probe = theta.to_vec();
    let mut worst = (0.0f64, 0usize);
    for i in 0..theta.len() {
        probe[i] = theta[i] + FD_STEP;
        let up = loss(&probe);
        probe[i] = theta[i] - FD_STEP;
        let down = loss(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport { max_rel_error: worst.0, worst_index: worst.1, passed: worst.0 < tolerance })
}
