use super::AnalysisError;
use crate::nn::{Matrix, Mlp};

/// Per-state `|μ_ref(s) - μ_subj(s)|² / (2σ²)`: the KL between two Gaussians
/// with equal isotropic std `sigma` centred on the actors' outputs.
pub fn per_state_policy_kl(
    reference: &Mlp<f32>,
    subject: &Mlp<f32>,
    probe_states: &Matrix<f32>,
    sigma: f64,
) -> Result<Vec<f64>, AnalysisError> {
    if probe_states.rows() == 0 {
        return Err(AnalysisError::Empty("probe states"));
    }
    if !(sigma > 0.0) {
        return Err(AnalysisError::Shape(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let a = reference.forward_batch(probe_states)?;
    let b = subject.forward_batch(probe_states)?;
    if a.cols() != b.cols() {
        return Err(AnalysisError::Shape(format!(
            "actors emit {} and {} action dimensions",
            a.cols(),
            b.cols()
        )));
    }
    let denom = 2.0 * sigma * sigma;
    Ok((0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .zip(b.row(i))
                .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                .sum::<f64>()
                / denom
        })
        .collect())
}

/// Mean over probe states of [`per_state_policy_kl`].
pub fn empirical_policy_kl(
    reference: &Mlp<f32>,
    subject: &Mlp<f32>,
    probe_states: &Matrix<f32>,
    sigma: f64,
) -> Result<f64, AnalysisError> {
    let v = per_state_policy_kl(reference, subject, probe_states, sigma)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}
