use super::IntrinsicError;
use crate::nn::Matrix;

/// Particle-based reward: for each row `i`, the mean over its `k` nearest
/// other rows `j` of `ln max(‖z_i − z_j‖, eps)`.
pub fn apt_rewards(
    particles: &Matrix<f32>,
    k: usize,
    eps: f64,
) -> Result<Vec<f32>, IntrinsicError> {
    let n = particles.rows();
    if n <= k {
        return Err(IntrinsicError::BatchTooSmall { need: k, got: n });
    }
    let mut dist = vec![0.0f64; n - 1];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let zi = particles.row(i);
        for (idx, j) in (0..n).filter(|&j| j != i).enumerate() {
            dist[idx] = zi
                .iter()
                .zip(particles.row(j))
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>();
        }
        dist.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        let r = dist[..k]
            .iter()
            .map(|&d2| d2.sqrt().max(eps).ln())
            .sum::<f64>()
            / k as f64;
        out.push(r as f32);
    }
    Ok(out)
}
