use super::divergence::entropy;
use super::AnalysisError;

/// Axis-aligned box that the histogram grid spans.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl HistogramBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, AnalysisError> {
        if low.len() != high.len() || low.is_empty() {
            return Err(AnalysisError::Shape(format!(
                "bounds of length {} and {}",
                low.len(),
                high.len()
            )));
        }
        if low
            .iter()
            .zip(&high)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l))
        {
            return Err(AnalysisError::Shape(
                "bounds must be finite with low < high".into(),
            ));
        }
        Ok(Self { low, high })
    }

    /// `[-1, 1]` in every dimension.
    pub fn symmetric_unit(dims: usize) -> Self {
        Self {
            low: vec![-1.0; dims],
            high: vec![1.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }
}

/// Joint histogram counts, row-major with the first dimension slowest.
/// Values outside the bounds fall into the edge bins.
pub fn joint_histogram<S: AsRef<[f64]>>(
    states: &[S],
    bounds: &HistogramBounds,
    bins_per_dim: usize,
) -> Result<Vec<u64>, AnalysisError> {
    if states.is_empty() {
        return Err(AnalysisError::Empty("state list"));
    }
    if bins_per_dim == 0 {
        return Err(AnalysisError::Shape("bins_per_dim must be positive".into()));
    }
    let dims = bounds.dims();
    let total_bins = bins_per_dim
        .checked_pow(dims as u32)
        .ok_or_else(|| AnalysisError::Shape("histogram too large".into()))?;
    let mut counts = vec![0u64; total_bins];
    for s in states {
        let s = s.as_ref();
        if s.len() != dims {
            return Err(AnalysisError::Shape(format!(
                "state of dimension {} for {dims}-d bounds",
                s.len()
            )));
        }
        let mut idx = 0usize;
        for (d, &x) in s.iter().enumerate() {
            let frac = (x - bounds.low[d]) / (bounds.high[d] - bounds.low[d]);
            let b = ((frac * bins_per_dim as f64).floor().max(0.0) as usize).min(bins_per_dim - 1);
            idx = idx * bins_per_dim + b;
        }
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Shannon entropy (nats) of the normalized joint histogram of `states`.
pub fn state_visitation_entropy<S: AsRef<[f64]>>(
    states: &[S],
    bounds: &HistogramBounds,
    bins_per_dim: usize,
) -> Result<f64, AnalysisError> {
    let counts = joint_histogram(states, bounds, bins_per_dim)?;
    let n = states.len() as f64;
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(entropy(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_has_zero_entropy() {
        let b = HistogramBounds::symmetric_unit(2);
        let states = vec![[0.01, 0.02]; 50];
        assert_eq!(state_visitation_entropy(&states, &b, 16).unwrap(), 0.0);
    }

    #[test]
    fn exactly_uniform_bins_give_log_count() {
        let b = HistogramBounds::symmetric_unit(1);
        let states: Vec<[f64; 1]> = (0..8).map(|i| [-1.0 + 0.25 * i as f64 + 0.1]).collect();
        let h = state_visitation_entropy(&states, &b, 8).unwrap();
        assert!((h - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_rejected() {
        let b = HistogramBounds::symmetric_unit(2);
        let states: Vec<[f64; 2]> = Vec::new();
        assert!(matches!(
            state_visitation_entropy(&states, &b, 4),
            Err(AnalysisError::Empty(_))
        ));
    }

    #[test]
    fn edges_are_clamped() {
        let b = HistogramBounds::symmetric_unit(1);
        let c = joint_histogram(&[[1.0], [-1.0], [5.0], [-5.0]], &b, 4).unwrap();
        assert_eq!(c, vec![2, 0, 0, 2]);
    }
}
