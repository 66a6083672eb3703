use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::envs::{TabularMdp, TabularPolicy};

/// Discounted state-occupancy measure `ρ(s) = (1-γ) Σ_t γ^t P_t(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub rho: Vec<f64>,
    pub gamma: f64,
}

impl OccupancyMeasure {
    /// Sup-norm of `ρ - (1-γ) p0 - γ P_πᵀ ρ`.
    pub fn stationarity_residual(&self, mdp: &TabularMdp, policy: &TabularPolicy) -> f64 {
        let n = mdp.n_states();
        let p = policy_transition(mdp, policy);
        (0..n)
            .map(|j| {
                let inflow: f64 = (0..n).map(|i| self.rho[i] * p[i * n + j]).sum();
                (self.rho[j] - (1.0 - self.gamma) * mdp.initial()[j] - self.gamma * inflow).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `E_ρ[r]`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.rho.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// State-to-state kernel `P_π(s' | s) = Σ_a π(a|s) P(s'|s,a)`, row-major.
pub fn policy_transition(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
    let n = mdp.n_states();
    let mut out = vec![0.0; n * n];
    for s in 0..n {
        let row = &mut out[s * n..(s + 1) * n];
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (o, &p) in row.iter_mut().zip(mdp.next_dist(s, a)) {
                *o += pa * p;
            }
        }
    }
    out
}

/// Solves `(I - γ P_πᵀ) ρ = (1-γ) p0` exactly.
pub fn occupancy(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<OccupancyMeasure, AnalysisError> {
    policy.check_compatible(mdp)?;
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let p = policy_transition(mdp, policy);
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p[j * n + i]
    });
    let b = DVector::from_iterator(n, mdp.initial().iter().map(|&x| (1.0 - gamma) * x));
    let rho = a.lu().solve(&b).ok_or(AnalysisError::Singular)?;
    Ok(OccupancyMeasure {
        rho: rho.iter().copied().collect(),
        gamma,
    })
}

/// Exact marginals `P_0 .. P_{horizon-1}` of the state at each time step.
pub fn state_marginals(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    policy.check_compatible(mdp)?;
    let n = mdp.n_states();
    let p = policy_transition(mdp, policy);
    let mut out = Vec::with_capacity(horizon);
    let mut d = mdp.initial().to_vec();
    for _ in 0..horizon {
        let next = propagate(&d, &p, n);
        out.push(std::mem::replace(&mut d, next));
    }
    Ok(out)
}

pub(crate) fn propagate(d: &[f64], kernel: &[f64], n: usize) -> Vec<f64> {
    let mut next = vec![0.0; n];
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        for (nj, &k) in next.iter_mut().zip(&kernel[i * n..(i + 1) * n]) {
            *nj += di * k;
        }
    }
    next
}

/// Optimal values and a greedy deterministic policy for a state-based reward,
/// `V(s) = r(s) + γ max_a Σ P(s'|s,a) V(s')`, by value iteration to `tol`.
pub fn value_iteration(
    mdp: &TabularMdp,
    reward: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, TabularPolicy), AnalysisError> {
    let n = mdp.n_states();
    if reward.len() != n {
        return Err(AnalysisError::Shape(format!(
            "reward has {} entries for {n} states",
            reward.len()
        )));
    }
    let gamma = mdp.gamma();
    let mut v = vec![0.0; n];
    let backup = |v: &[f64], s: usize, a: usize| -> f64 {
        mdp.next_dist(s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum::<f64>()
    };
    loop {
        let mut delta: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let best = (0..mdp.n_actions())
                    .map(|a| backup(&v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                reward[s] + gamma * best
            })
            .collect();
        for (a, b) in next.iter().zip(&v) {
            delta = delta.max((a - b).abs());
        }
        v = next;
        if delta <= tol * (1.0 - gamma) {
            break;
        }
    }
    let actions: Vec<usize> = (0..n)
        .map(|s| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions() {
                let q = backup(&v, s, a);
                // Ties broken toward the lowest action index.
                if q > best_q + 1e-12 {
                    best_q = q;
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok((v, TabularPolicy::deterministic(mdp.n_actions(), &actions)?))
}
