//! Regret plus information cost of adapting a prior to a task, on tabular MDPs.

use super::divergence::kl_divergence;
use super::occupancy::{occupancy, value_iteration};
use super::AnalysisError;
use crate::envs::{TabularMdp, TabularPolicy};

const VI_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationObjective {
    /// `E_{ρ⁺}[r] - E_{ρ*}[r]` against the task-optimal policy.
    pub regret: f64,
    /// `D_KL(ρ* || ρ_prior)` between state occupancies.
    pub information_cost: f64,
}

impl AdaptationObjective {
    pub fn total(&self) -> f64 {
        self.regret + self.information_cost
    }
}

/// Best achievable `E_ρ[r]` and the policy attaining it.
pub fn optimal_return(
    mdp: &TabularMdp,
    task_reward: &[f64],
) -> Result<(f64, TabularPolicy), AnalysisError> {
    let (_, pi) = value_iteration(mdp, task_reward, VI_TOL)?;
    let occ = occupancy(mdp, &pi)?;
    Ok((occ.expectation(task_reward), pi))
}

pub fn adaptation_objective(
    mdp: &TabularMdp,
    prior: &TabularPolicy,
    task_reward: &[f64],
    candidate: &TabularPolicy,
) -> Result<AdaptationObjective, AnalysisError> {
    if task_reward.len() != mdp.n_states() {
        return Err(AnalysisError::Shape(format!(
            "task reward has {} entries for {} states",
            task_reward.len(),
            mdp.n_states()
        )));
    }
    let (best, _) = optimal_return(mdp, task_reward)?;
    objective_given_optimum(mdp, prior, task_reward, candidate, best)
}

fn objective_given_optimum(
    mdp: &TabularMdp,
    prior: &TabularPolicy,
    task_reward: &[f64],
    candidate: &TabularPolicy,
    best: f64,
) -> Result<AdaptationObjective, AnalysisError> {
    let rho_prior = occupancy(mdp, prior)?;
    let rho_cand = occupancy(mdp, candidate)?;
    Ok(AdaptationObjective {
        regret: best - rho_cand.expectation(task_reward),
        information_cost: kl_divergence(&rho_cand.rho, &rho_prior.rho)?,
    })
}

/// All points of the probability simplex over `n` outcomes whose coordinates
/// are multiples of `1 / resolution`, in lexicographic order.
pub fn simplex_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(n - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let mut counts = Vec::new();
    rec(n, resolution, &mut Vec::with_capacity(n), &mut counts);
    counts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|k| k as f64 / resolution as f64)
                .collect()
        })
        .collect()
}

/// Minimizer of regret + information cost over a finite candidate set.
/// Returns the winning index and its objective; ties keep the earliest index.
pub fn minimize_adaptation_objective(
    mdp: &TabularMdp,
    prior: &TabularPolicy,
    task_reward: &[f64],
    candidates: &[TabularPolicy],
) -> Result<(usize, AdaptationObjective), AnalysisError> {
    if candidates.is_empty() {
        return Err(AnalysisError::Empty("candidate policy set"));
    }
    let (best, _) = optimal_return(mdp, task_reward)?;
    let mut winner: Option<(usize, AdaptationObjective)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let obj = match objective_given_optimum(mdp, prior, task_reward, c, best) {
            Ok(o) => o,
            // Candidates leaving the prior's support have infinite cost.
            Err(AnalysisError::InfiniteKl { .. }) => continue,
            Err(e) => return Err(e),
        };
        if winner.is_none_or(|(_, w)| obj.total() < w.total()) {
            winner = Some((i, obj));
        }
    }
    winner.ok_or(AnalysisError::Empty(
        "candidates with finite information cost",
    ))
}
