use serde::{Deserialize, Serialize};

use super::ensemble::EnsemblePolicy;
use super::PolterError;
use crate::ddpg::{ActorRegularizer, DdpgAgent, DdpgError, NStepBatch, UpdateDiagnostics};
use crate::nn::{Gradients, Matrix, Mlp, Scalar};

/// How the KL from the mixture of Gaussian-interpreted members is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// Mean of member-wise KLs (convexity upper bound).
    UpperBound,
    /// KL from a Gaussian at the mean member action.
    MeanAction,
}

impl KlMode {
    pub fn name(self) -> &'static str {
        match self {
            KlMode::UpperBound => "upper_bound",
            KlMode::MeanAction => "mean_action",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "upper_bound" => Some(KlMode::UpperBound),
            "mean_action" => Some(KlMode::MeanAction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolterConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub kl_mode: KlMode,
}

impl Default for PolterConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            sigma: 0.2,
            kl_mode: KlMode::UpperBound,
        }
    }
}

impl PolterConfig {
    pub fn validate(&self) -> Result<(), PolterError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PolterError::Config(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(PolterError::Config(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Unscaled term value and its gradient w.r.t. the current actor's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolterTerm<T> {
    pub value: T,
    pub action_grad: Matrix<T>,
}

/// The regularizer evaluated on precomputed actions. `member_actions[k]` holds
/// member `k`'s actions on the same states as `actions`.
pub fn polter_action_term<T: Scalar>(
    member_actions: &[Matrix<T>],
    actions: &Matrix<T>,
    sigma: f64,
    mode: KlMode,
) -> Result<PolterTerm<T>, PolterError> {
    let (b, d) = (actions.rows(), actions.cols());
    let mut grad = Matrix::zeros(b, d);
    if member_actions.is_empty() || b == 0 {
        return Ok(PolterTerm {
            value: T::zero(),
            action_grad: grad,
        });
    }
    if let Some(m) = member_actions
        .iter()
        .find(|m| m.rows() != b || m.cols() != d)
    {
        return Err(PolterError::Shape(format!(
            "member actions {}x{} vs actor actions {b}x{d}",
            m.rows(),
            m.cols()
        )));
    }
    let k = T::from_f64_lossy(member_actions.len() as f64);
    let inv_b = T::one() / T::from_f64_lossy(b as f64);
    let var = T::from_f64_lossy(sigma * sigma);
    let two_var = var + var;
    let mut total = T::zero();
    for i in 0..b {
        for j in 0..d {
            let mu = actions.get(i, j);
            let mean = member_actions.iter().map(|m| m.get(i, j)).sum::<T>() / k;
            total = total
                + match mode {
                    KlMode::UpperBound => {
                        member_actions
                            .iter()
                            .map(|m| (m.get(i, j) - mu).powi(2))
                            .sum::<T>()
                            / k
                    }
                    KlMode::MeanAction => (mean - mu).powi(2),
                };
            // both modes share this gradient in μ
            grad.set(i, j, (mu - mean) / var * inv_b);
        }
    }
    Ok(PolterTerm {
        value: total / two_var * inv_b,
        action_grad: grad,
    })
}

/// Term value and the actor's parameter gradients; members are evaluated on
/// `states` and receive no gradient. Unscaled by `alpha`.
pub fn polter_term<T: Scalar>(
    members: &[Mlp<T>],
    actor: &Mlp<T>,
    states: &Matrix<T>,
    config: &PolterConfig,
) -> Result<(T, Gradients<T>), PolterError> {
    let cache = actor.forward_cached(states)?;
    let member_actions = members
        .iter()
        .map(|m| m.forward_batch(states))
        .collect::<Result<Vec<_>, _>>()?;
    let t = polter_action_term(
        &member_actions,
        cache.output(),
        config.sigma,
        config.kl_mode,
    )?;
    let g = actor.backward(&cache, &t.action_grad)?;
    Ok((t.value, g))
}

/// `alpha ×` the term over an ensemble, as an actor-loss add-on.
pub struct PolterRegularizer<'a> {
    pub ensemble: &'a EnsemblePolicy,
    pub config: &'a PolterConfig,
}

impl ActorRegularizer for PolterRegularizer<'_> {
    fn penalty(
        &self,
        obs: &Matrix<f32>,
        actions: &Matrix<f32>,
    ) -> Result<(f64, Matrix<f32>), DdpgError> {
        let member_actions = self
            .ensemble
            .actors()
            .map(|m| m.forward_batch(obs))
            .collect::<Result<Vec<_>, _>>()?;
        let t = polter_action_term(
            &member_actions,
            actions,
            self.config.sigma,
            self.config.kl_mode,
        )
        .map_err(|e| DdpgError::Regularizer(e.to_string()))?;
        let a = self.config.alpha as f32;
        Ok((
            self.config.alpha * t.value as f64,
            t.action_grad.map(|g| a * g),
        ))
    }
}

/// Agent update with the ensemble term added to the actor loss. With
/// `alpha == 0` or an empty ensemble this is exactly the plain update.
pub fn regularized_actor_update(
    agent: &mut DdpgAgent,
    ensemble: &EnsemblePolicy,
    batch: &NStepBatch,
    inner_rewards: &[f32],
    config: &PolterConfig,
) -> Result<UpdateDiagnostics, DdpgError> {
    if config.alpha == 0.0 || ensemble.is_empty() {
        return agent.update(batch, inner_rewards, None);
    }
    let reg = PolterRegularizer { ensemble, config };
    agent.update(batch, inner_rewards, Some(&reg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_member_offset_by_hand() {
        let actions = Matrix::from_vec(1, 2, vec![0.0f64, 0.0]).unwrap();
        let member = Matrix::from_vec(1, 2, vec![0.2f64, 0.0]).unwrap();
        let t = polter_action_term(&[member], &actions, 0.2, KlMode::UpperBound).unwrap();
        assert!((t.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble_is_zero() {
        let actions = Matrix::from_vec(2, 2, vec![0.1f64, 0.2, 0.3, 0.4]).unwrap();
        let t = polter_action_term(&[], &actions, 0.2, KlMode::UpperBound).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.action_grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn agreement_gives_zero_in_both_modes() {
        let a = Matrix::from_vec(2, 2, vec![0.1f64, -0.2, 0.3, 0.9]).unwrap();
        for mode in [KlMode::UpperBound, KlMode::MeanAction] {
            let t = polter_action_term(&[a.clone(), a.clone()], &a, 0.2, mode).unwrap();
            assert_eq!(t.value, 0.0);
            assert!(t.action_grad.as_slice().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn upper_bound_dominates_mean_action() {
        let mu = Matrix::from_vec(1, 2, vec![0.0f64, 0.0]).unwrap();
        let m1 = Matrix::from_vec(1, 2, vec![0.5f64, 0.0]).unwrap();
        let m2 = Matrix::from_vec(1, 2, vec![-0.5f64, 0.0]).unwrap();
        let ub = polter_action_term(&[m1.clone(), m2.clone()], &mu, 0.2, KlMode::UpperBound)
            .unwrap()
            .value;
        let ma = polter_action_term(&[m1, m2], &mu, 0.2, KlMode::MeanAction)
            .unwrap()
            .value;
        assert_eq!(ma, 0.0);
        assert!(ub > 0.0);
    }

    #[test]
    fn config_rejects_negative_alpha() {
        let c = PolterConfig {
            alpha: -1.0,
            ..PolterConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
