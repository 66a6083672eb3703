//! Critic and actor objectives, generic over the scalar type so they can be
//! checked against finite differences in `f64`.

use super::DdpgError;
use crate::nn::{ForwardCache, Gradients, Matrix, Mlp, Scalar};

/// `y = ret + disc · Q_targ(s', μ_targ(s'))` per sample. Target networks are
/// evaluated without caches, so nothing flows back into them.
pub fn td_targets<T: Scalar>(
    actor_target: &Mlp<T>,
    critic_target: &Mlp<T>,
    returns: &[T],
    next_obs: &Matrix<T>,
    bootstrap_discount: &[T],
) -> Result<Vec<T>, DdpgError> {
    let b = next_obs.rows();
    if returns.len() != b || bootstrap_discount.len() != b {
        return Err(DdpgError::Config(format!(
            "td targets: {} returns and {} discounts for {b} samples",
            returns.len(),
            bootstrap_discount.len()
        )));
    }
    let next_act = actor_target.forward_batch(next_obs)?;
    let q_next = critic_target.forward_batch(&next_obs.hcat(&next_act)?)?;
    let mut y = Vec::with_capacity(b);
    for i in 0..b {
        let v = returns[i] + bootstrap_discount[i] * q_next.get(i, 0);
        if !v.is_finite() {
            return Err(DdpgError::NonFiniteTarget { index: i });
        }
        y.push(v);
    }
    Ok(y)
}

/// Value and parameter gradients of `mean_b (Q(s_b, a_b) - y_b)²`.
#[derive(Debug, Clone)]
pub struct CriticLoss<T> {
    pub loss: T,
    pub mean_q: T,
    pub grads: Gradients<T>,
}

pub fn critic_loss<T: Scalar>(
    critic: &Mlp<T>,
    obs: &Matrix<T>,
    action: &Matrix<T>,
    targets: &[T],
) -> Result<CriticLoss<T>, DdpgError> {
    let b = obs.rows();
    if targets.len() != b || b == 0 {
        return Err(DdpgError::Config(format!(
            "critic loss: {} targets for {b} samples",
            targets.len()
        )));
    }
    let cache = critic.forward_cached(&obs.hcat(action)?)?;
    let q = cache.output();
    let inv_b = T::one() / T::from_f64_lossy(b as f64);
    let two = T::from_f64_lossy(2.0);
    let mut loss = T::zero();
    let mut sum_q = T::zero();
    let mut dq = Matrix::zeros(b, 1);
    for (i, &t) in targets.iter().enumerate().take(b) {
        let diff = q.get(i, 0) - t;
        loss = loss + diff * diff;
        sum_q = sum_q + q.get(i, 0);
        dq.set(i, 0, two * diff * inv_b);
    }
    let loss = loss * inv_b;
    if !loss.is_finite() {
        return Err(DdpgError::NonFiniteLoss("critic"));
    }
    let grads = critic.backward(&cache, &dq)?;
    Ok(CriticLoss {
        loss,
        mean_q: sum_q * inv_b,
        grads,
    })
}

/// Forward pass of `-mean_b Q(s_b, μ(s_b))` with the gradient w.r.t. the
/// actor's actions. The critic is only read.
#[derive(Debug, Clone)]
pub struct ActorPass<T> {
    pub loss: T,
    pub cache: ForwardCache<T>,
    /// dLoss/dμ(s), one row per sample.
    pub action_grad: Matrix<T>,
}

impl<T: Scalar> ActorPass<T> {
    pub fn actions(&self) -> &Matrix<T> {
        self.cache.output()
    }

    /// Actor parameter gradients for `loss + extra`, where `extra_action_grad`
    /// is the gradient of an additional term w.r.t. the same actions.
    pub fn param_grads(
        &self,
        actor: &Mlp<T>,
        extra_action_grad: Option<&Matrix<T>>,
    ) -> Result<Gradients<T>, DdpgError> {
        let g = match extra_action_grad {
            None => self.action_grad.clone(),
            Some(e) => {
                if e.rows() != self.action_grad.rows() || e.cols() != self.action_grad.cols() {
                    return Err(DdpgError::Config(format!(
                        "extra action gradient {}x{} vs actions {}x{}",
                        e.rows(),
                        e.cols(),
                        self.action_grad.rows(),
                        self.action_grad.cols()
                    )));
                }
                let mut g = self.action_grad.clone();
                for (a, &x) in g.as_mut_slice().iter_mut().zip(e.as_slice()) {
                    *a = *a + x;
                }
                g
            }
        };
        Ok(actor.backward(&self.cache, &g)?)
    }
}

pub fn actor_pass<T: Scalar>(
    actor: &Mlp<T>,
    critic: &Mlp<T>,
    obs: &Matrix<T>,
) -> Result<ActorPass<T>, DdpgError> {
    let b = obs.rows();
    if b == 0 {
        return Err(DdpgError::Config("actor loss on an empty batch".into()));
    }
    let cache = actor.forward_cached(obs)?;
    let critic_in = obs.hcat(cache.output())?;
    let ccache = critic.forward_cached(&critic_in)?;
    let inv_b = T::one() / T::from_f64_lossy(b as f64);
    let loss = -ccache.output().as_slice().iter().copied().sum::<T>() * inv_b;
    if !loss.is_finite() {
        return Err(DdpgError::NonFiniteLoss("actor"));
    }
    let dq = Matrix::from_vec(b, 1, vec![-inv_b; b])?;
    let d_in = critic.backward_input(&ccache, &dq)?;
    let action_grad = d_in.columns(obs.cols(), actor.output_dim());
    Ok(ActorPass {
        loss,
        cache,
        action_grad,
    })
}

/// `-mean Q(s, μ(s))` and the actor's parameter gradients.
pub fn actor_loss<T: Scalar>(
    actor: &Mlp<T>,
    critic: &Mlp<T>,
    obs: &Matrix<T>,
) -> Result<(T, Gradients<T>), DdpgError> {
    let pass = actor_pass(actor, critic, obs)?;
    let g = pass.param_grads(actor, None)?;
    Ok((pass.loss, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_critic(in_dim: usize, value: f64) -> Mlp<f64> {
        Mlp::from_layers(vec![Dense::from_parts(
            in_dim,
            1,
            Activation::Identity,
            vec![0.0; in_dim],
            vec![value],
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn n_step_target_by_hand() {
        // bootstrap value 10 regardless of input
        let actor = constant_critic(1, 0.0);
        let critic = constant_critic(2, 10.0);
        let ret = 1.0 + 0.99 + 0.99f64 * 0.99;
        let y = td_targets(
            &actor,
            &critic,
            &[ret],
            &Matrix::zeros(1, 1),
            &[0.99f64.powi(3)],
        )
        .unwrap();
        assert!((y[0] - 12.67309).abs() < 1e-5, "{}", y[0]);
    }

    #[test]
    fn nan_target_is_rejected() {
        let actor = constant_critic(1, 0.0);
        let critic = constant_critic(2, f64::NAN);
        let err = td_targets(&actor, &critic, &[0.0], &Matrix::zeros(1, 1), &[0.9]);
        assert!(matches!(err, Err(DdpgError::NonFiniteTarget { index: 0 })));
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let critic = constant_critic(3, 2.5);
        let out = critic_loss(
            &critic,
            &Matrix::zeros(4, 2),
            &Matrix::zeros(4, 1),
            &[2.5; 4],
        )
        .unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.flat_params().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_critic_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actor: Mlp<f64> =
            Mlp::with_hidden(3, &[8], 2, Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let critic = constant_critic(5, -1.0);
        let obs = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
        let (loss, g) = actor_loss(&actor, &critic, &obs).unwrap();
        assert_eq!(loss, 1.0);
        assert!(g.flat_params().iter().all(|&x| x == 0.0));
    }
}
