use rand::Rng;

use super::{IntrinsicConfig, IntrinsicError, TransitionRows};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, Gradients, Matrix, Mlp};

fn adam(cfg: &IntrinsicConfig) -> AdamConfig {
    AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    }
}

fn relu_net<R: Rng + ?Sized>(
    input: usize,
    cfg: &IntrinsicConfig,
    output: usize,
    out_act: Activation,
    rng: &mut R,
) -> Result<Mlp<f32>, IntrinsicError> {
    Ok(Mlp::with_hidden(
        input,
        &cfg.hidden,
        output,
        Activation::Relu,
        out_act,
        rng,
    )?)
}

/// Per-row `‖pred − target‖²` and the gradient of their batch mean w.r.t. `pred`.
fn squared_error(pred: &Matrix<f32>, target: &Matrix<f32>) -> (Vec<f32>, Matrix<f32>) {
    let b = pred.rows();
    let scale = 2.0 / b as f32;
    let mut per_row = Vec::with_capacity(b);
    let mut grad = Matrix::zeros(b, pred.cols());
    for i in 0..b {
        let mut acc = 0.0f32;
        for (j, (&p, &t)) in pred.row(i).iter().zip(target.row(i)).enumerate() {
            let d = p - t;
            acc += d * d;
            grad.set(i, j, scale * d);
        }
        per_row.push(acc);
    }
    (per_row, grad)
}

fn mean(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

fn finite_loss(v: f64, what: &'static str) -> Result<f64, IntrinsicError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IntrinsicError::NonFinite(what))
    }
}

fn add_into(acc: &mut Gradients<f32>, other: &Gradients<f32>) {
    for (a, o) in acc.layers.iter_mut().zip(&other.layers) {
        for (x, &y) in a.weights.iter_mut().zip(&o.weights) {
            *x += y;
        }
        for (x, &y) in a.bias.iter_mut().zip(&o.bias) {
            *x += y;
        }
    }
}

/// Random network distillation on next observations.
#[derive(Debug, Clone)]
pub(super) struct Rnd {
    pub target: Mlp<f32>,
    pub predictor: Mlp<f32>,
    opt: AdamState<f32>,
}

impl Rnd {
    pub fn new<R: Rng + ?Sized>(
        cfg: &IntrinsicConfig,
        obs_dim: usize,
        rng: &mut R,
    ) -> Result<Self, IntrinsicError> {
        let target = relu_net(obs_dim, cfg, cfg.rnd_rep_dim, Activation::Identity, rng)?;
        let predictor = relu_net(obs_dim, cfg, cfg.rnd_rep_dim, Activation::Identity, rng)?;
        Self::from_networks(cfg, target, predictor)
    }

    pub fn from_networks(
        cfg: &IntrinsicConfig,
        target: Mlp<f32>,
        predictor: Mlp<f32>,
    ) -> Result<Self, IntrinsicError> {
        if target.input_dim() != predictor.input_dim()
            || target.output_dim() != predictor.output_dim()
        {
            return Err(IntrinsicError::Config(
                "rnd target and predictor shapes differ".into(),
            ));
        }
        let opt = AdamState::new(&predictor, adam(cfg));
        Ok(Self {
            target,
            predictor,
            opt,
        })
    }

    pub fn reward(&self, rows: TransitionRows<'_>) -> Result<Vec<f32>, IntrinsicError> {
        let t = self.target.forward_batch(rows.next_obs)?;
        let p = self.predictor.forward_batch(rows.next_obs)?;
        Ok(squared_error(&p, &t).0)
    }

    pub fn loss(&self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        finite_loss(mean(&self.reward(rows)?), "rnd loss")
    }

    pub fn update(&mut self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        let t = self.target.forward_batch(rows.next_obs)?;
        let cache = self.predictor.forward_cached(rows.next_obs)?;
        let (err, grad) = squared_error(cache.output(), &t);
        let loss = finite_loss(mean(&err), "rnd loss")?;
        let g = self.predictor.backward(&cache, &grad)?;
        adam_step(&mut self.predictor, &g, &mut self.opt)?;
        Ok(loss)
    }
}

/// Curiosity: forward-model error in an embedding learned by inverse dynamics.
#[derive(Debug, Clone)]
pub(super) struct Icm {
    pub embed: Mlp<f32>,
    pub forward: Mlp<f32>,
    pub inverse: Mlp<f32>,
    embed_opt: AdamState<f32>,
    forward_opt: AdamState<f32>,
    inverse_opt: AdamState<f32>,
}

impl Icm {
    pub fn new<R: Rng + ?Sized>(
        cfg: &IntrinsicConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut R,
    ) -> Result<Self, IntrinsicError> {
        let e = cfg.icm_embed_dim;
        let embed = relu_net(obs_dim, cfg, e, Activation::Identity, rng)?;
        let forward = relu_net(e + act_dim, cfg, e, Activation::Identity, rng)?;
        let inverse = relu_net(2 * e, cfg, act_dim, Activation::Tanh, rng)?;
        Ok(Self {
            embed_opt: AdamState::new(&embed, adam(cfg)),
            forward_opt: AdamState::new(&forward, adam(cfg)),
            inverse_opt: AdamState::new(&inverse, adam(cfg)),
            embed,
            forward,
            inverse,
        })
    }

    pub fn reward(&self, rows: TransitionRows<'_>) -> Result<Vec<f32>, IntrinsicError> {
        let phi = self.embed.forward_batch(rows.obs)?;
        let phi_next = self.embed.forward_batch(rows.next_obs)?;
        let pred = self.forward.forward_batch(&phi.hcat(rows.action)?)?;
        Ok(squared_error(&pred, &phi_next).0)
    }

    /// `(forward + inverse, forward, inverse)` losses.
    pub fn loss(&self, rows: TransitionRows<'_>) -> Result<(f64, f64, f64), IntrinsicError> {
        let phi = self.embed.forward_batch(rows.obs)?;
        let phi_next = self.embed.forward_batch(rows.next_obs)?;
        let pred = self.forward.forward_batch(&phi.hcat(rows.action)?)?;
        let inv = self.inverse.forward_batch(&phi.hcat(&phi_next)?)?;
        let f = mean(&squared_error(&pred, &phi_next).0);
        let i = mean(&squared_error(&inv, rows.action).0);
        Ok((finite_loss(f + i, "icm loss")?, f, i))
    }

    #[cfg(test)]
    /// Mean squared action error of the inverse model, averaged over dimensions.
    pub fn inverse_mse(&self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        let phi = self.embed.forward_batch(rows.obs)?;
        let phi_next = self.embed.forward_batch(rows.next_obs)?;
        let inv = self.inverse.forward_batch(&phi.hcat(&phi_next)?)?;
        Ok(mean(&squared_error(&inv, rows.action).0) / rows.action.cols() as f64)
    }

    pub fn update(&mut self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        let e = self.embed.output_dim();
        let c_obs = self.embed.forward_cached(rows.obs)?;
        let c_next = self.embed.forward_cached(rows.next_obs)?;
        let phi = c_obs.output();
        let phi_next = c_next.output();

        // forward model sees detached embeddings
        let c_fwd = self.forward.forward_cached(&phi.hcat(rows.action)?)?;
        let (f_err, f_grad) = squared_error(c_fwd.output(), phi_next);
        let g_fwd = self.forward.backward(&c_fwd, &f_grad)?;

        // inverse loss trains both the inverse model and the embedding
        let c_inv = self.inverse.forward_cached(&phi.hcat(phi_next)?)?;
        let (i_err, i_grad) = squared_error(c_inv.output(), rows.action);
        let g_inv = self.inverse.backward(&c_inv, &i_grad)?;
        let mut g_embed = self.embed.backward(&c_obs, &g_inv.input.columns(0, e))?;
        add_into(
            &mut g_embed,
            &self.embed.backward(&c_next, &g_inv.input.columns(e, e))?,
        );

        let loss = finite_loss(mean(&f_err) + mean(&i_err), "icm loss")?;
        adam_step(&mut self.forward, &g_fwd, &mut self.forward_opt)?;
        adam_step(&mut self.inverse, &g_inv, &mut self.inverse_opt)?;
        adam_step(&mut self.embed, &g_embed, &mut self.embed_opt)?;
        Ok(loss)
    }
}

/// Ensemble of forward models predicting `s'` from `(s, a)`.
#[derive(Debug, Clone)]
pub(super) struct Disagreement {
    pub members: Vec<Mlp<f32>>,
    opts: Vec<AdamState<f32>>,
}

impl Disagreement {
    pub fn new<R: Rng + ?Sized>(
        cfg: &IntrinsicConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut R,
    ) -> Result<Self, IntrinsicError> {
        let members = (0..cfg.ensemble_size)
            .map(|_| relu_net(obs_dim + act_dim, cfg, obs_dim, Activation::Identity, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_members(cfg, members))
    }

    pub fn from_members(cfg: &IntrinsicConfig, members: Vec<Mlp<f32>>) -> Self {
        let opts = members
            .iter()
            .map(|m| AdamState::new(m, adam(cfg)))
            .collect();
        Self { members, opts }
    }

    /// Mean over output dimensions of the across-member (population) variance.
    pub fn reward(&self, rows: TransitionRows<'_>) -> Result<Vec<f32>, IntrinsicError> {
        let input = rows.obs.hcat(rows.action)?;
        let preds = self
            .members
            .iter()
            .map(|m| m.forward_batch(&input))
            .collect::<Result<Vec<_>, _>>()?;
        let k = preds.len() as f64;
        let (b, d) = (input.rows(), preds[0].cols());
        let mut out = Vec::with_capacity(b);
        for i in 0..b {
            let mut acc = 0.0f64;
            for j in 0..d {
                let m = preds.iter().map(|p| p.get(i, j) as f64).sum::<f64>() / k;
                acc += preds
                    .iter()
                    .map(|p| (p.get(i, j) as f64 - m).powi(2))
                    .sum::<f64>()
                    / k;
            }
            out.push((acc / d as f64) as f32);
        }
        Ok(out)
    }

    pub fn loss(&self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        let input = rows.obs.hcat(rows.action)?;
        let mut total = 0.0;
        for m in &self.members {
            total += mean(&squared_error(&m.forward_batch(&input)?, rows.next_obs).0);
        }
        finite_loss(total / self.members.len() as f64, "disagreement loss")
    }

    pub fn update(&mut self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        let input = rows.obs.hcat(rows.action)?;
        let mut grads = Vec::with_capacity(self.members.len());
        let mut total = 0.0;
        for m in &self.members {
            let cache = m.forward_cached(&input)?;
            let (err, g) = squared_error(cache.output(), rows.next_obs);
            total += mean(&err);
            grads.push(m.backward(&cache, &g)?);
        }
        let loss = finite_loss(total / self.members.len() as f64, "disagreement loss")?;
        for ((m, g), o) in self.members.iter_mut().zip(&grads).zip(&mut self.opts) {
            adam_step(m, g, o)?;
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{pointmass_step, PointMassConfig, PointMassState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> IntrinsicConfig {
        IntrinsicConfig {
            hidden: vec![32, 32],
            ..IntrinsicConfig::default()
        }
    }

    fn uniform(rows: usize, cols: usize, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Matrix<f32> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rnd_copy_predictor_gives_zero_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cfg();
        let t = relu_net(4, &c, 64, Activation::Identity, &mut rng).unwrap();
        let rnd = Rnd::from_networks(&c, t.clone(), t).unwrap();
        let o = uniform(50, 4, -1.0, 1.0, &mut rng);
        let a = Matrix::zeros(50, 2);
        let r = rnd
            .reward(TransitionRows {
                obs: &o,
                action: &a,
                next_obs: &o,
            })
            .unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rnd_target_is_frozen_and_loss_falls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = IntrinsicConfig {
            learning_rate: 1e-3,
            ..cfg()
        };
        let mut rnd = Rnd::new(&c, 4, &mut rng).unwrap();
        let frozen = rnd.target.clone();
        let a = Matrix::zeros(64, 2);
        let mut first = Vec::new();
        let mut last = Vec::new();
        for i in 0..1000 {
            let o = uniform(64, 4, -0.5, 0.5, &mut rng);
            let l = rnd
                .update(TransitionRows {
                    obs: &o,
                    action: &a,
                    next_obs: &o,
                })
                .unwrap();
            if i < 100 {
                first.push(l);
            } else if i >= 900 {
                last.push(l);
            }
        }
        assert!(rnd.target.bit_eq(&frozen));
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(m(&last) < m(&first), "{} !< {}", m(&last), m(&first));
    }

    #[test]
    fn identical_disagreement_members_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = cfg();
        let m = relu_net(6, &c, 4, Activation::Identity, &mut rng).unwrap();
        let d = Disagreement::from_members(&c, vec![m; 5]);
        let o = uniform(20, 4, -1.0, 1.0, &mut rng);
        let a = uniform(20, 2, -1.0, 1.0, &mut rng);
        let r = d
            .reward(TransitionRows {
                obs: &o,
                action: &a,
                next_obs: &o,
            })
            .unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn icm_inverse_model_recovers_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = IntrinsicConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            ..IntrinsicConfig::default()
        };
        let mut icm = Icm::new(&c, 4, 2, &mut rng).unwrap();
        let env = PointMassConfig::default();
        // deterministic one-step system: s' = step(s, a)
        let batch = |n: usize, rng: &mut ChaCha8Rng| {
            let mut o = Vec::new();
            let mut a = Vec::new();
            let mut nx = Vec::new();
            for _ in 0..n {
                let s = PointMassState {
                    position: [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)],
                    velocity: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                };
                let act = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let s2 = pointmass_step(&env, &s, act).unwrap();
                o.extend_from_slice(&s.observation());
                a.extend(act.iter().map(|&x| x as f32));
                nx.extend_from_slice(&s2.observation());
            }
            (
                Matrix::from_vec(n, 4, o).unwrap(),
                Matrix::from_vec(n, 2, a).unwrap(),
                Matrix::from_vec(n, 4, nx).unwrap(),
            )
        };
        for _ in 0..3000 {
            let (o, a, n) = batch(64, &mut rng);
            icm.update(TransitionRows {
                obs: &o,
                action: &a,
                next_obs: &n,
            })
            .unwrap();
        }
        let (o, a, n) = batch(512, &mut rng);
        let mse = icm
            .inverse_mse(TransitionRows {
                obs: &o,
                action: &a,
                next_obs: &n,
            })
            .unwrap();
        assert!(mse < 1e-2, "inverse mse {mse}");
    }
}
