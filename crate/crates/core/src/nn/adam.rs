use super::matrix::Scalar;
use super::mlp::{Gradients, LayerGrad, Mlp};
use super::NnError;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one network. `first`/`second` mirror the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<LayerGrad<T>>,
    pub second: Vec<LayerGrad<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &Mlp<T>, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![T::zero(); l.weights().len()],
                    bias: vec![T::zero(); l.bias().len()],
                })
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    fn check_shapes(&self, net: &Mlp<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        if grads.layers.len() != net.layers().len() || self.first.len() != net.layers().len() {
            return Err(NnError::InvalidConfig(format!(
                "adam: network has {} layers, gradients {}, state {}",
                net.layers().len(),
                grads.layers.len(),
                self.first.len()
            )));
        }
        for (i, ((l, g), m)) in net
            .layers()
            .iter()
            .zip(&grads.layers)
            .zip(&self.first)
            .enumerate()
        {
            let n = l.weights().len();
            if g.weights.len() != n || g.bias.len() != l.bias().len() || m.weights.len() != n {
                return Err(NnError::InvalidConfig(format!(
                    "adam: shape mismatch at layer {i}"
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of `net` with gradients `grads`.
///
/// Non-finite gradients are rejected before anything is mutated.
pub fn adam_step<T: Scalar>(
    net: &mut Mlp<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
) -> Result<(), NnError> {
    state.check_shapes(net, grads)?;
    for (layer, g) in grads.layers.iter().enumerate() {
        if g.weights.iter().chain(&g.bias).any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite { layer });
        }
    }
    state.step += 1;
    let cfg = state.config;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let t = state.step as i32;
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let eps = T::from_f64_lossy(cfg.epsilon);

    let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        update(
            layer.weights_mut(),
            &g.weights,
            &mut m.weights,
            &mut v.weights,
        );
        update(layer.bias_mut(), &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}
