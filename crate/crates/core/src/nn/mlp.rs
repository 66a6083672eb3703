use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::matrix::{gemm_into, Matrix, Scalar};
use super::NnError;

/// Element-wise nonlinearity applied after each affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// Affine layer `y = act(W x + b)` with `W` stored row-major as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, NnError> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NnError::InvalidConfig(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        if weights.len() != in_dim * out_dim {
            return Err(NnError::Shape {
                context: "Dense weights",
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(NnError::Shape {
                context: "Dense bias",
                expected: out_dim,
                got: bias.len(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    #[inline]
    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    fn affine(&self, x: &Matrix<T>) -> Matrix<T> {
        let batch = x.rows();
        let mut z = Matrix::zeros(batch, self.out_dim);
        for r in 0..batch {
            z.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm_into(
            T::one(),
            x.as_slice(),
            batch,
            self.in_dim,
            false,
            &self.weights,
            self.out_dim,
            self.in_dim,
            true,
            T::one(),
            z.as_mut_slice(),
        );
        z
    }
}

/// Per-layer parameter gradient (same shapes as the layer).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of a scalar loss w.r.t. every parameter and the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
    pub input: Matrix<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>, batch: usize) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
            input: Matrix::zeros(batch, net.input_dim()),
        }
    }

    /// Euclidean norm over all parameter gradients (input gradient excluded).
    pub fn param_norm(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }

    /// Parameter gradients flattened in layer order (weights then bias).
    pub fn flat_params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Intermediate values of a batched forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input of every layer, then the network output as the last entry.
    activations: Vec<Matrix<T>>,
    /// Pre-activation of every layer.
    pre: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.activations
            .last()
            .expect("forward cache always holds the network input")
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.activations[0]
    }

    pub fn batch(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Feed-forward network of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Builds a network with uniform fan-in initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::InvalidConfig(
                "an Mlp needs at least an input and an output size".into(),
            ));
        }
        if activations.len() + 1 != layer_sizes.len() {
            return Err(NnError::InvalidConfig(format!(
                "{} layer sizes need {} activations, got {}",
                layer_sizes.len(),
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (w, &act) in layer_sizes.windows(2).zip(activations) {
            let (fan_in, fan_out) = (w[0], w[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(NnError::InvalidConfig(format!(
                    "layer sizes must be positive, got {layer_sizes:?}"
                )));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weights = (0..fan_in * fan_out)
                .map(|_| T::from_f64_lossy(dist.sample(rng)))
                .collect();
            let bias = (0..fan_out)
                .map(|_| T::from_f64_lossy(dist.sample(rng)))
                .collect();
            layers.push(Dense::from_parts(fan_in, fan_out, act, weights, bias)?);
        }
        Ok(Self { layers })
    }

    /// Hidden layers use `hidden_act`, the output layer uses `output_act`.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(output_act);
        Self::new(&sizes, &acts, rng)
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidConfig(
                "an Mlp needs at least one layer".into(),
            ));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(NnError::InvalidConfig(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim,
                    i + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters flattened in layer order (weights then bias).
    pub fn flat_params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Overwrites parameters from a flat vector laid out like [`Mlp::flat_params`].
    pub fn set_flat_params(&mut self, params: &[T]) -> Result<(), NnError> {
        if params.len() != self.num_params() {
            return Err(NnError::Shape {
                context: "Mlp::set_flat_params",
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Same architecture and parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                    weights: l
                        .weights
                        .iter()
                        .map(|&w| U::from_f64_lossy(w.as_f64()))
                        .collect(),
                    bias: l
                        .bias
                        .iter()
                        .map(|&b| U::from_f64_lossy(b.as_f64()))
                        .collect(),
                })
                .collect(),
        }
    }

    fn check_input(&self, cols: usize, context: &'static str) -> Result<(), NnError> {
        if cols != self.input_dim() {
            return Err(NnError::Shape {
                context,
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Evaluates a single sample.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        self.check_input(input.len(), "Mlp::forward input")?;
        Ok(self.forward_batch(&Matrix::row_vector(input))?.into_vec())
    }

    /// Evaluates a batch (one sample per row).
    pub fn forward_batch(&self, inputs: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        self.check_input(inputs.cols(), "Mlp::forward_batch input")?;
        let mut x = inputs.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&x);
            let act = layer.activation;
            if act != Activation::Identity {
                for v in z.as_mut_slice() {
                    *v = act.apply(*v);
                }
            }
            x = z;
        }
        Ok(x)
    }

    /// Forward pass that keeps what `backward` needs.
    pub fn forward_cached(&self, inputs: &Matrix<T>) -> Result<ForwardCache<T>, NnError> {
        self.check_input(inputs.cols(), "Mlp::forward_cached input")?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(inputs.clone());
        for layer in &self.layers {
            let z = layer.affine(activations.last().expect("non-empty"));
            let act = layer.activation;
            let y = z.map(|v| act.apply(v));
            pre.push(z);
            activations.push(y);
        }
        Ok(ForwardCache { activations, pre })
    }

    fn check_cache(&self, cache: &ForwardCache<T>, output_grad: &Matrix<T>) -> Result<(), NnError> {
        if cache.pre.len() != self.layers.len() || cache.activations.len() != self.layers.len() + 1
        {
            return Err(NnError::ForwardCache(format!(
                "cache holds {} layers, network has {}",
                cache.pre.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, z)) in self.layers.iter().zip(&cache.pre).enumerate() {
            if z.cols() != layer.out_dim || cache.activations[i].cols() != layer.in_dim {
                return Err(NnError::ForwardCache(format!(
                    "cache layer {i} has shape {}->{}, network layer is {}->{}",
                    cache.activations[i].cols(),
                    z.cols(),
                    layer.in_dim,
                    layer.out_dim
                )));
            }
        }
        if output_grad.rows() != cache.batch() || output_grad.cols() != self.output_dim() {
            return Err(NnError::Shape {
                context: "Mlp::backward output_grad",
                expected: cache.batch() * self.output_dim(),
                got: output_grad.rows() * output_grad.cols(),
            });
        }
        Ok(())
    }

    /// Backpropagates `output_grad` (dLoss/dOutput, one row per sample) through
    /// the cached forward pass. Parameter gradients are summed over the batch.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
    ) -> Result<Gradients<T>, NnError> {
        self.backprop(cache, output_grad, true)
    }

    /// Like [`Mlp::backward`] but only the input gradient is computed; the
    /// returned parameter gradients are empty.
    pub fn backward_input(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
    ) -> Result<Matrix<T>, NnError> {
        Ok(self.backprop(cache, output_grad, false)?.input)
    }

    fn backprop(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Matrix<T>,
        want_params: bool,
    ) -> Result<Gradients<T>, NnError> {
        self.check_cache(cache, output_grad)?;
        let batch = cache.batch();
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            let y = &cache.activations[i + 1];
            let x = &cache.activations[i];
            let act = layer.activation;
            let mut dz = upstream;
            if act != Activation::Identity {
                for ((d, &zv), &yv) in dz
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice())
                    .zip(y.as_slice())
                {
                    *d = *d * act.derivative(zv, yv);
                }
            }
            if want_params {
                let mut dw = vec![T::zero(); layer.weights.len()];
                gemm_into(
                    T::one(),
                    dz.as_slice(),
                    batch,
                    layer.out_dim,
                    true,
                    x.as_slice(),
                    batch,
                    layer.in_dim,
                    false,
                    T::zero(),
                    &mut dw,
                );
                let mut db = vec![T::zero(); layer.out_dim];
                for r in 0..batch {
                    for (acc, &g) in db.iter_mut().zip(dz.row(r)) {
                        *acc = *acc + g;
                    }
                }
                layer_grads.push(LayerGrad {
                    weights: dw,
                    bias: db,
                });
            }
            let mut dx = Matrix::zeros(batch, layer.in_dim);
            gemm_into(
                T::one(),
                dz.as_slice(),
                batch,
                layer.out_dim,
                false,
                &layer.weights,
                layer.out_dim,
                layer.in_dim,
                false,
                T::zero(),
                dx.as_mut_slice(),
            );
            upstream = dx;
        }
        layer_grads.reverse();
        Ok(Gradients {
            layers: layer_grads,
            input: upstream,
        })
    }

    /// Exponential moving average toward `online`: `self <- (1 - tau) self + tau online`.
    pub fn soft_update_from(&mut self, online: &Mlp<T>, tau: T) -> Result<(), NnError> {
        if self.layer_sizes() != online.layer_sizes() {
            return Err(NnError::InvalidConfig(format!(
                "soft update between mismatched architectures {:?} and {:?}",
                self.layer_sizes(),
                online.layer_sizes()
            )));
        }
        let keep = T::one() - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tw, &ow) in t.weights.iter_mut().zip(&o.weights) {
                *tw = keep * *tw + tau * ow;
            }
            for (tb, &ob) in t.bias.iter_mut().zip(&o.bias) {
                *tb = keep * *tb + tau * ob;
            }
        }
        Ok(())
    }

    /// Bitwise equality of all parameters.
    pub fn bit_eq(&self, other: &Mlp<T>) -> bool
    where
        T: PartialEq,
    {
        self.layer_sizes() == other.layer_sizes()
            && self.activations() == other.activations()
            && self
                .flat_params()
                .iter()
                .zip(other.flat_params())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}
