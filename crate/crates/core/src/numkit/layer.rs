use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, AdamState};
use super::matrix::{matmul_nt, matmul_tn_acc, matmul, RealMatrix};
use crate::error::{Error, Result, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: RealMatrix,
    pre: RealMatrix,
    output: RealMatrix,
}

/// Affine map followed by an elementwise activation: `act(x Wᵀ + b)`.
///
/// Rows of `x` are samples. Gradients accumulate across `backward` calls
/// until [`DenseLayer::adam_step`] or [`DenseLayer::zero_grad`].
#[derive(Debug, Clone)]
pub struct DenseLayer {
    weight: RealMatrix,
    bias: Vec<f64>,
    activation: Activation,
    weight_grad: RealMatrix,
    bias_grad: Vec<f64>,
    weight_opt: AdamState,
    bias_opt: AdamState,
    cache: Option<ForwardCache>,
}

impl DenseLayer {
    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, seed: u64) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = RealMatrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-limit..limit));
        Self::from_parts(weight, vec![0.0; out_dim], activation)
            .expect("shapes are consistent by construction")
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self::from_parts(RealMatrix::zeros(out_dim, in_dim), vec![0.0; out_dim], activation)
            .expect("shapes are consistent by construction")
    }

    pub fn from_parts(weight: RealMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(
                "DenseLayer::from_parts",
                weight.shape(),
                Shape(bias.len(), 1),
            ));
        }
        let cfg = AdamConfig::default();
        Ok(Self {
            weight_grad: RealMatrix::zeros(weight.rows(), weight.cols()),
            bias_grad: vec![0.0; bias.len()],
            weight_opt: AdamState::new(cfg, weight.rows() * weight.cols()),
            bias_opt: AdamState::new(cfg, bias.len()),
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    /// Replaces the optimizer hyperparameters, resetting the moment estimates.
    pub fn set_optimizer(&mut self, cfg: AdamConfig) {
        self.weight_opt = AdamState::new(cfg, self.weight_grad.as_slice().len());
        self.bias_opt = AdamState::new(cfg, self.bias.len());
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.weight_opt
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &RealMatrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_grad(&self) -> &RealMatrix {
        &self.weight_grad
    }

    pub fn bias_grad(&self) -> &[f64] {
        &self.bias_grad
    }

    fn affine(&self, x: &RealMatrix) -> Result<RealMatrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("dense forward", x.shape(), self.weight.shape()));
        }
        let mut pre = matmul_nt(x, &self.weight)?;
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }

    /// Forward pass without touching the cache (evaluation).
    pub fn infer(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let act = self.activation;
        Ok(self.affine(x)?.map(|z| act.apply(z)))
    }

    /// Forward pass that caches what `backward` needs.
    pub fn forward(&mut self, x: &RealMatrix) -> Result<RealMatrix> {
        let pre = self.affine(x)?;
        let act = self.activation;
        let output = pre.map(|z| act.apply(z));
        self.cache = Some(ForwardCache {
            input: x.clone(),
            pre,
            output: output.clone(),
        });
        Ok(output)
    }

    fn accumulate(&mut self, upstream: &RealMatrix) -> Result<RealMatrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        if upstream.shape() != cache.output.shape() {
            return Err(Error::shape("dense backward", upstream.shape(), cache.output.shape()));
        }
        let act = self.activation;
        let mut delta = upstream.clone();
        if act != Activation::Identity {
            for ((d, &z), &a) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(cache.pre.as_slice())
                .zip(cache.output.as_slice())
            {
                *d *= act.derivative(z, a);
            }
        }
        matmul_tn_acc(&mut self.weight_grad, &delta, &cache.input)?;
        for (bg, s) in self.bias_grad.iter_mut().zip(delta.column_sums()) {
            *bg += s;
        }
        Ok(delta)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, upstream: &RealMatrix) -> Result<RealMatrix> {
        let delta = self.accumulate(upstream)?;
        matmul(&delta, &self.weight)
    }

    /// Like [`backward`](Self::backward) but skips the input gradient.
    pub fn backward_params_only(&mut self, upstream: &RealMatrix) -> Result<()> {
        self.accumulate(upstream).map(|_| ())
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(0.0);
        self.bias_grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// One optimizer step over weight and bias; gradients are zeroed afterwards.
    pub fn adam_step(&mut self) {
        self.weight_opt
            .step(self.weight.as_mut_slice(), self.weight_grad.as_mut_slice());
        self.bias_opt.step(&mut self.bias, &mut self.bias_grad);
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    /// Appends weight (row-major) then bias to `out`.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.as_slice());
        out.extend_from_slice(&self.bias);
    }

    /// Gradients in the same order as [`write_params`](Self::write_params).
    pub fn write_grads(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight_grad.as_slice());
        out.extend_from_slice(&self.bias_grad);
    }

    /// Reads parameters written by `write_params`; returns the number consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let n = self.param_count();
        if src.len() < n {
            return Err(Error::validation(format!(
                "layer needs {n} parameters, {} available",
                src.len()
            )));
        }
        let nw = self.weight.as_slice().len();
        self.weight.as_mut_slice().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..n]);
        self.cache = None;
        Ok(n)
    }
}

/// Runs one optimizer step for every layer in the set.
pub fn adam_step(layers: &mut [&mut DenseLayer]) {
    for layer in layers.iter_mut() {
        layer.adam_step();
    }
}
