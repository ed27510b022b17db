//! Minimal convolutional building blocks with hand-written backward passes.
//!
//! Every layer is a plain struct of [`Param`]s. Gradients are accumulated into
//! a zeroed clone of the same layer, so a "gradient model" has exactly the
//! shape of the model it differentiates and optimizers can walk both in
//! lockstep through [`Module::params_mut`] / [`Module::params`].

mod conv;
mod optim;

pub use conv::{Conv2d, ConvTranspose2d};
pub use optim::{clip_grad_norm, Adam};

use rand::Rng;

use crate::tensor::Tensor;

/// Negative slope of the leaky ReLU used between convolutions.
pub const LEAKY_SLOPE: f64 = 0.01;

/// A named, shaped block of trainable values.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn uniform(name: impl Into<String>, shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Something that owns trainable parameters in a fixed order.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// A zero-valued clone, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.zero_grad();
        g
    }

    /// `self += other`, parameter by parameter.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for p in self.params_mut() {
            p.data.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// A differentiable single-input layer.
pub trait Layer: Module + Clone {
    fn forward(&self, x: &Tensor) -> Tensor;
    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Self) -> Tensor;
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { LEAKY_SLOPE * v })
}

fn leaky_relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    pre.zip_map(dy, |p, g| if p >= 0.0 { g } else { LEAKY_SLOPE * g })
        .expect("activation shapes agree")
}

/// Layers applied in sequence with a leaky ReLU between consecutive layers
/// (none after the last).
#[derive(Clone, Debug, PartialEq)]
pub struct Chain<L> {
    pub layers: Vec<L>,
}

/// Inputs seen by each layer of a [`Chain`] during a forward pass.
#[derive(Clone, Debug)]
pub struct ChainTrace {
    /// `inputs[i]` is the (post-activation) input of layer `i`.
    inputs: Vec<Tensor>,
    /// `pre[i]` is the raw output of layer `i`, for every layer but the last.
    pre: Vec<Tensor>,
}

impl<L: Layer> Chain<L> {
    pub fn new(layers: Vec<L>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i != last {
                h = leaky_relu(&h);
            }
        }
        h
    }

    pub fn forward_traced(&self, x: &Tensor) -> (Tensor, ChainTrace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(&h);
            inputs.push(h);
            if i != last {
                h = leaky_relu(&out);
                pre.push(out);
            } else {
                h = out;
            }
        }
        (h, ChainTrace { inputs, pre })
    }

    pub fn backward(&self, trace: &ChainTrace, dy: &Tensor, grad: &mut Self) -> Tensor {
        let mut g = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                g = leaky_relu_backward(&trace.pre[i], &g);
            }
            g = self.layers[i].backward(&trace.inputs[i], &g, &mut grad.layers[i]);
        }
        g
    }
}

impl<L: Layer> Module for Chain<L> {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = Chain::new(vec![
            Conv2d::new("a", 2, 3, 3, 2, &mut rng),
            Conv2d::new("b", 3, 2, 3, 1, &mut rng),
        ]);
        let x = Tensor::from_fn(2, 6, 6, |c, y, xx| ((c + 2 * y + 3 * xx) as f64 * 0.37).sin());
        let w = Tensor::from_fn(2, 3, 3, |c, y, xx| ((c * 7 + y * 3 + xx) as f64 * 0.11).cos());
        let loss = |ch: &Chain<Conv2d>, x: &Tensor| -> f64 {
            let y = ch.forward(x);
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, trace) = chain.forward_traced(&x);
        let mut grad = chain.zeros_like();
        let dx = chain.backward(&trace, &w, &mut grad);

        let eps = 1e-6;
        for idx in [0, 5, 17, 40] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += eps;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= eps;
            let fd = (loss(&chain, &xp) - loss(&chain, &xm)) / (2.0 * eps);
            assert!((fd - dx.data()[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "dx[{idx}]");
        }
        let params = chain.params();
        let grads = grad.params();
        for (pi, p) in params.iter().enumerate() {
            for idx in [0, p.len() / 2, p.len() - 1] {
                let mut cp = chain.clone();
                cp.params_mut()[pi].data[idx] += eps;
                let mut cm = chain.clone();
                cm.params_mut()[pi].data[idx] -= eps;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps);
                let an = grads[pi].data[idx];
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{}[{idx}]", p.name);
            }
        }
    }
}
