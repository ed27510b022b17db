use super::Module;

/// Scales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<M: Module>(grad: &mut M, max_norm: f64) -> f64 {
    let norm = grad
        .params()
        .iter()
        .flat_map(|p| p.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        grad.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<M: Module>(model: &M) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step<M: Module>(&mut self, model: &mut M, grad: &M, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let grads = grad.params();
        for (i, p) in model.params_mut().into_iter().enumerate() {
            let g = &grads[i].data;
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.data[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    #[derive(Clone)]
    struct Quad(Param);

    impl Module for Quad {
        fn params(&self) -> Vec<&Param> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut q = Quad(Param {
            name: "w".into(),
            shape: vec![2],
            data: vec![3.0, -2.0],
        });
        let mut opt = Adam::new(&q);
        for _ in 0..2000 {
            let mut g = q.zeros_like();
            g.0.data = q.0.data.iter().map(|w| 2.0 * (w - 1.0)).collect();
            opt.step(&mut q, &g, 0.01);
        }
        assert!(q.0.data.iter().all(|w| (w - 1.0).abs() < 1e-3));
    }

    #[test]
    fn clip_caps_norm() {
        let mut g = Quad(Param {
            name: "g".into(),
            shape: vec![2],
            data: vec![3.0, 4.0],
        });
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.0.data[0] - 0.6).abs() < 1e-15 && (g.0.data[1] - 0.8).abs() < 1e-15);
    }
}
