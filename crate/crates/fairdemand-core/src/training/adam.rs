//! Adaptive-moment optimizer with bias correction.

use crate::autodiff::Tensor;

/// Adam with the usual (0.9, 0.999, 1e-8) moment defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, param_shapes: &[Vec<usize>]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }

    /// One update over all parameters; `grads` must align with `params`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pdata = param.data_mut();
            let gdata = grad.data();
            let mdata = m.data_mut();
            let vdata = v.data_mut();
            for i in 0..pdata.len() {
                mdata[i] = self.beta1 * mdata[i] + (1.0 - self.beta1) * gdata[i];
                vdata[i] = self.beta2 * vdata[i] + (1.0 - self.beta2) * gdata[i] * gdata[i];
                let m_hat = mdata[i] / bc1;
                let v_hat = vdata[i] / bc2;
                pdata[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Scale gradients in place so their global norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in g.data() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize (x - 3)^2 by feeding the analytic gradient.
        let mut params = vec![Tensor::scalar(0.0)];
        let mut opt = Adam::new(0.1, &[vec![]]);
        for _ in 0..500 {
            let x = params[0].scalar_value();
            let grad = vec![Tensor::scalar(2.0 * (x - 3.0))];
            opt.step(&mut params, &grad);
        }
        assert!((params[0].scalar_value() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut grads = vec![Tensor::column(&[3.0, 4.0])];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped: f64 = grads[0].data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_gradients_pass_untouched() {
        let mut grads = vec![Tensor::column(&[0.3, 0.4])];
        clip_global_norm(&mut grads, 5.0);
        assert_eq!(grads[0].data(), &[0.3, 0.4]);
    }
}
