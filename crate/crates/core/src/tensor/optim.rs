//! SGD and Adam over registered parameter tensors. L2 is applied as decoupled
//! weight decay inside the step, not added to the loss.

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimKind {
    pub fn adam_default() -> OptimKind {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub struct Optimizer {
    kind: OptimKind,
    learning_rate: f64,
    l2_penalty: f64,
    step_count: u64,
    params: Vec<(String, Tensor)>,
    lr_scales: Vec<f64>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimKind, learning_rate: f64, l2_penalty: f64) -> Optimizer {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        assert!(l2_penalty >= 0.0, "l2 penalty must be non-negative");
        Optimizer {
            kind,
            learning_rate,
            l2_penalty,
            step_count: 0,
            params: Vec::new(),
            lr_scales: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64, l2_penalty: f64) -> Optimizer {
        Self::new(OptimKind::Sgd, learning_rate, l2_penalty)
    }

    pub fn adam(learning_rate: f64, l2_penalty: f64) -> Optimizer {
        Self::new(OptimKind::adam_default(), learning_rate, l2_penalty)
    }

    pub fn register(&mut self, name: &str, param: &Tensor) {
        self.register_scaled(name, param, 1.0);
    }

    /// Registers a parameter whose effective learning rate is
    /// `learning_rate * lr_scale` (discriminative fine-tuning rates).
    pub fn register_scaled(&mut self, name: &str, param: &Tensor, lr_scale: f64) {
        assert!(param.is_trainable(), "optimizer params must require grad");
        assert!(lr_scale > 0.0, "lr scale must be positive");
        self.params.push((name.to_string(), param.clone()));
        self.lr_scales.push(lr_scale);
        self.first_moment.push(vec![0.0; param.len()]);
        self.second_moment.push(vec![0.0; param.len()]);
    }

    pub fn register_all(&mut self, named: &[(String, Tensor)]) {
        for (name, t) in named {
            self.register(name, t);
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        assert!(lr > 0.0);
        self.learning_rate = lr;
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over every registered parameter; zeroes grads afterward.
    /// Tensors not registered here are never touched.
    pub fn step(&mut self) -> super::Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        for (i, (name, param)) in self.params.iter().enumerate() {
            let grad = param
                .grad()
                .ok_or_else(|| TensorError::MissingGrad(name.clone()))?;
            let mut data = param.to_vec();
            let lr = self.learning_rate * self.lr_scales[i];
            match self.kind {
                OptimKind::Sgd => {
                    for (w, &g) in data.iter_mut().zip(&grad) {
                        *w -= lr * (g + self.l2_penalty * *w);
                    }
                }
                OptimKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    for (j, (w, &g)) in data.iter_mut().zip(&grad).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        *w -= lr * (m_hat / (v_hat.sqrt() + epsilon)) + lr * self.l2_penalty * *w;
                    }
                }
            }
            param.set_data(&data);
            param.zero_grad();
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }
}
