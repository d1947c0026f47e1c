use serde::{Deserialize, Serialize};

/// Bias-corrected Adam state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(dim: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(1, 0.5, 0.999);
        let mut p = [0.0];
        adam.update(&mut p, &[1.0], 2e-4);
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let expected = -2e-4 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 2e-4 * (1.0 - 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn matches_textbook_recurrence() {
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 1.1];
        let (b1, b2, eps, lr) = (0.5, 0.999, 1e-8, 1e-3);
        let mut adam = Adam::new(1, b1, b2);
        let mut p = [0.25];
        let (mut m, mut v, mut q) = (0.0f64, 0.0f64, 0.25f64);
        for (k, &g) in grads.iter().enumerate() {
            adam.update(&mut p, &[g], lr);
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            q -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            assert!((p[0] - q).abs() < 1e-12);
        }
        assert_eq!(adam.steps(), grads.len() as u64);
    }
}
