use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            state: AdamState {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                step: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step_with_lr(params, grad, self.config.lr);
    }

    /// Like [`Adam::step`] with the learning rate of this step given
    /// explicitly, for schedules driven by the caller.
    pub fn step_with_lr(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len(), "parameter/gradient length mismatch");
        assert_eq!(params.len(), self.state.m.len(), "optimizer sized for another model");
        let AdamConfig {
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        self.state.step += 1;
        let bc1 = 1.0 - beta1.powi(self.state.step as i32);
        let bc2 = 1.0 - beta2.powi(self.state.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            let m = beta1 * self.state.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.state.v[i] + (1.0 - beta2) * g * g;
            self.state.m[i] = m;
            self.state.v[i] = v;
            params[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(AdamConfig::default(), 2);
        opt.step(&mut p, &[0.5, -3.0]);
        assert!((p[0] - (1.0 - 1e-4)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-4)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0];
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, 1);
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 0.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 0.5).abs() < 1e-3);
    }
}
