/// Optimizer hyperparameters shared by every parameter in a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay coefficient; the per-step shrink is `lr * weight_decay * θ`.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Moment estimates for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Applies one bias-corrected AdamW update to `params` and zeroes `grads`.
    ///
    /// The decay term is taken from the pre-update parameter value and is kept
    /// out of the moment estimates.
    pub fn step(&mut self, params: &mut [f64], grads: &mut [f64]) {
        assert_eq!(params.len(), self.first_moment.len());
        assert_eq!(grads.len(), params.len());
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads.iter_mut())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * *g;
            *v = beta2 * *v + (1.0 - beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let decay = lr * weight_decay * *p;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon) + decay;
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cfg: AdamConfig, theta: f64, grad: f64) -> f64 {
        let mut st = AdamState::new(cfg, 1);
        let mut p = [theta];
        let mut g = [grad];
        st.step(&mut p, &mut g);
        assert_eq!(g[0], 0.0);
        assert_eq!(st.step_count(), 1);
        p[0]
    }

    #[test]
    fn zero_grad_no_decay_is_fixed_point() {
        let cfg = AdamConfig::new(0.1).with_weight_decay(0.0);
        assert_eq!(run(cfg, 1.5, 0.0), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::new(0.01).with_weight_decay(0.0);
        for g in [-3.0, -1e-3, 0.5, 42.0] {
            let moved = run(cfg, 0.0, g);
            assert!((moved.abs() - 0.01).abs() < 1e-7, "g={g} moved={moved}");
            assert_eq!(moved.signum(), -g.signum());
        }
    }

    #[test]
    fn decoupled_decay_hand_value() {
        let cfg = AdamConfig::new(0.1).with_weight_decay(0.01);
        assert!((run(cfg, 1.0, 0.0) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn reproducible_sequence() {
        let cfg = AdamConfig::new(0.05);
        let go = || {
            let mut st = AdamState::new(cfg, 3);
            let mut p = vec![0.3, -0.2, 1.0];
            for k in 0..20 {
                let mut g: Vec<f64> = p.iter().map(|x| 2.0 * x + k as f64 * 0.01).collect();
                st.step(&mut p, &mut g);
            }
            p
        };
        assert_eq!(go(), go());
    }
}
