//! Adam with additive L2 weight decay and a step learning-rate schedule.

use crate::model::Predictor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Divide the learning rate by `factor` every `drop_every` epochs;
    /// `drop_every = 0` keeps it constant.
    pub drop_every: usize,
    pub factor: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr0: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, drop_every: 0, factor: 10.0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.factor > 0.0) {
            return bad("lr drop factor must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.drop_every == 0 {
            return self.lr0;
        }
        self.lr0 / self.factor.powi((epoch / self.drop_every) as i32)
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(AdamState { config, step_count: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update from the gradients accumulated in `p`, which are then
    /// zeroed.
    pub fn step(&mut self, p: &mut Predictor, epoch: usize) -> Result<()> {
        if !p.has_grads() {
            return Err(Error::Usage("optimizer step without populated gradients".into()));
        }
        let n = p.params().len();
        if n != self.m.len() {
            return Err(Error::Dimension { expected: self.m.len(), actual: n });
        }
        let c = self.config;
        let lr = c.lr_at(epoch);
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (params, grads) = p.params_and_grads();
        for i in 0..n {
            let g = grads[i] + c.weight_decay * params[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        p.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use ndarray::array;

    fn schedule() -> AdamConfig {
        AdamConfig { lr0: 0.1, drop_every: 30, factor: 10.0, ..AdamConfig::default() }
    }

    #[test]
    fn step_schedule() {
        let c = schedule();
        let got: Vec<f64> = [0, 29, 30, 59, 60].iter().map(|&e| c.lr_at(e)).collect();
        let want = [0.1, 0.1, 0.01, 0.01, 0.001];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
    }

    /// Linear(1) with input 0: the score is the bias, so backward with
    /// upstream g sets grad(bias) = g and grad(weight) = 0.
    fn scalar_grad(p: &mut Predictor, g: f64) {
        p.forward(array![[0.0]].view()).unwrap();
        p.backward(&[g]).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let arch = Architecture::Linear { d: 1 };
        let mut p = Predictor::from_params(arch, vec![0.3, -0.2]).unwrap();
        let mut s = AdamState::new(schedule(), 2).unwrap();
        scalar_grad(&mut p, 0.0);
        s.step(&mut p, 0).unwrap();
        assert_eq!(p.params(), &[0.3, -0.2]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Predictor::from_params(Architecture::Linear { d: 1 }, vec![0.0, 0.0]).unwrap();
        let mut s = AdamState::new(schedule(), 2).unwrap();
        scalar_grad(&mut p, 1.0);
        s.step(&mut p, 0).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.params()[1] - want).abs() < 1e-15);
        assert!(p.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn step_requires_gradients() {
        let mut p = Predictor::init(Architecture::Linear { d: 1 }, 0);
        let mut s = AdamState::new(schedule(), 2).unwrap();
        assert!(matches!(s.step(&mut p, 0), Err(Error::Usage(_))));
        scalar_grad(&mut p, 1.0);
        s.step(&mut p, 0).unwrap();
        assert!(matches!(s.step(&mut p, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn matches_reference_on_quadratic() {
        // Minimise (b - 3)^2 with weight decay; reference update written out
        // independently with scalar state.
        let cfg = AdamConfig { lr0: 0.05, weight_decay: 0.01, drop_every: 4, factor: 2.0, ..AdamConfig::default() };
        let mut p = Predictor::from_params(Architecture::Linear { d: 1 }, vec![0.0, 0.5]).unwrap();
        let mut s = AdamState::new(cfg, 2).unwrap();

        let (mut b, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for k in 0..10 {
            let epoch = k; // one step per epoch
            let g_now = 2.0 * (p.params()[1] - 3.0);
            scalar_grad(&mut p, g_now);
            s.step(&mut p, epoch).unwrap();

            let lr = 0.05 / 2f64.powf((epoch / 4) as f64);
            let g = 2.0 * (b - 3.0) + 0.01 * b;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let t = (k + 1) as f64;
            let mh = m / (1.0 - 0.9f64.powf(t));
            let vh = v / (1.0 - 0.999f64.powf(t));
            b -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((p.params()[1] - b).abs() < 1e-12, "step {k}: {} vs {b}", p.params()[1]);
        }
        assert_eq!(p.params()[0], 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let c = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(matches!(AdamState::new(c, 1), Err(Error::Config(_))));
        let c = AdamConfig { weight_decay: -1.0, ..AdamConfig::default() };
        assert!(AdamState::new(c, 1).is_err());
    }
}
