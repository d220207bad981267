use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.raw_dim())).collect();
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in store.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use rand::SeedableRng;

    fn store() -> ParamStore {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.add("w", &[2, 3], Init::fan_in(2), &mut rng);
        s.add("b", &[3], Init::fan_in(2), &mut rng);
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.step(&mut s, &before.gradients());
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = store();
        let before = s.clone();
        let mut g = s.gradients();
        let ids: Vec<_> = s.ids().collect();
        g.get_mut(ids[0]).fill(0.37);
        g.get_mut(ids[1]).fill(-2.5);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(&s, cfg);
        adam.step(&mut s, &g);
        // m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps).
        for (id, gv) in [(ids[0], 0.37f64), (ids[1], -2.5)] {
            let expect = cfg.lr * gv / (gv.abs() + cfg.eps);
            for (a, b) in before.value(id).iter().zip(s.value(id).iter()) {
                assert!(((a - b) - expect).abs() < 1e-15);
                assert!(((a - b).abs() - cfg.lr).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { lr: 0.0, ..AdamConfig::default() }.validate().is_err());
        AdamConfig::default().validate().unwrap();
    }
}
