use super::config::AdamConfig;
use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Adam with bias correction and optional global-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

/// L2 norm over every gradient array, accumulated in f64.
pub fn global_norm(grads: &[&[f32]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, lr: f32) {
        self.config.learning_rate = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` belongs to parameter `i`. Returns the
    /// pre-clipping global norm.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[&[f32]], clip_norm: f32) -> Result<f64> {
        if grads.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        let norm = global_norm(grads);
        let clip = if clip_norm > 0.0 && norm > clip_norm as f64 {
            (clip_norm as f64 / norm) as f32
        } else {
            1.0
        };
        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i];
            if g.len() != p.numel() {
                return Err(Error::shape("adam", format!("gradient {i} has {} entries", g.len())));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j] * clip;
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        s.insert("b", Tensor::new(vec![1], vec![4.0]).unwrap());
        s
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut p = store();
        let before = p.clone();
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(cfg, &p);
        for _ in 0..3 {
            opt.step(&mut p, &[&[1.0, -3.0, 0.2], &[7.0]], 1.0).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_weight_by_lr_against_gradient_sign() {
        // with bias correction, the first Adam step is lr * g / (|g| + eps)
        let mut p = store();
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[&[0.5, -0.25, 0.0], &[2.0]], 0.0).unwrap();
        let a = p.get(0).data();
        assert!((a[0] - (1.0 - 3e-4)).abs() < 1e-7);
        assert!((a[1] - (-2.0 + 3e-4)).abs() < 1e-7);
        assert_eq!(a[2], 0.5);
        assert!((p.get(1).data()[0] - (4.0 - 3e-4)).abs() < 1e-6);
    }

    #[test]
    fn clipping_rescales_to_the_ceiling() {
        // Adam is scale invariant on the first step, so check the moments instead
        let mut p = store();
        let mut opt = Adam::new(AdamConfig::default(), &p);
        let norm = opt.step(&mut p, &[&[3.0, 0.0, 0.0], &[4.0]], 1.0).unwrap();
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((opt.m[0][0] - 0.1 * 0.6).abs() < 1e-7);
        assert!((opt.m[1][0] - 0.1 * 0.8).abs() < 1e-7);
    }

    #[test]
    fn gradient_count_mismatch_is_an_error() {
        let mut p = store();
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &[&[1.0, 1.0, 1.0]], 1.0).is_err());
    }
}
