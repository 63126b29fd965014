use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NoiseConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_dae: f32,
    pub lambda_cc: f32,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Longest input, in tokens including `EOS`; also the pseudo-transfer length cap.
    pub max_len: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f32,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
    /// Linear learning-rate ramp from 0 over this many steps.
    pub warmup_steps: u64,
    /// Cosine decay after warmup ends at `learning_rate * final_lr_fraction`
    /// on the last step; 1 keeps the rate constant.
    pub final_lr_fraction: f32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda_dae: 1.0,
            lambda_cc: 1.0,
            batch_size: 16,
            steps: 5000,
            seed: 0,
            noise: NoiseConfig::default(),
            max_len: 32,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            checkpoint_every: 0,
            warmup_steps: 0,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainingConfig {
    /// Learning rate for zero-based `step`.
    pub fn learning_rate_at(&self, step: u64) -> f32 {
        let base = self.adam.learning_rate;
        if step < self.warmup_steps {
            return base * (step + 1) as f32 / self.warmup_steps as f32;
        }
        let span = self.steps.saturating_sub(self.warmup_steps + 1);
        if span == 0 || self.final_lr_fraction == 1.0 {
            return base;
        }
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        let f = self.final_lr_fraction as f64;
        (base as f64 * (f + (1.0 - f) * cos)) as f32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_dae >= 0.0 && self.lambda_cc >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if self.lambda_dae + self.lambda_cc <= 0.0 {
            return bad("at least one loss weight must be positive".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must lie in [0, 1]".into());
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.noise.mask_prob) || !(0.0..=1.0).contains(&self.noise.random_frac) {
            return bad("noise rates must lie in [0, 1]".into());
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad(format!("invalid optimizer settings {a:?}"));
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays_to_the_floor() {
        let mut c = TrainingConfig {
            steps: 101,
            warmup_steps: 10,
            final_lr_fraction: 0.1,
            ..TrainingConfig::default()
        };
        c.adam.learning_rate = 1.0;
        assert!((c.learning_rate_at(0) - 0.1).abs() < 1e-6);
        assert!((c.learning_rate_at(9) - 1.0).abs() < 1e-6);
        assert!((c.learning_rate_at(10) - 1.0).abs() < 1e-6);
        assert!((c.learning_rate_at(100) - 0.1).abs() < 1e-6);
        assert!((c.learning_rate_at(55) - 0.55).abs() < 1e-6);
        let flat = TrainingConfig::default();
        assert_eq!(flat.learning_rate_at(4999), flat.adam.learning_rate);
    }

    #[test]
    fn defaults_validate() {
        TrainingConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_zero_weights_and_zero_steps() {
        let c = TrainingConfig {
            lambda_dae: 0.0,
            lambda_cc: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainingConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainingConfig {
            lambda_cc: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainingConfig = serde_json::from_str(r#"{"steps": 10, "lambda_cc": 0.0}"#).unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.lambda_cc, 0.0);
        assert_eq!(c.batch_size, 16);
    }
}
