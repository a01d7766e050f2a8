//! Gradient descent with momentum and linear learning-rate warmup.
//!
//! The effective rate at step `t` is `lr * min(1, t / warmup_steps)`;
//! per parameter, `v = momentum * v - rate * g; p += v`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::vecmath::all_finite;

#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    pub warmup_steps: u64,
    velocities: BTreeMap<String, Vec<f64>>,
    step: u64,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64, warmup_steps: u64) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            warmup_steps,
            velocities: BTreeMap::new(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn effective_rate(&self) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        let progress = (self.step as f64 / self.warmup_steps as f64).min(1.0);
        self.learning_rate * progress
    }

    /// Apply one update over named `(name, params, grads)` triples, then
    /// advance the step counter. A non-finite gradient aborts the whole
    /// step with no parameter touched.
    pub fn apply(&mut self, updates: &mut [(&str, &mut [f64], &[f64])]) -> Result<()> {
        for (name, params, grads) in updates.iter() {
            if params.len() != grads.len() {
                return Err(Error::Dimension {
                    context: "optimizer update",
                    expected: params.len(),
                    got: grads.len(),
                });
            }
            if !all_finite(grads) {
                return Err(Error::NonFinite(format!("gradient for `{name}`")));
            }
        }
        let rate = self.effective_rate();
        for (name, params, grads) in updates.iter_mut() {
            let velocity = self
                .velocities
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; params.len()]);
            if velocity.len() != params.len() {
                return Err(Error::Dimension {
                    context: "optimizer velocity",
                    expected: params.len(),
                    got: velocity.len(),
                });
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads.iter()) {
                *v = self.momentum * *v - rate * g;
                *p += *v;
            }
        }
        self.step += 1;
        Ok(())
    }
}
