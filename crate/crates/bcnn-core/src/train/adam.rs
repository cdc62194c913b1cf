//! Adam optimizer over a model's parameter visit order, with the latent
//! clamp that keeps binary weights inside the straight-through window.

use crate::error::{Error, Result};
use crate::layers::{ParamRole, Sequential};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Binary latents are clamped to [-clip, clip] after every step.
    pub latent_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, latent_clip: 1.0 }
    }
}

/// One slot of optimizer state, aligned with the model's parameter visit
/// order (which is fixed for a given architecture).
struct Slot<S> {
    name: String,
    m: Vec<S>,
    v: Vec<S>,
}

pub struct Adam<S: Scalar> {
    cfg: AdamConfig,
    t: u64,
    slots: Vec<Slot<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(model: &mut Sequential<S>, cfg: AdamConfig) -> Self {
        let mut slots = Vec::new();
        model.visit_params(&mut |view| {
            slots.push(Slot {
                name: view.name,
                m: vec![S::zero(); view.param.data.len()],
                v: vec![S::zero(); view.param.data.len()],
            });
        });
        Self { cfg, t: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn zero_grad(&self, model: &mut Sequential<S>) {
        model.visit_params(&mut |view| {
            view.param.grad.iter_mut().for_each(|g| *g = S::zero());
        });
    }

    /// Applies one Adam update. Aborts with `Error::NonFinite` naming the
    /// offending parameter if any gradient is not finite.
    pub fn step(&mut self, model: &mut Sequential<S>, lr: f64) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let b1 = S::from_f64_c(self.cfg.beta1);
        let b2 = S::from_f64_c(self.cfg.beta2);
        let eps = S::from_f64_c(self.cfg.eps);
        let lr = S::from_f64_c(lr);
        let corr1 = S::from_f64_c(1.0 - self.cfg.beta1.powi(t));
        let corr2 = S::from_f64_c(1.0 - self.cfg.beta2.powi(t));
        let clip = S::from_f64_c(self.cfg.latent_clip);
        let one = S::one();

        let mut idx = 0usize;
        let mut result = Ok(());
        let slots = &mut self.slots;
        model.visit_params(&mut |view| {
            if result.is_err() {
                return;
            }
            let slot = match slots.get_mut(idx) {
                Some(s) => s,
                None => {
                    result = Err(Error::State(
                        "optimizer state does not match model parameters".into(),
                    ));
                    return;
                }
            };
            idx += 1;
            if slot.m.len() != view.param.data.len() {
                result = Err(Error::State(format!(
                    "optimizer slot for {} has length {}, parameter has {}",
                    slot.name,
                    slot.m.len(),
                    view.param.data.len()
                )));
                return;
            }
            if let Some(pos) = view.param.grad.iter().position(|g| !g.is_finite()) {
                result = Err(Error::NonFinite(format!(
                    "gradient of {} at element {pos}",
                    view.name
                )));
                return;
            }
            for i in 0..view.param.data.len() {
                let g = view.param.grad[i];
                slot.m[i] = b1 * slot.m[i] + (one - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (one - b2) * g * g;
                let mhat = slot.m[i] / corr1;
                let vhat = slot.v[i] / corr2;
                view.param.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            if view.role == ParamRole::BinaryLatent {
                for d in view.param.data.iter_mut() {
                    *d = d.min(clip).max(-clip);
                }
            }
        });
        if result.is_ok() && idx != slots.len() {
            result = Err(Error::State(
                "optimizer state does not match model parameters".into(),
            ));
        }
        result
    }

    /// Serializes (t, then per-slot m and v) for checkpointing.
    pub fn export_state(&self) -> (u64, Vec<(String, Vec<S>, Vec<S>)>) {
        (
            self.t,
            self.slots
                .iter()
                .map(|s| (s.name.clone(), s.m.clone(), s.v.clone()))
                .collect(),
        )
    }

    /// Restores state captured by `export_state`; lengths must match.
    pub fn import_state(&mut self, t: u64, slots: Vec<(String, Vec<S>, Vec<S>)>) -> Result<()> {
        if slots.len() != self.slots.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} optimizer slots, model needs {}",
                slots.len(),
                self.slots.len()
            )));
        }
        for (slot, (name, m, v)) in self.slots.iter_mut().zip(slots) {
            if m.len() != slot.m.len() || v.len() != slot.v.len() {
                return Err(Error::Data(format!(
                    "optimizer slot {name} length mismatch ({} vs {})",
                    m.len(),
                    slot.m.len()
                )));
            }
            slot.m = m;
            slot.v = v;
        }
        self.t = t;
        Ok(())
    }
}
