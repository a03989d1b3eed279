use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Network, ParamSlot, Scalar};

/// One RMSProp update, in place:
/// `s = rho*s + (1-rho)*g^2; theta -= lr * g / (sqrt(s) + eps)`.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut [T],
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(format!(
            "rmsprop operands differ in length: {} / {} / {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient {:?} at element {i}",
            grads[i]
        )));
    }
    let lr = T::from_f64(cfg.learning_rate);
    let rho = T::from_f64(cfg.rmsprop_decay);
    let one_minus_rho = T::one() - rho;
    let eps = T::from_f64(cfg.rmsprop_epsilon);
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = rho * *s + one_minus_rho * g * g;
        *p = *p - lr * g / (s.sqrt() + eps);
    }
    Ok(())
}

/// Per-parameter mean-square accumulators for every trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub slots: Vec<ParamSlot>,
    pub mean_square: Vec<Vec<f32>>,
}

impl RmsPropState {
    pub fn new(net: &Network<f32>) -> Self {
        let slots = net.trainable_slots();
        Self {
            mean_square: slots.iter().map(|&s| vec![0.0; net.param(s).len()]).collect(),
            slots,
        }
    }

    fn position(&self, slot: ParamSlot) -> Option<usize> {
        self.slots.iter().position(|&s| s == slot)
    }

    /// Applies one step to every array in `grads`.
    pub fn apply(
        &mut self,
        net: &mut Network<f32>,
        grads: &[(ParamSlot, Vec<f32>)],
        cfg: &TrainConfig,
    ) -> Result<()> {
        // validate everything first so a failure leaves parameters untouched
        for (slot, g) in grads {
            if net.freeze_mask().is_frozen(slot.layer) {
                return Err(Error::Numeric(format!("gradient for frozen layer {}", slot.layer)));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {} at element {i}",
                    net.param_name(*slot)
                )));
            }
        }
        for (slot, g) in grads {
            let i = self
                .position(*slot)
                .ok_or_else(|| Error::Numeric(format!("no optimizer state for {}", net.param_name(*slot))))?;
            rmsprop_step(net.param_mut(*slot), g, &mut self.mean_square[i], cfg)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = vec![1.0f64, -2.0];
        let mut s = vec![0.5, 1.0];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut s, &cfg()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert!((s[0] - 0.45).abs() < 1e-15 && (s[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn worked_example_and_two_steps() {
        let mut p = vec![0.0f64];
        let mut s = vec![0.0];
        rmsprop_step(&mut p, &[1.0], &mut s, &cfg()).unwrap();
        assert!((s[0] - 0.1).abs() < 1e-15);
        assert!((p[0] - (-2e-6 / (0.1f64.sqrt() + 1e-7))).abs() < 1e-18);
        assert!((p[0] + 6.3246e-6).abs() < 1e-10);
        let before = p[0];
        rmsprop_step(&mut p, &[1.0], &mut s, &cfg()).unwrap();
        assert!((s[0] - 0.19).abs() < 1e-15);
        let step = before - p[0];
        assert!(step < 2e-6 / 0.1f64.sqrt() && step > 2e-6);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![0.0f32];
        let mut s = vec![0.0];
        assert!(matches!(
            rmsprop_step(&mut p, &[f32::NAN], &mut s, &cfg()),
            Err(Error::Numeric(_))
        ));
        assert_eq!(p, vec![0.0]);
    }
}
