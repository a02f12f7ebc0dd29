//! AdamW with decoupled weight decay, plus the warmup+cosine schedule.

use super::scalar::{sc, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One AdamW update on a flat parameter slice.
///
/// `step` is 1-based and drives bias correction. Weight decay is decoupled:
/// `p -= lr * wd * p` independent of the gradient path.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    m: &mut [S],
    v: &mut [S],
    lr: f64,
    cfg: &AdamWConfig,
    step: u64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), m.len());
    assert_eq!(params.len(), v.len());
    let b1 = sc::<S>(cfg.beta1);
    let b2 = sc::<S>(cfg.beta2);
    let one = S::one();
    let bc1 = sc::<S>(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = sc::<S>(1.0 - cfg.beta2.powi(step as i32));
    let lr_s = sc::<S>(lr);
    let eps = sc::<S>(cfg.eps);
    let decay = sc::<S>(lr * cfg.weight_decay);
    for i in 0..params.len() {
        m[i] = b1 * m[i] + (one - b1) * grads[i];
        v[i] = b2 * v[i] + (one - b2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = params[i] - lr_s * m_hat / (v_hat.sqrt() + eps) - decay * params[i];
    }
    Ok(())
}

/// Per-tensor optimizer state aligned with a parameter registry.
pub struct AdamW<S> {
    pub cfg: AdamWConfig,
    step: u64,
    moments: Vec<Option<(Vec<S>, Vec<S>)>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(cfg: AdamWConfig, n_params: usize) -> Self {
        AdamW {
            cfg,
            step: 0,
            moments: (0..n_params).map(|_| None).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i] == None` means parameter `i` is frozen
    /// this run and is left untouched (no decay either).
    pub fn step(
        &mut self,
        params: &mut [super::params::Param<S>],
        grads: &[Option<Vec<S>>],
        lr: f64,
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let (m, v) = self.moments[i].get_or_insert_with(|| {
                (vec![S::zero(); p.value.len()], vec![S::zero(); p.value.len()])
            });
            adamw_step(&mut p.value, g, m, v, lr, &self.cfg, self.step)?;
        }
        Ok(())
    }

    /// Serialize moment state for checkpoint resume: (param index, m, v).
    pub fn export_state(&self) -> Vec<(usize, &[S], &[S])> {
        self.moments
            .iter()
            .enumerate()
            .filter_map(|(i, mv)| mv.as_ref().map(|(m, v)| (i, m.as_slice(), v.as_slice())))
            .collect()
    }

    pub fn import_state(&mut self, step: u64, entries: Vec<(usize, Vec<S>, Vec<S>)>) {
        self.step = step;
        for (i, m, v) in entries {
            self.moments[i] = Some((m, v));
        }
    }
}

/// Linear warmup to `peak`, then cosine decay to `floor_frac * peak`.
///
/// `step == 0` yields 0 (when warmup is nonzero); `step == warmup_end` yields
/// `peak`; `step == total_steps` yields exactly `floor_frac * peak`.
pub fn cosine_lr(
    step: u64,
    total_steps: u64,
    peak: f64,
    warmup_frac: f64,
    floor_frac: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&warmup_frac) {
        return Err(Error::Config(format!(
            "warmup_frac must be in [0,1), got {warmup_frac}"
        )));
    }
    if step > total_steps {
        return Err(Error::Config(format!(
            "step {step} past total_steps {total_steps}"
        )));
    }
    let warmup_steps = (warmup_frac * total_steps as f64).round() as u64;
    if step < warmup_steps {
        return Ok(peak * step as f64 / warmup_steps as f64);
    }
    let decay_total = total_steps - warmup_steps;
    if decay_total == 0 {
        return Ok(peak * floor_frac);
    }
    let progress = (step - warmup_steps) as f64 / decay_total as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    Ok(peak * (floor_frac + (1.0 - floor_frac) * cos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_zero_grad_no_decay_is_identity() {
        let mut p = vec![1.0f64, -2.0];
        let g = vec![0.0, 0.0];
        let mut m = vec![0.0, 0.0];
        let mut v = vec![0.0, 0.0];
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, &AdamWConfig::default(), 1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adamw_single_hand_computed_step() {
        // p=1, g=1, lr=0.1, betas (0.9, 0.999): m_hat = v_hat = 1, p -> ~0.9
        let mut p = vec![1.0f64];
        let g = vec![1.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, &AdamWConfig::default(), 1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6, "got {}", p[0]);
    }

    #[test]
    fn adamw_decoupled_decay_closed_form() {
        // grad=0, wd=0.1, lr=0.1 -> p *= (1 - 0.01)
        let mut p = vec![2.0f64];
        let g = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, &cfg, 1).unwrap();
        assert!((p[0] - 2.0 * 0.99).abs() < 1e-12);
    }

    #[test]
    fn adamw_rejects_nonpositive_lr() {
        let mut p = vec![1.0f64];
        let g = vec![1.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        assert!(matches!(
            adamw_step(&mut p, &g, &mut m, &mut v, 0.0, &AdamWConfig::default(), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let total = 1000;
        assert_eq!(cosine_lr(0, total, 3e-4, 0.05, 0.01).unwrap(), 0.0);
        let warmup_end = 50;
        let at_peak = cosine_lr(warmup_end, total, 3e-4, 0.05, 0.01).unwrap();
        assert!((at_peak - 3e-4).abs() < 1e-18);
        let at_end = cosine_lr(total, total, 3e-4, 0.05, 0.01).unwrap();
        assert!((at_end - 3e-6).abs() < 1e-18, "{at_end}");
    }

    #[test]
    fn cosine_rejects_bad_warmup() {
        assert!(cosine_lr(0, 10, 1.0, 1.0, 0.01).is_err());
        assert!(cosine_lr(0, 10, 1.0, -0.1, 0.01).is_err());
    }

    #[test]
    fn cosine_is_monotone_down_after_warmup() {
        let mut last = f64::INFINITY;
        for step in 50..=1000 {
            let lr = cosine_lr(step, 1000, 1.0, 0.05, 0.01).unwrap();
            assert!(lr <= last + 1e-15);
            last = lr;
        }
    }
}
