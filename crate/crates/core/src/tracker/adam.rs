//! Adam minimizer over a flat parameter vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 300,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamResult {
    pub x: Vec<f64>,
    /// Loss per step, starting at the initial loss (`steps + 1` entries).
    pub trace: Vec<f64>,
}

/// Number of consecutive blown-up steps before aborting.
const DIVERGENCE_PATIENCE: usize = 50;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Minimize `eval` (must return the loss and its gradient) with Adam and
/// bias correction. Deterministic given the initial point. Aborts when the
/// loss or gradient goes non-finite, or when the loss exceeds ten times the
/// initial loss for fifty consecutive steps.
pub fn adam_minimize<F>(mut eval: F, init: &[f64], cfg: &AdamConfig) -> Result<AdamResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = init.len();
    let mut x = init.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];

    let (mut loss, mut grad) = eval(&x)?;
    check_finite(loss, &grad, 0)?;
    let initial = loss;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(loss);
    let mut blown = 0usize;

    for step in 1..=cfg.steps {
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - libm::pow(cfg.beta1, step as f64));
            let v_hat = v[i] / (1.0 - libm::pow(cfg.beta2, step as f64));
            x[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
        let (l, g) = eval(&x)?;
        check_finite(l, &g, step)?;
        loss = l;
        grad = g;
        trace.push(loss);
        // Divergence is judged against a meaningful initial loss; starting
        // at (numerically) zero, relative blowup is undefined.
        if initial > 1e-12 && loss > DIVERGENCE_FACTOR * initial {
            blown += 1;
            if blown >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged { step, loss, initial });
            }
        } else {
            blown = 0;
        }
    }
    Ok(AdamResult { x, trace })
}

fn check_finite(loss: f64, grad: &[f64], step: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite { what: "loss", step });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: "gradient", step });
    }
    Ok(())
}
