//! Losses and single optimizer steps on flat parameter vectors.

use crate::error::{Error, Result};

pub const BCE_CLAMP: f64 = 1e-7;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::shape(format!(
            "lengths {a} and {b} (must match and be non-zero)"
        )));
    }
    Ok(())
}

pub fn loss_mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len(y.len(), y_hat.len())?;
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

/// Mean binary cross-entropy; predictions clamped to `[1e-7, 1 − 1e-7]`.
pub fn loss_bce(target: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(target.len(), pred.len())?;
    let s: f64 = target
        .iter()
        .zip(pred)
        .map(|(&y, &p)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(s / target.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub beta1: f64,
    pub m: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(n: usize, lr: f64) -> Self {
        SgdMomentum {
            lr,
            beta1: 0.9,
            m: vec![0.0; n],
        }
    }

    /// `m ← β1·m + (1 − β1)·g`, `w ← w − α·m`.
    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) -> Result<()> {
        same_len(w.len(), grad.len())?;
        same_len(w.len(), self.m.len())?;
        for ((w, g), m) in w.iter_mut().zip(grad).zip(&mut self.m) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *w -= self.lr * *m;
        }
        Ok(())
    }
}

/// Adam without bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// `m ← β1·m + (1 − β1)·g`, `v ← β2·v + (1 − β2)·g²`,
    /// `w ← w − α·m / (√v + ε)`.
    pub fn step(&mut self, w: &mut [f64], grad: &[f64]) -> Result<()> {
        same_len(w.len(), grad.len())?;
        same_len(w.len(), self.m.len())?;
        for i in 0..w.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            w[i] -= self.lr * self.m[i] / (self.v[i].sqrt() + self.epsilon);
        }
        self.t += 1;
        Ok(())
    }
}
