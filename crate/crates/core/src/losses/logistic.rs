//! Multinomial logistic regression with the cross-entropy loss.
//!
//! Parameters are laid out as `m` consecutive blocks of length `d`, one
//! per class. With softmax probabilities `p`, the per-sample gradient
//! block for class `j` is `(p_j − 1{j = y}) · x`, whose norm is bounded
//! by `√2 ‖x‖`.

use super::{Dataset, Problem};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, norm_sq};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_shapes(w: &[f64], x: &[f64], y: usize) -> Result<usize> {
    let d = x.len();
    if d == 0 || w.is_empty() || !w.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d.max(1) * (w.len() / d.max(1)).max(1),
            got: w.len(),
        });
    }
    let m = w.len() / d;
    if y >= m {
        return Err(Error::Domain(format!("label {y} outside [0, {m})")));
    }
    Ok(m)
}

fn logits(w: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let d = x.len();
    (0..m).map(|j| dot(&w[j * d..(j + 1) * d], x)).collect()
}

/// `−log p_y` for the softmax predictor.
pub fn logistic_loss(w: &[f64], x: &[f64], y: usize) -> Result<f64> {
    let m = check_shapes(w, x, y)?;
    Ok(cross_entropy(&logits(w, x, m), y))
}

fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

pub fn logistic_grad(w: &[f64], x: &[f64], y: usize) -> Result<Vec<f64>> {
    check_shapes(w, x, y)?;
    let mut out = vec![0.0; w.len()];
    grad_into(w, x, y, &mut out);
    Ok(out)
}

/// Closed-form gradient norm `sqrt(Σ_{j≠y} p_j² + (1 − p_y)²) · ‖x‖`.
pub fn logistic_grad_norm_exact(p: &[f64], y: usize, x_norm: f64) -> f64 {
    let s: f64 = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            if j == y {
                (1.0 - pj) * (1.0 - pj)
            } else {
                pj * pj
            }
        })
        .sum();
    s.sqrt() * x_norm
}

/// `√2 · ‖(x, 1)‖` for a raw feature vector `x`.
pub fn per_sample_lipschitz_logistic(x: &[f64]) -> f64 {
    (2.0 * (norm_sq(x) + 1.0)).sqrt()
}

// Writes the gradient into `out` without allocating: the first slot of
// each block temporarily holds that class's logit.
fn grad_into(w: &[f64], x: &[f64], y: usize, out: &mut [f64]) {
    let d = x.len();
    let m = w.len() / d;
    let mut max = f64::NEG_INFINITY;
    for j in 0..m {
        let z = dot(&w[j * d..(j + 1) * d], x);
        out[j * d] = z;
        max = max.max(z);
    }
    let mut total = 0.0;
    for j in 0..m {
        total += (out[j * d] - max).exp();
    }
    for j in 0..m {
        let p = (out[j * d] - max).exp() / total;
        let coef = if j == y { p - 1.0 } else { p };
        let block = &mut out[j * d..(j + 1) * d];
        for (o, xi) in block.iter_mut().zip(x) {
            *o = coef * xi;
        }
    }
}

/// Cross-entropy ERM over a [`Dataset`]; `Gᵢ = √2 ‖xᵢ‖` where `xᵢ`
/// includes the bias coordinate if one was appended.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Dataset,
}

impl LogisticProblem {
    pub fn new(data: Dataset) -> Self {
        Self { data }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        let z = logits(w, x, self.num_classes());
        let mut best = 0;
        for j in 1..z.len() {
            if z[j] > z[best] {
                best = j;
            }
        }
        best
    }

    /// Fraction of samples of `data` classified correctly by `w`.
    pub fn accuracy_on(&self, w: &[f64], data: &Dataset) -> f64 {
        let hits = (0..data.len())
            .filter(|&i| self.predict(w, data.row(i)) == data.label(i))
            .count();
        hits as f64 / data.len() as f64
    }
}

impl Problem for LogisticProblem {
    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.data.dim() * self.data.num_classes()
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        let x = self.data.row(i);
        cross_entropy(&logits(w, x, self.num_classes()), self.data.label(i))
    }

    fn sample_grad_into(&self, w: &[f64], i: usize, out: &mut [f64]) {
        grad_into(w, self.data.row(i), self.data.label(i), out);
    }

    fn sample_lipschitz(&self, i: usize) -> f64 {
        std::f64::consts::SQRT_2 * norm(self.data.row(i))
    }

    fn sample_min(&self, _i: usize) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<f64> {
        let n = self.data.len();
        Some(0.5 * (0..n).map(|i| norm_sq(self.data.row(i))).sum::<f64>() / n as f64)
    }
}
