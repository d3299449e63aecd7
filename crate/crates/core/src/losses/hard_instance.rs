//! The heavy-tailed lower-bound construction.
//!
//! Samples are drawn from a two-atom law `Q_v` supported on `{0, p^{-1/k} v}`
//! with `v ∈ {0,1}^d` carrying `d/2` ones, and the loss is
//!
//! ```text
//! ℓ(w, x) = −⟨w, x⟩ + 2‖x‖ · max(‖w‖ − 1, 0)
//! ```
//!
//! Whenever the sample mean is nonzero the average loss is minimized at
//! `v/‖v‖`, independently of the draw.

use rand::seq::index::sample;
use rand::Rng;

use super::Problem;
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, norm};

/// Value and a subgradient of the hard-instance loss. On the unit sphere
/// the hinge term contributes nothing to the returned subgradient.
pub fn lower_bound_loss(w: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: w.len(),
        });
    }
    let mut g = vec![0.0; w.len()];
    let v = loss_and_grad(w, x, &mut g);
    Ok((v, g))
}

/// Value of the hard-instance loss without shape checks.
pub fn lower_bound_value(w: &[f64], x: &[f64]) -> f64 {
    let wn = norm(w);
    -dot(w, x) + 2.0 * norm(x) * (wn - 1.0).max(0.0)
}

fn loss_and_grad(w: &[f64], x: &[f64], g: &mut [f64]) -> f64 {
    let wn = norm(w);
    let xn = norm(x);
    let hinge = wn > 1.0;
    for ((gi, xi), wi) in g.iter_mut().zip(x).zip(w) {
        *gi = if hinge { -xi + 2.0 * xn * wi / wn } else { -xi };
    }
    -dot(w, x) + 2.0 * xn * (wn - 1.0).max(0.0)
}

/// Parameters of `Q_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct QvSpec {
    v: Vec<f64>,
    p: f64,
    k: f64,
}

impl QvSpec {
    pub fn new(v: Vec<f64>, p: f64, k: f64) -> Result<Self> {
        let d = v.len();
        if d == 0 || !d.is_multiple_of(2) {
            return domain(format!("dimension must be even and positive, got {d}"));
        }
        if v.iter().any(|&x| x != 0.0 && x != 1.0) {
            return domain("v must be a binary vector");
        }
        let ones = v.iter().filter(|&&x| x == 1.0).count();
        if ones != d / 2 {
            return domain(format!("v must have exactly {} ones, has {ones}", d / 2));
        }
        if !(p > 0.0 && p < 0.5) {
            return domain(format!("p must lie in (0, 1/2), got {p}"));
        }
        if !(k > 1.0) {
            return domain(format!("k must exceed 1, got {k}"));
        }
        Ok(Self { v, p, k })
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// `p^{-1/k} v`
    pub fn nonzero_atom(&self) -> Vec<f64> {
        qv_nonzero_atom(&self.v, self.p, self.k)
    }

    /// `E[x] = p^{1 − 1/k} v`
    pub fn mean(&self) -> Vec<f64> {
        let c = self.p.powf(1.0 - 1.0 / self.k);
        self.v.iter().map(|x| c * x).collect()
    }

    /// `v/‖v‖`, the minimizer of the average loss for any draw with a
    /// nonzero sample mean.
    pub fn minimizer(&self) -> Vec<f64> {
        let n = norm(&self.v);
        self.v.iter().map(|x| x / n).collect()
    }
}

/// `p^{-1/k} v`, the nonzero support point of `Q_v`.
pub fn qv_nonzero_atom(v: &[f64], p: f64, k: f64) -> Vec<f64> {
    let c = p.powf(-1.0 / k);
    v.iter().map(|x| c * x).collect()
}

/// One draw from `Q_v`: `0` with probability `1 − p`, else `p^{-1/k} v`.
pub fn sample_qv<R: Rng + ?Sized>(spec: &QvSpec, rng: &mut R) -> Vec<f64> {
    if rng.random_bool(spec.p) {
        spec.nonzero_atom()
    } else {
        vec![0.0; spec.dim()]
    }
}

/// A uniformly random binary vector of even length `d` with `d/2` ones.
pub fn packing_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 || !d.is_multiple_of(2) {
        return domain(format!("dimension must be even and positive, got {d}"));
    }
    let mut v = vec![0.0; d];
    for idx in sample(rng, d, d / 2) {
        v[idx] = 1.0;
    }
    Ok(v)
}

/// Finite-sum problem over fixed samples `xᵢ` with the hard-instance loss.
/// `Gᵢ = 3‖xᵢ‖` and `fᵢ* = −‖xᵢ‖`.
#[derive(Debug, Clone)]
pub struct LowerBoundProblem {
    samples: Vec<Vec<f64>>,
    dim: usize,
}

impl LowerBoundProblem {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("lower-bound problem needs samples"));
        }
        let dim = samples[0].len();
        if dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return domain("samples must share a positive dimension");
        }
        Ok(Self { samples, dim })
    }

    pub fn draw<R: Rng + ?Sized>(spec: &QvSpec, n: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..n).map(|_| sample_qv(spec, rng)).collect())
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample_mean(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        let mut m = vec![0.0; self.dim];
        for s in &self.samples {
            for (mi, si) in m.iter_mut().zip(s) {
                *mi += si / n;
            }
        }
        m
    }

    /// Average loss expressed through the sample mean (all samples are
    /// nonnegative multiples of one direction).
    pub fn mean_form_loss(&self, w: &[f64]) -> f64 {
        lower_bound_value(w, &self.sample_mean())
    }
}

impl Problem for LowerBoundProblem {
    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        lower_bound_value(w, &self.samples[i])
    }

    fn sample_grad_into(&self, w: &[f64], i: usize, out: &mut [f64]) {
        loss_and_grad(w, &self.samples[i], out);
    }

    fn sample_lipschitz(&self, i: usize) -> f64 {
        3.0 * norm(&self.samples[i])
    }

    fn sample_min(&self, i: usize) -> Option<f64> {
        Some(-norm(&self.samples[i]))
    }
}
