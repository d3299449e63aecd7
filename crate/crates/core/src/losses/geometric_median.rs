//! `fᵢ(w) = sᵢ ‖w − aᵢ‖`: the (weighted) geometric-median objective.
//! Every `fᵢ` is minimized at its anchor with `fᵢ* = 0`, and `Gᵢ = sᵢ`.

use super::Problem;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm};

#[derive(Debug, Clone)]
pub struct GeometricMedianProblem {
    anchors: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl GeometricMedianProblem {
    pub fn new(anchors: Vec<Vec<f64>>) -> Result<Self> {
        let scales = vec![1.0; anchors.len()];
        Self::with_scales(anchors, scales)
    }

    /// Per-anchor positive weights `sᵢ`, which become the Lipschitz constants.
    pub fn with_scales(anchors: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Empty("geometric median needs at least one anchor"));
        }
        let d = anchors[0].len();
        if d == 0 || anchors.iter().any(|a| a.len() != d) {
            return Err(Error::Domain(
                "anchors must share a positive dimension".into(),
            ));
        }
        if scales.len() != anchors.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                got: scales.len(),
            });
        }
        if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("scales must be positive and finite".into()));
        }
        Ok(Self { anchors, scales })
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    /// Unweighted mean of the anchors.
    pub fn centroid(&self) -> Vec<f64> {
        let n = self.anchors.len() as f64;
        let mut c = vec![0.0; self.dim()];
        for a in &self.anchors {
            for (ci, ai) in c.iter_mut().zip(a) {
                *ci += ai / n;
            }
        }
        c
    }

    /// `D = max(2‖w̄ − w*‖, (4/n) Σ ‖w̄ − aᵢ‖)` for a minimizer estimate `w*`.
    ///
    /// Beyond this radius `f(w) − f(w*) ≥ ¼‖w − w*‖` holds for any `w*`
    /// with `f(w*) ≤ f(w̄)`, so an inexact minimizer is fine as long as it
    /// improves on the centroid.
    pub fn sharpness_radius(&self, w_star: &[f64]) -> f64 {
        let c = self.centroid();
        let n = self.anchors.len() as f64;
        let spread: f64 = self.anchors.iter().map(|a| dist(&c, a)).sum::<f64>() * 4.0 / n;
        (2.0 * dist(&c, w_star)).max(spread)
    }

    /// Minimizer estimate via Weiszfeld iterations started at the centroid.
    /// Returns the best point visited, so the result never does worse than
    /// the centroid.
    pub fn minimizer(&self, max_iter: usize, tol: f64) -> Vec<f64> {
        let mut w = self.centroid();
        let mut best = w.clone();
        let mut best_f = self.loss(&w);
        for _ in 0..max_iter {
            let mut num = vec![0.0; self.dim()];
            let mut den = 0.0;
            for (a, s) in self.anchors.iter().zip(&self.scales) {
                let r = dist(&w, a);
                if r < 1e-300 {
                    continue;
                }
                let weight = s / r;
                den += weight;
                for (ni, ai) in num.iter_mut().zip(a) {
                    *ni += weight * ai;
                }
            }
            if den == 0.0 {
                break;
            }
            let next: Vec<f64> = num.iter().map(|v| v / den).collect();
            let step = dist(&next, &w);
            w = next;
            let f = self.loss(&w);
            if f < best_f {
                best_f = f;
                best.clone_from(&w);
            }
            if step < tol {
                break;
            }
        }
        // An anchor may be the exact minimizer; Weiszfeld only approaches it.
        for a in &self.anchors {
            let f = self.loss(a);
            if f < best_f {
                best_f = f;
                best.clone_from(a);
            }
        }
        best
    }
}

impl Problem for GeometricMedianProblem {
    fn num_samples(&self) -> usize {
        self.anchors.len()
    }

    fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        self.scales[i] * dist(w, &self.anchors[i])
    }

    fn sample_grad_into(&self, w: &[f64], i: usize, out: &mut [f64]) {
        let a = &self.anchors[i];
        for ((o, wi), ai) in out.iter_mut().zip(w).zip(a) {
            *o = wi - ai;
        }
        let r = norm(out);
        if r == 0.0 {
            return;
        }
        let s = self.scales[i];
        for o in out.iter_mut() {
            *o = s * *o / r;
        }
    }

    fn sample_lipschitz(&self, i: usize) -> f64 {
        self.scales[i]
    }

    fn sample_min(&self, _i: usize) -> Option<f64> {
        Some(0.0)
    }
}
