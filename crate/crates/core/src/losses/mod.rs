//! Objective families for finite-sum problems `f(w) = (1/n) Σ fᵢ(w)`.

mod dataset;
mod geometric_median;
mod hard_instance;
mod logistic;
mod synthetic;

pub use dataset::Dataset;
pub use geometric_median::GeometricMedianProblem;
pub use hard_instance::{
    lower_bound_loss, lower_bound_value, packing_vector, qv_nonzero_atom, sample_qv,
    LowerBoundProblem, QvSpec,
};
pub use logistic::{
    logistic_grad, logistic_grad_norm_exact, logistic_loss, per_sample_lipschitz_logistic, softmax,
    LogisticProblem,
};
pub use synthetic::{heavy_tailed_logistic_dataset, PlantedLogistic, RadialLaw};

use serde::{Deserialize, Serialize};

use crate::linalg::norm;

/// Feasible set for the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Domain {
    #[default]
    Unconstrained,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Domain {
    /// Euclidean projection onto the domain.
    pub fn project(&self, w: &mut [f64]) {
        if let Domain::Ball { center, radius } = self {
            let d: f64 = w
                .iter()
                .zip(center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            if d > *radius {
                for (a, c) in w.iter_mut().zip(center) {
                    *a = c + (*a - c) * radius / d;
                }
            }
        }
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        match self {
            Domain::Unconstrained => true,
            Domain::Ball { center, radius } => crate::linalg::dist(w, center) <= radius + tol,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Unconstrained => f64::INFINITY,
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }
}

/// A finite-sum objective with per-sample Lipschitz constants.
///
/// `sample_grad_into` returns a subgradient at nondifferentiable points
/// (the minimal-norm element where one is cheap to name).
pub trait Problem: Sync {
    fn num_samples(&self) -> usize;

    fn dim(&self) -> usize;

    fn sample_loss(&self, w: &[f64], i: usize) -> f64;

    /// Overwrites `out` with ∇fᵢ(w).
    fn sample_grad_into(&self, w: &[f64], i: usize, out: &mut [f64]);

    /// Gᵢ, an upper bound on ‖∇fᵢ(w)‖ over the domain.
    fn sample_lipschitz(&self, i: usize) -> f64;

    /// fᵢ* = inf_w fᵢ(w), when known in closed form.
    fn sample_min(&self, _i: usize) -> Option<f64> {
        None
    }

    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }

    /// Smoothness constant of the average objective, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    fn sample_grad(&self, w: &[f64], i: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.sample_grad_into(w, i, &mut g);
        g
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let n = self.num_samples();
        (0..n).map(|i| self.sample_loss(w, i)).sum::<f64>() / n as f64
    }

    fn grad(&self, w: &[f64]) -> Vec<f64> {
        let n = self.num_samples();
        let mut sum = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.dim()];
        for i in 0..n {
            self.sample_grad_into(w, i, &mut buf);
            for (s, g) in sum.iter_mut().zip(&buf) {
                *s += g;
            }
        }
        for s in sum.iter_mut() {
            *s /= n as f64;
        }
        sum
    }

    fn grad_norm(&self, w: &[f64]) -> f64 {
        norm(&self.grad(w))
    }

    fn lipschitz_constants(&self) -> Vec<f64> {
        (0..self.num_samples())
            .map(|i| self.sample_lipschitz(i))
            .collect()
    }
}
