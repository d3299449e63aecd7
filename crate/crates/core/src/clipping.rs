//! The clip operator, clipped-mean aggregation, and exact clipping-bias
//! computations over finite discrete vector distributions.

use crate::error::{domain, Result};
use crate::linalg::norm;

/// `z · min(1, c/‖z‖)`, with `clip(0, c) = 0`.
pub fn clip(z: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return domain(format!("clip norm must be positive, got {c}"));
    }
    let mut out = z.to_vec();
    clip_in_place(&mut out, c);
    Ok(out)
}

/// In-place variant of [`clip`]; `c` is assumed positive (possibly infinite).
/// Vectors already inside the ball are left bit-for-bit unchanged.
pub fn clip_in_place(z: &mut [f64], c: f64) {
    let nrm = norm(z);
    if nrm > c {
        for x in z.iter_mut() {
            *x = *x * c / nrm;
        }
    }
}

/// `(1/b) Σ clip(gᵢ, τ)`. The divisor is the expected batch size `b`,
/// not the number of gradients supplied.
pub fn clipped_mean(grads: &[Vec<f64>], tau: f64, b: f64, dim: usize) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return domain(format!("clip norm must be positive, got {tau}"));
    }
    if !(b > 0.0) {
        return domain(format!("expected batch size must be positive, got {b}"));
    }
    let mut sum = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for g in grads {
        if g.len() != dim {
            return Err(crate::Error::DimensionMismatch {
                expected: dim,
                got: g.len(),
            });
        }
        buf.copy_from_slice(g);
        clip_in_place(&mut buf, tau);
        for (s, x) in sum.iter_mut().zip(&buf) {
            *s += x;
        }
    }
    for s in sum.iter_mut() {
        *s /= b;
    }
    Ok(sum)
}

/// A random vector with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteVectorDistribution {
    atoms: Vec<(Vec<f64>, f64)>,
}

impl DiscreteVectorDistribution {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return domain("distribution needs at least one atom");
        }
        let dim = atoms[0].0.len();
        if atoms.iter().any(|(v, _)| v.len() != dim) {
            return domain("all atoms must share one dimension");
        }
        if atoms.iter().any(|(_, p)| !(*p >= 0.0)) {
            return domain("atom probabilities must be nonnegative");
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("atom probabilities sum to {total}, expected 1"));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].0.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (v, p) in &self.atoms {
            for (mi, vi) in m.iter_mut().zip(v) {
                *mi += p * vi;
            }
        }
        m
    }

    pub fn max_norm(&self) -> f64 {
        self.atoms.iter().map(|(v, _)| norm(v)).fold(0.0, f64::max)
    }

    /// `E[‖v‖^p]`
    pub fn norm_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|(v, q)| q * norm(v).powf(p)).sum()
    }

    /// `P(‖v‖ ≥ τ)`
    pub fn tail_probability(&self, tau: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|(v, _)| norm(v) >= tau)
            .map(|(_, q)| q)
            .sum()
    }
}

/// `‖E[v] − E[clip(v, τ)]‖`, by enumeration over the atoms.
pub fn clipping_bias_exact(dist: &DiscreteVectorDistribution, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return domain(format!("clip norm must be positive, got {tau}"));
    }
    let mut diff = vec![0.0; dist.dim()];
    for (v, p) in dist.atoms() {
        let c = clip(v, tau)?;
        for ((d, vi), ci) in diff.iter_mut().zip(v).zip(&c) {
            *d += p * (vi - ci);
        }
    }
    Ok(norm(&diff))
}

/// `(E‖v‖^p)^{1/p} · P(‖v‖ ≥ τ)^{1−1/p} − τ · P(‖v‖ ≥ τ)`
pub fn bias_bound_lemma(dist: &DiscreteVectorDistribution, tau: f64, p: f64) -> Result<f64> {
    check_bound_args(tau, p)?;
    let tail = dist.tail_probability(tau);
    if tail == 0.0 {
        return Ok(0.0);
    }
    let moment = dist.norm_moment(p).powf(1.0 / p);
    Ok(moment * tail.powf(1.0 - 1.0 / p) - tau * tail)
}

/// `E‖v‖^p / τ^{p−1}`
pub fn bias_bound_corollary(dist: &DiscreteVectorDistribution, tau: f64, p: f64) -> Result<f64> {
    check_bound_args(tau, p)?;
    Ok(dist.norm_moment(p) / tau.powf(p - 1.0))
}

fn check_bound_args(tau: f64, p: f64) -> Result<()> {
    if !(tau > 0.0) {
        return domain(format!("clip norm must be positive, got {tau}"));
    }
    if !(p > 1.0) {
        return domain(format!("moment order must exceed 1, got {p}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_atom() -> DiscreteVectorDistribution {
        DiscreteVectorDistribution::new(vec![(vec![0.0], 0.5), (vec![10.0], 0.5)]).unwrap()
    }

    #[test]
    fn clip_analytic_cases() {
        assert_eq!(clip(&[3.0, 4.0], 1.0).unwrap(), vec![0.6, 0.8]);
        assert_eq!(clip(&[1.0, 0.0], 2.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(clip(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert!(clip(&[1.0], 0.0).is_err());
        assert!(clip(&[1.0], -1.0).is_err());
    }

    #[test]
    fn clipped_mean_cases() {
        let g = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(clipped_mean(&g, 1.0, 2.0, 2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(clipped_mean(&[], 1.0, 5.0, 3).unwrap(), vec![0.0; 3]);
        assert_eq!(
            clipped_mean(&[vec![3.0, 4.0]], 10.0, 1.0, 2).unwrap(),
            vec![3.0, 4.0]
        );
        assert!(clipped_mean(&[vec![1.0]], 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn two_atom_bias_is_tight() {
        let d = two_atom();
        assert_eq!(clipping_bias_exact(&d, 1.0).unwrap(), 4.5);
        let lemma = bias_bound_lemma(&d, 1.0, 2.0).unwrap();
        assert!((lemma - 4.5).abs() < 1e-12, "{lemma}");
        assert!((bias_bound_corollary(&d, 1.0, 2.0).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn no_bias_above_support() {
        let d = two_atom();
        assert_eq!(clipping_bias_exact(&d, 10.0).unwrap(), 0.0);
        assert_eq!(clipping_bias_exact(&d, 11.0).unwrap(), 0.0);
        assert_eq!(bias_bound_lemma(&d, 11.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn single_atom_closed_form() {
        let v = vec![3.0, -4.0];
        let d = DiscreteVectorDistribution::new(vec![(v.clone(), 1.0)]).unwrap();
        for tau in [0.5, 2.0, 5.0, 7.0] {
            let expected = 5.0 * f64::max(0.0, 1.0 - tau / 5.0);
            assert!((clipping_bias_exact(&d, tau).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn corollary_limits() {
        let d = two_atom();
        assert!(bias_bound_corollary(&d, 1e12, 2.0).unwrap() < 1e-9);
        let zero = DiscreteVectorDistribution::new(vec![(vec![0.0, 0.0], 1.0)]).unwrap();
        assert_eq!(bias_bound_corollary(&zero, 1.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn lemma_bound_across_orders() {
        // The tail event carries a constant norm, so the bound is 4.5 for every p.
        let d = two_atom();
        for p in [1.5, 2.0, 4.0] {
            let b = bias_bound_lemma(&d, 1.0, p).unwrap();
            assert!((b - 4.5).abs() < 1e-9, "p={p}: {b}");
        }
        // With unequal tail norms the bound grows with p (Lyapunov).
        let d = DiscreteVectorDistribution::new(vec![
            (vec![0.0], 0.5),
            (vec![2.0], 0.25),
            (vec![10.0], 0.25),
        ])
        .unwrap();
        let bounds: Vec<f64> = [1.5, 2.0, 4.0]
            .iter()
            .map(|&p| bias_bound_lemma(&d, 1.0, p).unwrap())
            .collect();
        assert!(
            bounds[0] <= bounds[1] && bounds[1] <= bounds[2],
            "{bounds:?}"
        );
    }

    #[test]
    fn invalid_distribution() {
        assert!(DiscreteVectorDistribution::new(vec![]).is_err());
        assert!(DiscreteVectorDistribution::new(vec![(vec![1.0], 0.4)]).is_err());
        assert!(
            DiscreteVectorDistribution::new(vec![(vec![1.0], 1.5), (vec![2.0], -0.5)]).is_err()
        );
        assert!(
            DiscreteVectorDistribution::new(vec![(vec![1.0], 0.5), (vec![1.0, 2.0], 0.5)]).is_err()
        );
    }

    #[test]
    fn bias_can_grow_with_tau_when_atoms_cancel() {
        let third = 1.0 / 3.0;
        let d = DiscreteVectorDistribution::new(vec![
            (vec![10.0], third),
            (vec![-5.0], third),
            (vec![-5.0], third),
        ])
        .unwrap();
        let small = clipping_bias_exact(&d, 1e-9).unwrap();
        let mid = clipping_bias_exact(&d, 5.0).unwrap();
        assert!(small < 1e-8);
        assert!((mid - 5.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clip_norm_is_min(z in prop::collection::vec(-100.0f64..100.0, 1..6), c in 0.01f64..50.0) {
            let out = clip(&z, c).unwrap();
            let expected = norm(&z).min(c);
            prop_assert!((norm(&out) - expected).abs() <= 1e-12 * expected.max(1.0));
        }

        #[test]
        fn bias_is_monotone_in_tau_on_a_ray(
            dir in prop::collection::vec(-1.0f64..1.0, 2),
            atoms in prop::collection::vec((0.0f64..10.0, 0.01f64..1.0), 1..6)
        ) {
            let total: f64 = atoms.iter().map(|(_, p)| p).sum();
            let atoms: Vec<_> = atoms
                .into_iter()
                .map(|(r, p)| (dir.iter().map(|x| r * x).collect(), p / total))
                .collect();
            let Ok(d) = DiscreteVectorDistribution::new(atoms) else { return Ok(()); };
            let mut prev = f64::INFINITY;
            for k in 1..=30 {
                let b = clipping_bias_exact(&d, 0.5 * k as f64).unwrap();
                prop_assert!(b <= prev + 1e-12);
                prev = b;
            }
        }
    }
}
