//! Noise calibration for DP-SGD and private selection of the minimum
//! per-sample Lipschitz constant.
//!
//! The Gaussian noise variance follows the closed-form moments-accountant
//! calibration `σ² = ν·T·ln(1/δ)·τ² / (n²ε²)`, where `ν` is an absolute
//! constant left configurable (default 1). All risk bounds in this crate
//! are phrased in terms of
//!
//! ```text
//! φ = sqrt(ν · d · ln(1/δ)) / (n · ε)
//! ```

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// An `(ε, δ)` target together with the accountant constant `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    1.0
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_nu(epsilon, delta, 1.0)
    }

    pub fn with_nu(epsilon: f64, delta: f64, nu: f64) -> Result<Self> {
        let budget = Self { epsilon, delta, nu };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return domain(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return domain(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return domain(format!("nu must be positive and finite, got {}", self.nu));
        }
        Ok(())
    }

    /// `ln(1/δ)`
    pub fn log_inv_delta(&self) -> f64 {
        -self.delta.ln()
    }
}

/// The privacy/utility quantity `φ`, with a flag raised when `φ ≥ 1`
/// (the risk bounds are only meaningful for `φ < 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phi {
    pub value: f64,
    pub at_least_one: bool,
}

pub fn compute_phi(n: usize, d: usize, budget: &PrivacyBudget) -> Result<Phi> {
    budget.validate()?;
    if n == 0 || d == 0 {
        return domain("n and d must be at least 1");
    }
    let value =
        (budget.nu * d as f64 * budget.log_inv_delta()).sqrt() / (n as f64 * budget.epsilon);
    Ok(Phi {
        value,
        at_least_one: value >= 1.0,
    })
}

/// Per-coordinate Gaussian noise specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_sq: f64,
    pub dimension: usize,
}

impl NoiseSpec {
    pub fn new(sigma_sq: f64, dimension: usize) -> Result<Self> {
        if !(sigma_sq >= 0.0) {
            return domain(format!(
                "noise variance must be nonnegative, got {sigma_sq}"
            ));
        }
        if dimension == 0 {
            return domain("noise dimension must be at least 1");
        }
        Ok(Self {
            sigma_sq,
            dimension,
        })
    }
}

/// Noise variance making `iterations` steps of DP-SGD with clip norm `tau`
/// on `n` samples `(ε, δ)`-DP.
pub fn noise_variance(
    iterations: usize,
    tau: f64,
    n: usize,
    dimension: usize,
    budget: &PrivacyBudget,
) -> Result<NoiseSpec> {
    budget.validate()?;
    if iterations == 0 {
        return domain("iterations must be at least 1");
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return domain(format!(
            "clip norm must be finite and nonnegative, got {tau}"
        ));
    }
    let n = n as f64;
    let sigma_sq = budget.nu * iterations as f64 * budget.log_inv_delta() * tau * tau
        / (n * n * budget.epsilon * budget.epsilon);
    NoiseSpec::new(sigma_sq, dimension)
}

/// Whether `ε < b²T/n²`, the accountant's regime of validity with the
/// unknown constant taken as one. Advisory only; never enforced.
pub fn accountant_regime_holds(
    epsilon: f64,
    expected_batch: f64,
    n: usize,
    iterations: usize,
) -> bool {
    let n = n as f64;
    epsilon < expected_batch * expected_batch * iterations as f64 / (n * n)
}

pub fn gaussian_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; spec.dimension];
    add_gaussian_noise(spec.sigma_sq, &mut out, rng);
    out
}

/// Adds i.i.d. `N(0, sigma_sq)` noise to every coordinate of `v`. Leaves
/// `v` untouched (and draws nothing) when `sigma_sq == 0`.
pub fn add_gaussian_noise<R: Rng + ?Sized>(sigma_sq: f64, v: &mut [f64], rng: &mut R) {
    if sigma_sq == 0.0 {
        return;
    }
    let sigma = sigma_sq.sqrt();
    for x in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += sigma * z;
    }
}

/// Laplace(0, scale) as the difference of two independent exponentials.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let a: f64 = rng.sample(Exp1);
    let b: f64 = rng.sample(Exp1);
    scale * (a - b)
}

/// Laplace scale used by [`report_noisy_max`].
///
/// Each sample contributes exactly one score, so neighbouring datasets
/// differ in a single coordinate by at most `sensitivity`.
pub fn report_noisy_max_scale(epsilon: f64, sensitivity: f64) -> f64 {
    sensitivity / epsilon
}

/// Report Noisy Max: perturbs each score with independent Laplace noise
/// and returns the index of the largest noisy score. `epsilon = +inf`
/// returns the exact argmax (first occurrence on ties).
pub fn report_noisy_max<R: Rng + ?Sized>(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Empty("report_noisy_max needs at least one score"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return domain("scores must be finite");
    }
    if !(epsilon > 0.0) {
        return domain(format!("epsilon must be positive, got {epsilon}"));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return domain(format!(
            "sensitivity must be positive and finite, got {sensitivity}"
        ));
    }
    if scores.len() == 1 {
        return Ok(0);
    }
    if epsilon == f64::INFINITY {
        return Ok(first_argmax(scores.iter().copied()));
    }
    let scale = report_noisy_max_scale(epsilon, sensitivity);
    Ok(first_argmax(
        scores.iter().map(|&s| s + sample_laplace(scale, rng)),
    ))
}

fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (i, v) in values.enumerate() {
        if i == 0 || v > best {
            best = v;
            best_idx = i;
        }
    }
    best_idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    #[test]
    fn phi_reference_value() {
        // sqrt(10 * ln 1e5) / 2000
        let phi = compute_phi(1000, 10, &budget(2.0, 1e-5)).unwrap();
        assert!((phi.value - 0.005_364_92).abs() < 1e-8, "{}", phi.value);
        assert!(!phi.at_least_one);
    }

    #[test]
    fn phi_unity_and_flag() {
        let b = budget(1.0, (-1.0f64).exp());
        let phi = compute_phi(1, 1, &b).unwrap();
        assert!((phi.value - 1.0).abs() < 1e-15);
        let big = compute_phi(1, 4, &b).unwrap();
        assert!(big.at_least_one);
    }

    #[test]
    fn phi_halves_when_n_doubles() {
        let b = budget(2.0, 1e-5);
        for n in [1usize, 7, 1000, 12345] {
            let a = compute_phi(n, 10, &b).unwrap().value;
            let c = compute_phi(2 * n, 10, &b).unwrap().value;
            assert_eq!(c, a / 2.0);
        }
    }

    #[test]
    fn phi_monotonicity() {
        let b = budget(2.0, 1e-5);
        let base = compute_phi(100, 10, &b).unwrap().value;
        assert!(compute_phi(101, 10, &b).unwrap().value < base);
        assert!(compute_phi(100, 11, &b).unwrap().value > base);
        assert!(compute_phi(100, 10, &budget(2.5, 1e-5)).unwrap().value < base);
        let nu2 = PrivacyBudget::with_nu(2.0, 1e-5, 2.0).unwrap();
        assert!(compute_phi(100, 10, &nu2).unwrap().value > base);
    }

    #[test]
    fn invalid_budgets_are_rejected() {
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(0.0, 0.5).is_err());
        let bad = PrivacyBudget {
            epsilon: 1.0,
            delta: 1.5,
            nu: 1.0,
        };
        assert!(compute_phi(10, 1, &bad).is_err());
        assert!(noise_variance(1, 1.0, 10, 1, &bad).is_err());
    }

    #[test]
    fn noise_variance_reference_value() {
        // 400 * ln(1e5) * 4 / (1e6 * 4)
        let spec = noise_variance(400, 2.0, 1000, 5, &budget(2.0, 1e-5)).unwrap();
        assert!(
            (spec.sigma_sq - 4.605_17e-3).abs() < 1e-8,
            "{}",
            spec.sigma_sq
        );
        assert_eq!(spec.dimension, 5);
    }

    #[test]
    fn noise_variance_scaling() {
        let b = budget(2.0, 1e-5);
        assert_eq!(noise_variance(10, 0.0, 100, 1, &b).unwrap().sigma_sq, 0.0);
        let s1 = noise_variance(10, 1.5, 100, 1, &b).unwrap().sigma_sq;
        let s2 = noise_variance(10, 3.0, 100, 1, &b).unwrap().sigma_sq;
        assert_eq!(s2, 4.0 * s1);
    }

    #[test]
    fn zero_noise_is_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = gaussian_noise(&NoiseSpec::new(0.0, 4).unwrap(), &mut rng);
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn noise_is_deterministic_given_seed() {
        let spec = NoiseSpec::new(2.0, 8).unwrap();
        let a = gaussian_noise(&spec, &mut ChaCha8Rng::seed_from_u64(9));
        let b = gaussian_noise(&spec, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_moments() {
        let spec = NoiseSpec::new(1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gaussian_noise(&spec, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn rnm_exact_argmax_at_infinite_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let idx = report_noisy_max(&[-5.0, -1.0, -3.0], f64::INFINITY, 1.0, &mut rng).unwrap();
        assert_eq!(idx, 1);
        let tie = report_noisy_max(&[2.0, 7.0, 7.0], f64::INFINITY, 1.0, &mut rng).unwrap();
        assert_eq!(tie, 1);
    }

    #[test]
    fn rnm_single_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for eps in [0.01, 1.0, f64::INFINITY] {
            assert_eq!(report_noisy_max(&[3.0], eps, 1.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn rnm_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            report_noisy_max(&[], 1.0, 1.0, &mut rng),
            Err(Error::Empty(_))
        ));
        assert!(report_noisy_max(&[1.0, 2.0], 1.0, 0.0, &mut rng).is_err());
        assert!(report_noisy_max(&[1.0, 2.0], -1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn rnm_accuracy_increases_with_epsilon() {
        let trials = 100_000;
        let mut rates = Vec::new();
        for eps in [0.1, 1.0, 10.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let hits = (0..trials)
                .filter(|_| report_noisy_max(&[-1.0, -2.0], eps, 1.0, &mut rng).unwrap() == 0)
                .count();
            rates.push(hits as f64 / trials as f64);
        }
        assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");
        // Two-candidate closed form: P(L1 - L2 > -gap) = 1 - ½e^{-g/b}(1 + g/(2b)).
        for (eps, rate) in [0.1, 1.0, 10.0].iter().zip(&rates) {
            let g: f64 = *eps;
            let expected = 1.0 - 0.5 * (-g).exp() * (1.0 + g / 2.0);
            assert!(
                (rate - expected).abs() < 0.01,
                "eps {eps}: {rate} vs {expected}"
            );
        }
    }

    #[test]
    fn rnm_shift_invariance_with_shared_seeds() {
        let scores = [-3.0, -1.5, -2.0, -1.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 100.0).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let a = report_noisy_max(&scores, 0.7, 1.0, &mut r1).unwrap();
            let b = report_noisy_max(&shifted, 0.7, 1.0, &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn accountant_regime() {
        assert!(accountant_regime_holds(1.0, 50.0, 1000, 1000));
        assert!(!accountant_regime_holds(10.0, 1.0, 1000, 10));
    }
}
