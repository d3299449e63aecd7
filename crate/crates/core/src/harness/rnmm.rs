use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use super::{
    de_f64_or_inf, default_delta, default_nu, default_reference_iterations, fmt_f64, require,
    CsvReport, DataSource,
};
use crate::error::{Error, Result};
use crate::lipschitz::{build_profile, LipschitzProfile};
use crate::losses::{LogisticProblem, Problem};
use crate::optimizer::{reference_minimum, run_dp_sgd, DpSgdConfig};
use crate::privacy::{noise_variance, report_noisy_max, PrivacyBudget};

/// Private estimation of `G₁` followed by DP-SGD with the estimate as the
/// clip norm, compared against the same run with the exact `G₁`.
#[derive(Debug, Clone, Deserialize)]
pub struct RnmmSpec {
    pub data: DataSource,
    /// If given, `epsilon_rnmm + epsilon_dpsgd` must equal it.
    #[serde(default)]
    pub epsilon_total: Option<f64>,
    #[serde(deserialize_with = "de_f64_or_inf")]
    pub epsilon_rnmm: f64,
    pub epsilon_dpsgd: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    pub expected_batch: f64,
    pub step_size: f64,
    /// Upper clamp on the Lipschitz constants; also the selection
    /// sensitivity.
    #[serde(default)]
    pub rnmm_clamp: Option<f64>,
    /// Public guesses of typical Lipschitz constants; the clamp defaults to
    /// their 99.9th percentile.
    #[serde(default)]
    pub public_lipschitz_prior: Option<Vec<f64>>,
    #[serde(default = "default_reference_iterations")]
    pub reference_iterations: usize,
}

impl RnmmSpec {
    pub fn validate(&self) -> Result<()> {
        require(self.epsilon_rnmm > 0.0, "epsilon_rnmm must be positive")?;
        PrivacyBudget::with_nu(self.epsilon_dpsgd, self.delta, self.nu)?;
        if let Some(total) = self.epsilon_total {
            let sum = self.epsilon_rnmm + self.epsilon_dpsgd;
            require(
                (sum - total).abs() <= 1e-9 * total.abs().max(1.0),
                format!(
                    "budget split {} + {} does not add up to {total}",
                    self.epsilon_rnmm, self.epsilon_dpsgd
                ),
            )?;
        }
        require(!self.seeds.is_empty(), "seed list is empty")?;
        require(self.iterations > 0, "iterations must be positive")?;
        require(
            self.step_size > 0.0 && self.step_size.is_finite(),
            "step size must be positive",
        )?;
        self.clamp().map(|_| ())
    }

    /// The clamp bound `c` used for both the scores and the sensitivity.
    pub fn clamp(&self) -> Result<f64> {
        let c = match (&self.rnmm_clamp, &self.public_lipschitz_prior) {
            (Some(c), _) => *c,
            (None, Some(prior)) => LipschitzProfile::from_constants(prior)?.percentile(99.9)?,
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "rnmm needs rnmm_clamp or public_lipschitz_prior".into(),
                ))
            }
        };
        require(
            c > 0.0 && c.is_finite(),
            format!("clamp must be positive and finite, got {c}"),
        )?;
        Ok(c)
    }
}

/// Runs Report Noisy Max on `−min(Gᵢ, clamp)` with sensitivity `clamp` and
/// returns the selected index and its clamped constant.
pub fn rnmm_select<R: rand::Rng + ?Sized>(
    constants: &[f64],
    clamp: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let scores: Vec<f64> = constants.iter().map(|g| -g.min(clamp)).collect();
    let idx = report_noisy_max(&scores, epsilon, clamp, rng)?;
    Ok((idx, constants[idx].min(clamp)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnmmRow {
    pub seed: u64,
    pub tau_selected: f64,
    pub tau_oracle: f64,
    pub eps_rnmm: f64,
    pub eps_dpsgd: f64,
    pub metric_with: f64,
    pub metric_without: f64,
}

#[derive(Debug, Clone)]
pub struct RnmmReport {
    pub rows: Vec<RnmmRow>,
    /// Whether the metrics are held-out accuracies (else training
    /// suboptimality).
    pub test_accuracy: bool,
}

pub fn cmd_rnmm_pipeline(spec: &RnmmSpec) -> Result<RnmmReport> {
    spec.validate()?;
    let clamp = spec.clamp()?;
    let budget = PrivacyBudget::with_nu(spec.epsilon_dpsgd, spec.delta, spec.nu)?;
    let loaded = spec.data.load()?;
    let problem = &loaded.problem;
    let n = problem.num_samples();
    require(
        spec.expected_batch > 0.0 && spec.expected_batch <= n as f64,
        format!("expected batch must lie in (0, {n}]"),
    )?;
    let constants = problem.lipschitz_constants();
    let g1 = build_profile(problem)?.min();
    let f_ref = if loaded.test.is_none() {
        reference_minimum(problem, None, spec.reference_iterations)?.1
    } else {
        0.0
    };

    let metric = |problem: &LogisticProblem, tau: f64, seed: u64| -> Result<f64> {
        let sigma_sq = noise_variance(spec.iterations, tau, n, problem.dim(), &budget)?.sigma_sq;
        let mut cfg = DpSgdConfig::new(spec.iterations, spec.step_size, tau, spec.expected_batch);
        cfg.noise_variance = sigma_sq;
        cfg.seed = seed;
        let run = run_dp_sgd(problem, &cfg)?;
        Ok(match &loaded.test {
            Some(test) => problem.accuracy_on(&run.w_last, test),
            None => problem.loss(&run.w_last) - f_ref,
        })
    };

    let rows = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, tau_selected) = rnmm_select(&constants, clamp, spec.epsilon_rnmm, &mut rng)?;
            Ok(RnmmRow {
                seed,
                tau_selected,
                tau_oracle: g1,
                eps_rnmm: spec.epsilon_rnmm,
                eps_dpsgd: spec.epsilon_dpsgd,
                metric_with: metric(problem, tau_selected, seed)?,
                metric_without: metric(problem, g1, seed)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(RnmmReport {
        rows,
        test_accuracy: loaded.test.is_some(),
    })
}

impl CsvReport for RnmmReport {
    fn header(&self) -> &'static [&'static str] {
        &[
            "seed",
            "tau_selected",
            "tau_oracle",
            "eps_rnmm",
            "eps_dpsgd",
            "metric_with",
            "metric_without",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    fmt_f64(r.tau_selected),
                    fmt_f64(r.tau_oracle),
                    fmt_f64(r.eps_rnmm),
                    fmt_f64(r.eps_dpsgd),
                    fmt_f64(r.metric_with),
                    fmt_f64(r.metric_without),
                ]
            })
            .collect()
    }
}
