use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use super::{default_delta, default_nu, default_reference_iterations, fmt_f64, require, CsvReport};
use crate::error::Result;
use crate::linalg::{median, norm};
use crate::lipschitz::build_profile;
use crate::losses::{LogisticProblem, PlantedLogistic, Problem, RadialLaw};
use crate::optimizer::{
    optimization_risk, reference_minimum, run_dp_sgd, schedule_unconstrained_convex, DpSgdConfig,
    RiskKind,
};
use crate::privacy::{compute_phi, noise_variance, PrivacyBudget};

/// Risk of DP-SGD under the unconstrained convex schedule on heavy-tailed
/// synthetic data, as `n` (and hence `φ`) varies. The datasets for
/// different `n` share one labelling rule and are nested.
#[derive(Debug, Clone, Deserialize)]
pub struct PhiScalingSpec {
    pub n_values: Vec<usize>,
    pub d: usize,
    #[serde(default = "default_classes")]
    pub m: usize,
    /// Moment order `k`; feature norms are Pareto with shape `k + 1`.
    pub tail_k: f64,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Upper bound on the iteration count `⌈1/φ²⌉`.
    pub max_iterations: usize,
    pub expected_batch: f64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_reference_iterations")]
    pub reference_iterations: usize,
}

fn default_classes() -> usize {
    2
}

fn default_label_noise() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    1.0
}

impl PhiScalingSpec {
    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::with_nu(self.epsilon, self.delta, self.nu)?;
        require(!self.n_values.is_empty(), "n list is empty")?;
        require(!self.seeds.is_empty(), "seed list is empty")?;
        require(self.tail_k > 1.0, "tail_k must exceed 1")?;
        require(self.max_iterations > 0, "max_iterations must be positive")?;
        require(
            self.n_values
                .iter()
                .all(|&n| self.expected_batch > 0.0 && self.expected_batch <= n as f64),
            "expected batch must lie in (0, n] for every n",
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiScalingRow {
    pub n: usize,
    pub phi: f64,
    pub k: f64,
    pub median_risk: f64,
    pub iterations: usize,
    pub clip_norm: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct PhiScalingReport {
    pub rows: Vec<PhiScalingRow>,
}

pub fn cmd_phi_scaling(spec: &PhiScalingSpec) -> Result<PhiScalingReport> {
    spec.validate()?;
    let budget = PrivacyBudget::with_nu(spec.epsilon, spec.delta, spec.nu)?;
    let rows = spec
        .n_values
        .iter()
        .map(|&n| phi_row(spec, &budget, n))
        .collect::<Result<_>>()?;
    Ok(PhiScalingReport { rows })
}

fn phi_row(spec: &PhiScalingSpec, budget: &PrivacyBudget, n: usize) -> Result<PhiScalingRow> {
    let gen = PlantedLogistic {
        n,
        d: spec.d,
        m: spec.m,
        radial: RadialLaw::Pareto {
            tail_k: spec.tail_k,
        },
        min_margin: 0.0,
        label_noise: spec.label_noise,
    };
    // Same rule and random stream for every n, so smaller samples are
    // prefixes of larger ones.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.data_seed);
    let rule = gen.sample_rule(&mut rng);
    let problem = LogisticProblem::new(gen.generate_with_rule(&rule, n, &mut rng)?);
    let dim = problem.dim();
    let phi = compute_phi(n, dim, budget)?.value;
    let iterations = ((1.0 / (phi * phi)).ceil() as usize).clamp(1, spec.max_iterations);
    let k = spec.tail_k;
    let g = build_profile(&problem)?.moment(k).powf(1.0 / k);
    let (w_ref, f_ref) = reference_minimum(&problem, None, spec.reference_iterations)?;
    let c = norm(&w_ref).max(1e-12);
    let sched = schedule_unconstrained_convex(g, spec.gamma, c, iterations, phi, k)?;
    let sigma_sq = noise_variance(iterations, sched.clip_norm, n, dim, budget)?.sigma_sq;

    let runs = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = DpSgdConfig::new(
                iterations,
                sched.step_size,
                sched.clip_norm,
                spec.expected_batch,
            );
            cfg.noise_variance = sigma_sq;
            cfg.seed = seed;
            let run = run_dp_sgd(&problem, &cfg)?;
            optimization_risk(
                &problem,
                std::slice::from_ref(&run),
                RiskKind::Convex { f_star: f_ref },
            )
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(PhiScalingRow {
        n,
        phi,
        k,
        median_risk: median(&runs),
        iterations,
        clip_norm: sched.clip_norm,
        step_size: sched.step_size,
    })
}

impl CsvReport for PhiScalingReport {
    fn header(&self) -> &'static [&'static str] {
        &["n", "phi", "k", "median_risk"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_f64(r.phi),
                    fmt_f64(r.k),
                    fmt_f64(r.median_risk),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_n_and_phi_recomputes() {
        let spec = PhiScalingSpec {
            n_values: vec![100, 400],
            d: 3,
            m: 2,
            tail_k: 2.0,
            label_noise: 0.1,
            epsilon: 2.0,
            delta: 1e-5,
            nu: 1.0,
            seeds: vec![1, 2, 3],
            gamma: 1.0,
            max_iterations: 50,
            expected_batch: 20.0,
            data_seed: 4,
            reference_iterations: 300,
        };
        let rep = cmd_phi_scaling(&spec).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let budget = PrivacyBudget::new(2.0, 1e-5).unwrap();
        for r in &rep.rows {
            let dim = (spec.d + 1) * spec.m;
            let phi = (dim as f64 * budget.log_inv_delta()).sqrt() / (r.n as f64 * 2.0);
            assert!((r.phi - phi).abs() <= 1e-15 * phi);
            assert!(r.median_risk.is_finite());
        }
        assert_eq!(
            rep.to_csv_string().unwrap().lines().next(),
            Some("n,phi,k,median_risk")
        );
    }

    #[test]
    fn datasets_are_nested() {
        let gen = PlantedLogistic {
            n: 1,
            d: 3,
            m: 2,
            radial: RadialLaw::Pareto { tail_k: 2.0 },
            min_margin: 0.0,
            label_noise: 0.1,
        };
        let draw = |n| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let rule = gen.sample_rule(&mut rng);
            gen.generate_with_rule(&rule, n, &mut rng).unwrap()
        };
        let (small, large) = (draw(50), draw(200));
        for i in 0..50 {
            assert_eq!(small.row(i), large.row(i));
            assert_eq!(small.label(i), large.label(i));
        }
    }
}
