use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use super::{default_delta, default_nu, fmt_f64, require, CsvReport};
use crate::error::Result;
use crate::linalg::{dist, norm};
use crate::losses::{lower_bound_value, packing_vector, LowerBoundProblem, Problem, QvSpec};
use crate::optimizer::{run_dp_sgd, schedule_unconstrained_convex, DpSgdConfig};
use crate::privacy::{compute_phi, noise_variance, PrivacyBudget};

/// Numerical checks and a DP-SGD run on the two-atom heavy-tailed
/// instance.
#[derive(Debug, Clone, Deserialize)]
pub struct LowerBoundSpec {
    pub d: usize,
    /// Atom probability; defaults to `2√(d ln(1/δ))/(nε)`.
    #[serde(default)]
    pub p: Option<f64>,
    pub k: f64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub iterations: usize,
    pub expected_batch: f64,
    /// Grid spacing for the `d = 2` minimizer check.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

fn default_grid_step() -> f64 {
    1e-3
}

impl LowerBoundSpec {
    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::with_nu(self.epsilon, self.delta, self.nu)?;
        require(
            self.d >= 2 && self.d.is_multiple_of(2),
            format!("d must be even and ≥ 2, got {}", self.d),
        )?;
        require(self.k > 1.0, "k must exceed 1")?;
        require(self.n >= 1, "n must be positive")?;
        require(!self.seeds.is_empty(), "seed list is empty")?;
        require(self.iterations > 0, "iterations must be positive")?;
        require(
            self.expected_batch > 0.0 && self.expected_batch <= self.n as f64,
            "expected batch must lie in (0, n]",
        )?;
        require(
            self.grid_step > 0.0 && self.grid_step <= 0.5,
            "grid_step must lie in (0, 0.5]",
        )?;
        let p = self.atom_probability();
        require(
            p > 0.0 && p < 0.5,
            format!("atom probability must lie in (0, 1/2), got {p}"),
        )
    }

    pub fn atom_probability(&self) -> f64 {
        self.p.unwrap_or_else(|| {
            2.0 * (self.d as f64 * (1.0 / self.delta).ln()).sqrt() / (self.n as f64 * self.epsilon)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundRow {
    pub seed: u64,
    pub xbar_norm: f64,
    pub degenerate: bool,
    /// Distance from the numerically located minimizer to `v/‖v‖`; NaN
    /// when the objective is identically zero.
    pub argmin_gap: f64,
    pub empirical_moment: f64,
    pub moment_target: f64,
    pub risk: f64,
    pub reference_scale: f64,
}

#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
}

/// Grid minimizer of `f` over `[-2, 2]²`.
fn grid_argmin_2d(f: impl Fn(&[f64]) -> f64, step: f64) -> Vec<f64> {
    let steps = (4.0 / step).round() as usize;
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    let mut w = [0.0; 2];
    for i in 0..=steps {
        w[0] = -2.0 + i as f64 * step;
        for j in 0..=steps {
            w[1] = -2.0 + j as f64 * step;
            let v = f(&w);
            if v < best.0 {
                best = (v, w.to_vec());
            }
        }
    }
    best.1
}

/// Shrinking-radius random search from the origin.
fn random_search<R: Rng + ?Sized>(f: impl Fn(&[f64]) -> f64, d: usize, rng: &mut R) -> Vec<f64> {
    let mut best = vec![0.0; d];
    let mut best_f = f(&best);
    let mut radius = 1.0;
    for _ in 0..60 {
        for _ in 0..200 {
            let cand: Vec<f64> = best
                .iter()
                .map(|b| b + radius * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let v = f(&cand);
            if v < best_f {
                best_f = v;
                best = cand;
            }
        }
        radius *= 0.7;
    }
    best
}

pub fn cmd_lower_bound_demo(spec: &LowerBoundSpec) -> Result<LowerBoundReport> {
    spec.validate()?;
    let budget = PrivacyBudget::with_nu(spec.epsilon, spec.delta, spec.nu)?;
    let p = spec.atom_probability();
    let phi = compute_phi(spec.n, spec.d, &budget)?.value;

    let rows = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = packing_vector(spec.d, &mut rng)?;
            let qv = QvSpec::new(v, p, spec.k)?;
            let problem = LowerBoundProblem::draw(&qv, spec.n, &mut rng)?;
            let xbar = problem.sample_mean();
            let xbar_norm = norm(&xbar);
            let degenerate = xbar_norm == 0.0;
            let w_star = qv.minimizer();

            let argmin_gap = if degenerate {
                f64::NAN
            } else if spec.d == 2 {
                dist(
                    &grid_argmin_2d(|w| lower_bound_value(w, &xbar), spec.grid_step),
                    &w_star,
                )
            } else {
                dist(
                    &random_search(|w| lower_bound_value(w, &xbar), spec.d, &mut rng),
                    &w_star,
                )
            };

            let empirical_moment = problem
                .samples()
                .iter()
                .map(|x| norm(x).powf(spec.k))
                .sum::<f64>()
                / spec.n as f64;
            let v_norm = norm(qv.v());
            let moment_target = v_norm.powf(spec.k);

            let g = 3.0 * v_norm;
            let sched = schedule_unconstrained_convex(g, 1.0, 1.0, spec.iterations, phi, spec.k)?;
            let sigma_sq =
                noise_variance(spec.iterations, sched.clip_norm, spec.n, spec.d, &budget)?.sigma_sq;
            let mut cfg = DpSgdConfig::new(
                spec.iterations,
                sched.step_size,
                sched.clip_norm,
                spec.expected_batch,
            );
            cfg.noise_variance = sigma_sq;
            cfg.seed = rng.random();
            let run = run_dp_sgd(&problem, &cfg)?;
            let f_star = if degenerate {
                0.0
            } else {
                problem.loss(&w_star)
            };
            let risk = problem.loss(&run.w_priv) - f_star;

            Ok(LowerBoundRow {
                seed,
                xbar_norm,
                degenerate,
                argmin_gap,
                empirical_moment,
                moment_target,
                risk,
                reference_scale: v_norm * phi.powf(1.0 - 1.0 / spec.k),
            })
        })
        .collect::<Result<_>>()?;
    Ok(LowerBoundReport { rows })
}

impl CsvReport for LowerBoundReport {
    fn header(&self) -> &'static [&'static str] {
        &[
            "seed",
            "xbar_norm",
            "degenerate",
            "argmin_gap",
            "empirical_moment",
            "moment_target",
            "risk",
            "reference_scale",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    fmt_f64(r.xbar_norm),
                    r.degenerate.to_string(),
                    fmt_f64(r.argmin_gap),
                    fmt_f64(r.empirical_moment),
                    fmt_f64(r.moment_target),
                    fmt_f64(r.risk),
                    fmt_f64(r.reference_scale),
                ]
            })
            .collect()
    }
}
