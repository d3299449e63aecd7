use rayon::prelude::*;
use serde::Deserialize;

use super::{
    default_delta, default_nu, default_reference_iterations, fmt_f64, require, ClipCandidate,
    CsvReport, DataSource,
};
use crate::error::Result;
use crate::linalg::{mean, std_dev};
use crate::lipschitz::build_profile;
use crate::losses::Problem;
use crate::optimizer::{reference_minimum, run_dp_sgd, DpSgdConfig};
use crate::privacy::{noise_variance, PrivacyBudget};

/// Clip-norm sweep: for each candidate `τ`, every step size in the grid is
/// run over all seeds and the best mean metric over step sizes is kept.
#[derive(Debug, Clone, Deserialize)]
pub struct SweepSpec {
    pub data: DataSource,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub candidates: Vec<ClipCandidate>,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    pub expected_batch: f64,
    pub step_sizes: Vec<f64>,
    /// Run without Gaussian noise (non-private baseline).
    #[serde(default)]
    pub disable_noise: bool,
    #[serde(default = "default_reference_iterations")]
    pub reference_iterations: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        PrivacyBudget::with_nu(self.epsilon, self.delta, self.nu)?;
        require(!self.seeds.is_empty(), "seed list is empty")?;
        require(
            !self.candidates.is_empty(),
            "clip-norm candidate list is empty",
        )?;
        require(!self.step_sizes.is_empty(), "step-size grid is empty")?;
        require(self.iterations > 0, "iterations must be positive")?;
        require(
            self.step_sizes.iter().all(|e| *e > 0.0 && e.is_finite()),
            "step sizes must be positive",
        )?;
        require(
            self.disable_noise || !self.candidates.contains(&ClipCandidate::Infinite),
            "an infinite clip norm requires disable_noise",
        )
    }
}

/// What `metric` measures in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Held-out accuracy of the final iterate; larger is better.
    TestAccuracy,
    /// `f(w_T) − f_ref` on the training set; smaller is better.
    TrainSuboptimality,
}

impl MetricKind {
    fn better(&self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::TestAccuracy => a > b,
            MetricKind::TrainSuboptimality => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub tau: f64,
    pub eta: f64,
    pub seed: u64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub tau_kind: String,
    pub eta_best: f64,
    pub mean_metric: f64,
    pub std_metric: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub metric: MetricKind,
    pub reference_objective: f64,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

pub fn cmd_sweep_clip(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let budget = PrivacyBudget::with_nu(spec.epsilon, spec.delta, spec.nu)?;
    let loaded = spec.data.load()?;
    let problem = &loaded.problem;
    let n = problem.num_samples();
    let dim = problem.dim();
    require(
        spec.expected_batch > 0.0 && spec.expected_batch <= n as f64,
        format!("expected batch must lie in (0, {n}]"),
    )?;
    let profile = build_profile(problem)?;
    let (_, f_ref) = reference_minimum(problem, None, spec.reference_iterations)?;
    let metric = if loaded.test.is_some() {
        MetricKind::TestAccuracy
    } else {
        MetricKind::TrainSuboptimality
    };

    let taus: Vec<f64> = spec
        .candidates
        .iter()
        .map(|c| c.resolve(&profile))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize, u64)> = (0..taus.len())
        .flat_map(|ti| {
            (0..spec.step_sizes.len())
                .flat_map(move |ei| spec.seeds.iter().map(move |&s| (ti, ei, s)))
        })
        .collect();

    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(ti, ei, seed)| {
            let tau = taus[ti];
            let eta = spec.step_sizes[ei];
            let sigma_sq = if spec.disable_noise {
                0.0
            } else {
                noise_variance(spec.iterations, tau, n, dim, &budget)?.sigma_sq
            };
            let mut cfg = DpSgdConfig::new(spec.iterations, eta, tau, spec.expected_batch);
            cfg.noise_variance = sigma_sq;
            cfg.seed = seed;
            let run = run_dp_sgd(problem, &cfg)?;
            let value = match &loaded.test {
                Some(test) => problem.accuracy_on(&run.w_last, test),
                None => problem.loss(&run.w_last) - f_ref,
            };
            Ok(SweepCell {
                tau,
                eta,
                seed,
                metric: value,
            })
        })
        .collect::<Result<_>>()?;

    let per_tau = spec.step_sizes.len() * spec.seeds.len();
    let rows = spec
        .candidates
        .iter()
        .enumerate()
        .map(|(ti, cand)| {
            let block = &cells[ti * per_tau..(ti + 1) * per_tau];
            let mut best: Option<(f64, f64, f64)> = None;
            for (ei, &eta) in spec.step_sizes.iter().enumerate() {
                let vals: Vec<f64> = block[ei * spec.seeds.len()..(ei + 1) * spec.seeds.len()]
                    .iter()
                    .map(|c| c.metric)
                    .collect();
                let (m, s) = (mean(&vals), std_dev(&vals));
                if best.is_none_or(|(_, bm, _)| metric.better(m, bm)) {
                    best = Some((eta, m, s));
                }
            }
            let (eta_best, mean_metric, std_metric) = best.expect("nonempty step-size grid");
            SweepRow {
                tau: taus[ti],
                tau_kind: cand.kind_label(),
                eta_best,
                mean_metric,
                std_metric,
            }
        })
        .collect();

    Ok(SweepReport {
        metric,
        reference_objective: f_ref,
        cells,
        rows,
    })
}

impl CsvReport for SweepReport {
    fn header(&self) -> &'static [&'static str] {
        &["tau", "tau_kind", "eta_best", "mean_metric", "std_metric"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.tau),
                    r.tau_kind.clone(),
                    fmt_f64(r.eta_best),
                    fmt_f64(r.mean_metric),
                    fmt_f64(r.std_metric),
                ]
            })
            .collect()
    }
}
