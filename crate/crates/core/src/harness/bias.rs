use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::{fmt_f64, require, CsvReport};
use crate::clipping::{
    bias_bound_corollary, bias_bound_lemma, clipping_bias_exact, DiscreteVectorDistribution,
};
use crate::error::Result;

/// Checks `exact bias ≤ lemma bound ≤ corollary bound` on random discrete
/// distributions over a grid of clip norms.
#[derive(Debug, Clone, Deserialize)]
pub struct BiasOracleSpec {
    pub count: usize,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Clip norms as multiples of each instance's largest atom norm.
    #[serde(default = "default_tau_factors")]
    pub tau_factors: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_p_values() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

fn default_tau_factors() -> Vec<f64> {
    vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5]
}

fn default_tolerance() -> f64 {
    1e-9
}

impl BiasOracleSpec {
    pub fn validate(&self) -> Result<()> {
        require(self.count >= 1, "count must be at least 1")?;
        require(!self.p_values.is_empty(), "p list is empty")?;
        require(
            self.p_values.iter().all(|p| *p > 1.0),
            "every p must exceed 1",
        )?;
        require(!self.tau_factors.is_empty(), "tau grid is empty")?;
        require(
            self.tau_factors.iter().all(|t| *t > 0.0 && t.is_finite()),
            "tau factors must be positive",
        )?;
        require(self.tolerance >= 0.0, "tolerance must be nonnegative")
    }
}

/// A random distribution with 1–6 atoms in dimension 1–4. Atom scales span
/// several orders of magnitude and some atoms may be zero.
pub fn random_discrete_distribution<R: Rng + ?Sized>(
    rng: &mut R,
) -> Result<DiscreteVectorDistribution> {
    let atoms = rng.random_range(1..=6);
    let dim = rng.random_range(1..=4);
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let list = weights
        .into_iter()
        .map(|w| {
            let v = if rng.random_bool(0.15) {
                vec![0.0; dim]
            } else {
                let scale = rng.random_range(-2.0f64..2.0).exp();
                (0..dim)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            (v, w / total)
        })
        .collect();
    DiscreteVectorDistribution::new(list)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasOracleRow {
    pub instance: String,
    pub p: f64,
    pub tau: f64,
    pub exact_bias: f64,
    pub lemma_bound: f64,
    pub corollary_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BiasOracleReport {
    pub rows: Vec<BiasOracleRow>,
}

impl BiasOracleReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }
}

fn check_instance(
    name: &str,
    dist: &DiscreteVectorDistribution,
    taus: &[f64],
    spec: &BiasOracleSpec,
    rows: &mut Vec<BiasOracleRow>,
) -> Result<()> {
    for &p in &spec.p_values {
        for &tau in taus {
            let exact = clipping_bias_exact(dist, tau)?;
            let lemma = bias_bound_lemma(dist, tau, p)?;
            let corollary = bias_bound_corollary(dist, tau, p)?;
            let tol = |x: f64| spec.tolerance * x.abs().max(1.0);
            let pass = exact <= lemma + tol(lemma) && lemma <= corollary + tol(corollary);
            rows.push(BiasOracleRow {
                instance: name.to_string(),
                p,
                tau,
                exact_bias: exact,
                lemma_bound: lemma,
                corollary_bound: corollary,
                pass,
            });
        }
    }
    Ok(())
}

pub fn cmd_bias_oracle(spec: &BiasOracleSpec) -> Result<BiasOracleReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    let two_atom = DiscreteVectorDistribution::new(vec![(vec![0.0], 0.5), (vec![10.0], 0.5)])?;
    check_instance("two-atom", &two_atom, &[1.0], spec, &mut rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.count {
        let dist = random_discrete_distribution(&mut rng)?;
        let scale = match dist.max_norm() {
            m if m > 0.0 => m,
            _ => 1.0,
        };
        let taus: Vec<f64> = spec.tau_factors.iter().map(|f| f * scale).collect();
        check_instance(&format!("random-{i}"), &dist, &taus, spec, &mut rows)?;
    }
    Ok(BiasOracleReport { rows })
}

impl CsvReport for BiasOracleReport {
    fn header(&self) -> &'static [&'static str] {
        &[
            "instance",
            "p",
            "tau",
            "exact_bias",
            "lemma_bound",
            "corollary_bound",
            "pass",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.instance.clone(),
                    fmt_f64(r.p),
                    fmt_f64(r.tau),
                    fmt_f64(r.exact_bias),
                    fmt_f64(r.lemma_bound),
                    fmt_f64(r.corollary_bound),
                    r.pass.to_string(),
                ]
            })
            .collect()
    }

    fn failure(&self) -> Option<String> {
        match self.failures() {
            0 => None,
            k => Some(format!(
                "{k} of {} bias-chain checks failed",
                self.rows.len()
            )),
        }
    }
}
