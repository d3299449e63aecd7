//! Synthetic classification data from a planted linear rule.

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, norm};

/// Law of the feature norm `r` in `x = r · u`, `u` uniform on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RadialLaw {
    /// `r ≡ 1`.
    Unit,
    /// `r ~ Pareto(scale 1, shape tail_k + 1)`, so `E[r^tail_k] = tail_k + 1`.
    /// An infinite `tail_k` degenerates to `Unit`.
    Pareto { tail_k: f64 },
    /// `r ~ Uniform[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl RadialLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            RadialLaw::Unit => Ok(()),
            RadialLaw::Pareto { tail_k } if tail_k > 1.0 => Ok(()),
            RadialLaw::Pareto { tail_k } => domain(format!("tail_k must exceed 1, got {tail_k}")),
            RadialLaw::Uniform { lo, hi } if lo >= 0.0 && hi >= lo && hi.is_finite() => Ok(()),
            RadialLaw::Uniform { lo, hi } => domain(format!("bad radial range [{lo}, {hi}]")),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RadialLaw::Unit => 1.0,
            RadialLaw::Pareto { tail_k } if tail_k.is_infinite() => 1.0,
            RadialLaw::Pareto { tail_k } => Pareto::new(1.0, tail_k + 1.0)
                .expect("validated shape")
                .sample(rng),
            RadialLaw::Uniform { lo, hi } if lo == hi => lo,
            RadialLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }
}

/// Generator for an `m`-class problem whose labels are the argmax of a
/// random linear rule applied to `(x, 1)`. The bias coordinate is always
/// appended to the emitted rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLogistic {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub radial: RadialLaw,
    /// Reject points whose normalized score gap to the runner-up class is
    /// below this value.
    #[serde(default)]
    pub min_margin: f64,
    /// Probability of replacing a label by a uniformly random class.
    #[serde(default)]
    pub label_noise: f64,
}

/// A generated dataset together with the rule that labelled it.
#[derive(Debug, Clone)]
pub struct PlantedSample {
    pub data: Dataset,
    /// `m × (d + 1)` row-major.
    pub rule: Vec<f64>,
}

impl PlantedLogistic {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return domain("n and d must be positive");
        }
        if self.m < 2 {
            return domain(format!("need at least two classes, got {}", self.m));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return domain(format!(
                "label_noise must lie in [0, 1], got {}",
                self.label_noise
            ));
        }
        if !(self.min_margin >= 0.0 && self.min_margin.is_finite()) {
            return domain(format!(
                "min_margin must be finite and ≥ 0, got {}",
                self.min_margin
            ));
        }
        self.radial.validate()
    }

    /// Draws a fresh rule with i.i.d. standard normal entries.
    pub fn sample_rule<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.m * (self.d + 1))
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PlantedSample> {
        self.validate()?;
        let rule = self.sample_rule(rng);
        let data = self.generate_with_rule(&rule, self.n, rng)?;
        Ok(PlantedSample { data, rule })
    }

    /// `count` fresh points labelled by an existing rule, e.g. a test split.
    pub fn generate_with_rule<R: Rng + ?Sized>(
        &self,
        rule: &[f64],
        count: usize,
        rng: &mut R,
    ) -> Result<Dataset> {
        self.validate()?;
        let width = self.d + 1;
        if rule.len() != self.m * width {
            return Err(Error::DimensionMismatch {
                expected: self.m * width,
                got: rule.len(),
            });
        }
        if count == 0 {
            return Err(Error::Empty("requested an empty sample"));
        }
        let max_attempts = count.saturating_mul(1000).max(10_000);
        let mut rows = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        let mut attempts = 0usize;
        let mut ext = vec![0.0; width];
        while rows.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::Degenerate(format!(
                    "margin {} rejected too many points",
                    self.min_margin
                )));
            }
            let x = self.sample_point(rng);
            ext[..self.d].copy_from_slice(&x);
            ext[self.d] = 1.0;
            let (top, gap) = top_two(rule, &ext, self.m);
            if gap < self.min_margin * norm(&ext) {
                continue;
            }
            let y = if self.label_noise > 0.0 && rng.random_bool(self.label_noise) {
                rng.random_range(0..self.m)
            } else {
                top
            };
            rows.push(x);
            labels.push(y);
        }
        Dataset::with_classes(rows, labels, self.m, true)
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let r = self.radial.sample(rng);
        let mut u: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
        let mut un = norm(&u);
        while un == 0.0 {
            u = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
            un = norm(&u);
        }
        u.iter().map(|c| r * c / un).collect()
    }
}

fn top_two(rule: &[f64], x: &[f64], m: usize) -> (usize, f64) {
    let w = x.len();
    let scores: Vec<f64> = (0..m).map(|j| dot(&rule[j * w..(j + 1) * w], x)).collect();
    let mut best = 0;
    for j in 1..m {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    (best, scores[best] - runner_up)
}

/// Planted-rule dataset with Pareto feature norms of shape `tail_k + 1`
/// and noiseless labels. `tail_k = ∞` gives unit-norm features.
pub fn heavy_tailed_logistic_dataset<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    m: usize,
    tail_k: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let gen = PlantedLogistic {
        n,
        d,
        m,
        radial: RadialLaw::Pareto { tail_k },
        min_margin: 0.0,
        label_noise: 0.0,
    };
    Ok(gen.generate(rng)?.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LogisticProblem, Problem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn infinite_tail_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = heavy_tailed_logistic_dataset(200, 4, 3, f64::INFINITY, &mut rng).unwrap();
        for i in 0..ds.len() {
            assert!((norm(ds.raw_row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_moment_matches_pareto_formula() {
        // k = 2: E[G²] = 2 · E[r² + 1] = 2 · (a/(a−2) + 1) with a = 3.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 2.0;
        let ds = heavy_tailed_logistic_dataset(100_000, 3, 2, k, &mut rng).unwrap();
        let p = LogisticProblem::new(ds);
        let g = p.lipschitz_constants();
        let emp = g.iter().map(|v| v.powf(k)).sum::<f64>() / g.len() as f64;
        let a = k + 1.0;
        let target = 2.0 * (a / (a - k) + 1.0);
        assert!(emp.is_finite());
        assert!((emp - target).abs() < 0.1 * target, "{emp} vs {target}");
    }

    #[test]
    fn labels_follow_rule_without_noise() {
        let gen = PlantedLogistic {
            n: 300,
            d: 5,
            m: 3,
            radial: RadialLaw::Uniform { lo: 1.0, hi: 10.0 },
            min_margin: 0.05,
            label_noise: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = gen.generate(&mut rng).unwrap();
        let p = LogisticProblem::new(s.data.clone());
        assert_eq!(p.accuracy_on(&s.rule, &s.data), 1.0);
        for i in 0..s.data.len() {
            let r = norm(s.data.raw_row(i));
            assert!((1.0..=10.0).contains(&r));
        }
    }

    #[test]
    fn separable_data_trains_to_small_loss() {
        let gen = PlantedLogistic {
            n: 200,
            d: 3,
            m: 2,
            radial: RadialLaw::Unit,
            min_margin: 0.1,
            label_noise: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = gen.generate(&mut rng).unwrap();
        let p = LogisticProblem::new(s.data);
        let mut w = vec![0.0; p.dim()];
        let step = 1.0 / p.smoothness().unwrap();
        let start = p.loss(&w);
        for _ in 0..5000 {
            let g = p.grad(&w);
            crate::linalg::axpy(-step, &g, &mut w);
        }
        assert!(p.loss(&w) < 0.05 * start, "{} vs {start}", p.loss(&w));
        assert_eq!(p.accuracy_on(&w, p.dataset()), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(heavy_tailed_logistic_dataset(10, 2, 2, 1.0, &mut rng).is_err());
        assert!(heavy_tailed_logistic_dataset(10, 2, 1, 2.0, &mut rng).is_err());
    }
}
