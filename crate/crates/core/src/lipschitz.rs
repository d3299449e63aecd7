//! Per-sample Lipschitz statistics and the quantities built from them:
//! percentile clip-norm candidates, the interpolation gap `Δ(w*)`, and a
//! sampled estimate of the clip-norm improvement ratio `α(τ)`.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::losses::Problem;

/// Suboptimality at or below which a point is treated as a minimizer.
pub const MINIMIZER_TOLERANCE: f64 = 1e-8;

/// Sorted per-sample Lipschitz constants `G₁ ≤ … ≤ Gₙ`. Ties keep index
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzProfile {
    g: Vec<f64>,
    order: Vec<usize>,
}

impl LipschitzProfile {
    pub fn from_constants(constants: &[f64]) -> Result<Self> {
        if constants.is_empty() {
            return Err(Error::Empty("Lipschitz profile needs at least one sample"));
        }
        if let Some((i, g)) = constants
            .iter()
            .enumerate()
            .find(|(_, g)| !(**g > 0.0 && g.is_finite()))
        {
            return domain(format!(
                "sample {i} has non-positive Lipschitz constant {g}"
            ));
        }
        let mut order: Vec<usize> = (0..constants.len()).collect();
        order.sort_by(|&a, &b| constants[a].total_cmp(&constants[b]));
        let g = order.iter().map(|&i| constants[i]).collect();
        Ok(Self { g, order })
    }

    /// Ascending constants.
    pub fn values(&self) -> &[f64] {
        &self.g
    }

    /// `order()[r]` is the sample index holding the `r`-th smallest constant.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `G₁`
    pub fn min(&self) -> f64 {
        self.g[0]
    }

    /// `Gₙ`
    pub fn max(&self) -> f64 {
        self.g[self.g.len() - 1]
    }

    /// Index of the sample attaining `G₁` (lowest index on ties).
    pub fn argmin(&self) -> usize {
        self.order[0]
    }

    /// Nearest-rank percentile: the `⌈qn/100⌉`-th order statistic, with
    /// `q = 0` mapped to `G₁`.
    pub fn percentile(&self, q: f64) -> Result<f64> {
        if !(0.0..=100.0).contains(&q) {
            return domain(format!("percentile must lie in [0, 100], got {q}"));
        }
        let n = self.g.len();
        let rank = ((q * n as f64) / 100.0).ceil() as usize;
        Ok(self.g[rank.clamp(1, n) - 1])
    }

    /// Empirical `k`-th moment `(1/n) Σ Gᵢᵏ`.
    pub fn moment(&self, k: f64) -> f64 {
        self.g.iter().map(|g| g.powf(k)).sum::<f64>() / self.g.len() as f64
    }
}

pub fn build_profile<P: Problem + ?Sized>(problem: &P) -> Result<LipschitzProfile> {
    LipschitzProfile::from_constants(&problem.lipschitz_constants())
}

pub fn percentile(profile: &LipschitzProfile, q: f64) -> Result<f64> {
    profile.percentile(q)
}

fn sample_minima<P: Problem + ?Sized>(problem: &P) -> Result<Vec<f64>> {
    (0..problem.num_samples())
        .map(|i| problem.sample_min(i).ok_or(Error::MissingMinima))
        .collect()
}

/// `Δ(w*) = (1/n) Σ (fᵢ(w*) − fᵢ*)`.
pub fn interpolation_gap<P: Problem + ?Sized>(problem: &P, w_star: &[f64]) -> Result<f64> {
    if w_star.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w_star.len(),
        });
    }
    let minima = sample_minima(problem)?;
    let n = minima.len();
    let total: f64 = minima
        .iter()
        .enumerate()
        .map(|(i, m)| problem.sample_loss(w_star, i) - m)
        .sum();
    Ok(total / n as f64)
}

/// Sampled upper bound on `α(τ)`: the minimum over `w_samples` of
///
/// ```text
/// Σ min(1/τ, 1/Gᵢ)(fᵢ(w) − fᵢ*)  /  Σ (1/Gₙ)(fᵢ(w) − fᵢ*)
/// ```
///
/// Points with zero total suboptimality are skipped, as are points with
/// `f(w) − f_star ≤ 1e−8` when `f_star` is given.
pub fn alpha_estimate<P: Problem + ?Sized>(
    problem: &P,
    profile: &LipschitzProfile,
    tau: f64,
    w_samples: &[Vec<f64>],
    f_star: Option<f64>,
) -> Result<f64> {
    if w_samples.is_empty() {
        return Err(Error::Empty("alpha_estimate needs sample points"));
    }
    if profile.len() != problem.num_samples() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_samples(),
            got: profile.len(),
        });
    }
    let g_max = profile.max();
    if !(tau > 0.0 && tau <= g_max) {
        return domain(format!("tau must lie in (0, {g_max}], got {tau}"));
    }
    if let Some(w) = w_samples.iter().find(|w| w.len() != problem.dim()) {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w.len(),
        });
    }
    let minima = sample_minima(problem)?;
    let constants = problem.lipschitz_constants();
    let inv_tau = 1.0 / tau;
    let inv_max = 1.0 / g_max;

    let ratios: Vec<Option<f64>> = w_samples
        .par_iter()
        .map(|w| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut loss = 0.0;
            for (i, (m, g)) in minima.iter().zip(&constants).enumerate() {
                let f = problem.sample_loss(w, i);
                let s = f - m;
                loss += f;
                num += inv_tau.min(1.0 / g) * s;
                den += inv_max * s;
            }
            let loss = loss / minima.len() as f64;
            let is_minimizer = f_star.is_some_and(|fs| loss - fs <= MINIMIZER_TOLERANCE);
            (!is_minimizer && den > 0.0).then(|| num / den)
        })
        .collect();

    ratios
        .into_iter()
        .flatten()
        .reduce(f64::min)
        .ok_or_else(|| Error::Degenerate("every sampled point is a minimizer".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{Dataset, GeometricMedianProblem, LogisticProblem};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sorting_and_extremes() {
        let p = LipschitzProfile::from_constants(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.order(), &[1, 2, 0]);
        assert_eq!((p.min(), p.max(), p.argmin()), (1.0, 3.0, 1));
        let single = LipschitzProfile::from_constants(&[4.2]).unwrap();
        assert_eq!(single.min(), single.max());
    }

    #[test]
    fn ties_break_by_index() {
        let p = LipschitzProfile::from_constants(&[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.order(), &[1, 2, 0, 3]);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(LipschitzProfile::from_constants(&[1.0, 0.0]).is_err());
        assert!(LipschitzProfile::from_constants(&[]).is_err());
        assert!(LipschitzProfile::from_constants(&[f64::NAN]).is_err());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let p = LipschitzProfile::from_constants(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.percentile(0.0).unwrap(), 1.0);
        assert_eq!(p.percentile(100.0).unwrap(), 4.0);
        assert_eq!(p.percentile(50.0).unwrap(), 2.0);
        assert_eq!(p.percentile(50.1).unwrap(), 3.0);
        assert!(p.percentile(-1.0).is_err());
        assert!(p.percentile(100.5).is_err());
    }

    #[test]
    fn logistic_profile_matches_feature_norms() {
        let rows = vec![vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, -1.0]];
        let ds = Dataset::from_rows(rows.clone(), vec![0, 1, 0], true).unwrap();
        let p = build_profile(&LogisticProblem::new(ds)).unwrap();
        let mut expect: Vec<f64> = rows
            .iter()
            .map(|x| (2.0 * (x[0] * x[0] + x[1] * x[1] + 1.0)).sqrt())
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in p.values().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_examples() {
        let same = GeometricMedianProblem::new(vec![vec![2.0]; 3]).unwrap();
        assert_eq!(interpolation_gap(&same, &[2.0]).unwrap(), 0.0);
        let pair = GeometricMedianProblem::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(interpolation_gap(&pair, &[0.0]).unwrap(), 1.0);
    }

    fn scaled_pair() -> GeometricMedianProblem {
        GeometricMedianProblem::with_scales(vec![vec![-1.0], vec![1.0]], vec![1.0, 2.0]).unwrap()
    }

    fn grid() -> Vec<Vec<f64>> {
        (0..=4000).map(|k| vec![-4.0 + k as f64 * 2e-3]).collect()
    }

    #[test]
    fn alpha_endpoints() {
        let p = scaled_pair();
        let prof = build_profile(&p).unwrap();
        let ws = grid();
        assert_eq!(alpha_estimate(&p, &prof, 2.0, &ws, Some(1.0)).unwrap(), 1.0);
        let a = alpha_estimate(&p, &prof, 0.5, &ws, Some(1.0)).unwrap();
        let b = alpha_estimate(&p, &prof, 1.0, &ws, Some(1.0)).unwrap();
        assert_eq!(a, b);
        assert!(a >= 1.0);
        assert!(alpha_estimate(&p, &prof, 2.5, &ws, None).is_err());
    }

    #[test]
    fn alpha_matches_brute_force_ratio() {
        // f(w) = (|w + 1| + 2|w − 1|)/2, G = (1, 2), minimized at w = 1 with f* = 1.
        let p = scaled_pair();
        let prof = build_profile(&p).unwrap();
        let ws = grid();
        for tau in [0.3f64, 1.0, 1.25, 1.5, 1.9] {
            let brute = ws
                .iter()
                .map(|w| w[0])
                .filter(|w| ((w + 1.0).abs() + 2.0 * (w - 1.0).abs()) / 2.0 - 1.0 > 1e-8)
                .map(|w| {
                    let s1 = (w + 1.0).abs();
                    let s2 = 2.0 * (w - 1.0).abs();
                    let num = (1.0 / tau).min(1.0) * s1 + (1.0 / tau).min(0.5) * s2;
                    num / ((s1 + s2) / 2.0)
                })
                .fold(f64::INFINITY, f64::min);
            let est = alpha_estimate(&p, &prof, tau, &ws, Some(1.0)).unwrap();
            assert!((est - brute).abs() < 1e-6, "tau {tau}: {est} vs {brute}");
        }
    }

    #[test]
    fn alpha_degenerate_and_missing_minima() {
        let p = GeometricMedianProblem::new(vec![vec![0.0]; 2]).unwrap();
        let prof = build_profile(&p).unwrap();
        let err = alpha_estimate(&p, &prof, 1.0, &[vec![0.0]], None).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(alpha_estimate(&p, &prof, 1.0, &[], None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn alpha_pointwise_properties(seed in 0u64..10_000, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchors: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
            let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
            let p = GeometricMedianProblem::with_scales(anchors, scales).unwrap();
            let prof = build_profile(&p).unwrap();
            let ws: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)]).collect();
            let (g1, gn) = (prof.min(), prof.max());
            let taus: Vec<f64> = (0..10).map(|j| (g1 / 2.0 + (gn - g1 / 2.0) * j as f64 / 9.0).min(gn)).collect();
            let mut prev_alpha = f64::INFINITY;
            let mut prev_ratio = f64::INFINITY;
            for &tau in &taus {
                let a = alpha_estimate(&p, &prof, tau, &ws, None).unwrap();
                prop_assert!(a >= 1.0 - 1e-9);
                prop_assert!(a <= prev_alpha + 1e-12);
                let r = gn / (tau * a);
                prop_assert!(r >= 1.0 - 1e-9);
                prop_assert!(r <= prev_ratio + 1e-9);
                prev_alpha = a;
                prev_ratio = r;
            }
            let at_g1 = alpha_estimate(&p, &prof, g1, &ws, None).unwrap();
            let below = alpha_estimate(&p, &prof, g1 / 2.0, &ws, None).unwrap();
            prop_assert_eq!(at_g1, below);
            prop_assert_eq!(alpha_estimate(&p, &prof, gn, &ws, None).unwrap(), 1.0);
        }

        #[test]
        fn percentile_monotone(values in proptest::collection::vec(0.01f64..100.0, 1..50)) {
            let p = LipschitzProfile::from_constants(&values).unwrap();
            prop_assert_eq!(p.percentile(0.0).unwrap(), p.min());
            prop_assert_eq!(p.percentile(100.0).unwrap(), p.max());
            let mut prev = 0.0;
            for q in 0..=100 {
                let v = p.percentile(q as f64).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}
