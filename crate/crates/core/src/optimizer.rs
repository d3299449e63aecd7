//! DP-SGD with Poisson subsampling, per-sample clipping and Gaussian
//! noise, plus closed-form hyperparameter schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::clipping::clip_in_place;
use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, norm_sq};
use crate::losses::{Domain, Problem};
use crate::privacy::add_gaussian_noise;

/// Inputs to a DP-SGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSgdConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// Clip norm `τ`; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    /// Expected batch size `b`; samples are kept with probability `b/n`
    /// and the clipped sum is always divided by `b`.
    pub expected_batch: f64,
    /// Per-coordinate noise variance `σ²`.
    pub noise_variance: f64,
    #[serde(default)]
    pub domain: Domain,
    pub seed: u64,
    /// Starting point; zeros when absent.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    /// Record `f(w_t)` and `‖∇f(w_t)‖` at every iterate.
    #[serde(default)]
    pub record_trajectory: bool,
    /// Keep a copy of every iterate `w_0, …, w_T`.
    #[serde(default)]
    pub record_iterates: bool,
}

impl DpSgdConfig {
    pub fn new(iterations: usize, step_size: f64, clip_norm: f64, expected_batch: f64) -> Self {
        Self {
            iterations,
            step_size,
            clip_norm,
            expected_batch,
            noise_variance: 0.0,
            domain: Domain::Unconstrained,
            seed: 0,
            w0: None,
            record_trajectory: false,
            record_iterates: false,
        }
    }

    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        if self.iterations == 0 {
            return domain("iterations must be at least 1");
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return domain(format!(
                "step size must be finite and ≥ 0, got {}",
                self.step_size
            ));
        }
        if !(self.clip_norm > 0.0) {
            return domain(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            ));
        }
        if !(self.expected_batch > 0.0 && self.expected_batch <= n as f64) {
            return domain(format!(
                "expected batch must lie in (0, {n}], got {}",
                self.expected_batch
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return domain(format!(
                "noise variance must be finite and ≥ 0, got {}",
                self.noise_variance
            ));
        }
        if let Some(w0) = &self.w0 {
            if w0.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: w0.len(),
                });
            }
        }
        if let Domain::Ball { center, radius } = &self.domain {
            if center.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: center.len(),
                });
            }
            if !(*radius > 0.0) {
                return domain(format!("ball radius must be positive, got {radius}"));
            }
        }
        Ok(())
    }
}

/// Objective value and full-gradient norm at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// The returned iterate `w_t̂`.
    pub w_priv: Vec<f64>,
    /// `t̂ ∈ {0, …, T−1}`.
    pub selected_t: usize,
    /// The final iterate `w_T`, which is never released by the algorithm.
    pub w_last: Vec<f64>,
    pub objective_priv: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub iterates: Vec<Vec<f64>>,
}

/// Indices kept independently with probability `b/n`, in increasing order.
pub fn poisson_sample<R: Rng + ?Sized>(n: usize, b: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(b > 0.0 && b <= n as f64) {
        return domain(format!("expected batch must lie in (0, {n}], got {b}"));
    }
    let p = b / n as f64;
    if p >= 1.0 {
        return Ok((0..n).collect());
    }
    let skip = Geometric::new(p).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = Vec::with_capacity((b * 1.5) as usize + 4);
    let mut idx = skip.sample(rng);
    while idx < n as u64 {
        out.push(idx as usize);
        idx += 1 + skip.sample(rng);
    }
    Ok(out)
}

struct Workspace {
    grad: Vec<f64>,
    buf: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            buf: vec![0.0; dim],
        }
    }
}

fn noisy_gradient_into<P, R>(
    w: &[f64],
    problem: &P,
    config: &DpSgdConfig,
    rng: &mut R,
    ws: &mut Workspace,
) -> Result<()>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    let batch = poisson_sample(problem.num_samples(), config.expected_batch, rng)?;
    ws.grad.fill(0.0);
    for i in batch {
        problem.sample_grad_into(w, i, &mut ws.buf);
        clip_in_place(&mut ws.buf, config.clip_norm);
        for (s, g) in ws.grad.iter_mut().zip(&ws.buf) {
            *s += g;
        }
    }
    for s in ws.grad.iter_mut() {
        *s /= config.expected_batch;
    }
    add_gaussian_noise(config.noise_variance, &mut ws.grad, rng);
    Ok(())
}

/// `g = (1/b) Σ_{i∈S} clip(∇fᵢ(w), τ) + N(0, σ² I)` for a Poisson batch `S`.
pub fn noisy_gradient<P, R>(
    w: &[f64],
    problem: &P,
    config: &DpSgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    check_dim(w, problem)?;
    let mut ws = Workspace::new(problem.dim());
    noisy_gradient_into(w, problem, config, rng, &mut ws)?;
    Ok(ws.grad)
}

/// One DP-SGD update `Π_W(w − η g)`.
pub fn dp_sgd_step<P, R>(
    w: &[f64],
    problem: &P,
    config: &DpSgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    let g = noisy_gradient(w, problem, config, rng)?;
    let mut next = w.to_vec();
    axpy(-config.step_size, &g, &mut next);
    config.domain.project(&mut next);
    Ok(next)
}

fn check_dim<P: Problem + ?Sized>(w: &[f64], problem: &P) -> Result<()> {
    if w.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Runs `T` steps from `w0` and returns `w_t̂` for `t̂` uniform on
/// `{0, …, T−1}`. Deterministic in `config.seed`.
pub fn run_dp_sgd<P: Problem + ?Sized>(problem: &P, config: &DpSgdConfig) -> Result<RunResult> {
    let dim = problem.dim();
    config.validate(problem.num_samples(), dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let selected_t = rng.random_range(0..config.iterations);
    let mut w = config.w0.clone().unwrap_or_else(|| vec![0.0; dim]);
    config.domain.project(&mut w);

    let mut ws = Workspace::new(dim);
    let mut w_priv = Vec::new();
    let mut trajectory = Vec::new();
    let mut iterates = Vec::new();
    let record =
        |w: &[f64], trajectory: &mut Vec<TrajectoryPoint>, iterates: &mut Vec<Vec<f64>>| {
            if config.record_trajectory {
                trajectory.push(TrajectoryPoint {
                    loss: problem.loss(w),
                    grad_norm: problem.grad_norm(w),
                });
            }
            if config.record_iterates {
                iterates.push(w.to_vec());
            }
        };

    for t in 0..config.iterations {
        if t == selected_t {
            w_priv.clone_from(&w);
        }
        record(&w, &mut trajectory, &mut iterates);
        noisy_gradient_into(&w, problem, config, &mut rng, &mut ws)?;
        axpy(-config.step_size, &ws.grad, &mut w);
        config.domain.project(&mut w);
    }
    record(&w, &mut trajectory, &mut iterates);

    Ok(RunResult {
        objective_priv: problem.loss(&w_priv),
        w_priv,
        selected_t,
        w_last: w,
        trajectory,
        iterates,
    })
}

/// Non-private full-batch (sub)gradient descent with projection; returns
/// the last iterate.
pub fn full_batch_gd<P: Problem + ?Sized>(
    problem: &P,
    w0: &[f64],
    step_size: f64,
    iterations: usize,
    domain: &Domain,
) -> Result<Vec<f64>> {
    check_dim(w0, problem)?;
    let mut w = w0.to_vec();
    for _ in 0..iterations {
        let g = problem.grad(&w);
        axpy(-step_size, &g, &mut w);
        domain.project(&mut w);
    }
    Ok(w)
}

/// Long non-private run used as a stand-in for `f*`. Uses step `1/L` when
/// the problem reports a smoothness constant, otherwise `step_size` must be
/// given. Returns the best iterate seen and its objective.
pub fn reference_minimum<P: Problem + ?Sized>(
    problem: &P,
    step_size: Option<f64>,
    iterations: usize,
) -> Result<(Vec<f64>, f64)> {
    let step = match (step_size, problem.smoothness()) {
        (Some(s), _) => s,
        (None, Some(l)) if l > 0.0 => 1.0 / l,
        _ => {
            return Err(Error::InvalidConfig(
                "reference run needs a step size for a problem without a smoothness constant"
                    .into(),
            ))
        }
    };
    if !(step > 0.0 && step.is_finite()) {
        return domain(format!("reference step must be positive, got {step}"));
    }
    let domain = problem.domain();
    let mut w = vec![0.0; problem.dim()];
    domain.project(&mut w);
    let mut best = w.clone();
    let mut best_f = problem.loss(&w);
    for _ in 0..iterations {
        let g = problem.grad(&w);
        axpy(-step, &g, &mut w);
        domain.project(&mut w);
        let f = problem.loss(&w);
        if f < best_f {
            best_f = f;
            best.clone_from(&w);
        }
    }
    Ok((best, best_f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskKind {
    /// Mean `f(w_priv) − f*`.
    Convex { f_star: f64 },
    /// Mean `‖∇f(w_priv)‖²`.
    Nonconvex,
}

pub fn optimization_risk<P: Problem + ?Sized>(
    problem: &P,
    results: &[RunResult],
    kind: RiskKind,
) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("optimization risk needs at least one run"));
    }
    let total: f64 = results
        .iter()
        .map(|r| match kind {
            RiskKind::Convex { f_star } => problem.loss(&r.w_priv) - f_star,
            RiskKind::Nonconvex => norm_sq(&problem.grad(&r.w_priv)),
        })
        .sum();
    Ok(total / results.len() as f64)
}

/// A prescribed `(T, τ, η)` triple with advisory flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub iterations: usize,
    pub clip_norm: f64,
    pub step_size: f64,
    /// `γ = 1` was used, outside the range the guarantees cover.
    pub gamma_sentinel: bool,
    /// `φ ≥ 1`, where the guarantees are vacuous.
    pub phi_at_least_one: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v}"))
    }
}

fn check_phi(phi: f64) -> Result<bool> {
    check_positive("phi", phi)?;
    Ok(phi >= 1.0)
}

fn check_gamma(gamma: f64) -> Result<bool> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(gamma == 1.0)
    } else {
        domain(format!("gamma must lie in (0, 1], got {gamma}"))
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 1.0 {
        Ok(())
    } else {
        domain(format!("moment order k must exceed 1, got {k}"))
    }
}

fn check_iterations(t: usize) -> Result<f64> {
    if t == 0 {
        return domain("iterations must be at least 1");
    }
    Ok(t as f64)
}

/// Interpolation regime: `T = ⌈1/(3φ²)⌉`, `η = 3Cφ/(2τ)`.
pub fn schedule_interpolation(c: f64, phi: f64, tau: f64) -> Result<Schedule> {
    check_positive("C", c)?;
    check_positive("tau", tau)?;
    let phi_flag = check_phi(phi)?;
    let raw = 1.0 / (3.0 * phi * phi);
    Ok(Schedule {
        iterations: (raw.ceil() as usize).max(1),
        clip_norm: tau,
        step_size: 3.0 * c * phi / (2.0 * tau),
        gamma_sentinel: false,
        phi_at_least_one: phi_flag,
    })
}

/// Constrained convex case over a set of diameter `D_W`:
/// `τ = (G/γ^{1/k}) (1/T + φ²)^{−1/(2k)}`, `η = (D_W/(Tτ)) (1/T + φ²)^{−1/2}`.
pub fn schedule_constrained_convex(
    g: f64,
    gamma: f64,
    diameter: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> Result<Schedule> {
    check_positive("G", g)?;
    check_positive("D_W", diameter)?;
    check_k(k)?;
    let sentinel = check_gamma(gamma)?;
    let phi_flag = check_phi(phi)?;
    let t = check_iterations(iterations)?;
    let s = 1.0 / t + phi * phi;
    let tau = g / gamma.powf(1.0 / k) * s.powf(-1.0 / (2.0 * k));
    Ok(Schedule {
        iterations,
        clip_norm: tau,
        step_size: diameter / (t * tau) / s.sqrt(),
        gamma_sentinel: sentinel,
        phi_at_least_one: phi_flag,
    })
}

/// Unconstrained convex case with `‖w₀ − w*‖ ≤ C`:
/// `τ = (G/γ^{1/k}) (1/T + φ²)^{−1/(k+1)}`, `η = (C/(Tτ)) (1/T + φ²)^{−1/2}`.
pub fn schedule_unconstrained_convex(
    g: f64,
    gamma: f64,
    c: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> Result<Schedule> {
    check_positive("G", g)?;
    check_positive("C", c)?;
    check_k(k)?;
    let sentinel = check_gamma(gamma)?;
    let phi_flag = check_phi(phi)?;
    let t = check_iterations(iterations)?;
    let s = 1.0 / t + phi * phi;
    let tau = g / gamma.powf(1.0 / k) * s.powf(-1.0 / (k + 1.0));
    Ok(Schedule {
        iterations,
        clip_norm: tau,
        step_size: c / (t * tau) / s.sqrt(),
        gamma_sentinel: sentinel,
        phi_at_least_one: phi_flag,
    })
}

/// Sharp convex case; requires `T ≥ 1/φ²`.
/// `τ = G (1/T + φ²)^{−1/(2k)}`, `η = (C/(Tτ)) (1/T + φ²)^{−1/2}`.
pub fn schedule_sharp_convex(
    g: f64,
    c: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> Result<Schedule> {
    check_positive("G", g)?;
    check_positive("C", c)?;
    check_k(k)?;
    let phi_flag = check_phi(phi)?;
    let t = check_iterations(iterations)?;
    let needed = 1.0 / (phi * phi);
    if t < needed * (1.0 - 1e-12) {
        return domain(format!(
            "sharp schedule needs T ≥ 1/φ² = {needed}, got {iterations}"
        ));
    }
    let s = 1.0 / t + phi * phi;
    let tau = g * s.powf(-1.0 / (2.0 * k));
    Ok(Schedule {
        iterations,
        clip_norm: tau,
        step_size: c / (t * tau) / s.sqrt(),
        gamma_sentinel: false,
        phi_at_least_one: phi_flag,
    })
}

/// Smooth nonconvex case with smoothness `L` and `f(w₀) − f* ≤ C`:
/// `τ = G (G/(γ²C√L))^{1/(2k−1)} (1/T + φ²)^{−1/(2(2k−1))}`,
/// `η = (C/(Tτ√L)) (1/T + φ²)^{−1/2}`.
pub fn schedule_nonconvex(
    g: f64,
    gamma: f64,
    c: f64,
    smoothness: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> Result<Schedule> {
    check_positive("G", g)?;
    check_positive("C", c)?;
    check_positive("L", smoothness)?;
    check_k(k)?;
    let sentinel = check_gamma(gamma)?;
    let phi_flag = check_phi(phi)?;
    let t = check_iterations(iterations)?;
    let s = 1.0 / t + phi * phi;
    let root_l = smoothness.sqrt();
    let e = 2.0 * k - 1.0;
    let tau = g * (g / (gamma * gamma * c * root_l)).powf(1.0 / e) * s.powf(-1.0 / (2.0 * e));
    Ok(Schedule {
        iterations,
        clip_norm: tau,
        step_size: c / (t * tau * root_l) / s.sqrt(),
        gamma_sentinel: sentinel,
        phi_at_least_one: phi_flag,
    })
}
