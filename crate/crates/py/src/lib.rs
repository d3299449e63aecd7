//! Python bindings: privacy calibration, clipping, logistic losses,
//! schedules, DP-SGD runs and the experiment runner.

use dperm::harness::ExperimentSpec;
use dperm::losses::{logistic_grad, logistic_loss, per_sample_lipschitz_logistic};
use dperm::{
    Dataset, DiscreteVectorDistribution, DpSgdConfig, LipschitzProfile, LogisticProblem,
    PrivacyBudget, Problem, Schedule,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(dperm_py, DpermError, PyException);

fn to_py(err: dperm::Error) -> PyErr {
    DpermError::new_err(err.to_string())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn budget(epsilon: f64, delta: f64, nu: f64) -> PyResult<PrivacyBudget> {
    PrivacyBudget::with_nu(epsilon, delta, nu).map_err(to_py)
}

/// Returns `(phi, phi_at_least_one)`.
#[pyfunction]
#[pyo3(signature = (n, d, epsilon, delta, nu = 1.0))]
fn compute_phi(n: usize, d: usize, epsilon: f64, delta: f64, nu: f64) -> PyResult<(f64, bool)> {
    let phi = dperm::compute_phi(n, d, &budget(epsilon, delta, nu)?).map_err(to_py)?;
    Ok((phi.value, phi.at_least_one))
}

/// Per-coordinate Gaussian noise variance for `iterations` steps.
#[pyfunction]
#[pyo3(signature = (iterations, tau, n, epsilon, delta, nu = 1.0))]
fn noise_variance(
    iterations: usize,
    tau: f64,
    n: usize,
    epsilon: f64,
    delta: f64,
    nu: f64,
) -> PyResult<f64> {
    let spec = dperm::noise_variance(iterations, tau, n, 1, &budget(epsilon, delta, nu)?)
        .map_err(to_py)?;
    Ok(spec.sigma_sq)
}

#[pyfunction]
fn clip(z: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    dperm::clip(&z, c).map_err(to_py)
}

#[pyfunction]
fn clipped_mean(grads: Vec<Vec<f64>>, tau: f64, b: f64) -> PyResult<Vec<f64>> {
    let dim = grads.first().map_or(0, Vec::len);
    dperm::clipped_mean(&grads, tau, b, dim).map_err(to_py)
}

/// Report Noisy Max with Laplace noise; `epsilon = float("inf")` gives the
/// exact argmax.
#[pyfunction]
#[pyo3(signature = (scores, epsilon, sensitivity, seed = 0))]
fn report_noisy_max(
    scores: Vec<f64>,
    epsilon: f64,
    sensitivity: f64,
    seed: u64,
) -> PyResult<usize> {
    dperm::report_noisy_max(&scores, epsilon, sensitivity, &mut rng(seed)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (n, b, seed = 0))]
fn poisson_sample(n: usize, b: f64, seed: u64) -> PyResult<Vec<usize>> {
    dperm::poisson_sample(n, b, &mut rng(seed)).map_err(to_py)
}

/// `(exact_bias, lemma_bound, corollary_bound)` for a discrete distribution
/// given as `[(vector, probability), ...]`.
#[pyfunction]
fn clipping_bias(atoms: Vec<(Vec<f64>, f64)>, tau: f64, p: f64) -> PyResult<(f64, f64, f64)> {
    let dist = DiscreteVectorDistribution::new(atoms).map_err(to_py)?;
    Ok((
        dperm::clipping_bias_exact(&dist, tau).map_err(to_py)?,
        dperm::bias_bound_lemma(&dist, tau, p).map_err(to_py)?,
        dperm::bias_bound_corollary(&dist, tau, p).map_err(to_py)?,
    ))
}

#[pyfunction(name = "logistic_loss")]
fn py_logistic_loss(w: Vec<f64>, x: Vec<f64>, y: usize) -> PyResult<f64> {
    logistic_loss(&w, &x, y).map_err(to_py)
}

#[pyfunction(name = "logistic_grad")]
fn py_logistic_grad(w: Vec<f64>, x: Vec<f64>, y: usize) -> PyResult<Vec<f64>> {
    logistic_grad(&w, &x, y).map_err(to_py)
}

#[pyfunction(name = "per_sample_lipschitz_logistic")]
fn py_per_sample_lipschitz_logistic(x: Vec<f64>) -> f64 {
    per_sample_lipschitz_logistic(&x)
}

fn schedule_dict<'py>(py: Python<'py>, s: Schedule) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iterations", s.iterations)?;
    d.set_item("clip_norm", s.clip_norm)?;
    d.set_item("step_size", s.step_size)?;
    d.set_item("gamma_sentinel", s.gamma_sentinel)?;
    d.set_item("phi_at_least_one", s.phi_at_least_one)?;
    Ok(d)
}

#[pyfunction]
fn schedule_interpolation(
    py: Python<'_>,
    c: f64,
    phi: f64,
    tau: f64,
) -> PyResult<Bound<'_, PyDict>> {
    schedule_dict(
        py,
        dperm::schedule_interpolation(c, phi, tau).map_err(to_py)?,
    )
}

#[pyfunction]
fn schedule_constrained_convex(
    py: Python<'_>,
    g: f64,
    gamma: f64,
    diameter: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let s = dperm::schedule_constrained_convex(g, gamma, diameter, iterations, phi, k)
        .map_err(to_py)?;
    schedule_dict(py, s)
}

#[pyfunction]
fn schedule_unconstrained_convex(
    py: Python<'_>,
    g: f64,
    gamma: f64,
    c: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let s = dperm::schedule_unconstrained_convex(g, gamma, c, iterations, phi, k).map_err(to_py)?;
    schedule_dict(py, s)
}

#[pyfunction]
fn schedule_sharp_convex(
    py: Python<'_>,
    g: f64,
    c: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> PyResult<Bound<'_, PyDict>> {
    schedule_dict(
        py,
        dperm::schedule_sharp_convex(g, c, iterations, phi, k).map_err(to_py)?,
    )
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn schedule_nonconvex(
    py: Python<'_>,
    g: f64,
    gamma: f64,
    c: f64,
    smoothness: f64,
    iterations: usize,
    phi: f64,
    k: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let s =
        dperm::schedule_nonconvex(g, gamma, c, smoothness, iterations, phi, k).map_err(to_py)?;
    schedule_dict(py, s)
}

/// Runs an experiment described by a JSON spec (with a `"command"` key)
/// and returns its CSV report.
#[pyfunction]
fn run_experiment(spec_json: &str) -> PyResult<String> {
    let spec: ExperimentSpec =
        serde_json::from_str(spec_json).map_err(|e| DpermError::new_err(e.to_string()))?;
    let report = spec.run().map_err(to_py)?;
    let csv = report.to_csv_string().map_err(to_py)?;
    match report.failure() {
        Some(msg) => Err(DpermError::new_err(msg)),
        None => Ok(csv),
    }
}

/// Multinomial logistic regression over an in-memory or CSV dataset.
#[pyclass(name = "LogisticModel", module = "dperm_py")]
struct PyLogisticModel {
    inner: LogisticProblem,
}

#[pymethods]
impl PyLogisticModel {
    #[new]
    #[pyo3(signature = (features, labels, append_bias = true))]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, append_bias: bool) -> PyResult<Self> {
        let data = Dataset::from_rows(features, labels, append_bias).map_err(to_py)?;
        Ok(Self {
            inner: LogisticProblem::new(data),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, append_bias = true))]
    fn from_csv(path: &str, append_bias: bool) -> PyResult<Self> {
        let data = Dataset::from_csv_path(path, append_bias).map_err(to_py)?;
        Ok(Self {
            inner: LogisticProblem::new(data),
        })
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    /// Parameter dimension `(features) × (classes)`.
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, w: Vec<f64>) -> PyResult<f64> {
        self.check(&w)?;
        Ok(self.inner.loss(&w))
    }

    fn grad(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&w)?;
        Ok(self.inner.grad(&w))
    }

    fn accuracy(&self, w: Vec<f64>) -> PyResult<f64> {
        self.check(&w)?;
        Ok(self.inner.accuracy_on(&w, self.inner.dataset()))
    }

    fn lipschitz_constants(&self) -> Vec<f64> {
        self.inner.lipschitz_constants()
    }

    /// Nearest-rank percentile of the per-sample Lipschitz constants.
    fn lipschitz_percentile(&self, q: f64) -> PyResult<f64> {
        let profile =
            LipschitzProfile::from_constants(&self.inner.lipschitz_constants()).map_err(to_py)?;
        profile.percentile(q).map_err(to_py)
    }

    /// Runs DP-SGD and returns a dict with `w_priv`, `selected_t`,
    /// `w_last` and `objective_priv`.
    #[pyo3(signature = (iterations, step_size, clip_norm, expected_batch, noise_variance = 0.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn run_dp_sgd<'py>(
        &self,
        py: Python<'py>,
        iterations: usize,
        step_size: f64,
        clip_norm: f64,
        expected_batch: f64,
        noise_variance: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = DpSgdConfig::new(iterations, step_size, clip_norm, expected_batch);
        cfg.noise_variance = noise_variance;
        cfg.seed = seed;
        let run = dperm::run_dp_sgd(&self.inner, &cfg).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("w_priv", run.w_priv)?;
        d.set_item("selected_t", run.selected_t)?;
        d.set_item("w_last", run.w_last)?;
        d.set_item("objective_priv", run.objective_priv)?;
        Ok(d)
    }
}

impl PyLogisticModel {
    fn check(&self, w: &[f64]) -> PyResult<()> {
        if w.len() != self.inner.dim() {
            return Err(to_py(dperm::Error::DimensionMismatch {
                expected: self.inner.dim(),
                got: w.len(),
            }));
        }
        Ok(())
    }
}

#[pymodule]
fn dperm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DpermError", m.py().get_type::<DpermError>())?;
    m.add_class::<PyLogisticModel>()?;
    m.add_function(wrap_pyfunction!(compute_phi, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance, m)?)?;
    m.add_function(wrap_pyfunction!(clip, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_mean, m)?)?;
    m.add_function(wrap_pyfunction!(report_noisy_max, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_sample, m)?)?;
    m.add_function(wrap_pyfunction!(clipping_bias, m)?)?;
    m.add_function(wrap_pyfunction!(py_logistic_loss, m)?)?;
    m.add_function(wrap_pyfunction!(py_logistic_grad, m)?)?;
    m.add_function(wrap_pyfunction!(py_per_sample_lipschitz_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_interpolation, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_constrained_convex, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_unconstrained_convex, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_sharp_convex, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_nonconvex, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
