//! Python bindings: densities, bijections, detectors and the constructions.
//! Reports come back as plain dicts decoded from their JSON form.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use reparam::bijections::{self as bij, Bijection, ScoreFunction};
use reparam::constructions::{self as cons, ConstructionOutput, DetectorConfig, SwapInputs};
use reparam::densities::{self as dens, Density};
use reparam::detectors::{self as det, DetectorVerdict};
use reparam::RngState;

create_exception!(reparam_py, ReparamError, PyException, "Error raised by the reparam library.");

fn err(e: reparam::Error) -> PyErr {
    ReparamError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| ReparamError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn verdict_to_py(py: Python<'_>, v: &DetectorVerdict) -> PyResult<Py<PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(|e| ReparamError::new_err(e.to_string()))?)
}

fn output_to_py(py: Python<'_>, out: &ConstructionOutput) -> PyResult<Py<PyAny>> {
    let report = serde_json::to_value(&out.report).map_err(|e| ReparamError::new_err(e.to_string()))?;
    let value = serde_json::json!({
        "report": report,
        "points": { "header": out.points.header, "rows": out.points.rows },
    });
    let dict = to_py(py, &value)?;
    if let Some(image) = &out.image {
        let bound = dict.bind(py);
        bound.set_item("image_ppm", PyBytes::new(py, &image.to_ppm()))?;
        bound.set_item("image_size", (image.width, image.height))?;
    }
    Ok(dict)
}

fn detectors(mass_level: f64, epsilon: f64, n_calibration: usize, n_mc: usize) -> DetectorConfig {
    DetectorConfig { mass_level, epsilon, n_calibration, n_mc }
}

/// A probability density on ℝ^D.
#[pyclass(name = "Density", frozen, from_py_object, module = "reparam_py")]
#[derive(Clone)]
struct PyDensity {
    inner: Arc<dyn Density>,
}

impl PyDensity {
    fn wrap<D: Density + 'static>(d: D) -> Self {
        Self { inner: Arc::new(d) }
    }
}

#[pymethods]
impl PyDensity {
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> PyResult<Self> {
        Ok(Self::wrap(dens::Gaussian::new(mean, std).map_err(err)?))
    }

    #[staticmethod]
    fn standard_normal(dim: usize) -> Self {
        Self::wrap(dens::Gaussian::standard(dim))
    }

    #[staticmethod]
    fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        Ok(Self::wrap(dens::Uniform::new(lo, hi).map_err(err)?))
    }

    #[staticmethod]
    fn bimodal() -> Self {
        Self::wrap(dens::Mixture::bimodal())
    }

    #[staticmethod]
    fn mixture(weights: Vec<f64>, components: Vec<PyDensity>) -> PyResult<Self> {
        let comps = components.into_iter().map(|c| c.inner).collect();
        Ok(Self::wrap(dens::Mixture::new(weights, comps).map_err(err)?))
    }

    #[staticmethod]
    fn product(factors: Vec<PyDensity>) -> PyResult<Self> {
        Ok(Self::wrap(dens::Product::new(factors.into_iter().map(|f| f.inner).collect()).map_err(err)?))
    }

    #[staticmethod]
    #[pyo3(signature = (alpha = dens::PIXEL_ALPHA, beta = dens::PIXEL_BETA))]
    fn pixel_mixture(alpha: f64, beta: f64) -> PyResult<Self> {
        Ok(Self::wrap(dens::build_pixel_mixture(alpha, beta).map_err(err)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).map_err(err)
    }

    fn density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.density(&x).map_err(err)
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        self.inner.sample(n, &mut RngState::new(seed)).map_err(err)
    }

    /// `(value, standard error)` of the differential entropy in nats.
    #[pyo3(signature = (n_mc = 10_000, seed = 0))]
    fn entropy(&self, n_mc: usize, seed: u64) -> PyResult<(f64, f64)> {
        let e = self.inner.entropy(n_mc, &mut RngState::new(seed)).map_err(err)?;
        Ok((e.value, e.std_error))
    }

    fn describe(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.describe())
    }

    fn __repr__(&self) -> String {
        format!("Density({})", self.inner.describe())
    }
}

/// An exactly invertible map with a closed-form log-Jacobian.
#[pyclass(name = "Bijection", frozen, skip_from_py_object, module = "reparam_py")]
#[derive(Clone)]
struct PyBijection {
    inner: Arc<dyn Bijection>,
}

impl PyBijection {
    fn wrap<B: Bijection + 'static>(b: B) -> Self {
        Self { inner: Arc::new(b) }
    }
}

#[pymethods]
impl PyBijection {
    #[staticmethod]
    fn affine(scale: Vec<f64>, shift: Vec<f64>) -> PyResult<Self> {
        Ok(Self::wrap(bij::Affine::new(scale, shift).map_err(err)?))
    }

    #[staticmethod]
    fn cdf(density: &PyDensity) -> PyResult<Self> {
        Ok(Self::wrap(bij::cdf_bijection_1d(density.inner.clone()).map_err(err)?))
    }

    #[staticmethod]
    fn knothe_rosenblatt(density: &PyDensity) -> PyResult<Self> {
        Ok(Self::wrap(bij::knothe_rosenblatt(density.inner.clone()).map_err(err)?))
    }

    #[staticmethod]
    fn hyperspherical(dim: usize) -> PyResult<Self> {
        Ok(Self::wrap(bij::hyperspherical(dim).map_err(err)?))
    }

    #[staticmethod]
    fn arbitrary_score(density: &PyDensity, score: &PyScore) -> PyResult<Self> {
        Ok(Self::wrap(bij::arbitrary_score_bijection(density.inner.clone(), score.inner.clone()).map_err(err)?))
    }

    #[staticmethod]
    fn norm_dependent_rotation(
        center: Vec<f64>,
        r0: f64,
        r_max: f64,
        plane_e1: Vec<f64>,
        plane_e2: Vec<f64>,
    ) -> PyResult<Self> {
        let dim = center.len();
        let params = bij::RotationParams::new(center, r0, r_max, plane_e1, plane_e2).map_err(err)?;
        Ok(Self::wrap(bij::norm_dependent_rotation(params, dim).map_err(err)?))
    }

    #[staticmethod]
    fn orthogonal_squeeze(direction: Vec<f64>, factor: f64) -> PyResult<Self> {
        Ok(Self::wrap(bij::orthogonal_squeeze(direction, factor).map_err(err)?))
    }

    #[staticmethod]
    fn align_rotation(direction: Vec<f64>) -> PyResult<Self> {
        Ok(Self::wrap(bij::align_rotation(direction).map_err(err)?))
    }

    /// The map applying `self` first and `then` second.
    fn then(&self, then: &PyBijection) -> PyResult<Self> {
        Ok(Self::wrap(bij::compose(self.inner.clone(), then.inner.clone()).map_err(err)?))
    }

    fn inverted(&self) -> Self {
        Self::wrap(bij::invert(self.inner.clone()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(err)
    }

    fn inverse(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.inverse(&z).map_err(err)
    }

    fn log_abs_det_jacobian(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_abs_det_jacobian(&x).map_err(err)
    }

    #[pyo3(signature = (x, step = cons::FD_STEP))]
    fn finite_difference_log_det(&self, x: Vec<f64>, step: f64) -> PyResult<f64> {
        bij::finite_difference_log_det(self.inner.as_ref(), &x, step).map_err(err)
    }

    fn describe(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.describe())
    }

    fn __repr__(&self) -> String {
        format!("Bijection({})", self.inner.describe())
    }
}

/// Target pushforward density for the arbitrary-score map.
#[pyclass(name = "ScoreFunction", frozen, skip_from_py_object, module = "reparam_py")]
#[derive(Clone)]
struct PyScore {
    inner: ScoreFunction,
}

#[pymethods]
impl PyScore {
    #[staticmethod]
    fn constant(level: f64) -> PyResult<Self> {
        Ok(Self { inner: ScoreFunction::constant(level).map_err(err)? })
    }

    #[staticmethod]
    fn from_density(density: &PyDensity, lower_bound: f64) -> PyResult<Self> {
        Ok(Self { inner: ScoreFunction::from_density(density.inner.clone(), lower_bound).map_err(err)? })
    }

    #[staticmethod]
    fn ball_ramp(center: Vec<f64>, radius: f64, inside: f64, outside: f64, ramp_width: f64) -> PyResult<Self> {
        let ball = bij::Ball { center, radius };
        Ok(Self { inner: ScoreFunction::ball_ramp(ball, inside, outside, ramp_width).map_err(err)? })
    }

    /// Low score on the central ball of Gaussian mass `region_mass`.
    #[staticmethod]
    #[pyo3(signature = (dim, region_mass = 0.025, inside = 0.1, outside = 1.0))]
    fn gaussian_ball(dim: usize, region_mass: f64, inside: f64, outside: f64) -> PyResult<Self> {
        Ok(Self { inner: cons::gaussian_ball_score(dim, region_mass, inside, outside).map_err(err)? })
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&x).map_err(err)
    }

    fn describe(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.describe())
    }
}

/// Density scoring with a calibrated threshold λ.
#[pyclass(name = "DensityScorer", frozen, module = "reparam_py")]
struct PyScorer {
    inner: det::DensityScorer,
}

#[pymethods]
impl PyScorer {
    #[staticmethod]
    #[pyo3(signature = (density, mass_level = 0.95, n = 10_000, seed = 0))]
    fn calibrate(density: &PyDensity, mass_level: f64, n: usize, seed: u64) -> PyResult<Self> {
        let inner = det::calibrate_density_threshold(density.inner.clone(), mass_level, n, &mut RngState::new(seed))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.degenerate
    }

    fn classify(&self, py: Python<'_>, x: Vec<f64>) -> PyResult<Py<PyAny>> {
        verdict_to_py(py, &det::density_score_classify(&self.inner, &x).map_err(err)?)
    }

    fn parameters(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.parameters())
    }
}

/// The typicality test `|H + mean log p| <= epsilon`.
#[pyclass(name = "TypicalityTest", frozen, module = "reparam_py")]
struct PyTypicality {
    inner: det::TypicalityTest,
}

#[pymethods]
impl PyTypicality {
    #[new]
    #[pyo3(signature = (density, epsilon, n_mc = 10_000, seed = 0))]
    fn new(density: &PyDensity, epsilon: f64, n_mc: usize, seed: u64) -> PyResult<Self> {
        let inner =
            det::TypicalityTest::new(density.inner.clone(), epsilon, n_mc, &mut RngState::new(seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn entropy(&self) -> f64 {
        self.inner.entropy
    }

    fn statistic(&self, batch: Vec<Vec<f64>>) -> PyResult<f64> {
        det::typicality_statistic(&self.inner, &batch).map_err(err)
    }

    fn classify(&self, py: Python<'_>, batch: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
        verdict_to_py(py, &self.inner.classify(&batch).map_err(err)?)
    }
}

#[pyfunction]
fn pushforward(density: &PyDensity, bijection: &PyBijection) -> PyResult<PyDensity> {
    Ok(PyDensity::wrap(bij::pushforward(density.inner.clone(), bijection.inner.clone()).map_err(err)?))
}

#[pyfunction]
fn rotation_plane(direction: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    bij::rotation_plane(&direction).map_err(err)
}

#[pyfunction]
fn density_ratio_score(fg: &PyDensity, bg: &PyDensity, x: Vec<f64>) -> PyResult<f64> {
    det::density_ratio_score(fg.inner.as_ref(), bg.inner.as_ref(), &x).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (density, probes = 1000, seed = 0, mass_level = 0.95, epsilon = 1.0, n_calibration = 10_000, n_mc = 10_000))]
#[allow(clippy::too_many_arguments)]
fn uniformization_attack(
    py: Python<'_>,
    density: &PyDensity,
    probes: usize,
    seed: u64,
    mass_level: f64,
    epsilon: f64,
    n_calibration: usize,
    n_mc: usize,
) -> PyResult<Py<PyAny>> {
    let config = detectors(mass_level, epsilon, n_calibration, n_mc);
    let out =
        cons::uniformization_attack(density.inner.clone(), probes, &config, &mut RngState::new(seed)).map_err(err)?;
    output_to_py(py, &out)
}

#[pyfunction]
#[pyo3(signature = (density, score, probes = 200, seed = 0, mass_level = 0.95, epsilon = 1.0, n_calibration = 10_000, n_mc = 10_000))]
#[allow(clippy::too_many_arguments)]
fn arbitrary_scoring_attack(
    py: Python<'_>,
    density: &PyDensity,
    score: &PyScore,
    probes: usize,
    seed: u64,
    mass_level: f64,
    epsilon: f64,
    n_calibration: usize,
    n_mc: usize,
) -> PyResult<Py<PyAny>> {
    let config = detectors(mass_level, epsilon, n_calibration, n_mc);
    let out = cons::arbitrary_scoring_attack(
        density.inner.clone(),
        score.inner.clone(),
        probes,
        &config,
        &mut RngState::new(seed),
    )
    .map_err(err)?;
    output_to_py(py, &out)
}

/// Returns `(swap bijection, output dict)`.
#[pyfunction]
#[pyo3(signature = (density, x_in, x_out, probes = 1000, seed = 0, mass_level = 0.95, n_calibration = 10_000))]
#[allow(clippy::too_many_arguments)]
fn canonical_swap(
    py: Python<'_>,
    density: &PyDensity,
    x_in: Vec<f64>,
    x_out: Vec<f64>,
    probes: usize,
    seed: u64,
    mass_level: f64,
    n_calibration: usize,
) -> PyResult<(PyBijection, Py<PyAny>)> {
    let inputs = SwapInputs { density: density.inner.clone(), x_in, x_out };
    let config = detectors(mass_level, 1.0, n_calibration, 0);
    let (swap, out) = cons::canonical_swap(&inputs, probes, &config, &mut RngState::new(seed)).map_err(err)?;
    Ok((PyBijection::wrap(swap.map), output_to_py(py, &out)?))
}

#[pyfunction]
#[pyo3(signature = (alpha = dens::PIXEL_ALPHA, beta = dens::PIXEL_BETA, n_pixels = cons::PIXEL_COUNT, seed = 0, mass_level = 0.95, epsilon = 1.0, n_calibration = cons::PIXEL_CALIBRATION, n_mc = 10_000))]
#[allow(clippy::too_many_arguments)]
fn pixel_demo(
    py: Python<'_>,
    alpha: f64,
    beta: f64,
    n_pixels: usize,
    seed: u64,
    mass_level: f64,
    epsilon: f64,
    n_calibration: usize,
    n_mc: usize,
) -> PyResult<Py<PyAny>> {
    let config = detectors(mass_level, epsilon, n_calibration, n_mc);
    let out = cons::pixel_demo(alpha, beta, n_pixels, &config, &mut RngState::new(seed)).map_err(err)?;
    output_to_py(py, &out)
}

#[pyfunction]
#[pyo3(signature = (dim = 100, n = 10_000, epsilon = 1.0, seed = 0))]
fn annulus_demo(py: Python<'_>, dim: usize, n: usize, epsilon: f64, seed: u64) -> PyResult<Py<PyAny>> {
    let out = cons::annulus_demo(dim, n, epsilon, &mut RngState::new(seed)).map_err(err)?;
    output_to_py(py, &out)
}

#[pymodule]
fn reparam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReparamError", m.py().get_type::<ReparamError>())?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyBijection>()?;
    m.add_class::<PyScore>()?;
    m.add_class::<PyScorer>()?;
    m.add_class::<PyTypicality>()?;
    m.add_function(wrap_pyfunction!(pushforward, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_plane, m)?)?;
    m.add_function(wrap_pyfunction!(density_ratio_score, m)?)?;
    m.add_function(wrap_pyfunction!(uniformization_attack, m)?)?;
    m.add_function(wrap_pyfunction!(arbitrary_scoring_attack, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_swap, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_demo, m)?)?;
    m.add_function(wrap_pyfunction!(annulus_demo, m)?)?;
    Ok(())
}
