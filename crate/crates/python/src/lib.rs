//! Python bindings for `randslack`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use randslack::bounds;
use randslack::harness;
use randslack::rng::{derive_seed, stream};
use randslack::structures::{Latent, LatentKind};
use randslack::verification;
use randslack::{FeatureMap, Method, ModelParams, ProposalSizeRule, StructureSpace, StructuredPoint, TrainConfig};

fn err(e: randslack::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Space", module = "randslack_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: StructureSpace,
}

impl PySpace {
    fn point(&self, y: &str, h: usize) -> PyResult<StructuredPoint> {
        let p = StructuredPoint::new(self.inner.parse_output(y).map_err(err)?, Latent(h));
        self.inner.validate_point(&p).map_err(err)?;
        Ok(p)
    }

    fn pair(&self, p: &StructuredPoint) -> (String, usize) {
        (self.inner.format_output(&p.output), p.latent.0)
    }
}

#[pymethods]
impl PySpace {
    #[staticmethod]
    fn tree(v: usize) -> PyResult<Self> {
        StructureSpace::spanning_tree(v).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn dag(v: usize, b: usize) -> PyResult<Self> {
        StructureSpace::dag(v, b).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn set(v: usize, b: usize) -> PyResult<Self> {
        StructureSpace::card_set(v, b).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn perm(v: usize) -> PyResult<Self> {
        StructureSpace::permutation(v).map(|inner| Self { inner }).map_err(err)
    }

    /// Permutations with affine-grid latents.
    #[staticmethod]
    fn matching(v: usize) -> PyResult<Self> {
        StructureSpace::permutation(v)
            .and_then(|s| s.with_latent(LatentKind::AffineGrid))
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn v(&self) -> usize {
        self.inner.v()
    }

    #[getter]
    fn b(&self) -> usize {
        self.inner.b()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    #[getter]
    fn latent_count(&self) -> usize {
        self.inner.latent_count()
    }

    fn output_count(&self) -> PyResult<u128> {
        self.inner.output_count().map_err(err)
    }

    fn outputs(&self) -> PyResult<Vec<String>> {
        Ok(self.inner.outputs().map_err(err)?.iter().map(|y| self.inner.format_output(y)).collect())
    }

    fn beta(&self) -> PyResult<f64> {
        self.inner.beta_constant().map_err(err)
    }

    fn beta_ratio(&self) -> PyResult<(u64, u64)> {
        self.inner.beta_ratio().map_err(err)
    }

    #[pyo3(signature = (seed = 0))]
    fn sample(&self, seed: u64) -> PyResult<(String, usize)> {
        let p = self.inner.sample_uniform(&mut stream(seed)).map_err(err)?;
        Ok(self.pair(&p))
    }

    fn neighbors(&self, y: &str, h: usize) -> PyResult<Vec<(String, usize)>> {
        let p = self.point(y, h)?;
        Ok(self.inner.neighbors(&p).map_err(err)?.iter().map(|q| self.pair(q)).collect())
    }

    fn distortion(&self, y: &str, y_hat: &str) -> PyResult<f64> {
        let y = self.inner.parse_output(y).map_err(err)?;
        let y_hat = self.inner.parse_output(y_hat).map_err(err)?;
        self.inner.distortion(&y, &y_hat, Latent(0)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Space({})", self.inner.label())
    }
}

#[pyclass(name = "Dataset", module = "randslack_py", frozen)]
struct PyDataset {
    inner: harness::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (space, n, seed = 0))]
    fn synthetic(space: &PySpace, n: usize, seed: u64) -> PyResult<Self> {
        harness::generate_synthetic(&space.inner, n, seed).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (v, n, noise = 0.1, seed = 0))]
    fn matching(v: usize, n: usize, noise: f64, seed: u64) -> PyResult<Self> {
        harness::generate_matching(v, n, noise, seed).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|inner| Self { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        harness::to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn space(&self) -> PySpace {
        PySpace { inner: self.inner.space.clone() }
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.samples.iter().map(|s| self.inner.space.format_output(&s.y)).collect()
    }

    #[getter]
    fn w_star(&self) -> Vec<f64> {
        self.inner.w_star.values().to_vec()
    }

    /// Indices whose label is not the exact decoding under the generating parameter.
    fn audit(&self) -> PyResult<Vec<usize>> {
        self.inner.audit().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Model", module = "randslack_py", frozen)]
struct PyModel {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    weights: Vec<f64>,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    #[pyo3(get)]
    wall_time: f64,
    #[pyo3(get)]
    proposal_draws: u64,
}

#[pyfunction]
#[pyo3(signature = (data, method = "random", iterations = 30, seed = 0, lam = None, eta0 = 1.0, draws = None))]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    method: &str,
    iterations: usize,
    seed: u64,
    lam: Option<f64>,
    eta0: f64,
    draws: Option<usize>,
) -> PyResult<PyModel> {
    let mut config = TrainConfig::new(Method::parse(method).map_err(err)?)
        .with_seed(seed)
        .with_iterations(iterations);
    config.lambda = lam;
    config.eta0 = eta0;
    if let Some(size) = draws {
        config.size_rule = ProposalSizeRule::Fixed { size };
    }
    let ds = &data.inner;
    let report = py
        .detach(|| randslack::train(&ds.samples, &ds.space, &ds.map, &config))
        .map_err(err)?;
    Ok(PyModel {
        method: report.method.name().to_string(),
        weights: report.w_final.into_values(),
        objective_trace: report.objective_trace,
        wall_time: report.wall_time,
        proposal_draws: report.proposal_draw_count,
    })
}

/// Decodes sample `index`; returns `(y, h, score)`.
#[pyfunction]
#[pyo3(signature = (weights, data, index, mode = "exact", draws = 6, seed = 0))]
fn decode(weights: Vec<f64>, data: &PyDataset, index: usize, mode: &str, draws: usize, seed: u64) -> PyResult<(String, usize, f64)> {
    let ds = &data.inner;
    let sample = ds
        .samples
        .get(index)
        .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
    let w = ModelParams::new(weights);
    let d = match mode {
        "exact" => randslack::exact_decode(&w, &sample.x, &ds.space, &ds.map),
        "random" => randslack::build_proposal_set(&w, &sample.x, &ds.space, &ds.map, draws, derive_seed(seed, &[index as u64]))
            .and_then(|set| randslack::random_decode(&w, &sample.x, &ds.space, &set, &ds.map)),
        other => return Err(PyValueError::new_err(format!("mode must be exact or random, got {other:?}"))),
    }
    .map_err(err)?;
    Ok((ds.space.format_output(&d.point.output), d.point.latent.0, d.score))
}

#[pyfunction]
fn proposal_set_size(beta: f64, gamma: f64, w_l2: f64, n: usize) -> PyResult<usize> {
    randslack::proposal_set_size(beta, gamma, w_l2, n).map_err(err)
}

#[pyfunction]
fn alpha_scale(gamma: f64, r: u128, n: usize, w_l2: f64) -> PyResult<f64> {
    bounds::alpha_scale(gamma, r, n, w_l2).map_err(err)
}

/// Fixed-point-free permutations of `v` elements.
#[pyfunction]
fn derangement_count(v: u64) -> PyResult<u128> {
    u128::try_from(verification::derangement_count(v))
        .map_err(|_| PyValueError::new_err(format!("derangement count of {v} exceeds 128 bits")))
}

/// `(worst_count, output_count, passes)` for the maximal-distortion mass.
#[pyfunction]
fn verify_beta(space: &PySpace) -> PyResult<(u64, u64, bool)> {
    let r = verification::verify_beta(&space.inner).map_err(err)?;
    Ok((r.worst_count, r.output_count, r.passes))
}

/// Every verification oracle as `(claim, instance, passes)` rows.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify_all(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, String, bool)>> {
    let m = py.detach(|| verification::verify_all(seed)).map_err(err)?;
    Ok(m.results.into_iter().map(|r| (r.claim, r.instance, r.passes)).collect())
}

/// Summary rows of a repeated train/test experiment.
#[pyfunction]
#[pyo3(signature = (space, reps = 3, n_train = 100, n_test = 100, seed = 0, iterations = 30))]
fn run_experiment<'py>(
    py: Python<'py>,
    space: &PySpace,
    reps: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
    iterations: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = harness::ExperimentConfig::new(reps, n_train, n_test, seed);
    config.iterations = iterations;
    let report = py.detach(|| harness::run_experiment(&space.inner, &config)).map_err(err)?;
    report
        .results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", &r.method)?;
            d.set_item("train_runtime_s", r.train_runtime_s)?;
            d.set_item("test_runtime_s", r.test_runtime_s)?;
            d.set_item("train_distortion", r.train_distortion)?;
            d.set_item("test_distortion", r.test_distortion)?;
            d.set_item("hw_train", r.hw_train)?;
            d.set_item("hw_test", r.hw_test)?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn feature_dim(data: &PyDataset) -> usize {
    data.inner.map.dim()
}

#[pymodule]
pub fn randslack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySpace>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(proposal_set_size, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_scale, m)?)?;
    m.add_function(wrap_pyfunction!(derangement_count, m)?)?;
    m.add_function(wrap_pyfunction!(verify_beta, m)?)?;
    m.add_function(wrap_pyfunction!(verify_all, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(feature_dim, m)?)?;
    Ok(())
}
