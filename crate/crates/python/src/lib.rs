//! Python bindings: spaces, operators, problems, gains, the iteration
//! engines, the oracle, the certifiers and scenario files. Reports cross the
//! boundary as plain dicts.

use std::path::PathBuf;

use banach_vi::certify::{self, Distribution, OperatorClass, SamplePlan};
use banach_vi::error::Error;
use banach_vi::harness::{self, Overrides};
use banach_vi::iterate::{self, AlgorithmConfig, Preset, Reference};
use banach_vi::operators::{self, GeneratorKnobs, ProblemInstance};
use banach_vi::oracle;
use banach_vi::params::{self, Mode, Schedule};
use banach_vi::space::{self, DualVector, SpaceSpec, Vector};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "Space", module = "banach_vi", frozen, from_py_object)]
#[derive(Clone)]
struct PySpace(SpaceSpec);

#[pymethods]
impl PySpace {
    /// `q` defaults to 2 for `p >= 2` and to `p` otherwise; `d_q` to the
    /// standard constant when one exists.
    #[new]
    #[pyo3(signature = (dim, p, q=None, d_q=None))]
    fn new(dim: usize, p: f64, q: Option<f64>, d_q: Option<f64>) -> PyResult<Self> {
        let q = q.unwrap_or(if p >= 2.0 { 2.0 } else { p });
        let d_q = d_q
            .or_else(|| space::default_smoothness_constant(p, q))
            .ok_or_else(|| {
                PyValueError::new_err(format!("d_q is required for p = {p}, q = {q}"))
            })?;
        SpaceSpec::new(dim, p, q, d_q).map(Self).map_err(err)
    }

    #[staticmethod]
    fn hilbert(dim: usize) -> Self {
        Self(SpaceSpec::hilbert(dim))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    #[getter]
    fn d_q(&self) -> f64 {
        self.0.d_q
    }

    fn norm(&self, x: Vec<f64>) -> PyResult<f64> {
        space::norm(&Vector(x), &self.0).map_err(err)
    }

    fn duality_map(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        space::duality_map(&Vector(x), &self.0)
            .map(|d| d.0)
            .map_err(err)
    }

    fn dual_pair(&self, xs: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        space::dual_pair(&DualVector(xs), &Vector(y), &self.0).map_err(err)
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &space::validate_space(&self.0))
    }

    fn __repr__(&self) -> String {
        format!(
            "Space(dim={}, p={}, q={}, d_q={})",
            self.0.dim, self.0.p, self.0.q, self.0.d_q
        )
    }
}

#[pyclass(name = "Operator", module = "banach_vi", frozen, from_py_object)]
#[derive(Clone)]
struct PyOperator(operators::Operator);

#[pymethods]
impl PyOperator {
    #[staticmethod]
    #[pyo3(signature = (diag, offset=None))]
    fn diagonal(diag: Vec<f64>, offset: Option<Vec<f64>>) -> PyResult<Self> {
        let offset = offset.unwrap_or_else(|| vec![0.0; diag.len()]);
        operators::Operator::diagonal(diag, Vector(offset))
            .map(Self)
            .map_err(err)
    }

    /// `matrix` is a list of rows.
    #[staticmethod]
    #[pyo3(signature = (matrix, offset=None))]
    fn affine(matrix: Vec<Vec<f64>>, offset: Option<Vec<f64>>) -> PyResult<Self> {
        let n = matrix.len();
        if matrix.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let flat: Vec<f64> = matrix.into_iter().flatten().collect();
        let m = banach_vi_matrix(n, &flat);
        let offset = offset.unwrap_or_else(|| vec![0.0; n]);
        operators::Operator::affine(m, Vector(offset))
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn scaled_identity(scale: f64) -> PyResult<Self> {
        operators::Operator::scaled_identity(scale)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self(operators::Operator::identity(dim))
    }

    fn with_contraction(&self, beta: f64) -> PyResult<Self> {
        self.0.clone().with_contraction(beta).map(Self).map_err(err)
    }

    fn with_lipschitz(&self, l: f64) -> PyResult<Self> {
        self.0.clone().with_lipschitz(l).map(Self).map_err(err)
    }

    fn with_accretive(&self, eta: f64) -> PyResult<Self> {
        self.0.clone().with_accretive(eta).map(Self).map_err(err)
    }

    fn with_strictness(&self, k: f64) -> PyResult<Self> {
        self.0.clone().with_strictness(k).map(Self).map_err(err)
    }

    fn with_nonexpansive(&self) -> Self {
        Self(self.0.clone().with_nonexpansive())
    }

    fn apply(&self, x: Vec<f64>, space: &PySpace) -> PyResult<Vec<f64>> {
        operators::apply(&self.0, &Vector(x), &space.0)
            .map(|v| v.0)
            .map_err(err)
    }

    fn fixed_point_residual(&self, x: Vec<f64>, space: &PySpace) -> PyResult<f64> {
        operators::fixed_point_residual(&self.0, &Vector(x), &space.0).map_err(err)
    }

    /// `(anchor, basis)` of the fixed set, or `None` when it is empty.
    fn fixed_set(&self, dim: usize) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        self.0
            .fixed_set(dim)
            .map(|fs| (fs.anchor.0, fs.basis.into_iter().map(|b| b.0).collect()))
    }

    #[getter]
    fn claims<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.claims)
    }

    fn __repr__(&self) -> String {
        format!("Operator({})", iterate::describe(&self.0))
    }
}

fn banach_vi_matrix(n: usize, flat: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(n, n, flat)
}

#[pyfunction]
fn convex_combination(ops: Vec<PyOperator>, weights: Vec<f64>) -> PyResult<PyOperator> {
    operators::convex_combination(ops.into_iter().map(|o| o.0).collect(), weights)
        .map(PyOperator)
        .map_err(err)
}

#[pyfunction]
fn averaged(op: &PyOperator, alpha: f64, space: &PySpace) -> PyResult<PyOperator> {
    operators::averaged(op.0.clone(), alpha, &space.0)
        .map(PyOperator)
        .map_err(err)
}

/// Right-to-left composition.
#[pyfunction]
fn compose(ops: Vec<PyOperator>) -> PyResult<PyOperator> {
    operators::compose(ops.into_iter().map(|o| o.0).collect())
        .map(PyOperator)
        .map_err(err)
}

#[pyfunction]
fn averaging_threshold(lam: f64, q: f64, d_q: f64) -> PyResult<f64> {
    params::averaging_threshold(lam, q, d_q).map_err(err)
}

#[pyclass(name = "Problem", module = "banach_vi", frozen, from_py_object)]
#[derive(Clone)]
struct PyProblem(ProblemInstance);

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (space, operators, contraction, accretive, weights=None))]
    fn new(
        space: &PySpace,
        operators: Vec<PyOperator>,
        contraction: &PyOperator,
        accretive: &PyOperator,
        weights: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let n = operators.len().max(1);
        let p = ProblemInstance {
            space: space.0,
            operators: operators.into_iter().map(|o| o.0).collect(),
            weights: weights.unwrap_or_else(|| vec![1.0 / n as f64; n]),
            contraction: contraction.0.clone(),
            accretive: accretive.0.clone(),
            fixed_set: None,
        };
        p.validate().map_err(err)?;
        Ok(Self(p))
    }

    #[staticmethod]
    fn canonical() -> Self {
        Self(ProblemInstance::canonical())
    }

    /// Deterministic random instance; `knobs` is a dict of generator knobs.
    #[staticmethod]
    #[pyo3(signature = (seed, n_operators, space, knobs=None))]
    fn generate(
        seed: u64,
        n_operators: usize,
        space: &PySpace,
        knobs: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let knobs: GeneratorKnobs = match knobs {
            Some(k) => from_py(k)?,
            None => GeneratorKnobs::default(),
        };
        operators::generate_problem(seed, space.0.dim, n_operators, &space.0, &knobs)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn space(&self) -> PySpace {
        PySpace(self.0.space)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn operators(&self) -> Vec<PyOperator> {
        self.0.operators.iter().cloned().map(PyOperator).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    #[getter]
    fn contraction(&self) -> PyOperator {
        PyOperator(self.0.contraction.clone())
    }

    #[getter]
    fn accretive(&self) -> PyOperator {
        PyOperator(self.0.accretive.clone())
    }

    fn common_fixed_set(&self) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        self.0
            .common_fixed_set()
            .map(|fs| (fs.anchor.0, fs.basis.into_iter().map(|b| b.0).collect()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(dim={}, operators={})",
            self.0.dim(),
            self.0.n_operators()
        )
    }
}

#[pyclass(name = "Gains", module = "banach_vi", frozen, from_py_object)]
#[derive(Clone)]
struct PyGains(params::Gains);

#[pymethods]
impl PyGains {
    #[new]
    fn new(mu: f64, gamma: f64, beta: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> Self {
        Self(params::Gains::new(mu, gamma, beta, eta, lipschitz, q, d_q))
    }

    /// `mu` at half its upper bound, `gamma` at half of `tau / beta`.
    #[staticmethod]
    fn auto(beta: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> PyResult<Self> {
        params::Gains::auto(beta, eta, lipschitz, q, d_q)
            .map(Self)
            .map_err(err)
    }

    /// Gains from the claims of `problem`.
    #[staticmethod]
    fn for_problem(problem: &PyProblem) -> PyResult<Self> {
        let p = &problem.0;
        let missing = |what| PyValueError::new_err(format!("problem declares no {what}"));
        let beta = p
            .contraction
            .claims
            .contraction
            .ok_or_else(|| missing("contraction coefficient"))?;
        let eta = p
            .accretive
            .claims
            .accretive
            .ok_or_else(|| missing("accretivity constant"))?;
        let l = p
            .accretive
            .claims
            .lipschitz
            .ok_or_else(|| missing("Lipschitz constant"))?;
        params::Gains::auto(beta, eta, l, p.space.q, p.space.d_q)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    fn mu_upper_bound(&self) -> f64 {
        self.0.mu_upper_bound()
    }

    fn gamma_upper_bound(&self) -> f64 {
        self.0.gamma_upper_bound()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &params::validate_gains(&self.0))
    }

    fn __repr__(&self) -> String {
        format!(
            "Gains(mu={}, gamma={}, tau={}, beta={})",
            self.0.mu, self.0.gamma, self.0.tau, self.0.beta
        )
    }
}

fn parse_mode(mode: &str) -> PyResult<(Mode, Option<Preset>)> {
    match mode {
        "synchronal" => Ok((Mode::Synchronal, None)),
        "cyclic" => Ok((Mode::Cyclic, None)),
        other => Preset::parse(other)
            .map(|p| (p.mode(), Some(p)))
            .map_err(err),
    }
}

/// Runs one iteration and returns the trace as a dict. Schedules are dicts
/// such as `{"family": "power", "a": 1.0, "r": 1.0}`; `beta` defaults to the
/// smallest admissible constant.
#[pyfunction]
#[pyo3(signature = (
    problem, gains, x0, mode="synchronal", alpha=None, beta=None, max_iter=100_000,
    step_tol=1e-10, residual_tol=1e-6, cadence=1, record_iterates=false,
    override_validation=false, with_oracle=true
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    gains: &PyGains,
    x0: Vec<f64>,
    mode: &str,
    alpha: Option<&Bound<'py, PyAny>>,
    beta: Option<&Bound<'py, PyAny>>,
    max_iter: usize,
    step_tol: f64,
    residual_tol: f64,
    cadence: usize,
    record_iterates: bool,
    override_validation: bool,
    with_oracle: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let (mode, preset) = parse_mode(mode)?;
    let alpha: Schedule = match alpha {
        Some(a) => from_py(a)?,
        None => Schedule::harmonic(),
    };
    let beta: Schedule = match beta {
        Some(b) => from_py(b)?,
        None => Schedule::Constant {
            b: harness::auto_beta(&problem.0).map_err(err)?,
        },
    };
    let mut cfg = AlgorithmConfig::new(problem.0.clone(), gains.0, alpha, beta, Vector(x0), mode);
    cfg.stopping.max_iter = max_iter;
    cfg.stopping.step_tol = step_tol;
    cfg.stopping.residual_tol = residual_tol;
    cfg.cadence = cadence;
    cfg.record_iterates = record_iterates;
    cfg.override_validation = override_validation;
    if let Some(p) = preset {
        cfg = iterate::apply_preset(&cfg, p).map_err(err)?;
    }
    if with_oracle {
        let (o, _) = harness::oracle_for(&cfg.problem, &cfg.gains);
        let probes = cfg
            .problem
            .common_fixed_set()
            .map(|fs| oracle::fixed_set_probes(&fs, oracle::PROBE_COUNT, oracle::PROBE_SEED))
            .unwrap_or_default();
        cfg.reference = Some(Reference {
            x_star: o.map(|o| o.x_star),
            probes,
        });
    }
    let trace = py.detach(|| iterate::run_config(&cfg)).map_err(err)?;
    to_py(py, &trace)
}

/// Regularization path point `x_t` for the canonical-form iteration.
#[pyfunction]
#[pyo3(signature = (t, problem, gains, beta, inner_tol=1e-12, max_inner=10_000_000))]
fn regularization_path<'py>(
    py: Python<'py>,
    t: f64,
    problem: &PyProblem,
    gains: &PyGains,
    beta: f64,
    inner_tol: f64,
    max_inner: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let x0 = problem.0.space.zeros();
    let cfg = AlgorithmConfig::new(
        problem.0.clone(),
        gains.0,
        Schedule::harmonic(),
        Schedule::Constant { b: beta },
        x0,
        Mode::Synchronal,
    );
    let point = iterate::regularization_path(t, &cfg, inner_tol, max_inner).map_err(err)?;
    to_py(py, &point)
}

/// Reference VI solution (Hilbert space only).
#[pyfunction]
fn solve_vi<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    gains: &PyGains,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &oracle::solve_vi_affine(&problem.0, &gains.0).map_err(err)?,
    )
}

/// Max over fixed-set probes of `<(gamma f - mu G) x, j(z - x)>`.
#[pyfunction]
#[pyo3(signature = (x, problem, gains, probes=None))]
fn vi_residual(
    x: Vec<f64>,
    problem: &PyProblem,
    gains: &PyGains,
    probes: Option<Vec<Vec<f64>>>,
) -> PyResult<f64> {
    let probes: Vec<Vector> = match probes {
        Some(p) => p.into_iter().map(Vector).collect(),
        None => {
            let fs = problem
                .0
                .common_fixed_set()
                .ok_or_else(|| PyValueError::new_err("problem has no known common fixed set"))?;
            oracle::fixed_set_probes(&fs, oracle::PROBE_COUNT, oracle::PROBE_SEED)
        }
    };
    oracle::vi_residual(&Vector(x), &problem.0, &gains.0, &probes).map_err(err)
}

/// Samples the defining inequality of `class` ("contraction",
/// "nonexpansive", "lipschitz", "strongly-accretive",
/// "strict-pseudocontraction").
#[pyfunction]
#[pyo3(signature = (op, class_name, constant, space, seed=0, count=1000, radius=10.0))]
#[allow(clippy::too_many_arguments)]
fn certify_operator<'py>(
    py: Python<'py>,
    op: &PyOperator,
    class_name: &str,
    constant: Option<f64>,
    space: &PySpace,
    seed: u64,
    count: usize,
    radius: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let class = OperatorClass::parse(class_name, constant).map_err(err)?;
    let plan = SamplePlan::new(seed, count, radius, Distribution::UniformBall).map_err(err)?;
    to_py(
        py,
        &certify::certify_operator_class(&op.0, class, &space.0, &plan).map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (space, seed=0, count=1000))]
fn certify_space<'py>(
    py: Python<'py>,
    space: &PySpace,
    seed: u64,
    count: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let plan = SamplePlan::new(seed, count, 10.0, Distribution::UniformBall).map_err(err)?;
    to_py(py, &certify::certify_space_inequalities(&space.0, &plan))
}

#[pyclass(name = "Scenario", module = "banach_vi", frozen)]
struct PyScenario(harness::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (path, out=None, max_iter=None, seed=None, cadence=None, override_validation=false))]
    fn from_file(
        path: PathBuf,
        out: Option<PathBuf>,
        max_iter: Option<usize>,
        seed: Option<u64>,
        cadence: Option<usize>,
        override_validation: bool,
    ) -> PyResult<Self> {
        let ov = Overrides {
            out,
            max_iter,
            seed,
            cadence,
            override_validation,
        };
        harness::parse_scenario_with(&path, &ov)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (text, out=None, max_iter=None, seed=None, cadence=None, override_validation=false))]
    fn from_str(
        text: &str,
        out: Option<PathBuf>,
        max_iter: Option<usize>,
        seed: Option<u64>,
        cadence: Option<usize>,
        override_validation: bool,
    ) -> PyResult<Self> {
        let ov = Overrides {
            out,
            max_iter,
            seed,
            cadence,
            override_validation,
        };
        harness::parse_scenario_str(text, &ov)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn problem(&self) -> PyProblem {
        PyProblem(self.0.problem.clone())
    }

    #[getter]
    fn gains(&self) -> PyGains {
        PyGains(self.0.gains)
    }

    #[getter]
    fn runs(&self) -> Vec<String> {
        self.0.runs.iter().map(|r| r.name.clone()).collect()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.file.to_toml().map_err(err)
    }

    /// Runs everything, writes artifacts and returns the per-run summaries.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let outcome = py.detach(|| harness::run_scenario(&self.0)).map_err(err)?;
        let summaries: Vec<_> = outcome.runs.iter().map(|r| &r.summary).collect();
        to_py(py, &summaries)
    }

    fn certify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let summary = py.detach(|| harness::certify_scenario(&self.0));
        to_py(py, &summary)
    }

    fn compare<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let table = py
            .detach(|| harness::compare(&harness::scenario_configs(&self.0)))
            .map_err(err)?;
        to_py(py, &table)
    }

    fn oracle<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        match harness::scenario_oracle(&self.0) {
            (Some(o), _) => to_py(py, &o),
            (None, _) => to_py(
                py,
                &py.detach(|| harness::long_run_reference(&self.0))
                    .map_err(err)?,
            ),
        }
    }
}

#[pymodule]
#[pyo3(name = "banach_vi")]
fn banach_vi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyGains>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(convex_combination, m)?)?;
    m.add_function(wrap_pyfunction!(averaged, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(averaging_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(regularization_path, m)?)?;
    m.add_function(wrap_pyfunction!(solve_vi, m)?)?;
    m.add_function(wrap_pyfunction!(vi_residual, m)?)?;
    m.add_function(wrap_pyfunction!(certify_operator, m)?)?;
    m.add_function(wrap_pyfunction!(certify_space, m)?)?;
    Ok(())
}
