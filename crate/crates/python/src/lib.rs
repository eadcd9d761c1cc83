//! Python bindings: domains, policies, batches, structure learning, the
//! evaluators, theory reports and sweeps.
//!
//! Structured reports cross the boundary as JSON and come back as plain
//! dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use gscope::domains::{plan_target_policy, reward_lookahead_policy, DomainSpec};
use gscope::evaluators::{
    evaluate_cis, evaluate_flat, evaluate_known_structure, evaluate_mfmc, evaluate_model_based, EvalResult,
    MfmcOptions,
};
use gscope::fmdp::{exact_value, sample_batch};
use gscope::gscope::{build_model, learn_structure, sample_threshold, Thresholds};
use gscope::sweep::{run_sweep, write_csv, SweepConfig};
use gscope::theory::{check_assumptions, compute_psi, theorem1_bound, BoundInputs};

create_exception!(gscope_py, RefusedError, PyException, "The request is infeasible at this size.");

fn py_err(e: gscope::Error) -> PyErr {
    if e.is_refusal() {
        RefusedError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for gscope::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn thresholds(eps: f64, delta1: f64, c2: f64, min_count: Option<u64>, gamma: usize) -> PyResult<Thresholds> {
    let th = Thresholds::new(eps, delta1, c2, gamma).or_py()?;
    match min_count {
        Some(n) => th.with_min_count(n).or_py(),
        None => Ok(th),
    }
}

/// A factored MDP.
#[pyclass(name = "FactoredMDP", frozen)]
struct FactoredMdp(gscope::FactoredMdp);

#[pymethods]
impl FactoredMdp {
    /// Build a registered domain (`taxi`, `random-fmdp`, `copy-chain`,
    /// `assumption1-violation`, `assumption3-violation`).
    #[staticmethod]
    #[pyo3(signature = (name, d=None, gamma=None, actions=None, seed=None, horizon=None))]
    fn domain(
        name: &str,
        d: Option<usize>,
        gamma: Option<usize>,
        actions: Option<usize>,
        seed: Option<u64>,
        horizon: Option<usize>,
    ) -> PyResult<Self> {
        let spec = DomainSpec {
            d,
            gamma,
            actions,
            seed,
            horizon,
            ..DomainSpec::named(name)
        };
        Ok(FactoredMdp(spec.build().or_py()?))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(FactoredMdp(gscope::FactoredMdp::from_json(text).or_py()?))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().or_py()
    }

    #[getter]
    fn n_vars(&self) -> usize {
        self.0.n_vars()
    }

    #[getter]
    fn gamma(&self) -> usize {
        self.0.gamma()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.0.n_actions()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn parents(&self) -> Vec<Vec<usize>> {
        self.0.parents().to_vec()
    }

    fn with_horizon(&self, horizon: usize) -> Self {
        FactoredMdp(self.0.clone().with_horizon(horizon))
    }

    /// Exact value of `policy` by backward induction.
    fn exact_value(&self, policy: &Policy) -> PyResult<f64> {
        exact_value(&self.0, &policy.0).or_py()
    }

    /// `h` trajectories under `policy`.
    #[pyo3(signature = (policy, h, seed=0))]
    fn sample(&self, policy: &Policy, h: usize, seed: u64) -> PyResult<TrajectoryBatch> {
        Ok(TrajectoryBatch(sample_batch(&self.0, &policy.0, h, seed).or_py()?))
    }

    fn __repr__(&self) -> String {
        format!(
            "FactoredMDP(D={}, gamma={}, A={}, T={})",
            self.0.n_vars(),
            self.0.gamma(),
            self.0.n_actions(),
            self.0.horizon()
        )
    }
}

/// A Markov policy.
#[pyclass(frozen)]
struct Policy(gscope::Policy);

#[pymethods]
impl Policy {
    #[staticmethod]
    fn uniform(n_actions: usize) -> Self {
        Policy(gscope::Policy::uniform(n_actions))
    }

    #[staticmethod]
    #[pyo3(signature = (mdp, action, eps_floor=0.0))]
    fn constant(mdp: &FactoredMdp, action: usize, eps_floor: f64) -> PyResult<Self> {
        let p = gscope::Policy::constant(mdp.0.n_actions(), mdp.0.gamma(), action).or_py()?;
        Ok(Policy(p.epsilon_floor(eps_floor).or_py()?))
    }

    /// Finite-horizon optimal policy on the true model.
    #[staticmethod]
    #[pyo3(signature = (mdp, eps_floor=0.0))]
    fn planned(mdp: &FactoredMdp, eps_floor: f64) -> PyResult<Self> {
        Ok(Policy(plan_target_policy(&mdp.0, eps_floor).or_py()?))
    }

    #[staticmethod]
    #[pyo3(signature = (mdp, eps_floor=0.0))]
    fn reward_lookahead(mdp: &FactoredMdp, eps_floor: f64) -> PyResult<Self> {
        Ok(Policy(reward_lookahead_policy(&mdp.0, eps_floor).or_py()?))
    }

    fn action_probs(&self, state: Vec<u8>) -> Vec<f64> {
        let mut out = vec![0.0; self.0.n_actions()];
        self.0.action_probs(&state, &mut out);
        out
    }
}

/// Logged trajectories.
#[pyclass(frozen)]
struct TrajectoryBatch(gscope::TrajectoryBatch);

#[pymethods]
impl TrajectoryBatch {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(TrajectoryBatch)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_transitions(&self) -> usize {
        self.0.n_transitions()
    }

    /// Undiscounted return of every trajectory.
    fn returns(&self) -> Vec<f64> {
        self.0.trajectories.iter().map(|t| t.total_reward()).collect()
    }

    fn data_hash(&self) -> String {
        self.0.data_hash()
    }
}

/// An estimated model with its known-set bookkeeping.
#[pyclass(frozen)]
struct LearnedModel(gscope::gscope::LearnedModel);

#[pymethods]
impl LearnedModel {
    #[staticmethod]
    #[pyo3(signature = (batch, parents, eps, delta1, c2=0.0, min_count=None))]
    fn build(
        batch: &TrajectoryBatch,
        parents: Vec<Vec<usize>>,
        eps: f64,
        delta1: f64,
        c2: f64,
        min_count: Option<u64>,
    ) -> PyResult<Self> {
        let th = thresholds(eps, delta1, c2, min_count, batch.0.gamma)?;
        Ok(LearnedModel(build_model(&batch.0, &parents, &th).or_py()?))
    }

    /// The true model with every row sufficient.
    #[staticmethod]
    fn from_true_model(mdp: &FactoredMdp) -> Self {
        LearnedModel(gscope::gscope::LearnedModel::from_true_model(&mdp.0))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(LearnedModel(gscope::gscope::LearnedModel::from_json(text).or_py()?))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().or_py()
    }

    #[getter]
    fn parents(&self) -> Vec<Vec<usize>> {
        self.0.parents().to_vec()
    }

    /// Sufficient `(v, a)` rows per variable.
    fn sufficient_counts(&self) -> Vec<usize> {
        self.0.sufficient_counts()
    }

    fn is_known(&self, state: Vec<u8>, action: usize) -> bool {
        self.0.is_known(&state, action)
    }
}

/// Per-sample count `N` for accuracy `eps` with failure probability `delta1`.
#[pyfunction]
fn sample_threshold_n(eps: f64, delta1: f64, gamma: usize) -> PyResult<u64> {
    sample_threshold(eps, delta1, gamma).or_py()
}

type Picks = Vec<Vec<(usize, f64)>>;

/// Greedy parent sets; returns `(parents, picks)` where `picks[i]` lists
/// `(j, gain)` in selection order.
#[pyfunction]
#[pyo3(signature = (batch, eps, delta1, c2=0.0, min_count=None))]
fn learn_parents(
    batch: &TrajectoryBatch,
    eps: f64,
    delta1: f64,
    c2: f64,
    min_count: Option<u64>,
) -> PyResult<(Vec<Vec<usize>>, Picks)> {
    let th = thresholds(eps, delta1, c2, min_count, batch.0.gamma)?;
    let s = learn_structure(&batch.0, &th).or_py()?;
    Ok((s.parents, s.picks))
}

fn result(py: Python<'_>, r: gscope::Result<EvalResult>) -> PyResult<Py<PyAny>> {
    to_py(py, &r.or_py()?)
}

#[pyfunction]
#[pyo3(signature = (model, mdp, target, n_rollouts=1000, seed=0))]
fn evaluate_model(
    py: Python<'_>,
    model: &LearnedModel,
    mdp: &FactoredMdp,
    target: &Policy,
    n_rollouts: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    result(py, evaluate_model_based(&model.0, &mdp.0, &target.0, n_rollouts, seed))
}

#[pyfunction]
#[pyo3(signature = (batch, mdp, target, eps, delta1, c2=0.0, min_count=None, n_rollouts=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn evaluate_ks(
    py: Python<'_>,
    batch: &TrajectoryBatch,
    mdp: &FactoredMdp,
    target: &Policy,
    eps: f64,
    delta1: f64,
    c2: f64,
    min_count: Option<u64>,
    n_rollouts: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let th = thresholds(eps, delta1, c2, min_count, mdp.0.gamma())?;
    result(py, evaluate_known_structure(&batch.0, &mdp.0, &th, &target.0, n_rollouts, seed))
}

#[pyfunction(name = "evaluate_flat")]
#[pyo3(signature = (batch, mdp, target, n_rollouts=1000, seed=0))]
fn evaluate_flat_py(
    py: Python<'_>,
    batch: &TrajectoryBatch,
    mdp: &FactoredMdp,
    target: &Policy,
    n_rollouts: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    result(py, evaluate_flat(&batch.0, &mdp.0, &target.0, n_rollouts, seed))
}

#[pyfunction(name = "evaluate_mfmc")]
#[pyo3(signature = (batch, target, k=1, n_artificial=None, seed=0))]
fn evaluate_mfmc_py(
    py: Python<'_>,
    batch: &TrajectoryBatch,
    target: &Policy,
    k: usize,
    n_artificial: Option<usize>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    result(py, evaluate_mfmc(&batch.0, &target.0, MfmcOptions { k, n_artificial }, seed))
}

#[pyfunction(name = "evaluate_cis")]
#[pyo3(signature = (batch, target, behavior, clip=f64::INFINITY))]
fn evaluate_cis_py(
    py: Python<'_>,
    batch: &TrajectoryBatch,
    target: &Policy,
    behavior: &Policy,
    clip: f64,
) -> PyResult<Py<PyAny>> {
    result(py, evaluate_cis(&batch.0, &target.0, &behavior.0, clip))
}

/// Brute-force assumption report (as a dict) for models with at most ten
/// variables.
#[pyfunction(name = "check_assumptions")]
#[pyo3(signature = (mdp, weighting=None))]
fn check_assumptions_py(py: Python<'_>, mdp: &FactoredMdp, weighting: Option<&Policy>) -> PyResult<Py<PyAny>> {
    to_py(py, &check_assumptions(&mdp.0, weighting.map(|p| &p.0)).or_py()?)
}

/// Mismatch coefficients `ψᵢ` over the true parent sets.
#[pyfunction]
fn mismatch_coefficients(mdp: &FactoredMdp, behavior: &Policy, target: &Policy) -> PyResult<Vec<f64>> {
    compute_psi(&mdp.0, &behavior.0, &target.0, mdp.0.parents()).or_py()
}

/// Evaluation bound from a dict of `BoundInputs` fields.
#[pyfunction]
fn evaluation_bound(py: Python<'_>, inputs: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let text: String = py.import("json")?.call_method1("dumps", (inputs,))?.extract()?;
    let inputs: BoundInputs = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &theorem1_bound(&inputs).or_py()?)
}

/// Runs a sweep from a preset name or TOML text; returns `(csv, summary)`.
#[pyfunction(name = "run_sweep")]
#[pyo3(signature = (config, trials=None, h_grid=None))]
fn run_sweep_py(
    py: Python<'_>,
    config: &str,
    trials: Option<usize>,
    h_grid: Option<Vec<usize>>,
) -> PyResult<(String, Py<PyAny>)> {
    let mut c = if SweepConfig::preset_names().any(|n| n == config) {
        SweepConfig::preset(config)
    } else {
        SweepConfig::from_toml(config)
    }
    .or_py()?;
    if let Some(t) = trials {
        c.trials = t;
    }
    if let Some(h) = h_grid {
        c.h_grid = h;
    }
    let out = py.detach(|| run_sweep(&c)).or_py()?;
    let mut buf = Vec::new();
    write_csv(&out.rows, &mut buf).or_py()?;
    let csv = String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((csv, to_py(py, &out.summary)?))
}

#[pymodule]
pub fn gscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RefusedError", m.py().get_type::<RefusedError>())?;
    m.add_class::<FactoredMdp>()?;
    m.add_class::<Policy>()?;
    m.add_class::<TrajectoryBatch>()?;
    m.add_class::<LearnedModel>()?;
    m.add_function(wrap_pyfunction!(sample_threshold_n, m)?)?;
    m.add_function(wrap_pyfunction!(learn_parents, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_ks, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_flat_py, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_mfmc_py, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_cis_py, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions_py, m)?)?;
    m.add_function(wrap_pyfunction!(mismatch_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(evaluation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep_py, m)?)?;
    Ok(())
}
