//! Python bindings: mechanisms, flows, QSD transforms, the discrete model,
//! simulation and the verification suites.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qsdlab::discrete::{self, DiscreteBranching, DsbpFlow};
use qsdlab::flow::{Backend, Flow as CoreFlow, FlowConfig};
use qsdlab::mechanism::BranchingMechanism;
use qsdlab::montecarlo::{self, SimConfig, TrajectoryEnsemble};
use qsdlab::qsd::{self, LimitQuery, Regime, WhichLimit};
use qsdlab::{fixtures, verify};

create_exception!(qsdlab, QsdlabError, PyException, "Base class of every qsdlab failure.");
create_exception!(qsdlab, ContractError, QsdlabError, "A request outside an operation's hypotheses.");
create_exception!(qsdlab, NoQsdError, ContractError, "The rate of decay is not a multiple of beta0.");
create_exception!(qsdlab, NumericError, QsdlabError, "Numerical or statistical breakdown.");

fn to_py(e: qsdlab::Error) -> PyErr {
    let msg = e.to_string();
    match e {
        qsdlab::Error::NoQsd { .. } => NoQsdError::new_err(msg),
        e if e.is_numeric() => NumericError::new_err(msg),
        _ => ContractError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for qsdlab::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_regime(name: &str) -> PyResult<Regime> {
    match name {
        "explosive" => Ok(Regime::Explosive),
        "extinction" => Ok(Regime::Extinction),
        other => Err(ContractError::new_err(format!("unknown regime {other:?}"))),
    }
}

/// A branching mechanism Ψ.
#[pyclass(name = "Mechanism", module = "qsdlab", frozen)]
struct Mechanism {
    inner: BranchingMechanism,
}

#[pymethods]
impl Mechanism {
    /// Parse the JSON form, e.g. '{"family": "stable_minus", "k": 1, "alpha": 0.5}'.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Mechanism {
            inner: BranchingMechanism::from_json(text).py_err()?,
        })
    }

    /// One of the shipped fixtures, by name.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(Mechanism {
            inner: fixtures::continuous(name).py_err()?,
        })
    }

    /// Ψ(u) = c u^{1+α}.
    #[staticmethod]
    fn stable_plus(c: f64, alpha: f64) -> PyResult<Self> {
        Self::checked(BranchingMechanism::StablePlus { c, alpha })
    }

    /// Ψ(u) = -k u^{1-α}.
    #[staticmethod]
    fn stable_minus(k: f64, alpha: f64) -> PyResult<Self> {
        Self::checked(BranchingMechanism::StableMinus { k, alpha })
    }

    /// Ψ(u) = c u - k u^{1-α}.
    #[staticmethod]
    fn linear_stable_minus(c: f64, k: f64, alpha: f64) -> PyResult<Self> {
        Self::checked(BranchingMechanism::LinearStableMinus { c, k, alpha })
    }

    #[staticmethod]
    fn truncated_pareto(rho: f64, alpha: f64, h0: f64) -> PyResult<Self> {
        Self::checked(BranchingMechanism::TruncatedPareto { rho, alpha, h0 })
    }

    fn psi(&self, u: f64) -> PyResult<f64> {
        self.inner.psi(u).py_err()
    }

    /// Classification as a dict.
    fn classify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let c = qsdlab::classify(&self.inner).py_err()?;
        json_to_py(py, &serde_json::to_string(&c).expect("classification serialises"))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Mechanism({})", self.inner.to_json())
    }
}

impl Mechanism {
    fn checked(inner: BranchingMechanism) -> PyResult<Self> {
        inner.validate().py_err()?;
        Ok(Mechanism { inner })
    }
}

/// The flow u(t, λ) of a mechanism, with its derived curves.
#[pyclass(name = "Flow", module = "qsdlab", frozen)]
struct Flow {
    inner: CoreFlow,
}

#[pymethods]
impl Flow {
    #[new]
    fn new(mechanism: &Mechanism) -> PyResult<Self> {
        Ok(Flow {
            inner: CoreFlow::new(&mechanism.inner).py_err()?,
        })
    }

    /// u(t, λ). `backend` is "phi_inversion", "ode" or "cross_check".
    #[pyo3(signature = (t, lam, backend = "phi_inversion", rel_tol = None))]
    fn u(&self, py: Python<'_>, t: f64, lam: f64, backend: &str, rel_tol: Option<f64>) -> PyResult<f64> {
        Ok(self.u_result(py, t, lam, backend, rel_tol)?.0)
    }

    /// (value, error estimate, backend agreement gap or None).
    #[pyo3(signature = (t, lam, backend = "phi_inversion", rel_tol = None))]
    fn u_result(
        &self,
        py: Python<'_>,
        t: f64,
        lam: f64,
        backend: &str,
        rel_tol: Option<f64>,
    ) -> PyResult<(f64, f64, Option<f64>)> {
        let mut cfg = FlowConfig::with_backend(backend.parse::<Backend>().py_err()?);
        if let Some(tol) = rel_tol {
            cfg.rel_tol = tol;
        }
        cfg.validate().py_err()?;
        let r = py.detach(|| self.inner.u(t, lam, &cfg)).py_err()?;
        Ok((r.value, r.achieved_error_estimate, r.agreement_gap))
    }

    /// Φ(λ): the explosive form for explosive mechanisms, the extinction form otherwise.
    fn phi(&self, lam: f64) -> PyResult<f64> {
        if self.inner.classification().almost_sure_explosion {
            self.inner.phi_explosive(lam).py_err()
        } else {
            self.inner.phi_extinction(lam).py_err()
        }
    }

    /// aₜ = u(t, 0+).
    fn a(&self, t: f64) -> PyResult<f64> {
        self.inner.a(t).py_err()
    }

    /// v(t) = u(t, ∞-).
    fn v(&self, t: f64) -> PyResult<f64> {
        self.inner.v(t).py_err()
    }

    /// dₜ = e^{-Dt}.
    fn drift(&self, t: f64) -> PyResult<f64> {
        self.inner.drift(t).py_err()
    }

    /// The rescaling f(t).
    fn scaling_f(&self, t: f64) -> PyResult<f64> {
        self.inner.scaling_f(t).py_err()
    }

    /// E_x[e^{-λZ_t} | T > t] for an explosive mechanism.
    fn conditional_laplace(&self, x: f64, t: f64, lam: f64) -> PyResult<f64> {
        qsd::conditional_laplace_explosive(&self.inner, x, t, lam).py_err()
    }

    /// Rows (λ, transform, limit, gap) comparing the exact conditional
    /// transform at `t` with a limit theorem.
    #[pyo3(signature = (which, x, t, lambdas, s = None))]
    fn evaluate_limit(
        &self,
        which: &str,
        x: f64,
        t: f64,
        lambdas: Vec<f64>,
        s: Option<f64>,
    ) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let q = LimitQuery {
            x,
            t,
            lambdas,
            which: which.parse::<WhichLimit>().py_err()?,
            s,
        };
        let rows = qsd::evaluate_limit(&self.inner, &q).py_err()?;
        Ok(rows.into_iter().map(|r| (r.lambda, r.transform, r.limit, r.gap)).collect())
    }
}

/// Laplace transform of the QSD with rate of decay `beta`.
#[pyfunction]
#[pyo3(signature = (mechanism, beta, lam, regime = "explosive"))]
fn qsd_laplace(mechanism: &Mechanism, beta: f64, lam: f64, regime: &str) -> PyResult<f64> {
    qsd::qsd_laplace(&mechanism.inner, beta, parse_regime(regime)?, lam).py_err()
}

/// A discrete-state branching process.
#[pyclass(name = "DiscreteModel", module = "qsdlab", frozen)]
struct DiscreteModel {
    inner: DiscreteBranching,
}

#[pymethods]
impl DiscreteModel {
    #[staticmethod]
    fn sibuya(c: f64, alpha: f64) -> PyResult<Self> {
        let inner = DiscreteBranching::sibuya(c, alpha);
        inner.validate().py_err()?;
        Ok(DiscreteModel { inner })
    }

    /// Offspring law given by `pmf[k] = ξ(k)`.
    #[staticmethod]
    fn finite(c: f64, pmf: Vec<f64>) -> PyResult<Self> {
        let inner = DiscreteBranching::finite(c, pmf);
        inner.validate().py_err()?;
        Ok(DiscreteModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(DiscreteModel {
            inner: DiscreteBranching::from_json(text).py_err()?,
        })
    }

    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(DiscreteModel {
            inner: fixtures::discrete(name).py_err()?,
        })
    }

    fn beta0(&self) -> PyResult<f64> {
        Ok(discrete::dsbp_classify(&self.inner).py_err()?.beta0)
    }

    fn phi(&self, r: f64) -> PyResult<f64> {
        discrete::dsbp_phi(&self.inner, r).py_err()
    }

    /// F(t, r) = E_1[r^{Z_t}]; r = 1 gives the survival probability.
    #[pyo3(name = "F")]
    fn big_f(&self, t: f64, r: f64) -> PyResult<f64> {
        DsbpFlow::new(&self.inner).py_err()?.f(t, r).py_err()
    }

    /// (pmf over k = 1..K, mass beyond K) of the QSD with rate n β₀.
    #[pyo3(signature = (n = 1, k = discrete::DEFAULT_TRUNCATION))]
    fn qsd_pmf(&self, n: u32, k: usize) -> PyResult<(Vec<f64>, f64)> {
        let q = discrete::dsbp_qsd_pmf(&self.inner, n, k).py_err()?;
        Ok((q.pmf, q.truncation_residual))
    }

    /// Same for an arbitrary rate; raises NoQsdError off the spectrum n β₀.
    #[pyo3(signature = (beta, k = discrete::DEFAULT_TRUNCATION))]
    fn qsd_pmf_for_rate(&self, beta: f64, k: usize) -> PyResult<(Vec<f64>, f64)> {
        let q = discrete::dsbp_qsd_pmf_for_rate(&self.inner, beta, k).py_err()?;
        Ok((q.pmf, q.truncation_residual))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("model serialises")
    }
}

/// Sampled states (one list per path) and final flags.
type EnsembleOut = (Vec<Vec<f64>>, Vec<&'static str>);

fn ensemble_out(ens: TrajectoryEnsemble) -> EnsembleOut {
    let flags = ens.paths.iter().map(|p| p.flag.as_str()).collect();
    let states = ens.paths.into_iter().map(|p| p.states).collect();
    (states, flags)
}

/// Simulate CSBP paths from `x`; exploded states are inf.
#[pyfunction]
#[pyo3(signature = (mechanism, x, times, n_paths, seed, threshold = 1e12, cutoff = 1e-4))]
fn simulate(
    py: Python<'_>,
    mechanism: &Mechanism,
    x: f64,
    times: Vec<f64>,
    n_paths: usize,
    seed: u64,
    threshold: f64,
    cutoff: f64,
) -> PyResult<EnsembleOut> {
    let horizon = times.last().copied().unwrap_or(0.0);
    let cfg = SimConfig::new(seed, n_paths, horizon).with_threshold(threshold).with_cutoff(cutoff);
    let mech = mechanism.inner.clone();
    let ens = py.detach(|| montecarlo::simulate_csbp(&mech, x, &times, &cfg)).py_err()?;
    Ok(ensemble_out(ens))
}

/// Simulate DSBP paths from `n0` individuals.
#[pyfunction]
#[pyo3(signature = (model, n0, times, n_paths, seed, threshold = 1e12))]
fn simulate_dsbp(
    py: Python<'_>,
    model: &DiscreteModel,
    n0: u64,
    times: Vec<f64>,
    n_paths: usize,
    seed: u64,
    threshold: f64,
) -> PyResult<EnsembleOut> {
    let horizon = times.last().copied().unwrap_or(0.0);
    let cfg = SimConfig::new(seed, n_paths, horizon).with_threshold(threshold);
    let d = model.inner.clone();
    let ens = py.detach(|| montecarlo::simulate_dsbp(&d, n0, &times, &cfg)).py_err()?;
    Ok(ensemble_out(ens))
}

/// Run a verification suite (or group) and return the report as a dict.
#[pyfunction]
#[pyo3(signature = (suite = "deterministic", seed = 7))]
fn run_verify<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let opts = verify::VerifyOptions { seed, threads: 0 };
    let suite = suite.to_string();
    let report = py.detach(|| verify::run(&suite, &opts)).py_err()?;
    json_to_py(py, &report.to_json())
}

#[pymodule]
#[pyo3(name = "qsdlab")]
fn qsdlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("QsdlabError", py.get_type::<QsdlabError>())?;
    m.add("ContractError", py.get_type::<ContractError>())?;
    m.add("NoQsdError", py.get_type::<NoQsdError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_class::<Mechanism>()?;
    m.add_class::<Flow>()?;
    m.add_class::<DiscreteModel>()?;
    m.add_function(wrap_pyfunction!(qsd_laplace, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dsbp, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("FIXTURES", fixtures::CONTINUOUS.to_vec())?;
    m.add("DISCRETE_FIXTURES", fixtures::DISCRETE.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
