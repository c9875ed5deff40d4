//! Python bindings. Geometry objects round-trip through the same JSON schema
//! as the experiment config; results come back as plain dicts and lists.

use std::sync::OnceLock;

use acoustolab::husimi::{measure_scan, HusimiOptions, ScanOptions};
use acoustolab::rays::{self, gcc_check_with, GccOptions};
use acoustolab::semigroup::{evolve_with, fit_decay, EvolveOptions};
use acoustolab::spectral::{self, damping_overlap, equipartition_defect};
use acoustolab::{
    ControlRegion as CoreRegion, DampingField as CoreDamping, Domain as CoreDomain, ExperimentConfig, KernelBasis,
    PhasePoint, StateVector, SystemOperator, Vec2,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

create_exception!(pyacoustolab, AcoustolabError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    AcoustolabError::new_err(e.to_string())
}

/// Converts any serializable value into Python objects through `json.loads`.
fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(err)
}

#[pyclass(module = "pyacoustolab", frozen)]
struct Domain(CoreDomain);

#[pymethods]
impl Domain {
    #[staticmethod]
    fn rectangle(lx: f64, ly: f64) -> PyResult<Self> {
        CoreDomain::rectangle(lx, ly).map(Self).map_err(err)
    }

    #[staticmethod]
    fn disk(r_out: f64) -> PyResult<Self> {
        CoreDomain::disk(r_out).map(Self).map_err(err)
    }

    #[staticmethod]
    fn annulus(r_in: f64, r_out: f64) -> PyResult<Self> {
        CoreDomain::annulus(r_in, r_out).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let d: CoreDomain = from_json(text)?;
        d.validate().map_err(err)?;
        Ok(Self(d))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).unwrap_or_default()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.name()
    }

    fn diameter(&self) -> f64 {
        self.0.diameter()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.0.contains(Vec2::new(x, y))
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.to_json())
    }
}

#[pyclass(module = "pyacoustolab", frozen)]
struct DampingField(CoreDamping);

#[pymethods]
impl DampingField {
    #[staticmethod]
    fn constant(amplitude: f64) -> PyResult<Self> {
        Self::checked(CoreDamping::Constant { amplitude })
    }

    #[staticmethod]
    #[pyo3(signature = (width, amplitude, smoothness_exponent = 2.0))]
    fn boundary_collar(width: f64, amplitude: f64, smoothness_exponent: f64) -> PyResult<Self> {
        Self::checked(CoreDamping::BoundaryCollar { width, amplitude, smoothness_exponent })
    }

    #[staticmethod]
    #[pyo3(signature = (center, radius, amplitude, smoothness_exponent = 2.0))]
    fn ball(center: (f64, f64), radius: f64, amplitude: f64, smoothness_exponent: f64) -> PyResult<Self> {
        Self::checked(CoreDamping::Ball { center: [center.0, center.1], radius, amplitude, smoothness_exponent })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::checked(from_json(text)?)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).unwrap_or_default()
    }

    fn eval(&self, domain: &Domain, x: f64, y: f64) -> f64 {
        self.0.eval(&domain.0, Vec2::new(x, y))
    }

    fn __repr__(&self) -> String {
        format!("DampingField({})", self.to_json())
    }
}

impl DampingField {
    fn checked(b: CoreDamping) -> PyResult<Self> {
        b.validate().map_err(err)?;
        Ok(Self(b))
    }
}

/// Discretized damped operator; the kernel basis is computed on first use.
#[pyclass(module = "pyacoustolab", frozen)]
struct Operator {
    op: SystemOperator,
    kernel: OnceLock<KernelBasis>,
}

impl Operator {
    fn kernel(&self, py: Python<'_>) -> PyResult<&KernelBasis> {
        if let Some(k) = self.kernel.get() {
            return Ok(k);
        }
        let k = py.detach(|| KernelBasis::compute(&self.op)).map_err(err)?;
        Ok(self.kernel.get_or_init(|| k))
    }
}

#[pymethods]
impl Operator {
    #[new]
    #[pyo3(signature = (domain, resolution, damping = None))]
    fn new(domain: &Domain, resolution: (usize, usize), damping: Option<&DampingField>) -> PyResult<Self> {
        let b = damping.map_or_else(CoreDamping::zero, |d| d.0.clone());
        let op = SystemOperator::assemble(domain.0, [resolution.0, resolution.1], b).map_err(err)?;
        Ok(Self { op, kernel: OnceLock::new() })
    }

    #[getter]
    fn n_dof(&self) -> usize {
        self.op.n_dof()
    }

    #[getter]
    fn n_faces(&self) -> usize {
        self.op.n_faces()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.op.n_cells()
    }

    fn kernel_dim(&self, py: Python<'_>) -> PyResult<usize> {
        Ok(self.kernel(py)?.dim())
    }

    /// Deterministic initial state, `"smooth"` or `"random"`.
    #[pyo3(signature = (seed = 0, kind = "smooth"))]
    fn initial_state(&self, seed: u64, kind: &str) -> PyResult<Vec<f64>> {
        match kind {
            "smooth" => Ok(StateVector::smooth_random(&self.op, seed).data),
            "random" => Ok(StateVector::random(&self.op, seed).data),
            other => Err(err(format!("unknown initial state kind `{other}`"))),
        }
    }

    fn apply(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(z.len())?;
        Ok(self.op.apply_ad(&z))
    }

    fn energy(&self, z: Vec<f64>) -> PyResult<f64> {
        self.check_len(z.len())?;
        Ok(acoustolab::energy(&self.op, &z))
    }

    /// Runs the midpoint scheme; returns the sampled history and a decay fit.
    #[pyo3(signature = (z0, t_final, dt, sample_every = 1, window_fraction = 0.75))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        z0: Vec<f64>,
        t_final: f64,
        dt: f64,
        sample_every: usize,
        window_fraction: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let k = self.kernel(py)?;
        let z0 = StateVector::from_vec(&self.op, z0).map_err(err)?;
        let traj = py
            .detach(|| evolve_with(&self.op, &z0, t_final, dt, EvolveOptions { sample_every, kernel: Some(k) }))
            .map_err(err)?;
        let fit = match fit_decay(&traj, window_fraction) {
            Ok(f) => json!({ "C": f.amplitude, "c": f.rate, "r_squared": f.r_squared, "points": f.points }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        let out = json!({
            "times": traj.times,
            "energies": traj.energies,
            "damping_integrals": traj.damping_integrals,
            "residual_norms": traj.residual_norms,
            "energy_identity_residual_max": traj.energy_identity_residual_max(),
            "max_energy_increase": traj.max_energy_increase(),
            "max_kernel_drift": traj.max_kernel_drift(),
            "decay_fit": fit,
            "final_state": traj.final_state,
        });
        to_py(py, &out)
    }

    fn resolvent_norm(&self, py: Python<'_>, mu: f64) -> PyResult<f64> {
        let k = self.kernel(py)?;
        py.detach(|| spectral::resolvent_norm(&self.op, k, mu)).map_err(err)
    }

    #[pyo3(signature = (mus, cap = spectral::DEFAULT_CAP))]
    fn resolvent_sweep<'py>(&self, py: Python<'py>, mus: Vec<f64>, cap: f64) -> PyResult<Bound<'py, PyAny>> {
        let k = self.kernel(py)?;
        let res = py.detach(|| spectral::resolvent_sweep(&self.op, k, &mus, cap)).map_err(err)?;
        to_py(py, &res)
    }

    /// Quasimode summary plus the pressure part as `[re, im]` pairs.
    fn quasimode<'py>(&self, py: Python<'py>, mu: f64) -> PyResult<Bound<'py, PyAny>> {
        let k = self.kernel(py)?;
        let qm = py.detach(|| spectral::quasimode(&self.op, k, mu)).map_err(err)?;
        let r: Vec<[f64; 2]> = qm.r.iter().map(|v| [v.re, v.im]).collect();
        let out = json!({
            "mu": qm.mu,
            "h": qm.h,
            "sigma": qm.sigma,
            "defect": qm.defect,
            "norm_u": qm.norm_u,
            "norm_r": qm.norm_r,
            "equipartition_defect": equipartition_defect(&self.op, &qm),
            "damping_overlap": damping_overlap(&self.op, &qm),
            "r": r,
        });
        to_py(py, &out)
    }

    /// One summary dict per `mu`, or `{"mu", "error"}` when that entry failed.
    #[pyo3(signature = (mus, delta = acoustolab::husimi::DEFAULT_DELTA, x0_stride = 1))]
    fn measure_scan<'py>(
        &self,
        py: Python<'py>,
        mus: Vec<f64>,
        delta: f64,
        x0_stride: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let k = self.kernel(py)?;
        let opts = ScanOptions { delta, husimi: HusimiOptions { x0_stride, keep_full: false } };
        let scan = py.detach(|| measure_scan(&self.op, k, &mus, opts)).map_err(err)?;
        let out: Vec<serde_json::Value> = mus
            .iter()
            .zip(scan)
            .map(|(mu, e)| match e {
                Ok(s) => serde_json::to_value(s).unwrap_or_default(),
                Err(e) => json!({ "mu": mu, "error": e.to_string() }),
            })
            .collect();
        to_py(py, &out)
    }
}

impl Operator {
    fn check_len(&self, n: usize) -> PyResult<()> {
        if n != self.op.n_dof() {
            return Err(err(format!("expected a state of length {}, got {n}", self.op.n_dof())));
        }
        Ok(())
    }
}

#[pyfunction]
fn classify_contact(domain: &Domain, x: (f64, f64), xi: (f64, f64)) -> PyResult<&'static str> {
    rays::classify_contact(&domain.0, Vec2::new(x.0, x.1), Vec2::new(xi.0, xi.1)).map(|c| c.label()).map_err(err)
}

/// Polyline `[(s, x, y, event), ...]` of the generalized ray from `(x, xi)`.
#[pyfunction]
#[pyo3(signature = (domain, x, xi, s_max, glide_points = 32))]
fn trace_ray(
    domain: &Domain,
    x: (f64, f64),
    xi: (f64, f64),
    s_max: f64,
    glide_points: usize,
) -> PyResult<Vec<(f64, f64, f64, &'static str)>> {
    let start = PhasePoint::new(Vec2::new(x.0, x.1), Vec2::new(xi.0, xi.1)).map_err(err)?;
    let ray = rays::trace_generalized(&domain.0, start, s_max).map_err(err)?;
    Ok(ray.polyline(glide_points).into_iter().map(|(s, p, l)| (s, p.x, p.y, l)).collect())
}

/// GCC check; `region` is a control-region JSON string or, when omitted,
/// the support of `damping`.
#[pyfunction]
#[pyo3(signature = (domain, region = None, damping = None, n_samples = 2000, s_max = 20.0, seed = 0))]
fn gcc_check<'py>(
    py: Python<'py>,
    domain: &Domain,
    region: Option<&str>,
    damping: Option<&DampingField>,
    n_samples: usize,
    s_max: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let omega: CoreRegion = match (region, damping) {
        (Some(text), _) => from_json(text)?,
        (None, Some(b)) => CoreRegion::from_damping(&b.0),
        (None, None) => return Err(err("either `region` or `damping` is required")),
    };
    let opts = GccOptions { n_samples, s_max, seed, ..GccOptions::default() };
    let d = domain.0;
    let report = py.detach(|| gcc_check_with(&d, &omega, opts)).map_err(err)?;
    to_py(py, &report)
}

/// Parses and validates an experiment config; returns it with defaults filled in.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json_str(text).map_err(err)?;
    to_py(py, &cfg)
}

#[pymodule]
fn pyacoustolab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("AcoustolabError", m.py().get_type::<AcoustolabError>())?;
    m.add_class::<Domain>()?;
    m.add_class::<DampingField>()?;
    m.add_class::<Operator>()?;
    m.add_function(wrap_pyfunction!(classify_contact, m)?)?;
    m.add_function(wrap_pyfunction!(trace_ray, m)?)?;
    m.add_function(wrap_pyfunction!(gcc_check, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    Ok(())
}
