//! Python bindings. Structured results (DoF reports, allocation plans, rate
//! curves) are returned as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyList, PyString};

use dcsi_core::channel::{sample_channel as core_sample_channel, RngSeed};
use dcsi_core::csi::{
    build_tx_csi, distortion_bounds as core_bounds, empirical_distortion as core_empirical, make_codebook, quantize_l2,
    BitMatrix, BitSource, Codebook as CoreCodebook, CsiScalingMatrix,
};
use dcsi_core::doftheory::{self, PassiveSet};
use dcsi_core::feedback_alloc::{self, AllocScheme};
use dcsi_core::numerics::{CVec, C64};
use dcsi_core::precoders::{distributed_precoder, perfect_csi, PrecoderOptions, Scheme};
use dcsi_core::ratesim::{db_to_linear, dof_slope, ergodic_curve, rates_and_leakage, SimConfig};
use serde::Serialize;

create_exception!(dcsi, DcsiError, PyValueError, "Invalid input or a failed computation.");
create_exception!(dcsi, ResourceCapError, DcsiError, "A codebook would exceed the size cap.");
create_exception!(dcsi, NumericalError, DcsiError, "The inputs are numerically degenerate.");

fn err(e: dcsi_core::Error) -> PyErr {
    match e {
        dcsi_core::Error::ResourceCap { .. } => ResourceCapError::new_err(e.to_string()),
        _ if e.is_numerical() => NumericalError::new_err(e.to_string()),
        _ => DcsiError::new_err(e.to_string()),
    }
}

/// Convert any serializable value through `json.loads`, so NaN becomes None.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DcsiError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = dcsi_core::Error>>(text: &str) -> PyResult<T> {
    text.parse().map_err(err)
}

/// CSI scaling matrix: row `i` holds the exponents of user `i` at every TX.
#[pyclass(name = "ScalingMatrix", module = "dcsi", frozen)]
struct PyScaling {
    inner: CsiScalingMatrix,
}

#[pymethods]
impl PyScaling {
    /// Build from `"a,b;c,d"` text or a list of rows.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner = if let Ok(s) = spec.cast::<PyString>() {
            parse(s.to_str()?)?
        } else {
            CsiScalingMatrix::new(spec.extract::<Vec<Vec<f64>>>()?).map_err(err)?
        };
        Ok(PyScaling { inner })
    }

    #[staticmethod]
    fn uniform(k: usize, alpha: f64) -> PyResult<Self> {
        Ok(PyScaling { inner: CsiScalingMatrix::uniform(k, alpha).map_err(err)? })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    /// Exponents as given.
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.raw_rows().to_vec()
    }

    /// Exponents with every entry clipped to at most 1.
    fn clipped(&self) -> Vec<Vec<f64>> {
        self.inner.clipped()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("ScalingMatrix('{}')", self.inner)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

fn alpha_arg(obj: &Bound<'_, PyAny>) -> PyResult<CsiScalingMatrix> {
    if let Ok(m) = obj.cast::<PyScaling>() {
        return Ok(m.get().inner.clone());
    }
    Ok(PyScaling::new(obj)?.inner)
}

fn passive_arg(passive: Option<Vec<usize>>, k: usize) -> PyResult<Option<PassiveSet>> {
    let Some(p) = passive else { return Ok(None) };
    if p.contains(&0) {
        return Err(DcsiError::new_err("passive TX indices are 1-based"));
    }
    let set = PassiveSet(p.into_iter().map(|n| n - 1).collect());
    set.validate(k).map_err(err)?;
    Ok(Some(set))
}

/// DoF of one scheme: `czf`, `bzf`, `apzf`, `czf-hq` or `apzf-hq`.
/// `passive` lists the passive TX of each stream, 1-based.
#[pyfunction]
#[pyo3(signature = (alpha, scheme, passive=None))]
fn dof<'py>(
    py: Python<'py>,
    alpha: &Bound<'py, PyAny>,
    scheme: &str,
    passive: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyAny>> {
    let alpha = alpha_arg(alpha)?;
    let passive = passive_arg(passive, alpha.k())?;
    let chosen = || passive.clone().unwrap_or_else(|| doftheory::select_passive_set(&alpha, false));
    let report = match scheme {
        "czf" => doftheory::dof_czf(&alpha),
        "bzf" => doftheory::dof_bzf(&alpha),
        "apzf" => doftheory::dof_apzf(&alpha, &chosen()).map_err(err)?,
        "czf-hq" => doftheory::dof_czf_hq(&alpha),
        "apzf-hq" => doftheory::dof_apzf_hq(&alpha, passive.as_ref()).map_err(err)?,
        other => return Err(DcsiError::new_err(format!("unknown DoF scheme {other:?}"))),
    };
    to_py(py, &report)
}

/// Every DoF calculator on one matrix.
#[pyfunction]
fn dof_table<'py>(py: Python<'py>, alpha: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &doftheory::dof_table(&alpha_arg(alpha)?))
}

/// Passive TX per stream (1-based) chosen for active-passive ZF.
#[pyfunction]
#[pyo3(signature = (alpha, hq=false))]
fn select_passive_set(alpha: &Bound<'_, PyAny>, hq: bool) -> PyResult<Vec<usize>> {
    let s = doftheory::select_passive_set(&alpha_arg(alpha)?, hq);
    Ok(s.0.iter().map(|n| n + 1).collect())
}

/// Optimal allocation of the feedback budget `gamma`.
#[pyfunction]
#[pyo3(signature = (gamma, scheme="czf"))]
fn allocate<'py>(py: Python<'py>, gamma: f64, scheme: &str) -> PyResult<Bound<'py, PyAny>> {
    let plan = match parse::<AllocScheme>(scheme)? {
        AllocScheme::Czf => feedback_alloc::allocate_czf(gamma),
        AllocScheme::Apzf => feedback_alloc::allocate_apzf(gamma),
    }
    .map_err(err)?;
    to_py(py, &plan)
}

#[pyfunction]
#[pyo3(signature = (gammas, scheme="czf"))]
fn allocation_sweep<'py>(py: Python<'py>, gammas: Vec<f64>, scheme: &str) -> PyResult<Bound<'py, PyAny>> {
    let plans = feedback_alloc::allocation_sweep(&gammas, parse(scheme)?).map_err(err)?;
    to_py(py, &plans)
}

fn rows_of(vs: &[CVec]) -> Vec<Vec<C64>> {
    vs.iter().map(|v| v.to_vec()).collect()
}

/// Rows `h_i` of one i.i.d. Rayleigh channel matrix.
#[pyfunction]
#[pyo3(signature = (k, seed=0, stream=0))]
fn sample_channel(k: usize, seed: u64, stream: u64) -> PyResult<Vec<Vec<C64>>> {
    let ch = core_sample_channel(k, RngSeed::new(seed, stream)).map_err(err)?;
    Ok((0..k).map(|i| ch.channel(i).to_vec()).collect())
}

#[allow(clippy::too_many_arguments)]
fn sim_config(
    alpha: &Bound<'_, PyAny>,
    scheme: &str,
    snr_db: Vec<f64>,
    trials: usize,
    seed: u64,
    model: &str,
    bits: Option<&str>,
    nested: bool,
    passive: Option<Vec<usize>>,
) -> PyResult<SimConfig> {
    let alpha = alpha_arg(alpha)?;
    let k = alpha.k();
    let cfg = SimConfig {
        k,
        alpha,
        model: parse(model)?,
        bits: bits.map(parse::<BitMatrix>).transpose()?,
        nested,
        scheme: parse(scheme)?,
        snr_db,
        trials,
        seed,
        options: PrecoderOptions { beacon: None, passive: passive_arg(passive, k)? },
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Ergodic rate curve of one scheme over an SNR grid in dB.
#[pyfunction]
#[pyo3(signature = (alpha, scheme, snr_db, trials=2000, seed=1, model="statistical", bits=None, nested=false, passive=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    alpha: &Bound<'py, PyAny>,
    scheme: &str,
    snr_db: Vec<f64>,
    trials: usize,
    seed: u64,
    model: &str,
    bits: Option<&str>,
    nested: bool,
    passive: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(alpha, scheme, snr_db, trials, seed, model, bits, nested, passive)?;
    let curve = py.detach(|| ergodic_curve(&cfg)).map_err(err)?;
    to_py(py, &curve)
}

/// Empirical DoF: slope of the simulated rates against `log2 P` over the
/// grid points in `[lo_db, hi_db]`.
#[pyfunction]
#[pyo3(signature = (alpha, scheme, snr_db, lo_db, hi_db, trials=2000, seed=1, model="statistical", bits=None, nested=false))]
#[allow(clippy::too_many_arguments)]
fn empirical_dof<'py>(
    py: Python<'py>,
    alpha: &Bound<'py, PyAny>,
    scheme: &str,
    snr_db: Vec<f64>,
    lo_db: f64,
    hi_db: f64,
    trials: usize,
    seed: u64,
    model: &str,
    bits: Option<&str>,
    nested: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = sim_config(alpha, scheme, snr_db, trials, seed, model, bits, nested, None)?;
    let est = py.detach(|| ergodic_curve(&cfg).and_then(|c| dof_slope(&c, lo_db, hi_db))).map_err(err)?;
    to_py(py, &est)
}

/// One channel draw: the effective precoder of `scheme`, the rates and the
/// interference power at each receiver.
#[pyfunction]
#[pyo3(signature = (alpha, scheme, snr_db, seed=1, trial=0, model="statistical"))]
fn single_trial<'py>(
    py: Python<'py>,
    alpha: &Bound<'py, PyAny>,
    scheme: &str,
    snr_db: f64,
    seed: u64,
    trial: u64,
    model: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let alpha = alpha_arg(alpha)?;
    let scheme: Scheme = parse(scheme)?;
    let k = alpha.k();
    let p = db_to_linear(snr_db);
    let s = RngSeed::new(seed, trial);
    let ch = core_sample_channel(k, s.child(1)).map_err(err)?;
    let csi = if scheme == Scheme::PerfectZf {
        perfect_csi(&ch)
    } else {
        build_tx_csi(&ch, &alpha, p, parse(model)?, &BitSource::FromScaling, scheme.is_hq(), s.child(2)).map_err(err)?
    };
    let t = distributed_precoder(scheme, &csi, &alpha, p, &PrecoderOptions::default()).map_err(err)?;
    let (rates, leakage) = rates_and_leakage(&ch, &t).map_err(err)?;
    let cols: Vec<CVec> = (0..k).map(|i| t.t.col(i)).collect();
    let out = pyo3::types::PyDict::new(py);
    out.set_item("channel", (0..k).map(|i| ch.channel(i).to_vec()).collect::<Vec<_>>())?;
    out.set_item("precoder_columns", rows_of(&cols))?;
    out.set_item("rates", rates)?;
    out.set_item("leakage", leakage)?;
    Ok(out.into_any())
}

/// Random vector codebook of `2^bits` unit vectors in `C^k`.
#[pyclass(name = "Codebook", module = "dcsi", frozen)]
struct PyCodebook {
    inner: CoreCodebook,
}

#[pymethods]
impl PyCodebook {
    #[new]
    #[pyo3(signature = (k, bits, seed=0, stream=0))]
    fn new(k: usize, bits: u32, seed: u64, stream: u64) -> PyResult<Self> {
        Ok(PyCodebook { inner: make_codebook(k, bits, RngSeed::new(seed, stream)).map_err(err)? })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn bits(&self) -> u32 {
        self.inner.bits()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn vectors(&self) -> Vec<Vec<C64>> {
        rows_of(self.inner.vectors())
    }

    /// Quantize a channel vector; the input is normalized and phase-aligned
    /// first.
    fn quantize<'py>(&self, py: Python<'py>, h: Vec<C64>) -> PyResult<Bound<'py, PyAny>> {
        let v = CVec::from(h).normalized().map_err(err)?;
        let v = dcsi_core::numerics::phase_align(&v).map_err(err)?;
        let q = quantize_l2(&v, &self.inner).map_err(err)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("index", q.index)?;
        out.set_item("sign", q.sign)?;
        out.set_item("sin2", q.sin2)?;
        out.set_item("vector", q.vector.to_vec())?;
        Ok(out.into_any())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCodebook { inner: CoreCodebook::from_json(text).map_err(err)? })
    }
}

/// Analytical bounds on the distortion of a `2^bits` random codebook.
#[pyfunction]
fn distortion_bounds<'py>(py: Python<'py>, k: usize, bits: u32) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core_bounds(k, bits))
}

#[pyfunction]
#[pyo3(signature = (k, bits, codebooks=100, per_codebook=100, seed=0))]
fn empirical_distortion<'py>(
    py: Python<'py>,
    k: usize,
    bits: u32,
    codebooks: usize,
    per_codebook: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let stats = py.detach(|| core_empirical(k, bits, codebooks, per_codebook, RngSeed::new(seed, 0))).map_err(err)?;
    to_py(py, &stats)
}

/// Scheme identifiers accepted by `simulate`.
#[pyfunction]
fn schemes(py: Python<'_>) -> PyResult<Bound<'_, PyList>> {
    PyList::new(
        py,
        ["perfect-zf", "czf", "rzf", "bzf", "apzf", "apzf-heuristic", "apzf-qpower:<b>", "czf-hq", "apzf-hq"],
    )
}

#[pymodule]
pub fn dcsi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DcsiError", py.get_type::<DcsiError>())?;
    m.add("ResourceCapError", py.get_type::<ResourceCapError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<PyScaling>()?;
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(dof, m)?)?;
    m.add_function(wrap_pyfunction!(dof_table, m)?)?;
    m.add_function(wrap_pyfunction!(select_passive_set, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(allocation_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sample_channel, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_dof, m)?)?;
    m.add_function(wrap_pyfunction!(single_trial, m)?)?;
    m.add_function(wrap_pyfunction!(distortion_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(schemes, m)?)?;
    Ok(())
}
