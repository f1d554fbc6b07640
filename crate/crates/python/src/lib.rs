//! Python bindings. Matrices cross the boundary as nested lists, complex
//! numbers as Python `complex`, polynomials as ascending coefficient lists.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use polefeed::linalg::CMat;
use polefeed::{gcd, io, pipeline, plant, polymat, realize, verify};
use polefeed::{Poly, QChoice, RunConfig, StateSpace, Tolerances, C64};

fn err(e: polefeed::Error) -> PyErr {
    match e {
        polefeed::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn cmat(rows: &[Vec<C64>], cols_if_empty: usize) -> PyResult<CMat> {
    let cols = rows.first().map_or(cols_if_empty, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn flat(rows: &[Vec<f64>], what: &str, r: usize, c: usize) -> PyResult<Vec<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!("{what} must be {r}x{c}")));
    }
    Ok(rows.concat())
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Linear time-invariant plant `x' = Ax + Bu`, `y = Cx`.
#[pyclass(name = "Plant", module = "pypolefeed", skip_from_py_object)]
#[derive(Clone)]
struct PyPlant {
    inner: StateSpace,
}

#[pymethods]
impl PyPlant {
    #[new]
    #[pyo3(signature = (a, b, c))]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = a.len();
        let m = b.first().map_or(0, |r| r.len());
        let p = c.len();
        let inner = StateSpace::from_rows(
            n,
            m,
            p,
            &flat(&a, "A", n, n)?,
            &flat(&b, "B", n, m)?,
            &flat(&c, "C", p, n)?,
        )
        .map_err(err)?;
        Ok(PyPlant { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPlant {
            inner: io::plant_from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyPlant {
            inner: io::load_plant(path.as_ref()).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        io::plant_to_json(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Classification text for compensator order `q`.
    fn classify(&self, q: usize) -> String {
        pipeline::classify_text(&self.inner, q).0
    }

    fn min_q(&self) -> usize {
        plant::min_q(self.inner.n(), self.inner.m(), self.inner.p())
    }

    /// `C (sI - A)^{-1} B`.
    fn transfer(&self, s: C64) -> PyResult<Vec<Vec<C64>>> {
        Ok(rows(&self.inner.transfer(s).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, m={}, p={})", self.inner.n(), self.inner.m(), self.inner.p())
    }
}

/// Dynamic compensator `z' = Fz + Gy`, `u = Hz + Ky`.
#[pyclass(name = "Compensator", module = "pypolefeed", skip_from_py_object)]
#[derive(Clone)]
struct PyCompensator {
    inner: polefeed::Compensator,
}

#[pymethods]
impl PyCompensator {
    #[new]
    #[pyo3(signature = (f, g, h, k))]
    fn new(f: Vec<Vec<C64>>, g: Vec<Vec<C64>>, h: Vec<Vec<C64>>, k: Vec<Vec<C64>>) -> PyResult<Self> {
        let k = cmat(&k, 0)?;
        let q = f.len();
        let inner = polefeed::Compensator::new(
            cmat(&f, q)?,
            cmat(&g, k.ncols())?,
            cmat(&h, q)?,
            k,
        )
        .map_err(err)?;
        Ok(PyCompensator { inner })
    }

    #[staticmethod]
    fn static_gain(k: Vec<Vec<C64>>) -> PyResult<Self> {
        Ok(PyCompensator {
            inner: polefeed::Compensator::static_gain(cmat(&k, 0)?),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCompensator {
            inner: io::compensator_from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        io::compensator_to_json(&self.inner)
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter(F)]
    fn f(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.f)
    }

    #[getter(G)]
    fn g(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.g)
    }

    #[getter(H)]
    fn h(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.h)
    }

    #[getter(K)]
    fn k(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.k)
    }

    #[pyo3(signature = (tol = 1e-10))]
    fn is_real(&self, tol: f64) -> bool {
        self.inner.is_real(tol)
    }

    /// `H (sI - F)^{-1} G + K`.
    fn transfer(&self, s: C64) -> PyResult<Vec<Vec<C64>>> {
        Ok(rows(&self.inner.transfer(s).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Compensator(q={}, m={}, p={})",
            self.inner.q(),
            self.inner.m(),
            self.inner.p()
        )
    }
}

/// Result of a synthesis run.
#[pyclass(name = "Report", module = "pypolefeed")]
struct PyReport {
    inner: polefeed::RunReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }

    #[getter]
    fn feedback_degree(&self) -> u128 {
        self.inner.feedback_degree
    }

    #[getter]
    fn real_count(&self) -> usize {
        self.inner.real_count()
    }

    fn __len__(&self) -> usize {
        self.inner.solutions.len()
    }

    /// Realized compensators, `None` where realization failed.
    fn compensators(&self) -> Vec<Option<PyCompensator>> {
        self.inner
            .solutions
            .iter()
            .map(|s| s.compensator.clone().map(|inner| PyCompensator { inner }))
            .collect()
    }

    fn max_pole_errors(&self) -> Vec<Option<f64>> {
        self.inner.solutions.iter().map(|s| s.max_pole_error).collect()
    }

    fn residuals(&self) -> Vec<f64> {
        self.inner.solutions.iter().map(|s| s.residual).collect()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &self.to_json()?)
    }
}

/// Computes every compensator of order `q` placing `poles`. `q=None`
/// picks the smallest order that is not overdetermined.
#[pyfunction]
#[pyo3(signature = (plant, poles, q = None, seed = 0, max_solutions = None, extra_poles = None, all_charts = false, tolerances = None, tracker = None))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    plant: &PyPlant,
    poles: Vec<C64>,
    q: Option<usize>,
    seed: u64,
    max_solutions: Option<usize>,
    extra_poles: Option<Vec<C64>>,
    all_charts: bool,
    tolerances: Option<HashMap<String, f64>>,
    tracker: Option<HashMap<String, f64>>,
) -> PyResult<PyReport> {
    let mut cfg = RunConfig::new("", poles);
    cfg.q = q.map_or(QChoice::Auto, QChoice::Fixed);
    cfg.seed = seed;
    cfg.max_solutions = max_solutions;
    cfg.extra_poles = extra_poles.unwrap_or_default();
    cfg.all_charts = all_charts;
    cfg.tolerances = tolerances.unwrap_or_default().into_iter().collect();
    cfg.tracker = tracker.unwrap_or_default().into_iter().collect();
    let plant = plant.inner.clone();
    let report = py
        .detach(move || pipeline::synthesize(&plant, &cfg))
        .map_err(err)?;
    Ok(PyReport { inner: report })
}

/// Closed-loop eigenvalues matched against `poles`, as a dict.
#[pyfunction]
fn verify_compensator(
    py: Python<'_>,
    plant: &PyPlant,
    compensator: &PyCompensator,
    poles: Vec<C64>,
) -> PyResult<Py<PyAny>> {
    let report = verify::verify(&plant.inner, &compensator.inner, &poles).map_err(err)?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Realizes `N D^{-1}`, both given in the polynomial matrix text format.
#[pyfunction]
#[pyo3(signature = (num, den, tol = None))]
fn realize_text(num: &str, den: &str, tol: Option<HashMap<String, f64>>) -> PyResult<PyCompensator> {
    let mut tolerances = Tolerances::default();
    for (k, v) in tol.unwrap_or_default() {
        tolerances.set(&k, v).map_err(err)?;
    }
    let t = realize::TransferPair::new(
        io::parse_polymatrix(num).map_err(err)?,
        io::parse_polymatrix(den).map_err(err)?,
    )
    .map_err(err)?;
    Ok(PyCompensator {
        inner: realize::realize(&t, &tolerances).map_err(err)?,
    })
}

/// Rank and invariant factors (ascending coefficients) of a polynomial
/// matrix in the text format.
#[pyfunction]
#[pyo3(signature = (matrix, eps = 1e-8))]
fn smith(matrix: &str, eps: f64) -> PyResult<(usize, Vec<Vec<C64>>)> {
    let a = io::parse_polymatrix(matrix).map_err(err)?;
    let sf = polymat::smith(&a, eps).map_err(err)?;
    let factors = sf
        .invariant_factors()
        .into_iter()
        .map(|f| f.coeffs().to_vec())
        .collect();
    Ok((sf.rank, factors))
}

/// Roots of the polynomial with ascending coefficients `coeffs`.
#[pyfunction]
fn roots(coeffs: Vec<C64>) -> PyResult<Vec<C64>> {
    Ok(Poly::new(coeffs).roots().map_err(err)?.roots)
}

/// Numerical gcd by root matching; returns `(d, k, l)` with
/// `k a + l b = d`.
#[pyfunction]
#[pyo3(signature = (a, b, eps = 1e-8))]
fn gcd_roots(a: Vec<C64>, b: Vec<C64>, eps: f64) -> PyResult<(Vec<C64>, Vec<C64>, Vec<C64>)> {
    let g = gcd::gcd_advanced(&Poly::new(a), &Poly::new(b), eps).map_err(err)?;
    Ok((g.d.coeffs().to_vec(), g.k.coeffs().to_vec(), g.l.coeffs().to_vec()))
}

/// Generic number of complex feedback laws of order `q`.
#[pyfunction]
fn feedback_degree(m: usize, p: usize, q: usize) -> u128 {
    plant::feedback_degree(m, p, q)
}

#[pymodule]
fn pypolefeed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyCompensator>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(verify_compensator, m)?)?;
    m.add_function(wrap_pyfunction!(realize_text, m)?)?;
    m.add_function(wrap_pyfunction!(smith, m)?)?;
    m.add_function(wrap_pyfunction!(roots, m)?)?;
    m.add_function(wrap_pyfunction!(gcd_roots, m)?)?;
    m.add_function(wrap_pyfunction!(feedback_degree, m)?)?;
    Ok(())
}
