//! Python bindings. Rationals cross the boundary as `"num/den"` strings and
//! reports as JSON text.

use fplus_core::checks::{
    definetti_suite_on, hierarchy_suite_on, lump_suite_on, tower_suite, SuiteModel, SuiteOptions, VerificationReport,
};
use fplus_core::config::{load_chain, parse_str, ChainFile, RatRepr};
use fplus_core::dilation::ChainSpec;
use fplus_core::graded::DEFAULT_ATOM_BUDGET;
use fplus_core::monoid::{
    extended_relation_check, find_derivation, normal_form_fplus, project_to_splus, shift_mn, words_equal_fplus,
    words_equal_splus, Family, Letter, MonoidKind, Word, DEFAULT_NODE_BUDGET,
};
use fplus_core::rational::format_rational;
use fplus_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::InvalidInput(_) | Error::Precondition(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn word(s: &str) -> PyResult<Word> {
    s.parse().map_err(py_err)
}

/// Normal form of an F⁺ word, e.g. `normal_form("g0 g1") == "g2^1 g0^1"`.
#[pyfunction]
fn normal_form(w: &str) -> PyResult<String> {
    Ok(normal_form_fplus(&word(w)?).map_err(py_err)?.to_string())
}

/// Equality in F⁺ (`monoid="fplus"`) or S⁺ (`monoid="splus"`).
#[pyfunction]
#[pyo3(signature = (w1, w2, monoid = "fplus"))]
fn words_equal(w1: &str, w2: &str, monoid: &str) -> PyResult<bool> {
    let (a, b) = (word(w1)?, word(w2)?);
    match monoid {
        "fplus" => words_equal_fplus(&a, &b).map_err(py_err),
        "splus" => {
            let lift = |w: &Word| {
                if w.letters().iter().any(|l| l.family == Family::G) {
                    project_to_splus(w)
                } else {
                    Ok(w.clone())
                }
            };
            words_equal_splus(&lift(&a).map_err(py_err)?, &lift(&b).map_err(py_err)?).map_err(py_err)
        }
        other => Err(PyValueError::new_err(format!("unknown monoid {other:?}"))),
    }
}

/// The (m,n)-partial shift of an F⁺ word.
#[pyfunction]
fn shift(m: u32, n: u32, w: &str) -> PyResult<String> {
    Ok(shift_mn(m, n, &word(w)?).map_err(py_err)?.to_string())
}

/// Derivation trace of the (k, l) relation as JSON.
#[pyfunction]
#[pyo3(signature = (monoid, k, l, nodes = DEFAULT_NODE_BUDGET))]
fn derive(monoid: &str, k: u32, l: u32, nodes: usize) -> PyResult<String> {
    let kind: MonoidKind = monoid.parse().map_err(py_err)?;
    let trace = match kind {
        MonoidKind::FPlus | MonoidKind::SPlus => {
            let strict = kind == MonoidKind::FPlus;
            if k > l || (strict && k == l) {
                return Err(PyValueError::new_err(format!("relation undefined for k={k}, l={l}")));
            }
            let x = |i| if strict { Letter::g(i) } else { Letter::h(i) };
            find_derivation(kind, &Word(vec![x(k), x(l)]), &Word(vec![x(l + 1), x(k)]), nodes)
        }
        _ => extended_relation_check(kind, k, l, nodes),
    }
    .map_err(py_err)?;
    trace.validate(kind).map_err(py_err)?;
    Ok(serde_json::to_string(&trace).expect("plain data"))
}

/// Outcome of a verification suite.
#[pyclass(frozen)]
struct Report {
    inner: VerificationReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    #[getter]
    fn failures(&self) -> Vec<String> {
        self.inner.failures().map(|e| e.check.clone()).collect()
    }

    #[getter]
    fn checks(&self) -> Vec<(String, bool)> {
        self.inner.entries.iter().map(|e| (e.check.clone(), e.verdict)).collect()
    }

    fn to_json_lines(&self) -> String {
        self.inner.to_json_lines()
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }

    fn __repr__(&self) -> String {
        let ok = self.inner.entries.iter().filter(|e| e.verdict).count();
        format!("Report({ok} of {} checks passed)", self.inner.entries.len())
    }
}

/// A finite stationary Markov chain with exact rational entries.
#[pyclass(frozen)]
struct Chain {
    file: ChainFile,
    spec: ChainSpec,
}

impl Chain {
    fn from_file(file: ChainFile) -> PyResult<Self> {
        let spec = file.spec().map_err(py_err)?;
        Ok(Chain { file, spec })
    }

    fn model(&self, depth: usize, budget: u128) -> PyResult<SuiteModel> {
        SuiteModel::from_chain_file(&self.file, depth, budget).map_err(py_err)
    }
}

#[pymethods]
impl Chain {
    /// `t` is a list of rows of `"num/den"` strings; `pi` defaults to the
    /// stationary distribution.
    #[new]
    #[pyo3(signature = (t, pi = None))]
    fn new(t: Vec<Vec<String>>, pi: Option<Vec<String>>) -> PyResult<Self> {
        let text = |v: Vec<String>| v.into_iter().map(RatRepr::Text).collect::<Vec<_>>();
        Chain::from_file(ChainFile {
            d: t.len(),
            t: t.into_iter().map(text).collect(),
            pi: pi.map(text),
            c_map: None,
            delta_map: None,
        })
    }

    /// Load a chain from a JSON or TOML file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Chain::from_file(load_chain(path).map_err(py_err)?.0)
    }

    /// Parse a chain from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Chain::from_file(parse_str(text, false).map_err(py_err)?)
    }

    #[getter]
    fn d(&self) -> usize {
        self.spec.d()
    }

    #[getter]
    fn pi(&self) -> Vec<String> {
        self.spec.pi().iter().map(format_rational).collect()
    }

    /// Law of `(X_0, ..., X_depth)` from the dilation, as `(path, prob)` pairs.
    #[pyo3(signature = (depth = 3, budget = DEFAULT_ATOM_BUDGET))]
    fn path_law(&self, depth: usize, budget: u128) -> PyResult<Vec<(Vec<u32>, String)>> {
        let sm = self.model(depth, budget)?;
        Ok(sm.model.model_path_law().probs().iter().map(|(p, q)| (p.clone(), format_rational(q))).collect())
    }

    /// Run `"definetti"`, `"tower"`, `"hierarchy"` or `"all"`.
    #[pyo3(signature = (suite = "all", depth = 4, budget = DEFAULT_ATOM_BUDGET))]
    fn verify(&self, suite: &str, depth: usize, budget: u128) -> PyResult<Report> {
        let opts = SuiteOptions { budget, ..Default::default() };
        let sm = self.model(depth, budget)?;
        let mut report = VerificationReport::default();
        let all = suite == "all";
        if !all && !matches!(suite, "definetti" | "tower" | "hierarchy") {
            return Err(PyValueError::new_err(format!("unknown suite {suite:?}")));
        }
        if all || suite == "definetti" {
            report.extend(definetti_suite_on(&sm, opts).map_err(py_err)?);
        }
        if all || suite == "tower" {
            report.extend(tower_suite(&self.spec, depth, opts).map_err(py_err)?);
        }
        if all || suite == "hierarchy" {
            report.extend(hierarchy_suite_on(&sm, opts).map_err(py_err)?);
        }
        Ok(Report { inner: report })
    }

    /// Lump states through `map`; returns the summary as JSON.
    #[pyo3(signature = (map, depth = 4, budget = DEFAULT_ATOM_BUDGET))]
    fn lump(&self, map: Vec<u32>, depth: usize, budget: u128) -> PyResult<String> {
        let opts = SuiteOptions { budget, ..Default::default() };
        let (_, summary) = lump_suite_on(&self.model(depth, budget)?, &map, opts).map_err(py_err)?;
        Ok(serde_json::to_string(&summary).expect("plain data"))
    }

    fn __repr__(&self) -> String {
        format!("Chain(d={}, pi=[{}])", self.spec.d(), self.pi().join(", "))
    }
}

#[pymodule]
fn fplus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normal_form, m)?)?;
    m.add_function(wrap_pyfunction!(words_equal, m)?)?;
    m.add_function(wrap_pyfunction!(shift, m)?)?;
    m.add_function(wrap_pyfunction!(derive, m)?)?;
    m.add_class::<Chain>()?;
    m.add_class::<Report>()?;
    Ok(())
}
