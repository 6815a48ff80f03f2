//! Python bindings. Line ids are 1-based document order, node ids are the
//! ids of the input document; results come back as plain dicts and lists.

use gridfactor_core::factors::{self, GlodfMethod, LineMatrix, OutageSet};
use gridfactor_core::localization::{self, PerturbationSpec};
use gridfactor_core::net_model::{self, Injections};
use gridfactor_core::{Error, cascade, dcpf, forests, graph_algos};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(gridfactor, GridfactorError, PyException);
create_exception!(gridfactor, InputError, GridfactorError);
create_exception!(gridfactor, BridgeOutageError, GridfactorError);
create_exception!(gridfactor, CutSetError, GridfactorError);
create_exception!(gridfactor, SingularError, GridfactorError);
create_exception!(gridfactor, ZeroFactorError, GridfactorError);
create_exception!(gridfactor, TooLargeError, GridfactorError);
create_exception!(gridfactor, MaxStagesError, GridfactorError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::BridgeOutage(_) => BridgeOutageError::new_err(msg),
        Error::CutSet(_) => CutSetError::new_err(msg),
        Error::Singular(_) => SingularError::new_err(msg),
        Error::ZeroFactor { .. } => ZeroFactorError::new_err(msg),
        Error::TooLarge(_) => TooLargeError::new_err(msg),
        Error::MaxStages(trace) => {
            let body = serde_json::to_string(&trace).unwrap_or_default();
            MaxStagesError::new_err((msg, body))
        }
        e if e.is_input_error() => InputError::new_err(msg),
        _ => GridfactorError::new_err(msg),
    }
}

/// Converts any serializable value to Python objects through `json.loads`.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| GridfactorError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A transmission network, optionally carrying nodal injections.
#[pyclass(frozen, module = "gridfactor")]
struct Network {
    inner: net_model::Network,
    injections: Option<Vec<f64>>,
}

impl Network {
    fn injections_or(&self, p: Option<Vec<f64>>) -> PyResult<Injections> {
        let values = p
            .or_else(|| self.injections.clone())
            .ok_or_else(|| InputError::new_err("no injections given and none stored on the network"))?;
        Injections::new(&self.inner, values).map_err(err)
    }

    fn outage(&self, lines: &[usize]) -> PyResult<OutageSet> {
        OutageSet::from_ids(&self.inner, lines).map_err(err)
    }

    fn index(&self, line: usize) -> PyResult<usize> {
        Ok(self.inner.edge_indices(&[line]).map_err(err)?[0])
    }
}

#[pymethods]
impl Network {
    /// `edges` holds `(from, to, b)` or `(from, to, b, cap)` tuples.
    #[new]
    #[pyo3(signature = (edges, nodes=None, reference=None, injections=None))]
    fn new(
        edges: Vec<Vec<f64>>,
        nodes: Option<Vec<u32>>,
        reference: Option<u32>,
        injections: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mut lines = Vec::with_capacity(edges.len());
        for e in &edges {
            let id = |x: f64| {
                if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                    Ok(x as u32)
                } else {
                    Err(InputError::new_err(format!("node id {x} is not a nonnegative integer")))
                }
            };
            match e.as_slice() {
                [a, b, s] => lines.push((id(*a)?, id(*b)?, *s, f64::INFINITY)),
                [a, b, s, c] => lines.push((id(*a)?, id(*b)?, *s, *c)),
                _ => return Err(InputError::new_err("edges must be (from, to, b[, cap]) tuples")),
            }
        }
        let nodes = nodes.unwrap_or_else(|| {
            let mut ids: Vec<u32> = lines.iter().flat_map(|&(a, b, _, _)| [a, b]).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        });
        let inner = net_model::Network::new(nodes, &lines, reference).map_err(err)?;
        if let Some(p) = &injections {
            Injections::new(&inner, p.clone()).map_err(err)?;
        }
        Ok(Self { inner, injections })
    }

    /// Loads a JSON document, an edges CSV file, or a directory of CSVs.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let case = net_model::load_path(&path).map_err(err)?;
        Ok(Self {
            inner: case.network,
            injections: case.injections.map(|p| p.values().to_vec()),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let case = net_model::load_json_str(text).map_err(err)?;
        Ok(Self {
            inner: case.network,
            injections: case.injections.map(|p| p.values().to_vec()),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        let p = match &self.injections {
            Some(v) => Some(Injections::new(&self.inner, v.clone()).map_err(err)?),
            None => None,
        };
        Ok(net_model::to_json_string(&self.inner, p.as_ref()))
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
    fn nodes(&self) -> Vec<u32> {
        self.inner.node_ids().to_vec()
    }

    #[getter]
    fn reference(&self) -> u32 {
        self.inner.node_id(self.inner.reference())
    }

    #[getter]
    fn injections(&self) -> Option<Vec<f64>> {
        self.injections.clone()
    }

    /// `(id, from, to, b, cap)` for every line.
    #[getter]
    fn edges(&self) -> Vec<(usize, u32, u32, f64, f64)> {
        let net = &self.inner;
        net.edges()
            .iter()
            .map(|e| (e.id, net.node_id(e.source), net.node_id(e.target), e.susceptance, e.capacity))
            .collect()
    }

    fn with_capacities(&self, caps: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_capacities(&caps).map_err(err)?,
            injections: self.injections.clone(),
        })
    }

    fn with_reference(&self, node: u32) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_reference(node).map_err(err)?,
            injections: self.injections.clone(),
        })
    }

    fn __repr__(&self) -> String {
        format!("Network(n={}, m={}, reference={})", self.inner.n(), self.inner.m(), self.reference())
    }

    /// Blocks, bridges (line ids) and cut vertices (node ids).
    fn blocks(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let net = &self.inner;
        let d = graph_algos::block_decomposition(net).map_err(err)?;
        let ids = |v: &[usize]| v.iter().map(|l| l + 1).collect::<Vec<_>>();
        let out = serde_json::json!({
            "blocks": d.blocks.iter().map(|b| ids(b)).collect::<Vec<_>>(),
            "bridges": ids(&d.bridges),
            "cut_vertices": d.cut_vertices.iter().map(|&i| net.node_id(i)).collect::<Vec<_>>(),
        });
        to_py(py, &out)
    }

    /// Angles (by node) and flows (by line) of the DC power flow.
    #[pyo3(signature = (injections=None))]
    fn flow(&self, py: Python<'_>, injections: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
        let p = self.injections_or(injections)?;
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        to_py(py, &dcpf::solve_flow(&bundle, &self.inner, &p))
    }

    /// PTDF matrix as a list of rows indexed by line.
    fn ptdf(&self) -> PyResult<Vec<Vec<f64>>> {
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let d = factors::ptdf_matrix(&bundle, &self.inner);
        Ok(d.matrix().row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `{line id: K}` for the outage of `line`.
    fn lodf(&self, line: usize) -> PyResult<std::collections::BTreeMap<usize, f64>> {
        let l_hat = self.index(line)?;
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let ptdf = factors::ptdf_matrix(&bundle, &self.inner);
        let d = graph_algos::block_decomposition(&self.inner).map_err(err)?;
        let col = factors::lodf_single(&ptdf, &d, l_hat).map_err(err)?;
        Ok(col.lines.iter().map(|l| l + 1).zip(col.values).collect())
    }

    /// GLODF of a simultaneous outage; `method` is one of
    /// `pre_contingency`, `post_contingency`, `via_stack`, `cross_check`.
    #[pyo3(signature = (lines, method="pre_contingency"))]
    fn glodf(&self, py: Python<'_>, lines: Vec<usize>, method: &str) -> PyResult<Py<PyAny>> {
        let method: GlodfMethod = method.parse().map_err(err)?;
        let f = self.outage(&lines)?;
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let ptdf = factors::ptdf_matrix(&bundle, &self.inner);
        let r = factors::glodf(&bundle, &ptdf, &self.inner, &f, method).map_err(err)?;
        let out = serde_json::json!({
            "k": LineMatrix::new(f.surviving(), f.outaged(), &r.k),
            "k_stack": LineMatrix::new(f.surviving(), f.outaged(), &r.k_stack),
            "method": r.method,
            "residuals": r.residuals,
        });
        to_py(py, &out)
    }

    /// Pre- and post-outage flows for a non-cut outage.
    #[pyo3(signature = (lines, injections=None))]
    fn apply_outage(&self, py: Python<'_>, lines: Vec<usize>, injections: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
        let p = self.injections_or(injections)?;
        let f = self.outage(&lines)?;
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let (pre, post) = factors::apply_outage(&bundle, &self.inner, &p, &f).map_err(err)?;
        to_py(py, &serde_json::json!({ "pre": pre, "post": post }))
    }

    fn detect_islanding(&self, lines: Vec<usize>) -> PyResult<bool> {
        let f = self.outage(&lines)?;
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        Ok(factors::detect_islanding(&factors::ptdf_matrix(&bundle, &self.inner), &f))
    }

    fn is_cut_set(&self, lines: Vec<usize>) -> PyResult<bool> {
        let idx = self.inner.edge_indices(&lines).map_err(err)?;
        graph_algos::is_cut_set(&self.inner, &idx).map_err(err)
    }

    /// `"zero"` or `"possibly_nonzero"` for `K_{line, outaged}`.
    fn simple_cycle_criterion(&self, py: Python<'_>, line: usize, outaged: usize) -> PyResult<Py<PyAny>> {
        let d = graph_algos::block_decomposition(&self.inner).map_err(err)?;
        let p = localization::simple_cycle_criterion(&self.inner, &d, self.index(line)?, self.index(outaged)?)
            .map_err(err)?;
        to_py(py, &p)
    }

    #[pyo3(signature = (lines, tol=localization::ZERO_TOL))]
    fn localize(&self, py: Python<'_>, lines: Vec<usize>, tol: f64) -> PyResult<Py<PyAny>> {
        let f = self.outage(&lines)?;
        let net = &self.inner;
        let bundle = dcpf::build_laplacian(net).map_err(err)?;
        let ptdf = factors::ptdf_matrix(&bundle, net);
        let d = graph_algos::block_decomposition(net).map_err(err)?;
        let r = factors::glodf(&bundle, &ptdf, net, &f, GlodfMethod::PreContingency).map_err(err)?;
        let rep = localization::block_structure_report(&bundle, &ptdf, net, &r, &d, tol).map_err(err)?;
        to_py(py, &rep)
    }

    #[pyo3(signature = (lines, eps=1e-3, trials=100, seed=0))]
    fn perturbation_test(
        &self,
        py: Python<'_>,
        lines: Vec<usize>,
        eps: f64,
        trials: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let f = self.outage(&lines)?;
        let spec = PerturbationSpec { eps, trials, seed };
        let stats = py
            .detach(|| localization::almost_sure_nonzero_test(&self.inner, &f, &spec))
            .map_err(err)?;
        to_py(py, &stats)
    }

    /// Injections and capacities under which tripping `tripped` overloads
    /// exactly `target`.
    fn adversarial_capacity(&self, py: Python<'_>, tripped: usize, target: usize) -> PyResult<Py<PyAny>> {
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let ptdf = factors::ptdf_matrix(&bundle, &self.inner);
        let inst = localization::adversarial_capacity(&bundle, &ptdf, &self.inner, self.index(tripped)?, self.index(target)?)
            .map_err(err)?;
        to_py(py, &inst)
    }

    #[pyo3(signature = (trip, injections=None, max_stages=None))]
    fn cascade(
        &self,
        py: Python<'_>,
        trip: Vec<usize>,
        injections: Option<Vec<f64>>,
        max_stages: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let p = self.injections_or(injections)?;
        let idx = self.inner.edge_indices(&trip).map_err(err)?;
        let trace = cascade::run_cascade(&self.inner, &p, &idx, max_stages).map_err(err)?;
        to_py(py, &trace)
    }

    /// `(a, b, weight)` line-id pairs with `|K| ≥ threshold`.
    #[pyo3(signature = (threshold=0.005))]
    fn influence_graph(&self, threshold: f64) -> PyResult<Vec<(usize, usize, f64)>> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(InputError::new_err("threshold must be nonnegative"));
        }
        let bundle = dcpf::build_laplacian(&self.inner).map_err(err)?;
        let ptdf = factors::ptdf_matrix(&bundle, &self.inner);
        let d = graph_algos::block_decomposition(&self.inner).map_err(err)?;
        Ok(cascade::influence_graph(&ptdf, &d, threshold)
            .into_iter()
            .map(|p| (p.a, p.b, p.weight))
            .collect())
    }

    #[pyo3(signature = (tol=1e-9))]
    fn matrix_tree_check(&self, py: Python<'_>, tol: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &forests::matrix_tree_check(&self.inner, tol).map_err(err)?)
    }

    /// `K_{line, outaged}` from spanning-forest sums.
    fn lodf_via_forests(&self, line: usize, outaged: usize) -> PyResult<f64> {
        forests::lodf_via_forests(&self.inner, self.index(line)?, self.index(outaged)?).map_err(err)
    }

    fn effective_reactance(&self, py: Python<'_>, line: usize) -> PyResult<Py<PyAny>> {
        to_py(py, &forests::effective_reactance(&self.inner, self.index(line)?).map_err(err)?)
    }
}

#[pymodule]
fn gridfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Network>()?;
    m.add("GridfactorError", py.get_type::<GridfactorError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("BridgeOutageError", py.get_type::<BridgeOutageError>())?;
    m.add("CutSetError", py.get_type::<CutSetError>())?;
    m.add("SingularError", py.get_type::<SingularError>())?;
    m.add("ZeroFactorError", py.get_type::<ZeroFactorError>())?;
    m.add("TooLargeError", py.get_type::<TooLargeError>())?;
    m.add("MaxStagesError", py.get_type::<MaxStagesError>())?;
    Ok(())
}
