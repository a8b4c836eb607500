//! Python bindings: `import bmech`.

use std::fs;

use bmech_core::bqm::{phys_state, Method};
use bmech_core::classical::{boundary_greens, solve_classical, SolveOptions, TimeGrid};
use bmech_core::geometry::ExprScalar;
use bmech_core::quantize::Grid;
use bmech_core::symplectic::{
    poisson_boundary, poisson_covariant, poisson_final, poisson_initial, BoundaryPhasePoint, Observable,
};
use bmech_core::sysdsl::{parse_expr, Context, SystemSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(bmech, BmechError, PyValueError, "Invalid input or model.");
create_exception!(bmech, NumericalError, BmechError, "A solver failed (caustic, no convergence, instability).");

fn err(e: bmech_core::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    if e.is_numerical() {
        NumericalError::new_err(msg)
    } else {
        BmechError::new_err(msg)
    }
}

type Points = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Points {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A mechanical system parsed from its JSON description.
#[pyclass(frozen, module = "bmech")]
struct System {
    spec: SystemSpec,
}

#[pymethods]
impl System {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let spec = SystemSpec::from_json(json).map_err(|e| err(e.into()))?;
        Ok(System { spec })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        Self::new(&text)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.spec.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Canonical JSON form.
    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        x.len() == self.spec.dim && self.spec.contains(&x)
    }

    #[pyo3(signature = (x, v, t = 0.0))]
    fn lagrangian(&self, x: Vec<f64>, v: Vec<f64>, t: f64) -> PyResult<f64> {
        self.spec.lagrangian_value(&x, &v, t).map_err(err)
    }

    /// Solves the two-point problem; returns action, momenta, Hessian
    /// blocks, Green functions and the discrete trajectory.
    #[pyo3(signature = (x_i, x_f, t_f, t_i = 0.0, slices = 100))]
    fn classical<'py>(
        &self,
        py: Python<'py>,
        x_i: Vec<f64>,
        x_f: Vec<f64>,
        t_f: f64,
        t_i: f64,
        slices: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let grid = TimeGrid::new(t_i, t_f, slices).map_err(err)?;
        let (sol, g) = py
            .detach(|| {
                let sol = solve_classical(&self.spec, &x_f, &x_i, &grid, &SolveOptions::default())?;
                let g = boundary_greens(&self.spec, &sol)?;
                Ok((sol, g))
            })
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("action", sol.action)?;
        d.set_item("p_f", sol.p_f.clone())?;
        d.set_item("p_i", sol.p_i.clone())?;
        d.set_item("hessian_ff", rows(&sol.hessian.ff))?;
        d.set_item("hessian_fi", rows(&sol.hessian.fi))?;
        d.set_item("hessian_ii", rows(&sol.hessian.ii))?;
        d.set_item("g_if", rows(&g.g_if))?;
        d.set_item("g_fi", rows(&g.g_fi))?;
        d.set_item("iterations", sol.iterations)?;
        d.set_item("residual", sol.residual)?;
        let times: Vec<f64> = (0..=slices).map(|k| sol.grid.time(k)).collect();
        let path: Points = (0..=slices).map(|k| sol.history.node(k).to_vec()).collect();
        d.set_item("times", times)?;
        d.set_item("trajectory", path)?;
        Ok(d)
    }

    /// Brackets of two boundary observables, written in `x1..x2n` and
    /// `p1..p2n`, at the on-shell point through `at = x_f ++ x_i`.
    #[pyo3(signature = (at, a, b, t_f = 1.0, t_i = 0.0, slices = 200))]
    #[allow(clippy::too_many_arguments)]
    fn brackets<'py>(
        &self,
        py: Python<'py>,
        at: Vec<f64>,
        a: &str,
        b: &str,
        t_f: f64,
        t_i: f64,
        slices: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let n = self.spec.dim;
        if at.len() != 2 * n {
            return Err(BmechError::new_err(format!("expected {} boundary values", 2 * n)));
        }
        let ctx = Context::phase("observable", 2 * n).with_params(self.spec.parameters.keys().cloned());
        let obs = |src: &str| -> PyResult<Observable> {
            let e = parse_expr(src, &ctx).map_err(|e| err(e.into()))?;
            Ok(Observable::phase(ExprScalar::phase(e, 2 * n).with_params(self.spec.parameters.clone())))
        };
        let (oa, ob) = (obs(a)?, obs(b)?);
        let grid = TimeGrid::new(t_i, t_f, slices).map_err(err)?;
        let vals = py
            .detach(|| {
                let sol = solve_classical(&self.spec, &at[..n], &at[n..], &grid, &SolveOptions::default())?;
                let g = boundary_greens(&self.spec, &sol)?;
                let pt = BoundaryPhasePoint::on_shell(&g);
                Ok([
                    poisson_boundary(&oa, &ob, &pt)?,
                    poisson_covariant(&oa, &ob, &pt, &g)?,
                    poisson_final(&oa, &ob, &pt)?,
                    poisson_initial(&oa, &ob, &pt)?,
                ])
            })
            .map_err(err)?;
        let d = PyDict::new(py);
        for (k, v) in ["boundary", "covariant", "final", "initial"].iter().zip(vals) {
            d.set_item(*k, v)?;
        }
        Ok(d)
    }

    /// Propagator kernel on a grid of `points` nodes per axis. Returns the
    /// node coordinates and `K[final][initial]` as complex numbers.
    #[pyo3(signature = (t, points = 128, method = "cn", slices = 256))]
    fn propagator(
        &self,
        py: Python<'_>,
        t: f64,
        points: usize,
        method: &str,
        slices: usize,
    ) -> PyResult<(Points, Vec<Vec<Complex64>>)> {
        let method: Method = method.parse().map_err(err)?;
        let grid = Grid::from_domain(&self.spec.domain, points).map_err(err)?;
        let k = py.detach(|| phys_state(&self.spec, t, &grid, method, slices)).map_err(err)?;
        let m: Vec<Vec<Complex64>> = k.k.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok((grid.points(), m))
    }

    fn __repr__(&self) -> String {
        format!("System(name={:?}, dim={})", self.spec.name, self.spec.dim)
    }
}

#[pymodule]
#[pyo3(name = "bmech")]
fn bmech_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<System>()?;
    m.add("BmechError", m.py().get_type::<BmechError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
