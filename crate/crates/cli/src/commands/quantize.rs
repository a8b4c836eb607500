use std::f64::consts::PI;

use bmech_core::geometry::{FnScalar, FnVector};
use bmech_core::numerics::{fit_order, CMatrix};
use bmech_core::quantize::{discrete_divergence, op_f, op_g, Grid, GridAxis, Stencil};
use bmech_core::sysdsl::{DomainAxis, SystemSpec};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::report::{usage, Outcome};
use crate::QuantizeArgs;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Coordinate-like function on one axis: `x` on an interval, a sine of one
/// period on a circle. Returns `(f, f')`.
fn coordinate(ax: &DomainAxis) -> (impl Fn(f64) -> f64 + Copy + Send + Sync, impl Fn(f64) -> f64 + Copy + Send + Sync) {
    let (min, len, periodic) = (ax.min, ax.max - ax.min, ax.periodic);
    let k = 2.0 * PI / len;
    let f = move |x: f64| if periodic { (k * (x - min)).sin() / k } else { x };
    let df = move |x: f64| if periodic { (k * (x - min)).cos() } else { 1.0 };
    (f, df)
}

/// Smooth test function that fits inside the axis.
fn probe(ax: &DomainAxis, grid: &Grid) -> DVector<Complex64> {
    let (min, len) = (ax.min, ax.max - ax.min);
    DVector::from_iterator(
        grid.len(),
        grid.points().iter().map(|p| {
            let s = (p[0] - min) / len;
            let v = if ax.periodic {
                (2.0 * PI * s).cos().exp()
            } else {
                (-((s - 0.5) * 10.0).powi(2) / 2.0).exp()
            };
            Complex64::new(v, 0.0)
        }),
    )
}

/// Max over nodes away from non-periodic edges, relative to `max |ψ|`.
fn interior_max(r: &DVector<Complex64>, psi: &DVector<Complex64>, periodic: bool) -> f64 {
    let m = r.len();
    let skip = if periodic { 0 } else { 2 };
    let top = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (skip..m - skip).map(|j| r[j].norm()).fold(0.0, f64::max) / top
}

pub fn run(spec: &SystemSpec, a: &QuantizeArgs, seed: u64) -> Outcome<Value> {
    if a.grid < 32 {
        return Err(usage("--grid must be at least 32 (checks use grid/4 points too)"));
    }
    if !a.gamma.is_finite() {
        return Err(usage("--gamma must be finite"));
    }
    let sizes = [a.grid / 4, a.grid / 2, a.grid];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes = Vec::new();
    for (k, ax) in spec.domain.iter().enumerate() {
        log::info!("axis {k}: grids {sizes:?}");
        let (f, df) = coordinate(ax);
        let coeffs: [(f64, f64); 3] = std::array::from_fn(|_| (rng.random_range(-0.15..0.15), rng.random_range(0.0..2.0 * PI)));
        let (min, len) = (ax.min, ax.max - ax.min);
        let field = move |x: f64| {
            1.0 + coeffs.iter().enumerate().map(|(j, (c, ph))| c * ((j + 1) as f64 * 2.0 * PI * (x - min) / len + ph).sin()).sum::<f64>()
        };

        let mut hs = Vec::new();
        let mut comm = Vec::new();
        let mut closure = Vec::new();
        let mut ordering = 0.0f64;
        let mut herm = Value::Null;
        for &m in &sizes {
            let grid = Grid::new(vec![GridAxis::new(ax.min, ax.max, m, ax.periodic)?])?;
            hs.push(grid.axes[0].h);
            let psi = probe(ax, &grid);
            let fx = op_f(&FnScalar::new(1, move |x| f(x[0])), &grid)?;
            let dfx = op_f(&FnScalar::new(1, move |x| df(x[0])), &grid)?;
            let unit = FnVector::new(1, |_| vec![1.0]);
            let g_unit = op_g(&unit, a.gamma, &grid, None, Stencil::Central)?;
            // [F_f, G_∂] = i f'
            let c = fx.commutator(&g_unit)?;
            let r = &c.matrix * &psi - (&dfx.matrix * &psi) * I;
            comm.push(interior_max(&r, &psi, ax.periodic));
            // [G_1, G_f] + i G_{f'} with [1, f] = f'
            let g_f = op_g(&FnVector::new(1, move |x| vec![f(x[0])]), a.gamma, &grid, None, Stencil::Central)?;
            let g_df = op_g(&FnVector::new(1, move |x| vec![df(x[0])]), a.gamma, &grid, None, Stencil::Central)?;
            let cc = g_unit.commutator(&g_f)?;
            let r = &cc.matrix * &psi + (&g_df.matrix * &psi) * I;
            closure.push(interior_max(&r, &psi, ax.periodic));

            let wavy = FnVector::new(1, move |x| vec![field(x[0])]);
            let with = op_g(&wavy, a.gamma, &grid, None, Stencil::Central)?;
            let without = op_g(&wavy, 0.0, &grid, None, Stencil::Central)?;
            let div = discrete_divergence(&wavy, &grid, None, Stencil::Central)?;
            let expect = &without.matrix + CMatrix::from_diagonal(&div.map(|v| Complex64::new(a.gamma * v, 0.0)));
            ordering = ordering.max((&with.matrix - expect).camax());
            if ax.periodic && m == a.grid {
                herm = json!(with.hermiticity_defect());
            }
        }
        axes.push(json!({
            "axis": k,
            "periodic": ax.periodic,
            "points": sizes,
            "h": hs,
            "commutator_residuals": comm,
            "commutator_order": fit_order(&hs, &comm),
            "closure_residuals": closure,
            "closure_order": fit_order(&hs, &closure),
            "ordering_relation_defect": ordering,
            "hermiticity_defect": herm,
        }));
    }
    Ok(json!({ "gamma": a.gamma, "axes": axes }))
}
