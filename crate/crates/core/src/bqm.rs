//! Boundary quantum states: the physical state given by the propagator
//! kernel, boundary position states, lifted observables and the
//! semiclassical measure extracted from the kernel.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::classical::{solve_classical, SolveOptions, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::VectorField;
use crate::numerics::{matrix_power, CMatrix};
use crate::quantize::{op_g, op_k, DensityField, Grid, GridOperator, Stencil};
use crate::sysdsl::{NaturalForm, SystemSpec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    CrankNicolson,
    Trotter,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cn" | "crank-nicolson" => Ok(Method::CrankNicolson),
            "trotter" => Ok(Method::Trotter),
            _ => Err(Error::InvalidInput(format!("unknown propagation method '{s}'"))),
        }
    }
}

/// Position representation `K(x_f, x_i)` of the physical boundary state.
/// Rows index the final grid, columns the initial grid. Both arguments
/// carry density weight `½ − iγ`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub k: CMatrix,
    pub grid: Grid,
    pub t: f64,
    pub gamma: f64,
    /// Largest deviation of a column norm of the one-step-composed
    /// evolution from one.
    pub norm_drift: f64,
}

impl KernelMatrix {
    pub fn weight(&self) -> Complex64 {
        Complex64::new(0.5, -self.gamma)
    }

    /// The evolution matrix acting on grid values, `K · cell volume`.
    pub fn evolution(&self) -> CMatrix {
        &self.k * Complex64::new(self.grid.cell_volume(), 0.0)
    }

    /// `K(T₂) ∘ K(T₁)` with the grid measure in between.
    pub fn compose(&self, earlier: &KernelMatrix) -> Result<KernelMatrix> {
        if self.grid != earlier.grid {
            return Err(Error::DimensionMismatch("kernels live on different grids".into()));
        }
        let vol = Complex64::new(self.grid.cell_volume(), 0.0);
        let k = crate::numerics::matmul(&self.k, &earlier.k) * vol;
        Ok(KernelMatrix { k, grid: self.grid.clone(), t: self.t + earlier.t, gamma: self.gamma, norm_drift: 0.0 })
    }

    /// Numerical rank: singular values above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let sv = self.k.clone().singular_values();
        let smax = sv.iter().fold(0.0f64, |m, s| m.max(*s));
        sv.iter().filter(|s| **s > tol * smax).count()
    }
}

/// `H = ½ K_g + V` with `K_g` the positive Laplace–Beltrami observable.
pub fn hamiltonian(nf: &NaturalForm, grid: &Grid, gamma: f64) -> Result<GridOperator> {
    let metric = nf.metric_field();
    let mut h = op_k(metric.as_ref(), 0.0, grid, gamma)?.scale(Complex64::new(0.5, 0.0));
    for i in 0..grid.len() {
        h.matrix[(i, i)] += Complex64::new(nf.potential_at(&grid.point(i))?, 0.0);
    }
    Ok(h)
}

fn column_drift(u: &CMatrix) -> f64 {
    u.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max)
}

/// Propagator kernel for time `t` on `grid`, with `slices` time steps.
pub fn phys_state(spec: &SystemSpec, t: f64, grid: &Grid, method: Method, slices: usize) -> Result<KernelMatrix> {
    if grid.dim() != spec.dim {
        return Err(Error::DimensionMismatch("grid vs configuration dimension".into()));
    }
    if slices == 0 || !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput("need t ≥ 0 and at least one slice".into()));
    }
    let nf = spec.natural_form()?;
    let dt = t / slices as f64;
    let n = grid.len();
    let step = match method {
        Method::CrankNicolson => {
            let h = hamiltonian(&nf, grid, 0.0)?.matrix;
            let id = CMatrix::identity(n, n);
            let a = &id + &h * (I * (0.5 * dt));
            let b = &id - &h * (I * (0.5 * dt));
            let bw = crate::numerics::bandwidth(&a);
            let solved = if 4 * bw < n {
                crate::numerics::banded_solve(&a, bw, &b)
            } else {
                a.lu().solve(&b)
            };
            solved.ok_or_else(|| Error::Unstable(f64::INFINITY))?
        }
        Method::Trotter => trotter_step(&nf, grid, dt)?,
    };
    let u = matrix_power(&step, slices);
    let drift = column_drift(&u);
    if !drift.is_finite() || drift > 0.01 {
        return Err(Error::Unstable(drift));
    }
    let k = u / Complex64::new(grid.cell_volume(), 0.0);
    Ok(KernelMatrix { k, grid: grid.clone(), t, gamma: 0.0, norm_drift: drift })
}

/// One short-time factor: the exact band-limited free evolution on the
/// torus spanned by the grid, with half a potential phase `exp(−iτV/2)`
/// at each end. Requires a constant metric.
fn trotter_step(nf: &NaturalForm, grid: &Grid, dt: f64) -> Result<CMatrix> {
    let d = grid.dim();
    let n = grid.len();
    let g0 = nf.metric_at(&grid.point(0))?;
    for i in 0..n {
        let g = nf.metric_at(&grid.point(i))?;
        if (&g - &g0).amax() > 1e-12 * g0.amax() {
            return Err(Error::InvalidInput("trotter propagation needs a constant metric".into()));
        }
    }
    let ginv = g0.try_inverse().ok_or_else(|| Error::SingularMetric(grid.point(0)))?;
    let lens: Vec<f64> = grid.axes.iter().map(|a| a.h * a.points as f64).collect();
    // Wave numbers of every Fourier mode.
    let modes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            grid.multi_index(i)
                .iter()
                .zip(&grid.axes)
                .zip(&lens)
                .map(|((&j, a), l)| {
                    let m = a.points as isize;
                    let s = if (j as isize) * 2 >= m { j as isize - m } else { j as isize };
                    2.0 * std::f64::consts::PI * s as f64 / l
                })
                .collect()
        })
        .collect();
    let phase: Vec<Complex64> = modes
        .iter()
        .map(|k| {
            let mut e = 0.0;
            for a in 0..d {
                for b in 0..d {
                    e += k[a] * ginv[(a, b)] * k[b];
                }
            }
            (-I * (0.5 * dt * e)).exp()
        })
        .collect();
    // Free factor as a function of the index displacement.
    let free: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|disp| {
            let dm = grid.multi_index(disp);
            let dx: Vec<f64> = dm.iter().zip(&grid.axes).map(|(&j, a)| j as f64 * a.h).collect();
            let mut s = Complex64::new(0.0, 0.0);
            for (k, ph) in modes.iter().zip(&phase) {
                let arg: f64 = k.iter().zip(&dx).map(|(k, x)| k * x).sum();
                s += ph * Complex64::new(0.0, arg).exp();
            }
            s / n as f64
        })
        .collect();
    let half: Vec<Complex64> = (0..n)
        .map(|i| Ok((-I * (0.5 * dt * nf.potential_at(&grid.point(i))?)).exp()))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            (0..n)
                .map(|j| {
                    let mj = grid.multi_index(j);
                    let disp: Vec<usize> =
                        mi.iter().zip(&mj).zip(&grid.axes).map(|((a, b), ax)| (a + ax.points - b) % ax.points).collect();
                    half[i] * free[grid.flat_index(&disp)] * half[j]
                })
                .collect()
        })
        .collect();
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// State on the boundary configuration space, stored by its position
/// representation `Ψ(x_f, x_i)` (rows final, columns initial).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryState {
    pub psi: CMatrix,
}

impl BoundaryState {
    /// `⟨f| ⊗ |i⟩`, whose position representation is `conj(ψ_f) ψ_iᵀ`.
    pub fn product(psi_f: &DensityField, psi_i: &DensityField) -> Self {
        let a = psi_f.values.map(|z| z.conj());
        BoundaryState { psi: &a * psi_i.values.transpose() }
    }

    /// Boundary position state at grid nodes `(j_f, j_i)`.
    pub fn position(grid: &Grid, j_f: usize, j_i: usize) -> Self {
        let n = grid.len();
        let mut psi = CMatrix::zeros(n, n);
        let vol = grid.cell_volume();
        psi[(j_f, j_i)] = Complex64::new(1.0 / (vol * vol), 0.0);
        BoundaryState { psi }
    }

    /// The physical state itself.
    pub fn physical(k: &KernelMatrix) -> Self {
        BoundaryState { psi: k.k.map(|z| z.conj()) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Final,
    Initial,
}

/// An operator lifted to the boundary space from one end.
#[derive(Clone, Debug)]
pub struct LiftedOperator {
    pub op: GridOperator,
    pub end: End,
}

/// Final-end operators act as `A† ⊗ 1` (on the bra factor), initial-end
/// operators as `1 ⊗ A`.
pub fn lift_observable(op: &GridOperator, end: End) -> LiftedOperator {
    LiftedOperator { op: op.clone(), end }
}

impl LiftedOperator {
    pub fn apply(&self, s: &BoundaryState) -> BoundaryState {
        let a = &self.op.matrix;
        let psi = match self.end {
            End::Final => crate::numerics::matmul(&a.map(|z| z.conj()), &s.psi),
            End::Initial => crate::numerics::matmul(&s.psi, &a.transpose()),
        };
        BoundaryState { psi }
    }

    /// Matrix on row-major `vec(Ψ)`.
    pub fn superoperator(&self) -> CMatrix {
        let a = &self.op.matrix;
        let n = a.nrows();
        let id = CMatrix::identity(n, n);
        match self.end {
            End::Final => a.map(|z| z.conj()).kronecker(&id),
            End::Initial => id.kronecker(a),
        }
    }
}

/// `Ĝ_a = −Ĝ_{a_f} + Ĝ_{a_i}` on the boundary, with the final-end
/// generator built with ordering parameter `−γ` so that the result is
/// the generator with parameter `γ` on the product space.
pub fn boundary_op_g(
    a_f: &dyn VectorField,
    a_i: &dyn VectorField,
    gamma: f64,
    grid: &Grid,
    stencil: Stencil,
) -> Result<CMatrix> {
    let gf = lift_observable(&op_g(a_f, -gamma, grid, None, stencil)?, End::Final);
    let gi = lift_observable(&op_g(a_i, gamma, grid, None, stencil)?, End::Initial);
    Ok(gi.superoperator() - gf.superoperator())
}

/// `(phys | state)` through the boundary position representation.
pub fn amplitude(phys: &KernelMatrix, state: &BoundaryState) -> Result<Complex64> {
    if state.psi.shape() != phys.k.shape() {
        return Err(Error::DimensionMismatch("state vs kernel grid".into()));
    }
    let vol = phys.grid.cell_volume();
    let s: Complex64 = phys.k.iter().zip(state.psi.iter()).map(|(k, p)| k * p).sum();
    Ok(s * vol * vol)
}

#[derive(Clone, Debug)]
pub struct ActionSample {
    pub action: f64,
    pub grad_f: Vec<f64>,
    pub grad_i: Vec<f64>,
}

/// Source of on-shell action values and gradients.
pub trait ActionField: Sync {
    fn sample(&self, x_f: &[f64], x_i: &[f64]) -> Result<ActionSample>;
}

/// Action from the variational solver.
pub struct ClassicalAction<'a> {
    pub spec: &'a SystemSpec,
    pub t: f64,
    pub slices: usize,
}

impl ActionField for ClassicalAction<'_> {
    fn sample(&self, x_f: &[f64], x_i: &[f64]) -> Result<ActionSample> {
        let grid = TimeGrid::new(0.0, self.t, self.slices)?;
        let sol = solve_classical(self.spec, x_f, x_i, &grid, &SolveOptions::default())?;
        Ok(ActionSample { action: sol.action, grad_f: sol.p_f.clone(), grad_i: sol.p_i.iter().map(|p| -p).collect() })
    }
}

/// Action given in closed form.
pub struct FnAction<F>(pub F);

impl<F: Fn(&[f64], &[f64]) -> ActionSample + Sync> ActionField for FnAction<F> {
    fn sample(&self, x_f: &[f64], x_i: &[f64]) -> Result<ActionSample> {
        Ok((self.0)(x_f, x_i))
    }
}

/// Flat-top band limit: `w(k) = 1` for `|k| ≤ pass`, zero beyond `stop`,
/// with a C^∞ taper in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub pass: f64,
    pub stop: f64,
}

impl Window {
    pub fn weight(&self, k: f64) -> f64 {
        let k = k.abs();
        if k <= self.pass {
            return 1.0;
        }
        if k >= self.stop {
            return 0.0;
        }
        let s = (k - self.pass) / (self.stop - self.pass);
        let bump = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
        bump(1.0 - s) / (bump(1.0 - s) + bump(s))
    }
}

#[derive(Clone)]
pub struct SemiclassicalOptions {
    /// Band limit applied to the initial argument before extraction.
    /// Without it the raw grid kernel is used.
    pub window: Option<Window>,
    /// Box `[lo, hi]` per configuration axis; both ends are restricted to it.
    pub interior: Vec<(f64, f64)>,
    /// Vector fields on the boundary value space `(x_f, x_i)` whose
    /// constraint residuals are reported.
    pub fields: Vec<Arc<dyn VectorField>>,
    /// Use every `stride`-th interior node along each axis.
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct SemiclassicalReport {
    pub x_f: Vec<Vec<f64>>,
    pub x_i: Vec<Vec<f64>>,
    /// `𝔞 = K e^{−iS̄}` at each interior pair.
    pub measure: Vec<Complex64>,
    pub mean: Complex64,
    pub max_rel_variation: f64,
    /// `‖(i£_a + a·∇S̄) K‖ / ‖K‖` over the interior, per field.
    pub residual_norms: Vec<f64>,
    pub residuals: Vec<Vec<Complex64>>,
}

/// Band-limiting matrix `W = F⁻¹ diag(w) F` on a one-dimensional periodic
/// extension of each axis, assembled as a tensor product.
fn window_matrix(grid: &Grid, w: &Window) -> CMatrix {
    let n = grid.len();
    let mut out = CMatrix::identity(n, n);
    for (a, ax) in grid.axes.iter().enumerate() {
        let m = ax.points;
        let l = ax.h * m as f64;
        let row: Vec<Complex64> = (0..m)
            .map(|s| {
                let mut acc = 0.0;
                for j in 0..m {
                    let js = if 2 * j >= m { j as f64 - m as f64 } else { j as f64 };
                    let k = 2.0 * std::f64::consts::PI * js / l;
                    acc += w.weight(k) * (k * s as f64 * ax.h).cos();
                }
                Complex64::new(acc / m as f64, 0.0)
            })
            .collect();
        let factor = CMatrix::from_fn(n, n, |i, j| {
            let (mi, mj) = (grid.multi_index(i), grid.multi_index(j));
            if (0..grid.dim()).any(|b| b != a && mi[b] != mj[b]) {
                return Complex64::new(0.0, 0.0);
            }
            row[(mi[a] + m - mj[a]) % m]
        });
        out = crate::numerics::matmul(&out, &factor);
    }
    out
}

/// Extracts `𝔞 = K e^{−iS̄}` and the constraint residuals on the interior.
pub fn semiclassical_measure(
    phys: &KernelMatrix,
    action: &dyn ActionField,
    opts: &SemiclassicalOptions,
) -> Result<SemiclassicalReport> {
    let grid = &phys.grid;
    let d = grid.dim();
    if opts.interior.len() != d {
        return Err(Error::DimensionMismatch("interior box vs grid".into()));
    }
    let k = match &opts.window {
        Some(w) => crate::numerics::matmul(&phys.k, &window_matrix(grid, w)),
        None => phys.k.clone(),
    };
    let step = |idx: usize, ax: usize, s: isize| grid.neighbor(idx, ax, s).expect("interior node");
    // Interior nodes with two neighbours each way along every axis.
    let inside: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.point(i);
            x.iter().zip(&opts.interior).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
                && (0..d).all(|a| grid.neighbor(i, a, 2).is_some() && grid.neighbor(i, a, -2).is_some())
        })
        .collect();
    let stride = opts.stride.max(1);
    let inside: Vec<usize> = inside
        .into_iter()
        .filter(|&i| grid.multi_index(i).iter().all(|j| j % stride == 0))
        .collect();
    if inside.is_empty() {
        return Err(Error::InvalidInput("interior box contains no grid nodes".into()));
    }
    let pairs: Vec<(usize, usize)> = inside.iter().flat_map(|&f| inside.iter().map(move |&i| (f, i))).collect();
    let samples: Vec<ActionSample> = pairs
        .par_iter()
        .map(|&(f, i)| action.sample(&grid.point(f), &grid.point(i)))
        .collect::<Result<_>>()?;
    let alpha = phys.weight();
    let mut measure = Vec::with_capacity(pairs.len());
    for (&(f, i), s) in pairs.iter().zip(&samples) {
        measure.push(k[(f, i)] * (-I * s.action).exp());
    }
    let mean = measure.iter().sum::<Complex64>() / measure.len() as f64;
    let max_rel_variation = measure.iter().map(|m| (m - mean).norm()).fold(0.0, f64::max) / mean.norm();

    let knorm: f64 = pairs.iter().map(|&(f, i)| k[(f, i)].norm_sqr()).sum::<f64>().sqrt();
    let mut residual_norms = Vec::new();
    let mut residuals = Vec::new();
    for field in &opts.fields {
        if field.dim() != 2 * d {
            return Err(Error::DimensionMismatch("constraint field lives on (x_f, x_i)".into()));
        }
        let r: Vec<Complex64> = pairs
            .par_iter()
            .zip(&samples)
            .map(|(&(f, i), s)| {
                let xf = grid.point(f);
                let xi = grid.point(i);
                let z: Vec<f64> = xf.iter().chain(xi.iter()).copied().collect();
                let a = field.value(&z)?;
                let div = field.divergence(&z)?;
                let mut lie = alpha * div * k[(f, i)];
                for ax in 0..d {
                    lie += a[ax] * diff4(|s| k[(step(f, ax, s), i)], grid.axes[ax].h);
                    lie += a[d + ax] * diff4(|s| k[(f, step(i, ax, s))], grid.axes[ax].h);
                }
                let adot: f64 = (0..d).map(|ax| a[ax] * s.grad_f[ax] + a[d + ax] * s.grad_i[ax]).sum();
                Ok(I * lie + adot * k[(f, i)])
            })
            .collect::<Result<_>>()?;
        let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / knorm;
        residual_norms.push(rn);
        residuals.push(r);
    }
    Ok(SemiclassicalReport {
        x_f: pairs.iter().map(|&(f, _)| grid.point(f)).collect(),
        x_i: pairs.iter().map(|&(_, i)| grid.point(i)).collect(),
        measure,
        mean,
        max_rel_variation,
        residual_norms,
        residuals,
    })
}

/// Fourth-order central difference from samples at offsets `±1, ±2`.
fn diff4(at: impl Fn(isize) -> Complex64, h: f64) -> Complex64 {
    (at(-2) - at(-1) * 8.0 + at(1) * 8.0 - at(2)) / (12.0 * h)
}

/// Applies `h · K` to a sampled initial wave function.
pub fn propagate(phys: &KernelMatrix, psi0: &DVector<Complex64>) -> DVector<Complex64> {
    phys.evolution() * psi0
}
