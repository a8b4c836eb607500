//! Discrete stationary-action solutions between fixed boundary points,
//! Hessians of the on-shell action, Jacobi fields and Green functions.

mod blocktri;
mod jacobi;

pub use jacobi::{boundary_greens, BoundaryGreens, JacobiField, JacobiSolver};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sysdsl::SystemSpec;
pub use blocktri::BlockTri;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_i: f64,
    pub t_f: f64,
    pub slices: usize,
}

impl TimeGrid {
    pub fn new(t_i: f64, t_f: f64, slices: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidInput("need at least one time slice".into()));
        }
        if !(t_i.is_finite() && t_f.is_finite() && t_f > t_i) {
            return Err(Error::InvalidInput(format!("need t_f > t_i, got [{t_i}, {t_f}]")));
        }
        Ok(TimeGrid { t_i, t_f, slices })
    }

    pub fn tau(&self) -> f64 {
        (self.t_f - self.t_i) / self.slices as f64
    }

    pub fn duration(&self) -> f64 {
        self.t_f - self.t_i
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_i + self.tau() * k as f64
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.t_i + self.tau() * (k as f64 + 0.5)
    }
}

/// Positions at the grid nodes `0..=slices`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteHistory {
    pub dim: usize,
    pub nodes: Vec<f64>,
}

impl DiscreteHistory {
    pub fn straight(x_f: &[f64], x_i: &[f64], slices: usize) -> Self {
        let dim = x_i.len();
        let mut nodes = Vec::with_capacity(dim * (slices + 1));
        for k in 0..=slices {
            let s = k as f64 / slices as f64;
            nodes.extend(x_i.iter().zip(x_f).map(|(a, b)| a + s * (b - a)));
        }
        DiscreteHistory { dim, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.nodes[k * self.dim..(k + 1) * self.dim]
    }
}

/// Midpoint-rule action of one interval and its derivatives with respect
/// to the two endpoints `a = x_k`, `b = x_{k+1}`.
#[derive(Clone, Debug)]
pub(crate) struct Interval {
    pub value: f64,
    pub da: DVector<f64>,
    pub db: DVector<f64>,
    pub daa: DMatrix<f64>,
    pub dab: DMatrix<f64>,
    pub dbb: DMatrix<f64>,
    pub lxx: DMatrix<f64>,
    pub lvv: DMatrix<f64>,
}

impl Interval {
    pub fn dba(&self) -> DMatrix<f64> {
        self.dab.transpose()
    }
}

pub(crate) fn interval(spec: &SystemSpec, a: &[f64], b: &[f64], tau: f64, t_mid: f64) -> Result<Interval> {
    let n = spec.dim;
    let xm: Vec<f64> = a.iter().zip(b).map(|(a, b)| 0.5 * (a + b)).collect();
    let v: Vec<f64> = a.iter().zip(b).map(|(a, b)| (b - a) / tau).collect();
    let j = spec.lagrangian_jet(&xm, &v, t_mid)?;
    let lx = DVector::from_fn(n, |i, _| j.grad[i]);
    let lv = DVector::from_fn(n, |i, _| j.grad[n + i]);
    let lxx = DMatrix::from_fn(n, n, |r, c| j.h(r, c));
    let lxv = DMatrix::from_fn(n, n, |r, c| j.h(r, n + c));
    let lvx = lxv.transpose();
    let lvv = DMatrix::from_fn(n, n, |r, c| j.h(n + r, n + c));
    let half_tau_lx = &lx * (0.5 * tau);
    Ok(Interval {
        value: tau * j.value,
        da: &half_tau_lx - &lv,
        db: &half_tau_lx + &lv,
        daa: &lxx * (0.25 * tau) - (&lxv + &lvx) * 0.5 + &lvv / tau,
        dab: &lxx * (0.25 * tau) + (&lxv - &lvx) * 0.5 - &lvv / tau,
        dbb: &lxx * (0.25 * tau) + (&lxv + &lvx) * 0.5 + &lvv / tau,
        lxx,
        lvv,
    })
}

pub(crate) fn intervals(spec: &SystemSpec, h: &DiscreteHistory, grid: &TimeGrid) -> Result<Vec<Interval>> {
    let tau = grid.tau();
    (0..grid.slices).map(|k| interval(spec, h.node(k), h.node(k + 1), tau, grid.midpoint(k))).collect()
}

/// Second derivatives of the on-shell action. `fi[(u, v)] = ∂²S̄/∂x_f^u ∂x_i^v`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryHessian {
    pub ff: DMatrix<f64>,
    pub fi: DMatrix<f64>,
    pub ii: DMatrix<f64>,
}

impl BoundaryHessian {
    pub fn if_(&self) -> DMatrix<f64> {
        self.fi.transpose()
    }

    /// Full `2n × 2n` matrix in `[f, i]` order.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.ff.nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.ff);
        h.view_mut((0, n), (n, n)).copy_from(&self.fi);
        h.view_mut((n, 0), (n, n)).copy_from(&self.fi.transpose());
        h.view_mut((n, n), (n, n)).copy_from(&self.ii);
        h
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the max-norm of the interior action gradient.
    /// Defaults to `1e-10 · n · N`.
    pub tol: Option<f64>,
    pub initial: Option<DiscreteHistory>,
    /// Skip the conjugate-point test.
    pub allow_caustic: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 50, tol: None, initial: None, allow_caustic: false }
    }
}

#[derive(Clone, Debug)]
pub struct ClassicalSolution {
    pub grid: TimeGrid,
    pub history: DiscreteHistory,
    pub action: f64,
    /// `∂S̄/∂x_f`
    pub p_f: Vec<f64>,
    /// `−∂S̄/∂x_i`
    pub p_i: Vec<f64>,
    pub hessian: BoundaryHessian,
    pub iterations: usize,
    pub residual: f64,
    /// Smallest singular value of the normalized final-initial Green function;
    /// vanishes at a conjugate point.
    pub jacobi_conditioning: f64,
    /// Threshold used for the conjugate-point decision.
    pub caustic_threshold: f64,
}

impl ClassicalSolution {
    pub fn x_f(&self) -> &[f64] {
        self.history.node(self.grid.slices)
    }
    pub fn x_i(&self) -> &[f64] {
        self.history.node(0)
    }
}

#[derive(Clone, Debug)]
pub struct ActionDerivs {
    pub action: f64,
    pub grad_f: Vec<f64>,
    pub grad_i: Vec<f64>,
    pub hessian: BoundaryHessian,
}

fn interior_system(iv: &[Interval]) -> (BlockTri, Vec<DMatrix<f64>>) {
    let m = iv.len() - 1;
    let diag = (1..=m).map(|k| &iv[k - 1].dbb + &iv[k].daa).collect();
    let upper: Vec<DMatrix<f64>> = (1..m).map(|k| iv[k].dab.clone()).collect();
    let lower = upper.iter().map(|u| u.transpose()).collect();
    let grad = (1..=m).map(|k| DMatrix::from_column_slice(iv[k].da.len(), 1, (&iv[k - 1].db + &iv[k].da).as_slice())).collect();
    (BlockTri { diag, upper, lower }, grad)
}

fn max_abs(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().fold(0.0f64, |m, b| m.max(b.amax()))
}

/// Midpoint-rule action `Σ τ L(x̄_k, v_k, t_{k+½})` of a history.
pub fn discrete_action(spec: &SystemSpec, h: &DiscreteHistory, grid: &TimeGrid) -> Result<f64> {
    check_history(spec, h, grid)?;
    Ok(intervals(spec, h, grid)?.iter().map(|i| i.value).sum())
}

fn check_history(spec: &SystemSpec, h: &DiscreteHistory, grid: &TimeGrid) -> Result<()> {
    if h.dim != spec.dim || h.nodes.len() != spec.dim * (grid.slices + 1) {
        return Err(Error::DimensionMismatch(format!(
            "history needs {} nodes of dimension {}",
            grid.slices + 1,
            spec.dim
        )));
    }
    Ok(())
}

/// First and second derivatives of the discrete action with respect to
/// every node, endpoints included.
#[derive(Clone, Debug)]
pub struct ActionGradient {
    pub gradient: Vec<DVector<f64>>,
    pub hessian: BlockTri,
}

impl ActionGradient {
    /// Discrete Euler–Lagrange residual at the interior nodes.
    pub fn interior(&self) -> &[DVector<f64>] {
        &self.gradient[1..self.gradient.len() - 1]
    }
    /// `∂S/∂x_N`
    pub fn p_f(&self) -> &DVector<f64> {
        &self.gradient[self.gradient.len() - 1]
    }
    /// `−∂S/∂x_0`
    pub fn p_i(&self) -> DVector<f64> {
        -&self.gradient[0]
    }
}

pub fn action_gradient_hessian(spec: &SystemSpec, h: &DiscreteHistory, grid: &TimeGrid) -> Result<ActionGradient> {
    check_history(spec, h, grid)?;
    let iv = intervals(spec, h, grid)?;
    let n = spec.dim;
    let m = iv.len();
    let mut gradient = vec![DVector::zeros(n); m + 1];
    let mut diag = vec![DMatrix::zeros(n, n); m + 1];
    for (k, i) in iv.iter().enumerate() {
        gradient[k] += &i.da;
        gradient[k + 1] += &i.db;
        diag[k] += &i.daa;
        diag[k + 1] += &i.dbb;
    }
    let upper: Vec<DMatrix<f64>> = iv.iter().map(|i| i.dab.clone()).collect();
    let lower = iv.iter().map(|i| i.dba()).collect();
    Ok(ActionGradient { gradient, hessian: BlockTri { diag, upper, lower } })
}

/// Newton iteration with Armijo backtracking on `½‖∇S‖²`.
pub fn solve_classical(
    spec: &SystemSpec,
    x_f: &[f64],
    x_i: &[f64],
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<ClassicalSolution> {
    let n = spec.dim;
    if x_f.len() != n || x_i.len() != n {
        return Err(Error::DimensionMismatch(format!("boundary points must have {n} components")));
    }
    if !spec.contains(x_f) || !spec.contains(x_i) {
        return Err(Error::InvalidInput("boundary point outside the chart domain".into()));
    }
    let big_n = grid.slices;
    let mut hist = match &opts.initial {
        Some(h) => {
            if h.dim != n || h.len() != big_n + 1 {
                return Err(Error::DimensionMismatch("initial history shape".into()));
            }
            let mut h = h.clone();
            h.node_mut(0).copy_from_slice(x_i);
            h.node_mut(big_n).copy_from_slice(x_f);
            h
        }
        None => DiscreteHistory::straight(x_f, x_i, big_n),
    };
    let tol = opts.tol.unwrap_or(1e-10 * (n * big_n) as f64);
    let mut iterations = 0;
    let mut iv = intervals(spec, &hist, grid)?;
    let mut residual = 0.0;
    if big_n > 1 {
        loop {
            let (sys, grad) = interior_system(&iv);
            residual = max_abs(&grad);
            if residual <= tol {
                break;
            }
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, residual });
            }
            iterations += 1;
            let fac = sys.factor()?;
            let step = fac.solve(&grad);
            let merit0: f64 = grad.iter().map(|g| g.norm_squared()).sum::<f64>() * 0.5;
            let mut alpha = 1.0;
            loop {
                let mut trial = hist.clone();
                for k in 1..big_n {
                    for (x, d) in trial.node_mut(k).iter_mut().zip(step[k - 1].iter()) {
                        *x -= alpha * d;
                    }
                }
                let accepted = match intervals(spec, &trial, grid) {
                    Ok(tiv) => {
                        let (_, tg) = interior_system(&tiv);
                        let merit: f64 = tg.iter().map(|g| g.norm_squared()).sum::<f64>() * 0.5;
                        if merit.is_finite() && merit <= merit0 * (1.0 - 2e-4 * alpha) {
                            hist = trial;
                            iv = tiv;
                            true
                        } else {
                            false
                        }
                    }
                    Err(Error::Domain(_)) => false,
                    Err(e) => return Err(e),
                };
                if accepted {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    return Err(Error::NoConvergence { iterations, residual });
                }
            }
        }
    }
    let action: f64 = iv.iter().map(|i| i.value).sum();
    let hessian = boundary_hessian(&iv)?;
    let p_f = iv[big_n - 1].db.as_slice().to_vec();
    let p_i = (-&iv[0].da).as_slice().to_vec();
    let (jacobi_conditioning, caustic_threshold) = conjugate_point_measure(&iv, &hessian, grid)?;
    if !opts.allow_caustic && jacobi_conditioning < caustic_threshold {
        return Err(Error::SingularHessian(format!(
            "conjugate point: normalized Jacobi map conditioning {jacobi_conditioning:e} below {caustic_threshold:e}"
        )));
    }
    Ok(ClassicalSolution {
        grid: *grid,
        history: hist,
        action,
        p_f,
        p_i,
        hessian,
        iterations,
        residual,
        jacobi_conditioning,
        caustic_threshold,
    })
}

/// Schur complement of the interior block in the full action Hessian.
fn boundary_hessian(iv: &[Interval]) -> Result<BoundaryHessian> {
    let big_n = iv.len();
    let n = iv[0].da.len();
    let last = &iv[big_n - 1];
    let first = &iv[0];
    let mut ff = last.dbb.clone();
    let mut ii = first.daa.clone();
    if big_n == 1 {
        return Ok(BoundaryHessian { ff, fi: first.dba(), ii });
    }
    let m = big_n - 1;
    let (sys, _) = interior_system(iv);
    let fac = sys.factor()?;
    // Columns: n for x_f, n for x_i.
    let mut rhs = vec![DMatrix::zeros(n, 2 * n); m];
    rhs[m - 1].view_mut((0, 0), (n, n)).copy_from(&last.dab);
    let r0 = first.dba();
    rhs[0].view_mut((0, n), (n, n)).add_assign_from(&r0);
    let z = fac.solve(&rhs);
    let cf = last.dba() * &z[m - 1];
    let ci = &first.dab * &z[0];
    ff -= cf.columns(0, n);
    let fi = -cf.columns(n, n).into_owned();
    ii -= ci.columns(n, n);
    Ok(BoundaryHessian { ff, fi, ii })
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, m: &DMatrix<f64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, m: &DMatrix<f64>) {
        for (a, b) in self.iter_mut().zip(m.iter()) {
            *a += b;
        }
    }
}

/// Returns `(σ_min(−G_if M̄ / T), threshold)` where `M̄` is the mean
/// velocity Hessian. The discrete conjugate point is displaced by
/// `O(τ²)` from the continuum one, so the threshold scales as `(τ ω)²`
/// with `ω²` bounding the ratio of position to velocity curvature.
fn conjugate_point_measure(iv: &[Interval], h: &BoundaryHessian, grid: &TimeGrid) -> Result<(f64, f64)> {
    let n = h.ff.nrows();
    let scale = h.fi.amax().max(f64::MIN_POSITIVE);
    let lu = h.fi.clone().lu();
    let pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if !pivot.is_finite() || pivot <= 1e-14 * scale {
        return Err(Error::SingularHessian("mixed boundary Hessian is not invertible".into()));
    }
    let g_if = lu.try_inverse().ok_or_else(|| Error::SingularHessian("mixed boundary Hessian".into()))?;
    let mut mbar = DMatrix::zeros(n, n);
    let mut omega2 = 0.0f64;
    for i in iv {
        mbar += &i.lvv;
        let lam = SymmetricEigen::new(i.lvv.clone()).eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
        if lam <= 0.0 || !lam.is_finite() {
            return Err(Error::SingularHessian("velocity Hessian is degenerate".into()));
        }
        omega2 = omega2.max(i.lxx.norm() / lam);
    }
    mbar /= iv.len() as f64;
    let j = -(&g_if * &mbar) / grid.duration();
    let sv = j.singular_values();
    let smin = sv.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let thr = (grid.tau() * grid.tau() * omega2).max(1e-10);
    Ok((smin, thr))
}

/// On-shell action with its first and second boundary derivatives.
pub fn classical_action_derivs(spec: &SystemSpec, x_f: &[f64], x_i: &[f64], grid: &TimeGrid) -> Result<ActionDerivs> {
    let sol = solve_classical(spec, x_f, x_i, grid, &SolveOptions::default())?;
    Ok(ActionDerivs {
        action: sol.action,
        grad_f: sol.p_f.clone(),
        grad_i: sol.p_i.iter().map(|p| -p).collect(),
        hessian: sol.hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(l: &str) -> SystemSpec {
        SystemSpec::from_json(&format!(
            r#"{{"name":"s","dim":1,"lagrangian":"{l}","domain":[{{"min":-10,"max":10}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn free_particle_closed_form() {
        let s = spec("0.5*v1^2");
        let g = TimeGrid::new(0.0, 1.0, 7).unwrap();
        let sol = solve_classical(&s, &[1.0], &[0.0], &g, &SolveOptions::default()).unwrap();
        assert!((sol.action - 0.5).abs() < 1e-13);
        assert!((sol.p_f[0] - 1.0).abs() < 1e-13 && (sol.p_i[0] - 1.0).abs() < 1e-13);
        assert!((sol.hessian.fi[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((sol.hessian.ff[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_slice() {
        let s = spec("0.5*v1^2 - 0.5*x1^2");
        let g = TimeGrid::new(0.0, 0.1, 1).unwrap();
        let sol = solve_classical(&s, &[0.2], &[0.1], &g, &SolveOptions::default()).unwrap();
        let want = 0.1 * (0.5 * 1.0 - 0.5 * 0.15f64.powi(2));
        assert!((sol.action - want).abs() < 1e-15);
    }

    #[test]
    fn oscillator_half_period_is_a_caustic() {
        let s = spec("0.5*v1^2 - 0.5*x1^2");
        let g = TimeGrid::new(0.0, std::f64::consts::PI, 100).unwrap();
        let e = solve_classical(&s, &[0.0], &[0.0], &g, &SolveOptions::default()).unwrap_err();
        assert!(matches!(e, Error::SingularHessian(_)), "{e}");
        let g = TimeGrid::new(0.0, std::f64::consts::PI - 0.05, 100).unwrap();
        assert!(solve_classical(&s, &[0.0], &[0.0], &g, &SolveOptions::default()).is_ok());
    }
}
