//! Grid representation of the basic quantum observables acting on
//! half-density wave functions.
//!
//! Wave functions are densities of weight `½ + iγ`. Position-independent
//! objects such as `op_f` act on any weight; derivative operators check
//! the weight of their argument.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{christoffel_curvature, MetricField, ScalarField, VectorField};
use crate::numerics::{max_abs_diff, CMatrix};
use crate::sysdsl::DomainAxis;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Wave-function weight `½ + iγ`.
pub fn wave_weight(gamma: f64) -> Complex64 {
    Complex64::new(0.5, gamma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub h: f64,
    pub points: usize,
    pub periodic: bool,
}

impl GridAxis {
    /// Non-periodic axes include both end points; periodic axes have
    /// length `points · h`.
    pub fn new(min: f64, max: f64, points: usize, periodic: bool) -> Result<Self> {
        if points < 8 {
            return Err(Error::InvalidInput(format!("grid needs at least 8 points per axis, got {points}")));
        }
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::InvalidInput("grid axis needs min < max".into()));
        }
        let h = if periodic { (max - min) / points as f64 } else { (max - min) / (points - 1) as f64 };
        Ok(GridAxis { min, h, points, periodic })
    }

    pub fn coord(&self, j: usize) -> f64 {
        self.min + self.h * j as f64
    }

    pub fn length(&self) -> f64 {
        if self.periodic {
            self.h * self.points as f64
        } else {
            self.h * (self.points - 1) as f64
        }
    }
}

/// Tensor-product grid; the last axis varies fastest in flat indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub axes: Vec<GridAxis>,
}

impl Grid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        Ok(Grid { axes })
    }

    pub fn uniform_1d(min: f64, max: f64, points: usize, periodic: bool) -> Result<Self> {
        Grid::new(vec![GridAxis::new(min, max, points, periodic)?])
    }

    pub fn from_domain(domain: &[DomainAxis], points: usize) -> Result<Self> {
        Grid::new(domain.iter().map(|d| GridAxis::new(d.min, d.max, points, d.periodic)).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = idx % a.points;
            idx /= a.points;
        }
        out
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.axes).fold(0, |acc, (&j, a)| acc * a.points + j)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.axes).map(|(&j, a)| a.coord(j)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Neighbour of `idx` shifted by `step` along `axis`, wrapping on
    /// periodic axes.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let mut mi = self.multi_index(idx);
        let a = &self.axes[axis];
        let j = mi[axis] as isize + step;
        let m = a.points as isize;
        mi[axis] = if a.periodic {
            j.rem_euclid(m) as usize
        } else if (0..m).contains(&j) {
            j as usize
        } else {
            return None;
        };
        Some(self.flat_index(&mi))
    }

    /// Samples a scalar field at every node.
    pub fn sample(&self, f: &dyn ScalarField) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.len());
        for i in 0..self.len() {
            v[i] = f.value(&self.point(i))?;
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stencil {
    /// Second-order central differences, one-sided at non-periodic edges.
    #[default]
    Central,
    /// Trigonometric interpolation derivative; periodic axes only.
    Fourier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub values: DVector<Complex64>,
    pub weight: Complex64,
}

impl DensityField {
    pub fn new(values: DVector<Complex64>, weight: Complex64) -> Self {
        DensityField { values, weight }
    }

    pub fn from_fn(grid: &Grid, weight: Complex64, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = DVector::from_fn(grid.len(), |i, _| f(&grid.point(i)));
        DensityField { values, weight }
    }

    /// Grid `L²` norm with cell-volume weights.
    pub fn norm(&self, grid: &Grid) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt()
    }
}

fn weight_str(w: Option<Complex64>) -> String {
    match w {
        Some(w) => format!("{}{:+}i", w.re, w.im),
        None => "any".into(),
    }
}

/// Dense matrix acting on grid densities. `None` weights accept anything
/// and preserve the input weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOperator {
    pub matrix: CMatrix,
    pub weight_in: Option<Complex64>,
    pub weight_out: Option<Complex64>,
}

fn same_weight(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-12
}

impl GridOperator {
    pub fn new(matrix: CMatrix, weight: Option<Complex64>) -> Self {
        GridOperator { matrix, weight_in: weight, weight_out: weight }
    }

    pub fn apply(&self, psi: &DensityField) -> Result<DensityField> {
        if psi.values.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch("operator vs field size".into()));
        }
        if let Some(w) = self.weight_in {
            if !same_weight(w, psi.weight) {
                return Err(Error::WeightMismatch { expected: weight_str(Some(w)), found: weight_str(Some(psi.weight)) });
            }
        }
        Ok(DensityField { values: &self.matrix * &psi.values, weight: self.weight_out.unwrap_or(psi.weight) })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GridOperator) -> Result<GridOperator> {
        if let (Some(a), Some(b)) = (self.weight_in, other.weight_out) {
            if !same_weight(a, b) {
                return Err(Error::WeightMismatch { expected: weight_str(Some(a)), found: weight_str(Some(b)) });
            }
        }
        Ok(GridOperator {
            matrix: crate::numerics::matmul(&self.matrix, &other.matrix),
            weight_in: other.weight_in.or(self.weight_in),
            weight_out: self.weight_out.or(other.weight_out),
        })
    }

    pub fn commutator(&self, other: &GridOperator) -> Result<GridOperator> {
        let ab = self.compose(other)?;
        let ba = other.compose(self)?;
        Ok(GridOperator { matrix: ab.matrix - ba.matrix, ..ab })
    }

    pub fn adjoint(&self) -> GridOperator {
        GridOperator { matrix: self.matrix.adjoint(), weight_in: self.weight_in, weight_out: self.weight_out }
    }

    /// Largest entry of `A − A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn scale(&self, s: Complex64) -> GridOperator {
        GridOperator { matrix: &self.matrix * s, ..self.clone() }
    }

    pub fn add(&self, o: &GridOperator) -> GridOperator {
        GridOperator { matrix: &self.matrix + &o.matrix, ..self.clone() }
    }

    pub fn sub(&self, o: &GridOperator) -> GridOperator {
        GridOperator { matrix: &self.matrix - &o.matrix, ..self.clone() }
    }
}

/// First-derivative matrix along one axis.
pub fn derivative_matrix(grid: &Grid, axis: usize, stencil: Stencil) -> Result<DMatrix<f64>> {
    let n = grid.len();
    let ax = grid.axes.get(axis).ok_or_else(|| Error::DimensionMismatch("axis".into()))?;
    let h = ax.h;
    let mut d = DMatrix::zeros(n, n);
    match stencil {
        Stencil::Central => {
            for i in 0..n {
                match (grid.neighbor(i, axis, -1), grid.neighbor(i, axis, 1)) {
                    (Some(l), Some(r)) => {
                        d[(i, r)] += 0.5 / h;
                        d[(i, l)] -= 0.5 / h;
                    }
                    (None, Some(r)) => {
                        let r2 = grid.neighbor(i, axis, 2).expect("axis has at least 8 points");
                        d[(i, i)] -= 1.5 / h;
                        d[(i, r)] += 2.0 / h;
                        d[(i, r2)] -= 0.5 / h;
                    }
                    (Some(l), None) => {
                        let l2 = grid.neighbor(i, axis, -2).expect("axis has at least 8 points");
                        d[(i, i)] += 1.5 / h;
                        d[(i, l)] -= 2.0 / h;
                        d[(i, l2)] += 0.5 / h;
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        Stencil::Fourier => {
            if !ax.periodic {
                return Err(Error::InvalidInput("Fourier stencil needs a periodic axis".into()));
            }
            let m = ax.points;
            let l = ax.length();
            let pi = std::f64::consts::PI;
            let kernel = |s: usize| -> f64 {
                if s == 0 {
                    return 0.0;
                }
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                let arg = pi * s as f64 / m as f64;
                if m % 2 == 1 {
                    sign * pi / l / arg.sin()
                } else {
                    sign * pi / l / arg.tan()
                }
            };
            for i in 0..n {
                for (s, row_entry) in (1..m).map(|s| (s, kernel(s))) {
                    // D[j, j−s] = kernel(s)
                    let col = grid.neighbor(i, axis, -(s as isize)).expect("periodic");
                    d[(i, col)] = row_entry;
                }
            }
        }
    }
    Ok(d)
}

/// Multiplication operator by a real function.
pub fn op_f(f: &dyn ScalarField, grid: &Grid) -> Result<GridOperator> {
    let v = grid.sample(f)?;
    Ok(op_f_values(&v))
}

pub fn op_f_values(v: &DVector<f64>) -> GridOperator {
    GridOperator::new(CMatrix::from_diagonal(&v.map(c)), None)
}

fn sample_vector(a: &dyn VectorField, grid: &Grid) -> Result<Vec<DVector<f64>>> {
    if a.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("vector field vs grid".into()));
    }
    let mut comps = vec![DVector::zeros(grid.len()); grid.dim()];
    for i in 0..grid.len() {
        let v = a.value(&grid.point(i))?;
        for (k, comp) in comps.iter_mut().enumerate() {
            comp[i] = v[k];
        }
    }
    Ok(comps)
}

fn sample_measure(mu: Option<&dyn ScalarField>, grid: &Grid) -> Result<DVector<f64>> {
    match mu {
        None => Ok(DVector::from_element(grid.len(), 1.0)),
        Some(m) => {
            let v = grid.sample(m)?;
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::Domain("reference density must be positive".into()));
            }
            Ok(v)
        }
    }
}

/// Discrete `μ⁻¹ £_a μ = ∂_k a^k + a^k ∂_k ln μ` with the given stencil.
pub fn discrete_divergence(
    a: &dyn VectorField,
    grid: &Grid,
    mu: Option<&dyn ScalarField>,
    stencil: Stencil,
) -> Result<DVector<f64>> {
    let comps = sample_vector(a, grid)?;
    let lnmu = sample_measure(mu, grid)?.map(f64::ln);
    let mut div = DVector::zeros(grid.len());
    for (k, ak) in comps.iter().enumerate() {
        let d = derivative_matrix(grid, k, stencil)?;
        div += &d * ak + ak.component_mul(&(&d * &lnmu));
    }
    Ok(div)
}

/// `−i £_a` on densities of weight `½ + iγ`, written in the frame of the
/// reference density `μ` (uniform if `None`):
/// `μ^{-½} [−(i/2) Σ_k (A_k D_k + D_k A_k)] μ^{½} + γ · div_μ a`.
pub fn op_g(
    a: &dyn VectorField,
    gamma: f64,
    grid: &Grid,
    mu: Option<&dyn ScalarField>,
    stencil: Stencil,
) -> Result<GridOperator> {
    let comps = sample_vector(a, grid)?;
    let m = sample_measure(mu, grid)?;
    let n = grid.len();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (k, ak) in comps.iter().enumerate() {
        let d = derivative_matrix(grid, k, stencil)?;
        let ad = DMatrix::from_fn(n, n, |i, j| ak[i] * d[(i, j)]);
        let da = DMatrix::from_fn(n, n, |i, j| d[(i, j)] * ak[j]);
        s += ad + da;
    }
    let root = m.map(f64::sqrt);
    let div = discrete_divergence(a, grid, mu, stencil)?;
    let matrix = CMatrix::from_fn(n, n, |i, j| {
        let mut v = -0.5 * I * s[(i, j)] * (root[j] / root[i]);
        if i == j {
            v += c(gamma * div[i]);
        }
        v
    });
    Ok(GridOperator::new(matrix, Some(wave_weight(gamma))))
}

/// `exp(−i ε op_g(a))`, the flow of `a` by parameter `ε`.
pub fn shift_operator(a: &dyn VectorField, eps: f64, grid: &Grid, stencil: Stencil) -> Result<GridOperator> {
    let g = op_g(a, 0.0, grid, None, stencil)?;
    let gen = &g.matrix * (-I * eps);
    Ok(GridOperator::new(gen.exp(), g.weight_in))
}

/// Quadratic observable `−Δ_g + ξ R` on densities of weight `½ + iγ`,
/// i.e. `|g|^{α/2} (−Δ_g + ξR) |g|^{−α/2}` with `α = ½ + iγ`. It is a
/// positive operator. Diagonal metric terms use a conservative face-flux
/// stencil, mixed terms central differences. Non-periodic edges act as
/// hard walls.
pub fn op_k(g: &dyn MetricField, xi: f64, grid: &Grid, gamma: f64) -> Result<GridOperator> {
    let n = grid.len();
    let d = grid.dim();
    if g.dim() != d {
        return Err(Error::DimensionMismatch("metric vs grid".into()));
    }
    // W^{ab} = √|g| g^{ab} and √|g| at the nodes.
    let mut sqrtg = DVector::zeros(n);
    let mut w: Vec<Vec<DVector<f64>>> = vec![vec![DVector::zeros(n); d]; d];
    for i in 0..n {
        let x = grid.point(i);
        let gm = g.metric(&x)?;
        let det = gm.determinant();
        if !(det > 0.0) {
            return Err(Error::SingularMetric(x));
        }
        let gi = gm.try_inverse().ok_or_else(|| Error::SingularMetric(grid.point(i)))?;
        sqrtg[i] = det.sqrt();
        for a in 0..d {
            for b in 0..d {
                w[a][b][i] = sqrtg[i] * gi[(a, b)];
            }
        }
    }
    // Stiffness S with Δ_g = S / √g (S symmetric on periodic grids).
    let mut s = DMatrix::<f64>::zeros(n, n);
    for a in 0..d {
        let h2 = grid.axes[a].h * grid.axes[a].h;
        for i in 0..n {
            for step in [-1isize, 1] {
                let (wf, nb) = match grid.neighbor(i, a, step) {
                    Some(j) => (0.5 * (w[a][a][i] + w[a][a][j]), Some(j)),
                    None => (w[a][a][i], None),
                };
                s[(i, i)] -= wf / h2;
                if let Some(j) = nb {
                    s[(i, j)] += wf / h2;
                }
            }
        }
    }
    if d > 1 {
        let ds: Vec<DMatrix<f64>> = (0..d).map(|a| derivative_matrix(grid, a, Stencil::Central)).collect::<Result<_>>()?;
        for a in 0..d {
            for b in 0..d {
                if a == b {
                    continue;
                }
                let wd = DMatrix::from_fn(n, n, |i, j| w[a][b][i] * ds[b][(i, j)]);
                s += &ds[a] * wd;
            }
        }
    }
    let alpha = wave_weight(gamma);
    // |g|^{α/2} at nodes
    let pw: Vec<Complex64> = sqrtg.iter().map(|sg| (alpha * sg.ln()).exp()).collect();
    let mut matrix = CMatrix::from_fn(n, n, |i, j| -c(s[(i, j)] / sqrtg[i]) * pw[i] / pw[j]);
    if xi != 0.0 {
        for i in 0..n {
            let r = christoffel_curvature(g, &grid.point(i))?.scalar;
            matrix[(i, i)] += c(xi * r);
        }
    }
    Ok(GridOperator::new(matrix, Some(alpha)))
}

/// Basis of the matrices commuting with every operator in `ops`,
/// obtained from the null space of `A ↦ ([F_k, A])_k`.
pub fn commutant_basis(ops: &[&GridOperator], tol: f64) -> Vec<CMatrix> {
    let d = ops[0].matrix.nrows();
    let id = CMatrix::identity(d, d);
    let mut rows = CMatrix::zeros(ops.len() * d * d, d * d);
    for (k, op) in ops.iter().enumerate() {
        // vec(FA − AF) = (I ⊗ F − Fᵀ ⊗ I) vec(A), column-major vec.
        let blk = id.kronecker(&op.matrix) - op.matrix.transpose().kronecker(&id);
        rows.view_mut((k * d * d, 0), (d * d, d * d)).copy_from(&blk);
    }
    let svd = rows.svd(false, true);
    let vt = svd.v_t.expect("requested");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(r, _)| {
            let v: Vec<Complex64> = vt.row(r).iter().map(|z| z.conj()).collect();
            CMatrix::from_column_slice(d, d, &v)
        })
        .collect()
}
