use nalgebra::{DMatrix, DVector};

use super::{intervals, interior_system, ClassicalSolution, Interval};
use crate::error::{Error, Result};
use crate::sysdsl::SystemSpec;

/// Linearized history: one displacement per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiField {
    pub dx: Vec<DVector<f64>>,
}

impl JacobiField {
    pub fn max_abs_diff(&self, o: &JacobiField) -> f64 {
        self.dx.iter().zip(&o.dx).fold(0.0, |m, (a, b)| m.max((a - b).amax()))
    }
}

/// Linearization of the discrete Euler-Lagrange equations about a solution.
pub struct JacobiSolver {
    iv: Vec<Interval>,
    n: usize,
}

fn inv(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or_else(|| Error::SingularHessian(format!("{what} not invertible")))
}

impl JacobiSolver {
    pub fn new(spec: &SystemSpec, sol: &ClassicalSolution) -> Result<Self> {
        let iv = intervals(spec, &sol.history, &sol.grid)?;
        Ok(JacobiSolver { iv, n: spec.dim })
    }

    pub fn slices(&self) -> usize {
        self.iv.len()
    }

    /// Linearized discrete momentum at node `k`. Interior nodes use the
    /// forward interval; the last node uses the backward one.
    pub fn momentum(&self, f: &JacobiField, k: usize) -> DVector<f64> {
        let big_n = self.iv.len();
        if k < big_n {
            let i = &self.iv[k];
            -(&i.daa * &f.dx[k] + &i.dab * &f.dx[k + 1])
        } else {
            let i = &self.iv[big_n - 1];
            i.dba() * &f.dx[big_n - 1] + &i.dbb * &f.dx[big_n]
        }
    }

    /// Mismatch of the two one-sided momenta at interior nodes.
    pub fn residual(&self, f: &JacobiField) -> f64 {
        (1..self.iv.len())
            .map(|k| {
                let b = &self.iv[k - 1];
                let back = b.dba() * &f.dx[k - 1] + &b.dbb * &f.dx[k];
                (back - self.momentum(f, k)).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Unique Jacobi field with the given displacement and momentum at node `k`.
    pub fn from_cauchy(&self, k: usize, dx: &DVector<f64>, dp: &DVector<f64>) -> Result<JacobiField> {
        let big_n = self.iv.len();
        if k > big_n || dx.len() != self.n || dp.len() != self.n {
            return Err(Error::DimensionMismatch("Cauchy data".into()));
        }
        let mut xs = vec![DVector::zeros(self.n); big_n + 1];
        xs[k] = dx.clone();
        // Forward: momentum at node j is the forward-interval one.
        let mut p = dp.clone();
        for j in k..big_n {
            let i = &self.iv[j];
            let rhs = -(&p + &i.daa * &xs[j]);
            xs[j + 1] = inv(&i.dab, "mixed interval Hessian")? * rhs;
            p = i.dba() * &xs[j] + &i.dbb * &xs[j + 1];
        }
        // Backward: momentum at node j+1 is the backward-interval one,
        // which equals the forward one for Jacobi fields.
        let mut p = dp.clone();
        for j in (0..k).rev() {
            let i = &self.iv[j];
            let rhs = &p - &i.dbb * &xs[j + 1];
            xs[j] = inv(&i.dba(), "mixed interval Hessian")? * rhs;
            p = -(&i.daa * &xs[j] + &i.dab * &xs[j + 1]);
        }
        Ok(JacobiField { dx: xs })
    }

    /// Replaces a displacement history by the Jacobi field sharing its
    /// Cauchy data at node `k`.
    pub fn cauchy_project(&self, f: &JacobiField, k: usize) -> Result<JacobiField> {
        let p = self.momentum(f, k);
        self.from_cauchy(k, &f.dx[k], &p)
    }

    /// Jacobi field with prescribed end displacements.
    pub fn dirichlet(&self, dx_f: &DVector<f64>, dx_i: &DVector<f64>) -> Result<JacobiField> {
        let big_n = self.iv.len();
        let n = self.n;
        let mut xs = vec![DVector::zeros(n); big_n + 1];
        xs[0] = dx_i.clone();
        xs[big_n] = dx_f.clone();
        if big_n > 1 {
            let (sys, _) = interior_system(&self.iv);
            let m = big_n - 1;
            let mut rhs = vec![DMatrix::zeros(n, 1); m];
            let a = -(self.iv[0].dba() * dx_i);
            rhs[0] += DMatrix::from_column_slice(n, 1, a.as_slice());
            let b = -(&self.iv[big_n - 1].dab * dx_f);
            rhs[m - 1] += DMatrix::from_column_slice(n, 1, b.as_slice());
            let z = sys.factor()?.solve(&rhs);
            for k in 1..big_n {
                xs[k] = DVector::from_column_slice(z[k - 1].as_slice());
            }
        }
        Ok(JacobiField { dx: xs })
    }

    /// Symplectic pairing `δp₁·δx₂ − δp₂·δx₁` at node `k`.
    pub fn wronskian(&self, a: &JacobiField, b: &JacobiField, k: usize) -> f64 {
        self.momentum(a, k).dot(&b.dx[k]) - self.momentum(b, k).dot(&a.dx[k])
    }
}

/// Boundary Hessian blocks together with the Green functions that invert
/// the mixed block. `g_if[(u, v)]` has an initial row index and a final
/// column index; `g_fi = g_ifᵀ`. `g_c` is the antisymmetric `2n × 2n`
/// bracket matrix in `[f, i]` order.
#[derive(Clone, Debug)]
pub struct BoundaryGreens {
    pub x_f: Vec<f64>,
    pub x_i: Vec<f64>,
    pub p_f: Vec<f64>,
    pub p_i: Vec<f64>,
    pub h_ff: DMatrix<f64>,
    pub h_fi: DMatrix<f64>,
    pub h_ii: DMatrix<f64>,
    pub g_if: DMatrix<f64>,
    pub g_fi: DMatrix<f64>,
    pub g_c: DMatrix<f64>,
}

impl BoundaryGreens {
    pub fn h_if(&self) -> DMatrix<f64> {
        self.h_fi.transpose()
    }
    pub fn dim(&self) -> usize {
        self.x_f.len()
    }
}

/// Green functions obtained by propagating unit momentum kicks, which is
/// independent of the Schur-complement Hessian.
pub fn boundary_greens(spec: &SystemSpec, sol: &ClassicalSolution) -> Result<BoundaryGreens> {
    let js = JacobiSolver::new(spec, sol)?;
    let n = spec.dim;
    let big_n = js.slices();
    let zero = DVector::zeros(n);
    let mut g_fi = DMatrix::zeros(n, n);
    let mut g_if = DMatrix::zeros(n, n);
    for b in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == b { 1.0 } else { 0.0 });
        let fwd = js.from_cauchy(0, &zero, &e)?;
        g_fi.set_column(b, &(-&fwd.dx[big_n]));
        let bwd = js.from_cauchy(big_n, &zero, &e)?;
        g_if.set_column(b, &bwd.dx[0]);
    }
    let mut g_c = DMatrix::zeros(2 * n, 2 * n);
    g_c.view_mut((0, n), (n, n)).copy_from(&(-&g_fi));
    g_c.view_mut((n, 0), (n, n)).copy_from(&g_if);
    Ok(BoundaryGreens {
        x_f: sol.x_f().to_vec(),
        x_i: sol.x_i().to_vec(),
        p_f: sol.p_f.clone(),
        p_i: sol.p_i.clone(),
        h_ff: sol.hessian.ff.clone(),
        h_fi: sol.hessian.fi.clone(),
        h_ii: sol.hessian.ii.clone(),
        g_if,
        g_fi,
        g_c,
    })
}
