use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric-structure block tridiagonal matrix; `upper[k]` couples block
/// `k` to `k + 1` and `lower[k]` couples `k + 1` to `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTri {
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    pub lower: Vec<DMatrix<f64>>,
}

pub(crate) struct Factored {
    upper: Vec<DMatrix<f64>>,
    inv: Vec<DMatrix<f64>>,
    w: Vec<DMatrix<f64>>,
}

fn checked_inverse(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    let u = lu.u();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let pivot = u.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if !pivot.is_finite() || pivot <= 1e-13 * scale {
        return Err(Error::SingularHessian(format!("pivot block {k} is singular (pivot {pivot:e})")));
    }
    lu.try_inverse().ok_or_else(|| Error::SingularHessian(format!("pivot block {k} not invertible")))
}

impl BlockTri {
    /// Dense form, for checks on small systems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag[0].nrows();
        let m = self.diag.len();
        let mut out = DMatrix::zeros(n * m, n * m);
        for k in 0..m {
            out.view_mut((k * n, k * n), (n, n)).copy_from(&self.diag[k]);
            if k + 1 < m {
                out.view_mut((k * n, (k + 1) * n), (n, n)).copy_from(&self.upper[k]);
                out.view_mut(((k + 1) * n, k * n), (n, n)).copy_from(&self.lower[k]);
            }
        }
        out
    }

    pub(crate) fn factor(self) -> Result<Factored> {
        let m = self.diag.len();
        let mut inv = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m.saturating_sub(1));
        let mut d = self.diag[0].clone();
        inv.push(checked_inverse(&d, 0)?);
        for k in 1..m {
            let wk = &self.lower[k - 1] * &inv[k - 1];
            d = &self.diag[k] - &wk * &self.upper[k - 1];
            inv.push(checked_inverse(&d, k)?);
            w.push(wk);
        }
        Ok(Factored { upper: self.upper, inv, w })
    }
}

impl Factored {
    /// Solves for a block right-hand side with any number of columns.
    pub fn solve(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let m = self.inv.len();
        let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        y.push(rhs[0].clone());
        for k in 1..m {
            let v = &rhs[k] - &self.w[k - 1] * &y[k - 1];
            y.push(v);
        }
        let mut x = vec![DMatrix::zeros(0, 0); m];
        x[m - 1] = &self.inv[m - 1] * &y[m - 1];
        for k in (0..m - 1).rev() {
            x[k] = &self.inv[k] * (&y[k] - &self.upper[k] * &x[k + 1]);
        }
        x
    }
}
