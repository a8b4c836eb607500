//! Small numerical helpers shared by the quantum modules and the tests.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Complex matrix product assembled from four real products, which go
/// through the blocked f64 kernel. Deterministic for any thread count.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions");
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// Half bandwidth: largest `|i − j|` with a nonzero entry.
pub fn bandwidth(a: &CMatrix) -> usize {
    let mut bw = 0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != Complex64::new(0.0, 0.0) {
                bw = bw.max(i.abs_diff(j));
            }
        }
    }
    bw
}

/// Solves `a x = b` for a banded `a` by elimination without pivoting.
/// Safe when the hermitian part of `a` is definite. Returns `None` on a
/// vanishing pivot.
pub fn banded_solve(a: &CMatrix, bw: usize, b: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    let w = 2 * bw + 1;
    // band[i][bw + j − i] = a[i][j]
    let mut band = vec![Complex64::new(0.0, 0.0); n * w];
    for i in 0..n {
        for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
            band[i * w + bw + j - i] = a[(i, j)];
        }
    }
    let mut lower = vec![Complex64::new(0.0, 0.0); n * (bw + 1)];
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    for k in 0..n {
        let piv = band[k * w + bw];
        if piv.norm() <= 1e-14 * scale {
            return None;
        }
        for i in k + 1..(k + bw + 1).min(n) {
            let l = band[i * w + bw + k - i] / piv;
            lower[i * (bw + 1) + i - k] = l;
            for j in k..(k + bw + 1).min(n) {
                let v = band[k * w + bw + j - k];
                band[i * w + bw + j - i] -= l * v;
            }
        }
    }
    let mut x = b.clone();
    for mut col in x.column_iter_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in i.saturating_sub(bw)..i {
                s -= lower[i * (bw + 1) + i - k] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for j in i + 1..(i + bw + 1).min(n) {
                s -= band[i * w + bw + j - i] * col[j];
            }
            col[i] = s / band[i * w + bw];
        }
    }
    Some(x)
}

/// `u^n` by repeated squaring.
pub fn matrix_power(u: &CMatrix, mut n: usize) -> CMatrix {
    let d = u.nrows();
    let mut result: Option<CMatrix> = None;
    let mut base = u.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => matmul(&r, &base),
            });
        }
        n >>= 1;
        if n > 0 {
            base = matmul(&base, &base);
        }
    }
    result.unwrap_or_else(|| CMatrix::identity(d, d))
}

/// Least-squares slope of `log err` against `log h`.
pub fn fit_order(h: &[f64], err: &[f64]) -> f64 {
    assert_eq!(h.len(), err.len());
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}
