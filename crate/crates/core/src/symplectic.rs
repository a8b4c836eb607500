//! Boundary phase space, its Poisson structure, and the bracket induced on
//! the space of classical solutions.
//!
//! Points of the boundary phase space carry positions `(x_f, x_i)` and the
//! boundary momentum `p_B = (−p_f, p_i)`. The bracket is
//! `{A, B} = ∂A/∂p_B · ∂B/∂x − ∂A/∂x · ∂B/∂p_B`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::classical::BoundaryGreens;
use crate::error::{Error, Result};
use crate::geometry::{fd_step, ConnectionField, ScalarField, VectorField};

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPhasePoint {
    pub x_f: Vec<f64>,
    pub x_i: Vec<f64>,
    pub p_f: Vec<f64>,
    pub p_i: Vec<f64>,
}

impl BoundaryPhasePoint {
    pub fn new(x_f: Vec<f64>, x_i: Vec<f64>, p_f: Vec<f64>, p_i: Vec<f64>) -> Result<Self> {
        let n = x_f.len();
        if x_i.len() != n || p_f.len() != n || p_i.len() != n {
            return Err(Error::DimensionMismatch("boundary phase point components".into()));
        }
        Ok(BoundaryPhasePoint { x_f, x_i, p_f, p_i })
    }

    /// The point determined by a classical solution.
    pub fn on_shell(g: &BoundaryGreens) -> Self {
        BoundaryPhasePoint { x_f: g.x_f.clone(), x_i: g.x_i.clone(), p_f: g.p_f.clone(), p_i: g.p_i.clone() }
    }

    pub fn dim(&self) -> usize {
        self.x_f.len()
    }

    /// Boundary value `x = (x_f, x_i)`.
    pub fn x(&self) -> Vec<f64> {
        [self.x_f.as_slice(), self.x_i.as_slice()].concat()
    }

    /// Boundary momentum `p_B = (−p_f, p_i)`.
    pub fn p_boundary(&self) -> Vec<f64> {
        self.p_f.iter().map(|p| -p).chain(self.p_i.iter().copied()).collect()
    }

    pub fn from_boundary(x: &[f64], pb: &[f64]) -> Result<Self> {
        if x.len() != pb.len() || x.len() % 2 != 0 {
            return Err(Error::DimensionMismatch("boundary coordinates".into()));
        }
        let n = x.len() / 2;
        Ok(BoundaryPhasePoint {
            x_f: x[..n].to_vec(),
            x_i: x[n..].to_vec(),
            p_f: pb[..n].iter().map(|p| -p).collect(),
            p_i: pb[n..].to_vec(),
        })
    }
}

/// Derivatives of an observable with respect to boundary coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDerivs {
    /// `∂A/∂x`, final block first.
    pub dx: Vec<f64>,
    /// `∂A/∂p_B`, final block first.
    pub dp: Vec<f64>,
}

impl PhaseDerivs {
    fn split(&self, n: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let xf = DVector::from_column_slice(&self.dx[..n]);
        let xi = DVector::from_column_slice(&self.dx[n..]);
        // ∂/∂p_f = −∂/∂p_Bf
        let pf = -DVector::from_column_slice(&self.dp[..n]);
        let pi = DVector::from_column_slice(&self.dp[n..]);
        (xf, xi, pf, pi)
    }
}

pub type PhaseFn = Arc<dyn Fn(&BoundaryPhasePoint) -> Result<f64> + Send + Sync>;

/// Observables on the boundary phase space.
#[derive(Clone)]
pub enum Observable {
    /// `F_f = f(x)` for a function on the boundary value space.
    F(Arc<dyn ScalarField>),
    /// `G_a = a(x) · p_B` for a vector field on the boundary value space.
    G(Arc<dyn VectorField>),
    /// A field on `(x, p_B)`, differentiated through its own gradient.
    Phase(Arc<dyn ScalarField>),
    /// Anything else; differentiated numerically.
    General(PhaseFn),
}

impl Observable {
    pub fn f(f: impl ScalarField + 'static) -> Self {
        Observable::F(Arc::new(f))
    }

    pub fn g(a: impl VectorField + 'static) -> Self {
        Observable::G(Arc::new(a))
    }

    pub fn phase(f: impl ScalarField + 'static) -> Self {
        Observable::Phase(Arc::new(f))
    }

    pub fn general(f: impl Fn(&BoundaryPhasePoint) -> Result<f64> + Send + Sync + 'static) -> Self {
        Observable::General(Arc::new(f))
    }

    pub fn value(&self, pt: &BoundaryPhasePoint) -> Result<f64> {
        match self {
            Observable::F(f) => f.value(&pt.x()),
            Observable::G(a) => {
                let av = a.value(&pt.x())?;
                Ok(av.iter().zip(pt.p_boundary()).map(|(a, p)| a * p).sum())
            }
            Observable::Phase(f) => f.value(&[pt.x(), pt.p_boundary()].concat()),
            Observable::General(f) => f(pt),
        }
    }

    pub fn derivs(&self, pt: &BoundaryPhasePoint) -> Result<PhaseDerivs> {
        let x = pt.x();
        let m = x.len();
        match self {
            Observable::F(f) => Ok(PhaseDerivs { dx: f.gradient(&x)?, dp: vec![0.0; m] }),
            Observable::G(a) => {
                let j = a.jacobian(&x)?;
                let pb = DVector::from_vec(pt.p_boundary());
                let dx = (j.transpose() * pb).as_slice().to_vec();
                Ok(PhaseDerivs { dx, dp: a.value(&x)? })
            }
            Observable::Phase(f) => {
                let mut g = f.gradient(&[x, pt.p_boundary()].concat())?;
                let dp = g.split_off(m);
                Ok(PhaseDerivs { dx: g, dp })
            }
            Observable::General(f) => {
                let pb = pt.p_boundary();
                let mut z: Vec<f64> = x.iter().chain(pb.iter()).copied().collect();
                let h = fd_step(&z);
                let mut grad = vec![0.0; 2 * m];
                for k in 0..2 * m {
                    let z0 = z[k];
                    z[k] = z0 + h;
                    let fp = f(&BoundaryPhasePoint::from_boundary(&z[..m], &z[m..])?)?;
                    z[k] = z0 - h;
                    let fm = f(&BoundaryPhasePoint::from_boundary(&z[..m], &z[m..])?)?;
                    z[k] = z0;
                    grad[k] = (fp - fm) / (2.0 * h);
                }
                Ok(PhaseDerivs { dx: grad[..m].to_vec(), dp: grad[m..].to_vec() })
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Bracket on the boundary phase space.
pub fn poisson_boundary(a: &Observable, b: &Observable, pt: &BoundaryPhasePoint) -> Result<f64> {
    let da = a.derivs(pt)?;
    let db = b.derivs(pt)?;
    Ok(dot(&da.dp, &db.dx) - dot(&da.dx, &db.dp))
}

/// Canonical bracket of the final-time phase space, `∂A/∂p_f ∂B/∂x_f − …`.
pub fn poisson_final(a: &Observable, b: &Observable, pt: &BoundaryPhasePoint) -> Result<f64> {
    let n = pt.dim();
    let (af, _, apf, _) = a.derivs(pt)?.split(n);
    let (bf, _, bpf, _) = b.derivs(pt)?.split(n);
    Ok(apf.dot(&bf) - af.dot(&bpf))
}

/// Canonical bracket of the initial-time phase space.
pub fn poisson_initial(a: &Observable, b: &Observable, pt: &BoundaryPhasePoint) -> Result<f64> {
    let n = pt.dim();
    let (_, ai, _, api) = a.derivs(pt)?.split(n);
    let (_, bi, _, bpi) = b.derivs(pt)?.split(n);
    Ok(api.dot(&bi) - ai.dot(&bpi))
}

/// Fails unless the point lies on the submanifold `p_B = −∇S̄` of the
/// solution encoded in `g`.
pub fn check_on_shell(pt: &BoundaryPhasePoint, g: &BoundaryGreens) -> Result<()> {
    if pt.dim() != g.dim() {
        return Err(Error::DimensionMismatch("phase point vs solution".into()));
    }
    let mut dev = 0.0f64;
    let mut scale = 1.0f64;
    for k in 0..pt.dim() {
        dev = dev.max((pt.x_f[k] - g.x_f[k]).abs()).max((pt.x_i[k] - g.x_i[k]).abs());
        dev = dev.max((pt.p_f[k] - g.p_f[k]).abs()).max((pt.p_i[k] - g.p_i[k]).abs());
        scale = scale.max(g.p_f[k].abs()).max(g.p_i[k].abs()).max(g.x_f[k].abs()).max(g.x_i[k].abs());
    }
    let tol = 1e-6 * scale;
    if dev > tol {
        return Err(Error::OffShell { deviation: dev, tolerance: tol });
    }
    Ok(())
}

/// Bracket on the space of solutions for observables depending on boundary
/// data only, expressed through boundary Hessians and Green functions.
pub fn poisson_covariant(a: &Observable, b: &Observable, pt: &BoundaryPhasePoint, g: &BoundaryGreens) -> Result<f64> {
    check_on_shell(pt, g)?;
    let n = pt.dim();
    let (af, ai, apf, api) = a.derivs(pt)?.split(n);
    let (bf, bi, bpf, bpi) = b.derivs(pt)?.split(n);
    let (hff, hfi, hii) = (&g.h_ff, &g.h_fi, &g.h_ii);
    let hif = g.h_if();
    let (gif, gfi) = (&g.g_if, &g.g_fi);

    let t1 = apf.dot(&bf) - af.dot(&bpf);
    let t2 = api.dot(&bi) - ai.dot(&bpi);
    let t3 = ai.dot(&(gif * &bf)) - af.dot(&(gfi * &bi));
    let m_fi = hff * gfi * hii - hfi;
    let m_if = hii * gif * hff - &hif;
    let t4 = apf.dot(&(&m_fi * &bpi)) - api.dot(&(&m_if * &bpf));
    let t5 = ai.dot(&(gif * hff * &bpf)) - apf.dot(&(hff * gfi * &bi));
    let t6 = af.dot(&(gfi * hii * &bpi)) - api.dot(&(hii * gif * &bf));
    Ok(t1 + t2 + t3 + t4 + t5 + t6)
}

/// `X_H = ∇H · W` with `W` the inverse of the symplectic matrix, fixed by
/// `W ω = −1`. In canonical coordinates `(x, p)` this gives
/// `X_H = (∂H/∂p, −∂H/∂x)`.
pub fn canonical_vector_field(h: &dyn ScalarField, omega: &DMatrix<f64>, pt: &[f64]) -> Result<Vec<f64>> {
    let m = pt.len();
    if omega.nrows() != m || omega.ncols() != m || m % 2 != 0 {
        return Err(Error::DimensionMismatch("symplectic matrix vs point".into()));
    }
    let scale = omega.amax();
    let det = omega.determinant();
    if scale == 0.0 || det.abs() <= 1e-14 * scale.powi(m as i32) {
        return Err(Error::Degenerate("symplectic form is singular".into()));
    }
    let w = -omega.clone().try_inverse().ok_or_else(|| Error::Degenerate("symplectic form".into()))?;
    let grad = DVector::from_vec(h.gradient(pt)?);
    Ok((w.transpose() * grad).as_slice().to_vec())
}

/// The canonical symplectic matrix of `dp ∧ dx` in `(x, p)` order.
pub fn canonical_form(n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w[(k, n + k)] = -1.0;
        w[(n + k, k)] = 1.0;
    }
    w
}

/// Bracket on a cotangent bundle `(x, p)` computed with covariant position
/// derivatives `∂A/∂x^a + p_c Γ^c_{ab} ∂A/∂p_b`.
pub fn bracket_with_connection(
    a: &dyn ScalarField,
    b: &dyn ScalarField,
    pt: &[f64],
    conn: &dyn ConnectionField,
) -> Result<f64> {
    let n = conn.dim();
    if pt.len() != 2 * n || a.dim() != 2 * n || b.dim() != 2 * n {
        return Err(Error::DimensionMismatch("cotangent point vs connection".into()));
    }
    let gam = conn.christoffel(&pt[..n])?;
    let p = &pt[n..];
    let cov = |g: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = g[i];
                for c in 0..n {
                    for k in 0..n {
                        s += p[c] * gam.get(c, i, k) * g[n + k];
                    }
                }
                s
            })
            .collect()
    };
    let ga = a.gradient(pt)?;
    let gb = b.gradient(pt)?;
    let (ca, cb) = (cov(&ga), cov(&gb));
    Ok((0..n).map(|k| ga[n + k] * cb[k] - ca[k] * gb[n + k]).sum())
}

/// Difference of the brackets computed with two torsion-free connections;
/// vanishes identically.
pub fn connection_invariance_check(
    a: &dyn ScalarField,
    b: &dyn ScalarField,
    pt: &[f64],
    c1: &dyn ConnectionField,
    c2: &dyn ConnectionField,
) -> Result<f64> {
    Ok((bracket_with_connection(a, b, pt, c1)? - bracket_with_connection(a, b, pt, c2)?).abs())
}

/// Lie bracket `[a1, a2]^j = a1^k ∂_k a2^j − a2^k ∂_k a1^j`.
pub fn lie_bracket(a1: &dyn VectorField, a2: &dyn VectorField, x: &[f64]) -> Result<Vec<f64>> {
    let v1 = DVector::from_vec(a1.value(x)?);
    let v2 = DVector::from_vec(a2.value(x)?);
    let r = a2.jacobian(x)? * v1 - a1.jacobian(x)? * v2;
    Ok(r.as_slice().to_vec())
}
