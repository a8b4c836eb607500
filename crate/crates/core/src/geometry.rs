//! Charts, metrics, connections, curvature and density bookkeeping.

use std::collections::BTreeMap;
use std::ops::Mul;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sysdsl::{Env, Expr, Jet};

/// Central-difference step used for derivatives of black-box fields.
pub fn fd_step(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e-7 * scale).max(1e-5)
}

/// Step for second differences; larger to keep round-off at bay.
fn fd_step2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    1e-4 * scale
}

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = fd_step(x);
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                y[k] = x[k] + h;
                let fp = self.value(&y)?;
                y[k] = x[k] - h;
                let fm = self.value(&y)?;
                y[k] = x[k];
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    }
}

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `J[(i, k)] = ∂_k a^i`.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let h = fd_step(x);
        let mut j = DMatrix::zeros(n, n);
        let mut y = x.to_vec();
        for k in 0..n {
            y[k] = x[k] + h;
            let ap = self.value(&y)?;
            y[k] = x[k] - h;
            let am = self.value(&y)?;
            y[k] = x[k];
            for i in 0..n {
                j[(i, k)] = (ap[i] - am[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    fn divergence(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jacobian(x)?.trace())
    }
}

/// Closure-backed scalar field with finite-difference derivatives.
#[derive(Clone)]
pub struct FnScalar {
    dim: usize,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FnScalar {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnScalar { dim, f: Arc::new(f) }
    }
}

impl ScalarField for FnScalar {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

#[derive(Clone)]
pub struct FnVector {
    dim: usize,
    f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl FnVector {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        FnVector { dim, f: Arc::new(f) }
    }
}

impl VectorField for FnVector {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
}

/// Scalar field given by an expression in `x1..xn` (and `p1..pm` if the
/// field lives on phase space, see [`ExprScalar::phase`]).
#[derive(Clone, Debug)]
pub struct ExprScalar {
    expr: Expr,
    nx: usize,
    np: usize,
    params: BTreeMap<String, f64>,
}

impl ExprScalar {
    pub fn new(expr: Expr, dim: usize) -> Self {
        ExprScalar { expr, nx: dim, np: 0, params: BTreeMap::new() }
    }

    /// Field on `(x1..xn, p1..pn)`, flattened in that order.
    pub fn phase(expr: Expr, n: usize) -> Self {
        ExprScalar { expr, nx: n, np: n, params: BTreeMap::new() }
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.check(x)?;
        let seeds = Jet::seed(x);
        let env = Env::new(x.len()).x(&seeds[..self.nx]).p(&seeds[self.nx..]).params(&self.params);
        self.expr.eval(&env)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.nx + self.np {
            return Err(Error::DimensionMismatch(format!(
                "field expects {} coordinates, got {}",
                self.nx + self.np,
                x.len()
            )));
        }
        Ok(())
    }
}

impl ScalarField for ExprScalar {
    fn dim(&self) -> usize {
        self.nx + self.np
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let env = Env::new(0).x(&x[..self.nx]).p(&x[self.nx..]).params(&self.params);
        self.expr.eval(&env)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x)?.grad)
    }
}

/// Vector field with expression components in `x1..xn`.
#[derive(Clone, Debug)]
pub struct ExprVector {
    comps: Vec<Expr>,
    params: BTreeMap<String, f64>,
}

impl ExprVector {
    pub fn new(comps: Vec<Expr>) -> Self {
        ExprVector { comps, params: BTreeMap::new() }
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }
}

impl VectorField for ExprVector {
    fn dim(&self) -> usize {
        self.comps.len()
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.comps.len() {
            return Err(Error::DimensionMismatch("vector field dimension".into()));
        }
        let env = Env::new(0).x(x).params(&self.params);
        self.comps.iter().map(|c| c.eval(&env)).collect()
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        if n != self.comps.len() {
            return Err(Error::DimensionMismatch("vector field dimension".into()));
        }
        let seeds = Jet::seed(x);
        let env = Env::new(n).x(&seeds).params(&self.params);
        let mut j = DMatrix::zeros(n, n);
        for (i, c) in self.comps.iter().enumerate() {
            let jet = c.eval(&env)?;
            for k in 0..n {
                j[(i, k)] = jet.grad[k];
            }
        }
        Ok(j)
    }
}

/// First and second partial derivatives of the metric components.
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `d1[c][(a, b)] = ∂_c g_ab`
    pub d1: Vec<DMatrix<f64>>,
    /// `d2[c][e][(a, b)] = ∂_c ∂_e g_ab`
    pub d2: Vec<Vec<DMatrix<f64>>>,
}

pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    fn jet(&self, x: &[f64]) -> Result<MetricJet> {
        let n = self.dim();
        let g = self.metric(x)?;
        let h = fd_step2(x);
        let mut y = x.to_vec();
        let at = |y: &[f64]| self.metric(y);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = vec![vec![DMatrix::zeros(n, n); n]; n];
        for c in 0..n {
            y[c] = x[c] + h;
            let gp = at(&y)?;
            y[c] = x[c] - h;
            let gm = at(&y)?;
            y[c] = x[c];
            d1.push((&gp - &gm) / (2.0 * h));
            d2[c][c] = (&gp - &g * 2.0 + &gm) / (h * h);
        }
        for c in 0..n {
            for e in (c + 1)..n {
                let mut s = DMatrix::zeros(n, n);
                for (sc, se, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    y[c] = x[c] + sc * h;
                    y[e] = x[e] + se * h;
                    s += at(&y)? * w;
                }
                y[c] = x[c];
                y[e] = x[e];
                let s = s / (4.0 * h * h);
                d2[c][e] = s.clone();
                d2[e][c] = s;
            }
        }
        Ok(MetricJet { g, d1, d2 })
    }
}

#[derive(Clone)]
pub struct FnMetric {
    dim: usize,
    f: Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>,
}

impl FnMetric {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        FnMetric { dim, f: Arc::new(f) }
    }

    pub fn constant(g: DMatrix<f64>) -> Self {
        let n = g.nrows();
        FnMetric::new(n, move |_| Ok(g.clone()))
    }
}

impl MetricField for FnMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        (self.f)(x)
    }
}

/// Metric with expression components; derivatives are exact.
#[derive(Clone, Debug)]
pub struct ExprMetric {
    comps: Vec<Vec<Expr>>,
    params: BTreeMap<String, f64>,
}

impl ExprMetric {
    pub fn new(comps: Vec<Vec<Expr>>, params: BTreeMap<String, f64>) -> Self {
        ExprMetric { comps, params }
    }
}

impl MetricField for ExprMetric {
    fn dim(&self) -> usize {
        self.comps.len()
    }
    fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let t = 0.0;
        let env = Env::new(0).x(x).t(&t).params(&self.params);
        let mut g = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                g[(a, b)] = self.comps[a][b].eval(&env)?;
            }
        }
        Ok(g)
    }
    fn jet(&self, x: &[f64]) -> Result<MetricJet> {
        let n = self.dim();
        let seeds = Jet::seed(x);
        let t = Jet::constant(0.0, n);
        let env = Env::new(n).x(&seeds).t(&t).params(&self.params);
        let mut g = DMatrix::zeros(n, n);
        let mut d1 = vec![DMatrix::zeros(n, n); n];
        let mut d2 = vec![vec![DMatrix::zeros(n, n); n]; n];
        for a in 0..n {
            for b in 0..n {
                let j = self.comps[a][b].eval(&env)?;
                g[(a, b)] = j.value;
                for c in 0..n {
                    d1[c][(a, b)] = j.grad[c];
                    for e in 0..n {
                        d2[c][e][(a, b)] = j.h(c, e);
                    }
                }
            }
        }
        Ok(MetricJet { g, d1, d2 })
    }
}

/// Connection coefficients `Γ^a_{bc}` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel { n, data: vec![0.0; n * n * n] }
    }
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }
    pub fn max_abs_diff(&self, o: &Christoffel) -> f64 {
        self.data.iter().zip(&o.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub struct Curvature {
    pub christoffel: Christoffel,
    /// `R^a_{bcd}` flattened as `((a n + b) n + c) n + d`.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

fn inverse_metric(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let det = g.determinant();
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(g.nrows() as i32) {
        return Err(Error::SingularMetric(x.to_vec()));
    }
    g.clone().try_inverse().ok_or_else(|| Error::SingularMetric(x.to_vec()))
}

/// Levi-Civita connection and its curvature. Sign conventions:
/// `R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} − Γ^a_{de} Γ^e_{cb}`,
/// `R_{bd} = R^a_{bad}`; the round sphere has positive scalar curvature.
pub fn christoffel_curvature(g: &dyn MetricField, x: &[f64]) -> Result<Curvature> {
    let n = g.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch("point vs metric dimension".into()));
    }
    let MetricJet { g: gm, d1, d2 } = g.jet(x)?;
    let gi = inverse_metric(&gm, x)?;
    // ∂_e g^{ad} = −g^{am} ∂_e g_{mn} g^{nd}
    let dgi: Vec<DMatrix<f64>> = d1.iter().map(|d| -(&gi * d * &gi)).collect();

    let lower = |b: usize, c: usize, d: usize| d1[b][(d, c)] + d1[c][(d, b)] - d1[d][(b, c)];
    let mut gam = Christoffel::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let s: f64 = (0..n).map(|d| gi[(a, d)] * lower(b, c, d)).sum();
                gam.set(a, b, c, 0.5 * s);
            }
        }
    }
    // dgam[e][a][b][c] = ∂_e Γ^a_{bc}
    let idx = |e: usize, a: usize, b: usize, c: usize| ((e * n + a) * n + b) * n + c;
    let mut dgam = vec![0.0; n * n * n * n];
    for e in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for d in 0..n {
                        let dl = d2[e][b][(d, c)] + d2[e][c][(d, b)] - d2[e][d][(b, c)];
                        s += dgi[e][(a, d)] * lower(b, c, d) + gi[(a, d)] * dl;
                    }
                    dgam[idx(e, a, b, c)] = 0.5 * s;
                }
            }
        }
    }
    let mut riemann = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r = dgam[idx(c, a, d, b)] - dgam[idx(d, a, c, b)];
                    for e in 0..n {
                        r += gam.get(a, c, e) * gam.get(e, d, b) - gam.get(a, d, e) * gam.get(e, c, b);
                    }
                    riemann[idx(a, b, c, d)] = r;
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(n, n, |b, d| (0..n).map(|a| riemann[idx(a, b, a, d)]).sum());
    let scalar = (0..n).flat_map(|b| (0..n).map(move |d| (b, d))).map(|(b, d)| gi[(b, d)] * ricci[(b, d)]).sum();
    Ok(Curvature { christoffel: gam, riemann, ricci, scalar })
}

/// A torsion-free or general affine connection in a chart.
pub trait ConnectionField: Send + Sync {
    fn dim(&self) -> usize;
    fn christoffel(&self, x: &[f64]) -> Result<Christoffel>;
}

/// The coordinate connection, `Γ = 0`.
pub struct FlatConnection(pub usize);

impl ConnectionField for FlatConnection {
    fn dim(&self) -> usize {
        self.0
    }
    fn christoffel(&self, _: &[f64]) -> Result<Christoffel> {
        Ok(Christoffel::zeros(self.0))
    }
}

pub struct LeviCivita<'a>(pub &'a dyn MetricField);

impl ConnectionField for LeviCivita<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        Ok(christoffel_curvature(self.0, x)?.christoffel)
    }
}

/// Pointwise sample of a density: value and chart gradient.
#[derive(Clone, Debug)]
pub struct DensitySample {
    pub value: Complex64,
    pub grad: Vec<Complex64>,
}

/// Lie derivative of a weight-`alpha` density along `a` at `x`:
/// `a^k ∂_k ψ + alpha (∂_k a^k) ψ`.
pub fn lie_derivative_density(
    a: &dyn VectorField,
    psi: &DensitySample,
    alpha: Complex64,
    x: &[f64],
) -> Result<Complex64> {
    if psi.grad.len() != x.len() || a.dim() != x.len() {
        return Err(Error::DimensionMismatch("density gradient vs chart".into()));
    }
    let av = a.value(x)?;
    let div = a.divergence(x)?;
    let transport: Complex64 = av.iter().zip(&psi.grad).map(|(ak, gk)| gk * *ak).sum();
    Ok(transport + alpha * div * psi.value)
}

/// A density value in a given chart, tagged by its weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityValue {
    pub value: Complex64,
    pub weight: Complex64,
}

impl DensityValue {
    pub fn new(value: Complex64, weight: Complex64) -> Self {
        DensityValue { value, weight }
    }

    pub fn conj(self) -> Self {
        DensityValue { value: self.value.conj(), weight: self.weight.conj() }
    }

    /// Power of a positive density; the weight scales by `beta`.
    pub fn powc(self, beta: Complex64) -> Result<Self> {
        if self.value.im != 0.0 || self.value.re <= 0.0 {
            return Err(Error::Domain("complex powers need a positive density".into()));
        }
        let value = (beta * self.value.re.ln()).exp();
        Ok(DensityValue { value, weight: self.weight * beta })
    }

    /// Value in a new chart whose Jacobian `∂x/∂x'` has determinant `jac_det`.
    pub fn transform(self, jac_det: f64) -> Result<Self> {
        if jac_det == 0.0 || !jac_det.is_finite() {
            return Err(Error::Degenerate("chart Jacobian".into()));
        }
        let factor = (self.weight * jac_det.abs().ln()).exp();
        Ok(DensityValue { value: self.value * factor, weight: self.weight })
    }
}

impl Mul for DensityValue {
    type Output = DensityValue;
    fn mul(self, o: DensityValue) -> DensityValue {
        DensityValue { value: self.value * o.value, weight: self.weight + o.weight }
    }
}

/// Riemannian volume element `|det g|^{1/2}`.
pub fn metric_volume(g: &DMatrix<f64>) -> Result<f64> {
    if !g.is_square() || g.nrows() == 0 {
        return Err(Error::DimensionMismatch("metric must be square".into()));
    }
    let d = g.determinant();
    let scale = g.amax().powi(g.nrows() as i32);
    if !d.is_finite() || d.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::Degenerate(format!("metric determinant {d:e}")));
    }
    Ok(d.abs().sqrt())
}

/// Liouville volume element `(Det(ω / 2π))^{1/2}` of a symplectic matrix.
pub fn symplectic_volume(omega: &DMatrix<f64>) -> Result<f64> {
    let m = omega.nrows();
    if !omega.is_square() || m == 0 || m % 2 != 0 {
        return Err(Error::DimensionMismatch("symplectic form needs even dimension".into()));
    }
    let scale = omega.amax();
    if (omega + omega.transpose()).amax() > 1e-12 * scale.max(1.0) {
        return Err(Error::Degenerate("form is not antisymmetric".into()));
    }
    let d = (omega / (2.0 * std::f64::consts::PI)).determinant();
    let tol = 1e-14 * (scale / (2.0 * std::f64::consts::PI)).powi(m as i32);
    if !d.is_finite() || d <= tol {
        return Err(Error::Degenerate(format!("determinant {d:e}")));
    }
    Ok(d.sqrt())
}
