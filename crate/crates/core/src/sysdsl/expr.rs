use std::collections::BTreeMap;
use std::fmt;

use super::jet::Jet;
use crate::error::{Error, Result};

/// A coordinate-like variable. Indices are zero-based internally and
/// printed one-based (`x1` is `Var::X(0)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    V(usize),
    P(usize),
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::V(i) => write!(f, "v{}", i + 1),
            Var::P(i) => write!(f, "p{}", i + 1),
            Var::T => write!(f, "t"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Named constant such as `pi`.
    Const(&'static str, f64),
    Param(String),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }
    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.prec(),
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 0,
            _ => 5,
        }
    }

    /// Whether any node refers to the given variable.
    pub fn mentions(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Expr::Var(v) => pred(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.mentions(pred),
            Expr::Bin(_, a, b) => a.mentions(pred) || b.mentions(pred),
            _ => false,
        }
    }

    /// Collects the variables used, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        fn walk(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Var(v) => out.push(*v),
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            _ => 1,
        }
    }

    /// Evaluates with any scalar type supporting the required operations.
    pub fn eval<S: Scalar>(&self, env: &Env<'_, S>) -> Result<S> {
        let r = match self {
            Expr::Num(v) => S::constant(*v, env.nvars),
            Expr::Const(_, v) => S::constant(*v, env.nvars),
            Expr::Param(name) => match env.params.and_then(|p| p.get(name)) {
                Some(v) => S::constant(*v, env.nvars),
                None => return Err(Error::Unbound(name.clone())),
            },
            Expr::Var(v) => env.lookup(*v)?,
            Expr::Neg(a) => a.eval(env)?.neg(),
            Expr::Call(f, a) => a.eval(env)?.call(*f)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b)?,
                    BinOp::Pow => a.pow(&b)?,
                }
            }
        };
        if !r.is_finite() {
            return Err(Error::Domain(format!("non-finite value in '{self}'")));
        }
        Ok(r)
    }

    /// Plain f64 evaluation.
    pub fn value(&self, env: &Env<'_, f64>) -> Result<f64> {
        self.eval(env)
    }
}

/// Variable bindings for evaluation. Unset slices make the corresponding
/// variables unbound.
#[derive(Clone, Copy)]
pub struct Env<'a, S> {
    pub x: &'a [S],
    pub v: &'a [S],
    pub p: &'a [S],
    pub t: Option<&'a S>,
    pub params: Option<&'a BTreeMap<String, f64>>,
    /// Number of jet variables (ignored for f64).
    pub nvars: usize,
}

impl<'a, S: Scalar> Env<'a, S> {
    pub fn new(nvars: usize) -> Self {
        Env { x: &[], v: &[], p: &[], t: None, params: None, nvars }
    }
    pub fn x(mut self, x: &'a [S]) -> Self {
        self.x = x;
        self
    }
    pub fn v(mut self, v: &'a [S]) -> Self {
        self.v = v;
        self
    }
    pub fn p(mut self, p: &'a [S]) -> Self {
        self.p = p;
        self
    }
    pub fn t(mut self, t: &'a S) -> Self {
        self.t = Some(t);
        self
    }
    pub fn params(mut self, params: &'a BTreeMap<String, f64>) -> Self {
        self.params = Some(params);
        self
    }

    fn lookup(&self, var: Var) -> Result<S> {
        let got = match var {
            Var::X(i) => self.x.get(i),
            Var::V(i) => self.v.get(i),
            Var::P(i) => self.p.get(i),
            Var::T => self.t,
        };
        got.cloned().ok_or_else(|| Error::Unbound(var.to_string()))
    }
}

/// Operations needed by the expression evaluator.
pub trait Scalar: Clone + Sized {
    fn constant(v: f64, nvars: usize) -> Self;
    fn val(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn is_const(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Applies `f` given value, first and second derivative of the outer function.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self;

    fn div(&self, o: &Self) -> Result<Self> {
        let d = o.val();
        if d == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(self.mul(&o.chain(1.0 / d, -1.0 / (d * d), 2.0 / (d * d * d))))
    }

    fn pow(&self, o: &Self) -> Result<Self> {
        let b = self.val();
        let e = o.val();
        if o.is_const() {
            if b < 0.0 && e.fract() != 0.0 {
                return Err(Error::Domain(format!("negative base {b} with non-integer exponent {e}")));
            }
            if b == 0.0 && e < 0.0 {
                return Err(Error::Domain("zero raised to a negative power".into()));
            }
            let f0 = b.powf(e);
            let f1 = if e == 0.0 { 0.0 } else { e * b.powf(e - 1.0) };
            let f2 = if e == 0.0 || e == 1.0 { 0.0 } else { e * (e - 1.0) * b.powf(e - 2.0) };
            return Ok(self.chain(f0, f1, f2));
        }
        if b <= 0.0 {
            return Err(Error::Domain(format!("non-positive base {b} with variable exponent")));
        }
        let lnb = self.call(Func::Log)?;
        Ok(lnb.mul(o).call(Func::Exp)?)
    }

    fn call(&self, f: Func) -> Result<Self> {
        let u = self.val();
        let (f0, f1, f2) = match f {
            Func::Sin => (u.sin(), u.cos(), -u.sin()),
            Func::Cos => (u.cos(), -u.sin(), -u.cos()),
            Func::Exp => (u.exp(), u.exp(), u.exp()),
            Func::Log => {
                if u <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {u}")));
                }
                (u.ln(), 1.0 / u, -1.0 / (u * u))
            }
            Func::Sqrt => {
                if u < 0.0 {
                    return Err(Error::Domain(format!("sqrt of negative value {u}")));
                }
                let s = u.sqrt();
                if self.is_const() {
                    (s, 0.0, 0.0)
                } else {
                    (s, 0.5 / s, -0.25 / (s * u))
                }
            }
            Func::Abs => (u.abs(), if u < 0.0 { -1.0 } else { 1.0 }, 0.0),
        };
        Ok(self.chain(f0, f1, f2))
    }
}

impl Scalar for f64 {
    fn constant(v: f64, _: usize) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn is_const(&self) -> bool {
        true
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn chain(&self, f0: f64, _: f64, _: f64) -> Self {
        f0
    }
    fn div(&self, o: &Self) -> Result<Self> {
        if *o == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(self / o)
    }
}

impl Scalar for Jet {
    fn constant(v: f64, nvars: usize) -> Self {
        Jet::constant(v, nvars)
    }
    fn val(&self) -> f64 {
        self.value
    }
    fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }
    fn is_const(&self) -> bool {
        self.grad.iter().all(|g| *g == 0.0) && self.hess.iter().all(|h| *h == 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        Jet::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Jet::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Jet::mul(self, o)
    }
    fn neg(&self) -> Self {
        Jet::neg(self)
    }
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        Jet::chain(self, f0, f1, f2)
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "({v:?})")
    } else {
        // `{:?}` gives the shortest representation that round-trips.
        let s = format!("{v:?}");
        let s = s.strip_suffix(".0").unwrap_or(&s);
        f.write_str(s)
    }
}

fn fmt_child(e: &Expr, paren: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => fmt_num(*v, f),
            Expr::Const(name, _) => f.write_str(name),
            Expr::Param(p) => f.write_str(p),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                fmt_child(a, a.prec() < 3, f)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let p = op.prec();
                if *op == BinOp::Pow {
                    fmt_child(a, a.prec() <= p, f)?;
                    f.write_str("^")?;
                    fmt_child(b, b.prec() < 3, f)
                } else {
                    fmt_child(a, a.prec() < p, f)?;
                    write!(f, "{}", op.symbol())?;
                    fmt_child(b, b.prec() <= p, f)
                }
            }
        }
    }
}
