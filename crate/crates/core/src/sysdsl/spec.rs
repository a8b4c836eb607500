use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::expr::{Env, Expr, Var};
use super::jet::Jet;
use super::parser::{parse_expr, variable_name, Context, ParseError, ParseErrorKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainAxis {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    dim: usize,
    lagrangian: String,
    #[serde(default)]
    metric: Option<Vec<Vec<String>>>,
    #[serde(default)]
    potential: Option<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    domain: Vec<DomainAxis>,
}

#[derive(Serialize)]
struct RawOut<'a> {
    name: &'a str,
    dim: usize,
    lagrangian: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<String>,
    parameters: &'a BTreeMap<String, f64>,
    domain: &'a [DomainAxis],
}

/// A mechanical system: configuration dimension, Lagrangian and chart domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub lagrangian: Expr,
    pub metric: Option<Vec<Vec<Expr>>>,
    pub potential: Option<Expr>,
    pub parameters: BTreeMap<String, f64>,
    pub domain: Vec<DomainAxis>,
}

fn invalid(field: &str, msg: impl Into<String>) -> ParseError {
    ParseError::new(field, 1, 1, ParseErrorKind::Invalid(msg.into()))
}

impl SystemSpec {
    /// Parses and validates a JSON system description.
    pub fn from_json(text: &str) -> std::result::Result<SystemSpec, ParseError> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| {
            let kind = match e.classify() {
                serde_json::error::Category::Data => ParseErrorKind::Schema(strip_position(&e)),
                _ => ParseErrorKind::Json(strip_position(&e)),
            };
            ParseError::new("<document>", e.line().max(1), e.column().max(1), kind)
        })?;
        Self::from_raw(raw)
    }

    /// Same as [`from_json`](Self::from_json) for raw bytes.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<SystemSpec, ParseError> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            ParseError::new("<document>", 1, 1, ParseErrorKind::Json(format!("invalid UTF-8: {e}")))
        })?;
        Self::from_json(text)
    }

    fn from_raw(raw: RawSpec) -> std::result::Result<SystemSpec, ParseError> {
        let n = raw.dim;
        if n == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if raw.domain.len() != n {
            return Err(ParseError::new(
                "domain",
                1,
                1,
                ParseErrorKind::DimensionMismatch { name: format!("{} axes", raw.domain.len()), dim: n },
            ));
        }
        for (k, ax) in raw.domain.iter().enumerate() {
            if !(ax.min.is_finite() && ax.max.is_finite() && ax.min < ax.max) {
                return Err(invalid(&format!("domain[{k}]"), "need finite min < max"));
            }
        }
        for (name, v) in &raw.parameters {
            if variable_name(name).is_some() || super::expr::Func::from_name(name).is_some() {
                return Err(invalid(&format!("parameters.{name}"), "name collides with a builtin"));
            }
            let ok_ident = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok_ident {
                return Err(invalid(&format!("parameters.{name}"), "not an identifier"));
            }
            if !v.is_finite() {
                return Err(invalid(&format!("parameters.{name}"), "value must be finite"));
            }
        }
        let keys = raw.parameters.keys().cloned();
        let lctx = Context::lagrangian("lagrangian", n).with_params(keys.clone());
        let lagrangian = parse_expr(&raw.lagrangian, &lctx)?;
        let metric = match raw.metric {
            None => None,
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(ParseError::new(
                        "metric",
                        1,
                        1,
                        ParseErrorKind::DimensionMismatch { name: "metric rows".into(), dim: n },
                    ));
                }
                let mut m = Vec::with_capacity(n);
                for (a, row) in rows.iter().enumerate() {
                    let mut r = Vec::with_capacity(n);
                    for (b, s) in row.iter().enumerate() {
                        let ctx = Context::positions(&format!("metric[{a}][{b}]"), n)
                            .with_time()
                            .with_params(keys.clone());
                        r.push(parse_expr(s, &ctx)?);
                    }
                    m.push(r);
                }
                for a in 0..n {
                    for b in 0..a {
                        if m[a][b] != m[b][a] {
                            return Err(invalid(&format!("metric[{a}][{b}]"), "metric must be symmetric"));
                        }
                    }
                }
                Some(m)
            }
        };
        let potential = match raw.potential {
            None => None,
            Some(s) => {
                let ctx = Context::positions("potential", n).with_time().with_params(keys.clone());
                Some(parse_expr(&s, &ctx)?)
            }
        };
        Ok(SystemSpec {
            name: raw.name,
            dim: n,
            lagrangian,
            metric,
            potential,
            parameters: raw.parameters,
            domain: raw.domain,
        })
    }

    /// Canonical JSON rendering; parses back to an equal spec.
    pub fn to_json(&self) -> String {
        let out = RawOut {
            name: &self.name,
            dim: self.dim,
            lagrangian: self.lagrangian.to_string(),
            metric: self
                .metric
                .as_ref()
                .map(|m| m.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect()),
            potential: self.potential.as_ref().map(|e| e.to_string()),
            parameters: &self.parameters,
            domain: &self.domain,
        };
        serde_json::to_string_pretty(&out).expect("spec serializes")
    }

    pub fn is_autonomous(&self) -> bool {
        let uses_t = |e: &Expr| e.mentions(&|v| v == Var::T);
        !uses_t(&self.lagrangian)
            && !self.potential.as_ref().is_some_and(uses_t)
            && !self.metric.as_ref().is_some_and(|m| m.iter().flatten().any(uses_t))
    }

    pub fn lagrangian_value(&self, x: &[f64], v: &[f64], t: f64) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(v.len())?;
        let env = Env::new(0).x(x).v(v).t(&t).params(&self.parameters);
        self.lagrangian.eval(&env)
    }

    /// Lagrangian with gradient and Hessian with respect to `(x, v)`.
    pub fn lagrangian_jet(&self, x: &[f64], v: &[f64], t: f64) -> Result<Jet> {
        self.check_dim(x.len())?;
        self.check_dim(v.len())?;
        let n = self.dim;
        let mut all = x.to_vec();
        all.extend_from_slice(v);
        let seeds = Jet::seed(&all);
        let tj = Jet::constant(t, 2 * n);
        let env = Env::new(2 * n).x(&seeds[..n]).v(&seeds[n..]).t(&tj).params(&self.parameters);
        self.lagrangian.eval(&env)
    }

    fn check_dim(&self, k: usize) -> Result<()> {
        if k != self.dim {
            return Err(Error::DimensionMismatch(format!("expected {} components, got {k}", self.dim)));
        }
        Ok(())
    }

    /// Whether `x` lies inside the declared chart (periodic axes are unbounded).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().zip(&self.domain).all(|(&xi, ax)| ax.periodic || (xi >= ax.min && xi <= ax.max))
    }

    /// Splits `L = ½ vᵀ g(x) v − V(x)` if the Lagrangian has that shape.
    pub fn natural_form(&self) -> Result<NaturalForm> {
        if !self.is_autonomous() {
            return Err(Error::NonNaturalLagrangian("explicit time dependence".into()));
        }
        let nf = NaturalForm { spec: self.clone() };
        // Probe points spread over the chart.
        let n = self.dim;
        let probes = [0.17, 0.41, 0.63, 0.88];
        for (k, &s) in probes.iter().enumerate() {
            let x: Vec<f64> = self
                .domain
                .iter()
                .enumerate()
                .map(|(a, ax)| ax.min + (ax.max - ax.min) * ((s + 0.13 * a as f64) % 1.0))
                .collect();
            let v: Vec<f64> = (0..n).map(|a| 0.7 - 0.45 * ((k + 2 * a) % 4) as f64).collect();
            let g = nf.metric_at(&x)?;
            let pot = nf.potential_at(&x)?;
            let l = self.lagrangian_value(&x, &v, 0.0)?;
            let gv = &g * DVector::from_column_slice(&v);
            let kin = 0.5 * DVector::from_column_slice(&v).dot(&gv);
            let scale = 1.0 + l.abs() + kin.abs() + pot.abs();
            if (l - (kin - pot)).abs() > 1e-9 * scale {
                return Err(Error::NonNaturalLagrangian(format!(
                    "L differs from ½vᵀgv − V by {:e} at x = {x:?}",
                    l - (kin - pot)
                )));
            }
            let j0 = self.lagrangian_jet(&x, &vec![0.0; n], 0.0)?;
            if j0.grad[n..].iter().any(|g| g.abs() > 1e-9 * scale) {
                return Err(Error::NonNaturalLagrangian("terms linear in velocity".into()));
            }
        }
        Ok(nf)
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// Metric and potential of a natural Lagrangian.
#[derive(Clone, Debug)]
pub struct NaturalForm {
    spec: SystemSpec,
}

impl NaturalForm {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = &self.spec;
        let n = s.dim;
        if let Some(m) = &s.metric {
            let t = 0.0;
            let env = Env::new(0).x(x).t(&t).params(&s.parameters);
            let mut g = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    g[(a, b)] = m[a][b].eval(&env)?;
                }
            }
            return Ok(g);
        }
        let j = s.lagrangian_jet(x, &vec![0.0; n], 0.0)?;
        Ok(DMatrix::from_fn(n, n, |a, b| j.h(n + a, n + b)))
    }

    pub fn potential_at(&self, x: &[f64]) -> Result<f64> {
        let s = &self.spec;
        if let Some(p) = &s.potential {
            let t = 0.0;
            return p.eval(&Env::new(0).x(x).t(&t).params(&s.parameters));
        }
        Ok(-s.lagrangian_value(x, &vec![0.0; s.dim], 0.0)?)
    }

    /// Metric as an exact-derivative field when given explicitly.
    pub fn metric_field(&self) -> Box<dyn crate::geometry::MetricField> {
        match &self.spec.metric {
            Some(m) => Box::new(crate::geometry::ExprMetric::new(m.clone(), self.spec.parameters.clone())),
            None => {
                let me = self.clone();
                Box::new(crate::geometry::FnMetric::new(self.spec.dim, move |x: &[f64]| me.metric_at(x)))
            }
        }
    }
}
