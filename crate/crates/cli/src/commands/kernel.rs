use std::sync::Arc;

use bmech_core::bqm::{phys_state, semiclassical_measure, ClassicalAction, KernelMatrix, Method, SemiclassicalOptions, Window};
use bmech_core::geometry::{FnVector, VectorField};
use bmech_core::numerics::CMatrix;
use bmech_core::quantize::Grid;
use bmech_core::sysdsl::SystemSpec;
use serde_json::{json, Value};

use super::check_finite;
use crate::report::{usage, Outcome, Sink};
use crate::{PropagatorArgs, SemiclassicalArgs};

/// Largest grid for which the dense unitarity check is run.
const UNITARITY_LIMIT: usize = 1024;

fn kernel(spec: &SystemSpec, a: &PropagatorArgs) -> Outcome<KernelMatrix> {
    check_finite(a.t, "--T")?;
    if a.t < 0.0 {
        return Err(usage("--T must be non-negative"));
    }
    if a.grid < 4 {
        return Err(usage("--grid must be at least 4"));
    }
    if a.slices == 0 {
        return Err(usage("--slices must be positive"));
    }
    let method: Method = a.method.parse()?;
    let grid = Grid::from_domain(&spec.domain, a.grid)?;
    log::info!("propagating on {} nodes, {} slices", grid.len(), a.slices);
    Ok(phys_state(spec, a.t, &grid, method, a.slices)?)
}

fn coords(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |k| format!("{prefix}{k}"))
}

pub fn propagator(spec: &SystemSpec, a: &PropagatorArgs, sink: &mut Sink) -> Outcome<Value> {
    let phys = kernel(spec, a)?;
    let grid = &phys.grid;
    let n = grid.len();
    let d = grid.dim();
    let unitarity = if n <= UNITARITY_LIMIT {
        let e = phys.evolution();
        json!((e.adjoint() * &e - CMatrix::identity(n, n)).camax())
    } else {
        Value::Null
    };
    let header: Vec<String> =
        coords("x_f", d).chain(coords("x_i", d)).chain(["abs".to_string(), "arg".to_string()]).collect();
    let points = grid.points();
    sink.csv(
        "kernel",
        &header,
        (0..n).flat_map(|f| (0..n).map(move |i| (f, i))).map(|(f, i)| {
            let k = phys.k[(f, i)];
            points[f].iter().chain(&points[i]).copied().chain([k.norm(), k.arg()]).collect()
        }),
    )?;
    Ok(json!({
        "t": phys.t,
        "method": a.method,
        "nodes": n,
        "h": grid.axes.iter().map(|ax| ax.h).collect::<Vec<_>>(),
        "norm_drift": phys.norm_drift,
        "unitarity_defect": unitarity,
    }))
}

pub fn semiclassical(spec: &SystemSpec, a: &SemiclassicalArgs, sink: &mut Sink) -> Outcome<Value> {
    let window = match (a.pass, a.stop) {
        (None, None) => None,
        (Some(pass), Some(stop)) if pass > 0.0 && stop > pass => Some(Window { pass, stop }),
        (Some(_), Some(_)) => return Err(usage("need 0 < --pass < --stop")),
        _ => return Err(usage("--pass and --stop go together")),
    };
    if a.action_slices == 0 || a.stride == 0 {
        return Err(usage("--action-slices and --stride must be positive"));
    }
    let d = spec.dim;
    let interior: Vec<(f64, f64)> = match &a.interior {
        Some(v) => {
            if v.len() != 2 || !v.iter().all(|x| x.is_finite()) || v[0] >= v[1] {
                return Err(usage("--interior takes lo,hi with lo < hi"));
            }
            vec![(v[0], v[1]); d]
        }
        // Middle half of every axis, away from the walls.
        None => spec.domain.iter().map(|ax| {
            let q = 0.25 * (ax.max - ax.min);
            (ax.min + q, ax.max - q)
        }).collect(),
    };
    let phys = kernel(spec, &a.kernel)?;

    let mut labels = Vec::new();
    let mut fields: Vec<Arc<dyn VectorField>> = Vec::new();
    for k in 0..d {
        labels.push(format!("translate_final_x{}", k + 1));
        fields.push(Arc::new(FnVector::new(2 * d, move |_| (0..2 * d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())));
    }
    labels.push("dilation".to_string());
    fields.push(Arc::new(FnVector::new(2 * d, |z| z.to_vec())));

    let action = ClassicalAction { spec, t: a.kernel.t, slices: a.action_slices };
    let opts = SemiclassicalOptions { window, interior, fields, stride: a.stride };
    let rep = semiclassical_measure(&phys, &action, &opts)?;

    let mut header: Vec<String> = coords("x_f", d).chain(coords("x_i", d)).collect();
    header.extend(["re".to_string(), "im".to_string()]);
    let row = |j: usize| -> Vec<f64> { rep.x_f[j].iter().chain(&rep.x_i[j]).copied().collect() };
    sink.csv(
        "measure",
        &header,
        (0..rep.measure.len()).map(|j| {
            let mut r = row(j);
            r.extend([rep.measure[j].re, rep.measure[j].im]);
            r
        }),
    )?;
    let mut header: Vec<String> = coords("x_f", d).chain(coords("x_i", d)).collect();
    for l in &labels {
        header.extend([format!("{l}_re"), format!("{l}_im")]);
    }
    sink.csv(
        "residuals",
        &header,
        (0..rep.measure.len()).map(|j| {
            let mut r = row(j);
            for f in &rep.residuals {
                r.extend([f[j].re, f[j].im]);
            }
            r
        }),
    )?;
    let residuals: serde_json::Map<String, Value> =
        labels.iter().zip(&rep.residual_norms).map(|(l, v)| (l.clone(), json!(v))).collect();
    Ok(json!({
        "t": phys.t,
        "pairs": rep.measure.len(),
        "mean": { "re": rep.mean.re, "im": rep.mean.im, "abs": rep.mean.norm(), "arg": rep.mean.arg() },
        "max_rel_variation": rep.max_rel_variation,
        "residual_norms": residuals,
        "norm_drift": phys.norm_drift,
    }))
}
