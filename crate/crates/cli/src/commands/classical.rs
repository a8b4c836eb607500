use bmech_core::classical::{boundary_greens, solve_classical, ClassicalSolution, SolveOptions, TimeGrid};
use bmech_core::numerics::fit_order;
use bmech_core::sysdsl::SystemSpec;
use serde_json::{json, Value};

use super::{check_finite, check_point};
use crate::report::{matrix, usage, Outcome, Sink};
use crate::ClassicalArgs;

fn solve(spec: &SystemSpec, a: &ClassicalArgs, slices: usize) -> Outcome<ClassicalSolution> {
    let grid = TimeGrid::new(a.ti, a.tf, slices)?;
    let opts = SolveOptions { max_iter: a.max_iter, ..SolveOptions::default() };
    log::info!("solving with {slices} slices");
    Ok(solve_classical(spec, &a.xf, &a.xi, &grid, &opts)?)
}

pub fn run(spec: &SystemSpec, a: &ClassicalArgs, sink: &mut Sink) -> Outcome<Value> {
    check_point(spec, &a.xi, "--xi")?;
    check_point(spec, &a.xf, "--xf")?;
    check_finite(a.ti, "--ti")?;
    check_finite(a.tf, "--tf")?;
    if a.tf <= a.ti {
        return Err(usage("--tf must exceed --ti"));
    }
    if a.slices == 0 {
        return Err(usage("--slices must be positive"));
    }
    let sol = solve(spec, a, a.slices)?;
    let g = boundary_greens(spec, &sol)?;

    let n = spec.dim;
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|k| format!("x{k}"))).collect();
    sink.csv(
        "trajectory",
        &header,
        (0..=sol.grid.slices).map(|k| std::iter::once(sol.grid.time(k)).chain(sol.history.node(k).iter().copied()).collect()),
    )?;

    let scan = match &a.scan {
        None => Value::Null,
        Some(list) => scan(spec, a, list)?,
    };
    Ok(json!({
        "action": sol.action,
        "p_f": sol.p_f,
        "p_i": sol.p_i,
        "hessian": {
            "ff": matrix(&sol.hessian.ff),
            "fi": matrix(&sol.hessian.fi),
            "ii": matrix(&sol.hessian.ii),
        },
        "greens": {
            "g_if": matrix(&g.g_if),
            "g_fi": matrix(&g.g_fi),
            "g_c": matrix(&g.g_c),
        },
        "convergence": {
            "iterations": sol.iterations,
            "residual": sol.residual,
            "jacobi_conditioning": sol.jacobi_conditioning,
            "caustic_threshold": sol.caustic_threshold,
        },
        "scan": scan,
    }))
}

/// Refinement study. The order is fitted to differences of consecutive
/// actions, which is exact for geometric slice sequences.
fn scan(spec: &SystemSpec, a: &ClassicalArgs, list: &[usize]) -> Outcome<Value> {
    if list.contains(&0) {
        return Err(usage("--scan entries must be positive"));
    }
    let mut rows = Vec::new();
    let mut actions = Vec::new();
    for &s in list {
        let sol = solve(spec, a, s)?;
        actions.push(sol.action);
        rows.push(json!({ "slices": s, "action": sol.action, "p_f": sol.p_f, "p_i": sol.p_i, "iterations": sol.iterations }));
    }
    let order = if list.len() >= 3 {
        let h: Vec<f64> = list[..list.len() - 1].iter().map(|&s| 1.0 / s as f64).collect();
        let d: Vec<f64> = actions.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        // Differences at round-off level (exact schemes) carry no order.
        let floor = 1e-12 * actions.iter().fold(1.0f64, |m, s| m.max(s.abs()));
        if d.iter().all(|v| *v > floor) {
            json!(fit_order(&h, &d))
        } else {
            Value::Null
        }
    } else {
        Value::Null
    };
    Ok(json!({ "runs": rows, "self_convergence_order": order }))
}
