use bmech_core::classical::{boundary_greens, solve_classical, SolveOptions, TimeGrid};
use bmech_core::geometry::ExprScalar;
use bmech_core::symplectic::{
    poisson_boundary, poisson_covariant, poisson_final, poisson_initial, BoundaryPhasePoint, Observable,
};
use bmech_core::sysdsl::{parse_expr, Context, SystemSpec};
use bmech_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::check_point;
use crate::report::{usage, Outcome};
use crate::BracketArgs;

fn observable(spec: &SystemSpec, src: &str) -> Outcome<Observable> {
    let n2 = 2 * spec.dim;
    let ctx = Context::phase("pairs", n2).with_params(spec.parameters.keys().cloned());
    let e = parse_expr(src.trim(), &ctx).map_err(Error::from)?;
    Ok(Observable::phase(ExprScalar::phase(e, n2).with_params(spec.parameters.clone())))
}

fn boundary_of(a: &Observable, b: &Observable) -> Observable {
    let (a, b) = (a.clone(), b.clone());
    Observable::general(move |pt| poisson_boundary(&a, &b, pt))
}

pub fn run(spec: &SystemSpec, a: &BracketArgs, seed: u64) -> Outcome<Value> {
    let n = spec.dim;
    if a.at.len() != 2 * n {
        return Err(usage(format!("--at: expected {} values (x_f then x_i), got {}", 2 * n, a.at.len())));
    }
    check_point(spec, &a.at[..n], "--at (final)")?;
    check_point(spec, &a.at[n..], "--at (initial)")?;
    if a.tf <= a.ti {
        return Err(usage("--tf must exceed --ti"));
    }
    let mut pairs = Vec::new();
    for item in a.pairs.split(',').filter(|s| !s.trim().is_empty()) {
        let Some((l, r)) = item.split_once(':') else {
            return Err(usage(format!("--pairs: '{item}' is not of the form A:B")));
        };
        pairs.push((l.trim().to_string(), r.trim().to_string()));
    }
    if pairs.is_empty() {
        return Err(usage("--pairs is empty"));
    }
    let mut names: Vec<String> = Vec::new();
    for (l, r) in &pairs {
        for s in [l, r] {
            if !names.contains(s) {
                names.push(s.clone());
            }
        }
    }
    let obs: Vec<Observable> = names.iter().map(|s| observable(spec, s)).collect::<Outcome<_>>()?;
    let find = |s: &str| &obs[names.iter().position(|x| x == s).unwrap()];

    let grid = TimeGrid::new(a.ti, a.tf, a.slices)?;
    let sol = solve_classical(spec, &a.at[..n], &a.at[n..], &grid, &SolveOptions::default())?;
    let g = boundary_greens(spec, &sol)?;
    let pt = BoundaryPhasePoint::on_shell(&g);

    let mut rows = Vec::new();
    for (l, r) in &pairs {
        let (oa, ob) = (find(l), find(r));
        let cov = poisson_covariant(oa, ob, &pt, &g)?;
        let rev = poisson_covariant(ob, oa, &pt, &g)?;
        rows.push(json!({
            "a": l,
            "b": r,
            "boundary": poisson_boundary(oa, ob, &pt)?,
            "covariant": cov,
            "final": poisson_final(oa, ob, &pt)?,
            "initial": poisson_initial(oa, ob, &pt)?,
            "antisymmetry": (cov + rev).abs(),
        }));
    }

    // Identities of the boundary bracket at seeded points around the
    // on-shell one.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, p0) = (pt.x(), pt.p_boundary());
    let (mut anti, mut jac) = (0.0f64, None::<f64>);
    for _ in 0..a.samples {
        let x: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let p: Vec<f64> = p0.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let q = BoundaryPhasePoint::from_boundary(&x, &p)?;
        for (l, r) in &pairs {
            let (oa, ob) = (find(l), find(r));
            anti = anti.max((poisson_boundary(oa, ob, &q)? + poisson_boundary(ob, oa, &q)?).abs());
        }
        if obs.len() >= 3 {
            let (u, v, w) = (&obs[0], &obs[1], &obs[2]);
            let s = poisson_boundary(u, &boundary_of(v, w), &q)?
                + poisson_boundary(v, &boundary_of(w, u), &q)?
                + poisson_boundary(w, &boundary_of(u, v), &q)?;
            jac = Some(jac.unwrap_or(0.0).max(s.abs()));
        }
    }
    Ok(json!({
        "phase_point": { "x_f": pt.x_f, "x_i": pt.x_i, "p_f": pt.p_f, "p_i": pt.p_i },
        "pairs": rows,
        "identities": {
            "samples": a.samples,
            "antisymmetry_max": anti,
            "jacobi_max": jac,
            "jacobi_observables": names.iter().take(3).collect::<Vec<_>>(),
        },
    }))
}
