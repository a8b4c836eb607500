use std::sync::Arc;

use bmech_core::classical::{boundary_greens, solve_classical, BoundaryGreens, SolveOptions, TimeGrid};
use bmech_core::geometry::*;
use bmech_core::symplectic::*;
use bmech_core::sysdsl::{parse_expr, Context, SystemSpec};
use bmech_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Polynomial field on boundary values `(x_f, x_i)` of a 1D system.
fn poly(src: &str) -> ExprScalar {
    ExprScalar::new(parse_expr(src, &Context::positions("f", 2)).unwrap(), 2)
}

fn vfield(a: &str, b: &str) -> ExprVector {
    let ctx = Context::positions("a", 2);
    ExprVector::new(vec![parse_expr(a, &ctx).unwrap(), parse_expr(b, &ctx).unwrap()])
}

fn point(x: [f64; 4]) -> BoundaryPhasePoint {
    BoundaryPhasePoint::new(vec![x[0]], vec![x[1]], vec![x[2]], vec![x[3]]).unwrap()
}

fn pts() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0f64..2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn position_functions_commute(x in pts()) {
        let f = Observable::f(poly("x1^3*x2 - 2*x2^2 + x1"));
        let g = Observable::f(poly("x1*x2^2 + 5"));
        prop_assert_eq!(poisson_boundary(&f, &g, &point(x)).unwrap(), 0.0);
        prop_assert_eq!(poisson_boundary(&f, &f, &point(x)).unwrap(), 0.0);
    }

    #[test]
    fn vector_observables_differentiate_functions(x in pts()) {
        let pt = point(x);
        let f = Observable::f(poly("x1^3*x2 - 2*x2^2 + x1"));
        let g = Observable::g(vfield("x2^2", "1 + x1*x2"));
        // a · ∇f by hand
        let (u, v) = (x[0], x[1]);
        let a_grad_f = v * v * (3.0 * u * u * v + 1.0) + (1.0 + u * v) * (u.powi(3) - 4.0 * v);
        let b = poisson_boundary(&f, &g, &pt).unwrap();
        prop_assert!((b + a_grad_f).abs() <= 1e-8 * a_grad_f.abs().max(1.0));
    }

    #[test]
    fn vector_observables_close_under_brackets(x in pts()) {
        let pt = point(x);
        let a = Observable::g(vfield("x2^2", "1 + x1*x2"));
        let b = Observable::g(vfield("x1", "x1^2 - x2"));
        // [a, b] = J_b a − J_a b, computed by hand
        let (u, v) = (x[0], x[1]);
        let (a1, a2) = (v * v, 1.0 + u * v);
        let (b1, b2) = (u, u * u - v);
        let jb_a = [a1, 2.0 * u * a1 - a2];
        let ja_b = [2.0 * v * b2, v * b1 + u * b2];
        let c = [jb_a[0] - ja_b[0], jb_a[1] - ja_b[1]];
        let pb = pt.p_boundary();
        let want = c[0] * pb[0] + c[1] * pb[1];
        let got = poisson_boundary(&a, &b, &pt).unwrap();
        prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
        let lie = lie_bracket(&vfield("x2^2", "1 + x1*x2"), &vfield("x1", "x1^2 - x2"), &[u, v]).unwrap();
        prop_assert!((lie[0] - c[0]).abs() < 1e-12 && (lie[1] - c[1]).abs() < 1e-12);
    }

    #[test]
    fn jacobi_identity(x in pts()) {
        let pt = point(x);
        let obs = [
            Observable::general(|p: &BoundaryPhasePoint| Ok(p.x_f[0] * p.p_i[0].powi(2) + (p.x_i[0] * p.p_f[0]).sin())),
            Observable::g(vfield("x2^2", "1 + x1*x2")),
            Observable::general(|p: &BoundaryPhasePoint| Ok((0.3 * p.p_f[0]).exp() * p.x_i[0] + p.x_f[0].powi(2))),
        ];
        let nested = |a: &Observable, b: &Observable, c: &Observable| {
            let (b, c) = (b.clone(), c.clone());
            let inner = Observable::general(move |p| poisson_boundary(&b, &c, p));
            poisson_boundary(a, &inner, &pt).unwrap()
        };
        let terms = [nested(&obs[0], &obs[1], &obs[2]), nested(&obs[1], &obs[2], &obs[0]), nested(&obs[2], &obs[0], &obs[1])];
        let scale = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        let sum: f64 = terms.iter().sum();
        prop_assert!(sum.abs() <= 1e-6 * scale, "{:?}", terms);
    }

    #[test]
    fn bracket_does_not_depend_on_connection(x in prop::array::uniform4(-1.5f64..1.5)) {
        let ctx = Context::phase("h", 2);
        let a = ExprScalar::phase(parse_expr("0.5*(p1^2 + p2^2/sin(x1)^2) + x1*p2", &ctx).unwrap(), 2);
        let b = ExprScalar::phase(parse_expr("p1*cos(x2) - x1*p1*p2^2", &ctx).unwrap(), 2);
        let sphere = FnMetric::new(2, |x| Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0].sin().powi(2)])));
        let z = [1.0 + 0.3 * x[0], x[1], x[2], x[3]];
        let d = connection_invariance_check(&a, &b, &z, &FlatConnection(2), &LeviCivita(&sphere)).unwrap();
        prop_assert!(d < 1e-8, "{}", d);
    }
}

/// A connection with torsion, to show the check has teeth.
struct Twisted;

impl ConnectionField for Twisted {
    fn dim(&self) -> usize {
        2
    }
    fn christoffel(&self, _: &[f64]) -> bmech_core::Result<Christoffel> {
        let mut g = Christoffel::zeros(2);
        g.set(0, 0, 1, 1.0);
        Ok(g)
    }
}

#[test]
fn torsion_changes_the_bracket() {
    let ctx = Context::phase("h", 2);
    let a = ExprScalar::phase(parse_expr("p1", &ctx).unwrap(), 2);
    let b = ExprScalar::phase(parse_expr("p2", &ctx).unwrap(), 2);
    let d = connection_invariance_check(&a, &b, &[0.1, 0.2, 0.7, 0.0], &FlatConnection(2), &Twisted).unwrap();
    assert!((d - 0.7).abs() < 1e-12);
}

fn oscillator(n: usize, xf: f64, xi: f64, t: f64) -> BoundaryGreens {
    let s = SystemSpec::from_json(
        r#"{"name":"osc","dim":1,"lagrangian":"0.5*v1^2 - 0.5*x1^2","domain":[{"min":-10,"max":10}]}"#,
    )
    .unwrap();
    let sol = solve_classical(&s, &[xf], &[xi], &TimeGrid::new(0.0, t, n).unwrap(), &SolveOptions::default()).unwrap();
    boundary_greens(&s, &sol).unwrap()
}

/// Bracket on solutions computed in initial Cauchy data `(x_i, p_i)`, with
/// boundary data obtained from the exact oscillator flow.
fn pulled_back_bracket(a: &Observable, b: &Observable, xi: f64, pi: f64, t: f64) -> f64 {
    let lift = |x: f64, p: f64| {
        let (c, s) = (t.cos(), t.sin());
        point([x * c + p * s, x, -x * s + p * c, p])
    };
    let h = 1e-5;
    let d = |o: &Observable| {
        let dx = (o.value(&lift(xi + h, pi)).unwrap() - o.value(&lift(xi - h, pi)).unwrap()) / (2.0 * h);
        let dp = (o.value(&lift(xi, pi + h)).unwrap() - o.value(&lift(xi, pi - h)).unwrap()) / (2.0 * h);
        (dx, dp)
    };
    let ((ax, ap), (bx, bp)) = (d(a), d(b));
    ap * bx - ax * bp
}

#[test]
fn covariant_bracket_matches_pulled_back_bracket() {
    let t: f64 = 1.1;
    let observables = [
        Observable::f(poly("x1")),
        Observable::f(poly("x2")),
        Observable::f(poly("x1^2*x2 + x2^3")),
        Observable::g(vfield("x2^2", "1 + x1*x2")),
        Observable::general(|p: &BoundaryPhasePoint| Ok(p.p_f[0] * p.x_i[0] + (p.p_i[0] * p.x_f[0]).sin())),
    ];
    for (xi, pi) in [(0.4, -0.3), (-1.1, 0.8), (0.0, 1.5)] {
        let (xf, pf) = (xi * t.cos() + pi * t.sin(), -xi * t.sin() + pi * t.cos());
        let g = oscillator(800, xf, xi, t);
        assert!((g.p_i[0] - pi).abs() < 1e-5 && (g.p_f[0] - pf).abs() < 1e-5);
        let pt = BoundaryPhasePoint::on_shell(&g);
        for a in &observables {
            for b in &observables {
                let want = pulled_back_bracket(a, b, xi, pi, t);
                let got = poisson_covariant(a, b, &pt, &g).unwrap();
                assert!((got - want).abs() < 1e-4 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }
}

#[test]
fn boundary_positions_bracket_to_green_function() {
    let g = oscillator(200, 0.3, -0.2, 0.9);
    let pt = BoundaryPhasePoint::on_shell(&g);
    let xf = Observable::f(poly("x1"));
    let xi = Observable::f(poly("x2"));
    let b = poisson_covariant(&xf, &xi, &pt, &g).unwrap();
    assert!((b + g.g_fi[(0, 0)]).abs() < 1e-12);
    assert!((b - 0.9f64.sin()).abs() < 1e-4);
}

#[test]
fn off_shell_point_is_rejected() {
    let g = oscillator(50, 0.3, -0.2, 0.9);
    let mut pt = BoundaryPhasePoint::on_shell(&g);
    pt.p_f[0] += 0.1;
    let f = Observable::f(poly("x1"));
    assert!(matches!(poisson_covariant(&f, &f, &pt, &g), Err(Error::OffShell { .. })));
}

#[test]
fn end_brackets_split_the_boundary_bracket() {
    let a = Observable::general(|p: &BoundaryPhasePoint| Ok(p.x_f[0] * p.p_i[0] + p.p_f[0].powi(2) * p.x_i[0]));
    let b = Observable::general(|p: &BoundaryPhasePoint| Ok(p.x_i[0].powi(2) * p.p_f[0] - p.x_f[0] * p.p_i[0].powi(3)));
    let pt = point([0.3, -0.7, 1.2, 0.4]);
    let full = poisson_boundary(&a, &b, &pt).unwrap();
    let fin = poisson_final(&a, &b, &pt).unwrap();
    let ini = poisson_initial(&a, &b, &pt).unwrap();
    // The final end enters with reversed momentum.
    assert!((full - (ini - fin)).abs() < 1e-8);
}

#[test]
fn hamiltonian_vector_field_conventions() {
    let ctx = Context::phase("h", 1);
    let h = ExprScalar::phase(parse_expr("0.5*p1^2 + 0.5*x1^2", &ctx).unwrap(), 1);
    let x = canonical_vector_field(&h, &canonical_form(1), &[0.6, -0.2]).unwrap();
    assert!((x[0] + 0.2).abs() < 1e-14 && (x[1] + 0.6).abs() < 1e-14);
    let w2 = canonical_form(2);
    assert!((symplectic_volume(&w2).unwrap() - (2.0 * std::f64::consts::PI).powi(-2)).abs() < 1e-15);
    assert!(matches!(canonical_vector_field(&h, &canonical_form(2), &[0.6, -0.2]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn observables_share_values() {
    let pt = point([0.5, -1.0, 2.0, 3.0]);
    let g = Observable::G(Arc::new(vfield("1", "x1")));
    // G_a = a · p_B with p_B = (−p_f, p_i)
    assert!((g.value(&pt).unwrap() - (-2.0 + 0.5 * 3.0)).abs() < 1e-15);
}

#[test]
fn phase_observables_match_numeric_ones() {
    let ctx = Context::phase("o", 2);
    let exact = Observable::phase(ExprScalar::phase(parse_expr("x1*p2^2 + sin(x2*p1)", &ctx).unwrap(), 2));
    // p1 = −p_f, p2 = p_i
    let numeric = Observable::general(|p: &BoundaryPhasePoint| Ok(p.x_f[0] * p.p_i[0].powi(2) + (-p.x_i[0] * p.p_f[0]).sin()));
    let other = Observable::g(vfield("x2^2", "1 + x1*x2"));
    let pt = point([0.3, -0.8, 1.1, 0.6]);
    assert!((exact.value(&pt).unwrap() - numeric.value(&pt).unwrap()).abs() < 1e-15);
    let (a, b) = (poisson_boundary(&exact, &other, &pt).unwrap(), poisson_boundary(&numeric, &other, &pt).unwrap());
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    let xf = Observable::phase(ExprScalar::phase(parse_expr("x1", &ctx).unwrap(), 2));
    let pb1 = Observable::phase(ExprScalar::phase(parse_expr("p1", &ctx).unwrap(), 2));
    assert_eq!(poisson_boundary(&xf, &pb1, &pt).unwrap(), -1.0);
}
