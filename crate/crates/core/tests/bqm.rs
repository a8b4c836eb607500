mod common;

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use bmech_core::bqm::*;
use bmech_core::geometry::{FnVector, VectorField};
use bmech_core::numerics::{max_abs_diff, CMatrix};
use bmech_core::quantize::{op_g, DensityField, Grid, GridAxis, GridOperator, Stencil};
use bmech_core::Error;
use common::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn wide_grid(m: usize) -> Grid {
    Grid::uniform_1d(-8.0, 8.0, m, false).unwrap()
}

#[test]
fn free_kernel_matches_closed_form() {
    let grid = wide_grid(256);
    for method in [Method::CrankNicolson, Method::Trotter] {
        let k = phys_state(&spec(FREE), 1.0, &grid, method, 512).unwrap();
        let err = probe_error(|p| propagate(&k, p), &grid, &Quadratic::free(1.0));
        assert!(err < 1e-3, "{method:?}: {err}");
    }
}

#[test]
fn oscillator_kernel_matches_mehler() {
    let grid = wide_grid(256);
    for method in [Method::CrankNicolson, Method::Trotter] {
        let k = phys_state(&spec(OSC), FRAC_PI_4, &grid, method, 512).unwrap();
        let err = probe_error(|p| propagate(&k, p), &grid, &Quadratic::mehler(FRAC_PI_4));
        assert!(err < 1e-3, "{method:?}: {err}");
    }
}

#[test]
fn short_time_kernel_is_discrete_delta() {
    let grid = wide_grid(64);
    let id = CMatrix::identity(64, 64);
    for method in [Method::CrankNicolson, Method::Trotter] {
        let k = phys_state(&spec(OSC), 1e-14, &grid, method, 1).unwrap();
        assert!(max_abs_diff(&k.evolution(), &id) < 1e-10, "{method:?}");
    }
}

#[test]
fn methods_agree_at_unit_time() {
    let grid = wide_grid(256);
    let cn = phys_state(&spec(OSC), 1.0, &grid, Method::CrankNicolson, 512).unwrap();
    let tr = phys_state(&spec(OSC), 1.0, &grid, Method::Trotter, 512).unwrap();
    let err = probe_error(|p| propagate(&cn, p), &grid, &Quadratic::mehler(1.0));
    assert!(err < 1e-3);
    for y0 in [-1.0, 0.0, 1.0] {
        let psi = gaussian(&grid, y0, 1.0, 0.0);
        let (a, b) = (propagate(&cn, &psi), propagate(&tr, &psi));
        assert!((&a - &b).norm() / b.norm() < 1e-3);
    }
}

#[test]
fn kernels_compose() {
    let grid = wide_grid(128);
    let osc = spec(OSC);
    let k1 = phys_state(&osc, 0.3, &grid, Method::Trotter, 60).unwrap();
    let k2 = phys_state(&osc, 0.5, &grid, Method::Trotter, 100).unwrap();
    let k12 = phys_state(&osc, 0.8, &grid, Method::Trotter, 200).unwrap();
    let both = k2.compose(&k1).unwrap();
    assert!((both.t - 0.8).abs() < 1e-15);
    let psi = gaussian(&grid, 0.5, 1.0, 0.0);
    let (a, b) = (propagate(&both, &psi), propagate(&k12, &psi));
    assert!((&a - &b).norm() / b.norm() < 1e-3);
}

#[test]
fn evolution_is_unitary() {
    let grid = wide_grid(64);
    let k = phys_state(&spec(OSC), 1.0, &grid, Method::CrankNicolson, 32).unwrap();
    let u = k.evolution();
    assert!(max_abs_diff(&(u.adjoint() * &u), &CMatrix::identity(64, 64)) < 1e-10);
    assert!(k.norm_drift < 1e-10);
}

#[test]
fn physical_state_is_entangled() {
    let grid = wide_grid(64);
    let k = phys_state(&spec(OSC), 1.0, &grid, Method::CrankNicolson, 64).unwrap();
    assert!(k.rank(1e-8) > 1);
    let psi = DensityField::from_fn(&grid, wave_half(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
    let chi = DensityField::from_fn(&grid, wave_half(), |x| Complex64::new(x[0], 0.5).exp());
    let s = BoundaryState::product(&psi, &chi);
    let sv = s.psi.singular_values();
    let smax = sv.max();
    assert_eq!(sv.iter().filter(|v| **v > 1e-10 * smax).count(), 1);
}

fn wave_half() -> Complex64 {
    Complex64::new(0.5, 0.0)
}

#[test]
fn amplitude_pairings() {
    let grid = wide_grid(32);
    let k = phys_state(&spec(OSC), 0.7, &grid, Method::Trotter, 20).unwrap();
    let pos = BoundaryState::position(&grid, 11, 19);
    let a = amplitude(&k, &pos).unwrap();
    assert!((a - k.k[(11, 19)]).norm() < 1e-12 * k.k[(11, 19)].norm().max(1.0));

    let vol = grid.cell_volume();
    let norm2: f64 = k.k.iter().map(|z| z.norm_sqr()).sum::<f64>() * vol * vol;
    let a = amplitude(&k, &BoundaryState::physical(&k)).unwrap();
    assert!((a.re - norm2).abs() < 1e-10 * norm2 && a.im.abs() < 1e-10 * norm2);

    let c = Complex64::new(0.3, -1.7);
    let s = BoundaryState { psi: pos.psi.map(|z| z * c) };
    let b = amplitude(&k, &s).unwrap();
    assert!((b - c * k.k[(11, 19)]).norm() < 1e-12 * b.norm());

    let small = BoundaryState { psi: CMatrix::zeros(8, 8) };
    assert!(matches!(amplitude(&k, &small), Err(Error::DimensionMismatch(_))));
}

#[test]
fn product_state_amplitude_is_matrix_element() {
    let grid = wide_grid(32);
    let k = phys_state(&spec(OSC), 0.7, &grid, Method::CrankNicolson, 20).unwrap();
    let f = DensityField::from_fn(&grid, wave_half(), |x| Complex64::new(-(x[0] - 0.5).powi(2), 0.3 * x[0]).exp());
    let i = DensityField::from_fn(&grid, wave_half(), |x| Complex64::new(-(x[0] + 0.2).powi(2), -x[0]).exp());
    let a = amplitude(&k, &BoundaryState::product(&f, &i)).unwrap();
    let evolved = propagate(&k, &i.values);
    let want: Complex64 = f.values.iter().zip(evolved.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>() * grid.cell_volume();
    assert!((a - want).norm() < 1e-12 * want.norm());
}

fn random_op(n: usize, seed: u64) -> GridOperator {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    GridOperator::new(m, None)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn opposite_ends_commute(sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (random_op(6, sa), random_op(6, sb));
        let fa = lift_observable(&a, End::Final).superoperator();
        let ib = lift_observable(&b, End::Initial).superoperator();
        prop_assert!(max_abs_diff(&(&fa * &ib), &(&ib * &fa)) < 1e-12);
    }

    #[test]
    fn lifted_action_matches_superoperator(sa in any::<u64>(), ss in any::<u64>()) {
        let a = random_op(5, sa);
        let psi = random_op(5, ss).matrix;
        let state = BoundaryState { psi: psi.clone() };
        for end in [End::Final, End::Initial] {
            let l = lift_observable(&a, end);
            let direct = l.apply(&state).psi;
            let flat = CMatrix::from_row_iterator(25, 1, psi.transpose().iter().copied());
            let via = l.superoperator() * flat;
            let back = CMatrix::from_row_iterator(5, 5, via.iter().copied());
            prop_assert!(max_abs_diff(&direct, &back) < 1e-12);
        }
    }

    #[test]
    fn lifting_keeps_hermiticity(sa in any::<u64>()) {
        let a = random_op(5, sa);
        let h = GridOperator::new(&a.matrix + a.matrix.adjoint(), None);
        for end in [End::Final, End::Initial] {
            let s = lift_observable(&h, end).superoperator();
            prop_assert!(max_abs_diff(&s, &s.adjoint()) < 1e-12);
            let s = lift_observable(&a, end).superoperator();
            prop_assert!(max_abs_diff(&s, &s.adjoint()) > 1e-6);
        }
    }
}

#[test]
fn lifted_identity_is_identity() {
    let id = GridOperator::new(CMatrix::identity(7, 7), None);
    for end in [End::Final, End::Initial] {
        assert_eq!(lift_observable(&id, end).superoperator(), CMatrix::identity(49, 49));
    }
}

#[test]
fn boundary_generator_is_product_grid_generator() {
    let grid = Grid::uniform_1d(-2.0, 2.0, 9, false).unwrap();
    let af = FnVector::new(1, |x: &[f64]| vec![1.0 + 0.3 * x[0] * x[0]]);
    let ai = FnVector::new(1, |x: &[f64]| vec![(0.7 * x[0]).sin()]);
    let axis = GridAxis::new(-2.0, 2.0, 9, false).unwrap();
    let product = Grid::new(vec![axis.clone(), axis]).unwrap();
    let (af2, ai2) = (af.clone(), ai.clone());
    let joint = FnVector::new(2, move |z: &[f64]| vec![af2.value(&z[..1]).unwrap()[0], ai2.value(&z[1..]).unwrap()[0]]);
    for gamma in [0.0, 0.4, -1.3] {
        let lifted = boundary_op_g(&af, &ai, gamma, &grid, Stencil::Central).unwrap();
        let direct = op_g(&joint, gamma, &product, None, Stencil::Central).unwrap();
        assert!(max_abs_diff(&lifted, &direct.matrix) < 1e-12, "gamma {gamma}");
    }
}

#[test]
fn non_natural_and_variable_metric_rejected() {
    let mag = spec(r#"{"name":"m","dim":1,"lagrangian":"0.5*v1^2 + x1*v1","domain":[{"min":-1,"max":1}]}"#);
    let grid = Grid::uniform_1d(-1.0, 1.0, 16, false).unwrap();
    assert!(matches!(phys_state(&mag, 0.1, &grid, Method::CrankNicolson, 4), Err(Error::NonNaturalLagrangian(_))));
    let var = spec(r#"{"name":"v","dim":1,"lagrangian":"0.5*(2+x1^2)*v1^2","domain":[{"min":-1,"max":1}]}"#);
    assert!(phys_state(&var, 0.1, &grid, Method::CrankNicolson, 4).is_ok());
    assert!(matches!(phys_state(&var, 0.1, &grid, Method::Trotter, 4), Err(Error::InvalidInput(_))));
}

#[test]
fn sphere_kernel_is_unitary() {
    let sphere = bmech_core::sysdsl::SystemSpec::from_json(include_str!("../../../specs/sphere.json")).unwrap();
    let grid = Grid::new(vec![GridAxis::new(0.3, 2.8, 8, false).unwrap(), GridAxis::new(0.0, 2.0 * PI, 8, true).unwrap()])
        .unwrap();
    let k = phys_state(&sphere, 0.2, &grid, Method::CrankNicolson, 10).unwrap();
    let u = k.evolution();
    assert!(max_abs_diff(&(u.adjoint() * &u), &CMatrix::identity(64, 64)) < 1e-10);
}

fn quadratic_action(q: Quadratic) -> FnAction<impl Fn(&[f64], &[f64]) -> ActionSample + Sync> {
    FnAction(move |xf: &[f64], xi: &[f64]| ActionSample {
        action: q.action(xf[0], xi[0]),
        grad_f: vec![q.a * xf[0] - q.b * xi[0]],
        grad_i: vec![q.c * xi[0] - q.b * xf[0]],
    })
}

fn constant_field() -> Arc<dyn VectorField> {
    Arc::new(FnVector::new(2, |_: &[f64]| vec![1.0, 0.0]))
}

#[test]
fn free_measure_is_constant() {
    let grid = Grid::uniform_1d(-14.0, 14.0, 512, false).unwrap();
    let k = phys_state(&spec(FREE), 1.0, &grid, Method::CrankNicolson, 512).unwrap();
    let opts = SemiclassicalOptions {
        window: Some(Window { pass: 9.0, stop: 17.0 }),
        interior: vec![(-1.0, 1.0)],
        fields: vec![constant_field()],
        stride: 1,
    };
    let r = semiclassical_measure(&k, &quadratic_action(Quadratic::free(1.0)), &opts).unwrap();
    assert!(r.max_rel_variation < 0.01, "{}", r.max_rel_variation);
    assert!((r.mean - Quadratic::free(1.0).amp).norm() < 0.01 * r.mean.norm());
}

#[test]
fn classical_action_drives_extraction() {
    let osc = spec(OSC);
    let grid = Grid::uniform_1d(-14.0, 14.0, 256, false).unwrap();
    let k = phys_state(&osc, FRAC_PI_4, &grid, Method::CrankNicolson, 256).unwrap();
    let opts = SemiclassicalOptions {
        window: Some(Window { pass: 9.0, stop: 17.0 }),
        interior: vec![(-1.0, 1.0)],
        fields: vec![constant_field()],
        stride: 2,
    };
    let solver = ClassicalAction { spec: &osc, t: FRAC_PI_4, slices: 200 };
    let a = semiclassical_measure(&k, &solver, &opts).unwrap();
    let b = semiclassical_measure(&k, &quadratic_action(Quadratic::mehler(FRAC_PI_4)), &opts).unwrap();
    assert_eq!(a.measure.len(), b.measure.len());
    for (x, y) in a.measure.iter().zip(&b.measure) {
        assert!((x - y).norm() < 1e-4 * y.norm());
    }
    assert!((a.residual_norms[0] - b.residual_norms[0]).abs() < 1e-4);
}

#[test]
fn window_is_flat_top() {
    let w = Window { pass: 2.0, stop: 4.0 };
    assert_eq!(w.weight(1.9), 1.0);
    assert_eq!(w.weight(-4.1), 0.0);
    assert!((w.weight(3.0) - 0.5).abs() < 1e-15);
    let mut prev = 1.0;
    for j in 0..=100 {
        let v = w.weight(2.0 + 0.02 * j as f64);
        assert!(v <= prev + 1e-15);
        prev = v;
    }
}

#[test]
fn empty_interior_is_an_error() {
    let grid = wide_grid(16);
    let k = phys_state(&spec(FREE), 0.5, &grid, Method::Trotter, 4).unwrap();
    let opts = SemiclassicalOptions { window: None, interior: vec![(20.0, 21.0)], fields: vec![], stride: 1 };
    assert!(matches!(
        semiclassical_measure(&k, &quadratic_action(Quadratic::free(0.5)), &opts),
        Err(Error::InvalidInput(_))
    ));
}
