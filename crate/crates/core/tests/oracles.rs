//! Frozen reference values from closed forms.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use statrs::function::gamma::gamma;

use stabound::geometry::Domain;
use stabound::measure::{OperatorSpec, SphericalMeasure};
use stabound::modulus::Modulus;
use stabound::operator::{apply, ProfiledFunction};
use stabound::solver::{solve_dirichlet, solve_local_limit, Grid};

/// Prefactor of the solution (1 - x^2)^s of A u = 1 on (-1, 1) for the
/// uniform measure of mass 1.
fn getoor(s: f64) -> f64 {
    s / (gamma(2.0 - s) * gamma(1.0 + s))
}

fn line(s: f64) -> OperatorSpec<f64> {
    OperatorSpec::new(s, SphericalMeasure::uniform(1, 1.0).unwrap(), true).unwrap()
}

#[test]
fn getoor_prefactor_values() {
    assert_relative_eq!(getoor(0.5), 2.0 / PI, max_relative = 1e-14);
    assert_relative_eq!(getoor(0.8), 0.935486, max_relative = 1e-5);
}

#[test]
fn operator_maps_getoor_profile_to_constant() {
    for s in [0.3, 0.5, 0.8] {
        let u = ProfiledFunction::new(1, move |x: &[f64]| (1.0 - x[0] * x[0]).max(0.0).powf(s))
            .with_support(1.0)
            .with_breaks(|x, th, out| stabound::operator::sphere_hits(x, th, 1.0, out));
        for x in [0.0, 0.3, 0.6, 0.9] {
            let v = apply(&line(s), &u, &[x]).unwrap();
            assert_relative_eq!(v * getoor(s), 1.0, max_relative = 5e-4);
        }
    }
}

#[test]
fn solver_matches_getoor_solution_1d() {
    let dom = Domain::interval(-1.0, 1.0).unwrap();
    let grid = Grid::for_domain(&dom, 1.0 / 256.0, 0).unwrap();
    for s in [0.5, 0.8] {
        let res = solve_dirichlet(&line(s), &dom, &grid, &|_| 1.0, None).unwrap();
        let err = res.points.iter().zip(&res.u).map(|(x, u)| (u - getoor(s) * (1.0 - x[0] * x[0]).powf(s)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "s={s}: {err}");
    }
}

#[test]
fn solver_matches_half_laplacian_ball() {
    // Uniform mass 1 on the circle gives the half Laplacian at s = 1/2.
    let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let grid = Grid::for_domain(&dom, 1.0 / 16.0, 0).unwrap();
    let spec = OperatorSpec::new(0.5, SphericalMeasure::uniform(2, 1.0).unwrap(), true).unwrap();
    let res = solve_dirichlet(&spec, &dom, &grid, &|_| 1.0, None).unwrap();
    assert!((res.sup() - 2.0 / PI).abs() < 0.03, "{}", res.sup());
    // Radial symmetry under the grid's own symmetries.
    for (x, u) in res.points.iter().zip(&res.u) {
        let k = res.points.iter().position(|y| (y[0] + x[1]).abs() < 1e-12 && (y[1] - x[0]).abs() < 1e-12).unwrap();
        assert_relative_eq!(*u, res.u[k], max_relative = 1e-9);
    }
}

#[test]
fn local_limit_matches_parabola() {
    // -(m/2) u'' = 1 with m = 2.
    let dom = Domain::interval(-1.0, 1.0).unwrap();
    let grid = Grid::for_domain(&dom, 1.0 / 32.0, 0).unwrap();
    let spec = OperatorSpec::new(0.9, SphericalMeasure::uniform(1, 2.0).unwrap(), true).unwrap();
    let res = solve_local_limit(&spec, &dom, &grid, &|_| 1.0).unwrap();
    for (x, u) in res.points.iter().zip(&res.u) {
        assert_relative_eq!(*u, (1.0 - x[0] * x[0]) / 2.0, epsilon = 1e-12);
    }
}

#[test]
fn dini_integrals_of_analytic_moduli() {
    assert_relative_eq!(Modulus::power(0.25).unwrap().dini_integral(1e-12).unwrap().value, 4.0, max_relative = 1e-3);
    assert_relative_eq!(Modulus::log_power(2.0).unwrap().dini_integral(1e-12).unwrap().value, 1.0, max_relative = 1e-3);
}

#[test]
fn non_dini_modulus_stays_non_dini_after_upgrade() {
    let bar = Modulus::log_power(0.5).unwrap();
    assert!(!bar.dini_integral(1e-12).unwrap().finite);
    let up = bar.upgrade(0.25).unwrap();
    assert!(!up.dini_integral(1e-12).unwrap().finite);
}
