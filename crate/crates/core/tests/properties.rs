use proptest::prelude::*;

use stabound::geometry::Domain;
use stabound::measure::{OperatorSpec, SphericalMeasure};
use stabound::modulus::Modulus;
use stabound::operator::{apply, apply_1d, ProfiledFunction};
use stabound::quad::linear_fit;
use stabound::solver::{boundary_rate_fit, boundary_rate_fit_corrected, discretize, solve_dirichlet, solve_system, Grid};

fn line(s: f64) -> OperatorSpec<f64> {
    OperatorSpec::new(s, SphericalMeasure::uniform(1, 1.0).unwrap(), true).unwrap()
}

fn unit_interval() -> Domain<f64> {
    Domain::interval(-1.0, 1.0).unwrap()
}

fn bumps(c: [f64; 3]) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| c[0] + c[1] * (3.0 * x[0]).cos().powi(2) + c[2] * (x[0] - 0.3).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_anchor_holds_for_any_mass(s in 0.1f64..0.95, mass in 0.1f64..10.0, dim in 1usize..3) {
        let spec = OperatorSpec::new(s, SphericalMeasure::uniform(dim, mass).unwrap(), true).unwrap();
        let v = apply(&spec, &ProfiledFunction::psi(dim), &vec![0.0; dim]).unwrap();
        prop_assert!((v * s / mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn half_line_power_is_s_harmonic(s in 0.2f64..0.9, t in 0.1f64..10.0) {
        let v = apply_1d(s, &ProfiledFunction::half_line_power(1, s), t).unwrap();
        prop_assert!(v.abs() * t.powf(s) < 1e-6);
    }

    #[test]
    fn nondegeneracy_scales_with_mass(s in 0.2f64..0.9, mass in 0.1f64..5.0) {
        let one = SphericalMeasure::uniform(2, 1.0).unwrap().nondegeneracy_constant(s, 64);
        let m = SphericalMeasure::uniform(2, mass).unwrap().nondegeneracy_constant(s, 64);
        prop_assert!(one > 0.0);
        prop_assert!((m / (mass * one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upgraded_power_dominates_and_is_concave(alpha in 0.1f64..0.9, u in 0.0f64..1.0) {
        let bar = Modulus::power(alpha).unwrap();
        let up = bar.upgrade(0.25).unwrap();
        let t = 10f64.powf(-6.0 + 5.0 * u);
        prop_assert!(up.eval(t) >= bar.eval(t) * (1.0 - 1e-9));
        let (a, b, c) = (up.eval(t / 1.5), up.eval(t), up.eval(t * 1.5));
        // Concavity on a geometric triple: b lies above the chord through a and c.
        let chord = a + (c - a) * (t - t / 1.5) / (t * 1.5 - t / 1.5);
        prop_assert!(b >= chord - 1e-9 * b);
    }

    #[test]
    fn rate_fit_recovers_pure_power(s in 0.1f64..0.99, scale in 0.1f64..10.0) {
        let dom = unit_interval();
        let grid = Grid::for_domain(&dom, 1.0 / 64.0, 0).unwrap();
        let mut res = solve_dirichlet(&line(0.5), &dom, &grid, &|_| 1.0, None).unwrap();
        res.u = res.depth.iter().map(|&d| scale * d.powf(s)).collect();
        res.s = s;
        let (p, cc) = boundary_rate_fit(&res, 4.0 / 64.0, 0.5).unwrap();
        prop_assert!((p - s).abs() < 1e-3);
        prop_assert!((cc / scale - 1.0).abs() < 1e-3);
        let (q, _) = boundary_rate_fit_corrected(&res, 4.0 / 64.0, 0.5).unwrap();
        prop_assert!((q - s).abs() < 1e-3);
    }

    #[test]
    fn linear_fit_is_exact_on_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let x: Vec<f64> = (0..10).map(|k| k as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (p, q) = linear_fit(&x, &y);
        prop_assert!((p - a).abs() < 1e-10 && (q - b).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solve_is_positive_for_nonnegative_data(s in 0.15f64..0.95, c in prop::array::uniform3(0.0f64..2.0)) {
        let dom = unit_interval();
        let grid = Grid::for_domain(&dom, 1.0 / 32.0, 0).unwrap();
        let res = solve_dirichlet(&line(s), &dom, &grid, &bumps(c), None).unwrap();
        prop_assert!(res.u.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn solve_map_is_linear(s in 0.15f64..0.95, c1 in prop::array::uniform3(-2.0f64..2.0), c2 in prop::array::uniform3(-2.0f64..2.0), a in -3.0f64..3.0) {
        let dom = unit_interval();
        let grid = Grid::for_domain(&dom, 1.0 / 32.0, 0).unwrap();
        let spec = line(s);
        let sys = discretize(&spec, &dom, &grid).unwrap();
        let (f1, f2) = (bumps(c1), bumps(c2));
        let u1 = solve_system(&sys, &dom, &f1, None, &spec).unwrap().u;
        let u2 = solve_system(&sys, &dom, &f2, None, &spec).unwrap().u;
        let u = solve_system(&sys, &dom, &|x: &[f64]| a * f1(x) + f2(x), None, &spec).unwrap().u;
        for k in 0..u.len() {
            prop_assert!((u[k] - a * u1[k] - u2[k]).abs() < 1e-10 * (1.0 + u[k].abs()));
        }
    }

    #[test]
    fn discrete_comparison(s in 0.15f64..0.95, c in prop::array::uniform3(-1.0f64..1.0), gap in prop::array::uniform3(0.0f64..1.0), g in 0.0f64..1.0) {
        let dom = unit_interval();
        let grid = Grid::for_domain(&dom, 1.0 / 32.0, 2).unwrap();
        let spec = line(s);
        let sys = discretize(&spec, &dom, &grid).unwrap();
        let lower = bumps(c);
        let upper = {
            let b = bumps(gap);
            move |x: &[f64]| lower(x) + b(x)
        };
        let ext = move |_: &[f64]| g;
        let v = solve_system(&sys, &dom, &bumps(c), None, &spec).unwrap().u;
        let w = solve_system(&sys, &dom, &upper, Some(&ext), &spec).unwrap().u;
        prop_assert!(v.iter().zip(&w).all(|(a, b)| *a <= *b + 1e-10));
    }

    #[test]
    fn assembled_rows_have_m_matrix_signs(s in 0.1f64..0.95) {
        let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let grid = Grid::for_domain(&dom, 1.0 / 8.0, 0).unwrap();
        let spec = OperatorSpec::new(s, SphericalMeasure::uniform(2, 1.0).unwrap(), true).unwrap();
        let sys = discretize(&spec, &dom, &grid).unwrap();
        let n = sys.interior.len();
        prop_assert!(sys.stencil.lattice_row_sum.abs() < 1e-10);
        for i in 0..n {
            let row = &sys.matrix[i * n..(i + 1) * n];
            prop_assert!(row[i] > 0.0);
            let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).sum();
            prop_assert!(row.iter().enumerate().all(|(j, v)| j == i || *v <= 0.0));
            prop_assert!(row[i] + off >= 0.0);
        }
    }
}
