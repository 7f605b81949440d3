use std::f64::consts::FRAC_PI_4;

use osm_core::fem::*;
use osm_core::linalg::{diff_norm_inf, norm_inf, DenseMatrix, C64};
use osm_core::subdomain::*;
use osm_core::transmission::{pade_coefficients, TransmissionSpec};

fn grid() -> Grid {
    Grid::with_spacing(0.0, 1.0, -1.0, 1.0, 1.0 / 8.0, 1.0 / 8.0).unwrap()
}

fn setup(spec: TransmissionSpec, sides: Sides, pade_system: PadeSystem) -> LocalSetup {
    LocalSetup {
        grid: grid(),
        dt: 0.05,
        laplace_coefficient: 1.0,
        spec,
        transmission_sides: sides,
        pade_system,
    }
}

fn gaussian(g: &Grid, amp: f64) -> Vec<C64> {
    g.map_nodes(|x, y| C64::from_polar(amp * (-(x - 0.5).powi(2) - y * y).exp(), 0.3 * x))
}

fn trace_data(ny: usize, phase: f64) -> Vec<C64> {
    (0..ny).map(|j| C64::from_polar(0.1 + 0.01 * j as f64, phase * j as f64)).collect()
}

#[test]
fn rotated_square_root_approximation_converges() {
    let zs = [C64::new(0.5, 0.0), C64::new(4.0, 0.0), C64::new(50.0, 3.0), C64::new(2.0, -1.0)];
    let mut prev = f64::INFINITY;
    for m in [2, 4, 8, 16] {
        let c = pade_coefficients(m, FRAC_PI_4).unwrap();
        let err = zs
            .iter()
            .map(|z| {
                let approx: C64 = (1..=m).map(|s| c.a[s] * z / (z + c.d[s])).sum();
                (approx - z.sqrt()).norm() / z.norm().sqrt()
            })
            .fold(0.0, f64::max);
        assert!(err < prev, "m={m}: {err} not below {prev}");
        prev = err;
    }
    // Convergence is slow near z = 0, which dominates the worst case.
    assert!(prev < 1e-3, "m=16 error {prev}");
}

/// Robin solve against a dense system assembled here from the FEM pieces.
#[test]
fn robin_solve_matches_dense_assembly() {
    let p = 7.5;
    let s = setup(TransmissionSpec::robin(p).unwrap(), Sides::BOTH, PadeSystem::Block);
    let g = s.grid;
    let w = g.map_nodes(|x, y| 0.3 * x - y * y);
    let lp = LocalProblem::new(s.clone(), PotentialField::new(&g, w.clone(), Nonlinearity::None).unwrap()).unwrap();
    let h = gaussian(&g, 1.0);
    let (l, r) = (trace_data(g.ny, 0.2), trace_data(g.ny, -0.4));
    let v = lp.solve_linear(&h, &l, &r).unwrap().v;

    let i2dt = C64::new(0.0, 2.0 / s.dt);
    let one = C64::new(1.0, 0.0);
    let mgamma = assemble_boundary_mass(&g, Sides::BOTH).unwrap();
    let k = assemble_mass(&g)
        .add_scaled(i2dt, &assemble_stiffness(&g), -one)
        .unwrap()
        .add_scaled(one, &assemble_generalized_mass(&g, &w).unwrap(), one)
        .unwrap()
        .add_scaled(one, &mgamma, C64::new(0.0, p))
        .unwrap();
    // Boundary data embedded as nodal fields, weighted by the line mass.
    let mut data = vec![C64::new(0.0, 0.0); g.node_count()];
    for j in 0..g.ny {
        data[g.index(0, j)] = l[j];
        data[g.index(g.nx - 1, j)] = r[j];
    }
    let mh = assemble_mass(&g).mul_vec(&h).unwrap();
    let load = mgamma.mul_vec(&data).unwrap();
    let rhs: Vec<C64> = mh.iter().zip(&load).map(|(a, b)| i2dt * a - b).collect();
    let expect = DenseMatrix::from_csr(&k).lu().unwrap().solve(&rhs).unwrap();
    assert!(diff_norm_inf(&v, &expect) < 1e-12 * norm_inf(&expect));
}

#[test]
fn block_and_condensed_pade_agree() {
    let g = grid();
    let h = gaussian(&g, 1.0);
    let (l, r) = (trace_data(g.ny, 0.2), trace_data(g.ny, 0.7));
    let solve = |sys| {
        let s = setup(TransmissionSpec::pade(4, FRAC_PI_4).unwrap(), Sides::BOTH, sys);
        let lp = LocalProblem::new(s, PotentialField::free(&g)).unwrap();
        let sol = lp.solve_linear(&h, &l, &r).unwrap();
        let out = lp.outgoing_fluxes(&sol, &l, &r).unwrap();
        (sol.v, out)
    };
    let (vb, ob) = solve(PadeSystem::Block);
    let (vc, oc) = solve(PadeSystem::Condensed);
    assert!(diff_norm_inf(&vb, &vc) < 1e-11);
    assert!(diff_norm_inf(&ob.0, &oc.0) < 1e-10);
    assert!(diff_norm_inf(&ob.1, &oc.1) < 1e-10);
}

#[test]
fn linear_problem_needs_one_picard_iteration() {
    let g = grid();
    let s = setup(TransmissionSpec::robin(5.0).unwrap(), Sides::LEFT, PadeSystem::Block);
    let lp = LocalProblem::new(s, PotentialField::free(&g)).unwrap();
    let z = vec![C64::new(0.0, 0.0); g.ny];
    let sol = lp.solve(&gaussian(&g, 1.0), &z, &z, &FixedPointConfig::default()).unwrap();
    assert_eq!(sol.fixed_point_iterations, 1);
}

/// The converged Picard iterate solves the linear problem with `W = f(v)`.
#[test]
fn picard_fixed_point_is_self_consistent() {
    let g = grid();
    let h = gaussian(&g, 0.5);
    let (l, r) = (trace_data(g.ny, 0.1), trace_data(g.ny, 0.3));
    for spec in [TransmissionSpec::robin(5.0).unwrap(), TransmissionSpec::pade(2, FRAC_PI_4).unwrap()] {
        let s = setup(spec, Sides::BOTH, PadeSystem::Block);
        let nl = Nonlinearity::Cubic { strength: 1.0 };
        let lp = LocalProblem::new(s.clone(), PotentialField::new(&g, vec![0.0; g.node_count()], nl.clone()).unwrap()).unwrap();
        let sol = lp.solve(&h, &l, &r, &FixedPointConfig::default()).unwrap();
        assert!(sol.fixed_point_iterations <= 12, "{} Picard iterations", sol.fixed_point_iterations);
        let frozen = PotentialField::new(&g, nl.nodal(&sol.v), Nonlinearity::None).unwrap();
        let check = LocalProblem::new(s, frozen).unwrap().solve_linear(&h, &l, &r).unwrap();
        assert!(diff_norm_inf(&sol.v, &check.v) < 1e-10, "{}", diff_norm_inf(&sol.v, &check.v));
    }
}

#[test]
fn advance_time_extrapolates() {
    let u = advance_time(&[C64::new(1.0, 1.0)], &[C64::new(2.0, 0.0)]).unwrap();
    assert_eq!(u, vec![C64::new(3.0, -1.0)]);
    assert!(advance_time(&[C64::new(1.0, 0.0)], &[]).is_err());
}
