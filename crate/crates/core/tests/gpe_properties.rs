use std::f64::consts::PI;

use osm_core::fem::Grid;
use osm_core::gpe::*;
use osm_core::linalg::C64;
use proptest::prelude::*;

fn cfg(beta: f64, omega: f64) -> GpeConfig {
    GpeConfig { beta, omega, gamma_x: 1.0, gamma_y: 1.0, t_final: 1.0, dt: 0.1 }
}

fn square(h: f64) -> Grid {
    Grid::with_spacing(-6.0, 6.0, -6.0, 6.0, h, h).unwrap()
}

fn ground(g: &Grid) -> Vec<C64> {
    g.map_nodes(|x, y| C64::new((-(x * x + y * y) / 2.0).exp() / PI.sqrt(), 0.0))
}

#[test]
fn harmonic_ground_state_energy_converges_to_one() {
    let mut errs = Vec::new();
    for h in [0.25, 0.125] {
        let g = square(h);
        let (e, mu) = energy_and_mu(&g, &ground(&g), &cfg(0.0, 0.0)).unwrap();
        assert_eq!(e, mu);
        errs.push((e - 1.0).abs());
    }
    assert!(errs[1] < 1e-2);
    // Second order in h.
    assert!((3.5..4.5).contains(&(errs[0] / errs[1])), "{errs:?}");
}

#[test]
fn real_field_carries_no_angular_momentum() {
    let g = square(0.25);
    let phi = g.map_nodes(|x, y| C64::new((-(x * x + 2.0 * y * y)).exp() * (1.0 + x), 0.0));
    let a = energy_and_mu(&g, &phi, &cfg(2.0, 0.0)).unwrap();
    let b = energy_and_mu(&g, &phi, &cfg(2.0, 0.7)).unwrap();
    assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
}

/// `(x + iy) e^{−r²/2}` is an `L_z` eigenfunction with eigenvalue 1, so the
/// rotation term shifts the energy by `−ω ∫|φ|²`.
#[test]
fn vortex_rotation_term_is_omega_times_mass() {
    let g = square(0.0625);
    let phi = g.map_nodes(|x, y| C64::new(x, y) * (-(x * x + y * y) / 2.0).exp() / PI.sqrt());
    let m = mass(&g, &phi).unwrap();
    let omega = 0.4;
    let e0 = energy_and_mu(&g, &phi, &cfg(0.0, 0.0)).unwrap().0;
    let e1 = energy_and_mu(&g, &phi, &cfg(0.0, omega)).unwrap().0;
    assert!(((e0 - e1) - omega * m).abs() < 1e-2 * omega * m, "{} vs {}", e0 - e1, omega * m);
}

#[test]
fn nonlinear_term_enters_mu_twice() {
    let g = square(0.25);
    let phi = ground(&g);
    let (e0, _) = energy_and_mu(&g, &phi, &cfg(0.0, 0.0)).unwrap();
    let (e, mu) = energy_and_mu(&g, &phi, &cfg(3.0, 0.0)).unwrap();
    // Continuum ∫|φ|⁴ = 1/(2π).
    let quartic = 2.0 * (e - e0) / 3.0;
    assert!((quartic - 1.0 / (2.0 * PI)).abs() < 1e-2);
    assert!((mu - e - 1.5 * quartic).abs() < 1e-12);
}

#[test]
fn step_potential_is_static_for_isotropic_trap() {
    let g = Grid::new(-2.0, 2.0, -1.0, 1.0, 9, 5).unwrap();
    let c = GpeConfig { omega: 0.9, ..cfg(0.0, 0.0) };
    assert!(c.static_potential());
    let (a, b) = (step_potential(&g, &c, 1), step_potential(&g, &c, 17));
    assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-14));
}

#[test]
fn normalize_gives_unit_mass() {
    let g = square(0.25);
    let u: Vec<C64> = ground(&g).iter().map(|v| v * 3.0).collect();
    let (n, norm) = normalize(&g, &u).unwrap();
    assert!((mass(&g, &n).unwrap() - 1.0).abs() < 1e-14);
    assert!((norm - 3.0 * mass(&g, &ground(&g)).unwrap().sqrt()).abs() < 1e-12);
}

#[test]
fn reconstruction_outside_zone_is_rejected() {
    let g = square(0.5);
    let target = Grid::new(-6.0, 6.0, -6.0, 6.0, 5, 5).unwrap();
    assert!(reconstruct_valid_zone(&ground(&g), &g, 0.3, 0.4, &target).is_err());
}

proptest! {
    #[test]
    fn rotation_is_orthogonal(t in -100.0f64..100.0, omega in -2.0f64..2.0) {
        let a = rotation_matrix(t, omega);
        for i in 0..2 {
            for j in 0..2 {
                let ata = a[0][i] * a[0][j] + a[1][i] * a[1][j];
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ata - id).abs() < 1e-14);
            }
        }
        prop_assert!((a[0][0] * a[1][1] - a[0][1] * a[1][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn isotropic_potential_is_rotation_invariant(t in 0.0f64..10.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let c = GpeConfig { gamma_x: 1.5, gamma_y: 1.5, omega: 0.4, ..cfg(0.0, 0.0) };
        prop_assert!((transformed_potential(t, x, y, &c) - c.trap(x, y)).abs() < 1e-12);
    }

    #[test]
    fn valid_zone_grid_stays_inside(h in 0.05f64..1.0, w in 1.0f64..20.0, hgt in 1.0f64..20.0) {
        let g = Grid::new(-w, w, -hgt, hgt, 5, 5).unwrap();
        let zone = ValidZone::of(&g);
        let z = zone.grid(h).unwrap();
        prop_assert!(z.dx <= h + 1e-12 && z.dy <= h + 1e-12);
        for k in 0..z.node_count() {
            let (x, y) = z.coords(k);
            prop_assert!(zone.contains(x, y));
        }
    }
}
