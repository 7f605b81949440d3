//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any fails. The fine-mesh iteration-count run
//! is skipped unless `--ignored` or `--include-ignored` is passed.

use std::f64::consts::{FRAC_PI_4, PI};
use std::time::Instant;

use osm_core::fem::{assemble_generalized_mass, assemble_mass, assemble_stiffness, Grid, Nonlinearity, PotentialField};
use osm_core::gpe::{gpe_run, mass, reconstruct_valid_zone, rotation_matrix, GpeConfig, GpeSetup, ValidZone};
use osm_core::linalg::{diff_norm_inf, norm_inf, LuFactorization, C64, ZERO};
use osm_core::precond::{BlockOperator, PrecondMode};
use osm_core::schwarz::{
    decompose, Algorithm, DomainProblem, Execution, InitMode, InterfaceVector, OuterBoundary, SchwarzConfig,
    SchwarzSolver,
};
use osm_core::subdomain::PadeSystem;
use osm_core::transmission::TransmissionSpec;
use osm_harness::config::{AlgorithmName, RunConfig, Transmission};
use osm_harness::experiments::first_step;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn moving_gaussian(g: &Grid) -> Vec<C64> {
    g.map_nodes(|x, y| (-x * x - y * y).exp() * C64::from_polar(1.0, -0.5 * x))
}

fn real_gaussian(g: &Grid) -> Vec<C64> {
    g.map_nodes(|x, y| C64::new((-x * x - y * y).exp(), 0.0))
}

fn nls_problem(g: Grid, spec: TransmissionSpec, nl: Nonlinearity, outer: OuterBoundary) -> DomainProblem {
    DomainProblem {
        potential: PotentialField::new(&g, vec![0.0; g.node_count()], nl).unwrap(),
        grid: g,
        dt: 0.01,
        laplace_coefficient: 1.0,
        spec,
        outer_boundary: outer,
        pade_system: PadeSystem::Block,
    }
}

fn specs() -> Vec<(&'static str, TransmissionSpec)> {
    vec![
        ("robin p=10", TransmissionSpec::robin(10.0).unwrap()),
        ("pade m=2", TransmissionSpec::pade(2, FRAC_PI_4).unwrap()),
    ]
}

fn small_grid() -> Grid {
    Grid::with_spacing(-4.0, 4.0, -2.0, 2.0, 1.0 / 16.0, 1.0 / 8.0).unwrap()
}

/// Multidomain and monodomain trajectories agree.
fn oracle_equivalence() -> Outcome {
    let g = small_grid();
    let u0 = real_gaussian(&g);
    let mut worst: f64 = 0.0;
    for (_, spec) in specs() {
        let p = nls_problem(g, spec, Nonlinearity::Cubic { strength: 1.0 }, OuterBoundary::Transmission);
        let mono = SchwarzSolver::new(p.clone(), 1, SchwarzConfig::default()).map_err(fail)?;
        let multi = SchwarzSolver::new(p, 4, SchwarzConfig::default()).map_err(fail)?;
        let mut a = mono.initial_state(&u0).map_err(fail)?;
        let mut b = multi.initial_state(&u0).map_err(fail)?;
        for _ in 0..5 {
            mono.advance(&mut a).map_err(fail)?;
            multi.advance(&mut b).map_err(fail)?;
            let ua = mono.glue(&a.fields).map_err(fail)?;
            let ub = multi.glue(&b.fields).map_err(fail)?;
            worst = worst.max(diff_norm_inf(&ua, &ub));
        }
    }
    check(worst <= 1e-8, format!("max |u_N=4 − u_mono| over 5 steps, Robin and Padé = {worst:.2e} (≤ 1e-8)"))
}

/// Free problem: the preconditioned iteration converges in one step.
fn free_one_shot() -> Outcome {
    let g = small_grid();
    let u0 = real_gaussian(&g);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, spec) in specs() {
        for n in [2, 4, 8] {
            let cfg = SchwarzConfig {
                algorithm: Algorithm::Preconditioned,
                init: InitMode::Random { seed: 7 },
                ..Default::default()
            };
            let s = SchwarzSolver::new(nls_problem(g, spec.clone(), Nonlinearity::None, OuterBoundary::Transmission), n, cfg)
                .map_err(fail)?;
            let mut st = s.initial_state(&u0).map_err(fail)?;
            let h = s.advance(&mut st).map_err(fail)?;
            let second = h.get(1).copied().unwrap_or(f64::INFINITY);
            worst = worst.max(second);
            lines.push(format!("{name} N={n}: {second:.1e}"));
        }
    }
    check(worst <= 1e-9, format!("update norm at iteration 2 ≤ 1e-9; {}", lines.join(", ")))
}

/// Interior subdomains of equal strips have identical blocks.
fn block_equality() -> Outcome {
    let g = Grid::with_spacing(-3.0, 3.0, -1.0, 1.0, 1.0 / 8.0, 1.0 / 8.0).unwrap();
    let d = decompose(&g, 6).map_err(fail)?;
    let mut worst: f64 = 0.0;
    let cases = [
        TransmissionSpec::robin(10.0).unwrap(),
        TransmissionSpec::pade(1, FRAC_PI_4).unwrap(),
        TransmissionSpec::pade(4, FRAC_PI_4).unwrap(),
    ];
    for spec in cases {
        let p = nls_problem(g, spec, Nonlinearity::None, OuterBoundary::Transmission);
        let op = BlockOperator::build(&p, &d, PrecondMode::Individual, Execution::Sequential).map_err(fail)?;
        let reference = &op.blocks()[1];
        for b in op.blocks() {
            let pairs = [(&b.x1, &reference.x1), (&b.x2, &reference.x2), (&b.x3, &reference.x3), (&b.x4, &reference.x4)];
            for (x, r) in pairs {
                if let (Some(x), Some(r)) = (x, r) {
                    worst = worst.max(x.max_abs_diff(r));
                }
            }
        }
    }
    check(worst <= 1e-12, format!("N=6, Robin and Padé m∈{{1,4}}: max block deviation {worst:.2e} (≤ 1e-12)"))
}

/// The free interface map is affine with linear part `L_h`.
fn affine_consistency() -> Outcome {
    let g = small_grid();
    let u0 = real_gaussian(&g);
    let mut worst: f64 = 0.0;
    for (_, spec) in specs() {
        let p = nls_problem(g, spec, Nonlinearity::None, OuterBoundary::Transmission);
        let cfg = SchwarzConfig { algorithm: Algorithm::Preconditioned, ..Default::default() };
        let s = SchwarzSolver::new(p, 4, cfg).map_err(fail)?;
        let lh = s.preconditioner().ok_or("no preconditioner")?;
        let h = s.initial_state(&u0).map_err(fail)?.fields;
        let r = |g: &InterfaceVector| s.classical_step(g, &h).map(|x| x.0.into_vec()).map_err(fail);
        let d = r(&InterfaceVector::zeros(4, g.ny))?;
        for seed in 0..5u64 {
            let g1 = InterfaceVector::random(4, g.ny, 2 * seed);
            let g2 = InterfaceVector::random(4, g.ny, 2 * seed + 1);
            let (a, b) = (C64::new(0.7, -0.3), C64::new(-1.1, 0.4));
            let mix: Vec<C64> = g1.as_slice().iter().zip(g2.as_slice()).map(|(x, y)| a * x + b * y).collect();
            let mix = InterfaceVector::from_vec(4, g.ny, mix).map_err(fail)?;
            let (r1, r2, rm) = (r(&g1)?, r(&g2)?, r(&mix)?);
            // R(a g1 + b g2) − d = a (R(g1) − d) + b (R(g2) − d)
            for k in 0..d.len() {
                let lhs = rm[k] - d[k];
                let rhs = a * (r1[k] - d[k]) + b * (r2[k] - d[k]);
                worst = worst.max((lhs - rhs).norm());
            }
            // R(g1) − d = L_h g1
            let mut l = vec![ZERO; d.len()];
            lh.apply_l(g1.as_slice(), &mut l).map_err(fail)?;
            for k in 0..d.len() {
                worst = worst.max((r1[k] - d[k] - l[k]).norm());
            }
        }
    }
    check(worst <= 1e-11, format!("5 random pairs, Robin and Padé: max defect {worst:.2e} (≤ 1e-11)"))
}

fn count_config(dx: f64) -> RunConfig {
    RunConfig {
        dx,
        transmission: Transmission::Pade { m: 6, theta: FRAC_PI_4, sum_from_one: false },
        ..RunConfig::default()
    }
}

fn spread(v: &[usize]) -> usize {
    v.iter().max().unwrap() - v.iter().min().unwrap()
}

/// First-step counts are independent of N and the preconditioner halves them.
fn iteration_counts() -> Outcome {
    let start = Instant::now();
    let mut classical = Vec::new();
    let mut pc = Vec::new();
    for n in [2, 4, 8] {
        for alg in [AlgorithmName::Classical, AlgorithmName::Preconditioned] {
            let c = RunConfig { n_sub: n, algorithm: alg, ..count_config(1.0 / 32.0) };
            let it = first_step(&c).map_err(fail)?.iterations;
            match alg {
                AlgorithmName::Classical => classical.push(it),
                AlgorithmName::Preconditioned => pc.push(it),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let halved = classical.iter().zip(&pc).all(|(c, p)| 2 * p <= *c);
    check(
        spread(&classical) <= 2 && spread(&pc) <= 2 && halved && secs <= 300.0,
        format!("N=2,4,8: classical {classical:?}, preconditioned {pc:?}, {secs:.0} s (≤ 300 s)"),
    )
}

/// Fine-mesh first-step counts for N=2.
fn iteration_counts_fine() -> Outcome {
    let mut counts = Vec::new();
    for alg in [AlgorithmName::Classical, AlgorithmName::Preconditioned] {
        let c = RunConfig { n_sub: 2, algorithm: alg, ..count_config(1.0 / 128.0) };
        counts.push(first_step(&c).map_err(fail)?.iterations);
    }
    let (c, p) = (counts[0] as i64, counts[1] as i64);
    check(
        (c - 18).abs() <= 3 && (p - 6).abs() <= 2,
        format!("Δx=1/128, N=2: classical {c} (18±3), preconditioned {p} (6±2)"),
    )
}

/// Robin parameter sweep.
fn p_sweep() -> Outcome {
    let ps: Vec<f64> = (1..=10).map(|k| 5.0 * k as f64).collect();
    let mut classical = Vec::new();
    let mut pc = Vec::new();
    for &p in &ps {
        for alg in [AlgorithmName::Classical, AlgorithmName::Preconditioned] {
            let c = RunConfig {
                dx: 1.0 / 8.0,
                n_sub: 2,
                algorithm: alg,
                transmission: Transmission::Robin { p },
                ..RunConfig::default()
            };
            let it = first_step(&c).map_err(fail)?.iterations;
            match alg {
                AlgorithmName::Classical => classical.push(it),
                AlgorithmName::Preconditioned => pc.push(it),
            }
        }
    }
    let min = *classical.iter().min().unwrap();
    let interior = min < classical[0] && min < *classical.last().unwrap();
    let at = ps[classical.iter().position(|&c| c == min).unwrap()];
    check(
        interior && spread(&pc) <= 2,
        format!("p=5..50: classical {classical:?} (minimum {min} at p={at}), preconditioned {pc:?}"),
    )
}

/// Mass is conserved by the scheme.
fn mass_conservation() -> Outcome {
    let g = small_grid();
    let u0 = moving_gaussian(&g);
    let p = nls_problem(g, TransmissionSpec::robin(10.0).unwrap(), Nonlinearity::Cubic { strength: 1.0 }, OuterBoundary::Neumann);
    let s = SchwarzSolver::new(p, 1, SchwarzConfig::default()).map_err(fail)?;
    let m0 = mass(&g, &u0).map_err(fail)?;
    let mut st = s.initial_state(&u0).map_err(fail)?;
    let mut nls: f64 = 0.0;
    s.run_simulation(&mut st, 20, |st, _| {
        nls = nls.max((s.mass_norm_sq(&st.fields)? - m0).abs() / m0);
        Ok(())
    })
    .map_err(fail)?;

    let g = Grid::with_spacing(-16.0, 16.0, -16.0, 16.0, 0.25, 0.25).unwrap();
    let u0 = g.map_nodes(|x, y| C64::new((-(x * x + 2.0 * y * y) / 2.0).exp() / PI.powf(0.25), 0.0));
    let cfg = GpeConfig { beta: 10.15, omega: 0.4, gamma_x: 1.0, gamma_y: 2.0, t_final: 0.01, dt: 1e-4 };
    let setup = GpeSetup {
        grid: g,
        spec: TransmissionSpec::robin(180.0).unwrap(),
        outer_boundary: OuterBoundary::Neumann,
        pade_system: PadeSystem::Block,
        n_sub: 2,
        schwarz: SchwarzConfig { algorithm: Algorithm::Preconditioned, ..Default::default() },
    };
    let d = decompose(&g, 2).map_err(fail)?;
    let m0 = mass(&g, &u0).map_err(fail)?;
    let mut gpe: f64 = 0.0;
    let (_, hist) = gpe_run(&cfg, &setup, &u0, |st, _| {
        gpe = gpe.max((mass(&g, &d.glue(&st.fields)?)? - m0).abs() / m0);
        Ok(())
    })
    .map_err(fail)?;
    check(
        nls <= 1e-8 && gpe <= 1e-6,
        format!(
            "NLS monodomain Neumann 20 steps: {nls:.1e} (≤ 1e-8); GPE ω=0.4 β=10.15 N=2, {} steps: {gpe:.1e} (≤ 1e-6)",
            hist.steps.len()
        ),
    )
}

/// Inverse iteration for the lowest eigenpair of `(½S + M_V) φ = μ M φ`.
fn discrete_ground_state(g: &Grid) -> Result<(Vec<C64>, f64), String> {
    let m = assemble_mass(g);
    let v = g.map_nodes(|x, y| 0.5 * (x * x + y * y));
    let h = assemble_stiffness(g)
        .scale(C64::new(0.5, 0.0))
        .add_scaled(C64::new(1.0, 0.0), &assemble_generalized_mass(g, &v).map_err(fail)?, C64::new(1.0, 0.0))
        .map_err(fail)?;
    let shifted = h.add_scaled(C64::new(1.0, 0.0), &m, C64::new(-0.9, 0.0)).map_err(fail)?;
    let lu = LuFactorization::new(&shifted).map_err(fail)?;
    let mut x = real_gaussian(g);
    for _ in 0..60 {
        x = lu.solve(&m.mul_vec(&x).map_err(fail)?).map_err(fail)?;
        let n = mass(g, &x).map_err(fail)?.sqrt();
        x.iter_mut().for_each(|v| *v /= n);
    }
    let hx = h.mul_vec(&x).map_err(fail)?;
    let mu: f64 = x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum();
    Ok((x, mu))
}

/// ω=0 GPE equals the plain NLS; harmonic ground state rotates in phase
/// with second-order accuracy in time.
fn gpe_correctness() -> Outcome {
    let g = Grid::with_spacing(-4.0, 4.0, -4.0, 4.0, 1.0 / 8.0, 1.0 / 8.0).unwrap();
    let cfg = GpeConfig { beta: 10.15, omega: 0.0, gamma_x: 1.0, gamma_y: 2.0, t_final: 0.05, dt: 0.01 };
    let spec = TransmissionSpec::robin(20.0).unwrap();
    let setup = GpeSetup {
        grid: g,
        spec: spec.clone(),
        outer_boundary: OuterBoundary::Transmission,
        pade_system: PadeSystem::Block,
        n_sub: 2,
        schwarz: SchwarzConfig::default(),
    };
    let u0 = g.map_nodes(|x, y| C64::new((-(x * x + 2.0 * y * y) / 2.0).exp() / PI.powf(0.25), 0.0));
    let (a, _) = gpe_run(&cfg, &setup, &u0, |_, _| Ok(())).map_err(fail)?;
    let plain = DomainProblem {
        grid: g,
        dt: cfg.dt,
        laplace_coefficient: 0.5,
        spec,
        outer_boundary: OuterBoundary::Transmission,
        pade_system: PadeSystem::Block,
        potential: PotentialField::new(
            &g,
            g.map_nodes(|x, y| -0.5 * (x * x + 4.0 * y * y)),
            Nonlinearity::Cubic { strength: -cfg.beta },
        )
        .map_err(fail)?,
    };
    let s = SchwarzSolver::new(plain, 2, SchwarzConfig::default()).map_err(fail)?;
    let mut b = s.initial_state(&u0).map_err(fail)?;
    s.run_simulation(&mut b, cfg.steps(), |_, _| Ok(())).map_err(fail)?;
    let same = diff_norm_inf(&s.glue(&a.fields).map_err(fail)?, &s.glue(&b.fields).map_err(fail)?);

    let g = Grid::with_spacing(-6.0, 6.0, -6.0, 6.0, 1.0 / 8.0, 1.0 / 8.0).unwrap();
    let (phi_h, mu_h) = discrete_ground_state(&g)?;
    let phi_g = g.map_nodes(|x, y| C64::new((-(x * x + y * y) / 2.0).exp() / PI.sqrt(), 0.0));
    let sign = if phi_h[g.node_count() / 2].re < 0.0 { -1.0 } else { 1.0 };
    let shape = phi_h.iter().zip(&phi_g).map(|(a, b)| (a * sign - b).norm()).fold(0.0, f64::max);
    let mut errors = Vec::new();
    for dt in [0.2, 0.1, 0.05] {
        let c = GpeConfig { beta: 0.0, omega: 0.0, gamma_x: 1.0, gamma_y: 1.0, t_final: 2.0, dt };
        let setup = GpeSetup {
            grid: g,
            spec: TransmissionSpec::robin(5.0).unwrap(),
            outer_boundary: OuterBoundary::Neumann,
            pade_system: PadeSystem::Block,
            n_sub: 1,
            schwarz: SchwarzConfig::default(),
        };
        let (st, _) = gpe_run(&c, &setup, &phi_h, |_, _| Ok(())).map_err(fail)?;
        let phase = C64::from_polar(1.0, -mu_h * c.t_final);
        let exact: Vec<C64> = phi_h.iter().map(|p| p * phase).collect();
        errors.push(diff_norm_inf(&st.fields[0], &exact) / norm_inf(&exact));
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    check(
        same <= 1e-10 && (mu_h - 1.0).abs() <= 1e-2 && shape <= 1e-2 && ratios.iter().all(|r| (3.6..=4.4).contains(r)),
        format!(
            "ω=0 vs plain NLS {same:.1e} (≤ 1e-10); μ_h={mu_h:.5}, |φ_h−φ_g|∞={shape:.1e}; errors {:.2e}/{:.2e}/{:.2e}, ratios {:.2}, {:.2} (≈4)",
            errors[0], errors[1], errors[2], ratios[0], ratios[1]
        ),
    )
}

/// Reconstruction on the valid zone converges at second order and never
/// looks outside the domain.
fn valid_zone_interpolation() -> Outcome {
    let field = |x: f64, y: f64| (-(x * x + 2.0 * y * y) / 4.0).exp() * C64::from_polar(1.0, 0.3 * x);
    let (omega, t) = (0.4, 1.3);
    let a = rotation_matrix(t, omega);
    let coarse = Grid::with_spacing(-4.0, 4.0, -4.0, 4.0, 0.25, 0.25).unwrap();
    let target = ValidZone::of(&coarse).grid(0.1).map_err(fail)?;
    let exact = target.map_nodes(|x, y| field(a[0][0] * x + a[1][0] * y, a[0][1] * x + a[1][1] * y));
    let mut errors = Vec::new();
    for h in [0.25, 0.125, 0.0625] {
        let g = Grid::with_spacing(-4.0, 4.0, -4.0, 4.0, h, h).unwrap();
        let ut = g.map_nodes(field);
        let lab = reconstruct_valid_zone(&ut, &g, t, omega, &target).map_err(fail)?;
        errors.push(diff_norm_inf(&lab, &exact));
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    // Every lookup point of every zone point at any time stays in Ω.
    let zone = ValidZone::of(&coarse);
    let mut inside = true;
    for k in 0..200 {
        let t = 0.173 * k as f64;
        let r = rotation_matrix(t, 0.9);
        for (x, y) in (0..target.node_count()).map(|n| target.coords(n)) {
            inside &= zone.contains(x, y) && coarse.contains(r[0][0] * x + r[1][0] * y, r[0][1] * x + r[1][1] * y);
        }
    }
    check(
        ratios.iter().all(|r| (3.5..=4.5).contains(r)) && inside,
        format!(
            "errors {:.2e}/{:.2e}/{:.2e}, ratios {:.2}, {:.2} (≈4); all lookups inside Ω: {inside}",
            errors[0], errors[1], errors[2], ratios[0], ratios[1]
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let include_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let only_ignored = args.iter().any(|a| a == "--ignored");
    let filters: Vec<&String> = args.iter().skip(1).filter(|a| !a.starts_with("--")).collect();
    let criteria: [(&str, fn() -> Outcome, bool); 10] = [
        ("oracle_equivalence", oracle_equivalence, false),
        ("free_one_shot", free_one_shot, false),
        ("block_equality", block_equality, false),
        ("affine_consistency", affine_consistency, false),
        ("iteration_counts", iteration_counts, false),
        ("iteration_counts_fine_mesh", iteration_counts_fine, true),
        ("p_sweep", p_sweep, false),
        ("mass_conservation", mass_conservation, false),
        ("gpe_correctness", gpe_correctness, false),
        ("valid_zone_interpolation", valid_zone_interpolation, false),
    ];
    let mut failed = 0;
    for (name, run, ignored) in criteria {
        let selected = filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
        if !selected || (ignored && !include_ignored) || (!ignored && only_ignored) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
