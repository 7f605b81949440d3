//! Rotating Bose–Einstein condensates.
//!
//! In the rotating Lagrangian frame `(x, y)ᵀ = A(t)(x̃, ỹ)ᵀ` the angular
//! momentum term disappears and the Gross–Pitaevskii equation becomes an
//! NLS with Laplace coefficient ½, a time-dependent potential `V_t` and
//! `f(u) = −β|u|²`. It is then solved with the ordinary Schwarz machinery.

use crate::error::{OsmError, Result};
use crate::fem::{assemble_generalized_mass, assemble_mass, assemble_stiffness, Grid, Nonlinearity, PotentialField};
use crate::linalg::{dot, C64, I, ZERO};
use crate::schwarz::{
    ConvergenceHistory, DomainProblem, OuterBoundary, SchwarzConfig, SchwarzSolver, SimulationState,
};
use crate::subdomain::PadeSystem;
use crate::transmission::TransmissionSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpeConfig {
    pub beta: f64,
    pub omega: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub t_final: f64,
    pub dt: f64,
}

impl GpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final >= self.dt) {
            return Err(OsmError::Config(format!(
                "GPE needs dt > 0 and T >= dt, got dt={} T={}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }

    /// Number of steps, `T / Δt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// True when `V_t` does not depend on `t`.
    pub fn static_potential(&self) -> bool {
        self.omega == 0.0 || self.gamma_x == self.gamma_y
    }

    /// Harmonic trap `½(γ_x² x² + γ_y² y²)` in the laboratory frame.
    pub fn trap(&self, x: f64, y: f64) -> f64 {
        0.5 * (self.gamma_x.powi(2) * x * x + self.gamma_y.powi(2) * y * y)
    }
}

/// `A(t) = [[cos ωt, sin ωt], [−sin ωt, cos ωt]]`.
pub fn rotation_matrix(t: f64, omega: f64) -> [[f64; 2]; 2] {
    let (s, c) = (omega * t).sin_cos();
    [[c, s], [-s, c]]
}

/// `V_t(t, x̃, ỹ) = V(A(t)(x̃, ỹ))`.
pub fn transformed_potential(t: f64, xt: f64, yt: f64, cfg: &GpeConfig) -> f64 {
    let a = rotation_matrix(t, cfg.omega);
    let x = a[0][0] * xt + a[0][1] * yt;
    let y = a[1][0] * xt + a[1][1] * yt;
    cfg.trap(x, y)
}

/// Nodal `W_n = −(V_t(t_n) + V_t(t_{n−1}))/2` for the step ending at `t_n = n Δt`.
pub fn step_potential(grid: &Grid, cfg: &GpeConfig, n: usize) -> Vec<f64> {
    let t1 = n as f64 * cfg.dt;
    let t0 = t1 - cfg.dt;
    let mut out = Vec::with_capacity(grid.node_count());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = (grid.x(i), grid.y(j));
            out.push(-0.5 * (transformed_potential(t1, x, y, cfg) + transformed_potential(t0, x, y, cfg)));
        }
    }
    out
}

/// Discretization choices for a GPE run.
#[derive(Debug, Clone)]
pub struct GpeSetup {
    pub grid: Grid,
    pub spec: TransmissionSpec,
    pub outer_boundary: OuterBoundary,
    pub pade_system: PadeSystem,
    pub n_sub: usize,
    pub schwarz: SchwarzConfig,
}

/// The transformed problem at the first time step.
pub fn gpe_problem(cfg: &GpeConfig, setup: &GpeSetup) -> Result<DomainProblem> {
    cfg.validate()?;
    let g = setup.grid;
    Ok(DomainProblem {
        grid: g,
        dt: cfg.dt,
        laplace_coefficient: 0.5,
        spec: setup.spec.clone(),
        outer_boundary: setup.outer_boundary,
        pade_system: setup.pade_system,
        potential: PotentialField::new(
            &g,
            step_potential(&g, cfg, 1),
            Nonlinearity::Cubic { strength: -cfg.beta },
        )?,
    })
}

/// Runs the transformed GPE from `u0` up to `T`. The preconditioner, if
/// any, is built once from the free operator; local matrices are rebuilt
/// each step only when `V_t` moves. `observe` sees the state after every
/// step.
pub fn gpe_run(
    cfg: &GpeConfig,
    setup: &GpeSetup,
    u0: &[C64],
    mut observe: impl FnMut(&SimulationState, &[f64]) -> Result<()>,
) -> Result<(SimulationState, ConvergenceHistory)> {
    let problem = gpe_problem(cfg, setup)?;
    let mut solver = SchwarzSolver::new(problem, setup.n_sub, setup.schwarz.clone())?;
    let mut state = solver.initial_state(u0)?;
    let mut history = ConvergenceHistory::default();
    for n in 1..=cfg.steps() {
        if n > 1 && !cfg.static_potential() {
            solver.set_potential(&step_potential(&setup.grid, cfg, n))?;
        }
        let h = solver.advance(&mut state)?;
        observe(&state, &h)?;
        history.steps.push(h);
    }
    Ok((state, history))
}

/// Region where the laboratory-frame solution can be recovered at all
/// times: the rectangle shrunk by `√2`, intersected with the largest disc
/// centred at the origin inside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidZone {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub radius: f64,
}

impl ValidZone {
    pub fn of(grid: &Grid) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            x_min: grid.x_left * s,
            x_max: grid.x_right * s,
            y_min: grid.y_bottom * s,
            y_max: grid.y_top * s,
            radius: grid.x_left.abs().min(grid.x_right).min(grid.y_bottom.abs()).min(grid.y_top),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x)
            && (self.y_min..=self.y_max).contains(&y)
            && x.hypot(y) <= self.radius
    }

    /// Uniform grid of spacing at most `h` on the largest rectangle inside
    /// the zone with the zone's aspect, scaled about the origin.
    pub fn grid(&self, h: f64) -> Result<Grid> {
        if !(h > 0.0) {
            return Err(OsmError::Config(format!("zone spacing must be positive, got {h}")));
        }
        let corner = [self.x_min, self.x_max]
            .iter()
            .flat_map(|&x| [self.y_min, self.y_max].map(|y| x.hypot(y)))
            .fold(0.0, f64::max);
        // Shrink slightly so corners stay inside the closed disc after rounding.
        let s = (self.radius / corner).min(1.0) * (1.0 - 1e-12);
        let (x0, x1, y0, y1) = (s * self.x_min, s * self.x_max, s * self.y_min, s * self.y_max);
        let nx = ((x1 - x0) / h).ceil() as usize + 1;
        let ny = ((y1 - y0) / h).ceil() as usize + 1;
        Grid::new(x0, x1, y0, y1, nx.max(2), ny.max(2))
    }
}

/// Bilinear interpolation of a nodal field at `(x, y)`.
pub fn interpolate(grid: &Grid, u: &[C64], x: f64, y: f64) -> Result<C64> {
    if !grid.contains(x, y) {
        return Err(OsmError::Domain { x, y });
    }
    let locate = |s: f64, lo: f64, h: f64, n: usize| {
        let c = ((s - lo) / h).floor().clamp(0.0, (n - 2) as f64);
        (c as usize, ((s - lo) / h - c).clamp(0.0, 1.0))
    };
    let (i, tx) = locate(x, grid.x_left, grid.dx, grid.nx);
    let (j, ty) = locate(y, grid.y_bottom, grid.dy, grid.ny);
    let at = |a: usize, b: usize| u[grid.index(a, b)];
    Ok(at(i, j) * ((1.0 - tx) * (1.0 - ty))
        + at(i + 1, j) * (tx * (1.0 - ty))
        + at(i, j + 1) * ((1.0 - tx) * ty)
        + at(i + 1, j + 1) * (tx * ty))
}

/// Recovers `u(t, x, y) = ũ(t, A(t)ᵀ(x, y))` on every node of `target`.
pub fn reconstruct_valid_zone(
    ut: &[C64],
    grid: &Grid,
    t: f64,
    omega: f64,
    target: &Grid,
) -> Result<Vec<C64>> {
    crate::error::check_len("reconstruct_valid_zone field", grid.node_count(), ut.len())?;
    let zone = ValidZone::of(grid);
    let a = rotation_matrix(t, omega);
    let mut out = Vec::with_capacity(target.node_count());
    for j in 0..target.ny {
        for i in 0..target.nx {
            let (x, y) = (target.x(i), target.y(j));
            if !zone.contains(x, y) {
                return Err(OsmError::Domain { x, y });
            }
            let xt = a[0][0] * x + a[1][0] * y;
            let yt = a[0][1] * x + a[1][1] * y;
            out.push(interpolate(grid, ut, xt, yt)?);
        }
    }
    Ok(out)
}

/// `∫|u|²` with the Q1 mass matrix.
pub fn mass(grid: &Grid, u: &[C64]) -> Result<f64> {
    crate::schwarz::mass_norm_sq(grid, u)
}

/// Rescales `u` to unit mass; returns the field and the original norm.
pub fn normalize(grid: &Grid, u: &[C64]) -> Result<(Vec<C64>, f64)> {
    let norm = mass(grid, u)?.sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(OsmError::Normalization(format!("field norm is {norm}")));
    }
    Ok((u.iter().map(|v| v / norm).collect(), norm))
}

/// `L_z φ = −i(x ∂_y φ − y ∂_x φ)` by centred differences, one-sided on the
/// boundary.
fn angular_momentum(grid: &Grid, u: &[C64]) -> Vec<C64> {
    let d = |k: usize, n: usize, h: f64, f: &dyn Fn(usize) -> C64| -> C64 {
        if k == 0 {
            (f(1) - f(0)) / h
        } else if k == n - 1 {
            (f(n - 1) - f(n - 2)) / h
        } else {
            (f(k + 1) - f(k - 1)) / (2.0 * h)
        }
    };
    let mut out = vec![ZERO; grid.node_count()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let ux = d(i, grid.nx, grid.dx, &|a| u[grid.index(a, j)]);
            let uy = d(j, grid.ny, grid.dy, &|b| u[grid.index(i, b)]);
            out[grid.index(i, j)] = -I * (grid.x(i) * uy - grid.y(j) * ux);
        }
    }
    out
}

/// Energy `E = ∫ ½|∇φ|² + V|φ|² + (β/2)|φ|⁴ − ω φ̄ L_z φ` and chemical
/// potential `μ = E + (β/2)∫|φ|⁴`, by Q1 quadrature in the laboratory frame.
pub fn energy_and_mu(grid: &Grid, phi: &[C64], cfg: &GpeConfig) -> Result<(f64, f64)> {
    energy_and_mu_rotating(grid, phi, cfg, 0.0)
}

/// Same functional for a rotating-frame field `ũ(t)`: gradients and `L_z`
/// are invariant under rotation, so only the potential changes to `V_t`.
pub fn energy_and_mu_rotating(grid: &Grid, phi: &[C64], cfg: &GpeConfig, t: f64) -> Result<(f64, f64)> {
    crate::error::check_len("energy_and_mu field", grid.node_count(), phi.len())?;
    let quad = |m: &crate::linalg::CsrMatrix, v: &[C64]| -> Result<C64> { Ok(dot(phi, &m.mul_vec(v)?)) };
    let kinetic = quad(&assemble_stiffness(grid), phi)?.re;
    let v = grid.map_nodes(|x, y| transformed_potential(t, x, y, cfg));
    let potential = quad(&assemble_generalized_mass(grid, &v)?, phi)?.re;
    let density: Vec<f64> = phi.iter().map(|p| p.norm_sqr()).collect();
    let quartic = quad(&assemble_generalized_mass(grid, &density)?, phi)?.re;
    let rotation = if cfg.omega == 0.0 {
        0.0
    } else {
        quad(&assemble_mass(grid), &angular_momentum(grid, phi))?.re
    };
    let e = 0.5 * kinetic + potential + 0.5 * cfg.beta * quartic - cfg.omega * rotation;
    Ok((e, e + 0.5 * cfg.beta * quartic))
}
