//! Non-overlapping strip decomposition and the interface fixed-point iteration.
//!
//! Subdomain `k` (0-based) receives fluxes `l_k` on its left and `r_k` on its
//! right side; `l_0` and `r_{N−1}` are identically zero. The interface vector
//! stores `(r_0, l_1, r_1, l_2, …, l_{N−1})`, one trace of length `n_y` each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, OsmError, Result};
use crate::fem::{assemble_mass, Grid, PotentialField, Sides};
use crate::linalg::{diff_norm2, dot, KrylovConfig, C64, ZERO};
use crate::precond::{BlockOperator, PrecondMode};
use crate::subdomain::{
    advance_time, FixedPointConfig, LocalProblem, LocalSetup, LocalSolution, PadeSystem,
};
use crate::transmission::TransmissionSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub global: Grid,
    pub subgrids: Vec<Grid>,
    /// Global column index of each subdomain's first node column.
    pub offsets: Vec<usize>,
}

/// Splits `global` into `n` strips of equal width. `(n_x − 1)` must be a
/// multiple of `n`.
pub fn decompose(global: &Grid, n: usize) -> Result<Decomposition> {
    if n == 0 {
        return Err(OsmError::Config("need at least one subdomain".into()));
    }
    let cells = global.nx - 1;
    if cells % n != 0 {
        let best = nearest_divisor(cells, n);
        return Err(OsmError::Config(format!(
            "{cells} cells along x cannot be split into {n} equal subdomains; nearest valid count is {best}"
        )));
    }
    decompose_cells(global, &vec![cells / n; n])
}

fn nearest_divisor(cells: usize, n: usize) -> usize {
    (1..=cells)
        .filter(|d| cells % d == 0)
        .min_by_key(|&d| (d as i64 - n as i64).abs() * 2 + (d > n) as i64)
        .unwrap_or(1)
}

/// Splits `global` into strips with the given numbers of cells.
pub fn decompose_cells(global: &Grid, cells: &[usize]) -> Result<Decomposition> {
    let total: usize = cells.iter().sum();
    if cells.is_empty() || cells.contains(&0) || total != global.nx - 1 {
        return Err(OsmError::Config(format!(
            "strip cell counts {cells:?} must be positive and sum to {}",
            global.nx - 1
        )));
    }
    let equal = cells.iter().all(|&c| c == cells[0]);
    let n = cells.len();
    let mut subgrids = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut start = 0usize;
    let width = global.x_right - global.x_left;
    let edge = |k: usize, idx: usize| -> f64 {
        if equal {
            if k == n {
                global.x_right
            } else {
                global.x_left + width * k as f64 / n as f64
            }
        } else {
            global.x(idx)
        }
    };
    for (k, &c) in cells.iter().enumerate() {
        let a = edge(k, start);
        let b = edge(k + 1, start + c);
        subgrids.push(global.with_x_range(a, b, c + 1)?);
        offsets.push(start);
        start += c;
    }
    Ok(Decomposition {
        global: *global,
        subgrids,
        offsets,
    })
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.subgrids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgrids.is_empty()
    }

    pub fn is_equal(&self) -> bool {
        self.subgrids.iter().all(|g| g.nx == self.subgrids[0].nx)
    }

    /// Restricts a global nodal field to every subdomain.
    pub fn scatter<T: Copy>(&self, global: &[T]) -> Result<Vec<Vec<T>>> {
        check_len("Decomposition::scatter", self.global.node_count(), global.len())?;
        Ok(self
            .subgrids
            .iter()
            .zip(&self.offsets)
            .map(|(g, &off)| {
                let mut out = Vec::with_capacity(g.node_count());
                for j in 0..g.ny {
                    let row = j * self.global.nx + off;
                    out.extend_from_slice(&global[row..row + g.nx]);
                }
                out
            })
            .collect())
    }

    /// Assembles subdomain fields into a global one, averaging the two
    /// copies of each interface line.
    pub fn glue(&self, fields: &[Vec<C64>]) -> Result<Vec<C64>> {
        check_len("Decomposition::glue", self.len(), fields.len())?;
        let gx = self.global.nx;
        let mut out = vec![ZERO; self.global.node_count()];
        let mut count = vec![0u8; self.global.node_count()];
        for ((g, &off), f) in self.subgrids.iter().zip(&self.offsets).zip(fields) {
            check_len("Decomposition::glue field", g.node_count(), f.len())?;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let k = j * gx + off + i;
                    out[k] += f[j * g.nx + i];
                    count[k] += 1;
                }
            }
        }
        for (o, c) in out.iter_mut().zip(count) {
            if c > 1 {
                *o /= c as f64;
            }
        }
        Ok(out)
    }
}

/// Incoming boundary fluxes of all subdomains.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceVector {
    n_sub: usize,
    ny: usize,
    data: Vec<C64>,
}

impl InterfaceVector {
    pub fn zeros(n_sub: usize, ny: usize) -> Self {
        Self {
            n_sub,
            ny,
            data: vec![ZERO; Self::len_for(n_sub, ny)],
        }
    }

    fn len_for(n_sub: usize, ny: usize) -> usize {
        2 * n_sub.saturating_sub(1) * ny
    }

    pub fn from_vec(n_sub: usize, ny: usize, data: Vec<C64>) -> Result<Self> {
        check_len("InterfaceVector", Self::len_for(n_sub, ny), data.len())?;
        Ok(Self { n_sub, ny, data })
    }

    /// Complex entries with real and imaginary parts uniform on `[−1, 1]`.
    pub fn random(n_sub: usize, ny: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..Self::len_for(n_sub, ny))
            .map(|_| C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
            .collect();
        Self { n_sub, ny, data }
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Offset of `l_k` (requires `k ≥ 1`).
    pub fn l_offset(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k < self.n_sub);
        (2 * k - 1) * self.ny
    }

    /// Offset of `r_k` (requires `k ≤ N − 2`).
    pub fn r_offset(&self, k: usize) -> usize {
        debug_assert!(k + 1 < self.n_sub);
        2 * k * self.ny
    }

    pub fn l(&self, k: usize) -> Option<&[C64]> {
        (k >= 1 && k < self.n_sub).then(|| {
            let o = self.l_offset(k);
            &self.data[o..o + self.ny]
        })
    }

    pub fn r(&self, k: usize) -> Option<&[C64]> {
        (k + 1 < self.n_sub).then(|| {
            let o = self.r_offset(k);
            &self.data[o..o + self.ny]
        })
    }

    pub fn l_mut(&mut self, k: usize) -> Option<&mut [C64]> {
        if k >= 1 && k < self.n_sub {
            let o = self.l_offset(k);
            Some(&mut self.data[o..o + self.ny])
        } else {
            None
        }
    }

    pub fn r_mut(&mut self, k: usize) -> Option<&mut [C64]> {
        if k + 1 < self.n_sub {
            let o = self.r_offset(k);
            Some(&mut self.data[o..o + self.ny])
        } else {
            None
        }
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Zero,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Classical,
    Preconditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// One task per subdomain on the rayon pool; exchange and reductions
    /// stay serial, so results match the sequential mode bit for bit.
    Parallel,
}

/// Boundary treatment of the two outer vertical sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OuterBoundary {
    /// Same operator as on the interfaces, with zero data.
    #[default]
    Transmission,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct SchwarzConfig {
    /// Stop when `‖g^{k+1} − g^k‖₂` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: InitMode,
    pub algorithm: Algorithm,
    pub execution: Execution,
    /// Reuse the converged interface vector of the previous step.
    pub warm_start: bool,
    pub krylov: KrylovConfig,
    pub fixed_point: FixedPointConfig,
    pub precond_mode: PrecondMode,
}

impl Default for SchwarzConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1000,
            init: InitMode::Zero,
            algorithm: Algorithm::Classical,
            execution: Execution::Sequential,
            warm_start: true,
            krylov: KrylovConfig::default(),
            fixed_point: FixedPointConfig::default(),
            precond_mode: PrecondMode::Auto,
        }
    }
}

/// Global problem definition shared by every subdomain.
#[derive(Debug, Clone)]
pub struct DomainProblem {
    pub grid: Grid,
    pub dt: f64,
    pub laplace_coefficient: f64,
    pub spec: TransmissionSpec,
    pub outer_boundary: OuterBoundary,
    pub pade_system: PadeSystem,
    /// Global nodal potential and nonlinearity.
    pub potential: PotentialField,
}

/// State of a run between time steps; enough to restart identically.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub step: usize,
    pub time: f64,
    /// `u_n` on each subdomain.
    pub fields: Vec<Vec<C64>>,
    /// Converged interface vector of the last step.
    pub interface: Option<InterfaceVector>,
}

#[derive(Debug, Clone)]
pub struct TimeStepResult {
    pub fields: Vec<Vec<C64>>,
    pub interface: InterfaceVector,
    /// Update norms, one per iteration.
    pub history: Vec<f64>,
    pub solutions: Vec<LocalSolution>,
}

/// Per-step convergence record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceHistory {
    pub steps: Vec<Vec<f64>>,
}

impl ConvergenceHistory {
    /// Iterations used at each time step.
    pub fn iterations(&self) -> Vec<usize> {
        self.steps.iter().map(Vec::len).collect()
    }
}

pub struct SchwarzSolver {
    problem: DomainProblem,
    decomposition: Decomposition,
    problems: Vec<LocalProblem>,
    config: SchwarzConfig,
    preconditioner: Option<BlockOperator>,
}

impl SchwarzSolver {
    pub fn new(problem: DomainProblem, n_sub: usize, config: SchwarzConfig) -> Result<Self> {
        let decomposition = decompose(&problem.grid, n_sub)?;
        Self::with_decomposition(problem, decomposition, config)
    }

    pub fn with_decomposition(
        problem: DomainProblem,
        decomposition: Decomposition,
        config: SchwarzConfig,
    ) -> Result<Self> {
        if !(config.tolerance > 0.0) || config.max_iterations == 0 {
            return Err(OsmError::Config("Schwarz tolerance and iteration cap must be positive".into()));
        }
        check_len("DomainProblem potential", problem.grid.node_count(), problem.potential.values.len())?;
        let potentials = decomposition.scatter(&problem.potential.values)?;
        let n = decomposition.len();
        let build = |k: usize| -> Result<LocalProblem> {
            let setup = local_setup(&problem, &decomposition, k);
            let pot = PotentialField {
                values: potentials[k].clone(),
                nonlinearity: problem.potential.nonlinearity.clone(),
            };
            LocalProblem::new(setup, pot).map_err(|e| e.in_subdomain(k))
        };
        let problems: Vec<LocalProblem> = match config.execution {
            Execution::Sequential => (0..n).map(build).collect::<Result<_>>()?,
            Execution::Parallel => (0..n).into_par_iter().map(build).collect::<Result<_>>()?,
        };
        let mut solver = Self {
            problem,
            decomposition,
            problems,
            config,
            preconditioner: None,
        };
        if solver.config.algorithm == Algorithm::Preconditioned && n > 1 {
            solver.preconditioner = Some(solver.build_preconditioner()?);
        }
        Ok(solver)
    }

    fn build_preconditioner(&self) -> Result<BlockOperator> {
        BlockOperator::build(
            &self.problem,
            &self.decomposition,
            self.config.precond_mode,
            self.config.execution,
        )
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn problems(&self) -> &[LocalProblem] {
        &self.problems
    }

    pub fn problem(&self) -> &DomainProblem {
        &self.problem
    }

    pub fn config(&self) -> &SchwarzConfig {
        &self.config
    }

    pub fn preconditioner(&self) -> Option<&BlockOperator> {
        self.preconditioner.as_ref()
    }

    /// Installs a preconditioner built elsewhere (e.g. reused across runs).
    pub fn set_preconditioner(&mut self, p: Option<BlockOperator>) {
        self.preconditioner = p;
    }

    pub fn n_sub(&self) -> usize {
        self.decomposition.len()
    }

    pub fn ny(&self) -> usize {
        self.problem.grid.ny
    }

    /// Replaces the global nodal potential on every subdomain.
    pub fn set_potential(&mut self, global: &[f64]) -> Result<()> {
        let parts = self.decomposition.scatter(global)?;
        let update = |(k, (p, w)): (usize, (&mut LocalProblem, Vec<f64>))| {
            p.set_potential(w).map_err(|e| e.in_subdomain(k))
        };
        match self.config.execution {
            Execution::Sequential => self
                .problems
                .iter_mut()
                .zip(parts)
                .enumerate()
                .try_for_each(update)?,
            Execution::Parallel => self
                .problems
                .par_iter_mut()
                .zip(parts)
                .enumerate()
                .try_for_each(update)?,
        }
        self.problem.potential.values = global.to_vec();
        Ok(())
    }

    pub fn initial_interface(&self) -> InterfaceVector {
        match self.config.init {
            InitMode::Zero => InterfaceVector::zeros(self.n_sub(), self.ny()),
            InitMode::Random { seed } => InterfaceVector::random(self.n_sub(), self.ny(), seed),
        }
    }

    fn local_solves(&self, g: &InterfaceVector, h: &[Vec<C64>]) -> Result<Vec<(LocalSolution, Vec<C64>, Vec<C64>)>> {
        check_len("classical_step fields", self.n_sub(), h.len())?;
        let zero = vec![ZERO; self.ny()];
        let fp = &self.config.fixed_point;
        let solve = |k: usize| -> Result<(LocalSolution, Vec<C64>, Vec<C64>)> {
            let p = &self.problems[k];
            let l = g.l(k).unwrap_or(&zero);
            let r = g.r(k).unwrap_or(&zero);
            let sol = p.solve(&h[k], l, r, fp).map_err(|e| e.in_subdomain(k))?;
            let (lo, ro) = p.outgoing_fluxes(&sol, l, r).map_err(|e| e.in_subdomain(k))?;
            Ok((sol, lo, ro))
        };
        match self.config.execution {
            Execution::Sequential => (0..self.n_sub()).map(solve).collect(),
            Execution::Parallel => (0..self.n_sub()).into_par_iter().map(solve).collect(),
        }
    }

    /// One application of the interface map `g ↦ R_h(g)`.
    pub fn classical_step(
        &self,
        g: &InterfaceVector,
        h: &[Vec<C64>],
    ) -> Result<(InterfaceVector, Vec<LocalSolution>)> {
        check_len("classical_step interface", InterfaceVector::len_for(self.n_sub(), self.ny()), g.len())?;
        let results = self.local_solves(g, h)?;
        let n = self.n_sub();
        let mut next = InterfaceVector::zeros(n, self.ny());
        let mut sols = Vec::with_capacity(n);
        for (k, (sol, lo, ro)) in results.into_iter().enumerate() {
            if let Some(dst) = k.checked_sub(1).and_then(|km| next.r_mut(km)) {
                dst.copy_from_slice(&lo);
            }
            if let Some(dst) = next.l_mut(k + 1) {
                dst.copy_from_slice(&ro);
            }
            sols.push(sol);
        }
        Ok((next, sols))
    }

    /// `g − P⁻¹(g − R_h(g))`.
    pub fn preconditioned_step(
        &self,
        g: &InterfaceVector,
        h: &[Vec<C64>],
    ) -> Result<(InterfaceVector, Vec<LocalSolution>)> {
        let p = self
            .preconditioner
            .as_ref()
            .ok_or_else(|| OsmError::Config("preconditioner not built".into()))?;
        let (rg, sols) = self.classical_step(g, h)?;
        let residual: Vec<C64> = g.as_slice().iter().zip(rg.as_slice()).map(|(a, b)| a - b).collect();
        let corr = p.apply_inverse(&residual, &self.config.krylov)?;
        let next: Vec<C64> = g.as_slice().iter().zip(&corr).map(|(a, c)| a - c).collect();
        Ok((InterfaceVector::from_vec(self.n_sub(), self.ny(), next)?, sols))
    }

    /// Iterates to convergence on one time step and advances `u`.
    pub fn run_time_step(
        &self,
        h: &[Vec<C64>],
        g_init: InterfaceVector,
        time_step: usize,
    ) -> Result<TimeStepResult> {
        if self.n_sub() == 1 {
            let (_, sols) = self.classical_step(&g_init, h)?;
            return self.finish(h, g_init, Vec::new(), sols);
        }
        let mut g = g_init;
        let mut history = Vec::new();
        loop {
            let (next, sols) = match self.config.algorithm {
                Algorithm::Classical => self.classical_step(&g, h)?,
                Algorithm::Preconditioned => self.preconditioned_step(&g, h)?,
            };
            let update = diff_norm2(next.as_slice(), g.as_slice());
            history.push(update);
            g = next;
            if update < self.config.tolerance {
                return self.finish(h, g, history, sols);
            }
            if history.len() >= self.config.max_iterations || !update.is_finite() {
                return Err(OsmError::SchwarzNotConverged { time_step, history });
            }
        }
    }

    fn finish(
        &self,
        h: &[Vec<C64>],
        interface: InterfaceVector,
        history: Vec<f64>,
        solutions: Vec<LocalSolution>,
    ) -> Result<TimeStepResult> {
        let fields = h
            .iter()
            .zip(&solutions)
            .map(|(u, s)| advance_time(u, &s.v))
            .collect::<Result<_>>()?;
        Ok(TimeStepResult {
            fields,
            interface,
            history,
            solutions,
        })
    }

    pub fn initial_state(&self, u0: &[C64]) -> Result<SimulationState> {
        Ok(SimulationState {
            step: 0,
            time: 0.0,
            fields: self.decomposition.scatter(u0)?,
            interface: None,
        })
    }

    /// Advances `state` by one time step; returns the update-norm history.
    pub fn advance(&self, state: &mut SimulationState) -> Result<Vec<f64>> {
        let step = state.step + 1;
        let g0 = match (&state.interface, self.config.warm_start) {
            (Some(g), true) => g.clone(),
            _ => self.initial_interface(),
        };
        let out = self
            .run_time_step(&state.fields, g0, step)
            .map_err(|e| e.at_step(step))?;
        state.step = step;
        state.time = step as f64 * self.problem.dt;
        state.fields = out.fields;
        state.interface = Some(out.interface);
        Ok(out.history)
    }

    /// Runs `steps` time steps from `state`, calling `observe` after each.
    pub fn run_simulation(
        &self,
        state: &mut SimulationState,
        steps: usize,
        mut observe: impl FnMut(&SimulationState, &[f64]) -> Result<()>,
    ) -> Result<ConvergenceHistory> {
        let mut hist = ConvergenceHistory::default();
        for _ in 0..steps {
            let h = self.advance(state)?;
            observe(state, &h)?;
            hist.steps.push(h);
        }
        Ok(hist)
    }

    /// Global field with averaged interface lines.
    pub fn glue(&self, fields: &[Vec<C64>]) -> Result<Vec<C64>> {
        self.decomposition.glue(fields)
    }

    /// `uᴴ M u` on the global grid.
    pub fn mass_norm_sq(&self, fields: &[Vec<C64>]) -> Result<f64> {
        let u = self.glue(fields)?;
        mass_norm_sq(&self.problem.grid, &u)
    }
}

pub(crate) fn local_setup(problem: &DomainProblem, d: &Decomposition, k: usize) -> LocalSetup {
    let n = d.len();
    let outer_tc = problem.outer_boundary == OuterBoundary::Transmission;
    let sides = Sides {
        left: k > 0 || outer_tc,
        right: k + 1 < n || outer_tc,
    };
    LocalSetup {
        grid: d.subgrids[k],
        dt: problem.dt,
        laplace_coefficient: problem.laplace_coefficient,
        spec: problem.spec.clone(),
        transmission_sides: sides,
        pade_system: problem.pade_system,
    }
}

/// `uᴴ M u` with the Q1 mass matrix of `grid`.
pub fn mass_norm_sq(grid: &Grid, u: &[C64]) -> Result<f64> {
    let m = assemble_mass(grid);
    let mu = m.mul_vec(u)?;
    Ok(dot(u, &mu).re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize) -> Grid {
        Grid::new(0.0, 1.0, 0.0, 1.0, nx, 3).unwrap()
    }

    #[test]
    fn decompose_nine_nodes_in_two() {
        let d = decompose(&grid(9), 2).unwrap();
        assert_eq!(d.subgrids[0].nx, 5);
        assert_eq!(d.subgrids[1].nx, 5);
        assert_eq!(d.subgrids[0].x_right, d.subgrids[1].x_left);
    }

    #[test]
    fn indivisible_reports_nearest() {
        match decompose(&grid(10), 4) {
            Err(OsmError::Config(msg)) => assert!(msg.contains("nearest valid count is 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_subdomain_has_empty_interface() {
        let d = decompose(&grid(9), 1).unwrap();
        assert_eq!(d.len(), 1);
        assert!(InterfaceVector::zeros(1, 3).is_empty());
    }

    #[test]
    fn interface_layout() {
        let mut g = InterfaceVector::zeros(3, 2);
        assert_eq!(g.len(), 8);
        g.r_mut(0).unwrap().fill(C64::new(1.0, 0.0));
        g.l_mut(2).unwrap().fill(C64::new(4.0, 0.0));
        assert_eq!(g.as_slice()[0], C64::new(1.0, 0.0));
        assert_eq!(g.as_slice()[7], C64::new(4.0, 0.0));
        assert!(g.l(0).is_none());
        assert!(g.r(2).is_none());
    }

    #[test]
    fn scatter_glue_round_trip() {
        let g = grid(9);
        let d = decompose(&g, 4).unwrap();
        let u: Vec<C64> = (0..g.node_count()).map(|k| C64::new(k as f64, 1.0)).collect();
        let parts = d.scatter(&u).unwrap();
        assert_eq!(d.glue(&parts).unwrap(), u);
    }
}
