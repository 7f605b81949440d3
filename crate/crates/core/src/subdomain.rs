//! Local semi-discrete problem on one strip.
//!
//! With `v = (u_n + u_{n−1})/2` each time step solves
//! `(2i/Δt) v + c Δv + W v + f(v) v = (2i/Δt) h` with `h = u_{n−1}`, a
//! transmission condition on the selected vertical sides and homogeneous
//! Neumann conditions everywhere else.

use crate::error::{check_len, OsmError, Result};
use crate::fem::{
    assemble_generalized_boundary_mass, assemble_generalized_mass, assemble_mass,
    assemble_stiffness, boundary_nodes, line_generalized_mass, line_mass, stacked_restriction,
    Grid, PotentialField, Side, Sides,
};
use crate::linalg::{
    diff_norm_inf, krylov_solve, CooBuilder, CsrMatrix, DenseLu, DenseMatrix, FnOperator,
    KrylovConfig, LinearOperator, LuFactorization, C64, I, ZERO,
};
use crate::transmission::{block_diagonal, build_pade_blocks, AuxiliaryTraces, PadeBlocks, TransmissionSpec};

/// Where the frozen nonlinearity enters the fixed-point systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonlinearForm {
    /// Volume term `M_{f(ζ)}` on the left for both conditions; Padé auxiliary
    /// equations carry `−G_{f(ζ)} φ^{q−1}` on the right.
    #[default]
    Consistent,
    /// Robin: boundary term `M^Γ_{f(ζ)}` on the left and no volume term.
    /// Padé: volume term `−M_{f(ζ)} ζ^{q−1}` and auxiliary terms on the right.
    Literal,
}

/// How each frozen fixed-point system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrozenSolve {
    /// GMRES preconditioned by the factorization of the linear operator,
    /// falling back to refactorization if it stalls.
    #[default]
    Krylov,
    Refactor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    /// Stop when `‖ζ^q − ζ^{q−1}‖∞` (auxiliary traces included) drops to this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub form: NonlinearForm,
    pub frozen_solve: FrozenSolve,
    /// Relative residual for Krylov solves of the frozen systems.
    pub inner_tolerance: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 100,
            form: NonlinearForm::Consistent,
            frozen_solve: FrozenSolve::Krylov,
            inner_tolerance: 1e-14,
        }
    }
}

/// Formulation used to solve Padé problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadeSystem {
    /// Volume and auxiliary unknowns solved together.
    #[default]
    Block,
    /// Auxiliary unknowns eliminated through dense `D_s⁻¹`.
    Condensed,
}

/// Static description of a local problem.
#[derive(Debug, Clone)]
pub struct LocalSetup {
    pub grid: Grid,
    pub dt: f64,
    /// `c` in front of the Laplacian (1 for NLS, ½ for GPE).
    pub laplace_coefficient: f64,
    pub spec: TransmissionSpec,
    /// Sides carrying the transmission condition; the others are Neumann.
    pub transmission_sides: Sides,
    pub pade_system: PadeSystem,
}

#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub v: Vec<C64>,
    pub aux: AuxiliaryTraces,
    pub fixed_point_iterations: usize,
}

/// Assembled and factorized local problem.
pub struct LocalProblem {
    setup: LocalSetup,
    potential: PotentialField,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    /// Line mass `G` on one side.
    gline: CsrMatrix,
    /// Stacked restriction onto the transmission sides.
    q: CsrMatrix,
    /// `Qᵀ G`: maps stacked traces to boundary load vectors.
    qt_g: CsrMatrix,
    pade: Option<PadeBlocks>,
    /// Dense `D_s` factorizations, condensed Padé only.
    d_lu: Vec<DenseLu>,
    system: CsrMatrix,
    lu: LuFactorization,
}

impl std::fmt::Debug for LocalProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalProblem")
            .field("grid", &self.setup.grid)
            .field("spec", &self.setup.spec)
            .field("unknowns", &self.system.nrows())
            .finish()
    }
}

impl LocalProblem {
    pub fn new(setup: LocalSetup, potential: PotentialField) -> Result<Self> {
        Self::build(setup, potential, None)
    }

    fn build(setup: LocalSetup, potential: PotentialField, ordering: Option<&[usize]>) -> Result<Self> {
        let g = setup.grid;
        check_len("LocalProblem potential", g.node_count(), potential.values.len())?;
        if !(setup.dt > 0.0) {
            return Err(OsmError::Config(format!("time step must be positive, got {}", setup.dt)));
        }
        let mass = assemble_mass(&g);
        let stiffness = assemble_stiffness(&g);
        let gline = line_mass(g.ny, g.dy);
        let sides = setup.transmission_sides;
        let q = stacked_restriction(&g, sides);
        let qt_g = block_diagonal(&vec![gline.clone(); sides.count()])
            .matmul(&q)?
            .transpose();

        let pade = match (&setup.spec, sides.is_empty()) {
            (TransmissionSpec::Pade { .. }, false) => Some(build_pade_blocks(
                &g,
                &setup.spec,
                &potential.values,
                setup.dt,
                setup.laplace_coefficient,
                sides,
            )?),
            _ => None,
        };
        let mut d_lu = Vec::new();
        if let (Some(p), PadeSystem::Condensed) = (&pade, setup.pade_system) {
            for d in &p.d {
                d_lu.push(DenseMatrix::from_csr(d).lu()?);
            }
        }

        let mut prob = Self {
            system: CsrMatrix::zeros(0, 0),
            lu: LuFactorization::new(&CsrMatrix::zeros(0, 0))?,
            setup,
            potential,
            mass,
            stiffness,
            gline,
            q,
            qt_g,
            pade,
            d_lu,
        };
        prob.system = prob.assemble_system()?;
        prob.lu = match ordering {
            Some(ord) if ord.len() == prob.system.nrows() => {
                LuFactorization::with_ordering(&prob.system, ord)?
            }
            _ => LuFactorization::new(&prob.system)?,
        };
        Ok(prob)
    }

    /// `A = (2i/Δt) M − c S + M_W`.
    pub fn a_matrix(&self) -> Result<CsrMatrix> {
        let s = &self.setup;
        let mw = assemble_generalized_mass(&s.grid, &self.potential.values)?;
        self.mass
            .add_scaled(C64::new(0.0, 2.0 / s.dt), &self.stiffness, C64::new(-s.laplace_coefficient, 0.0))?
            .add_scaled(C64::new(1.0, 0.0), &mw, C64::new(1.0, 0.0))
    }

    /// Boundary mass `M^Γ` on the transmission sides (zero if there are none).
    pub fn boundary_mass(&self) -> CsrMatrix {
        self.qt_g.matmul(&self.q).expect("restriction shapes agree")
    }

    fn assemble_system(&self) -> Result<CsrMatrix> {
        let a = self.a_matrix()?;
        let n = self.setup.grid.node_count();
        let k0 = a.add_scaled(C64::new(1.0, 0.0), &self.boundary_mass(), I * self.setup.spec.diagonal())?;
        let Some(p) = &self.pade else {
            return Ok(k0);
        };
        match self.setup.pade_system {
            PadeSystem::Block => {
                let t = self.q.nrows();
                let size = n + p.d.len() * t;
                let mut b = CooBuilder::with_capacity(size, size, k0.nnz() + 8 * p.d.len() * t);
                b.push_block(0, 0, C64::new(1.0, 0.0), &k0);
                for (s, (bs, ds)) in p.b.iter().zip(&p.d).enumerate() {
                    let off = n + s * t;
                    b.push_block(0, off, C64::new(1.0, 0.0), bs);
                    b.push_block(off, 0, C64::new(1.0, 0.0), &p.c);
                    b.push_block(off, off, C64::new(1.0, 0.0), ds);
                }
                Ok(b.build())
            }
            PadeSystem::Condensed => {
                // −Σ B_s D_s⁻¹ C = −Σ i a_s d_s Qᵀ (G D_s⁻¹ G) Q
                let t = self.q.nrows();
                let gblock = DenseMatrix::from_csr(&block_diagonal(&vec![self.gline.clone(); t / self.setup.grid.ny]));
                let mut h = DenseMatrix::zeros(t, t);
                for (lu, w) in self.d_lu.iter().zip(self.setup.spec.aux_weights()) {
                    let mut dinv_g = DenseMatrix::zeros(t, t);
                    for c in 0..t {
                        let mut col = gblock.column(c);
                        lu.solve_in_place(&mut col);
                        for r in 0..t {
                            dinv_g[(r, c)] = col[r];
                        }
                    }
                    let term = gblock.matmul(&dinv_g)?;
                    h = h.add_scaled(C64::new(1.0, 0.0), &term, -I * w)?;
                }
                let nodes = self.stacked_nodes();
                let mut b = CooBuilder::with_capacity(n, n, t * t);
                for r in 0..t {
                    for c in 0..t {
                        b.push(nodes[r], nodes[c], h[(r, c)]);
                    }
                }
                k0.add_scaled(C64::new(1.0, 0.0), &b.build(), C64::new(1.0, 0.0))
            }
        }
    }

    fn stacked_nodes(&self) -> Vec<usize> {
        self.setup
            .transmission_sides
            .iter()
            .flat_map(|s| boundary_nodes(&self.setup.grid, s))
            .collect()
    }

    pub fn setup(&self) -> &LocalSetup {
        &self.setup
    }

    pub fn grid(&self) -> &Grid {
        &self.setup.grid
    }

    pub fn spec(&self) -> &TransmissionSpec {
        &self.setup.spec
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Linear system matrix (including auxiliary unknowns in block mode).
    pub fn system_matrix(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn pade_blocks(&self) -> Option<&PadeBlocks> {
        self.pade.as_ref()
    }

    /// Replaces the nodal potential `W`, reassembling and refactorizing.
    pub fn set_potential(&mut self, values: Vec<f64>) -> Result<()> {
        check_len("set_potential", self.setup.grid.node_count(), values.len())?;
        if values == self.potential.values {
            return Ok(());
        }
        let potential = PotentialField {
            values,
            nonlinearity: self.potential.nonlinearity.clone(),
        };
        let ordering = self.lu.ordering().to_vec();
        *self = Self::build(self.setup.clone(), potential, Some(&ordering))?;
        Ok(())
    }

    /// Nodal trace of a volume field on one side.
    pub fn trace(&self, v: &[C64], side: Side) -> Vec<C64> {
        boundary_nodes(&self.setup.grid, side)
            .into_iter()
            .map(|k| v[k])
            .collect()
    }

    fn aux_len(&self) -> usize {
        self.pade.as_ref().map_or(0, |p| p.d.len() * self.q.nrows())
    }

    /// `(2i/Δt) M h − Qᵀ G (l; r)` restricted to the transmission sides.
    fn base_rhs(&self, h: &[C64], l: &[C64], r: &[C64]) -> Result<Vec<C64>> {
        let g = &self.setup.grid;
        check_len("local solve h", g.node_count(), h.len())?;
        check_len("local solve l", g.ny, l.len())?;
        check_len("local solve r", g.ny, r.len())?;
        let mut rhs = self.mass.mul_vec(h)?;
        let scale = C64::new(0.0, 2.0 / self.setup.dt);
        rhs.iter_mut().for_each(|x| *x *= scale);
        let mut stacked = Vec::with_capacity(self.q.nrows());
        for side in self.setup.transmission_sides.iter() {
            stacked.extend_from_slice(if side == Side::Left { l } else { r });
        }
        if !stacked.is_empty() {
            let load = self.qt_g.mul_vec(&stacked)?;
            for (x, b) in rhs.iter_mut().zip(load) {
                *x -= b;
            }
        }
        Ok(rhs)
    }

    fn unpack(&self, x: &[C64], iterations: usize) -> LocalSolution {
        let g = &self.setup.grid;
        let n = g.node_count();
        let sides = self.setup.transmission_sides;
        let m = self.setup.spec.aux_count();
        let mut aux = AuxiliaryTraces::zeros(if self.pade.is_some() { m } else { 0 }, g.ny, sides);
        if self.pade.is_some() {
            let t = self.q.nrows();
            for s in 0..m {
                for (k, side) in sides.iter().enumerate() {
                    let start = n + s * t + k * g.ny;
                    let phi = x[start..start + g.ny].to_vec();
                    match side {
                        Side::Left => aux.left[s] = phi,
                        Side::Right => aux.right[s] = phi,
                    }
                }
            }
        }
        LocalSolution {
            v: x[..n].to_vec(),
            aux,
            fixed_point_iterations: iterations,
        }
    }

    /// Solves `K x = (rhs_v; aux_rhs)` with the cached factorization.
    /// Returns the extended vector `(v; φ)`.
    fn solve_extended(&self, rhs_v: &[C64], aux_rhs: Option<&[C64]>) -> Result<Vec<C64>> {
        self.solve_with(&self.lu, rhs_v, aux_rhs)
    }

    fn is_condensed(&self) -> bool {
        self.pade.is_some() && self.setup.pade_system == PadeSystem::Condensed
    }

    fn solve_with(&self, lu: &LuFactorization, rhs_v: &[C64], aux_rhs: Option<&[C64]>) -> Result<Vec<C64>> {
        if self.is_condensed() {
            let mut top = self.condensed_rhs(rhs_v, aux_rhs)?;
            lu.solve_in_place(&mut top)?;
            return self.recover_condensed_aux(top, aux_rhs);
        }
        let mut x = rhs_v.to_vec();
        match aux_rhs {
            Some(e) => x.extend_from_slice(e),
            None => x.resize(rhs_v.len() + self.aux_len(), ZERO),
        }
        lu.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Volume right side after eliminating the auxiliary equations:
    /// `rhs_v − Σ B_s D_s⁻¹ e_s`.
    fn condensed_rhs(&self, rhs_v: &[C64], aux_rhs: Option<&[C64]>) -> Result<Vec<C64>> {
        let mut top = rhs_v.to_vec();
        if let (Some(e), Some(p)) = (aux_rhs, &self.pade) {
            let t = self.q.nrows();
            for (s, lu) in self.d_lu.iter().enumerate() {
                let mut y = e[s * t..(s + 1) * t].to_vec();
                lu.solve_in_place(&mut y);
                for (x, b) in top.iter_mut().zip(p.b[s].mul_vec(&y)?) {
                    *x -= b;
                }
            }
        }
        Ok(top)
    }

    /// Linear local solve (`f = 0`).
    pub fn solve_linear(&self, h: &[C64], l: &[C64], r: &[C64]) -> Result<LocalSolution> {
        if !self.potential.nonlinearity.is_zero() {
            return Err(OsmError::Config(
                "solve_linear called on a problem with a nonlinearity".into(),
            ));
        }
        let rhs = self.base_rhs(h, l, r)?;
        let x = self.solve_extended(&rhs, None)?;
        Ok(self.unpack(&x, 1))
    }

    /// Local solve dispatching on the nonlinearity.
    pub fn solve(&self, h: &[C64], l: &[C64], r: &[C64], fp: &FixedPointConfig) -> Result<LocalSolution> {
        if self.potential.nonlinearity.is_zero() {
            self.solve_linear(h, l, r)
        } else {
            self.solve_nonlinear(h, l, r, fp)
        }
    }

    /// Picard iteration: freeze `f` at the previous iterate, starting from
    /// `ζ⁰ = h`, `φ⁰ = 0`.
    pub fn solve_nonlinear(
        &self,
        h: &[C64],
        l: &[C64],
        r: &[C64],
        fp: &FixedPointConfig,
    ) -> Result<LocalSolution> {
        if fp.max_iterations == 0 || !(fp.tolerance > 0.0) {
            return Err(OsmError::Config("fixed-point tolerance and iteration cap must be positive".into()));
        }
        let rhs0 = self.base_rhs(h, l, r)?;
        if self.potential.nonlinearity.is_zero() {
            let x = self.solve_extended(&rhs0, None)?;
            return Ok(self.unpack(&x, 1));
        }
        let g = self.setup.grid;
        let n = g.node_count();
        let sides = self.setup.transmission_sides;
        let is_robin = self.pade.is_none();
        let mut x = h.to_vec();
        x.resize(n + self.aux_len(), ZERO);
        let mut delta = f64::INFINITY;
        for q in 1..=fp.max_iterations {
            let fvals = self.potential.nonlinearity.nodal(&x[..n]);
            let mut rhs = rhs0.clone();
            // Left-side frozen perturbation, volume-sized.
            let perturb = match (fp.form, is_robin) {
                (NonlinearForm::Consistent, _) => Some(assemble_generalized_mass(&g, &fvals)?),
                (NonlinearForm::Literal, true) if !sides.is_empty() => {
                    Some(assemble_generalized_boundary_mass(&g, &fvals, sides)?)
                }
                (NonlinearForm::Literal, true) => None,
                (NonlinearForm::Literal, false) => {
                    let mf = assemble_generalized_mass(&g, &fvals)?;
                    let t = mf.mul_vec(&x[..n])?;
                    for (ri, ti) in rhs.iter_mut().zip(t) {
                        *ri -= ti;
                    }
                    None
                }
            };
            let aux_rhs = if is_robin {
                None
            } else {
                Some(self.aux_nonlinear_rhs(&fvals, &x[n..])?)
            };
            let x_new = self.solve_frozen(perturb.as_ref(), &rhs, aux_rhs.as_deref(), &x, fp)?;
            if x_new.iter().any(|v| !v.is_finite()) {
                return Err(OsmError::Diverged { iteration: q });
            }
            delta = diff_norm_inf(&x_new, &x);
            x = x_new;
            if delta <= fp.tolerance {
                return Ok(self.unpack(&x, q));
            }
        }
        Err(OsmError::FixedPointNotConverged {
            iterations: fp.max_iterations,
            residual: delta,
        })
    }

    /// `−G_{f} φ_s^{q−1}` for every auxiliary block.
    fn aux_nonlinear_rhs(&self, fvals: &[f64], phi: &[C64]) -> Result<Vec<C64>> {
        let g = &self.setup.grid;
        let blocks: Vec<CsrMatrix> = self
            .setup
            .transmission_sides
            .iter()
            .map(|side| {
                let trace: Vec<f64> = boundary_nodes(g, side).into_iter().map(|k| fvals[k]).collect();
                line_generalized_mass(g.dy, &trace)
            })
            .collect();
        let gf = block_diagonal(&blocks);
        let t = self.q.nrows();
        let mut out = Vec::with_capacity(phi.len());
        for s in 0..phi.len() / t.max(1) {
            out.extend(gf.mul_vec(&phi[s * t..(s + 1) * t])?.into_iter().map(|v| -v));
        }
        Ok(out)
    }

    /// Solves `(K + E) x = (rhs; aux_rhs)` where `E` acts on the volume block.
    fn solve_frozen(
        &self,
        perturb: Option<&CsrMatrix>,
        rhs: &[C64],
        aux_rhs: Option<&[C64]>,
        x0: &[C64],
        fp: &FixedPointConfig,
    ) -> Result<Vec<C64>> {
        let Some(e) = perturb else {
            return self.solve_extended(rhs, aux_rhs);
        };
        if fp.frozen_solve == FrozenSolve::Krylov {
            match self.krylov_frozen(e, rhs, aux_rhs, x0, fp) {
                Ok(x) => return Ok(x),
                Err(OsmError::KrylovNotConverged { .. }) => {}
                Err(err) => return Err(err),
            }
        }
        let ext = self.system.add_scaled(C64::new(1.0, 0.0), &pad(e, self.system.nrows()), C64::new(1.0, 0.0))?;
        let lu = LuFactorization::with_ordering(&ext, self.lu.ordering())?;
        self.solve_with(&lu, rhs, aux_rhs)
    }

    fn krylov_frozen(
        &self,
        e: &CsrMatrix,
        rhs: &[C64],
        aux_rhs: Option<&[C64]>,
        x0: &[C64],
        fp: &FixedPointConfig,
    ) -> Result<Vec<C64>> {
        let n = rhs.len();
        let cfg = KrylovConfig {
            tolerance: fp.inner_tolerance,
            max_iterations: 40,
            restart: 40,
            ..Default::default()
        };
        let dim = self.system.nrows();
        let op = FnOperator::new(dim, |x: &[C64], y: &mut [C64]| {
            self.system.mul_vec_into(x, y);
            let mut t = vec![ZERO; n];
            e.mul_vec_into(&x[..n], &mut t);
            for (yi, ti) in y.iter_mut().zip(t) {
                *yi += ti;
            }
            Ok(())
        });
        if self.is_condensed() {
            // Volume-only system; auxiliary traces recovered afterwards.
            let b = self.condensed_rhs(rhs, aux_rhs)?;
            let out = krylov_solve(&op, Some(&self.lu as &dyn LinearOperator), &b, Some(&x0[..n]), &cfg)?;
            return self.recover_condensed_aux(out.x, aux_rhs);
        }
        let mut b = rhs.to_vec();
        match aux_rhs {
            Some(a) => b.extend_from_slice(a),
            None => b.resize(dim, ZERO),
        }
        let out = krylov_solve(&op, Some(&self.lu as &dyn LinearOperator), &b, Some(x0), &cfg)?;
        Ok(out.x)
    }

    fn recover_condensed_aux(&self, v: Vec<C64>, aux_rhs: Option<&[C64]>) -> Result<Vec<C64>> {
        let p = self.pade.as_ref().expect("condensed mode implies Pade");
        let t = self.q.nrows();
        let cv = p.c.mul_vec(&v)?;
        let mut out = v;
        for (s, lu) in self.d_lu.iter().enumerate() {
            let mut y: Vec<C64> = cv.iter().map(|c| -c).collect();
            if let Some(e) = aux_rhs {
                for (yi, ei) in y.iter_mut().zip(&e[s * t..(s + 1) * t]) {
                    *yi += ei;
                }
            }
            lu.solve_in_place(&mut y);
            out.extend(y);
        }
        Ok(out)
    }

    /// Outgoing fluxes `2 S̄ v − incoming` on each transmission side.
    pub fn outgoing_fluxes(
        &self,
        sol: &LocalSolution,
        l_in: &[C64],
        r_in: &[C64],
    ) -> Result<(Vec<C64>, Vec<C64>)> {
        let ny = self.setup.grid.ny;
        let mut out = (vec![ZERO; ny], vec![ZERO; ny]);
        for side in self.setup.transmission_sides.iter() {
            let trace = self.trace(&sol.v, side);
            let s = crate::transmission::apply_discrete_tc(&self.setup.spec, &trace, sol.aux.side(side))?;
            let (incoming, dst) = match side {
                Side::Left => (l_in, &mut out.0),
                Side::Right => (r_in, &mut out.1),
            };
            check_len("outgoing_fluxes incoming", ny, incoming.len())?;
            for ((d, si), inc) in dst.iter_mut().zip(s).zip(incoming) {
                *d = 2.0 * si - inc;
            }
        }
        Ok(out)
    }
}

/// Embeds a volume-sized matrix in the top-left corner of a larger square one.
fn pad(e: &CsrMatrix, size: usize) -> CsrMatrix {
    if e.nrows() == size {
        return e.clone();
    }
    let mut b = CooBuilder::with_capacity(size, size, e.nnz());
    b.push_block(0, 0, C64::new(1.0, 0.0), e);
    b.build()
}

/// `u_n = 2 v − u_{n−1}`.
pub fn advance_time(u_prev: &[C64], v: &[C64]) -> Result<Vec<C64>> {
    check_len("advance_time", u_prev.len(), v.len())?;
    Ok(v.iter().zip(u_prev).map(|(v, u)| 2.0 * v - u).collect())
}
