//! Interface preconditioner `P = I − L_h` built from the free operator.
//!
//! For `W = 0`, `f = 0` the interface map is affine, `R_h g = L_h g + d`.
//! Subdomain `k` contributes four `n_y × n_y` blocks:
//! `X1: l_k → out_left`, `X2: r_k → out_left`, `X3: l_k → out_right`,
//! `X4: r_k → out_right`, where `out_left` becomes `r_{k−1}` and `out_right`
//! becomes `l_{k+1}`. They are obtained by probing a free local problem with
//! unit traces.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_len, OsmError, Result};
use crate::fem::PotentialField;
use crate::linalg::{
    krylov_solve, CooBuilder, CsrMatrix, DenseMatrix, KrylovConfig, LinearOperator, C64, ZERO,
};
use crate::schwarz::{local_setup, Decomposition, DomainProblem, Execution, InterfaceVector};
use crate::subdomain::LocalProblem;

/// Blocks of one subdomain. Blocks that never act (at the outer ends of
/// the chain) may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerBlocks {
    pub x1: Option<DenseMatrix>,
    pub x2: Option<DenseMatrix>,
    pub x3: Option<DenseMatrix>,
    pub x4: Option<DenseMatrix>,
}

/// Which blocks to probe on a reference problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSelection {
    /// Probe with `l = e_s` (yields X1 and X3).
    pub left: bool,
    /// Probe with `r = e_s` (yields X2 and X4).
    pub right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecondMode {
    /// Shared blocks when every subdomain is alike, individual ones otherwise.
    #[default]
    Auto,
    /// One reference subdomain for all (equal strips, transmission outer sides).
    Equal,
    /// Blocks built separately for each subdomain.
    Individual,
}

/// Probes the free local problem `reference` with unit traces. The
/// reference must have `W = 0` and `f = 0` and carry the transmission
/// condition on both sides. Probes are distributed over the rayon pool in
/// parallel mode and gathered in order.
pub fn build_blocks(reference: &LocalProblem, execution: Execution) -> Result<PreconditionerBlocks> {
    build_selected(reference, BlockSelection { left: true, right: true }, execution)
}

pub fn build_selected(
    reference: &LocalProblem,
    select: BlockSelection,
    execution: Execution,
) -> Result<PreconditionerBlocks> {
    let pot = reference.potential();
    if !pot.is_zero_potential() || !pot.nonlinearity.is_zero() {
        return Err(OsmError::Config(
            "preconditioner blocks require a free reference problem (W = 0, f = 0)".into(),
        ));
    }
    let g = reference.grid();
    let ny = g.ny;
    let sides = reference.setup().transmission_sides;
    let h = vec![ZERO; g.node_count()];
    let zero = vec![ZERO; ny];
    // Probe index p < ny: left unit trace; p ≥ ny: right unit trace.
    let probes: Vec<usize> = (0..2 * ny)
        .filter(|&p| if p < ny { select.left } else { select.right })
        .collect();
    let probe = |p: usize| -> Result<(Vec<C64>, Vec<C64>)> {
        let mut e = vec![ZERO; ny];
        e[p % ny] = C64::new(1.0, 0.0);
        let (l, r) = if p < ny { (&e, &zero) } else { (&zero, &e) };
        let sol = reference.solve_linear(&h, l, r)?;
        let (lo, ro) = reference.outgoing_fluxes(&sol, l, r)?;
        Ok((lo, ro))
    };
    let cols: Vec<(Vec<C64>, Vec<C64>)> = match execution {
        Execution::Sequential => probes.iter().map(|&p| probe(p)).collect::<Result<_>>()?,
        Execution::Parallel => probes.par_iter().map(|&p| probe(p)).collect::<Result<_>>()?,
    };
    let mut left_cols = (Vec::new(), Vec::new());
    let mut right_cols = (Vec::new(), Vec::new());
    for (&p, (lo, ro)) in probes.iter().zip(cols) {
        let dst = if p < ny { &mut left_cols } else { &mut right_cols };
        dst.0.push(lo);
        dst.1.push(ro);
    }
    let make = |on: bool, side_on: bool, cols: &Vec<Vec<C64>>| {
        (on && side_on).then(|| DenseMatrix::from_columns(ny, cols))
    };
    Ok(PreconditionerBlocks {
        x1: make(select.left, sides.left, &left_cols.0),
        x3: make(select.left, sides.right, &left_cols.1),
        x2: make(select.right, sides.left, &right_cols.0),
        x4: make(select.right, sides.right, &right_cols.1),
    })
}

/// Matrix-free `P = I − L_h` on the interface vector.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    n_sub: usize,
    ny: usize,
    blocks: Vec<Arc<PreconditionerBlocks>>,
}

impl BlockOperator {
    /// Assembles `P` from one shared block set (equal subdomains).
    pub fn from_shared(blocks: PreconditionerBlocks, n_sub: usize, ny: usize) -> Result<Self> {
        let shared = Arc::new(blocks);
        Self::from_blocks(vec![shared; n_sub], ny)
    }

    /// Assembles `P` from per-subdomain block sets.
    pub fn from_blocks(blocks: Vec<Arc<PreconditionerBlocks>>, ny: usize) -> Result<Self> {
        let n_sub = blocks.len();
        if n_sub < 2 {
            return Err(OsmError::Config("the interface operator needs at least 2 subdomains".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            let need = |present: &Option<DenseMatrix>, required: bool, name: &str| -> Result<()> {
                match present {
                    Some(m) if m.nrows() != ny || m.ncols() != ny => Err(OsmError::dim("preconditioner block", ny, m.nrows())),
                    None if required => Err(OsmError::Config(format!(
                        "subdomain {k} is missing block {name}"
                    ))),
                    _ => Ok(()),
                }
            };
            let has_l = k >= 1;
            let has_r = k + 1 < n_sub;
            need(&b.x1, has_l, "X1")?;
            need(&b.x2, has_l && has_r, "X2")?;
            need(&b.x3, has_l && has_r, "X3")?;
            need(&b.x4, has_r, "X4")?;
        }
        Ok(Self { n_sub, ny, blocks })
    }

    /// Builds the operator for a decomposed problem with its free reference
    /// problems.
    pub fn build(
        problem: &DomainProblem,
        d: &Decomposition,
        mode: PrecondMode,
        execution: Execution,
    ) -> Result<Self> {
        let n = d.len();
        let ny = problem.grid.ny;
        let free = |k: usize| -> Result<LocalProblem> {
            let setup = local_setup(problem, d, k);
            let pot = PotentialField::free(&setup.grid);
            LocalProblem::new(setup, pot)
        };
        let outer_tc = problem.outer_boundary == crate::schwarz::OuterBoundary::Transmission;
        let equal_ok = d.is_equal() && outer_tc;
        let shared = match mode {
            PrecondMode::Equal if !equal_ok => {
                return Err(OsmError::Config(
                    "shared preconditioner blocks need equal strips and transmission outer sides".into(),
                ))
            }
            PrecondMode::Equal => true,
            PrecondMode::Auto => equal_ok,
            PrecondMode::Individual => false,
        };
        if shared {
            // Any subdomain serves as reference once all are alike.
            let reference = free(n.min(2) - 1)?;
            return Self::from_shared(build_blocks(&reference, execution)?, n, ny);
        }
        let mut blocks = Vec::with_capacity(n);
        for k in 0..n {
            let select = crate::precond::BlockSelection { left: k >= 1, right: k + 1 < n };
            let reference = free(k)?;
            let b = build_selected(&reference, select, execution).map_err(|e| e.in_subdomain(k))?;
            blocks.push(Arc::new(b));
        }
        Self::from_blocks(blocks, ny)
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn blocks(&self) -> &[Arc<PreconditionerBlocks>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_sub - 1) * self.ny
    }

    /// `y = L_h x`.
    pub fn apply_l(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        check_len("BlockOperator input", self.dim(), x.len())?;
        check_len("BlockOperator output", self.dim(), y.len())?;
        let ny = self.ny;
        let n = self.n_sub;
        y.iter_mut().for_each(|v| *v = ZERO);
        let one = C64::new(1.0, 0.0);
        let l_off = |k: usize| (2 * k - 1) * ny;
        let r_off = |k: usize| 2 * k * ny;
        for (k, b) in self.blocks.iter().enumerate() {
            let l_in = (k >= 1).then(|| &x[l_off(k)..l_off(k) + ny]);
            let r_in = (k + 1 < n).then(|| &x[r_off(k)..r_off(k) + ny]);
            if k >= 1 {
                let dst = &mut y[r_off(k - 1)..r_off(k - 1) + ny];
                if let (Some(m), Some(v)) = (&b.x1, l_in) {
                    m.mul_vec_add(one, v, dst);
                }
                if let (Some(m), Some(v)) = (&b.x2, r_in) {
                    m.mul_vec_add(one, v, dst);
                }
            }
            if k + 1 < n {
                let dst = &mut y[l_off(k + 1)..l_off(k + 1) + ny];
                if let (Some(m), Some(v)) = (&b.x3, l_in) {
                    m.mul_vec_add(one, v, dst);
                }
                if let (Some(m), Some(v)) = (&b.x4, r_in) {
                    m.mul_vec_add(one, v, dst);
                }
            }
        }
        Ok(())
    }

    /// Explicit sparse `P = I − L_h`.
    pub fn to_sparse(&self) -> CsrMatrix {
        let dim = self.dim();
        let ny = self.ny;
        let n = self.n_sub;
        let mut b = CooBuilder::new(dim, dim);
        for i in 0..dim {
            b.push(i, i, C64::new(1.0, 0.0));
        }
        let mut place = |row: usize, col: usize, m: &Option<DenseMatrix>| {
            if let Some(m) = m {
                for r in 0..ny {
                    for c in 0..ny {
                        let v = m[(r, c)];
                        if v != ZERO {
                            b.push(row + r, col + c, -v);
                        }
                    }
                }
            }
        };
        for (k, blk) in self.blocks.iter().enumerate() {
            if k >= 1 {
                let row = 2 * (k - 1) * ny;
                place(row, (2 * k - 1) * ny, &blk.x1);
                if k + 1 < n {
                    place(row, 2 * k * ny, &blk.x2);
                }
            }
            if k + 1 < n {
                let row = (2 * k + 1) * ny;
                if k >= 1 {
                    place(row, (2 * k - 1) * ny, &blk.x3);
                }
                place(row, 2 * k * ny, &blk.x4);
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_csr(&self.to_sparse())
    }

    /// Solves `P x = y` with a Krylov method.
    pub fn apply_inverse(&self, y: &[C64], cfg: &KrylovConfig) -> Result<Vec<C64>> {
        check_len("apply_P_inverse", self.dim(), y.len())?;
        Ok(krylov_solve(self, None, y, None, cfg)?.x)
    }

    pub fn apply_inverse_vector(&self, y: &InterfaceVector, cfg: &KrylovConfig) -> Result<InterfaceVector> {
        let x = self.apply_inverse(y.as_slice(), cfg)?;
        InterfaceVector::from_vec(self.n_sub, self.ny, x)
    }
}

impl LinearOperator for BlockOperator {
    fn dim(&self) -> usize {
        BlockOperator::dim(self)
    }

    /// `y = x − L_h x`.
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        self.apply_l(x, y)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
        Ok(())
    }
}
