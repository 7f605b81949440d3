//! Q1 finite-element assembly on uniform rectangular grids.
//!
//! Nodes are numbered row-major, `index(i, j) = j * nx + i`, with `i` along x.
//! Element-local node order is (0,0), (1,0), (0,1), (1,1).

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, OsmError, Result};
use crate::linalg::{CooBuilder, CsrMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_left: f64,
    pub x_right: f64,
    pub y_bottom: f64,
    pub y_top: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn new(
        x_left: f64,
        x_right: f64,
        y_bottom: f64,
        y_top: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(OsmError::Config(format!(
                "grid needs at least 2 nodes per direction, got {nx}x{ny}"
            )));
        }
        if !(x_right > x_left && y_top > y_bottom) {
            return Err(OsmError::Config(format!(
                "empty domain ({x_left}, {x_right}) x ({y_bottom}, {y_top})"
            )));
        }
        Ok(Self {
            x_left,
            x_right,
            y_bottom,
            y_top,
            nx,
            ny,
            dx: (x_right - x_left) / (nx - 1) as f64,
            dy: (y_top - y_bottom) / (ny - 1) as f64,
        })
    }

    /// Builds a grid from target cell sizes, which must divide the domain.
    pub fn with_spacing(
        x_left: f64,
        x_right: f64,
        y_bottom: f64,
        y_top: f64,
        dx: f64,
        dy: f64,
    ) -> Result<Self> {
        let cells = |len: f64, h: f64, axis: &str| -> Result<usize> {
            let n = len / h;
            let rounded = n.round();
            if !(h > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-9 * n.max(1.0) {
                return Err(OsmError::Config(format!(
                    "{axis} spacing {h} does not divide length {len}"
                )));
            }
            Ok(rounded as usize)
        };
        let cx = cells(x_right - x_left, dx, "x")?;
        let cy = cells(y_top - y_bottom, dy, "y")?;
        Self::new(x_left, x_right, y_bottom, y_top, cx + 1, cy + 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_right
        } else {
            self.x_left + i as f64 * self.dx
        }
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        if j + 1 == self.ny {
            self.y_top
        } else {
            self.y_bottom + j as f64 * self.dy
        }
    }

    /// Coordinates of node `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        (self.x(k % self.nx), self.y(k / self.nx))
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn map_nodes<T>(&self, mut f: impl FnMut(f64, f64) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.node_count());
        for j in 0..self.ny {
            let y = self.y(j);
            for i in 0..self.nx {
                out.push(f(self.x(i), y));
            }
        }
        out
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_left && x <= self.x_right && y >= self.y_bottom && y <= self.y_top
    }

    /// Same-shaped grid covering `[x_left, x_right]` horizontally.
    pub(crate) fn with_x_range(&self, x_left: f64, x_right: f64, nx: usize) -> Result<Self> {
        Self::new(x_left, x_right, self.y_bottom, self.y_top, nx, self.ny)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Set of vertical boundary lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Sides {
    pub left: bool,
    pub right: bool,
}

impl Sides {
    pub const NONE: Sides = Sides {
        left: false,
        right: false,
    };
    pub const LEFT: Sides = Sides {
        left: true,
        right: false,
    };
    pub const RIGHT: Sides = Sides {
        left: false,
        right: true,
    };
    pub const BOTH: Sides = Sides {
        left: true,
        right: true,
    };

    pub fn contains(&self, side: Side) -> bool {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    /// Selected sides, left first.
    pub fn iter(&self) -> impl Iterator<Item = Side> + '_ {
        Side::BOTH.into_iter().filter(|s| self.contains(*s))
    }

    pub fn count(&self) -> usize {
        self.left as usize + self.right as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// The nonlinearity `f(v)` entering `+ f(v) v`. Always real-valued.
#[derive(Clone)]
pub enum Nonlinearity {
    None,
    /// `f(v) = strength * |v|²`
    Cubic { strength: f64 },
    Callback(Arc<dyn Fn(C64) -> f64 + Send + Sync>),
}

impl Nonlinearity {
    pub fn eval(&self, v: C64) -> f64 {
        match self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Cubic { strength } => strength * v.norm_sqr(),
            Nonlinearity::Callback(f) => f(v),
        }
    }

    /// True when `f` vanishes identically (no fixed-point loop needed).
    pub fn is_zero(&self) -> bool {
        match self {
            Nonlinearity::None => true,
            Nonlinearity::Cubic { strength } => *strength == 0.0,
            Nonlinearity::Callback(_) => false,
        }
    }

    pub fn nodal(&self, field: &[C64]) -> Vec<f64> {
        field.iter().map(|&v| self.eval(v)).collect()
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::None => write!(f, "None"),
            Nonlinearity::Cubic { strength } => write!(f, "Cubic {{ strength: {strength} }}"),
            Nonlinearity::Callback(_) => write!(f, "Callback(..)"),
        }
    }
}

/// Nodal values of the linear potential `W` together with the nonlinearity.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub values: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl PotentialField {
    pub fn new(grid: &Grid, values: Vec<f64>, nonlinearity: Nonlinearity) -> Result<Self> {
        check_len("PotentialField", grid.node_count(), values.len())?;
        Ok(Self {
            values,
            nonlinearity,
        })
    }

    /// `W = 0`, `f = 0`.
    pub fn free(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.node_count()],
            nonlinearity: Nonlinearity::None,
        }
    }

    pub fn is_zero_potential(&self) -> bool {
        self.values.iter().all(|&w| w == 0.0)
    }
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// 1D linear shape functions at the two Gauss points: `SHAPE[q][a]`.
const SHAPE: [[f64; 2]; 2] = [
    [1.0 - GAUSS[0], GAUSS[0]],
    [1.0 - GAUSS[1], GAUSS[1]],
];

fn mass_1d(h: f64) -> [[f64; 2]; 2] {
    [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
}

fn stiffness_1d(h: f64) -> [[f64; 2]; 2] {
    [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]]
}

/// Global node numbers of cell `(ci, cj)` in element-local order.
#[inline]
fn cell_nodes(g: &Grid, ci: usize, cj: usize) -> [usize; 4] {
    let n0 = g.index(ci, cj);
    [n0, n0 + 1, n0 + g.nx, n0 + g.nx + 1]
}

fn assemble_cells(g: &Grid, mut element: impl FnMut(usize, usize) -> [[f64; 4]; 4]) -> CsrMatrix {
    let n = g.node_count();
    let cells = (g.nx - 1) * (g.ny - 1);
    let mut b = CooBuilder::with_capacity(n, n, 16 * cells);
    for cj in 0..g.ny - 1 {
        for ci in 0..g.nx - 1 {
            let ke = element(ci, cj);
            let nodes = cell_nodes(g, ci, cj);
            for a in 0..4 {
                for c in 0..4 {
                    b.push(nodes[a], nodes[c], C64::new(ke[a][c], 0.0));
                }
            }
        }
    }
    b.build()
}

fn tensor(x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> [[f64; 4]; 4] {
    let mut e = [[0.0; 4]; 4];
    for a in 0..4 {
        for c in 0..4 {
            e[a][c] = x[a % 2][c % 2] * y[a / 2][c / 2];
        }
    }
    e
}

pub fn assemble_mass(g: &Grid) -> CsrMatrix {
    let e = tensor(&mass_1d(g.dx), &mass_1d(g.dy));
    assemble_cells(g, |_, _| e)
}

/// Stiffness matrix of `∫∇u·∇φ`.
pub fn assemble_stiffness(g: &Grid) -> CsrMatrix {
    let kx = tensor(&stiffness_1d(g.dx), &mass_1d(g.dy));
    let ky = tensor(&mass_1d(g.dx), &stiffness_1d(g.dy));
    let mut e = [[0.0; 4]; 4];
    for a in 0..4 {
        for c in 0..4 {
            e[a][c] = kx[a][c] + ky[a][c];
        }
    }
    assemble_cells(g, |_, _| e)
}

/// Mass matrix weighted by the bilinear interpolant of nodal `w`:
/// `∫ w φ_a φ_b`, integrated exactly by 2×2 Gauss quadrature.
pub fn assemble_generalized_mass(g: &Grid, w: &[f64]) -> Result<CsrMatrix> {
    check_len("assemble_generalized_mass", g.node_count(), w.len())?;
    // Tensor shape values and weights at the four quadrature points.
    let weight = 0.25 * g.dx * g.dy;
    let mut phi = [[0.0; 4]; 4];
    for qy in 0..2 {
        for qx in 0..2 {
            for a in 0..4 {
                phi[qy * 2 + qx][a] = SHAPE[qx][a % 2] * SHAPE[qy][a / 2];
            }
        }
    }
    Ok(assemble_cells(g, |ci, cj| {
        let nodes = cell_nodes(g, ci, cj);
        let mut e = [[0.0; 4]; 4];
        for p in &phi {
            let wq: f64 = (0..4).map(|a| p[a] * w[nodes[a]]).sum::<f64>() * weight;
            for a in 0..4 {
                for c in 0..4 {
                    e[a][c] += wq * p[a] * p[c];
                }
            }
        }
        e
    }))
}

/// 1D Q1 mass matrix on `n` equispaced nodes of spacing `h`.
pub fn line_mass(n: usize, h: f64) -> CsrMatrix {
    line_assemble(n, |_| mass_1d(h))
}

/// 1D Q1 stiffness matrix of `∫ u' φ'`.
pub fn line_stiffness(n: usize, h: f64) -> CsrMatrix {
    line_assemble(n, |_| stiffness_1d(h))
}

/// 1D mass weighted by the linear interpolant of nodal `w`, integrated exactly.
pub fn line_generalized_mass(h: f64, w: &[f64]) -> CsrMatrix {
    let n = w.len();
    line_assemble(n, |e| {
        let mut m = [[0.0; 2]; 2];
        for s in &SHAPE {
            let wq = (s[0] * w[e] + s[1] * w[e + 1]) * 0.5 * h;
            for a in 0..2 {
                for c in 0..2 {
                    m[a][c] += wq * s[a] * s[c];
                }
            }
        }
        m
    })
}

fn line_assemble(n: usize, element: impl Fn(usize) -> [[f64; 2]; 2]) -> CsrMatrix {
    let mut b = CooBuilder::with_capacity(n, n, 4 * n);
    for e in 0..n.saturating_sub(1) {
        let m = element(e);
        for a in 0..2 {
            for c in 0..2 {
                b.push(e + a, e + c, C64::new(m[a][c], 0.0));
            }
        }
    }
    b.build()
}

/// Node indices of one vertical boundary line, bottom to top.
pub fn boundary_nodes(g: &Grid, side: Side) -> Vec<usize> {
    let i = match side {
        Side::Left => 0,
        Side::Right => g.nx - 1,
    };
    (0..g.ny).map(|j| g.index(i, j)).collect()
}

/// Boolean `n_y × (n_x n_y)` matrix extracting the trace on one side.
pub fn restriction(g: &Grid, side: Side) -> CsrMatrix {
    let mut b = CooBuilder::new(g.ny, g.node_count());
    for (j, k) in boundary_nodes(g, side).into_iter().enumerate() {
        b.push(j, k, C64::new(1.0, 0.0));
    }
    b.build()
}

/// Restriction onto the selected sides stacked in order (left, right).
pub fn stacked_restriction(g: &Grid, sides: Sides) -> CsrMatrix {
    let mut b = CooBuilder::new(g.ny * sides.count(), g.node_count());
    for (s, side) in sides.iter().enumerate() {
        for (j, k) in boundary_nodes(g, side).into_iter().enumerate() {
            b.push(s * g.ny + j, k, C64::new(1.0, 0.0));
        }
    }
    b.build()
}

fn lift_to_volume(g: &Grid, sides: Sides, line: impl Fn(Side) -> CsrMatrix) -> Result<CsrMatrix> {
    if sides.is_empty() {
        return Err(OsmError::Config("boundary assembly needs at least one side".into()));
    }
    let n = g.node_count();
    let mut b = CooBuilder::new(n, n);
    for side in sides.iter() {
        let nodes = boundary_nodes(g, side);
        for (r, c, v) in line(side).triplets() {
            b.push(nodes[r], nodes[c], v);
        }
    }
    Ok(b.build())
}

/// Volume-sized matrix carrying the 1D mass on the selected vertical lines.
pub fn assemble_boundary_mass(g: &Grid, sides: Sides) -> Result<CsrMatrix> {
    lift_to_volume(g, sides, |_| line_mass(g.ny, g.dy))
}

/// Volume-sized matrix carrying the 1D stiffness (`−∂_y²`) on the selected lines.
pub fn assemble_boundary_stiffness(g: &Grid, sides: Sides) -> Result<CsrMatrix> {
    lift_to_volume(g, sides, |_| line_stiffness(g.ny, g.dy))
}

/// Boundary mass weighted by volume nodal values restricted to each line.
pub fn assemble_generalized_boundary_mass(g: &Grid, w: &[f64], sides: Sides) -> Result<CsrMatrix> {
    check_len("assemble_generalized_boundary_mass", g.node_count(), w.len())?;
    lift_to_volume(g, sides, |side| {
        let trace: Vec<f64> = boundary_nodes(g, side).into_iter().map(|k| w[k]).collect();
        line_generalized_mass(g.dy, &trace)
    })
}
