//! Robin and Padé-type transmission conditions.
//!
//! The Padé operator approximates `−i sqrt(2i/Δt + Δ_Γ + W + f)` by
//! `−i Σ a_s + i Σ_{s≥1} a_s d_s (2i/Δt + Δ_Γ + W + f + d_s)⁻¹`, which brings
//! in one auxiliary trace `φ_s` per term and boundary line.

use std::f64::consts::PI;

use crate::error::{check_len, OsmError, Result};
use crate::fem::{line_generalized_mass, line_mass, line_stiffness, Grid, Sides};
use crate::linalg::{CooBuilder, CsrMatrix, C64, I, ZERO};

/// Lower bound of the `a_s` sum in the diagonal term `−i Σ a_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadeSum {
    /// `Σ_{s=0}^m a_s`
    #[default]
    FromZero,
    /// `Σ_{s=1}^m a_s`
    FromOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PadeCoefficients {
    pub m: usize,
    pub theta: f64,
    /// `a[0..=m]`
    pub a: Vec<C64>,
    /// `d[0..=m]`; `d[0]` is stored but never used.
    pub d: Vec<C64>,
}

pub fn pade_coefficients(m: usize, theta: f64) -> Result<PadeCoefficients> {
    if m == 0 {
        return Err(OsmError::Config("Pade order must be at least 1".into()));
    }
    let half = C64::from_polar(1.0, theta / 2.0);
    let full = C64::from_polar(1.0, theta);
    let mut a = Vec::with_capacity(m + 1);
    let mut d = Vec::with_capacity(m + 1);
    for s in 0..=m {
        let angle = (2.0 * s as f64 - 1.0) * PI / (4.0 * m as f64);
        let c = angle.cos();
        a.push(half / (m as f64 * c * c));
        d.push(full * angle.tan().powi(2));
    }
    Ok(PadeCoefficients { m, theta, a, d })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransmissionSpec {
    Robin { p: f64 },
    Pade { coeffs: PadeCoefficients, sum: PadeSum },
}

impl TransmissionSpec {
    pub fn robin(p: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(OsmError::Config(format!("Robin parameter must be positive, got {p}")));
        }
        Ok(TransmissionSpec::Robin { p })
    }

    /// Padé condition of order `m`; the usual angle is `π/4`.
    pub fn pade(m: usize, theta: f64) -> Result<Self> {
        Self::pade_with_sum(m, theta, PadeSum::FromZero)
    }

    pub fn pade_with_sum(m: usize, theta: f64, sum: PadeSum) -> Result<Self> {
        Ok(TransmissionSpec::Pade {
            coeffs: pade_coefficients(m, theta)?,
            sum,
        })
    }

    /// Number of auxiliary traces per boundary line.
    pub fn aux_count(&self) -> usize {
        match self {
            TransmissionSpec::Robin { .. } => 0,
            TransmissionSpec::Pade { coeffs, .. } => coeffs.m,
        }
    }

    /// `κ` in the diagonal part `−i κ · trace` of the operator.
    pub fn diagonal(&self) -> C64 {
        match self {
            TransmissionSpec::Robin { p } => C64::new(*p, 0.0),
            TransmissionSpec::Pade { coeffs, sum } => {
                let start = match sum {
                    PadeSum::FromZero => 0,
                    PadeSum::FromOne => 1,
                };
                coeffs.a[start..].iter().sum()
            }
        }
    }

    /// `a_s d_s` for `s = 1..=m`.
    pub fn aux_weights(&self) -> Vec<C64> {
        match self {
            TransmissionSpec::Robin { .. } => Vec::new(),
            TransmissionSpec::Pade { coeffs, .. } => {
                (1..=coeffs.m).map(|s| coeffs.a[s] * coeffs.d[s]).collect()
            }
        }
    }
}

/// Auxiliary Padé traces `φ_s` on each boundary line, `s = 1..=m`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuxiliaryTraces {
    pub left: Vec<Vec<C64>>,
    pub right: Vec<Vec<C64>>,
}

impl AuxiliaryTraces {
    pub fn zeros(m: usize, ny: usize, sides: Sides) -> Self {
        let make = |on: bool| if on { vec![vec![ZERO; ny]; m] } else { Vec::new() };
        Self {
            left: make(sides.left),
            right: make(sides.right),
        }
    }

    pub fn side(&self, side: crate::fem::Side) -> &[Vec<C64>] {
        match side {
            crate::fem::Side::Left => &self.left,
            crate::fem::Side::Right => &self.right,
        }
    }
}

/// Discrete transmission operator applied to a trace:
/// Robin `−ip·trace`; Padé `−i(Σa_s)·trace + i Σ_{s≥1} a_s d_s aux_s`.
pub fn apply_discrete_tc(
    spec: &TransmissionSpec,
    trace: &[C64],
    aux: &[Vec<C64>],
) -> Result<Vec<C64>> {
    let diag = -I * spec.diagonal();
    let mut out: Vec<C64> = trace.iter().map(|t| diag * t).collect();
    if let TransmissionSpec::Pade { .. } = spec {
        check_len("apply_discrete_tc aux count", spec.aux_count(), aux.len())?;
        for (w, phi) in spec.aux_weights().into_iter().zip(aux) {
            check_len("apply_discrete_tc aux length", trace.len(), phi.len())?;
            let w = I * w;
            for (o, p) in out.iter_mut().zip(phi) {
                *o += w * p;
            }
        }
    }
    Ok(out)
}

/// Off-diagonal and auxiliary blocks of the coupled Padé system.
///
/// With `Q` the stacked restriction onto the selected sides and `G` the
/// line mass on each side: `B_s = −i a_s d_s Qᵀ G`, `C = −G Q`,
/// `D_s = (2i/Δt) G − c S_Γ + G_W + d_s G`, block diagonal over sides.
#[derive(Debug, Clone)]
pub struct PadeBlocks {
    pub b: Vec<CsrMatrix>,
    pub c: CsrMatrix,
    pub d: Vec<CsrMatrix>,
}

pub fn build_pade_blocks(
    g: &Grid,
    spec: &TransmissionSpec,
    w: &[f64],
    dt: f64,
    laplace_coefficient: f64,
    sides: Sides,
) -> Result<PadeBlocks> {
    let TransmissionSpec::Pade { coeffs, .. } = spec else {
        return Err(OsmError::Config("Pade blocks requested for a Robin condition".into()));
    };
    if sides.is_empty() {
        return Err(OsmError::Config("Pade blocks need at least one side".into()));
    }
    check_len("build_pade_blocks potential", g.node_count(), w.len())?;
    let ny = g.ny;
    let k = sides.count();
    let q = crate::fem::stacked_restriction(g, sides);
    let gm = line_mass(ny, g.dy);
    let sg = line_stiffness(ny, g.dy);

    // Per-side base operator (2i/Δt) G − c S_Γ + G_W.
    let mut base = Vec::with_capacity(k);
    for side in sides.iter() {
        let trace: Vec<f64> = crate::fem::boundary_nodes(g, side)
            .into_iter()
            .map(|n| w[n])
            .collect();
        let gw = line_generalized_mass(g.dy, &trace);
        let m = gm
            .add_scaled(C64::new(0.0, 2.0 / dt), &sg, C64::new(-laplace_coefficient, 0.0))?
            .add_scaled(C64::new(1.0, 0.0), &gw, C64::new(1.0, 0.0))?;
        base.push(m);
    }
    let block_g = block_diagonal(&vec![gm.clone(); k]);
    let gq = block_g.matmul(&q)?;
    let c = gq.scale(C64::new(-1.0, 0.0));
    let qt_g = gq.transpose();
    let mut b = Vec::with_capacity(coeffs.m);
    let mut d = Vec::with_capacity(coeffs.m);
    for (s, weight) in (1..=coeffs.m).zip(spec.aux_weights()) {
        b.push(qt_g.scale(-I * weight));
        let blocks: Vec<CsrMatrix> = base
            .iter()
            .map(|m| m.add_scaled(C64::new(1.0, 0.0), &gm, coeffs.d[s]))
            .collect::<Result<_>>()?;
        d.push(block_diagonal(&blocks));
    }
    Ok(PadeBlocks { b, c, d })
}

pub(crate) fn block_diagonal(blocks: &[CsrMatrix]) -> CsrMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CooBuilder::new(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for blk in blocks {
        out.push_block(r0, c0, C64::new(1.0, 0.0), blk);
        r0 += blk.nrows();
        c0 += blk.ncols();
    }
    out.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn order_one_coefficients() {
        let c = pade_coefficients(1, PI / 4.0).unwrap();
        let two = C64::from_polar(2.0, PI / 8.0);
        assert!((c.a[0] - two).norm() < 1e-14);
        assert!((c.a[1] - two).norm() < 1e-14);
        assert!((c.d[1] - C64::from_polar(1.0, PI / 4.0)).norm() < 1e-14);
    }

    #[test]
    fn order_two_ratio() {
        let c = pade_coefficients(2, PI / 4.0).unwrap();
        assert_abs_diff_eq!((c.d[2] / c.d[1]).norm(), 33.970_562_748_477_14, epsilon = 1e-9);
    }

    #[test]
    fn zero_order_rejected() {
        assert!(matches!(pade_coefficients(0, 0.3), Err(OsmError::Config(_))));
    }

    #[test]
    fn robin_application() {
        let spec = TransmissionSpec::robin(2.0).unwrap();
        let out = apply_discrete_tc(&spec, &[C64::new(1.0, 0.0), I], &[]).unwrap();
        assert_eq!(out, vec![C64::new(0.0, -2.0), C64::new(2.0, 0.0)]);
    }

    #[test]
    fn pade_order_one_application() {
        let spec = TransmissionSpec::pade(1, PI / 4.0).unwrap();
        let e1 = vec![C64::new(1.0, 0.0), ZERO];
        let out = apply_discrete_tc(&spec, &e1, &[e1.clone()]).unwrap();
        let expect = -I * C64::from_polar(4.0, PI / 8.0)
            + I * C64::from_polar(2.0, PI / 8.0) * C64::from_polar(1.0, PI / 4.0);
        assert!((out[0] - expect).norm() < 1e-14);
        assert_eq!(out[1], ZERO);
    }

    #[test]
    fn pade_aux_count_checked() {
        let spec = TransmissionSpec::pade(2, PI / 4.0).unwrap();
        assert!(matches!(
            apply_discrete_tc(&spec, &[ZERO; 3], &[vec![ZERO; 3]]),
            Err(OsmError::Dimension { .. })
        ));
    }

    #[test]
    fn from_one_sum_drops_a0() {
        let full = TransmissionSpec::pade(3, 0.7).unwrap();
        let part = TransmissionSpec::pade_with_sum(3, 0.7, PadeSum::FromOne).unwrap();
        let TransmissionSpec::Pade { coeffs, .. } = &full else { unreachable!() };
        assert!((full.diagonal() - part.diagonal() - coeffs.a[0]).norm() < 1e-14);
    }
}
