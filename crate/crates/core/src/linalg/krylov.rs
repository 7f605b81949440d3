use super::{axpy, dot, norm2, C64, ZERO};
use crate::error::{check_len, OsmError, Result};

/// A square linear map on complex vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` has length [`dim`](Self::dim) on entry.
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()>;
}

impl LinearOperator for super::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        check_len("CsrMatrix::apply", self.ncols(), x.len())?;
        self.mul_vec_into(x, y);
        Ok(())
    }
}

impl LinearOperator for super::DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        check_len("DenseMatrix::apply", self.ncols(), x.len())?;
        self.mul_vec_into(x, y);
        Ok(())
    }
}

impl LinearOperator for super::LuFactorization {
    fn dim(&self) -> usize {
        super::LuFactorization::dim(self)
    }
    /// Applies the inverse, so a factorization can serve as a preconditioner.
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        y.copy_from_slice(x);
        self.solve_in_place(y)
    }
}

pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[C64], &mut [C64]) -> Result<()>,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[C64], &mut [C64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<()> {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Gmres,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub method: KrylovMethod,
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            method: KrylovMethod::Gmres,
            tolerance: 1e-12,
            max_iterations: 1000,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// True relative residual of `x`.
    pub residual: f64,
}

/// Solves `A x = b` with optional right preconditioning (`precond` applies
/// an approximation of `A⁻¹`). Returns `KrylovNotConverged` carrying the best
/// iterate when the tolerance is not met.
pub fn krylov_solve(
    a: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    b: &[C64],
    x0: Option<&[C64]>,
    config: &KrylovConfig,
) -> Result<KrylovOutcome> {
    let n = a.dim();
    check_len("krylov_solve rhs", n, b.len())?;
    if let Some(m) = precond {
        check_len("krylov_solve preconditioner", n, m.dim())?;
    }
    let x = match x0 {
        Some(x0) => {
            check_len("krylov_solve initial guess", n, x0.len())?;
            x0.to_vec()
        }
        None => vec![ZERO; n],
    };
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![ZERO; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    match config.method {
        KrylovMethod::Gmres => gmres(a, precond, b, x, bnorm, config),
        KrylovMethod::BiCgStab => bicgstab(a, precond, b, x, bnorm, config),
    }
}

fn residual(a: &dyn LinearOperator, b: &[C64], x: &[C64], r: &mut [C64]) -> Result<f64> {
    a.apply(x, r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(norm2(r))
}

fn precondition(m: Option<&dyn LinearOperator>, v: &[C64], out: &mut [C64]) -> Result<()> {
    match m {
        Some(m) => m.apply(v, out),
        None => {
            out.copy_from_slice(v);
            Ok(())
        }
    }
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    if b == ZERO {
        (1.0, ZERO)
    } else if a == ZERO {
        (0.0, b.conj() / b.norm())
    } else {
        let r = a.norm().hypot(b.norm());
        let c = a.norm() / r;
        let s = (a / a.norm()) * b.conj() / r;
        (c, s)
    }
}

fn gmres(
    a: &dyn LinearOperator,
    m: Option<&dyn LinearOperator>,
    b: &[C64],
    mut x: Vec<C64>,
    bnorm: f64,
    cfg: &KrylovConfig,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let restart = cfg.restart.max(1);
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut iterations = 0usize;
    let mut best_x = x.clone();
    let mut best_res = f64::INFINITY;
    loop {
        let beta = residual(a, b, &x, &mut r)?;
        let rel = beta / bnorm;
        if rel < best_res {
            best_res = rel;
            best_x.copy_from_slice(&x);
        }
        if rel <= cfg.tolerance {
            return Ok(KrylovOutcome {
                x,
                iterations,
                residual: rel,
            });
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(restart + 1);
        let mut z: Vec<Vec<C64>> = Vec::with_capacity(restart);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![ZERO; restart]; restart + 1];
        let mut cs = vec![0.0f64; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut cols = 0;
        let mut stagnated = false;
        for j in 0..restart {
            let mut zj = vec![ZERO; n];
            precondition(m, &v[j], &mut zj)?;
            a.apply(&zj, &mut w)?;
            z.push(zj);
            for i in 0..=j {
                let hij = dot(&v[i], &w);
                h[i][j] = hij;
                axpy(-hij, &v[i], &mut w);
            }
            let hnext = norm2(&w);
            h[j + 1][j] = C64::new(hnext, 0.0);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i].conj() * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c * h[j][j] + s * h[j + 1][j];
            h[j + 1][j] = ZERO;
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            iterations += 1;
            cols = j + 1;
            if h[j][j].norm() == 0.0 || !h[j][j].is_finite() {
                // Singular Hessenberg column: no progress is possible.
                stagnated = true;
                cols = j;
                break;
            }
            let est = g[j + 1].norm() / bnorm;
            if est <= cfg.tolerance || hnext == 0.0 || iterations >= cfg.max_iterations {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![ZERO; cols];
        for i in (0..cols).rev() {
            let mut s = g[i];
            for k in i + 1..cols {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (zi, yi) in z.iter().zip(&y) {
            axpy(*yi, zi, &mut x);
        }
        if stagnated && cols == 0 {
            break;
        }
    }
    let res = {
        let r_last = residual(a, b, &x, &mut r)? / bnorm;
        if r_last < best_res {
            best_res = r_last;
            best_x = x;
        }
        best_res
    };
    Err(OsmError::KrylovNotConverged {
        iterations,
        residual: res,
        best: best_x,
    })
}

fn bicgstab(
    a: &dyn LinearOperator,
    m: Option<&dyn LinearOperator>,
    b: &[C64],
    mut x: Vec<C64>,
    bnorm: f64,
    cfg: &KrylovConfig,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let mut r = vec![ZERO; n];
    let rnorm = residual(a, b, &x, &mut r)?;
    let mut best_x = x.clone();
    let mut best_res = rnorm / bnorm;
    if best_res <= cfg.tolerance {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            residual: best_res,
        });
    }
    let rhat = r.clone();
    let one = C64::new(1.0, 0.0);
    let (mut rho, mut alpha, mut omega) = (one, one, one);
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    let mut phat = vec![ZERO; n];
    let mut shat = vec![ZERO; n];
    let mut t = vec![ZERO; n];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let rho_new = dot(&rhat, &r);
        if rho_new.norm() == 0.0 || omega.norm() == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(m, &p, &mut phat)?;
        a.apply(&phat, &mut v)?;
        let denom = dot(&rhat, &v);
        if denom.norm() == 0.0 {
            break;
        }
        alpha = rho / denom;
        let mut s = r.clone();
        axpy(-alpha, &v, &mut s);
        if norm2(&s) / bnorm <= cfg.tolerance {
            axpy(alpha, &phat, &mut x);
        } else {
            precondition(m, &s, &mut shat)?;
            a.apply(&shat, &mut t)?;
            let tt = dot(&t, &t);
            omega = if tt.norm() == 0.0 { ZERO } else { dot(&t, &s) / tt };
            axpy(alpha, &phat, &mut x);
            axpy(omega, &shat, &mut x);
        }
        let rel = residual(a, b, &x, &mut r)? / bnorm;
        if rel < best_res {
            best_res = rel;
            best_x.copy_from_slice(&x);
        }
        if rel <= cfg.tolerance {
            return Ok(KrylovOutcome {
                x,
                iterations,
                residual: rel,
            });
        }
    }
    Err(OsmError::KrylovNotConverged {
        iterations,
        residual: best_res,
        best: best_x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b: Vec<C64> = (1..=6).map(|k| C64::new(k as f64, 1.0)).collect();
        for method in [KrylovMethod::Gmres, KrylovMethod::BiCgStab] {
            let cfg = KrylovConfig {
                method,
                ..Default::default()
            };
            let out = krylov_solve(&IdentityOperator(6), None, &b, None, &cfg).unwrap();
            assert_eq!(out.iterations, 1);
            assert!(out.residual <= 1e-12);
        }
    }

    #[test]
    fn diagonal_inverse() {
        let d: Vec<C64> = (1..=10).map(|k| c(k as f64)).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let b = vec![c(1.0); 10];
        for method in [KrylovMethod::Gmres, KrylovMethod::BiCgStab] {
            let cfg = KrylovConfig {
                method,
                ..Default::default()
            };
            let out = krylov_solve(&a, None, &b, None, &cfg).unwrap();
            for (k, xk) in out.x.iter().enumerate() {
                assert!((xk - c(1.0 / (k + 1) as f64)).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::identity(4);
        let out = krylov_solve(&a, None, &[ZERO; 4], None, &Default::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn zero_operator_reports_failure() {
        let a = CsrMatrix::zeros(3, 3);
        let b = vec![c(1.0); 3];
        for method in [KrylovMethod::Gmres, KrylovMethod::BiCgStab] {
            let cfg = KrylovConfig {
                method,
                max_iterations: 20,
                ..Default::default()
            };
            match krylov_solve(&a, None, &b, None, &cfg) {
                Err(OsmError::KrylovNotConverged { best, .. }) => assert_eq!(best.len(), 3),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn right_preconditioning_with_exact_inverse() {
        let d: Vec<C64> = (1..=8).map(|k| C64::new(k as f64, 0.5)).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let lu = crate::linalg::lu_factorize(&a).unwrap();
        let b = vec![c(2.0); 8];
        let out = krylov_solve(&a, Some(&lu), &b, None, &Default::default()).unwrap();
        assert_eq!(out.iterations, 1);
    }
}
