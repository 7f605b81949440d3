//! Complex sparse storage, direct factorization and Krylov solvers.
//!
//! Every other module builds on the types here: FEM operators are stored as
//! [`CsrMatrix`], local problems are solved with [`LuFactorization`], and the
//! interface preconditioner is inverted with [`krylov_solve`].

mod dense;
mod krylov;
mod lu;
mod ordering;
mod sparse;

pub use dense::{DenseLu, DenseMatrix};
pub use krylov::{
    krylov_solve, FnOperator, IdentityOperator, KrylovConfig, KrylovMethod, KrylovOutcome,
    LinearOperator,
};
pub use lu::{lu_factorize, lu_solve, LuFactorization, PIVOT_THRESHOLD};
pub use ordering::nested_dissection;
pub use sparse::{CooBuilder, CsrMatrix};

pub use num_complex::Complex64 as C64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Euclidean norm of a complex vector.
pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Hermitian inner product `xᴴy`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn diff_norm2(x: &[C64], y: &[C64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn diff_norm_inf(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

pub fn to_complex(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| C64::new(v, 0.0)).collect()
}
