use super::{CsrMatrix, C64, ZERO};
use crate::error::{check_len, OsmError, Result};

/// Row-major dense complex matrix, used for interface-sized blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![ZERO; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_csr(a: &CsrMatrix) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for (r, c, v) in a.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_columns(nrows: usize, cols: &[Vec<C64>]) -> Self {
        let mut m = Self::zeros(nrows, cols.len());
        for (c, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.nrows).map(|r| self[(r, c)]).collect()
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.ncols..(r + 1) * self.ncols];
            *yr = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `y += alpha * self * x`
    pub fn mul_vec_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.ncols..(r + 1) * self.ncols];
            let s: C64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            *yr += alpha * s;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("DenseMatrix::mul_vec", self.ncols, x.len())?;
        let mut y = vec![ZERO; self.nrows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("DenseMatrix::matmul", self.ncols, other.nrows)?;
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let src = &other.data[k * other.ncols..(k + 1) * other.ncols];
                let dst = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn add_scaled(&self, alpha: C64, other: &DenseMatrix, beta: C64) -> Result<DenseMatrix> {
        check_len("DenseMatrix::add_scaled rows", self.nrows, other.nrows)?;
        check_len("DenseMatrix::add_scaled cols", self.ncols, other.ncols)?;
        Ok(DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn lu(&self) -> Result<DenseLu> {
        DenseLu::new(self)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        let lu = self.lu()?;
        let n = self.nrows;
        let mut out = DenseMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = ZERO);
            e[c] = C64::new(1.0, 0.0);
            lu.solve_in_place(&mut e);
            for r in 0..n {
                out[(r, c)] = e[r];
            }
        }
        Ok(out)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let rows: Vec<Vec<C64>> = (0..self.nrows)
            .map(|r| self.data[r * self.ncols..(r + 1) * self.ncols].to_vec())
            .collect();
        CsrMatrix::from_dense(&rows)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.ncols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.ncols + c]
    }
}

/// Dense LU with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        check_len("DenseLu (square)", a.nrows, a.ncols)?;
        let n = a.nrows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tiny = super::PIVOT_THRESHOLD * a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[r * n + k].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= tiny || !pmax.is_finite() {
                return Err(OsmError::SingularMatrix { pivot: k });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                if f == ZERO {
                    continue;
                }
                for c in k + 1..n {
                    let t = lu[k * n + c];
                    lu[r * n + c] -= f * t;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        let mut y: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = y[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * y[c];
            }
            y[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * y[c];
            }
            y[r] = s / self.lu[r * n + r];
        }
        b.copy_from_slice(&y);
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        check_len("DenseLu::solve", self.n, b.len())?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}
