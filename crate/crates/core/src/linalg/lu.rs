use super::{nested_dissection, CsrMatrix, C64, ZERO};
use crate::error::{check_len, OsmError, Result};

/// Pivots with magnitude at or below this fraction of the largest matrix
/// entry are treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// A diagonal pivot is kept if it is at least this fraction of the largest
/// candidate in its column.
const DIAGONAL_PREFERENCE: f64 = 0.1;

/// Sparse LU factors `P A Q = L U` of a square complex matrix.
///
/// `Q` is a fill-reducing symmetric ordering, `P` comes from threshold
/// partial pivoting. `L` is unit lower triangular with the unit diagonal
/// stored first in each column, `U` stores its diagonal last. Both are kept
/// in compressed-column form. Solves borrow the factors immutably and are
/// safe to run concurrently.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<C64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<C64>,
    /// `pinv[row] = position` of an original row in the pivoted order.
    pinv: Vec<usize>,
    /// `q[k]` is the original column eliminated at step `k`.
    q: Vec<usize>,
}

pub fn lu_factorize(a: &CsrMatrix) -> Result<LuFactorization> {
    LuFactorization::new(a)
}

pub fn lu_solve(lu: &LuFactorization, b: &[C64]) -> Result<Vec<C64>> {
    lu.solve(b)
}

impl LuFactorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        check_len("lu_factorize (square)", a.nrows(), a.ncols())?;
        let q = nested_dissection(a);
        Self::with_ordering(a, &q)
    }

    /// Factorizes with a caller-supplied column ordering, e.g. one reused
    /// from an earlier factorization of a matrix with the same pattern.
    pub fn with_ordering(a: &CsrMatrix, q: &[usize]) -> Result<Self> {
        let n = a.nrows();
        check_len("lu_factorize (square)", n, a.ncols())?;
        check_len("lu_factorize (ordering)", n, q.len())?;
        // Column access to A is the row access of Aᵀ.
        let at = a.transpose();
        let (a_ptr, a_idx, a_val) = (at.row_ptr(), at.col_idx(), at.values());
        let amax = a_val.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let tiny = PIVOT_THRESHOLD * amax.max(f64::MIN_POSITIVE);

        const NONE: usize = usize::MAX;
        let guess = 4 * a.nnz() + n;
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::with_capacity(guess);
        let mut l_val = Vec::with_capacity(guess);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx = Vec::with_capacity(guess);
        let mut u_val = Vec::with_capacity(guess);
        let mut pinv = vec![NONE; n];
        let mut x = vec![ZERO; n];
        let mut xi = vec![0usize; n];
        let mut visited = vec![NONE; n];
        // DFS stack of (node, next child offset).
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = q[k];

            // Symbolic: reach of A(:,col) in the graph of L, in topological order.
            let mut top = n;
            for p in a_ptr[col]..a_ptr[col + 1] {
                let root = a_idx[p];
                if visited[root] == k {
                    continue;
                }
                visited[root] = k;
                stack.push((root, 0));
                while let Some(&(j, next)) = stack.last() {
                    let jcol = pinv[j];
                    let mut child_found = None;
                    if jcol != NONE {
                        // Skip the unit diagonal stored first.
                        let start = l_ptr[jcol] + 1;
                        let end = l_ptr_end(&l_ptr, jcol, l_idx.len());
                        let mut off = next;
                        while start + off < end {
                            let child = l_idx[start + off];
                            off += 1;
                            if visited[child] != k {
                                child_found = Some((child, off));
                                break;
                            }
                        }
                    }
                    match child_found {
                        Some((child, off)) => {
                            stack.last_mut().unwrap().1 = off;
                            visited[child] = k;
                            stack.push((child, 0));
                        }
                        None => {
                            stack.pop();
                            top -= 1;
                            xi[top] = j;
                        }
                    }
                }
            }

            // Numeric: sparse triangular solve L x = A(:,col).
            for &i in &xi[top..n] {
                x[i] = ZERO;
            }
            for p in a_ptr[col]..a_ptr[col + 1] {
                x[a_idx[p]] = a_val[p];
            }
            for px in top..n {
                let j = xi[px];
                let jcol = pinv[j];
                if jcol == NONE {
                    continue;
                }
                let xj = x[j];
                let end = l_ptr_end(&l_ptr, jcol, l_idx.len());
                for p in l_ptr[jcol] + 1..end {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            // Pivot selection.
            let mut ipiv = NONE;
            let mut amax_col = -1.0f64;
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    let t = x[i].norm();
                    if t > amax_col {
                        amax_col = t;
                        ipiv = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if ipiv == NONE || amax_col <= tiny || !amax_col.is_finite() {
                return Err(OsmError::SingularMatrix { pivot: k });
            }
            if pinv[col] == NONE
                && visited[col] == k
                && x[col].norm() >= DIAGONAL_PREFERENCE * amax_col
            {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[ipiv] = k;
            l_idx.push(ipiv);
            l_val.push(C64::new(1.0, 0.0));
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = ZERO;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for r in &mut l_idx {
            *r = pinv[*r];
        }
        Ok(Self {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
            q: q.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Column ordering used for this factorization.
    pub fn ordering(&self) -> &[usize] {
        &self.q
    }

    /// Stored entries of `L` and `U` combined.
    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [C64]) -> Result<()> {
        check_len("LuFactorization::solve", self.n, b.len())?;
        let mut y = vec![ZERO; self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        for j in 0..self.n {
            let yj = y[j];
            if yj == ZERO {
                continue;
            }
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                y[self.l_idx[p]] -= self.l_val[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            y[j] /= self.u_val[last];
            let yj = y[j];
            if yj == ZERO {
                continue;
            }
            for p in self.u_ptr[j]..last {
                y[self.u_idx[p]] -= self.u_val[p] * yj;
            }
        }
        for (k, &col) in self.q.iter().enumerate() {
            b[col] = y[k];
        }
        Ok(())
    }
}

/// End of column `j` of a partially built factor: the next column's start,
/// or the current length when `j` is the column under construction.
#[inline]
fn l_ptr_end(ptr: &[usize], j: usize, len: usize) -> usize {
    if j + 1 < ptr.len() {
        ptr[j + 1]
    } else {
        len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CooBuilder, I};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_solves_exactly() {
        let lu = lu_factorize(&CsrMatrix::identity(5)).unwrap();
        let b: Vec<C64> = (0..5).map(|k| c(k as f64, -1.0)).collect();
        assert_eq!(lu.solve(&b).unwrap(), b);
    }

    #[test]
    fn complex_diagonal() {
        let a = CsrMatrix::from_diagonal(&[c(2.0, 0.0), I]);
        let x = lu_factorize(&a).unwrap().solve(&[c(2.0, 0.0), I]).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let one = c(1.0, 0.0);
        let a = CsrMatrix::from_dense(&[vec![one, one], vec![one, one]]);
        assert!(matches!(
            lu_factorize(&a),
            Err(OsmError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn permutation_needs_pivoting() {
        let one = c(1.0, 0.0);
        let a = CsrMatrix::from_dense(&[vec![ZERO, one], vec![one, ZERO]]);
        let x = lu_factorize(&a).unwrap().solve(&[c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        assert_eq!(x, vec![c(4.0, 0.0), c(3.0, 0.0)]);
    }

    #[test]
    fn random_banded_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 4).min(n) {
                b.push(i, j, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        let a = b.build();
        let x: Vec<C64> = (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let rhs = a.mul_vec(&x).unwrap();
        let sol = lu_factorize(&a).unwrap().solve(&rhs).unwrap();
        let err = sol.iter().zip(&x).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn rejects_wrong_rhs_length() {
        let lu = lu_factorize(&CsrMatrix::identity(3)).unwrap();
        assert!(lu.solve(&[ZERO; 4]).is_err());
    }
}
