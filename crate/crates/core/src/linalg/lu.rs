use super::{CsrMatrix, LinalgError, Scalar, C64};

/// Pivots smaller than this fraction of the largest matrix entry are treated
/// as exact zeros.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// LU factorization with partial pivoting of a banded square matrix.
///
/// Storage follows the LAPACK `gbtrf` layout: column `j` holds rows
/// `j-(kl+ku) ..= j+kl`, the extra `kl` superdiagonals absorbing fill from row
/// interchanges. With `kl = ku = n-1` this is an ordinary dense LU.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factorizes a square sparse matrix, detecting its bandwidth.
    pub fn factor(m: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                rows: m.n_rows(),
                cols: m.n_cols(),
            });
        }
        let (kl, ku) = m.bandwidths();
        let mut lu = Self::empty(m.n_rows(), kl, ku);
        for (i, j, v) in m.iter() {
            let p = lu.index(i, j);
            lu.ab[p] = v;
        }
        lu.decompose()?;
        Ok(lu)
    }

    /// Factorizes the band matrix whose entries inside the band are given by
    /// `entry(i, j)`.
    pub fn from_band_fn<F>(n: usize, kl: usize, ku: usize, entry: F) -> Result<Self, LinalgError>
    where
        F: Fn(usize, usize) -> T,
    {
        let mut lu = Self::empty(n, kl, ku);
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n.saturating_sub(1));
            for i in lo..=hi {
                let p = lu.index(i, j);
                lu.ab[p] = entry(i, j);
            }
        }
        lu.decompose()?;
        Ok(lu)
    }

    /// Dense factorization of a row-major square matrix.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(LinalgError::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let k = n.saturating_sub(1);
        Self::from_band_fn(n, k, k, |i, j| rows[i][j])
    }

    fn empty(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![T::zero(); ldab * n],
            pivots: (0..n).collect(),
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    fn decompose(&mut self) -> Result<(), LinalgError> {
        let n = self.n;
        let scale = self.ab.iter().map(|v| v.modulus()).fold(0.0, f64::max);
        let threshold = PIVOT_THRESHOLD * scale;
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.index(k, k)].modulus();
            for i in k + 1..=last_row {
                let v = self.ab[self.index(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= threshold || best == 0.0 {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: best,
                    threshold,
                });
            }
            self.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.index(k, j);
                    let b = self.index(p, j);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.index(k, k)];
            for i in k + 1..=last_row {
                let ik = self.index(i, k);
                let l = self.ab[ik] / pivot;
                self.ab[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.ab[self.index(k, j)];
                    let ij = self.index(i, j);
                    self.ab[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [T]) -> Result<(), LinalgError> {
        let n = self.n;
        if x.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                x[i] -= self.ab[self.index(i, k)] * xk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                acc -= self.ab[self.index(k, j)] * x[j];
            }
            x[k] = acc / self.ab[self.index(k, k)];
        }
        Ok(())
    }
}

impl BandedLu<f64> {
    /// Solves with a real factorization and a complex right-hand side.
    pub fn solve_complex(&self, b: &[C64]) -> Result<Vec<C64>, LinalgError> {
        let mut re: Vec<f64> = b.iter().map(|z| z.re).collect();
        let mut im: Vec<f64> = b.iter().map(|z| z.im).collect();
        self.solve_in_place(&mut re)?;
        self.solve_in_place(&mut im)?;
        Ok(re
            .into_iter()
            .zip(im)
            .map(|(r, i)| C64::new(r, i))
            .collect())
    }
}
