use super::{LinalgError, Scalar, C64};

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())))
            .expect("identity indices are in range")
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed; explicit zeros are kept so the sparsity pattern is predictable.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, LinalgError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut items: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &items {
            if r >= n_rows || c >= n_cols {
                return Err(LinalgError::OutOfBounds {
                    row: r,
                    col: c,
                    rows: n_rows,
                    cols: n_cols,
                });
            }
        }
        items.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(items.len());
        let mut values: Vec<T> = Vec::with_capacity(items.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in items {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let triplets = rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != T::zero())
                .map(move |(j, v)| (i, j, *v))
        });
        Self::from_triplets(n_rows, n_cols, triplets).expect("dense indices are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        Ok((0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .fold(T::zero(), |acc, (&j, &v)| acc + v * x[j])
            })
            .collect())
    }

    /// Conjugate transpose.
    pub fn hermitian_adjoint(&self) -> Self {
        Self::from_triplets(
            self.n_cols,
            self.n_rows,
            self.iter().map(|(i, j, v)| (j, i, v.conj())),
        )
        .expect("transposed indices are in range")
    }

    /// Lower and upper bandwidth `(kl, ku)` of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(kl, ku), (i, j, _)| {
            if i > j {
                (kl.max(i - j), ku)
            } else {
                (kl, ku.max(j - i))
            }
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * alpha).collect(),
            ..self.clone()
        }
    }

    /// `Σ α_k A_k` over matrices of identical shape.
    pub fn linear_combination(terms: &[(T, &CsrMatrix<T>)]) -> Result<Self, LinalgError> {
        let (n_rows, n_cols) = terms.first().map_or((0, 0), |(_, m)| (m.n_rows, m.n_cols));
        for (_, m) in terms {
            if m.n_rows != n_rows || m.n_cols != n_cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: n_rows,
                    found: m.n_rows,
                });
            }
        }
        Self::from_triplets(
            n_rows,
            n_cols,
            terms
                .iter()
                .flat_map(|(a, m)| m.iter().map(move |(i, j, v)| (i, j, *a * v))),
        )
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (i, j, v) in self.iter() {
            out[i][j] = v;
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && self
                .iter()
                .all(|(i, j, v)| (v - self.get(j, i).conj()).modulus() <= tol)
    }

    /// Quadratic form `xᴴ A x` for a Hermitian `A`, returned as its real part.
    pub fn quadratic_form(&self, x: &[T]) -> f64 {
        let ax = self.mul_vec(x).expect("quadratic form dimension");
        x.iter().zip(&ax).map(|(a, b)| (a.conj() * *b).real()).sum()
    }
}

impl CsrMatrix<f64> {
    pub fn to_complex(&self) -> CsrMatrix<C64> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    /// Applies a real matrix to a complex vector.
    pub fn mul_complex(&self, x: &[C64]) -> Result<Vec<C64>, LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        Ok((0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .fold(C64::new(0.0, 0.0), |acc, (&j, &v)| acc + x[j] * v)
            })
            .collect())
    }

    /// `Re(xᴴ A x)` for real symmetric `A` and complex `x`.
    pub fn complex_quadratic_form(&self, x: &[C64]) -> f64 {
        let ax = self.mul_complex(x).expect("quadratic form dimension");
        x.iter().zip(&ax).map(|(a, b)| (a.conj() * b).re).sum()
    }
}
