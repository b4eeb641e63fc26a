use super::{LinalgError, C64};

/// Sparse rank-3 tensor `ω_{kji}` that is symmetric in `(k, j)`.
///
/// Only entries with `k <= j` are stored, grouped by the output index `i`.
/// Every entry refers to its `(k, j)` pair through a sorted pair table, so the
/// contractions first form one product per pair and then reduce each row
/// against the products. Entries of a row whose pairs are adjacent in the
/// table are kept as runs, which turns the reduction into dot products of
/// contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    dim: usize,
    tolerance: f64,
    /// Entry range of row `i` in `values`.
    row_ptr: Vec<usize>,
    /// Run range of row `i` in `runs`.
    run_ptr: Vec<usize>,
    /// `(first pair, length)`
    runs: Vec<(u32, u32)>,
    values: Vec<f64>,
    pair_k: Vec<u32>,
    pair_j: Vec<u32>,
}

impl SparseTensor3 {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            tolerance: 0.0,
            row_ptr: vec![0; dim + 1],
            run_ptr: vec![0; dim + 1],
            runs: Vec::new(),
            values: Vec::new(),
            pair_k: Vec::new(),
            pair_j: Vec::new(),
        }
    }

    /// Builds the tensor from `(k, j, i, value)` quadruples.
    ///
    /// Pairs with `k > j` are folded onto `(j, k)`, duplicate triples are
    /// summed, and entries with `|value| <= tolerance` are dropped when the
    /// tolerance is positive.
    pub fn from_entries<I>(dim: usize, entries: I, tolerance: f64) -> Result<Self, LinalgError>
    where
        I: IntoIterator<Item = (usize, usize, usize, f64)>,
    {
        let mut items: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (k, j, i, v) in entries {
            let bad = [k, j, i].into_iter().find(|&x| x >= dim);
            if let Some(found) = bad {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    found,
                });
            }
            let (k, j) = if k <= j { (k, j) } else { (j, k) };
            items.push((i, k, j, v));
        }
        items.sort_unstable_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));

        let mut merged: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(items.len());
        for (i, k, j, v) in items {
            match merged.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (i, k, j) => last.3 += v,
                _ => merged.push((i, k, j, v)),
            }
        }
        merged.retain(|e| !(tolerance > 0.0 && e.3.abs() <= tolerance));

        let mut pairs: Vec<(usize, usize)> = merged.iter().map(|e| (e.1, e.2)).collect();
        pairs.sort_unstable();
        pairs.dedup();

        let mut out = Self::empty(dim);
        out.tolerance = tolerance;
        out.pair_k = pairs.iter().map(|p| p.0 as u32).collect();
        out.pair_j = pairs.iter().map(|p| p.1 as u32).collect();
        let mut prev: Option<(usize, usize)> = None;
        for (i, k, j, v) in merged {
            let idx = pairs
                .binary_search(&(k, j))
                .expect("pair table holds every entry");
            out.row_ptr[i + 1] += 1;
            out.values.push(v);
            match (prev, out.runs.last_mut()) {
                (Some((pi, pidx)), Some(run)) if pi == i && pidx + 1 == idx => run.1 += 1,
                _ => {
                    out.run_ptr[i + 1] += 1;
                    out.runs.push((idx as u32, 1));
                }
            }
            prev = Some((i, idx));
        }
        for i in 0..dim {
            out.row_ptr[i + 1] += out.row_ptr[i];
            out.run_ptr[i + 1] += out.run_ptr[i];
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Number of distinct `(k, j)` pairs with a stored entry.
    pub fn n_pairs(&self) -> usize {
        self.pair_k.len()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Stored `(k, j, value)` entries for output index `i`, with `k <= j`.
    pub fn slice(&self, i: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let pairs = self.runs[self.run_ptr[i]..self.run_ptr[i + 1]]
            .iter()
            .flat_map(|&(start, len)| start as usize..(start + len) as usize);
        pairs
            .zip(&self.values[self.row_ptr[i]..self.row_ptr[i + 1]])
            .map(move |(q, &v)| (self.pair_k[q] as usize, self.pair_j[q] as usize, v))
    }

    /// Number of contiguous runs over all rows.
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    /// Calls `f(values, first_pair)` for every run of row `i`.
    #[inline]
    fn for_runs<F: FnMut(&[f64], usize)>(&self, i: usize, mut f: F) {
        let mut offset = self.row_ptr[i];
        for &(start, len) in &self.runs[self.run_ptr[i]..self.run_ptr[i + 1]] {
            let len = len as usize;
            f(&self.values[offset..offset + len], start as usize);
            offset += len;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.slice(i).map(move |(k, j, v)| (k, j, i, v)))
    }

    /// Entry `ω_{kji}` (symmetric in `k, j`); zero if not stored.
    pub fn get(&self, k: usize, j: usize, i: usize) -> f64 {
        let (k, j) = if k <= j { (k, j) } else { (j, k) };
        self.slice(i)
            .find(|&(a, b, _)| a == k && b == j)
            .map_or(0.0, |(_, _, v)| v)
    }

    fn check(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pair_k
            .iter()
            .zip(&self.pair_j)
            .map(|(&k, &j)| (k as usize, j as usize))
    }

    /// `out_i = Σ_{k,j} rho_k u_j ω_{kji}` over all ordered pairs `(k, j)`.
    pub fn contract(&self, rho: &[f64], u: &[C64]) -> Result<Vec<C64>, LinalgError> {
        self.check(rho.len())?;
        self.check(u.len())?;
        let (re, im): (Vec<f64>, Vec<f64>) = self
            .pairs()
            .map(|(k, j)| {
                let z = if k == j {
                    u[j] * rho[k]
                } else {
                    u[j] * rho[k] + u[k] * rho[j]
                };
                (z.re, z.im)
            })
            .unzip();
        Ok((0..self.dim)
            .map(|i| {
                let mut acc = C64::new(0.0, 0.0);
                self.for_runs(i, |w, p| {
                    let n = w.len();
                    let (a, b) = dot2(w, &re[p..p + n], &im[p..p + n]);
                    acc.re += a;
                    acc.im += b;
                });
                acc
            })
            .collect())
    }

    /// `b_i = ⟨|u|², φ_i⟩ = Σ_{k<=j} (2 - δ_kj) Re(U_k conj(U_j)) ω_{kji}`.
    pub fn density_load(&self, u: &[C64]) -> Result<Vec<f64>, LinalgError> {
        self.check(u.len())?;
        let products: Vec<f64> = self
            .pairs()
            .map(|(k, j)| {
                let re = u[k].re * u[j].re + u[k].im * u[j].im;
                if k == j {
                    re
                } else {
                    2.0 * re
                }
            })
            .collect();
        Ok((0..self.dim)
            .map(|i| {
                let mut acc = 0.0;
                self.for_runs(i, |w, p| acc += dot(w, &products[p..p + w.len()]));
                acc
            })
            .collect())
    }
}

/// Dot product with four independent partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            s[l] += x[l] * y[l];
        }
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// `(a·b, a·c)` in one pass.
#[inline]
fn dot2(a: &[f64], b: &[f64], c: &[f64]) -> (f64, f64) {
    let mut s = [0.0; 4];
    let mut t = [0.0; 4];
    let n4 = a.len() / 4 * 4;
    for ((x, y), z) in a[..n4]
        .chunks_exact(4)
        .zip(b[..n4].chunks_exact(4))
        .zip(c[..n4].chunks_exact(4))
    {
        for l in 0..4 {
            s[l] += x[l] * y[l];
            t[l] += x[l] * z[l];
        }
    }
    let (mut ts, mut tt) = (0.0, 0.0);
    for m in n4..a.len() {
        ts += a[m] * b[m];
        tt += a[m] * c[m];
    }
    (
        (s[0] + s[1]) + (s[2] + s[3]) + ts,
        (t[0] + t[1]) + (t[2] + t[3]) + tt,
    )
}
