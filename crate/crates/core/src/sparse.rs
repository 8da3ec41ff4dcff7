//! Compressed sparse row matrices with a parallel matrix-vector product.

use std::collections::HashMap;

use rayon::prelude::*;

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from per-column maps `row → value`.
    pub fn from_columns(n_rows: usize, cols: &[HashMap<usize, f64>]) -> Self {
        let mut triplets = Vec::with_capacity(cols.iter().map(HashMap::len).sum());
        for (j, col) in cols.iter().enumerate() {
            triplets.extend(col.iter().map(|(&i, &v)| (i, j, v)));
        }
        Self::from_triplets(n_rows, cols.len(), triplets)
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[i + 1] += 1;
            indices.push(j as u32);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Csr { n_rows, n_cols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A·x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = s;
        });
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j as usize] += v;
        }
        out
    }

    /// Entries of one row as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().zip(&self.values[a..b]).map(|(&j, &v)| (j as usize, v))
    }
}
