//! Compressed-row sparse matrices, sized for the message-passing path where
//! per-epoch cost must stay linear in the edge count.

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Square-or-rectangular CSR matrix with f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Triplets are sorted; duplicate
    /// coordinates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::InvalidInput(format!(
                    "duplicate sparse entry at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &(r, c, v) in &triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidInput(format!(
                    "sparse entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Sparse-dense product `self * dense`, O(nnz * dense.cols()).
    pub fn mul_dense(&self, dense: &Tensor2) -> Result<Tensor2> {
        if self.n_cols != dense.rows() {
            return Err(Error::Shape {
                op: "spmm",
                lhs: (self.n_rows, self.n_cols),
                rhs: dense.shape(),
            });
        }
        let m = dense.cols();
        let mut out = Tensor2::zeros(self.n_rows, m);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let d_row = dense.row(j);
                for (o, &d) in out_row.iter_mut().zip(d_row) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    /// Transposed sparse-dense product `self^T * dense`, by scattering rows.
    pub fn mul_dense_tn(&self, dense: &Tensor2) -> Result<Tensor2> {
        if self.n_rows != dense.rows() {
            return Err(Error::Shape {
                op: "spmm_tn",
                lhs: (self.n_rows, self.n_cols),
                rhs: dense.shape(),
            });
        }
        let m = dense.cols();
        let mut out = Tensor2::zeros(self.n_cols, m);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let d_row = dense.row(i).to_vec();
            for (&j, &v) in cols.iter().zip(vals) {
                let out_row = out.row_mut(j);
                for (o, &d) in out_row.iter_mut().zip(&d_row) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            out.set(i, j, v);
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, vec![(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn mul_dense_matches_dense_product() {
        let s = CsrMatrix::from_triplets(3, 3, vec![(0, 1, 2.0), (1, 0, 2.0), (2, 2, 1.5)]).unwrap();
        let x = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let sparse = s.mul_dense(&x).unwrap();
        let dense = s.to_dense().matmul(&x).unwrap();
        assert_eq!(sparse, dense);
    }

    #[test]
    fn symmetry_check() {
        let sym = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(sym.is_symmetric());
        let asym = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        assert!(!asym.is_symmetric());
    }
}
