//! Compressed sparse row storage for masked cost matrices and transport
//! plans. Absent cells are structurally masked.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists. Columns within a row must be
    /// strictly increasing.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev: Option<usize> = None;
            for (j, v) in row {
                if j >= ncols || prev.is_some_and(|p| p >= j) {
                    return Err(Error::ShapeMismatch(format!(
                        "row {i}: column {j} out of order or out of range (ncols {ncols})"
                    )));
                }
                prev = Some(j);
                col_idx.push(j as u32);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Dense row-major input; `+inf` entries become masked cells.
    pub fn from_dense_masked(nrows: usize, ncols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != nrows * ncols {
            return Err(Error::ShapeMismatch(format!(
                "dense buffer has {} entries, expected {nrows}x{ncols}",
                dense.len()
            )));
        }
        let rows = dense
            .chunks(ncols.max(1))
            .take(nrows)
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != f64::INFINITY)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(ncols, rows)
    }

    /// Same sparsity structure, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Stored `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(i).map(move |k| (self.col_idx[k] as usize, self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.row_range(i);
        self.col_idx[r.clone()]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| self.values[r.start + k])
    }

    pub fn same_structure(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.values[self.row_range(i)].iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (k, &j) in self.col_idx.iter().enumerate() {
            out[j as usize] += self.values[k];
        }
        out
    }

    /// Row-major dense copy with `fill` in masked cells.
    pub fn to_dense(&self, fill: f64) -> Vec<f64> {
        let mut out = vec![fill; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[i * self.ncols + j] = v;
            }
        }
        out
    }

    /// Column-major view of the structure: for each column, the CSR
    /// positions of its cells in increasing row order.
    pub(crate) fn transpose_positions(&self) -> (Vec<usize>, Vec<u32>, Vec<usize>) {
        let mut col_ptr = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            col_ptr[j as usize + 1] += 1;
        }
        for j in 0..self.ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0u32; self.nnz()];
        let mut pos = vec![0usize; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_range(i) {
                let j = self.col_idx[k] as usize;
                row_idx[next[j]] = i as u32;
                pos[next[j]] = k;
                next[j] += 1;
            }
        }
        (col_ptr, row_idx, pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_with_mask() {
        let inf = f64::INFINITY;
        let d = [0.0, inf, 1.0, inf, 2.0, 3.0];
        let m = CsrMatrix::from_dense_masked(2, 3, &d).unwrap();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 2), Some(3.0));
        assert_eq!(m.to_dense(inf), d);
        assert_eq!(m.row_sums(), vec![1.0, 5.0]);
        assert_eq!(m.col_sums(), vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn transpose_lists_rows_in_order() {
        let m = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 2.0)], vec![(1, 3.0)], vec![(0, 4.0)]]).unwrap();
        let (col_ptr, rows, pos) = m.transpose_positions();
        assert_eq!(col_ptr, vec![0, 2, 4]);
        assert_eq!(rows, vec![0, 2, 0, 1]);
        let vals: Vec<f64> = pos.iter().map(|&k| m.values()[k]).collect();
        assert_eq!(vals, vec![1.0, 4.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_unsorted_columns() {
        assert!(CsrMatrix::from_rows(3, vec![vec![(2, 1.0), (1, 1.0)]]).is_err());
        assert!(CsrMatrix::from_rows(1, vec![vec![(1, 1.0)]]).is_err());
        assert!(CsrMatrix::from_dense_masked(2, 2, &[0.0; 3]).is_err());
    }
}
