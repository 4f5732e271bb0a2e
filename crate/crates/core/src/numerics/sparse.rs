use crate::error::{Result, TegError};
use crate::numerics::Tensor;

/// Compressed sparse row matrix. Only used as a fixed, non-learned operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) indptr: Vec<usize>,
    pub(crate) indices: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(
                r < rows && c < cols,
                "triplet ({r}, {c}) outside {rows}x{cols}"
            );
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.set(r, c, v);
            }
        }
        t
    }

    /// `self · x`.
    pub fn matmul(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.cols {
            return Err(TegError::ShapeMismatch {
                op: "sparse_matmul",
                lhs: vec![self.rows, self.cols],
                rhs: x.shape().to_vec(),
            });
        }
        let d = x.cols();
        let mut out = Tensor::zeros(&[self.rows, d]);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, xi) in dst.iter_mut().zip(x.row(c)) {
                    *o += v * xi;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul(&self, g: &Tensor) -> Tensor {
        let d = g.cols();
        let mut out = Tensor::zeros(&[self.cols, d]);
        for r in 0..self.rows {
            let src = g.row(r);
            for (c, v) in self.row(r) {
                for (o, gi) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * gi;
                }
            }
        }
        out
    }
}
