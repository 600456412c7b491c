//! Compressed-sparse-row matrices and the product kernels the block
//! preconditioners are assembled from.
//!
//! Products use a symbolic pass (pattern + allocation) followed by a numeric
//! pass. No entry is dropped by magnitude: exact sparsity is retained so
//! factorization identities stay meaningful down to roundoff.

use crate::error::{Error, Result};
use crate::sparse::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build directly from CSR arrays, validating the storage invariants:
    /// monotone offsets, strictly increasing column indices per row (which
    /// also rules out stored duplicates), indices in range.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 {
            return Err(Error::Shape(format!(
                "row_ptr length {} != nrows + 1 = {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Shape(
                "row_ptr must start at 0 and end at nnz".to_string(),
            ));
        }
        if col_idx.len() != values.len() {
            return Err(Error::Shape(format!(
                "col_idx length {} != values length {}",
                col_idx.len(),
                values.len()
            )));
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::Shape(format!("row_ptr decreases at row {r}")));
            }
            let mut prev: Option<usize> = None;
            for &c in &col_idx[row_ptr[r]..row_ptr[r + 1]] {
                if c >= ncols {
                    return Err(Error::Shape(format!(
                        "column index {c} out of range (ncols = {ncols})"
                    )));
                }
                if let Some(p) = prev {
                    if c <= p {
                        return Err(Error::Shape(format!(
                            "column indices not strictly increasing in row {r}"
                        )));
                    }
                }
                prev = Some(c);
            }
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assemble from (row, col, value) triplets; duplicates are summed in
    /// insertion order, so identical insertion sequences give bit-identical
    /// matrices.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Shape(format!(
                    "triplet ({r},{c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// n-by-n matrix with the given diagonal.
    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y, false)?;
        Ok(y)
    }

    /// y = A x (accumulate = false) or y += A x (accumulate = true).
    /// Row-major traversal; deterministic.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64], accumulate: bool) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::Shape(format!(
                "spmv: matrix is {}x{}, vector has length {}",
                self.nrows,
                self.ncols,
                x.len()
            )));
        }
        if y.len() != self.nrows {
            return Err(Error::Shape(format!(
                "spmv: output length {} != nrows {}",
                y.len(),
                self.nrows
            )));
        }
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            if accumulate {
                y[r] += acc;
            } else {
                y[r] = acc;
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for c in 0..self.ncols {
            row_ptr[c + 1] += row_ptr[c];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Element-wise `self + scale * other` on the union pattern.
    pub fn add_scaled(&self, other: &SparseMatrix, scale: f64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Shape(format!(
                "add: {}x{} vs {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                if j >= cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                    col_idx.push(ca[i]);
                    values.push(va[i]);
                    i += 1;
                } else if i >= ca.len() || cb[j] < ca[i] {
                    col_idx.push(cb[j]);
                    values.push(scale * vb[j]);
                    j += 1;
                } else {
                    col_idx.push(ca[i]);
                    values.push(va[i] + scale * vb[j]);
                    i += 1;
                    j += 1;
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn scale(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Row scaling: diag(d) * A.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.nrows {
            return Err(Error::Shape(format!(
                "scale_rows: {} entries for {} rows",
                d.len(),
                self.nrows
            )));
        }
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.values[k] *= d[r];
            }
        }
        Ok(out)
    }

    /// Column scaling: A * diag(d).
    pub fn scale_cols(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.ncols {
            return Err(Error::Shape(format!(
                "scale_cols: {} entries for {} columns",
                d.len(),
                self.ncols
            )));
        }
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] *= d[out.col_idx[k]];
        }
        Ok(out)
    }

    /// d[i] = 1 / A[i,i]; fails naming the row when |A[i,i]| < tol.
    pub fn diag_inverse(&self, tol: f64) -> Result<Vec<f64>> {
        if self.nrows != self.ncols {
            return Err(Error::Shape(format!(
                "diag_inverse: matrix is {}x{}, not square",
                self.nrows, self.ncols
            )));
        }
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let a = self.get(r, r);
            if a.abs() < tol {
                return Err(Error::SingularDiagonal { row: r });
            }
            d[r] = 1.0 / a;
        }
        Ok(d)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|r| self.get(r, r))
            .collect()
    }

    /// Rows of `self` restricted to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<SparseMatrix> {
        let mut row_ptr = vec![0usize; rows.len() + 1];
        let mut nnz = 0;
        for (i, &r) in rows.iter().enumerate() {
            if r >= self.nrows {
                return Err(Error::Index(format!("row {r} out of {}", self.nrows)));
            }
            nnz += self.row_ptr[r + 1] - self.row_ptr[r];
            row_ptr[i + 1] = nnz;
        }
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for &r in rows {
            col_idx.extend_from_slice(&self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]);
            values.extend_from_slice(&self.values[self.row_ptr[r]..self.row_ptr[r + 1]]);
        }
        Ok(SparseMatrix {
            nrows: rows.len(),
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Keep the columns with `col_map[c] = Some(new_index)`, renumbered by the
    /// map; `new_ncols` is the size of the renumbered column space. The map
    /// must be strictly increasing on its kept entries.
    pub fn filter_cols(&self, col_map: &[Option<usize>], new_ncols: usize) -> Result<SparseMatrix> {
        if col_map.len() != self.ncols {
            return Err(Error::Shape(format!(
                "filter_cols: map length {} != ncols {}",
                col_map.len(),
                self.ncols
            )));
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if let Some(nc) = col_map[self.col_idx[k]] {
                    col_idx.push(nc);
                    values.push(self.values[k]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: new_ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d.set(r, self.col_idx[k], self.values[k]);
            }
        }
        d
    }
}

/// C = A * B, symbolic pass then numeric pass with a per-row sparse
/// accumulator. Output columns are sorted; all generated entries are kept.
pub fn spgemm(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
    if a.ncols != b.nrows {
        return Err(Error::Shape(format!(
            "spgemm: {}x{} times {}x{}",
            a.nrows, a.ncols, b.nrows, b.ncols
        )));
    }
    let n = a.nrows;
    let m = b.ncols;

    // symbolic: nnz per row
    let mut marker = vec![usize::MAX; m];
    let mut row_ptr = vec![0usize; n + 1];
    for i in 0..n {
        let mut count = 0;
        for ka in a.row_ptr[i]..a.row_ptr[i + 1] {
            let k = a.col_idx[ka];
            for kb in b.row_ptr[k]..b.row_ptr[k + 1] {
                let j = b.col_idx[kb];
                if marker[j] != i {
                    marker[j] = i;
                    count += 1;
                }
            }
        }
        row_ptr[i + 1] = row_ptr[i] + count;
    }

    // numeric
    let nnz = row_ptr[n];
    let mut col_idx = vec![0usize; nnz];
    let mut values = vec![0.0; nnz];
    let mut marker = vec![usize::MAX; m];
    let mut accum = vec![0.0f64; m];
    let mut touched: Vec<usize> = Vec::new();
    for i in 0..n {
        touched.clear();
        for ka in a.row_ptr[i]..a.row_ptr[i + 1] {
            let k = a.col_idx[ka];
            let av = a.values[ka];
            for kb in b.row_ptr[k]..b.row_ptr[k + 1] {
                let j = b.col_idx[kb];
                if marker[j] != i {
                    marker[j] = i;
                    accum[j] = av * b.values[kb];
                    touched.push(j);
                } else {
                    accum[j] += av * b.values[kb];
                }
            }
        }
        touched.sort_unstable();
        let base = row_ptr[i];
        for (off, &j) in touched.iter().enumerate() {
            col_idx[base + off] = j;
            values[base + off] = accum[j];
        }
    }
    Ok(SparseMatrix {
        nrows: n,
        ncols: m,
        row_ptr,
        col_idx,
        values,
    })
}

/// X * diag(dinv) * Y^T. This is the kernel behind the Schur-complement
/// approximations: Sigma = B D^-1 B^T, the multiplier couplings
/// Phi D^-1 B^T / B D^-1 Phi^T and Phi D^-1 Phi^T.
pub fn scaled_triple_product(
    x: &SparseMatrix,
    dinv: &[f64],
    y: &SparseMatrix,
) -> Result<SparseMatrix> {
    if x.ncols != dinv.len() || y.ncols != dinv.len() {
        return Err(Error::Shape(format!(
            "scaled_triple_product: X is {}x{}, Y is {}x{}, diag has {} entries",
            x.nrows,
            x.ncols,
            y.nrows,
            y.ncols,
            dinv.len()
        )));
    }
    let scaled = x.scale_cols(dinv)?;
    spgemm(&scaled, &y.transpose())
}

/// Assembles one sparse matrix out of scaled sub-blocks placed at offsets.
pub struct BlockMatrixBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl BlockMatrixBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        BlockMatrixBuilder {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn add_block(&mut self, row0: usize, col0: usize, block: &SparseMatrix, scale: f64) {
        for r in 0..block.nrows() {
            for k in block.row_ptr[r]..block.row_ptr[r + 1] {
                self.triplets
                    .push((row0 + r, col0 + block.col_idx[k], scale * block.values[k]));
            }
        }
    }

    pub fn add_dense_block(&mut self, row0: usize, col0: usize, block: &DenseMatrix, scale: f64) {
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                let v = block.get(r, c);
                if v != 0.0 {
                    self.triplets.push((row0 + r, col0 + c, scale * v));
                }
            }
        }
    }

    pub fn add_identity(&mut self, row0: usize, col0: usize, n: usize, scale: f64) {
        for i in 0..n {
            self.triplets.push((row0 + i, col0 + i, scale));
        }
    }

    pub fn build(self) -> Result<SparseMatrix> {
        SparseMatrix::from_triplets(self.nrows, self.ncols, &self.triplets)
    }
}

/// Largest |a_ij - b_ij| over the union pattern.
pub fn max_abs_diff(a: &SparseMatrix, b: &SparseMatrix) -> Result<f64> {
    let diff = a.add_scaled(b, -1.0)?;
    Ok(diff.max_abs())
}
