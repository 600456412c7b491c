//! Small dense matrices: the m-by-m multiplier block, the exact Schur
//! complement of the exact-LU reference, and the dense oracles used in tests.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>, // row-major
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            values: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::Shape(format!(
                "dense matrix: {} values for {}x{}",
                values.len(),
                nrows,
                ncols
            )));
        }
        Ok(DenseMatrix {
            nrows,
            ncols,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.ncols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.ncols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.ncols + c] += v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.values[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::Shape(format!(
                "dense mul_vec: {}x{} times length {}",
                self.nrows,
                self.ncols,
                x.len()
            )));
        }
        Ok((0..self.nrows)
            .map(|r| {
                self.row_slice(r)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::Shape(format!(
                "dense matmul: {}x{} times {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for r in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.ncols {
                    out.add_at(r, c, a * other.get(k, c));
                }
            }
        }
        Ok(out)
    }

    pub fn add_scaled(&self, other: &DenseMatrix, scale: f64) -> Result<DenseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Shape("dense add: size mismatch".to_string()));
        }
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o += scale * v;
        }
        Ok(out)
    }

    /// Convenience one-shot solve; factorizes every call.
    pub fn lu_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        DenseLu::factor(self)?.solve(b)
    }
}

/// LU factorization with partial pivoting. A pivot below
/// `1e-14 * max|A|` is treated as rank deficiency; for the multiplier block
/// this signals linearly dependent flow-section rows.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>, // row-major, L (unit diag) below, U on/above
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Shape(format!(
                "LU: matrix is {}x{}, not square",
                a.nrows, a.ncols
            )));
        }
        let n = a.nrows;
        let mut lu = a.values.clone();
        let mut piv = vec![0usize; n];
        let pivot_floor = 1e-14 * a.max_abs();

        for k in 0..n {
            // pivot search in column k
            let mut p = k;
            let mut pmax = lu[k * n + k].abs();
            for r in (k + 1)..n {
                let v = lu[r * n + k].abs();
                if v > pmax {
                    pmax = v;
                    p = r;
                }
            }
            if pmax <= pivot_floor {
                return Err(Error::SingularMultiplierBlock(format!(
                    "pivot {pmax:.3e} at elimination step {k} (threshold {pivot_floor:.3e})"
                )));
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
            }
            let pivot = lu[k * n + k];
            for r in (k + 1)..n {
                let m = lu[r * n + k] / pivot;
                lu[r * n + k] = m;
                for c in (k + 1)..n {
                    lu[r * n + c] -= m * lu[k * n + c];
                }
            }
        }
        Ok(DenseLu { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Shape(format!(
                "LU solve: rhs length {} != {}",
                b.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut x = b.to_vec();
        // the factor stores L with permuted rows (P A = L U), so all row
        // interchanges are applied before the triangular solves
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for r in 1..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for c in (k + 1)..n {
                acc -= self.lu[k * n + c] * x[c];
            }
            x[k] = acc / self.lu[k * n + k];
        }
        Ok(x)
    }

    pub fn solve_into(&self, b: &mut [f64]) -> Result<()> {
        let x = self.solve(b)?;
        b.copy_from_slice(&x);
        Ok(())
    }
}
