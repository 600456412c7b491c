//! Banded LU with partial pivoting, the direct factorization behind the
//! `DirectLu` inner solver. The meshes here are structured, so momentum and
//! Schur operators have modest bandwidth under the native dof numbering.

use crate::error::{Error, Result};
use crate::sparse::csr::SparseMatrix;

/// Band storage in LAPACK `dgbtrf` layout: entry (i, j) lives at
/// `band[j * ld + (kl + ku + i - j)]` with `ld = 2*kl + ku + 1`; the extra
/// `kl` super-diagonals hold pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    band: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Shape(format!(
                "banded LU: matrix is {}x{}, not square",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            let (cols, _) = a.row(r);
            for &c in cols {
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let ld = 2 * kl + ku + 1;
        if ld.saturating_mul(n) > 200_000_000 {
            return Err(Error::Config(format!(
                "banded LU storage too large: n = {n}, bandwidth ({kl}, {ku})"
            )));
        }
        let mut band = vec![0.0; ld * n];
        let klku = kl + ku;
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                band[c * ld + (klku + r - c)] = v;
            }
        }
        let pivot_floor = 1e-14 * a.max_abs();

        let mut piv = vec![0usize; n];
        for j in 0..n {
            // pivot among rows j..=j+kl
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = band[j * ld + klku].abs();
            for i in (j + 1)..=imax {
                let v = band[j * ld + klku + i - j].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax <= pivot_floor {
                return Err(Error::SingularDiagonal { row: j });
            }
            piv[j] = p;
            let cmax = (j + klku).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    band.swap(c * ld + klku + j - c, c * ld + klku + p - c);
                }
            }
            let pivot = band[j * ld + klku];
            for i in (j + 1)..=imax {
                let m = band[j * ld + klku + i - j] / pivot;
                band[j * ld + klku + i - j] = m;
                for c in (j + 1)..=cmax {
                    let u = band[c * ld + klku + j - c];
                    if u != 0.0 {
                        band[c * ld + klku + i - c] -= m * u;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, band, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_into(&mut x)?;
        Ok(x)
    }

    pub fn solve_into(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Shape(format!(
                "banded solve: rhs length {} != {}",
                x.len(),
                self.n
            )));
        }
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ld = 2 * kl + ku + 1;
        let klku = kl + ku;
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let xj = x[j];
            if xj != 0.0 {
                let imax = (j + kl).min(n - 1);
                for i in (j + 1)..=imax {
                    x[i] -= self.band[j * ld + klku + i - j] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let cmax = (j + klku).min(n - 1);
            let mut acc = x[j];
            for c in (j + 1)..=cmax {
                acc -= self.band[c * ld + klku + j - c] * x[c];
            }
            x[j] = acc / self.band[j * ld + klku];
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}
