//! Inner approximate solvers for the momentum and Schur blocks.
//!
//! Every solver here is a *fixed linear operator*: the same input always
//! produces the same output and there are no inner stopping tests, so plain
//! (non-flexible) GMRES stays valid around them. `DirectLu` is the desk-scale
//! default and isolates the preconditioner algebra from inner-solver error;
//! the fixed-sweep options exist to study inexactness.

use crate::error::{Error, Result};
use crate::sparse::{BandedLu, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerKind {
    DirectLu,
    Ilu0,
    JacobiSweeps(usize),
    ChebyshevSweeps(usize),
}

impl InnerKind {
    pub fn label(&self) -> String {
        match self {
            InnerKind::DirectLu => "direct".to_string(),
            InnerKind::Ilu0 => "ilu0".to_string(),
            InnerKind::JacobiSweeps(k) => format!("jacobi:{k}"),
            InnerKind::ChebyshevSweeps(k) => format!("chebyshev:{k}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolver {
    kind: InnerKind,
    payload: Payload,
}

#[derive(Debug, Clone)]
enum Payload {
    Direct(BandedLu),
    Ilu0(Ilu0Factors),
    Jacobi {
        matrix: SparseMatrix,
        diag_inv: Vec<f64>,
        sweeps: usize,
    },
    Chebyshev {
        matrix: SparseMatrix,
        diag_inv: Vec<f64>,
        sweeps: usize,
        eig_lo: f64,
        eig_hi: f64,
    },
}

const JACOBI_DAMPING: f64 = 2.0 / 3.0;

impl InnerSolver {
    pub fn build(kind: InnerKind, matrix: &SparseMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!(
                "inner solver needs a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let payload = match kind {
            InnerKind::DirectLu => Payload::Direct(BandedLu::factor(matrix)?),
            InnerKind::Ilu0 => Payload::Ilu0(Ilu0Factors::factor(matrix)?),
            InnerKind::JacobiSweeps(sweeps) => {
                if sweeps == 0 {
                    return Err(Error::Config("jacobi sweep count must be >= 1".to_string()));
                }
                Payload::Jacobi {
                    diag_inv: matrix.diag_inverse(1e-14 * matrix.max_abs())?,
                    matrix: matrix.clone(),
                    sweeps,
                }
            }
            InnerKind::ChebyshevSweeps(sweeps) => {
                if sweeps == 0 {
                    return Err(Error::Config(
                        "chebyshev sweep count must be >= 1".to_string(),
                    ));
                }
                let diag_inv = matrix.diag_inverse(1e-14 * matrix.max_abs())?;
                let eig_hi = 1.05 * power_method_largest(matrix, &diag_inv, 10);
                // standard smoother bracket keeping the upper spectrum tamed
                let eig_lo = eig_hi / 30.0;
                Payload::Chebyshev {
                    diag_inv,
                    matrix: matrix.clone(),
                    sweeps,
                    eig_lo,
                    eig_hi,
                }
            }
        };
        Ok(InnerSolver { kind, payload })
    }

    pub fn kind(&self) -> InnerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.payload {
            Payload::Direct(lu) => lu.dim(),
            Payload::Ilu0(f) => f.n,
            Payload::Jacobi { matrix, .. } | Payload::Chebyshev { matrix, .. } => matrix.nrows(),
        }
    }

    /// x approximately solving A x = b (exactly for `DirectLu`).
    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        if b.len() != self.dim() || x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "inner solve: vector length {} for dimension {}",
                b.len(),
                self.dim()
            )));
        }
        match &self.payload {
            Payload::Direct(lu) => {
                x.copy_from_slice(b);
                lu.solve_into(x)
            }
            Payload::Ilu0(f) => {
                f.solve_into(b, x);
                Ok(())
            }
            Payload::Jacobi {
                matrix,
                diag_inv,
                sweeps,
            } => {
                x.fill(0.0);
                let mut work = vec![0.0; b.len()];
                for _ in 0..*sweeps {
                    matrix.spmv_into(x, &mut work, false)?;
                    for i in 0..x.len() {
                        x[i] += JACOBI_DAMPING * diag_inv[i] * (b[i] - work[i]);
                    }
                }
                Ok(())
            }
            Payload::Chebyshev {
                matrix,
                diag_inv,
                sweeps,
                eig_lo,
                eig_hi,
            } => {
                // Chebyshev iteration on the Jacobi-preconditioned operator
                let theta = 0.5 * (eig_hi + eig_lo);
                let delta = 0.5 * (eig_hi - eig_lo);
                let sigma = theta / delta;
                let mut rho = 1.0 / sigma;
                x.fill(0.0);
                let mut r_pre: Vec<f64> =
                    b.iter().zip(diag_inv).map(|(bi, di)| bi * di).collect();
                let mut d: Vec<f64> = r_pre.iter().map(|v| v / theta).collect();
                let mut work = vec![0.0; b.len()];
                for sweep in 0..*sweeps {
                    for (xi, di) in x.iter_mut().zip(&d) {
                        *xi += di;
                    }
                    if sweep + 1 == *sweeps {
                        break;
                    }
                    matrix.spmv_into(&d, &mut work, false)?;
                    for i in 0..r_pre.len() {
                        r_pre[i] -= diag_inv[i] * work[i];
                    }
                    let rho_next = 1.0 / (2.0 * sigma - rho);
                    for i in 0..d.len() {
                        d[i] = rho_next * rho * d[i] + 2.0 * rho_next / delta * r_pre[i];
                    }
                    rho = rho_next;
                }
                Ok(())
            }
        }
    }
}

/// Largest eigenvalue estimate of diag(A)^-1 A by a fixed number of power
/// iterations from a deterministic pseudo-random start vector.
fn power_method_largest(matrix: &SparseMatrix, diag_inv: &[f64], iters: usize) -> f64 {
    let n = matrix.nrows();
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        })
        .collect();
    let norm = crate::sparse::norm2(&v).max(f64::MIN_POSITIVE);
    for x in &mut v {
        *x /= norm;
    }
    let mut lambda = 1.0;
    let mut work = vec![0.0; n];
    for _ in 0..iters {
        matrix
            .spmv_into(&v, &mut work, false)
            .expect("dimensions checked");
        for i in 0..n {
            work[i] *= diag_inv[i];
        }
        lambda = crate::sparse::norm2(&work);
        if lambda <= f64::MIN_POSITIVE {
            return 1.0;
        }
        for i in 0..n {
            v[i] = work[i] / lambda;
        }
    }
    lambda
}

/// ILU(0): incomplete LU on the sparsity pattern of A (no fill). L has unit
/// diagonal and shares the strict lower pattern, U the upper-plus-diagonal
/// pattern.
#[derive(Debug, Clone)]
struct Ilu0Factors {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Vec<f64>,
    diag_ptr: Vec<usize>,
}

impl Ilu0Factors {
    fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        let row_ptr = a.row_ptr().to_vec();
        let col_idx = a.col_idx().to_vec();
        let mut lu = a.values().to_vec();
        let mut diag_ptr = vec![usize::MAX; n];
        for r in 0..n {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if col_idx[k] == r {
                    diag_ptr[r] = k;
                }
            }
            if diag_ptr[r] == usize::MAX {
                return Err(Error::SingularDiagonal { row: r });
            }
        }
        let zero_floor = 1e-14 * a.max_abs();

        // column -> position map for the current row, reset after each row
        let mut col_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                col_pos[col_idx[k]] = k;
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                let kcol = col_idx[k];
                if kcol >= i {
                    break;
                }
                let pivot = lu[diag_ptr[kcol]];
                if pivot.abs() <= zero_floor {
                    return Err(Error::SingularDiagonal { row: kcol });
                }
                let mult = lu[k] / pivot;
                lu[k] = mult;
                for kk in (diag_ptr[kcol] + 1)..row_ptr[kcol + 1] {
                    let j = col_idx[kk];
                    let pos = col_pos[j];
                    if pos != usize::MAX {
                        lu[pos] -= mult * lu[kk];
                    }
                }
            }
            if lu[diag_ptr[i]].abs() <= zero_floor {
                return Err(Error::SingularDiagonal { row: i });
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                col_pos[col_idx[k]] = usize::MAX;
            }
        }
        Ok(Ilu0Factors {
            n,
            row_ptr,
            col_idx,
            lu,
            diag_ptr,
        })
    }

    fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        x.copy_from_slice(b);
        for i in 0..self.n {
            let mut acc = x[i];
            for k in self.row_ptr[i]..self.diag_ptr[i] {
                acc -= self.lu[k] * x[self.col_idx[k]];
            }
            x[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for k in (self.diag_ptr[i] + 1)..self.row_ptr[i + 1] {
                acc -= self.lu[k] * x[self.col_idx[k]];
            }
            x[i] = acc / self.lu[self.diag_ptr[i]];
        }
    }
}
