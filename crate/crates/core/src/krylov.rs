//! Right-preconditioned GMRES with restart, plus the flexible variant.
//!
//! Right preconditioning is fixed so that the minimized quantity *is* the
//! true residual norm ||b - A x||: iteration counts can then be compared
//! across preconditioners without worrying about preconditioner scaling.
//! The Arnoldi process uses modified Gram-Schmidt with one selective
//! re-orthogonalization pass, and happy breakdown exits through an exact
//! solve of the small Hessenberg system.
//!
//! A preconditioner must act as a fixed linear operator for plain GMRES to
//! be valid; anything that changes between applications must go through the
//! flexible variant, which the entry point selects automatically via
//! [`PrecondOp::is_fixed_linear`].

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::sparse::{norm2, DenseMatrix, SparseMatrix};
use std::time::Instant;

/// Matrix action y = A x.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl LinOp for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.spmv_into(x, y, false)
    }
}

impl LinOp for DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let r = self.mul_vec(x)?;
        y.copy_from_slice(&r);
        Ok(())
    }
}

impl LinOp for BlockSystem {
    fn dim(&self) -> usize {
        BlockSystem::dim(self)
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        BlockSystem::apply_into(self, x, y)
    }
}

/// Preconditioner action z = P^-1 r.
pub trait PrecondOp {
    fn dim(&self) -> usize;
    fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()>;
    /// Whether the action is a fixed linear operator. Variable actions force
    /// the flexible variant.
    fn is_fixed_linear(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovParams {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
    /// Force the flexible variant even for fixed preconditioners.
    pub flexible: bool,
}

impl Default for KrylovParams {
    fn default() -> Self {
        KrylovParams {
            rel_tol: 1e-8,
            abs_tol: 1e-50,
            restart: 200,
            max_iters: 2000,
            flexible: false,
        }
    }
}

impl KrylovParams {
    fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 || self.abs_tol <= 0.0 {
            return Err(Error::Config(format!(
                "tolerances must be positive: rel {}, abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.restart == 0 || self.restart > self.max_iters {
            return Err(Error::Config(format!(
                "need 0 < restart <= max_iters, got restart {} max {}",
                self.restart, self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KrylovStats {
    pub iterations: usize,
    /// True-residual norms (right preconditioning keeps the Arnoldi estimate
    /// in the unpreconditioned norm): entry 0 is ||b - A x0||, then one entry
    /// per iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Recomputed ||b - A x|| of the returned solution.
    pub true_residual: f64,
    pub rhs_norm: f64,
    pub wall_seconds: f64,
}

struct Identity(usize);
impl PrecondOp for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

/// Right-preconditioned restarted GMRES. Automatically switches to the
/// flexible variant when the preconditioner is not a fixed linear operator.
pub fn gmres(
    op: &dyn LinOp,
    precond: Option<&dyn PrecondOp>,
    b: &[f64],
    x0: Option<&[f64]>,
    params: &KrylovParams,
) -> Result<(Vec<f64>, KrylovStats)> {
    let flexible = params.flexible || precond.is_some_and(|p| !p.is_fixed_linear());
    gmres_driver(op, precond, b, x0, params, flexible)
}

/// Flexible GMRES: stores the preconditioned basis so the preconditioner may
/// vary between applications.
pub fn fgmres(
    op: &dyn LinOp,
    precond: Option<&dyn PrecondOp>,
    b: &[f64],
    x0: Option<&[f64]>,
    params: &KrylovParams,
) -> Result<(Vec<f64>, KrylovStats)> {
    gmres_driver(op, precond, b, x0, params, true)
}

fn gmres_driver(
    op: &dyn LinOp,
    precond: Option<&dyn PrecondOp>,
    b: &[f64],
    x0: Option<&[f64]>,
    params: &KrylovParams,
    flexible: bool,
) -> Result<(Vec<f64>, KrylovStats)> {
    params.validate()?;
    let n = op.dim();
    if b.len() != n {
        return Err(Error::Shape(format!(
            "gmres: rhs has {} entries, operator dimension {}",
            b.len(),
            n
        )));
    }
    if let Some(p) = precond {
        if p.dim() != n {
            return Err(Error::Shape(format!(
                "gmres: preconditioner dimension {} != {}",
                p.dim(),
                n
            )));
        }
    }
    let identity = Identity(n);
    let precond: &dyn PrecondOp = precond.unwrap_or(&identity);

    let start = Instant::now();
    let bnorm = norm2(b);
    let threshold = params.rel_tol * bnorm + params.abs_tol;

    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Shape(format!(
                    "gmres: initial guess has {} entries for dimension {n}",
                    x0.len()
                )));
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut history = Vec::new();
    let mut total_iters = 0usize;
    let mut scratch = vec![0.0; n];

    let finish = |x: Vec<f64>,
                  history: Vec<f64>,
                  iters: usize,
                  true_residual: f64|
     -> (Vec<f64>, KrylovStats) {
        let converged = true_residual <= threshold;
        let stats = KrylovStats {
            iterations: iters,
            residual_history: history,
            converged,
            true_residual,
            rhs_norm: bnorm,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        (x, stats)
    };

    loop {
        // residual of the current iterate
        op.apply_into(&x, &mut scratch)?;
        let mut r: Vec<f64> = b.iter().zip(&scratch).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if !beta.is_finite() {
            return Err(Error::Breakdown(format!("non-finite residual norm {beta}")));
        }
        if history.is_empty() {
            history.push(beta);
        }
        if beta <= threshold || total_iters >= params.max_iters {
            return Ok(finish(x, history, total_iters, beta));
        }

        let cycle = params.restart.min(params.max_iters - total_iters);
        for v in &mut r {
            *v /= beta;
        }
        let mut basis: Vec<Vec<f64>> = vec![r];
        let mut precond_basis: Vec<Vec<f64>> = Vec::new();
        // Hessenberg columns after Givens, plus rotation state
        let mut h_cols: Vec<Vec<f64>> = Vec::new();
        let mut givens: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![0.0; cycle + 1];
        g[0] = beta;
        let mut inner = 0usize;
        let mut happy = false;

        while inner < cycle {
            let j = inner;
            // w = A M^-1 v_j
            let mut z = vec![0.0; n];
            precond.apply_into(&basis[j], &mut z)?;
            let mut w = vec![0.0; n];
            op.apply_into(&z, &mut w)?;
            if flexible {
                precond_basis.push(z);
            }

            let w_before = norm2(&w);
            let mut h = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
                h[i] = hij;
            }
            let mut w_after = norm2(&w);
            // selective re-orthogonalization (DGKS-style test at 1/sqrt(2))
            if w_after < std::f64::consts::FRAC_1_SQRT_2 * w_before {
                for (i, v) in basis.iter().enumerate() {
                    let corr: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= corr * vk;
                    }
                    h[i] += corr;
                }
                w_after = norm2(&w);
            }
            if !w_after.is_finite() || h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Breakdown(
                    "non-finite entries in the Arnoldi process".to_string(),
                ));
            }
            h[j + 1] = w_after;
            if w_after > 1e-14 * w_before.max(1.0) {
                let mut v_next = w;
                for v in &mut v_next {
                    *v /= w_after;
                }
                basis.push(v_next);
            } else {
                happy = true;
            }

            // apply accumulated rotations, then create the new one
            for (i, &(c, s)) in givens.iter().enumerate() {
                let t = c * h[i] + s * h[i + 1];
                h[i + 1] = -s * h[i] + c * h[i + 1];
                h[i] = t;
            }
            let (c, s) = {
                let (a, bb) = (h[j], h[j + 1]);
                let r = (a * a + bb * bb).sqrt();
                if r == 0.0 {
                    (1.0, 0.0)
                } else {
                    (a / r, bb / r)
                }
            };
            let hjj = c * h[j] + s * h[j + 1];
            h[j] = hjj;
            h[j + 1] = 0.0;
            givens.push((c, s));
            let t = c * g[j] + s * g[j + 1];
            g[j + 1] = -s * g[j] + c * g[j + 1];
            g[j] = t;
            h_cols.push(h);

            inner += 1;
            total_iters += 1;
            let res_est = g[j + 1].abs();
            history.push(res_est);
            if !res_est.is_finite() {
                return Err(Error::Breakdown(format!(
                    "non-finite residual estimate {res_est}"
                )));
            }
            if happy || res_est <= threshold || total_iters >= params.max_iters {
                break;
            }
        }

        // back-substitute the triangular Hessenberg system
        let k = inner;
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                acc -= h_cols[jj][i] * yj;
            }
            y[i] = acc / h_cols[i][i];
        }
        if flexible {
            for (jj, yj) in y.iter().enumerate() {
                for (xi, zi) in x.iter_mut().zip(&precond_basis[jj]) {
                    *xi += yj * zi;
                }
            }
        } else {
            let mut vy = vec![0.0; n];
            for (jj, yj) in y.iter().enumerate() {
                for (vi, bi) in vy.iter_mut().zip(&basis[jj]) {
                    *vi += yj * bi;
                }
            }
            let mut z = vec![0.0; n];
            precond.apply_into(&vy, &mut z)?;
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += zi;
            }
        }

        // recompute the true residual; restart if the estimate was optimistic
        op.apply_into(&x, &mut scratch)?;
        let rnorm = norm2(
            &b.iter()
                .zip(&scratch)
                .map(|(bi, ai)| bi - ai)
                .collect::<Vec<_>>(),
        );
        if !rnorm.is_finite() {
            return Err(Error::Breakdown(format!("non-finite true residual {rnorm}")));
        }
        if rnorm <= threshold || total_iters >= params.max_iters || happy {
            return Ok(finish(x, history, total_iters, rnorm));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    struct ExactInverse(DenseMatrix);
    impl PrecondOp for ExactInverse {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
            let s = self.0.lu_solve(r)?;
            z.copy_from_slice(&s);
            Ok(())
        }
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = SparseMatrix::identity(20);
        let b: Vec<f64> = (0..20).map(|i| i as f64 - 10.0).collect();
        let (x, stats) = gmres(&a, None, &b, None, &KrylovParams::default()).unwrap();
        assert!(stats.converged);
        assert!(stats.iterations <= 1, "iterations {}", stats.iterations);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn exactly_preconditioned_converges_in_one_iteration() {
        let n = 10;
        let diag: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let a = SparseMatrix::from_diagonal(&diag);
        let pre = ExactInverse(a.to_dense());
        let b = vec![1.0; n];
        let (x, stats) = gmres(&a, Some(&pre), &b, None, &KrylovParams::default()).unwrap();
        assert!(stats.converged);
        assert_eq!(stats.iterations, 1);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / diag[i]).abs() < 1e-12);
        }
    }

    fn random_well_conditioned(n: usize, seed: u64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        for r in 0..n {
            for c in 0..n {
                m.set(r, c, next() / (n as f64).sqrt());
            }
            m.add_at(r, r, 2.0);
        }
        m
    }

    #[test]
    fn unpreconditioned_matches_dense_oracle() {
        let n = 50;
        let a = random_well_conditioned(n, 7);
        let b: Vec<f64> = (0..n).map(|i| ((i * 31 + 7) % 23) as f64 - 11.0).collect();
        let params = KrylovParams {
            rel_tol: 1e-10,
            ..Default::default()
        };
        let (x, stats) = gmres(&a, None, &b, None, &params).unwrap();
        assert!(stats.converged);
        let want = a.lu_solve(&b).unwrap();
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (xi, wi) in x.iter().zip(&want) {
            assert!((xi - wi).abs() < 1e-7 * scale, "{xi} vs {wi}");
        }
    }

    #[test]
    fn residual_history_is_monotone_within_a_cycle() {
        let n = 60;
        let a = random_well_conditioned(n, 99);
        let b = vec![1.0; n];
        let (_, stats) = gmres(&a, None, &b, None, &KrylovParams::default()).unwrap();
        assert_eq!(stats.residual_history.len(), stats.iterations + 1);
        for w in stats.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn max_iters_reached_reports_nonconverged() {
        let n = 40;
        let a = random_well_conditioned(n, 3);
        let b = vec![1.0; n];
        let params = KrylovParams {
            rel_tol: 1e-14,
            max_iters: 2,
            restart: 2,
            ..Default::default()
        };
        let (_, stats) = gmres(&a, None, &b, None, &params).unwrap();
        assert!(!stats.converged);
        assert_eq!(stats.iterations, 2);
    }

    #[test]
    fn true_residual_bound_holds_when_converged() {
        let n = 80;
        let a = random_well_conditioned(n, 21);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let params = KrylovParams::default();
        let (x, stats) = gmres(&a, None, &b, None, &params).unwrap();
        assert!(stats.converged);
        let mut ax = vec![0.0; n];
        a.apply_into(&x, &mut ax).unwrap();
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let bound =
            params.rel_tol * (1.0 + 10.0 * f64::EPSILON * stats.iterations as f64);
        assert!(norm2(&r) / norm2(&b) <= bound);
    }

    struct NanOp(usize);
    impl LinOp for NanOp {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply_into(&self, _x: &[f64], y: &mut [f64]) -> Result<()> {
            y.fill(f64::NAN);
            Ok(())
        }
    }

    #[test]
    fn non_finite_residual_is_a_breakdown_error() {
        let op = NanOp(4);
        let b = vec![1.0; 4];
        assert!(matches!(
            gmres(&op, None, &b, None, &KrylovParams::default()),
            Err(Error::Breakdown(_))
        ));
    }

    #[test]
    fn warm_start_zero_rhs_takes_zero_iterations() {
        let a = SparseMatrix::identity(5);
        let (x, stats) = gmres(&a, None, &[0.0; 5], None, &KrylovParams::default()).unwrap();
        assert!(stats.converged);
        assert_eq!(stats.iterations, 0);
        assert_eq!(x, vec![0.0; 5]);
    }

    struct VaryingSweeps {
        a: SparseMatrix,
        dinv: Vec<f64>,
        calls: std::cell::Cell<usize>,
    }
    impl PrecondOp for VaryingSweeps {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
            // deliberately vary the sweep count call-to-call
            let sweeps = 1 + self.calls.get() % 3;
            self.calls.set(self.calls.get() + 1);
            for v in z.iter_mut() {
                *v = 0.0;
            }
            let mut work = vec![0.0; r.len()];
            for _ in 0..sweeps {
                self.a.spmv_into(z, &mut work, false)?;
                for i in 0..z.len() {
                    z[i] += 0.66 * self.dinv[i] * (r[i] - work[i]);
                }
            }
            Ok(())
        }
        fn is_fixed_linear(&self) -> bool {
            false
        }
    }

    #[test]
    fn non_fixed_preconditioner_switches_to_flexible_and_converges() {
        let n = 40;
        let a = random_well_conditioned(n, 5);
        let mut trip = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = a.get(r, c);
                if v != 0.0 {
                    trip.push((r, c, v));
                }
            }
        }
        let asp = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let dinv = asp.diag_inverse(1e-14).unwrap();
        let pre = VaryingSweeps {
            a: asp.clone(),
            dinv,
            calls: std::cell::Cell::new(0),
        };
        let b = vec![1.0; n];
        let (x, stats) = gmres(&asp, Some(&pre), &b, None, &KrylovParams::default()).unwrap();
        assert!(stats.converged, "flexible run must converge");
        let mut ax = vec![0.0; n];
        asp.apply_into(&x, &mut ax).unwrap();
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-7 * norm2(&b));
    }

    struct FixedJacobi {
        a: SparseMatrix,
        dinv: Vec<f64>,
    }
    impl PrecondOp for FixedJacobi {
        fn dim(&self) -> usize {
            self.a.nrows()
        }
        fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
            for v in z.iter_mut() {
                *v = 0.0;
            }
            let mut work = vec![0.0; r.len()];
            for _ in 0..2 {
                self.a.spmv_into(z, &mut work, false)?;
                for i in 0..z.len() {
                    z[i] += 0.66 * self.dinv[i] * (r[i] - work[i]);
                }
            }
            Ok(())
        }
    }

    #[test]
    fn flexible_equals_standard_for_fixed_preconditioner() {
        let n = 30;
        let dense = random_well_conditioned(n, 11);
        let mut trip = Vec::new();
        for r in 0..n {
            for c in 0..n {
                trip.push((r, c, dense.get(r, c)));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let pre = FixedJacobi {
            a: a.clone(),
            dinv: a.diag_inverse(1e-14).unwrap(),
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let params = KrylovParams::default();
        let (x1, s1) = gmres(&a, Some(&pre), &b, None, &params).unwrap();
        let (x2, s2) = fgmres(&a, Some(&pre), &b, None, &params).unwrap();
        assert_eq!(s1.iterations, s2.iterations);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-12 * q.abs().max(1.0));
        }
    }
}
