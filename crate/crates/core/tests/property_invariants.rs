//! Property tests for the sparse kernels: the invariants that must hold for
//! any input, checked on randomized matrices.

use defective_flow::sparse::{scaled_triple_product, DenseMatrix, SparseMatrix};
use proptest::prelude::*;

fn sparse_matrix_strategy(
    max_rows: usize,
    max_cols: usize,
) -> impl Strategy<Value = SparseMatrix> {
    (1..max_rows, 1..max_cols)
        .prop_flat_map(|(r, c)| {
            let triplets = proptest::collection::vec(
                (0..r, 0..c, -10.0f64..10.0),
                0..(3 * (r + c)).max(4),
            );
            (Just(r), Just(c), triplets)
        })
        .prop_map(|(r, c, t)| SparseMatrix::from_triplets(r, c, &t).unwrap())
}

proptest! {
    #[test]
    fn triple_product_with_itself_is_symmetric(
        x in sparse_matrix_strategy(24, 24),
        seed in 0u64..1000,
    ) {
        // positive diagonal scaling
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let dinv: Vec<f64> = (0..x.ncols())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.1 + ((s >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect();
        let p = scaled_triple_product(&x, &dinv, &x).unwrap();
        let scale = p.max_abs().max(1.0);
        for r in 0..p.nrows() {
            for c in 0..p.ncols() {
                prop_assert!((p.get(r, c) - p.get(c, r)).abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn spmv_matches_the_dense_oracle(x in sparse_matrix_strategy(40, 40), seed in 0u64..1000) {
        let mut s = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(99);
        let v: Vec<f64> = (0..x.ncols())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect();
        let got = x.mul_vec(&v).unwrap();
        let xd = x.to_dense();
        let scale = x.max_abs().max(1.0);
        for r in 0..x.nrows() {
            let want: f64 = (0..x.ncols()).map(|c| xd.get(r, c) * v[c]).sum();
            prop_assert!((got[r] - want).abs() <= 1e-13 * scale * (x.ncols() as f64));
        }
    }

    #[test]
    fn dense_lu_reproduces_the_rhs(n in 2usize..32, seed in 0u64..1000) {
        // diagonally shifted random matrix: well-conditioned by construction
        let mut s = seed.wrapping_mul(0xD1342543DE82EF95).wrapping_add(7);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut a = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                a.set(r, c, next());
            }
            a.add_at(r, r, 3.0);
        }
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let x = a.lu_solve(&b).unwrap();
        let ax = a.mul_vec(&x).unwrap();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
        let res = ax
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        prop_assert!(res <= 1e-11 * bn, "residual {res} vs rhs norm {bn}");
    }

    #[test]
    fn csr_storage_invariants_hold_after_assembly(x in sparse_matrix_strategy(30, 30)) {
        // offsets monotone, last offset = nnz, strictly increasing columns
        let rp = x.row_ptr();
        prop_assert_eq!(rp[0], 0);
        prop_assert_eq!(*rp.last().unwrap(), x.nnz());
        for r in 0..x.nrows() {
            prop_assert!(rp[r] <= rp[r + 1]);
            let (cols, _) = x.row(r);
            for w in cols.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}

/// The spec-level size: one deterministic 200x200 spmv-vs-dense check.
#[test]
fn spmv_dense_oracle_at_200() {
    let n = 200;
    let mut s = 0xABCDu64;
    let mut next = move || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    };
    let mut trip = Vec::new();
    for r in 0..n {
        for _ in 0..12 {
            let c = ((next() + 0.5) * n as f64) as usize % n;
            trip.push((r, c, next()));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
    let v: Vec<f64> = (0..n).map(|_| next()).collect();
    let got = a.mul_vec(&v).unwrap();
    let ad = a.to_dense();
    for r in 0..n {
        let want: f64 = (0..n).map(|c| ad.get(r, c) * v[c]).sum();
        assert!((got[r] - want).abs() <= 1e-13 * (n as f64));
    }
}
