//! Float GEMM helpers for the full-precision layers and for the oracles the
//! packed kernels are benchmarked against.
//!
//! Every output element is produced by one sequential fixed-order reduction,
//! so results are bit-identical regardless of how many worker threads rayon
//! uses. Parallelism is only over disjoint output rows.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// C = A · Bᵀ with A (m×k) and B (n×k), both row-major; result (m×n).
pub fn matmul_nt<S: Scalar>(a: &[S], m: usize, k: usize, b: &[S], n: usize) -> Vec<S> {
    assert_eq!(a.len(), m * k, "lhs size mismatch");
    assert_eq!(b.len(), n * k, "rhs size mismatch");
    let mut out = vec![S::zero(); m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ai = &a[i * k..(i + 1) * k];
        for (j, slot) in row.iter_mut().enumerate() {
            let bj = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for t in 0..k {
                acc += ai[t] * bj[t];
            }
            *slot = acc;
        }
    });
    out
}

/// C = A · B with A (m×k) and B (k×n), both row-major; result (m×n).
pub fn matmul_nn<S: Scalar>(a: &[S], m: usize, k: usize, b: &[S], n: usize) -> Vec<S> {
    assert_eq!(a.len(), m * k, "lhs size mismatch");
    assert_eq!(b.len(), k * n, "rhs size mismatch");
    let mut out = vec![S::zero(); m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for t in 0..k {
            let coeff = a[i * k + t];
            let bt = &b[t * n..(t + 1) * n];
            for (slot, &bv) in row.iter_mut().zip(bt) {
                *slot += coeff * bv;
            }
        }
    });
    out
}

/// C = Aᵀ · B with A (m×k) and B (m×n), both row-major; result (k×n).
pub fn matmul_tn<S: Scalar>(a: &[S], m: usize, k: usize, b: &[S], n: usize) -> Vec<S> {
    assert_eq!(a.len(), m * k, "lhs size mismatch");
    assert_eq!(b.len(), m * n, "rhs size mismatch");
    let mut out = vec![S::zero(); k * n];
    out.par_chunks_mut(n).enumerate().for_each(|(t, row)| {
        for i in 0..m {
            let coeff = a[i * k + t];
            let bi = &b[i * n..(i + 1) * n];
            for (slot, &bv) in row.iter_mut().zip(bi) {
                *slot += coeff * bv;
            }
        }
    });
    out
}

/// Dense float-complex GEMM against pre-transposed complex weights:
/// X = xr + i·xi (m×k), W = wr + i·wi (n×k); returns (m×n) re and im parts of
/// X · Wᵀ under the complex product rule. Serves as the oracle and the
/// full-precision complex layer kernel.
#[allow(clippy::too_many_arguments)]
pub fn complex_matmul_nt<S: Scalar>(
    xr: &[S],
    xi: &[S],
    m: usize,
    k: usize,
    wr: &[S],
    wi: &[S],
    n: usize,
) -> (Vec<S>, Vec<S>) {
    assert_eq!(xr.len(), m * k);
    assert_eq!(xi.len(), m * k);
    assert_eq!(wr.len(), n * k);
    assert_eq!(wi.len(), n * k);
    let mut re = vec![S::zero(); m * n];
    let mut im = vec![S::zero(); m * n];
    re.par_chunks_mut(n)
        .zip(im.par_chunks_mut(n))
        .enumerate()
        .for_each(|(i, (re_row, im_row))| {
            let xri = &xr[i * k..(i + 1) * k];
            let xii = &xi[i * k..(i + 1) * k];
            for j in 0..n {
                let wrj = &wr[j * k..(j + 1) * k];
                let wij = &wi[j * k..(j + 1) * k];
                let mut ax = S::zero();
                let mut by = S::zero();
                let mut bx = S::zero();
                let mut ay = S::zero();
                for t in 0..k {
                    ax += wrj[t] * xri[t];
                    by += wij[t] * xii[t];
                    bx += wij[t] * xri[t];
                    ay += wrj[t] * xii[t];
                }
                re_row[j] = ax - by;
                im_row[j] = bx + ay;
            }
        });
    (re, im)
}
