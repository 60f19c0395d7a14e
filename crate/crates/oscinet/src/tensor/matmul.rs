//! Row-major matrix product kernels.
//!
//! Each kernel computes every output row with a fixed sequential inner loop,
//! so splitting rows across threads cannot change any result bit. Parallelism
//! kicks in only above a size threshold and is capped by [`crate::threads`].

use rayon::prelude::*;

/// Work threshold (multiply-adds) below which threading is never worth it.
const PAR_THRESHOLD: usize = 1 << 18;

fn row_parallel(flops: usize) -> bool {
    flops >= PAR_THRESHOLD && crate::threads() > 1
}

/// C[m,n] = A[m,k] * B[k,n].
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    let row = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    };
    if row_parallel(m * k * n) {
        crate::pool().install(|| out.par_chunks_mut(n).enumerate().for_each(row));
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// C[m,n] = A[m,k] * B^T where B is [n,k].
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![0.0; m * n];
    let row = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    };
    if row_parallel(m * k * n) {
        crate::pool().install(|| out.par_chunks_mut(n).enumerate().for_each(row));
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// C[k,n] = A^T * B where A is [m,k] and B is [m,n].
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut out = vec![0.0; k * n];
    let row = |(p, out_row): (usize, &mut [f64])| {
        for i in 0..m {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    };
    if row_parallel(m * k * n) {
        crate::pool().install(|| out.par_chunks_mut(n).enumerate().for_each(row));
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn kernels_agree_with_naive() {
        let m = 7;
        let k = 5;
        let n = 4;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).cos()).collect();
        let reference = naive(&a, &b, m, k, n);
        let nn = matmul_nn(&a, &b, m, k, n);
        for (x, y) in nn.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12);
        }
        // A * B == (A) *_nt (B^T)
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let nt = matmul_nt(&a, &bt, m, k, n);
        for (x, y) in nt.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12);
        }
        // A * B == (A^T) *_tn with A^T given as the [m,k] original.
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let tn = matmul_tn(&at, &b, k, m, n);
        // at is [k,m] so A^T has shape [m,k]... matmul_tn(at: [k x m]) gives (at^T)*b = A*B
        for (x, y) in tn.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
