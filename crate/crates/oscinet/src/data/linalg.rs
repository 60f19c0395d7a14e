//! Dense complex linear solve via LU with partial pivoting.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Solve `A x = b` for a dense row-major `n x n` complex matrix.
///
/// Partial pivoting on the column modulus; fails with the offending row if a
/// pivot is exactly zero. Internally the matrix is held as split real and
/// imaginary planes so the trailing update vectorizes; updates are row
/// parallel with a fixed per-row arithmetic order, so results do not depend
/// on the thread count.
pub fn solve_dense_complex(matrix: &[Complex64], n: usize, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    if matrix.len() != n * n || rhs.len() != n {
        return Err(Error::dim(format!(
            "system of order {n} needs {} matrix entries and {n} rhs entries, got {} and {}",
            n * n,
            matrix.len(),
            rhs.len()
        )));
    }
    let mut lu_re: Vec<f64> = matrix.iter().map(|c| c.re).collect();
    let mut lu_im: Vec<f64> = matrix.iter().map(|c| c.im).collect();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        // pivot: row with the largest modulus in this column
        let mut best = col;
        let mut best_mag = lu_re[col * n + col].powi(2) + lu_im[col * n + col].powi(2);
        for row in col + 1..n {
            let mag = lu_re[row * n + col].powi(2) + lu_im[row * n + col].powi(2);
            if mag > best_mag {
                best = row;
                best_mag = mag;
            }
        }
        if best_mag == 0.0 {
            return Err(Error::SingularMatrix { row: col });
        }
        if best != col {
            for j in 0..n {
                lu_re.swap(col * n + j, best * n + j);
                lu_im.swap(col * n + j, best * n + j);
            }
            perm.swap(col, best);
        }

        let (head_re, tail_re) = lu_re.split_at_mut((col + 1) * n);
        let (head_im, tail_im) = lu_im.split_at_mut((col + 1) * n);
        let piv_re = &head_re[col * n..col * n + n];
        let piv_im = &head_im[col * n..col * n + n];
        // 1/pivot via the conjugate
        let mag = best_mag;
        let inv_re = piv_re[col] / mag;
        let inv_im = -piv_im[col] / mag;
        let update = |(row_re, row_im): (&mut [f64], &mut [f64])| {
            let (a_re, a_im) = (row_re[col], row_im[col]);
            let f_re = a_re * inv_re - a_im * inv_im;
            let f_im = a_re * inv_im + a_im * inv_re;
            row_re[col] = f_re;
            row_im[col] = f_im;
            let start = col + 1;
            for (((r_re, r_im), &p_re), &p_im) in row_re[start..]
                .iter_mut()
                .zip(&mut row_im[start..])
                .zip(&piv_re[start..])
                .zip(&piv_im[start..])
            {
                *r_re -= f_re * p_re - f_im * p_im;
                *r_im -= f_re * p_im + f_im * p_re;
            }
        };
        let remaining = n - (col + 1);
        if remaining * remaining >= 1 << 14 && crate::threads() > 1 {
            crate::pool().install(|| {
                tail_re
                    .par_chunks_mut(n)
                    .zip(tail_im.par_chunks_mut(n))
                    .for_each(update)
            });
        } else {
            tail_re
                .chunks_mut(n)
                .zip(tail_im.chunks_mut(n))
                .for_each(update);
        }
    }

    let lu = |i: usize, j: usize| Complex64::new(lu_re[i * n + j], lu_im[i * n + j]);
    // forward substitution on the permuted rhs (L has unit diagonal)
    let mut x: Vec<Complex64> = perm.iter().map(|&p| rhs[p]).collect();
    for i in 1..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= lu(i, j) * x[j];
        }
        x[i] = acc;
    }
    // back substitution
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= lu(i, j) * x[j];
        }
        x[i] = acc / lu(i, i);
    }
    Ok(x)
}

/// `||A x - b||_2 / ||b||_2`; test and verification helper.
pub fn relative_residual(matrix: &[Complex64], n: usize, x: &[Complex64], rhs: &[Complex64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += matrix[i * n + j] * x[j];
        }
        num += (acc - rhs[i]).norm_sqr();
        den += rhs[i].norm_sqr();
    }
    (num / den).sqrt()
}
