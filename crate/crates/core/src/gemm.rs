//! Thin row-major wrappers over `matrixmultiply`.

/// `c = a * b` with `a: m x k`, `b: k x n`, `c: m x n`, all row-major.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c += a^T * a` for `a: rows x cols` row-major; `c` is `cols x cols`.
pub(crate) fn accumulate_gram(rows: usize, cols: usize, a: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= rows * cols && c.len() >= cols * cols);
    unsafe {
        matrixmultiply::dgemm(
            cols, rows, cols,
            1.0,
            a.as_ptr(), 1, cols as isize,
            a.as_ptr(), cols as isize, 1,
            1.0,
            c.as_mut_ptr(), cols as isize, 1,
        );
    }
}

/// `c = a^T * b` for `a: rows x m`, `b: rows x n`; `c` is `m x n`.
pub(crate) fn matmul_at_b(rows: usize, m: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= rows * m && b.len() >= rows * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, rows, n,
            1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}
