//! Row-major dense matrices and the handful of kernels the crate needs.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `out (m×n) = x (m×k) · wᵀ` where `w` is `n×k` row-major.
pub(crate) fn matmul_transb(x: &[f64], w: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: slice lengths checked above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            x.as_ptr(), k as isize, 1,
            w.as_ptr(), 1, k as isize,
            0.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out (m×n) = a (m×k) · b (k×n)`, all row-major.
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out (m×n) += aᵀ · b` where `a` is `k×m` and `b` is `k×n`, row-major.
pub(crate) fn matmul_transa_acc(a: &[f64], b: &[f64], out: &mut [f64], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

pub type Mat2 = [[f64; 2]; 2];

pub fn mat2_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Singular values of a 2×2 matrix, largest first.
pub fn singular_values2(a: &Mat2) -> [f64; 2] {
    let (lambda, _) = sym_eigen2(&gram2(a));
    [libm::sqrt(lambda[0].max(0.0)), libm::sqrt(lambda[1].max(0.0))]
}

/// Moore-Penrose pseudo-inverse of a 2×2 matrix via its singular value
/// decomposition. Singular values at or below `cutoff` are treated as zero.
pub fn pinv2(a: &Mat2, cutoff: f64) -> Mat2 {
    let (lambda, v) = sym_eigen2(&gram2(a));
    let mut out = [[0.0; 2]; 2];
    for k in 0..2 {
        let sigma = libm::sqrt(lambda[k].max(0.0));
        if !(sigma > cutoff) {
            continue;
        }
        let vk = [v[0][k], v[1][k]];
        // u_k = A v_k / σ_k, and A⁺ = Σ v_k u_kᵀ / σ_k
        let av = mat2_vec(a, vk);
        let scale = 1.0 / (sigma * sigma);
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] += vk[r] * av[c] * scale;
            }
        }
    }
    out
}

fn gram2(a: &Mat2) -> Mat2 {
    let p = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let q = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    let r = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    [[p, q], [q, r]]
}

/// Eigen-decomposition of a symmetric 2×2 matrix. Eigenvalues come back in
/// descending order; eigenvectors are the columns of the second result.
fn sym_eigen2(s: &Mat2) -> ([f64; 2], Mat2) {
    let (p, q, r) = (s[0][0], s[0][1], s[1][1]);
    let mean = 0.5 * (p + r);
    let half_diff = 0.5 * (p - r);
    let rad = libm::hypot(half_diff, q);
    let l1 = mean + rad;
    let l2 = mean - rad;
    // Rotation angle that diagonalizes the matrix.
    let theta = 0.5 * libm::atan2(2.0 * q, p - r);
    let (sn, cs) = (libm::sin(theta), libm::cos(theta));
    ([l1, l2], [[cs, -sn], [sn, cs]])
}
