use std::fmt::Debug;

use num_traits::Float;

/// Element type of the model: f32 for training and inference, f64 for
/// gradient checking.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `C = alpha·A·B + beta·C` with arbitrary strides (see `matrixmultiply`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: usize, csa: usize, b: &[Self], rsb: usize, csb: usize, beta: Self, c: &mut [Self]);

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], rsb: usize, csb: usize, beta: f32, c: &mut [f32]) {
        check(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: extents checked above; C is row-major m×n.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), rsa as isize, csa as isize, b.as_ptr(), rsb as isize, csb as isize, beta,
                c.as_mut_ptr(), n as isize, 1,
            )
        }
    }

    fn of(x: f64) -> f32 {
        x as f32
    }

    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
        check(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: extents checked above; C is row-major m×n.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), rsa as isize, csa as isize, b.as_ptr(), rsb as isize, csb as isize, beta,
                c.as_mut_ptr(), n as isize, 1,
            )
        }
    }

    fn of(x: f64) -> f64 {
        x
    }

    fn f64(self) -> f64 {
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn check(m: usize, k: usize, n: usize, a: usize, rsa: usize, csa: usize, b: usize, rsb: usize, csb: usize, c: usize) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a, "gemm: A too short");
    assert!((k - 1) * rsb + (n - 1) * csb < b, "gemm: B too short");
    assert!(m * n <= c, "gemm: C too short");
}

/// `y = x·w (+ beta·y)`; x is m×k, w is k×n, all row-major.
pub fn matmul<T: Scalar>(x: &[T], w: &[T], y: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    T::gemm(m, k, n, x, k, 1, w, n, 1, beta, y);
}

/// `dw += xᵀ·dy`; x is m×k, dy is m×n, dw is k×n.
pub fn matmul_tn_acc<T: Scalar>(x: &[T], dy: &[T], dw: &mut [T], m: usize, k: usize, n: usize) {
    T::gemm(k, m, n, x, 1, k, dy, n, 1, T::one(), dw);
}

/// `dx = dy·wᵀ (+ beta·dx)`; dy is m×n, w is k×n, dx is m×k.
pub fn matmul_nt<T: Scalar>(dy: &[T], w: &[T], dx: &mut [T], m: usize, n: usize, k: usize, beta: T) {
    T::gemm(m, n, k, dy, n, 1, w, 1, n, beta, dx);
}
