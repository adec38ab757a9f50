//! Small dense linear-algebra helpers.
//!
//! Matrices are `nalgebra` in the public API; products, inverses and
//! decompositions run through `faer`, pinned to sequential mode so results
//! do not depend on the thread count.

use std::sync::Once;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Accum, Mat, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::C64;

fn sequential() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(Par::Seq));
}

fn to_faer<T: Copy>(a: &DMatrix<T>) -> Mat<T> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer<T: nalgebra::Scalar + Copy>(a: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// `a * b`.
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    if a.nrows() * a.ncols() * b.ncols() < 32 * 32 * 32 {
        return a * b;
    }
    sequential();
    let (fa, fb) = (to_faer(a), to_faer(b));
    let mut out = Mat::<C64>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, fa.as_ref(), fb.as_ref(), C64::new(1.0, 0.0), Par::Seq);
    from_faer(out.as_ref())
}

/// Inverse by partially pivoted LU; `None` when a pivot vanishes.
pub fn inverse(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    if a.nrows() != a.ncols() {
        return None;
    }
    sequential();
    let inv = to_faer(a).partial_piv_lu().inverse();
    let out = from_faer(inv.as_ref());
    out.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(out)
}

/// Largest singular value. Exact SVD up to 2048, subspace iteration
/// on `A^* A` beyond.
pub fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.nrows().max(a.ncols()) <= 2048 {
        return singular_values(a).first().copied().unwrap_or(0.0);
    }
    subspace_norm(|v| a * v, |v| a.adjoint() * v, a.ncols(), 1e-12)
}

/// `||A||` by block subspace iteration on `A^* A` with Rayleigh-Ritz,
/// robust to clustered top singular values.
pub fn subspace_norm(
    apply: impl Fn(&DMatrix<C64>) -> DMatrix<C64>,
    apply_adj: impl Fn(&DMatrix<C64>) -> DMatrix<C64>,
    dim: usize,
    rtol: f64,
) -> f64 {
    let b = 8.min(dim);
    let mut v = DMatrix::from_fn(dim, b, |i, j| {
        C64::new(((i * 7919 + j * 104729) % 1009) as f64 / 1009.0 - 0.5, ((i * 31 + j * 17) % 7) as f64 * 0.05)
    });
    let mut est = 0.0;
    for _ in 0..500 {
        let q = v.qr().q();
        let w = apply_adj(&apply(&q));
        let h = q.adjoint() * &w;
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let top = h.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        let new = top.max(0.0).sqrt();
        if (new - est).abs() <= rtol * new {
            return new;
        }
        est = new;
        v = w;
    }
    est
}

/// Power iteration for `||A||` given `A` and `A^*` as closures.
pub fn power_norm(
    apply: impl Fn(&DVector<C64>) -> DVector<C64>,
    apply_adj: impl Fn(&DVector<C64>) -> DVector<C64>,
    dim: usize,
    max_iter: usize,
    rtol: f64,
) -> f64 {
    // deterministic, non-symmetric start vector
    let mut v = DVector::from_fn(dim, |i, _| C64::new(1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0, 0.1 * (i % 3) as f64));
    v /= C64::new(v.norm(), 0.0);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = apply_adj(&apply(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let new = nw.sqrt();
        v = w / C64::new(nw, 0.0);
        if (new - est).abs() <= rtol * new {
            return new;
        }
        est = new;
    }
    est
}

/// Least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Ascending eigenvalues and eigenvectors (as columns) of a real symmetric matrix.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    sequential();
    let eig = to_faer(a).self_adjoint_eigen(Side::Lower).expect("symmetric eigensolver did not converge");
    let vals = (0..a.nrows()).map(|i| eig.S()[i]).collect();
    (vals, from_faer(eig.U()))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: &DMatrix<C64>) -> Vec<C64> {
    sequential();
    to_faer(a).eigenvalues().expect("eigensolver did not converge")
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<C64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    sequential();
    let mut s = to_faer(a).singular_values().expect("SVD did not converge");
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| C64::new(((i * 31 + j * 17) % 13) as f64 - 6.0, (i as f64 - j as f64) * 0.01))
    }

    #[test]
    fn norms_agree() {
        let a = sample(600);
        let exact = a.clone().singular_values().max();
        assert!((spectral_norm(&a) - exact).abs() < 1e-9 * exact);
        let sub = subspace_norm(|v| &a * v, |v| a.adjoint() * v, 600, 1e-12);
        assert!((sub - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn products_and_inverses_match_nalgebra() {
        let a = sample(70) + DMatrix::identity(70, 70) * C64::new(40.0, 0.0);
        let b = sample(70).transpose();
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-10 * (&a * &b).norm());
        let inv = inverse(&a).unwrap();
        assert!((matmul(&a, &inv) - DMatrix::identity(70, 70)).norm() < 1e-10);
        let mut z = a.clone();
        z.row_mut(5).fill(C64::new(0.0, 0.0));
        assert!(inverse(&z).is_none());
    }

    #[test]
    fn line_fit() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (s, c) = linear_fit(&pts);
        assert!((s + 2.0).abs() < 1e-14 && (c - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (v, _) = symmetric_eigen(&a);
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
    }
}
