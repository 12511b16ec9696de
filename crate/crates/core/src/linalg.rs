//! Dense complex linear-algebra helpers.
//!
//! Matrices are nalgebra types throughout; products, factorizations and
//! eigen-decompositions of anything but tiny matrices are delegated to faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// `(m + m*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Below this dimension nalgebra's own routines are used.
const FAER_MIN_DIM: usize = 24;

fn to_faer(m: &CMat) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `a * b`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    if a.nrows().max(a.ncols()).max(b.ncols()) < FAER_MIN_DIM {
        return a * b;
    }
    from_faer((to_faer(a) * to_faer(b)).as_ref())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    if n >= FAER_MIN_DIM {
        if let Ok(eig) = to_faer(&hermitian_part(m)).self_adjoint_eigen(Side::Lower) {
            let values = eig.S().column_vector().iter().map(|z| z.re).collect();
            return (values, from_faer(eig.U()));
        }
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_max_eigenvalue(m: &CMat) -> (f64, f64) {
    if m.nrows() >= FAER_MIN_DIM {
        if let Ok(vals) = to_faer(&hermitian_part(m)).self_adjoint_eigenvalues(Side::Lower) {
            return (vals[0], vals[vals.len() - 1]);
        }
    }
    let (vals, _) = hermitian_eigen(m);
    (vals[0], vals[vals.len() - 1])
}

/// Rebuild `V diag(g(λ)) V*` from a Hermitian eigen-decomposition.
pub fn spectral_map(values: &[f64], vectors: &CMat, g: impl Fn(f64) -> f64) -> CMat {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(g(v));
    }
    scaled * vectors.adjoint()
}

/// Inverse of a Hermitian matrix with eigenvalues clamped from below at `floor`.
/// Returns the inverse and the smallest (unclamped) eigenvalue.
pub fn clamped_hermitian_inverse(m: &CMat, floor: f64) -> (CMat, f64) {
    let (vals, vecs) = hermitian_eigen(m);
    let min = vals[0];
    (spectral_map(&vals, &vecs, |v| 1.0 / v.max(floor)), min)
}

/// Hermitian square root of a PSD matrix (negative eigenvalues treated as 0).
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    spectral_map(&vals, &vecs, |v| v.max(0.0).sqrt())
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    if m.nrows() < FAER_MIN_DIM {
        return m.clone().try_inverse();
    }
    let inv = from_faer(to_faer(m).partial_piv_lu().inverse().as_ref());
    inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(inv)
}

/// Solve a Hermitian positive definite system via Cholesky.
pub fn cholesky_solve(m: &CMat, rhs: &CMat) -> Option<CMat> {
    if m.nrows() < FAER_MIN_DIM {
        let chol = hermitian_part(m).cholesky()?;
        return Some(chol.solve(rhs));
    }
    let llt = to_faer(&hermitian_part(m)).llt(Side::Lower).ok()?;
    Some(from_faer(llt.solve(to_faer(rhs)).as_ref()))
}

/// 2-norm condition number of a Hermitian matrix (infinite when not PD).
pub fn hermitian_condition(m: &CMat) -> f64 {
    let (min, max) = min_max_eigenvalue(m);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn block(m: &CMat, r: usize, c: usize, t: usize) -> CMat {
    m.view((r * t, c * t), (t, t)).into_owned()
}

pub fn set_block(m: &mut CMat, r: usize, c: usize, b: &CMat) {
    let t = b.nrows();
    m.view_mut((r * t, c * t), (t, t)).copy_from(b);
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `u* v`.
pub fn dot(u: &CVec, v: &CVec) -> C64 {
    u.dotc(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(3.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        assert!(vals[0] < vals[1]);
        let back = spectral_map(&vals, &vecs, |v| v);
        assert!((back - &m).norm() < 1e-12);
    }

    fn random_hpd(n: usize) -> CMat {
        let a =
            CMat::from_fn(n, n, |i, j| C64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64 - 2.0));
        &a * a.adjoint() + identity(n).scale(n as f64)
    }

    #[test]
    fn large_paths_agree_with_small_paths() {
        let n = 40;
        let m = random_hpd(n);
        let inv = inverse(&m).unwrap();
        assert!((&m * &inv - identity(n)).norm() < 1e-10);
        let prod = matmul(&m, &inv);
        assert!((prod - identity(n)).norm() < 1e-10);
        let rhs = CMat::from_fn(n, 2, |i, j| C64::new(i as f64, j as f64));
        let x = cholesky_solve(&m, &rhs).unwrap();
        assert!((&m * x - &rhs).norm() < 1e-9);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!((spectral_map(&vals, &vecs, |v| v) - &m).norm() < 1e-9 * m.norm());
        let (lo, hi) = min_max_eigenvalue(&m);
        assert!((lo - vals[0]).abs() < 1e-9 && (hi - vals[n - 1]).abs() < 1e-9);
    }

    #[test]
    fn clamped_inverse_of_pd_is_inverse() {
        let m = CMat::from_row_slice(2, 2, &[C64::new(4.0, 0.0), ONE, ONE, C64::new(3.0, 0.0)]);
        let (inv, min) = clamped_hermitian_inverse(&m, 1e-12);
        assert!(min > 0.0);
        assert!((&m * inv - identity(2)).norm() < 1e-12);
    }
}
