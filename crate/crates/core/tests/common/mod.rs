//! Dense reference computations. Everything here works at full density with
//! SVDs and symmetric eigendecompositions, independently of the sparse
//! saddle-point machinery under test.
#![allow(dead_code)]

use faer::{Mat, Side};

pub fn dense(a: &cochain_ext::linalg::Csr) -> Mat<f64> {
    a.to_dense()
}

pub fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// `(M^{1/2}, M^{-1/2})` of a symmetric positive definite matrix.
pub fn sqrt_pair(m: &Mat<f64>) -> (Mat<f64>, Mat<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Mat::zeros(0, 0), Mat::zeros(0, 0));
    }
    let eig = m.self_adjoint_eigen(Side::Lower).unwrap();
    let s = eig.S().column_vector();
    let u = eig.U();
    let d = Mat::from_fn(n, n, |i, j| if i == j { s[i].sqrt() } else { 0.0 });
    let di = Mat::from_fn(n, n, |i, j| if i == j { 1.0 / s[i].sqrt() } else { 0.0 });
    (u * &d * u.transpose(), u * &di * u.transpose())
}

/// Orthonormal basis of the column space, by SVD with a relative cutoff.
pub fn range(a: &Mat<f64>) -> Mat<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    let svd = a.thin_svd().unwrap();
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let r = (0..s.nrows()).filter(|&i| s[i] > 1e-10 * smax).count();
    let u = svd.U();
    Mat::from_fn(a.nrows(), r, |i, j| u[(i, j)])
}

/// Orthonormal basis of the null space.
pub fn kernel(a: &Mat<f64>) -> Mat<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    }
    let svd = a.svd().unwrap();
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let r = (0..s.nrows()).filter(|&i| s[i] > 1e-10 * smax).count();
    let v = svd.V();
    Mat::from_fn(n, n - r, |i, j| v[(i, r + j)])
}

pub fn pinv(a: &Mat<f64>) -> Mat<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Mat::zeros(a.ncols(), a.nrows());
    }
    let svd = a.thin_svd().unwrap();
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let sinv = Mat::from_fn(s.nrows(), s.nrows(), |i, j| {
        if i == j && s[i] > 1e-10 * smax {
            1.0 / s[i]
        } else {
            0.0
        }
    });
    svd.V() * &sinv * svd.U().transpose()
}

fn projector(basis: &Mat<f64>) -> Mat<f64> {
    basis * basis.transpose()
}

/// Dense Hodge projectors of degree `k` in original coordinates, given
/// `B = D_{k-1}`, `C = D_k` and masses `M_V, M_W, M_Y` (all restricted to
/// free DOFs).
pub struct Projectors {
    pub exact: Mat<f64>,
    pub coexact: Mat<f64>,
    pub harmonic: Mat<f64>,
}

pub fn hodge_projectors(b: &Mat<f64>, c: &Mat<f64>, mv: &Mat<f64>, mw: &Mat<f64>, my: &Mat<f64>) -> Projectors {
    let n = mw.nrows();
    let (mw_h, mw_ih) = sqrt_pair(mw);
    let (_, mv_ih) = sqrt_pair(mv);
    let (my_h, _) = sqrt_pair(my);
    let bh = if b.ncols() == 0 { Mat::zeros(n, 0) } else { &mw_h * b * &mv_ih };
    let ch = if c.nrows() == 0 { Mat::zeros(0, n) } else { &my_h * c * &mw_ih };
    let pe = projector(&range(&bh));
    let pc = projector(&range(&ch.transpose().to_owned()));
    let eye = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let ph = &eye - &pe - &pc;
    Projectors {
        exact: &mw_ih * &pe * &mw_h,
        coexact: &mw_ih * &pc * &mw_h,
        harmonic: &mw_ih * &ph * &mw_h,
    }
}

/// Minimal `M_V`-norm `α` minimising `‖B α - ω‖_{M_W}`.
pub fn min_norm_potential(b: &Mat<f64>, mv: &Mat<f64>, mw: &Mat<f64>, omega: &[f64]) -> Vec<f64> {
    let (mw_h, _) = sqrt_pair(mw);
    let (_, mv_ih) = sqrt_pair(mv);
    let bh = &mw_h * b * &mv_ih;
    to_vec(&(&mv_ih * pinv(&bh) * &mw_h * col(omega)))
}

/// `min ½ xᵀ Q x + fᵀ x` subject to `A x = r`, by the null-space method:
/// `x = x_p + Z y` with `Z` an orthonormal kernel basis of `A`.
/// Returns `(x, constraint residual ‖A x_p - r‖)`.
pub fn equality_qp(q: &Mat<f64>, f: &[f64], a: &Mat<f64>, r: &[f64]) -> (Vec<f64>, f64) {
    let n = q.ncols();
    let xp = if a.nrows() == 0 { Mat::zeros(n, 1) } else { pinv(a) * col(r) };
    let res = if a.nrows() == 0 { 0.0 } else { (a * &xp - col(r)).norm_l2() };
    let z = kernel(a);
    let zqz = z.transpose() * q * &z;
    let rhs = -(z.transpose() * (q * &xp + col(f)));
    let y = pinv(&zqz) * rhs;
    (to_vec(&(&xp + &z * y)), res)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
