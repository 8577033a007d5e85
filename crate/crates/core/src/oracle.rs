//! Dense reference solutions for small complexes.
//!
//! Everything here works at full density with SVDs and symmetric
//! eigendecompositions, independently of the sparse saddle-point solvers.
//! Intended for complexes with a few hundred DOFs.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::extension::ExtensionProblem;
use crate::forms::{Cochain, DeRhamOps};
use crate::linalg::Csr;
use crate::mesh::Variant;

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn select(m: &Mat<f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn dense(a: &Csr) -> Mat<f64> {
    a.to_dense()
}

fn eye(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn failed(what: &str) -> Error {
    Error::Factorization(format!("dense {what} failed"))
}

/// `(M^{1/2}, M^{-1/2})` of a symmetric positive definite matrix.
fn sqrt_pair(m: &Mat<f64>) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| failed("eigendecomposition"))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let d = Mat::from_fn(n, n, |i, j| if i == j { s[i].sqrt() } else { 0.0 });
    let di = Mat::from_fn(n, n, |i, j| if i == j { 1.0 / s[i].sqrt() } else { 0.0 });
    Ok((u * &d * u.transpose(), u * &di * u.transpose()))
}

/// Orthonormal basis of the column space; singular values below
/// `rel · σ_max` count as zero.
fn range(a: &Mat<f64>, rel: f64) -> Result<Mat<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let svd = a.thin_svd().map_err(|_| failed("SVD"))?;
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let r = (0..s.nrows()).filter(|&i| s[i] > rel * smax).count();
    let u = svd.U();
    Ok(Mat::from_fn(a.nrows(), r, |i, j| u[(i, j)]))
}

fn kernel(a: &Mat<f64>) -> Result<Mat<f64>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(eye(n));
    }
    let svd = a.svd().map_err(|_| failed("SVD"))?;
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let r = (0..s.nrows()).filter(|&i| s[i] > 1e-10 * smax).count();
    let v = svd.V();
    Ok(Mat::from_fn(n, n - r, |i, j| v[(i, r + j)]))
}

fn pinv(a: &Mat<f64>) -> Result<Mat<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Mat::zeros(a.ncols(), a.nrows()));
    }
    let svd = a.thin_svd().map_err(|_| failed("SVD"))?;
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let sinv = Mat::from_fn(s.nrows(), s.nrows(), |i, j| {
        if i == j && s[i] > 1e-10 * smax {
            1.0 / s[i]
        } else {
            0.0
        }
    });
    Ok(svd.V() * &sinv * svd.U().transpose())
}

/// Dense Hodge projectors of one degree, in original coordinates.
pub struct Projectors {
    pub exact: Mat<f64>,
    pub coexact: Mat<f64>,
    pub harmonic: Mat<f64>,
}

/// Projectors for `B = D_{k-1}`, `C = D_k` and masses `M_V, M_W, M_Y`.
pub fn hodge_projectors(b: &Mat<f64>, c: &Mat<f64>, mv: &Mat<f64>, mw: &Mat<f64>, my: &Mat<f64>) -> Result<Projectors> {
    let n = mw.nrows();
    let (mw_h, mw_ih) = sqrt_pair(mw)?;
    let (_, mv_ih) = sqrt_pair(mv)?;
    let (my_h, _) = sqrt_pair(my)?;
    let bh = if b.ncols() == 0 { Mat::zeros(n, 0) } else { &mw_h * b * &mv_ih };
    let ch = if c.nrows() == 0 { Mat::zeros(0, n) } else { &my_h * c * &mw_ih };
    let re = range(&bh, 1e-10)?;
    let rc = range(&ch.transpose().to_owned(), 1e-10)?;
    let pe = &re * re.transpose();
    let pc = &rc * rc.transpose();
    let ph = eye(n) - &pe - &pc;
    Ok(Projectors {
        exact: &mw_ih * &pe * &mw_h,
        coexact: &mw_ih * &pc * &mw_h,
        harmonic: &mw_ih * &ph * &mw_h,
    })
}

/// Minimal `M_V`-norm `α` minimising `‖B α - ω‖_{M_W}`.
pub fn min_norm_potential(b: &Mat<f64>, mv: &Mat<f64>, mw: &Mat<f64>, omega: &[f64]) -> Result<Vec<f64>> {
    let (mw_h, _) = sqrt_pair(mw)?;
    let (_, mv_ih) = sqrt_pair(mv)?;
    let bh = &mw_h * b * &mv_ih;
    Ok(to_vec(&(&mv_ih * pinv(&bh)? * &mw_h * col(omega))))
}

/// `min ½ xᵀ Q x` subject to `A x = r`, by the null-space method.
/// Returns `(x, ‖A x - r‖)`.
pub fn equality_qp(q: &Mat<f64>, a: &Mat<f64>, r: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = q.ncols();
    let xp = if a.nrows() == 0 { Mat::zeros(n, 1) } else { pinv(a)? * col(r) };
    let z = kernel(a)?;
    let zqz = z.transpose() * q * &z;
    let rhs = -(z.transpose() * (q * &xp));
    let x = &xp + &z * (pinv(&zqz)? * rhs);
    let res = if a.nrows() == 0 { 0.0 } else { (a * &x - col(r)).norm_l2() };
    Ok((to_vec(&x), res))
}

/// Components of the dense Hodge split `ω = exact + coexact + harmonic` with
/// natural boundary conditions.
pub fn hodge_split(ops: &DeRhamOps, omega: &Cochain) -> Result<[Vec<f64>; 3]> {
    let k = omega.degree;
    let n = ops.dim();
    let nw = ops.count(k);
    let b = if k == 0 { Mat::zeros(nw, 0) } else { dense(ops.coboundary(k - 1)) };
    let c = if k == n { Mat::zeros(0, nw) } else { dense(ops.coboundary(k)) };
    let mv = if k == 0 { Mat::zeros(0, 0) } else { dense(ops.mass(k - 1)) };
    let my = if k == n { Mat::zeros(0, 0) } else { dense(ops.mass(k + 1)) };
    let p = hodge_projectors(&b, &c, &mv, &dense(ops.mass(k)), &my)?;
    let w = col(&omega.values);
    Ok([
        to_vec(&(&p.exact * &w)),
        to_vec(&(&p.coexact * &w)),
        to_vec(&(&p.harmonic * &w)),
    ])
}

/// Dense minimal-norm potential of `ω` (degree `k ≥ 1`).
pub fn potential(ops: &DeRhamOps, omega: &Cochain) -> Result<Vec<f64>> {
    let k = omega.degree;
    let b = dense(ops.coboundary(k - 1));
    min_norm_potential(&b, &dense(ops.mass(k - 1)), &dense(ops.mass(k)), &omega.values)
}

fn label_mask(ops: &DeRhamOps, variant: Variant, k: usize) -> Result<Vec<bool>> {
    ops.complex().label_mask(variant.exterior_label(), k)
}

/// Harmonic fields of the exterior complex for the variant, as full-length
/// columns.
fn harmonic_fields(ops: &DeRhamOps, variant: Variant, k: usize) -> Result<Mat<f64>> {
    let n = ops.dim();
    let free = |j: usize| -> Result<Vec<usize>> {
        if j > n {
            return Ok(vec![]);
        }
        let m = label_mask(ops, variant, j)?;
        Ok((0..m.len()).filter(|&i| !m[i]).collect())
    };
    let fv = if k == 0 { vec![] } else { free(k - 1)? };
    let (fw, fy) = (free(k)?, free(k + 1)?);
    let b = if k == 0 {
        Mat::zeros(fw.len(), 0)
    } else {
        select(&dense(ops.coboundary(k - 1)), &fw, &fv)
    };
    let c = if k == n {
        Mat::zeros(0, fw.len())
    } else {
        select(&dense(ops.coboundary(k)), &fy, &fw)
    };
    let mv = if k == 0 { Mat::zeros(0, 0) } else { select(&dense(ops.mass(k - 1)), &fv, &fv) };
    let mw = select(&dense(ops.mass(k)), &fw, &fw);
    let my = if k == n { Mat::zeros(0, 0) } else { select(&dense(ops.mass(k + 1)), &fy, &fy) };
    let p = hodge_projectors(&b, &c, &mv, &mw, &my)?;
    // singular values of a projector cluster at 0 and O(1): cut absolutely
    let basis = if fw.is_empty() {
        Mat::zeros(0, 0)
    } else {
        let svd = p.harmonic.thin_svd().map_err(|_| failed("SVD"))?;
        let s = svd.S().column_vector();
        let r = (0..s.nrows()).filter(|&i| s[i] > 1e-6).count();
        let u = svd.U();
        Mat::from_fn(fw.len(), r, |i, j| u[(i, j)])
    };
    let mut full = Mat::zeros(ops.count(k), basis.ncols());
    for (i, &fi) in fw.iter().enumerate() {
        for j in 0..basis.ncols() {
            full[(fi, j)] = basis[(i, j)];
        }
    }
    Ok(full)
}

fn lift(p: &ExtensionProblem, ops: &DeRhamOps, k: usize, values: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; ops.count(k)];
    for &(i, j) in p.shared(k) {
        v[j] = values[i];
    }
    v
}

/// One recursive step on the exterior complex as a dense equality QP:
/// minimise `‖λ‖_M` subject to `D λ = ξ`, the prescribed trace, and the
/// harmonic moments.
fn step(p: &ExtensionProblem, omega: &[f64], k: usize, xi: Option<&[f64]>) -> Result<Vec<f64>> {
    let ops = p.ops_a().ok_or_else(|| Error::Config("Ω = K has no exterior".into()))?;
    let variant = p.variant();
    let n = ops.dim();
    let m = dense(ops.mass(k));
    let q = harmonic_fields(ops, variant, k)?;
    let c: Vec<f64> = if k == 0 || q.ncols() == 0 {
        vec![0.0; q.ncols()]
    } else {
        let w = p.ops_omega().cochain(k, omega.to_vec())?;
        let alpha = potential(p.ops_omega(), &w)?;
        let alpha_a = lift(p, ops, k - 1, &alpha);
        let d_alpha = dense(ops.coboundary(k - 1)) * col(&alpha_a);
        to_vec(&(q.transpose() * &m * d_alpha))
    };
    let mask = label_mask(ops, variant, k)?;
    let mut g = lift(p, ops, k, omega);
    if variant == Variant::ZeroTrace {
        let shared: Vec<bool> = {
            let mut s = vec![false; mask.len()];
            for &(_, j) in p.shared(k) {
                s[j] = true;
            }
            s
        };
        for (i, gi) in g.iter_mut().enumerate() {
            if mask[i] && !shared[i] {
                *gi = 0.0;
            }
        }
    }
    let fixed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let ncols = ops.count(k);
    let d_rows = if k < n { ops.count(k + 1) } else { 0 };
    let nrows = d_rows + fixed.len() + q.ncols();
    let mut a = Mat::zeros(nrows, ncols);
    let mut r = vec![0.0; nrows];
    if k < n {
        let d = dense(ops.coboundary(k));
        for i in 0..d_rows {
            for j in 0..ncols {
                a[(i, j)] = d[(i, j)];
            }
            r[i] = xi.map_or(0.0, |x| x[i]);
        }
    }
    for (row, &i) in fixed.iter().enumerate() {
        a[(d_rows + row, i)] = 1.0;
        r[d_rows + row] = g[i];
    }
    let qm = q.transpose() * &m;
    for j in 0..q.ncols() {
        for i in 0..ncols {
            a[(d_rows + fixed.len() + j, i)] = qm[(j, i)];
        }
        r[d_rows + fixed.len() + j] = c[j];
    }
    let (x, res) = equality_qp(&m, &a, &r)?;
    let scale = r.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if res > 1e-9 * scale {
        return Err(Error::Incompatible {
            what: format!("dense extension constraints at degree {k}"),
            residual: res,
        });
    }
    Ok(x)
}

/// Dense exterior field `λ` of the extension of `ω`, by the same two-level
/// recursion as the sparse solver.
pub fn extension_exterior(p: &ExtensionProblem, omega: &Cochain) -> Result<Vec<f64>> {
    let k = omega.degree;
    let n = p.dim();
    if k == n {
        return step(p, &omega.values, k, None);
    }
    let sigma = p.ops_omega().d(omega)?;
    let count_a = p.ops_a().map_or(0, |o| o.count((k + 2).min(n)));
    let upper = if k + 1 == n {
        step(p, &sigma.values, k + 1, None)?
    } else {
        step(p, &sigma.values, k + 1, Some(&vec![0.0; count_a]))?
    };
    step(p, &omega.values, k, Some(&upper))
}
