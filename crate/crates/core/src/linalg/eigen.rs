//! Smallest eigenpairs of sparse symmetric pencils `A x = θ M x` with `A`
//! positive semidefinite and `M` positive definite.
//!
//! Block inverse iteration on `(A + s M)⁻¹ M` with a Rayleigh–Ritz step per
//! sweep. Kernel vectors of `A` come out first; callers classify them.

use faer::{Mat, Side};

use super::solve::Factor;
use super::sparse::{dot, Csr};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending Ritz values.
    pub values: Vec<f64>,
    /// `M`-orthonormal Ritz vectors.
    pub vectors: Vec<Vec<f64>>,
    /// `‖A x − θ M x‖∞ / (‖A‖∞ ‖x‖∞)` per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub block: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Extra sweeps after `tol` is met, pushing vectors to the roundoff floor.
    pub polish: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            block: 8,
            tol: 1e-12,
            max_iter: 400,
            polish: 0,
        }
    }
}

/// Deterministic start block (splitmix64 stream).
fn start_block(n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..p).map(|_| (0..n).map(|_| next()).collect()).collect()
}

pub fn inf_norm(a: &Csr) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of the pencil, by power iteration on `M⁻¹A`.
/// Accurate to a few percent, which is all the thresholds need.
pub fn largest_eigenvalue(a: &Csr, m_factor: &Factor, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = start_block(n, 1).pop().unwrap();
    let mut theta = 0.0;
    for _ in 0..iters {
        let ax = a.matvec(&x);
        let y = m_factor.solve(&ax);
        let mx = m_factor.matrix().matvec(&x);
        let xmx = dot(&x, &mx);
        if xmx <= 0.0 {
            break;
        }
        theta = dot(&x, &ax) / xmx;
        let ny = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ny == 0.0 {
            return 0.0;
        }
        x = y.iter().map(|v| v / ny).collect();
    }
    theta
}

/// `M`-orthonormal basis of the span of `cols` by classical Gram–Schmidt
/// with reorthogonalization, dropping numerically dependent directions.
fn m_orthonormalize(cols: &[Vec<f64>], m: &Csr) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut mq: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for c in cols {
        let mut v = c.clone();
        let n0 = dot(&v, &m.matvec(&v)).sqrt();
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = mq.iter().map(|w| dot(w, &v)).collect();
            for (qi, ci) in q.iter().zip(coeffs) {
                v.iter_mut().zip(qi).for_each(|(vi, x)| *vi -= ci * x);
            }
        }
        let mv = m.matvec(&v);
        let nv = dot(&v, &mv).sqrt();
        if nv <= 1e-10 * n0 {
            continue;
        }
        q.push(v.iter().map(|x| x / nv).collect());
        mq.push(mv.iter().map(|x| x / nv).collect());
    }
    q
}

/// Rayleigh–Ritz on an `M`-orthonormal basis; returns ascending pairs.
fn rayleigh_ritz(z: &[Vec<f64>], a: &Csr) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = z.len();
    let az: Vec<Vec<f64>> = z.iter().map(|c| a.matvec(c)).collect();
    let h = Mat::from_fn(p, p, |i, j| 0.5 * (dot(&z[i], &az[j]) + dot(&z[j], &az[i])));
    let eig = h.self_adjoint_eigen(Side::Lower).expect("small eigenproblem");
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = z.first().map_or(0, Vec::len);
    let mut vals = Vec::with_capacity(p);
    let mut vecs = Vec::with_capacity(p);
    for j in 0..p {
        vals.push(s[j]);
        let mut v = vec![0.0; n];
        for (i, c) in z.iter().enumerate() {
            let w = u[(i, j)];
            v.iter_mut().zip(c).for_each(|(vi, ci)| *vi += w * ci);
        }
        vecs.push(v);
    }
    (vals, vecs)
}

/// The `nev` smallest eigenpairs of `(A, M)`.
///
/// `shift > 0` makes `A + shift·M` positive definite even when `A` is
/// singular; it only changes convergence speed, never the result.
pub fn smallest_eigenpairs(
    a: &Csr,
    m: &Csr,
    nev: usize,
    shift: f64,
    opts: EigenOptions,
) -> Result<EigenPairs> {
    let n = a.nrows();
    let p = opts.block.max(nev + 2).min(n);
    if n == 0 || nev == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
            iterations: 0,
        });
    }
    let f = Factor::cholesky(&a.add(&m.scale(shift)))?;
    let anorm = inf_norm(a).max(shift * inf_norm(m));
    let mut x = m_orthonormalize(&start_block(n, p), m);
    let nev = nev.min(x.len());
    let mut last_res = f64::INFINITY;
    let mut polished = 0;
    for it in 1..=opts.max_iter {
        let y: Vec<Vec<f64>> = x.iter().map(|c| f.solve(&m.matvec(c))).collect();
        let z = m_orthonormalize(&y, m);
        let (vals, vecs) = rayleigh_ritz(&z, a);
        let residuals: Vec<f64> = vals
            .iter()
            .zip(&vecs)
            .map(|(&t, v)| {
                let av = a.matvec(v);
                let mv = m.matvec(v);
                let r = av
                    .iter()
                    .zip(&mv)
                    .fold(0.0f64, |acc, (x, y)| acc.max((x - t * y).abs()));
                let vn = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                r / (anorm * vn).max(f64::MIN_POSITIVE)
            })
            .collect();
        last_res = residuals[..nev].iter().cloned().fold(0.0, f64::max);
        x = vecs;
        if last_res <= opts.tol {
            if polished < opts.polish {
                polished += 1;
                continue;
            }
            return Ok(EigenPairs {
                values: vals,
                vectors: x,
                residuals,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: last_res,
    })
}

/// Null space of a positive semidefinite `A` relative to `M`: eigenvectors
/// whose eigenvalue is below `rel_tol · λ_max`. The block grows until a
/// nonzero eigenvalue is observed, so the dimension is found, not assumed.
pub fn null_space(a: &Csr, m: &Csr, hint: usize, rel_tol: f64) -> Result<NullSpace> {
    let n = a.nrows();
    if n == 0 {
        return Ok(NullSpace {
            basis: vec![],
            lambda_max: 0.0,
            gap: f64::INFINITY,
            residual: 0.0,
        });
    }
    let mf = Factor::cholesky(m)?;
    let lambda_max = largest_eigenvalue(a, &mf, 60).max(f64::MIN_POSITIVE);
    let threshold = rel_tol * lambda_max;
    let mut want = hint + 1;
    loop {
        let opts = EigenOptions {
            block: (want + 4).min(n),
            tol: 1e-12,
            max_iter: 400,
            polish: 3,
        };
        let pairs = smallest_eigenpairs(a, m, want.min(n), 1e-8 * lambda_max, opts)?;
        let dim = pairs.values.iter().take_while(|&&v| v < threshold).count();
        if dim < pairs.values.len().min(want) || want >= n {
            let gap = pairs.values.get(dim).copied().unwrap_or(f64::INFINITY);
            let residual = pairs.residuals[..dim].iter().cloned().fold(0.0, f64::max);
            let basis = pairs.vectors.into_iter().take(dim).collect();
            return Ok(NullSpace {
                basis,
                lambda_max,
                gap,
                residual,
            });
        }
        want = (2 * want).min(n);
    }
}

#[derive(Clone, Debug)]
pub struct NullSpace {
    pub basis: Vec<Vec<f64>>,
    pub lambda_max: f64,
    /// Smallest eigenvalue above the null threshold.
    pub gap: f64,
    pub residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn path_graph_spectrum() {
        let n = 30;
        let a = path_laplacian(n);
        let m = Csr::identity(n);
        let pairs = smallest_eigenpairs(&a, &m, 3, 1e-3, EigenOptions::default()).unwrap();
        for (j, &v) in pairs.values[..3].iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * j as f64 / n as f64).cos();
            assert!((v - exact).abs() < 1e-10, "{j}: {v} vs {exact}");
        }
    }

    #[test]
    fn null_space_of_disconnected_graph() {
        let a = path_laplacian(10);
        let b = path_laplacian(7);
        let t: Vec<_> = a
            .triplets()
            .chain(b.triplets().map(|(i, j, v)| (i + 10, j + 10, v)))
            .collect();
        let l = Csr::from_triplets(17, 17, t);
        let ns = null_space(&l, &Csr::identity(17), 0, 1e-8).unwrap();
        assert_eq!(ns.basis.len(), 2);
        assert!(ns.gap > 1e-3);
    }
}
