//! Poincaré constants and first eigenvalues of the coclosed Hodge–Laplace
//! problem, plus the family scans built on them.
//!
//! `λ₁` is the smallest nonzero value of `‖D u‖² / ‖u‖²` over cochains
//! orthogonal to the closed ones. It is computed from the penalised pencil
//!
//! ```text
//! (Cᵀ M_Y C + γ M_W B W Bᵀ M_W) x = θ M_W x,   W = diag(M_V)⁻¹,
//! ```
//!
//! whose eigenvectors split into coexact ones (eigenvalue from the first
//! term), exact ones (from the second) and harmonic ones (`θ = 0`). Each
//! Ritz vector is classified by the share of its eigenvalue carried by the
//! first term; `λ₁` is the smallest coexact one. The penalty `γ` only moves
//! exact eigenvalues out of the way and never changes `λ₁`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::ExtensionProblem;
use crate::forms::DeRhamOps;
use crate::hodge::{Reduced, NULL_TOL};
use crate::linalg::eigen::largest_eigenvalue;
use crate::linalg::sparse::dot;
use crate::linalg::{smallest_eigenpairs, Csr, EigenOptions, Factor};
use crate::mesh::{rank_mod_p, BOUNDARY};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Natural boundary conditions, coclosed eigenforms.
    NeumannCoclosed,
    /// Zero trace on the whole boundary.
    Dirichlet,
    /// Natural conditions in a stabilised inner product (masses supplied by
    /// the caller through [`DeRhamOps::with_masses`]).
    Stabilized,
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann" | "neumann-coclosed" => Ok(Convention::NeumannCoclosed),
            "dirichlet" => Ok(Convention::Dirichlet),
            "stabilized" => Ok(Convention::Stabilized),
            other => Err(Error::Config(format!("unknown convention `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    /// Complex id, hex.
    pub geometry: String,
    /// Largest edge length.
    pub h: f64,
    pub degree: usize,
    pub convention: Convention,
    pub lambda1: f64,
    /// `1 / √λ₁`.
    pub poincare_constant: f64,
    /// Harmonic eigenvalues found (`θ ≈ 0`).
    pub kernel_dim: usize,
    /// Betti number for the convention.
    pub expected_kernel_dim: usize,
    /// `dim ker D` on the constrained space.
    pub closed_dim: usize,
    /// `‖A x − θ M x‖∞ / (‖A‖∞ ‖x‖∞)` of the `λ₁` pair.
    pub residual: f64,
    pub iterations: usize,
    /// Penalty on the exact part that was needed.
    pub penalty: f64,
}

impl SpectralReport {
    pub fn is_consistent(&self) -> bool {
        self.lambda1 > 0.0 && self.kernel_dim == self.expected_kernel_dim
    }
}

/// `λ₁` together with its eigenvector (free DOFs of the reduced complex).
#[derive(Clone, Debug)]
pub struct FirstEigen {
    pub report: SpectralReport,
    pub vector: Vec<f64>,
}

fn max_edge(ops: &DeRhamOps) -> f64 {
    let c = ops.complex();
    (0..ops.count(1))
        .map(|e| {
            let s = c.simplex(1, e);
            crate::mesh::dist(c.vertex(s[0]), c.vertex(s[1]))
        })
        .fold(0.0, f64::max)
}

/// First coexact eigenpair on a reduced complex.
pub fn first_eigen(reduced: &Reduced, k: usize, convention: Convention) -> Result<FirstEigen> {
    let ops = reduced.ops();
    let n = ops.dim();
    if k >= n {
        return Err(Error::Config(format!(
            "coclosed eigenproblem needs degree below {n}, got {k}"
        )));
    }
    let nw = reduced.n_free(k);
    let c = reduced.d(k);
    let m = reduced.m(k);
    let upper = reduced.m(k + 1).congruence(c);
    let lower = if k == 0 {
        Csr::zeros(nw, nw)
    } else {
        let b = reduced.d(k - 1);
        let w: Vec<f64> = reduced.m(k - 1).diag().iter().map(|v| 1.0 / v).collect();
        Csr::diagonal(&w).congruence(&m.matmul(b).transpose())
    };
    let expected = reduced.betti(k)?;
    let closed_dim = nw - rank_mod_p(c);
    let mf = Factor::cholesky(m)?;
    let scale = largest_eigenvalue(&upper, &mf, 60).max(f64::MIN_POSITIVE);
    let mut penalty = if k == 0 { 1.0 } else { 10.0 };
    let mut extra = 4;
    for _ in 0..6 {
        let a = upper.add(&lower.scale(penalty));
        let lmax = largest_eigenvalue(&a, &mf, 60).max(scale);
        let nev = (expected + extra).min(nw);
        let opts = EigenOptions {
            block: (nev + 6).min(nw),
            tol: 1e-11,
            max_iter: 3000,
            polish: 1,
        };
        let pairs = smallest_eigenpairs(&a, m, nev, 1e-8 * lmax, opts)?;
        let threshold = NULL_TOL * lmax;
        let kernel_dim = pairs.values[..nev].iter().take_while(|&&v| v < threshold).count();
        let found = (kernel_dim..nev).find(|&i| {
            let x = &pairs.vectors[i];
            let share = dot(x, &upper.matvec(x)) / pairs.values[i];
            share > 0.5
        });
        if let Some(i) = found {
            let lambda1 = pairs.values[i];
            let report = SpectralReport {
                geometry: format!("{:016x}", ops.complex().id()),
                h: max_edge(ops),
                degree: k,
                convention,
                lambda1,
                poincare_constant: 1.0 / lambda1.sqrt(),
                kernel_dim,
                expected_kernel_dim: expected,
                closed_dim,
                residual: pairs.residuals[i],
                iterations: pairs.iterations,
                penalty,
            };
            return Ok(FirstEigen {
                report,
                vector: pairs.vectors[i].clone(),
            });
        }
        if nev == nw {
            break;
        }
        penalty *= 10.0;
        extra *= 2;
    }
    Err(Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    })
}

/// `λ₁` and `C = 1/√λ₁` of degree `k` under a convention.
pub fn poincare_constant(ops: &Arc<DeRhamOps>, k: usize, convention: Convention) -> Result<SpectralReport> {
    let label = match convention {
        Convention::Dirichlet => Some(BOUNDARY),
        _ => None,
    };
    let reduced = Reduced::new(ops.clone(), label)?;
    Ok(first_eigen(&reduced, k, convention)?.report)
}

/// One checked relation.
#[derive(Clone, Debug, Serialize)]
pub struct Relation {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Reported but not asserted.
    pub informational: bool,
}

impl Relation {
    fn le(name: &str, lhs: f64, rhs: f64, slack: f64, informational: bool) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + slack),
            informational,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RelationsReport {
    pub diameter: f64,
    pub neumann: Vec<SpectralReport>,
    pub dirichlet: Vec<SpectralReport>,
    pub relations: Vec<Relation>,
}

impl RelationsReport {
    /// All non-informational relations hold.
    pub fn passed(&self) -> bool {
        self.relations.iter().all(|r| r.holds || r.informational)
    }
}

/// Diameter bounds, reciprocal identities, the Neumann/Dirichlet ordering
/// and the degree chains, on a convex geometry.
pub fn appendix_a_relations(ops: &Arc<DeRhamOps>) -> Result<RelationsReport> {
    let n = ops.dim();
    let diam = ops.complex().diameter();
    let pi2 = std::f64::consts::PI.powi(2);
    let neumann: Vec<_> = (0..n)
        .map(|k| poincare_constant(ops, k, Convention::NeumannCoclosed))
        .collect::<Result<_>>()?;
    let dirichlet: Vec<_> = (0..n)
        .map(|k| poincare_constant(ops, k, Convention::Dirichlet))
        .collect::<Result<_>>()?;
    let mut rel = vec![
        Relation::le("C_P^(0) <= diam/pi", neumann[0].poincare_constant, diam / std::f64::consts::PI, 0.0, false),
        Relation::le("n pi^2/diam^2 <= kappa_1^(0)", n as f64 * pi2 / (diam * diam), dirichlet[0].lambda1, 0.0, false),
        Relation::le("lambda_1^(0) <= kappa_1^(0)", neumann[0].lambda1, dirichlet[0].lambda1, 0.0, false),
    ];
    for r in neumann.iter().chain(&dirichlet) {
        let prod = r.poincare_constant * r.lambda1.sqrt();
        rel.push(Relation {
            name: format!("C * sqrt(lambda) = 1 ({:?}, k={})", r.convention, r.degree),
            lhs: prod,
            rhs: 1.0,
            holds: (prod - 1.0).abs() <= 4.0 * f64::EPSILON,
            informational: false,
        });
    }
    // degree chains, 5% slack; the printed index pattern is ambiguous, so
    // these are reported only
    for k in 0..n.saturating_sub(1) {
        rel.push(Relation::le(
            &format!("lambda_1^({k}) <= lambda_1^({})", k + 1),
            neumann[k].lambda1,
            neumann[k + 1].lambda1,
            0.05,
            true,
        ));
        rel.push(Relation::le(
            &format!("kappa_1^({}) <= kappa_1^({k})", k + 1),
            dirichlet[k + 1].lambda1,
            dirichlet[k].lambda1,
            0.05,
            true,
        ));
    }
    Ok(RelationsReport {
        diameter: diam,
        neumann,
        dirichlet,
        relations: rel,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub degree: usize,
    /// Dirichlet constant of the exterior part `A`.
    pub c_a: f64,
    pub c_k: f64,
    /// `c_a ≤ c_k + tol`.
    pub holds: bool,
    /// Constant of `A` over zero-trace cochains orthogonal to all closed
    /// cochains of `A` (see [`dirichlet_constant_all_closed`]); `None` above
    /// the dense size limit.
    pub c_a_all_closed: Option<f64>,
    /// `c_a_all_closed ≤ c_k + tol`.
    pub holds_all_closed: Option<bool>,
}

/// Largest DOF count for which the dense variant is computed.
pub const DENSE_LIMIT: usize = 1500;

/// `C_{P,0}(A)` against `C_{P,0}(K)` for the exterior part `A = K \ Ω̄`,
/// with an absolute slack `tol`.
///
/// Extension by zero maps zero-trace cochains of `A` that are orthogonal to
/// *all* closed cochains of `A` into the relative coexact space of `K`
/// exactly, so `c_a_all_closed ≤ c_k` always holds. The relative constant
/// `c_a` itself is orthogonal only to closed zero-trace cochains and is not
/// monotone in general for `k ≥ 1`.
pub fn dirichlet_monotonicity_check(problem: &ExtensionProblem, k: usize, tol: f64) -> Result<MonotonicityReport> {
    let c_k = poincare_constant(problem.ops_k(), k, Convention::Dirichlet)?.poincare_constant;
    let ops = problem.ops_a().ok_or(Error::EmptySelection)?;
    let c_a = poincare_constant(ops, k, Convention::Dirichlet)?.poincare_constant;
    let c_a_all_closed = if ops.count(k) <= DENSE_LIMIT {
        Some(dirichlet_constant_all_closed(ops, k)?)
    } else {
        None
    };
    Ok(MonotonicityReport {
        degree: k,
        c_a,
        c_k,
        holds: c_a <= c_k + tol,
        c_a_all_closed,
        holds_all_closed: c_a_all_closed.map(|c| c <= c_k + tol),
    })
}

/// `sup ‖u‖ / ‖D u‖` over zero-trace `u` that are `M`-orthogonal to every
/// closed `k`-cochain, boundary values unrestricted. Dense.
pub fn dirichlet_constant_all_closed(ops: &Arc<DeRhamOps>, k: usize) -> Result<f64> {
    use faer::{Mat, Side};
    let red = Reduced::new(ops.clone(), Some(BOUNDARY))?;
    let f = red.free(k).to_vec();
    if f.is_empty() {
        return Ok(0.0);
    }
    let nk = ops.count(k);
    let closed = dense_kernel(&ops.coboundary(k).to_dense(), nk);
    // constraint rows: closedᵀ M[:, f]
    let m_full = ops.mass(k).to_dense();
    let g = Mat::from_fn(closed.ncols(), f.len(), |i, j| {
        (0..nk).map(|r| closed[(r, i)] * m_full[(r, f[j])]).sum::<f64>()
    });
    let z = dense_kernel(&g, f.len());
    if z.ncols() == 0 {
        return Ok(0.0);
    }
    let c = red.d(k).to_dense();
    let my = red.m(k + 1).to_dense();
    let mw = red.m(k).to_dense();
    let cz = &c * &z;
    let a = cz.transpose() * &my * &cz;
    let b = z.transpose() * &mw * &z;
    let eb = b
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let s = eb.S().column_vector();
    let u = eb.U();
    let r = z.ncols();
    let bih = u * Mat::from_fn(r, r, |i, j| if i == j { 1.0 / s[i].sqrt() } else { 0.0 }) * u.transpose();
    let h = &bih * &a * &bih;
    let h = Mat::from_fn(r, r, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let vals = e.S().column_vector();
    let min = (0..r).map(|i| vals[i]).fold(f64::INFINITY, f64::min);
    Ok(1.0 / min.sqrt())
}

/// Orthonormal null-space basis of a dense matrix with `n` columns.
fn dense_kernel(a: &faer::Mat<f64>, n: usize) -> faer::Mat<f64> {
    use faer::Mat;
    if a.nrows() == 0 {
        return Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    }
    let svd = a.svd().expect("dense svd");
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let rank = (0..s.nrows()).filter(|&i| s[i] > 1e-10 * smax).count();
    let v = svd.V();
    Mat::from_fn(n, n - rank, |i, j| v[(i, rank + j)])
}

/// One member of a uniform Poincaré scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub member: String,
    pub degree: usize,
    pub components: usize,
    pub neumann: f64,
    pub dirichlet: f64,
    /// Largest `HΛ` extension ratio observed (random data and the first
    /// eigenform of `Ω`).
    pub extension_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformScanReport {
    pub c_p_k: Vec<f64>,
    pub rows: Vec<ScanRow>,
    /// Per degree: `C_P(K) (1 + max ratio)`.
    pub bound_proxy: Vec<f64>,
    pub passed: bool,
}

/// Neumann and Dirichlet constants of each member `Ω_i ⊂ K`, compared with
/// the proxy bound `C_P(K)(1 + max_i ratio_i)` per degree.
pub fn uniform_poincare_scan(
    members: &[(String, ExtensionProblem)],
    degrees: &[usize],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<UniformScanReport> {
    let first = members.first().ok_or(Error::EmptySelection)?;
    let ops_k = first.1.ops_k();
    let c_p_k: Vec<f64> = degrees
        .iter()
        .map(|&k| Ok(poincare_constant(ops_k, k, Convention::NeumannCoclosed)?.poincare_constant))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..members.len()).flat_map(|i| degrees.iter().map(move |&k| (i, k))).collect();
    let rows: Vec<ScanRow> = par::map(exec, &jobs, |&(i, k)| scan_member(&members[i].0, &members[i].1, k, samples, seed))
        .into_iter()
        .collect::<Result<_>>()?;
    let bound_proxy: Vec<f64> = degrees
        .iter()
        .zip(&c_p_k)
        .map(|(&k, &c)| {
            let r = rows.iter().filter(|r| r.degree == k).map(|r| r.extension_ratio).fold(0.0, f64::max);
            c * (1.0 + r)
        })
        .collect();
    let passed = rows.iter().all(|r| {
        let j = degrees.iter().position(|&k| k == r.degree).unwrap();
        r.neumann.is_finite() && r.dirichlet.is_finite() && r.neumann <= bound_proxy[j]
    });
    Ok(UniformScanReport {
        c_p_k,
        rows,
        bound_proxy,
        passed,
    })
}

fn scan_member(name: &str, p: &ExtensionProblem, k: usize, samples: usize, seed: u64) -> Result<ScanRow> {
    use rand::SeedableRng;
    let ops = p.ops_omega();
    let reduced = p.omega_hodge().reduced();
    let eig = first_eigen(reduced, k, Convention::NeumannCoclosed)?;
    let dirichlet = poincare_constant(ops, k, Convention::Dirichlet)?.poincare_constant;
    let mut ratio = 0.0f64;
    let u = ops.cochain(k, eig.vector.clone())?;
    ratio = ratio.max(p.extend(&u)?.ratio);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (k as u64) << 32);
    for _ in 0..samples {
        let w = p.random_datum(k, &mut rng)?;
        ratio = ratio.max(p.extend(&w)?.ratio);
    }
    Ok(ScanRow {
        member: name.to_string(),
        degree: k,
        components: crate::mesh::betti_numbers(ops.complex(), None)?[0],
        neumann: eig.report.poincare_constant,
        dirichlet,
        extension_ratio: ratio,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenScanRow {
    pub member: String,
    pub diameter: f64,
    pub degree: usize,
    pub lambda1: f64,
    /// `λ₁ · diam⁴`
    pub quartic: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenScanReport {
    pub rows: Vec<EigenScanRow>,
    /// `λ₁ s²` for the dilated copies.
    pub dilation: Vec<(f64, f64)>,
    /// Largest relative deviation of `λ₁ s²` from its first value.
    pub dilation_spread: f64,
    /// Least-squares slope of `log λ₁` against `log diam` (degree of the
    /// family scan).
    pub exponent: f64,
    pub min_quartic: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Neumann `λ₁` over a family of complexes, the dilation law on scaled
/// copies of `base`, and the log-log exponent of the family.
pub fn eigenvalue_lower_bound_scan(
    family: &[(String, Arc<DeRhamOps>)],
    base: &Arc<DeRhamOps>,
    scales: &[f64],
    degree: usize,
    exec: Exec,
) -> Result<EigenScanReport> {
    let rows: Vec<EigenScanRow> = par::map(exec, family, |(name, ops)| -> Result<EigenScanRow> {
        let r = poincare_constant(ops, degree, Convention::NeumannCoclosed)?;
        let d = ops.complex().diameter();
        Ok(EigenScanRow {
            member: name.clone(),
            diameter: d,
            degree,
            lambda1: r.lambda1,
            quartic: r.lambda1 * d.powi(4),
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let dilation: Vec<(f64, f64)> = par::map(exec, scales, |&s| -> Result<(f64, f64)> {
        let c = Arc::new(base.complex().scaled(s));
        let ops = Arc::new(DeRhamOps::assemble(c)?);
        Ok((s, poincare_constant(&ops, degree, Convention::NeumannCoclosed)?.lambda1 * s * s))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let v0 = dilation.first().map_or(1.0, |d| d.1);
    let dilation_spread = dilation.iter().map(|d| (d.1 - v0).abs() / v0).fold(0.0, f64::max);
    let exponent = loglog_slope(
        &rows.iter().map(|r| r.diameter).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.lambda1).collect::<Vec<_>>(),
    );
    let min_quartic = rows.iter().map(|r| r.quartic).fold(f64::INFINITY, f64::min);
    Ok(EigenScanReport {
        rows,
        dilation,
        dilation_spread,
        exponent,
        min_quartic,
    })
}
