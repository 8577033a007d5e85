//! Discrete Hodge theory: harmonic spaces under boundary conditions,
//! minimal-norm potentials, exact projections and Hodge splits.
//!
//! Essential zero-trace conditions are imposed by eliminating the DOFs of a
//! labelled subcomplex ([`Reduced`]). Because labels are closed under taking
//! faces, the coboundary of a zero-trace cochain is again zero-trace, so the
//! reduced spaces form an exact subcomplex.
//!
//! All constrained minimal-norm problems go through one symmetric saddle
//! system ([`MixedSolver`]), the mixed Hodge–Laplace operator with a
//! harmonic block:
//!
//! ```text
//! [ -M_V      Bᵀ M_W     0     ] [σ]   [ -Bᵀ M_W g            ]
//! [ M_W B     Cᵀ M_Y C   M_W H ] [x] = [ Cᵀ M_Y (ξ - D g)     ]
//! [ 0         Hᵀ M_W     0     ] [p]   [ c - Hᵀ M_W g         ]
//! ```
//!
//! with `B = D_{k-1}`, `C = D_k` on free DOFs and `λ = g + x`. It is
//! nonsingular whenever `H` spans the harmonic space. When
//! `D λ = ξ, (λ, q) = c_q` is solvable, its solution has `σ = 0, p = 0` and
//! `λ` is the minimal-norm solution, characterised by the gauge condition
//! `(λ, D τ) = 0` for all zero-trace `τ`. Otherwise `λ` is the minimal-norm
//! least-squares solution of `D λ = ξ`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{save_cochain, Cochain, DeRhamOps};
use crate::linalg::sparse::{block, dot};
use crate::linalg::{null_space, Csr, Factor};
use crate::mesh::{betti_numbers, BOUNDARY};

/// Relative eigenvalue threshold for declaring a null vector.
pub const NULL_TOL: f64 = 1e-8;

/// A complex with the DOFs of one label eliminated (or none).
#[derive(Debug)]
pub struct Reduced {
    ops: Arc<DeRhamOps>,
    label: Option<String>,
    free: Vec<Vec<usize>>,
    /// `d[k] = D_k[free_{k+1}, free_k]`
    d: Vec<Csr>,
    /// `m[k] = M_k[free_k, free_k]`
    m: Vec<Csr>,
    /// `m_rows[k] = M_k[free_k, :]`
    m_rows: Vec<Csr>,
}

impl Reduced {
    pub fn new(ops: Arc<DeRhamOps>, label: Option<&str>) -> Result<Self> {
        let n = ops.dim();
        let free: Vec<Vec<usize>> = (0..=n + 1)
            .map(|k| -> Result<Vec<usize>> {
                if k > n {
                    return Ok(Vec::new());
                }
                match label {
                    None => Ok((0..ops.count(k)).collect()),
                    Some(l) => {
                        let mask = ops.complex().label_mask(l, k)?;
                        Ok((0..mask.len()).filter(|&i| !mask[i]).collect())
                    }
                }
            })
            .collect::<Result<_>>()?;
        let all: Vec<Vec<usize>> = (0..=n + 1).map(|k| (0..ops.count(k)).collect()).collect();
        let d = (0..=n).map(|k| ops.coboundary(k).select(&free[k + 1], &free[k])).collect();
        let m = (0..=n + 1).map(|k| ops.mass(k).select(&free[k], &free[k])).collect();
        let m_rows = (0..=n + 1).map(|k| ops.mass(k).select(&free[k], &all[k])).collect();
        Ok(Self {
            ops,
            label: label.map(str::to_string),
            free,
            d,
            m,
            m_rows,
        })
    }

    pub fn ops(&self) -> &Arc<DeRhamOps> {
        &self.ops
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn free(&self, k: usize) -> &[usize] {
        self.free.get(k).map_or(&[], Vec::as_slice)
    }

    pub fn n_free(&self, k: usize) -> usize {
        self.free(k).len()
    }

    pub fn d(&self, k: usize) -> &Csr {
        &self.d[k]
    }

    pub fn m(&self, k: usize) -> &Csr {
        &self.m[k]
    }

    /// Full-length vector from free values, zero on eliminated DOFs.
    pub fn embed(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.ops.count(k)];
        for (&i, &xi) in self.free(k).iter().zip(x) {
            v[i] = xi;
        }
        v
    }

    pub fn free_part(&self, k: usize, v: &[f64]) -> Vec<f64> {
        self.free(k).iter().map(|&i| v[i]).collect()
    }

    /// `M_k[free, :] v` for a full-length `v`.
    pub fn m_rows_times(&self, k: usize, v: &[f64]) -> Vec<f64> {
        self.m_rows[k].matvec(v)
    }

    /// Relative Betti number matching this reduction.
    pub fn betti(&self, k: usize) -> Result<usize> {
        Ok(betti_numbers(self.ops.complex(), self.label.as_deref())?[k])
    }

    /// Positive semidefinite form whose kernel on free `k`-DOFs is the
    /// harmonic space: `Cᵀ M_Y C + M_W B W Bᵀ M_W`, `W = diag(M_V)⁻¹`.
    pub fn hodge_form(&self, k: usize) -> Csr {
        let c = &self.d[k];
        let mut l = self.m[k + 1].congruence(c);
        if k > 0 {
            let b = &self.d[k - 1];
            let w: Vec<f64> = self.m[k - 1].diag().iter().map(|v| 1.0 / v).collect();
            let mb = self.m[k].matmul(b);
            let lower = Csr::diagonal(&w).congruence(&mb.transpose());
            l = l.add(&lower);
        }
        l
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicVariant {
    /// Natural boundary conditions everywhere.
    Absolute,
    /// Zero trace on the labelled part, typically the whole boundary.
    Relative(String),
    /// Zero trace on the labelled part only (e.g. the interface).
    Mixed(String),
    /// Absolute, in a stabilised inner product.
    Stabilized,
}

impl HarmonicVariant {
    pub fn label(&self) -> Option<&str> {
        match self {
            HarmonicVariant::Relative(l) | HarmonicVariant::Mixed(l) => Some(l),
            _ => None,
        }
    }

    pub fn relative_boundary() -> Self {
        HarmonicVariant::Relative(BOUNDARY.to_string())
    }
}

/// An `M`-orthonormal basis of a discrete harmonic space.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub degree: usize,
    pub variant: HarmonicVariant,
    /// Full-length cochains, zero on eliminated DOFs.
    pub basis: Vec<Cochain>,
    /// Free-DOF parts of `basis`.
    pub(crate) free: Vec<Vec<f64>>,
    /// `max |Gram - I|`.
    pub orthonormality: f64,
    /// Smallest nonzero eigenvalue over the largest of the Hodge form.
    pub relative_gap: f64,
}

impl HarmonicBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coefficients `(ω, q_i)_M` on the free DOFs of `reduced`.
    pub fn coefficients(&self, reduced: &Reduced, omega: &[f64]) -> Vec<f64> {
        let mw = reduced.m_rows_times(self.degree, omega);
        self.free.iter().map(|q| dot(q, &mw)).collect()
    }

    /// Writes `q_<i>.csv` files and `harmonic.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, q) in self.basis.iter().enumerate() {
            save_cochain(q, &dir.join(format!("q_{i}.csv")))?;
        }
        let sidecar = serde_json::json!({
            "variant": self.variant,
            "degree": self.degree,
            "dim": self.dim(),
            "orthonormality_residual": self.orthonormality,
        });
        let mut f = std::fs::File::create(dir.join("harmonic.json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

/// Harmonic basis of degree `k` on a reduced complex. The dimension comes
/// from the numerical kernel; the Betti number only sizes the first block.
pub fn harmonic_basis_reduced(reduced: &Reduced, k: usize, variant: HarmonicVariant) -> Result<HarmonicBasis> {
    let ops = reduced.ops();
    let nf = reduced.n_free(k);
    let hint = reduced.betti(k).unwrap_or(0);
    let (free, relative_gap) = if nf == 0 {
        (Vec::new(), f64::INFINITY)
    } else {
        let l = reduced.hodge_form(k);
        let ns = null_space(&l, reduced.m(k), hint, NULL_TOL)?;
        (ns.basis, ns.gap / ns.lambda_max)
    };
    let mk = reduced.m(k);
    let mut orthonormality = 0.0f64;
    for (i, a) in free.iter().enumerate() {
        let ma = mk.matvec(a);
        for (j, b) in free.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            orthonormality = orthonormality.max((dot(b, &ma) - target).abs());
        }
    }
    let basis = free
        .iter()
        .map(|q| ops.cochain(k, reduced.embed(k, q)))
        .collect::<Result<_>>()?;
    Ok(HarmonicBasis {
        degree: k,
        variant,
        basis,
        free,
        orthonormality,
        relative_gap,
    })
}

/// Harmonic basis of degree `k` for a variant.
pub fn harmonic_basis(ops: &Arc<DeRhamOps>, k: usize, variant: HarmonicVariant) -> Result<HarmonicBasis> {
    let reduced = Reduced::new(ops.clone(), variant.label())?;
    harmonic_basis_reduced(&reduced, k, variant)
}

/// Factored mixed Hodge–Laplace saddle system of one degree on a reduced
/// complex; see the module documentation.
pub struct MixedSolver {
    reduced: Arc<Reduced>,
    k: usize,
    harmonic: HarmonicBasis,
    factor: Factor,
    nv: usize,
    nw: usize,
}

/// Output of [`MixedSolver::solve`].
#[derive(Clone, Debug)]
pub struct MixedSolution {
    /// Full-length `λ = g + x`.
    pub lambda: Vec<f64>,
    /// Auxiliary `(k-1)`-field; zero when the constraints are compatible.
    pub sigma: Vec<f64>,
    /// Harmonic multipliers; zero when the constraints are compatible.
    pub p: Vec<f64>,
}

impl MixedSolver {
    pub fn new(reduced: Arc<Reduced>, k: usize, harmonic: HarmonicBasis) -> Result<Self> {
        if harmonic.degree != k {
            return Err(Error::DegreeMismatch {
                expected: k,
                got: harmonic.degree,
            });
        }
        let nv = if k == 0 { 0 } else { reduced.n_free(k - 1) };
        let nw = reduced.n_free(k);
        let m = harmonic.dim();
        let mw = reduced.m(k);
        let c = reduced.d(k);
        let a_ww = reduced.m(k + 1).congruence(c);
        let (neg_mv, mwb, bt_mw) = if k == 0 {
            (Csr::zeros(0, 0), Csr::zeros(nw, 0), Csr::zeros(0, nw))
        } else {
            let b = reduced.d(k - 1);
            let mwb = mw.matmul(b);
            (reduced.m(k - 1).scale(-1.0), mwb.clone(), mwb.transpose())
        };
        let mh_trip: Vec<(usize, usize, f64)> = harmonic
            .free
            .iter()
            .enumerate()
            .flat_map(|(j, q)| {
                mw.matvec(q)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, v)| *v != 0.0)
                    .map(move |(i, v)| (i, j, v))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mwh = Csr::from_triplets(nw, m, mh_trip);
        let hmw = mwh.transpose();
        let sys = block(
            &[
                vec![Some(&neg_mv), Some(&bt_mw), None],
                vec![Some(&mwb), Some(&a_ww), Some(&mwh)],
                vec![None, Some(&hmw), None],
            ],
            &[nv, nw, m],
            &[nv, nw, m],
        );
        let factor = Factor::lu(&sys)?;
        Ok(Self {
            reduced,
            k,
            harmonic,
            factor,
            nv,
            nw,
        })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn reduced(&self) -> &Arc<Reduced> {
        &self.reduced
    }

    pub fn harmonic(&self) -> &HarmonicBasis {
        &self.harmonic
    }

    /// `g`: full-length degree-`k` vector whose eliminated entries are the
    /// prescribed trace values (free entries are ignored); `xi`: full-length
    /// degree-`k+1` target for `D λ`; `c`: harmonic moments.
    pub fn solve(&self, g: &[f64], xi: &[f64], c: &[f64]) -> MixedSolution {
        let r = &self.reduced;
        let k = self.k;
        let mut g = g.to_vec();
        for &i in r.free(k) {
            g[i] = 0.0;
        }
        let mwg = r.m_rows_times(k, &g);
        let dg = r.ops().coboundary(k).matvec(&g);
        let resid: Vec<f64> = xi.iter().zip(&dg).map(|(a, b)| a - b).collect();
        let rhs_w = r.d(k).tmatvec(&r.m_rows_times(k + 1, &resid));
        let rhs_v: Vec<f64> = if k == 0 {
            Vec::new()
        } else {
            r.d(k - 1).tmatvec(&mwg).into_iter().map(|v| -v).collect()
        };
        let rhs_p: Vec<f64> = self.harmonic.free.iter().zip(c).map(|(q, ci)| ci - dot(q, &mwg)).collect();
        let mut rhs = rhs_v;
        rhs.extend(rhs_w);
        rhs.extend(rhs_p);
        let sol = self.factor.solve(&rhs);
        let sigma = sol[..self.nv].to_vec();
        let x = &sol[self.nv..self.nv + self.nw];
        let p = sol[self.nv + self.nw..].to_vec();
        let mut lambda = g;
        for (&i, &xi) in r.free(k).iter().zip(x) {
            lambda[i] = xi;
        }
        MixedSolution { lambda, sigma, p }
    }
}

/// Minimal-norm potentials, exact projections and Hodge splits of one
/// complex under one boundary condition.
pub struct HodgeSolver {
    reduced: Arc<Reduced>,
    variant: HarmonicVariant,
    /// `solvers[k]` potentials of degree `k` (for data of degree `k + 1`).
    solvers: Vec<std::sync::OnceLock<MixedSolver>>,
    harmonic: Vec<std::sync::OnceLock<HarmonicBasis>>,
}

impl HodgeSolver {
    pub fn new(ops: Arc<DeRhamOps>, variant: HarmonicVariant) -> Result<Self> {
        let n = ops.dim();
        let reduced = Arc::new(Reduced::new(ops, variant.label())?);
        Ok(Self {
            reduced,
            variant,
            solvers: (0..=n).map(|_| std::sync::OnceLock::new()).collect(),
            harmonic: (0..=n).map(|_| std::sync::OnceLock::new()).collect(),
        })
    }

    pub fn ops(&self) -> &Arc<DeRhamOps> {
        self.reduced.ops()
    }

    pub fn reduced(&self) -> &Arc<Reduced> {
        &self.reduced
    }

    pub fn harmonic(&self, k: usize) -> Result<&HarmonicBasis> {
        if let Some(h) = self.harmonic[k].get() {
            return Ok(h);
        }
        let h = harmonic_basis_reduced(&self.reduced, k, self.variant.clone())?;
        Ok(self.harmonic[k].get_or_init(|| h))
    }

    pub fn solver(&self, k: usize) -> Result<&MixedSolver> {
        if let Some(s) = self.solvers[k].get() {
            return Ok(s);
        }
        let s = MixedSolver::new(self.reduced.clone(), k, self.harmonic(k)?.clone())?;
        Ok(self.solvers[k].get_or_init(|| s))
    }

    fn check_constraint(&self, omega: &Cochain) -> Result<()> {
        if omega.complex_id != self.ops().complex().id() {
            return Err(Error::ComplexMismatch {
                expected: self.ops().complex().id(),
                got: omega.complex_id,
            });
        }
        Ok(())
    }

    /// `α⊥(ω)`: the `(k-1)`-cochain with `D α = P_ex ω` that is orthogonal
    /// to all closed cochains of the constraint space. Zero for `k = 0`.
    pub fn minimal_norm_potential(&self, omega: &Cochain) -> Result<Cochain> {
        self.check_constraint(omega)?;
        let k = omega.degree;
        if k == 0 {
            return Ok(below_zero(omega.complex_id));
        }
        let s = self.solver(k - 1)?;
        let g = vec![0.0; self.ops().count(k - 1)];
        let sol = s.solve(&g, &omega.values, &vec![0.0; s.harmonic().dim()]);
        self.ops().cochain(k - 1, sol.lambda)
    }

    /// `M`-orthogonal projection onto `D(constraint space)`.
    pub fn project_exact(&self, omega: &Cochain) -> Result<Cochain> {
        if omega.degree == 0 {
            return Ok(self.ops().zeros(0));
        }
        let a = self.minimal_norm_potential(omega)?;
        self.ops().d(&a)
    }

    /// Harmonic component `Σ (ω, q) q`.
    pub fn project_harmonic(&self, omega: &Cochain) -> Result<Cochain> {
        self.check_constraint(omega)?;
        let k = omega.degree;
        let h = self.harmonic(k)?;
        let coeffs = h.coefficients(&self.reduced, &omega.values);
        let mut v = vec![0.0; omega.len()];
        for (q, c) in h.basis.iter().zip(coeffs) {
            v.iter_mut().zip(&q.values).for_each(|(vi, qi)| *vi += c * qi);
        }
        self.ops().cochain(k, v)
    }

    /// `ω = D α⊥ + β⊥ + q`. The coexact part is computed independently as
    /// the minimal-norm potential of `D ω`.
    pub fn hodge_decompose(&self, omega: &Cochain) -> Result<HodgeSplit> {
        let ops = self.ops();
        let k = omega.degree;
        let potential_alpha = if k == 0 {
            below_zero(ops.complex().id())
        } else {
            self.minimal_norm_potential(omega)?
        };
        let exact = if k == 0 { ops.zeros(0) } else { ops.d(&potential_alpha)? };
        let harmonic = self.project_harmonic(omega)?;
        let coexact = if k == ops.dim() {
            ops.zeros(k)
        } else {
            self.minimal_norm_potential(&ops.d(omega)?)?
        };
        let recon = exact.add(&coexact)?.add(&harmonic)?;
        let residual = ops.norm(&recon.sub(omega)?)? / ops.norm(omega)?.max(f64::MIN_POSITIVE);
        Ok(HodgeSplit {
            potential_beta: coexact.clone(),
            exact,
            coexact,
            harmonic,
            potential_alpha,
            reconstruction_residual: residual,
        })
    }
}

/// The trivial potential of a 0-cochain. Degree `-1` is not representable,
/// so it is an empty cochain tagged with degree 0.
fn below_zero(complex_id: u64) -> Cochain {
    Cochain {
        degree: 0,
        complex_id,
        values: Vec::new(),
    }
}

#[derive(Clone, Debug)]
pub struct HodgeSplit {
    pub exact: Cochain,
    pub coexact: Cochain,
    pub harmonic: Cochain,
    pub potential_alpha: Cochain,
    /// `β⊥ = α⊥(dω)`, which is also the coexact component.
    pub potential_beta: Cochain,
    /// `‖exact + coexact + harmonic - ω‖ / ‖ω‖`.
    pub reconstruction_residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_complex, BoxDomain};

    #[test]
    fn square_has_trivial_cohomology() {
        let c = Arc::new(build_box_complex(&BoxDomain::unit(2), 0.25, 2).unwrap());
        let ops = Arc::new(DeRhamOps::assemble(c).unwrap());
        let dims: Vec<usize> = (0..=2)
            .map(|k| harmonic_basis(&ops, k, HarmonicVariant::Absolute).unwrap().dim())
            .collect();
        assert_eq!(dims, vec![1, 0, 0]);
        let rel: Vec<usize> = (0..=2)
            .map(|k| harmonic_basis(&ops, k, HarmonicVariant::relative_boundary()).unwrap().dim())
            .collect();
        assert_eq!(rel, vec![0, 0, 1]);
    }
}
