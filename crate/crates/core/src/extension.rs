//! Recursive minimal-norm cochain extension from `Ω` to `K = Ω ∪ A`.
//!
//! For a `k`-cochain `ω` on `Ω` with no harmonic component, the exterior
//! field `λ` on `A` is the minimal-`M_A`-norm solution of
//!
//! * `D_A λ = ξ`, where `ξ` is the exterior part of `E^{k+1}(dω)`,
//! * `λ = ω` on the shared interface simplices,
//! * `λ = 0` on `∂K` (zero-trace variant only),
//! * `(λ, q) = c_q` for every harmonic field `q` of `A` with the variant's
//!   boundary condition.
//!
//! The moments `c_q` are computed from the minimal-norm potential `α⊥` of
//! `ω`: with `α_A` the zero-fill of its interface values, `c_q = (D α_A, q)`.
//! This does not depend on the lifting because `q` is orthogonal to the
//! coboundary of every cochain vanishing on the labelled boundary.
//!
//! Since `d(dω) = 0` the recursion stops after two steps: `E^{k+1}(dω)` is a
//! recursive solve with `ξ = 0` (or a Riesz solve in top degree), after which
//! `E^k ω` uses `ξ = E^{k+1}(dω)|_A`.

use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{Cochain, DeRhamOps};
use crate::hodge::{HarmonicVariant, HodgeSolver, MixedSolver, Reduced};
use crate::linalg::sparse::dot;
use crate::mesh::{betti_numbers, DomainPair, DomainSpec, SubcomplexMap, Variant, INTERFACE, OUTER};

/// Relative residual above which a discrete compatibility condition is
/// declared violated.
pub const INFEASIBILITY_TOL: f64 = 1e-8;

/// Relative harmonic component above which a datum is rejected.
pub const HARMONIC_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// `‖D_A λ − ξ‖_M`, relative to `‖ω‖_{HΛ} + ‖ξ‖_M`.
    pub coboundary: f64,
    /// Largest deviation from the prescribed trace values.
    pub trace: f64,
    /// `max |(λ, q) − c_q|`, relative to the same scale as `coboundary`.
    pub moment: f64,
    /// See [`ExtensionProblem::gauge_residual`].
    pub gauge: f64,
}

#[derive(Clone, Debug)]
pub struct ExtensionResult {
    pub degree: usize,
    /// `E^k ω` on `K`.
    pub extended: Cochain,
    /// Exterior field on `A`; `None` when `Ω = K`.
    pub lambda: Option<Cochain>,
    /// `c_q` per harmonic basis vector of `A`.
    pub coefficients: Vec<f64>,
    pub residuals: Residuals,
    /// `‖E^k ω‖_{HΛ(K)} / ‖ω‖_{HΛ(Ω)}`.
    pub ratio: f64,
    /// `‖E^k ω‖_{L²(K)} / ‖ω‖_{L²(Ω)}`.
    pub l2_ratio: f64,
    /// `E^{k+1}(dω)` on `K`, when computed.
    pub coboundary_extension: Option<Cochain>,
    /// `‖D_K E^k ω − E^{k+1}(dω)‖_M / ‖ω‖_{HΛ}`; zero when not applicable.
    pub cochain_identity: f64,
    /// Relative size of the harmonic part removed in projection-first mode.
    pub removed_harmonic: f64,
    pub warnings: Vec<String>,
}

impl ExtensionResult {
    /// Scalar summary for reports.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "degree": self.degree,
            "coefficients": self.coefficients,
            "residuals": self.residuals,
            "ratio": self.ratio,
            "l2_ratio": self.l2_ratio,
            "cochain_identity": self.cochain_identity,
            "removed_harmonic": self.removed_harmonic,
            "warnings": self.warnings,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExtendOptions {
    /// Split off the harmonic component of the datum instead of rejecting it.
    pub projection_first: bool,
}

/// Outcome of [`ExtensionProblem::harmonic_extension_probe`].
#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub degree: usize,
    /// `‖D_A λ‖_M / ‖ω‖_M` for the least-squares closed extension.
    pub residual: f64,
    pub feasible: bool,
    pub lambda_norm: f64,
}

struct Exterior {
    map: SubcomplexMap,
    ops: Arc<DeRhamOps>,
    solver: HodgeSolver,
    /// Interface-only constraints, used by the nested minimisation.
    nested: OnceLock<HodgeSolver>,
    /// `(Ω index, A index)` of the shared simplices, per degree.
    shared: Vec<Vec<(usize, usize)>>,
}

/// A meshed `(Ω, A, K)` triple with its operators and cached solvers.
/// Immutable after construction; extensions of different data may run
/// concurrently.
pub struct ExtensionProblem {
    pair: DomainPair,
    ops_k: Arc<DeRhamOps>,
    ops_omega: Arc<DeRhamOps>,
    omega_hodge: HodgeSolver,
    /// Absolute Hodge solver on `K`, built on first use.
    ambient_hodge: OnceLock<HodgeSolver>,
    exterior: Option<Exterior>,
}

impl ExtensionProblem {
    pub fn new(spec: &DomainSpec) -> Result<Self> {
        Self::from_pair(DomainPair::build(spec)?)
    }

    pub fn from_pair(pair: DomainPair) -> Result<Self> {
        let ops_k = Arc::new(DeRhamOps::assemble(pair.k.clone())?);
        let ops_omega = Arc::new(DeRhamOps::assemble(pair.omega.child.clone())?);
        let omega_hodge = HodgeSolver::new(ops_omega.clone(), HarmonicVariant::Absolute)?;
        let exterior = match &pair.exterior {
            None => None,
            Some(map) => {
                let ops = Arc::new(DeRhamOps::assemble(map.child.clone())?);
                let label = pair.spec.variant.exterior_label().to_string();
                let hv = match pair.spec.variant {
                    Variant::ZeroTrace => HarmonicVariant::Relative(label),
                    Variant::Mixed => HarmonicVariant::Mixed(label),
                };
                let solver = HodgeSolver::new(ops.clone(), hv)?;
                let n = pair.k.dim();
                let shared = (0..=n)
                    .map(|k| {
                        let a_of = map.parent_to_child(k);
                        pair.omega.injection[k]
                            .iter()
                            .enumerate()
                            .filter_map(|(i, &p)| a_of[p].map(|j| (i, j)))
                            .collect()
                    })
                    .collect();
                Some(Exterior {
                    map: map.clone(),
                    ops,
                    solver,
                    nested: OnceLock::new(),
                    shared,
                })
            }
        };
        Ok(Self {
            pair,
            ops_k,
            ops_omega,
            omega_hodge,
            ambient_hodge: OnceLock::new(),
            exterior,
        })
    }

    pub fn pair(&self) -> &DomainPair {
        &self.pair
    }

    pub fn variant(&self) -> Variant {
        self.pair.spec.variant
    }

    pub fn dim(&self) -> usize {
        self.pair.k.dim()
    }

    pub fn ops_k(&self) -> &Arc<DeRhamOps> {
        &self.ops_k
    }

    pub fn ops_omega(&self) -> &Arc<DeRhamOps> {
        &self.ops_omega
    }

    pub fn ops_a(&self) -> Option<&Arc<DeRhamOps>> {
        self.exterior.as_ref().map(|e| &e.ops)
    }

    pub fn omega_hodge(&self) -> &HodgeSolver {
        &self.omega_hodge
    }

    /// Hodge solver on `A` carrying the variant's boundary condition.
    pub fn ambient_hodge(&self) -> Result<&HodgeSolver> {
        if let Some(h) = self.ambient_hodge.get() {
            return Ok(h);
        }
        let h = HodgeSolver::new(self.ops_k.clone(), HarmonicVariant::Absolute)?;
        Ok(self.ambient_hodge.get_or_init(|| h))
    }

    pub fn exterior_hodge(&self) -> Option<&HodgeSolver> {
        self.exterior.as_ref().map(|e| &e.solver)
    }

    /// Reduced complex on `A` for the variant.
    pub fn exterior_reduced(&self) -> Option<&Arc<Reduced>> {
        self.exterior.as_ref().map(|e| e.solver.reduced())
    }

    /// `(Ω index, A index)` pairs of shared `k`-simplices.
    pub fn shared(&self, k: usize) -> &[(usize, usize)] {
        self.exterior.as_ref().map_or(&[], |e| e.shared[k].as_slice())
    }

    /// Random `k`-cochain on `Ω` with its harmonic part removed.
    pub fn random_datum(&self, k: usize, rng: &mut (impl rand::Rng + ?Sized)) -> Result<Cochain> {
        let w = self.ops_omega.random(k, rng);
        let q = self.omega_hodge.project_harmonic(&w)?;
        w.sub(&q)
    }

    fn check_omega(&self, omega: &Cochain) -> Result<()> {
        let id = self.ops_omega.complex().id();
        if omega.complex_id != id {
            return Err(Error::ComplexMismatch {
                expected: id,
                got: omega.complex_id,
            });
        }
        if omega.degree > self.dim() {
            return Err(Error::DegreeMismatch {
                expected: self.dim(),
                got: omega.degree,
            });
        }
        Ok(())
    }

    /// `‖P_𝔥 ω‖ / ‖ω‖` on `Ω`.
    pub fn harmonic_ratio(&self, omega: &Cochain) -> Result<f64> {
        let q = self.omega_hodge.project_harmonic(omega)?;
        let n = self.ops_omega.norm(omega)?;
        Ok(if n == 0.0 { 0.0 } else { self.ops_omega.norm(&q)? / n })
    }

    fn check_orthogonal(&self, omega: &Cochain) -> Result<()> {
        let ratio = self.harmonic_ratio(omega)?;
        if ratio > HARMONIC_TOL {
            return Err(Error::HarmonicComponent { ratio });
        }
        Ok(())
    }

    /// Zero-filled `A` cochain carrying the values of an `Ω` cochain on the
    /// shared simplices.
    fn lift(&self, ext: &Exterior, omega: &Cochain) -> Vec<f64> {
        let k = omega.degree;
        let mut v = vec![0.0; ext.ops.count(k)];
        for &(i, j) in &ext.shared[k] {
            v[j] = omega.values[i];
        }
        v
    }

    /// `c_q = (D α_A, q)_{M_A}` for each harmonic basis vector `q` of `A`.
    pub fn harmonic_coefficients(&self, omega: &Cochain) -> Result<Vec<f64>> {
        self.check_omega(omega)?;
        let Some(ext) = &self.exterior else {
            return Ok(Vec::new());
        };
        let k = omega.degree;
        let h = ext.solver.harmonic(k)?;
        if k == 0 || h.dim() == 0 {
            return Ok(vec![0.0; h.dim()]);
        }
        self.check_orthogonal(omega)?;
        let alpha = self.omega_hodge.minimal_norm_potential(omega)?;
        let alpha_a = ext.ops.cochain(k - 1, self.lift(ext, &alpha))?;
        let d_alpha = ext.ops.d(&alpha_a)?;
        Ok(h.coefficients(ext.solver.reduced(), &d_alpha.values))
    }

    /// Piecewise cochain on `K`: `omega` on `Ω`, `lambda` on `A`.
    fn glue(&self, omega: &Cochain, lambda: Option<&[f64]>) -> Result<Cochain> {
        let k = omega.degree;
        let mut v = vec![0.0; self.ops_k.count(k)];
        if let (Some(ext), Some(l)) = (&self.exterior, lambda) {
            for (j, &p) in ext.map.injection[k].iter().enumerate() {
                v[p] = l[j];
            }
        }
        for (i, &p) in self.pair.omega.injection[k].iter().enumerate() {
            v[p] = omega.values[i];
        }
        self.ops_k.cochain(k, v)
    }

    fn trivial(&self, omega: &Cochain) -> Result<ExtensionResult> {
        let extended = self.glue(omega, None)?;
        Ok(ExtensionResult {
            degree: omega.degree,
            extended,
            lambda: None,
            coefficients: Vec::new(),
            residuals: Residuals::default(),
            ratio: 1.0,
            l2_ratio: 1.0,
            coboundary_extension: None,
            cochain_identity: 0.0,
            removed_harmonic: 0.0,
            warnings: Vec::new(),
        })
    }

    fn finish(&self, omega: &Cochain, lambda: Cochain, coefficients: Vec<f64>, residuals: Residuals) -> Result<ExtensionResult> {
        let extended = self.glue(omega, Some(&lambda.values))?;
        let (ratio, l2_ratio) = self.ratios(omega, &extended)?;
        Ok(ExtensionResult {
            degree: omega.degree,
            extended,
            lambda: Some(lambda),
            coefficients,
            residuals,
            ratio,
            l2_ratio,
            coboundary_extension: None,
            cochain_identity: 0.0,
            removed_harmonic: 0.0,
            warnings: Vec::new(),
        })
    }

    fn ratios(&self, omega: &Cochain, extended: &Cochain) -> Result<(f64, f64)> {
        let div = |a: f64, b: f64| if b == 0.0 { if a == 0.0 { 0.0 } else { f64::INFINITY } } else { a / b };
        Ok((
            div(self.ops_k.graph_norm(extended)?, self.ops_omega.graph_norm(omega)?),
            div(self.ops_k.norm(extended)?, self.ops_omega.norm(omega)?),
        ))
    }

    fn moment_residual(&self, ext: &Exterior, k: usize, lambda: &[f64], c: &[f64]) -> Result<f64> {
        let h = ext.solver.harmonic(k)?;
        let got = h.coefficients(ext.solver.reduced(), lambda);
        Ok(got.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Top-degree extension: the minimal-norm `λ` with prescribed harmonic
    /// moments, `λ = Σ x_i q_i` with `Gram · x = c`.
    pub fn extend_top_degree(&self, omega: &Cochain) -> Result<ExtensionResult> {
        self.check_omega(omega)?;
        let n = self.dim();
        if omega.degree != n {
            return Err(Error::DegreeMismatch {
                expected: n,
                got: omega.degree,
            });
        }
        let Some(ext) = &self.exterior else {
            return self.trivial(omega);
        };
        let c = self.harmonic_coefficients(omega)?;
        let h = ext.solver.harmonic(n)?;
        let m = h.dim();
        let mut lambda = vec![0.0; ext.ops.count(n)];
        if m > 0 {
            let mq: Vec<Vec<f64>> = h.basis.iter().map(|q| ext.ops.mass(n).matvec(&q.values)).collect();
            let gram = Mat::from_fn(m, m, |i, j| dot(&h.basis[i].values, &mq[j]));
            let rhs = Mat::from_fn(m, 1, |i, _| c[i]);
            let x = gram.partial_piv_lu().solve(&rhs);
            for (i, q) in h.basis.iter().enumerate() {
                let xi = x[(i, 0)];
                lambda.iter_mut().zip(&q.values).for_each(|(l, qv)| *l += xi * qv);
            }
        }
        let scale = self.ops_omega.graph_norm(omega)?.max(f64::MIN_POSITIVE);
        let residuals = Residuals {
            coboundary: 0.0,
            trace: 0.0,
            moment: self.moment_residual(ext, n, &lambda, &c)? / scale,
            gauge: self.gauge_residual_values(n, &lambda)?,
        };
        let lambda = ext.ops.cochain(n, lambda)?;
        self.finish(omega, lambda, c, residuals)
    }

    /// The recursive step: minimal-norm `λ` with `D λ = ξ`, interface trace
    /// of `ω`, the variant's boundary condition and harmonic moments `c_q`.
    /// `xi` is a `(k+1)`-cochain on `A`.
    pub fn extend_recursive(&self, omega: &Cochain, xi: &Cochain) -> Result<ExtensionResult> {
        self.check_omega(omega)?;
        let k = omega.degree;
        let Some(ext) = &self.exterior else {
            return self.trivial(omega);
        };
        if k >= self.dim() {
            return Err(Error::DegreeMismatch {
                expected: self.dim() - 1,
                got: k,
            });
        }
        if xi.complex_id != ext.ops.complex().id() {
            return Err(Error::ComplexMismatch {
                expected: ext.ops.complex().id(),
                got: xi.complex_id,
            });
        }
        if xi.degree != k + 1 {
            return Err(Error::DegreeMismatch {
                expected: k + 1,
                got: xi.degree,
            });
        }
        let scale = (self.ops_omega.graph_norm(omega)? + ext.ops.norm(xi)?).max(f64::MIN_POSITIVE);
        // ξ must be closed and agree with dω on the interface
        if k + 1 < self.dim() {
            let dxi = ext.ops.norm(&ext.ops.d(xi)?)? / scale;
            if dxi > INFEASIBILITY_TOL {
                return Err(Error::Incompatible {
                    what: "exterior datum is not closed".into(),
                    residual: dxi,
                });
            }
        }
        let d_omega = self.ops_omega.d(omega)?;
        let mismatch = ext.shared[k + 1]
            .iter()
            .map(|&(i, j)| (d_omega.values[i] - xi.values[j]).abs())
            .fold(0.0, f64::max);
        let tr_scale = d_omega.max_abs().max(f64::MIN_POSITIVE);
        if mismatch > INFEASIBILITY_TOL * tr_scale {
            return Err(Error::Incompatible {
                what: "exterior datum does not match dω on the interface".into(),
                residual: mismatch / tr_scale,
            });
        }

        let c = self.harmonic_coefficients(omega)?;
        let g = self.prescribed_trace(ext, omega)?;
        let solver = ext.solver.solver(k)?;
        let sol = solver.solve(&g, &xi.values, &c);
        let residuals = self.residuals(ext, solver, &g, xi, &sol.lambda, &c, scale)?;
        if residuals.coboundary > INFEASIBILITY_TOL {
            return Err(Error::Incompatible {
                what: "no exterior field with D λ = ξ and the prescribed trace".into(),
                residual: residuals.coboundary,
            });
        }
        let lambda = ext.ops.cochain(k, sol.lambda)?;
        self.finish(omega, lambda, c, residuals)
    }

    /// Trace values on the eliminated DOFs: `ω` on the interface, zero on
    /// `∂K` (zero-trace variant).
    fn prescribed_trace(&self, ext: &Exterior, omega: &Cochain) -> Result<Vec<f64>> {
        let k = omega.degree;
        let mut g = self.lift(ext, omega);
        if self.variant() == Variant::ZeroTrace {
            for &i in ext.ops.complex().label(OUTER, k)? {
                g[i] = 0.0;
            }
        }
        Ok(g)
    }

    #[allow(clippy::too_many_arguments)]
    fn residuals(
        &self,
        ext: &Exterior,
        solver: &MixedSolver,
        g: &[f64],
        xi: &Cochain,
        lambda: &[f64],
        c: &[f64],
        scale: f64,
    ) -> Result<Residuals> {
        let k = solver.degree();
        let dl = ext.ops.coboundary(k).matvec(lambda);
        let r = ext.ops.cochain(k + 1, dl.iter().zip(&xi.values).map(|(a, b)| a - b).collect())?;
        let coboundary = ext.ops.norm(&r)? / scale;
        let mut free = vec![false; lambda.len()];
        for &i in solver.reduced().free(k) {
            free[i] = true;
        }
        let trace = (0..lambda.len())
            .filter(|&i| !free[i])
            .map(|i| (lambda[i] - g[i]).abs())
            .fold(0.0, f64::max);
        Ok(Residuals {
            coboundary,
            trace,
            moment: self.moment_residual(ext, k, lambda, c)? / scale,
            gauge: self.gauge_residual_values(k, lambda)?,
        })
    }

    /// `max_j |(λ, D τ_j)| / (‖λ‖ ‖D τ_j‖)` over the unit basis `τ_j` of
    /// `(k-1)`-cochains on `A` vanishing on the variant's labelled boundary.
    pub fn gauge_residual(&self, result: &ExtensionResult) -> Result<f64> {
        match &result.lambda {
            None => Ok(0.0),
            Some(l) => self.gauge_residual_values(l.degree, &l.values),
        }
    }

    /// [`Self::gauge_residual`] for a raw exterior field.
    pub fn gauge_residual_values(&self, k: usize, lambda: &[f64]) -> Result<f64> {
        let Some(ext) = &self.exterior else {
            return Ok(0.0);
        };
        if k == 0 {
            return Ok(0.0);
        }
        let red = ext.solver.reduced();
        let lam = ext.ops.cochain(k, lambda.to_vec())?;
        let norm = ext.ops.norm(&lam)?;
        if norm == 0.0 {
            return Ok(0.0);
        }
        let b = red.d(k - 1);
        let r = b.tmatvec(&red.m_rows_times(k, lambda));
        let col = red.m(k).congruence(b).diag();
        Ok(r
            .iter()
            .zip(&col)
            .filter(|(_, &cj)| cj > 0.0)
            .map(|(rj, cj)| rj.abs() / (norm * cj.sqrt()))
            .fold(0.0, f64::max))
    }

    /// `E^k ω` together with `E^{k+1}(dω)` and the cochain identity residual.
    pub fn extend(&self, omega: &Cochain) -> Result<ExtensionResult> {
        self.extend_with(omega, ExtendOptions::default())
    }

    pub fn extend_with(&self, omega: &Cochain, opts: ExtendOptions) -> Result<ExtensionResult> {
        self.check_omega(omega)?;
        let (datum, removed) = if opts.projection_first {
            let q = self.omega_hodge.project_harmonic(omega)?;
            let n = self.ops_omega.norm(omega)?;
            let removed = if n == 0.0 { 0.0 } else { self.ops_omega.norm(&q)? / n };
            (omega.sub(&q)?, removed)
        } else {
            self.check_orthogonal(omega)?;
            (omega.clone(), 0.0)
        };
        let n = self.dim();
        let k = datum.degree;
        let mut result = if self.exterior.is_none() {
            self.trivial(&datum)?
        } else if k == n {
            self.extend_top_degree(&datum)?
        } else {
            let sigma = self.ops_omega.d(&datum)?;
            let upper = if k + 1 == n {
                self.extend_top_degree(&sigma)?
            } else {
                let ext = self.exterior.as_ref().unwrap();
                self.extend_recursive(&sigma, &ext.ops.zeros(k + 2))?
            };
            let xi = upper.lambda.clone().expect("exterior present");
            let mut r = self.extend_recursive(&datum, &xi)?;
            r.cochain_identity = self.cochain_identity_residual(&datum, &r.extended, &upper.extended)?;
            r.coboundary_extension = Some(upper.extended);
            r
        };
        result.removed_harmonic = removed;
        Ok(result)
    }

    /// `‖D_K E^k ω − E^{k+1}(dω)‖_{M_K} / ‖ω‖_{HΛ(Ω)}`.
    pub fn cochain_identity_residual(&self, omega: &Cochain, extended: &Cochain, extended_d: &Cochain) -> Result<f64> {
        let d = self.ops_k.d(extended)?;
        let diff = d.sub(extended_d)?;
        let scale = self.ops_omega.graph_norm(omega)?;
        let r = self.ops_k.norm(&diff)?;
        Ok(if scale == 0.0 { r } else { r / scale })
    }

    fn nested_solver<'a>(&'a self, ext: &'a Exterior) -> Result<&'a HodgeSolver> {
        if self.variant() == Variant::Mixed {
            return Ok(&ext.solver);
        }
        if let Some(s) = ext.nested.get() {
            return Ok(s);
        }
        let s = HodgeSolver::new(ext.ops.clone(), HarmonicVariant::Mixed(INTERFACE.to_string()))?;
        Ok(ext.nested.get_or_init(|| s))
    }

    fn nested_step(&self, ext: &Exterior, omega: &Cochain) -> Result<(Vec<f64>, Residuals)> {
        let k = omega.degree;
        let hs = self.nested_solver(ext)?;
        let solver = hs.solver(k)?;
        let g = self.lift(ext, omega);
        let xi = ext.ops.zeros(k + 1);
        let c = vec![0.0; solver.harmonic().dim()];
        let sol = solver.solve(&g, &xi.values, &c);
        let scale = self.ops_omega.graph_norm(omega)?.max(f64::MIN_POSITIVE);
        let mut res = self.residuals(ext, solver, &g, &xi, &sol.lambda, &c, scale)?;
        // the coboundary entry here measures ‖D μ‖ on A, which need not vanish
        res.gauge = 0.0;
        Ok((sol.lambda, res))
    }

    /// Extension by nested minimisation: minimise `‖D μ‖` over cochains on
    /// `K` agreeing with `ω` on `Ω`, then `‖μ‖` among the minimisers. The
    /// cochain identity is checked against the nested extension of `dω`; it
    /// can fail when `Ω` and `K` differ topologically, which is reported as
    /// a warning.
    pub fn extend_nested(&self, omega: &Cochain) -> Result<ExtensionResult> {
        self.check_omega(omega)?;
        let Some(ext) = &self.exterior else {
            return self.trivial(omega);
        };
        let k = omega.degree;
        let mut warnings = Vec::new();
        let b_omega = betti_numbers(self.ops_omega.complex(), None)?;
        let b_k = betti_numbers(self.ops_k.complex(), None)?;
        if b_omega != b_k {
            warnings.push(format!(
                "Betti numbers of Ω {b_omega:?} differ from K {b_k:?}; the cochain identity may fail"
            ));
        }
        let (lambda, residuals) = self.nested_step(ext, omega)?;
        let lambda = ext.ops.cochain(k, lambda)?;
        let mut result = self.finish(omega, lambda, Vec::new(), residuals)?;
        if k < self.dim() {
            let sigma = self.ops_omega.d(omega)?;
            let (upper, _) = self.nested_step(ext, &sigma)?;
            let upper = self.glue(&sigma, Some(&upper))?;
            result.cochain_identity = self.cochain_identity_residual(omega, &result.extended, &upper)?;
            result.coboundary_extension = Some(upper);
        }
        result.warnings = warnings;
        Ok(result)
    }

    /// Tries to extend `ω` (typically harmonic on `Ω`) to a closed cochain on
    /// `K` under the variant's boundary condition, in the least-squares
    /// sense. A residual near zero means the class extends.
    pub fn harmonic_extension_probe(&self, omega: &Cochain) -> Result<ProbeReport> {
        self.check_omega(omega)?;
        let k = omega.degree;
        let Some(ext) = &self.exterior else {
            return Ok(ProbeReport {
                degree: k,
                residual: 0.0,
                feasible: true,
                lambda_norm: 0.0,
            });
        };
        let solver = ext.solver.solver(k)?;
        let g = self.prescribed_trace(ext, omega)?;
        let xi = vec![0.0; ext.ops.count(k + 1)];
        let c = vec![0.0; solver.harmonic().dim()];
        let sol = solver.solve(&g, &xi, &c);
        let lam = ext.ops.cochain(k, sol.lambda)?;
        let norm = self.ops_omega.norm(omega)?;
        let dl = ext.ops.norm(&ext.ops.d(&lam)?)?;
        let residual = if norm == 0.0 { dl } else { dl / norm };
        Ok(ProbeReport {
            degree: k,
            residual,
            feasible: residual <= INFEASIBILITY_TOL,
            lambda_norm: ext.ops.norm(&lam)?,
        })
    }

    /// Restriction of a `K` cochain to `Ω`.
    pub fn restrict_to_omega(&self, a: &Cochain) -> Result<Cochain> {
        crate::forms::restrict(a, &self.pair.omega)
    }

    /// Values of a `K` cochain on the `∂K` part of `A`'s boundary.
    pub fn outer_values(&self, a: &Cochain) -> Result<Vec<f64>> {
        let Some(ext) = &self.exterior else {
            return Ok(Vec::new());
        };
        let k = a.degree;
        Ok(ext
            .map
            .child
            .label(OUTER, k)?
            .iter()
            .map(|&j| a.values[ext.map.injection[k][j]])
            .collect())
    }
}
