//! Unfitted harness: active meshes cut from a background grid by a level
//! set, ghost-penalty stabilised inner products, and the h-uniform discrete
//! and stabilised Poincaré experiments.
//!
//! The background grid doubles as the convex hold-all `K`, so the active
//! mesh `Ω_h` is an element-aligned subcomplex of `K` and the cochain
//! projection onto `Ω_h` is plain restriction.
//!
//! The stabilised inner product is `(u, v)_s = (u, v)_Ω + γ s(u, v)`, where
//! `(·,·)_Ω` integrates Whitney forms over the physical part of each element
//! and
//!
//! ```text
//! s(u, v) = Σ_F ∫_{T₁ ∪ T₂} (E₁u - E₂u) · (E₁v - E₂v)
//! ```
//!
//! sums over ghost facets `F = T₁ ∩ T₂`, with `E_i u` the polynomial
//! continuation of `u|_{T_i}` to the whole patch.

use std::sync::{Arc, OnceLock};

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::ExtensionProblem;
use crate::forms::{element_mass, pointwise_inner, restrict, whitney_coefficients, Cochain, DeRhamOps};
use crate::hodge::{harmonic_basis_reduced, HarmonicBasis, HarmonicVariant, HodgeSolver, Reduced};
use crate::linalg::sparse::dot;
use crate::linalg::{smallest_eigenpairs, Csr, EigenOptions};
use crate::mesh::{
    build_box_complex, combinations, extract_subcomplex, BoxDomain, DomainPair, DomainSpec, OrientedComplex, Region,
    SubcomplexMap, Variant,
};
use crate::par::{self, Exec};
use crate::spectra::{first_eigen, Convention, SpectralReport};

/// Bisection levels of cut-element quadrature, each halving every edge once.
pub const CUT_DEPTH: usize = 3;

/// Tolerance on `‖Dτ - Dω‖∞ / ‖Dω‖∞` in the discrete Poincaré pipeline.
pub const IDENTITY_TOL: f64 = 1e-10;

/// An interior facet of the active mesh next to a cut element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GhostFacet {
    /// Facet index in the active complex.
    pub facet: usize,
    /// The two active elements sharing it.
    pub elements: [usize; 2],
}

/// Elements of a background grid that meet a level-set domain.
#[derive(Clone, Debug)]
pub struct ActiveMesh {
    /// `K` = the background grid, `Ω` = the active elements.
    pub pair: DomainPair,
    pub level_set: Region,
    pub h: f64,
    /// Active elements intersected by the zero level set.
    pub cut_elements: Vec<usize>,
    pub ghost_facets: Vec<GhostFacet>,
    pub warnings: Vec<String>,
    is_cut: Vec<bool>,
}

impl ActiveMesh {
    pub fn background(&self) -> &Arc<OrientedComplex> {
        &self.pair.k
    }

    /// `𝒯_h` as a subcomplex of the background.
    pub fn active(&self) -> &SubcomplexMap {
        &self.pair.omega
    }

    pub fn complex(&self) -> &Arc<OrientedComplex> {
        &self.pair.omega.child
    }

    pub fn is_cut(&self, t: usize) -> bool {
        self.is_cut[t]
    }

    /// Extension problem `Ω_h ⊂ K` with the mixed variant.
    pub fn extension_problem(&self) -> Result<ExtensionProblem> {
        ExtensionProblem::from_pair(self.pair.clone())
    }

    /// Checks `Ω ⊂ Ω_h` on a barycentric lattice of every background
    /// element: no sample with `φ < 0` may fall in an inactive element.
    /// Returns the number of offending elements.
    pub fn uncovered_elements(&self, q: usize) -> usize {
        let bg = self.background();
        let n = bg.dim();
        let mut active = vec![false; bg.num_simplices(n)];
        for &t in self.active().top_injection() {
            active[t] = true;
        }
        (0..bg.num_simplices(n))
            .filter(|&t| !active[t])
            .filter(|&t| {
                crate::mesh::lattice_points(&bg.simplex_points(n, t), q)
                    .iter()
                    .any(|x| self.level_set.contains(x))
            })
            .count()
    }
}

/// Active mesh of `{φ < 0}` on the Kuhn grid of `bounds` with spacing `h`.
/// An element is active when it meets the open domain and cut when it is
/// active but not contained in the closed domain; both tests are exact for
/// disks and annuli.
pub fn build_active_mesh(bounds: &BoxDomain, level_set: &Region, h: f64) -> Result<ActiveMesh> {
    let dim = bounds.lower.len();
    let spec = DomainSpec {
        bounds: bounds.clone(),
        h,
        omega: level_set.clone(),
        ambient: Region::Everything,
        variant: Variant::Mixed,
    };
    let background = Arc::new(build_box_complex(bounds, h, dim)?);
    let k_map = extract_subcomplex(background.clone(), |_| true)?;
    let k = k_map.child.clone();
    let flags: Vec<(bool, bool)> = (0..k.num_simplices(dim))
        .map(|t| level_set.classify_simplex(&k.simplex_points(dim, t)))
        .collect();
    let meets: Vec<bool> = flags.iter().map(|f| f.0).collect();
    let pair = DomainPair::from_selection(&spec, k_map, &meets)?;
    let c = pair.omega.child.clone();
    let is_cut: Vec<bool> = pair.omega.top_injection().iter().map(|&t| !flags[t].1).collect();
    let cut_elements = (0..is_cut.len()).filter(|&t| is_cut[t]).collect();

    let mut cofaces: Vec<Vec<usize>> = vec![Vec::new(); c.num_simplices(dim - 1)];
    for t in 0..c.num_simplices(dim) {
        for &f in c.top_faces(t, dim - 1) {
            cofaces[f].push(t);
        }
    }
    let ghost_facets = cofaces
        .iter()
        .enumerate()
        .filter(|(_, ts)| ts.len() == 2 && (is_cut[ts[0]] || is_cut[ts[1]]))
        .map(|(f, ts)| GhostFacet {
            facet: f,
            elements: [ts[0], ts[1]],
        })
        .collect();

    let mut warnings = Vec::new();
    if let Some(feature) = feature_size(level_set) {
        if feature < 2.0 * h {
            warnings.push(format!(
                "domain not resolved: narrowest feature {feature:.4} spans {:.2} elements (need ≥ 2)",
                feature / h
            ));
        }
    }
    Ok(ActiveMesh {
        pair,
        level_set: level_set.clone(),
        h,
        cut_elements,
        ghost_facets,
        warnings,
        is_cut,
    })
}

/// Narrowest width of a region, where it has a closed form.
fn feature_size(r: &Region) -> Option<f64> {
    match r {
        Region::Disk { radius, .. } => Some(2.0 * radius),
        Region::Annulus { inner, outer, .. } => Some(outer - inner),
        Region::Box { lower, upper } => lower.iter().zip(upper).map(|(a, b)| b - a).reduce(f64::min),
        _ => None,
    }
}

/// The region translated by `shift`.
pub fn shifted(r: &Region, shift: &[f64]) -> Region {
    let mv = |c: &[f64]| c.iter().zip(shift).map(|(a, b)| a + b).collect::<Vec<f64>>();
    match r {
        Region::Disk { center, radius } => Region::Disk {
            center: mv(center),
            radius: *radius,
        },
        Region::Annulus { center, inner, outer } => Region::Annulus {
            center: mv(center),
            inner: *inner,
            outer: *outer,
        },
        Region::Box { lower, upper } => Region::Box {
            lower: mv(lower),
            upper: mv(upper),
        },
        Region::Union { parts } => Region::Union {
            parts: parts.iter().map(|p| shifted(p, shift)).collect(),
        },
        Region::Difference { base, minus } => Region::Difference {
            base: Box::new(shifted(base, shift)),
            minus: Box::new(shifted(minus, shift)),
        },
        Region::Everything => Region::Everything,
    }
}

/// Affine coordinates of a simplex.
struct Affine {
    p0: Vec<f64>,
    /// Barycentric gradients, one row per vertex.
    grads: Vec<Vec<f64>>,
    volume: f64,
}

impl Affine {
    fn new(pts: &[Vec<f64>]) -> Self {
        let n = pts.len() - 1;
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| pts[j + 1][i] - pts[0][i]).collect();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        let mut det = 1.0;
        for col in 0..n {
            let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            if p != col {
                a.swap(p, col);
                det = -det;
            }
            let piv = a[col][col];
            det *= piv;
            for v in a[col].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col];
                    for j in 0..2 * n {
                        a[r][j] -= f * a[col][j];
                    }
                }
            }
        }
        let mut grads = vec![vec![0.0; n]; n + 1];
        for i in 0..n {
            for j in 0..n {
                grads[i + 1][j] = a[i][n + j];
                grads[0][j] -= a[i][n + j];
            }
        }
        let fact: f64 = (1..=n).map(|i| i as f64).product();
        Self {
            p0: pts[0].clone(),
            grads,
            volume: det.abs() / fact,
        }
    }

    fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = x.iter().zip(&self.p0).map(|(a, b)| a - b).collect();
        let mut lam: Vec<f64> = self.grads[1..].iter().map(|g| dot(g, &r)).collect();
        lam.insert(0, 1.0 - lam.iter().sum::<f64>());
        lam
    }

    fn gram(&self) -> Vec<Vec<f64>> {
        self.grads.iter().map(|a| self.grads.iter().map(|b| dot(a, b)).collect()).collect()
    }
}

/// Degree-2 quadrature on an `m`-simplex: barycentric points and weights
/// summing to one.
fn quadrature(m: usize) -> Vec<(Vec<f64>, f64)> {
    match m {
        0 => vec![(vec![1.0], 1.0)],
        1 => {
            let g = 0.5 / 3f64.sqrt();
            vec![(vec![0.5 + g, 0.5 - g], 0.5), (vec![0.5 - g, 0.5 + g], 0.5)]
        }
        2 => (0..3)
            .map(|i| {
                let mut b = vec![0.5; 3];
                b[i] = 0.0;
                (b, 1.0 / 3.0)
            })
            .collect(),
        _ => {
            let (a, b) = (0.585_410_196_624_968_5, 0.138_196_601_125_010_5);
            (0..=m)
                .map(|i| {
                    let mut p = vec![b; m + 1];
                    p[i] = a;
                    (p, 1.0 / (m + 1) as f64)
                })
                .collect()
        }
    }
}

fn point(pts: &[Vec<f64>], bary: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; pts[0].len()];
    for (p, w) in pts.iter().zip(bary) {
        x.iter_mut().zip(p).for_each(|(xi, pi)| *xi += w * pi);
    }
    x
}

/// Halves the longest edge.
fn bisect(pts: &[Vec<f64>]) -> [Vec<Vec<f64>>; 2] {
    let m = pts.len();
    let mut best = (0, 1, -1.0);
    for i in 0..m {
        for j in i + 1..m {
            let l = crate::mesh::dist(&pts[i], &pts[j]);
            if l > best.2 {
                best = (i, j, l);
            }
        }
    }
    let (i, j, _) = best;
    let mid: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut a = pts.to_vec();
    let mut b = pts.to_vec();
    a[j] = mid.clone();
    b[i] = mid;
    [a, b]
}

/// Sub-simplices of `pts` that make up its intersection with the region:
/// whole pieces where the exact test decides, and at the finest level the
/// pieces whose barycenter is inside.
pub fn cut_subsimplices(pts: &[Vec<f64>], region: &Region, depth: usize) -> Vec<Vec<Vec<f64>>> {
    let n = pts.len() - 1;
    let mut out = Vec::new();
    let mut stack = vec![(pts.to_vec(), depth * n)];
    while let Some((s, left)) = stack.pop() {
        let (meets, inside) = region.classify_simplex(&s);
        if !meets {
            continue;
        }
        if inside {
            out.push(s);
        } else if left == 0 {
            let bary = vec![1.0 / (n + 1) as f64; n + 1];
            if region.contains(&point(&s, &bary)) {
                out.push(s);
            }
        } else {
            let [a, b] = bisect(&s);
            stack.push((b, left - 1));
            stack.push((a, left - 1));
        }
    }
    out
}

/// Whitney mass of degree `k` on the part of a simplex inside the region,
/// with local faces in lexicographic order. Exact on each sub-simplex, since
/// products of Whitney forms are quadratic.
pub fn cut_element_mass(pts: &[Vec<f64>], region: &Region, k: usize, depth: usize) -> Vec<Vec<f64>> {
    let n = pts.len() - 1;
    let aff = Affine::new(pts);
    let gram = aff.gram();
    let faces = combinations(n + 1, k + 1);
    let mut out = vec![vec![0.0; faces.len()]; faces.len()];
    let rule = quadrature(n);
    for leaf in cut_subsimplices(pts, region, depth) {
        let vol = Affine::new(&leaf).volume;
        for (b, w) in &rule {
            let lam = aff.barycentric(&point(&leaf, b));
            let vals: Vec<_> = faces.iter().map(|f| whitney_coefficients(f, &lam)).collect();
            for p in 0..faces.len() {
                for q in p..faces.len() {
                    let v = w * vol * pointwise_inner(&vals[p], &vals[q], &gram);
                    out[p][q] += v;
                    if q != p {
                        out[q][p] += v;
                    }
                }
            }
        }
    }
    out
}

/// Determinant of `g[rows, cols]` for sizes up to 3.
fn subdet(g: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let m = |i: usize, j: usize| g[rows[i]][cols[j]];
    match rows.len() {
        0 => 1.0,
        1 => m(0, 0),
        2 => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
        3 => {
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        }
        _ => unreachable!("dimension ≤ 3"),
    }
}

/// Components of a Whitney form on the coordinate basis `dx^J`.
fn cartesian(terms: &[(Vec<usize>, f64)], grads: &[Vec<f64>], axes: &[Vec<usize>]) -> Vec<f64> {
    axes.iter()
        .map(|j| terms.iter().map(|(rest, c)| c * subdet(grads, rest, j)).sum())
        .collect()
}

/// Unscaled ghost penalty `s` of degree `k` on the active complex.
fn ghost_penalty(mesh: &ActiveMesh, k: usize) -> Csr {
    let c = mesh.complex();
    let n = c.dim();
    let faces = combinations(n + 1, k + 1);
    let axes = combinations(n, k);
    let rule = quadrature(n);
    let mut trip = Vec::new();
    for g in &mesh.ghost_facets {
        let [t1, t2] = g.elements;
        let aff = [Affine::new(&c.simplex_points(n, t1)), Affine::new(&c.simplex_points(n, t2))];
        let mut dofs: Vec<usize> = c.top_faces(t1, k).to_vec();
        for &d in c.top_faces(t2, k) {
            if !dofs.contains(&d) {
                dofs.push(d);
            }
        }
        let slot = |d: usize| dofs.iter().position(|&x| x == d).unwrap();
        let mut local = vec![vec![0.0; dofs.len()]; dofs.len()];
        for host in [t1, t2] {
            let pts = c.simplex_points(n, host);
            let vol = Affine::new(&pts).volume;
            for (b, w) in &rule {
                let x = point(&pts, b);
                let mut v = vec![vec![0.0; axes.len()]; dofs.len()];
                for (side, (t, a)) in [(t1, &aff[0]), (t2, &aff[1])].into_iter().enumerate() {
                    let sign = if side == 0 { 1.0 } else { -1.0 };
                    let lam = a.barycentric(&x);
                    for (f, &d) in faces.iter().zip(c.top_faces(t, k)) {
                        let comp = cartesian(&whitney_coefficients(f, &lam), &a.grads, &axes);
                        v[slot(d)].iter_mut().zip(comp).for_each(|(vi, ci)| *vi += sign * ci);
                    }
                }
                for p in 0..dofs.len() {
                    for q in 0..dofs.len() {
                        local[p][q] += w * vol * dot(&v[p], &v[q]);
                    }
                }
            }
        }
        for (p, &dp) in dofs.iter().enumerate() {
            for (q, &dq) in dofs.iter().enumerate() {
                trip.push((dp, dq, local[p][q]));
            }
        }
    }
    let m = c.num_simplices(k);
    Csr::from_triplets(m, m, trip)
}

/// Cut mass `(·,·)_Ω` of degree `k` on the active complex.
fn cut_mass(mesh: &ActiveMesh, k: usize) -> Result<Csr> {
    let c = mesh.complex();
    let n = c.dim();
    let mut trip = Vec::new();
    for t in 0..c.num_simplices(n) {
        let pts = c.simplex_points(n, t);
        let local = if mesh.is_cut(t) {
            cut_element_mass(&pts, &mesh.level_set, k, CUT_DEPTH)
        } else {
            element_mass(&pts, k).map_err(|volume| Error::DegenerateSimplex {
                dim: n,
                index: t,
                volume,
            })?
        };
        let faces = c.top_faces(t, k);
        for (a, &ga) in faces.iter().enumerate() {
            for (b, &gb) in faces.iter().enumerate() {
                trip.push((ga, gb, local[a][b]));
            }
        }
    }
    let m = c.num_simplices(k);
    Ok(Csr::from_triplets(m, m, trip))
}

/// Operators of the active mesh with the stabilised inner product.
pub struct StabilizedOps {
    /// Active mesh with the plain `L²(Ω_h)` masses.
    pub base: Arc<DeRhamOps>,
    /// `(·,·)_Ω` per degree.
    pub cut_mass: Vec<Csr>,
    /// `γ s` per degree.
    pub penalty: Vec<Csr>,
    pub penalty_scale: f64,
    ops: Arc<DeRhamOps>,
    reduced: OnceLock<Arc<Reduced>>,
    hodge: OnceLock<HodgeSolver>,
}

/// Assembles `(·,·)_s = (·,·)_Ω + γ s(·,·)` on the active mesh.
pub fn assemble_stabilized(mesh: &ActiveMesh, penalty_scale: f64) -> Result<StabilizedOps> {
    if !(penalty_scale >= 0.0) {
        return Err(Error::Config(format!("penalty scale must be ≥ 0, got {penalty_scale}")));
    }
    let base = Arc::new(DeRhamOps::assemble(mesh.complex().clone())?);
    let n = base.dim();
    let cut_mass: Vec<Csr> = (0..=n).map(|k| cut_mass(mesh, k)).collect::<Result<_>>()?;
    let penalty: Vec<Csr> = (0..=n).map(|k| ghost_penalty(mesh, k).scale(penalty_scale)).collect();
    let mut masses: Vec<Csr> = cut_mass.iter().zip(&penalty).map(|(m, s)| m.add(s)).collect();
    masses.push(Csr::zeros(0, 0));
    let ops = Arc::new(base.with_masses(masses));
    Ok(StabilizedOps {
        base,
        cut_mass,
        penalty,
        penalty_scale,
        ops,
        reduced: OnceLock::new(),
        hodge: OnceLock::new(),
    })
}

impl StabilizedOps {
    /// The active complex with stabilised masses.
    pub fn ops(&self) -> &Arc<DeRhamOps> {
        &self.ops
    }

    pub fn reduced(&self) -> Result<&Arc<Reduced>> {
        if let Some(r) = self.reduced.get() {
            return Ok(r);
        }
        let r = Arc::new(Reduced::new(self.ops.clone(), None)?);
        Ok(self.reduced.get_or_init(|| r))
    }

    /// Hodge solver in the stabilised inner product.
    pub fn hodge(&self) -> Result<&HodgeSolver> {
        if let Some(h) = self.hodge.get() {
            return Ok(h);
        }
        let h = HodgeSolver::new(self.ops.clone(), HarmonicVariant::Stabilized)?;
        Ok(self.hodge.get_or_init(|| h))
    }

    pub fn s_inner(&self, a: &Cochain, b: &Cochain) -> Result<f64> {
        self.ops.inner(a, b)
    }

    pub fn s_norm(&self, a: &Cochain) -> Result<f64> {
        self.ops.norm(a)
    }

    /// `γ s(u, u)`.
    pub fn penalty_energy(&self, u: &Cochain) -> f64 {
        dot(&u.values, &self.penalty[u.degree].matvec(&u.values))
    }

    /// Extreme values of `‖u‖_s / ‖u‖_{L²(Ω_h)}` over all cochains of
    /// degree `k`, from the generalized eigenvalues of the two masses.
    pub fn norm_equivalence(&self, k: usize) -> Result<(f64, f64)> {
        let ms = self.ops.mass(k);
        let mh = self.base.mass(k);
        let opts = EigenOptions {
            block: 8,
            tol: 1e-9,
            max_iter: 4000,
            polish: 0,
        };
        let lo = smallest_eigenpairs(ms, mh, 1, 0.0, opts)?.values[0];
        let hi = 1.0 / smallest_eigenpairs(mh, ms, 1, 0.0, opts)?.values[0];
        Ok((lo.max(0.0).sqrt(), hi.sqrt()))
    }
}

/// `{ρ : Dρ = 0, ρ ⊥_s D(Λ^{k-1})}`, `s`-orthonormal.
pub fn stabilized_harmonic_basis(stab: &StabilizedOps, k: usize) -> Result<HarmonicBasis> {
    harmonic_basis_reduced(stab.reduced()?, k, HarmonicVariant::Stabilized)
}

/// `C_S = 1/√λ₁` for `‖η‖_s ≤ C_S ‖Dη‖_s`, `η ⊥_s ker D`.
pub fn stabilized_poincare_constant(stab: &StabilizedOps, k: usize) -> Result<SpectralReport> {
    Ok(first_eigen(stab.reduced()?, k, Convention::Stabilized)?.report)
}

/// Outcome of the discrete Poincaré pipeline for one datum.
#[derive(Clone, Debug)]
pub struct DiscretePoincare {
    pub tau: Cochain,
    /// `‖τ‖ / ‖Dω‖` in `L²(Ω_h)`.
    pub ratio: f64,
    /// The same in the stabilised norm.
    pub ratio_s: f64,
    /// `‖Dτ - Dω‖∞ / ‖Dω‖∞`.
    pub identity_residual: f64,
}

/// Potential `τ` of `Dω` on `Ω_h` through `K`: extend `σ = Dω` to `K`
/// (mixed variant), take the minimal-norm potential `η` of the extension on
/// the contractible `K`, and restrict it back.
pub fn discrete_uniform_poincare(
    problem: &ExtensionProblem,
    stab: &StabilizedOps,
    omega_h: &Cochain,
) -> Result<DiscretePoincare> {
    if problem.variant() != Variant::Mixed {
        return Err(Error::Config("discrete Poincaré pipeline needs the mixed variant".into()));
    }
    let ops = problem.ops_omega();
    let sigma = ops.d(omega_h)?;
    let sigma_norm = ops.norm(&sigma)?;
    if sigma.max_abs() == 0.0 {
        return Ok(DiscretePoincare {
            tau: ops.zeros(omega_h.degree),
            ratio: 0.0,
            ratio_s: 0.0,
            identity_residual: 0.0,
        });
    }
    let ext = problem.extend(&sigma)?;
    let eta = problem.ambient_hodge()?.minimal_norm_potential(&ext.extended)?;
    let tau = restrict(&eta, &problem.pair().omega)?;
    let dtau = ops.d(&tau)?;
    let identity_residual = dtau.sub(&sigma)?.max_abs() / sigma.max_abs();
    if !(identity_residual <= IDENTITY_TOL) {
        return Err(Error::Incompatible {
            what: "Dτ = Dω on the active mesh".into(),
            residual: identity_residual,
        });
    }
    let ratio_s = stab.s_norm(&tau)? / stab.s_norm(&sigma)?;
    Ok(DiscretePoincare {
        ratio: ops.norm(&tau)? / sigma_norm,
        ratio_s,
        tau,
        identity_residual,
    })
}

/// A random trigonometric `k`-form, `f_J(x) = Σ_m a_{mJ} sin(b_m · x + c_m)`.
#[derive(Clone, Debug)]
pub struct SmoothField {
    pub degree: usize,
    modes: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl SmoothField {
    pub fn random(dim: usize, degree: usize, modes: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        let ncomp = combinations(dim, degree).len();
        let modes = (0..modes)
            .map(|_| {
                let amp = (0..ncomp).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let freq = (0..dim).map(|_| rng.random_range(-6.0..=6.0)).collect();
                (amp, freq, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self { degree, modes }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let ncomp = self.modes.first().map_or(0, |m| m.0.len());
        let mut out = vec![0.0; ncomp];
        for (amp, freq, phase) in &self.modes {
            let s = (dot(freq, x) + phase).sin();
            out.iter_mut().zip(amp).for_each(|(o, a)| *o += a * s);
        }
        out
    }
}

/// De Rham map: integrates a `k`-form, given by its components on
/// `dx^J` (`J` in lexicographic order), over every `k`-simplex.
/// Degree-2 quadrature per simplex.
pub fn derham_interpolate(ops: &DeRhamOps, k: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Cochain> {
    let c = ops.complex();
    let n = c.dim();
    let axes = combinations(n, k);
    let rule = quadrature(k);
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    let values = (0..c.num_simplices(k))
        .map(|i| {
            let pts = c.simplex_points(k, i);
            // edge vectors as rows: e[r][axis]
            let e: Vec<Vec<f64>> = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect()).collect();
            let rows: Vec<usize> = (0..k).collect();
            let dets: Vec<f64> = axes.iter().map(|j| subdet(&e, &rows, j)).collect();
            rule.iter()
                .map(|(b, w)| w * dot(&f(&point(&pts, b)), &dets))
                .sum::<f64>()
                / kf
        })
        .collect();
    ops.cochain(k, values)
}

/// Configuration of a cut-position and refinement sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutScanConfig {
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub level_set: Region,
    pub h_levels: Vec<f64>,
    /// Number of grid offsets; offset 0 is the unshifted level set.
    pub offsets: usize,
    pub degrees: Vec<usize>,
    #[serde(default = "unit")]
    pub penalty_scale: f64,
    /// Random smooth data per case for the discrete Poincaré ratio.
    #[serde(default = "ten")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

fn ten() -> usize {
    10
}

#[derive(Clone, Debug, Serialize)]
pub struct CutScanRow {
    pub offset: usize,
    pub shift: Vec<f64>,
    pub h: f64,
    pub degree: usize,
    pub active_elements: usize,
    pub cut_elements: usize,
    pub ghost_facets: usize,
    pub harmonic_dim: usize,
    /// Stabilised constant `C_S`.
    pub c_s: f64,
    pub norm_lower: f64,
    pub norm_upper: f64,
    /// Largest `‖τ‖/‖Dω‖` over the data.
    pub discrete_ratio: f64,
    pub identity_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CutScanReport {
    pub rows: Vec<CutScanRow>,
    /// Per degree: `max C_S / min C_S` over all cases.
    pub c_s_spread: Vec<(usize, f64)>,
    /// Per degree: spread of the per-level maximum discrete ratio across levels.
    pub discrete_spread: Vec<(usize, f64)>,
    pub norm_lower_min: f64,
    pub norm_upper_max: f64,
    pub identity_residual_max: f64,
    pub warnings: Vec<String>,
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi / lo
}

/// Sweeps grid offsets and mesh sizes; cases run through `exec`.
pub fn cutfem_scan(cfg: &CutScanConfig, exec: Exec) -> Result<CutScanReport> {
    let dim = cfg.bounds.lower.len();
    if let Some(&k) = cfg.degrees.iter().find(|&&k| k >= dim) {
        return Err(Error::Config(format!("cutfem degree {k} must be below the dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit_shifts: Vec<Vec<f64>> = (0..cfg.offsets)
        .map(|o| {
            (0..dim)
                .map(|_| if o == 0 { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect()
        })
        .collect();
    let cases: Vec<(usize, f64)> = (0..cfg.offsets)
        .flat_map(|o| cfg.h_levels.iter().map(move |&h| (o, h)))
        .collect();
    let results = par::map(exec, &cases, |&(o, h)| scan_case(cfg, o, &unit_shifts[o], h));
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let (rs, ws) = r?;
        rows.extend(rs);
        warnings.extend(ws);
    }
    warnings.sort();
    warnings.dedup();
    let c_s_spread = cfg
        .degrees
        .iter()
        .map(|&k| (k, spread(rows.iter().filter(|r| r.degree == k).map(|r| r.c_s))))
        .collect();
    let discrete_spread = cfg
        .degrees
        .iter()
        .map(|&k| {
            let per_level = cfg.h_levels.iter().map(|&h| {
                rows.iter()
                    .filter(|r| r.degree == k && r.h == h)
                    .map(|r| r.discrete_ratio)
                    .fold(0.0, f64::max)
            });
            (k, spread(per_level))
        })
        .collect();
    Ok(CutScanReport {
        norm_lower_min: rows.iter().map(|r| r.norm_lower).fold(f64::INFINITY, f64::min),
        norm_upper_max: rows.iter().map(|r| r.norm_upper).fold(0.0, f64::max),
        identity_residual_max: rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max),
        rows,
        c_s_spread,
        discrete_spread,
        warnings,
    })
}

fn scan_case(cfg: &CutScanConfig, offset: usize, unit_shift: &[f64], h: f64) -> Result<(Vec<CutScanRow>, Vec<String>)> {
    let shift: Vec<f64> = unit_shift.iter().map(|s| s * h).collect();
    let region = shifted(&cfg.level_set, &shift);
    let mesh = build_active_mesh(&cfg.bounds, &region, h)?;
    let stab = assemble_stabilized(&mesh, cfg.penalty_scale)?;
    let problem = mesh.extension_problem()?;
    let dim = cfg.bounds.lower.len();
    let mut rows = Vec::new();
    for &k in &cfg.degrees {
        let c_s = stabilized_poincare_constant(&stab, k)?.poincare_constant;
        let (norm_lower, norm_upper) = stab.norm_equivalence(k)?;
        let harmonic_dim = stabilized_harmonic_basis(&stab, k)?.dim();
        let mut discrete_ratio = 0.0f64;
        let mut identity_residual = 0.0f64;
        for j in 0..cfg.samples {
            // the same fields on every level and offset
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((j as u64) << 20) ^ ((k as u64) << 40));
            let field = SmoothField::random(dim, k, 4, &mut rng);
            let omega = derham_interpolate(problem.ops_omega(), k, |x| field.eval(x))?;
            let r = discrete_uniform_poincare(&problem, &stab, &omega)?;
            discrete_ratio = discrete_ratio.max(r.ratio);
            identity_residual = identity_residual.max(r.identity_residual);
        }
        rows.push(CutScanRow {
            offset,
            shift: shift.clone(),
            h,
            degree: k,
            active_elements: mesh.complex().num_simplices(dim),
            cut_elements: mesh.cut_elements.len(),
            ghost_facets: mesh.ghost_facets.len(),
            harmonic_dim,
            c_s,
            norm_lower,
            norm_upper,
            discrete_ratio,
            identity_residual,
        });
    }
    Ok((rows, mesh.warnings))
}
