mod common;

use std::sync::Arc;

use cochain_ext::cutfem::*;
use cochain_ext::forms::{element_mass, DeRhamOps};
use cochain_ext::hodge::{harmonic_basis, HarmonicVariant};
use cochain_ext::mesh::{BoxDomain, OrientedComplex, Region};
use cochain_ext::par::Exec;
use cochain_ext::spectra::{poincare_constant, Convention};
use common::*;
use faer::Side;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn circle(r: f64) -> Region {
    Region::Disk {
        center: vec![0.5, 0.5],
        radius: r,
    }
}

fn annulus() -> Region {
    Region::Annulus {
        center: vec![0.5, 0.5],
        inner: 0.15,
        outer: 0.35,
    }
}

fn mesh(r: &Region, h: f64) -> ActiveMesh {
    build_active_mesh(&BoxDomain::unit(2), r, h).unwrap()
}

fn barycentric_2d(p: &[Vec<f64>], x: &[f64]) -> [f64; 3] {
    let (a, b, c, d) = (p[1][0] - p[0][0], p[2][0] - p[0][0], p[1][1] - p[0][1], p[2][1] - p[0][1]);
    let det = a * d - b * c;
    let (rx, ry) = (x[0] - p[0][0], x[1] - p[0][1]);
    let l1 = (d * rx - b * ry) / det;
    let l2 = (-c * rx + a * ry) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[test]
fn circle_active_mesh_covers_the_domain() {
    let m = mesh(&circle(0.3), 1.0 / 16.0);
    assert_eq!(m.uncovered_elements(8), 0);
    assert!(m.warnings.is_empty());
    // regression counts
    assert_eq!(m.complex().num_simplices(2), 170);
    assert_eq!(m.cut_elements.len(), 62);
    assert_eq!(m.ghost_facets.len(), 90);
    // Ω_h strictly larger than Ω
    let area: f64 = (0..170).map(|t| m.complex().simplex_points(2, t)).map(|p| tri_area(&p)).sum();
    assert!(area > std::f64::consts::PI * 0.09);
}

fn tri_area(p: &[Vec<f64>]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
}

#[test]
fn ghost_facets_are_interior_and_touch_a_cut_element() {
    let m = mesh(&annulus(), 1.0 / 16.0);
    let c = m.complex();
    for g in &m.ghost_facets {
        let [a, b] = g.elements;
        assert_ne!(a, b);
        assert!(m.is_cut(a) || m.is_cut(b));
        for t in [a, b] {
            assert!(c.top_faces(t, 1).contains(&g.facet));
        }
        let sharing = (0..c.num_simplices(2)).filter(|&t| c.top_faces(t, 1).contains(&g.facet)).count();
        assert_eq!(sharing, 2);
    }
}

#[test]
fn tiny_domain_activates_one_vertex_star() {
    // a small disk around a grid vertex meets exactly the elements of its star
    let m = mesh(&circle(0.01), 1.0 / 8.0);
    let c = m.complex();
    assert_eq!(c.num_simplices(2), 6);
    assert_eq!(m.cut_elements.len(), 6);
    for t in 0..6 {
        assert!(c.simplex_points(2, t).iter().any(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12));
    }
}

#[test]
fn active_meshes_are_nested_under_refinement() {
    for r in [circle(0.3), annulus()] {
        for (h, hf) in [(1.0 / 8.0, 1.0 / 16.0), (1.0 / 16.0, 1.0 / 32.0)] {
            let coarse = mesh(&r, h);
            let fine = mesh(&r, hf);
            let cc = coarse.complex();
            let cf = fine.complex();
            for t in 0..cf.num_simplices(2) {
                let x = cf.barycenter(2, t);
                let inside = (0..cc.num_simplices(2)).any(|s| {
                    barycentric_2d(&cc.simplex_points(2, s), &x).iter().all(|&l| l >= -1e-12)
                });
                assert!(inside, "fine element {t} outside the coarse active mesh");
            }
        }
    }
}

#[test]
fn under_resolved_domain_warns() {
    let m = mesh(&annulus(), 1.0 / 8.0);
    assert_eq!(m.warnings.len(), 1);
    assert!(m.warnings[0].contains("not resolved"));
}

#[test]
fn cut_quadrature_measures_the_physical_domain() {
    let m = mesh(&circle(0.3), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    // Σ_ab M_ab = ∫ (Σ φ_a)² = |Ω ∩ Ω_h| for degree 0
    let area: f64 = s.cut_mass[0].triplets().map(|(_, _, v)| v).sum();
    let exact = std::f64::consts::PI * 0.09;
    assert!((area / exact - 1.0).abs() < 2e-3, "{area} vs {exact}");
    // an element inside the domain gets the exact Whitney mass
    let pts = vec![vec![0.5, 0.5], vec![0.55, 0.5], vec![0.55, 0.55]];
    for k in 0..3 {
        let cut = cut_element_mass(&pts, &circle(0.3), k, CUT_DEPTH);
        let exact = element_mass(&pts, k).unwrap();
        for (a, b) in cut.iter().flatten().zip(exact.iter().flatten()) {
            assert!((a - b).abs() <= 1e-15 + 1e-12 * b.abs());
        }
    }
}

#[test]
fn subdivided_quadrature_is_exact_on_full_pieces() {
    // with a region containing the whole element, the subdivision path
    // reproduces the exact mass in every degree
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9]];
    let big = Region::Box {
        lower: vec![-1.0, -1.0],
        upper: vec![2.0, 2.0],
    };
    for k in 0..3 {
        let a = cut_element_mass(&pts, &big, k, CUT_DEPTH);
        let b = element_mass(&pts, k).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() <= 1e-13);
        }
    }
    // half-plane cut along a grid-aligned line splits a square cell exactly
    let half = Region::Box {
        lower: vec![-1.0, -1.0],
        upper: vec![0.5, 2.0],
    };
    let tri = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let a: f64 = cut_element_mass(&tri, &half, 0, CUT_DEPTH).iter().flatten().sum();
    assert!((a - 0.125).abs() < 1e-12, "{a}");
}

/// Independent value of the degree-0 penalty: `E₁u - E₂u` is the gradient
/// jump times the distance to the facet line, and `∫_T dist² = |T| H² / 6`.
fn scalar_penalty_oracle(m: &ActiveMesh, u: &[f64]) -> f64 {
    let c = m.complex();
    let grad = |t: usize| {
        let p = c.simplex_points(2, t);
        let v = c.simplex(2, t);
        let (a, b, cc, d) = (p[1][0] - p[0][0], p[2][0] - p[0][0], p[1][1] - p[0][1], p[2][1] - p[0][1]);
        let det = a * d - b * cc;
        let (du1, du2) = (u[v[1]] - u[v[0]], u[v[2]] - u[v[0]]);
        // [a c; b d] g = [du1; du2]
        [(d * du1 - cc * du2) / det, (-b * du1 + a * du2) / det]
    };
    let mut s = 0.0;
    for g in &m.ghost_facets {
        let f = c.simplex_points(1, g.facet);
        let len = ((f[1][0] - f[0][0]).powi(2) + (f[1][1] - f[0][1]).powi(2)).sqrt();
        let n = [-(f[1][1] - f[0][1]) / len, (f[1][0] - f[0][0]) / len];
        let [a, b] = g.elements;
        let (ga, gb) = (grad(a), grad(b));
        let jump = (ga[0] - gb[0]) * n[0] + (ga[1] - gb[1]) * n[1];
        let w: f64 = [a, b]
            .iter()
            .map(|&t| {
                let area = tri_area(&c.simplex_points(2, t));
                let hgt = 2.0 * area / len;
                area * hgt * hgt / 6.0
            })
            .sum();
        s += jump * jump * w;
    }
    s
}

#[test]
fn scalar_ghost_penalty_matches_closed_form() {
    let m = mesh(&circle(0.3), 1.0 / 8.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let u = s.base.random(0, &mut rng);
        let got = s.penalty_energy(&u);
        let want = scalar_penalty_oracle(&m, &u.values);
        assert!((got - want).abs() <= 1e-11 * want, "{got} vs {want}");
    }
}

#[test]
fn penalty_vanishes_on_global_polynomials_and_away_from_the_cut() {
    let m = mesh(&annulus(), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let ops = &s.base;
    // affine function and constant 1-form: both are single polynomials
    let lin = derham_interpolate(ops, 0, |x| vec![1.0 + 2.0 * x[0] - 3.0 * x[1]]).unwrap();
    let cst = derham_interpolate(ops, 1, |_| vec![0.7, -1.3]).unwrap();
    let vol = derham_interpolate(ops, 2, |_| vec![2.0]).unwrap();
    for u in [&lin, &cst, &vol] {
        let e = s.penalty_energy(u);
        let scale = ops.norm(u).unwrap().powi(2);
        assert!(e.abs() <= 1e-12 * scale, "degree {}: {e}", u.degree);
    }
    // a cochain on simplices outside every ghost patch (the thin ring has
    // none, so use a disk)
    let m = mesh(&circle(0.3), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let ops = &s.base;
    let c = m.complex();
    let mut in_patch = vec![false; c.num_simplices(2)];
    for g in &m.ghost_facets {
        in_patch[g.elements[0]] = true;
        in_patch[g.elements[1]] = true;
    }
    for k in 0..3 {
        let mut touched = vec![false; c.num_simplices(k)];
        for t in (0..in_patch.len()).filter(|&t| in_patch[t]) {
            for &f in c.top_faces(t, k) {
                touched[f] = true;
            }
        }
        let values: Vec<f64> = (0..touched.len()).map(|i| if touched[i] { 0.0 } else { 1.0 + i as f64 }).collect();
        assert!(values.iter().any(|&v| v != 0.0));
        let u = ops.cochain(k, values).unwrap();
        assert_eq!(s.penalty_energy(&u), 0.0);
    }
}

#[test]
fn zero_scale_leaves_the_cut_inner_product() {
    let m = mesh(&circle(0.3), 1.0 / 8.0);
    let s = assemble_stabilized(&m, 0.0).unwrap();
    for k in 0..3 {
        assert_eq!(s.penalty[k].triplets().map(|(_, _, v)| v.abs()).fold(0.0, f64::max), 0.0);
        let a = dense(s.ops().mass(k));
        let b = dense(&s.cut_mass[k]);
        assert_eq!(max_abs_diff(&to_vec(&a), &to_vec(&b)), 0.0);
    }
}

#[test]
fn stabilized_mass_is_positive_definite_and_penalty_semidefinite() {
    let m = mesh(&annulus(), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    for k in 0..3 {
        let min_eig = |a: &cochain_ext::linalg::Csr| {
            let d = dense(a);
            let e = d.self_adjoint_eigen(Side::Lower).unwrap();
            let v = e.S().column_vector();
            let top = (0..d.nrows()).map(|i| v[i]).fold(f64::NEG_INFINITY, f64::max);
            ((0..d.nrows()).map(|i| v[i]).fold(f64::INFINITY, f64::min), top)
        };
        let (lo, hi) = min_eig(&s.penalty[k]);
        assert!(lo >= -1e-12 * hi, "k={k}: penalty eigenvalue {lo}");
        let (lo, _) = min_eig(s.ops().mass(k));
        assert!(lo > 0.0, "k={k}");
        let (c1, c2) = s.norm_equivalence(k).unwrap();
        assert!(c1 > 0.0 && c1 <= c2);
    }
}

#[test]
fn uncut_square_reproduces_the_fitted_constants() {
    let m = mesh(&Region::Everything, 1.0 / 16.0);
    assert!(m.cut_elements.is_empty() && m.ghost_facets.is_empty());
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let square = Arc::new(
        DeRhamOps::assemble(Arc::new(
            cochain_ext::mesh::build_box_complex(&BoxDomain::unit(2), 1.0 / 16.0, 2).unwrap(),
        ))
        .unwrap(),
    );
    for k in 0..2 {
        let a = stabilized_poincare_constant(&s, k).unwrap().poincare_constant;
        let b = poincare_constant(&square, k, Convention::NeumannCoclosed).unwrap().poincare_constant;
        assert!((a - b).abs() <= 1e-8 * b, "k={k}: {a} vs {b}");
    }
    // harmonic spaces coincide with the absolute ones
    for k in 0..3 {
        let hs = stabilized_harmonic_basis(&s, k).unwrap();
        let ha = harmonic_basis(&s.base, k, HarmonicVariant::Absolute).unwrap();
        assert_eq!(hs.dim(), ha.dim());
        for (p, q) in hs.basis.iter().zip(&ha.basis) {
            let ip = s.base.inner(p, q).unwrap().abs();
            assert!((ip - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn stabilized_harmonic_dimensions_follow_topology() {
    let disk = assemble_stabilized(&mesh(&circle(0.3), 1.0 / 16.0), 1.0).unwrap();
    let ring = assemble_stabilized(&mesh(&annulus(), 1.0 / 16.0), 1.0).unwrap();
    assert_eq!(stabilized_harmonic_basis(&disk, 0).unwrap().dim(), 1);
    assert_eq!(stabilized_harmonic_basis(&disk, 1).unwrap().dim(), 0);
    assert_eq!(stabilized_harmonic_basis(&ring, 1).unwrap().dim(), 1);
    let q = &stabilized_harmonic_basis(&ring, 1).unwrap().basis[0];
    assert!((ring.s_norm(q).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn stabilized_hodge_decomposition_reconstructs() {
    let s = assemble_stabilized(&mesh(&annulus(), 1.0 / 16.0), 1.0).unwrap();
    let hodge = s.hodge().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..3 {
        let w = s.ops().random(k, &mut rng);
        let split = hodge.hodge_decompose(&w).unwrap();
        assert!(split.reconstruction_residual <= 1e-9, "k={k}: {}", split.reconstruction_residual);
        let parts = [&split.exact, &split.coexact, &split.harmonic];
        let nw = s.s_norm(&w).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                let ip = s.s_inner(parts[i], parts[j]).unwrap();
                assert!(ip.abs() <= 1e-9 * nw * nw, "k={k} ({i},{j}): {ip}");
            }
        }
    }
}

#[test]
fn minimal_stabilized_potential_has_the_smallest_norm() {
    let s = assemble_stabilized(&mesh(&circle(0.3), 1.0 / 16.0), 1.0).unwrap();
    let hodge = s.hodge().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..2 {
        for _ in 0..4 {
            let tau = s.ops().random(k, &mut rng);
            let dt = s.ops().d(&tau).unwrap();
            let eta = hodge.minimal_norm_potential(&dt).unwrap();
            let eta = if eta.values.is_empty() { s.ops().zeros(k) } else { eta };
            // k = 0 has the constants as kernel; compare to the mean-free part
            let d_eta = s.ops().d(&eta).unwrap();
            if k > 0 {
                assert!(d_eta.sub(&dt).unwrap().max_abs() <= 1e-9 * dt.max_abs());
            }
            assert!(s.s_norm(&eta).unwrap() <= s.s_norm(&tau).unwrap() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn closed_datum_has_zero_potential() {
    let m = mesh(&annulus(), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let p = m.extension_problem().unwrap();
    let w = derham_interpolate(p.ops_omega(), 0, |_| vec![3.0]).unwrap();
    let r = discrete_uniform_poincare(&p, &s, &w).unwrap();
    assert_eq!(r.ratio, 0.0);
    assert_eq!(r.tau.max_abs(), 0.0);
}

#[test]
fn discrete_potential_reproduces_the_coboundary() {
    let m = mesh(&circle(0.3), 1.0 / 16.0);
    let s = assemble_stabilized(&m, 1.0).unwrap();
    let p = m.extension_problem().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..2 {
        for _ in 0..3 {
            let w = p.ops_omega().random(k, &mut rng);
            let r = discrete_uniform_poincare(&p, &s, &w).unwrap();
            assert!(r.identity_residual <= 1e-12, "k={k}: {}", r.identity_residual);
            assert!(r.ratio > 0.0 && r.ratio.is_finite());
        }
    }
}

#[test]
fn derham_map_commutes_with_the_coboundary() {
    let c: Arc<OrientedComplex> = mesh(&annulus(), 1.0 / 16.0).complex().clone();
    let ops = DeRhamOps::assemble(c).unwrap();
    // f = x² + xy - y³/3, df = (2x + y, x - y²)
    let f = derham_interpolate(&ops, 0, |x| vec![x[0] * x[0] + x[0] * x[1] - x[1].powi(3) / 3.0]).unwrap();
    let df = derham_interpolate(&ops, 1, |x| vec![2.0 * x[0] + x[1], x[0] - x[1] * x[1]]).unwrap();
    assert!(ops.d(&f).unwrap().sub(&df).unwrap().max_abs() < 1e-14);
    // g = (xy, x + y), dg = (1 - x) dx∧dy
    let g = derham_interpolate(&ops, 1, |x| vec![x[0] * x[1], x[0] + x[1]]).unwrap();
    let dg = derham_interpolate(&ops, 2, |x| vec![1.0 - x[0]]).unwrap();
    assert!(ops.d(&g).unwrap().sub(&dg).unwrap().max_abs() < 1e-14);
}

#[test]
fn cut_scan_is_deterministic_across_executors() {
    let cfg = CutScanConfig {
        bounds: BoxDomain::unit(2),
        level_set: circle(0.3),
        h_levels: vec![1.0 / 8.0, 1.0 / 16.0],
        offsets: 2,
        degrees: vec![0, 1],
        penalty_scale: 1.0,
        samples: 2,
        seed: 4,
    };
    let a = cutfem_scan(&cfg, Exec::Sequential).unwrap();
    let b = cutfem_scan(&cfg, Exec::Parallel).unwrap();
    assert_eq!(a.rows.len(), 8);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.c_s, y.c_s);
        assert_eq!(x.discrete_ratio, y.discrete_ratio);
    }
    assert_eq!(a.rows[0].shift, vec![0.0, 0.0]);
    assert!(a.c_s_spread.iter().all(|&(_, s)| s < 2.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn shifted_circles_give_positive_norm_equivalence(dx in 0.0f64..0.0625, dy in 0.0f64..0.0625) {
        let r = shifted(&circle(0.3), &[dx, dy]);
        let m = mesh(&r, 1.0 / 16.0);
        prop_assert_eq!(m.uncovered_elements(6), 0);
        let s = assemble_stabilized(&m, 1.0).unwrap();
        let (c1, c2) = s.norm_equivalence(0).unwrap();
        prop_assert!(c1 > 0.25 && c2 < 5.0, "{} {}", c1, c2);
    }

    #[test]
    fn penalty_energy_is_nonnegative(seed in 0u64..1000) {
        let m = mesh(&annulus(), 1.0 / 16.0);
        let s = assemble_stabilized(&m, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..3 {
            let u = s.base.random(k, &mut rng);
            prop_assert!(s.penalty_energy(&u) >= 0.0);
        }
    }
}
