use std::sync::Arc;

use cochain_ext::forms::{extend_by_zero, read_cochain, restrict, write_cochain, DeRhamOps};
use cochain_ext::mesh::{build_box_complex, extract_subcomplex, BoxDomain, OrientedComplex, Region, INTERFACE};
use faer::Side;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn square_ops(h: f64) -> DeRhamOps {
    DeRhamOps::assemble(Arc::new(build_box_complex(&BoxDomain::unit(2), h, 2).unwrap())).unwrap()
}

#[test]
fn unit_interval_mass_and_coboundary() {
    let c = Arc::new(build_box_complex(&BoxDomain::unit(1), 1.0, 1).unwrap());
    let ops = DeRhamOps::assemble(c).unwrap();
    let m = ops.mass(0).to_dense();
    assert!((m[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    assert!((m[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);

    let c = Arc::new(build_box_complex(&BoxDomain::unit(1), 0.5, 1).unwrap());
    let ops = DeRhamOps::assemble(c).unwrap();
    let hat = ops.cochain(0, vec![0.0, 1.0, 0.0]).unwrap();
    assert_eq!(ops.d(&hat).unwrap().values, vec![1.0, -1.0]);
}

#[test]
fn right_triangle_top_mass() {
    let c = OrientedComplex::from_top_simplices(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], &[vec![0, 1, 2]]).unwrap();
    let ops = DeRhamOps::assemble(Arc::new(c)).unwrap();
    assert!((ops.mass(2).get(0, 0) - 2.0).abs() < 1e-14);
}

#[test]
fn degenerate_triangle_is_rejected() {
    let c = OrientedComplex::from_top_simplices(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0], &[vec![0, 1, 2]]).unwrap();
    let err = DeRhamOps::assemble(Arc::new(c)).unwrap_err();
    assert!(matches!(err, cochain_ext::Error::DegenerateSimplex { index: 0, .. }));
}

/// Whitney 1-form mass on a triangle by vector proxies
/// `λ_i ∇λ_j − λ_j ∇λ_i` and the edge-midpoint rule (exact for quadratics).
fn proxy_edge_mass(p: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    // ∇λ_i = rot(p_{i+2} - p_{i+1}) / (2|T|), rot(x, y) = (-y, x) up to orientation sign
    let grad = |i: usize| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
    };
    let g = [grad(0), grad(1), grad(2)];
    let edges = [(0, 1), (0, 2), (1, 2)];
    let mids = [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    let field = |e: (usize, usize), lam: &[f64; 3]| {
        let (i, j) = e;
        [lam[i] * g[j][0] - lam[j] * g[i][0], lam[i] * g[j][1] - lam[j] * g[i][1]]
    };
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut s = 0.0;
            for lam in &mids {
                let u = field(edges[a], lam);
                let v = field(edges[b], lam);
                s += u[0] * v[0] + u[1] * v[1];
            }
            m[a][b] = s / 3.0 * area2.abs() / 2.0;
        }
    }
    m
}

#[test]
fn edge_mass_matches_vector_proxy_oracle() {
    let tris = [
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0.1, -0.2], [1.3, 0.4], [0.2, 0.9]],
        [[0.0, 0.0], [2.0, 0.1], [1.0, 3.0]],
    ];
    for p in &tris {
        let pts: Vec<Vec<f64>> = p.iter().map(|x| x.to_vec()).collect();
        let m = cochain_ext::forms::element_mass(&pts, 1).unwrap();
        let o = proxy_edge_mass(p);
        for a in 0..3 {
            for b in 0..3 {
                assert!((m[a][b] - o[a][b]).abs() < 1e-13, "{a}{b}: {} vs {}", m[a][b], o[a][b]);
            }
        }
    }
}

#[test]
fn partition_of_unity() {
    let ops = square_ops(0.125);
    let one = ops.cochain(0, vec![1.0; ops.count(0)]).unwrap();
    assert!((ops.inner(&one, &one).unwrap() - 1.0).abs() < 1e-13);
    assert!(ops.d(&one).unwrap().max_abs() == 0.0);
}

#[test]
fn masses_are_positive_definite() {
    for dim in 1..=3 {
        let c = Arc::new(build_box_complex(&BoxDomain::unit(dim), 0.5, dim).unwrap());
        let ops = DeRhamOps::assemble(c).unwrap();
        for k in 0..=dim {
            let m = ops.mass(k);
            assert!(m.asymmetry() < 1e-15);
            let eig = m.to_dense().self_adjoint_eigen(Side::Lower).unwrap();
            let s = eig.S().column_vector();
            assert!(s[0] > 0.0, "dim {dim} k {k}: {}", s[0]);
        }
    }
}

#[test]
fn coboundary_squares_to_zero_exactly() {
    for dim in 2..=3 {
        let c = Arc::new(build_box_complex(&BoxDomain::unit(dim), 0.5, dim).unwrap());
        let ops = DeRhamOps::assemble(c).unwrap();
        for k in 0..dim {
            let dd = ops.coboundary(k + 1).matmul(ops.coboundary(k));
            assert!(dd.triplets().all(|(_, _, v)| v == 0.0));
        }
    }
}

#[test]
fn degree_above_top_is_zero_object() {
    let ops = square_ops(0.5);
    let w = ops.zeros(2);
    let dw = ops.d(&w).unwrap();
    assert_eq!(dw.degree, 3);
    assert!(dw.is_empty());
    assert_eq!(ops.inner(&dw, &dw).unwrap(), 0.0);
}

#[test]
fn mismatches_are_rejected() {
    let ops = square_ops(0.5);
    let other = square_ops(0.25);
    let a = ops.zeros(1);
    let b = other.zeros(1);
    assert!(ops.inner(&a, &b).is_err());
    assert!(ops.inner(&a, &ops.zeros(0)).is_err());
}

fn annulus_exterior() -> (cochain_ext::mesh::SubcomplexMap, DeRhamOps, DeRhamOps) {
    let k = Arc::new(build_box_complex(&BoxDomain::unit(2), 0.125, 2).unwrap());
    let disk = Region::Disk {
        center: vec![0.5, 0.5],
        radius: 0.3,
    };
    let a = extract_subcomplex(k.clone(), |t| !disk.contains(&k.barycenter(2, t))).unwrap();
    let ok = DeRhamOps::assemble(k).unwrap();
    let oa = DeRhamOps::assemble(a.child.clone()).unwrap();
    (a, ok, oa)
}

#[test]
fn extension_by_zero_commutes_with_d() {
    let (map, ok, oa) = annulus_exterior();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..=2 {
        let mut b = oa.random(k, &mut rng);
        for &i in map.child.label(INTERFACE, k).unwrap() {
            b.values[i] = 0.0;
        }
        let eb = extend_by_zero(&b, &map, 0.0).unwrap();
        assert_eq!(restrict(&eb, &map).unwrap(), b);
        assert!((ok.inner(&eb, &eb).unwrap() - oa.inner(&b, &b).unwrap()).abs() < 1e-13);
        let lhs = ok.d(&eb).unwrap();
        let rhs = extend_by_zero(&oa.d(&b).unwrap(), &map, 0.0).unwrap();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn nonconforming_extension_names_simplices() {
    let (map, _, oa) = annulus_exterior();
    let mut b = oa.zeros(1);
    let i = map.child.label(INTERFACE, 1).unwrap()[0];
    b.values[i] = 1.0;
    match extend_by_zero(&b, &map, 1e-12) {
        Err(cochain_ext::Error::NonConforming { simplices, .. }) => assert_eq!(simplices, vec![i]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn restriction_commutes_with_d() {
    let (map, ok, oa) = annulus_exterior();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..2 {
        let a = ok.random(k, &mut rng);
        assert_eq!(oa.d(&restrict(&a, &map).unwrap()).unwrap(), restrict(&ok.d(&a).unwrap(), &map).unwrap());
    }
}

#[test]
fn cochain_csv_round_trip() {
    let ops = square_ops(0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = ops.random(1, &mut rng);
    let mut buf = Vec::new();
    write_cochain(&a, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# {\"degree\":1"));
    let back = read_cochain(&buf[..]).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inner_is_symmetric_and_graph_norm_splits(seed in any::<u64>(), k in 0usize..3) {
        let ops = square_ops(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = ops.random(k, &mut rng);
        let b = ops.random(k, &mut rng);
        let ab = ops.inner(&a, &b).unwrap();
        let ba = ops.inner(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-14 * ab.abs().max(1.0));
        prop_assert!(ops.inner(&a, &a).unwrap() > 0.0);
        let da = ops.d(&a).unwrap();
        let g = ops.graph_norm(&a).unwrap();
        let split = ops.inner(&a, &a).unwrap() + ops.inner(&da, &da).unwrap();
        prop_assert!((g * g - split).abs() <= 1e-12 * split);
        prop_assert!(ops.d(&da).unwrap().max_abs() == 0.0);
    }
}
