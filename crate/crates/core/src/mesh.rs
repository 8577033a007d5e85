//! Oriented simplicial complexes over boxes, subcomplex extraction and
//! simplicial homology.
//!
//! Simplices are strictly increasing vertex tuples; the orientation of a
//! simplex is the order of its sorted vertices and the `i`-th face (vertex
//! `i` removed) carries the incidence sign `(-1)^i`. Every simplex list is
//! sorted lexicographically, so indices are deterministic.
//!
//! Complexes carry degree-wise label sets. Every complex has `boundary`
//! (closure of the facets with a single coface). A complex extracted from a
//! parent also has `interface` (closure of the boundary facets shared with
//! the rest of the parent) and `outer` (closure of the boundary facets lying
//! on the parent's boundary). At the facet level these two partition
//! `boundary`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Csr;

pub const BOUNDARY: &str = "boundary";
pub const INTERFACE: &str = "interface";
pub const OUTER: &str = "outer";

type Key = [usize; 4];

fn key(vs: &[usize]) -> Key {
    let mut k = [usize::MAX; 4];
    k[..vs.len()].copy_from_slice(vs);
    k
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Increasing index subsets of `0..n` of size `k`, in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct OrientedComplex {
    dim: usize,
    coords: Vec<f64>,
    /// `simplices[k]`: flat vertex tuples with stride `k + 1`.
    simplices: Vec<Vec<usize>>,
    /// `faces[k]`: for each top simplex, the global indices of its local
    /// `k`-faces in [`combinations`] order.
    faces: Vec<Vec<usize>>,
    /// `boundary[k]` is `∂_k`: rows are `(k-1)`-simplices, columns `k`-simplices.
    boundary: Vec<Csr>,
    tags: BTreeMap<String, Vec<Vec<usize>>>,
    id: u64,
}

impl OrientedComplex {
    /// Closure of the given top simplices. Vertex tuples are sorted here.
    pub fn from_top_simplices(dim: usize, coords: Vec<f64>, top: &[Vec<usize>]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidComplex("coordinate count not a multiple of dim".into()));
        }
        let nverts = coords.len() / dim;
        let mut tops: Vec<Key> = Vec::with_capacity(top.len());
        for t in top {
            let mut t = t.clone();
            t.sort_unstable();
            if t.len() != dim + 1 || t.windows(2).any(|w| w[0] == w[1]) || t[dim] >= nverts {
                return Err(Error::InvalidComplex(format!("bad top simplex {t:?}")));
            }
            tops.push(key(&t));
        }
        tops.sort_unstable();
        tops.dedup();
        if tops.is_empty() {
            return Err(Error::EmptySelection);
        }

        let combos: Vec<Vec<Vec<usize>>> = (0..=dim).map(|k| combinations(dim + 1, k + 1)).collect();
        let mut lists: Vec<Vec<Key>> = vec![Vec::new(); dim + 1];
        for t in &tops {
            for k in 0..=dim {
                for c in &combos[k] {
                    let vs: Vec<usize> = c.iter().map(|&i| t[i]).collect();
                    lists[k].push(key(&vs));
                }
            }
        }
        let mut index: Vec<HashMap<Key, usize>> = Vec::with_capacity(dim + 1);
        let mut simplices = Vec::with_capacity(dim + 1);
        for (k, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            index.push(list.iter().enumerate().map(|(i, s)| (*s, i)).collect());
            simplices.push(list.iter().flat_map(|s| s[..=k].iter().copied()).collect::<Vec<_>>());
        }
        let faces = (0..=dim)
            .map(|k| {
                tops.iter()
                    .flat_map(|t| {
                        let index = &index[k];
                        combos[k].iter().map(move |c| {
                            let vs: Vec<usize> = c.iter().map(|&i| t[i]).collect();
                            index[&key(&vs)]
                        })
                    })
                    .collect()
            })
            .collect();
        let mut boundary = vec![Csr::zeros(0, simplices[0].len())];
        for k in 1..=dim {
            let n = simplices[k].len() / (k + 1);
            let mut trip = Vec::with_capacity(n * (k + 1));
            for j in 0..n {
                let s = &simplices[k][j * (k + 1)..(j + 1) * (k + 1)];
                for i in 0..=k {
                    let mut f = s.to_vec();
                    f.remove(i);
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    trip.push((index[k - 1][&key(&f)], j, sign));
                }
            }
            boundary.push(Csr::from_triplets(simplices[k - 1].len() / k, n, trip));
        }
        let mut c = Self {
            dim,
            coords,
            simplices,
            faces,
            boundary,
            tags: BTreeMap::new(),
            id: 0,
        };
        let bfacets: Vec<usize> = c.facet_cofaces().iter().enumerate().filter(|(_, n)| **n == 1).map(|(i, _)| i).collect();
        let closure = c.closure_of_facets(&bfacets);
        c.tags.insert(BOUNDARY.to_string(), closure);
        c.id = c.compute_id();
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_simplices(&self, k: usize) -> usize {
        if k > self.dim {
            0
        } else {
            self.simplices[k].len() / (k + 1)
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..=self.dim).map(|k| self.num_simplices(k)).collect()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn simplex(&self, k: usize, i: usize) -> &[usize] {
        &self.simplices[k][i * (k + 1)..(i + 1) * (k + 1)]
    }

    pub fn simplices(&self, k: usize) -> impl Iterator<Item = &[usize]> {
        self.simplices[k].chunks_exact(k + 1)
    }

    /// Global indices of the local `k`-faces of top simplex `t`, ordered as
    /// increasing subsets of its sorted vertex tuple.
    pub fn top_faces(&self, t: usize, k: usize) -> &[usize] {
        let m = binomial(self.dim + 1, k + 1);
        &self.faces[k][t * m..(t + 1) * m]
    }

    /// `∂_k` (rows `(k-1)`-simplices). `∂_0` is the empty map.
    pub fn boundary_matrix(&self, k: usize) -> &Csr {
        &self.boundary[k]
    }

    pub fn tags(&self) -> &BTreeMap<String, Vec<Vec<usize>>> {
        &self.tags
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.tags.contains_key(label)
    }

    /// Indices of the `k`-simplices carrying `label`.
    pub fn label(&self, label: &str, k: usize) -> Result<&[usize]> {
        self.tags
            .get(label)
            .map(|v| v.get(k).map_or(&[][..], Vec::as_slice))
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn label_mask(&self, label: &str, k: usize) -> Result<Vec<bool>> {
        let mut m = vec![false; self.num_simplices(k)];
        for &i in self.label(label, k)? {
            m[i] = true;
        }
        Ok(m)
    }

    pub fn barycenter(&self, k: usize, i: usize) -> Vec<f64> {
        let s = self.simplex(k, i);
        let mut b = vec![0.0; self.dim];
        for &v in s {
            b.iter_mut().zip(self.vertex(v)).for_each(|(bi, x)| *bi += x);
        }
        b.iter_mut().for_each(|x| *x /= s.len() as f64);
        b
    }

    /// Vertex coordinates of `k`-simplex `i`.
    pub fn simplex_points(&self, k: usize, i: usize) -> Vec<Vec<f64>> {
        self.simplex(k, i).iter().map(|&v| self.vertex(v).to_vec()).collect()
    }

    /// Same topology with all coordinates multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.coords.iter_mut().for_each(|x| *x *= s);
        c.id = c.compute_id();
        c
    }

    /// Largest pairwise vertex distance, which equals the diameter of the
    /// convex hull of the complex.
    pub fn diameter(&self) -> f64 {
        let n = self.num_vertices();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist(self.vertex(i), self.vertex(j)));
            }
        }
        best
    }

    /// Number of top simplices containing each facet.
    fn facet_cofaces(&self) -> Vec<usize> {
        let n = self.dim;
        let mut count = vec![0usize; self.num_simplices(n - 1)];
        for &f in &self.faces[n - 1] {
            count[f] += 1;
        }
        count
    }

    /// Degree-wise index sets of the closure of a set of facets.
    fn closure_of_facets(&self, facets: &[usize]) -> Vec<Vec<usize>> {
        let n = self.dim;
        let mut sets: Vec<Vec<bool>> = (0..=n).map(|k| vec![false; self.num_simplices(k)]).collect();
        for &f in facets {
            sets[n - 1][f] = true;
        }
        for k in (1..n).rev() {
            let bt = self.boundary[k].transpose();
            for j in 0..self.num_simplices(k) {
                if sets[k][j] {
                    for (i, _) in bt.row(j) {
                        sets[k - 1][i] = true;
                    }
                }
            }
        }
        sets.into_iter()
            .map(|m| m.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect())
            .collect()
    }

    fn compute_id(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.dim as u64);
        for x in &self.coords {
            h.write_u64(x.to_bits());
        }
        for list in &self.simplices {
            h.write_u64(list.len() as u64);
            for &v in list {
                h.write_u64(v as u64);
            }
        }
        h.finish()
    }

    /// Closure, orientation and `∂∘∂ = 0` checks.
    pub fn validate(&self) -> Result<()> {
        for k in 0..=self.dim {
            let mut prev: Option<&[usize]> = None;
            for s in self.simplices(k) {
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidComplex(format!("simplex {s:?} not strictly increasing")));
                }
                if prev.is_some_and(|p| p >= s) {
                    return Err(Error::InvalidComplex(format!("{k}-simplices not sorted/unique")));
                }
                prev = Some(s);
            }
        }
        for k in 2..=self.dim {
            let bb = self.boundary[k - 1].matmul(&self.boundary[k]);
            if bb.triplets().any(|(_, _, v)| v != 0.0) {
                return Err(Error::InvalidComplex(format!("∂_{} ∂_{} ≠ 0", k - 1, k)));
            }
        }
        Ok(())
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
    fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }
}

/// Kuhn (Freudenthal) triangulation of a box with `⌈L/h⌉` cells per axis,
/// `n!` simplices per cell. Nested under `h → h/2`.
pub fn build_box_complex(bx: &BoxDomain, h: f64, dim: usize) -> Result<OrientedComplex> {
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidMeshSize(h));
    }
    if bx.lower.len() != dim || bx.upper.len() != dim {
        return Err(Error::Config(format!("box bounds must have {dim} entries")));
    }
    for a in 0..dim {
        let length = bx.upper[a] - bx.lower[a];
        if !(length > 0.0) {
            return Err(Error::DegenerateBox { axis: a, length });
        }
    }
    let cells: Vec<usize> = (0..dim)
        .map(|a| (((bx.upper[a] - bx.lower[a]) / h) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let npts: Vec<usize> = cells.iter().map(|c| c + 1).collect();
    let mut stride = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        stride[a] = stride[a + 1] * npts[a + 1];
    }
    let nverts: usize = npts.iter().product();
    let mut coords = Vec::with_capacity(nverts * dim);
    for v in 0..nverts {
        for a in 0..dim {
            let i = (v / stride[a]) % npts[a];
            let t = i as f64 / cells[a] as f64;
            coords.push(if i == cells[a] { bx.upper[a] } else { bx.lower[a] + t * (bx.upper[a] - bx.lower[a]) });
        }
    }
    let perms = permutations(dim);
    let ncells: usize = cells.iter().product();
    let mut top = Vec::with_capacity(ncells * perms.len());
    for c in 0..ncells {
        let mut rem = c;
        let mut base = 0;
        for a in (0..dim).rev() {
            base += (rem % cells[a]) * stride[a];
            rem /= cells[a];
        }
        for p in &perms {
            let mut s = vec![base];
            let mut cur = base;
            for &a in p {
                cur += stride[a];
                s.push(cur);
            }
            top.push(s);
        }
    }
    OrientedComplex::from_top_simplices(dim, coords, &top)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// A subcomplex together with its embedding into the parent.
#[derive(Clone, Debug)]
pub struct SubcomplexMap {
    pub parent: Arc<OrientedComplex>,
    pub child: Arc<OrientedComplex>,
    /// `injection[k][i]` is the parent index of child `k`-simplex `i`.
    pub injection: Vec<Vec<usize>>,
}

impl SubcomplexMap {
    /// Inverse of the injection: parent index to child index.
    pub fn parent_to_child(&self, k: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; self.parent.num_simplices(k)];
        for (c, &p) in self.injection[k].iter().enumerate() {
            inv[p] = Some(c);
        }
        inv
    }

    /// Indices of the kept top simplices in the parent.
    pub fn top_injection(&self) -> &[usize] {
        &self.injection[self.child.dim()]
    }
}

/// Closure of the selected top simplices of `parent`.
///
/// Child vertices are renumbered monotonically, so sorted tuples stay sorted
/// and all orientations agree with the parent's.
pub fn extract_subcomplex(parent: Arc<OrientedComplex>, keep: impl Fn(usize) -> bool) -> Result<SubcomplexMap> {
    let n = parent.dim();
    let kept: Vec<usize> = (0..parent.num_simplices(n)).filter(|&t| keep(t)).collect();
    if kept.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut used = vec![false; parent.num_vertices()];
    for &t in &kept {
        for &v in parent.simplex(n, t) {
            used[v] = true;
        }
    }
    let mut renumber = vec![usize::MAX; used.len()];
    let mut coords = Vec::new();
    let mut next = 0;
    for (v, &u) in used.iter().enumerate() {
        if u {
            renumber[v] = next;
            next += 1;
            coords.extend_from_slice(parent.vertex(v));
        }
    }
    let top: Vec<Vec<usize>> = kept
        .iter()
        .map(|&t| parent.simplex(n, t).iter().map(|&v| renumber[v]).collect())
        .collect();
    let mut child = OrientedComplex::from_top_simplices(n, coords, &top)?;

    // Parent lookup per degree through the vertex renumbering.
    let mut injection = Vec::with_capacity(n + 1);
    let mut old_of_new = vec![0usize; next];
    for (v, &r) in renumber.iter().enumerate() {
        if r != usize::MAX {
            old_of_new[r] = v;
        }
    }
    for k in 0..=n {
        let index: HashMap<Key, usize> = parent.simplices(k).enumerate().map(|(i, s)| (key(s), i)).collect();
        let inj: Vec<usize> = child
            .simplices(k)
            .map(|s| {
                let vs: Vec<usize> = s.iter().map(|&v| old_of_new[v]).collect();
                index[&key(&vs)]
            })
            .collect();
        injection.push(inj);
    }

    // Boundary split at the facet level, then closed downwards.
    let parent_cofaces = parent.facet_cofaces();
    let child_cofaces = child.facet_cofaces();
    let mut interface = Vec::new();
    let mut outer = Vec::new();
    for (f, &c) in child_cofaces.iter().enumerate() {
        if c == 1 {
            if parent_cofaces[injection[n - 1][f]] == 2 {
                interface.push(f);
            } else {
                outer.push(f);
            }
        }
    }
    let interface = child.closure_of_facets(&interface);
    let outer = child.closure_of_facets(&outer);
    child.tags.insert(INTERFACE.to_string(), interface);
    child.tags.insert(OUTER.to_string(), outer);
    Ok(SubcomplexMap {
        parent,
        child: Arc::new(child),
        injection,
    })
}

const PRIME: u64 = 2_147_483_647;

fn mod_inv(a: u64) -> u64 {
    let (mut r, mut b, mut e) = (1u64, a % PRIME, PRIME - 2);
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % PRIME;
        }
        b = b * b % PRIME;
        e >>= 1;
    }
    r
}

/// Rank of a signed incidence matrix over `F_p`, `p = 2^31 - 1`, by sparse
/// column reduction. For simplicial boundary matrices this equals the
/// rational rank unless the homology has `p`-torsion.
pub fn rank_mod_p(a: &Csr) -> usize {
    let at = a.transpose();
    let to_fp = |v: f64| -> u64 {
        let i = v.round() as i64;
        i.rem_euclid(PRIME as i64) as u64
    };
    let mut pivot_of_row: HashMap<usize, Vec<(usize, u64)>> = HashMap::new();
    let mut rank = 0;
    for j in 0..at.nrows() {
        let mut col: Vec<(usize, u64)> = at.row(j).map(|(i, v)| (i, to_fp(v))).filter(|e| e.1 != 0).collect();
        loop {
            let Some(&(low, lv)) = col.last() else { break };
            let Some(piv) = pivot_of_row.get(&low) else {
                let inv = mod_inv(lv);
                let normalized = col.iter().map(|&(i, v)| (i, v * inv % PRIME)).collect();
                pivot_of_row.insert(low, normalized);
                rank += 1;
                break;
            };
            // col -= lv * piv (piv has leading entry 1 at `low`)
            let mut merged = Vec::with_capacity(col.len() + piv.len());
            let (mut x, mut y) = (0, 0);
            while x < col.len() || y < piv.len() {
                let take_col = y >= piv.len() || (x < col.len() && col[x].0 < piv[y].0);
                let take_piv = x >= col.len() || (y < piv.len() && piv[y].0 < col[x].0);
                if take_col {
                    merged.push(col[x]);
                    x += 1;
                } else if take_piv {
                    merged.push((piv[y].0, (PRIME - lv * piv[y].1 % PRIME) % PRIME));
                    y += 1;
                } else {
                    let v = (col[x].1 + PRIME - lv * piv[y].1 % PRIME) % PRIME;
                    if v != 0 {
                        merged.push((col[x].0, v));
                    }
                    x += 1;
                    y += 1;
                }
            }
            col = merged;
        }
    }
    rank
}

/// Betti numbers `b_0..b_n`, absolute or relative to a labelled subcomplex.
pub fn betti_numbers(complex: &OrientedComplex, relative: Option<&str>) -> Result<Vec<usize>> {
    let n = complex.dim();
    let free: Vec<Vec<usize>> = (0..=n)
        .map(|k| -> Result<Vec<usize>> {
            match relative {
                None => Ok((0..complex.num_simplices(k)).collect()),
                Some(l) => {
                    let m = complex.label_mask(l, k)?;
                    Ok((0..m.len()).filter(|&i| !m[i]).collect())
                }
            }
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = (0..=n + 1)
        .map(|k| {
            if k == 0 || k > n {
                0
            } else {
                rank_mod_p(&complex.boundary_matrix(k).select(&free[k - 1], &free[k]))
            }
        })
        .collect();
    Ok((0..=n).map(|k| free[k].len() - ranks[k] - ranks[k + 1]).collect())
}

/// Implicit domain `{x : φ(x) < 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Ball (disk in 2D, interval in 1D).
    Disk { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Union { parts: Vec<Region> },
    Difference { base: Box<Region>, minus: Box<Region> },
    Everything,
}

impl Region {
    pub fn level_set(&self, x: &[f64]) -> f64 {
        match self {
            Region::Disk { center, radius } => dist(x, center) - radius,
            Region::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                (inner - r).max(r - outer)
            }
            Region::Box { lower, upper } => (0..x.len())
                .map(|a| (lower[a] - x[a]).max(x[a] - upper[a]))
                .fold(f64::NEG_INFINITY, f64::max),
            Region::Union { parts } => parts.iter().map(|p| p.level_set(x)).fold(f64::INFINITY, f64::min),
            Region::Difference { base, minus } => base.level_set(x).max(-minus.level_set(x)),
            Region::Everything => -1.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level_set(x) < 0.0
    }

    /// `(meets, inside)`: whether the open region meets the simplex, and
    /// whether the simplex lies in its closure. Exact for balls and annuli
    /// (the distance to the center ranges over an interval on a simplex);
    /// other regions fall back to a barycentric sampling lattice.
    pub fn classify_simplex(&self, pts: &[Vec<f64>]) -> (bool, bool) {
        match self {
            Region::Disk { center, radius } => {
                let (lo, hi) = distance_range(center, pts);
                (lo < *radius, hi <= *radius)
            }
            Region::Annulus { center, inner, outer } => {
                let (lo, hi) = distance_range(center, pts);
                (lo < *outer && hi > *inner, lo >= *inner && hi <= *outer)
            }
            Region::Everything => (true, true),
            _ => {
                let samples = lattice_points(pts, 8);
                let vals: Vec<f64> = samples.iter().map(|p| self.level_set(p)).collect();
                (vals.iter().any(|&v| v < 0.0), vals.iter().all(|&v| v <= 0.0))
            }
        }
    }
}

/// Range of `|x - c|` over the simplex spanned by `pts`.
fn distance_range(c: &[f64], pts: &[Vec<f64>]) -> (f64, f64) {
    let hi = pts.iter().map(|p| dist(p, c)).fold(0.0, f64::max);
    (point_simplex_distance(c, pts), hi)
}

/// Euclidean distance from `p` to the closed simplex spanned by `pts`.
pub fn point_simplex_distance(p: &[f64], pts: &[Vec<f64>]) -> f64 {
    let m = pts.len() - 1;
    if m == 0 {
        return dist(p, &pts[0]);
    }
    // Project onto the affine hull: solve G t = E^T (p - x0).
    let x0 = &pts[0];
    let e: Vec<Vec<f64>> = pts[1..].iter().map(|q| q.iter().zip(x0).map(|(a, b)| a - b).collect()).collect();
    let r: Vec<f64> = p.iter().zip(x0).map(|(a, b)| a - b).collect();
    let mut g = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            g[i][j] = e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum();
        }
        g[i][m] = e[i].iter().zip(&r).map(|(a, b)| a * b).sum();
    }
    if let Some(t) = gauss_solve(g) {
        let t0 = 1.0 - t.iter().sum::<f64>();
        if t0 >= 0.0 && t.iter().all(|&x| x >= 0.0) {
            let mut q = x0.clone();
            for (i, ti) in t.iter().enumerate() {
                q.iter_mut().zip(&e[i]).for_each(|(qa, ea)| *qa += ti * ea);
            }
            return dist(p, &q);
        }
    }
    (0..=m)
        .map(|skip| {
            let face: Vec<Vec<f64>> = pts.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, q)| q.clone()).collect();
            point_simplex_distance(p, &face)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            for j in c..=m {
                a[r][j] -= f * a[c][j];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|j| a[r][j] * x[j]).sum();
        x[r] = (a[r][m] - s) / a[r][r];
    }
    Some(x)
}

/// Points `Σ (a_i / q) x_i` over all compositions `a` of `q`.
pub fn lattice_points(pts: &[Vec<f64>], q: usize) -> Vec<Vec<f64>> {
    let m = pts.len();
    let mut out = Vec::new();
    let mut a = vec![0usize; m];
    fn rec(i: usize, left: usize, a: &mut Vec<usize>, pts: &[Vec<f64>], q: usize, out: &mut Vec<Vec<f64>>) {
        if i + 1 == a.len() {
            a[i] = left;
            let mut x = vec![0.0; pts[0].len()];
            for (w, p) in a.iter().zip(pts) {
                x.iter_mut().zip(p).for_each(|(xi, pi)| *xi += *w as f64 / q as f64 * pi);
            }
            out.push(x);
            return;
        }
        for v in 0..=left {
            a[i] = v;
            rec(i + 1, left - v, a, pts, q, out);
        }
    }
    rec(0, q, &mut a, pts, q, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Zero trace on the outer boundary `∂K`.
    ZeroTrace,
    /// Zero trace only on the interface `∂Ω`; free on `∂K`.
    Mixed,
}

impl Variant {
    /// Label whose DOFs are eliminated on the exterior domain.
    pub fn exterior_label(self) -> &'static str {
        match self {
            Variant::ZeroTrace => BOUNDARY,
            Variant::Mixed => INTERFACE,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-trace" => Ok(Variant::ZeroTrace),
            "mixed" => Ok(Variant::Mixed),
            _ => Err(Error::Config(format!("unknown variant `{s}` (zero-trace | mixed)"))),
        }
    }
}

/// Element-fitted `Ω ⊂ K ⊂ box`: `K` is the union of box-mesh elements whose
/// barycenter lies in `ambient`, `Ω` those of `K` whose barycenter lies in
/// `omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub h: f64,
    pub omega: Region,
    #[serde(default = "everything")]
    pub ambient: Region,
    pub variant: Variant,
}

fn everything() -> Region {
    Region::Everything
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        self.bounds.lower.len()
    }
}

/// The meshed triple `Ω, A = K \ Ω̄` inside `K`.
#[derive(Clone, Debug)]
pub struct DomainPair {
    pub spec: DomainSpec,
    /// `K` inside the box mesh.
    pub ambient: SubcomplexMap,
    pub k: Arc<OrientedComplex>,
    pub omega: SubcomplexMap,
    /// `None` when `Ω = K`.
    pub exterior: Option<SubcomplexMap>,
    /// Distance between the interface and outer vertex sets of `A`.
    pub rho: f64,
}

impl DomainPair {
    pub fn build(spec: &DomainSpec) -> Result<Self> {
        let dim = spec.dim();
        let background = Arc::new(build_box_complex(&spec.bounds, spec.h, dim)?);
        let k_map = extract_subcomplex(background.clone(), |t| spec.ambient.contains(&background.barycenter(dim, t)))?;
        let k = k_map.child.clone();
        let inside: Vec<bool> = (0..k.num_simplices(dim)).map(|t| spec.omega.contains(&k.barycenter(dim, t))).collect();
        Self::from_selection(spec, k_map, &inside)
    }

    /// `Ω` given by an explicit element selection on `K`, e.g. the active
    /// mesh of an unfitted method.
    pub fn from_selection(spec: &DomainSpec, k_map: SubcomplexMap, inside: &[bool]) -> Result<Self> {
        let k = k_map.child.clone();
        let omega = extract_subcomplex(k.clone(), |t| inside[t])?;
        let exterior = if inside.iter().all(|&b| b) {
            None
        } else {
            Some(extract_subcomplex(k.clone(), |t| !inside[t])?)
        };
        let rho = match &exterior {
            Some(a) => {
                let c = &a.child;
                let iv = c.label(INTERFACE, 0)?;
                let ov = c.label(OUTER, 0)?;
                let mut best = f64::INFINITY;
                for &i in iv {
                    for &o in ov {
                        best = best.min(dist(c.vertex(i), c.vertex(o)));
                    }
                }
                best
            }
            None => 0.0,
        };
        if spec.variant == Variant::ZeroTrace && exterior.is_some() && !(rho > 0.0) {
            return Err(Error::Config("zero-trace variant needs Ω strictly inside K (rho = 0)".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            ambient: k_map,
            k,
            omega,
            exterior,
            rho,
        })
    }
}

/// Interchange format for complexes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: BTreeMap<String, Vec<Vec<usize>>>,
    #[serde(default)]
    pub tags: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
}

impl From<&OrientedComplex> for MeshFile {
    fn from(c: &OrientedComplex) -> Self {
        let n = c.dim();
        Self {
            dim: n,
            vertices: (0..c.num_vertices()).map(|v| c.vertex(v).to_vec()).collect(),
            simplices: (0..=n).map(|k| (k.to_string(), c.simplices(k).map(<[usize]>::to_vec).collect())).collect(),
            tags: c
                .tags
                .iter()
                .map(|(l, sets)| (l.clone(), sets.iter().enumerate().map(|(k, s)| (k.to_string(), s.clone())).collect()))
                .collect(),
        }
    }
}

impl MeshFile {
    /// Rebuilds the complex from its top simplices and checks that the listed
    /// lower-degree simplices are exactly the closure, in canonical order.
    pub fn into_complex(self) -> Result<OrientedComplex> {
        let n = self.dim;
        if !(1..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if self.vertices.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidComplex("vertex of wrong dimension".into()));
        }
        let coords: Vec<f64> = self.vertices.into_iter().flatten().collect();
        let top = self
            .simplices
            .get(&n.to_string())
            .ok_or_else(|| Error::InvalidComplex(format!("missing {n}-simplices")))?;
        if let Some(bad) = top.iter().find(|s| s.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::InvalidComplex(format!("simplex {bad:?} not strictly increasing")));
        }
        let mut c = OrientedComplex::from_top_simplices(n, coords, top)?;
        for k in 0..=n {
            let listed = self
                .simplices
                .get(&k.to_string())
                .ok_or_else(|| Error::InvalidComplex(format!("missing {k}-simplices")))?;
            let ok = listed.len() == c.num_simplices(k) && listed.iter().zip(c.simplices(k)).all(|(a, b)| a.as_slice() == b);
            if !ok {
                return Err(Error::InvalidComplex(format!("{k}-simplices are not the sorted closure of the top simplices")));
            }
        }
        for (label, sets) in self.tags {
            if label == BOUNDARY {
                continue;
            }
            let mut per = vec![Vec::new(); n + 1];
            for (k, ids) in sets {
                let k: usize = k.parse().map_err(|_| Error::InvalidComplex(format!("bad degree key `{k}`")))?;
                if k > n || ids.iter().any(|&i| i >= c.num_simplices(k)) {
                    return Err(Error::InvalidComplex(format!("tag `{label}` out of range")));
                }
                per[k] = ids;
            }
            c.tags.insert(label, per);
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn write_mesh(c: &OrientedComplex, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, &MeshFile::from(c))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<OrientedComplex> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let m: MeshFile = serde_json::from_reader(f)?;
    m.into_complex()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(4, 4).len(), 1);
        assert_eq!(combinations(4, 1).len(), 4);
    }

    #[test]
    fn distance_to_triangle() {
        let t = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(point_simplex_distance(&[0.2, 0.2], &t) == 0.0);
        assert!((point_simplex_distance(&[2.0, 0.0], &t) - 1.0).abs() < 1e-15);
        assert!((point_simplex_distance(&[1.0, 1.0], &t) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((point_simplex_distance(&[-1.0, -1.0], &t) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lattice_counts() {
        let t = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(lattice_points(&t, 2).len(), 6);
    }
}
