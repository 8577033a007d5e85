//! Whitney cochains: coboundaries, exact mass matrices, restriction and
//! extension by zero.
//!
//! The Whitney form of a `k`-simplex `σ = [σ_0..σ_k]` is
//! `φ_σ = k! Σ_j (-1)^j λ_{σ_j} dλ_{σ_0} ∧ … ∧ dλ̂_{σ_j} ∧ … ∧ dλ_{σ_k}`.
//! Mass entries are integrated exactly from `∫ λ_a λ_b = |T|(1+δ_ab)/((n+1)(n+2))`
//! and Gram determinants of barycentric gradients.
//!
//! Objects of degree `n + 1` are explicit zero objects: `D_n` has no rows,
//! `M_{n+1}` is `0 × 0`.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sparse::dot;
use crate::linalg::Csr;
use crate::mesh::{combinations, OrientedComplex, SubcomplexMap};

#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub degree: usize,
    pub complex_id: u64,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &Cochain) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Cochain) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_same(&self, other: &Cochain) -> Result<()> {
        if self.complex_id != other.complex_id {
            return Err(Error::ComplexMismatch {
                expected: self.complex_id,
                got: other.complex_id,
            });
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: other.degree,
            });
        }
        Ok(())
    }
}

/// Coboundary and mass operators of a complex, all degrees.
#[derive(Clone, Debug)]
pub struct DeRhamOps {
    complex: Arc<OrientedComplex>,
    /// `coboundary[k] = D_k = ∂_{k+1}ᵀ`, for `k = 0..=n`.
    coboundary: Vec<Csr>,
    /// `mass[k]`, for `k = 0..=n+1`.
    mass: Vec<Csr>,
}

impl DeRhamOps {
    pub fn assemble(complex: Arc<OrientedComplex>) -> Result<Self> {
        let n = complex.dim();
        let mut coboundary: Vec<Csr> = (1..=n).map(|k| complex.boundary_matrix(k).transpose()).collect();
        coboundary.push(Csr::zeros(0, complex.num_simplices(n)));
        let mut mass: Vec<Csr> = (0..=n).map(|k| assemble_mass(&complex, k)).collect::<Result<_>>()?;
        mass.push(Csr::zeros(0, 0));
        Ok(Self {
            complex,
            coboundary,
            mass,
        })
    }

    /// Replaces the mass matrices, e.g. by stabilized inner products.
    pub fn with_masses(&self, mass: Vec<Csr>) -> Self {
        assert_eq!(mass.len(), self.mass.len());
        Self {
            mass,
            ..self.clone()
        }
    }

    pub fn complex(&self) -> &Arc<OrientedComplex> {
        &self.complex
    }

    pub fn dim(&self) -> usize {
        self.complex.dim()
    }

    pub fn count(&self, k: usize) -> usize {
        self.complex.num_simplices(k)
    }

    /// `D_k`.
    pub fn coboundary(&self, k: usize) -> &Csr {
        &self.coboundary[k]
    }

    /// `M_k`.
    pub fn mass(&self, k: usize) -> &Csr {
        &self.mass[k]
    }

    pub fn trace_dofs(&self, k: usize, label: &str) -> Result<&[usize]> {
        self.complex.label(label, k)
    }

    pub fn zeros(&self, k: usize) -> Cochain {
        Cochain {
            degree: k,
            complex_id: self.complex.id(),
            values: vec![0.0; self.count(k)],
        }
    }

    pub fn cochain(&self, k: usize, values: Vec<f64>) -> Result<Cochain> {
        if k > self.dim() + 1 {
            return Err(Error::DegreeMismatch {
                expected: self.dim(),
                got: k,
            });
        }
        if values.len() != self.count(k) {
            return Err(Error::InvalidComplex(format!(
                "{} values for {} {k}-simplices",
                values.len(),
                self.count(k)
            )));
        }
        Ok(Cochain {
            degree: k,
            complex_id: self.complex.id(),
            values,
        })
    }

    /// Uniform entries in `[-1, 1]`.
    pub fn random(&self, k: usize, rng: &mut (impl Rng + ?Sized)) -> Cochain {
        let values = (0..self.count(k)).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Cochain {
            degree: k,
            complex_id: self.complex.id(),
            values,
        }
    }

    fn check(&self, a: &Cochain) -> Result<()> {
        if a.complex_id != self.complex.id() {
            return Err(Error::ComplexMismatch {
                expected: self.complex.id(),
                got: a.complex_id,
            });
        }
        if a.degree > self.dim() + 1 || a.values.len() != self.count(a.degree) {
            return Err(Error::DegreeMismatch {
                expected: a.degree,
                got: a.values.len(),
            });
        }
        Ok(())
    }

    /// `aᵀ M_k b`.
    pub fn inner(&self, a: &Cochain, b: &Cochain) -> Result<f64> {
        self.check(a)?;
        a.check_same(b)?;
        Ok(dot(&a.values, &self.mass[a.degree].matvec(&b.values)))
    }

    pub fn norm(&self, a: &Cochain) -> Result<f64> {
        Ok(self.inner(a, a)?.max(0.0).sqrt())
    }

    pub fn d(&self, a: &Cochain) -> Result<Cochain> {
        self.check(a)?;
        let k = a.degree;
        let values = if k > self.dim() {
            Vec::new()
        } else {
            self.coboundary[k].matvec(&a.values)
        };
        Ok(Cochain {
            degree: k + 1,
            complex_id: a.complex_id,
            values,
        })
    }

    /// `sqrt(‖a‖² + ‖d a‖²)`.
    pub fn graph_norm(&self, a: &Cochain) -> Result<f64> {
        let da = self.d(a)?;
        Ok((self.inner(a, a)? + self.inner(&da, &da)?).max(0.0).sqrt())
    }
}

/// Exact Whitney mass matrix of degree `k`.
fn assemble_mass(c: &OrientedComplex, k: usize) -> Result<Csr> {
    let n = c.dim();
    let nt = c.num_simplices(n);
    let mut trip = Vec::new();
    for t in 0..nt {
        let pts = c.simplex_points(n, t);
        let local = element_mass(&pts, k).map_err(|volume| Error::DegenerateSimplex {
            dim: n,
            index: t,
            volume,
        })?;
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

/// Volume and barycentric-gradient Gram matrix of a simplex.
/// `Err(volume)` for a degenerate simplex.
pub fn simplex_geometry(pts: &[Vec<f64>]) -> std::result::Result<(f64, Vec<Vec<f64>>), f64> {
    let n = pts.len() - 1;
    let e: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| pts[j + 1][i] - pts[0][i]).collect()).collect();
    // rows of E^{-1}, where E has columns x_j - x_0, are ∇λ_1..∇λ_n
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| e[j][i]).collect();
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
        if piv == 0.0 {
            return Err(0.0);
        }
        for v in a[col].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[r][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let volume = det.abs() / fact;
    let scale: f64 = e.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).product();
    if volume <= 1e-13 * scale / fact {
        return Err(volume);
    }
    let mut grads = vec![vec![0.0; n]; n + 1];
    for i in 0..n {
        for j in 0..n {
            grads[i + 1][j] = a[i][n + j];
            grads[0][j] -= a[i][n + j];
        }
    }
    let gram = (0..=n)
        .map(|i| (0..=n).map(|j| dot(&grads[i], &grads[j])).collect())
        .collect();
    Ok((volume, gram))
}

/// Determinant of the submatrix `g[rows, cols]` (size ≤ 3).
fn minor(g: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => g[rows[0]][cols[0]],
        2 => g[rows[0]][cols[0]] * g[rows[1]][cols[1]] - g[rows[0]][cols[1]] * g[rows[1]][cols[0]],
        3 => {
            let m = |i: usize, j: usize| g[rows[i]][cols[j]];
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        }
        _ => unreachable!("dimension ≤ 3"),
    }
}

/// Local Whitney mass matrix of degree `k` on a simplex, with local faces in
/// lexicographic subset order.
pub fn element_mass(pts: &[Vec<f64>], k: usize) -> std::result::Result<Vec<Vec<f64>>, f64> {
    let n = pts.len() - 1;
    let (vol, g) = simplex_geometry(pts)?;
    let faces = combinations(n + 1, k + 1);
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    let denom = ((n + 1) * (n + 2)) as f64;
    let lam = |a: usize, b: usize| vol * if a == b { 2.0 } else { 1.0 } / denom;
    let mut out = vec![vec![0.0; faces.len()]; faces.len()];
    for (p, s) in faces.iter().enumerate() {
        for (q, t) in faces.iter().enumerate().skip(p) {
            let mut acc = 0.0;
            for j in 0..=k {
                let sr: Vec<usize> = s.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, &v)| v).collect();
                for l in 0..=k {
                    let tr: Vec<usize> = t.iter().enumerate().filter(|(i, _)| *i != l).map(|(_, &v)| v).collect();
                    let sign = if (j + l) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * lam(s[j], t[l]) * minor(&g, &sr, &tr);
                }
            }
            out[p][q] = kf * kf * acc;
            out[q][p] = out[p][q];
        }
    }
    Ok(out)
}

/// Value of the Whitney `k`-form of local face `s` at barycentric point
/// `lam`, as the component vector on the basis `dλ_{I}`, `I` ranging over
/// `k`-subsets of the vertices. Used for pointwise products in quadrature.
pub fn whitney_coefficients(s: &[usize], lam: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let k = s.len() - 1;
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    (0..=k)
        .map(|j| {
            let rest: Vec<usize> = s.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, &v)| v).collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            (rest, sign * kf * lam[s[j]])
        })
        .collect()
}

/// Pointwise inner product of two forms given in [`whitney_coefficients`]
/// representation, using the barycentric-gradient Gram matrix.
pub fn pointwise_inner(a: &[(Vec<usize>, f64)], b: &[(Vec<usize>, f64)], gram: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (ia, ca) in a {
        for (ib, cb) in b {
            acc += ca * cb * minor(gram, ia, ib);
        }
    }
    acc
}

/// Child cochain from a parent cochain.
pub fn restrict(a: &Cochain, map: &SubcomplexMap) -> Result<Cochain> {
    if a.complex_id != map.parent.id() {
        return Err(Error::ComplexMismatch {
            expected: map.parent.id(),
            got: a.complex_id,
        });
    }
    let k = a.degree;
    let values = if k > map.child.dim() {
        Vec::new()
    } else {
        map.injection[k].iter().map(|&p| a.values[p]).collect()
    };
    Ok(Cochain {
        degree: k,
        complex_id: map.child.id(),
        values,
    })
}

/// Parent cochain equal to `b` on the child and zero elsewhere. Conforming
/// only if `b` vanishes on the child's interface with the rest of the parent;
/// entries above `tol` there are reported.
pub fn extend_by_zero(b: &Cochain, map: &SubcomplexMap, tol: f64) -> Result<Cochain> {
    if b.complex_id != map.child.id() {
        return Err(Error::ComplexMismatch {
            expected: map.child.id(),
            got: b.complex_id,
        });
    }
    let k = b.degree;
    if k > map.child.dim() {
        return Ok(Cochain {
            degree: k,
            complex_id: map.parent.id(),
            values: Vec::new(),
        });
    }
    let iface = map.child.label(crate::mesh::INTERFACE, k)?;
    let bad: Vec<usize> = iface.iter().copied().filter(|&i| b.values[i].abs() > tol).collect();
    if !bad.is_empty() {
        let max = bad.iter().map(|&i| b.values[i].abs()).fold(0.0, f64::max);
        return Err(Error::NonConforming {
            degree: k,
            simplices: bad,
            max,
        });
    }
    let mut values = vec![0.0; map.parent.num_simplices(k)];
    for (c, &p) in map.injection[k].iter().enumerate() {
        values[p] = b.values[c];
    }
    Ok(Cochain {
        degree: k,
        complex_id: map.parent.id(),
        values,
    })
}

/// Header line of the cochain CSV format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CochainHeader {
    pub degree: usize,
    /// Complex hash as 16 hex digits.
    pub complex: String,
    pub count: usize,
}

/// `# {json header}`, then `simplex_index,value` rows. Floats use the
/// shortest representation that round-trips.
pub fn write_cochain(a: &Cochain, w: &mut impl Write) -> Result<()> {
    let header = CochainHeader {
        degree: a.degree,
        complex: format!("{:016x}", a.complex_id),
        count: a.values.len(),
    };
    writeln!(w, "# {}", serde_json::to_string(&header)?)?;
    writeln!(w, "simplex_index,value")?;
    for (i, v) in a.values.iter().enumerate() {
        writeln!(w, "{i},{v:?}")?;
    }
    Ok(())
}

pub fn read_cochain(r: impl BufRead) -> Result<Cochain> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::Config("empty cochain file".into()))??;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Config("cochain file must start with a `#` JSON header".into()))?;
    let header: CochainHeader = serde_json::from_str(json.trim())?;
    let complex_id =
        u64::from_str_radix(&header.complex, 16).map_err(|_| Error::Config(format!("bad complex hash `{}`", header.complex)))?;
    let mut values = vec![f64::NAN; header.count];
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("simplex_index") {
            continue;
        }
        let (i, v) = line.split_once(',').ok_or_else(|| Error::Config(format!("bad row `{line}`")))?;
        let i: usize = i.trim().parse().map_err(|_| Error::Config(format!("bad index in `{line}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad value in `{line}`")))?;
        *values.get_mut(i).ok_or_else(|| Error::Config(format!("index {i} out of range")))? = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("cochain file is missing rows".into()));
    }
    Ok(Cochain {
        degree: header.degree,
        complex_id,
        values,
    })
}

pub fn save_cochain(a: &Cochain, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cochain(a, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_cochain(path: &Path) -> Result<Cochain> {
    read_cochain(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_edge_mass() {
        let m = element_mass(&[vec![0.0], vec![1.0]], 0).unwrap();
        assert!((m[0][0] - 1.0 / 3.0).abs() < 1e-15 && (m[0][1] - 1.0 / 6.0).abs() < 1e-15);
        let m1 = element_mass(&[vec![0.0], vec![2.0]], 1).unwrap();
        assert!((m1[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn top_degree_mass_is_inverse_volume() {
        let t = [vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = element_mass(&t, 2).unwrap();
        assert!((m[0][0] - 2.0).abs() < 1e-14);
        let tet = [vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let m = element_mass(&tet, 3).unwrap();
        assert!((m[0][0] - 6.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let t = [vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(element_mass(&t, 0).is_err());
    }

}
