use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use super::sparse::{norm_inf, Csr};
use crate::error::{Error, Result};

enum Kind {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
    Empty,
}

/// A sparse factorization kept alive for repeated solves.
///
/// LU solves are followed by iterative refinement against the stored matrix,
/// which recovers full accuracy on the indefinite saddle systems.
pub struct Factor {
    matrix: Csr,
    kind: Kind,
    refine: usize,
}

impl Factor {
    pub fn cholesky(a: &Csr) -> Result<Self> {
        if a.nrows() == 0 {
            return Ok(Self::empty(a));
        }
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))?;
        Ok(Self {
            matrix: a.clone(),
            kind: Kind::Llt(llt),
            refine: 0,
        })
    }

    pub fn lu(a: &Csr) -> Result<Self> {
        if a.nrows() == 0 {
            return Ok(Self::empty(a));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("lu: {e:?}")))?;
        Ok(Self {
            matrix: a.clone(),
            kind: Kind::Lu(lu),
            refine: 2,
        })
    }

    fn empty(a: &Csr) -> Self {
        Self {
            matrix: a.clone(),
            kind: Kind::Empty,
            refine: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = match &self.kind {
            Kind::Llt(f) => f.solve(&rhs),
            Kind::Lu(f) => f.solve(&rhs),
            Kind::Empty => return Vec::new(),
        };
        x.col_as_slice(0).to_vec()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim(), "rhs length");
        let mut x = self.raw_solve(b);
        for _ in 0..self.refine {
            let r: Vec<f64> = b
                .iter()
                .zip(self.matrix.matvec(&x))
                .map(|(bi, ai)| bi - ai)
                .collect();
            if norm_inf(&r) == 0.0 {
                break;
            }
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(dx).for_each(|(xi, di)| *xi += di);
        }
        x
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_indefinite_saddle() {
        // [[2, 1], [1, 0]] is symmetric indefinite
        let a = Csr::from_triplets(2, 2, [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let f = Factor::lu(&a).unwrap();
        let x = f.solve(&[3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Csr::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(Factor::cholesky(&a).is_err());
    }
}
