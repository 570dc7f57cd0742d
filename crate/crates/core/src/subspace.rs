//! Affine subspaces `anchor + span(basis)` and the small amount of dense
//! linear algebra needed to describe fixed-point sets of affine maps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Vector;

/// Relative rank cutoff for singular values.
const RANK_TOL: f64 = 1e-10;

/// Affine subspace with a Euclidean-orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSubspace {
    pub anchor: Vector,
    pub basis: Vec<Vector>,
}

impl AffineSubspace {
    /// Builds the subspace, orthonormalizing `basis` and dropping dependent
    /// directions. The anchor is moved to the point closest to the origin.
    pub fn new(anchor: Vector, basis: Vec<Vector>) -> Result<Self> {
        let dim = anchor.len();
        for b in &basis {
            if b.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: b.len(),
                });
            }
        }
        if !anchor.is_finite() || basis.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("affine subspace"));
        }
        let basis = orthonormalize(dim, &basis);
        let mut s = Self { anchor, basis };
        s.anchor = s.project_linear_complement(&s.anchor);
        Ok(s)
    }

    pub fn point(anchor: Vector) -> Self {
        Self {
            anchor,
            basis: Vec::new(),
        }
    }

    pub fn whole_space(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                Vector(e)
            })
            .collect();
        Self {
            anchor: Vector::zeros(dim),
            basis,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `anchor + sum_j coeffs_j basis_j`
    pub fn at(&self, coeffs: &[f64]) -> Vector {
        let mut x = self.anchor.clone();
        for (c, b) in coeffs.iter().zip(&self.basis) {
            x = x.axpy(*c, b);
        }
        x
    }

    fn project_linear_complement(&self, x: &Vector) -> Vector {
        let mut r = x.clone();
        for b in &self.basis {
            let c: f64 = r.0.iter().zip(&b.0).map(|(a, b)| a * b).sum();
            r = r.axpy(-c, b);
        }
        r
    }

    /// Euclidean orthogonal projection onto the subspace.
    pub fn project(&self, x: &Vector) -> Vector {
        let d = x.sub(&self.anchor);
        let mut p = self.anchor.clone();
        for b in &self.basis {
            let c: f64 = d.0.iter().zip(&b.0).map(|(a, b)| a * b).sum();
            p = p.axpy(c, b);
        }
        p
    }

    pub fn euclidean_distance(&self, x: &Vector) -> f64 {
        let p = self.project(x);
        x.sub(&p).0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.euclidean_distance(x) <= tol * x.0.iter().fold(1.0f64, |m, c| m.max(c.abs()))
    }

    /// Intersection of two affine subspaces, or `None` when it is empty.
    pub fn intersect(&self, other: &AffineSubspace) -> Result<Option<AffineSubspace>> {
        let n = self.ambient_dim();
        if other.ambient_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: other.ambient_dim(),
            });
        }
        // x is in both iff (I - P_1)(x - a_1) = 0 and (I - P_2)(x - a_2) = 0.
        let c1 = complement_projector(n, &self.basis);
        let c2 = complement_projector(n, &other.basis);
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&c1);
        stacked.view_mut((n, 0), (n, n)).copy_from(&c2);
        let a1 = DVector::from_column_slice(&self.anchor.0);
        let a2 = DVector::from_column_slice(&other.anchor.0);
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&(&c1 * &a1));
        rhs.rows_mut(n, n).copy_from(&(&c2 * &a2));
        let (x, null) = least_squares_with_nullspace(&stacked, &rhs);
        let resid = (&stacked * &x - &rhs).norm();
        let scale = 1.0 + a1.norm() + a2.norm();
        if resid > 1e-9 * scale {
            return Ok(None);
        }
        Ok(Some(AffineSubspace::new(
            Vector(x.as_slice().to_vec()),
            null,
        )?))
    }
}

fn complement_projector(n: usize, basis: &[Vector]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    for b in basis {
        let v = DVector::from_column_slice(&b.0);
        m -= &v * v.transpose();
    }
    m
}

fn orthonormalize(dim: usize, basis: &[Vector]) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    for b in basis {
        let scale = b.0.iter().map(|c| c * c).sum::<f64>().sqrt();
        if scale == 0.0 {
            continue;
        }
        // Two passes of modified Gram-Schmidt.
        let mut r = b.scale(1.0 / scale);
        for _ in 0..2 {
            for q in &out {
                let c: f64 = r.0.iter().zip(&q.0).map(|(a, b)| a * b).sum();
                r = r.axpy(-c, q);
            }
        }
        let nr = r.0.iter().map(|c| c * c).sum::<f64>().sqrt();
        if nr > 1e-8 {
            out.push(r.scale(1.0 / nr));
        }
        if out.len() == dim {
            break;
        }
    }
    out
}

/// Minimum-norm least-squares solution of `a x = b` and an orthonormal basis
/// of the null space of `a` (requires `a.nrows() >= a.ncols()`).
pub(crate) fn least_squares_with_nullspace(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> (DVector<f64>, Vec<Vector>) {
    let n = a.ncols();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let cutoff = RANK_TOL * smax.max(1.0);
    let mut x = DVector::zeros(n);
    let mut null = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let vk = v_t.row(k).transpose();
        if s > cutoff {
            let coef = u.column(k).dot(b) / s;
            x += vk * coef;
        } else {
            null.push(Vector(vk.as_slice().to_vec()));
        }
    }
    (x, null)
}

/// Fixed-point set of `x -> m x + c`, i.e. solutions of `(I - m) x = c`.
pub fn affine_fixed_set(m: &DMatrix<f64>, c: &DVector<f64>) -> Option<AffineSubspace> {
    let n = m.nrows();
    let a = DMatrix::identity(n, n) - m;
    let (x, null) = least_squares_with_nullspace(&a, c);
    let resid = (&a * &x - c).norm();
    if resid > 1e-9 * (1.0 + c.norm()) {
        return None;
    }
    AffineSubspace::new(Vector(x.as_slice().to_vec()), null).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_set_of_diagonal_map_is_axis() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.25]));
        let fs = affine_fixed_set(&m, &DVector::zeros(2)).unwrap();
        assert_eq!(fs.dim(), 1);
        assert!(fs.contains(&Vector(vec![7.0, 0.0]), 1e-12));
        assert!(!fs.contains(&Vector(vec![7.0, 0.1]), 1e-12));
    }

    #[test]
    fn fixed_set_empty_for_translation() {
        let m = DMatrix::identity(2, 2);
        assert!(affine_fixed_set(&m, &DVector::from_vec(vec![1.0, 0.0])).is_none());
    }

    #[test]
    fn intersection_of_lines() {
        let x_axis =
            AffineSubspace::new(Vector(vec![0.0, 0.0]), vec![Vector(vec![2.0, 0.0])]).unwrap();
        let diag =
            AffineSubspace::new(Vector(vec![1.0, 1.0]), vec![Vector(vec![1.0, 1.0])]).unwrap();
        let i = x_axis.intersect(&diag).unwrap().unwrap();
        assert_eq!(i.dim(), 0);
        assert!(i.anchor.0.iter().all(|c| c.abs() < 1e-12));

        let shifted =
            AffineSubspace::new(Vector(vec![0.0, 1.0]), vec![Vector(vec![1.0, 0.0])]).unwrap();
        assert!(x_axis.intersect(&shifted).unwrap().is_none());

        let whole = AffineSubspace::whole_space(2);
        let i = whole.intersect(&x_axis).unwrap().unwrap();
        assert_eq!(i.dim(), 1);
        assert!(i.contains(&Vector(vec![-3.0, 0.0]), 1e-12));
    }

    #[test]
    fn projection_and_basis() {
        let s = AffineSubspace::new(
            Vector(vec![0.0, 0.0, 1.0]),
            vec![Vector(vec![1.0, 1.0, 0.0]), Vector(vec![2.0, 2.0, 0.0])],
        )
        .unwrap();
        assert_eq!(s.dim(), 1);
        let p = s.project(&Vector(vec![1.0, 0.0, 5.0]));
        assert!(
            (p.0[0] - 0.5).abs() < 1e-12
                && (p.0[1] - 0.5).abs() < 1e-12
                && (p.0[2] - 1.0).abs() < 1e-12
        );
    }
}
