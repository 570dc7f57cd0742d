//! Finite-dimensional `l_p` spaces: norms, the dual pairing and the
//! generalized duality mapping `j_q`.
//!
//! `j_q(x)` is the unique functional with `<x, j_q(x)> = ||x||^q` and
//! `||j_q(x)||_{p'} = ||x||^{q-1}`. For `x != 0` its coordinates are
//! `||x||_p^{q-p} |x_i|^{p-1} sign(x_i)`; at the origin the zero functional is
//! used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor of `l_p^dim` together with the smoothness data `(q, d_q)` used
/// by the convergence estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub dim: usize,
    pub p: f64,
    pub q: f64,
    pub d_q: f64,
}

impl SpaceSpec {
    pub fn new(dim: usize, p: f64, q: f64, d_q: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpace("dim must be at least 1".into()));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v.is_finite() && v > 1.0) {
                return Err(Error::InvalidSpace(format!(
                    "{name} must be finite and > 1, got {v}"
                )));
            }
        }
        if !(d_q.is_finite() && d_q > 0.0) {
            return Err(Error::InvalidSpace(format!(
                "d_q must be finite and > 0, got {d_q}"
            )));
        }
        Ok(Self { dim, p, q, d_q })
    }

    /// Euclidean space: `p = q = 2`, `d_q = 1`.
    pub fn hilbert(dim: usize) -> Self {
        Self {
            dim,
            p: 2.0,
            q: 2.0,
            d_q: 1.0,
        }
    }

    /// `l_p` with `p >= 2`, smoothness order 2 and the default constant `p - 1`.
    pub fn lp_default(dim: usize, p: f64) -> Result<Self> {
        let d_q = default_smoothness_constant(p, 2.0).ok_or_else(|| {
            Error::InvalidSpace(format!("no default smoothness constant for p = {p}, q = 2"))
        })?;
        Self::new(dim, p, 2.0, d_q)
    }

    pub fn is_hilbert(&self) -> bool {
        self.p == 2.0 && self.q == 2.0
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn dual_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn zeros(&self) -> Vector {
        Vector::zeros(self.dim)
    }

    pub(crate) fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(())
    }
}

/// Default `d_q`: 1 in the Hilbert case, `p - 1` for `p >= 2, q = 2`. No value
/// is asserted for `1 < p < 2`; such spaces need a user-supplied constant.
pub fn default_smoothness_constant(p: f64, q: f64) -> Option<f64> {
    if q == 2.0 && p == 2.0 {
        Some(1.0)
    } else if q == 2.0 && p > 2.0 {
        Some(p - 1.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

/// Element of the dual space, measured in the `l_{p'}` norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualVector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|a| c * a).collect())
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Vector) -> Vector {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        let naive = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if naive.is_finite() || v.iter().any(|c| !c.is_finite()) {
            return naive;
        }
    }
    let m = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v
        .iter()
        .map(|c| (c.abs() / m).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `||v||_p`, without conformance checks. Used on hot paths.
pub(crate) fn norm_unchecked(v: &[f64], s: &SpaceSpec) -> f64 {
    lp_norm(v, s.p)
}

pub fn norm(v: &Vector, s: &SpaceSpec) -> Result<f64> {
    s.check(&v.0)?;
    Ok(lp_norm(&v.0, s.p))
}

/// `||x* ||_{p'}`
pub fn dual_norm(xs: &DualVector, s: &SpaceSpec) -> Result<f64> {
    s.check(&xs.0)?;
    Ok(lp_norm(&xs.0, s.dual_exponent()))
}

pub fn dual_pair(xs: &DualVector, y: &Vector, s: &SpaceSpec) -> Result<f64> {
    if xs.0.len() != s.dim {
        return Err(Error::DimensionMismatch {
            expected: s.dim,
            found: xs.0.len(),
        });
    }
    if y.0.len() != s.dim {
        return Err(Error::DimensionMismatch {
            expected: s.dim,
            found: y.0.len(),
        });
    }
    Ok(pair_unchecked(&xs.0, &y.0))
}

pub(crate) fn pair_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn duality_map_unchecked(x: &[f64], s: &SpaceSpec) -> Vec<f64> {
    if s.is_hilbert() {
        return x.to_vec();
    }
    let n = lp_norm(x, s.p);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    // (|x_i| / n)^{p-1} n^{q-1} keeps the powers well scaled.
    let outer = n.powf(s.q - 1.0);
    let pm1 = s.p - 1.0;
    x.iter()
        .map(|&c| {
            if c == 0.0 {
                0.0
            } else {
                c.signum() * (c.abs() / n).powf(pm1) * outer
            }
        })
        .collect()
}

pub fn duality_map(x: &Vector, s: &SpaceSpec) -> Result<DualVector> {
    s.check(&x.0)?;
    Ok(DualVector(duality_map_unchecked(&x.0, s)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub accepted: bool,
    /// Module default for the `(p, q)` pair, when one exists.
    pub default_d_q: Option<f64>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

/// Checks `(p, q)` against the smoothness table of `l_p`:
/// `p >= 2` is 2-uniformly smooth, `1 < p <= 2` is p-uniformly smooth.
pub fn validate_space(s: &SpaceSpec) -> SpaceReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    if s.dim == 0 {
        errors.push("dim must be at least 1".to_string());
    }
    if !(s.p.is_finite() && s.p > 1.0) {
        errors.push(format!("p = {} outside (1, inf)", s.p));
    }
    if !(s.q.is_finite() && s.q > 1.0) {
        errors.push(format!("q = {} must exceed 1", s.q));
    }
    if !(s.d_q.is_finite() && s.d_q > 0.0) {
        errors.push(format!("d_q = {} must be positive", s.d_q));
    }
    let supported = (s.p >= 2.0 && s.q == 2.0) || (s.p > 1.0 && s.p <= 2.0 && s.q == s.p);
    if errors.is_empty() && !supported {
        errors.push(format!(
            "unsupported pair (p = {}, q = {}): l_p is 2-uniformly smooth for p >= 2 and p-uniformly smooth for 1 < p <= 2",
            s.p, s.q
        ));
    }
    let default_d_q = default_smoothness_constant(s.p, s.q);
    match default_d_q {
        Some(d) if errors.is_empty() && (s.d_q - d).abs() > 1e-12 * d.max(1.0) => {
            warnings.push(format!(
                "d_q = {} differs from the default {} for (p = {}, q = {})",
                s.d_q, d, s.p, s.q
            ))
        }
        None if errors.is_empty() => warnings.push(format!(
            "no default d_q for (p = {}, q = {}); the supplied d_q = {} must be sample-certified",
            s.p, s.q, s.d_q
        )),
        _ => {}
    }
    SpaceReport {
        accepted: errors.is_empty(),
        default_d_q,
        errors,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(c: &[f64]) -> Vector {
        Vector(c.to_vec())
    }

    #[test]
    fn norm_examples() {
        let h = SpaceSpec::hilbert(2);
        assert_eq!(norm(&v(&[0.0, 0.0]), &h).unwrap(), 0.0);
        assert_eq!(norm(&v(&[3.0, 4.0]), &h).unwrap(), 5.0);
        let s3 = SpaceSpec::new(2, 3.0, 3.0, 1.0).unwrap();
        assert_relative_eq!(
            norm(&v(&[1.0, -2.0]), &s3).unwrap(),
            9f64.powf(1.0 / 3.0),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            norm(&v(&[1.0, -2.0]), &s3).unwrap(),
            2.080083823051904,
            max_relative = 1e-14
        );
    }

    #[test]
    fn norm_errors() {
        let h = SpaceSpec::hilbert(2);
        assert!(matches!(
            norm(&v(&[1.0]), &h),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            norm(&v(&[1.0, f64::NAN]), &h),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn pairing_examples() {
        let h = SpaceSpec::hilbert(2);
        assert_eq!(
            dual_pair(&DualVector(vec![1.0, 0.0]), &v(&[0.0, 1.0]), &h).unwrap(),
            0.0
        );
        assert_eq!(
            dual_pair(&DualVector(vec![1.0, -4.0]), &v(&[1.0, -2.0]), &h).unwrap(),
            9.0
        );
        assert_eq!(
            dual_pair(&DualVector(vec![0.0, 0.0]), &v(&[7.0, -3.0]), &h).unwrap(),
            0.0
        );
        assert!(dual_pair(&DualVector(vec![0.0]), &v(&[7.0, -3.0]), &h).is_err());
    }

    #[test]
    fn duality_map_examples() {
        let h = SpaceSpec::hilbert(2);
        assert_eq!(duality_map(&v(&[3.0, 4.0]), &h).unwrap().0, vec![3.0, 4.0]);

        let s3 = SpaceSpec::new(2, 3.0, 3.0, 1.0).unwrap();
        let j = duality_map(&v(&[1.0, -2.0]), &s3).unwrap();
        assert_relative_eq!(j.0[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(j.0[1], -4.0, max_relative = 1e-14);
        assert_relative_eq!(
            dual_pair(&j, &v(&[1.0, -2.0]), &s3).unwrap(),
            9.0,
            max_relative = 1e-14
        );

        for s in [h, s3, SpaceSpec::new(2, 1.5, 1.5, 2.0).unwrap()] {
            assert_eq!(duality_map(&v(&[0.0, 0.0]), &s).unwrap().0, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn duality_map_norm_identity() {
        let s = SpaceSpec::new(3, 3.0, 2.0, 2.0).unwrap();
        let x = v(&[0.3, -1.7, 2.2]);
        let j = duality_map(&x, &s).unwrap();
        let nx = norm(&x, &s).unwrap();
        assert_relative_eq!(
            dual_pair(&j, &x, &s).unwrap(),
            nx.powf(2.0),
            max_relative = 1e-13
        );
        assert_relative_eq!(dual_norm(&j, &s).unwrap(), nx, max_relative = 1e-13);
    }

    #[test]
    fn validate_space_table() {
        let r = validate_space(&SpaceSpec::hilbert(2));
        assert!(r.accepted && r.warnings.is_empty());
        assert_eq!(r.default_d_q, Some(1.0));

        let r = validate_space(&SpaceSpec::new(2, 3.0, 2.0, 2.0).unwrap());
        assert!(r.accepted && r.warnings.is_empty());
        assert_eq!(r.default_d_q, Some(2.0));

        let r = validate_space(&SpaceSpec::new(2, 3.0, 3.0, 1.0).unwrap());
        assert!(!r.accepted);
        assert!(r.errors[0].contains("unsupported pair"));

        let r = validate_space(&SpaceSpec::new(2, 3.0, 2.0, 5.0).unwrap());
        assert!(r.accepted);
        assert_eq!(r.warnings.len(), 1);

        let r = validate_space(&SpaceSpec::new(2, 1.5, 1.5, 2.0).unwrap());
        assert!(r.accepted);
        assert!(r.default_d_q.is_none());
        assert!(r.warnings[0].contains("sample-certified"));

        let r = validate_space(&SpaceSpec::new(2, 1.5, 2.0, 1.0).unwrap());
        assert!(!r.accepted);
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(SpaceSpec::new(0, 2.0, 2.0, 1.0).is_err());
        assert!(SpaceSpec::new(2, 1.0, 2.0, 1.0).is_err());
        assert!(SpaceSpec::new(2, 2.0, 0.5, 1.0).is_err());
        assert!(SpaceSpec::new(2, 2.0, 2.0, 0.0).is_err());
        assert!(SpaceSpec::lp_default(2, 1.5).is_err());
        assert_eq!(SpaceSpec::lp_default(2, 4.0).unwrap().d_q, 3.0);
    }

    #[test]
    fn hilbert_norm_does_not_overflow_for_finite_vectors() {
        let s = SpaceSpec::hilbert(2);
        let n = norm(&Vector(vec![1e300, 1e300]), &s).unwrap();
        assert!((n / 1e300 - 2f64.sqrt()).abs() < 1e-15);
    }
}
