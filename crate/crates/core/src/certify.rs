//! Sampling certifiers for operator classes and space inequalities.
//!
//! Sampling can only find violations, never prove an inequality; a passing
//! report means no violation was found on the drawn pairs. Margins are
//! normalized as `(rhs - lhs) / scale` with `scale = max(1, |...|)` taken
//! over quantities that do not depend on the claimed constant, so loosening
//! a constant can only raise every margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::params;
use crate::space::{self, SpaceSpec, Vector};

/// Margins at or above `-TOLERANCE` count as satisfied.
pub const TOLERANCE: f64 = 1e-9;

const MIN_SEPARATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Uniform in the Euclidean ball of the given radius.
    UniformBall,
    /// Independent normal coordinates with standard deviation `radius / sqrt(dim)`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    pub count: usize,
    pub radius: f64,
    pub distribution: Distribution,
}

impl SamplePlan {
    pub fn new(seed: u64, count: usize, radius: f64, distribution: Distribution) -> Result<Self> {
        if count == 0 {
            return Err(Error::Precondition(
                "sample count must be at least 1".into(),
            ));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Precondition(format!(
                "sample radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            seed,
            count,
            radius,
            distribution,
        })
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            count: 1000,
            radius: 10.0,
            distribution: Distribution::UniformBall,
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
    radius: f64,
    distribution: Distribution,
}

impl Sampler {
    fn new(plan: &SamplePlan, dim: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(plan.seed),
            dim,
            radius: plan.radius,
            distribution: plan.distribution,
        }
    }

    fn point(&mut self) -> Vec<f64> {
        let g: Vec<f64> = (0..self.dim)
            .map(|_| self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        match self.distribution {
            Distribution::Gaussian => {
                let sd = self.radius / (self.dim as f64).sqrt();
                g.into_iter().map(|c| sd * c).collect()
            }
            Distribution::UniformBall => {
                let n = g.iter().map(|c| c * c).sum::<f64>().sqrt();
                let u: f64 = self.rng.random();
                let r = self.radius * u.powf(1.0 / self.dim as f64);
                if n == 0.0 {
                    g
                } else {
                    g.into_iter().map(|c| c * r / n).collect()
                }
            }
        }
    }

    /// Independent pair with `||x - y|| >= MIN_SEPARATION`.
    fn pair(&mut self, s: &SpaceSpec) -> (Vec<f64>, Vec<f64>) {
        loop {
            let x = self.point();
            let y = self.point();
            let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            if space::norm_unchecked(&d, s) >= MIN_SEPARATION {
                return (x, y);
            }
        }
    }

    fn scalar(&mut self) -> f64 {
        // log-uniform over [1e-3, 1e3]
        10f64.powf(self.rng.random_range(-3.0..3.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub property: String,
    pub passed: bool,
    /// Most violated normalized slack; negative means violation.
    pub worst_margin: f64,
    pub witness: Option<(Vector, Vector)>,
    pub samples: usize,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<CertificateReport>,
}

impl CertificateReport {
    fn empty(property: impl Into<String>) -> Self {
        Self {
            property: property.into(),
            passed: true,
            worst_margin: f64::INFINITY,
            witness: None,
            samples: 0,
            tolerance: TOLERANCE,
            notes: Vec::new(),
            parts: Vec::new(),
        }
    }

    fn record(&mut self, margin: f64, x: &[f64], y: &[f64]) {
        self.samples += 1;
        // NaN margins count as violations.
        if !(margin >= self.worst_margin) {
            self.worst_margin = if margin.is_nan() {
                f64::NEG_INFINITY
            } else {
                margin
            };
            self.witness = Some((Vector(x.to_vec()), Vector(y.to_vec())));
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.worst_margin >= -self.tolerance;
        self
    }

    /// Aggregate report that passes iff every part passes.
    fn combine(property: impl Into<String>, parts: Vec<CertificateReport>) -> Self {
        let mut r = Self::empty(property);
        for p in &parts {
            r.samples += p.samples;
            if p.worst_margin < r.worst_margin {
                r.worst_margin = p.worst_margin;
                r.witness = p.witness.clone();
            }
        }
        r.passed = parts.iter().all(|p| p.passed);
        r.parts = parts;
        r
    }

    /// Names of failing leaves.
    pub fn failures(&self) -> Vec<String> {
        if self.parts.is_empty() {
            return if self.passed {
                Vec::new()
            } else {
                vec![self.property.clone()]
            };
        }
        self.parts.iter().flat_map(|p| p.failures()).collect()
    }
}

/// `||v||^q`, without the root when `q = p`.
fn norm_pow(v: &[f64], s: &SpaceSpec) -> f64 {
    if s.q == s.p {
        if s.p == 2.0 {
            v.iter().map(|c| c * c).sum()
        } else {
            v.iter().map(|c| c.abs().powf(s.p)).sum()
        }
    } else {
        space::norm_unchecked(v, s).powf(s.q)
    }
}

/// Normalized slack of `lhs <= rhs`.
pub fn margin(lhs: f64, rhs: f64, scale: f64) -> f64 {
    (rhs - lhs) / scale.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "constant", rename_all = "kebab-case")]
pub enum OperatorClass {
    /// `||Tx - Ty|| <= beta ||x - y||`
    Contraction(f64),
    Nonexpansive,
    Lipschitz(f64),
    /// `<Gx - Gy, j_q(x - y)> >= eta ||x - y||^q`
    StronglyAccretive(f64),
    /// `<(I-T)x - (I-T)y, j_q(x - y)> >= lambda ||(I-T)x - (I-T)y||^q`
    StrictPseudocontraction(f64),
}

impl OperatorClass {
    /// Parses a class name; `constant` is ignored for `nonexpansive`.
    pub fn parse(name: &str, constant: Option<f64>) -> Result<Self> {
        let need = |c: Option<f64>| c.ok_or(Error::MissingConstant("class constant"));
        Ok(match name {
            "contraction" => Self::Contraction(need(constant)?),
            "nonexpansive" => Self::Nonexpansive,
            "lipschitz" => Self::Lipschitz(need(constant)?),
            "strongly-accretive" | "accretive" => Self::StronglyAccretive(need(constant)?),
            "strict-pseudocontraction" | "strict" => Self::StrictPseudocontraction(need(constant)?),
            other => {
                return Err(Error::InvalidOperator(format!(
                    "unknown operator class '{other}'"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Contraction(_) => "contraction",
            Self::Nonexpansive => "nonexpansive",
            Self::Lipschitz(_) => "lipschitz",
            Self::StronglyAccretive(_) => "strongly-accretive",
            Self::StrictPseudocontraction(_) => "strict-pseudocontraction",
        }
    }

    /// `(lhs, rhs, scale)` of the defining inequality `lhs <= rhs` at `(x, y)`.
    pub(crate) fn sides(
        &self,
        op: &Operator,
        x: &[f64],
        y: &[f64],
        s: &SpaceSpec,
    ) -> (f64, f64, f64) {
        let tx = op.eval(x);
        let ty = op.eval(y);
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let td: Vec<f64> = tx.iter().zip(&ty).map(|(a, b)| a - b).collect();
        let nd = space::norm_unchecked(&d, s);
        match *self {
            Self::Contraction(c) | Self::Lipschitz(c) => {
                let l = space::norm_unchecked(&td, s);
                (l, c * nd, l.max(nd))
            }
            Self::Nonexpansive => {
                let l = space::norm_unchecked(&td, s);
                (l, nd, l.max(nd))
            }
            Self::StronglyAccretive(eta) => {
                let pair = space::pair_unchecked(&td, &space::duality_map_unchecked(&d, s));
                let pow = norm_pow(&d, s);
                (eta * pow, pair, pair.abs().max(pow))
            }
            Self::StrictPseudocontraction(lambda) => {
                let r: Vec<f64> = d.iter().zip(&td).map(|(a, b)| a - b).collect();
                let pair = space::pair_unchecked(&r, &space::duality_map_unchecked(&d, s));
                let pow = norm_pow(&r, s);
                (lambda * pow, pair, pair.abs().max(pow))
            }
        }
    }
}

pub fn certify_operator_class(
    op: &Operator,
    class: OperatorClass,
    s: &SpaceSpec,
    plan: &SamplePlan,
) -> Result<CertificateReport> {
    op.check_dim(s.dim)?;
    let c = match class {
        OperatorClass::Nonexpansive => 1.0,
        OperatorClass::Contraction(c)
        | OperatorClass::Lipschitz(c)
        | OperatorClass::StronglyAccretive(c)
        | OperatorClass::StrictPseudocontraction(c) => c,
    };
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Precondition(format!(
            "{} constant must be positive, got {c}",
            class.name()
        )));
    }
    let mut sampler = Sampler::new(plan, s.dim);
    let mut report = CertificateReport::empty(class.name());
    for _ in 0..plan.count {
        let (x, y) = sampler.pair(s);
        let (l, r, scale) = class.sides(op, &x, &y, s);
        report.record(margin(l, r, scale), &x, &y);
    }
    Ok(report.finish())
}

/// Certifies every claim carried by `op`.
pub fn certify_claims(
    op: &Operator,
    s: &SpaceSpec,
    plan: &SamplePlan,
    label: &str,
) -> Result<CertificateReport> {
    let c = op.claims;
    let mut classes = Vec::new();
    if let Some(b) = c.contraction {
        classes.push(OperatorClass::Contraction(b));
    }
    if let Some(l) = c.lipschitz {
        classes.push(OperatorClass::Lipschitz(l));
    }
    if let Some(e) = c.accretive {
        classes.push(OperatorClass::StronglyAccretive(e));
    }
    if let Some(k) = c.strictness {
        classes.push(OperatorClass::StrictPseudocontraction(k));
    }
    if c.nonexpansive {
        classes.push(OperatorClass::Nonexpansive);
    }
    let parts = classes
        .into_iter()
        .map(|cl| {
            certify_operator_class(op, cl, s, plan).map(|mut r| {
                r.property = format!("{label}: {}", r.property);
                r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificateReport::combine(label, parts))
}

/// Margins of the three scalar inequalities at one `(x, y)`: the
/// subdifferential bound `||x+y||^q <= ||x||^q + q <y, j_q(x+y)>`, the
/// smoothness bound `||x+y||^q <= ||x||^q + q <y, j_q(x)> + d_q ||y||^q`.
pub fn space_inequality_margins(x: &Vector, y: &Vector, s: &SpaceSpec) -> Result<(f64, f64)> {
    s.check(&x.0)?;
    s.check(&y.0)?;
    Ok(space_margins(&x.0, &y.0, s))
}

fn space_margins(x: &[f64], y: &[f64], s: &SpaceSpec) -> (f64, f64) {
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let lhs = norm_pow(&xy, s);
    let nx = norm_pow(x, s);
    let ny = norm_pow(y, s);
    let sub = s.q * space::pair_unchecked(y, &space::duality_map_unchecked(&xy, s));
    let smooth = s.q * space::pair_unchecked(y, &space::duality_map_unchecked(x, s));
    let m1 = margin(lhs, nx + sub, lhs.max(nx).max(sub.abs()));
    let m2 = margin(
        lhs,
        nx + smooth + s.d_q * ny,
        lhs.max(nx).max(smooth.abs()).max(ny),
    );
    (m1, m2)
}

/// Margin of Young's inequality `ab <= a^q / q + (q-1)/q b^{q/(q-1)}`.
pub fn young_margin(a: f64, b: f64, q: f64) -> f64 {
    let lhs = a * b;
    let rhs = a.powf(q) / q + (q - 1.0) / q * b.powf(q / (q - 1.0));
    margin(lhs, rhs, lhs.abs().max(rhs.abs()))
}

pub fn certify_space_inequalities(s: &SpaceSpec, plan: &SamplePlan) -> CertificateReport {
    let mut sampler = Sampler::new(plan, s.dim);
    let mut sub = CertificateReport::empty("subdifferential-inequality");
    let mut smooth = CertificateReport::empty("smoothness-inequality");
    let mut young = CertificateReport::empty("young-inequality");
    for _ in 0..plan.count {
        let x = sampler.point();
        let y = sampler.point();
        let (m1, m2) = space_margins(&x, &y, s);
        sub.record(m1, &x, &y);
        smooth.record(m2, &x, &y);
        let (a, b) = (sampler.scalar(), sampler.scalar());
        young.record(young_margin(a, b, s.q), &[a], &[b]);
    }
    // degenerate perturbation y = 0 is always included
    let x = sampler.point();
    let zero = vec![0.0; s.dim];
    let (m1, m2) = space_margins(&x, &zero, s);
    sub.record(m1, &x, &zero);
    smooth.record(m2, &x, &zero);
    young.notes.push(
        "checked in the standard form ab <= a^q/q + (q-1)/q b^{q/(q-1)}; the variant with a in both right-hand \
         terms is not checked"
            .into(),
    );
    let mut r = CertificateReport::combine(
        "space-inequalities",
        vec![sub.finish(), smooth.finish(), young.finish()],
    );
    let report = space::validate_space(s);
    if report.default_d_q.is_none() {
        r.notes.push(format!(
            "d_q = {} is user supplied; the smoothness check is its only support",
            s.d_q
        ));
    }
    r
}

/// Largest admissible `t` for the step contraction check.
fn t_cap(tau: f64) -> f64 {
    1f64.min(1.0 / tau)
}

/// Checks `||(I - t mu G)x - (I - t mu G)y|| <= (1 - t tau)||x - y||` over a
/// grid of `t`.
pub fn certify_step_contraction(
    g: &Operator,
    mu: f64,
    t_grid: &[f64],
    tau: f64,
    s: &SpaceSpec,
    plan: &SamplePlan,
) -> Result<CertificateReport> {
    g.check_dim(s.dim)?;
    let (eta, l) = match (g.claims.accretive, g.claims.lipschitz) {
        (Some(e), Some(l)) => (e, l),
        _ => {
            return Err(Error::MissingConstant(
                "accretivity and Lipschitz constants of G",
            ))
        }
    };
    let bound = params::mu_upper_bound(eta, l, s.q, s.d_q)?;
    if !(mu > 0.0 && mu < bound) {
        return Err(Error::Precondition(format!(
            "mu = {mu} outside (0, {bound})"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau = {tau} must be positive")));
    }
    if t_grid.is_empty() {
        return Err(Error::Precondition("empty t grid".into()));
    }
    let cap = t_cap(tau);
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && **t <= cap)) {
        return Err(Error::Precondition(format!("t = {t} outside (0, {cap}]")));
    }
    let mut sampler = Sampler::new(plan, s.dim);
    let mut report = CertificateReport::empty("step-contraction");
    for _ in 0..plan.count {
        let (x, y) = sampler.pair(s);
        let gx = g.eval(&x);
        let gy = g.eval(&y);
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let nd = space::norm_unchecked(&d, s);
        for &t in t_grid {
            let diff: Vec<f64> = d
                .iter()
                .zip(gx.iter().zip(&gy))
                .map(|(d, (a, b))| d - t * mu * (a - b))
                .collect();
            let lhs = space::norm_unchecked(&diff, s);
            report.record(margin(lhs, (1.0 - t * tau) * nd, lhs.max(nd)), &x, &y);
        }
    }
    report.samples = plan.count;
    Ok(report.finish())
}

/// Checks that `alpha I + (1 - alpha) T` is nonexpansive on samples and fixes
/// the declared fixed points of `T`.
pub fn certify_averaged(
    t: &Operator,
    lambda: f64,
    alpha: f64,
    s: &SpaceSpec,
    plan: &SamplePlan,
) -> Result<CertificateReport> {
    t.check_dim(s.dim)?;
    let threshold = params::averaging_threshold(lambda, s.q, s.d_q)?;
    if !(alpha >= threshold && alpha < 1.0) {
        return Err(Error::Precondition(format!(
            "averaging weight {alpha} outside [{threshold}, 1)"
        )));
    }
    let avg = |x: &[f64]| crate::operators::average(alpha, x, &t.eval(x));
    let mut sampler = Sampler::new(plan, s.dim);
    let mut nonexp = CertificateReport::empty("averaged-nonexpansive");
    for _ in 0..plan.count {
        let (x, y) = sampler.pair(s);
        let (ax, ay) = (avg(&x), avg(&y));
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let ad: Vec<f64> = ax.iter().zip(&ay).map(|(a, b)| a - b).collect();
        let (l, r) = (space::norm_unchecked(&ad, s), space::norm_unchecked(&d, s));
        nonexp.record(margin(l, r, l.max(r)), &x, &y);
    }
    let mut fixed = CertificateReport::empty("averaged-fixed-points");
    match t.fixed_set(s.dim) {
        Some(fs) => {
            let mut coeffs = Vec::new();
            for k in 0..plan.count.min(100) {
                coeffs.clear();
                for _ in 0..fs.dim() {
                    coeffs.push(if k == 0 {
                        0.0
                    } else {
                        plan.radius * sampler.rng.random_range(-1.0..1.0)
                    });
                }
                let z = fs.at(&coeffs);
                let az = avg(&z.0);
                let gap = space::norm_unchecked(&z.sub(&Vector(az)).0, s);
                let scale = space::norm_unchecked(&z.0, s);
                fixed.record(margin(gap, 0.0, scale), &z.0, &z.0);
            }
        }
        None => fixed
            .notes
            .push("no fixed set declared or computable".into()),
    }
    Ok(CertificateReport::combine(
        "averaged",
        vec![nonexp.finish(), fixed.finish()],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{averaged, generate_problem, GeneratorKnobs, OperatorKind};
    use proptest::prelude::*;

    fn plan() -> SamplePlan {
        SamplePlan::new(7, 1000, 10.0, Distribution::UniformBall).unwrap()
    }

    fn diag(d: &[f64]) -> Operator {
        Operator::diagonal(d.to_vec(), Vector::zeros(d.len())).unwrap()
    }

    #[test]
    fn identity_is_nonexpansive_with_zero_margin() {
        let h = SpaceSpec::hilbert(3);
        let r = certify_operator_class(
            &Operator::identity(3),
            OperatorClass::Nonexpansive,
            &h,
            &plan(),
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_margin, 0.0);
        assert_eq!(r.samples, 1000);
    }

    #[test]
    fn scaling_contraction_passes() {
        let h = SpaceSpec::hilbert(2);
        let f = Operator::diagonal(vec![0.1, 0.1], Vector(vec![1.0, 1.0])).unwrap();
        assert!(
            certify_operator_class(&f, OperatorClass::Contraction(0.1), &h, &plan())
                .unwrap()
                .passed
        );
        assert!(
            !certify_operator_class(&f, OperatorClass::Contraction(0.09), &h, &plan())
                .unwrap()
                .passed
        );
    }

    #[test]
    fn strictness_eigenvalue_condition() {
        // a <= 1 - lambda (1 - a)^2 at a = -0.5 gives lambda <= 2/3
        let h = SpaceSpec::hilbert(2);
        let t = diag(&[1.0, -0.5]);
        let ok = certify_operator_class(
            &t,
            OperatorClass::StrictPseudocontraction(2.0 / 3.0),
            &h,
            &plan(),
        )
        .unwrap();
        assert!(ok.passed && ok.worst_margin >= -TOLERANCE);
        let bad =
            certify_operator_class(&t, OperatorClass::StrictPseudocontraction(0.9), &h, &plan())
                .unwrap();
        assert!(!bad.passed);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn unknown_class_and_dimension_errors() {
        assert!(OperatorClass::parse("firmly-nonexpansive", None).is_err());
        assert_eq!(
            OperatorClass::parse("contraction", Some(0.5)).unwrap(),
            OperatorClass::Contraction(0.5)
        );
        let h = SpaceSpec::hilbert(2);
        assert!(certify_operator_class(
            &Operator::identity(3),
            OperatorClass::Nonexpansive,
            &h,
            &plan()
        )
        .is_err());
    }

    #[test]
    fn space_inequality_examples() {
        let h = SpaceSpec::hilbert(2);
        let (m1, m2) =
            space_inequality_margins(&Vector(vec![1.0, 0.0]), &Vector(vec![0.0, 1.0]), &h).unwrap();
        assert_eq!(m2, 0.0);
        assert!(m1 >= 0.0);
        let (m1, m2) =
            space_inequality_margins(&Vector(vec![3.0, -1.0]), &Vector(vec![0.0, 0.0]), &h)
                .unwrap();
        assert_eq!((m1, m2), (0.0, 0.0));
        assert_eq!(young_margin(1.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn space_inequalities_pass_for_supported_spaces() {
        for s in [
            SpaceSpec::hilbert(4),
            SpaceSpec::lp_default(4, 3.0).unwrap(),
            SpaceSpec::lp_default(5, 6.0).unwrap(),
        ] {
            let r = certify_space_inequalities(&s, &plan());
            assert!(r.passed, "{s:?}: {:?}", r.failures());
            assert_eq!(r.parts.len(), 3);
            assert!(!r.parts[2].notes.is_empty());
        }
    }

    #[test]
    fn smoothness_constant_too_small_is_caught() {
        let s = SpaceSpec::new(4, 3.0, 2.0, 0.5).unwrap();
        let r = certify_space_inequalities(&s, &plan());
        assert!(!r.passed);
        assert_eq!(r.failures(), vec!["smoothness-inequality".to_string()]);
    }

    #[test]
    fn step_contraction_examples() {
        // tau = 0.5 (1 - 0.25) = 0.375; (1 - 0.5) I has factor 0.5 <= 0.625
        let h = SpaceSpec::hilbert(2);
        let g = Operator::scaled_identity(1.0)
            .unwrap()
            .with_accretive(1.0)
            .unwrap()
            .with_lipschitz(1.0)
            .unwrap();
        let tau = params::derive_tau(0.5, 1.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(tau, 0.375);
        let r = certify_step_contraction(&g, 0.5, &[1.0, 0.5, 1e-6], tau, &h, &plan()).unwrap();
        assert!(r.passed);
        assert!(certify_step_contraction(&g, 2.5, &[0.5], tau, &h, &plan()).is_err());
        assert!(certify_step_contraction(&g, 0.5, &[1.5], tau, &h, &plan()).is_err());
        assert!(certify_step_contraction(&g, 0.5, &[0.0], tau, &h, &plan()).is_err());
        // an overstated tau is detected
        let r = certify_step_contraction(&g, 0.5, &[1.0], 0.6, &h, &plan()).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn averaged_examples() {
        let h = SpaceSpec::hilbert(2);
        let t = diag(&[1.0, -0.5]).with_strictness(2.0 / 3.0).unwrap();
        let r = certify_averaged(&t, 2.0 / 3.0, 0.5, &h, &plan()).unwrap();
        assert!(r.passed, "{:?}", r.failures());
        assert_eq!(r.parts[1].worst_margin, 0.0);
        assert!(
            certify_averaged(&t, 2.0 / 3.0, 0.999, &h, &plan())
                .unwrap()
                .passed
        );
        let avg = averaged(t.clone(), 0.5, &h).unwrap();
        assert_eq!(
            crate::operators::apply(&avg, &Vector(vec![7.0, 0.0]), &h).unwrap(),
            Vector(vec![7.0, 0.0])
        );
        // lambda = 0.25 puts the threshold at 0.5
        assert!(certify_averaged(&t, 0.25, 0.4, &h, &plan()).is_err());
    }

    #[test]
    fn certifiers_are_deterministic() {
        let h = SpaceSpec::hilbert(3);
        let t = diag(&[1.0, 0.3, -0.7]);
        let a =
            certify_operator_class(&t, OperatorClass::StrictPseudocontraction(0.5), &h, &plan())
                .unwrap();
        let b =
            certify_operator_class(&t, OperatorClass::StrictPseudocontraction(0.5), &h, &plan())
                .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_hilbert_claims_agree_with_eigenvalues() {
        for seed in 0..10 {
            let dim = 2 + (seed as usize % 7);
            let h = SpaceSpec::hilbert(dim);
            let p = generate_problem(
                seed,
                dim,
                1 + seed as usize % 4,
                &h,
                &GeneratorKnobs::default(),
            )
            .unwrap();
            for t in &p.operators {
                let OperatorKind::DiagonalAffine { diag, .. } = &t.kind else {
                    panic!()
                };
                let k = t.claims.strictness.unwrap();
                let closed_form = diag
                    .iter()
                    .all(|a| *a <= 1.0 - k * (1.0 - a).powi(2) + 1e-15);
                let r = certify_claims(t, &h, &plan(), "T").unwrap();
                assert_eq!(r.passed, closed_form);
                assert!(r.passed);
            }
            assert!(
                certify_claims(&p.contraction, &h, &plan(), "f")
                    .unwrap()
                    .passed
            );
            assert!(
                certify_claims(&p.accretive, &h, &plan(), "G")
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn generated_lp_claims_pass() {
        let s = SpaceSpec::lp_default(3, 3.0).unwrap();
        for seed in 0..5 {
            let p = generate_problem(seed, 3, 2, &s, &GeneratorKnobs::default()).unwrap();
            for op in p.operators.iter().chain([&p.contraction, &p.accretive]) {
                let r = certify_claims(op, &s, &plan(), "op").unwrap();
                assert!(r.passed, "seed {seed}: {:?}", r.failures());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn loosening_never_breaks_a_pass(a in -0.95f64..0.95, lambda in 0.05f64..1.5, shrink in 0.0f64..1.0) {
            let h = SpaceSpec::hilbert(2);
            let t = diag(&[1.0, a]);
            let p = SamplePlan::new(3, 200, 5.0, Distribution::Gaussian).unwrap();
            let tight = certify_operator_class(&t, OperatorClass::StrictPseudocontraction(lambda), &h, &p).unwrap();
            let loose = certify_operator_class(&t, OperatorClass::StrictPseudocontraction(lambda * shrink.max(1e-3)), &h, &p).unwrap();
            prop_assert!(!tight.passed || loose.passed);
            prop_assert!(loose.worst_margin >= tight.worst_margin);
        }

        #[test]
        fn smoothness_inequality_holds_in_l3(x in prop::collection::vec(-10.0f64..10.0, 3), y in prop::collection::vec(-10.0f64..10.0, 3)) {
            let s = SpaceSpec::lp_default(3, 3.0).unwrap();
            let (m1, m2) = space_margins(&x, &y, &s);
            prop_assert!(m1 >= -TOLERANCE && m2 >= -TOLERANCE);
        }

        #[test]
        fn young_holds(a in 1e-3f64..1e3, b in 1e-3f64..1e3, q in 1.1f64..4.0) {
            prop_assert!(young_margin(a, b, q) >= -TOLERANCE);
        }
    }
}
