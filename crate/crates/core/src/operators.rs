//! Realizable maps on `l_p^n` with claimed class constants.
//!
//! Every kind is affine, so compositions, averages and convex combinations
//! nest without flattening and stay evaluable at any point. Fixed-point
//! sets are carried as metadata ([`AffineSubspace`]) and can be recovered
//! from the affine parts when not declared.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{threshold_raw, OperatorConstants};
use crate::space::{self, SpaceSpec, Vector};
use crate::subspace::{affine_fixed_set, AffineSubspace};

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `x -> A x + b`
    Affine {
        matrix: DMatrix<f64>,
        offset: Vector,
    },
    /// `x -> diag(d) x + b`
    DiagonalAffine { diag: Vec<f64>, offset: Vector },
    /// `x -> c x`, any dimension.
    ScaledIdentity { scale: f64 },
    /// `ops[0] o ops[1] o ... o ops[last]`, applied right to left.
    Composition(Vec<Operator>),
    /// `alpha x + (1 - alpha) base(x)`
    Averaged { base: Box<Operator>, alpha: f64 },
    /// `sum_i weights_i ops_i(x)`
    ConvexCombination {
        ops: Vec<Operator>,
        weights: Vec<f64>,
    },
}

/// Class constants claimed for an operator. Claims are certified by sampling
/// (see [`crate::certify`]); nothing here is proven.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Claims {
    /// Contraction coefficient `beta < 1`.
    pub contraction: Option<f64>,
    pub lipschitz: Option<f64>,
    /// Strong accretivity constant `eta`.
    pub accretive: Option<f64>,
    /// Strict pseudocontraction constant (`k_i` or `lambda`).
    pub strictness: Option<f64>,
    pub nonexpansive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub kind: OperatorKind,
    pub claims: Claims,
    pub fixed_set: Option<AffineSubspace>,
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidOperator(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl Operator {
    fn bare(kind: OperatorKind) -> Self {
        Self {
            kind,
            claims: Claims::default(),
            fixed_set: None,
        }
    }

    pub fn affine(matrix: DMatrix<f64>, offset: Vector) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidOperator(format!(
                "matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if offset.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: offset.len(),
            });
        }
        if matrix.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("affine operator"));
        }
        Ok(Self::bare(OperatorKind::Affine { matrix, offset }))
    }

    pub fn diagonal(diag: Vec<f64>, offset: Vector) -> Result<Self> {
        if offset.len() != diag.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                found: offset.len(),
            });
        }
        if diag.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("diagonal operator"));
        }
        Ok(Self::bare(OperatorKind::DiagonalAffine { diag, offset }))
    }

    pub fn scaled_identity(scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::NonFinite("scaled identity"));
        }
        Ok(Self::bare(OperatorKind::ScaledIdentity { scale }))
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::bare(OperatorKind::DiagonalAffine {
            diag: vec![1.0; dim],
            offset: Vector::zeros(dim),
        });
        op.claims.nonexpansive = true;
        op.claims.lipschitz = Some(1.0);
        op.fixed_set = Some(AffineSubspace::whole_space(dim));
        op
    }

    pub fn zero(dim: usize) -> Self {
        let mut op = Self::bare(OperatorKind::DiagonalAffine {
            diag: vec![0.0; dim],
            offset: Vector::zeros(dim),
        });
        op.fixed_set = Some(AffineSubspace::point(Vector::zeros(dim)));
        op
    }

    pub fn with_contraction(mut self, beta: f64) -> Result<Self> {
        let beta = positive("contraction coefficient", beta)?;
        if beta >= 1.0 {
            return Err(Error::InvalidOperator(format!(
                "contraction coefficient {beta} must be < 1"
            )));
        }
        self.claims.contraction = Some(beta);
        self.claims.nonexpansive = true;
        Ok(self)
    }

    pub fn with_lipschitz(mut self, l: f64) -> Result<Self> {
        self.claims.lipschitz = Some(positive("Lipschitz constant", l)?);
        Ok(self)
    }

    pub fn with_accretive(mut self, eta: f64) -> Result<Self> {
        self.claims.accretive = Some(positive("accretivity constant", eta)?);
        Ok(self)
    }

    pub fn with_strictness(mut self, k: f64) -> Result<Self> {
        self.claims.strictness = Some(positive("strictness constant", k)?);
        Ok(self)
    }

    pub fn with_nonexpansive(mut self) -> Self {
        self.claims.nonexpansive = true;
        self
    }

    pub fn with_fixed_set(mut self, fs: AffineSubspace) -> Self {
        self.fixed_set = Some(fs);
        self
    }

    /// Ambient dimension, or `None` for dimension-free kinds.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            OperatorKind::Affine { matrix, .. } => Some(matrix.nrows()),
            OperatorKind::DiagonalAffine { diag, .. } => Some(diag.len()),
            OperatorKind::ScaledIdentity { .. } => None,
            OperatorKind::Composition(ops) | OperatorKind::ConvexCombination { ops, .. } => {
                ops.iter().find_map(|o| o.dim())
            }
            OperatorKind::Averaged { base, .. } => base.dim(),
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match &self.kind {
            OperatorKind::Composition(ops) | OperatorKind::ConvexCombination { ops, .. } => {
                ops.iter().try_for_each(|o| o.check_dim(dim))
            }
            OperatorKind::Averaged { base, .. } => base.check_dim(dim),
            _ => match self.dim() {
                Some(d) if d != dim => Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d,
                }),
                _ => Ok(()),
            },
        }
    }

    /// Evaluation without conformance checks.
    pub(crate) fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            OperatorKind::Affine { matrix, offset } => {
                let n = x.len();
                (0..n)
                    .map(|i| {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += matrix[(i, j)] * x[j];
                        }
                        acc + offset.0[i]
                    })
                    .collect()
            }
            OperatorKind::DiagonalAffine { diag, offset } => x
                .iter()
                .zip(diag)
                .zip(&offset.0)
                .map(|((x, d), b)| d * x + b)
                .collect(),
            OperatorKind::ScaledIdentity { scale } => x.iter().map(|c| scale * c).collect(),
            OperatorKind::Composition(ops) => {
                let mut y = x.to_vec();
                for op in ops.iter().rev() {
                    y = op.eval(&y);
                }
                y
            }
            OperatorKind::Averaged { base, alpha } => {
                let t = base.eval(x);
                average(*alpha, x, &t)
            }
            OperatorKind::ConvexCombination { ops, weights } => {
                let mut acc = vec![0.0; x.len()];
                for (op, w) in ops.iter().zip(weights) {
                    for (a, t) in acc.iter_mut().zip(op.eval(x)) {
                        *a += w * t;
                    }
                }
                acc
            }
        }
    }

    /// `(M, c)` with `op(x) = M x + c`.
    pub fn affine_parts(&self, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
        let zero = vec![0.0; dim];
        let c = self.eval(&zero);
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            let col = self.eval(&e);
            for i in 0..dim {
                m[(i, j)] = col[i] - c[i];
            }
            e[j] = 0.0;
        }
        (m, DVector::from_vec(c))
    }

    /// Declared fixed set, or the one solved from the affine parts.
    pub fn fixed_set(&self, dim: usize) -> Option<AffineSubspace> {
        if let Some(fs) = &self.fixed_set {
            return Some(fs.clone());
        }
        let (m, c) = self.affine_parts(dim);
        affine_fixed_set(&m, &c)
    }

    pub fn constants(&self) -> OperatorConstants {
        OperatorConstants {
            strictness: self.claims.strictness,
            nonexpansive: self.claims.nonexpansive,
        }
    }
}

/// `alpha x + (1 - alpha) t`
pub(crate) fn average(alpha: f64, x: &[f64], t: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(t)
        .map(|(x, t)| alpha * x + (1.0 - alpha) * t)
        .collect()
}

pub fn apply(op: &Operator, x: &Vector, s: &SpaceSpec) -> Result<Vector> {
    s.check(&x.0)?;
    op.check_dim(s.dim)?;
    let y = op.eval(&x.0);
    if y.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("operator output"));
    }
    Ok(Vector(y))
}

pub fn fixed_point_residual(op: &Operator, x: &Vector, s: &SpaceSpec) -> Result<f64> {
    let y = apply(op, x, s)?;
    Ok(space::norm_unchecked(&x.sub(&y).0, s))
}

fn intersect_all(
    sets: impl IntoIterator<Item = Option<AffineSubspace>>,
) -> Result<Option<AffineSubspace>> {
    let mut acc: Option<AffineSubspace> = None;
    for s in sets {
        let Some(s) = s else { return Ok(None) };
        acc = match acc {
            None => Some(s),
            Some(a) => match a.intersect(&s)? {
                Some(i) => Some(i),
                None => return Ok(None),
            },
        };
    }
    Ok(acc)
}

/// `sum_i w_i T_i`, strictly pseudocontractive with constant `min_i k_i`,
/// fixing exactly the common fixed points of the inputs.
pub fn convex_combination(ops: Vec<Operator>, weights: Vec<f64>) -> Result<Operator> {
    if ops.is_empty() || ops.len() != weights.len() {
        return Err(Error::InvalidOperator(format!(
            "need one positive weight per operator ({} operators, {} weights)",
            ops.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidOperator("weights must be positive".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidOperator(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    let mut lambda = f64::INFINITY;
    for op in &ops {
        match op.claims.strictness {
            Some(k) => lambda = lambda.min(k),
            None => return Err(Error::MissingConstant("strictness of a combined operator")),
        }
    }
    let dim = ops.iter().find_map(|o| o.dim());
    if let Some(d) = dim {
        for op in &ops {
            op.check_dim(d)?;
        }
    }
    let fixed = match dim {
        Some(d) => intersect_all(ops.iter().map(|o| o.fixed_set(d)))?,
        None => None,
    };
    let nonexpansive = ops.iter().all(|o| o.claims.nonexpansive);
    let mut out = Operator::bare(OperatorKind::ConvexCombination { ops, weights });
    out.claims.strictness = Some(lambda);
    out.claims.nonexpansive = nonexpansive;
    out.fixed_set = fixed;
    Ok(out)
}

/// `T_alpha = alpha I + (1 - alpha) T`. Nonexpansive once `alpha` reaches the
/// averaging threshold of the strictness constant; same fixed points as `T`.
pub fn averaged(op: Operator, alpha: f64, s: &SpaceSpec) -> Result<Operator> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!(
            "averaging weight {alpha} outside (0, 1)"
        )));
    }
    op.check_dim(s.dim)?;
    let lambda = op.claims.strictness;
    if lambda.is_none() && !op.claims.nonexpansive {
        return Err(Error::MissingConstant(
            "strictness of the averaged operator",
        ));
    }
    let nonexpansive =
        op.claims.nonexpansive || lambda.is_some_and(|l| alpha >= threshold_raw(l, s.q, s.d_q));
    let fixed = op.fixed_set(s.dim);
    let mut out = Operator::bare(OperatorKind::Averaged {
        base: Box::new(op),
        alpha,
    });
    out.claims.nonexpansive = nonexpansive;
    // <(I - T_a)h, j(h)> = (1 - a) <(I - T)h, j(h)> gives lambda (1 - a)^{1-q}.
    out.claims.strictness = lambda.map(|l| l * (1.0 - alpha).powf(1.0 - s.q));
    if nonexpansive {
        out.claims.lipschitz = Some(1.0);
    }
    out.fixed_set = fixed;
    Ok(out)
}

/// Composition of nonexpansive (averaged) maps; its fixed set is the
/// intersection of the factors' fixed sets.
pub fn compose(ops: Vec<Operator>) -> Result<Operator> {
    if ops.is_empty() {
        return Err(Error::InvalidOperator("empty composition".into()));
    }
    if let Some(i) = ops.iter().position(|o| !o.claims.nonexpansive) {
        return Err(Error::InvalidOperator(format!(
            "factor {} is not marked nonexpansive; only averaged maps above their threshold compose",
            i + 1
        )));
    }
    let dim = ops.iter().find_map(|o| o.dim());
    if let Some(d) = dim {
        for op in &ops {
            op.check_dim(d)?;
        }
    }
    let fixed = match dim {
        Some(d) => intersect_all(ops.iter().map(|o| o.fixed_set(d)))?,
        None => None,
    };
    let mut out = Operator::bare(OperatorKind::Composition(ops));
    out.claims.nonexpansive = true;
    out.claims.lipschitz = Some(1.0);
    out.fixed_set = fixed;
    Ok(out)
}

/// A full problem instance: the pseudocontractions `T_i` with weights, the
/// contraction `f` and the strongly accretive `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub space: SpaceSpec,
    pub operators: Vec<Operator>,
    pub weights: Vec<f64>,
    pub contraction: Operator,
    pub accretive: Operator,
    /// Declared common fixed set.
    pub fixed_set: Option<AffineSubspace>,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn n_operators(&self) -> usize {
        self.operators.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.operators.is_empty() {
            return Err(Error::InvalidOperator(
                "at least one pseudocontraction is required".into(),
            ));
        }
        if self.weights.len() != self.operators.len() {
            return Err(Error::InvalidOperator(
                "one weight per operator required".into(),
            ));
        }
        for op in self
            .operators
            .iter()
            .chain([&self.contraction, &self.accretive])
        {
            op.check_dim(self.dim())?;
        }
        if self.contraction.claims.contraction.is_none() {
            return Err(Error::MissingConstant("contraction coefficient of f"));
        }
        if self.accretive.claims.accretive.is_none() || self.accretive.claims.lipschitz.is_none() {
            return Err(Error::MissingConstant(
                "accretivity and Lipschitz constants of G",
            ));
        }
        Ok(())
    }

    pub fn strictness_max(&self) -> Option<f64> {
        self.operators
            .iter()
            .filter_map(|o| o.claims.strictness)
            .reduce(f64::max)
    }

    pub fn strictness_min(&self) -> Option<f64> {
        self.operators
            .iter()
            .filter_map(|o| o.claims.strictness)
            .reduce(f64::min)
    }

    pub fn constants(&self) -> Vec<OperatorConstants> {
        self.operators.iter().map(|o| o.constants()).collect()
    }

    /// `T = sum_i lambda_i T_i`
    pub fn combined(&self) -> Result<Operator> {
        convex_combination(self.operators.clone(), self.weights.clone())
    }

    /// Declared common fixed set, falling back to the computed intersection.
    pub fn common_fixed_set(&self) -> Option<AffineSubspace> {
        if let Some(fs) = &self.fixed_set {
            return Some(fs.clone());
        }
        intersect_all(self.operators.iter().map(|o| o.fixed_set(self.dim())))
            .ok()
            .flatten()
    }

    /// Small Hilbert instance: `T1 = diag(1, 0)`, `T2 = diag(1, -0.5)` with
    /// equal weights, `G = I`, `f(x) = 0.1 x + (1, 1)`. Both maps fix the
    /// x-axis. The declared strictness 0.5 sits below the closed-form bounds
    /// 1 and 2/3.
    pub fn canonical() -> Self {
        let space = SpaceSpec::hilbert(2);
        let axis =
            AffineSubspace::new(Vector(vec![0.0, 0.0]), vec![Vector(vec![1.0, 0.0])]).unwrap();
        let t1 = Operator::diagonal(vec![1.0, 0.0], Vector::zeros(2))
            .and_then(|o| o.with_strictness(0.5))
            .unwrap()
            .with_fixed_set(axis.clone());
        let t2 = Operator::diagonal(vec![1.0, -0.5], Vector::zeros(2))
            .and_then(|o| o.with_strictness(0.5))
            .unwrap()
            .with_fixed_set(axis.clone());
        let f = Operator::diagonal(vec![0.1, 0.1], Vector(vec![1.0, 1.0]))
            .and_then(|o| o.with_contraction(0.1))
            .unwrap();
        let g = Operator::scaled_identity(1.0)
            .and_then(|o| o.with_accretive(1.0))
            .and_then(|o| o.with_lipschitz(1.0))
            .unwrap();
        Self {
            space,
            operators: vec![t1, t2],
            weights: vec![0.5, 0.5],
            contraction: f,
            accretive: g,
            fixed_set: Some(axis),
        }
    }
}

/// Shape of the generated pseudocontractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `T x = D (x - c) + c` with diagonal `D`; fixes a coordinate-aligned
    /// affine subspace through `c`.
    Coordinate,
    /// `T x = x - s (I - P)(x - c)` with `P` the averaging projection onto
    /// `span(w)`, `w` a sign vector; fixes the line `c + span(w)`.
    Line,
}

/// Knobs of the random problem generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorKnobs {
    /// Defaults to `line` when `p > 2` and `coordinate` otherwise: in `l_p`
    /// with `p > 2` a coordinate-aligned fixed set drives the strictness
    /// constant to zero.
    pub family: Option<Family>,
    /// Dimension of the shared fixed subspace; default `max(1, dim / 2)`.
    pub fixed_dim: Option<usize>,
    /// Range of the non-unit eigenvalues of each `T_i`.
    pub eigen_low: f64,
    pub eigen_high: f64,
    /// Chance that a coordinate outside the shared subspace is also fixed
    /// by one particular operator (never by all of them).
    pub extra_fixed_prob: f64,
    /// Range of the step `s` of the line family.
    pub line_step_low: f64,
    pub line_step_high: f64,
    /// Upper cap on declared strictness constants.
    pub strictness_cap: f64,
    /// Contraction coefficient of `f`.
    pub contraction_beta: f64,
    pub offset_scale: f64,
    pub anchor_scale: f64,
    /// Spectrum of the SPD accretive operator (Hilbert case).
    pub accretive_low: f64,
    pub accretive_high: f64,
    /// `c` of `G = c I` outside the Hilbert case.
    pub accretive_scale: f64,
    /// Samples used to estimate strictness where no closed form exists.
    pub strictness_samples: usize,
}

impl Default for GeneratorKnobs {
    fn default() -> Self {
        Self {
            family: None,
            fixed_dim: None,
            eigen_low: -0.9,
            eigen_high: 0.9,
            extra_fixed_prob: 0.25,
            line_step_low: 0.5,
            line_step_high: 1.5,
            strictness_cap: 0.6,
            contraction_beta: 0.5,
            offset_scale: 1.0,
            anchor_scale: 1.0,
            accretive_low: 0.5,
            accretive_high: 2.0,
            accretive_scale: 1.0,
            strictness_samples: 20_000,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Sampled lower envelope of `<(I - T)h, j_q(h)> / ||(I - T)h||^q`, halved,
/// for a linear `I - T` given by `resid`. This is an empirical claim that
/// the certifier then tests on independent samples.
fn estimate_strictness(
    resid: impl Fn(&[f64]) -> Vec<f64>,
    s: &SpaceSpec,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let h = gaussian(rng, s.dim);
        let r = resid(&h);
        let rn = space::norm_unchecked(&r, s);
        if rn < 1e-8 * space::norm_unchecked(&h, s) {
            continue;
        }
        let j = space::duality_map_unchecked(&h, s);
        worst = worst.min(space::pair_unchecked(&r, &j) / rn.powf(s.q));
    }
    0.5 * worst
}

fn unit(dim: usize, i: usize) -> Vector {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    Vector(e)
}

/// Coordinate family; returns the operators and the common fixed set.
fn coordinate_family(
    dim: usize,
    n_ops: usize,
    s: &SpaceSpec,
    knobs: &GeneratorKnobs,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Operator>, AffineSubspace)> {
    let fixed_dim = knobs.fixed_dim.unwrap_or((dim / 2).max(1));
    if fixed_dim == 0 || fixed_dim >= dim {
        return infeasible(format!("fixed_dim = {fixed_dim} must lie in [1, dim - 1]"));
    }
    let mut coords: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        let j = rng.random_range(0..=i);
        coords.swap(i, j);
    }
    let mut shared = vec![false; dim];
    for &c in &coords[..fixed_dim] {
        shared[c] = true;
    }
    let mut anchor = vec![0.0; dim];
    for i in 0..dim {
        if !shared[i] {
            anchor[i] = knobs.anchor_scale * rng.random_range(-1.0..=1.0);
        }
    }
    let anchor = Vector(anchor);
    let basis = (0..dim)
        .filter(|i| shared[*i])
        .map(|i| unit(dim, i))
        .collect();
    let common = AffineSubspace::new(anchor.clone(), basis)?;

    let mut diags = vec![vec![1.0; dim]; n_ops];
    for i in 0..dim {
        if shared[i] {
            continue;
        }
        // One operator always moves this coordinate so the intersection is
        // exactly the shared subspace.
        let mover = rng.random_range(0..n_ops);
        for (t, d) in diags.iter_mut().enumerate() {
            let extra = n_ops > 1 && t != mover && rng.random_bool(knobs.extra_fixed_prob);
            let eig = rng.random_range(knobs.eigen_low..=knobs.eigen_high);
            d[i] = if extra { 1.0 } else { eig };
        }
    }

    let mut operators = Vec::with_capacity(n_ops);
    for d in diags {
        // T x = D (x - c) + c fixes c + span{e_i : d_i = 1}.
        let offset = Vector(
            d.iter()
                .zip(&anchor.0)
                .map(|(d, c)| (1.0 - d) * c)
                .collect(),
        );
        let k = if s.p <= 2.0 && s.q == s.p {
            // Per coordinate (1 - a) |h|^p >= k |1 - a|^p |h|^p.
            d.iter()
                .filter(|a| **a != 1.0)
                .map(|a| (1.0 - a).powf(1.0 - s.p))
                .fold(f64::INFINITY, f64::min)
        } else {
            let resid = |h: &[f64]| h.iter().zip(&d).map(|(h, a)| (1.0 - a) * h).collect();
            estimate_strictness(resid, s, knobs.strictness_samples, rng)
        };
        let k = k.min(knobs.strictness_cap);
        if !(k > 0.0) {
            return infeasible("could not certify a positive strictness constant".into());
        }
        let basis = (0..dim)
            .filter(|i| d[*i] == 1.0)
            .map(|i| unit(dim, i))
            .collect();
        let fixed = AffineSubspace::new(anchor.clone(), basis)?;
        operators.push(
            Operator::diagonal(d, offset)?
                .with_strictness(k)?
                .with_fixed_set(fixed),
        );
    }
    Ok((operators, common))
}

/// Line family; returns the operators and the common fixed line.
fn line_family(
    dim: usize,
    n_ops: usize,
    s: &SpaceSpec,
    knobs: &GeneratorKnobs,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Operator>, AffineSubspace)> {
    let (lo, hi) = (knobs.line_step_low, knobs.line_step_high);
    if !(lo > 0.0 && lo <= hi && hi < 2.0) {
        return infeasible("line steps must lie in (0, 2)".into());
    }
    let w: Vec<f64> = (0..dim)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let anchor = Vector(
        (0..dim)
            .map(|_| knobs.anchor_scale * rng.random_range(-1.0..=1.0))
            .collect(),
    );
    let common = AffineSubspace::new(anchor.clone(), vec![Vector(w.clone())])?;
    // Q = I - w w^T / n annihilates w and is a projection.
    let n = dim as f64;
    let q_mat = DMatrix::from_fn(
        dim,
        dim,
        |i, j| if i == j { 1.0 } else { 0.0 } - w[i] * w[j] / n,
    );
    let apply_q = |h: &[f64]| -> Vec<f64> {
        let m: f64 = h.iter().zip(&w).map(|(h, w)| h * w).sum::<f64>() / n;
        h.iter().zip(&w).map(|(h, w)| h - m * w).collect()
    };
    // <s Q h, j(h)> >= k s^q ||Q h||^q, so k = kappa s^{1-q}.
    let kappa = estimate_strictness(apply_q, s, knobs.strictness_samples, rng);
    if !(kappa > 0.0) {
        return infeasible("could not certify a positive strictness constant".into());
    }
    let qc = &q_mat * DVector::from_column_slice(&anchor.0);
    let mut operators = Vec::with_capacity(n_ops);
    for _ in 0..n_ops {
        let step = rng.random_range(lo..=hi);
        let m = DMatrix::identity(dim, dim) - &q_mat * step;
        let offset = Vector(qc.iter().map(|c| step * c).collect());
        let k = (kappa * step.powf(1.0 - s.q)).min(knobs.strictness_cap);
        operators.push(
            Operator::affine(m, offset)?
                .with_strictness(k)?
                .with_fixed_set(common.clone()),
        );
    }
    Ok((operators, common))
}

fn infeasible<T>(m: String) -> Result<T> {
    Err(Error::InvalidOperator(format!(
        "infeasible generator knobs: {m}"
    )))
}

/// Random instance with `n_ops` affine strict pseudocontractions sharing a
/// fixed affine subspace, either coordinate-aligned or a line, per
/// `knobs.family`. Deterministic per seed.
pub fn generate_problem(
    seed: u64,
    dim: usize,
    n_ops: usize,
    s: &SpaceSpec,
    knobs: &GeneratorKnobs,
) -> Result<ProblemInstance> {
    if dim < 2 || n_ops < 1 {
        return infeasible(format!(
            "need dim >= 2 and at least one operator, got dim = {dim}, N = {n_ops}"
        ));
    }
    if s.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: s.dim,
            found: dim,
        });
    }
    if !(knobs.eigen_low > -1.0 && knobs.eigen_low <= knobs.eigen_high && knobs.eigen_high < 1.0) {
        return infeasible("eigenvalues must lie in (-1, 1)".into());
    }
    if !(knobs.contraction_beta > 0.0 && knobs.contraction_beta < 1.0) {
        return infeasible("contraction_beta must lie in (0, 1)".into());
    }
    if !(knobs.strictness_cap > 0.0 && knobs.strictness_cap < 1.0) {
        return infeasible("strictness_cap must lie in (0, 1)".into());
    }
    if !(knobs.accretive_low > 0.0
        && knobs.accretive_low <= knobs.accretive_high
        && knobs.accretive_scale > 0.0)
    {
        return infeasible("accretive spectrum must be positive".into());
    }
    if !(0.0..=1.0).contains(&knobs.extra_fixed_prob) {
        return infeasible("extra_fixed_prob must lie in [0, 1]".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = knobs.family.unwrap_or(if s.p > 2.0 {
        Family::Line
    } else {
        Family::Coordinate
    });
    let (operators, common) = match family {
        Family::Coordinate => coordinate_family(dim, n_ops, s, knobs, &mut rng)?,
        Family::Line => line_family(dim, n_ops, s, knobs, &mut rng)?,
    };

    let raw: Vec<f64> = (0..n_ops).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..n_ops - 1].iter().sum();
    weights[n_ops - 1] = 1.0 - head;

    let beta = knobs.contraction_beta;
    let mut fd: Vec<f64> = (0..dim).map(|_| rng.random_range(-beta..=beta)).collect();
    let tight = rng.random_range(0..dim);
    fd[tight] = beta;
    let fb = Vector(
        (0..dim)
            .map(|_| knobs.offset_scale * rng.random_range(-1.0..=1.0))
            .collect(),
    );
    let contraction = Operator::diagonal(fd, fb)?.with_contraction(beta)?;

    let accretive = if s.is_hilbert() {
        let (lo, hi) = (knobs.accretive_low, knobs.accretive_high);
        let mut eig: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
        eig[0] = lo;
        if dim > 1 {
            eig[1] = hi;
        }
        let raw = DMatrix::from_vec(dim, dim, gaussian(&mut rng, dim * dim));
        let q = raw.qr().q();
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        Operator::affine(a, Vector::zeros(dim))?
            .with_accretive(lo)?
            .with_lipschitz(hi)?
    } else {
        let c = knobs.accretive_scale;
        Operator::scaled_identity(c)?
            .with_accretive(c)?
            .with_lipschitz(c)?
    };

    Ok(ProblemInstance {
        space: *s,
        operators,
        weights,
        contraction,
        accretive,
        fixed_set: Some(common),
    })
}
