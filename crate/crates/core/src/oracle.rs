//! Reference solutions of the variational inequality
//! `<(gamma f - mu G) x*, j_q(x - x*)> <= 0` for all `x` in the common fixed
//! set, used to validate iteration limits.
//!
//! The Hilbert solvers need the fixed set as an affine subspace. In `l_p`
//! with `p != 2` the only check is [`vi_residual`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::ProblemInstance;
use crate::params::Gains;
use crate::space::{self, Vector};
use crate::subspace::AffineSubspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    AffineDirect,
    ProjectedIteration,
    LongRunReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x_star: Vector,
    pub method: OracleMethod,
    /// Max VI residual over the probe set.
    pub vi_residual: f64,
    /// Euclidean distance of `x_star` to the declared fixed set.
    pub fixed_set_distance: f64,
    /// Iterations used (zero for direct solves).
    pub iterations: usize,
}

pub const PROBE_SEED: u64 = 0x5eed;
pub const PROBE_COUNT: usize = 1000;

/// Probe points on `fs`: the anchor, the anchor moved by `+-0.1` and `+-1`
/// along each basis direction, then random standard-normal combinations up
/// to `count` points in total.
pub fn fixed_set_probes(fs: &AffineSubspace, count: usize, seed: u64) -> Vec<Vector> {
    let mut probes = vec![fs.anchor.clone()];
    for b in &fs.basis {
        for m in [0.1, 1.0, -0.1, -1.0] {
            probes.push(fs.anchor.axpy(m, b));
        }
    }
    if fs.dim() == 0 {
        probes.truncate(count.max(1));
        return probes;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while probes.len() < count {
        let c: Vec<f64> = (0..fs.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        probes.push(fs.at(&c));
    }
    probes.truncate(count.max(1));
    probes
}

fn vi_operator(problem: &ProblemInstance, gains: &Gains, x: &[f64]) -> Vec<f64> {
    let fx = problem.contraction.eval(x);
    let gx = problem.accretive.eval(x);
    fx.iter()
        .zip(&gx)
        .map(|(f, g)| gains.gamma * f - gains.mu * g)
        .collect()
}

/// `max_z <(gamma f - mu G) x_hat, j_q(z - x_hat)>` over `probes`.
pub fn vi_residual(
    x_hat: &Vector,
    problem: &ProblemInstance,
    gains: &Gains,
    probes: &[Vector],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Precondition("empty probe set".into()));
    }
    let s = &problem.space;
    s.check(&x_hat.0)?;
    if let Some(fs) = problem.common_fixed_set() {
        for z in probes {
            s.check(&z.0)?;
            if !fs.contains(z, 1e-8) {
                return Err(Error::Precondition(
                    "probe outside the common fixed set".into(),
                ));
            }
        }
    }
    let r = vi_operator(problem, gains, &x_hat.0);
    Ok(probes
        .iter()
        .map(|z| {
            let d = z.sub(x_hat);
            space::pair_unchecked(&r, &space::duality_map_unchecked(&d.0, s))
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

fn require_hilbert(problem: &ProblemInstance) -> Result<AffineSubspace> {
    if !problem.space.is_hilbert() {
        return Err(Error::Precondition(
            "reference solvers need a Hilbert space (p = q = 2)".into(),
        ));
    }
    problem.common_fixed_set().ok_or_else(|| {
        Error::Precondition("the common fixed set is empty or not an affine subspace".into())
    })
}

fn finish(
    problem: &ProblemInstance,
    gains: &Gains,
    fs: &AffineSubspace,
    x: Vector,
    method: OracleMethod,
    iterations: usize,
) -> Result<OracleResult> {
    let probes = fixed_set_probes(fs, PROBE_COUNT, PROBE_SEED);
    let vi = vi_residual(&x, problem, gains, &probes)?;
    Ok(OracleResult {
        fixed_set_distance: fs.euclidean_distance(&x),
        vi_residual: vi,
        x_star: x,
        method,
        iterations,
    })
}

/// Solves `V^T (mu G - gamma f)(anchor + V c) = 0` for the fixed set
/// `anchor + span(V)`.
pub fn solve_vi_affine(problem: &ProblemInstance, gains: &Gains) -> Result<OracleResult> {
    let fs = require_hilbert(problem)?;
    let n = problem.dim();
    let (mg, cg) = problem.accretive.affine_parts(n);
    let (mf, cf) = problem.contraction.affine_parts(n);
    let b = &mg * gains.mu - &mf * gains.gamma;
    let c = &cg * gains.mu - &cf * gains.gamma;
    let k = fs.dim();
    let a = DVector::from_column_slice(&fs.anchor.0);
    let x = if k == 0 {
        a
    } else {
        let v = DMatrix::from_fn(n, k, |i, j| fs.basis[j].0[i]);
        let reduced = v.transpose() * &b * &v;
        let rhs = -(v.transpose() * (&b * &a + &c));
        let coef = reduced
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("reduced {k}x{k} stationarity system")))?;
        let smin = reduced.singular_values().min();
        if !(smin > 1e-13 * reduced.norm().max(1.0)) {
            return Err(Error::Singular(format!(
                "reduced system has smallest singular value {smin:e}"
            )));
        }
        a + v * coef
    };
    finish(
        problem,
        gains,
        &fs,
        Vector(x.as_slice().to_vec()),
        OracleMethod::AffineDirect,
        0,
    )
}

/// Projected iteration `x <- P_F(x - s (mu G - gamma f) x)` with
/// `s = (tau - gamma beta) / (mu L + gamma beta)^2`, started at `x0` (or the
/// anchor of the fixed set) and stopped once a step is at most `tol * s`.
pub fn solve_vi_projected(
    problem: &ProblemInstance,
    gains: &Gains,
    tol: f64,
    x0: Option<&Vector>,
    max_iter: usize,
) -> Result<OracleResult> {
    let fs = require_hilbert(problem)?;
    let gap = gains.gap();
    let lip = gains.mu * gains.lipschitz + gains.gamma * gains.beta;
    if !(gap > 0.0 && lip > 0.0) {
        return Err(Error::Precondition(format!(
            "no admissible step size: tau - gamma beta = {gap}, mu L + gamma beta = {lip}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let step = gap / (lip * lip);
    let mut x = fs.project(x0.unwrap_or(&fs.anchor));
    for it in 0..max_iter {
        let r = vi_operator(problem, gains, &x.0);
        let moved = Vector(x.0.iter().zip(&r).map(|(x, r)| x + step * r).collect());
        let next = fs.project(&moved);
        if !next.is_finite() {
            return Err(Error::NonFinite("projected iteration"));
        }
        let dx = next.sub(&x).0.iter().map(|c| c * c).sum::<f64>().sqrt();
        x = next;
        if dx <= tol * step {
            return finish(
                problem,
                gains,
                &fs,
                x,
                OracleMethod::ProjectedIteration,
                it + 1,
            );
        }
    }
    Err(Error::IterationCap(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_problem, GeneratorKnobs, Operator};
    use crate::space::SpaceSpec;

    fn canonical_gains() -> Gains {
        Gains::new(1.0, 1.0, 0.1, 1.0, 1.0, 2.0, 1.0)
    }

    fn dist(a: &Vector, b: &Vector) -> f64 {
        a.sub(b).0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    #[test]
    fn canonical_affine_solution() {
        // on the axis the first component of (gamma f - mu G) x vanishes: 1 - 0.9 x = 0
        let p = ProblemInstance::canonical();
        let r = solve_vi_affine(&p, &canonical_gains()).unwrap();
        assert!(dist(&r.x_star, &Vector(vec![10.0 / 9.0, 0.0])) < 1e-14);
        assert!(r.vi_residual <= 1e-9);
        assert!(r.fixed_set_distance <= 1e-10);
    }

    #[test]
    fn zero_gamma_projects_origin() {
        let p = ProblemInstance::canonical();
        let g = Gains::new(1.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        let r = solve_vi_affine(&p, &g).unwrap();
        assert!(dist(&r.x_star, &Vector(vec![0.0, 0.0])) < 1e-15);
        let r = solve_vi_projected(&p, &g, 1e-12, None, 100_000).unwrap();
        assert!(dist(&r.x_star, &Vector(vec![0.0, 0.0])) < 1e-12);
    }

    #[test]
    fn whole_space_constant_f() {
        let mut p = ProblemInstance::canonical();
        p.operators = vec![Operator::identity(2).with_strictness(0.5).unwrap()];
        p.weights = vec![1.0];
        p.fixed_set = Some(AffineSubspace::whole_space(2));
        p.contraction = Operator::diagonal(vec![0.0, 0.0], Vector(vec![2.0, -3.0]))
            .unwrap()
            .with_contraction(0.01)
            .unwrap();
        let r = solve_vi_affine(&p, &Gains::new(1.0, 1.0, 0.01, 1.0, 1.0, 2.0, 1.0)).unwrap();
        assert!(dist(&r.x_star, &Vector(vec![2.0, -3.0])) < 1e-14);
    }

    #[test]
    fn projected_matches_direct() {
        let p = ProblemInstance::canonical();
        let r = solve_vi_projected(&p, &canonical_gains(), 1e-12, None, 1_000_000).unwrap();
        assert!(dist(&r.x_star, &Vector(vec![10.0 / 9.0, 0.0])) < 1e-11);
        let again = solve_vi_projected(&p, &canonical_gains(), 1e-12, Some(&r.x_star), 10).unwrap();
        assert_eq!(again.iterations, 1);
    }

    #[test]
    fn projected_rejects_infeasible_step() {
        let p = ProblemInstance::canonical();
        let g = Gains::new(1.0, 10.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        assert!(matches!(
            solve_vi_projected(&p, &g, 1e-10, None, 10),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lp_space_is_rejected_by_direct_solvers() {
        let s = SpaceSpec::lp_default(3, 3.0).unwrap();
        let p = generate_problem(1, 3, 2, &s, &GeneratorKnobs::default()).unwrap();
        let g = Gains::auto(0.5, 1.0, 1.0, 2.0, 2.0).unwrap();
        assert!(solve_vi_affine(&p, &g).is_err());
    }

    #[test]
    fn residual_examples() {
        let p = ProblemInstance::canonical();
        let g = canonical_gains();
        let xs = Vector(vec![10.0 / 9.0, 0.0]);
        let fs = p.fixed_set.clone().unwrap();
        let probes = fixed_set_probes(&fs, PROBE_COUNT, PROBE_SEED);
        assert!(vi_residual(&xs, &p, &g, &probes).unwrap() <= 1e-9);
        assert!(vi_residual(&Vector(vec![10.0 / 9.0 + 1.0, 0.0]), &p, &g, &probes).unwrap() > 0.0);
        assert_eq!(
            vi_residual(&xs, &p, &g, std::slice::from_ref(&xs)).unwrap(),
            0.0
        );
        assert!(vi_residual(&xs, &p, &g, &[]).is_err());
        assert!(vi_residual(&xs, &p, &g, &[Vector(vec![0.0, 1.0])]).is_err());
    }

    #[test]
    fn generated_problems_agree_across_methods() {
        for seed in 0..20u64 {
            let dim = 2 + (seed as usize * 7) % 15;
            let s = SpaceSpec::hilbert(dim);
            let p = generate_problem(
                seed,
                dim,
                1 + seed as usize % 4,
                &s,
                &GeneratorKnobs::default(),
            )
            .unwrap();
            let g = Gains::auto(
                0.5,
                p.accretive.claims.accretive.unwrap(),
                p.accretive.claims.lipschitz.unwrap(),
                2.0,
                1.0,
            )
            .unwrap();
            let direct = solve_vi_affine(&p, &g).unwrap();
            let proj = solve_vi_projected(&p, &g, 1e-13, None, 10_000_000).unwrap();
            assert!(dist(&direct.x_star, &proj.x_star) <= 1e-9, "seed {seed}");
            assert!(
                direct.vi_residual <= 1e-8,
                "seed {seed}: {}",
                direct.vi_residual
            );
            // perturbing along the fixed set exposes a violated direction
            let fs = p.fixed_set.clone().unwrap();
            let probes = fixed_set_probes(&fs, PROBE_COUNT, PROBE_SEED);
            for delta in [1e-2, 1e-1] {
                let moved = direct.x_star.axpy(delta, &fs.basis[0]);
                let r = vi_residual(&moved, &p, &g, &probes).unwrap();
                assert!(r > direct.vi_residual, "seed {seed} delta {delta}");
            }
        }
    }
}
