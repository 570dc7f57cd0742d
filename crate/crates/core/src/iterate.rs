//! The synchronal and cyclic hybrid steepest-descent iterations
//!
//! ```text
//! synchronal: x_{n+1} = a_n g f(x_n) + (I - a_n m G) (b_n x_n + (1 - b_n) sum_i w_i T_i x_n)
//! cyclic:     x_{n+1} = a_n g f(x_n) + (I - a_n m G) (b_n x_n + (1 - b_n) T_{n mod N} x_n)
//! ```
//!
//! plus the implicit regularization path and the classical special cases as
//! presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{averaged, Operator, OperatorKind, ProblemInstance};
use crate::params::{
    validate_gains, validate_schedule, Gains, GainsReport, Mode, Schedule, ScheduleReport,
};
use crate::space::{self, SpaceSpec, Vector};

/// Horizon over which schedule range conditions are checked.
pub const SCHEDULE_HORIZON: usize = 100_000;

/// Classical special cases, all in Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Synchronal scheme with `q = 2`, `d_q = 1`.
    HilbertSynchronal,
    /// Cyclic scheme with `q = 2`, `d_q = 1`.
    HilbertCyclic,
    /// One nonexpansive map (the averaged combination), `beta_n = 0`,
    /// `mu = 1`.
    SingleViscosity,
    /// As [`Preset::SingleViscosity`] with `G` linear, symmetric positive
    /// definite.
    SingleLinear,
    /// Steepest descent `x_{n+1} = T x_n - mu a_n G(T x_n)`: `gamma = 0`,
    /// one averaged map, `beta_n = 0`.
    SteepestDescent,
    /// Cyclic steepest descent: `gamma = 0` on the cyclic scheme.
    CyclicSteepestDescent,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::HilbertSynchronal,
        Preset::HilbertCyclic,
        Preset::SingleViscosity,
        Preset::SingleLinear,
        Preset::SteepestDescent,
        Preset::CyclicSteepestDescent,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Preset::HilbertSynchronal => "hilbert-synchronal",
            Preset::HilbertCyclic => "hilbert-cyclic",
            Preset::SingleViscosity => "single-viscosity",
            Preset::SingleLinear => "single-linear",
            Preset::SteepestDescent => "steepest-descent",
            Preset::CyclicSteepestDescent => "cyclic-steepest-descent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.id() == s).ok_or_else(|| {
            Error::Precondition(format!(
                "unknown preset '{s}'; expected one of {}",
                Self::ALL.map(|p| p.id()).join(", ")
            ))
        })
    }

    pub fn mode(&self) -> Mode {
        match self {
            Preset::HilbertCyclic | Preset::CyclicSteepestDescent => Mode::Cyclic,
            _ => Mode::Synchronal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stopping {
    pub max_iter: usize,
    /// Bound on `||x_n - x_{n-1}||`.
    pub step_tol: f64,
    /// Bound on the fixed-point residual (window residual in cyclic mode).
    pub residual_tol: f64,
}

impl Default for Stopping {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            step_tol: 1e-10,
            residual_tol: 1e-6,
        }
    }
}

/// Oracle data evaluated on trace rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reference {
    pub x_star: Option<Vector>,
    /// Points of the common fixed set for the VI residual.
    pub probes: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub mode: Mode,
    pub preset: Option<Preset>,
    pub problem: ProblemInstance,
    pub gains: Gains,
    pub alpha: Schedule,
    pub beta: Schedule,
    pub x0: Vector,
    pub stopping: Stopping,
    /// Trace row spacing.
    pub cadence: usize,
    pub record_iterates: bool,
    /// Run even when gains or schedules fail validation.
    pub override_validation: bool,
    pub reference: Option<Reference>,
}

impl AlgorithmConfig {
    pub fn new(
        problem: ProblemInstance,
        gains: Gains,
        alpha: Schedule,
        beta: Schedule,
        x0: Vector,
        mode: Mode,
    ) -> Self {
        Self {
            mode,
            preset: None,
            problem,
            gains,
            alpha,
            beta,
            x0,
            stopping: Stopping::default(),
            cadence: 1,
            record_iterates: false,
            override_validation: false,
            reference: None,
        }
    }

    /// The small Hilbert example: canonical problem, `mu = gamma = 1`,
    /// `alpha_n = 1/(n+1)`, `beta_n = 0.5`, `x0 = (5, 5)`.
    pub fn canonical(mode: Mode) -> Self {
        let problem = ProblemInstance::canonical();
        let gains = Gains::new(1.0, 1.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        Self::new(
            problem,
            gains,
            Schedule::harmonic(),
            Schedule::Constant { b: 0.5 },
            Vector(vec![5.0, 5.0]),
            mode,
        )
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.problem.space
    }

    pub fn check(&self) -> Result<()> {
        self.problem.validate()?;
        self.space().check(&self.x0.0)?;
        let st = &self.stopping;
        if st.max_iter == 0 || !(st.step_tol > 0.0) || !(st.residual_tol > 0.0) {
            return Err(Error::Precondition(
                "stopping thresholds must be positive".into(),
            ));
        }
        if self.cadence == 0 {
            return Err(Error::Precondition(
                "trace cadence must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> ValidationReport {
        let gains = validate_gains(&self.gains);
        let schedule = validate_schedule(
            &self.alpha,
            &self.beta,
            self.mode,
            &self.problem.constants(),
            self.space().q,
            self.space().d_q,
            SCHEDULE_HORIZON.min(self.stopping.max_iter.max(1)),
        );
        let mut consistency = Vec::new();
        let claims_f = self.problem.contraction.claims.contraction;
        let claims_g = (
            self.problem.accretive.claims.accretive,
            self.problem.accretive.claims.lipschitz,
        );
        if claims_f.is_some_and(|b| b > self.gains.beta) {
            consistency.push(format!(
                "gains use beta = {} below the contraction coefficient of f ({})",
                self.gains.beta,
                claims_f.unwrap()
            ));
        }
        if let (Some(eta), Some(l)) = claims_g {
            if self.gains.eta > eta || self.gains.lipschitz < l {
                consistency.push(format!(
                    "gains use eta = {}, L = {} but G claims eta = {eta}, L = {l}",
                    self.gains.eta, self.gains.lipschitz
                ));
            }
        }
        if self.gains.q != self.space().q || self.gains.d_q != self.space().d_q {
            consistency.push("gains and space disagree on q or d_q".into());
        }
        let passed = gains.passed && schedule.passed && consistency.is_empty();
        ValidationReport {
            passed,
            gains,
            schedule,
            consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub gains: GainsReport,
    pub schedule: ScheduleReport,
    pub consistency: Vec<String>,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = self.gains.failures();
        out.extend(self.schedule.failures.iter().cloned());
        out.extend(self.consistency.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIter,
    Diverged,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIter => "max_iter",
            TerminalStatus::Diverged => "diverged",
        }
    }
}

/// One trace row describing `x_n`. `alpha`/`beta` are the (clamped) values
/// used to produce `x_{n+1}`; on the final row they are the values that
/// would be used next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub x: Option<Vector>,
    /// `||x_n - x_{n-1}||`, absent at `n = 0`.
    pub step_norm: Option<f64>,
    /// `||x_n - T x_n||` with `T` the weighted combination.
    pub fixpoint_residual: f64,
    /// Cyclic mode: `||x_n - A_{n+N-1} ... A_n x_n||`.
    pub window_residual: Option<f64>,
    /// Boundedness slack, minimized over reference fixed points.
    pub bound_slack: Option<f64>,
    pub vi_residual: Option<f64>,
    pub dist_to_oracle: Option<f64>,
}

/// Trace check of
/// `||x_{n+L+1} - x_{n+1}|| <= (1 - a_{n+L} gap) ||x_{n+L} - x_n|| + M (|da| + |db|)`
/// with lag `L = 1` (synchronal) or `L = N` (cyclic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepContractionCheck {
    pub lag: usize,
    /// Run-computed bound on the variation coefficient.
    pub m_bound: f64,
    /// Smallest `M` that makes every checked step satisfy the inequality.
    pub m_required: f64,
    /// Largest excess over the contraction term at zero parameter variation.
    pub zero_variation_excess: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub mode: Mode,
    pub records: Vec<TraceRecord>,
    pub status: TerminalStatus,
    /// Index of the final iterate.
    pub iterations: usize,
    pub final_x: Vector,
    /// Number of steps where `alpha_n` was clamped to `min{1, 1/tau}`.
    pub alpha_clamped: usize,
    pub min_bound_slack: Option<f64>,
    pub min_bound_slack_at: Option<usize>,
    pub step_contraction: Option<StepContractionCheck>,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least one record")
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

fn dist(a: &[f64], b: &[f64], s: &SpaceSpec) -> f64 {
    space::norm_unchecked(&sub(a, b), s)
}

struct Engine<'a> {
    cfg: &'a AlgorithmConfig,
    alpha_cap: f64,
    /// `(p, radius)` pairs for the boundedness bound.
    bound_points: Vec<(Vec<f64>, f64)>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a AlgorithmConfig) -> Self {
        let g = &cfg.gains;
        let s = cfg.space();
        let alpha_cap = if g.tau > 0.0 { g.alpha_cap() } else { 1.0 };
        let gap = g.gap();
        let mut points: Vec<Vec<f64>> = Vec::new();
        if let Some(fs) = cfg.problem.common_fixed_set() {
            points.push(fs.anchor.0.clone());
            points.push(fs.project(&cfg.x0).0);
        }
        if let Some(xs) = cfg.reference.as_ref().and_then(|r| r.x_star.clone()) {
            points.push(xs.0);
        }
        let bound_points = if gap > 0.0 {
            points
                .into_iter()
                .map(|p| {
                    let fp = cfg.problem.contraction.eval(&p);
                    let gp = cfg.problem.accretive.eval(&p);
                    let v: Vec<f64> = fp
                        .iter()
                        .zip(&gp)
                        .map(|(f, gq)| g.gamma * f - g.mu * gq)
                        .collect();
                    let r = dist(&cfg.x0.0, &p, s).max(space::norm_unchecked(&v, s) / gap);
                    (p, r)
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            cfg,
            alpha_cap,
            bound_points,
        }
    }

    fn alpha(&self, n: usize) -> (f64, bool) {
        let a = self.cfg.alpha.term(n);
        if a > self.alpha_cap {
            (self.alpha_cap, true)
        } else {
            (a, false)
        }
    }

    fn beta(&self, n: usize) -> f64 {
        self.cfg.beta.term(n)
    }

    /// `sum_i w_i T_i x`
    fn combined(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.cfg.problem;
        let mut acc = vec![0.0; x.len()];
        for (t, w) in p.operators.iter().zip(&p.weights) {
            for (a, v) in acc.iter_mut().zip(t.eval(x)) {
                *a += w * v;
            }
        }
        acc
    }

    fn averaged_single(&self, i: usize, beta: f64, x: &[f64]) -> Vec<f64> {
        let t = self.cfg.problem.operators[i].eval(x);
        x.iter()
            .zip(&t)
            .map(|(x, t)| beta * x + (1.0 - beta) * t)
            .collect()
    }

    /// `a g f(x) + (I - a m G) y`
    fn descent(&self, alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        let g = &self.cfg.gains;
        let fx = self.cfg.problem.contraction.eval(x);
        let gy = self.cfg.problem.accretive.eval(y);
        let (ag, am) = (alpha * g.gamma, alpha * g.mu);
        (0..x.len())
            .map(|i| ag * fx[i] + y[i] - am * gy[i])
            .collect()
    }

    fn window_residual(&self, n: usize, x: &[f64]) -> f64 {
        let n_ops = self.cfg.problem.n_operators();
        let mut z = x.to_vec();
        for k in 0..n_ops {
            z = self.averaged_single((n + k) % n_ops, self.beta(n + k), &z);
        }
        dist(x, &z, self.cfg.space())
    }

    fn bound_slack(&self, x: &[f64]) -> Option<f64> {
        let s = self.cfg.space();
        self.bound_points
            .iter()
            .map(|(p, r)| {
                let d = dist(x, p, s);
                // relative slack, tolerance 1e-9
                (r - d) / r.max(1.0)
            })
            .reduce(f64::min)
    }
}

/// State carried for the step contraction check.
struct StepCheck {
    lag: usize,
    history: std::collections::VecDeque<(Vec<f64>, f64, f64)>,
    gap: f64,
    m1: f64,
    m2: f64,
    m_required: f64,
    zero_excess: f64,
    checked: usize,
}

impl StepCheck {
    fn new(lag: usize, gap: f64) -> Self {
        Self {
            lag,
            history: std::collections::VecDeque::with_capacity(lag + 2),
            gap,
            m1: 0.0,
            m2: 0.0,
            m_required: 0.0,
            zero_excess: f64::NEG_INFINITY,
            checked: 0,
        }
    }

    /// Pushes `(x_n, alpha_n, beta_n)`.
    fn push(&mut self, x: &[f64], alpha: f64, beta: f64, s: &SpaceSpec) {
        self.history.push_back((x.to_vec(), alpha, beta));
        if self.history.len() > self.lag + 2 {
            self.history.pop_front();
        }
        if self.history.len() == self.lag + 2 {
            let (x0, a0, b0) = &self.history[0];
            let (x1, _, _) = &self.history[1];
            let (xl, al, bl) = &self.history[self.lag];
            let (xl1, _, _) = &self.history[self.lag + 1];
            let prev = dist(xl, x0, s);
            let next = dist(xl1, x1, s);
            let contracted = (1.0 - al * self.gap) * prev;
            let excess = next - contracted - 1e-9 * prev.max(next).max(1.0);
            let var = (al - a0).abs() + (bl - b0).abs();
            if var > 0.0 {
                self.m_required = self.m_required.max(excess / var);
            } else {
                self.zero_excess = self.zero_excess.max(excess);
            }
            self.checked += 1;
        }
    }

    fn finish(self) -> StepContractionCheck {
        let m_bound = self.m1.max(self.m2);
        let passed = self.zero_excess <= 0.0 && self.m_required <= m_bound * (1.0 + 1e-9);
        StepContractionCheck {
            lag: self.lag,
            m_bound,
            m_required: self.m_required,
            zero_variation_excess: self.zero_excess.max(0.0),
            checked: self.checked,
            passed,
        }
    }
}

fn ensure_valid(cfg: &AlgorithmConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::Precondition(format!(
            "configuration mode is {:?}, expected {mode:?}",
            cfg.mode
        )));
    }
    cfg.check()?;
    let v = cfg.validate();
    if !v.passed && !cfg.override_validation {
        return Err(Error::Validation(v.failures().join("; ")));
    }
    Ok(())
}

fn run(cfg: &AlgorithmConfig) -> Trace {
    let eng = Engine::new(cfg);
    let s = cfg.space();
    let mode = cfg.mode;
    let n_ops = cfg.problem.n_operators();
    let st = cfg.stopping;
    let reference = cfg.reference.as_ref();
    let lag = if mode == Mode::Cyclic { n_ops } else { 1 };
    let mut check = StepCheck::new(lag, cfg.gains.gap());

    let mut records = Vec::new();
    let mut x = cfg.x0.0.clone();
    let mut step: Option<f64> = None;
    let mut clamped = 0usize;
    let mut min_slack: Option<(f64, usize)> = None;
    let mut n = 0usize;

    let row = |n: usize,
               x: &[f64],
               step: Option<f64>,
               tx: &[f64],
               window: Option<f64>,
               slack: Option<f64>| {
        let (alpha, _) = eng.alpha(n);
        let vi = reference.filter(|r| !r.probes.is_empty()).map(|r| {
            let xv = Vector(x.to_vec());
            crate::oracle::vi_residual(&xv, &cfg.problem, &cfg.gains, &r.probes).unwrap_or(f64::NAN)
        });
        TraceRecord {
            n,
            alpha,
            beta: eng.beta(n),
            x: cfg.record_iterates.then(|| Vector(x.to_vec())),
            step_norm: step,
            fixpoint_residual: dist(x, tx, s),
            window_residual: window,
            bound_slack: slack,
            vi_residual: vi,
            dist_to_oracle: reference
                .and_then(|r| r.x_star.as_ref())
                .map(|xs| dist(x, &xs.0, s)),
        }
    };

    let status = loop {
        let tx = eng.combined(&x);
        let slack = eng.bound_slack(&x);
        if let Some(sl) = slack {
            if min_slack.is_none_or(|(m, _)| sl < m) {
                min_slack = Some((sl, n));
            }
        }
        let fp_res = dist(&x, &tx, s);
        let window = |x: &[f64]| (mode == Mode::Cyclic).then(|| eng.window_residual(n, x));
        let due = n.is_multiple_of(cfg.cadence);

        // stopping test on x_n
        let step_ok = step.is_some_and(|d| d <= st.step_tol);
        let mut win = None;
        let converged = step_ok && {
            let r = match mode {
                Mode::Synchronal => fp_res,
                Mode::Cyclic => {
                    win = window(&x);
                    win.unwrap()
                }
            };
            r <= st.residual_tol
        };
        if converged || n >= st.max_iter {
            let win = win.or_else(|| window(&x));
            records.push(row(n, &x, step, &tx, win, slack));
            break if converged {
                TerminalStatus::Converged
            } else {
                TerminalStatus::MaxIter
            };
        }
        if due {
            let win = win.or_else(|| window(&x));
            records.push(row(n, &x, step, &tx, win, slack));
        }

        let (alpha, was_clamped) = eng.alpha(n);
        clamped += usize::from(was_clamped);
        let beta = eng.beta(n);
        let y = match mode {
            Mode::Synchronal => x
                .iter()
                .zip(&tx)
                .map(|(x, t)| beta * x + (1.0 - beta) * t)
                .collect::<Vec<_>>(),
            Mode::Cyclic => eng.averaged_single(n % n_ops, beta, &x),
        };
        let next = eng.descent(alpha, &x, &y);

        // variation coefficients for the step contraction check
        let fx = cfg.problem.contraction.eval(&x);
        let gy = cfg.problem.accretive.eval(&y);
        let v: Vec<f64> = fx
            .iter()
            .zip(&gy)
            .map(|(f, g)| cfg.gains.gamma * f - cfg.gains.mu * g)
            .collect();
        check.m1 = check.m1.max(space::norm_unchecked(&v, s));
        check.m2 = check.m2.max(match mode {
            Mode::Synchronal => fp_res,
            Mode::Cyclic => dist(&x, &cfg.problem.operators[n % n_ops].eval(&x), s),
        });
        check.push(&x, alpha, beta, s);

        let next_step = dist(&next, &x, s);
        if !next_step.is_finite() || next.iter().any(|c| !c.is_finite()) {
            if !due {
                let win = window(&x);
                records.push(row(n, &x, step, &tx, win, slack));
            }
            break TerminalStatus::Diverged;
        }
        step = Some(next_step);
        x = next;
        n += 1;
    };

    Trace {
        mode,
        records,
        status,
        iterations: n,
        final_x: Vector(x),
        alpha_clamped: clamped,
        min_bound_slack: min_slack.map(|(m, _)| m),
        min_bound_slack_at: min_slack.map(|(_, i)| i),
        step_contraction: Some(check.finish()),
    }
}

pub fn run_synchronal(cfg: &AlgorithmConfig) -> Result<Trace> {
    ensure_valid(cfg, Mode::Synchronal)?;
    Ok(run(cfg))
}

pub fn run_cyclic(cfg: &AlgorithmConfig) -> Result<Trace> {
    ensure_valid(cfg, Mode::Cyclic)?;
    Ok(run(cfg))
}

/// Dispatches on `cfg.mode`.
pub fn run_config(cfg: &AlgorithmConfig) -> Result<Trace> {
    match cfg.mode {
        Mode::Synchronal => run_synchronal(cfg),
        Mode::Cyclic => run_cyclic(cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: Vector,
    pub inner_iterations: usize,
    pub residual: f64,
    /// Theoretical contraction factor `1 - t (tau - gamma beta)`.
    pub factor: f64,
    /// Largest ratio of successive inner residuals.
    pub observed_rate: f64,
}

/// The averaged combination `b I + (1 - b) sum_i w_i T_i` with `b` the
/// first term of the beta schedule, required to be nonexpansive.
pub fn averaged_combination(cfg: &AlgorithmConfig) -> Result<Operator> {
    let b = cfg.beta.term(0);
    let combined = cfg.problem.combined()?;
    let op = if b > 0.0 {
        averaged(combined, b, cfg.space())?
    } else {
        combined
    };
    if !op.claims.nonexpansive {
        return Err(Error::Validation(format!(
            "the averaged combination with weight {b} is not known to be nonexpansive"
        )));
    }
    Ok(op)
}

/// Solves `x_t = t g f(x_t) + (I - t m G) T x_t` with `T` the averaged
/// combination by iterating the map on the right, a contraction with
/// factor `1 - t (tau - gamma beta)`.
pub fn regularization_path(
    t: f64,
    cfg: &AlgorithmConfig,
    inner_tol: f64,
    max_inner: usize,
) -> Result<PathPoint> {
    cfg.check()?;
    let g = &cfg.gains;
    let gr = validate_gains(g);
    if !gr.passed {
        return Err(Error::Validation(gr.failures().join("; ")));
    }
    let cap = g.alpha_cap();
    if !(t > 0.0 && t < 1.0 && t <= cap) {
        return Err(Error::Precondition(format!(
            "t = {t} outside (0, min(1, 1/tau)]"
        )));
    }
    if !(inner_tol > 0.0) {
        return Err(Error::Precondition(
            "inner tolerance must be positive".into(),
        ));
    }
    let op = averaged_combination(cfg)?;
    let s = cfg.space();
    let phi = |x: &[f64]| {
        let y = op.eval(x);
        let fx = cfg.problem.contraction.eval(x);
        let gy = cfg.problem.accretive.eval(&y);
        (0..x.len())
            .map(|i| t * g.gamma * fx[i] + y[i] - t * g.mu * gy[i])
            .collect::<Vec<_>>()
    };
    let factor = 1.0 - t * g.gap();
    let mut x = cfg.x0.0.clone();
    let mut prev: Option<f64> = None;
    let mut rate: f64 = 0.0;
    for it in 0..max_inner {
        let next = phi(&x);
        let next_step = dist(&next, &x, s);
        if !next_step.is_finite() || next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("regularization path"));
        }
        let r = dist(&x, &next, s);
        if let Some(p) = prev {
            if p > 1e-12 {
                rate = rate.max(r / p);
            }
        }
        if r <= inner_tol {
            return Ok(PathPoint {
                t,
                x: Vector(x),
                inner_iterations: it,
                residual: r,
                factor,
                observed_rate: rate,
            });
        }
        prev = Some(r);
        x = next;
    }
    Err(Error::IterationCap(max_inner))
}

fn is_symmetric_positive(op: &Operator, dim: usize) -> bool {
    let (m, c) = op.affine_parts(dim);
    if c.iter().any(|v| *v != 0.0) {
        return false;
    }
    let sym = (&m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    sym && m.symmetric_eigenvalues().min() > 0.0
}

/// Specializes `cfg` to one of the classical cases.
pub fn apply_preset(cfg: &AlgorithmConfig, preset: Preset) -> Result<AlgorithmConfig> {
    let s = cfg.space();
    if !s.is_hilbert() || s.d_q != 1.0 {
        return Err(Error::Precondition(format!(
            "preset {} needs a Hilbert space (p = q = 2, d_q = 1)",
            preset.id()
        )));
    }
    let mut out = cfg.clone();
    out.preset = Some(preset);
    out.mode = preset.mode();
    let single = |out: &mut AlgorithmConfig| -> Result<()> {
        let op = averaged_combination(cfg)?;
        out.problem.operators = vec![op];
        out.problem.weights = vec![1.0];
        out.beta = Schedule::Constant { b: 0.0 };
        Ok(())
    };
    match preset {
        Preset::HilbertSynchronal | Preset::HilbertCyclic => {}
        Preset::SingleViscosity | Preset::SingleLinear => {
            if preset == Preset::SingleLinear
                && !is_symmetric_positive(&cfg.problem.accretive, s.dim)
            {
                return Err(Error::Precondition(
                    "preset single-linear needs G linear, symmetric and positive definite".into(),
                ));
            }
            single(&mut out)?;
            let g = &cfg.gains;
            out.gains = Gains::new(1.0, g.gamma, g.beta, g.eta, g.lipschitz, g.q, g.d_q);
        }
        Preset::SteepestDescent => {
            single(&mut out)?;
            let g = &cfg.gains;
            out.gains = Gains::new(g.mu, 0.0, g.beta, g.eta, g.lipschitz, g.q, g.d_q);
        }
        Preset::CyclicSteepestDescent => {
            let g = &cfg.gains;
            out.gains = Gains::new(g.mu, 0.0, g.beta, g.eta, g.lipschitz, g.q, g.d_q);
        }
    }
    Ok(out)
}

/// Collapses operator kinds that are plain wrappers, for display.
pub fn describe(op: &Operator) -> String {
    match &op.kind {
        OperatorKind::Affine { matrix, .. } => {
            format!("affine({}x{})", matrix.nrows(), matrix.ncols())
        }
        OperatorKind::DiagonalAffine { diag, .. } => format!("diagonal({diag:?})"),
        OperatorKind::ScaledIdentity { scale } => format!("{scale}*I"),
        OperatorKind::Composition(ops) => {
            format!(
                "compose[{}]",
                ops.iter().map(describe).collect::<Vec<_>>().join(", ")
            )
        }
        OperatorKind::Averaged { base, alpha } => format!("average({alpha}, {})", describe(base)),
        OperatorKind::ConvexCombination { ops, weights } => format!(
            "combine[{}]",
            ops.iter()
                .zip(weights)
                .map(|(o, w)| format!("{w}*{}", describe(o)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_problem, GeneratorKnobs};
    use crate::oracle::{fixed_set_probes, solve_vi_affine, PROBE_COUNT, PROBE_SEED};

    fn d2(a: &Vector, b: &[f64]) -> f64 {
        a.0.iter()
            .zip(b)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn canonical_synchronal_limit() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.stopping.max_iter = 100_000;
        let tr = run_synchronal(&cfg).unwrap();
        assert!(
            d2(&tr.final_x, &[10.0 / 9.0, 0.0]) <= 1e-4,
            "{:?}",
            tr.final_x
        );
        assert!(
            tr.step_contraction.as_ref().unwrap().passed,
            "{:?}",
            tr.step_contraction
        );
        assert!(tr.min_bound_slack.unwrap() >= -1e-9);
    }

    #[test]
    fn canonical_cyclic_limit() {
        let tr = run_cyclic(&AlgorithmConfig::canonical(Mode::Cyclic)).unwrap();
        assert!(
            d2(&tr.final_x, &[10.0 / 9.0, 0.0]) <= 1e-4,
            "{:?}",
            tr.final_x
        );
        assert!(tr.last().window_residual.is_some());
        assert!(
            tr.step_contraction.as_ref().unwrap().passed,
            "{:?}",
            tr.step_contraction
        );
    }

    #[test]
    fn mode_mismatch_and_validation() {
        let cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        assert!(run_cyclic(&cfg).is_err());
        let mut bad = cfg.clone();
        bad.gains = Gains::new(1.0, 6.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        assert!(matches!(run_synchronal(&bad), Err(Error::Validation(_))));
        bad.override_validation = true;
        bad.stopping.max_iter = 10;
        assert_eq!(run_synchronal(&bad).unwrap().iterations, 10);
    }

    #[test]
    fn identity_operator_drives_to_zero() {
        // f = 0 and one identity map: the VI over the whole space forces G x* = 0
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.problem.operators = vec![Operator::identity(2).with_strictness(0.5).unwrap()];
        cfg.problem.weights = vec![1.0];
        cfg.problem.fixed_set = None;
        cfg.gains = Gains::new(1.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        cfg.alpha = Schedule::Power { a: 1.0, r: 0.5 };
        cfg.stopping = Stopping {
            max_iter: 10_000,
            step_tol: 1e-12,
            residual_tol: 1e-12,
        };
        let tr = run_synchronal(&cfg).unwrap();
        assert!(d2(&tr.final_x, &[0.0, 0.0]) < 1e-10);
    }

    #[test]
    fn single_operator_cyclic_equals_synchronal() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.problem.operators.truncate(1);
        cfg.problem.weights = vec![1.0];
        cfg.record_iterates = true;
        cfg.stopping.max_iter = 500;
        let a = run_synchronal(&cfg).unwrap();
        cfg.mode = Mode::Cyclic;
        let b = run_cyclic(&cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(d2(ra.x.as_ref().unwrap(), &rb.x.as_ref().unwrap().0) <= 1e-15);
        }
    }

    #[test]
    fn start_at_solution_stays_bounded() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.x0 = Vector(vec![10.0 / 9.0, 0.0]);
        cfg.stopping.max_iter = 1000;
        cfg.reference = Some(Reference {
            x_star: Some(cfg.x0.clone()),
            probes: Vec::new(),
        });
        let tr = run_synchronal(&cfg).unwrap();
        assert!(tr.min_bound_slack.unwrap() >= -1e-9);
        assert_eq!(tr.records[0].fixpoint_residual, 0.0);
        // alpha_0 = 1 moves x_1 to f(x*) = (10/9, 1); the rest stays in that band
        assert!(tr
            .records
            .iter()
            .all(|r| r.dist_to_oracle.unwrap() <= 1.0 + 1e-12));
    }

    #[test]
    fn cadence_row_count() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.cadence = 10;
        for max in [95usize, 100, 1] {
            cfg.stopping.max_iter = max;
            let tr = run_synchronal(&cfg).unwrap();
            assert_eq!(tr.iterations, max);
            assert_eq!(tr.records.len(), max.div_ceil(10) + 1);
            assert!(tr.records.windows(2).all(|w| w[0].n < w[1].n));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.override_validation = true;
        cfg.gains = Gains::new(1.0, 1.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        cfg.problem.contraction = Operator::diagonal(vec![1e300, 1e300], Vector::zeros(2))
            .unwrap()
            .with_contraction(0.1)
            .unwrap();
        cfg.alpha = Schedule::Constant { b: 0.5 };
        cfg.stopping.max_iter = 1000;
        let tr = run_synchronal(&cfg).unwrap();
        assert_eq!(tr.status, TerminalStatus::Diverged);
        assert!(tr.final_x.is_finite());
        assert_eq!(tr.last().n, tr.iterations);
    }

    #[test]
    fn alpha_is_clamped_to_inverse_tau() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.gains = Gains::new(1.5, 0.5, 0.1, 1.0, 1.0, 2.0, 1.0);
        cfg.alpha = Schedule::Power { a: 1.0, r: 1.0 };
        cfg.stopping.max_iter = 5;
        // tau = 1.5 (1 - 0.75) = 0.375 so the cap is 1
        let tr = run_synchronal(&cfg).unwrap();
        assert_eq!(tr.alpha_clamped, 0);
        assert_eq!(tr.records[0].alpha, 1.0);
    }

    #[test]
    fn regularization_path_examples() {
        let cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        let xs = [10.0 / 9.0, 0.0];
        let mut last = f64::INFINITY;
        for t in [0.5, 0.1, 0.01] {
            let p = regularization_path(t, &cfg, 1e-13, 10_000_000).unwrap();
            // closed form on this problem: (10/9, t / (0.625 + 0.275 t))
            assert!((p.x[0] - 10.0 / 9.0).abs() < 1e-10);
            assert!((p.x[1] - t / (0.625 + 0.275 * t)).abs() < 1e-10);
            let d = d2(&p.x, &xs);
            assert!(d < last);
            last = d;
            assert!(
                p.observed_rate <= p.factor + 1e-6,
                "{} > {}",
                p.observed_rate,
                p.factor
            );
        }
        assert!(regularization_path(1.0, &cfg, 1e-10, 10).is_err());
    }

    #[test]
    fn regularization_path_trivial_case() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        cfg.problem.operators = vec![Operator::identity(2).with_strictness(0.5).unwrap()];
        cfg.problem.weights = vec![1.0];
        cfg.problem.fixed_set = None;
        cfg.gains = Gains::new(1.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0);
        let p = regularization_path(0.3, &cfg, 1e-14, 100_000).unwrap();
        assert!(d2(&p.x, &[0.0, 0.0]) < 1e-13);
    }

    #[test]
    fn steepest_descent_preset_matches_hand_loop() {
        let base = AlgorithmConfig::canonical(Mode::Synchronal);
        let mut cfg = apply_preset(&base, Preset::SteepestDescent).unwrap();
        cfg.record_iterates = true;
        cfg.stopping = Stopping {
            max_iter: 1000,
            step_tol: 1e-300,
            residual_tol: 1e-300,
        };
        let tr = run_synchronal(&cfg).unwrap();
        // hand loop: y = T^b x, x <- y - mu a_n G y with T^b = 0.5 I + 0.5 (0.5 T1 + 0.5 T2)
        let mut x = [5.0f64, 5.0];
        for (n, r) in tr.records.iter().enumerate() {
            assert_eq!(r.n, n);
            assert!(d2(r.x.as_ref().unwrap(), &x) <= 1e-15, "n = {n}");
            let a = 1.0 / (n as f64 + 1.0);
            let t = [
                0.5 * x[0] + 0.5 * x[0],
                0.5 * (0.0 * x[1]) + 0.5 * (-0.5 * x[1]),
            ];
            let y = [0.5 * x[0] + 0.5 * t[0], 0.5 * x[1] + 0.5 * t[1]];
            x = [y[0] - a * y[0], y[1] - a * y[1]];
        }
    }

    #[test]
    fn single_presets_share_a_limit() {
        let base = AlgorithmConfig::canonical(Mode::Synchronal);
        let mut a = apply_preset(&base, Preset::SingleViscosity).unwrap();
        let mut b = apply_preset(&base, Preset::SingleLinear).unwrap();
        for c in [&mut a, &mut b] {
            c.alpha = Schedule::Power { a: 1.0, r: 0.6 };
            c.stopping = Stopping {
                max_iter: 2_000_000,
                step_tol: 1e-13,
                residual_tol: 1e-10,
            };
        }
        let ta = run_synchronal(&a).unwrap();
        let tb = run_synchronal(&b).unwrap();
        assert!(d2(&ta.final_x, &tb.final_x.0) <= 1e-6);
        // off the fixed axis the iterate lags by O(alpha_n)
        assert!(d2(&ta.final_x, &[10.0 / 9.0, 0.0]) <= 1e-3);
    }

    #[test]
    fn presets_need_hilbert_and_linear_g() {
        let mut cfg = AlgorithmConfig::canonical(Mode::Synchronal);
        assert_eq!(
            apply_preset(&cfg, Preset::HilbertSynchronal)
                .unwrap()
                .problem,
            cfg.problem
        );
        assert_eq!(
            apply_preset(&cfg, Preset::HilbertCyclic).unwrap().mode,
            Mode::Cyclic
        );
        assert_eq!(
            Preset::parse("steepest-descent").unwrap(),
            Preset::SteepestDescent
        );
        assert_eq!(
            Preset::parse("cyclic-steepest-descent").unwrap(),
            Preset::CyclicSteepestDescent
        );
        assert!(Preset::parse("gradient").is_err());
        cfg.problem.accretive = Operator::diagonal(vec![1.0, 1.0], Vector(vec![1.0, 0.0]))
            .unwrap()
            .with_accretive(1.0)
            .unwrap()
            .with_lipschitz(1.0)
            .unwrap();
        assert!(apply_preset(&cfg, Preset::SingleLinear).is_err());
        cfg.problem.space = SpaceSpec::lp_default(2, 3.0).unwrap();
        assert!(apply_preset(&cfg, Preset::HilbertSynchronal).is_err());
    }

    #[test]
    fn cyclic_steepest_descent_hits_origin() {
        let base = AlgorithmConfig::canonical(Mode::Synchronal);
        let mut cfg = apply_preset(&base, Preset::CyclicSteepestDescent).unwrap();
        cfg.alpha = Schedule::Power { a: 1.0, r: 0.7 };
        cfg.stopping.max_iter = 200_000;
        let tr = run_cyclic(&cfg).unwrap();
        assert!(d2(&tr.final_x, &[0.0, 0.0]) <= 1e-4, "{:?}", tr.final_x);
    }

    #[test]
    fn generated_runs_respect_bound_and_agree() {
        for seed in 0..4u64 {
            let dim = 3 + seed as usize;
            let s = SpaceSpec::hilbert(dim);
            let p = generate_problem(seed, dim, 2, &s, &GeneratorKnobs::default()).unwrap();
            let (eta, l) = (
                p.accretive.claims.accretive.unwrap(),
                p.accretive.claims.lipschitz.unwrap(),
            );
            let gains = Gains::auto(0.5, eta, l, 2.0, 1.0).unwrap();
            let beta = p.strictness_max().unwrap().max(
                crate::params::averaging_threshold(p.strictness_min().unwrap(), 2.0, 1.0).unwrap(),
            );
            let xs = solve_vi_affine(&p, &gains).unwrap().x_star;
            let probes = fixed_set_probes(p.fixed_set.as_ref().unwrap(), PROBE_COUNT, PROBE_SEED);
            let mut cfg = AlgorithmConfig::new(
                p,
                gains,
                Schedule::Power { a: 1.0, r: 0.7 },
                Schedule::Constant { b: beta },
                Vector(vec![1.0; dim]),
                Mode::Synchronal,
            );
            cfg.stopping = Stopping {
                max_iter: 300_000,
                step_tol: 1e-10,
                residual_tol: 1e-8,
            };
            cfg.cadence = 1000;
            cfg.reference = Some(Reference {
                x_star: Some(xs.clone()),
                probes,
            });
            let a = run_synchronal(&cfg).unwrap();
            cfg.mode = Mode::Cyclic;
            let b = run_cyclic(&cfg).unwrap();
            for tr in [&a, &b] {
                assert!(tr.min_bound_slack.unwrap() >= -1e-9);
                assert!(
                    tr.last().dist_to_oracle.unwrap() < 5e-3,
                    "seed {seed}: {:?}",
                    tr.last()
                );
                let first = tr.records[1].dist_to_oracle.unwrap();
                assert!(tr.last().dist_to_oracle.unwrap() < 0.1 * first);
            }
            assert!(d2(&a.final_x, &b.final_x.0) < 5e-3);
        }
    }
}
