//! Scalar gains `(mu, gamma, tau)` and the parameter sequences `alpha_n`,
//! `beta_n`, together with validators for the convergence conditions.
//!
//! Summability conditions are decided analytically per schedule family;
//! explicit user tables only get partial-sum diagnostics and an `Unknown`
//! flag. Range conditions on `beta_n` are checked numerically over a horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(q eta / (d_q L^q))^{1/(q-1)}`, the supremum of admissible `mu`.
pub fn mu_upper_bound(eta: f64, lipschitz: f64, q: f64, d_q: f64) -> Result<f64> {
    for (name, v) in [("eta", eta), ("L", lipschitz), ("d_q", d_q)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Precondition(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::Precondition(format!("q must exceed 1, got {q}")));
    }
    Ok((q * eta / (d_q * lipschitz.powf(q))).powf(1.0 / (q - 1.0)))
}

pub(crate) fn tau_formula(mu: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> f64 {
    mu * (eta - d_q * mu.powf(q - 1.0) * lipschitz.powf(q) / q)
}

/// `tau = mu (eta - d_q mu^{q-1} L^q / q)`, the contraction modulus of
/// `I - t mu G`.
pub fn derive_tau(mu: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> Result<f64> {
    let bound = mu_upper_bound(eta, lipschitz, q, d_q)?;
    if !(mu > 0.0 && mu < bound) {
        return Err(Error::Precondition(format!(
            "mu = {mu} outside (0, {bound})"
        )));
    }
    Ok(tau_formula(mu, eta, lipschitz, q, d_q))
}

pub(crate) fn threshold_raw(lambda: f64, q: f64, d_q: f64) -> f64 {
    (1.0 - (lambda * q / d_q).powf(1.0 / (q - 1.0))).max(0.0)
}

/// Smallest averaging weight `alpha` for which `alpha I + (1 - alpha) T` is
/// nonexpansive when `T` is `lambda`-strictly pseudocontractive:
/// `max{0, 1 - (lambda q / d_q)^{1/(q-1)}}`.
pub fn averaging_threshold(lambda: f64, q: f64, d_q: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} outside (0, 1)"
        )));
    }
    if !(q.is_finite() && q > 1.0) || !(d_q.is_finite() && d_q > 0.0) {
        return Err(Error::Precondition(format!(
            "invalid smoothness data q = {q}, d_q = {d_q}"
        )));
    }
    Ok(threshold_raw(lambda, q, d_q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub mu: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Contraction coefficient of `f`.
    pub beta: f64,
    pub eta: f64,
    pub lipschitz: f64,
    pub q: f64,
    pub d_q: f64,
}

impl Gains {
    /// Assembles gains; `tau` is evaluated from the formula even when `mu` is
    /// out of range so that invalid configurations stay observable.
    pub fn new(mu: f64, gamma: f64, beta: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> Self {
        let tau = tau_formula(mu, eta, lipschitz, q, d_q);
        Self {
            mu,
            gamma,
            tau,
            beta,
            eta,
            lipschitz,
            q,
            d_q,
        }
    }

    /// `mu` at half its upper bound, `gamma` at half of `tau / beta`.
    pub fn auto(beta: f64, eta: f64, lipschitz: f64, q: f64, d_q: f64) -> Result<Self> {
        let mu = 0.5 * mu_upper_bound(eta, lipschitz, q, d_q)?;
        let mut g = Self::new(mu, 0.0, beta, eta, lipschitz, q, d_q);
        g.gamma = 0.5 * g.gamma_upper_bound();
        Ok(g)
    }

    pub fn mu_upper_bound(&self) -> f64 {
        mu_upper_bound(self.eta, self.lipschitz, self.q, self.d_q).unwrap_or(f64::NAN)
    }

    /// `tau / beta`
    pub fn gamma_upper_bound(&self) -> f64 {
        self.tau / self.beta
    }

    /// `tau - gamma beta`, the effective contraction rate of the iteration.
    pub fn gap(&self) -> f64 {
        self.tau - self.gamma * self.beta
    }

    /// Largest admissible `alpha_n`, `min{1, 1/tau}`.
    pub fn alpha_cap(&self) -> f64 {
        if self.tau > 0.0 {
            1.0f64.min(1.0 / self.tau)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Slack of the inequality; negative or zero when a strict inequality fails.
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, margin: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            margin,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl GainsReport {
    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }
}

pub fn validate_gains(g: &Gains) -> GainsReport {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let bound = mu_upper_bound(g.eta, g.lipschitz, g.q, g.d_q);
    match bound {
        Ok(b) => {
            let ok = g.mu > 0.0 && g.mu < b;
            let margin = g.mu.min(b - g.mu);
            checks.push(Check::new(
                "mu_range",
                ok,
                margin,
                format!("0 < mu = {} < {} (strict inequality required)", g.mu, b),
            ));
        }
        Err(e) => checks.push(Check::new("mu_range", false, f64::NAN, e.to_string())),
    }
    checks.push(Check::new(
        "tau_positive",
        g.tau > 0.0,
        g.tau,
        format!("tau = mu (eta - d_q mu^(q-1) L^q / q) = {}", g.tau),
    ));
    let beta_ok = g.beta > 0.0 && g.beta < 1.0;
    checks.push(Check::new(
        "beta_range",
        beta_ok,
        g.beta.min(1.0 - g.beta),
        format!(
            "contraction coefficient beta = {} must lie in (0, 1)",
            g.beta
        ),
    ));
    let upper = g.gamma_upper_bound();
    let ok = g.gamma >= 0.0 && g.gamma < upper && g.tau > 0.0;
    if g.gamma == 0.0 {
        notes.push("gamma = 0: the contraction term is switched off".to_string());
    }
    checks.push(Check::new(
        "gamma_range",
        ok,
        upper - g.gamma,
        format!(
            "0 < gamma = {} < tau / beta = {} (strict inequality required)",
            g.gamma, upper
        ),
    ));
    GainsReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
        notes,
    }
}

/// Parameter sequence family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `a / (n + 1)^r`
    Power {
        a: f64,
        r: f64,
    },
    Constant {
        b: f64,
    },
    /// `values[n mod len]`, e.g. per-operator weights in the cyclic scheme.
    Periodic {
        values: Vec<f64>,
    },
    /// Tabulated terms; the last one is held. Summability is not decidable.
    Explicit {
        values: Vec<f64>,
    },
}

impl Schedule {
    pub fn harmonic() -> Self {
        Schedule::Power { a: 1.0, r: 1.0 }
    }

    pub fn term(&self, n: usize) -> f64 {
        match self {
            Schedule::Power { a, r } => a / ((n + 1) as f64).powf(*r),
            Schedule::Constant { b } => *b,
            Schedule::Periodic { values } => values[n % values.len()],
            Schedule::Explicit { values } => values[n.min(values.len() - 1)],
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        match self {
            Schedule::Power { a, r } => {
                if !(*a > 0.0 && *a <= 1.0) || !(*r > 0.0 && r.is_finite()) {
                    return bad(format!(
                        "power schedule needs 0 < a <= 1 and r > 0, got a = {a}, r = {r}"
                    ));
                }
            }
            Schedule::Constant { b } => {
                if !(*b >= 0.0 && *b < 1.0) {
                    return bad(format!("constant schedule needs 0 <= b < 1, got {b}"));
                }
            }
            Schedule::Periodic { values } | Schedule::Explicit { values } => {
                if values.is_empty() {
                    return bad("tabulated schedule is empty".into());
                }
                if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                    return bad(format!("tabulated schedule term {v} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn tends_to_zero_nonsummable(&self) -> Flag {
        match self {
            Schedule::Power { r, .. } => Flag::from(*r > 0.0 && *r <= 1.0),
            Schedule::Constant { .. } | Schedule::Periodic { .. } => Flag::Fails,
            Schedule::Explicit { .. } => Flag::Unknown,
        }
    }

    fn bounded_variation(&self) -> Flag {
        match self {
            Schedule::Power { .. } | Schedule::Constant { .. } => Flag::Holds,
            Schedule::Periodic { values } => Flag::from(values.iter().all(|v| *v == values[0])),
            Schedule::Explicit { .. } => Flag::Unknown,
        }
    }

    /// `term(n) / term(n + period) -> 1`
    fn ratio_tends_to_one(&self, period: usize) -> Flag {
        match self {
            Schedule::Power { .. } | Schedule::Constant { .. } => Flag::Holds,
            Schedule::Periodic { values } => Flag::from(
                period.is_multiple_of(values.len()) || values.iter().all(|v| *v == values[0]),
            ),
            Schedule::Explicit { .. } => Flag::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Holds,
    Fails,
    Unknown,
    NotApplicable,
}

impl From<bool> for Flag {
    fn from(b: bool) -> Self {
        if b {
            Flag::Holds
        } else {
            Flag::Fails
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Synchronal,
    Cyclic,
}

/// Class data of one pseudocontraction as seen by the schedule validator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConstants {
    pub strictness: Option<f64>,
    /// Already nonexpansive: any `beta` in `[0, 1)` keeps the averaged map
    /// nonexpansive.
    pub nonexpansive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionFlags {
    /// `alpha_n -> 0`, `sum alpha_n = inf`
    pub alpha_vanishing: Flag,
    /// `sum |alpha_{n+1} - alpha_n| < inf` and, in the synchronal scheme,
    /// `sum |beta_{n+1} - beta_n| < inf`
    pub variation: Flag,
    /// Cyclic alternative: `alpha_n / alpha_{n+N} -> 1`.
    pub alpha_ratio: Flag,
    /// `beta_n` in `[max k_i, a)` for some `a < 1`.
    pub beta_range: Flag,
    /// `beta_n` above the averaging threshold.
    pub beta_averaging: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDiagnostics {
    pub horizon: usize,
    pub alpha_partial_sum: f64,
    pub alpha_variation: f64,
    pub beta_variation: f64,
    pub alpha_last: f64,
    pub beta_last: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub required_beta_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub mode: Mode,
    pub passed: bool,
    pub flags: ConditionFlags,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub diagnostics: ScheduleDiagnostics,
}

pub fn validate_schedule(
    alpha: &Schedule,
    beta: &Schedule,
    mode: Mode,
    operators: &[OperatorConstants],
    q: f64,
    d_q: f64,
    horizon: usize,
) -> ScheduleReport {
    let horizon = horizon.max(1);
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (name, s) in [("alpha", alpha), ("beta", beta)] {
        if let Err(e) = s.check() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if operators.is_empty() {
        failures.push("no operators supplied".into());
    }
    let n_ops = operators.len().max(1);

    let vanishing = alpha.tends_to_zero_nonsummable();
    let alpha_variation_flag = alpha.bounded_variation();
    let ratio_flag = alpha.ratio_tends_to_one(n_ops);
    let variation = match mode {
        Mode::Synchronal => and_flags(alpha_variation_flag, beta.bounded_variation()),
        Mode::Cyclic => alpha_variation_flag,
    };

    // Strict operators need beta >= max k_i and beta >= averaging threshold;
    // nonexpansive ones only need beta in [0, 1).
    let strict: Vec<(usize, f64)> = operators
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.nonexpansive)
        .filter_map(|(i, c)| c.strictness.map(|k| (i, k)))
        .collect();
    for (i, c) in operators.iter().enumerate() {
        if !c.nonexpansive && c.strictness.is_none() {
            failures.push(format!(
                "operator {} has neither a strictness constant nor a nonexpansive claim",
                i + 1
            ));
        }
        if let Some(k) = c.strictness {
            if !(k > 0.0 && k < 1.0) && !c.nonexpansive {
                failures.push(format!("operator {} strictness {k} outside (0, 1)", i + 1));
            }
        }
    }
    let k_max = strict
        .iter()
        .map(|(_, k)| *k)
        .fold(f64::NEG_INFINITY, f64::max);
    let k_min = strict.iter().map(|(_, k)| *k).fold(f64::INFINITY, f64::min);
    let combined_threshold = if strict.is_empty() {
        0.0
    } else {
        threshold_raw(k_min, q, d_q)
    };

    let mut range_ok = true;
    let mut range_min_form_ok = true;
    let mut averaging_ok = true;
    let mut alpha_range_ok = true;
    let mut beta_min = f64::INFINITY;
    let mut beta_max = f64::NEG_INFINITY;
    let mut alpha_sum = 0.0;
    let mut alpha_var = 0.0;
    let mut beta_var = 0.0;
    let mut required_floor: f64 = 0.0;
    for n in 0..horizon {
        let a = alpha.term(n);
        let b = beta.term(n);
        alpha_sum += a;
        if n + 1 < horizon {
            alpha_var += (alpha.term(n + 1) - a).abs();
            beta_var += (beta.term(n + 1) - b).abs();
        }
        if !(a > 0.0 && a <= 1.0) {
            alpha_range_ok = false;
        }
        beta_min = beta_min.min(b);
        beta_max = beta_max.max(b);
        let (floor_range, floor_averaging) = match mode {
            Mode::Synchronal => (
                if strict.is_empty() { 0.0 } else { k_max },
                combined_threshold,
            ),
            Mode::Cyclic => {
                let c = operators
                    .get(n % n_ops)
                    .copied()
                    .unwrap_or(OperatorConstants {
                        strictness: None,
                        nonexpansive: true,
                    });
                match (c.nonexpansive, c.strictness) {
                    (false, Some(k)) => (k_max, threshold_raw(k, q, d_q)),
                    _ => (0.0, 0.0),
                }
            }
        };
        required_floor = required_floor.max(floor_range).max(floor_averaging);
        if !(b >= floor_range && b < 1.0) {
            range_ok = false;
        }
        if !strict.is_empty() && !(b >= k_min && b < 1.0) {
            range_min_form_ok = false;
        }
        if b < floor_averaging {
            averaging_ok = false;
        }
    }
    if beta_max >= 1.0 {
        range_ok = false;
    }
    if !alpha_range_ok {
        failures.push("alpha_n must lie in (0, 1]".into());
    }
    let beta_range = Flag::from(range_ok);
    if !range_ok {
        failures.push(format!(
            "beta range: beta_n must lie in [max k_i, a) with a < 1; observed beta in [{beta_min}, {beta_max}], max k_i = {k_max}"
        ));
        if range_min_form_ok && !strict.is_empty() {
            warnings.push(format!(
                "the beta range holds only in the weaker form beta_n >= min k_i = {k_min}; the max form is enforced"
            ));
        }
    }
    let beta_averaging = Flag::from(averaging_ok);
    if !averaging_ok {
        failures.push(format!(
            "averaging floor: beta_n must not fall below the averaging threshold {combined_threshold} (min beta observed {beta_min})"
        ));
    }
    if combined_threshold > 0.0 && vanishing == Flag::Holds {
        warnings.push(format!(
            "the averaging floor is applied to beta_n only: alpha_n -> 0 cannot stay above the threshold {combined_threshold}"
        ));
    }
    match vanishing {
        Flag::Fails => failures.push("alpha_n must tend to 0 with a divergent sum".into()),
        Flag::Unknown => warnings.push("alpha_n -> 0 with divergent sum is undecidable for an explicit schedule; see partial sums".into()),
        _ => {}
    }
    let variation_effective = match mode {
        Mode::Synchronal => variation,
        Mode::Cyclic => or_flags(variation, ratio_flag),
    };
    match variation_effective {
        Flag::Fails => failures.push("schedule variation condition fails".into()),
        Flag::Unknown => warnings.push(
            "the variation condition is undecidable for an explicit schedule; see partial sums"
                .into(),
        ),
        _ => {}
    }

    let passed = failures.is_empty();
    ScheduleReport {
        mode,
        passed,
        flags: ConditionFlags {
            alpha_vanishing: vanishing,
            variation,
            alpha_ratio: if mode == Mode::Cyclic {
                ratio_flag
            } else {
                Flag::NotApplicable
            },
            beta_range,
            beta_averaging,
        },
        failures,
        warnings,
        diagnostics: ScheduleDiagnostics {
            horizon,
            alpha_partial_sum: alpha_sum,
            alpha_variation: alpha_var,
            beta_variation: beta_var,
            alpha_last: alpha.term(horizon - 1),
            beta_last: beta.term(horizon - 1),
            beta_min,
            beta_max,
            required_beta_floor: required_floor,
        },
    }
}

fn and_flags(a: Flag, b: Flag) -> Flag {
    match (a, b) {
        (Flag::Fails, _) | (_, Flag::Fails) => Flag::Fails,
        (Flag::Unknown, _) | (_, Flag::Unknown) => Flag::Unknown,
        _ => Flag::Holds,
    }
}

fn or_flags(a: Flag, b: Flag) -> Flag {
    match (a, b) {
        (Flag::Holds, _) | (_, Flag::Holds) => Flag::Holds,
        (Flag::Unknown, _) | (_, Flag::Unknown) => Flag::Unknown,
        _ => Flag::Fails,
    }
}
