//! Scenario files, run orchestration and artifact writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certify::{self, CertificateReport, Distribution, SamplePlan};
use crate::error::{Error, Result};
use crate::iterate::{
    self, AlgorithmConfig, Preset, Reference, StepContractionCheck, Stopping, TerminalStatus, Trace,
};
use crate::operators::{self, GeneratorKnobs, Operator, ProblemInstance};
use crate::oracle::{self, OracleMethod, OracleResult, PROBE_COUNT, PROBE_SEED};
use crate::params::{self, ConditionFlags, Gains, Mode, Schedule};
use crate::space::{self, SpaceSpec, Vector};
use crate::subspace::AffineSubspace;

pub const SCHEMA_VERSION: u32 = 1;

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 9] = [
    "n",
    "alpha_n",
    "beta_n",
    "step_norm",
    "fixpoint_residual",
    "window_residual",
    "bound_slack",
    "vi_residual",
    "dist_to_oracle",
];

/// Column order of the plot data file.
pub const PLOT_COLUMNS: [&str; 6] = [
    "n",
    "step_norm",
    "fixpoint_residual",
    "window_residual",
    "vi_residual",
    "status",
];

pub const DEFAULT_CADENCE: usize = 100;

// ---------------------------------------------------------------------------
// scenario file

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedules: Option<SchedulesBlock>,
    #[serde(default, rename = "algorithm", skip_serializing_if = "Vec::is_empty")]
    pub algorithms: Vec<AlgorithmBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyBlock>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpaceBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Canonical,
    Generated,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ProblemSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of pseudocontractions of a generated problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operators: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knobs: Option<GeneratorKnobs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<MapBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accretive: Option<MapBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_set: Option<FixedSetBlock>,
    #[serde(default, rename = "operator", skip_serializing_if = "Vec::is_empty")]
    pub operator_list: Vec<MapBlock>,
}

/// An affine map `diag(d) x + b`, `A x + b` or `c x`, with claimed constants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accretive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strictness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonexpansive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedSetBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis: Vec<Vec<f64>>,
}

/// A gain given as a number or as the keyword `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainValue {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GainsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<GainValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GainValue>,
    /// `gamma` as a multiple of `tau / beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchedulesBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Schedule>,
    /// Omitted: constant at the smallest admissible value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgorithmBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `synchronal`, `cyclic`, or a preset id or alias.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_iterates: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CertifyBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
}

impl ScenarioFile {
    /// Parses scenario text; unknown keys are collected, not fail-fast.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| Error::Scenario(vec![e.to_string()]))?;
        let mut unknown = Vec::new();
        let file: ScenarioFile =
            serde_ignored::deserialize(de, |path| unknown.push(path.to_string().replace(".?", "")))
                .map_err(|e| Error::Scenario(vec![e.to_string()]))?;
        if !unknown.is_empty() {
            return Err(Error::Scenario(
                unknown
                    .into_iter()
                    .map(|k| format!("unknown key `{k}`"))
                    .collect(),
            ));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(vec![e.to_string()]))
    }
}

/// Command-line adjustments applied before resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub cadence: Option<usize>,
    pub override_validation: bool,
}

impl Overrides {
    fn apply(&self, file: &mut ScenarioFile) {
        if let Some(dir) = &self.out {
            file.output.get_or_insert_with(Default::default).dir =
                Some(dir.to_string_lossy().into_owned());
        }
        if let Some(c) = self.cadence {
            file.output.get_or_insert_with(Default::default).cadence = Some(c);
        }
        if let Some(m) = self.max_iter {
            for a in &mut file.algorithms {
                a.max_iter = Some(m);
            }
        }
        if let Some(seed) = self.seed {
            if let Some(p) = file
                .problem
                .as_mut()
                .filter(|p| p.source == Some(ProblemSource::Generated))
            {
                p.seed = Some(seed);
            }
            file.certify.get_or_insert_with(Default::default).seed = Some(seed);
        }
    }
}

// ---------------------------------------------------------------------------
// resolved scenario

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub name: String,
    pub config: AlgorithmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifySpec {
    pub plan: SamplePlan,
    pub t_grid: Option<Vec<f64>>,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// The file after command-line overrides.
    pub file: ScenarioFile,
    pub name: String,
    pub problem: ProblemInstance,
    pub gains: Gains,
    pub alpha: Schedule,
    pub beta: Schedule,
    pub runs: Vec<RunSpec>,
    pub out_dir: PathBuf,
    pub cadence: usize,
    pub record_iterates: bool,
    pub certify: Option<CertifySpec>,
    pub override_validation: bool,
    /// Validation failures accepted under the override, per run.
    pub validation_failures: Vec<String>,
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario_with(path, &Overrides::default())
}

pub fn parse_scenario_with(path: &Path, ov: &Overrides) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario_str(&text, ov)
}

/// Parses and resolves scenario text. All constraint violations are reported
/// together; gain and schedule validation failures are errors unless
/// `ov.override_validation` is set.
pub fn parse_scenario_str(text: &str, ov: &Overrides) -> Result<Scenario> {
    let mut file = ScenarioFile::from_toml(text)?;
    ov.apply(&mut file);
    resolve(file, ov.override_validation).map_err(Error::Scenario)
}

fn require<T: Clone>(v: &Option<T>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    if v.is_none() {
        errs.push(format!("{key} is required"));
    }
    v.clone()
}

fn resolve(
    file: ScenarioFile,
    override_validation: bool,
) -> std::result::Result<Scenario, Vec<String>> {
    let mut errs = Vec::new();
    let space = resolve_space(file.space.as_ref(), &mut errs);
    let problem = space.and_then(|s| resolve_problem(file.problem.as_ref(), &s, &mut errs));
    if file.problem.is_none() {
        errs.push("missing [problem] block".into());
    }
    let gains = problem
        .as_ref()
        .and_then(|p| resolve_gains(file.gains.as_ref(), p, &mut errs));
    if file.gains.is_none() {
        errs.push("missing [gains] block (set mu and gamma, or \"auto\")".into());
    }
    let (alpha, beta) = match (&file.schedules, &problem) {
        (None, _) => {
            errs.push("missing [schedules] block".into());
            (None, None)
        }
        (Some(s), p) => resolve_schedules(s, p.as_ref(), &mut errs),
    };

    let output = file.output.clone().unwrap_or_default();
    let cadence = output.cadence.unwrap_or(DEFAULT_CADENCE);
    if cadence == 0 {
        errs.push("output.cadence must be at least 1".into());
    }
    let certify = resolve_certify(file.certify.as_ref(), &mut errs);

    if file.algorithms.is_empty() {
        errs.push("at least one [[algorithm]] block is required".into());
    }
    let mut runs = Vec::new();
    let mut validation_failures = Vec::new();
    for (i, block) in file.algorithms.iter().enumerate() {
        let label = format!("algorithm[{i}]");
        let Some(mode_str) = require(&block.mode, &format!("{label}.mode"), &mut errs) else {
            continue;
        };
        let name = block.name.clone().unwrap_or_else(|| mode_str.clone());
        if runs.iter().any(|r: &RunSpec| r.name == name) {
            errs.push(format!("{label}: duplicate run name '{name}'"));
        }
        let (mode, preset) = match mode_str.as_str() {
            "synchronal" => (Mode::Synchronal, None),
            "cyclic" => (Mode::Cyclic, None),
            other => match Preset::parse(other) {
                Ok(p) => (p.mode(), Some(p)),
                Err(e) => {
                    errs.push(format!("{label}.mode: {e}; or use synchronal / cyclic"));
                    continue;
                }
            },
        };
        let (Some(problem), Some(gains), Some(alpha), Some(beta)) =
            (&problem, &gains, &alpha, &beta)
        else {
            continue;
        };
        let dim = problem.dim();
        let x0 = match &block.x0 {
            Some(v) if v.len() != dim => {
                errs.push(format!("{label}.x0 has length {}, expected {dim}", v.len()));
                continue;
            }
            Some(v) if v.iter().any(|c| !c.is_finite()) => {
                errs.push(format!("{label}.x0 must be finite"));
                continue;
            }
            Some(v) => Vector(v.clone()),
            None => Vector::zeros(dim),
        };
        let defaults = Stopping::default();
        let stopping = Stopping {
            max_iter: block.max_iter.unwrap_or(defaults.max_iter),
            step_tol: block.step_tol.unwrap_or(defaults.step_tol),
            residual_tol: block.residual_tol.unwrap_or(defaults.residual_tol),
        };
        let mut cfg = AlgorithmConfig::new(
            problem.clone(),
            *gains,
            alpha.clone(),
            beta.clone(),
            x0,
            mode,
        );
        cfg.stopping = stopping;
        cfg.cadence = cadence.max(1);
        cfg.record_iterates = output.record_iterates.unwrap_or(false);
        cfg.override_validation = override_validation;
        if let Some(p) = preset {
            match iterate::apply_preset(&cfg, p) {
                Ok(c) => cfg = c,
                Err(e) => {
                    errs.push(format!("{label}: {e}"));
                    continue;
                }
            }
        }
        if let Err(e) = cfg.check() {
            errs.push(format!("{label}: {e}"));
            continue;
        }
        let report = cfg.validate();
        let failures: Vec<String> = report
            .failures()
            .into_iter()
            .map(|f| format!("{name}: validation: {f}"))
            .collect();
        if override_validation {
            validation_failures.extend(failures);
        } else {
            errs.extend(failures);
        }
        runs.push(RunSpec { name, config: cfg });
    }

    if !errs.is_empty() {
        return Err(errs);
    }
    let (problem, gains, alpha, beta) = (
        problem.unwrap(),
        gains.unwrap(),
        alpha.unwrap(),
        beta.unwrap(),
    );
    Ok(Scenario {
        name: file.name.clone().unwrap_or_else(|| "scenario".into()),
        out_dir: PathBuf::from(output.dir.clone().unwrap_or_else(|| "out".into())),
        record_iterates: output.record_iterates.unwrap_or(false),
        file,
        problem,
        gains,
        alpha,
        beta,
        runs,
        cadence,
        certify,
        override_validation,
        validation_failures,
    })
}

fn resolve_space(b: Option<&SpaceBlock>, errs: &mut Vec<String>) -> Option<SpaceSpec> {
    let Some(b) = b else {
        errs.push("missing [space] block".into());
        return None;
    };
    let dim = require(&b.dim, "space.dim", errs);
    let p = require(&b.p, "space.p", errs);
    let (dim, p) = (dim?, p?);
    let q = b.q.unwrap_or(if p >= 2.0 { 2.0 } else { p });
    let Some(d_q) = b.d_q.or_else(|| space::default_smoothness_constant(p, q)) else {
        errs.push(format!(
            "space.d_q is required for p = {p}, q = {q}: no default smoothness constant"
        ));
        return None;
    };
    let s = match SpaceSpec::new(dim, p, q, d_q) {
        Ok(s) => s,
        Err(e) => {
            errs.push(format!("space: {e}"));
            return None;
        }
    };
    let report = space::validate_space(&s);
    if !report.accepted {
        errs.extend(report.errors.iter().map(|e| format!("space: {e}")));
        return None;
    }
    Some(s)
}

fn resolve_problem(
    b: Option<&ProblemBlock>,
    s: &SpaceSpec,
    errs: &mut Vec<String>,
) -> Option<ProblemInstance> {
    let b = b?;
    let source = require(&b.source, "problem.source", errs)?;
    let explicit_only = [
        ("weights", b.weights.is_some()),
        ("contraction", b.contraction.is_some()),
        ("accretive", b.accretive.is_some()),
        ("fixed_set", b.fixed_set.is_some()),
        ("operator", !b.operator_list.is_empty()),
    ];
    let generated_only = [
        ("seed", b.seed.is_some()),
        ("operators", b.operators.is_some()),
        ("knobs", b.knobs.is_some()),
    ];
    let mut misplaced = |keys: &[(&str, bool)], kind: &str| {
        for (k, set) in keys {
            if *set {
                errs.push(format!("problem.{k} only applies to {kind} problems"));
            }
        }
    };
    match source {
        ProblemSource::Canonical => {
            misplaced(&explicit_only, "explicit");
            misplaced(&generated_only, "generated");
            if *s != SpaceSpec::hilbert(2) {
                errs.push(
                    "the canonical problem needs space dim = 2, p = 2, q = 2, d_q = 1".into(),
                );
                return None;
            }
            Some(ProblemInstance::canonical())
        }
        ProblemSource::Generated => {
            misplaced(&explicit_only, "explicit");
            let n_ops = require(&b.operators, "problem.operators", errs)?;
            let knobs = b.knobs.clone().unwrap_or_default();
            operators::generate_problem(b.seed.unwrap_or(0), s.dim, n_ops, s, &knobs)
                .map_err(|e| errs.push(format!("problem: {e}")))
                .ok()
        }
        ProblemSource::Explicit => {
            misplaced(&generated_only, "generated");
            explicit_problem(b, s, errs)
        }
    }
}

fn explicit_problem(
    b: &ProblemBlock,
    s: &SpaceSpec,
    errs: &mut Vec<String>,
) -> Option<ProblemInstance> {
    let before = errs.len();
    if b.operator_list.is_empty() {
        errs.push("problem: at least one [[problem.operator]] is required".into());
    }
    let ops: Vec<Operator> = b
        .operator_list
        .iter()
        .enumerate()
        .filter_map(|(i, m)| build_map(m, s.dim, &format!("problem.operator[{i}]"), errs))
        .collect();
    let n = b.operator_list.len().max(1);
    let weights = b.weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    if weights.len() != b.operator_list.len() {
        errs.push(format!(
            "problem.weights has {} entries for {} operators",
            weights.len(),
            b.operator_list.len()
        ));
    }
    let f = require(&b.contraction, "problem.contraction", errs)
        .and_then(|m| build_map(&m, s.dim, "problem.contraction", errs));
    let g = require(&b.accretive, "problem.accretive", errs)
        .and_then(|m| build_map(&m, s.dim, "problem.accretive", errs));
    let fixed_set = match &b.fixed_set {
        None => None,
        Some(fs) => {
            let anchor = fs.anchor.clone().unwrap_or_else(|| vec![0.0; s.dim]);
            match AffineSubspace::new(
                Vector(anchor),
                fs.basis.iter().cloned().map(Vector).collect(),
            ) {
                Ok(a) if a.ambient_dim() == s.dim => Some(a),
                Ok(a) => {
                    errs.push(format!(
                        "problem.fixed_set lives in dimension {}, expected {}",
                        a.ambient_dim(),
                        s.dim
                    ));
                    None
                }
                Err(e) => {
                    errs.push(format!("problem.fixed_set: {e}"));
                    None
                }
            }
        }
    };
    if errs.len() > before {
        return None;
    }
    let problem = ProblemInstance {
        space: *s,
        operators: ops,
        weights,
        contraction: f?,
        accretive: g?,
        fixed_set,
    };
    match problem.validate() {
        Ok(()) => Some(problem),
        Err(e) => {
            errs.push(format!("problem: {e}"));
            None
        }
    }
}

fn build_map(b: &MapBlock, dim: usize, label: &str, errs: &mut Vec<String>) -> Option<Operator> {
    let given = [b.diag.is_some(), b.matrix.is_some(), b.scale.is_some()]
        .iter()
        .filter(|x| **x)
        .count();
    if given != 1 {
        errs.push(format!("{label}: give exactly one of diag, matrix, scale"));
        return None;
    }
    let offset = b.offset.clone().unwrap_or_else(|| vec![0.0; dim]);
    if offset.len() != dim {
        errs.push(format!(
            "{label}.offset has length {}, expected {dim}",
            offset.len()
        ));
        return None;
    }
    let built = if let Some(d) = &b.diag {
        if d.len() != dim {
            errs.push(format!(
                "{label}.diag has length {}, expected {dim}",
                d.len()
            ));
            return None;
        }
        Operator::diagonal(d.clone(), Vector(offset))
    } else if let Some(rows) = &b.matrix {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            errs.push(format!("{label}.matrix must be {dim}x{dim}"));
            return None;
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Operator::affine(DMatrix::from_row_slice(dim, dim, &flat), Vector(offset))
    } else {
        if offset.iter().any(|v| *v != 0.0) {
            errs.push(format!(
                "{label}: a scaled identity takes no offset; use diag instead"
            ));
            return None;
        }
        Operator::scaled_identity(b.scale.unwrap())
    };
    let mut op = built.map_err(|e| errs.push(format!("{label}: {e}"))).ok()?;
    let claims: [(Option<f64>, fn(Operator, f64) -> Result<Operator>); 4] = [
        (b.contraction, Operator::with_contraction),
        (b.lipschitz, Operator::with_lipschitz),
        (b.accretive, Operator::with_accretive),
        (b.strictness, Operator::with_strictness),
    ];
    for (value, set) in claims {
        if let Some(v) = value {
            op = set(op, v)
                .map_err(|e| errs.push(format!("{label}: {e}")))
                .ok()?;
        }
    }
    if b.nonexpansive == Some(true) {
        op = op.with_nonexpansive();
    }
    Some(op)
}

fn resolve_gains(
    b: Option<&GainsBlock>,
    problem: &ProblemInstance,
    errs: &mut Vec<String>,
) -> Option<Gains> {
    let b = b?;
    let s = &problem.space;
    let before = errs.len();
    let beta = b.beta.or(problem.contraction.claims.contraction);
    let eta = b.eta.or(problem.accretive.claims.accretive);
    let lipschitz = b.lipschitz.or(problem.accretive.claims.lipschitz);
    for (v, key, claim) in [
        (beta, "gains.beta", "contraction coefficient of f"),
        (eta, "gains.eta", "accretivity constant of G"),
        (lipschitz, "gains.lipschitz", "Lipschitz constant of G"),
    ] {
        if v.is_none() {
            errs.push(format!(
                "{key} is required: the problem declares no {claim}"
            ));
        }
    }
    let mu = match require(&b.mu, "gains.mu", errs)? {
        GainValue::Value(v) => Some(v),
        GainValue::Keyword(k) if k == "auto" => None,
        GainValue::Keyword(k) => {
            errs.push(format!(
                "gains.mu: expected a number or \"auto\", found \"{k}\""
            ));
            return None;
        }
    };
    let gamma = match (&b.gamma, b.gamma_ratio) {
        (Some(_), Some(_)) => {
            errs.push("gains: give gamma or gamma_ratio, not both".into());
            return None;
        }
        (None, None) => {
            errs.push("gains.gamma is required (a number, \"auto\", or gamma_ratio)".into());
            return None;
        }
        (None, Some(r)) => GammaRule::Ratio(r),
        (Some(GainValue::Value(v)), None) => GammaRule::Value(*v),
        (Some(GainValue::Keyword(k)), None) if k == "auto" => GammaRule::Ratio(0.5),
        (Some(GainValue::Keyword(k)), None) => {
            errs.push(format!(
                "gains.gamma: expected a number or \"auto\", found \"{k}\""
            ));
            return None;
        }
    };
    if errs.len() > before {
        return None;
    }
    let (beta, eta, lipschitz) = (beta?, eta?, lipschitz?);
    let mu = match mu {
        Some(v) => v,
        None => match params::mu_upper_bound(eta, lipschitz, s.q, s.d_q) {
            Ok(bound) => 0.5 * bound,
            Err(e) => {
                errs.push(format!("gains.mu = \"auto\": {e}"));
                return None;
            }
        },
    };
    let mut g = Gains::new(mu, 0.0, beta, eta, lipschitz, s.q, s.d_q);
    g.gamma = match gamma {
        GammaRule::Value(v) => v,
        GammaRule::Ratio(r) => r * g.gamma_upper_bound(),
    };
    if !g.tau.is_finite() || !g.gamma.is_finite() {
        errs.push(format!(
            "gains: non-finite derived values (tau = {}, gamma = {})",
            g.tau, g.gamma
        ));
        return None;
    }
    Some(g)
}

enum GammaRule {
    Value(f64),
    Ratio(f64),
}

fn resolve_schedules(
    b: &SchedulesBlock,
    problem: Option<&ProblemInstance>,
    errs: &mut Vec<String>,
) -> (Option<Schedule>, Option<Schedule>) {
    let alpha = require(&b.alpha, "schedules.alpha", errs).filter(|a| match a.check() {
        Ok(()) => true,
        Err(e) => {
            errs.push(format!("schedules.alpha: {e}"));
            false
        }
    });
    let beta = match (&b.beta, problem) {
        (Some(s), _) => match s.check() {
            Ok(()) => Some(s.clone()),
            Err(e) => {
                errs.push(format!("schedules.beta: {e}"));
                None
            }
        },
        (None, Some(p)) => match auto_beta(p) {
            Ok(b) => Some(Schedule::Constant { b }),
            Err(e) => {
                errs.push(format!(
                    "schedules.beta omitted and no automatic value exists: {e}"
                ));
                None
            }
        },
        (None, None) => None,
    };
    (alpha, beta)
}

/// Smallest constant `beta` at least every strictness constant and the
/// averaging threshold of the weakest operator.
pub fn auto_beta(problem: &ProblemInstance) -> Result<f64> {
    let s = &problem.space;
    let k_max = problem
        .strictness_max()
        .ok_or(Error::MissingConstant("strictness of every T_i"))?;
    let k_min = problem
        .strictness_min()
        .ok_or(Error::MissingConstant("strictness of every T_i"))?;
    let floor = params::averaging_threshold(k_min, s.q, s.d_q)?;
    let b = k_max.max(floor);
    if b >= 1.0 {
        return Err(Error::Precondition(format!(
            "required beta {b} is not below 1"
        )));
    }
    Ok(b)
}

fn resolve_certify(b: Option<&CertifyBlock>, errs: &mut Vec<String>) -> Option<CertifySpec> {
    let b = b.cloned().unwrap_or_default();
    if b.enabled == Some(false) {
        return None;
    }
    let base = SamplePlan::with_seed(b.seed.unwrap_or(0));
    let plan = SamplePlan::new(
        base.seed,
        b.samples.unwrap_or(base.count),
        b.radius.unwrap_or(base.radius),
        b.distribution.unwrap_or(base.distribution),
    );
    match plan {
        Ok(plan) => Some(CertifySpec {
            plan,
            t_grid: b.t_grid,
        }),
        Err(e) => {
            errs.push(format!("certify: {e}"));
            None
        }
    }
}

// ---------------------------------------------------------------------------
// certification

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationSummary {
    pub passed: bool,
    pub skipped: bool,
    pub reports: Vec<CertificateReport>,
}

impl CertificationSummary {
    pub fn failures(&self) -> Vec<String> {
        self.reports.iter().flat_map(|r| r.failures()).collect()
    }
}

fn failed_report(property: &str, note: String) -> CertificateReport {
    CertificateReport {
        property: property.into(),
        passed: false,
        worst_margin: f64::NAN,
        witness: None,
        samples: 0,
        tolerance: certify::TOLERANCE,
        notes: vec![note],
        parts: Vec::new(),
    }
}

/// Five points spread over `(0, min(1, 1/tau)]`.
pub fn default_t_grid(tau: f64) -> Vec<f64> {
    let cap = if tau > 0.0 { 1f64.min(1.0 / tau) } else { 1.0 };
    [0.1, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| f * cap)
        .collect()
}

/// Space inequalities, every claimed operator constant, the step contraction
/// of `I - t mu G` and the averaged maps at the first `beta` term.
pub fn certify_scenario(sc: &Scenario) -> CertificationSummary {
    let Some(spec) = &sc.certify else {
        return CertificationSummary {
            passed: true,
            skipped: true,
            reports: Vec::new(),
        };
    };
    let s = &sc.problem.space;
    let plan = &spec.plan;
    let mut reports = vec![certify::certify_space_inequalities(s, plan)];
    let mut claim = |op: &Operator, label: &str| {
        reports.push(
            certify::certify_claims(op, s, plan, label)
                .unwrap_or_else(|e| failed_report(label, e.to_string())),
        );
    };
    for (i, t) in sc.problem.operators.iter().enumerate() {
        claim(t, &format!("T{}", i + 1));
    }
    claim(&sc.problem.contraction, "f");
    claim(&sc.problem.accretive, "G");

    let g = &sc.gains;
    let grid = spec.t_grid.clone().unwrap_or_else(|| default_t_grid(g.tau));
    reports.push(
        certify::certify_step_contraction(&sc.problem.accretive, g.mu, &grid, g.tau, s, plan)
            .unwrap_or_else(|e| failed_report("step-contraction", e.to_string())),
    );
    let b0 = sc.beta.term(0);
    for (i, t) in sc.problem.operators.iter().enumerate() {
        let Some(k) = t.claims.strictness else {
            continue;
        };
        let Ok(threshold) = params::averaging_threshold(k, s.q, s.d_q) else {
            continue;
        };
        if b0 >= threshold && b0 < 1.0 {
            let mut r = certify::certify_averaged(t, k, b0, s, plan)
                .unwrap_or_else(|e| failed_report("averaged", e.to_string()));
            r.property = format!("T{}: {}", i + 1, r.property);
            reports.push(r);
        }
    }
    CertificationSummary {
        passed: reports.iter().all(|r| r.passed),
        skipped: false,
        reports,
    }
}

// ---------------------------------------------------------------------------
// oracle

/// Direct solution in Hilbert space, `None` in `l_p`, or the reason it failed.
pub fn oracle_for(
    problem: &ProblemInstance,
    gains: &Gains,
) -> (Option<OracleResult>, Option<String>) {
    if !problem.space.is_hilbert() {
        return (
            None,
            Some("no direct solver in l_p; VI residuals use fixed-set probes".into()),
        );
    }
    match oracle::solve_vi_affine(problem, gains) {
        Ok(r) => (Some(r), None),
        Err(direct) => match oracle::solve_vi_projected(problem, gains, 1e-12, None, 1_000_000) {
            Ok(r) => (
                Some(r),
                Some(format!(
                    "direct solve failed ({direct}); used projected iteration"
                )),
            ),
            Err(e) => (None, Some(format!("no oracle: {direct}; {e}"))),
        },
    }
}

/// The oracle for the scenario's base problem and gains.
pub fn scenario_oracle(sc: &Scenario) -> (Option<OracleResult>, Option<String>) {
    oracle_for(&sc.problem, &sc.gains)
}

/// Limit of a long synchronal run, the reference point in `l_p`.
pub fn long_run_reference(sc: &Scenario) -> Result<OracleResult> {
    let fs = sc
        .problem
        .common_fixed_set()
        .ok_or_else(|| Error::Precondition("the problem has no known common fixed set".into()))?;
    let base = sc
        .runs
        .first()
        .ok_or_else(|| Error::Precondition("no runs".into()))?;
    let mut cfg = base.config.clone();
    cfg.mode = Mode::Synchronal;
    cfg.preset = None;
    cfg.cadence = cfg.stopping.max_iter.max(1);
    cfg.stopping.step_tol = f64::MIN_POSITIVE;
    cfg.stopping.residual_tol = f64::MIN_POSITIVE;
    let trace = iterate::run_config(&cfg)?;
    let probes = oracle::fixed_set_probes(&fs, PROBE_COUNT, PROBE_SEED);
    let vi = oracle::vi_residual(&trace.final_x, &sc.problem, &sc.gains, &probes)?;
    Ok(OracleResult {
        fixed_set_distance: fs.euclidean_distance(&trace.final_x),
        x_star: trace.final_x,
        method: OracleMethod::LongRunReference,
        vi_residual: vi,
        iterations: trace.iterations,
    })
}

fn reference_for(problem: &ProblemInstance, oracle: Option<&OracleResult>) -> Option<Reference> {
    let probes = problem
        .common_fixed_set()
        .map(|fs| oracle::fixed_set_probes(&fs, PROBE_COUNT, PROBE_SEED))
        .unwrap_or_default();
    let x_star = oracle.map(|o| o.x_star.clone());
    (x_star.is_some() || !probes.is_empty()).then_some(Reference { x_star, probes })
}

// ---------------------------------------------------------------------------
// summaries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResiduals {
    pub step_norm: Option<f64>,
    pub fixpoint: f64,
    pub window: Option<f64>,
    pub vi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsEcho {
    pub mu: f64,
    pub gamma: f64,
    pub tau: f64,
    pub beta: f64,
    pub eta: f64,
    pub lipschitz: f64,
    pub q: f64,
    pub d_q: f64,
    pub mu_upper_bound: f64,
    pub gamma_upper_bound: f64,
    pub gap: f64,
    pub alpha_cap: f64,
}

impl From<&Gains> for GainsEcho {
    fn from(g: &Gains) -> Self {
        Self {
            mu: g.mu,
            gamma: g.gamma,
            tau: g.tau,
            beta: g.beta,
            eta: g.eta,
            lipschitz: g.lipschitz,
            q: g.q,
            d_q: g.d_q,
            mu_upper_bound: g.mu_upper_bound(),
            gamma_upper_bound: g.gamma_upper_bound(),
            gap: g.gap(),
            alpha_cap: g.alpha_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEcho {
    pub passed: bool,
    pub override_used: bool,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub flags: ConditionFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEcho {
    pub method: Option<OracleMethod>,
    pub x_star: Option<Vector>,
    pub vi_residual: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEcho {
    pub min_slack: Option<f64>,
    pub at: Option<usize>,
}

/// Per-run summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub run: String,
    pub mode: Mode,
    pub preset: Option<String>,
    pub status: TerminalStatus,
    pub iterations: usize,
    pub final_residuals: FinalResiduals,
    pub dist_to_oracle: Option<f64>,
    pub final_x: Vector,
    pub gains: GainsEcho,
    pub validation: ValidationEcho,
    pub certificates: CertificationSummary,
    pub oracle: OracleEcho,
    pub bound: BoundEcho,
    pub alpha_clamped: usize,
    pub step_contraction: Option<StepContractionCheck>,
    pub wall_clock_seconds: f64,
    pub exit_code: i32,
}

/// 0 iff converged, every certificate passed and validation was not
/// overridden.
pub fn exit_code(status: TerminalStatus, certificates_passed: bool, override_used: bool) -> i32 {
    i32::from(!(status == TerminalStatus::Converged && certificates_passed && !override_used))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub certificates: CertificationSummary,
    pub oracle: Option<OracleResult>,
    pub runs: Vec<RunOutcome>,
    /// Largest per-run exit code.
    pub exit_code: i32,
}

/// Certifies, validates, solves the oracle, runs every algorithm block (one
/// thread per run) and writes the artifacts under `sc.out_dir`.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioOutcome> {
    let certificates = certify_scenario(sc);
    let (oracle, _) = scenario_oracle(sc);

    let results: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sc
            .runs
            .iter()
            .map(|spec| {
                let certificates = &certificates;
                scope.spawn(move || run_one(sc, spec, certificates))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&sc.out_dir)?;
    for r in &runs {
        let stem = sc.out_dir.join(file_stem(&r.summary.run));
        write_trace_csv(&r.trace, &stem.with_extension("trace.csv"))?;
        emit_plotdata(&r.trace, &stem.with_extension("plot.csv"))?;
        write_json(&r.summary, &stem.with_extension("summary.json"))?;
    }
    let exit_code = runs.iter().map(|r| r.summary.exit_code).max().unwrap_or(0);
    Ok(ScenarioOutcome {
        certificates,
        oracle,
        runs,
        exit_code,
    })
}

fn run_one(
    sc: &Scenario,
    spec: &RunSpec,
    certificates: &CertificationSummary,
) -> Result<RunOutcome> {
    let mut cfg = spec.config.clone();
    let (oracle, note) = oracle_for(&cfg.problem, &cfg.gains);
    cfg.reference = reference_for(&cfg.problem, oracle.as_ref());
    let oracle = OracleEcho {
        method: oracle.as_ref().map(|o| o.method),
        x_star: oracle.as_ref().map(|o| o.x_star.clone()),
        vi_residual: oracle.as_ref().map(|o| o.vi_residual),
        note,
    };
    let report = cfg.validate();
    let started = Instant::now();
    let trace = iterate::run_config(&cfg)?;
    let wall = started.elapsed().as_secs_f64();
    let last = trace.last();
    let override_used = !report.passed;
    let mut warnings = report.gains.notes.clone();
    warnings.extend(report.schedule.warnings.iter().cloned());
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        run: spec.name.clone(),
        mode: cfg.mode,
        preset: cfg.preset.map(|p| p.id().to_string()),
        status: trace.status,
        iterations: trace.iterations,
        final_residuals: FinalResiduals {
            step_norm: last.step_norm,
            fixpoint: last.fixpoint_residual,
            window: last.window_residual,
            vi: last.vi_residual,
        },
        dist_to_oracle: last.dist_to_oracle,
        final_x: trace.final_x.clone(),
        gains: GainsEcho::from(&cfg.gains),
        validation: ValidationEcho {
            passed: report.passed,
            override_used,
            failures: report.failures(),
            warnings,
            flags: report.schedule.flags.clone(),
        },
        certificates: certificates.clone(),
        oracle,
        bound: BoundEcho {
            min_slack: trace.min_bound_slack,
            at: trace.min_bound_slack_at,
        },
        alpha_clamped: trace.alpha_clamped,
        step_contraction: trace.step_contraction.clone(),
        wall_clock_seconds: wall,
        exit_code: exit_code(trace.status, certificates.passed, override_used),
    };
    Ok(RunOutcome { summary, trace })
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV output

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            num(r.alpha),
            num(r.beta),
            opt(r.step_norm),
            num(r.fixpoint_residual),
            opt(r.window_residual),
            opt(r.bound_slack),
            opt(r.vi_residual),
            opt(r.dist_to_oracle)
        );
    }
    out
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    fs::write(path, trace_csv(trace))?;
    Ok(())
}

/// Residual series for external plotting. Every row but the last has status
/// `running`; the last carries the terminal status.
pub fn plotdata_csv(trace: &Trace) -> Result<String> {
    if trace.records.is_empty() {
        return Err(Error::Precondition("empty trace".into()));
    }
    let mut out = PLOT_COLUMNS.join(",");
    out.push('\n');
    let last = trace.records.len() - 1;
    for (i, r) in trace.records.iter().enumerate() {
        let status = if i == last {
            trace.status.as_str()
        } else {
            "running"
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            opt(r.step_norm),
            num(r.fixpoint_residual),
            opt(r.window_residual),
            opt(r.vi_residual),
            status
        );
    }
    Ok(out)
}

pub fn emit_plotdata(trace: &Trace, path: &Path) -> Result<()> {
    fs::write(path, plotdata_csv(trace)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub mode: Mode,
    pub preset: Option<String>,
    pub status: TerminalStatus,
    pub iterations: usize,
    /// Iterations used when the run converged.
    pub iterations_to_tolerance: Option<usize>,
    pub step_norm: Option<f64>,
    pub fixpoint_residual: f64,
    pub window_residual: Option<f64>,
    pub vi_residual: Option<f64>,
    pub dist_to_oracle: Option<f64>,
    pub final_x: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub pairs: Vec<PairDistance>,
}

fn same_problem(a: &ProblemInstance, b: &ProblemInstance) -> bool {
    let fixed = match (a.common_fixed_set(), b.common_fixed_set()) {
        (Some(x), Some(y)) => {
            x.dim() == y.dim()
                && y.contains(&x.anchor, 1e-9)
                && x.basis.iter().all(|v| y.contains(&y.anchor.add(v), 1e-9))
        }
        (None, None) => true,
        _ => false,
    };
    a.space == b.space && a.contraction == b.contraction && a.accretive == b.accretive && fixed
}

/// Runs each configuration concurrently and tabulates the results. All
/// configurations must pose the same variational inequality: same space, `f`,
/// `G` and common fixed set (presets may replace the operator family).
pub fn compare(cfgs: &[(String, AlgorithmConfig)]) -> Result<ComparisonTable> {
    let Some((_, first)) = cfgs.first() else {
        return Err(Error::Precondition("nothing to compare".into()));
    };
    if let Some((name, _)) = cfgs
        .iter()
        .find(|(_, c)| !same_problem(&first.problem, &c.problem))
    {
        return Err(Error::Precondition(format!(
            "mismatched problems: '{name}' differs from '{}'",
            cfgs[0].0
        )));
    }
    let traces: Vec<Result<Trace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|(_, c)| scope.spawn(move || iterate::run_config(c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let entries: Vec<(&str, &AlgorithmConfig, &Trace)> = cfgs
        .iter()
        .zip(&traces)
        .map(|((n, c), t)| (n.as_str(), c, t))
        .collect();
    Ok(tabulate(&entries))
}

/// Builds the table from finished runs.
pub fn tabulate(entries: &[(&str, &AlgorithmConfig, &Trace)]) -> ComparisonTable {
    let rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(name, cfg, t)| {
            let last = t.last();
            ComparisonRow {
                name: name.to_string(),
                mode: cfg.mode,
                preset: cfg.preset.map(|p| p.id().to_string()),
                status: t.status,
                iterations: t.iterations,
                iterations_to_tolerance: (t.status == TerminalStatus::Converged)
                    .then_some(t.iterations),
                step_norm: last.step_norm,
                fixpoint_residual: last.fixpoint_residual,
                window_residual: last.window_residual,
                vi_residual: last.vi_residual,
                dist_to_oracle: last.dist_to_oracle,
                final_x: t.final_x.clone(),
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let s = entries[i].1.space();
            let d = space::norm(&entries[i].2.final_x.sub(&entries[j].2.final_x), s)
                .unwrap_or(f64::NAN);
            pairs.push(PairDistance {
                a: rows[i].name.clone(),
                b: rows[j].name.clone(),
                distance: d,
            });
        }
    }
    ComparisonTable { rows, pairs }
}

fn short(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let header = [
            "run",
            "mode",
            "status",
            "iterations",
            "to_tol",
            "step",
            "fixpoint",
            "window",
            "vi",
            "oracle_dist",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            lines.push(vec![
                r.name.clone(),
                r.preset
                    .clone()
                    .unwrap_or_else(|| format!("{:?}", r.mode).to_lowercase()),
                r.status.as_str().into(),
                r.iterations.to_string(),
                r.iterations_to_tolerance
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| "-".into()),
                short(r.step_norm),
                short(Some(r.fixpoint_residual)),
                short(r.window_residual),
                short(r.vi_residual),
                short(r.dist_to_oracle),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if !self.pairs.is_empty() {
            out.push_str("\nlimit distances\n");
            for p in &self.pairs {
                let _ = writeln!(out, "{} vs {}: {:.3e}", p.a, p.b, p.distance);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "run,mode,preset,status,iterations,iterations_to_tolerance,step_norm,fixpoint_residual,window_residual,vi_residual,dist_to_oracle\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                format!("{:?}", r.mode).to_lowercase(),
                r.preset.clone().unwrap_or_default(),
                r.status.as_str(),
                r.iterations,
                r.iterations_to_tolerance
                    .map(|n| n.to_string())
                    .unwrap_or_default(),
                opt(r.step_norm),
                num(r.fixpoint_residual),
                opt(r.window_residual),
                opt(r.vi_residual),
                opt(r.dist_to_oracle)
            );
        }
        out
    }
}

/// The scenario's runs, each with its oracle reference attached.
pub fn scenario_configs(sc: &Scenario) -> Vec<(String, AlgorithmConfig)> {
    sc.runs
        .iter()
        .map(|r| {
            let mut c = r.config.clone();
            let (oracle, _) = oracle_for(&c.problem, &c.gains);
            c.reference = reference_for(&c.problem, oracle.as_ref());
            (r.name.clone(), c)
        })
        .collect()
}
