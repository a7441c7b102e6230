//! Scenario parsing, pipeline orchestration and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dirac::{analyze, DiracAnalysis, DiracReport};
use crate::dynamics::{evolve_with_halving, flow_from_levels, reversibility, TrajectorySummary};
use crate::exactla::{fmt_rat, int, parse_rat, rat, Mat, Rat};
use crate::kaluza::{
    channel_plane, channel_zero, compactify, KKTower, KaluzaError, SpatialChannel,
};
use crate::model::{
    builtin_bfproca5d, builtin_maxwell5d, builtin_proca5d, ModelError, TheorySpec5D,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kaluza(#[from] KaluzaError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Theory {
    #[value(name = "proca5d")]
    Proca5d,
    #[value(name = "bfproca5d")]
    Bfproca5d,
    #[value(name = "maxwell5d")]
    Maxwell5d,
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theory::Proca5d => "proca5d",
            Theory::Bfproca5d => "bfproca5d",
            Theory::Maxwell5d => "maxwell5d",
        })
    }
}

impl FromStr for Theory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "proca5d" => Ok(Theory::Proca5d),
            "bfproca5d" => Ok(Theory::Bfproca5d),
            "maxwell5d" => Ok(Theory::Maxwell5d),
            other => Err(format!(
                "unknown theory `{other}` (expected proca5d, bfproca5d or maxwell5d)"
            )),
        }
    }
}

impl Theory {
    pub fn build(&self, m: &Rat, radius: &Rat) -> Result<TheorySpec5D, ModelError> {
        match self {
            Theory::Proca5d => builtin_proca5d(m.clone(), radius.clone()),
            Theory::Bfproca5d => builtin_bfproca5d(m.clone(), radius.clone()),
            Theory::Maxwell5d => builtin_maxwell5d(radius.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSpec {
    Zero,
    Plane([Rat; 3]),
}

impl FromStr for ChannelSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "zero" {
            return Ok(ChannelSpec::Zero);
        }
        let Some(rest) = s.strip_prefix("plane:") else {
            return Err(format!(
                "channel `{s}`: expected `zero` or `plane:k1,k2,k3`"
            ));
        };
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("channel `{s}`: plane needs three components"));
        }
        let k: Vec<Rat> = parts
            .iter()
            .map(|p| parse_rat(p.trim()).map_err(|e| format!("channel `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        Ok(ChannelSpec::Plane([
            k[0].clone(),
            k[1].clone(),
            k[2].clone(),
        ]))
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Zero => f.write_str("zero"),
            ChannelSpec::Plane(k) => {
                let c = |r: &Rat| {
                    if r.is_integer() {
                        r.numer().to_string()
                    } else {
                        fmt_rat(r)
                    }
                };
                write!(f, "plane:{},{},{}", c(&k[0]), c(&k[1]), c(&k[2]))
            }
        }
    }
}

impl ChannelSpec {
    pub fn build(&self) -> Result<SpatialChannel, KaluzaError> {
        match self {
            ChannelSpec::Zero => Ok(channel_zero()),
            ChannelSpec::Plane(k) => channel_plane(k[0].clone(), k[1].clone(), k[2].clone()),
        }
    }
}

/// One parameter point `(m, R, k)` for stability re-runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSample {
    pub m: Rat,
    pub radius: Rat,
    pub wavevector: [Rat; 3],
}

impl FromStr for ParamSample {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<Rat> = s
            .split(',')
            .map(|p| parse_rat(p.trim()).map_err(|e| format!("sample `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        if v.len() != 5 {
            return Err(format!("sample `{s}`: expected m,R,k1,k2,k3"));
        }
        Ok(ParamSample {
            m: v[0].clone(),
            radius: v[1].clone(),
            wavevector: [v[2].clone(), v[3].clone(), v[4].clone()],
        })
    }
}

/// `i`-th generated sample. `m R` is never an integer, which keeps the
/// level masses away from accidental cancellation.
pub fn generic_sample(i: usize) -> ParamSample {
    let i = i as i64;
    ParamSample {
        m: rat(2 * i + 3, i + 2),
        radius: rat(i + 3, i + 2),
        wavevector: [rat(1, i + 2), rat(i + 2, 3), rat(-1, 2)],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolveSpec {
    pub steps: usize,
    pub dt: Rat,
    pub every: usize,
}

impl FromStr for EvolveSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut steps = None;
        let mut dt = None;
        let mut every = None;
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("evolve `{s}`: expected key=value pairs"))?;
            match k.trim() {
                "steps" => {
                    steps = Some(
                        v.trim()
                            .parse::<usize>()
                            .map_err(|e| format!("steps: {e}"))?,
                    )
                }
                "dt" => dt = Some(parse_rat(v.trim()).map_err(|e| format!("dt: {e}"))?),
                "every" => {
                    every = Some(
                        v.trim()
                            .parse::<usize>()
                            .map_err(|e| format!("every: {e}"))?,
                    )
                }
                other => return Err(format!("evolve: unknown key `{other}`")),
            }
        }
        let steps = steps.ok_or("evolve: missing steps")?;
        let dt = dt.ok_or("evolve: missing dt")?;
        if dt == int(0) {
            return Err("evolve: dt must be nonzero".into());
        }
        let every = every.unwrap_or_else(|| (steps / 100).max(1));
        if every == 0 {
            return Err("evolve: every must be positive".into());
        }
        Ok(EvolveSpec { steps, dt, every })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub theory: Theory,
    pub m: Rat,
    pub radius: Rat,
    pub levels: u32,
    pub channels: Vec<ChannelSpec>,
    /// Explicit samples; the base parameters are always sample 0.
    pub samples: Vec<ParamSample>,
    /// Number of generated samples appended after the explicit ones.
    pub generated_samples: usize,
    pub evolve: Option<EvolveSpec>,
    /// Overrides and additions to the built-in check table.
    pub expect: BTreeMap<String, Rat>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            theory: Theory::Proca5d,
            m: int(1),
            radius: int(1),
            levels: 1,
            channels: Vec::new(),
            samples: Vec::new(),
            generated_samples: 2,
            evolve: None,
            expect: BTreeMap::new(),
        }
    }
}

pub const DEFAULT_CHANNEL: &str = "plane:1,2,3";

/// Partial scenario: fields a file or the flags set explicitly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioPatch {
    pub theory: Option<Theory>,
    pub m: Option<Rat>,
    pub radius: Option<Rat>,
    pub levels: Option<u32>,
    pub channels: Vec<ChannelSpec>,
    pub samples: Vec<ParamSample>,
    pub generated_samples: Option<usize>,
    pub evolve: Option<EvolveSpec>,
    pub expect: BTreeMap<String, Rat>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_scenario(text: &str) -> Result<ScenarioPatch, CliError> {
    let mut p = ScenarioPatch::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Parse { line, msg };
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{body}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let rat_of = |v: &str| parse_rat(v).map_err(|e| err(format!("{key}: {e}")));
        match key {
            "theory" => p.theory = Some(value.parse().map_err(err)?),
            "m" => p.m = Some(rat_of(value)?),
            "R" | "radius" => p.radius = Some(rat_of(value)?),
            "levels" => p.levels = Some(value.parse().map_err(|e| err(format!("levels: {e}")))?),
            "channel" => p.channels.push(value.parse().map_err(err)?),
            "samples" => {
                p.generated_samples = Some(value.parse().map_err(|e| err(format!("samples: {e}")))?)
            }
            "sample" => p.samples.push(value.parse().map_err(err)?),
            "evolve" => p.evolve = Some(value.parse().map_err(err)?),
            k if k.starts_with("expect.") => {
                let name = &k["expect.".len()..];
                if name.is_empty() {
                    return Err(err("empty expectation key".into()));
                }
                p.expect.insert(name.to_string(), rat_of(value)?);
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    Ok(p)
}

impl Scenario {
    /// Applies `patches` in order; later ones win. Channel, sample and
    /// expectation lists from a later patch replace or extend earlier ones.
    pub fn resolve(patches: &[ScenarioPatch]) -> Result<Scenario, CliError> {
        let mut s = Scenario::default();
        let mut m_set = false;
        for p in patches {
            if let Some(t) = p.theory {
                s.theory = t;
            }
            if let Some(m) = &p.m {
                s.m = m.clone();
                m_set = true;
            }
            if let Some(r) = &p.radius {
                s.radius = r.clone();
            }
            if let Some(k) = p.levels {
                s.levels = k;
            }
            if !p.channels.is_empty() {
                s.channels = p.channels.clone();
            }
            s.samples.extend(p.samples.iter().cloned());
            if let Some(n) = p.generated_samples {
                s.generated_samples = n;
            }
            if p.evolve.is_some() {
                s.evolve = p.evolve.clone();
            }
            for (k, v) in &p.expect {
                s.expect.insert(k.clone(), v.clone());
            }
        }
        if s.theory == Theory::Maxwell5d {
            if m_set && s.m != int(0) {
                return Err(CliError::Input(format!(
                    "maxwell5d fixes m = 0, got m = {}",
                    fmt_rat(&s.m)
                )));
            }
            s.m = int(0);
            for smp in s.samples.iter_mut() {
                smp.m = int(0);
            }
        }
        if s.levels == 0 {
            return Err(CliError::Input("levels must be at least 1".into()));
        }
        if s.channels.is_empty() {
            s.channels
                .push(DEFAULT_CHANNEL.parse().expect("default channel"));
        }
        Ok(s)
    }

    /// Base point, then explicit samples, then generated ones.
    pub fn all_samples(&self) -> Vec<ParamSample> {
        let base_k = self
            .channels
            .iter()
            .find_map(|c| match c {
                ChannelSpec::Plane(k) => Some(k.clone()),
                ChannelSpec::Zero => None,
            })
            .unwrap_or([int(1), int(2), int(3)]);
        let mut out = vec![ParamSample {
            m: self.m.clone(),
            radius: self.radius.clone(),
            wavevector: base_k,
        }];
        out.extend(self.samples.iter().cloned());
        out.extend((0..self.generated_samples).map(|i| {
            let mut g = generic_sample(i);
            if self.theory == Theory::Maxwell5d {
                g.m = int(0);
            }
            g
        }));
        out
    }
}

/// Built-in closed-form expectations, keyed by check name.
pub fn expected_counts(theory: Theory, k: u32) -> Result<BTreeMap<String, Rat>, CliError> {
    if k == 0 {
        return Err(CliError::Input("levels must be at least 1".into()));
    }
    let k = k as i64;
    let mut t = BTreeMap::new();
    let mut put = |key: &str, v: i64| {
        t.insert(key.to_string(), int(v));
    };
    match theory {
        Theory::Proca5d => {
            put("phase", 10 * k - 2);
            put("second", 2 * k);
            put("first", 0);
            put("dof", 4 * k - 1);
        }
        Theory::Maxwell5d => {
            put("phase", 10 * k - 2);
            put("second", 0);
            put("first", 2 * k);
            put("dof", 3 * k - 1);
        }
        Theory::Bfproca5d => {
            put("level0.first", 5);
            put("level0.second", 8);
            put("level0.deficiency", 1);
            for n in 1..k {
                put(&format!("level{n}.first"), 8);
                put(&format!("level{n}.second"), 10);
                put(&format!("level{n}.deficiency"), 4);
            }
            put("first", 5 + 8 * (k - 1));
            put("second", 8 + 10 * (k - 1));
            put("dof", 2 * k - 1);
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------- report

fn rs(r: &Rat) -> String {
    fmt_rat(r)
}

fn rv(v: &[Rat]) -> Vec<String> {
    v.iter().map(rs).collect()
}

fn rm(m: &Mat) -> Vec<Vec<String>> {
    m.to_rows().iter().map(|r| rv(r)).collect()
}

fn per_point(x: usize, d: usize) -> String {
    rs(&Rat::new(x.into(), d.into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub m: String,
    pub radius: String,
    pub wavevector: Vec<String>,
}

impl From<&ParamSample> for SampleReport {
    fn from(s: &ParamSample) -> Self {
        SampleReport {
            m: rs(&s.m),
            radius: rs(&s.radius),
            wavevector: rv(&s.wavevector),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveReport {
    pub steps: usize,
    pub dt: String,
    pub every: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub theory: Theory,
    pub m: String,
    pub radius: String,
    pub levels: u32,
    pub channels: Vec<String>,
    pub samples: Vec<SampleReport>,
    pub evolve: Option<EvolveReport>,
    /// Modelling choices the analysis depends on.
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub label: String,
    pub generation: u32,
    pub family: String,
    pub gradient: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub generation: u32,
    pub constraints: usize,
    pub multipliers_fixed: usize,
    pub new_constraints: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountsReport {
    pub n_phase: String,
    pub primary: String,
    pub first_class: String,
    pub second_class: String,
    pub dof: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub second_class: Vec<String>,
    pub first_class: Vec<Vec<String>>,
    pub c_matrix: Vec<Vec<String>>,
    pub c_second: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierReport {
    pub label: String,
    pub coefficients: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducibilityReport {
    pub families: Vec<String>,
    pub listed: String,
    pub rank: String,
    pub deficiency: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiracChecks {
    pub antisymmetric: bool,
    pub annihilates_second_class: bool,
    pub multipliers_consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub channel: String,
    pub level: u32,
    pub multiplicity: usize,
    pub raw: CountsReport,
    pub per_point: CountsReport,
    pub dof_integral: bool,
    pub generations: u32,
    pub chain_log: Vec<ChainReport>,
    pub phase_variables: Vec<String>,
    pub constraints: Vec<ConstraintReport>,
    pub classification: ClassificationReport,
    pub multipliers: Vec<MultiplierReport>,
    pub reducibility: Vec<ReducibilityReport>,
    /// Listed minus independent over all generated constraints, per point.
    pub total_deficiency: String,
    pub dropped_trivial: Vec<String>,
    pub dirac_matrix: DiracChecks,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TotalsReport {
    pub channel: String,
    pub n_phase: String,
    pub first_class: String,
    pub second_class: String,
    pub dof: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub channel: String,
    pub key: String,
    pub expected: String,
    pub computed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsReport {
    pub channel: String,
    pub steps: usize,
    pub dt: String,
    pub every: usize,
    pub dim: usize,
    pub energy0: String,
    pub max_constraint_drift: String,
    pub max_energy_drift: String,
    pub energy_identity: bool,
    pub constraint_identity: bool,
    pub reversible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleCounts {
    pub sample: SampleReport,
    /// Per level `[first, second, dof]` per point.
    pub levels: Vec<[String; 3]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub samples: Vec<SampleCounts>,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: ScenarioReport,
    pub per_level: Vec<LevelReport>,
    pub totals: Vec<TotalsReport>,
    pub checks: Vec<CheckReport>,
    pub dynamics: Option<DynamicsReport>,
    pub stability: StabilityReport,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
            && self.stability.stable
            && self.per_level.iter().all(|l| l.dof_integral)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        self.text_body()
    }

    fn text_body(&self) -> String {
        let mut out = String::new();
        let sc = &self.scenario;
        out += &format!(
            "theory {}  m={}  R={}  levels={}\n",
            sc.theory,
            plain(&sc.m),
            plain(&sc.radius),
            sc.levels
        );
        for f in &sc.flags {
            out += &format!("note: {f}\n");
        }
        out += "\nchannel          level  phase  first  second  dof   deficiency  generations\n";
        for l in &self.per_level {
            out += &format!(
                "{:<16} {:>5}  {:>5}  {:>5}  {:>6}  {:>4}  {:>10}  {:>11}\n",
                l.channel,
                l.level,
                plain(&l.per_point.n_phase),
                plain(&l.per_point.first_class),
                plain(&l.per_point.second_class),
                plain(&l.per_point.dof),
                plain(&l.total_deficiency),
                l.generations
            );
        }
        out += "\ntotals per point\n";
        for t in &self.totals {
            out += &format!(
                "{:<16} phase {}  first {}  second {}  dof {}\n",
                t.channel,
                plain(&t.n_phase),
                plain(&t.first_class),
                plain(&t.second_class),
                plain(&t.dof)
            );
        }
        if !self.checks.is_empty() {
            out += "\nchecks\n";
            for c in &self.checks {
                out += &format!(
                    "{} {:<16} {:<26} expected {:>6} computed {:>6}\n",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.channel,
                    c.key,
                    plain(&c.expected),
                    plain(&c.computed)
                );
            }
        }
        if let Some(d) = &self.dynamics {
            out += &format!(
                "\ndynamics on {}: {} steps at dt={}  constraint drift {}  energy drift {}  reversible {}\n",
                d.channel, d.steps, plain(&d.dt), plain(&d.max_constraint_drift), plain(&d.max_energy_drift), d.reversible
            );
        }
        out += &format!(
            "\nstability over {} samples: {}\n",
            self.stability.samples.len(),
            if self.stability.stable {
                "stable"
            } else {
                "UNSTABLE"
            }
        );
        out
    }
}

/// `7/1` → `7` for the text format.
fn plain(s: &str) -> &str {
    s.strip_suffix("/1").unwrap_or(s)
}

fn dirac_checks(a: &DiracAnalysis) -> DiracChecks {
    let d = &a.report.dirac_matrix;
    let annihilates = a
        .classification
        .second_class
        .iter()
        .all(|&i| crate::exactla::is_zero_vec(&d.mul_vec(&a.tower.constraints[i].grad)));
    // h + C λ = 0 for every second-class constraint
    let om = &a.tower.omega;
    let consistent = a.classification.second_class.iter().all(|&i| {
        let g = &a.tower.constraints[i].grad;
        let mut f = crate::dirac::bracket_with_form(om, g, &a.hc.form);
        for (m, &j) in a
            .report
            .multipliers
            .iter()
            .zip(&a.classification.second_class)
        {
            let c = crate::dirac::bracket(om, g, &a.tower.constraints[j].grad);
            crate::exactla::axpy(&mut f, &c, &m.functional);
        }
        crate::exactla::is_zero_vec(&f)
    });
    DiracChecks {
        antisymmetric: d.is_antisymmetric(),
        annihilates_second_class: annihilates,
        multipliers_consistent: consistent,
    }
}

fn counts(r: &DiracReport, d: usize) -> CountsReport {
    CountsReport {
        n_phase: per_point(r.n_phase, d),
        primary: per_point(r.primary, d),
        first_class: per_point(r.first_class, d),
        second_class: per_point(r.second_class, d),
        dof: if d == 1 {
            rs(&Rat::new(r.dof_raw_doubled().into(), 2.into()))
        } else {
            rs(&r.dof_per_point)
        },
    }
}

/// Listed minus independent over every generated constraint, per point.
pub fn total_deficiency(a: &DiracAnalysis) -> Rat {
    let listed = a.tower.raw.len();
    let rank = a.tower.constraints.len();
    Rat::new((listed - rank).into(), a.tower.multiplicity.into())
}

fn level_report(channel: &str, a: &DiracAnalysis, vars: Vec<String>) -> LevelReport {
    let r = &a.report;
    let d = r.multiplicity;
    let mut diagnostics = Vec::new();
    if !r.dof_is_integral {
        diagnostics.push(format!(
            "degrees of freedom per point {} is not an integer; the parameters are degenerate",
            rs(&r.dof_per_point)
        ));
    }
    LevelReport {
        channel: channel.to_string(),
        level: r.level,
        multiplicity: d,
        raw: counts(r, 1),
        per_point: counts(r, d),
        dof_integral: r.dof_is_integral,
        generations: r.generations,
        chain_log: a
            .tower
            .chain_log
            .iter()
            .map(|c| ChainReport {
                generation: c.generation,
                constraints: c.constraints,
                multipliers_fixed: c.multipliers_fixed,
                new_constraints: c.new_constraints,
            })
            .collect(),
        phase_variables: vars,
        constraints: a
            .tower
            .constraints
            .iter()
            .map(|c| ConstraintReport {
                label: c.label.clone(),
                generation: c.generation,
                family: c.family.clone(),
                gradient: rv(&c.grad),
            })
            .collect(),
        classification: ClassificationReport {
            second_class: a
                .classification
                .second_class
                .iter()
                .map(|&i| a.tower.constraints[i].label.clone())
                .collect(),
            first_class: a.classification.first_class.iter().map(|g| rv(g)).collect(),
            c_matrix: rm(&a.classification.c_full),
            c_second: rm(&a.classification.c_second),
        },
        multipliers: r
            .multipliers
            .iter()
            .map(|m| MultiplierReport {
                label: m.label.clone(),
                coefficients: rv(&m.functional),
            })
            .collect(),
        reducibility: r
            .reducibility
            .iter()
            .map(|e| ReducibilityReport {
                families: e.families.clone(),
                listed: per_point(e.listed, d),
                rank: per_point(e.rank, d),
                deficiency: per_point(e.deficiency, d),
            })
            .collect(),
        total_deficiency: rs(&total_deficiency(a)),
        dropped_trivial: r.dropped_trivial.clone(),
        dirac_matrix: dirac_checks(a),
        diagnostics,
    }
}

/// Phase variable names in `z = (q, p)` order.
fn phase_variables(tower: &KKTower, level: usize) -> Vec<String> {
    let vars = &tower.levels[level].vars;
    let mut out: Vec<String> = vars.iter().map(|v| v.label()).collect();
    out.extend(vars.iter().map(|v| format!("p[{}]", v.label())));
    out
}

/// Analysed levels of one channel, in level order.
pub struct ChannelRun {
    pub channel: String,
    pub tower: KKTower,
    pub analyses: Vec<DiracAnalysis>,
}

pub fn run_channel(
    theory: Theory,
    m: &Rat,
    radius: &Rat,
    levels: u32,
    channel: &ChannelSpec,
) -> Result<ChannelRun, CliError> {
    let spec = theory.build(m, radius)?;
    let ch = channel.build()?;
    let tower = compactify(&spec, levels, &ch)?;
    let analyses = tower.levels.par_iter().map(analyze).collect();
    Ok(ChannelRun {
        channel: channel.to_string(),
        tower,
        analyses,
    })
}

fn sum_rat(it: impl Iterator<Item = Rat>) -> Rat {
    it.fold(int(0), |a, b| a + b)
}

fn computed_value(key: &str, run: &ChannelRun) -> Option<Rat> {
    let totals = |f: fn(&DiracReport) -> Rat| sum_rat(run.analyses.iter().map(|a| f(&a.report)));
    match key {
        "phase" => Some(totals(|r| r.phase_per_point())),
        "first" => Some(totals(|r| r.first_per_point())),
        "second" => Some(totals(|r| r.second_per_point())),
        "dof" => Some(totals(|r| r.dof_per_point.clone())),
        "primary" => Some(totals(|r| {
            Rat::new(r.primary.into(), r.multiplicity.into())
        })),
        _ => {
            let rest = key.strip_prefix("level")?;
            let (n, what) = rest.split_once('.')?;
            let n: u32 = n.parse().ok()?;
            let a = run.analyses.iter().find(|a| a.report.level == n)?;
            let r = &a.report;
            match what {
                "phase" => Some(r.phase_per_point()),
                "first" => Some(r.first_per_point()),
                "second" => Some(r.second_per_point()),
                "dof" => Some(r.dof_per_point.clone()),
                "deficiency" => Some(total_deficiency(a)),
                "generations" => Some(int(r.generations as i64)),
                _ => None,
            }
        }
    }
}

fn flags(theory: Theory) -> Vec<String> {
    let mut f = vec![
        "spatial derivatives act through the channel matrices; the zero channel is reported but not checked".to_string(),
    ];
    if theory == Theory::Bfproca5d {
        f.push("B^{mu5} components carry odd parity so that the B∧F coupling survives the orbifold projection".into());
        f.push("the level-n chi^5 constraint is read with B^{05} at level n, not level 0".into());
    }
    f
}

fn sample_counts(
    theory: Theory,
    levels: u32,
    s: &ParamSample,
) -> Result<Vec<[String; 3]>, CliError> {
    let ch = ChannelSpec::Plane(s.wavevector.clone());
    let run = run_channel(theory, &s.m, &s.radius, levels, &ch)?;
    Ok(run
        .analyses
        .iter()
        .map(|a| {
            let r = &a.report;
            [
                rs(&r.first_per_point()),
                rs(&r.second_per_point()),
                rs(&r.dof_per_point),
            ]
        })
        .collect())
}

/// Runs the whole scenario.
pub fn run(scenario: &Scenario) -> Result<(Report, Option<TrajectorySummary>), CliError> {
    let runs: Vec<ChannelRun> = scenario
        .channels
        .iter()
        .map(|c| {
            run_channel(
                scenario.theory,
                &scenario.m,
                &scenario.radius,
                scenario.levels,
                c,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut per_level = Vec::new();
    let mut totals = Vec::new();
    for run in &runs {
        for (i, a) in run.analyses.iter().enumerate() {
            per_level.push(level_report(
                &run.channel,
                a,
                phase_variables(&run.tower, i),
            ));
        }
        let get = |k: &str| rs(&computed_value(k, run).expect("total key"));
        totals.push(TotalsReport {
            channel: run.channel.clone(),
            n_phase: get("phase"),
            first_class: get("first"),
            second_class: get("second"),
            dof: get("dof"),
        });
    }

    let mut table = expected_counts(scenario.theory, scenario.levels)?;
    for (k, v) in &scenario.expect {
        table.insert(k.clone(), v.clone());
    }
    let mut checks = Vec::new();
    for run in runs.iter().filter(|r| !r.tower.channel.is_zero()) {
        for (key, expected) in &table {
            let computed = computed_value(key, run);
            checks.push(CheckReport {
                channel: run.channel.clone(),
                key: key.clone(),
                expected: rs(expected),
                computed: computed.as_ref().map(rs).unwrap_or_else(|| "n/a".into()),
                pass: computed.as_ref() == Some(expected),
            });
        }
    }

    let mut trajectory = None;
    let dynamics = match &scenario.evolve {
        None => None,
        Some(ev) => {
            let run = &runs[0];
            let mut flow = flow_from_levels(&run.analyses, ev.dt.clone(), ev.steps, 1)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            flow.sample_every = ev.every;
            let summary =
                evolve_with_halving(&flow, 8).map_err(|e| CliError::Runtime(e.to_string()))?;
            flow.dt = summary.dt.clone();
            let rev =
                reversibility(&flow, ev.steps).map_err(|e| CliError::Runtime(e.to_string()))?;
            let rep = DynamicsReport {
                channel: run.channel.clone(),
                steps: summary.steps,
                dt: rs(&summary.dt),
                every: ev.every,
                dim: summary.dim,
                energy0: rs(&summary.energy0),
                max_constraint_drift: rs(&summary.max_constraint_drift),
                max_energy_drift: rs(&summary.max_energy_drift),
                energy_identity: summary.energy_identity,
                constraint_identity: summary.constraint_identity,
                reversible: rev.inverse_identity && rev.returns_to_start,
            };
            for (key, ok) in [
                (
                    "dynamics.constraint_drift",
                    summary.max_constraint_drift == int(0),
                ),
                ("dynamics.energy_drift", summary.max_energy_drift == int(0)),
                ("dynamics.reversible", rep.reversible),
            ] {
                checks.push(CheckReport {
                    channel: run.channel.clone(),
                    key: key.into(),
                    expected: "true".into(),
                    computed: ok.to_string(),
                    pass: ok,
                });
            }
            trajectory = Some(summary);
            Some(rep)
        }
    };

    let samples = scenario.all_samples();
    let sample_results: Vec<Result<Vec<[String; 3]>, CliError>> = samples
        .par_iter()
        .map(|s| sample_counts(scenario.theory, scenario.levels, s))
        .collect();
    let mut stab = Vec::new();
    for (s, r) in samples.iter().zip(sample_results) {
        stab.push(SampleCounts {
            sample: s.into(),
            levels: r?,
        });
    }
    let stable = stab.windows(2).all(|w| w[0].levels == w[1].levels);

    let report = Report {
        scenario: ScenarioReport {
            theory: scenario.theory,
            m: rs(&scenario.m),
            radius: rs(&scenario.radius),
            levels: scenario.levels,
            channels: scenario.channels.iter().map(|c| c.to_string()).collect(),
            samples: samples.iter().map(SampleReport::from).collect(),
            evolve: scenario.evolve.as_ref().map(|e| EvolveReport {
                steps: e.steps,
                dt: rs(&e.dt),
                every: e.every,
            }),
            flags: flags(scenario.theory),
        },
        per_level,
        totals,
        checks,
        dynamics,
        stability: StabilityReport {
            samples: stab,
            stable,
        },
    };
    Ok((report, trajectory))
}

// ---------------------------------------------------------------- clap

#[derive(Debug, Parser)]
#[command(
    name = "kkdirac",
    version,
    about = "Exact Dirac analysis of orbifold-compactified field theories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the constraint analysis and emit a report.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Scenario file of `key = value` lines; flags override it.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub theory: Option<Theory>,
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub radius: Option<String>,
    /// `zero` or `plane:k1,k2,k3`; repeatable.
    #[arg(long)]
    pub channel: Vec<String>,
    /// Number of generated parameter samples for the stability check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `steps=<n>,dt=<p/q>[,every=<n>]`
    #[arg(long)]
    pub evolve: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for level analyses.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV export of sampled trajectory points (needs --evolve).
    #[arg(long)]
    pub trajectory_csv: Option<PathBuf>,
}

impl AnalyzeArgs {
    pub fn patch(&self) -> Result<ScenarioPatch, CliError> {
        let input = CliError::Input;
        let rat_flag = |name: &str, v: &Option<String>| -> Result<Option<Rat>, CliError> {
            v.as_deref()
                .map(|s| parse_rat(s).map_err(|e| input(format!("--{name}: {e}"))))
                .transpose()
        };
        Ok(ScenarioPatch {
            theory: self.theory,
            m: rat_flag("m", &self.m)?,
            radius: rat_flag("radius", &self.radius)?,
            levels: self.levels,
            channels: self
                .channel
                .iter()
                .map(|c| c.parse().map_err(|e| input(format!("--channel: {e}"))))
                .collect::<Result<_, _>>()?,
            samples: Vec::new(),
            generated_samples: self.samples,
            evolve: self
                .evolve
                .as_deref()
                .map(|e| e.parse().map_err(|e| input(format!("--evolve: {e}"))))
                .transpose()?,
            expect: BTreeMap::new(),
        })
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut patches = Vec::new();
        if let Some(path) = &self.scenario {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            patches.push(parse_scenario(&text).map_err(|e| match e {
                CliError::Parse { line, msg } => {
                    CliError::Input(format!("{}:{line}: {msg}", path.display()))
                }
                other => other,
            })?);
        }
        patches.push(self.patch()?);
        Scenario::resolve(&patches)
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let Command::Analyze(args) = cli.command;
    match analyze_command(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn analyze_command(args: &AnalyzeArgs) -> Result<i32, CliError> {
    let scenario = args.scenario()?;
    if args.trajectory_csv.is_some() && scenario.evolve.is_none() {
        return Err(CliError::Input("--trajectory-csv needs --evolve".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let (report, trajectory) = pool.install(|| run(&scenario))?;
    let body = match args.format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
    };
    match &args.out {
        Some(p) => std::fs::write(p, body)?,
        None => print!("{body}"),
    }
    if let (Some(path), Some(t)) = (&args.trajectory_csv, &trajectory) {
        let f = std::fs::File::create(path)?;
        crate::dynamics::write_csv(t, std::io::BufWriter::new(f))?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}
