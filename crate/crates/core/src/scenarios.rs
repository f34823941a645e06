//! Preset simulation scenarios and comparison reports.
//!
//! Each scenario bundles a physical configuration (emitter layout, coupling,
//! detuning), a numerical plan (lattice size, step size, horizon), a set of
//! quantitative claims checked against independent predictions, and the
//! artifacts it writes. The catalogue:
//!
//! | id         | engine              | what it checks                                   |
//! |------------|---------------------|--------------------------------------------------|
//! | `fig2a`    | dynamics (+resolvent at Δ=0) | single-emitter decay rates and the midband beat |
//! | `fig2bc`   | dynamics            | emission-map anisotropy at long times            |
//! | `fig3a`    | dynamics            | parity-ordered decay of two-emitter states       |
//! | `fig3bcde` | dynamics            | two-emitter emission maps and their symmetry     |
//! | `tail`     | resolvent           | compensated band-centre long-time tail           |
//! | `poles`    | analytic            | resonance-pole pair and the midband rate scale   |
//! | `residue4` | dynamics            | four-emitter population trapping plateau         |
//!
//! Determinism: scenarios are seed-free and every artifact is written with
//! fixed formatting, so a rerun with the same configuration produces
//! bit-identical files regardless of thread count.
//!
//! Artifacts (all inside the configured output directory, never elsewhere):
//!
//! * `trajectory*.csv` — sampled populations with the exact header
//!   `t, pop_emitter_total, pop_state_initial, norm, pop_bath`;
//! * `map*.bin` — one ASCII header line `N <N> t <t>` followed by `N²`
//!   little-endian 8-byte reals (row-major emission-amplitude magnitudes);
//! * `tail.csv` — resolvent-engine tail samples with header
//!   `t, pop, compensated`;
//! * `report.txt` — the comparison report in machine-parseable
//!   `key = value` lines.
//!
//! Failure semantics: configuration problems are rejected up front with an
//! error (nothing is written); numerical failures mid-run abort the scenario
//! and are recorded in the report (`aborted = …`, exit path for callers);
//! claims whose analysis cannot be completed (for example a rate fit on a
//! trace that never decays) are recorded as failed rows with the refusal
//! reason in the detail field, and never silently pass.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::bath::LatticeSpec;
use crate::dynamics::{
    self, EvolvePlan, Evolution, HamiltonianAction, InitialState, Sign, TrajectorySample,
};
use crate::error::{Error, Result};
use crate::greens;
use crate::spectral::{self, EmitterSet, SpectralTable, StateSelector};

/// Exact header line of every trajectory CSV artifact.
pub const TRAJECTORY_CSV_HEADER: &str = "t, pop_emitter_total, pop_state_initial, norm, pop_bath";

/// Exact header line of the tail CSV artifact.
pub const TAIL_CSV_HEADER: &str = "t, pop, compensated";

/// Default integrator step `0.05/(4J)`, well inside the stability cap.
fn default_dt(j: f64) -> f64 {
    0.05 / (4.0 * j)
}

/// Smallest lattice whose finite-size revival guard admits a horizon `t`:
/// the guard requires `t ≤ 0.8·N/(2√2 J)`, and sizes are rounded up to a
/// multiple of 16 to keep the row-blocked kernel layout uniform.
fn auto_lattice_size(t_total: f64, j: f64) -> usize {
    let min_n = t_total * j * 2.0 * std::f64::consts::SQRT_2 / 0.8;
    let blocks = (min_n / 16.0).ceil().max(1.0) as usize;
    blocks * 16
}

// ---------------------------------------------------------------------------
// Scenario identifiers and configuration
// ---------------------------------------------------------------------------

/// Identifier of a preset scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    /// Single-emitter decay traces: golden-rule rates off centre, pole rate
    /// and beat frequency at the band centre.
    Fig2a,
    /// Single-emitter emission map and its diagonal/axis anisotropy.
    Fig2bc,
    /// Two-emitter symmetric/antisymmetric decay ordering by offset parity.
    Fig3a,
    /// Two-emitter emission maps and their inversion symmetry.
    Fig3bcde,
    /// Band-centre long-time tail from the resolvent engine.
    Tail,
    /// Resonance-pole pair of the band-centre emitter.
    Poles,
    /// Four-emitter interference trapping plateau.
    Residue4,
}

impl ScenarioId {
    /// All scenario identifiers in catalogue order.
    pub fn all() -> [ScenarioId; 7] {
        [
            ScenarioId::Fig2a,
            ScenarioId::Fig2bc,
            ScenarioId::Fig3a,
            ScenarioId::Fig3bcde,
            ScenarioId::Tail,
            ScenarioId::Poles,
            ScenarioId::Residue4,
        ]
    }

    /// The stable string form used on the command line and in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Fig2a => "fig2a",
            ScenarioId::Fig2bc => "fig2bc",
            ScenarioId::Fig3a => "fig3a",
            ScenarioId::Fig3bcde => "fig3bcde",
            ScenarioId::Tail => "tail",
            ScenarioId::Poles => "poles",
            ScenarioId::Residue4 => "residue4",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::all()
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ScenarioId::all().iter().map(|id| id.as_str()).collect();
                Error::invalid(
                    "scenario",
                    format!("unknown scenario {s:?}; expected one of {}", names.join("|")),
                )
            })
    }
}

/// User-facing scenario configuration. Unset fields take scenario-specific
/// defaults during [`resolve_plan`]; every value is validated before any
/// computation starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Which preset to run.
    pub scenario: ScenarioId,
    /// Lattice edge length (sites per side). Default: smallest size whose
    /// revival guard covers the horizon (with scenario-specific floors).
    pub n: Option<usize>,
    /// Emitter coupling `g` in units of `J`.
    pub g: Option<f64>,
    /// Emitter detuning `Δ` from the band centre in units of `J`.
    pub delta: Option<f64>,
    /// Two-emitter relative offset (pair scenarios).
    pub n12: Option<(i64, i64)>,
    /// Four-emitter diamond scale `n` (sites at `(0,±2n)`, `(±2n,0)` around
    /// the layout centre).
    pub diamond_n: Option<i64>,
    /// Evolution horizon in units of `1/J` (for `tail`: upper end of the
    /// fit window).
    pub t_final: Option<f64>,
    /// Integrator step in units of `1/J` (must satisfy `4J·dt ≤ 0.05`).
    pub dt: Option<f64>,
    /// Steps between recorded samples.
    pub sample_stride: Option<usize>,
    /// Output directory for artifacts; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// A configuration with every tunable left at its scenario default.
    pub fn new(scenario: ScenarioId) -> Self {
        ScenarioConfig {
            scenario,
            n: None,
            g: None,
            delta: None,
            n12: None,
            diamond_n: None,
            t_final: None,
            dt: None,
            sample_stride: None,
            out_dir: None,
        }
    }
}

/// Fully resolved execution plan: configuration defaults applied and
/// validated, lattice size chosen, horizon fixed. This is what `--dry-run`
/// prints and what the drivers execute.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPlan {
    /// Scenario being planned.
    pub scenario: ScenarioId,
    /// Engine description: `dynamics`, `dynamics+resolvent`, `resolvent`,
    /// or `analytic`.
    pub engine: &'static str,
    /// Hopping scale (everything is quoted in units of `J`).
    pub j: f64,
    /// Emitter coupling.
    pub g: f64,
    /// Emitter detuning.
    pub delta: f64,
    /// Pair offset (pair scenarios only).
    pub n12: Option<(i64, i64)>,
    /// Diamond scale (four-emitter scenario only).
    pub diamond_n: Option<i64>,
    /// Lattice edge length (lattice scenarios only).
    pub lattice_n: Option<usize>,
    /// Whether the lattice size was chosen automatically from the guard.
    pub auto_n: bool,
    /// Evolution horizon (lattice scenarios) or tail-window end (`tail`).
    pub t_final: Option<f64>,
    /// Integrator step (lattice scenarios only).
    pub dt: Option<f64>,
    /// Steps between samples (lattice scenarios only).
    pub sample_stride: Option<usize>,
    /// Total integrator steps (lattice scenarios only).
    pub n_steps: Option<usize>,
    /// Finite-size revival time `N/(2√2 J)` of the planned lattice.
    pub revival_time: Option<f64>,
    /// Whether the horizon stays within 80 % of the revival time.
    pub guard_satisfied: Option<bool>,
    /// Tail-fit window (`tail` only).
    pub tail_window: Option<(f64, f64)>,
    /// Artifact file names this plan writes when an output directory is set.
    pub outputs: Vec<&'static str>,
}

impl ResolvedPlan {
    /// Human- and machine-readable plan summary (`key = value` lines), the
    /// exact text printed by a dry run.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("scenario", self.scenario.to_string());
        line("engine", self.engine.to_string());
        line("j", format!("{}", self.j));
        line("g", format!("{}", self.g));
        line("delta", format!("{}", self.delta));
        if let Some(n12) = self.n12 {
            line("n12", format!("{},{}", n12.0, n12.1));
        }
        if let Some(n) = self.diamond_n {
            line("diamond_n", format!("{n}"));
        }
        if let Some(n) = self.lattice_n {
            line("lattice_n", format!("{n}"));
            line("lattice_n_source", if self.auto_n { "auto" } else { "configured" }.into());
        }
        if let Some(t) = self.t_final {
            line("t_final", format!("{t}"));
        }
        if let Some(dt) = self.dt {
            line("dt", format!("{dt}"));
        }
        if let Some(stride) = self.sample_stride {
            line("sample_stride", format!("{stride}"));
        }
        if let Some(steps) = self.n_steps {
            line("steps", format!("{steps}"));
        }
        if let Some(rev) = self.revival_time {
            line("revival_time", format!("{rev:.3}"));
        }
        if let Some(ok) = self.guard_satisfied {
            line("revival_guard", if ok { "satisfied" } else { "violated" }.into());
        }
        if let Some((lo, hi)) = self.tail_window {
            line("tail_window", format!("{lo}..{hi}"));
        }
        line(
            "outputs",
            if self.outputs.is_empty() { "none".into() } else { self.outputs.join(", ") },
        );
        s
    }
}

fn validate_finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

/// Applies scenario defaults to `config` and validates every parameter,
/// without running anything.
///
/// # Errors
///
/// Any out-of-range or inconsistent parameter (non-finite numbers, `g < 0`,
/// a step above the stability cap `4J·dt ≤ 0.05`, a lattice too small for
/// the emitter layout, a nonzero detuning for the four-emitter trapping
/// scenario, `t_final ≤ 0`, …) is reported as [`Error::InvalidParameter`].
pub fn resolve_plan(config: &ScenarioConfig) -> Result<ResolvedPlan> {
    let j = 1.0;
    let id = config.scenario;

    let g_default = match id {
        ScenarioId::Fig2a | ScenarioId::Fig2bc | ScenarioId::Poles => 0.1,
        ScenarioId::Fig3a | ScenarioId::Fig3bcde | ScenarioId::Residue4 => 0.05,
        ScenarioId::Tail => 0.2,
    };
    let delta_default = match id {
        ScenarioId::Fig2a => -2.0,
        _ => 0.0,
    };
    let g = validate_finite("g", config.g.unwrap_or(g_default))?;
    if g < 0.0 {
        return Err(Error::invalid("g", format!("coupling must be ≥ 0, got {g}")));
    }
    let delta = validate_finite("delta", config.delta.unwrap_or(delta_default))?;
    if id == ScenarioId::Residue4 && delta != 0.0 {
        return Err(Error::invalid(
            "delta",
            format!("the four-emitter trapping scenario requires Δ = 0, got {delta}"),
        ));
    }

    let n12 = match id {
        ScenarioId::Fig3a | ScenarioId::Fig3bcde => {
            let n12 = config.n12.unwrap_or((6, 6));
            if n12 == (0, 0) {
                return Err(Error::invalid("n12", "pair offset must be nonzero".to_string()));
            }
            Some(n12)
        }
        _ => {
            if config.n12.is_some() {
                return Err(Error::invalid(
                    "n12",
                    format!("scenario {id} takes no pair offset"),
                ));
            }
            None
        }
    };
    let diamond_n = match id {
        ScenarioId::Residue4 => {
            let nd = config.diamond_n.unwrap_or(3);
            if nd < 1 {
                return Err(Error::invalid(
                    "diamond_n",
                    format!("diamond scale must be ≥ 1, got {nd}"),
                ));
            }
            Some(nd)
        }
        _ => {
            if config.diamond_n.is_some() {
                return Err(Error::invalid(
                    "diamond_n",
                    format!("scenario {id} takes no diamond scale"),
                ));
            }
            None
        }
    };

    // Surface emitter-layout problems (duplicate sites, bad coupling) now.
    match id {
        ScenarioId::Fig3a | ScenarioId::Fig3bcde => {
            EmitterSet::pair(n12.unwrap(), delta, g)?;
        }
        ScenarioId::Residue4 => {
            EmitterSet::diamond(diamond_n.unwrap(), delta, g)?;
        }
        _ => {
            EmitterSet::single(delta, g)?;
        }
    }

    let is_midband_fig2a = id == ScenarioId::Fig2a && delta == 0.0;
    let engine = match id {
        ScenarioId::Fig2a if is_midband_fig2a => "dynamics+resolvent",
        ScenarioId::Fig2a
        | ScenarioId::Fig2bc
        | ScenarioId::Fig3a
        | ScenarioId::Fig3bcde
        | ScenarioId::Residue4 => "dynamics",
        ScenarioId::Tail => "resolvent",
        ScenarioId::Poles => "analytic",
    };

    // Analytic scenario: no lattice, no horizon.
    if id == ScenarioId::Poles {
        for (name, set) in [
            ("N", config.n.is_some()),
            ("t_final", config.t_final.is_some()),
            ("dt", config.dt.is_some()),
            ("sample_stride", config.sample_stride.is_some()),
        ] {
            if set {
                return Err(Error::invalid(name, "the pole scenario takes no lattice or time parameters".to_string()));
            }
        }
        return Ok(ResolvedPlan {
            scenario: id,
            engine,
            j,
            g,
            delta,
            n12,
            diamond_n,
            lattice_n: None,
            auto_n: false,
            t_final: None,
            dt: None,
            sample_stride: None,
            n_steps: None,
            revival_time: None,
            guard_satisfied: None,
            tail_window: None,
            outputs: vec!["report.txt"],
        });
    }

    // Resolvent scenario: a fit window instead of an integration plan.
    if id == ScenarioId::Tail {
        for (name, set) in [
            ("N", config.n.is_some()),
            ("dt", config.dt.is_some()),
            ("sample_stride", config.sample_stride.is_some()),
        ] {
            if set {
                return Err(Error::invalid(name, "the tail scenario runs on the resolvent engine and takes no lattice parameters".to_string()));
            }
        }
        let lo = 200.0;
        let hi = validate_finite("t_final", config.t_final.unwrap_or(2000.0))?;
        if hi < 2.0 * lo {
            return Err(Error::invalid(
                "t_final",
                format!("tail window must extend to at least {}, got {hi}", 2.0 * lo),
            ));
        }
        return Ok(ResolvedPlan {
            scenario: id,
            engine,
            j,
            g,
            delta,
            n12,
            diamond_n,
            lattice_n: None,
            auto_n: false,
            t_final: Some(hi),
            dt: None,
            sample_stride: None,
            n_steps: None,
            revival_time: None,
            guard_satisfied: None,
            tail_window: Some((lo, hi)),
            outputs: vec!["tail.csv", "report.txt"],
        });
    }

    // Lattice scenarios.
    let t_default = match id {
        ScenarioId::Fig2a if is_midband_fig2a => 150.0,
        ScenarioId::Fig2a => 120.0,
        ScenarioId::Fig2bc | ScenarioId::Fig3bcde => 100.0,
        ScenarioId::Fig3a | ScenarioId::Residue4 => 200.0,
        ScenarioId::Tail | ScenarioId::Poles => unreachable!(),
    };
    let t_final = validate_finite("t_final", config.t_final.unwrap_or(t_default))?;
    if t_final <= 0.0 {
        return Err(Error::invalid("t_final", format!("horizon must be > 0, got {t_final}")));
    }
    let dt = validate_finite("dt", config.dt.unwrap_or_else(|| default_dt(j)))?;
    if dt <= 0.0 || 4.0 * j * dt > 0.05 * (1.0 + 1e-9) {
        return Err(Error::invalid(
            "dt",
            format!("step must satisfy 0 < 4J·dt ≤ 0.05, got dt = {dt}"),
        ));
    }
    let sample_stride = config.sample_stride.unwrap_or_else(|| {
        // About one sample per 0.5/J of evolution.
        ((0.5 / dt).round() as usize).max(1)
    });
    if sample_stride == 0 {
        return Err(Error::invalid("sample_stride", "stride must be ≥ 1".to_string()));
    }

    let n_floor = match id {
        // Emission maps need room for the wavefronts to develop structure.
        ScenarioId::Fig2bc | ScenarioId::Fig3bcde => 512,
        _ => 16,
    };
    let (n, auto_n) = match config.n {
        Some(n) => (n, false),
        None => (auto_lattice_size(t_final, j).max(n_floor), true),
    };
    // Surface lattice/layout incompatibilities (size, parity, emitter
    // coordinates out of range) before any work happens.
    let spec = LatticeSpec::new(n, j)?;
    let emitters = plan_emitters(id, delta, g, n12, diamond_n)?;
    dynamics::build_hamiltonian_action(&spec, &emitters)?;

    let n_steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    let revival_time = n as f64 / (2.0 * std::f64::consts::SQRT_2 * j);
    let guard_satisfied = t_final <= 0.8 * revival_time;

    let outputs = match id {
        ScenarioId::Fig2a => vec!["trajectory.csv", "report.txt"],
        ScenarioId::Fig2bc => vec!["trajectory.csv", "map.bin", "report.txt"],
        ScenarioId::Fig3a => vec!["trajectory_plus.csv", "trajectory_minus.csv", "report.txt"],
        ScenarioId::Fig3bcde => vec![
            "trajectory_plus.csv",
            "trajectory_minus.csv",
            "map_plus.bin",
            "map_minus.bin",
            "report.txt",
        ],
        ScenarioId::Residue4 => vec!["trajectory.csv", "report.txt"],
        ScenarioId::Tail | ScenarioId::Poles => unreachable!(),
    };

    Ok(ResolvedPlan {
        scenario: id,
        engine,
        j,
        g,
        delta,
        n12,
        diamond_n,
        lattice_n: Some(n),
        auto_n,
        t_final: Some(t_final),
        dt: Some(dt),
        sample_stride: Some(sample_stride),
        n_steps: Some(n_steps),
        revival_time: Some(revival_time),
        guard_satisfied: Some(guard_satisfied),
        tail_window: None,
        outputs,
    })
}

fn plan_emitters(
    id: ScenarioId,
    delta: f64,
    g: f64,
    n12: Option<(i64, i64)>,
    diamond_n: Option<i64>,
) -> Result<EmitterSet> {
    match id {
        ScenarioId::Fig3a | ScenarioId::Fig3bcde => EmitterSet::pair(
            n12.ok_or_else(|| Error::invalid("n12", "pair offset missing".to_string()))?,
            delta,
            g,
        ),
        ScenarioId::Residue4 => EmitterSet::diamond(
            diamond_n
                .ok_or_else(|| Error::invalid("diamond_n", "diamond scale missing".to_string()))?,
            delta,
            g,
        ),
        _ => EmitterSet::single(delta, g),
    }
}

// ---------------------------------------------------------------------------
// Comparison reports
// ---------------------------------------------------------------------------

/// Provenance of the reference value a claim is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimSource {
    /// Closed-form or quadrature-evaluated prediction.
    AnalyticFormula,
    /// Quantity extracted from a time-domain simulation.
    DynamicRun,
    /// Independent redundant computation used as a cross-check.
    Oracle,
}

impl ClaimSource {
    /// Stable tag used in report text.
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimSource::AnalyticFormula => "analytic-formula",
            ClaimSource::DynamicRun => "dynamic-run",
            ClaimSource::Oracle => "oracle",
        }
    }
}

/// One checked claim inside a [`ComparisonReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRow {
    /// Stable claim identifier (kebab-case).
    pub claim: String,
    /// Scenario tag the claim belongs to.
    pub reference: String,
    /// Where the reference value comes from.
    pub source: ClaimSource,
    /// Reference (predicted) value.
    pub predicted: f64,
    /// Measured value.
    pub measured: f64,
    /// Tolerance; the detail field states whether it is relative or
    /// absolute, and threshold rows use 0 with the comparison spelled out.
    pub tolerance: f64,
    /// Whether the claim passed.
    pub passed: bool,
    /// Free-text context: fit windows, conventions, thresholds, refusals.
    pub detail: String,
}

/// Structured outcome of a scenario or engine comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Scenario tag (or `engines` for the engine cross-check).
    pub scenario: String,
    /// Echo of the resolved parameters, rendered at the top of the report.
    pub header: Vec<(String, String)>,
    /// Checked claims in evaluation order.
    pub rows: Vec<ClaimRow>,
    /// Warnings that do not fail the run (finite-size revival guard, …).
    pub warnings: Vec<String>,
    /// Set when a numerical failure aborted the scenario mid-run.
    pub aborted: Option<String>,
}

impl ComparisonReport {
    fn new(scenario: &str) -> Self {
        ComparisonReport {
            scenario: scenario.to_string(),
            header: Vec::new(),
            rows: Vec::new(),
            warnings: Vec::new(),
            aborted: None,
        }
    }

    /// True when no claim failed and the run was not aborted.
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.rows.iter().all(|r| r.passed)
    }

    /// Renders the report as machine-parseable `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: String, v: String| {
            s.push_str(&k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("scenario".into(), self.scenario.clone());
        let status = if self.aborted.is_some() {
            "aborted"
        } else if self.passed() {
            "pass"
        } else {
            "fail"
        };
        line("status".into(), status.into());
        for (k, v) in &self.header {
            line(k.clone(), v.clone());
        }
        line("rows".into(), format!("{}", self.rows.len()));
        for (i, row) in self.rows.iter().enumerate() {
            let p = format!("row.{}", i + 1);
            line(format!("{p}.claim"), row.claim.clone());
            line(format!("{p}.reference"), row.reference.clone());
            line(format!("{p}.source"), row.source.as_str().into());
            line(format!("{p}.predicted"), format!("{:.12e}", row.predicted));
            line(format!("{p}.measured"), format!("{:.12e}", row.measured));
            line(format!("{p}.tolerance"), format!("{:.3e}", row.tolerance));
            line(format!("{p}.passed"), format!("{}", row.passed));
            line(format!("{p}.detail"), row.detail.clone());
        }
        for (i, w) in self.warnings.iter().enumerate() {
            line(format!("warning.{}", i + 1), w.clone());
        }
        if let Some(msg) = &self.aborted {
            line("aborted".into(), msg.clone());
        }
        s
    }
}

/// A completed scenario run: the resolved plan, the comparison report, and
/// the artifacts written (empty when no output directory was configured).
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    /// The plan that was executed.
    pub plan: ResolvedPlan,
    /// Claim-by-claim outcome.
    pub report: ComparisonReport,
    /// Paths of every file written, report included.
    pub artifacts: Vec<PathBuf>,
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

fn write_trajectory_csv(path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{:.12e}, {:.12e}, {:.12e}, {:.12e}, {:.12e}",
            s.t, s.pop_emitter_total, s.pop_state_initial, s.norm, s.pop_bath
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_map_binary(path: &Path, n: usize, t: f64, magnitudes: &[f64]) -> Result<()> {
    if magnitudes.len() != n * n {
        return Err(Error::invalid(
            "map",
            format!("expected {} values for N = {n}, got {}", n * n, magnitudes.len()),
        ));
    }
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "N {n} t {t:.6}")?;
    for v in magnitudes {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn write_tail_csv(path: &Path, times: &[f64], pops: &[f64], compensated: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TAIL_CSV_HEADER}")?;
    for ((t, p), c) in times.iter().zip(pops).zip(compensated) {
        writeln!(w, "{:.12e}, {:.12e}, {:.12e}", t, p, c)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace analysis
// ---------------------------------------------------------------------------

/// Result of an exponential-decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Fitted decay rate `Γ` of `p(t) ∝ e^{−Γt}` (population convention).
    pub rate: f64,
    /// Time window `[t_first, t_last]` of the samples used.
    pub window: (f64, f64),
    /// Number of samples in the window.
    pub points: usize,
}

/// Fits `ln p` against `t` by least squares over the window of samples with
/// `0.2 ≤ p ≤ 0.9`, the stretch between the short-time transient and the
/// late-time tail.
///
/// # Errors
///
/// Refuses ([`Error::AnalysisRefused`]) when fewer than four samples fall in
/// the window, when the window has no temporal extent, or when the fitted
/// rate is not a decay (`Γ ≤ 0`).
pub fn fit_exponential_rate(times: &[f64], pops: &[f64]) -> Result<RateFit> {
    if times.len() != pops.len() {
        return Err(Error::invalid(
            "samples",
            format!("times ({}) and populations ({}) differ in length", times.len(), pops.len()),
        ));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &p) in times.iter().zip(pops) {
        if (0.2..=0.9).contains(&p) {
            ts.push(t);
            ys.push(p.ln());
        }
    }
    if ts.len() < 4 {
        return Err(Error::AnalysisRefused {
            reason: format!(
                "exponential fit needs at least 4 samples with population in [0.2, 0.9], found {}",
                ts.len()
            ),
        });
    }
    let nf = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt <= 0.0 {
        return Err(Error::AnalysisRefused {
            reason: "exponential fit window has no temporal extent".to_string(),
        });
    }
    let rate = -sty / stt;
    if !(rate > 0.0) {
        return Err(Error::AnalysisRefused {
            reason: format!("population does not decay over the fit window (fitted rate {rate:.3e})"),
        });
    }
    Ok(RateFit { rate, window: (ts[0], ts[ts.len() - 1]), points: ts.len() })
}

/// A detected non-monotonic feature in a decaying population trace: the
/// first prominent local minimum of log-population after the exponential
/// stage, and the local maximum that follows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    /// Time of the first local population minimum.
    pub t_min: f64,
    /// Time of the subsequent local maximum.
    pub t_max: f64,
    /// Frequency scale implied by the feature: the reciprocal
    /// `1/(t_max − t_min)` of the minimum-to-maximum separation.
    pub implied_frequency: f64,
}

/// Three-point parabolic refinement of an extremum position; falls back to
/// the central sample when the parabola degenerates.
fn refine_extremum(times: &[f64], pops: &[f64], i: usize) -> f64 {
    let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
    let (p0, p1, p2) = (pops[i - 1], pops[i], pops[i + 1]);
    // Fit p(t) = a t² + b t + c through the three points (Lagrange form).
    let d01 = t0 - t1;
    let d02 = t0 - t2;
    let d12 = t1 - t2;
    let a = p0 / (d01 * d02) - p1 / (d01 * d12) + p2 / (d02 * d12);
    let b = -(p0 * (t1 + t2) / (d01 * d02) - p1 * (t0 + t2) / (d01 * d12)
        + p2 * (t0 + t1) / (d02 * d12));
    if a == 0.0 {
        return t1;
    }
    let vertex = -b / (2.0 * a);
    if vertex.is_finite() && vertex >= t0 && vertex <= t2 {
        vertex
    } else {
        t1
    }
}

/// Locates the first prominent local minimum of log-population after the
/// exponential stage of a decaying trace, the local maximum that follows
/// it, and the frequency scale `1/(t_max − t_min)` implied by their
/// separation.
///
/// For a band-centre emitter the trace decays exponentially while the
/// unstable pole pair dominates, dips sharply where the pole contribution
/// cancels against the slowly decaying band-centre background, recovers to
/// a local maximum, and then follows the subexponential tail — a single
/// dip-and-recovery feature rather than a full periodic beat (by the next
/// pole half-period the pole part is buried under the background, so no
/// second dip is observable). The reciprocal of the dip-to-recovery
/// separation is used as the feature's frequency scale: it sits within a
/// few tens of percent of the pole-splitting scale `g²/J` both for the
/// interference shape actually observed and for a pure decaying two-pole
/// beat.
///
/// A genuine minimum must dip at least a factor 4 below the running
/// maximum of the log-trace (fast shallow band-edge ripples fail this),
/// and the following maximum must rise back by at least a factor 2, so
/// that quadrature noise on an otherwise monotone trace is never mistaken
/// for an oscillation.
///
/// # Errors
///
/// Refuses ([`Error::AnalysisRefused`]) when the trace has no sufficiently
/// deep minimum, or when no sufficiently prominent maximum follows it.
pub fn detect_oscillation(times: &[f64], pops: &[f64]) -> Result<Oscillation> {
    if times.len() != pops.len() {
        return Err(Error::invalid(
            "samples",
            format!("times ({}) and populations ({}) differ in length", times.len(), pops.len()),
        ));
    }
    if times.len() < 5 {
        return Err(Error::AnalysisRefused {
            reason: format!("oscillation detection needs at least 5 samples, got {}", times.len()),
        });
    }
    let n = times.len();
    let q: Vec<f64> = pops.iter().map(|&p| p.max(f64::MIN_POSITIVE).ln()).collect();

    const MIN_DROP: f64 = 1.386_294_361_119_890_6; // ln 4
    const MIN_RISE: f64 = std::f64::consts::LN_2;
    let mut run_max = q[0];
    let mut i_min = None;
    for i in 1..n - 1 {
        run_max = run_max.max(q[i - 1]);
        if q[i] < q[i - 1] && q[i] <= q[i + 1] && q[i] <= run_max - MIN_DROP {
            i_min = Some(i);
            break;
        }
    }
    let i_min = i_min.ok_or_else(|| Error::AnalysisRefused {
        reason:
            "no local minimum at least a factor 4 below the trace so far: no dip after the exponential stage"
                .to_string(),
    })?;
    let mut i_max = None;
    for i in (i_min + 1)..n - 1 {
        if q[i] >= q[i - 1] && q[i] > q[i + 1] && q[i] >= q[i_min] + MIN_RISE {
            i_max = Some(i);
            break;
        }
    }
    let i_max = i_max.ok_or_else(|| Error::AnalysisRefused {
        reason: "no prominent local maximum follows the first minimum (rise < 2×)".to_string(),
    })?;
    let t_min = refine_extremum(times, &q, i_min);
    let t_max = refine_extremum(times, &q, i_max);
    if !(t_max > t_min) {
        return Err(Error::AnalysisRefused {
            reason: "degenerate extremum pair after refinement".to_string(),
        });
    }
    Ok(Oscillation {
        t_min,
        t_max,
        implied_frequency: 1.0 / (t_max - t_min),
    })
}

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

/// Executes a scenario end to end: resolves the plan, runs the engines,
/// evaluates every claim, and writes the artifacts.
///
/// Numerical failures mid-run (norm drift, refused quadrature, …) do not
/// return an error: they abort the remaining claims and are recorded in the
/// report (`aborted`), which is still written. Analysis refusals on
/// individual claims are recorded as failed rows.
///
/// # Errors
///
/// Configuration errors (via [`resolve_plan`]) and I/O failures writing
/// artifacts.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let plan = resolve_plan(config)?;
    let mut report = ComparisonReport::new(plan.scenario.as_str());
    echo_plan_into_header(&plan, &mut report);
    let out = config.out_dir.as_deref();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut artifacts = Vec::new();

    let outcome = match plan.scenario {
        ScenarioId::Fig2a => run_fig2a(&plan, out, &mut report, &mut artifacts),
        ScenarioId::Fig2bc => run_fig2bc(&plan, out, &mut report, &mut artifacts),
        ScenarioId::Fig3a => run_fig3a(&plan, out, &mut report, &mut artifacts),
        ScenarioId::Fig3bcde => run_fig3bcde(&plan, out, &mut report, &mut artifacts),
        ScenarioId::Tail => run_tail(&plan, out, &mut report, &mut artifacts),
        ScenarioId::Poles => run_poles(&plan, &mut report),
        ScenarioId::Residue4 => run_residue4(&plan, out, &mut report, &mut artifacts),
    };
    if let Err(e) = outcome {
        // I/O errors are environment problems, not numerical outcomes:
        // propagate them instead of recording a numerical abort.
        if matches!(e, Error::Io(_)) {
            return Err(e);
        }
        report.aborted = Some(e.to_string());
    }

    if let Some(dir) = out {
        let path = dir.join("report.txt");
        fs::write(&path, report.to_text())?;
        artifacts.push(path);
    }
    Ok(ScenarioRun { plan, report, artifacts })
}

fn echo_plan_into_header(plan: &ResolvedPlan, report: &mut ComparisonReport) {
    let mut push = |k: &str, v: String| report.header.push((k.to_string(), v));
    push("engine", plan.engine.to_string());
    push("j", format!("{}", plan.j));
    push("g", format!("{}", plan.g));
    push("delta", format!("{}", plan.delta));
    if let Some(n12) = plan.n12 {
        push("n12", format!("{},{}", n12.0, n12.1));
    }
    if let Some(nd) = plan.diamond_n {
        push("diamond_n", format!("{nd}"));
    }
    if let Some(n) = plan.lattice_n {
        push("lattice_n", format!("{n}"));
    }
    if let Some(t) = plan.t_final {
        push("t_final", format!("{t}"));
    }
    if let Some(dt) = plan.dt {
        push("dt", format!("{dt}"));
    }
    if let Some((lo, hi)) = plan.tail_window {
        push("tail_window", format!("{lo}..{hi}"));
    }
}

/// Runs the time-domain engine for a lattice plan from one initial state.
fn evolve_for_plan(
    plan: &ResolvedPlan,
    emitters: &EmitterSet,
    initial: &InitialState,
) -> Result<(Evolution, HamiltonianAction)> {
    let spec = LatticeSpec::new(plan.lattice_n.unwrap(), plan.j)?;
    let action = dynamics::build_hamiltonian_action(&spec, emitters)?;
    let state = dynamics::initial_state(&spec, emitters, initial)?;
    let mut eplan = EvolvePlan::new(plan.t_final.unwrap(), plan.j)?;
    eplan.dt = plan.dt.unwrap();
    eplan.sample_stride = plan.sample_stride.unwrap();
    let evolution = dynamics::evolve(&state, &action, &eplan)?;
    Ok((evolution, action))
}

fn norm_conservation_row(scenario: &str, samples: &[TrajectorySample]) -> ClaimRow {
    let drift = samples.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max);
    ClaimRow {
        claim: "norm-conservation".to_string(),
        reference: scenario.to_string(),
        source: ClaimSource::DynamicRun,
        predicted: 0.0,
        measured: drift,
        tolerance: 1e-6,
        passed: drift < 1e-6,
        detail: format!("max |norm − 1| over {} samples; absolute tolerance", samples.len()),
    }
}

fn record_warnings(report: &mut ComparisonReport, evolution: &Evolution) {
    if let Some(w) = &evolution.revival_warning {
        report.warnings.push(w.clone());
    }
    report
        .warnings
        .push(format!("richardson_error_estimate = {:.3e}", evolution.richardson_estimate));
}

fn series(samples: &[TrajectorySample]) -> (Vec<f64>, Vec<f64>) {
    (
        samples.iter().map(|s| s.t).collect(),
        samples.iter().map(|s| s.pop_emitter_total).collect(),
    )
}

fn run_fig2a(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let emitters = EmitterSet::single(plan.delta, plan.g)?;
    let (evolution, _action) = evolve_for_plan(plan, &emitters, &InitialState::SingleExcited)?;
    record_warnings(report, &evolution);
    if let Some(dir) = out {
        let path = dir.join("trajectory.csv");
        write_trajectory_csv(&path, &evolution.samples)?;
        artifacts.push(path);
    }
    report.rows.push(norm_conservation_row(scen, &evolution.samples));

    let (times, pops) = series(&evolution.samples);
    let fit = fit_exponential_rate(&times, &pops);

    if plan.delta == 0.0 {
        // Band centre: the golden rule diverges; the decay rate comes from
        // the resonance pole, and the pole pair leaves a dip-and-recovery
        // feature where its contribution cancels against the slowly
        // decaying band-centre background.
        let sr = spectral::characterize_single_emitter(plan.j, plan.g, 0.0)?;
        let z_plus = sr
            .poles
            .iter()
            .map(|(e, _)| e.z)
            .find(|z| z.re >= 0.0)
            .ok_or_else(|| Error::AnalysisRefused {
                reason: "no pole with Re z ≥ 0 found".to_string(),
            })?;
        let pole_rate = sr.rate_convention.pole_rate(z_plus);
        match &fit {
            Ok(f) => {
                let rel = (f.rate - pole_rate).abs() / pole_rate;
                report.rows.push(ClaimRow {
                    claim: "midband-pole-decay-rate".to_string(),
                    reference: scen.to_string(),
                    source: ClaimSource::AnalyticFormula,
                    predicted: pole_rate,
                    measured: f.rate,
                    tolerance: 0.15,
                    passed: rel <= 0.15,
                    detail: format!(
                        "relative tolerance; fit window t ∈ [{:.2}, {:.2}] ({} samples, population 0.9→0.2); convention: {} decay rate 2|Im z| from pole z = {:.6e}{:+.6e}i",
                        f.window.0,
                        f.window.1,
                        f.points,
                        sr.rate_convention.describe(),
                        z_plus.re,
                        z_plus.im
                    ),
                });
            }
            Err(e) => report.rows.push(ClaimRow {
                claim: "midband-pole-decay-rate".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: pole_rate,
                measured: f64::NAN,
                tolerance: 0.15,
                passed: false,
                detail: format!("rate fit refused: {e}"),
            }),
        }

        // Finite decay: the population must drop below 0.1 within the
        // non-perturbative rate scale's horizon.
        let t_check = plan.t_final.unwrap().min(150.0);
        let pop_at = evolution
            .samples
            .iter()
            .filter(|s| s.t <= t_check + 1e-9)
            .last()
            .map(|s| s.pop_emitter_total)
            .unwrap_or(f64::NAN);
        report.rows.push(ClaimRow {
            claim: "midband-decay-below-threshold".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::AnalyticFormula,
            predicted: 0.1,
            measured: pop_at,
            tolerance: 0.0,
            passed: pop_at < 0.1,
            detail: format!(
                "threshold: population at t = {t_check} must fall below 0.1 (rate scale {:.6e})",
                sr.nonperturbative_rate
            ),
        });

        // The dip-and-recovery feature left by the pole pair, resolved on
        // the resolvent engine where the horizon is not limited by lattice
        // revivals.
        let table = SpectralTable::build(plan.j, &emitters, StateSelector::Single)?;
        let horizon = 9.0 * plan.j / (plan.g * plan.g);
        let steps = 900;
        let mut ts = Vec::with_capacity(steps + 1);
        let mut ps = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let t = horizon * i as f64 / steps as f64;
            ts.push(t);
            ps.push(table.amplitude(t).norm_sqr());
        }
        let beat_predicted = plan.g * plan.g / plan.j;
        match detect_oscillation(&ts, &ps) {
            Ok(osc) => {
                let rel = (osc.implied_frequency - beat_predicted).abs() / beat_predicted;
                report.rows.push(ClaimRow {
                    claim: "midband-beat-frequency".to_string(),
                    reference: scen.to_string(),
                    source: ClaimSource::AnalyticFormula,
                    predicted: beat_predicted,
                    measured: osc.implied_frequency,
                    tolerance: 0.30,
                    passed: rel <= 0.30,
                    detail: format!(
                        "relative tolerance; resolvent-engine trace to t = {horizon:.0}; log-population dip at t = {:.1}, recovery maximum at t = {:.1}; implied frequency = 1/(t_max − t_min), compared to the pole-splitting scale g²/J (pole pair ±{:.6e}{:+.6e}i)",
                        osc.t_min, osc.t_max, z_plus.re, z_plus.im
                    ),
                });
            }
            Err(e) => report.rows.push(ClaimRow {
                claim: "midband-beat-frequency".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: beat_predicted,
                measured: f64::NAN,
                tolerance: 0.30,
                passed: false,
                detail: format!("oscillation detection refused: {e}"),
            }),
        }
    } else {
        // Off centre: the fitted rate must match the golden-rule value.
        let fgr = spectral::fgr_rate(plan.j, plan.g, plan.delta)?;
        match &fit {
            Ok(f) => {
                let rel = (f.rate - fgr).abs() / fgr;
                report.rows.push(ClaimRow {
                    claim: "golden-rule-decay-rate".to_string(),
                    reference: scen.to_string(),
                    source: ClaimSource::AnalyticFormula,
                    predicted: fgr,
                    measured: f.rate,
                    tolerance: 0.10,
                    passed: rel <= 0.10,
                    detail: format!(
                        "relative tolerance; fit window t ∈ [{:.2}, {:.2}] ({} samples, population 0.9→0.2); population convention",
                        f.window.0, f.window.1, f.points
                    ),
                });
            }
            Err(e) => report.rows.push(ClaimRow {
                claim: "golden-rule-decay-rate".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: fgr,
                measured: f64::NAN,
                tolerance: 0.10,
                passed: false,
                detail: format!("rate fit refused: {e}"),
            }),
        }
    }
    Ok(())
}

fn run_fig2bc(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let emitters = EmitterSet::single(plan.delta, plan.g)?;
    let (evolution, action) = evolve_for_plan(plan, &emitters, &InitialState::SingleExcited)?;
    record_warnings(report, &evolution);
    let n = plan.lattice_n.unwrap();
    let map = dynamics::population_map_real_space(&evolution.final_state)?;
    if let Some(dir) = out {
        let path = dir.join("trajectory.csv");
        write_trajectory_csv(&path, &evolution.samples)?;
        artifacts.push(path);
        let path = dir.join("map.bin");
        write_map_binary(&path, n, evolution.final_state.time(), &map)?;
        artifacts.push(path);
    }
    report.rows.push(norm_conservation_row(scen, &evolution.samples));

    let centre = action.emitter_sites()[0];
    let ratio = dynamics::anisotropy_ratio(&map, n, centre)?;
    let row = if plan.delta == 0.0 {
        ClaimRow {
            claim: "emission-anisotropy".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: 3.0,
            measured: ratio,
            tolerance: 0.0,
            passed: ratio > 3.0,
            detail: "threshold: diagonal/axis emission-power ratio must exceed 3 at the band centre (beamed emission)".to_string(),
        }
    } else if (plan.delta + 3.0 * plan.j).abs() < 1e-12 {
        ClaimRow {
            claim: "emission-anisotropy".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: 1.5,
            measured: ratio,
            tolerance: 0.0,
            passed: ratio < 1.5,
            detail: "threshold: diagonal/axis emission-power ratio must stay below 1.5 at Δ = −3J (ring-like emission)".to_string(),
        }
    } else {
        ClaimRow {
            claim: "emission-anisotropy".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: f64::NAN,
            measured: ratio,
            tolerance: 0.0,
            passed: true,
            detail: format!("informational: no anisotropy threshold defined at Δ = {}", plan.delta),
        }
    };
    report.rows.push(row);
    Ok(())
}

/// Shared driver for the two-emitter scenarios: evolves both superposition
/// signs and returns `(evolution, action)` for the symmetric state first.
#[allow(clippy::type_complexity)]
fn run_pair_states(
    plan: &ResolvedPlan,
) -> Result<((Evolution, HamiltonianAction), (Evolution, HamiltonianAction))> {
    let n12 = plan.n12.unwrap();
    let emitters = EmitterSet::pair(n12, plan.delta, plan.g)?;
    let plus = InitialState::TwoPm { sign: Sign::Plus, n12 };
    let minus = InitialState::TwoPm { sign: Sign::Minus, n12 };
    let pair_plus = evolve_for_plan(plan, &emitters, &plus)?;
    let pair_minus = evolve_for_plan(plan, &emitters, &minus)?;
    Ok((pair_plus, pair_minus))
}

fn run_fig3a(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let n12 = plan.n12.unwrap();
    let ((ev_plus, _), (ev_minus, _)) = run_pair_states(plan)?;
    record_warnings(report, &ev_plus);
    if let Some(dir) = out {
        for (name, ev) in [("trajectory_plus.csv", &ev_plus), ("trajectory_minus.csv", &ev_minus)] {
            let path = dir.join(name);
            write_trajectory_csv(&path, &ev.samples)?;
            artifacts.push(path);
        }
    }
    let drift = |ev: &Evolution| {
        ev.samples.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max)
    };
    let worst = drift(&ev_plus).max(drift(&ev_minus));
    report.rows.push(ClaimRow {
        claim: "norm-conservation".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::DynamicRun,
        predicted: 0.0,
        measured: worst,
        tolerance: 1e-6,
        passed: worst < 1e-6,
        detail: "max |norm − 1| over both superposition runs; absolute tolerance".to_string(),
    });

    let p_plus = ev_plus.samples.last().map(|s| s.pop_state_initial).unwrap_or(f64::NAN);
    let p_minus = ev_minus.samples.last().map(|s| s.pop_state_initial).unwrap_or(f64::NAN);
    let t_end = plan.t_final.unwrap();

    if n12.0 == n12.1 {
        // Diagonal offsets obey the parity rule: the interference factor in
        // the pair decay rates approaches (−1)ⁿ, so even n protects the
        // antisymmetric state and odd n the symmetric one.
        let nd = n12.0.abs();
        let slow_is_minus = nd % 2 == 0;
        let (p_slow, p_fast, slow_name, fast_name) = if slow_is_minus {
            (p_minus, p_plus, "antisymmetric", "symmetric")
        } else {
            (p_plus, p_minus, "symmetric", "antisymmetric")
        };
        report.rows.push(ClaimRow {
            claim: "parity-ordered-pair-decay".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::AnalyticFormula,
            predicted: p_fast,
            measured: p_slow,
            tolerance: 0.0,
            passed: p_slow > p_fast,
            detail: format!(
                "threshold: with offset ({0},{0}) (n = {1}, {2}) the {3} state must retain more population than the {4} state at t = {5}",
                n12.0,
                nd,
                if nd % 2 == 0 { "even" } else { "odd" },
                slow_name,
                fast_name,
                t_end
            ),
        });
        report.rows.push(ClaimRow {
            claim: "subradiant-state-decays".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: 0.99,
            measured: p_slow,
            tolerance: 0.0,
            passed: p_slow < 0.99,
            detail: format!(
                "threshold: the protected ({slow_name}) state must still have lost measurable population by t = {t_end} (imperfect subradiance)"
            ),
        });
        report.rows.push(ClaimRow {
            claim: "superradiant-state-survives".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: 1e-4,
            measured: p_fast,
            tolerance: 0.0,
            passed: p_fast > 1e-4,
            detail: format!(
                "threshold: the unprotected ({fast_name}) state must retain more than 1e-4 population at t = {t_end} (imperfect superradiance)"
            ),
        });

        let ratio = greens::markov_ratio_diagonal(plan.j, nd)?;
        let parity = if nd % 2 == 0 { 1.0 } else { -1.0 };
        let err = (ratio - parity).abs();
        report.rows.push(ClaimRow {
            claim: "pair-markov-ratio".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::AnalyticFormula,
            predicted: parity,
            measured: ratio,
            tolerance: 1e-3,
            passed: err <= 1e-3,
            detail: format!(
                "absolute tolerance; band-centre interference ratio for diagonal offset n = {nd}, extrapolated to the real axis"
            ),
        });
    } else {
        report.rows.push(ClaimRow {
            claim: "pair-population-ordering".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: p_plus,
            measured: p_minus,
            tolerance: 0.0,
            passed: true,
            detail: format!(
                "informational: off-diagonal offset ({},{}) has no parity rule; symmetric retains {p_plus:.6e}, antisymmetric {p_minus:.6e} at t = {t_end}",
                n12.0, n12.1
            ),
        });
    }
    Ok(())
}

fn run_fig3bcde(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let n = plan.lattice_n.unwrap();
    let ((ev_plus, ac_plus), (ev_minus, _)) = run_pair_states(plan)?;
    record_warnings(report, &ev_plus);
    let sites = ac_plus.emitter_sites().to_vec();

    for (ev, sign_name, csv_name, map_name) in [
        (&ev_plus, "symmetric", "trajectory_plus.csv", "map_plus.bin"),
        (&ev_minus, "antisymmetric", "trajectory_minus.csv", "map_minus.bin"),
    ] {
        let map = dynamics::population_map_real_space(&ev.final_state)?;
        if let Some(dir) = out {
            let path = dir.join(csv_name);
            write_trajectory_csv(&path, &ev.samples)?;
            artifacts.push(path);
            let path = dir.join(map_name);
            write_map_binary(&path, n, ev.final_state.time(), &map)?;
            artifacts.push(path);
        }

        // Both superposition states are inversion eigenstates about the
        // pair midpoint, so their emission magnitude maps must be exactly
        // inversion symmetric: |C(s₁ + s₂ − n)| = |C(n)|.
        let (cx, cy) = (sites[0].0 + sites[1].0, sites[0].1 + sites[1].1);
        let mut asym: f64 = 0.0;
        for y in 0..n {
            let ym = (cy + n - y) % n;
            for x in 0..n {
                let xm = (cx + n - x) % n;
                let d = (map[y * n + x] - map[ym * n + xm]).abs();
                asym = asym.max(d);
            }
        }
        report.rows.push(ClaimRow {
            claim: format!("map-inversion-symmetry-{sign_name}"),
            reference: scen.to_string(),
            source: ClaimSource::DynamicRun,
            predicted: 0.0,
            measured: asym,
            tolerance: 1e-8,
            passed: asym < 1e-8,
            detail: format!(
                "absolute tolerance; max ||C(s₁+s₂−n)| − |C(n)|| over the {sign_name}-state emission map"
            ),
        });
    }

    let drift = |ev: &Evolution| {
        ev.samples.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max)
    };
    let worst = drift(&ev_plus).max(drift(&ev_minus));
    report.rows.push(ClaimRow {
        claim: "norm-conservation".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::DynamicRun,
        predicted: 0.0,
        measured: worst,
        tolerance: 1e-6,
        passed: worst < 1e-6,
        detail: "max |norm − 1| over both superposition runs; absolute tolerance".to_string(),
    });
    Ok(())
}

fn run_tail(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let emitters = EmitterSet::single(plan.delta, plan.g)?;
    let table = SpectralTable::build(plan.j, &emitters, StateSelector::Single)?;
    let (lo, hi) = plan.tail_window.unwrap();
    let count = 64;
    let ratio = hi / lo;
    let mut times = Vec::with_capacity(count);
    let mut pops = Vec::with_capacity(count);
    let mut compensated = Vec::with_capacity(count);
    for i in 0..count {
        let t = lo * ratio.powf(i as f64 / (count - 1) as f64);
        let p = table.amplitude(t).norm_sqr();
        let l = (16.0 * plan.j * t).ln();
        times.push(t);
        pops.push(p);
        compensated.push(p * (t * l * l).powi(2));
    }
    if let Some(dir) = out {
        let path = dir.join("tail.csv");
        write_tail_csv(&path, &times, &pops, &compensated)?;
        artifacts.push(path);
    }

    match spectral::long_time_tail_exponent(plan.j, &times, &pops) {
        Ok(fit) => {
            report.rows.push(ClaimRow {
                claim: "tail-compensated-drift".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: 0.0,
                measured: fit.drift,
                tolerance: 0.2,
                passed: fit.drift <= 0.2,
                detail: format!(
                    "threshold: max/min − 1 of p·[t·ln²(16Jt)]² over t ∈ [{lo}, {hi}] must stay ≤ 0.2 (mean compensated amplitude {:.6e})",
                    fit.amplitude
                ),
            });
            report.rows.push(ClaimRow {
                claim: "tail-exponent".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: -2.0,
                measured: fit.exponent,
                tolerance: 0.5,
                passed: (fit.exponent + 2.0).abs() <= 0.5,
                detail: "absolute tolerance; slope of ln p against ln[t·ln²(16Jt)]".to_string(),
            });
            // Convergence diagnostic: the same drift metric over the upper
            // half of the window (in log t), where the subleading
            // corrections to the tail law have largely decayed. Not a
            // pass/fail gate — it documents whether a failing full-window
            // drift is a transient of the window head or a real departure
            // from the law.
            let half = times.len() / 2;
            let (c_max, c_min) = compensated[half..]
                .iter()
                .fold((f64::MIN, f64::MAX), |(ma, mi), &c| (ma.max(c), mi.min(c)));
            let late_drift = c_max / c_min - 1.0;
            report.rows.push(ClaimRow {
                claim: "tail-late-window-drift".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: 0.0,
                measured: late_drift,
                tolerance: 0.2,
                passed: late_drift <= 0.2,
                detail: format!(
                    "diagnostic; max/min − 1 of the compensated product over t ∈ [{:.0}, {:.0}] (upper half of the window in log t); its limit estimate is {:.6e}",
                    times[half],
                    times[times.len() - 1],
                    compensated[times.len() - 1]
                ),
            });
        }
        Err(e) => {
            report.rows.push(ClaimRow {
                claim: "tail-compensated-drift".to_string(),
                reference: scen.to_string(),
                source: ClaimSource::AnalyticFormula,
                predicted: 0.0,
                measured: f64::NAN,
                tolerance: 0.2,
                passed: false,
                detail: format!("tail fit refused: {e}"),
            });
        }
    }
    Ok(())
}

fn run_poles(plan: &ResolvedPlan, report: &mut ComparisonReport) -> Result<()> {
    let scen = plan.scenario.as_str();
    let sr = spectral::characterize_single_emitter(plan.j, plan.g, plan.delta)?;
    if sr.poles.len() != 2 {
        return Err(Error::AnalysisRefused {
            reason: format!("expected a pole pair, found {} poles", sr.poles.len()),
        });
    }
    let (z_a, r_a) = (sr.poles[0].0.z, sr.poles[0].1);
    let (z_b, r_b) = (sr.poles[1].0.z, sr.poles[1].1);
    let (z_plus, r_plus, z_minus) =
        if z_a.re >= z_b.re { (z_a, r_a, z_b) } else { (z_b, r_b, z_a) };

    let sym = (z_minus + z_plus.conj()).norm();
    report.rows.push(ClaimRow {
        claim: "pole-conjugate-symmetry".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::AnalyticFormula,
        predicted: 0.0,
        measured: sym,
        tolerance: 1e-10,
        passed: sym < 1e-10,
        detail: format!(
            "absolute tolerance; |z₋ + z₊*| for the pair z₊ = {:.6e}{:+.6e}i, z₋ = {:.6e}{:+.6e}i",
            z_plus.re, z_plus.im, z_minus.re, z_minus.im
        ),
    });

    let re_scale = plan.g * plan.g / (2.0 * plan.j);
    let rel = (z_plus.re - re_scale).abs() / re_scale;
    report.rows.push(ClaimRow {
        claim: "pole-real-part-scale".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::AnalyticFormula,
        predicted: re_scale,
        measured: z_plus.re,
        tolerance: 0.2,
        passed: rel <= 0.2,
        detail: format!(
            "relative tolerance; Re z₊ against g²/2J; residue at z₊ is {:.6e}{:+.6e}i",
            r_plus.re, r_plus.im
        ),
    });

    let pole_rate = sr.rate_convention.pole_rate(z_plus);
    let lambda = sr.nonperturbative_rate;
    let ratio = pole_rate / lambda;
    report.rows.push(ClaimRow {
        claim: "pole-decay-scale-ratio".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::AnalyticFormula,
        predicted: lambda,
        measured: pole_rate,
        tolerance: 0.0,
        passed: (0.6..=1.0).contains(&ratio),
        detail: format!(
            "threshold: {} decay rate from the pole must fall within [0.6, 1.0] of the non-perturbative scale (ratio {ratio:.4})",
            sr.rate_convention.describe()
        ),
    });
    Ok(())
}

fn run_residue4(
    plan: &ResolvedPlan,
    out: Option<&Path>,
    report: &mut ComparisonReport,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let scen = plan.scenario.as_str();
    let nd = plan.diamond_n.unwrap();
    let emitters = EmitterSet::diamond(nd, plan.delta, plan.g)?;
    let initial = InitialState::FourPm { sign: Sign::Minus, n: nd };
    let (evolution, _action) = evolve_for_plan(plan, &emitters, &initial)?;
    record_warnings(report, &evolution);
    if let Some(dir) = out {
        let path = dir.join("trajectory.csv");
        write_trajectory_csv(&path, &evolution.samples)?;
        artifacts.push(path);
    }
    report.rows.push(norm_conservation_row(scen, &evolution.samples));

    let steady = spectral::four_emitter_steady_population(plan.j, plan.g, nd)?;
    let t_end = plan.t_final.unwrap();
    let (w_lo, w_hi) = (0.5 * t_end, t_end);
    let window: Vec<&TrajectorySample> = evolution
        .samples
        .iter()
        .filter(|s| s.t >= w_lo - 1e-9 && s.t <= w_hi + 1e-9)
        .collect();
    if window.is_empty() {
        report.rows.push(ClaimRow {
            claim: "four-emitter-plateau".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::AnalyticFormula,
            predicted: steady.population,
            measured: f64::NAN,
            tolerance: 0.02,
            passed: false,
            detail: format!("no samples in the plateau window t ∈ [{w_lo}, {w_hi}]"),
        });
    } else {
        let lo = window.iter().map(|s| s.pop_state_initial).fold(f64::INFINITY, f64::min);
        let hi = window.iter().map(|s| s.pop_state_initial).fold(f64::NEG_INFINITY, f64::max);
        let worst =
            if (hi - steady.population).abs() > (lo - steady.population).abs() { hi } else { lo };
        let rel = (worst - steady.population).abs() / steady.population;
        report.rows.push(ClaimRow {
            claim: "four-emitter-plateau".to_string(),
            reference: scen.to_string(),
            source: ClaimSource::AnalyticFormula,
            predicted: steady.population,
            measured: worst,
            tolerance: 0.02,
            passed: rel <= 0.02,
            detail: format!(
                "relative tolerance; every sample in t ∈ [{w_lo}, {w_hi}] must stay within 2% of the predicted plateau (window min {lo:.6e}, max {hi:.6e}, {} samples)",
                window.len()
            ),
        });
    }

    // The interference self-energy of the trapped superposition vanishes at
    // the band centre; checked against the quadrature oracle.
    let sigma0 = greens::sigma_4minus(plan.j, plan.g, nd, Complex64::new(0.0, 0.0))?;
    report.rows.push(ClaimRow {
        claim: "interference-self-energy-zero".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::Oracle,
        predicted: 0.0,
        measured: sigma0.norm(),
        tolerance: 1e-8,
        passed: sigma0.norm() < 1e-8,
        detail: "absolute tolerance; |Σ₄₋(0)| from adaptive quadrature".to_string(),
    });

    let slope = greens::sigma_4minus_derivative_at_zero(plan.j, plan.g, nd, 1e-4)?;
    let predicted_slope = -plan.g * plan.g * (nd * nd) as f64 / (plan.j * plan.j);
    let err = (slope - predicted_slope).abs();
    report.rows.push(ClaimRow {
        claim: "interference-self-energy-slope".to_string(),
        reference: scen.to_string(),
        source: ClaimSource::Oracle,
        predicted: predicted_slope,
        measured: slope,
        tolerance: 1e-4,
        passed: err <= 1e-4,
        detail: "absolute tolerance; ∂_z Σ₄₋(0) against −g²n²/J² (imaginary-axis finite difference)"
            .to_string(),
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// Engine cross-check
// ---------------------------------------------------------------------------

/// Configuration of the time-domain vs resolvent cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineComparisonConfig {
    /// Lattice edge length for the time-domain engine.
    pub n: usize,
    /// Emitter coupling.
    pub g: f64,
    /// Emitter detuning.
    pub delta: f64,
    /// Comparison horizon.
    pub t_final: f64,
    /// Integrator step.
    pub dt: f64,
}

impl Default for EngineComparisonConfig {
    fn default() -> Self {
        EngineComparisonConfig { n: 1024, g: 0.1, delta: 0.0, t_final: 100.0, dt: 0.0125 }
    }
}

/// Runs the same single-emitter problem on both engines and reports the
/// worst disagreement of `|C_e(t)|` at about one sample per unit time.
///
/// # Errors
///
/// Configuration errors from either engine; numerical failures mid-run.
pub fn compare_engines(config: &EngineComparisonConfig) -> Result<ComparisonReport> {
    let j = 1.0;
    let mut report = ComparisonReport::new("engines");
    report.header.push(("engine".into(), "dynamics vs resolvent".into()));
    report.header.push(("lattice_n".into(), format!("{}", config.n)));
    report.header.push(("g".into(), format!("{}", config.g)));
    report.header.push(("delta".into(), format!("{}", config.delta)));
    report.header.push(("t_final".into(), format!("{}", config.t_final)));
    report.header.push(("dt".into(), format!("{}", config.dt)));

    let emitters = EmitterSet::single(config.delta, config.g)?;
    let spec = LatticeSpec::new(config.n, j)?;
    let action = dynamics::build_hamiltonian_action(&spec, &emitters)?;
    let state = dynamics::initial_state(&spec, &emitters, &InitialState::SingleExcited)?;
    let mut eplan = EvolvePlan::new(config.t_final, j)?;
    eplan.dt = config.dt;
    eplan.sample_stride = ((1.0 / config.dt).round() as usize).max(1);
    let evolution = dynamics::evolve(&state, &action, &eplan)?;
    if let Some(w) = &evolution.revival_warning {
        report.warnings.push(w.clone());
    }

    let table = SpectralTable::build(j, &emitters, StateSelector::Single)?;
    let mut worst = 0.0f64;
    let mut worst_t = 0.0;
    for s in &evolution.samples {
        let resolvent_amp = table.amplitude(s.t).norm();
        let dynamic_amp = s.pop_emitter_total.sqrt();
        let d = (resolvent_amp - dynamic_amp).abs();
        if d > worst {
            worst = d;
            worst_t = s.t;
        }
    }
    report.rows.push(ClaimRow {
        claim: "engine-amplitude-agreement".to_string(),
        reference: "engines".to_string(),
        source: ClaimSource::Oracle,
        predicted: 0.0,
        measured: worst,
        tolerance: 1e-3,
        passed: worst < 1e-3,
        detail: format!(
            "absolute tolerance; max ||C_e|_resolvent − |C_e|_dynamics| over {} samples (worst at t = {worst_t:.1})",
            evolution.samples.len()
        ),
    });
    report.rows.push(norm_conservation_row("engines", &evolution.samples));
    Ok(report)
}
