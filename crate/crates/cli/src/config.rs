//! Run configuration: a JSON object with one block per concern, unknown keys rejected.
//!
//! Defaults are resolved at parse time (ε = h, CFL safety 0.25, ten snapshots), so the
//! emitted form of a parsed config re-parses to the same structure.

use std::fmt;
use std::path::PathBuf;

use levelset_core::geometry::DomainSpec;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Simulate,
    RadialLimit,
    ChannelAnalyze,
    CheckCondition,
    Bounds,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Simulate => "simulate",
            CaseKind::RadialLimit => "radial-limit",
            CaseKind::ChannelAnalyze => "channel-analyze",
            CaseKind::CheckCondition => "check-condition",
            CaseKind::Bounds => "bounds",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseKind,
    /// Label used in summaries and output file names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionBlock>,
    #[serde(default, skip_serializing_if = "Checks::is_empty")]
    pub checks: Checks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainBlock {
    Disk {
        radius: f64,
        #[serde(default = "two")]
        dim: usize,
    },
    Rectangle {
        half_extents: Vec<f64>,
    },
    Channel {
        m: f64,
        k: f64,
        x_max: f64,
    },
}

fn two() -> usize {
    2
}

impl DomainBlock {
    pub fn to_spec(&self) -> DomainSpec {
        match self {
            DomainBlock::Disk { radius, dim } => DomainSpec::Disk {
                radius: *radius,
                dim: *dim,
            },
            DomainBlock::Rectangle { half_extents } => DomainSpec::Rectangle {
                half_extents: half_extents.clone(),
            },
            DomainBlock::Channel { m, k, x_max } => DomainSpec::Channel {
                m: *m,
                k: *k,
                x_max: *x_max,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingBlock {
    Constant(f64),
    /// Piecewise `(n−1)/a`, `(n−1)/r`, `(n−1)/b`.
    Toy { a: f64, b: f64 },
    /// Crosses `(n−1)/r` at `a`, stays below it on `(a, b)` and touches it at `b`.
    Anchored { a: f64, b: f64, width: f64, slope: f64 },
    /// Piecewise-linear radial samples.
    RadialSamples { r: Vec<f64>, c: Vec<f64> },
    /// Constant `fraction / r_min` on a channel domain.
    ChannelStationary { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialBlock {
    Constant(f64),
    /// Quintic smoothstep in `|x|` from `high` on `[0, r0]` to `low` beyond `r1`.
    RadialStep { r0: f64, r1: f64, high: f64, low: f64 },
    /// `offset + amplitude · sin(wave · x + phase)`.
    Trig {
        amplitude: f64,
        wave: Vec<f64>,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `beta` inside `U(a₁ − l)`, `alpha` outside `U(a₁ + l)`, `l = l_fraction (a₂ − a₁)`.
    ChannelBarrier { l_fraction: f64, alpha: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    Upwind,
    Eno2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub h: f64,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stencil: Option<Stencil>,
    /// Channel runs: pinned cells start this many cells beyond the outer barrier's reach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin_margin_cells: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialBlock {
    pub h: f64,
    pub t_final: f64,
    /// Radius of the expected jump; the comparison skips a band around it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_cells: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupCheck {
    /// Final Lipschitz constant across the band must exceed this multiple of the initial one.
    pub factor: f64,
    /// Required jump across the band, as a fraction of `high − low`.
    pub jump_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    /// Barrier half-width `l = l_fraction (a₂ − a₁)`.
    pub l_fraction: f64,
    /// Samples of `r(a)` in the emitted table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Points of the brute-force scan of `h` on the barrier interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brute_points: Option<usize>,
    /// Grid spacing of the emitted masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_h: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionBlock {
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// Assertions evaluated on a simulation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    /// `E(t_{k+1}) ≤ E(t_k) + 1e-8|E(t_k)| + 1e-12`; on by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<bool>,
    /// `max_w` nonincreasing within 1e-8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_w_nonincreasing: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_lipschitz: Option<LipschitzCheck>,
    /// `sup|Δu|/dt ≤ 1.2 M + c_max ε`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_lipschitz: Option<bool>,
    /// Constant data evolve as `u₀ + c ε t` to 1e-12 relative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial_match: Option<RadialMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_convergence: Option<ChannelConvergence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonCheck>,
}

impl Checks {
    pub fn is_empty(&self) -> bool {
        *self == Checks::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzCheck {
    pub delta: f64,
    /// The max over the run may exceed the max over `[0, window]` by at most `growth`.
    pub window: f64,
    pub growth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialMatch {
    pub h: f64,
    pub front: f64,
    /// Half-width of the excluded band around `front`, absolute.
    pub band: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConvergence {
    /// Barrier decay rate as a fraction of `δ₀`.
    pub delta_fraction: f64,
    pub band_cells: f64,
    pub metric_tol: f64,
    /// Fraction of the run after which the metric must not increase.
    pub transient: f64,
    /// Erosion/dilation radius of the sandwich test, in cells.
    pub sandwich_cells: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonCheck {
    pub pairs: usize,
    pub seed: u64,
}

const DEFAULT_SNAPSHOTS: f64 = 10.0;

/// Parses and validates a config, returning every validation error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        vec![ConfigError {
            path,
            line: Some(inner.line()),
            column: Some(inner.column()),
            message: inner.to_string(),
        }]
    })?;
    let errors = validate(&mut cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Pretty JSON form of a config.
pub fn emit_config(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config is always serializable")
}

struct Errors(Vec<ConfigError>);

impl Errors {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(ConfigError {
            path: path.to_string(),
            line: None,
            column: None,
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be positive and finite, got {v}"));
        }
    }

    fn finite(&mut self, path: &str, v: f64) {
        if !v.is_finite() {
            self.push(path, format!("must be finite, got {v}"));
        }
    }

    fn require<T>(&mut self, block: &Option<T>, path: &str, case: CaseKind) {
        if block.is_none() {
            self.push(path, format!("required by case `{case}`"));
        }
    }
}

fn validate(cfg: &mut RunConfig) -> Vec<ConfigError> {
    let mut e = Errors(Vec::new());
    let case = cfg.case;
    match case {
        CaseKind::Simulate => {
            e.require(&cfg.domain, "domain", case);
            e.require(&cfg.forcing, "forcing", case);
            e.require(&cfg.initial, "initial", case);
            e.require(&cfg.solver, "solver", case);
        }
        CaseKind::RadialLimit => {
            e.require(&cfg.domain, "domain", case);
            e.require(&cfg.forcing, "forcing", case);
            e.require(&cfg.initial, "initial", case);
            e.require(&cfg.radial, "radial", case);
        }
        CaseKind::ChannelAnalyze => {
            e.require(&cfg.domain, "domain", case);
            e.require(&cfg.forcing, "forcing", case);
            e.require(&cfg.channel, "channel", case);
        }
        CaseKind::CheckCondition => {
            e.require(&cfg.domain, "domain", case);
            e.require(&cfg.forcing, "forcing", case);
            e.require(&cfg.condition, "condition", case);
        }
        CaseKind::Bounds => {
            e.require(&cfg.domain, "domain", case);
            e.require(&cfg.forcing, "forcing", case);
            e.require(&cfg.initial, "initial", case);
            e.require(&cfg.solver, "solver", case);
        }
    }
    if let Some(d) = &cfg.domain {
        validate_domain(&mut e, d);
    }
    let channel_domain = matches!(cfg.domain, Some(DomainBlock::Channel { .. }));
    let radial_domain = matches!(cfg.domain, Some(DomainBlock::Disk { .. }));
    if let Some(f) = &cfg.forcing {
        validate_forcing(&mut e, f, channel_domain, radial_domain);
    }
    if let Some(i) = &cfg.initial {
        validate_initial(&mut e, i, cfg.domain.as_ref(), cfg.forcing.as_ref());
    }
    if let Some(s) = &mut cfg.solver {
        e.positive("solver.h", s.h);
        e.positive("solver.t_final", s.t_final);
        let eps = *s.eps.get_or_insert(s.h);
        e.positive("solver.eps", eps);
        let safety = *s.cfl_safety.get_or_insert(0.25);
        if !(safety > 0.0 && safety <= 1.0) {
            e.push("solver.cfl_safety", format!("must lie in (0, 1], got {safety}"));
        }
        let every = *s.snapshot_every.get_or_insert(s.t_final / DEFAULT_SNAPSHOTS);
        e.positive("solver.snapshot_every", every);
        s.stencil.get_or_insert(Stencil::Upwind);
        if let Some(m) = s.pin_margin_cells {
            if !(m >= 0.0 && m.is_finite()) {
                e.push("solver.pin_margin_cells", format!("must be non-negative, got {m}"));
            }
        }
    }
    if let Some(r) = &mut cfg.radial {
        e.positive("radial.h", r.h);
        if !(r.t_final >= 0.0 && r.t_final.is_finite()) {
            e.push("radial.t_final", format!("must be non-negative, got {}", r.t_final));
        }
        let front = r.front.or(match cfg.forcing {
            Some(ForcingBlock::Toy { a, .. }) | Some(ForcingBlock::Anchored { a, .. }) => Some(a),
            _ => None,
        });
        match front {
            Some(a) => {
                e.positive("radial.front", a);
                r.front = Some(a);
            }
            None => e.push("radial.front", "needed when the forcing has no distinguished radius"),
        }
        e.positive("radial.band_cells", *r.band_cells.get_or_insert(6.0));
        e.positive("radial.tol", *r.tol.get_or_insert(0.05));
        if let Some(b) = &r.blowup {
            e.positive("radial.blowup.factor", b.factor);
            e.positive("radial.blowup.jump_fraction", b.jump_fraction);
        }
        if !matches!(cfg.initial, Some(InitialBlock::RadialStep { .. }) | Some(InitialBlock::Constant(_)))
        {
            e.push("initial", "radial-limit needs radial initial data (radial_step or constant)");
        }
    }
    if let Some(c) = &mut cfg.channel {
        if !(c.l_fraction > 0.0 && c.l_fraction < 1.0) {
            e.push("channel.l_fraction", format!("must lie in (0, 1), got {}", c.l_fraction));
        }
        if *c.samples.get_or_insert(100) < 2 {
            e.push("channel.samples", "need at least 2 samples");
        }
        if *c.brute_points.get_or_insert(1_000_000) < 2 {
            e.push("channel.brute_points", "need at least 2 points");
        }
        e.positive("channel.mask_h", *c.mask_h.get_or_insert(0.02));
        if !channel_domain {
            e.push("domain", "channel-analyze needs a channel domain");
        }
    }
    if let Some(c) = &mut cfg.condition {
        e.positive("condition.delta", c.delta);
        if *c.samples.get_or_insert(64) < 2 {
            e.push("condition.samples", "need at least 2 samples per axis");
        }
    }
    validate_checks(&mut e, &cfg.checks, channel_domain);
    if let Some(0) = cfg.threads {
        e.push("threads", "must be at least 1");
    }
    e.0
}

fn validate_domain(e: &mut Errors, d: &DomainBlock) {
    match d {
        DomainBlock::Disk { radius, dim } => {
            e.positive("domain.disk.radius", *radius);
            if !(2..=3).contains(dim) {
                e.push("domain.disk.dim", format!("must be 2 or 3, got {dim}"));
            }
        }
        DomainBlock::Rectangle { half_extents } => {
            if !(2..=3).contains(&half_extents.len()) {
                e.push("domain.rectangle.half_extents", "need 2 or 3 extents");
            }
            for (i, v) in half_extents.iter().enumerate() {
                e.positive(&format!("domain.rectangle.half_extents[{i}]"), *v);
            }
        }
        DomainBlock::Channel { m, k, x_max } => {
            e.positive("domain.channel.m", *m);
            e.positive("domain.channel.k", *k);
            e.positive("domain.channel.x_max", *x_max);
        }
    }
}

fn validate_forcing(e: &mut Errors, f: &ForcingBlock, channel: bool, radial: bool) {
    match f {
        ForcingBlock::Constant(c) => e.finite("forcing.constant", *c),
        ForcingBlock::Toy { a, b } | ForcingBlock::Anchored { a, b, .. } => {
            e.positive("forcing.a", *a);
            if !(b > a) {
                e.push("forcing.b", format!("must exceed a = {a}, got {b}"));
            }
            if !radial {
                e.push("forcing", "radial forcing needs a disk domain");
            }
        }
        ForcingBlock::RadialSamples { r, c } => {
            if r.len() != c.len() || r.len() < 2 {
                e.push("forcing.radial_samples", "r and c need equal lengths of at least 2");
            }
            if !radial {
                e.push("forcing", "radial forcing needs a disk domain");
            }
        }
        ForcingBlock::ChannelStationary { fraction } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                e.push("forcing.channel_stationary.fraction", format!("must lie in (0, 1), got {fraction}"));
            }
            if !channel {
                e.push("forcing", "channel_stationary forcing needs a channel domain");
            }
        }
    }
}

fn validate_initial(e: &mut Errors, i: &InitialBlock, domain: Option<&DomainBlock>, forcing: Option<&ForcingBlock>) {
    match i {
        InitialBlock::Constant(v) => e.finite("initial.constant", *v),
        InitialBlock::RadialStep { r0, r1, high, low } => {
            if !(r0 >= &0.0 && r1 > r0) {
                e.push("initial.radial_step", format!("need 0 ≤ r0 < r1, got {r0}, {r1}"));
            }
            e.finite("initial.radial_step.high", *high);
            e.finite("initial.radial_step.low", *low);
        }
        InitialBlock::Trig { amplitude, wave, phase, offset } => {
            e.finite("initial.trig.amplitude", *amplitude);
            e.finite("initial.trig.phase", *phase);
            e.finite("initial.trig.offset", *offset);
            let dim = domain.map(|d| d.to_spec().dim()).unwrap_or(wave.len());
            if wave.len() != dim {
                e.push("initial.trig.wave", format!("needs {dim} components, got {}", wave.len()));
            }
        }
        InitialBlock::ChannelBarrier { l_fraction, alpha, beta } => {
            if !(*l_fraction > 0.0 && *l_fraction < 1.0) {
                e.push("initial.channel_barrier.l_fraction", format!("must lie in (0, 1), got {l_fraction}"));
            }
            if !(alpha < beta) {
                e.push("initial.channel_barrier", format!("need alpha < beta, got {alpha}, {beta}"));
            }
            if !matches!(forcing, Some(ForcingBlock::ChannelStationary { .. })) {
                e.push("initial.channel_barrier", "needs channel_stationary forcing");
            }
        }
    }
}

fn validate_checks(e: &mut Errors, c: &Checks, channel: bool) {
    if let Some(l) = &c.global_lipschitz {
        e.positive("checks.global_lipschitz.delta", l.delta);
        e.positive("checks.global_lipschitz.window", l.window);
        e.positive("checks.global_lipschitz.growth", l.growth);
    }
    if let Some(r) = &c.radial_match {
        e.positive("checks.radial_match.h", r.h);
        e.positive("checks.radial_match.front", r.front);
        e.positive("checks.radial_match.band", r.band);
        e.positive("checks.radial_match.tol", r.tol);
    }
    if let Some(ch) = &c.channel_convergence {
        if !(ch.delta_fraction > 0.0 && ch.delta_fraction < 1.0) {
            e.push(
                "checks.channel_convergence.delta_fraction",
                format!("must lie in (0, 1), got {}", ch.delta_fraction),
            );
        }
        e.positive("checks.channel_convergence.band_cells", ch.band_cells);
        e.positive("checks.channel_convergence.metric_tol", ch.metric_tol);
        e.positive("checks.channel_convergence.sandwich_cells", ch.sandwich_cells);
        if !(ch.transient >= 0.0 && ch.transient < 1.0) {
            e.push("checks.channel_convergence.transient", format!("must lie in [0, 1), got {}", ch.transient));
        }
        if !channel {
            e.push("checks.channel_convergence", "needs a channel domain");
        }
    }
    if let Some(p) = &c.comparison {
        if p.pairs == 0 {
            e.push("checks.comparison.pairs", "must be at least 1");
        }
    }
}
