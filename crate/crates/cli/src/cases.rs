//! The named scenarios: each builds its inputs from a [`RunConfig`], writes its tables and
//! images under the output directory and evaluates its built-in assertions.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use levelset_core::bounds::{predicted_bounds, BoundInputs, PredictedBounds};
use levelset_core::channel::{self, ChannelParams};
use levelset_core::field::{stencil_at, ScalarField};
use levelset_core::forcing::{ForcingSpec, RadialForcing};
use levelset_core::geometry::{boundary_metrics, build_grid, check_forcing_condition, DomainSpec, GridGeometry};
use levelset_core::numeric;
use levelset_core::radial::{self, Profile, RadialC, RadialProblem};
use levelset_core::solver::{self, ForcingStencil, RunDiagnostics, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::*;
use crate::error::{CliError, Result};
use crate::output::{format_g17, write_csv, write_pgm, Table};

/// Relative and absolute slack of the Lyapunov check.
pub const LYAPUNOV_REL: f64 = 1e-8;
pub const LYAPUNOV_ABS: f64 = 1e-12;
/// Slack of the `max_w` monotonicity check.
pub const MAX_W_TOL: f64 = 1e-8;
/// Relative tolerance of constant-data exactness.
pub const CONSTANT_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Measured quantity and the limit it was held to.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: String::new(),
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            passed: value >= limit,
            value,
            limit,
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub case: CaseKind,
    pub name: String,
    pub checks: Vec<CheckOutcome>,
    /// Named scalar results (`a1`, `margin`, `metric`, ...).
    pub summary: Vec<(String, f64)>,
    pub files: Vec<PathBuf>,
    pub seconds: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// One line: verdict, case and name, then each check.
    pub fn summary_line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let checks: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let mark = if c.passed { "ok" } else { "FAILED" };
                format!("{}={} (limit {}) {mark}", c.name, short(c.value), short(c.limit))
            })
            .collect();
        format!("{verdict} {} {}: {} [{:.1}s]", self.case, self.name, checks.join("; "), self.seconds)
    }

    fn new(cfg: &RunConfig) -> Self {
        CaseReport {
            case: cfg.case,
            name: cfg.name.clone().unwrap_or_else(|| cfg.case.to_string()),
            checks: Vec::new(),
            summary: Vec::new(),
            files: Vec::new(),
            seconds: 0.0,
        }
    }

    fn note(&mut self, key: &str, v: f64) {
        self.summary.push((key.into(), v));
    }
}

fn short(v: f64) -> String {
    format!("{v:.6e}")
}

/// Runs a case on a dedicated pool of `threads` workers (the config's count when `None`,
/// the global pool when neither is set).
pub fn run_case_with_threads(cfg: &RunConfig, out_dir: &Path, threads: Option<usize>) -> Result<CaseReport> {
    match threads.or(cfg.threads) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?
            .install(|| run_case(cfg, out_dir)),
        None => run_case(cfg, out_dir),
    }
}

/// Executes the scenario named by `cfg.case`, writing outputs under `out_dir`.
pub fn run_case(cfg: &RunConfig, out_dir: &Path) -> Result<CaseReport> {
    let start = Instant::now();
    let mut report = CaseReport::new(cfg);
    let out = Outputs {
        dir: out_dir.to_path_buf(),
        prefix: report.name.clone(),
    };
    match cfg.case {
        CaseKind::Simulate => simulate(cfg, &out, &mut report)?,
        CaseKind::RadialLimit => radial_limit(cfg, &out, &mut report)?,
        CaseKind::ChannelAnalyze => channel_analyze(cfg, &out, &mut report)?,
        CaseKind::CheckCondition => check_condition(cfg, &out, &mut report)?,
        CaseKind::Bounds => bounds(cfg, &out, &mut report)?,
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

struct Outputs {
    dir: PathBuf,
    prefix: String,
}

impl Outputs {
    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}_{stem}.{ext}", self.prefix))
    }

    fn csv(&self, report: &mut CaseReport, stem: &str, table: &Table) -> Result<()> {
        let p = self.path(stem, "csv");
        write_csv(table, &p)?;
        report.files.push(p);
        Ok(())
    }

    fn pgm(&self, report: &mut CaseReport, stem: &str, field: &ScalarField) -> Result<()> {
        if field.geometry().dim() != 2 {
            return Ok(());
        }
        let p = self.path(stem, "pgm");
        write_pgm(field, &p)?;
        report.files.push(p);
        Ok(())
    }
}

fn missing(block: &str) -> CliError {
    CliError::Invalid(format!("missing `{block}` block"))
}

fn domain_spec(cfg: &RunConfig) -> Result<DomainSpec> {
    Ok(cfg.domain.as_ref().ok_or_else(|| missing("domain"))?.to_spec())
}

fn channel_params(spec: &DomainSpec) -> Result<ChannelParams> {
    Ok(ChannelParams::from_domain(spec)?)
}

/// Forcing on the grid, plus its radial form when it has one.
struct Forcing {
    spec: ForcingSpec,
    radial: Option<RadialC>,
    /// `c` as a number, for constant forcings.
    constant: Option<f64>,
}

fn build_forcing(cfg: &RunConfig, domain: &DomainSpec) -> Result<Forcing> {
    let block = cfg.forcing.as_ref().ok_or_else(|| missing("forcing"))?;
    let n = domain.dim();
    let radial = |rf: RadialForcing| Forcing {
        spec: ForcingSpec::Radial(rf.clone()),
        radial: Some(RadialC::Profile(rf)),
        constant: None,
    };
    Ok(match block {
        ForcingBlock::Constant(c) => Forcing {
            spec: ForcingSpec::Constant(*c),
            radial: Some(RadialC::Constant(*c)),
            constant: Some(*c),
        },
        ForcingBlock::Toy { a, b } => radial(RadialForcing::toy(*a, *b, n)?),
        ForcingBlock::Anchored { a, b, width, slope } => radial(RadialForcing::anchored(*a, *b, *width, *slope, n)?),
        ForcingBlock::RadialSamples { r, c } => radial(RadialForcing::samples(r.clone(), c.clone())?),
        ForcingBlock::ChannelStationary { fraction } => {
            let c = fraction / channel::channel_r_min(&channel_params(domain)?);
            Forcing {
                spec: ForcingSpec::Constant(c),
                radial: None,
                constant: Some(c),
            }
        }
    })
}

/// Channel quantities fixed by a stationary forcing and a barrier width.
#[derive(Clone, Copy, Debug)]
struct ChannelSetup {
    params: ChannelParams,
    c: f64,
    a1: f64,
    a2: f64,
    l: f64,
}

impl ChannelSetup {
    fn new(domain: &DomainSpec, c: f64, l_fraction: f64) -> Result<Self> {
        let params = channel_params(domain)?;
        let (a1, a2) = channel::solve_radii(&params, c)?;
        Ok(ChannelSetup {
            params,
            c,
            a1,
            a2,
            l: l_fraction * (a2 - a1),
        })
    }
}

fn radial_profile(block: &InitialBlock) -> Option<Profile> {
    match *block {
        InitialBlock::Constant(v) => Some(Profile::Constant(v)),
        InitialBlock::RadialStep { r0, r1, high, low } => Some(Profile::Step { r0, r1, high, low }),
        _ => None,
    }
}

fn initial_field(
    block: &InitialBlock,
    grid: &Arc<GridGeometry>,
    setup: Option<&ChannelSetup>,
) -> Result<ScalarField> {
    Ok(match block {
        InitialBlock::Constant(v) => ScalarField::constant(grid.clone(), *v),
        InitialBlock::RadialStep { .. } => {
            let p = radial_profile(block).expect("radial step has a profile");
            ScalarField::from_fn(grid.clone(), |x| p.value(x.iter().map(|v| v * v).sum::<f64>().sqrt()))
        }
        InitialBlock::Trig {
            amplitude,
            wave,
            phase,
            offset,
        } => ScalarField::from_fn(grid.clone(), |x| {
            let arg: f64 = x.iter().zip(wave).map(|(a, k)| a * k).sum();
            offset + amplitude * (arg + phase).sin()
        }),
        InitialBlock::ChannelBarrier { alpha, beta, .. } => {
            let s = setup.ok_or_else(|| CliError::Invalid("channel_barrier needs a channel setup".into()))?;
            channel::make_initial_data(&s.params, s.a1, s.l, s.l, *alpha, *beta, grid.clone())?
        }
    })
}

/// Sup norms of `Du` and of the Hessian entries at inside cells.
fn derivative_norms(u: &ScalarField) -> (f64, f64) {
    let mut f = u.clone();
    f.fill_ghosts();
    let g = f.geometry();
    let dim = g.dim();
    let mut du: f64 = 0.0;
    let mut d2: f64 = 0.0;
    for &i in g.inside() {
        let st = stencil_at(f.values(), i, g.strides(), g.h());
        du = du.max(st.grad[..dim].iter().map(|v| v * v).sum::<f64>().sqrt());
        for row in &st.hess[..dim] {
            d2 = row[..dim].iter().fold(d2, |m, v| m.max(v.abs()));
        }
    }
    (du, d2)
}

fn forcing_gradient_sup(grid: &GridGeometry, c: &ForcingSpec) -> f64 {
    let dim = grid.dim();
    let mut x = vec![0.0; dim];
    grid.inside()
        .iter()
        .map(|&i| {
            grid.coords(i, &mut x);
            c.gradient_norm(&x)
        })
        .fold(0.0, f64::max)
}

fn predicted(
    domain: &DomainSpec,
    grid: &GridGeometry,
    u0: &ScalarField,
    c: &ForcingSpec,
    delta: Option<f64>,
) -> Result<PredictedBounds> {
    let (du0, d2u0) = derivative_norms(u0);
    Ok(predicted_bounds(BoundInputs {
        n: domain.dim(),
        du0,
        d2u0,
        c_sup: solver::forcing_sup(grid, c),
        dc_sup: forcing_gradient_sup(grid, c),
        metrics: boundary_metrics(domain)?,
        delta,
    })?)
}

fn solver_config(block: &SolverBlock, grid: &GridGeometry) -> SolverConfig {
    SolverConfig {
        eps: block.eps.unwrap_or(grid.h()),
        cfl_safety: block.cfl_safety.unwrap_or(SolverConfig::DEFAULT_CFL_SAFETY),
        t_final: block.t_final,
        snapshot_every: block.snapshot_every.unwrap_or(block.t_final / 10.0),
        pin: None,
        keep_snapshots: false,
        forcing_stencil: match block.stencil.unwrap_or(Stencil::Upwind) {
            Stencil::Upwind => ForcingStencil::Upwind,
            Stencil::Eno2 => ForcingStencil::Eno2,
        },
    }
}

fn diagnostics_table(d: &RunDiagnostics) -> Table {
    let mut t = Table::new(&["t", "max_w", "lip_x", "sup_ut", "lyapunov_e", "sup_u"]);
    for r in &d.rows {
        t.push(vec![r.t, r.max_w, r.lip_x, r.sup_ut, r.lyapunov_e, r.sup_u]);
    }
    t
}

/// Per-snapshot channel diagnostics.
struct ChannelTrace {
    t: Vec<f64>,
    metric: Vec<f64>,
    holds: Vec<bool>,
    inner: Vec<usize>,
    outer: Vec<usize>,
    a_lo: Vec<f64>,
    a_hi: Vec<f64>,
}

fn simulate(cfg: &RunConfig, out: &Outputs, report: &mut CaseReport) -> Result<()> {
    let domain = domain_spec(cfg)?;
    let block = cfg.solver.as_ref().ok_or_else(|| missing("solver"))?;
    let grid = Arc::new(build_grid(&domain, block.h)?);
    let forcing = build_forcing(cfg, &domain)?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let setup = match init {
        InitialBlock::ChannelBarrier { l_fraction, .. } => {
            let c = forcing.constant.expect("channel forcing is constant");
            Some(ChannelSetup::new(&domain, c, *l_fraction)?)
        }
        _ => None,
    };
    let u0 = initial_field(init, &grid, setup.as_ref())?;
    let mut config = solver_config(block, &grid);
    if let (Some(s), DomainSpec::Channel { x_max, .. }) = (&setup, &domain) {
        let margin = block.pin_margin_cells.unwrap_or(4.0) * grid.h();
        let needed = s.params.reach(s.a1 + s.l) + margin;
        if *x_max < needed {
            return Err(CliError::Invalid(format!(
                "x_max = {x_max} is below the support of the outer barrier plus margin, {needed}"
            )));
        }
        config.pin = Some(channel::pin_mask(&s.params, s.a1 + s.l, &grid, margin));
        report.note("a1", s.a1);
        report.note("a2", s.a2);
        report.note("l", s.l);
        report.note("c", s.c);
    }
    out.pgm(report, "initial", &u0)?;

    // channel barriers, when the convergence check is on
    let conv = cfg.checks.channel_convergence.as_ref();
    let barriers = match (conv, &setup) {
        (Some(ch), Some(s)) => {
            let d0 = channel::delta0(&s.params, s.a1, s.l, s.l)?;
            let delta = ch.delta_fraction * d0;
            report.note("delta0", d0);
            report.note("delta", delta);
            report.note("delta_t", delta * config.t_final);
            Some(channel::BarrierSchedule::pair(&s.params, s.c, s.l, s.l, delta)?)
        }
        (Some(_), None) => {
            return Err(CliError::Invalid("channel_convergence needs channel_barrier initial data".into()))
        }
        _ => None,
    };
    let mut trace = ChannelTrace {
        t: Vec::new(),
        metric: Vec::new(),
        holds: Vec::new(),
        inner: Vec::new(),
        outer: Vec::new(),
        a_lo: Vec::new(),
        a_hi: Vec::new(),
    };
    let constant_c = forcing.constant;
    let constant_u0 = match init {
        InitialBlock::Constant(v) => Some(*v),
        _ => None,
    };
    let mut worst_constant: f64 = 0.0;
    let h = grid.h();
    let (field, diag) = solver::run_observed(&u0, &config, &forcing.spec, |row, u| {
        if let (Some(ch), Some(s), Some((sub, sup))) = (conv, &setup, &barriers) {
            let (alpha, beta) = match init {
                InitialBlock::ChannelBarrier { alpha, beta, .. } => (*alpha, *beta),
                _ => unreachable!("checked above"),
            };
            let (lo, hi) = (channel::barrier_a(sub, row.t), channel::barrier_a(sup, row.t));
            let m = channel::convergence_metric(u, &s.params, s.a1, alpha, beta, ch.band_cells * h);
            let sw = channel::sandwich_check(u, &s.params, lo, hi, alpha, beta, ch.sandwich_cells * h);
            trace.t.push(row.t);
            trace.metric.push(m);
            trace.holds.push(sw.holds);
            trace.inner.push(sw.inner_misses);
            trace.outer.push(sw.outer_excess);
            trace.a_lo.push(lo);
            trace.a_hi.push(hi);
        }
        if let (Some(v0), Some(c)) = (constant_u0, constant_c) {
            let expected = v0 + c * config.eps * row.t;
            for &i in u.geometry().inside() {
                let err = (u.get(i) - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
                worst_constant = worst_constant.max(err);
            }
        }
        Ok(())
    })?;
    report.note("dt", diag.dt);
    report.note("steps", diag.steps as f64);
    out.csv(report, "diagnostics", &diagnostics_table(&diag))?;
    out.pgm(report, "final", &field)?;

    let checks = &cfg.checks;
    if checks.lyapunov.unwrap_or(true) {
        let worst = diag
            .rows
            .windows(2)
            .map(|w| (w[1].lyapunov_e - w[0].lyapunov_e - LYAPUNOV_ABS) / w[0].lyapunov_e.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut c = CheckOutcome::at_most("lyapunov", worst.max(0.0), LYAPUNOV_REL);
        c.passed = diag.lyapunov_violation(LYAPUNOV_REL, LYAPUNOV_ABS).is_none();
        report.checks.push(c.with_detail("largest relative increase of E between snapshots"));
    }
    if checks.max_w_nonincreasing == Some(true) {
        let rise = diag
            .rows
            .windows(2)
            .map(|w| w[1].max_w - w[0].max_w)
            .fold(0.0, f64::max);
        report.checks.push(CheckOutcome::at_most("max_w_nonincreasing", rise, MAX_W_TOL));
    }
    if let Some(lc) = &checks.global_lipschitz {
        let b = predicted(&domain, &grid, &u0, &forcing.spec, Some(lc.delta))?;
        let bound = b.global_l.expect("margin supplied");
        let max_lip = diag.max_lip();
        let early = diag
            .rows
            .iter()
            .filter(|r| r.t <= lc.window)
            .map(|r| r.lip_x)
            .fold(0.0, f64::max);
        report.note("global_l", bound);
        report.note("max_lip", max_lip);
        report.checks.push(CheckOutcome::at_most("global_lipschitz", max_lip, bound));
        report
            .checks
            .push(CheckOutcome::at_most("lipschitz_growth", max_lip, lc.growth * early));
    }
    if checks.time_lipschitz == Some(true) {
        let b = predicted(&domain, &grid, &u0, &forcing.spec, None)?;
        let c_max = solver::forcing_sup(&grid, &forcing.spec);
        let limit = 1.2 * b.m + c_max * config.eps;
        report.note("m", b.m);
        report
            .checks
            .push(CheckOutcome::at_most("time_lipschitz", diag.max_sup_ut(), limit));
    }
    if checks.constant_exact == Some(true) {
        if constant_u0.is_none() || constant_c.is_none() {
            return Err(CliError::Invalid("constant_exact needs constant data and forcing".into()));
        }
        report
            .checks
            .push(CheckOutcome::at_most("constant_exact", worst_constant, CONSTANT_REL));
    }
    if let Some(rm) = &checks.radial_match {
        let err = radial_match(&domain, &forcing, init, &field, config.t_final, rm)?;
        report.checks.push(CheckOutcome::at_most("radial_match", err, rm.tol));
    }
    if let (Some(ch), false) = (conv, trace.t.is_empty()) {
        let mut table = Table::new(&["t", "metric", "sandwich_holds", "inner_misses", "outer_excess", "a_lo", "a_hi"]);
        for k in 0..trace.t.len() {
            table.push(vec![
                trace.t[k],
                trace.metric[k],
                trace.holds[k] as u8 as f64,
                trace.inner[k] as f64,
                trace.outer[k] as f64,
                trace.a_lo[k],
                trace.a_hi[k],
            ]);
        }
        out.csv(report, "convergence", &table)?;
        let last = *trace.metric.last().expect("at least the initial snapshot");
        report.note("metric_initial", trace.metric[0]);
        report.note("metric_final", last);
        report.checks.push(CheckOutcome::at_most("metric_final", last, ch.metric_tol));
        let cut = ch.transient * config.t_final;
        let rise = trace
            .t
            .iter()
            .zip(trace.metric.windows(2))
            .filter(|(t, _)| **t >= cut)
            .map(|(_, w)| w[1] - w[0])
            .fold(0.0, f64::max);
        report.checks.push(
            CheckOutcome::at_most("metric_nonincreasing", rise, 0.0)
                .with_detail(format!("largest rise after t = {}", format_g17(cut))),
        );
        let failures = trace.holds.iter().filter(|h| !**h).count();
        report.checks.push(
            CheckOutcome::at_most("sandwich", failures as f64, 0.0)
                .with_detail(format!("snapshots violating the barrier sandwich out of {}", trace.t.len())),
        );
    }
    if let Some(cc) = &checks.comparison {
        let worst = comparison_pairs(&grid, &forcing.spec, &config, cc)?;
        report
            .checks
            .push(CheckOutcome::at_most("comparison", worst, solver::ORDERING_TOL));
    }
    Ok(())
}

/// Sup over inside cells outside the band of `|u − φ(|x|, T)|`, with the radial solution
/// linearly interpolated.
fn radial_match(
    domain: &DomainSpec,
    forcing: &Forcing,
    init: &InitialBlock,
    field: &ScalarField,
    t_final: f64,
    rm: &RadialMatch,
) -> Result<f64> {
    let (radius, n) = match *domain {
        DomainSpec::Disk { radius, dim } => (radius, dim),
        _ => return Err(CliError::Invalid("radial_match needs a disk".into())),
    };
    let c = forcing
        .radial
        .clone()
        .ok_or_else(|| CliError::Invalid("radial_match needs a radial forcing".into()))?;
    let u0 = radial_profile(init).ok_or_else(|| CliError::Invalid("radial_match needs radial data".into()))?;
    let sol = radial::solve_radial(&RadialProblem::new(n, radius, c, u0)?, rm.h, t_final)?;
    let g = field.geometry();
    let mut x = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for &i in g.inside() {
        g.coords(i, &mut x);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (r - rm.front).abs() <= rm.band {
            continue;
        }
        worst = worst.max((field.get(i) - interpolate(&sol.r, &sol.phi, r)).abs());
    }
    Ok(worst)
}

fn interpolate(r: &[f64], v: &[f64], x: f64) -> f64 {
    let last = r.len() - 1;
    if x <= r[0] {
        return v[0];
    }
    if x >= r[last] {
        return v[last];
    }
    let i = r.partition_point(|&s| s <= x) - 1;
    let t = (x - r[i]) / (r[i + 1] - r[i]);
    v[i] + t * (v[i + 1] - v[i])
}

/// Random smooth ordered pairs run in lockstep; returns the largest ordering violation.
fn comparison_pairs(grid: &Arc<GridGeometry>, c: &ForcingSpec, config: &SolverConfig, cc: &ComparisonCheck) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cc.seed);
    let dim = grid.dim();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cc.pairs {
        let wave: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let bump: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (amp, phase) = (rng.gen_range(0.1..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let (lift, bump_amp) = (rng.gen_range(0.0..0.2), rng.gen_range(0.0..0.5));
        let low = ScalarField::from_fn(grid.clone(), |x| {
            amp * (x.iter().zip(&wave).map(|(a, k)| a * k).sum::<f64>() + phase).sin()
        });
        let high = ScalarField::from_fn(grid.clone(), |x| {
            let base = amp * (x.iter().zip(&wave).map(|(a, k)| a * k).sum::<f64>() + phase).sin();
            let arg: f64 = x.iter().zip(&bump).map(|(a, k)| a * k).sum();
            base + lift + bump_amp * (1.0 + arg.cos())
        });
        let r = solver::comparison_check(&low, &high, config, c)?;
        worst = worst.max(r.worst_violation);
    }
    Ok(worst)
}

fn radial_limit(cfg: &RunConfig, out: &Outputs, report: &mut CaseReport) -> Result<()> {
    let domain = domain_spec(cfg)?;
    let (radius, n) = match domain {
        DomainSpec::Disk { radius, dim } => (radius, dim),
        _ => return Err(CliError::Invalid("radial-limit needs a disk domain".into())),
    };
    let forcing = build_forcing(cfg, &domain)?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let profile = radial_profile(init).ok_or_else(|| CliError::Invalid("radial-limit needs radial data".into()))?;
    let rb = cfg.radial.as_ref().ok_or_else(|| missing("radial"))?;
    let c = forcing
        .radial
        .clone()
        .ok_or_else(|| CliError::Invalid("radial-limit needs a radial forcing".into()))?;
    let problem = RadialProblem::new(n, radius, c, profile.clone())?;
    let regions = radial::classify(&problem, 1e-9)?;
    let sol = radial::solve_radial(&problem, rb.h, rb.t_final)?;
    let h = sol.h;
    let front = rb.front.expect("resolved at parse time");
    let band = rb.band_cells.unwrap_or(6.0) * h;
    let tol = rb.tol.unwrap_or(0.05);

    let mut table = Table::new(&["r", "phi0", "phi_t", "phi_inf", "d"]);
    let mut worst: f64 = 0.0;
    for (k, &r) in sol.r.iter().enumerate() {
        let limit = radial::phi_infinity(r, &problem, &regions)?;
        let d = radial::d_of(r, &regions, radius)?;
        table.push(vec![r, profile.value(r), sol.phi[k], limit, d]);
        if (r - front).abs() > band {
            worst = worst.max((sol.phi[k] - limit).abs());
        }
    }
    out.csv(report, "radial", &table)?;
    report.note("h", h);
    report.note("steps", sol.steps as f64);
    report.checks.push(CheckOutcome::at_most("limit_distance", worst, tol));

    if let Some(b) = &rb.blowup {
        let phi0: Vec<f64> = sol.r.iter().map(|&r| profile.value(r)).collect();
        let lip_band = |phi: &[f64]| {
            (0..phi.len() - 1)
                .filter(|&k| sol.r[k] >= front - band && sol.r[k + 1] <= front + band)
                .map(|k| (phi[k + 1] - phi[k]).abs() / h)
                .fold(0.0, f64::max)
        };
        let (l0, l1) = (lip_band(&phi0), lip_band(&sol.phi));
        let jump = interpolate(&sol.r, &sol.phi, front - band) - interpolate(&sol.r, &sol.phi, front + band);
        let scale = match init {
            InitialBlock::RadialStep { high, low, .. } => (high - low).abs(),
            _ => 1.0,
        };
        report.note("lip_initial", l0);
        report.note("lip_final", l1);
        report.note("jump", jump);
        report
            .checks
            .push(CheckOutcome::at_least("lipschitz_blowup", l1, b.factor * l0));
        report
            .checks
            .push(CheckOutcome::at_least("jump", jump, b.jump_fraction * scale));
    }
    Ok(())
}

fn channel_analyze(cfg: &RunConfig, out: &Outputs, report: &mut CaseReport) -> Result<()> {
    let domain = domain_spec(cfg)?;
    let forcing = build_forcing(cfg, &domain)?;
    let cb = cfg.channel.as_ref().ok_or_else(|| missing("channel"))?;
    let c = forcing
        .constant
        .ok_or_else(|| CliError::Invalid("channel-analyze needs channel_stationary forcing".into()))?;
    let s = ChannelSetup::new(&domain, c, cb.l_fraction)?;
    let p = &s.params;

    let a_star = channel::a_star(p);
    // r is flat at its minimum, so the refinement minimises the cancellation-free r² gap
    let (rough, _) = numeric::golden_min(|a| p.r(a), 1e-6, 1e6, 1e-13);
    let (a_golden, _) = numeric::golden_min(|a| p.r_squared_gap(a, rough), 0.5 * rough, 2.0 * rough, 1e-15);
    report
        .checks
        .push(CheckOutcome::at_most("a_star_vs_golden", (a_star - a_golden).abs(), 1e-9));

    let radius_err = (p.r(s.a1) - 1.0 / c).abs().max((p.r(s.a2) - 1.0 / c).abs());
    report
        .checks
        .push(CheckOutcome::at_most("radii", radius_err, 1e-10 / c));

    let samples = cb.samples.unwrap_or(100);
    let mut table = Table::new(&["a", "r", "r_prime", "right_angle_residual"]);
    let mut worst_angle: f64 = 0.0;
    for k in 1..=samples {
        let a = 2.0 * s.a2 * k as f64 / samples as f64;
        let res = channel::right_angle_residual(p, a);
        worst_angle = worst_angle.max(res);
        table.push(vec![a, p.r(a), p.r_prime(a), res]);
    }
    out.csv(report, "arcs", &table)?;
    report
        .checks
        .push(CheckOutcome::at_most("right_angle", worst_angle, 1e-12));

    let d0 = channel::delta0(p, s.a1, s.l, s.l)?;
    let sup_h = 1.0 / (channel::speed_constant(p, s.a1 + s.l) * d0);
    // the difference quotient itself, skipping the removable point a = a₁
    let points = cb.brute_points.unwrap_or(1_000_000);
    let (lo, hi) = (s.a1 - s.l, s.a1 + s.l);
    let inv_r1 = 1.0 / p.r(s.a1);
    let brute = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .filter(|&a| (a - s.a1).abs() > 1e-9 * s.a1)
        .map(|a| (s.a1 - a) / (inv_r1 - 1.0 / p.r(a)))
        .fold(f64::NEG_INFINITY, f64::max);
    report.checks.push(CheckOutcome::at_least("delta0_positive", d0, f64::MIN_POSITIVE));
    report.checks.push(CheckOutcome::at_most(
        "sup_h_vs_brute_force",
        (sup_h - brute).abs() / brute.abs(),
        1e-6,
    ));

    let mut summary = Table::new(&["a_star", "r_min", "c", "a1", "a2", "l", "delta0", "sup_h"]);
    summary.push(vec![a_star, channel::channel_r_min(p), c, s.a1, s.a2, s.l, d0, sup_h]);
    out.csv(report, "summary", &summary)?;
    for (k, v) in [
        ("a_star", a_star),
        ("r_min", channel::channel_r_min(p)),
        ("a1", s.a1),
        ("a2", s.a2),
        ("delta0", d0),
        ("sup_h", sup_h),
    ] {
        report.note(k, v);
    }

    let grid = Arc::new(build_grid(&domain, cb.mask_h.unwrap_or(0.02))?);
    for (stem, a) in [("mask_inner", s.a1 - s.l), ("mask_outer", s.a1 + s.l)] {
        let mask = channel::build_u_mask(p, a, grid.clone())?;
        out.pgm(report, stem, &mask.field)?;
    }
    Ok(())
}

fn check_condition(cfg: &RunConfig, out: &Outputs, report: &mut CaseReport) -> Result<()> {
    let domain = domain_spec(cfg)?;
    let forcing = build_forcing(cfg, &domain)?;
    let cond = cfg.condition.as_ref().ok_or_else(|| missing("condition"))?;
    let r = check_forcing_condition(&domain, &forcing.spec, cond.delta, cond.samples.unwrap_or(64))?;
    report.note("margin", r.worst_margin);
    let mut header = vec!["delta".to_string(), "margin".into(), "holds".into()];
    header.extend((0..r.worst_point.len()).map(|d| format!("x{}", d + 1)));
    let mut table = Table::new(&header);
    let mut row = vec![cond.delta, r.worst_margin, r.holds as u8 as f64];
    row.extend(&r.worst_point);
    table.push(row);
    out.csv(report, "condition", &table)?;
    let mut check = CheckOutcome::at_least("condition", r.worst_margin, 0.0);
    check.passed = r.holds;
    report.checks.push(check);
    Ok(())
}

fn bounds(cfg: &RunConfig, out: &Outputs, report: &mut CaseReport) -> Result<()> {
    let domain = domain_spec(cfg)?;
    let block = cfg.solver.as_ref().ok_or_else(|| missing("solver"))?;
    let grid = Arc::new(build_grid(&domain, block.h)?);
    let forcing = build_forcing(cfg, &domain)?;
    let init = cfg.initial.as_ref().ok_or_else(|| missing("initial"))?;
    let setup = match init {
        InitialBlock::ChannelBarrier { l_fraction, .. } => Some(ChannelSetup::new(
            &domain,
            forcing.constant.expect("channel forcing is constant"),
            *l_fraction,
        )?),
        _ => None,
    };
    let u0 = initial_field(init, &grid, setup.as_ref())?;
    let delta = cfg.condition.as_ref().map(|c| c.delta);
    let b = predicted(&domain, &grid, &u0, &forcing.spec, delta)?;
    let mut header = vec!["m", "m_prime", "local_base", "local_ct"];
    let mut row = vec![b.m, b.m_prime, b.local_base, b.local_ct(block.t_final)];
    if let Some(l) = b.global_l {
        header.push("global_l");
        row.push(l);
    }
    let mut table = Table::new(&header);
    table.push(row.clone());
    out.csv(report, "bounds", &table)?;
    for (k, v) in header.iter().zip(&row) {
        report.note(k, *v);
    }
    let finite = row.iter().all(|v| v.is_finite());
    report.checks.push(CheckOutcome {
        name: "bounds_finite".into(),
        passed: finite && b.m >= 0.0,
        value: b.m,
        limit: 0.0,
        detail: "M ≥ 0 and every bound finite".into(),
    });
    Ok(())
}
