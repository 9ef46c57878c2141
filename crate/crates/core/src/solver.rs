//! Explicit Euler stepping of `u_t = bᵢⱼ(Du) uᵢⱼ + c(x) sqrt(ε² + |Du|²)` with Neumann
//! ghost cells, together with run diagnostics.
//!
//! The curvature part uses centred differences; the forcing part uses the monotone upwind
//! magnitude inside the square root, oriented by the sign of `c`. Each step is a pure map
//! of the previous field, computed line by line so the result is independent of the
//! number of worker threads.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::field::{contract, lipschitz_x, stencil_at, ScalarField};
use crate::forcing::ForcingSpec;
use crate::geometry::{GridGeometry, MAX_DIM};

/// Largest number of steps a single run may take.
pub const MAX_STEPS: f64 = 1e9;

/// Discretisation of the one-sided differences in the forcing term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ForcingStencil {
    /// First-order Rouy–Tourin differences; the scheme is monotone.
    #[default]
    Upwind,
    /// Second-order ENO differences with minmod-limited corrections, first order next to
    /// the boundary. Not monotone, but its numerical diffusion is `O(h²)` instead of
    /// `|c|h/2`, which matters when a front is held by a weak restoring speed.
    Eno2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    /// Fraction of the stability limit used as time step, in `(0, 1]`.
    pub cfl_safety: f64,
    pub t_final: f64,
    /// Diagnostics cadence. Rounded to a whole number of steps.
    pub snapshot_every: f64,
    /// Cells held at their initial value.
    pub pin: Option<Vec<bool>>,
    /// Keep a copy of the field at every snapshot.
    pub keep_snapshots: bool,
    pub forcing_stencil: ForcingStencil,
}

impl SolverConfig {
    pub const DEFAULT_CFL_SAFETY: f64 = 0.25;

    /// Configuration with `ε = h`, the default safety factor and ten snapshots.
    pub fn for_grid(geom: &GridGeometry, t_final: f64) -> Self {
        SolverConfig {
            eps: geom.h(),
            cfl_safety: Self::DEFAULT_CFL_SAFETY,
            t_final,
            snapshot_every: t_final / 10.0,
            pin: None,
            keep_snapshots: false,
            forcing_stencil: ForcingStencil::Upwind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(param("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(param("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(param("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !(self.snapshot_every > 0.0 && self.snapshot_every.is_finite()) {
            return Err(param(
                "snapshot_every",
                format!("must be positive, got {}", self.snapshot_every),
            ));
        }
        Ok(())
    }
}

/// Largest `|c|` over inside cells.
pub fn forcing_sup(geom: &GridGeometry, c: &ForcingSpec) -> f64 {
    let dim = geom.dim();
    let mut x = [0.0; MAX_DIM];
    geom.inside()
        .iter()
        .map(|&i| {
            geom.coords(i, &mut x[..dim]);
            c.value(&x[..dim]).abs()
        })
        .fold(0.0, f64::max)
}

/// `safety · min(h²/(4n), h/(max|c|·√n))`.
pub fn cfl_dt(config: &SolverConfig, geom: &GridGeometry, c: &ForcingSpec) -> Result<f64> {
    cfl_dt_with(config.cfl_safety, geom.h(), geom.dim(), forcing_sup(geom, c))
}

pub fn cfl_dt_with(safety: f64, h: f64, dim: usize, c_max: f64) -> Result<f64> {
    if !h.is_finite() || h <= 0.0 {
        return Err(param("h", format!("must be positive and finite, got {h}")));
    }
    if !c_max.is_finite() {
        return Err(param("c", "forcing is not finite on the grid"));
    }
    let n = dim as f64;
    let parabolic = h * h / (2.0 * n * 2.0);
    let advective = h / (c_max * n.sqrt() + 1e-300);
    Ok(safety * parabolic.min(advective))
}

/// Precomputed per-grid stepping data: the updated cells, grouped into contiguous runs
/// along the last axis, and the forcing sampled at cell centres.
#[derive(Clone, Debug)]
pub struct Stepper {
    geom: Arc<GridGeometry>,
    eps: f64,
    c_full: Vec<f64>,
    c_inside: Vec<f64>,
    /// For each line along the last axis, half-open ranges of active offsets.
    runs: Vec<Vec<(usize, usize)>>,
    line: usize,
    rates: Vec<f64>,
    stencil: ForcingStencil,
    /// Second differences per axis at inside cells (zero elsewhere), for `Eno2`.
    second: Vec<Vec<f64>>,
    /// Like `runs` but including pinned cells.
    inside_runs: Vec<Vec<(usize, usize)>>,
}

impl Stepper {
    pub fn new(geom: Arc<GridGeometry>, c: &ForcingSpec, eps: f64, pin: Option<&[bool]>) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(param("eps", format!("must be positive, got {eps}")));
        }
        if let Some(p) = pin {
            if p.len() != geom.len() {
                return Err(param("pin", "mask length does not match the grid"));
            }
        }
        let dim = geom.dim();
        let line = geom.shape()[dim - 1];
        let mut x = [0.0; MAX_DIM];
        let mut c_full = vec![0.0; geom.len()];
        let mut c_inside = Vec::with_capacity(geom.inside().len());
        let mut runs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); geom.len() / line];
        let mut inside_runs = runs.clone();
        let extend = |runs: &mut Vec<Vec<(usize, usize)>>, i: usize| {
            let (r, off) = (i / line, i % line);
            match runs[r].last_mut() {
                Some(last) if last.1 == off => last.1 = off + 1,
                _ => runs[r].push((off, off + 1)),
            }
        };
        for &i in geom.inside() {
            geom.coords(i, &mut x[..dim]);
            let cv = c.value(&x[..dim]);
            if !cv.is_finite() {
                return Err(param("c", format!("forcing not finite at {:?}", &x[..dim])));
            }
            c_full[i] = cv;
            c_inside.push(cv);
            extend(&mut inside_runs, i);
            if !pin.is_some_and(|p| p[i]) {
                extend(&mut runs, i);
            }
        }
        Ok(Stepper {
            rates: vec![0.0; geom.len()],
            geom,
            eps,
            c_full,
            c_inside,
            runs,
            line,
            stencil: ForcingStencil::Upwind,
            second: Vec::new(),
            inside_runs,
        })
    }

    pub fn with_stencil(mut self, stencil: ForcingStencil) -> Self {
        self.second = match stencil {
            ForcingStencil::Upwind => Vec::new(),
            ForcingStencil::Eno2 => vec![vec![0.0; self.geom.len()]; self.geom.dim()],
        };
        self.stencil = stencil;
        self
    }

    pub fn stencil(&self) -> ForcingStencil {
        self.stencil
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        &self.geom
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Forcing values at inside cells, in the order of [`GridGeometry::inside`].
    pub fn forcing_inside(&self) -> &[f64] {
        &self.c_inside
    }

    pub fn c_max(&self) -> f64 {
        self.c_inside.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Number of cells updated per step.
    pub fn active_len(&self) -> usize {
        self.runs.iter().flatten().map(|(a, b)| b - a).sum()
    }

    /// Right-hand side at every active cell, written into `rates`.
    fn evaluate(&mut self, u: &[f64], generic: bool) {
        if self.stencil == ForcingStencil::Eno2 {
            return self.evaluate_eno(u, generic);
        }
        let geom = &*self.geom;
        let h = geom.h();
        let eps = self.eps;
        let strides = geom.strides();
        let use_2d = geom.dim() == 2 && !generic;
        let row = strides[0];
        let line = self.line;
        let c_full = &self.c_full;
        self.rates
            .par_chunks_mut(line)
            .zip(self.runs.par_iter())
            .enumerate()
            .with_min_len(8)
            .for_each(|(r, (out, runs))| {
                let base = r * line;
                for &(a, b) in runs {
                    if use_2d {
                        rhs_2d_run(u, c_full, &mut out[a..b], base + a, row, h, eps);
                    } else {
                        for off in a..b {
                            let i = base + off;
                            out[off] = rhs_generic(u, i, strides, h, eps, c_full[i]);
                        }
                    }
                }
            });
    }

    fn evaluate_eno(&mut self, u: &[f64], generic: bool) {
        let geom = &*self.geom;
        let (h, eps, line) = (geom.h(), self.eps, self.line);
        let strides = geom.strides();
        let inv_h2 = 1.0 / (h * h);
        let inside_runs = &self.inside_runs;
        for (d, second) in self.second.iter_mut().enumerate() {
            let s = strides[d];
            second
                .par_chunks_mut(line)
                .zip(inside_runs.par_iter())
                .enumerate()
                .for_each(|(r, (out, runs))| {
                    for &(a, b) in runs {
                        for off in a..b {
                            let i = r * line + off;
                            out[off] = (u[i + s] - 2.0 * u[i] + u[i - s]) * inv_h2;
                        }
                    }
                });
        }
        let second = &self.second;
        let c_full = &self.c_full;
        let use_2d = geom.dim() == 2 && !generic;
        self.rates
            .par_chunks_mut(line)
            .zip(self.runs.par_iter())
            .enumerate()
            .with_min_len(8)
            .for_each(|(r, (out, runs))| {
                for &(a, b) in runs {
                    if use_2d {
                        let lines = [&second[0][..], &second[1][..]];
                        rhs_2d_eno_run(u, lines, c_full, &mut out[a..b], r * line + a, strides[0], h, eps);
                        continue;
                    }
                    for off in a..b {
                        let i = r * line + off;
                        out[off] = rhs_eno(u, second, i, strides, h, eps, c_full[i]);
                    }
                }
            });
    }

    /// Largest `|u_t|` of the discrete right-hand side at the active cells.
    pub fn rate_sup(&mut self, u: &mut ScalarField) -> f64 {
        u.fill_ghosts();
        self.evaluate(u.values(), false);
        let mut best: f64 = 0.0;
        for (r, runs) in self.runs.iter().enumerate() {
            for &(a, b) in runs {
                for i in r * self.line + a..r * self.line + b {
                    best = best.max(self.rates[i].abs());
                }
            }
        }
        best
    }

    /// One Euler step in place. Returns `max |Δu|` over the updated cells.
    pub fn step(&mut self, u: &mut ScalarField, dt: f64, time: f64) -> Result<f64> {
        self.step_impl(u, dt, time, false)
    }

    /// Same as [`Stepper::step`] but always through the dimension-generic stencil.
    pub fn step_generic(&mut self, u: &mut ScalarField, dt: f64, time: f64) -> Result<f64> {
        self.step_impl(u, dt, time, true)
    }

    fn step_impl(&mut self, u: &mut ScalarField, dt: f64, time: f64, generic: bool) -> Result<f64> {
        u.fill_ghosts();
        self.evaluate(u.values(), generic);
        let values = u.values_mut();
        let mut change: f64 = 0.0;
        let mut probe = 0.0;
        for (r, runs) in self.runs.iter().enumerate() {
            let base = r * self.line;
            for &(a, b) in runs {
                let (vals, rates) = (&mut values[base + a..base + b], &self.rates[base + a..base + b]);
                for (v, &rate) in vals.iter_mut().zip(rates) {
                    let delta = dt * rate;
                    *v += delta;
                    change = fmax(change, delta.abs());
                    // zero unless delta is inf or NaN
                    #[allow(clippy::eq_op)]
                    {
                        probe += delta - delta;
                    }
                }
            }
        }
        if !probe.is_finite() || probe != 0.0 {
            let cell = values.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { cell, time });
        }
        u.fill_ghosts();
        Ok(change)
    }
}

#[inline(always)]
fn fmax(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

/// Dimension-generic right-hand side at one cell.
#[inline]
pub fn rhs_generic(u: &[f64], i: usize, strides: &[usize], h: f64, eps: f64, c: f64) -> f64 {
    let st = stencil_at(u, i, strides, h);
    let curvature = contract(&st, strides.len(), eps);
    let uc = u[i];
    let mut sum = 0.0;
    for &s in strides {
        let (a, b) = (u[i - s], u[i + s]);
        let m = if c >= 0.0 {
            fmax(fmax(a - uc, b - uc), 0.0)
        } else {
            fmax(fmax(uc - a, uc - b), 0.0)
        };
        sum += m * m;
    }
    curvature + c * (eps * eps + sum / (h * h)).sqrt()
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a > 0.0 {
        a.min(b)
    } else {
        a.max(b)
    }
}

/// Right-hand side with ENO one-sided differences in the forcing term.
#[inline]
fn rhs_eno(u: &[f64], second: &[Vec<f64>], i: usize, strides: &[usize], h: f64, eps: f64, c: f64) -> f64 {
    let st = stencil_at(u, i, strides, h);
    let curvature = contract(&st, strides.len(), eps);
    let half = 0.5 * h;
    let mut sum = 0.0;
    for (d, &s) in strides.iter().enumerate() {
        let dd = &second[d];
        let back = (u[i] - u[i - s]) / h + half * minmod(dd[i - s], dd[i]);
        let fwd = (u[i + s] - u[i]) / h - half * minmod(dd[i], dd[i + s]);
        let m = if c >= 0.0 {
            fmax(fmax(-back, fwd), 0.0)
        } else {
            fmax(fmax(back, -fwd), 0.0)
        };
        sum += m * m;
    }
    curvature + c * (eps * eps + sum).sqrt()
}

/// Two-dimensional right-hand side over the contiguous cells `start..start + out.len()`.
#[inline]
fn rhs_2d_run(u: &[f64], c_full: &[f64], out: &mut [f64], start: usize, row: usize, h: f64, eps: f64) {
    let len = out.len();
    let inv2h = 0.5 / h;
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    let eps2 = eps * eps;
    let at = |offset: usize| &u[offset..offset + len];
    let uc = at(start);
    let ue = at(start + 1);
    let uw = at(start - 1);
    let un = at(start + row);
    let us = at(start - row);
    let une = at(start + row + 1);
    let unw = at(start + row - 1);
    let use_ = at(start - row + 1);
    let usw = at(start - row - 1);
    let cs = &c_full[start..start + len];
    for k in 0..len {
        let c0 = uc[k];
        let px = (un[k] - us[k]) * inv2h;
        let py = (ue[k] - uw[k]) * inv2h;
        let uxx = (un[k] - 2.0 * c0 + us[k]) * inv_h2;
        let uyy = (ue[k] - 2.0 * c0 + uw[k]) * inv_h2;
        let uxy = (une[k] - unw[k] - use_[k] + usw[k]) * inv_4h2;
        let p2 = px * px + py * py;
        let curvature =
            uxx + uyy - (px * px * uxx + 2.0 * px * py * uxy + py * py * uyy) / (eps2 + p2);
        let c = cs[k];
        // orientation of the upwind differences follows the sign of c
        let sg = if c >= 0.0 { 1.0 } else { -1.0 };
        let mx = fmax(fmax(sg * (us[k] - c0), sg * (un[k] - c0)), 0.0);
        let my = fmax(fmax(sg * (uw[k] - c0), sg * (ue[k] - c0)), 0.0);
        out[k] = curvature + c * (eps2 + (mx * mx + my * my) * inv_h2).sqrt();
    }
}

/// [`rhs_2d_run`] with ENO one-sided differences in the forcing term.
#[allow(clippy::too_many_arguments)]
#[inline]
fn rhs_2d_eno_run(
    u: &[f64],
    second: [&[f64]; 2],
    c_full: &[f64],
    out: &mut [f64],
    start: usize,
    row: usize,
    h: f64,
    eps: f64,
) {
    let len = out.len();
    let (inv_h, inv2h, half) = (1.0 / h, 0.5 / h, 0.5 * h);
    let inv_h2 = inv_h * inv_h;
    let inv_4h2 = 0.25 * inv_h2;
    let eps2 = eps * eps;
    let at = |offset: usize| &u[offset..offset + len];
    let (uc, ue, uw, un, us) = (at(start), at(start + 1), at(start - 1), at(start + row), at(start - row));
    let (une, unw, use_, usw) = (at(start + row + 1), at(start + row - 1), at(start - row + 1), at(start - row - 1));
    let sx = |offset: usize| &second[0][offset..offset + len];
    let sy = |offset: usize| &second[1][offset..offset + len];
    let (xc, xn, xs) = (sx(start), sx(start + row), sx(start - row));
    let (yc, ye, yw) = (sy(start), sy(start + 1), sy(start - 1));
    let cs = &c_full[start..start + len];
    for k in 0..len {
        let c0 = uc[k];
        let px = (un[k] - us[k]) * inv2h;
        let py = (ue[k] - uw[k]) * inv2h;
        let uxx = (un[k] - 2.0 * c0 + us[k]) * inv_h2;
        let uyy = (ue[k] - 2.0 * c0 + uw[k]) * inv_h2;
        let uxy = (une[k] - unw[k] - use_[k] + usw[k]) * inv_4h2;
        let p2 = px * px + py * py;
        let curvature =
            uxx + uyy - (px * px * uxx + 2.0 * px * py * uxy + py * py * uyy) / (eps2 + p2);
        let c = cs[k];
        let bx = (c0 - us[k]) * inv_h + half * minmod(xs[k], xc[k]);
        let fx = (un[k] - c0) * inv_h - half * minmod(xc[k], xn[k]);
        let by = (c0 - uw[k]) * inv_h + half * minmod(yw[k], yc[k]);
        let fy = (ue[k] - c0) * inv_h - half * minmod(yc[k], ye[k]);
        let (mx, my) = if c >= 0.0 {
            (fmax(fmax(-bx, fx), 0.0), fmax(fmax(-by, fy), 0.0))
        } else {
            (fmax(fmax(bx, -fx), 0.0), fmax(fmax(by, -fy), 0.0))
        };
        out[k] = curvature + c * (eps2 + mx * mx + my * my).sqrt();
    }
}

/// One row of the diagnostics series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `max sqrt(ε² + |Du|²)` with centred gradients.
    pub max_w: f64,
    pub lip_x: f64,
    /// `max |Δu| / dt` over the steps since the previous row (the initial rate at `t = 0`).
    pub sup_ut: f64,
    pub lyapunov_e: f64,
    pub sup_u: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunDiagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub dt: f64,
    pub steps: u64,
}

impl RunDiagnostics {
    pub fn max_lip(&self) -> f64 {
        self.rows.iter().map(|r| r.lip_x).fold(0.0, f64::max)
    }

    pub fn max_sup_ut(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_ut).fold(0.0, f64::max)
    }

    /// First index `k` with `E_{k+1} > E_k + rel·|E_k| + abs`, if any.
    pub fn lyapunov_violation(&self, rel: f64, abs: f64) -> Option<usize> {
        self.rows.windows(2).position(|w| {
            w[1].lyapunov_e > w[0].lyapunov_e + rel * w[0].lyapunov_e.abs() + abs
        })
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: ScalarField,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub field: ScalarField,
    pub diagnostics: RunDiagnostics,
    pub snapshots: Vec<Snapshot>,
}

/// `E = hⁿ Σ [sqrt(ε² + |Du|²) − c u]` over inside cells, summed in index order.
pub fn lyapunov(u: &ScalarField, c: &ForcingSpec, eps: f64) -> f64 {
    let geom = u.geometry();
    let dim = geom.dim();
    let mut x = [0.0; MAX_DIM];
    let cs: Vec<f64> = geom
        .inside()
        .iter()
        .map(|&i| {
            geom.coords(i, &mut x[..dim]);
            c.value(&x[..dim])
        })
        .collect();
    lyapunov_with(u, &cs, eps)
}

fn lyapunov_with(u: &ScalarField, c_inside: &[f64], eps: f64) -> f64 {
    let geom = u.geometry();
    let v = u.values();
    let inv2h = 0.5 / geom.h();
    let mut total = 0.0;
    for (&i, &c) in geom.inside().iter().zip(c_inside) {
        let mut p2 = 0.0;
        for &s in geom.strides() {
            let p = (v[i + s] - v[i - s]) * inv2h;
            p2 += p * p;
        }
        total += (eps * eps + p2).sqrt() - c * v[i];
    }
    total * geom.cell_volume()
}

fn max_w(u: &ScalarField, eps: f64) -> f64 {
    let geom = u.geometry();
    let v = u.values();
    let inv2h = 0.5 / geom.h();
    let mut best: f64 = 0.0;
    for &i in geom.inside() {
        let mut p2 = 0.0;
        for &s in geom.strides() {
            let p = (v[i + s] - v[i - s]) * inv2h;
            p2 += p * p;
        }
        best = best.max(p2);
    }
    (eps * eps + best).sqrt()
}

fn diagnostics_row(u: &ScalarField, stepper: &Stepper, t: f64, sup_ut: f64) -> DiagnosticsRow {
    DiagnosticsRow {
        t,
        max_w: max_w(u, stepper.eps),
        lip_x: lipschitz_x(u),
        sup_ut,
        lyapunov_e: lyapunov_with(u, &stepper.c_inside, stepper.eps),
        sup_u: u.sup_norm(),
    }
}

/// Step schedule of a run: uniform `dt` dividing `t_final`, snapshots every `every` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps: u64,
    pub every: u64,
}

pub fn schedule(config: &SolverConfig, dt_max: f64) -> Result<Schedule> {
    config.validate()?;
    let raw = (config.t_final / dt_max).ceil();
    if !(raw <= MAX_STEPS) {
        return Err(Error::TooManySteps {
            steps: raw,
            limit: MAX_STEPS,
        });
    }
    let steps = (raw as u64).max(1);
    let dt = config.t_final / steps as f64;
    let every = ((config.snapshot_every / dt).round() as u64).clamp(1, steps);
    Ok(Schedule { dt, steps, every })
}

/// Runs to `t_final`, calling `observe` at `t = 0`, every snapshot and the final time.
pub fn run_observed<F>(
    u0: &ScalarField,
    config: &SolverConfig,
    c: &ForcingSpec,
    mut observe: F,
) -> Result<(ScalarField, RunDiagnostics)>
where
    F: FnMut(&DiagnosticsRow, &ScalarField) -> Result<()>,
{
    config.validate()?;
    if !u0.all_finite() {
        let cell = u0.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { cell, time: 0.0 });
    }
    let geom = u0.geometry().clone();
    let mut stepper =
        Stepper::new(geom.clone(), c, config.eps, config.pin.as_deref())?.with_stencil(config.forcing_stencil);
    let dt_max = cfl_dt_with(config.cfl_safety, geom.h(), geom.dim(), stepper.c_max())?;
    let sched = schedule(config, dt_max)?;

    let mut u = u0.clone();
    let rate0 = stepper.rate_sup(&mut u);
    let mut diagnostics = RunDiagnostics {
        rows: Vec::new(),
        dt: sched.dt,
        steps: sched.steps,
    };
    let row = diagnostics_row(&u, &stepper, 0.0, rate0);
    observe(&row, &u)?;
    diagnostics.rows.push(row);

    let mut rate: f64 = 0.0;
    for k in 1..=sched.steps {
        let t_prev = (k - 1) as f64 * sched.dt;
        let change = stepper.step(&mut u, sched.dt, t_prev)?;
        rate = rate.max(change / sched.dt);
        if k % sched.every == 0 || k == sched.steps {
            let t = if k == sched.steps {
                config.t_final
            } else {
                k as f64 * sched.dt
            };
            let row = diagnostics_row(&u, &stepper, t, rate);
            observe(&row, &u)?;
            diagnostics.rows.push(row);
            rate = 0.0;
        }
    }
    Ok((u, diagnostics))
}

/// Runs to `t_final` and collects diagnostics (and snapshots when requested).
pub fn run(u0: &ScalarField, config: &SolverConfig, c: &ForcingSpec) -> Result<RunOutput> {
    let mut snapshots = Vec::new();
    let keep = config.keep_snapshots;
    let (field, diagnostics) = run_observed(u0, config, c, |row, u| {
        if keep {
            snapshots.push(Snapshot {
                t: row.t,
                field: u.clone(),
            });
        }
        Ok(())
    })?;
    Ok(RunOutput {
        field,
        diagnostics,
        snapshots,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonReport {
    pub holds: bool,
    /// Largest `u_low − u_high` seen over inside cells and sampled times.
    pub worst_violation: f64,
    pub samples: usize,
}

/// Tolerance above which an ordering violation counts as a failure.
pub const ORDERING_TOL: f64 = 1e-12;

/// Runs both data sets in lockstep and checks `u_low ≤ u_high` at every snapshot.
pub fn comparison_check(
    low: &ScalarField,
    high: &ScalarField,
    config: &SolverConfig,
    c: &ForcingSpec,
) -> Result<ComparisonReport> {
    config.validate()?;
    let geom = low.geometry().clone();
    if high.geometry().len() != geom.len() {
        return Err(param("high", "fields live on different grids"));
    }
    for &i in geom.inside() {
        if low.get(i) > high.get(i) {
            return Err(Error::Unordered {
                cell: i,
                low: low.get(i),
                high: high.get(i),
            });
        }
    }
    let mut stepper_low =
        Stepper::new(geom.clone(), c, config.eps, config.pin.as_deref())?.with_stencil(config.forcing_stencil);
    let mut stepper_high = stepper_low.clone();
    let dt_max = cfl_dt_with(config.cfl_safety, geom.h(), geom.dim(), stepper_low.c_max())?;
    let sched = schedule(config, dt_max)?;
    let (mut a, mut b) = (low.clone(), high.clone());
    let gap = |a: &ScalarField, b: &ScalarField| {
        geom.inside()
            .iter()
            .map(|&i| a.get(i) - b.get(i))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut worst = gap(&a, &b);
    let mut samples = 1;
    for k in 1..=sched.steps {
        let t = (k - 1) as f64 * sched.dt;
        stepper_low.step(&mut a, sched.dt, t)?;
        stepper_high.step(&mut b, sched.dt, t)?;
        if k % sched.every == 0 || k == sched.steps {
            worst = worst.max(gap(&a, &b));
            samples += 1;
        }
    }
    Ok(ComparisonReport {
        holds: worst <= ORDERING_TOL,
        worst_violation: worst,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    fn disk(h: f64) -> Arc<GridGeometry> {
        Arc::new(build_grid(&DomainSpec::Disk { radius: 1.0, dim: 2 }, h).unwrap())
    }

    #[test]
    fn cfl_examples() {
        let dt = cfl_dt_with(0.25, 0.01, 2, 0.0).unwrap();
        assert!((dt - 3.125e-6).abs() < 1e-18);
        let dt2 = cfl_dt_with(0.25, 0.02, 2, 0.0).unwrap();
        assert!((dt2 / dt - 4.0).abs() < 1e-12);
        // at c = 100 the two branches are 1.25e-5 and 7.07e-5, so the parabolic one binds
        let dt = cfl_dt_with(0.25, 0.01, 2, 100.0).unwrap();
        assert!((dt - 0.25 * 1e-4 / 8.0).abs() < 1e-18);
        // ten times stronger forcing makes the advective branch the smaller one
        let dt = cfl_dt_with(0.25, 0.01, 2, 1000.0).unwrap();
        let parabolic = 0.25 * 1e-4 / 8.0;
        let advective = 0.25 * 0.01 / (1000.0 * 2f64.sqrt());
        assert!(advective < parabolic);
        assert!((dt - advective).abs() < 1e-18);
        assert!(cfl_dt_with(0.25, f64::NAN, 2, 0.0).is_err());
        assert!(cfl_dt_with(0.25, 0.01, 2, f64::INFINITY).is_err());
    }

    #[test]
    fn constant_step_is_exact() {
        let g = disk(0.1);
        let mut u = ScalarField::constant(g.clone(), 0.5);
        let c = ForcingSpec::Constant(1.5);
        let mut st = Stepper::new(g.clone(), &c, 0.1, None).unwrap();
        st.step(&mut u, 1e-3, 0.0).unwrap();
        let expected = 0.5 + 1.5 * 0.1 * 1e-3;
        assert!(g.inside().iter().all(|&i| u.get(i) == expected));
    }

    #[test]
    fn fast_and_generic_kernels_agree() {
        let g = disk(0.05);
        let u0 = ScalarField::from_fn(g.clone(), |x| (2.0 * x[0]).sin() * x[1] + 0.3 * x[0] * x[0]);
        for c in [
            ForcingSpec::Constant(1.3),
            ForcingSpec::Constant(-0.7),
            ForcingSpec::custom(|x, g| {
                g[0] = 1.0;
                g[1] = 0.0;
                x[0]
            }),
        ] {
            let mut a = u0.clone();
            let mut b = u0.clone();
            let mut sa = Stepper::new(g.clone(), &c, 0.05, None).unwrap();
            let mut sb = sa.clone();
            for k in 0..20 {
                sa.step(&mut a, 1e-4, k as f64).unwrap();
                sb.step_generic(&mut b, 1e-4, k as f64).unwrap();
            }
            for &i in g.inside() {
                assert!((a.get(i) - b.get(i)).abs() < 1e-12, "{c:?}");
            }
        }
    }

    #[test]
    fn eno_fast_and_generic_kernels_agree() {
        let g = disk(0.05);
        let u0 = ScalarField::from_fn(g.clone(), |x| (3.0 * x[0]).sin() * x[1] + (x[0] - 0.2).abs());
        for c in [ForcingSpec::Constant(1.3), ForcingSpec::Constant(-0.7)] {
            let mut a = u0.clone();
            let mut b = u0.clone();
            let mut sa = Stepper::new(g.clone(), &c, 0.05, None).unwrap().with_stencil(ForcingStencil::Eno2);
            let mut sb = sa.clone();
            for k in 0..20 {
                sa.step(&mut a, 1e-4, k as f64).unwrap();
                sb.step_generic(&mut b, 1e-4, k as f64).unwrap();
            }
            for &i in g.inside() {
                assert!((a.get(i) - b.get(i)).abs() < 1e-12, "{c:?}");
            }
        }
    }

    /// Largest error of the forcing rate `c|Du|` against `exact` over cells at least
    /// `margin` inside the unit disk, for a field whose curvature term vanishes.
    fn forcing_error(h: f64, stencil: ForcingStencil) -> f64 {
        let g = disk(h);
        // level sets are straight lines, so b^{ij}u_ij = 0 and the rate is c|Du| exactly
        let u = ScalarField::from_fn(g.clone(), |x| (2.0 * x[0] + x[1]).sin());
        let grad = |x: &[f64]| 5f64.sqrt() * (2.0 * x[0] + x[1]).cos().abs();
        let mut st = Stepper::new(g.clone(), &ForcingSpec::Constant(1.0), 1e-12, None)
            .unwrap()
            .with_stencil(stencil);
        let mut v = u.clone();
        v.fill_ghosts();
        st.evaluate(v.values(), false);
        g.inside()
            .iter()
            .filter(|&&i| g.coords_vec(i).iter().map(|c| c * c).sum::<f64>() < 0.5)
            .map(|&i| (st.rates[i] - grad(&g.coords_vec(i))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn eno_forcing_is_more_accurate_than_upwind() {
        let upwind = [forcing_error(0.02, ForcingStencil::Upwind), forcing_error(0.01, ForcingStencil::Upwind)];
        let eno = [forcing_error(0.02, ForcingStencil::Eno2), forcing_error(0.01, ForcingStencil::Eno2)];
        assert!(upwind[0] / upwind[1] > 1.6 && upwind[0] / upwind[1] < 2.5, "{upwind:?}");
        assert!(eno[1] < upwind[1] / 4.0, "{eno:?} vs {upwind:?}");
    }

    #[test]
    fn eno_is_exact_on_affine_data() {
        let g = disk(0.05);
        let u = ScalarField::from_fn(g.clone(), |x| 0.5 * x[0] - 0.25 * x[1] + 1.0);
        let mut st = Stepper::new(g.clone(), &ForcingSpec::Constant(2.0), 1e-12, None)
            .unwrap()
            .with_stencil(ForcingStencil::Eno2);
        let mut v = u.clone();
        v.fill_ghosts();
        st.evaluate(v.values(), false);
        let expected = 2.0 * (0.25f64 + 0.0625).sqrt();
        for &i in g.inside() {
            let x = g.coords_vec(i);
            if x[0].hypot(x[1]) < 0.8 {
                assert!((st.rates[i] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nan_aborts() {
        let g = disk(0.1);
        let mut u = ScalarField::from_fn(g.clone(), |x| x[0]);
        let mut st = Stepper::new(g.clone(), &ForcingSpec::Constant(1.0), 0.1, None).unwrap();
        assert!(matches!(
            st.step(&mut u, f64::INFINITY, 0.0),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn pinned_cells_do_not_move() {
        let g = disk(0.1);
        let u0 = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]);
        let pin: Vec<bool> = (0..g.len()).map(|i| g.coords_vec(i)[0] > 0.5).collect();
        let mut cfg = SolverConfig::for_grid(&g, 0.05);
        cfg.pin = Some(pin.clone());
        let out = run(&u0, &cfg, &ForcingSpec::Constant(1.0)).unwrap();
        for &i in g.inside() {
            if pin[i] {
                assert_eq!(out.field.get(i), u0.get(i));
            }
        }
    }

    #[test]
    fn constant_run_with_zero_forcing_is_flat() {
        let g = disk(0.1);
        let u0 = ScalarField::constant(g.clone(), 2.0);
        let out = run(&u0, &SolverConfig::for_grid(&g, 0.1), &ForcingSpec::Constant(0.0)).unwrap();
        assert_eq!(out.field.values(), u0.values());
        let first = out.diagnostics.rows[0];
        for r in &out.diagnostics.rows {
            assert_eq!((r.max_w, r.lip_x, r.sup_ut, r.lyapunov_e, r.sup_u), (first.max_w, first.lip_x, 0.0, first.lyapunov_e, first.sup_u));
        }
    }

    #[test]
    fn diagnostics_times_strictly_increase() {
        let g = disk(0.1);
        let u0 = ScalarField::from_fn(g.clone(), |x| x[0]);
        let mut cfg = SolverConfig::for_grid(&g, 0.1);
        cfg.snapshot_every = 0.013;
        let out = run(&u0, &cfg, &ForcingSpec::Constant(1.0)).unwrap();
        let rows = &out.diagnostics.rows;
        assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(rows.last().unwrap().t, 0.1);
        assert!(rows.iter().all(|r| r.max_w.is_finite() && r.lyapunov_e.is_finite()));
    }

    #[test]
    fn too_many_steps_refused() {
        let g = disk(0.1);
        let u0 = ScalarField::constant(g.clone(), 0.0);
        let cfg = SolverConfig::for_grid(&g, 1e9);
        assert!(matches!(
            run(&u0, &cfg, &ForcingSpec::Constant(0.0)),
            Err(Error::TooManySteps { .. })
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let g = disk(0.05);
        let u = ScalarField::constant(g.clone(), 3.0);
        let e = lyapunov(&u, &ForcingSpec::Constant(0.0), 0.1);
        let area = g.inside().len() as f64 * g.cell_volume();
        assert!((e - 0.1 * area).abs() < 1e-12);
        assert!((area - std::f64::consts::PI).abs() < 0.05);

        let c = ForcingSpec::custom(|x, g| {
            g[0] = 1.0;
            g[1] = 0.0;
            1.0 + x[0]
        });
        let mut u = ScalarField::from_fn(g.clone(), |x| x[0] * x[1]);
        u.fill_ghosts();
        let shifted = u.add_constant(0.25);
        let sum_c: f64 = g.inside().iter().map(|&i| c.value(&g.coords_vec(i))).sum();
        let diff = lyapunov(&shifted, &c, 0.1) - lyapunov(&u, &c, 0.1);
        assert!((diff + 0.25 * g.cell_volume() * sum_c).abs() < 1e-12);
    }

    #[test]
    fn comparison_rejects_unordered_and_keeps_shift() {
        let g = disk(0.1);
        let lo = ScalarField::from_fn(g.clone(), |x| x[0]);
        let hi = lo.add_constant(1.0);
        let mut cfg = SolverConfig::for_grid(&g, 0.02);
        cfg.snapshot_every = 0.005;
        let c = ForcingSpec::Constant(1.0);
        assert!(matches!(
            comparison_check(&hi, &lo, &cfg, &c),
            Err(Error::Unordered { .. })
        ));
        let rep = comparison_check(&lo, &hi, &cfg, &c).unwrap();
        assert!(rep.holds);
        assert!((rep.worst_violation + 1.0).abs() < 1e-12);
        let rep = comparison_check(&lo, &lo, &cfg, &c).unwrap();
        assert!(rep.holds && rep.worst_violation == 0.0);
    }
}
