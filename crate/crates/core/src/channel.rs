//! The parabolic channel `|x₂| < m x₁²/2 + k` with constant forcing: the family of
//! constant-curvature arcs meeting the walls at right angles, the stationary radii, the
//! barrier schedule and the tools for checking convergence to the stable stationary set.

use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::field::ScalarField;
use crate::geometry::{channel_profile, DomainSpec, GridGeometry};
use crate::numeric::{self, smoothstep};

/// Shape parameters of the channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    pub m: f64,
    pub k: f64,
}

impl ChannelParams {
    pub fn new(m: f64, k: f64) -> Result<Self> {
        let p = ChannelParams { m, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(param("m", format!("must be positive, got {}", self.m)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(param("k", format!("must be positive, got {}", self.k)));
        }
        Ok(())
    }

    /// Wall height `f(x)`.
    pub fn f(&self, x: f64) -> f64 {
        channel_profile(self.m, self.k, x)
    }

    /// First coordinate of the arc centre `p(a)`; the second is zero.
    pub fn p(&self, a: f64) -> f64 {
        0.5 * a - self.k / (self.m * a)
    }

    pub fn p_prime(&self, a: f64) -> f64 {
        0.5 + self.k / (self.m * a * a)
    }

    /// Arc radius `r(a) = |(a, f(a)) − p(a)|`.
    pub fn r(&self, a: f64) -> f64 {
        let ma = self.m * a;
        (0.5 * a + self.k / ma) * (ma * ma + 1.0).sqrt()
    }

    pub fn r_prime(&self, a: f64) -> f64 {
        let ma = self.m * a;
        (ma * ma + 0.5 - self.k / (self.m * a * a)) / (ma * ma + 1.0).sqrt()
    }

    /// `r(a)² − r(b)²` in factored form. With `t = a²` and `u = b²`,
    /// `4m² r² = m⁴t² + (m² + 4m³k)t + 4mk + 4m²k² + 4k²/t`, so the difference carries the
    /// factor `(a − b)(a + b)` explicitly and keeps its relative precision where `r` is flat.
    pub fn r_squared_gap(&self, a: f64, b: f64) -> f64 {
        let (m, k) = (self.m, self.k);
        let (t, u) = (a * a, b * b);
        let slope = m.powi(4) * (t + u) + m * m + 4.0 * m.powi(3) * k - 4.0 * k * k / (t * u);
        (a - b) * (a + b) * slope / (4.0 * m * m)
    }

    /// Half-opening angle of the arc, `arctan(m a)`.
    pub fn theta_max(&self, a: f64) -> f64 {
        (self.m * a).atan()
    }

    /// Point `p(a) + r(a)(cos θ, sin θ)` on the right arc.
    pub fn arc_point(&self, a: f64, theta: f64) -> [f64; 2] {
        let r = self.r(a);
        [self.p(a) + r * theta.cos(), r * theta.sin()]
    }

    /// Normal velocity `∂X/∂a · (cos θ, sin θ)` of the arc family.
    pub fn normal_speed(&self, a: f64, theta: f64) -> f64 {
        self.p_prime(a) * theta.cos() + self.r_prime(a)
    }

    /// Largest `|x₁|` reached by `U(a)`.
    pub fn reach(&self, a: f64) -> f64 {
        self.p(a) + self.r(a)
    }

    /// The channel truncated at `x_max`.
    pub fn domain(&self, x_max: f64) -> DomainSpec {
        DomainSpec::Channel {
            m: self.m,
            k: self.k,
            x_max,
        }
    }

    /// Shape parameters of a channel domain.
    pub fn from_domain(spec: &DomainSpec) -> Result<Self> {
        match *spec {
            DomainSpec::Channel { m, k, .. } => ChannelParams::new(m, k),
            _ => Err(Error::InvalidDomain("expected a channel domain".into())),
        }
    }
}

/// Closed-form minimiser of `r`: `√(−1 + √(1 + 16mk)) / (2m)`.
pub fn a_star(params: &ChannelParams) -> f64 {
    (-1.0 + (1.0 + 16.0 * params.m * params.k).sqrt()).sqrt() / (2.0 * params.m)
}

pub fn channel_r_min(params: &ChannelParams) -> f64 {
    params.r(a_star(params))
}

/// Relative width of the window around `1/r_min` treated as the tangential case.
const TANGENTIAL_TOL: f64 = 1e-12;

/// The two radii `a₁ < a⋆ < a₂` with `r(aᵢ) = 1/c`.
pub fn solve_radii(params: &ChannelParams, c: f64) -> Result<(f64, f64)> {
    params.validate()?;
    let astar = a_star(params);
    let r_min = params.r(astar);
    let upper = 1.0 / r_min;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::ForcingOutOfRange { c, upper });
    }
    let target = 1.0 / c;
    if (target - r_min).abs() <= TANGENTIAL_TOL * r_min {
        return Err(Error::TangentialForcing { c });
    }
    if target < r_min {
        return Err(Error::ForcingOutOfRange { c, upper });
    }
    let g = |a: f64| params.r(a) - target;
    let mut lo = 0.5 * astar;
    while g(lo) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NoBracket { lo, hi: astar });
        }
    }
    let mut hi = 2.0 * astar;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoBracket { lo: astar, hi });
        }
    }
    let a1 = numeric::bisect(g, lo, astar, 0.0)?;
    let a2 = numeric::bisect(g, astar, hi, 0.0)?;
    Ok((a1, a2))
}

/// `|⟨(a, f(a)) − p(a), n(a)⟩| / r(a)` with `n` the outward wall normal at `(a, f(a))`.
/// Zero exactly when the arc meets the wall at a right angle.
pub fn right_angle_residual(params: &ChannelParams, a: f64) -> f64 {
    right_angle_residual_with_radius(params, a, params.r(a))
}

/// Same residual for the arc of radius `radius` about `p(a)`: its end point at angle
/// `arctan(m a)` is projected vertically onto the wall and the join from the centre is tested
/// against the wall normal there.
pub fn right_angle_residual_with_radius(params: &ChannelParams, a: f64, radius: f64) -> f64 {
    let p = params.p(a);
    let s = (1.0 + params.m * params.m * a * a).sqrt();
    let e1 = p + radius / s;
    let slope = params.m * e1;
    let scale = (1.0 + slope * slope).sqrt();
    let join = [e1 - p, params.f(e1)];
    ((-slope * join[0] + join[1]) / scale).abs() / radius
}

/// Membership in `U(a)` for a point of the channel: `|x₂| < r(a)` and
/// `|x₁| < p(a) + √(r(a)² − x₂²)`. Wall membership is not checked, so the predicate extends
/// smoothly across the walls.
pub fn in_u_extended(params: &ChannelParams, a: f64, x: &[f64]) -> bool {
    let r = params.r(a);
    let y = x[1].abs();
    y < r && x[0].abs() < params.p(a) + (r * r - y * y).sqrt()
}

/// Membership in `U(a) ⊂ Ω`.
pub fn in_u(params: &ChannelParams, a: f64, x: &[f64]) -> bool {
    x[1].abs() < params.f(x[0]) && in_u_extended(params, a, x)
}

/// Indicator of `U(a)` on a channel grid.
#[derive(Clone, Debug)]
pub struct UMask {
    pub a: f64,
    pub field: ScalarField,
    /// The arcs leave the truncated window `|x₁| < x_max`.
    pub exits_window: bool,
}

impl UMask {
    pub fn contains(&self, index: usize) -> bool {
        self.field.get(index) == 1.0
    }
}

pub fn build_u_mask(params: &ChannelParams, a: f64, grid: Arc<GridGeometry>) -> Result<UMask> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(param("a", format!("must be positive, got {a}")));
    }
    let x_max = match *grid.spec() {
        DomainSpec::Channel { x_max, .. } => x_max,
        _ => return Err(Error::InvalidDomain("U(a) masks need a channel grid".into())),
    };
    let field = ScalarField::from_fn(grid, |x| if in_u(params, a, x) { 1.0 } else { 0.0 });
    Ok(UMask {
        a,
        field,
        exits_window: params.reach(a) >= x_max,
    })
}

/// Checks `U(a) ⊆ U(a′)` cell-wise for `samples` increasing values across `[lo, hi]`.
pub fn check_nesting(params: &ChannelParams, lo: f64, hi: f64, grid: &GridGeometry, samples: usize) -> Result<()> {
    let samples = samples.max(2);
    let mut x = [0.0; 2];
    for &i in grid.inside() {
        grid.coords(i, &mut x);
        let mut was_in = false;
        for s in 0..samples {
            let a = lo + (hi - lo) * s as f64 / (samples - 1) as f64;
            let now_in = in_u(params, a, &x);
            if was_in && !now_in {
                return Err(Error::Inconsistent(format!(
                    "U(a) not nested at ({}, {}) near a = {a}",
                    x[0], x[1]
                )));
            }
            was_in = now_in;
        }
    }
    Ok(())
}

/// Sup of the arc-speed bound `1/2 + (m²a² + 1/2)/√(m²a²+1) + mk/(m²a²+1+√(m²a²+1))` over
/// `(0, L]`.
pub fn speed_constant(params: &ChannelParams, l: f64) -> f64 {
    let (m, k) = (params.m, params.k);
    let g = |a: f64| {
        let q = m * m * a * a;
        let s = (q + 1.0).sqrt();
        0.5 + (q + 0.5) / s + m * k / (q + 1.0 + s)
    };
    let (_, v) = numeric::dense_max(g, 0.0, l, 4001);
    v
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, 8 points.
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887),
    (-0.183_434_642_495_65, 0.362_683_783_378_362),
    (0.183_434_642_495_65, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// `h(a) = (a₁ − a) / (1/r(a₁) − 1/r(a))`, evaluated as `−r(a) r(a₁) / r̄′` with `r̄′` the mean
/// of `r′` between `a₁` and `a`, which removes the singularity at `a = a₁`.
pub fn barrier_h(params: &ChannelParams, a1: f64, a: f64) -> f64 {
    let mid = 0.5 * (a + a1);
    let half = 0.5 * (a - a1);
    let mean_slope: f64 = GL8
        .iter()
        .map(|&(x, w)| 0.5 * w * params.r_prime(mid + half * x))
        .sum();
    -params.r(a) * params.r(a1) / mean_slope
}

/// Decay-rate threshold `δ₀ = 1/(C · sup h)` for barriers on `[a₁ − l₁, a₁ + l₂]`.
pub fn delta0(params: &ChannelParams, a1: f64, l1: f64, l2: f64) -> Result<f64> {
    params.validate()?;
    let astar = a_star(params);
    if !(a1 > 0.0 && a1 < astar) {
        return Err(param("a1", format!("must lie in (0, {astar}), got {a1}")));
    }
    if !(l1 > 0.0 && l1 < a1) {
        return Err(param("l1", format!("must lie in (0, {a1}), got {l1}")));
    }
    let a2 = solve_radii(params, 1.0 / params.r(a1))?.1;
    if !(l2 > 0.0 && a1 + l2 < a2) {
        return Err(param("l2", format!("must lie in (0, {}), got {l2}", a2 - a1)));
    }
    let c_const = speed_constant(params, a1 + l2);
    let (_, sup_h) = numeric::dense_max(|a| barrier_h(params, a1, a), a1 - l1, a1 + l2, 20001);
    if !(sup_h > 0.0 && sup_h.is_finite()) {
        return Err(Error::Inconsistent(format!("sup h = {sup_h} is not positive")));
    }
    Ok(1.0 / (c_const * sup_h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierKind {
    /// `a̲(t) = a₁ − l₁ e^{−δt}`, shrinks toward `a₁` from inside.
    Sub,
    /// `ā(t) = a₁ + l₂ e^{−δt}`.
    Super,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierSchedule {
    pub a1: f64,
    pub l: f64,
    pub delta: f64,
    pub kind: BarrierKind,
}

impl BarrierSchedule {
    /// The pair of schedules for forcing `c`, validated against `a₂` and `δ₀`.
    pub fn pair(params: &ChannelParams, c: f64, l1: f64, l2: f64, delta: f64) -> Result<(Self, Self)> {
        let (a1, _) = solve_radii(params, c)?;
        let d0 = delta0(params, a1, l1, l2)?;
        if !(delta > 0.0 && delta < d0) {
            return Err(param("delta", format!("must lie in (0, {d0}), got {delta}")));
        }
        Ok((
            BarrierSchedule {
                a1,
                l: l1,
                delta,
                kind: BarrierKind::Sub,
            },
            BarrierSchedule {
                a1,
                l: l2,
                delta,
                kind: BarrierKind::Super,
            },
        ))
    }
}

pub fn barrier_a(schedule: &BarrierSchedule, t: f64) -> f64 {
    let gap = schedule.l * (-schedule.delta * t).exp();
    match schedule.kind {
        BarrierKind::Sub => schedule.a1 - gap,
        BarrierKind::Super => schedule.a1 + gap,
    }
}

/// Smallest `a ∈ [lo, hi]` with `x ∈ U(a)` (extended across the walls), `None` if `x` lies
/// outside `U(hi)`; `lo` when `x ∈ U(lo)` already.
pub fn arc_index(params: &ChannelParams, x: &[f64], lo: f64, hi: f64) -> Option<f64> {
    if in_u_extended(params, lo, x) {
        return Some(lo);
    }
    if !in_u_extended(params, hi, x) {
        return None;
    }
    Some(numeric::bisect_predicate(|a| !in_u_extended(params, a, x), lo, hi, 1e-14 * hi))
}

/// Minimal number of cells across the transition band of the initial data.
pub const MIN_TRANSITION_CELLS: f64 = 6.0;

/// Initial data equal to `β` on `U(a₁ − l₁)`, `α` outside `U(a₁ + l₂)` and a quintic
/// smoothstep of the arc index in between. Its level sets are arcs of the family, so they
/// meet the walls at right angles.
pub fn make_initial_data(
    params: &ChannelParams,
    a1: f64,
    l1: f64,
    l2: f64,
    alpha: f64,
    beta: f64,
    grid: Arc<GridGeometry>,
) -> Result<ScalarField> {
    params.validate()?;
    if !(alpha < beta) {
        return Err(param("alpha", format!("need alpha < beta, got {alpha} and {beta}")));
    }
    if !(l1 > 0.0 && l1 < a1 && l2 > 0.0) {
        return Err(param("l1", "need 0 < l1 < a1 and l2 > 0"));
    }
    if (l1 + l2) / grid.h() < MIN_TRANSITION_CELLS {
        return Err(param(
            "h",
            format!(
                "grid spacing {} resolves l1 + l2 = {} with fewer than {MIN_TRANSITION_CELLS} cells",
                grid.h(),
                l1 + l2
            ),
        ));
    }
    let (lo, hi) = (a1 - l1, a1 + l2);
    Ok(ScalarField::from_fn(grid, |x| match arc_index(params, x, lo, hi) {
        None => alpha,
        Some(a) => alpha + (beta - alpha) * smoothstep((hi - a) / (hi - lo)),
    }))
}

/// Cells with `|x₁|` beyond the reach of `U(a_sup)` plus `margin`; these are held at the
/// far-field value during a run.
pub fn pin_mask(params: &ChannelParams, a_sup: f64, grid: &GridGeometry, margin: f64) -> Vec<bool> {
    let limit = params.reach(a_sup) + margin;
    let mut x = [0.0; 2];
    (0..grid.len())
        .map(|i| {
            grid.coords(i, &mut x);
            x[0].abs() > limit
        })
        .collect()
}

/// Distance from `x` to `∂U(a) ∩ Ω`, the two arcs.
pub fn distance_to_arcs(params: &ChannelParams, a: f64, x: &[f64]) -> f64 {
    let p = params.p(a);
    let r = params.r(a);
    let tmax = params.theta_max(a);
    let end = params.arc_point(a, tmax);
    let single = |x1: f64, x2: f64| {
        let (dx, dy) = (x1 - p, x2);
        let theta = dy.atan2(dx);
        if theta.abs() <= tmax {
            ((dx * dx + dy * dy).sqrt() - r).abs()
        } else {
            let ey = if dy >= 0.0 { end[1] } else { -end[1] };
            ((x1 - end[0]).powi(2) + (x2 - ey).powi(2)).sqrt()
        }
    };
    single(x[0], x[1]).min(single(-x[0], x[1]))
}

/// Mean of `|u − (α + (β−α)·χ_{U(a₁)})|` over inside cells farther than `band` from the arcs.
pub fn convergence_metric(u: &ScalarField, params: &ChannelParams, a1: f64, alpha: f64, beta: f64, band: f64) -> f64 {
    let geom = u.geometry();
    let mut x = [0.0; 2];
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in geom.inside() {
        geom.coords(i, &mut x);
        if distance_to_arcs(params, a1, &x) <= band {
            continue;
        }
        let target = if in_u(params, a1, &x) { beta } else { alpha };
        sum += (u.get(i) - target).abs();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Outcome of the barrier sandwich test at one time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SandwichReport {
    pub holds: bool,
    /// Cells of the eroded inner barrier where `u` is below the mid level.
    pub inner_misses: usize,
    /// Cells with `u` at or above the mid level outside the dilated outer barrier.
    pub outer_excess: usize,
}

/// Checks `erode(U(a_lo), radius) ⊆ {u ≥ (α+β)/2} ⊆ dilate(U(a_hi), radius)` on inside cells.
/// Erosion and dilation use the disk of the given radius on the cell lattice and only look at
/// inside cells, so the walls do not erode the inner set.
pub fn sandwich_check(
    u: &ScalarField,
    params: &ChannelParams,
    a_lo: f64,
    a_hi: f64,
    alpha: f64,
    beta: f64,
    radius: f64,
) -> SandwichReport {
    let geom = u.geometry();
    let mid = 0.5 * (alpha + beta);
    let h = geom.h();
    let reach = (radius / h).floor() as isize;
    let mut offsets = Vec::new();
    for di in -reach..=reach {
        for dj in -reach..=reach {
            if ((di * di + dj * dj) as f64) * h * h <= radius * radius * (1.0 + 1e-12) {
                offsets.push((di, dj));
            }
        }
    }
    let shape = geom.shape();
    let member = |a: f64| -> Vec<bool> {
        let mut x = [0.0; 2];
        (0..geom.len())
            .map(|i| {
                geom.is_inside(i) && {
                    geom.coords(i, &mut x);
                    in_u(params, a, &x)
                }
            })
            .collect()
    };
    let inner = member(a_lo);
    let outer = member(a_hi);
    let neighbours = |i: usize| {
        let mi = geom.multi_index(i);
        offsets.iter().filter_map(move |&(di, dj)| {
            let a = mi[0] as isize + di;
            let b = mi[1] as isize + dj;
            (a >= 0 && b >= 0 && (a as usize) < shape[0] && (b as usize) < shape[1])
                .then(|| a as usize * shape[1] + b as usize)
        })
    };
    let mut inner_misses = 0;
    let mut outer_excess = 0;
    for &i in geom.inside() {
        let high = u.get(i) >= mid;
        if !high && inner[i] && neighbours(i).all(|j| !geom.is_inside(j) || inner[j]) {
            inner_misses += 1;
        }
        if high && !neighbours(i).any(|j| outer[j]) {
            outer_excess += 1;
        }
    }
    SandwichReport {
        holds: inner_misses == 0 && outer_excess == 0,
        inner_misses,
        outer_excess,
    }
}
