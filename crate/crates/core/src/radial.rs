//! Radially symmetric problems on a ball: classification of `c(r)` against the curvature
//! threshold `(n−1)/r`, the attractor map `d`, the large-time profile `φ∞`, a monotone
//! scheme for `φ_t = (n−1)/r φ_r + c(r)|φ_r|` and the comparison curve `η₁`.

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::forcing::{ForcingSpec, RadialForcing};
use crate::numeric::{self, smoothstep};

/// Radial forcing `c(r)`.
#[derive(Clone)]
pub enum RadialC {
    Constant(f64),
    Profile(RadialForcing),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RadialC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialC::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            RadialC::Profile(p) => f.debug_tuple("Profile").field(p).finish(),
            RadialC::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl RadialC {
    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        RadialC::Custom(Arc::new(f))
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            RadialC::Constant(c) => *c,
            RadialC::Profile(p) => p.value(r),
            RadialC::Custom(f) => f(r),
        }
    }

    /// The same forcing as a function on `ℝⁿ`.
    pub fn to_forcing(&self) -> ForcingSpec {
        match self {
            RadialC::Constant(c) => ForcingSpec::Constant(*c),
            RadialC::Profile(p) => ForcingSpec::Radial(p.clone()),
            RadialC::Custom(f) => {
                let f = f.clone();
                ForcingSpec::custom(move |x, g| {
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let d = 1e-6 * (1.0 + r);
                    let slope = (f(r + d) - f((r - d).max(0.0))) / (r + d - (r - d).max(0.0));
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi = if r > 0.0 { slope * xi / r } else { 0.0 };
                    }
                    f(r)
                })
            }
        }
    }
}

/// Radial initial data `u₀(r)`.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `high` on `[0, r0]`, `low` on `[r1, ∞)`, quintic smoothstep in between.
    Step { r0: f64, r1: f64, high: f64, low: f64 },
    /// Piecewise-linear interpolation of `(r_i, u_i)` samples, constant beyond the ends.
    Samples { r: Vec<f64>, u: Vec<f64> },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Profile::Step { r0, r1, high, low } => f
                .debug_struct("Step")
                .field("r0", r0)
                .field("r1", r1)
                .field("high", high)
                .field("low", low)
                .finish(),
            Profile::Samples { r, u } => f.debug_struct("Samples").field("r", r).field("u", u).finish(),
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Profile {
    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Profile::Custom(Arc::new(f))
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Step { r0, r1, high, low } => {
                high + (low - high) * smoothstep((r - r0) / (r1 - r0))
            }
            Profile::Samples { r: rs, u } => {
                let last = rs.len() - 1;
                if r <= rs[0] {
                    return u[0];
                }
                if r >= rs[last] {
                    return u[last];
                }
                let i = rs.partition_point(|&v| v <= r) - 1;
                let t = (r - rs[i]) / (rs[i + 1] - rs[i]);
                u[i] + t * (u[i + 1] - u[i])
            }
            Profile::Custom(f) => f(r),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Profile::Step { r0, r1, .. } if !(r1 > r0) => {
                Err(param("u0", format!("step needs r0 < r1, got {r0}, {r1}")))
            }
            Profile::Samples { r, u } => {
                if r.len() != u.len() || r.len() < 2 || r.windows(2).any(|w| w[1] <= w[0]) {
                    Err(param("u0", "samples need increasing radii and matching lengths"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// `(n, R, c, u₀)` for the radial equation on the ball of radius `R`.
#[derive(Clone, Debug)]
pub struct RadialProblem {
    pub n: usize,
    pub radius: f64,
    pub c: RadialC,
    pub u0: Profile,
}

impl RadialProblem {
    pub fn new(n: usize, radius: f64, c: RadialC, u0: Profile) -> Result<Self> {
        let p = RadialProblem { n, radius, c, u0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(param("n", format!("dimension must be at least 2, got {}", self.n)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(param("radius", format!("must be positive, got {}", self.radius)));
        }
        self.u0.validate()
    }

    /// `g(r) = c(r) − (n−1)/r`.
    pub fn excess(&self, r: f64) -> f64 {
        self.c.value(r) - (self.n - 1) as f64 / r
    }

    fn zero_tol(&self, r: f64) -> f64 {
        (1e-6 * (self.n - 1) as f64 / r).max(1e-10)
    }

    fn label(&self, r: f64) -> Label {
        let g = self.excess(r);
        if g.abs() <= self.zero_tol(r) {
            Label::Equal
        } else if g > 0.0 {
            Label::Above
        } else {
            Label::Below
        }
    }
}

/// Where `c(r)` sits relative to `(n−1)/r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    /// `c = (n−1)/r`, the set A.
    Equal,
    /// `c > (n−1)/r`, the set A₊.
    Above,
    /// `c < (n−1)/r`, the set A₋.
    Below,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
    pub label: Label,
}

impl Region {
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// Sorted partition of `(0, R]`. Regions share endpoints; a shared endpoint belongs to the
/// adjacent `Equal` region when there is one. Single points of A appear as degenerate
/// regions with `lo == hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionClassification {
    pub regions: Vec<Region>,
    pub tol_r: f64,
    pub radius: f64,
}

impl RegionClassification {
    pub fn label_at(&self, r: f64) -> Label {
        let mut found = None;
        for reg in &self.regions {
            if r >= reg.lo && r <= reg.hi {
                if reg.label == Label::Equal {
                    return Label::Equal;
                }
                found.get_or_insert(reg.label);
            }
        }
        found.unwrap_or(Label::Below)
    }

    pub fn equal_set(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| r.label == Label::Equal)
    }

    /// The regions of a given label as `(lo, hi)` pairs.
    pub fn intervals(&self, label: Label) -> Vec<(f64, f64)> {
        self.regions
            .iter()
            .filter(|r| r.label == label)
            .map(|r| (r.lo, r.hi))
            .collect()
    }
}

const MAX_CLASSIFY_SAMPLES: usize = 4_000_000;

/// Classifies `(0, R]` into A, A₊ and A₋.
///
/// `g` is sampled on a grid of spacing at most `tol_r`; label changes are located by
/// bisection and isolated tangential touches of zero are found by golden-section search
/// on the local extrema of `g`.
pub fn classify(problem: &RadialProblem, tol_r: f64) -> Result<RegionClassification> {
    problem.validate()?;
    if !(tol_r > 0.0) {
        return Err(param("tol_r", format!("must be positive, got {tol_r}")));
    }
    let radius = problem.radius;
    let samples = ((radius / tol_r).ceil() as usize).clamp(4000, MAX_CLASSIFY_SAMPLES);
    let step = radius / samples as f64;
    let rs: Vec<f64> = (1..=samples).map(|i| i as f64 * step).collect();
    let labels: Vec<Label> = rs.iter().map(|&r| problem.label(r)).collect();
    let gs: Vec<f64> = rs.iter().map(|&r| problem.excess(r)).collect();
    let refine_tol = (1e-3 * tol_r).max(1e-15 * radius);

    // breakpoints as (position, label to the right)
    let mut regions: Vec<Region> = Vec::new();
    let push = |regions: &mut Vec<Region>, lo: f64, hi: f64, label: Label| {
        if let Some(last) = regions.last_mut() {
            if last.label == label && !last.is_point() && lo <= last.hi {
                last.hi = hi;
                return;
            }
        }
        regions.push(Region { lo, hi, label });
    };

    let mut start = 0.0;
    let mut current = labels[0];
    for k in 1..samples {
        // tangential touches inside a run of one sign
        if labels[k] == current && current != Label::Equal && k + 1 < samples {
            let touch = if current == Label::Below {
                gs[k] > gs[k - 1] && gs[k] >= gs[k + 1]
            } else {
                gs[k] < gs[k - 1] && gs[k] <= gs[k + 1]
            };
            if touch {
                let sign = if current == Label::Below { 1.0 } else { -1.0 };
                let (r_star, best) =
                    numeric::golden_max(|r| sign * problem.excess(r), rs[k - 1], rs[k + 1], 1e-15);
                if -best <= problem.zero_tol(r_star) {
                    push(&mut regions, start, r_star, current);
                    push(&mut regions, r_star, r_star, Label::Equal);
                    start = r_star;
                }
            }
        }
        if labels[k] != current {
            let (lo, hi) = (rs[k - 1], rs[k]);
            let next = labels[k];
            if current != Label::Equal && next != Label::Equal && current != next {
                // sign change without a resolved zero band: a crossing point
                let r0 = numeric::bisect(|r| problem.excess(r), lo, hi, refine_tol).unwrap_or(0.5 * (lo + hi));
                push(&mut regions, start, r0, current);
                push(&mut regions, r0, r0, Label::Equal);
                start = r0;
            } else {
                let keep = current;
                let edge = numeric::bisect_predicate(|r| problem.label(r) == keep, lo, hi, refine_tol);
                push(&mut regions, start, edge, current);
                start = edge;
            }
            current = next;
        }
    }
    push(&mut regions, start, radius, current);

    // merge equal-labelled neighbours and drop slivers below the resolution
    let mut merged: Vec<Region> = Vec::new();
    for reg in regions {
        match merged.last_mut() {
            Some(last) if last.label == reg.label && (last.label == Label::Equal || !reg.is_point()) => {
                last.hi = last.hi.max(reg.hi);
            }
            _ => merged.push(reg),
        }
    }
    Ok(RegionClassification {
        regions: merged,
        tol_r,
        radius,
    })
}

/// The attractor map `d(r₀)`.
pub fn d_of(r0: f64, regions: &RegionClassification, radius: f64) -> Result<f64> {
    if !(r0 > 0.0 && r0 <= radius * (1.0 + 1e-12)) {
        return Err(param("r0", format!("must lie in (0, {radius}], got {r0}")));
    }
    match regions.label_at(r0) {
        Label::Equal => Ok(r0),
        Label::Above => regions
            .equal_set()
            .filter(|reg| reg.lo < r0)
            .map(|reg| reg.hi.min(r0))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            .ok_or_else(|| {
                Error::Inconsistent(format!(
                    "r0 = {r0} lies where c > (n−1)/r but no smaller radius has c = (n−1)/r"
                ))
            }),
        Label::Below => Ok(regions
            .equal_set()
            .filter(|reg| reg.hi > r0)
            .map(|reg| reg.lo.max(r0))
            .fold(radius, f64::min)),
    }
}

/// Dense samples used when maximising `u₀` over a tail interval.
const PHI_SAMPLES: usize = 4001;

/// `φ∞(r₀) = max { u₀(r) : d(r₀) ≤ r ≤ R }`.
pub fn phi_infinity(r0: f64, problem: &RadialProblem, regions: &RegionClassification) -> Result<f64> {
    let d = d_of(r0, regions, problem.radius)?;
    Ok(tail_max(problem, d))
}

fn tail_max(problem: &RadialProblem, d: f64) -> f64 {
    let (_, v) = numeric::dense_max(|r| problem.u0.value(r), d, problem.radius, PHI_SAMPLES);
    v.max(problem.u0.value(d))
}

/// Solution of the radial scheme at the final time.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSolution {
    /// Node radii `(i + ½) h`.
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub h: f64,
    pub dt: f64,
    pub steps: u64,
    pub t: f64,
}

/// Default fraction of the stability limit for the radial scheme.
pub const RADIAL_CFL: f64 = 0.9;

/// Monotone explicit scheme for `φ_t = (n−1)/r φ_r + c(r)|φ_r|` on nodes `(i+½)h`.
///
/// The Hamiltonian `kp + c|p|` with `k = (n−1)/r` is the maximum (for `c ≥ 0`, minimum
/// otherwise) of the two linear pieces `(k ± c)p`; each piece is upwinded by the sign of its
/// speed and the pieces are combined the same way. Splitting transport and forcing instead
/// adds a numerical diffusion of order `(k + c)h`, which does not vanish where `c = k` and
/// washes out fronts sitting at such radii.
/// Ghosts: `φ_{−1} = φ_0` by symmetry through the origin, `φ_N = φ_{N−1}` at `R`.
pub fn solve_radial(problem: &RadialProblem, h: f64, t_final: f64) -> Result<RadialSolution> {
    solve_radial_with(problem, h, t_final, RADIAL_CFL)
}

pub fn solve_radial_with(problem: &RadialProblem, h: f64, t_final: f64, cfl: f64) -> Result<RadialSolution> {
    let phi0 = initial_nodes(problem, h)?;
    let nodes = phi0.len();
    let hh = problem.radius / nodes as f64;
    let r: Vec<f64> = (0..nodes).map(|i| (i as f64 + 0.5) * hh).collect();
    evolve_nodes(problem, r, phi0, t_final, cfl)
}

fn initial_nodes(problem: &RadialProblem, h: f64) -> Result<Vec<f64>> {
    problem.validate()?;
    if !(h > 0.0 && h <= problem.radius / 16.0) {
        return Err(param("h", format!("need 0 < h ≤ R/16, got {h}")));
    }
    let nodes = (problem.radius / h).round() as usize;
    let hh = problem.radius / nodes as f64;
    Ok((0..nodes).map(|i| problem.u0.value((i as f64 + 0.5) * hh)).collect())
}

/// Runs the radial scheme from arbitrary nodal data on the standard node set.
pub fn evolve_nodes(
    problem: &RadialProblem,
    r: Vec<f64>,
    mut phi: Vec<f64>,
    t_final: f64,
    cfl: f64,
) -> Result<RadialSolution> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(param("t_final", format!("must be non-negative, got {t_final}")));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(param("cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    let nodes = r.len();
    if nodes < 2 || phi.len() != nodes || r[0] <= 0.0 {
        return Err(param("r", "nodes must be positive and match the data"));
    }
    let h = r[1] - r[0];
    let k = (problem.n - 1) as f64;
    let c: Vec<f64> = r.iter().map(|&ri| problem.c.value(ri)).collect();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(param("c", "forcing not finite at a node"));
    }
    let c_max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dt_max = cfl * h / (k / r[0] + c_max);
    let raw = (t_final / dt_max).ceil();
    if raw > crate::solver::MAX_STEPS {
        return Err(Error::TooManySteps {
            steps: raw,
            limit: crate::solver::MAX_STEPS,
        });
    }
    let steps = raw as u64;
    let dt = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let transport: Vec<f64> = r.iter().map(|&ri| k / ri).collect();
    let mut next = phi.clone();
    let inv_h = 1.0 / h;
    for step in 0..steps {
        for i in 0..nodes {
            let p = phi[i];
            let left = if i == 0 { phi[0] } else { phi[i - 1] };
            let right = if i + 1 == nodes { phi[nodes - 1] } else { phi[i + 1] };
            let dp = (right - p) * inv_h;
            let dm = (p - left) * inv_h;
            let piece = |v: f64| v.max(0.0) * dp + v.min(0.0) * dm;
            let (up, down) = (piece(transport[i] + c[i]), piece(transport[i] - c[i]));
            let rate = if c[i] >= 0.0 { up.max(down) } else { up.min(down) };
            next[i] = p + dt * rate;
        }
        std::mem::swap(&mut phi, &mut next);
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                cell: i,
                time: (step + 1) as f64 * dt,
            });
        }
    }
    Ok(RadialSolution {
        r,
        phi,
        h,
        dt,
        steps,
        t: t_final,
    })
}

/// Sampled `η₁` curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Eta1Curve {
    pub s: Vec<f64>,
    pub eta: Vec<f64>,
    /// Time at which the curve reached `R`, if it did.
    pub absorbed_at: Option<f64>,
}

impl Eta1Curve {
    pub fn last(&self) -> f64 {
        *self.eta.last().expect("curve has at least one sample")
    }

    /// Linear interpolation at time `s` (held constant past the last sample).
    pub fn at(&self, s: f64) -> f64 {
        let i = self.s.partition_point(|&v| v <= s);
        if i == 0 {
            return self.eta[0];
        }
        if i >= self.s.len() {
            return self.last();
        }
        let t = (s - self.s[i - 1]) / (self.s[i] - self.s[i - 1]);
        self.eta[i - 1] + t * (self.eta[i] - self.eta[i - 1])
    }
}

/// Integrates `η̇ = −c(η) + (n−1)/η`, `η(0) = r₀`, with adaptive RK4 (step doubling) and
/// absorption at `R`.
pub fn eta1_curve(r0: f64, problem: &RadialProblem, t_max: f64) -> Result<Eta1Curve> {
    problem.validate()?;
    let radius = problem.radius;
    if !(r0 > 0.0 && r0 <= radius) {
        return Err(param("r0", format!("must lie in (0, {radius}], got {r0}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(param("t_max", format!("must be positive, got {t_max}")));
    }
    let f = |eta: f64| -problem.excess(eta);
    let mut s = 0.0;
    let mut eta = r0;
    let mut out = Eta1Curve {
        s: vec![0.0],
        eta: vec![r0],
        absorbed_at: None,
    };
    if r0 >= radius {
        out.absorbed_at = Some(0.0);
        out.s.push(t_max);
        out.eta.push(radius);
        return Ok(out);
    }
    if problem.label(r0) == Label::Equal && problem.excess(r0) == 0.0 {
        out.s.push(t_max);
        out.eta.push(r0);
        return Ok(out);
    }
    let rk4 = |y: f64, dt: f64| {
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let tol = 1e-11;
    let mut dt = (1e-3 * t_max).min(1e-3 * r0.max(1e-3));
    let mut guard = 0usize;
    while s < t_max {
        guard += 1;
        if guard > 5_000_000 {
            return Err(Error::Inconsistent("eta1 integration did not finish".into()));
        }
        dt = dt.min(t_max - s);
        let full = rk4(eta, dt);
        let half = rk4(rk4(eta, 0.5 * dt), 0.5 * dt);
        let err = (full - half).abs();
        if !half.is_finite() || half <= 0.0 {
            dt *= 0.25;
            if dt < 1e-14 {
                return Err(Error::NonFinite { cell: 0, time: s });
            }
            continue;
        }
        if err > tol * (1.0 + eta.abs()) && dt > 1e-12 {
            dt *= 0.5;
            continue;
        }
        if half >= radius {
            // locate the crossing by bisection on the sub-step
            let mut lo = 0.0;
            let mut hi = dt;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if rk4(eta, mid) >= radius {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            s += hi;
            out.s.push(s);
            out.eta.push(radius);
            out.absorbed_at = Some(s);
            if s < t_max {
                out.s.push(t_max);
                out.eta.push(radius);
            }
            return Ok(out);
        }
        s += dt;
        eta = half + (half - full) / 15.0;
        out.s.push(s);
        out.eta.push(eta);
        if err < 1e-3 * tol {
            dt *= 2.0;
        }
    }
    Ok(out)
}

/// Oscillation of a sampled profile over one connected component of `(0,R) \ int(A)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentResidual {
    pub lo: f64,
    pub hi: f64,
    pub oscillation: f64,
    pub nodes: usize,
}

/// For each component of the complement of the interior of A, the spread `max φ − min φ`
/// over the nodes it contains.
pub fn component_constancy(r: &[f64], phi: &[f64], regions: &RegionClassification) -> Vec<ComponentResidual> {
    // interiors of A are the non-degenerate Equal regions
    let mut components = Vec::new();
    let mut lo = 0.0;
    for reg in regions.equal_set().filter(|reg| !reg.is_point()) {
        components.push((lo, reg.lo));
        lo = reg.hi;
    }
    components.push((lo, regions.radius));
    components
        .into_iter()
        .filter(|(a, b)| b > a)
        .map(|(a, b)| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut nodes = 0;
            for (&ri, &v) in r.iter().zip(phi) {
                if ri >= a && ri <= b {
                    min = min.min(v);
                    max = max.max(v);
                    nodes += 1;
                }
            }
            ComponentResidual {
                lo: a,
                hi: b,
                oscillation: if nodes == 0 { 0.0 } else { max - min },
                nodes,
            }
        })
        .collect()
}

/// The piecewise toy forcing `(n−1)/a`, `(n−1)/r`, `(n−1)/b`.
pub fn toy_model_c(a: f64, b: f64, n: usize) -> Result<ForcingSpec> {
    Ok(ForcingSpec::Radial(RadialForcing::toy(a, b, n)?))
}
