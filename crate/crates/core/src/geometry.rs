//! Domains, masked Cartesian grids and the boundary constants `C₀` and `K₀`.
//!
//! A grid is cell centred with one layer of padding on every side. Cells whose centres lie
//! in the open domain are *inside*; every cell outside the domain that appears in the
//! stencil of an inside cell (face neighbours and the face-pair diagonals used by cross
//! differences) is a *boundary* cell. Boundary cells carry the analytic outward normal and
//! the inside cell their Neumann value is copied from.

use crate::error::{param, Error, Result};
use crate::forcing::{norm, ForcingSpec};
use crate::numeric;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 6;
/// Minimal number of inside cells along every axis.
pub const MIN_INTERIOR_CELLS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    /// Axis-aligned box `|x_d| < half_extents[d]`.
    Rectangle { half_extents: Vec<f64> },
    /// Ball `|x| < radius` in dimension `dim`.
    Disk { radius: f64, dim: usize },
    /// Parabolic channel `|x₂| < m x₁²/2 + k`, truncated to `|x₁| < x_max`. Two-dimensional.
    Channel { m: f64, k: f64, x_max: f64 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDomain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            DomainSpec::Rectangle { half_extents } => {
                if half_extents.len() < 2 || half_extents.len() > MAX_DIM {
                    return Err(Error::InvalidDomain(format!(
                        "rectangle dimension must be in 2..={MAX_DIM}, got {}",
                        half_extents.len()
                    )));
                }
                half_extents.iter().try_for_each(|&e| positive("half extent", e))
            }
            DomainSpec::Disk { radius, dim } => {
                if *dim < 2 || *dim > MAX_DIM {
                    return Err(Error::InvalidDomain(format!(
                        "disk dimension must be in 2..={MAX_DIM}, got {dim}"
                    )));
                }
                positive("radius", *radius)
            }
            DomainSpec::Channel { m, k, x_max } => {
                positive("m", *m)?;
                positive("k", *k)?;
                positive("x_max", *x_max)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Rectangle { half_extents } => half_extents.len(),
            DomainSpec::Disk { dim, .. } => *dim,
            DomainSpec::Channel { .. } => 2,
        }
    }

    /// Membership in the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::Rectangle { half_extents } => {
                x.iter().zip(half_extents).all(|(xi, e)| xi.abs() < *e)
            }
            DomainSpec::Disk { radius, .. } => norm(x) < *radius,
            DomainSpec::Channel { m, k, x_max } => {
                x[0].abs() < *x_max && x[1].abs() < channel_profile(*m, *k, x[0])
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Rectangle { half_extents } => {
                (half_extents.iter().map(|e| -e).collect(), half_extents.clone())
            }
            DomainSpec::Disk { radius, dim } => (vec![-radius; *dim], vec![*radius; *dim]),
            DomainSpec::Channel { m, k, x_max } => {
                let top = channel_profile(*m, *k, *x_max);
                (vec![-x_max, -top], vec![*x_max, top])
            }
        }
    }

    /// Analytic outward unit normal for a point on or just outside the boundary.
    pub fn outward_normal(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        match self {
            DomainSpec::Rectangle { half_extents } => {
                // the most violated face wins; ties go to the lower axis
                let mut best = 0;
                let mut best_excess = f64::NEG_INFINITY;
                for d in 0..dim {
                    let excess = x[d].abs() - half_extents[d];
                    if excess > best_excess {
                        best_excess = excess;
                        best = d;
                    }
                }
                let mut n = vec![0.0; dim];
                n[best] = if x[best] >= 0.0 { 1.0 } else { -1.0 };
                n
            }
            DomainSpec::Disk { .. } => {
                let r = norm(x);
                x.iter().map(|v| v / r).collect()
            }
            DomainSpec::Channel { m, k, x_max } => {
                let slope = m * x[0];
                let scale = (1.0 + slope * slope).sqrt();
                let parabola_excess = (x[1].abs() - channel_profile(*m, *k, x[0])) / scale;
                let truncation_excess = x[0].abs() - x_max;
                if parabola_excess >= truncation_excess {
                    let s = if x[1] >= 0.0 { 1.0 } else { -1.0 };
                    vec![-slope * s / scale, s / scale]
                } else {
                    vec![if x[0] >= 0.0 { 1.0 } else { -1.0 }, 0.0]
                }
            }
        }
    }
}

impl DomainSpec {
    /// Nearest point of `∂Ω` to a point `x` close to it (ghost cells); for the channel the
    /// parabola foot is found by Newton's method and the truncation faces by projection.
    pub fn closest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DomainSpec::Rectangle { half_extents } => {
                let mut p: Vec<f64> = x.iter().zip(half_extents).map(|(v, e)| v.clamp(-e, *e)).collect();
                if self.contains(x) {
                    let n = self.outward_normal(x);
                    let d = n.iter().position(|v| *v != 0.0).unwrap_or(0);
                    p[d] = half_extents[d] * n[d];
                }
                p
            }
            DomainSpec::Disk { radius, .. } => {
                let r = norm(x);
                x.iter().map(|v| v * radius / r).collect()
            }
            DomainSpec::Channel { m, k, x_max } => {
                let normal = self.outward_normal(x);
                if normal[1] == 0.0 {
                    return vec![x_max * normal[0], x[1]];
                }
                let (sign, y) = (x[1].signum(), x[1].abs());
                // stationarity of the squared distance to (s, f(s))
                let mut s = x[0];
                for _ in 0..50 {
                    let f = channel_profile(*m, *k, s);
                    let fp = m * s;
                    let g = (s - x[0]) + (f - y) * fp;
                    let dg = 1.0 + fp * fp + (f - y) * m;
                    let step = g / dg;
                    s -= step;
                    if step.abs() <= 1e-15 * (1.0 + s.abs()) {
                        break;
                    }
                }
                vec![s, sign * channel_profile(*m, *k, s)]
            }
        }
    }
}

/// `f(x) = m x²/2 + k`, the half-width of the channel.
pub fn channel_profile(m: f64, k: f64, x: f64) -> f64 {
    0.5 * m * x * x + k
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Outside,
    Inside,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCell {
    pub index: usize,
    /// Outward unit normal of the domain at (or near) the cell centre.
    pub normal: Vec<f64>,
    /// Inside cell carrying the largest weight in `weights`.
    pub source: usize,
    /// Inside cells and convex weights whose combination this cell receives under the
    /// Neumann fill: the multilinear interpolant at the mirror image of the cell centre.
    pub weights: Vec<(usize, f64)>,
}

/// Uniform masked Cartesian grid over a [`DomainSpec`].
#[derive(Clone, Debug)]
pub struct GridGeometry {
    spec: DomainSpec,
    h: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    origin: Vec<f64>,
    kind: Vec<CellKind>,
    inside: Vec<usize>,
    boundary: Vec<BoundaryCell>,
}

impl GridGeometry {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Padded array shape.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of cells in the padded array.
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn kind(&self, index: usize) -> CellKind {
        self.kind[index]
    }

    pub fn is_inside(&self, index: usize) -> bool {
        self.kind[index] == CellKind::Inside
    }

    /// Inside cells in increasing index order.
    pub fn inside(&self) -> &[usize] {
        &self.inside
    }

    pub fn boundary(&self) -> &[BoundaryCell] {
        &self.boundary
    }

    /// `hⁿ`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for (d, &s) in self.strides.iter().enumerate() {
            out[d] = index / s;
            index %= s;
        }
        out
    }

    pub fn coords(&self, index: usize, out: &mut [f64]) {
        let mi = self.multi_index(index);
        for d in 0..self.dim() {
            out[d] = self.origin[d] + mi[d] as f64 * self.h;
        }
    }

    pub fn coords_vec(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords(index, &mut x);
        x
    }

    /// Index of the cell whose centre is nearest to `x`, if it lies in the padded array.
    pub fn nearest_index(&self, x: &[f64]) -> Option<usize> {
        let mut index = 0;
        for d in 0..self.dim() {
            let f = ((x[d] - self.origin[d]) / self.h).round();
            if f < 0.0 || f >= self.shape[d] as f64 {
                return None;
            }
            index += f as usize * self.strides[d];
        }
        Some(index)
    }

    /// Stencil offsets: `±s_d` for each axis followed by `±s_d ± s_e` for `d < e`.
    pub fn stencil_offsets(&self) -> Vec<isize> {
        let s: Vec<isize> = self.strides.iter().map(|&v| v as isize).collect();
        let mut out = Vec::new();
        for &sd in &s {
            out.push(sd);
            out.push(-sd);
        }
        for d in 0..s.len() {
            for e in d + 1..s.len() {
                for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    out.push(a * s[d] + b * s[e]);
                }
            }
        }
        out
    }

    /// Face-neighbour offsets `±s_d`.
    pub fn face_offsets(&self) -> Vec<isize> {
        self.strides
            .iter()
            .flat_map(|&s| [s as isize, -(s as isize)])
            .collect()
    }
}

/// Builds the masked grid of `spec` with spacing `h`.
pub fn build_grid(spec: &DomainSpec, h: f64) -> Result<GridGeometry> {
    spec.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(param("h", format!("grid spacing must be positive, got {h}")));
    }
    let dim = spec.dim();
    let (lo, hi) = spec.bounding_box();
    let mut shape = Vec::with_capacity(dim);
    let mut origin = Vec::with_capacity(dim);
    for d in 0..dim {
        let cells = ((hi[d] - lo[d]) / h - 1e-9).ceil().max(1.0);
        if cells > 1e7 {
            return Err(param("h", "grid spacing too small for the domain"));
        }
        let cells = cells as usize;
        let centre = 0.5 * (lo[d] + hi[d]);
        shape.push(cells + 2);
        origin.push(centre - ((cells as f64 - 1.0) / 2.0 + 1.0) * h);
    }
    let total: usize = shape.iter().product();
    if total > 200_000_000 {
        return Err(param("h", "grid too large"));
    }
    let mut strides = vec![1; dim];
    for d in (0..dim.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }

    let mut grid = GridGeometry {
        spec: spec.clone(),
        h,
        shape,
        strides,
        origin,
        kind: vec![CellKind::Outside; total],
        inside: Vec::new(),
        boundary: Vec::new(),
    };

    let mut x = vec![0.0; dim];
    let mut extent_lo = [usize::MAX; MAX_DIM];
    let mut extent_hi = [0usize; MAX_DIM];
    for index in 0..total {
        let mi = grid.multi_index(index);
        // padding layer never holds inside cells
        if (0..dim).any(|d| mi[d] == 0 || mi[d] == grid.shape[d] - 1) {
            continue;
        }
        grid.coords(index, &mut x);
        if spec.contains(&x) {
            grid.kind[index] = CellKind::Inside;
            grid.inside.push(index);
            for d in 0..dim {
                extent_lo[d] = extent_lo[d].min(mi[d]);
                extent_hi[d] = extent_hi[d].max(mi[d]);
            }
        }
    }
    for d in 0..dim {
        let cells = if grid.inside.is_empty() {
            0
        } else {
            extent_hi[d] - extent_lo[d] + 1
        };
        if cells < MIN_INTERIOR_CELLS {
            return Err(Error::GridTooCoarse {
                axis: d,
                cells,
                required: MIN_INTERIOR_CELLS,
            });
        }
    }

    let offsets = grid.stencil_offsets();
    let mut ghosts = Vec::new();
    for &i in &grid.inside {
        for &off in &offsets {
            let j = (i as isize + off) as usize;
            if grid.kind[j] == CellKind::Outside {
                grid.kind[j] = CellKind::Boundary;
                ghosts.push(j);
            }
        }
    }
    ghosts.sort_unstable();

    let mut boundary = Vec::with_capacity(ghosts.len());
    for &g in &ghosts {
        grid.coords(g, &mut x);
        let normal = spec.outward_normal(&x);
        let weights = match spec {
            DomainSpec::Rectangle { .. } => {
                vec![(reflect_index(&grid, g, &extent_lo[..dim], &extent_hi[..dim]), 1.0)]
            }
            _ => {
                let foot = spec.closest_boundary_point(&x);
                let mirror: Vec<f64> = x.iter().zip(&foot).map(|(a, b)| 2.0 * b - a).collect();
                let w = interpolation_weights(&grid, &mirror);
                if w.is_empty() {
                    vec![(source_along_normal(&grid, g, &x, &normal), 1.0)]
                } else {
                    w
                }
            }
        };
        let source = weights
            .iter()
            .fold((weights[0].0, f64::NEG_INFINITY), |best, &(j, w)| if w > best.1 { (j, w) } else { best })
            .0;
        debug_assert!(weights.iter().all(|&(j, _)| grid.is_inside(j)));
        boundary.push(BoundaryCell {
            index: g,
            normal,
            source,
            weights,
        });
    }
    grid.boundary = boundary;
    Ok(grid)
}

/// Mirror image of a padding cell across the box faces.
fn reflect_index(grid: &GridGeometry, g: usize, lo: &[usize], hi: &[usize]) -> usize {
    let mi = grid.multi_index(g);
    let mut index = 0;
    for d in 0..grid.dim() {
        let p = mi[d];
        let q = if p < lo[d] {
            2 * lo[d] - 1 - p
        } else if p > hi[d] {
            2 * hi[d] + 1 - p
        } else {
            p
        };
        index += q * grid.strides[d];
    }
    index
}

/// Multilinear interpolation weights at `p` restricted to inside corners and renormalised;
/// empty when no corner of the surrounding cell box is inside.
fn interpolation_weights(grid: &GridGeometry, p: &[f64]) -> Vec<(usize, f64)> {
    let dim = grid.dim();
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for d in 0..dim {
        let f = (p[d] - grid.origin[d]) / grid.h;
        let lo = f.floor();
        if lo < 0.0 || lo + 1.0 >= grid.shape[d] as f64 {
            return Vec::new();
        }
        base[d] = lo as usize;
        frac[d] = f - lo;
    }
    let mut out = Vec::new();
    let mut total = 0.0;
    for corner in 0..1usize << dim {
        let mut index = 0;
        let mut w = 1.0;
        for d in 0..dim {
            let up = corner >> d & 1 == 1;
            index += (base[d] + up as usize) * grid.strides[d];
            w *= if up { frac[d] } else { 1.0 - frac[d] };
        }
        if w > 0.0 && grid.is_inside(index) {
            out.push((index, w));
            total += w;
        }
    }
    for e in &mut out {
        e.1 /= total;
    }
    out
}

/// First inside cell met when walking from the ghost centre along the inward normal;
/// falls back to the nearest inside stencil neighbour.
fn source_along_normal(grid: &GridGeometry, g: usize, x: &[f64], normal: &[f64]) -> usize {
    let h = grid.h;
    let mut p = vec![0.0; x.len()];
    for step in 1..=16 {
        let t = step as f64 * 0.25 * h;
        for d in 0..x.len() {
            p[d] = x[d] - t * normal[d];
        }
        if let Some(j) = grid.nearest_index(&p) {
            if grid.is_inside(j) {
                return j;
            }
        }
    }
    let mut best = None;
    let mut best_dist = f64::INFINITY;
    let mut y = vec![0.0; x.len()];
    for off in grid.stencil_offsets() {
        let j = g as isize + off;
        if j < 0 || j as usize >= grid.len() {
            continue;
        }
        let j = j as usize;
        if grid.is_inside(j) {
            grid.coords(j, &mut y);
            let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best_dist {
                best_dist = dist;
                best = Some(j);
            }
        }
    }
    best.expect("boundary cell always neighbours an inside cell")
}

/// The two boundary constants entering the global Lipschitz condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryMetrics {
    /// Largest value of `−λ` over the principal curvatures `λ` of the boundary.
    pub c0: f64,
    /// Smallest diameter of a ball inside the domain touching the boundary.
    pub k0: f64,
}

pub fn boundary_metrics(spec: &DomainSpec) -> Result<BoundaryMetrics> {
    Ok(BoundaryMetrics {
        c0: principal_curvature_extreme(spec)?,
        k0: inscribed_ball_min(spec)?,
    })
}

/// `C₀`: the maximum of `−λ` over principal curvatures `λ` (outward normal convention).
///
/// Rectangles are treated as flat-faced (`C₀ = 0`). The channel attains its maximum `m` at
/// the vertices `(0, ±k)` where the boundary is most strongly concave.
pub fn principal_curvature_extreme(spec: &DomainSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        DomainSpec::Rectangle { .. } => 0.0,
        DomainSpec::Disk { radius, .. } => -1.0 / radius,
        DomainSpec::Channel { m, .. } => *m,
    })
}

/// Number of boundary samples per channel branch used for `K₀`.
const CHANNEL_K0_SAMPLES: usize = 401;

/// `K₀`: the minimum over boundary points `x` of the largest `2r` with
/// `B(x − r n(x), r)` inside the domain.
pub fn inscribed_ball_min(spec: &DomainSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        DomainSpec::Rectangle { half_extents } => {
            2.0 * half_extents.iter().cloned().fold(f64::INFINITY, f64::min)
        }
        DomainSpec::Disk { radius, .. } => 2.0 * radius,
        DomainSpec::Channel { m, k, x_max } => {
            let samples = channel_boundary_samples(*x_max, CHANNEL_K0_SAMPLES);
            samples
                .iter()
                .map(|&s| channel_inscribed_diameter(*m, *k, s))
                .fold(f64::INFINITY, f64::min)
        }
    })
}

/// Symmetric abscissae `−x_max..=x_max` for boundary sampling.
pub fn channel_boundary_samples(x_max: f64, count: usize) -> Vec<f64> {
    let half = count / 2;
    let mut out: Vec<f64> = (0..=half)
        .map(|i| x_max * i as f64 / half as f64)
        .collect();
    let mirrored: Vec<f64> = out.iter().skip(1).map(|v| -v).collect();
    out.extend(mirrored);
    out.sort_by(f64::total_cmp);
    out
}

/// Distance from `q` to the upper branch `{(s, f(s))}` of the channel boundary.
pub fn distance_to_parabola(m: f64, k: f64, q: [f64; 2]) -> f64 {
    let vertical = (channel_profile(m, k, q[0]) - q[1]).abs();
    if vertical == 0.0 {
        return 0.0;
    }
    let dist2 = |s: f64| {
        let dy = channel_profile(m, k, s) - q[1];
        (s - q[0]) * (s - q[0]) + dy * dy
    };
    let (_, best) = numeric::dense_max(|s| -dist2(s), q[0] - vertical, q[0] + vertical, 129);
    (-best).max(0.0).sqrt()
}

/// Largest `2r` such that the ball of radius `r` tangent to the upper branch at
/// `(s, f(s))` from inside stays in the untruncated channel.
pub fn channel_inscribed_diameter(m: f64, k: f64, s: f64) -> f64 {
    let slope = m * s;
    let scale = (1.0 + slope * slope).sqrt();
    let normal = [-slope / scale, 1.0 / scale];
    let point = [s, channel_profile(m, k, s)];
    let contained = |r: f64| {
        let c = [point[0] - r * normal[0], point[1] - r * normal[1]];
        if c[1].abs() >= channel_profile(m, k, c[0]) {
            return false;
        }
        let upper = distance_to_parabola(m, k, c);
        let lower = distance_to_parabola(m, k, [c[0], -c[1]]);
        upper.min(lower) >= r * (1.0 - 1e-9)
    };
    let mut hi = 2.0 * k;
    while contained(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            return f64::INFINITY;
        }
    }
    let r = numeric::bisect_predicate(contained, 0.0, hi, 1e-12 * hi);
    2.0 * r
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
}

/// Default number of sample points per axis for [`check_forcing_condition`].
pub const DEFAULT_SAMPLE_DENSITY: usize = 64;

/// Samples `c²/n − |Dc| − δ − max{0, C₀|c| + 2nC₀/K₀}` over the domain and reports the
/// smallest value. The condition holds when that minimum is positive.
pub fn check_forcing_condition(
    spec: &DomainSpec,
    c: &ForcingSpec,
    delta: f64,
    sample_density: usize,
) -> Result<ConditionReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(param("delta", format!("must be positive, got {delta}")));
    }
    if sample_density < 2 {
        return Err(param("sample_density", "need at least 2 samples per axis"));
    }
    let metrics = boundary_metrics(spec)?;
    let dim = spec.dim();
    let n = dim as f64;
    let (lo, hi) = spec.bounding_box();
    let total = sample_density.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if total > 50_000_000 {
        return Err(param("sample_density", "too many sample points"));
    }
    let mut x = vec![0.0; dim];
    let mut worst = f64::INFINITY;
    let mut worst_point = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..dim).rev() {
            let i = rem % sample_density;
            rem /= sample_density;
            x[d] = lo[d] + (i as f64 + 0.5) * (hi[d] - lo[d]) / sample_density as f64;
        }
        if !spec.contains(&x) {
            continue;
        }
        let m = condition_margin(c, &x, delta, n, metrics);
        if m < worst {
            worst = m;
            worst_point.copy_from_slice(&x);
        }
    }
    Ok(ConditionReport {
        holds: worst > 0.0,
        worst_margin: worst,
        worst_point,
    })
}

/// Pointwise margin of the forcing condition.
pub fn condition_margin(c: &ForcingSpec, x: &[f64], delta: f64, n: f64, metrics: BoundaryMetrics) -> f64 {
    let cv = c.value(x);
    let dc = c.gradient_norm(x);
    let rhs = (metrics.c0 * cv.abs() + 2.0 * n * metrics.c0 / metrics.k0).max(0.0);
    cv * cv / n - dc - delta - rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::RadialForcing;

    fn disk(r: f64) -> DomainSpec {
        DomainSpec::Disk { radius: r, dim: 2 }
    }

    #[test]
    fn disk_mask_matches_inequality() {
        let g = build_grid(&disk(1.0), 0.25).unwrap();
        let mut x = [0.0; 2];
        for i in 0..g.len() {
            g.coords(i, &mut x);
            assert_eq!(g.is_inside(i), norm(&x) < 1.0, "cell {x:?}");
        }
        // 8 cells per axis, centres at ±0.125 .. ±0.875
        assert_eq!(g.shape(), &[10, 10]);
    }

    #[test]
    fn disk_normal_near_east_pole() {
        let g = build_grid(&disk(1.0), 0.25).unwrap();
        let b = g
            .boundary()
            .iter()
            .min_by(|a, b| {
                let da = dist(&g.coords_vec(a.index), &[1.0, 0.0]);
                let db = dist(&g.coords_vec(b.index), &[1.0, 0.0]);
                da.total_cmp(&db)
            })
            .unwrap();
        let x = g.coords_vec(b.index);
        let expected: Vec<f64> = x.iter().map(|v| v / norm(&x)).collect();
        assert!(dist(&b.normal, &expected) < 1e-12);
        // the nearest ghost centre sits at (1.125, ±0.125); its normal is within h of e₁
        assert!(dist(&b.normal, &[1.0, 0.0]) < 0.25);
    }

    #[test]
    fn disk_normal_on_axis_is_exact() {
        let g = build_grid(&DomainSpec::Disk { radius: 1.0, dim: 2 }, 2.0 / 9.0).unwrap();
        // odd cell count puts a centre on the axis
        let b = g
            .boundary()
            .iter()
            .find(|b| {
                let x = g.coords_vec(b.index);
                x[1].abs() < 1e-12 && x[0] > 0.0
            })
            .unwrap();
        assert!(dist(&b.normal, &[1.0, 0.0]) < 1e-6);
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn rectangle_normals_axis_aligned() {
        let g = build_grid(
            &DomainSpec::Rectangle {
                half_extents: vec![1.0, 1.0],
            },
            0.5,
        )
        .unwrap_err();
        // 4 cells per axis is below the interior minimum
        assert!(matches!(g, Error::GridTooCoarse { .. }));
        let g = build_grid(
            &DomainSpec::Rectangle {
                half_extents: vec![1.0, 1.0],
            },
            0.25,
        )
        .unwrap();
        for b in g.boundary() {
            let nonzero: Vec<_> = b.normal.iter().filter(|v| **v != 0.0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(nonzero[0].abs(), 1.0);
        }
    }

    #[test]
    fn channel_vertex_normal() {
        let spec = DomainSpec::Channel {
            m: 1.0,
            k: 0.1,
            x_max: 3.0,
        };
        let g = build_grid(&spec, 0.05).unwrap();
        let b = g
            .boundary()
            .iter()
            .min_by(|a, b| {
                dist(&g.coords_vec(a.index), &[0.0, 0.1])
                    .total_cmp(&dist(&g.coords_vec(b.index), &[0.0, 0.1]))
            })
            .unwrap();
        // analytic gradient of x₂ − f(x₁) at the vertex is (0, 1); the nearest cell centre
        // sits half a cell off the axis, so agreement is first order in h
        assert!(dist(&b.normal, &[0.0, 1.0]) < 0.05);
        let x = g.coords_vec(b.index);
        let exact = [-x[0], 1.0];
        let len = norm(&exact);
        assert!(dist(&b.normal, &[exact[0] / len, exact[1] / len]) < 1e-12);
    }

    #[test]
    fn every_boundary_cell_has_unit_normal_and_inside_source() {
        let specs = [
            disk(1.0),
            DomainSpec::Disk { radius: 1.0, dim: 3 },
            DomainSpec::Rectangle {
                half_extents: vec![1.0, 0.5],
            },
            DomainSpec::Channel {
                m: 1.0,
                k: 1.0,
                x_max: 3.0,
            },
        ];
        for spec in &specs {
            let g = build_grid(spec, 0.1).unwrap();
            for b in g.boundary() {
                assert!((norm(&b.normal) - 1.0).abs() < 1e-12);
                assert!(g.is_inside(b.source));
                assert_eq!(g.kind(b.index), CellKind::Boundary);
            }
            // no orphan cells: every stencil neighbour of an inside cell is inside or boundary
            let offsets = g.stencil_offsets();
            for &i in g.inside() {
                for &o in &offsets {
                    let j = (i as isize + o) as usize;
                    assert_ne!(g.kind(j), CellKind::Outside);
                }
            }
        }
    }

    #[test]
    fn ghost_weights_are_convex_over_inside_cells() {
        let specs = [
            disk(1.0),
            DomainSpec::Disk { radius: 1.0, dim: 3 },
            DomainSpec::Channel {
                m: 1.0,
                k: 1.0,
                x_max: 2.0,
            },
        ];
        for spec in &specs {
            let g = build_grid(spec, 0.07).unwrap();
            for b in g.boundary() {
                let total: f64 = b.weights.iter().map(|w| w.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(b.weights.iter().all(|&(j, w)| w > 0.0 && g.is_inside(j)));
                let top = b.weights.iter().fold(0.0f64, |m, w| m.max(w.1));
                assert!(b.weights.iter().any(|&(j, w)| j == b.source && w == top));
            }
        }
    }

    #[test]
    fn closest_point_examples() {
        let p = disk(2.0).closest_boundary_point(&[3.0, 4.0]);
        assert!(dist(&p, &[1.2, 1.6]) < 1e-15);
        let rect = DomainSpec::Rectangle {
            half_extents: vec![1.0, 0.5],
        };
        assert_eq!(rect.closest_boundary_point(&[1.3, 0.2]), vec![1.0, 0.2]);
        assert_eq!(rect.closest_boundary_point(&[1.3, -0.9]), vec![1.0, -0.5]);
        let ch = DomainSpec::Channel {
            m: 1.0,
            k: 1.0,
            x_max: 2.0,
        };
        // the vertex is the foot of every point on the axis below the focus
        let p = ch.closest_boundary_point(&[0.0, -1.2]);
        assert!(dist(&p, &[0.0, -1.0]) < 1e-14);
        assert_eq!(ch.closest_boundary_point(&[2.1, 0.3]), vec![2.0, 0.3]);
    }

    #[test]
    fn channel_foot_minimises_distance() {
        let (m, k) = (1.0, 1.0);
        let ch = DomainSpec::Channel { m, k, x_max: 3.0 };
        for &q in &[[0.7, 1.4], [-1.1, 1.5], [0.3, -1.2], [1.6, 2.4], [-0.2, 0.9]] {
            let p = ch.closest_boundary_point(&q);
            assert!((p[1].abs() - channel_profile(m, k, p[0])).abs() < 1e-14);
            assert_eq!(p[1].signum(), q[1].signum());
            let d = dist(&p, &q);
            assert!((d - distance_to_parabola(m, k, [q[0], q[1].abs()])).abs() < 1e-9, "{q:?}");
        }
    }

    #[test]
    fn coarse_and_invalid_grids_rejected() {
        assert!(matches!(
            build_grid(&disk(1.0), 0.3),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(build_grid(&disk(1.0), 0.0).is_err());
        assert!(build_grid(&disk(1.0), -0.1).is_err());
        assert!(build_grid(&disk(-1.0), 0.1).is_err());
        assert!(build_grid(&DomainSpec::Disk { radius: 1.0, dim: 1 }, 0.1).is_err());
    }

    #[test]
    fn closed_form_metrics() {
        assert_eq!(principal_curvature_extreme(&disk(1.0)).unwrap(), -1.0);
        assert_eq!(principal_curvature_extreme(&disk(0.5)).unwrap(), -2.0);
        assert_eq!(inscribed_ball_min(&disk(1.0)).unwrap(), 2.0);
        let rect = DomainSpec::Rectangle {
            half_extents: vec![1.0, 0.25],
        };
        assert_eq!(inscribed_ball_min(&rect).unwrap(), 0.5);
        assert_eq!(principal_curvature_extreme(&rect).unwrap(), 0.0);
    }

    #[test]
    fn channel_curvature_matches_finite_differences() {
        // curvature of t ↦ (t, f(t)) by central differences, maximised by dense sampling
        let (m, k) = (1.0, 0.1);
        let f = |t: f64| channel_profile(m, k, t);
        let d = 1e-4;
        let mut best: f64 = 0.0;
        for i in 0..=2000 {
            let t = -3.0 + 6.0 * i as f64 / 2000.0;
            let f1 = (f(t + d) - f(t - d)) / (2.0 * d);
            let f2 = (f(t + d) - 2.0 * f(t) + f(t - d)) / (d * d);
            best = best.max(f2 / (1.0 + f1 * f1).powf(1.5));
        }
        let c0 = principal_curvature_extreme(&DomainSpec::Channel { m, k, x_max: 3.0 }).unwrap();
        assert!((c0 - best).abs() < 1e-6, "{c0} vs {best}");
    }

    #[test]
    fn channel_k0_against_brute_force() {
        let (m, k, x_max) = (1.0, 0.5, 3.0);
        let k0 = inscribed_ball_min(&DomainSpec::Channel { m, k, x_max }).unwrap();
        assert!(k0 > 0.0 && k0 <= 2.0 * k + 1e-9, "{k0}");
        // brute force: for a few boundary points scan r on a fine grid and test containment
        // by checking points of the candidate circle against the defining inequality
        let inside = |x: f64, y: f64| y.abs() <= channel_profile(m, k, x) + 1e-9;
        let mut brute = f64::INFINITY;
        for &s in &[-2.0, -0.7, 0.0, 0.3, 1.1, 2.5] {
            let slope = m * s;
            let scale = (1.0 + slope * slope).sqrt();
            let n = [-slope / scale, 1.0 / scale];
            let p = [s, channel_profile(m, k, s)];
            let mut best = 0.0;
            for j in 1..=4000 {
                let r = 0.005 * j as f64;
                let c = [p[0] - r * n[0], p[1] - r * n[1]];
                let ok = (0..4000).all(|q| {
                    let t = std::f64::consts::TAU * q as f64 / 4000.0;
                    inside(c[0] + r * t.cos(), c[1] + r * t.sin())
                });
                if ok {
                    best = r;
                } else {
                    break;
                }
            }
            let numeric = channel_inscribed_diameter(m, k, s);
            assert!((numeric - 2.0 * best).abs() < 0.02, "s = {s}: {numeric} vs {}", 2.0 * best);
            brute = brute.min(2.0 * best);
        }
        assert!(k0 <= brute + 0.02);
        // vertex value is exactly 2k (the ball reaches the opposite branch)
        assert!((channel_inscribed_diameter(m, k, 0.0) - 2.0 * k).abs() < 1e-8);
    }

    #[test]
    fn channel_k0_mirror_symmetric() {
        let (m, k) = (1.0, 0.5);
        for &s in &[0.4, 1.3, 2.9] {
            let a = channel_inscribed_diameter(m, k, s);
            let b = channel_inscribed_diameter(m, k, -s);
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn forcing_condition_examples() {
        let rep = check_forcing_condition(&disk(1.0), &ForcingSpec::Constant(2.0), 1.0, 64).unwrap();
        assert!(rep.holds);
        assert!((rep.worst_margin - 1.0).abs() < 1e-12);

        let rep = check_forcing_condition(&disk(1.0), &ForcingSpec::Constant(0.0), 0.1, 32).unwrap();
        assert!(!rep.holds);
        assert!((rep.worst_margin + 0.1).abs() < 1e-12);

        assert!(check_forcing_condition(&disk(1.0), &ForcingSpec::Constant(2.0), 0.0, 8).is_err());
    }

    #[test]
    fn forcing_condition_fails_at_tangential_touch() {
        // c touches (n−1)/r from below at r = a with c'(a) = −(n−1)/a²
        let a = 0.3;
        let c = ForcingSpec::Radial(RadialForcing::touching(a, 0.6, 0.05, 2).unwrap());
        let delta = 0.01;
        let metrics = boundary_metrics(&disk(1.0)).unwrap();
        let at_a = condition_margin(&c, &[a, 0.0], delta, 2.0, metrics);
        assert!((at_a - (-1.0 / (2.0 * a * a) - delta)).abs() < 1e-9, "{at_a}");
        let rep = check_forcing_condition(&disk(1.0), &c, delta, 64).unwrap();
        assert!(!rep.holds);
    }

    #[test]
    fn forcing_condition_monotone_in_delta() {
        let c = ForcingSpec::custom(|x, g| {
            g[0] = 0.2;
            g[1] = 0.0;
            1.5 + 0.2 * x[0]
        });
        let mut previous_holds = true;
        for i in 1..40 {
            let delta = 0.05 * i as f64;
            let rep = check_forcing_condition(&disk(1.0), &c, delta, 24).unwrap();
            assert!(previous_holds || !rep.holds);
            previous_holds = rep.holds;
        }
    }
}
