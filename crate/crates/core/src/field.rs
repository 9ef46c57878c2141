//! Scalar fields on masked grids, the Neumann ghost fill and the discrete operators of the
//! regularized equation.

use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::geometry::{CellKind, GridGeometry, MAX_DIM};

/// Grid-sampled values. Inside and boundary cells carry data; outside cells hold zero.
#[derive(Clone, Debug)]
pub struct ScalarField {
    geom: Arc<GridGeometry>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.geom, &other.geom) || self.geom.len() == other.geom.len())
            && self.values == other.values
    }
}

impl ScalarField {
    pub fn new(geom: Arc<GridGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.len() {
            return Err(param(
                "values",
                format!("expected {} values, got {}", geom.len(), values.len()),
            ));
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell, time: 0.0 });
        }
        Ok(ScalarField { geom, values })
    }

    pub fn constant(geom: Arc<GridGeometry>, value: f64) -> Self {
        let mut values = vec![0.0; geom.len()];
        for i in 0..geom.len() {
            if geom.kind(i) != CellKind::Outside {
                values[i] = value;
            }
        }
        ScalarField { geom, values }
    }

    /// Samples `f` at every inside and boundary cell centre.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(geom: Arc<GridGeometry>, f: F) -> Self {
        let mut values = vec![0.0; geom.len()];
        let mut x = [0.0; MAX_DIM];
        let dim = geom.dim();
        for (i, v) in values.iter_mut().enumerate() {
            if geom.kind(i) != CellKind::Outside {
                geom.coords(i, &mut x[..dim]);
                *v = f(&x[..dim]);
            }
        }
        ScalarField { geom, values }
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Sets every boundary cell to its weighted combination of inside cells. Inside values
    /// are untouched.
    pub fn fill_ghosts(&mut self) {
        for b in self.geom.boundary() {
            // offsets from the source keep constant fields exact
            let base = self.values[b.source];
            let spread: f64 = b.weights.iter().map(|&(j, w)| w * (self.values[j] - base)).sum();
            self.values[b.index] = base + spread;
        }
    }

    /// Applies `f` to inside and boundary cells.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for i in 0..out.values.len() {
            if self.geom.kind(i) != CellKind::Outside {
                out.values[i] = f(out.values[i]);
            }
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn inside_min(&self) -> f64 {
        self.geom
            .inside()
            .iter()
            .map(|&i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn inside_max(&self) -> f64 {
        self.geom
            .inside()
            .iter()
            .map(|&i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |u|` over inside cells.
    pub fn sup_norm(&self) -> f64 {
        self.geom
            .inside()
            .iter()
            .map(|&i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Returns a copy with boundary cells filled from their sources.
pub fn neumann_fill_ghosts(field: &ScalarField) -> ScalarField {
    let mut out = field.clone();
    out.fill_ghosts();
    out
}

/// A vector per inside cell, in the order of [`GridGeometry::inside`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    dim: usize,
    data: Vec<f64>,
}

impl GradientField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Vector at the `k`-th inside cell.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Centred differences `(u_{i+1} − u_{i−1}) / 2h` at every inside cell.
pub fn grad_central(field: &ScalarField) -> GradientField {
    let g = field.geometry();
    let dim = g.dim();
    let inv2h = 0.5 / g.h();
    let u = field.values();
    let mut data = Vec::with_capacity(g.inside().len() * dim);
    for &i in g.inside() {
        for &s in g.strides() {
            data.push((u[i + s] - u[i - s]) * inv2h);
        }
    }
    GradientField { dim, data }
}

/// Local stencil quantities at one inside cell.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub grad: [f64; MAX_DIM],
    /// Second differences; `hess[d][e]` for `d ≠ e` is the four-point cross difference.
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
}

pub fn stencil_at(u: &[f64], i: usize, strides: &[usize], h: f64) -> Stencil {
    let inv2h = 0.5 / h;
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    let mut grad = [0.0; MAX_DIM];
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    let c = u[i];
    for (d, &s) in strides.iter().enumerate() {
        let (p, m) = (u[i + s], u[i - s]);
        grad[d] = (p - m) * inv2h;
        hess[d][d] = (p - 2.0 * c + m) * inv_h2;
        for (e, &t) in strides.iter().enumerate().skip(d + 1) {
            let v = (u[i + s + t] - u[i + s - t] - u[i - s + t] + u[i - s - t]) * inv_4h2;
            hess[d][e] = v;
            hess[e][d] = v;
        }
    }
    Stencil { grad, hess }
}

/// `bᵢⱼ(p) uᵢⱼ = Δu − pᵀD²u p / (ε² + |p|²)` from a precomputed stencil.
pub fn contract(st: &Stencil, dim: usize, eps: f64) -> f64 {
    let mut lap = 0.0;
    let mut quad = 0.0;
    let mut p2 = 0.0;
    for d in 0..dim {
        lap += st.hess[d][d];
        p2 += st.grad[d] * st.grad[d];
        for e in 0..dim {
            quad += st.grad[d] * st.grad[e] * st.hess[d][e];
        }
    }
    lap - quad / (eps * eps + p2)
}

/// Curvature operator `bᵢⱼ(Du) uᵢⱼ` at inside cells; zero elsewhere.
pub fn bij_contract(field: &ScalarField, eps: f64) -> ScalarField {
    let g = field.geometry();
    let u = field.values();
    let mut out = vec![0.0; g.len()];
    for &i in g.inside() {
        let st = stencil_at(u, i, g.strides(), g.h());
        out[i] = contract(&st, g.dim(), eps);
    }
    ScalarField {
        geom: g.clone(),
        values: out,
    }
}

/// Monotone upwind magnitude at cell `i`: `sqrt(Σ_d max(u_{i−s}−u_i, u_{i+s}−u_i, 0)²) / h`.
#[inline]
pub fn upwind_at(u: &[f64], i: usize, strides: &[usize], h: f64) -> f64 {
    let c = u[i];
    let mut sum = 0.0;
    for &s in strides {
        let m = (u[i - s] - c).max(u[i + s] - c).max(0.0);
        sum += m * m;
    }
    sum.sqrt() / h
}

/// Upwind gradient magnitude at inside cells; zero elsewhere.
pub fn upwind_gradient_magnitude(field: &ScalarField) -> ScalarField {
    let g = field.geometry();
    let u = field.values();
    let mut out = vec![0.0; g.len()];
    for &i in g.inside() {
        out[i] = upwind_at(u, i, g.strides(), g.h());
    }
    ScalarField {
        geom: g.clone(),
        values: out,
    }
}

/// `sqrt(ε² + |Du|²)` with centred gradients at inside cells; zero elsewhere.
pub fn w_field(field: &ScalarField, eps: f64) -> ScalarField {
    let g = field.geometry();
    let grad = grad_central(field);
    let mut out = vec![0.0; g.len()];
    for (k, &i) in g.inside().iter().enumerate() {
        let p2: f64 = grad.at(k).iter().map(|v| v * v).sum();
        out[i] = (eps * eps + p2).sqrt();
    }
    ScalarField {
        geom: g.clone(),
        values: out,
    }
}

/// Discrete spatial Lipschitz constant: the largest `|u_i − u_j| / h` over inside cells `i`
/// and their face neighbours `j` (inside or boundary).
pub fn lipschitz_x(field: &ScalarField) -> f64 {
    let g = field.geometry();
    let u = field.values();
    let mut best: f64 = 0.0;
    for &i in g.inside() {
        for &s in g.strides() {
            best = best.max((u[i + s] - u[i]).abs()).max((u[i - s] - u[i]).abs());
        }
    }
    best / g.h()
}

/// Discrete Lipschitz constant restricted to inside cells whose centre satisfies `pred`.
pub fn lipschitz_where<P: Fn(&[f64]) -> bool>(field: &ScalarField, pred: P) -> f64 {
    let g = field.geometry();
    let u = field.values();
    let dim = g.dim();
    let mut x = [0.0; MAX_DIM];
    let mut best: f64 = 0.0;
    for &i in g.inside() {
        g.coords(i, &mut x[..dim]);
        if !pred(&x[..dim]) {
            continue;
        }
        for &s in g.strides() {
            best = best.max((u[i + s] - u[i]).abs()).max((u[i - s] - u[i]).abs());
        }
    }
    best / g.h()
}

/// Sup norms of a sampled field and its central first and second differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStats {
    pub sup: f64,
    /// `max |Du|` (Euclidean norm of the centred gradient).
    pub grad_sup: f64,
    /// `max |uᵢⱼ|` over all Hessian entries.
    pub hessian_sup: f64,
}

/// Field statistics over inside cells; ghosts should be filled first.
pub fn stats(field: &ScalarField) -> FieldStats {
    let g = field.geometry();
    let u = field.values();
    let dim = g.dim();
    let mut out = FieldStats {
        sup: 0.0,
        grad_sup: 0.0,
        hessian_sup: 0.0,
    };
    for &i in g.inside() {
        let st = stencil_at(u, i, g.strides(), g.h());
        out.sup = out.sup.max(u[i].abs());
        let p2: f64 = st.grad[..dim].iter().map(|v| v * v).sum();
        out.grad_sup = out.grad_sup.max(p2.sqrt());
        for d in 0..dim {
            for e in 0..dim {
                out.hessian_sup = out.hessian_sup.max(st.hess[d][e].abs());
            }
        }
    }
    out
}
