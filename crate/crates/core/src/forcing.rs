//! Forcing terms `c(x)` together with their gradients.

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Result};

/// A radially symmetric forcing profile `c(r)`.
#[derive(Clone, Debug, PartialEq)]
pub enum RadialForcing {
    /// Piecewise profile equal to `(n−1)/a` below `a`, `(n−1)/r` on `[a, b]` and `(n−1)/b`
    /// above `b`. Continuous but not C¹ at `a` and `b`.
    Toy { a: f64, b: f64, n: usize },
    /// `c(r) = (n−1)/r · (β(r−a) + β(r−b))` with `β(x) = (1 − (x/w)²)²` on `|x| < w`.
    ///
    /// The profile is C¹, vanishes away from the two peaks, lies below `(n−1)/r` everywhere
    /// and touches it tangentially exactly at `r = a` and `r = b`.
    Touching { a: f64, b: f64, width: f64, n: usize },
    /// Like `Touching` at `b`, but crossing `(n−1)/r` transversally at `a`:
    /// `c = (n−1)/a · (1 + slope·(1 − r/a))` below `a`, so `c > (n−1)/r` on `(a/slope, a)`,
    /// then a cubic Hermite descent to zero over `[a, a + width]` matching `c` and `c′` at `a`,
    /// plus the touching bump at `b`. `(a, b)` lies strictly below the threshold and a front
    /// at `a` is attracting from both sides.
    Anchored { a: f64, b: f64, width: f64, slope: f64, n: usize },
    /// Piecewise-linear interpolation of samples `(r_i, c_i)`, constant beyond the ends.
    Samples { r: Vec<f64>, c: Vec<f64> },
}

impl RadialForcing {
    pub fn toy(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b > a) {
            return Err(param("toy", format!("need 0 < a < b, got a = {a}, b = {b}")));
        }
        if n < 2 {
            return Err(param("n", "dimension must be at least 2"));
        }
        Ok(RadialForcing::Toy { a, b, n })
    }

    pub fn touching(a: f64, b: f64, width: f64, n: usize) -> Result<Self> {
        if !(width > 0.0 && a > width && b - a > 2.0 * width) {
            return Err(param(
                "touching",
                format!("need 0 < width < a and b − a > 2·width, got a = {a}, b = {b}, width = {width}"),
            ));
        }
        if n < 2 {
            return Err(param("n", "dimension must be at least 2"));
        }
        Ok(RadialForcing::Touching { a, b, width, n })
    }

    pub fn anchored(a: f64, b: f64, width: f64, slope: f64, n: usize) -> Result<Self> {
        if !(width > 0.0 && a > 0.0 && b - a > 2.0 * width) {
            return Err(param(
                "anchored",
                format!("need a > 0, width > 0 and b − a > 2·width, got a = {a}, b = {b}, width = {width}"),
            ));
        }
        // the upper bound keeps the descent nonnegative
        if !(slope > 1.0 && (slope - 1.0) * width <= 3.0 * a) {
            return Err(param("slope", format!("need 1 < slope ≤ 1 + 3a/width, got {slope}")));
        }
        if n < 2 {
            return Err(param("n", "dimension must be at least 2"));
        }
        Ok(RadialForcing::Anchored { a, b, width, slope, n })
    }

    pub fn samples(r: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if r.len() != c.len() || r.len() < 2 {
            return Err(param("samples", "need at least two (r, c) pairs of equal length"));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param("samples", "radii must be strictly increasing"));
        }
        if c.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(param("samples", "non-finite sample"));
        }
        Ok(RadialForcing::Samples { r, c })
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialForcing::Toy { a, b, n } => {
                let k = (n - 1) as f64;
                if r < a {
                    k / a
                } else if r <= b {
                    k / r
                } else {
                    k / b
                }
            }
            RadialForcing::Touching { a, b, width, n } => {
                if r <= 0.0 {
                    return 0.0;
                }
                let k = (n - 1) as f64;
                k / r * (peak(r - a, width) + peak(r - b, width))
            }
            RadialForcing::Anchored { a, b, width, slope, n } => {
                let k = (n - 1) as f64;
                if r <= a {
                    return k / a * (1.0 + slope * (1.0 - r / a));
                }
                k / r * (descent((r - a) / width, -(slope - 1.0) * width / a).0 + peak(r - b, width))
            }
            RadialForcing::Samples { r: ref rs, ref c } => {
                let (i, t) = locate(rs, r);
                c[i] + t * (c[i + 1] - c[i])
            }
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            RadialForcing::Toy { a, b, n } => {
                if r < a || r > b {
                    0.0
                } else {
                    -((n - 1) as f64) / (r * r)
                }
            }
            RadialForcing::Touching { a, b, width, n } => {
                if r <= 0.0 {
                    return 0.0;
                }
                let k = (n - 1) as f64;
                let tau = peak(r - a, width) + peak(r - b, width);
                let dtau = peak_deriv(r - a, width) + peak_deriv(r - b, width);
                -k / (r * r) * tau + k / r * dtau
            }
            RadialForcing::Anchored { a, b, width, slope, n } => {
                let k = (n - 1) as f64;
                if r <= a {
                    return -k * slope / (a * a);
                }
                let (v, dv) = descent((r - a) / width, -(slope - 1.0) * width / a);
                let tau = v + peak(r - b, width);
                let dtau = dv / width + peak_deriv(r - b, width);
                -k / (r * r) * tau + k / r * dtau
            }
            RadialForcing::Samples { r: ref rs, ref c } => {
                if r < rs[0] || r > rs[rs.len() - 1] {
                    return 0.0;
                }
                let (i, _) = locate(rs, r);
                (c[i + 1] - c[i]) / (rs[i + 1] - rs[i])
            }
        }
    }

    /// Dimension baked into the closed-form profiles, if any.
    pub fn dimension(&self) -> Option<usize> {
        match *self {
            RadialForcing::Toy { n, .. }
            | RadialForcing::Touching { n, .. }
            | RadialForcing::Anchored { n, .. } => Some(n),
            RadialForcing::Samples { .. } => None,
        }
    }
}

/// Cubic on `[0, 1]` from value 1 with slope `d0` to value 0 with slope 0, zero beyond;
/// returns the value and its derivative in `s`.
fn descent(s: f64, d0: f64) -> (f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let h00 = (2.0 * s - 3.0) * s * s + 1.0;
    let h10 = ((s - 2.0) * s + 1.0) * s;
    let dh00 = 6.0 * s * (s - 1.0);
    let dh10 = (3.0 * s - 4.0) * s + 1.0;
    (h00 + d0 * h10, dh00 + d0 * dh10)
}

fn peak(x: f64, w: f64) -> f64 {
    if x.abs() >= w {
        0.0
    } else {
        let s = 1.0 - (x / w) * (x / w);
        s * s
    }
}

fn peak_deriv(x: f64, w: f64) -> f64 {
    if x.abs() >= w {
        0.0
    } else {
        -4.0 * x * (1.0 - (x / w) * (x / w)) / (w * w)
    }
}

/// Segment index and interpolation weight of `x` in the sorted `nodes`, clamped.
fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[last] {
        return (last - 1, 1.0);
    }
    let i = nodes.partition_point(|&v| v <= x) - 1;
    let i = i.min(last - 1);
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

type CustomFn = dyn Fn(&[f64], &mut [f64]) -> f64 + Send + Sync;

/// The forcing `c(x)` of the level-set equation, evaluable with its gradient at any point.
#[derive(Clone)]
pub enum ForcingSpec {
    Constant(f64),
    Radial(RadialForcing),
    /// Arbitrary closed form. The closure writes `Dc(x)` into its second argument and
    /// returns `c(x)`.
    Custom(Arc<CustomFn>),
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingSpec::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            ForcingSpec::Radial(r) => f.debug_tuple("Radial").field(r).finish(),
            ForcingSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ForcingSpec {
    pub fn custom<F>(func: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    {
        ForcingSpec::Custom(Arc::new(func))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ForcingSpec::Constant(c) => *c,
            ForcingSpec::Radial(profile) => profile.value(norm(x)),
            ForcingSpec::Custom(func) => {
                let mut scratch = [0.0; crate::geometry::MAX_DIM];
                func(x, &mut scratch[..x.len()])
            }
        }
    }

    /// Writes `Dc(x)` into `out` (same length as `x`).
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ForcingSpec::Constant(_) => out.iter_mut().for_each(|g| *g = 0.0),
            ForcingSpec::Radial(profile) => {
                let r = norm(x);
                if r == 0.0 {
                    out.iter_mut().for_each(|g| *g = 0.0);
                } else {
                    let d = profile.derivative(r);
                    for (g, xi) in out.iter_mut().zip(x) {
                        *g = d * xi / r;
                    }
                }
            }
            ForcingSpec::Custom(func) => {
                func(x, out);
            }
        }
    }

    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        let mut g = [0.0; crate::geometry::MAX_DIM];
        self.gradient(x, &mut g[..x.len()]);
        norm(&g[..x.len()])
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
