//! A-priori constants for the regularized flow: the time-derivative bound `M`, the global
//! gradient bound under the forcing condition and the local-in-time gradient bound.

use crate::error::{param, Result};
use crate::geometry::BoundaryMetrics;

/// Sup norms entering the bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    /// `‖Du₀‖∞`.
    pub du0: f64,
    /// `‖D²u₀‖∞`, largest Hessian entry.
    pub d2u0: f64,
    /// `‖c‖∞`.
    pub c_sup: f64,
    /// `‖Dc‖∞`.
    pub dc_sup: f64,
    pub metrics: BoundaryMetrics,
    /// Margin of the forcing condition; `None` when it is not claimed.
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictedBounds {
    /// Bound on `|u_t|`.
    pub m: f64,
    /// Global gradient bound; present only when a forcing margin `δ` was supplied.
    pub global_l: Option<f64>,
    /// Growth rate `M′` of the local bound.
    pub m_prime: f64,
    /// `C_T` at `T = 0`.
    pub local_base: f64,
    pub inputs: BoundInputs,
}

impl PredictedBounds {
    /// `C_T = e^{M′T} · local_base`.
    pub fn local_ct(&self, t: f64) -> f64 {
        (self.m_prime * t).exp() * self.local_base
    }
}

pub fn predicted_bounds(inputs: BoundInputs) -> Result<PredictedBounds> {
    let BoundInputs {
        n,
        du0,
        d2u0,
        c_sup,
        dc_sup,
        metrics,
        delta,
    } = inputs;
    if n < 1 {
        return Err(param("n", "dimension must be positive"));
    }
    for (name, v) in [("du0", du0), ("d2u0", d2u0), ("c_sup", c_sup), ("dc_sup", dc_sup)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(param(name, format!("must be a finite sup norm, got {v}")));
        }
    }
    if !(metrics.k0 > 0.0) {
        return Err(param("k0", "must be positive"));
    }
    let nf = n as f64;
    let (c0, k0) = (metrics.c0, metrics.k0);

    let m = nf * nf * d2u0 + c_sup * (1.0 + du0 * du0).sqrt();

    let global_l = match delta {
        None => None,
        Some(d) if !(d > 0.0 && d.is_finite()) => {
            return Err(param("delta", format!("must be positive, got {d}")));
        }
        Some(d) => {
            let start = du0 + 1.0;
            let interior = |delta: f64| 2.0 * m * c_sup / (nf * delta);
            Some(if c0 > 0.0 {
                (c0 * k0 / 4.0 + 1.0) * start.max(interior(d))
            } else if c0 == 0.0 {
                let d1 = d / (2.0 * (c_sup + 2.0 * nf / k0));
                (d1 * k0 / 4.0 + 1.0) * start.max(interior(0.5 * d))
            } else {
                start.max(interior(d))
            })
        }
    };

    let m_prime = 2.0 * nf * (c0.abs() + 1.0) / k0 + dc_sup + (c0.abs() + 1.0) * c_sup + 1.0;
    // the boundary multiplier only enters when C₀ ≥ 0
    let factor = if c0 >= 0.0 {
        (c0 + 1.0) * k0 / 4.0 + 1.0
    } else {
        1.0
    };
    let local_base = factor * (du0 + 1.0);

    Ok(PredictedBounds {
        m,
        global_l,
        m_prime,
        local_base,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_inputs() -> BoundInputs {
        BoundInputs {
            n: 2,
            du0: 1.0,
            d2u0: 1.0,
            c_sup: 2.0,
            dc_sup: 0.0,
            metrics: BoundaryMetrics { c0: -1.0, k0: 2.0 },
            delta: Some(1.0),
        }
    }

    #[test]
    fn disk_example() {
        let b = predicted_bounds(disk_inputs()).unwrap();
        let m = 4.0 + 2.0 * 2f64.sqrt();
        assert!((b.m - m).abs() < 1e-12);
        assert!((b.global_l.unwrap() - 2.0 * m).abs() < 1e-12);
    }

    #[test]
    fn zero_data_zero_m() {
        let b = predicted_bounds(BoundInputs {
            du0: 0.0,
            d2u0: 0.0,
            c_sup: 0.0,
            ..disk_inputs()
        })
        .unwrap();
        assert_eq!(b.m, 0.0);
    }

    #[test]
    fn local_bound_at_zero_ignores_c() {
        let metrics = BoundaryMetrics { c0: 0.5, k0: 1.0 };
        let a = predicted_bounds(BoundInputs {
            metrics,
            ..disk_inputs()
        })
        .unwrap();
        let b = predicted_bounds(BoundInputs {
            metrics,
            c_sup: 9.0,
            dc_sup: 3.0,
            ..disk_inputs()
        })
        .unwrap();
        let expected = (1.5 * 1.0 / 4.0 + 1.0) * 2.0;
        assert!((a.local_ct(0.0) - expected).abs() < 1e-12);
        assert_eq!(a.local_ct(0.0), b.local_ct(0.0));
        assert!(b.local_ct(1.0) > a.local_ct(1.0));
    }

    #[test]
    fn branches_and_rejections() {
        let flat = predicted_bounds(BoundInputs {
            metrics: BoundaryMetrics { c0: 0.0, k0: 2.0 },
            ..disk_inputs()
        })
        .unwrap();
        let m = flat.m;
        let d1 = 1.0 / (2.0 * (2.0 + 2.0));
        let expected = (d1 * 2.0 / 4.0 + 1.0) * (2.0 * m * 2.0 / (2.0 * 0.5));
        assert!((flat.global_l.unwrap() - expected).abs() < 1e-12);
        assert!(predicted_bounds(BoundInputs {
            delta: Some(0.0),
            ..disk_inputs()
        })
        .is_err());
        let none = predicted_bounds(BoundInputs {
            delta: None,
            ..disk_inputs()
        })
        .unwrap();
        assert!(none.global_l.is_none());
    }

    #[test]
    fn monotone_in_inputs() {
        let base = predicted_bounds(disk_inputs()).unwrap();
        for bigger in [
            BoundInputs { du0: 2.0, ..disk_inputs() },
            BoundInputs { d2u0: 3.0, ..disk_inputs() },
            BoundInputs { c_sup: 3.0, ..disk_inputs() },
            BoundInputs { dc_sup: 1.0, ..disk_inputs() },
        ] {
            let b = predicted_bounds(bigger).unwrap();
            assert!(b.m >= base.m);
            assert!(b.global_l.unwrap() >= base.global_l.unwrap());
            assert!(b.local_ct(1.0) >= base.local_ct(1.0));
        }
    }
}
