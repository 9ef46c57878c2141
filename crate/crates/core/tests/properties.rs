use std::sync::Arc;

use levelset_core::bounds::{predicted_bounds, BoundInputs};
use levelset_core::channel::*;
use levelset_core::field::*;
use levelset_core::forcing::ForcingSpec;
use levelset_core::geometry::*;
use levelset_core::radial::*;
use levelset_core::solver::*;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn disk_grid(radius: f64, h: f64) -> Arc<GridGeometry> {
    Arc::new(build_grid(&DomainSpec::Disk { radius, dim: 2 }, h).unwrap())
}

/// Smooth test field from a few random Fourier coefficients.
fn wave(coef: [f64; 4]) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        coef[0] * (1.3 * x[0] + coef[3]).sin() + coef[1] * (2.1 * x[1]).cos() + coef[2] * x[0] * x[1]
    }
}

fn coefs() -> impl Strategy<Value = [f64; 4]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grids_have_unit_normals_and_no_orphans(
        radius in 0.5..2.0f64,
        cells in 10.0..30.0f64,
        ex in 0.5..2.0f64,
        ey in 0.5..2.0f64,
        m in 0.5..2.0f64,
        k in 0.5..1.5f64,
    ) {
        let specs = [
            (DomainSpec::Disk { radius, dim: 2 }, 2.0 * radius / cells),
            (DomainSpec::Rectangle { half_extents: vec![ex, ey] }, 2.0 * ex.min(ey) / cells),
            (DomainSpec::Channel { m, k, x_max: 2.0 }, 2.0 * k / cells),
        ];
        for (spec, h) in &specs {
            let g = build_grid(spec, *h).unwrap();
            for b in g.boundary() {
                prop_assert!((norm(&b.normal) - 1.0).abs() < 1e-12);
                prop_assert!(g.is_inside(b.source));
            }
            let faces = g.face_offsets();
            for &i in g.inside() {
                for &o in &faces {
                    let j = (i as isize + o) as usize;
                    prop_assert_ne!(g.kind(j), CellKind::Outside);
                }
            }
        }
    }

    #[test]
    fn disk_metrics_are_closed_form(radius in 0.1..10.0f64) {
        let spec = DomainSpec::Disk { radius, dim: 2 };
        let m = boundary_metrics(&spec).unwrap();
        prop_assert!((m.c0 + 1.0 / radius).abs() <= 1e-15 / radius);
        prop_assert_eq!(m.k0, 2.0 * radius);
    }

    #[test]
    fn forcing_condition_is_monotone_in_delta(c0 in -3.0..3.0f64, d1 in 0.01..2.0f64, d2 in 0.01..2.0f64) {
        let spec = DomainSpec::Disk { radius: 1.0, dim: 2 };
        let c = ForcingSpec::Constant(c0);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = check_forcing_condition(&spec, &c, lo, 16).unwrap();
        let b = check_forcing_condition(&spec, &c, hi, 16).unwrap();
        prop_assert!(a.holds || !b.holds);
    }

    #[test]
    fn ghost_fill_is_idempotent_and_bounded(coef in coefs(), h in 0.04..0.12f64) {
        let g = disk_grid(1.0, h);
        let once = neumann_fill_ghosts(&ScalarField::from_fn(g.clone(), wave(coef)));
        let twice = neumann_fill_ghosts(&once);
        prop_assert_eq!(once.values(), twice.values());
        let (lo, hi) = (once.inside_min(), once.inside_max());
        for b in g.boundary() {
            let v = once.get(b.index);
            prop_assert!(v >= lo - 1e-14 && v <= hi + 1e-14);
        }
    }

    #[test]
    fn operators_ignore_added_constants(coef in coefs(), shift in -4.0..4.0f64) {
        let g = disk_grid(1.0, 0.08);
        let u = neumann_fill_ghosts(&ScalarField::from_fn(g.clone(), wave(coef)));
        let v = neumann_fill_ghosts(&u.add_constant(shift));
        let tol = 1e-12 * (1.0 + shift.abs()) / 0.08;
        let close = |a: &ScalarField, b: &ScalarField, tol: f64| {
            g.inside().iter().all(|&i| (a.get(i) - b.get(i)).abs() <= tol)
        };
        prop_assert!(close(&upwind_gradient_magnitude(&u), &upwind_gradient_magnitude(&v), tol));
        prop_assert!(close(&w_field(&u, 0.08), &w_field(&v, 0.08), tol));
        prop_assert!(close(&bij_contract(&u, 0.08), &bij_contract(&v, 0.08), tol / 0.08));
        prop_assert!((lipschitz_x(&u) - lipschitz_x(&v)).abs() <= tol);
    }

    #[test]
    fn upwind_magnitude_is_bounded_by_lipschitz(coef in coefs()) {
        let g = disk_grid(1.0, 0.07);
        let u = neumann_fill_ghosts(&ScalarField::from_fn(g.clone(), wave(coef)));
        let bound = 2f64.sqrt() * lipschitz_x(&u) * (1.0 + 1e-12);
        let up = upwind_gradient_magnitude(&u);
        for &i in g.inside() {
            prop_assert!(up.get(i) <= bound);
        }
    }

    #[test]
    fn runs_commute_with_constants_and_respect_sup_bounds(coef in coefs(), c0 in -2.0..2.0f64, shift in -3.0..3.0f64) {
        let g = disk_grid(1.0, 0.1);
        let u0 = ScalarField::from_fn(g.clone(), wave(coef));
        let c = ForcingSpec::Constant(c0);
        let mut cfg = SolverConfig::for_grid(&g, 0.05);
        cfg.snapshot_every = 0.05;
        let a = run(&u0, &cfg, &c).unwrap();
        let b = run(&u0.add_constant(shift), &cfg, &c).unwrap();
        let t = a.diagnostics.rows.last().unwrap().t;
        let drift = c0.abs() * cfg.eps * t;
        for &i in g.inside() {
            prop_assert!((b.field.get(i) - shift - a.field.get(i)).abs() <= 1e-12 * (1.0 + shift.abs()));
            let v = a.field.get(i);
            prop_assert!(v >= u0.inside_min() - drift - 1e-12 && v <= u0.inside_max() + drift + 1e-12);
        }
        let times: Vec<f64> = a.diagnostics.rows.iter().map(|r| r.t).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn comparison_keeps_ordered_data_ordered(coef in coefs(), gap in 0.0..0.5f64, c0 in 0.0..2.0f64) {
        let g = disk_grid(1.0, 0.1);
        let low = ScalarField::from_fn(g.clone(), wave(coef));
        let bump = ScalarField::from_fn(g.clone(), |x| gap * (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
        let high = ScalarField::new(
            g.clone(),
            low.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect(),
        ).unwrap();
        let mut cfg = SolverConfig::for_grid(&g, 0.05);
        cfg.snapshot_every = 0.01;
        let report = comparison_check(&low, &high, &cfg, &ForcingSpec::Constant(c0)).unwrap();
        prop_assert!(report.holds, "{report:?}");
    }

    #[test]
    fn bounds_grow_with_data_and_forcing(
        d1 in 0.0..3.0f64, d2 in 0.0..3.0f64, extra in 0.0..2.0f64, c in 0.0..2.0f64, dc in 0.0..2.0f64,
    ) {
        let base = BoundInputs {
            du0: d1,
            d2u0: d2,
            c_sup: c,
            dc_sup: dc,
            metrics: BoundaryMetrics { c0: -1.0, k0: 2.0 },
            delta: Some(0.5),
            n: 2,
        };
        let a = predicted_bounds(base).unwrap();
        prop_assert!(a.m >= 0.0);
        for bigger in [
            BoundInputs { du0: d1 + extra, ..base },
            BoundInputs { d2u0: d2 + extra, ..base },
            BoundInputs { c_sup: c + extra, ..base },
            BoundInputs { dc_sup: dc + extra, ..base },
        ] {
            let b = predicted_bounds(bigger).unwrap();
            prop_assert!(b.m >= a.m);
            prop_assert!(b.global_l.unwrap() >= a.global_l.unwrap());
            prop_assert!(b.local_ct(1.0) >= a.local_ct(1.0));
        }
    }
}

fn toy_problem(u0: Profile) -> RadialProblem {
    RadialProblem::new(2, 1.0, RadialC::Profile(levelset_core::forcing::RadialForcing::toy(0.3, 0.6, 2).unwrap()), u0).unwrap()
}

/// Nonincreasing piecewise-linear profile from random decrements.
fn monotone_profile(steps: &[f64]) -> Profile {
    let n = steps.len();
    let r: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut u = vec![1.0];
    for s in steps {
        u.push(u.last().unwrap() - s);
    }
    Profile::Samples { r, u }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn phi_infinity_is_monotone_for_monotone_data(steps in prop::collection::vec(0.0..0.3f64, 4..10)) {
        let p = toy_problem(monotone_profile(&steps));
        let regions = classify(&p, 1e-9).unwrap();
        let mut prev = f64::INFINITY;
        for i in 1..=40 {
            let v = phi_infinity(i as f64 / 40.0, &p, &regions).unwrap();
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn d_is_identity_on_the_equal_set(r0 in 0.3..0.6f64) {
        let p = toy_problem(Profile::Constant(0.0));
        let regions = classify(&p, 1e-9).unwrap();
        prop_assert!((d_of(r0, &regions, 1.0).unwrap() - r0).abs() < 1e-6);
    }

    #[test]
    fn classification_labels_match_signs(a in 0.1..0.4f64, len in 0.1..0.4f64) {
        let p = RadialProblem::new(
            2, 1.0,
            RadialC::Profile(levelset_core::forcing::RadialForcing::toy(a, a + len, 2).unwrap()),
            Profile::Constant(0.0),
        ).unwrap();
        let regions = classify(&p, 1e-9).unwrap();
        for i in 1..200 {
            let r = i as f64 / 200.0;
            if (r - a).abs() < 1e-3 || (r - a - len).abs() < 1e-3 {
                continue;
            }
            let g = p.excess(r);
            let label = regions.label_at(r);
            let expected = if g.abs() <= 1e-6 * (1.0 / r) { Label::Equal } else if g > 0.0 { Label::Above } else { Label::Below };
            prop_assert_eq!(label, expected, "r = {}", r);
        }
    }

    #[test]
    fn radial_scheme_is_monotone_and_stable(
        steps in prop::collection::vec(0.0..0.3f64, 4..8),
        lift in 0.0..0.5f64,
        value in -2.0..2.0f64,
    ) {
        let low = toy_problem(monotone_profile(&steps));
        let bumped: Vec<f64> = steps.iter().map(|s| s * 0.5).collect();
        let high_profile = match monotone_profile(&bumped) {
            Profile::Samples { r, u } => Profile::Samples { r, u: u.iter().map(|v| v + lift).collect() },
            _ => unreachable!(),
        };
        let high = toy_problem(high_profile);
        let a = solve_radial(&low, 1.0 / 64.0, 0.5).unwrap();
        let b = solve_radial(&high, 1.0 / 64.0, 0.5).unwrap();
        let sup0 = 1.0f64.max(steps.iter().sum::<f64>() - 1.0);
        for (x, y) in a.phi.iter().zip(&b.phi) {
            prop_assert!(x <= y);
            prop_assert!(x.abs() <= sup0 + 1e-12);
        }
        let flat = solve_radial(&toy_problem(Profile::Constant(value)), 1.0 / 64.0, 0.5).unwrap();
        prop_assert!(flat.phi.iter().all(|&v| v == value));
    }

    #[test]
    fn eta1_is_ordered_in_its_start(r0 in 0.05..0.95f64, gap in 0.0..0.3f64) {
        let p = toy_problem(Profile::Constant(0.0));
        let r1 = (r0 + gap).min(1.0);
        let lo = eta1_curve(r0, &p, 2.0).unwrap();
        let hi = eta1_curve(r1, &p, 2.0).unwrap();
        for i in 0..=40 {
            let s = i as f64 * 0.05;
            prop_assert!(lo.at(s) <= hi.at(s) + 1e-9);
        }
    }

    #[test]
    fn channel_radii_and_right_angles(m in 0.5..2.0f64, k in 0.5..2.0f64, frac in 0.3..0.98f64) {
        let params = ChannelParams::new(m, k).unwrap();
        let c = frac / channel_r_min(&params);
        let (a1, a2) = solve_radii(&params, c).unwrap();
        prop_assert!((params.r(a1) * c - 1.0).abs() < 1e-10);
        prop_assert!((params.r(a2) * c - 1.0).abs() < 1e-10);
        for i in 1..=100 {
            let a = 3.0 * a2 * i as f64 / 100.0;
            prop_assert!(right_angle_residual(&params, a) <= 1e-12);
        }
    }

    #[test]
    fn barrier_masks_are_nested(t in 0.0..20.0f64) {
        let params = ChannelParams::new(1.0, 1.0).unwrap();
        let c = 0.9 / channel_r_min(&params);
        let (a1, a2) = solve_radii(&params, c).unwrap();
        let l = 0.3 * (a2 - a1);
        let delta = delta0(&params, a1, l, l).unwrap() / 2.0;
        let (sub, sup) = BarrierSchedule::pair(&params, c, l, l, delta).unwrap();
        let grid = Arc::new(build_grid(&params.domain(1.6), 0.05).unwrap());
        let lo = build_u_mask(&params, barrier_a(&sub, t), grid.clone()).unwrap();
        let hi = build_u_mask(&params, barrier_a(&sup, t), grid.clone()).unwrap();
        for &i in grid.inside() {
            prop_assert!(!lo.contains(i) || hi.contains(i));
        }
    }
}
