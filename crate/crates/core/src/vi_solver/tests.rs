use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::closed_form::classify_case;
use crate::model::validate_params;
use crate::report::any_failed;

fn desk() -> ModelParams {
    validate_params(0.08, 0.05, 0.3, 1.0, 0.1).unwrap()
}

fn desk_surface() -> &'static (ValueSurface, FreeBoundaries) {
    static CELL: OnceLock<(ValueSurface, FreeBoundaries)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = desk();
        let s = solve(&p, &GridSpec::desk(&p, 400, 200)).unwrap();
        let fb = extract_boundaries(&s).unwrap();
        (s, fb)
    })
}

#[test]
fn grid_validation() {
    let p = desk();
    let g = GridSpec::desk(&p, 64, 32);
    assert!(g.validate().is_ok());
    assert!(matches!(GridSpec { n_z: 8, ..g }.validate(), Err(Error::InvalidGrid(_))));
    assert!(matches!(GridSpec { n_y: 15, ..g }.validate(), Err(Error::InvalidGrid(_))));
    assert!(matches!(GridSpec { y_min: 0.5, ..g }.validate(), Err(Error::InvalidGrid(_))));
    assert!(matches!(GridSpec { z_max: g.z_min, ..g }.validate(), Err(Error::InvalidGrid(_))));
    assert!(matches!(solve(&p, &GridSpec { n_y: 4, ..g }), Err(Error::InvalidGrid(_))));
}

#[test]
fn grid_rows_are_uniform_in_logit() {
    let g = GridSpec::desk(&desk(), 64, 33);
    assert_eq!(g.y(0), g.y_min);
    assert_eq!(g.y(32), 1.0 - g.y_min);
    assert!((g.y(16) - 0.5).abs() < 1e-15);
    for j in 1..32 {
        assert!((logit(g.y(j + 1)) - logit(g.y(j)) - g.dxi()).abs() < 1e-9);
    }
    assert_eq!(g.z(63), g.z_max);
}

#[test]
fn desk_grid_covers_asset_range_on_every_row() {
    let p = desk();
    let g = GridSpec::desk(&p, 400, 200);
    let (lo, hi) = g.common_asset_range(&p);
    assert!((lo / 1e-2 - 1.0).abs() < 1e-9);
    assert!((hi / 1e3 - 1.0).abs() < 1e-9);
}

#[test]
fn substeps_keep_discount_per_step_small() {
    let p = desk();
    let g = GridSpec::desk(&p, 400, 200);
    let st = SolverSettings::default();
    let m = st.substeps_for(&p, &g);
    let dt = g.dz() / (p.k().abs() * m as f64);
    assert!(p.r() * dt <= st.step_target + 1e-15);
    let fixed = SolverSettings {
        substeps: Some(3),
        ..st
    };
    assert_eq!(fixed.substeps_for(&p, &g), 3);
}

#[test]
fn surface_respects_obstacles_and_labels() {
    let (s, _) = desk_surface();
    let g = s.grid;
    let tol = 1e-9 * s.params.strike();
    let tol_active = s.settings.tol_active * s.params.strike();
    for i in 0..g.n_z {
        for j in 0..g.n_y {
            assert!(s.gap_lower(i, j) >= -tol && s.gap_upper(i, j) >= -tol);
            let x = s.asset(i, j);
            match s.region_at(i, j) {
                Region::S1 => assert!(x > 1.0 && s.gap_lower(i, j) <= tol_active),
                Region::S2 => assert!(x >= 1.0 && s.gap_upper(i, j) <= tol_active),
                Region::C => {}
            }
        }
    }
    assert!(s.count(Region::S1) > 0 && s.count(Region::S2) > 0);
}

#[test]
fn value_is_positive_and_below_cancellation_payoff() {
    let (s, _) = desk_surface();
    let g = s.grid;
    for i in 0..g.n_z {
        for j in 1..g.n_y - 1 {
            let v = s.value(i, j);
            // far below the strike the value drops under the relaxation tolerance
            assert!(v >= 0.0 && (v > 0.0 || s.asset(i, j) < 0.1), "v = {v} at ({i}, {j})");
            assert!(v <= s.upper(i, j) + 1e-9);
        }
    }
}

#[test]
fn lateral_rows_carry_edge_values() {
    let (s, _) = desk_surface();
    let p = s.params;
    let v0 = edge_value(EdgeSide::Y0, &p).unwrap();
    let v1 = edge_value(EdgeSide::Y1, &p).unwrap();
    let ny = s.grid.n_y;
    for i in 0..s.grid.n_z {
        let (xb, xt) = (s.asset(i, 0), s.asset(i, ny - 1));
        assert!((s.value(i, 0) - v0.value(xb)).abs() <= 1e-9 * xb.max(1.0));
        assert!((s.value(i, ny - 1) - v1.value(xt)).abs() <= 1e-9 * xt.max(1.0));
    }
}

#[test]
fn geometry_suite_passes_on_desk() {
    let (s, fb) = desk_surface();
    let checks = geometry_suite(s, fb);
    let failed: Vec<_> = checks.iter().filter(|c| c.verdict.is_failure()).collect();
    assert!(!any_failed(&checks), "{failed:#?}");
}

#[test]
fn top_row_buyer_boundary_near_complete_information_threshold() {
    let (s, fb) = desk_surface();
    let target = classify_case(&s.params).unwrap().buyer_boundary_y1();
    let top = fb.b1[s.grid.n_y - 2].unwrap();
    assert!((top / target - 1.0).abs() < 0.01, "b1 = {top}, threshold = {target}");
}

#[test]
fn boundaries_grow_toward_the_uninformed_edge() {
    let (s, fb) = desk_surface();
    let mid = s.grid.n_y / 2;
    let (b1_low, b2_low) = (fb.b1[1].unwrap(), fb.b2[1].unwrap());
    assert!(b2_low >= 5.0 * fb.b2[mid].unwrap());
    assert!(b1_low >= 5.0 * fb.b1[mid].unwrap());
    assert!(b1_low >= b2_low);
}

#[test]
fn exceptional_point_sits_on_the_kink_curve() {
    let (_, fb) = desk_surface();
    let (zk, yk) = fb.exceptional_point().unwrap();
    assert_eq!(Some(zk), fb.z_k);
    assert!((fb.yk_at(zk) - yk).abs() < 1e-12);
    assert!(fb.c2_at(zk).unwrap().is_some());
    assert!(fb.c2_at(fb.grid.z_max).unwrap().is_none());
    assert!(matches!(fb.c1_at(fb.grid.z_max + 1.0), Err(Error::OutOfDomain { .. })));
}

#[test]
fn pde_residual_small_off_the_obstacles() {
    let (s, _) = desk_surface();
    assert!(pde_residual(s) < 1e-6);
}

#[test]
fn generator_signs_on_stopping_sets() {
    let (s, _) = desk_surface();
    let rep = obstacle_generator_report(s);
    assert!(rep.s1_nodes > 0 && rep.s2_nodes > 0);
    assert_eq!(rep.s1_violations, 0);
    assert_eq!(rep.s2_violations, 0);
}

#[test]
fn penalty_above_strike_leaves_seller_region_empty() {
    let p = validate_params(0.08, 0.05, 0.3, 1.0, 1.5).unwrap();
    let s = solve(&p, &GridSpec::desk(&p, 160, 80)).unwrap();
    assert_eq!(s.count(Region::S2), 0);
    let fb = extract_boundaries(&s).unwrap();
    assert!(fb.s2_empty());
    assert!(fb.b2.iter().all(Option::is_none));
    assert!(fb.exceptional_point().is_none());
}

#[test]
fn negative_drift_solve_marches_upward() {
    let p = validate_params(0.05, 0.05, 0.3, 1.0, 0.1).unwrap();
    assert!(p.k() < 0.0);
    let s = solve(&p, &GridSpec::desk(&p, 400, 200)).unwrap();
    assert_eq!(s.start_index(), 0);
    let fb = extract_boundaries(&s).unwrap();
    assert!(!any_failed(&geometry_suite(&s, &fb)));
    let target = classify_case(&p).unwrap().buyer_boundary_y1();
    let top = fb.b1[s.grid.n_y - 2].unwrap();
    assert!((top / target - 1.0).abs() < 0.01, "b1 = {top}, threshold = {target}");
}

#[test]
fn short_domain_is_reported() {
    let p = desk();
    let g = GridSpec::covering(&p, 64, 32, DEFAULT_Y_MIN, 1e-2, 0.5);
    assert!(matches!(solve(&p, &g), Err(Error::DomainTooSmall { .. })));
}

#[test]
fn capped_surface_is_flat_above_the_cap() {
    let p = desk();
    let g = GridSpec::desk(&p, 160, 80);
    let s = solve_truncated(&p, &g, 4.0).unwrap();
    for i in 0..g.n_z {
        for j in 0..g.n_y {
            if s.asset(i, j) >= 4.0 {
                assert!((s.value(i, j) - 3.0).abs() < 1e-9, "v = {} at F = {}", s.value(i, j), s.asset(i, j));
            }
        }
    }
    assert!(matches!(solve_truncated(&p, &g, 1.0), Err(Error::InvalidGrid(_))));
}

#[test]
fn ladder_is_ordered_and_dominated() {
    let p = desk();
    let full = solve(&p, &GridSpec::desk(&p, 160, 80)).unwrap();
    let rep = truncation_ladder(&full, &[2.0, 4.0, 8.0]).unwrap();
    assert_eq!(rep.rungs.len(), 3);
    assert!(rep.max_excess() <= rep.slack, "{rep:?}");
    assert!(truncation_ladder(&full, &[4.0, 2.0]).is_err());
}

#[test]
fn edge_agreement_shrinks_with_rows() {
    let p = desk();
    let coarse = edge_agreement(&solve(&p, &GridSpec::desk(&p, 160, 50)).unwrap()).unwrap();
    let fine = edge_agreement(&solve(&p, &GridSpec::desk(&p, 160, 100)).unwrap()).unwrap();
    assert!(fine.nodes > 0);
    assert!(fine.worst() < coarse.worst());
}

#[test]
fn interpolation_reproduces_nodes_and_rejects_outside_points() {
    let (s, _) = desk_surface();
    let g = s.grid;
    let (i, j) = (120, 40);
    let (x, y) = (s.asset(i, j), g.y(j));
    let m = surface_to_xy(s, &[x, 1e15], &[y]);
    assert!((m[0][0].unwrap() - s.value(i, j)).abs() < 1e-9 * x.max(1.0));
    assert!(m[1][0].is_none());
    assert!(surface_to_xy(s, &[1.0], &[0.0])[0][0].is_none());
}

#[test]
fn smooth_fit_jumps_are_measured_on_both_boundaries() {
    let (s, fb) = desk_surface();
    let rep = smoothfit_report(s, fb);
    assert!(rep.mean_jump_c1.is_some() && rep.mean_jump_c2.is_some());
    assert!(rep.excluded_point.is_some());
    assert!(rep.s2_interior_slope < 1e-9);
    let ratios = SmoothFitReport::decay_ratios(&[rep.clone(), rep], BoundarySide::C1);
    assert_eq!(ratios, vec![Some(1.0)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sandwich_and_z_monotonicity_hold(
        r in 0.06..0.12f64,
        delta0 in 0.03..0.06f64,
        sigma in 0.25..0.35f64,
        penalty in 0.05..0.5f64,
    ) {
        let p = validate_params(r, delta0, sigma, 1.0, penalty).unwrap();
        prop_assume!(p.k() > 0.01);
        let s = solve(&p, &GridSpec::desk(&p, 120, 60)).unwrap();
        let g = s.grid;
        let tol = 1e-9;
        let (lo, hi) = g.common_asset_range(&p);
        for i in 0..g.n_z {
            for j in 0..g.n_y {
                prop_assert!(s.gap_lower(i, j) >= -tol && s.gap_upper(i, j) >= -tol);
                let inside = |i: usize| (lo..=hi).contains(&s.asset(i, j));
                if i + 1 < g.n_z && inside(i) && inside(i + 1) {
                    prop_assert!(s.value(i + 1, j) >= s.value(i, j) - tol);
                }
            }
        }
    }
}
