use serde::Serialize;

use super::{FreeBoundaries, Region, ValueSurface};
use crate::error::{Error, Result};
use crate::model::logit;
use crate::report::{CheckOutcome, Verdict};

/// Rows closer than this many `y_min` to a lateral edge are in the boundary
/// layer of the lateral data.
pub const LATERAL_LAYER: f64 = 3.0;

/// Residual of the implicit step on nodes away from both obstacles, in value per unit
/// time: `(u - u_prev) / dt + r u - L u - f` with `L` the y-generator and `f`
/// the source carried by the solved variable.
pub fn pde_residual(s: &ValueSurface) -> f64 {
    let g = s.grid;
    let p = s.params;
    let (nz, ny) = (g.n_z, g.n_y);
    let h = g.dxi();
    let a2 = p.signal() * p.signal();
    let dt = s.stats.dt;
    let start = s.start_index();
    let tol_active = s.settings.tol_active * p.strike();
    let mut worst: f64 = 0.0;
    for i in 0..nz {
        if i == start {
            continue;
        }
        for j in 1..ny - 1 {
            if s.gap_lower(i, j) <= tol_active || s.gap_upper(i, j) <= tol_active {
                continue;
            }
            let k = s.idx(i, j);
            let (vm, v0, vp) = (s.u[k - 1], s.u[k], s.u[k + 1]);
            let drift = 0.5 * a2 * (0.5 * g.xi(j)).tanh();
            let gen = 0.5 * a2 * (vp - 2.0 * v0 + vm) / (h * h) + drift * (vp - vm) / (2.0 * h);
            let source = if s.cap.is_none() {
                p.r() * p.strike() - p.delta0() * g.y(j) * s.asset(i, j)
            } else {
                0.0
            };
            let res = (v0 - s.upstream[k]) / dt + p.r() * v0 - gen - source;
            worst = worst.max(res.abs());
        }
    }
    worst
}

/// Sign of the generator applied to the obstacles inside the stopping
/// regions: `(k d/dz + L - r) H1 <= 0` on interior nodes of `S1` and
/// `(k d/dz + L - r) H2 >= 0` on interior nodes of `S2`. Values are in units
/// of the strike per unit time.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorReport {
    pub s1_nodes: usize,
    pub s1_max: f64,
    pub s1_violations: usize,
    pub s2_nodes: usize,
    pub s2_min: f64,
    pub s2_violations: usize,
}

pub fn obstacle_generator_report(s: &ValueSurface) -> GeneratorReport {
    let g = s.grid;
    let p = s.params;
    let (nz, ny) = (g.n_z, g.n_y);
    let (h, dz) = (g.dxi(), g.dz());
    let a2 = p.signal() * p.signal();
    let strike = p.strike();
    let tol = 1e-12;
    let mut out = GeneratorReport {
        s1_nodes: 0,
        s1_max: f64::NEG_INFINITY,
        s1_violations: 0,
        s2_nodes: 0,
        s2_min: f64::INFINITY,
        s2_violations: 0,
    };
    let same = |i: usize, j: usize, r: Region| {
        s.region_at(i, j) == r
            && s.region_at(i - 1, j) == r
            && s.region_at(i + 1, j) == r
            && s.region_at(i, j - 1) == r
            && s.region_at(i, j + 1) == r
    };
    // obstacles in the solved variable, plus the source it carries
    let shifted = s.cap.is_none();
    let obstacle = |i: usize, j: usize, upper: bool| {
        let base = if shifted {
            (strike - s.asset(i, j)).max(0.0)
        } else {
            s.lower(i, j)
        };
        if upper {
            base + p.penalty()
        } else {
            base
        }
    };
    for i in 1..nz - 1 {
        for j in 1..ny - 1 {
            let upper = if same(i, j, Region::S1) {
                false
            } else if same(i, j, Region::S2) {
                true
            } else {
                continue;
            };
            let o = obstacle(i, j, upper);
            let (om, op) = (obstacle(i, j - 1, upper), obstacle(i, j + 1, upper));
            let drift = 0.5 * a2 * (0.5 * g.xi(j)).tanh();
            let source = if shifted {
                p.r() * strike - p.delta0() * g.y(j) * s.asset(i, j)
            } else {
                0.0
            };
            let gen = (p.k() * (obstacle(i + 1, j, upper) - obstacle(i - 1, j, upper)) / (2.0 * dz)
                + 0.5 * a2 * (op - 2.0 * o + om) / (h * h)
                + drift * (op - om) / (2.0 * h)
                - p.r() * o
                + source)
                / strike;
            if upper {
                out.s2_nodes += 1;
                out.s2_min = out.s2_min.min(gen);
                if gen < -tol {
                    out.s2_violations += 1;
                }
            } else {
                out.s1_nodes += 1;
                out.s1_max = out.s1_max.max(gen);
                if gen > tol {
                    out.s1_violations += 1;
                }
            }
        }
    }
    out
}

/// Largest decrease of a boundary curve between consecutive z nodes, in
/// `logit(y)` units.
fn largest_drop(curve: &[Option<f64>]) -> f64 {
    let mut last: Option<f64> = None;
    let mut worst: f64 = 0.0;
    for c in curve.iter().flatten().map(|&c| logit(c)) {
        if let Some(l) = last {
            worst = worst.max(l - c);
        }
        last = Some(c);
    }
    worst
}

/// Geometric properties every solve must satisfy, one outcome per property.
pub fn geometry_suite(s: &ValueSurface, fb: &FreeBoundaries) -> Vec<CheckOutcome> {
    let g = s.grid;
    let p = s.params;
    let (nz, ny) = (g.n_z, g.n_y);
    let strike = p.strike();
    let proj_tol = 1e-9 * strike;
    let mut out = Vec::new();

    let mut sandwich: f64 = 0.0;
    for i in 0..nz {
        for j in 0..ny {
            sandwich = sandwich.max(-s.gap_lower(i, j)).max(-s.gap_upper(i, j));
        }
    }
    out.push(CheckOutcome::at_most("obstacle_sandwich", sandwich, proj_tol));

    // curves are located to within a fraction of a cell: logit(c) to a quarter
    // of a y cell, ln b to half of one (a y cell spans `ratio * dxi` in ln x)
    let y_slack = 0.25 * g.dxi();
    out.push(
        CheckOutcome::at_most("c1_nondecreasing", largest_drop(&fb.c1), y_slack)
            .with_detail("largest decrease of logit(c1) between consecutive z nodes"),
    );
    out.push(CheckOutcome::at_most("c2_nondecreasing", largest_drop(&fb.c2), y_slack));

    let x_slack = 0.5 * p.ratio() * g.dxi();
    let log_rise = |curve: &[Option<f64>]| {
        let mut last: Option<f64> = None;
        let mut worst: f64 = 0.0;
        for c in curve.iter().skip(1).take(ny - 2).flatten() {
            if let Some(l) = last {
                worst = worst.max((c / l).ln());
            }
            last = Some(*c);
        }
        worst
    };
    out.push(
        CheckOutcome::at_most("b1_nonincreasing", log_rise(&fb.b1), x_slack)
            .with_detail("largest increase of ln b1 between consecutive rows"),
    );
    out.push(CheckOutcome::at_most("b2_nonincreasing", log_rise(&fb.b2), x_slack));
    let x_rel = 1e-3;

    let mut order_gap: f64 = 0.0;
    for j in 0..ny {
        if let (Some(b1), Some(b2)) = (fb.b1[j], fb.b2[j]) {
            order_gap = order_gap.max((b2 - b1) / b1);
        }
    }
    out.push(CheckOutcome::at_most("b1_above_b2", order_gap, x_rel));

    let a1_level = p.r() * strike / p.delta0();
    let mut a1_gap: f64 = 0.0;
    for j in 1..ny - 1 {
        if let Some(b1) = fb.b1[j] {
            a1_gap = a1_gap.max(1.0 - b1 * g.y(j) / a1_level);
        }
    }
    out.push(
        CheckOutcome::at_most("b1_times_y_above_rK_over_delta0", a1_gap, x_rel)
            .with_detail("largest relative shortfall of b1(y) y below r K / delta0"),
    );

    let a2_level = p.r() * (strike - p.penalty()) / p.delta0();
    let mut a2_gap: f64 = 0.0;
    for j in 1..ny - 1 {
        if let Some(b2) = fb.b2[j] {
            if b2 > strike {
                a2_gap = a2_gap.max(b2 * g.y(j) / a2_level - 1.0);
            }
        }
    }
    if a2_level > 0.0 {
        out.push(CheckOutcome::at_most("b2_times_y_below_r_K_minus_eps_over_delta0", a2_gap, x_rel));
    } else {
        out.push(CheckOutcome::skipped(
            "b2_times_y_below_r_K_minus_eps_over_delta0",
            "penalty at least the strike",
        ));
    }

    let missing = (1..ny - 1).filter(|&j| fb.b1[j].is_none()).count();
    let nonpositive = fb.c1.iter().flatten().filter(|&&c| !(c > 0.0)).count();
    out.push(CheckOutcome::flag(
        "exercise_region_positive",
        missing == 0 && nonpositive == 0,
        format!("{missing} interior rows without exercise nodes, {nonpositive} nonpositive c1 values"),
    ));

    let s2_empty = s.count(Region::S2) == 0;
    let expect_empty = p.penalty() >= strike;
    out.push(CheckOutcome::flag(
        "s2_empty_iff_penalty_at_least_strike",
        s2_empty == expect_empty,
        format!("S2 nodes: {}, penalty/strike = {}", s.count(Region::S2), p.penalty() / strike),
    ));

    if s.cap.is_none() && p.assumption_ratio_ok() {
        // inside the asset range every row covers, and rows within a few
        // `y_min` of the lateral edges are left out: beyond either, the
        // lateral data stands in for the edges and leaves a boundary layer
        let (f_lo, f_hi) = g.common_asset_range(&p);
        let layer = LATERAL_LAYER * g.y_min;
        let inside = |i: usize, j: usize| (f_lo..=f_hi).contains(&s.asset(i, j));
        let in_rows = |j: usize| g.y(j) >= layer && 1.0 - g.y(j) >= layer;
        let mut z_drop: f64 = 0.0;
        let mut y_drop: f64 = 0.0;
        for i in 0..nz {
            for j in 0..ny {
                if i + 1 < nz && inside(i, j) && inside(i + 1, j) {
                    z_drop = z_drop.max(s.value(i, j) - s.value(i + 1, j));
                }
                if j + 1 < ny && in_rows(j) && in_rows(j + 1) && inside(i, j) && inside(i, j + 1) {
                    y_drop = y_drop.max(s.w(i, j) - s.w(i, j + 1));
                }
            }
        }
        out.push(CheckOutcome::at_most("v_nondecreasing_in_z", z_drop, proj_tol));
        out.push(CheckOutcome::at_most("w_nondecreasing_in_y", y_drop, proj_tol));
    } else {
        let why = if s.cap.is_some() {
            "truncated game"
        } else {
            "sigma^2/delta0 < 1"
        };
        out.push(CheckOutcome::skipped("v_nondecreasing_in_z", why));
        out.push(CheckOutcome::skipped("w_nondecreasing_in_y", why));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySide {
    C1,
    C2,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothFitSlice {
    pub z: f64,
    pub side: BoundarySide,
    pub y: f64,
    /// Slope of `w` in `y` on the continuation side minus the slope on the stopped side.
    pub jump: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothFitReport {
    pub dy_mid: f64,
    pub slices: Vec<SmoothFitSlice>,
    pub mean_jump_c1: Option<f64>,
    pub mean_jump_c2: Option<f64>,
    /// `(z_K, y_K(z_K))` when `k > 0`; never measured.
    pub excluded_point: Option<(f64, f64)>,
    /// Largest `|w_y|` deep inside `S2`, where `w` equals the penalty.
    pub s2_interior_slope: f64,
}

/// One-sided first differences of `w` in `y` at the two boundaries, on every
/// slice whose boundary lies in `y in [0.1, 0.9]`.
pub fn smoothfit_report(s: &ValueSurface, fb: &FreeBoundaries) -> SmoothFitReport {
    let g = s.grid;
    let (nz, ny) = (g.n_z, g.n_y);
    let excluded = fb.exceptional_point();
    let near_excluded = |z: f64| excluded.is_some_and(|(zk, _)| (z - zk).abs() <= 3.0 * g.dz());
    let slope = |i: usize, a: usize, b: usize| (s.w(i, b) - s.w(i, a)) / (g.y(b) - g.y(a));
    let mut slices = Vec::new();
    let mut s2_interior_slope: f64 = 0.0;
    for i in 0..nz {
        let z = g.z(i);
        if near_excluded(z) {
            continue;
        }
        if let Some(j1) = (2..ny - 2).rev().find(|&j| s.region_at(i, j) == Region::S1) {
            let y = g.y(j1);
            if (0.1..=0.9).contains(&y)
                && s.region_at(i, j1 + 1) == Region::C
                && s.region_at(i, j1 - 1) == Region::S1
            {
                let jump = slope(i, j1 + 1, j1 + 2) - slope(i, j1 - 1, j1);
                slices.push(SmoothFitSlice {
                    z,
                    side: BoundarySide::C1,
                    y,
                    jump: jump.abs(),
                });
            }
        }
        if let Some(j2) = (2..ny - 2).find(|&j| s.region_at(i, j) == Region::S2) {
            let y = g.y(j2);
            if (0.1..=0.9).contains(&y)
                && s.region_at(i, j2 - 1) == Region::C
                && s.region_at(i, j2 + 1) == Region::S2
            {
                let jump = slope(i, j2 - 2, j2 - 1) - slope(i, j2, j2 + 1);
                slices.push(SmoothFitSlice {
                    z,
                    side: BoundarySide::C2,
                    y,
                    jump: jump.abs(),
                });
            }
        }
        for j in 1..ny - 2 {
            if s.region_at(i, j) == Region::S2
                && s.region_at(i, j + 1) == Region::S2
                && s.asset(i, j + 1) >= s.params.strike()
            {
                s2_interior_slope = s2_interior_slope.max(slope(i, j, j + 1).abs());
            }
        }
    }
    let mean = |side: BoundarySide| {
        let v: Vec<f64> = slices.iter().filter(|s| s.side == side).map(|s| s.jump).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mid = ny / 2;
    SmoothFitReport {
        dy_mid: g.y(mid + 1) - g.y(mid),
        mean_jump_c1: mean(BoundarySide::C1),
        mean_jump_c2: mean(BoundarySide::C2),
        slices,
        excluded_point: excluded,
        s2_interior_slope,
    }
}

impl SmoothFitReport {
    /// Ratios of successive mean jumps over a refinement ladder.
    pub fn decay_ratios(reports: &[SmoothFitReport], side: BoundarySide) -> Vec<Option<f64>> {
        let means: Vec<Option<f64>> = reports
            .iter()
            .map(|r| match side {
                BoundarySide::C1 => r.mean_jump_c1,
                BoundarySide::C2 => r.mean_jump_c2,
            })
            .collect();
        means
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            })
            .collect()
    }

    pub fn decay_verdict(ratios: &[Option<f64>], lo: f64, hi: f64) -> Verdict {
        if ratios.is_empty() || ratios.iter().any(|r| r.is_none()) {
            return Verdict::Skipped;
        }
        Verdict::from_bool(ratios.iter().flatten().all(|&r| r >= lo && r <= hi))
    }
}

/// Values at `(x, y)` pairs by bilinear interpolation in `(z, logit y)`;
/// `None` where the pair maps outside the solved domain.
pub fn surface_to_xy(s: &ValueSurface, xs: &[f64], ys: &[f64]) -> Vec<Vec<Option<f64>>> {
    xs.iter()
        .map(|&x| ys.iter().map(|&y| value_at(s, x, y).ok()).collect())
        .collect()
}

/// Interpolated value at a price and posterior inside the solved domain.
pub fn value_at(s: &ValueSurface, x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::SingularTransform { y });
    }
    if !(x > 0.0) {
        return Err(Error::OutOfDomain {
            what: "x",
            value: x,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let xi = logit(y);
    let z = x.ln() + s.params.ratio() * xi;
    value_at_z(s, z, xi)
}

/// Bilinear interpolation in `(z, logit y)`.
pub fn value_at_z(s: &ValueSurface, z: f64, xi: f64) -> Result<f64> {
    let g = s.grid;
    let xm = g.xi_max();
    if !(xi >= -xm && xi <= xm) {
        return Err(Error::OutOfDomain {
            what: "logit(y)",
            value: xi,
            lo: -xm,
            hi: xm,
        });
    }
    if !(z >= g.z_min && z <= g.z_max) {
        return Err(Error::OutOfDomain {
            what: "z",
            value: z,
            lo: g.z_min,
            hi: g.z_max,
        });
    }
    let tz = (z - g.z_min) / g.dz();
    let i = (tz.floor() as usize).min(g.n_z - 2);
    let wz = tz - i as f64;
    let ty = (xi + xm) / g.dxi();
    let j = (ty.floor() as usize).min(g.n_y - 2);
    let wy = ty - j as f64;
    Ok((1.0 - wz) * ((1.0 - wy) * s.value(i, j) + wy * s.value(i, j + 1))
        + wz * ((1.0 - wy) * s.value(i + 1, j) + wy * s.value(i + 1, j + 1)))
}
