//! Named checks shared by the `check` subcommand and the acceptance target.
//! Each returns its outcomes together with the report they were read from.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::closed_form::{alpha0_residual, alpha1_beta1_residuals, classify_case, CaseId};
use crate::error::Result;
use crate::game_eval::{
    default_horizon, martingale_check, regularity_probe, saddle_check, theorem_scope, DISCRETIZATION_ALLOWANCE,
    SE_MULTIPLIER,
};
use crate::model::{validate_params, ModelParams, StatePoint};
use crate::path_engine::{exact_filter, FilteredWalker, Scheme, SimConfig};
use crate::report::{CheckOutcome, Verdict};
use crate::vi_solver::{
    edge_agreement, extract_boundaries, geometry_suite, smoothfit_report, solve, truncation_ladder, value_at,
    BoundarySide, FreeBoundaries, GridSpec, SmoothFitReport, ValueSurface,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    CompleteInfo,
    EdgeValues,
    Roots,
    Geometry,
    Ladder,
    Filter,
    Martingale,
    Saddle,
    SmoothFit,
    Regularity,
}

impl CheckName {
    pub const ALL: [CheckName; 10] = [
        CheckName::CompleteInfo,
        CheckName::EdgeValues,
        CheckName::Roots,
        CheckName::Geometry,
        CheckName::Ladder,
        CheckName::Filter,
        CheckName::Martingale,
        CheckName::Saddle,
        CheckName::SmoothFit,
        CheckName::Regularity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CheckName::CompleteInfo => "complete_info",
            CheckName::EdgeValues => "edge_values",
            CheckName::Roots => "roots",
            CheckName::Geometry => "geometry",
            CheckName::Ladder => "ladder",
            CheckName::Filter => "filter",
            CheckName::Martingale => "martingale",
            CheckName::Saddle => "saddle",
            CheckName::SmoothFit => "smooth_fit",
            CheckName::Regularity => "regularity",
        }
    }

    /// Whether the check reads the solved surface.
    pub fn needs_surface(self) -> bool {
        !matches!(self, CheckName::Roots | CheckName::Filter | CheckName::SmoothFit)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckGroup {
    pub name: CheckName,
    pub checks: Vec<CheckOutcome>,
    pub report: Value,
}

impl CheckGroup {
    fn new(name: CheckName, checks: Vec<CheckOutcome>, report: Value) -> Self {
        CheckGroup { name, checks, report }
    }

    /// Fail if any check failed, else pass if any passed.
    pub fn verdict(&self) -> Verdict {
        if self.checks.iter().any(|c| c.verdict.is_failure()) {
            Verdict::Fail
        } else if self.checks.iter().any(|c| c.verdict == Verdict::Pass) {
            Verdict::Pass
        } else if self.checks.iter().any(|c| c.verdict == Verdict::OutOfTheoremScope) {
            Verdict::OutOfTheoremScope
        } else {
            Verdict::Skipped
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Buyer boundary on the row next to the informed edge against the
/// complete-information threshold.
pub fn complete_info(fb: &FreeBoundaries, rel: f64) -> Result<CheckGroup> {
    let p = fb.params;
    let sol = classify_case(&p)?;
    let target = sol.buyer_boundary_y1();
    let j = fb.grid.n_y - 2;
    let check = match fb.b1[j] {
        Some(b1) => CheckOutcome::at_most("top_row_buyer_boundary", (b1 / target - 1.0).abs(), rel)
            .with_detail(format!("b1 = {b1:.6} at y = {:.6}, threshold {target:.6}", fb.ys[j])),
        None => CheckOutcome::flag("top_row_buyer_boundary", false, "no exercise nodes on the row"),
    };
    let report = json!({ "case": sol.case_id, "threshold": target, "row_y": fb.ys[j], "b1": fb.b1[j] });
    Ok(CheckGroup::new(CheckName::CompleteInfo, vec![check], report))
}

/// Rows next to the lateral edges against the edge values, in units of `K`.
pub fn edge_values(s: &ValueSurface, sup: f64) -> Result<CheckGroup> {
    let e = edge_agreement(s)?;
    let k = s.params.strike();
    let checks = vec![
        CheckOutcome::at_most("uninformed_edge_row", e.bottom / k, sup).with_detail(format!("worst at x = {:.4}", e.bottom_at)),
        CheckOutcome::at_most("informed_edge_row", e.top / k, sup).with_detail(format!("worst at x = {:.4}", e.top_at)),
    ];
    Ok(CheckGroup::new(CheckName::EdgeValues, checks, to_value(&e)))
}

const SWEEP_DELTA: [f64; 5] = [0.5, 0.8, 1.0, 2.0, 5.0];
const SWEEP_PENALTY: [f64; 4] = [0.5, 1.0, 3.0, 15.0];

/// Closed-form roots over a 20-point sweep of the dividend rate and the
/// penalty around `p`: root residuals, ordering of the critical dividends
/// and a single case per point.
pub fn roots(p: &ModelParams, rel: f64) -> CheckGroup {
    let mut points = Vec::new();
    let mut errors = Vec::new();
    let (mut a0_worst, mut a1_worst): (Option<f64>, Option<f64>) = (None, None);
    let (mut ordered, mut exclusive) = (true, true);
    for &fd in &SWEEP_DELTA {
        for &fe in &SWEEP_PENALTY {
            let (d0, e) = (fd * p.delta0(), fe * p.penalty());
            let q = match validate_params(p.r(), d0, p.sigma(), p.strike(), e) {
                Ok(q) => q,
                Err(err) => {
                    errors.push(format!("delta0 {d0}, penalty {e}: {err}"));
                    continue;
                }
            };
            let sol = match classify_case(&q) {
                Ok(s) => s,
                Err(err) => {
                    errors.push(format!("delta0 {d0}, penalty {e}: {err}"));
                    continue;
                }
            };
            let mut residual = None;
            if let (Some(d1), Some(d2)) = (sol.delta1, sol.delta2) {
                ordered &= d1 < d2;
                let held = [d0 <= d1, d1 < d0 && d0 <= d2, d0 > d2];
                let case = [CaseId::Case4, CaseId::Case3, CaseId::Case2];
                let n = held.iter().filter(|&&h| h).count();
                exclusive &= n == 1 && held.iter().zip(case).any(|(&h, c)| h && c == sol.case_id);
            } else {
                exclusive &= sol.case_id == CaseId::Case1;
            }
            if let Some(a) = sol.alpha0 {
                let r = alpha0_residual(&q, a).abs();
                a0_worst = Some(a0_worst.map_or(r, |w| w.max(r)));
                residual = Some(r);
            }
            if let (Some(a), Some(b)) = (sol.alpha1, sol.beta1) {
                let r = alpha1_beta1_residuals(&q, a, b).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                a1_worst = Some(a1_worst.map_or(r, |w| w.max(r)));
                residual = Some(r);
            }
            points.push(json!({ "delta0": d0, "penalty": e, "solution": sol, "residual": residual }));
        }
    }
    let residual_check = |name: &str, worst: Option<f64>| match worst {
        Some(w) => CheckOutcome::at_most(name, w, rel),
        None => CheckOutcome::skipped(name, "no sweep point in this case"),
    };
    let checks = vec![
        residual_check("threshold_equation_residual", a0_worst),
        residual_check("two_threshold_system_residual", a1_worst),
        CheckOutcome::flag("critical_dividends_ordered", ordered, ""),
        CheckOutcome::flag("case_partition_exclusive", exclusive, ""),
        CheckOutcome::flag("sweep_solved", errors.is_empty(), errors.join("; ")),
    ];
    CheckGroup::new(CheckName::Roots, checks, json!({ "points": points }))
}

pub fn geometry(s: &ValueSurface, fb: &FreeBoundaries) -> CheckGroup {
    let report = json!({
        "s2_empty": fb.s2_empty(),
        "exceptional_point": fb.exceptional_point(),
        "stats": s.stats,
    });
    CheckGroup::new(CheckName::Geometry, geometry_suite(s, fb), report)
}

/// Capped games at `caps` times the strike: ordering, domination by the
/// full value and the gap left by the largest cap.
pub fn ladder(s: &ValueSurface, caps: &[f64], gap: f64) -> Result<CheckGroup> {
    let k = s.params.strike();
    let levels: Vec<f64> = caps.iter().map(|c| c * k).collect();
    let rep = truncation_ladder(s, &levels)?;
    let last = rep.rungs.last();
    let checks = vec![
        CheckOutcome::at_most("capped_values_ordered", rep.max_excess(), rep.slack),
        CheckOutcome::at_most("largest_cap_gap", rep.final_gap() / k, gap).with_detail(format!(
            "over F <= cap/2; over F <= cap/4: {:.3e}",
            last.map_or(f64::NAN, |r| r.gap_quarter / k)
        )),
    ];
    Ok(CheckGroup::new(CheckName::Ladder, checks, to_value(&rep)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub start: StatePoint,
    pub dts: [f64; 3],
    pub n_paths: usize,
    pub horizon: f64,
    pub band: [f64; 2],
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            start: StatePoint { x: 1.0, y: 0.3 },
            dts: [1e-3, 5e-4, 2.5e-4],
            n_paths: 1000,
            horizon: 1.0,
            band: [1.5, 3.0],
        }
    }
}

/// Largest distance, over paths and times, between the posterior stepped by
/// `scheme` and the filter evaluated exactly on the same price path.
pub fn filter_gap(p: &ModelParams, f: &FilterSettings, dt: f64, scheme: Scheme, seed: u64) -> Result<f64> {
    let mut cfg = SimConfig::new(dt, f.horizon, f.n_paths, seed);
    cfg.scheme = scheme;
    cfg.validate()?;
    let times = cfg.times();
    let mut worst: f64 = 0.0;
    for path in 0..f.n_paths {
        let mut w = FilteredWalker::new(p, f.start, &cfg, path as u64)?;
        let mut ys = Vec::with_capacity(times.len());
        let mut xs = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            ys.push(w.y);
            xs.push(w.xhat());
            if i + 1 < times.len() {
                w.advance();
            }
        }
        let exact = exact_filter(p, &times, &xs, f.start.x, f.start.y)?;
        worst = exact.iter().zip(&ys).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

/// The gap should halve with the step.
pub fn filter(p: &ModelParams, f: &FilterSettings, scheme: Scheme, seed: u64) -> Result<CheckGroup> {
    let gaps = f
        .dts
        .iter()
        .map(|&dt| filter_gap(p, f, dt, scheme, seed))
        .collect::<Result<Vec<f64>>>()?;
    let checks = f
        .dts
        .windows(2)
        .zip(gaps.windows(2))
        .map(|(d, g)| CheckOutcome::within(format!("gap_ratio_{}_to_{}", d[0], d[1]), g[0] / g[1], f.band[0], f.band[1]))
        .collect();
    let report = json!({ "scheme": scheme, "dts": f.dts, "max_gaps": gaps, "n_paths": f.n_paths });
    Ok(CheckGroup::new(CheckName::Filter, checks, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Fixed horizon for the saddle check; otherwise the shortest one whose
    /// truncation bound is at most `horizon_tol`.
    pub horizon: Option<f64>,
    pub horizon_tol: f64,
    pub starts: Vec<StatePoint>,
    pub checkpoints: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            dt: 5e-3,
            n_paths: 100_000,
            seed: 1,
            scheme: Scheme::MilsteinYExactZ,
            horizon: None,
            horizon_tol: 1e-3,
            starts: vec![
                StatePoint { x: 3.0, y: 0.5 },
                StatePoint { x: 4.5, y: 0.3 },
                StatePoint { x: 2.2, y: 0.7 },
            ],
            checkpoints: vec![0.25, 0.5, 1.0],
            shifts: vec![-0.05, -0.02, 0.02, 0.05],
        }
    }
}

impl McSettings {
    pub fn sim_config(&self, horizon: f64) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon,
            n_paths: self.n_paths,
            seed: self.seed,
            scheme: self.scheme,
        }
    }

    /// Horizon for game evaluations from `start`, with its truncation bound
    /// when chosen automatically.
    pub fn horizon_for(&self, p: &ModelParams, fb: &FreeBoundaries, start: StatePoint) -> Result<(f64, Value)> {
        match self.horizon {
            Some(h) => Ok((h, json!({ "horizon": h }))),
            None => {
                let h = default_horizon(p, fb, start, self.horizon_tol)?;
                Ok((h.horizon, to_value(&h)))
            }
        }
    }
}

fn label(s: StatePoint) -> String {
    format!("x={} y={}", s.x, s.y)
}

/// Stopped value processes from each start.
pub fn martingale(s: &ValueSurface, fb: &FreeBoundaries, mc: &McSettings) -> Result<CheckGroup> {
    let p = s.params;
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for &start in &mc.starts {
        let rep = martingale_check(&p, start, s, fb, &mc.checkpoints, &mc.sim_config(1.0))?;
        checks.extend(rep.checks());
        reports.push(rep);
    }
    Ok(CheckGroup::new(CheckName::Martingale, checks, to_value(&reports)))
}

/// Shifted-boundary deviations and the equilibrium estimate against the
/// surface, from each start.
pub fn saddle(s: &ValueSurface, fb: &FreeBoundaries, mc: &McSettings) -> Result<CheckGroup> {
    let p = s.params;
    let in_scope = theorem_scope(&p);
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for &start in &mc.starts {
        let (h, choice) = mc.horizon_for(&p, fb, start)?;
        let rep = saddle_check(&p, start, fb, &mc.shifts, &mc.sim_config(h))?;
        let v = value_at(s, start.x, start.y)?;
        let e = rep.equilibrium;
        let slack = SE_MULTIPLIER * e.std_error + e.truncation_bias_bound + DISCRETIZATION_ALLOWANCE * p.strike();
        let verdict = if in_scope {
            Verdict::from_bool((e.mean - v).abs() <= slack)
        } else {
            Verdict::OutOfTheoremScope
        };
        checks.push(
            CheckOutcome::at_most(format!("equilibrium_matches_surface {}", label(start)), (e.mean - v).abs(), slack)
                .with_verdict(verdict)
                .with_detail(format!("estimate {:.5} surface {v:.5}", e.mean)),
        );
        checks.extend(rep.checks().into_iter().map(|mut c| {
            c.name = format!("{} {}", c.name, label(start));
            c
        }));
        reports.push(json!({ "horizon": choice, "surface_value": v, "report": rep }));
    }
    Ok(CheckGroup::new(CheckName::Saddle, checks, Value::Array(reports)))
}

/// Mean jump of the posterior derivative across both boundaries over a
/// ladder of row counts; the jump should halve with the row spacing.
pub fn smooth_fit(p: &ModelParams, grid: &GridSpec, rows: &[usize], band: [f64; 2]) -> Result<CheckGroup> {
    let mut reports = Vec::with_capacity(rows.len());
    for &n_y in rows {
        let g = GridSpec { n_y, ..*grid };
        let s = solve(p, &g)?;
        let fb = extract_boundaries(&s)?;
        reports.push(smoothfit_report(&s, &fb));
    }
    let mut checks = Vec::new();
    for (side, name) in [(BoundarySide::C1, "buyer"), (BoundarySide::C2, "seller")] {
        for (m, r) in SmoothFitReport::decay_ratios(&reports, side).into_iter().enumerate() {
            let what = format!("{name}_jump_ratio_{}_to_{}", rows[m], rows[m + 1]);
            checks.push(match r {
                Some(r) => CheckOutcome::within(what, r, band[0], band[1]),
                None => CheckOutcome::skipped(what, "no jump measured"),
            });
        }
    }
    let summary: Vec<Value> = rows
        .iter()
        .zip(&reports)
        .map(|(n, r)| json!({ "n_y": n, "mean_jump_c1": r.mean_jump_c1, "mean_jump_c2": r.mean_jump_c2, "dy_mid": r.dy_mid }))
        .collect();
    Ok(CheckGroup::new(CheckName::SmoothFit, checks, Value::Array(summary)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub points: usize,
    pub dt: f64,
    pub n_paths: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            points: 5,
            dt: 1e-4,
            n_paths: 2000,
        }
    }
}

pub fn regularity(p: &ModelParams, fb: &FreeBoundaries, probe: &ProbeSettings, mc: &McSettings) -> Result<CheckGroup> {
    let cfg = SimConfig {
        dt: probe.dt,
        n_paths: probe.n_paths,
        ..mc.sim_config(1e-2)
    };
    let rep = regularity_probe(p, fb, probe.points, &cfg)?;
    Ok(CheckGroup::new(CheckName::Regularity, rep.checks(), to_value(&rep)))
}
