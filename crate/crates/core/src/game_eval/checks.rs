use serde::Serialize;

use super::{evaluate_pairs, start_z, GameEstimate, Schedule, StrategySpec};
use crate::error::{Error, Result};
use crate::model::{asset_level, logit, ModelParams, StatePoint};
use crate::path_engine::{mean_and_se, FilteredWalker, SimConfig, StopTarget};
use crate::report::{CheckOutcome, Verdict};
use crate::vi_solver::{value_at_z, FreeBoundaries, ValueSurface};

/// Multiple of the standard error allowed in every Monte Carlo comparison.
pub const SE_MULTIPLIER: f64 = 3.0;
/// Allowance for reading values off the grid, in units of `K`.
pub const DISCRETIZATION_ALLOWANCE: f64 = 1e-2;
/// Entry-time budgets of the regularity probe.
pub const PROBE_BUDGETS: [f64; 2] = [1e-3, 1e-2];
/// Largest accepted probability of a late entry at the longest budget.
pub const PROBE_LIMIT: f64 = 0.05;

/// Whether a saddle point is asserted for these parameters: `k > 0` with
/// `sigma^2 / delta0 > 1`, or `k < 0` under the strong-rate assumption.
pub fn theorem_scope(p: &ModelParams) -> bool {
    (p.k() > 0.0 && p.assumption_ratio_strict()) || (p.k() < 0.0 && p.strong_r())
}

fn scoped(ok: bool, in_scope: bool) -> Verdict {
    if in_scope {
        Verdict::from_bool(ok)
    } else {
        Verdict::OutOfTheoremScope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub player: &'static str,
    pub shift: f64,
    pub estimate: GameEstimate,
    /// Buyer: `M(tau_s, gamma*) - M(tau*, gamma*)`. Seller: `M(tau*, gamma*) - M(tau*, gamma_s)`.
    pub gain: f64,
    pub gain_se: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub start: StatePoint,
    pub in_scope: bool,
    pub equilibrium: GameEstimate,
    pub deviations: Vec<Deviation>,
}

impl SaddleReport {
    pub fn checks(&self) -> Vec<CheckOutcome> {
        self.deviations
            .iter()
            .map(|d| {
                CheckOutcome::at_most(format!("{} deviation {:+}", d.player, d.shift), d.gain, d.slack)
                    .with_verdict(d.verdict)
                    .with_detail(format!("gain {:.3e} +- {:.1e}", d.gain, d.gain_se))
            })
            .collect()
    }

    pub fn worst_margin(&self) -> f64 {
        self.deviations.iter().map(|d| d.gain - d.slack).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Shifts each boundary by every amount in `shifts` and compares against the
/// boundary pair on common paths. Neither player should profit from moving
/// their own boundary.
pub fn saddle_check(
    p: &ModelParams,
    start: StatePoint,
    fb: &FreeBoundaries,
    shifts: &[f64],
    cfg: &SimConfig,
) -> Result<SaddleReport> {
    let eq = StrategySpec::boundary();
    let mut pairs = vec![(eq, eq)];
    pairs.extend(shifts.iter().map(|&s| (StrategySpec::shifted(s), eq)));
    pairs.extend(shifts.iter().map(|&s| (eq, StrategySpec::shifted(s))));
    let runs = evaluate_pairs(p, start, &pairs, Some(fb), cfg)?;
    let in_scope = theorem_scope(p);
    let base = &runs[0];
    let deviations = runs[1..]
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let buyer = i < shifts.len();
            let (diff, se) = run.difference(base);
            let gain = if buyer { diff } else { -diff };
            let slack = SE_MULTIPLIER * se
                + base
                    .estimate
                    .truncation_bias_bound
                    .max(run.estimate.truncation_bias_bound);
            Deviation {
                player: if buyer { "buyer" } else { "seller" },
                shift: shifts[i % shifts.len()],
                estimate: run.estimate,
                gain,
                gain_se: se,
                slack,
                verdict: scoped(gain <= slack, in_scope),
            }
        })
        .collect();
    Ok(SaddleReport {
        start,
        in_scope,
        equilibrium: base.estimate,
        deviations,
    })
}

/// Value read off the surface. A posterior beyond the outer rows is pulled
/// onto them at the same price; the flag reports that.
fn surface_value(s: &ValueSurface, z: Option<f64>, x: f64, y: f64) -> Result<(f64, bool)> {
    let p = s.params;
    let xm = s.grid.xi_max();
    let inside = y > 0.0 && y < 1.0 && logit(y).abs() <= xm;
    if inside {
        let xi = logit(y);
        let z = z.unwrap_or_else(|| x.ln() + p.ratio() * xi);
        return Ok((value_at_z(s, z, xi)?, false));
    }
    let xi = if y < 0.5 { -xm } else { xm };
    Ok((value_at_z(s, x.ln() + p.ratio() * xi, xi)?, true))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleRow {
    pub t: f64,
    /// Stopped at the seller's time; should not exceed the start value.
    pub stopped_seller: (f64, f64),
    /// Stopped at the buyer's time; should not fall below the start value.
    pub stopped_buyer: (f64, f64),
    /// Stopped at the first of the two; should stay at the start value.
    pub stopped_both: (f64, f64),
    /// Not stopped; reported only.
    pub unstopped: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub start: StatePoint,
    pub value: f64,
    pub rows: Vec<MartingaleRow>,
    /// Evaluations pulled onto the outer rows.
    pub clamped: usize,
    pub strike: f64,
}

impl MartingaleReport {
    pub fn checks(&self) -> Vec<CheckOutcome> {
        let mut out = Vec::new();
        let v = self.value;
        let label = format!("x={:.3} y={:.3}", self.start.x, self.start.y);
        for row in &self.rows {
            let slack = |se: f64| SE_MULTIPLIER * se + DISCRETIZATION_ALLOWANCE * self.strike;
            let (m, se) = row.stopped_seller;
            out.push(CheckOutcome::at_most(format!("supermartingale {label} t={}", row.t), m - v, slack(se)));
            let (m, se) = row.stopped_buyer;
            out.push(CheckOutcome::at_most(format!("submartingale {label} t={}", row.t), v - m, slack(se)));
            let (m, se) = row.stopped_both;
            out.push(CheckOutcome::at_most(format!("martingale {label} t={}", row.t), (m - v).abs(), slack(se)));
        }
        out
    }
}

/// Discounted surface values along the paths at each checkpoint, stopped at
/// the seller's time, at the buyer's time, at both and not at all.
pub fn martingale_check(
    p: &ModelParams,
    start: StatePoint,
    surface: &ValueSurface,
    fb: &FreeBoundaries,
    checkpoints: &[f64],
    cfg: &SimConfig,
) -> Result<MartingaleReport> {
    if checkpoints.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::sim("checkpoints must be nonnegative"));
    }
    cfg.validate()?;
    let steps: Vec<usize> = checkpoints.iter().map(|&t| (t / cfg.dt).round() as usize).collect();
    let n = steps.iter().copied().max().unwrap_or(0);
    let mut run = *cfg;
    run.horizon = n.max(1) as f64 * cfg.dt;
    let z0 = start_z(p, start).ok_or(Error::SingularTransform { y: start.y })?;
    let buyer = Schedule::build(p, &StrategySpec::boundary(), StopTarget::S1, Some(fb), Some(z0), &run)?;
    let seller = Schedule::build(p, &StrategySpec::boundary(), StopTarget::S2, Some(fb), Some(z0), &run)?;
    let (v0, _) = surface_value(surface, Some(z0), start.x, start.y)?;

    let mut cols: Vec<[Vec<f64>; 4]> = checkpoints
        .iter()
        .map(|_| std::array::from_fn(|_| Vec::with_capacity(run.n_paths)))
        .collect();
    let mut clamped = 0usize;
    for path in 0..run.n_paths {
        let mut w = FilteredWalker::new(p, start, &run, path as u64)?;
        let (mut at_seller, mut at_buyer, mut at_both) = (None, None, None);
        for i in 0..=n {
            let z = z0 + p.k() * w.t();
            let (val, pulled) = surface_value(surface, Some(z), w.x(), w.y)?;
            clamped += pulled as usize;
            let cur = (-p.r() * w.t()).exp() * val;
            let (Some(b), Some(s)) = (buyer.stops(i, w.y), seller.stops(i, w.y)) else {
                return Err(Error::OutOfDomain {
                    what: "z",
                    value: z,
                    lo: fb.grid.z_min,
                    hi: fb.grid.z_max,
                });
            };
            if b && at_buyer.is_none() {
                at_buyer = Some(cur);
            }
            if s && at_seller.is_none() {
                at_seller = Some(cur);
            }
            if (b || s) && at_both.is_none() {
                at_both = Some(cur);
            }
            for (c, &m) in steps.iter().enumerate() {
                if m == i {
                    cols[c][0].push(at_seller.unwrap_or(cur));
                    cols[c][1].push(at_buyer.unwrap_or(cur));
                    cols[c][2].push(at_both.unwrap_or(cur));
                    cols[c][3].push(cur);
                }
            }
            if i < n {
                w.advance();
            }
        }
    }
    let stat = |v: &Vec<f64>| {
        let (m, se, _) = mean_and_se(v.iter().copied());
        (m, se)
    };
    let rows = checkpoints
        .iter()
        .zip(&cols)
        .map(|(&t, c)| MartingaleRow {
            t,
            stopped_seller: stat(&c[0]),
            stopped_buyer: stat(&c[1]),
            stopped_both: stat(&c[2]),
            unstopped: stat(&c[3]),
        })
        .collect();
    Ok(MartingaleReport {
        start,
        value: v0,
        rows,
        clamped,
        strike: p.strike(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint {
    pub target: StopTarget,
    pub z: f64,
    pub y: f64,
    pub x: f64,
    /// `P(entry > budget)` for each of `PROBE_BUDGETS`.
    pub late: Vec<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub dt: f64,
    pub points: Vec<ProbePoint>,
    /// The corner of the seller's region, left out when `k > 0`.
    pub exceptional: Option<(f64, f64)>,
}

impl RegularityReport {
    pub fn worst(&self, target: StopTarget, budget: usize) -> f64 {
        self.points
            .iter()
            .filter(|q| q.target == target)
            .map(|q| q.late[budget])
            .fold(0.0, f64::max)
    }

    pub fn checks(&self) -> Vec<CheckOutcome> {
        let last = PROBE_BUDGETS.len() - 1;
        let mut out = Vec::new();
        for target in [StopTarget::S1, StopTarget::S2] {
            let name = format!("{target:?} late entry beyond {}", PROBE_BUDGETS[last]);
            if !self.points.iter().any(|q| q.target == target) {
                out.push(CheckOutcome::skipped(name, "no boundary points to probe"));
                continue;
            }
            out.push(CheckOutcome::at_most(name, self.worst(target, last), PROBE_LIMIT));
            let ordered = self
                .points
                .iter()
                .filter(|q| q.target == target)
                .all(|q| q.late.windows(2).all(|w| w[0] >= w[1]));
            out.push(CheckOutcome::flag(
                format!("{target:?} late entry decreasing in budget"),
                ordered,
                "",
            ));
        }
        if let Some((z, y)) = self.exceptional {
            out.push(CheckOutcome::skipped(
                "exceptional point",
                format!("z = {z:.4}, y = {y:.4} not probed"),
            ));
        }
        out
    }
}

/// Probability that a path started at `start` has not entered the interior
/// of `target` by each budget. The start sits on the boundary, so only grid
/// times after it count.
pub fn late_entry(
    p: &ModelParams,
    fb: &FreeBoundaries,
    target: StopTarget,
    start: StatePoint,
    budgets: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    let mut run = *cfg;
    run.horizon = budgets.iter().copied().fold(cfg.dt, f64::max);
    run.validate()?;
    let z0 = start_z(p, start).ok_or(Error::SingularTransform { y: start.y })?;
    let n = run.n_steps();
    let mut lo = Vec::with_capacity(n + 1);
    let mut hi = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = z0 + p.k() * i as f64 * run.dt;
        let (a, b) = match target {
            StopTarget::S1 => (f64::NEG_INFINITY, fb.c1_at(z)?.unwrap_or(f64::NEG_INFINITY)),
            StopTarget::S2 => match fb.c2_at(z)? {
                Some(c) => (c, fb.yk_at(z)),
                None => (f64::INFINITY, f64::NEG_INFINITY),
            },
        };
        lo.push(a);
        hi.push(b);
    }
    let limits: Vec<usize> = budgets.iter().map(|&b| (b / run.dt + 1e-9).floor() as usize).collect();
    let mut late = vec![0usize; budgets.len()];
    for path in 0..run.n_paths {
        let mut w = FilteredWalker::new(p, start, &run, path as u64)?;
        let mut entry = None;
        for i in 1..=n {
            w.advance();
            if lo[i] < w.y && w.y < hi[i] {
                entry = Some(i);
                break;
            }
        }
        for (b, &lim) in limits.iter().enumerate() {
            if entry.is_none_or(|e| e > lim) {
                late[b] += 1;
            }
        }
    }
    Ok(late.into_iter().map(|c| c as f64 / run.n_paths as f64).collect())
}

/// Starts `n_points` probes on each boundary, at `z` nodes spread over the
/// middle of the range where the boundary lies inside the grid rows and is
/// found on the two nodes either side. A seller point needs the set to be at
/// least one row cell wide above it, and the corner is kept ten `z` cells
/// away when `k > 0`.
pub fn regularity_probe(p: &ModelParams, fb: &FreeBoundaries, n_points: usize, cfg: &SimConfig) -> Result<RegularityReport> {
    let g = fb.grid;
    let (ylo, yhi) = (10.0 * g.y_min, 1.0 - 10.0 * g.y_min);
    let exceptional = fb.exceptional_point();
    let reach = p.k().abs() * PROBE_BUDGETS[PROBE_BUDGETS.len() - 1];
    let mut points = Vec::new();
    for target in [StopTarget::S1, StopTarget::S2] {
        let curve = match target {
            StopTarget::S1 => &fb.c1,
            StopTarget::S2 => &fb.c2,
        };
        let eligible: Vec<(f64, f64)> = (2..g.n_z - 2)
            .filter(|&i| curve[i - 2..=i + 2].iter().all(Option::is_some))
            .filter_map(|i| curve[i].map(|c| (fb.zs[i], c)))
            .filter(|&(z, c)| c > ylo && c < yhi && z - reach > g.z_min && z + reach < g.z_max)
            .filter(|&(z, c)| target == StopTarget::S1 || logit(fb.yk_at(z)) - logit(c) >= g.dxi())
            .filter(|&(z, _)| exceptional.is_none_or(|(zk, _)| (z - zk).abs() > 10.0 * g.dz()))
            .collect();
        if eligible.is_empty() || n_points == 0 {
            continue;
        }
        let (a, b) = (eligible.len() / 10, eligible.len() - eligible.len() / 10);
        let span = &eligible[a..b.max(a + 1)];
        let picks = n_points.min(span.len());
        for m in 0..picks {
            let (z, y) = span[(m * (span.len() - 1)) / (picks - 1).max(1)];
            let x = asset_level(p, z, y);
            let late = late_entry(p, fb, target, StatePoint { x, y }, &PROBE_BUDGETS, cfg)?;
            points.push(ProbePoint {
                target,
                z,
                y,
                x,
                late,
                n_paths: cfg.n_paths,
            });
        }
    }
    Ok(RegularityReport {
        dt: cfg.dt,
        points,
        exceptional,
    })
}
