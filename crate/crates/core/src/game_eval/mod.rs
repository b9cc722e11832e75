//! Monte Carlo evaluation of the game payoff
//!
//! ```text
//! M(tau, gamma) = E[ e^{-r tau} G1(X_tau) 1{tau <= gamma} + e^{-r gamma} G2(X_gamma) 1{gamma < tau} ]
//! ```
//!
//! for boundary-hitting strategies and their shifted variants, and the
//! statistical checks built on it: saddle-point deviations, the stopped
//! value processes and the regularity of boundary points.
//!
//! All strategies in one evaluation see the same paths, so differences
//! between them carry little noise. A path that neither player stops before
//! the horizon pays 0, and the estimate carries a bound on what that
//! truncation can cost.

mod checks;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{asset_level, logit, ModelParams, StatePoint};
use crate::path_engine::{mean_and_se, FilteredWalker, SimConfig, StopTarget};
use crate::vi_solver::FreeBoundaries;

pub use checks::{
    late_entry, martingale_check, regularity_probe, saddle_check, theorem_scope, Deviation, MartingaleReport,
    MartingaleRow, ProbePoint, RegularityReport, SaddleReport, DISCRETIZATION_ALLOWANCE, PROBE_BUDGETS, PROBE_LIMIT,
    SE_MULTIPLIER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    BoundaryHit,
    Immediate,
    Never,
    ShiftedBoundary,
}

/// A stopping rule for either player. Boundary rules stop on the player's
/// own set: `S1` for the buyer, `S2` for the seller; a shift moves `c1` or
/// `c2` up by that much in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default)]
    pub shift: f64,
}

impl StrategySpec {
    pub fn boundary() -> Self {
        StrategySpec {
            kind: StrategyKind::BoundaryHit,
            shift: 0.0,
        }
    }

    pub fn immediate() -> Self {
        StrategySpec {
            kind: StrategyKind::Immediate,
            shift: 0.0,
        }
    }

    pub fn never() -> Self {
        StrategySpec {
            kind: StrategyKind::Never,
            shift: 0.0,
        }
    }

    pub fn shifted(shift: f64) -> Self {
        StrategySpec {
            kind: StrategyKind::ShiftedBoundary,
            shift,
        }
    }

    fn uses_boundary(&self) -> bool {
        matches!(self.kind, StrategyKind::BoundaryHit | StrategyKind::ShiftedBoundary)
    }

    fn offset(&self) -> f64 {
        match self.kind {
            StrategyKind::ShiftedBoundary => self.shift,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub horizon: f64,
    /// Largest discounted payoff a path alive at the horizon could still collect.
    pub truncation_bias_bound: f64,
    pub fraction_truncated: f64,
}

/// Per-path payoffs of one strategy pair, kept for paired comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRun {
    pub tau: StrategySpec,
    pub gamma: StrategySpec,
    pub estimate: GameEstimate,
    pub payoffs: Vec<f64>,
}

impl PairRun {
    /// Mean and standard error of `self - other`, path by path.
    pub fn difference(&self, other: &PairRun) -> (f64, f64) {
        let (m, se, _) = mean_and_se(self.payoffs.iter().zip(&other.payoffs).map(|(a, b)| a - b));
        (m, se)
    }
}

/// Stop when `lo[i] <= Y <= hi[i]` at step `i`; steps past `lo.len()` are
/// outside the solved `z` range.
#[derive(Debug, Clone)]
struct Schedule {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Schedule {
    fn build(
        p: &ModelParams,
        spec: &StrategySpec,
        target: StopTarget,
        fb: Option<&FreeBoundaries>,
        z0: Option<f64>,
        cfg: &SimConfig,
    ) -> Result<Schedule> {
        let n = cfg.n_steps();
        match spec.kind {
            StrategyKind::Immediate => {
                let mut s = Schedule {
                    lo: vec![f64::INFINITY; n + 1],
                    hi: vec![f64::NEG_INFINITY; n + 1],
                };
                s.lo[0] = f64::NEG_INFINITY;
                s.hi[0] = f64::INFINITY;
                Ok(s)
            }
            StrategyKind::Never => Ok(Schedule {
                lo: vec![f64::INFINITY; n + 1],
                hi: vec![f64::NEG_INFINITY; n + 1],
            }),
            StrategyKind::BoundaryHit | StrategyKind::ShiftedBoundary => {
                let fb = fb.ok_or_else(|| Error::sim("boundary strategy needs solved boundaries"))?;
                let z0 = z0.ok_or(Error::SingularTransform { y: f64::NAN })?;
                let shift = spec.offset();
                let (mut lo, mut hi) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
                for i in 0..=n {
                    let z = z0 + p.k() * i as f64 * cfg.dt;
                    if z < fb.grid.z_min || z > fb.grid.z_max {
                        break;
                    }
                    let (a, b) = match target {
                        StopTarget::S1 => match fb.c1_at(z)? {
                            Some(c) => (f64::NEG_INFINITY, c + shift),
                            None => (f64::INFINITY, f64::NEG_INFINITY),
                        },
                        StopTarget::S2 => match fb.c2_at(z)? {
                            Some(c) => (c + shift, fb.yk_at(z)),
                            None => (f64::INFINITY, f64::NEG_INFINITY),
                        },
                    };
                    lo.push(a);
                    hi.push(b);
                }
                if lo.is_empty() {
                    let z = z0;
                    return Err(Error::OutOfDomain {
                        what: "z",
                        value: z,
                        lo: fb.grid.z_min,
                        hi: fb.grid.z_max,
                    });
                }
                Ok(Schedule { lo, hi })
            }
        }
    }

    fn stops(&self, i: usize, y: f64) -> Option<bool> {
        self.lo.get(i).map(|&lo| lo <= y && y <= self.hi[i])
    }
}

fn start_z(p: &ModelParams, s: StatePoint) -> Option<f64> {
    (s.y > 0.0 && s.y < 1.0 && s.x > 0.0).then(|| s.x.ln() + p.ratio() * logit(s.y))
}

fn out_of_grid(fb: Option<&FreeBoundaries>, z: f64) -> Error {
    let (lo, hi) = fb.map_or((f64::NAN, f64::NAN), |fb| (fb.grid.z_min, fb.grid.z_max));
    Error::OutOfDomain {
        what: "z",
        value: z,
        lo,
        hi,
    }
}

/// Evaluates every `(tau, gamma)` pair on the same paths.
pub fn evaluate_pairs(
    p: &ModelParams,
    start: StatePoint,
    pairs: &[(StrategySpec, StrategySpec)],
    fb: Option<&FreeBoundaries>,
    cfg: &SimConfig,
) -> Result<Vec<PairRun>> {
    cfg.validate()?;
    let z0 = start_z(p, start);
    let n = cfg.n_steps();
    let mut rules = Vec::with_capacity(pairs.len());
    for (tau, gamma) in pairs {
        rules.push((
            Schedule::build(p, tau, StopTarget::S1, fb, z0, cfg)?,
            Schedule::build(p, gamma, StopTarget::S2, fb, z0, cfg)?,
        ));
    }
    let disc: Vec<f64> = (0..=n).map(|i| (-p.r() * i as f64 * cfg.dt).exp()).collect();
    let np = cfg.n_paths;
    let mut payoffs = vec![vec![0.0; np]; pairs.len()];
    let mut truncated = vec![0usize; pairs.len()];
    let mut alive = vec![false; pairs.len()];

    // immediate stops do not need paths
    let exact: Vec<Option<f64>> = pairs
        .iter()
        .map(|(tau, gamma)| match (tau.kind, gamma.kind) {
            (StrategyKind::Immediate, _) => Some(p.g1(start.x)),
            (_, StrategyKind::Immediate) => Some(p.g2(start.x)),
            _ => None,
        })
        .collect();

    for path in 0..np {
        let mut left = 0;
        for (q, e) in exact.iter().enumerate() {
            match e {
                Some(v) => {
                    payoffs[q][path] = *v;
                    alive[q] = false;
                }
                None => {
                    alive[q] = true;
                    left += 1;
                }
            }
        }
        if left == 0 {
            continue;
        }
        let mut w = FilteredWalker::new(p, start, cfg, path as u64)?;
        for i in 0..=n {
            let (x, y) = (w.x(), w.y);
            for q in 0..pairs.len() {
                if !alive[q] {
                    continue;
                }
                let (buy, sell) = &rules[q];
                let (Some(b), Some(s)) = (buy.stops(i, y), sell.stops(i, y)) else {
                    let z = z0.map_or(f64::NAN, |z0| z0 + p.k() * w.t());
                    return Err(out_of_grid(fb, z));
                };
                if b {
                    payoffs[q][path] = disc[i] * p.g1(x);
                } else if s {
                    payoffs[q][path] = disc[i] * p.g2(x);
                } else {
                    continue;
                }
                alive[q] = false;
                left -= 1;
            }
            if left == 0 {
                break;
            }
            if i < n {
                w.advance();
            }
        }
        for q in 0..pairs.len() {
            if alive[q] {
                truncated[q] += 1;
            }
        }
    }

    let horizon = n as f64 * cfg.dt;
    pairs
        .iter()
        .zip(payoffs)
        .zip(truncated)
        .map(|((&(tau, gamma), pay), trunc)| {
            let (mean, std_error, _) = mean_and_se(pay.iter().copied());
            let bound = if exact_pair(&tau, &gamma) {
                0.0
            } else {
                truncation_bound(p, fb, z0, &tau, horizon)?
            };
            Ok(PairRun {
                tau,
                gamma,
                estimate: GameEstimate {
                    mean,
                    std_error,
                    n_paths: np,
                    horizon,
                    truncation_bias_bound: bound,
                    fraction_truncated: trunc as f64 / np as f64,
                },
                payoffs: pay,
            })
        })
        .collect()
}

fn exact_pair(tau: &StrategySpec, gamma: &StrategySpec) -> bool {
    tau.kind == StrategyKind::Immediate || gamma.kind == StrategyKind::Immediate
}

pub fn evaluate_pair(
    p: &ModelParams,
    start: StatePoint,
    tau: StrategySpec,
    gamma: StrategySpec,
    fb: Option<&FreeBoundaries>,
    cfg: &SimConfig,
) -> Result<GameEstimate> {
    Ok(evaluate_pairs(p, start, &[(tau, gamma)], fb, cfg)?[0].estimate)
}

/// `sup_{t >= T} e^{-rt} (F(z0 + kt, c1(z0 + kt)) + eps0)` over the solved
/// `z` range ahead of the start. Before the buyer stops, `X < F(z, c1(z))`,
/// so this bounds any payoff collected after the horizon on a path where
/// the buyer follows a boundary rule. A buyer who never stops leaves the
/// price unbounded and the bound infinite.
pub fn truncation_bound(
    p: &ModelParams,
    fb: Option<&FreeBoundaries>,
    z0: Option<f64>,
    buyer: &StrategySpec,
    horizon: f64,
) -> Result<f64> {
    if !buyer.uses_boundary() {
        return Ok(if buyer.kind == StrategyKind::Immediate { 0.0 } else { f64::INFINITY });
    }
    let fb = fb.ok_or_else(|| Error::sim("boundary strategy needs solved boundaries"))?;
    let z0 = z0.ok_or(Error::SingularTransform { y: f64::NAN })?;
    let prof = exercise_profile(p, fb, z0, buyer.offset())?;
    Ok(tail_bound(p, &prof, horizon))
}

/// `(t, F(z, c1(z) + shift))` at the start and at the grid nodes ahead of it,
/// in time order. Where the boundary has dropped below the grid rows for
/// good, the discounted level is continued exponentially from the last
/// stretch of grid values, since `b1(y) y` is nearly constant at small `y`.
fn exercise_profile(p: &ModelParams, fb: &FreeBoundaries, z0: f64, shift: f64) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = (fb.grid.y(1), 1.0 - fb.grid.y(1));
    let level = |z: f64, c: Option<f64>| c.map(|c| asset_level(p, z, (c + shift).clamp(lo, hi)));
    let mut prof = vec![(0.0, level(z0, fb.c1_at(z0)?))];
    for (&z, &c) in fb.zs.iter().zip(&fb.c1) {
        let t = (z - z0) / p.k();
        if t > 0.0 {
            prof.push((t, level(z, c)));
        }
    }
    prof.sort_by(|a, b| a.0.total_cmp(&b.0));
    let known: Vec<usize> = (0..prof.len()).filter(|&i| prof[i].1.is_some()).collect();
    let tail_rate = match known.len() {
        0 | 1 => None,
        m => {
            let (a, b) = (known[m.saturating_sub(11)], known[m - 1]);
            let disc = |i: usize| (-p.r() * prof[i].0).exp() * prof[i].1.unwrap_or(f64::NAN);
            Some((b, (disc(b) / disc(a)).ln() / (prof[b].0 - prof[a].0)))
        }
    };
    Ok(prof
        .iter()
        .enumerate()
        .map(|(i, &(t, f))| {
            let f = f.unwrap_or_else(|| match tail_rate {
                Some((b, rate)) if i > b && rate < 0.0 => {
                    let (tb, fb) = (prof[b].0, prof[b].1.unwrap_or(f64::NAN));
                    fb * ((rate + p.r()) * (t - tb)).exp()
                }
                _ => f64::INFINITY,
            });
            (t, f)
        })
        .collect())
}

/// Each interval between profile times is bounded by its larger level,
/// discounted from the interval's first time at or after `horizon`.
fn tail_bound(p: &ModelParams, prof: &[(f64, f64)], horizon: f64) -> f64 {
    prof.windows(2)
        .filter(|w| w[1].0 >= horizon)
        .map(|w| (-p.r() * w[0].0.max(horizon)).exp() * (w[0].1.max(w[1].1) + p.penalty()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonChoice {
    pub horizon: f64,
    pub bias_bound: f64,
    /// The target was not met before the path's `z` leaves the grid.
    pub limited_by_grid: bool,
}

/// Shortest horizon whose truncation bound for the buyer's boundary is at
/// most `tol`, kept inside the solved `z` range.
pub fn default_horizon(p: &ModelParams, fb: &FreeBoundaries, start: StatePoint, tol: f64) -> Result<HorizonChoice> {
    let z0 = start_z(p, start).ok_or(Error::SingularTransform { y: start.y })?;
    let prof = exercise_profile(p, fb, z0, 0.0)?;
    // stay a little short of the last node so rounding never leaves the grid
    let last = 0.999 * prof.last().map_or(0.0, |&(t, _)| t);
    let at = |t: f64| tail_bound(p, &prof, t);
    if at(last) > tol {
        return Ok(HorizonChoice {
            horizon: last,
            bias_bound: at(last),
            limited_by_grid: true,
        });
    }
    let (mut lo, mut hi) = (0.0, last);
    while hi - lo > 1e-3 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if at(mid) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(HorizonChoice {
        horizon: hi,
        bias_bound: at(hi),
        limited_by_grid: false,
    })
}
