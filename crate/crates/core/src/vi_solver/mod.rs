//! Double-obstacle solver for the game value in `(z, y)` coordinates.
//!
//! In the continuation region the value solves
//!
//! ```text
//! k v_z + (delta0^2 / (2 sigma^2)) y^2 (1 - y)^2 v_yy - r v = 0,   H1 <= v <= H2
//! ```
//!
//! Because `z` moves at constant speed `k`, it acts as time: the solver marches
//! in `z` away from the end where the value is known, taking implicit substeps
//! and projecting onto the obstacles by successive over-relaxation.
//!
//! Rows are uniform in `xi = logit(y)`. In `xi` the posterior has constant
//! diffusion `delta0 / sigma` and drift `(delta0/sigma)^2 (y - 1/2)`.

mod boundaries;
mod diagnostics;
mod ladder;
mod tracker;

pub use boundaries::{extract_boundaries, FreeBoundaries};
pub use diagnostics::{
    geometry_suite, obstacle_generator_report, pde_residual, smoothfit_report, surface_to_xy, value_at, value_at_z,
    BoundarySide, GeneratorReport, SmoothFitReport, SmoothFitSlice, LATERAL_LAYER,
};
pub use ladder::{edge_agreement, truncation_ladder, EdgeAgreement, LadderReport, LadderRung, LADDER_SLACK};

use serde::{Deserialize, Serialize};

use crate::closed_form::{edge_value, EdgeSide, EdgeValueFn};
use crate::error::{Error, Result};
use crate::model::{logistic, logit, ModelParams};
use tracker::CrossingTracker;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
    /// Lateral truncation: rows run from `y_min` to `1 - y_min`.
    pub y_min: f64,
    pub n_y: usize,
}

pub const DEFAULT_Y_MIN: f64 = 1e-3;
pub const DEFAULT_NZ: usize = 400;
pub const DEFAULT_NY: usize = 200;

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_min < self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::grid(format!("need z_min < z_max, got [{}, {}]", self.z_min, self.z_max)));
        }
        if self.n_z < 16 || self.n_y < 16 {
            return Err(Error::grid(format!("need n_z, n_y >= 16, got {}x{}", self.n_z, self.n_y)));
        }
        if !(self.y_min > 0.0 && self.y_min < 0.5) {
            return Err(Error::grid(format!("need 0 < y_min < 0.5, got {}", self.y_min)));
        }
        Ok(())
    }

    /// Grid whose `z` range makes `F` cover `[f_lo, f_hi]` on every row.
    pub fn covering(p: &ModelParams, n_z: usize, n_y: usize, y_min: f64, f_lo: f64, f_hi: f64) -> GridSpec {
        let xi_max = logit(1.0 - y_min);
        GridSpec {
            z_min: f_lo.ln() - p.ratio() * xi_max,
            z_max: f_hi.ln() + p.ratio() * xi_max,
            n_z,
            y_min,
            n_y,
        }
    }

    /// Default range: `F` spans `[1e-2 K, 1e3 K]` on every row. When `k < 0`
    /// the low end is pushed down until the cancellation value there is below
    /// `1e-3 K`, so the starting slice is far from the upper obstacle.
    pub fn desk(p: &ModelParams, n_z: usize, n_y: usize) -> GridSpec {
        let k = p.strike();
        let mut f_lo = 1e-2 * k;
        if p.k() < 0.0 {
            f_lo = f_lo.min(5e-4 * k * k / p.penalty());
        }
        GridSpec::covering(p, n_z, n_y, DEFAULT_Y_MIN, f_lo, 1e3 * k)
    }

    /// Asset range present on every row, `[F(z_min, y_min), F(z_max, 1 - y_min)]`.
    pub fn common_asset_range(&self, p: &ModelParams) -> (f64, f64) {
        let xm = self.xi_max();
        (
            (self.z_min + p.ratio() * xm).exp(),
            (self.z_max - p.ratio() * xm).exp(),
        )
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / (self.n_z - 1) as f64
    }

    pub fn xi_max(&self) -> f64 {
        logit(1.0 - self.y_min)
    }

    pub fn dxi(&self) -> f64 {
        2.0 * self.xi_max() / (self.n_y - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        if i + 1 == self.n_z {
            self.z_max
        } else {
            self.z_min + i as f64 * self.dz()
        }
    }

    pub fn xi(&self, j: usize) -> f64 {
        -self.xi_max() + j as f64 * self.dxi()
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == 0 {
            self.y_min
        } else if j + 1 == self.n_y {
            1.0 - self.y_min
        } else {
            logistic(self.xi(j))
        }
    }

    pub fn zs(&self) -> Vec<f64> {
        (0..self.n_z).map(|i| self.z(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.n_y).map(|j| self.y(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Implicit substeps per z interval; `None` picks `r dt <= step_target`.
    pub substeps: Option<usize>,
    pub step_target: f64,
    pub relaxation: f64,
    /// Sweep stopping tolerance, in units of the strike.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Distance to an obstacle below which a node is labelled stopped, in units of the strike.
    pub tol_active: f64,
    /// Range of distances from a row's contact-set crossing, in y cells,
    /// over which the obstacle gap is fitted to locate the boundary.
    pub fit_window: (f64, f64),
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            substeps: None,
            step_target: 5e-3,
            relaxation: 1.5,
            tolerance: 1e-9,
            max_sweeps: 100_000,
            tol_active: 1e-7,
            fit_window: (0.5, 2.0),
        }
    }
}

impl SolverSettings {
    pub fn substeps_for(&self, p: &ModelParams, g: &GridSpec) -> usize {
        self.substeps.unwrap_or_else(|| {
            let span = g.dz() / p.k().abs();
            ((p.r() * span / self.step_target).ceil() as usize).max(1)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    S1,
    S2,
    C,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::S1 => "S1",
            Region::S2 => "S2",
            Region::C => "C",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub substeps: usize,
    pub dt: f64,
    pub total_sweeps: u64,
    pub max_sweeps_per_step: usize,
    pub max_final_update: f64,
    pub initial_slice_check: f64,
}

/// Where one row of fixed `y` meets the stopping regions, as asset levels.
/// `*_contact` is the substep at which the row's label changes; `b1`, `b2`
/// refine it from the obstacle gap and fall back to the contact value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RowCrossings {
    /// The row is exercised for `x >= b1`.
    pub b1: Option<f64>,
    /// Largest `x` at which the row is in the cancellation region.
    pub b2: Option<f64>,
    pub b1_contact: Option<f64>,
    pub b2_contact: Option<f64>,
}

/// Converged grid values with region labels. Index `(i, j)` is `z_i`, `y_j`.
///
/// The solved variable is `u = v - (F - K)` for the plain game, which keeps
/// full precision where `F` is many orders above the strike, and `u = v`
/// for a capped game.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub settings: SolverSettings,
    /// Payoff cap of the truncated game, if any.
    pub cap: Option<f64>,
    pub u: Vec<f64>,
    pub region: Vec<Region>,
    /// For every stored slice, the substep state it was computed from.
    pub upstream: Vec<f64>,
    pub rows: Vec<RowCrossings>,
    pub stats: SolveStats,
}

impl ValueSurface {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.n_y + j
    }

    fn shifted(&self) -> bool {
        self.cap.is_none()
    }

    #[inline]
    pub fn asset(&self, i: usize, j: usize) -> f64 {
        (self.grid.z(i) - self.params.ratio() * self.grid.xi(j)).exp()
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let u = self.u[self.idx(i, j)];
        if self.shifted() {
            u + self.asset(i, j) - self.params.strike()
        } else {
            u
        }
    }

    #[inline]
    pub fn region_at(&self, i: usize, j: usize) -> Region {
        self.region[self.idx(i, j)]
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        lower_payoff(&self.params, self.cap, self.asset(i, j))
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.lower(i, j) + self.params.penalty()
    }

    /// `v - H1`, without cancellation at large `F`.
    pub fn gap_lower(&self, i: usize, j: usize) -> f64 {
        let x = self.asset(i, j);
        self.u[self.idx(i, j)] - shifted_lower(&self.params, self.cap, x)
    }

    /// `H2 - v`.
    pub fn gap_upper(&self, i: usize, j: usize) -> f64 {
        let x = self.asset(i, j);
        shifted_lower(&self.params, self.cap, x) + self.params.penalty() - self.u[self.idx(i, j)]
    }

    /// `w = v - F + K`, the value net of immediate exercise.
    pub fn w(&self, i: usize, j: usize) -> f64 {
        let u = self.u[self.idx(i, j)];
        if self.shifted() {
            u
        } else {
            u - self.asset(i, j) + self.params.strike()
        }
    }

    /// Index of the slice the march starts from.
    pub fn start_index(&self) -> usize {
        if self.params.k() > 0.0 {
            self.grid.n_z - 1
        } else {
            0
        }
    }

    pub fn count(&self, r: Region) -> usize {
        self.region.iter().filter(|&&x| x == r).count()
    }
}

fn lower_payoff(p: &ModelParams, cap: Option<f64>, x: f64) -> f64 {
    let x = match cap {
        Some(n) => x.min(n),
        None => x,
    };
    (x - p.strike()).max(0.0)
}

/// Lower obstacle in the solved variable.
fn shifted_lower(p: &ModelParams, cap: Option<f64>, x: f64) -> f64 {
    match cap {
        None => (p.strike() - x).max(0.0),
        Some(_) => lower_payoff(p, cap, x),
    }
}

/// Lateral data in the solved variable; for a capped game the closed-form
/// edge is cut at `n - K`, which keeps it inside the capped obstacles and
/// monotone in the cap.
struct Lateral {
    edge: EdgeValueFn,
    cap: Option<f64>,
    strike: f64,
}

impl Lateral {
    fn value(&self, x: f64) -> f64 {
        match self.cap {
            None => self.edge.excess(x),
            Some(n) => {
                let g1 = (x.min(n) - self.strike).max(0.0);
                g1.max(self.edge.value(x).min(n - self.strike))
            }
        }
    }
}

pub fn solve(p: &ModelParams, g: &GridSpec) -> Result<ValueSurface> {
    solve_with(p, g, &SolverSettings::default(), None)
}

pub fn solve_truncated(p: &ModelParams, g: &GridSpec, n: f64) -> Result<ValueSurface> {
    if !(n > p.strike()) {
        return Err(Error::grid(format!("payoff cap {n} must exceed the strike")));
    }
    solve_with(p, g, &SolverSettings::default(), Some(n))
}

pub fn solve_with(p: &ModelParams, g: &GridSpec, settings: &SolverSettings, cap: Option<f64>) -> Result<ValueSurface> {
    g.validate()?;
    let (nz, ny) = (g.n_z, g.n_y);
    let strike = p.strike();
    let eps = p.penalty();
    let bottom = Lateral {
        edge: edge_value(EdgeSide::Y0, p)?,
        cap,
        strike,
    };
    let top = Lateral {
        edge: edge_value(EdgeSide::Y1, p)?,
        cap,
        strike,
    };

    let m = settings.substeps_for(p, g);
    let dz = g.dz();
    let dt = dz / (p.k().abs() * m as f64);
    let h = g.dxi();
    let a2 = p.signal() * p.signal();
    let diff = 0.5 * a2 / (h * h);
    let xis: Vec<f64> = (0..ny).map(|j| g.xi(j)).collect();
    let ys: Vec<f64> = (0..ny).map(|j| g.y(j)).collect();
    let scale: Vec<f64> = xis.iter().map(|xi| (-p.ratio() * xi).exp()).collect();
    let mut lo_c = vec![0.0; ny];
    let mut up_c = vec![0.0; ny];
    for j in 1..ny - 1 {
        let drift = 0.5 * a2 * (0.5 * xis[j]).tanh();
        lo_c[j] = dt * (diff - drift / (2.0 * h));
        up_c[j] = dt * (diff + drift / (2.0 * h));
    }
    let diag = 1.0 + p.r() * dt + 2.0 * dt * diff;
    // a capped solve works on v itself; below the cap it takes the part of the
    // source that the shifted scheme adds to the plain step on F - K, so both
    // treat the linear part alike and stay comparable node for node
    let rh = p.ratio() * h;
    let linear_fix: Vec<f64> = (0..ny)
        .map(|j| {
            let plain = (p.k() * dt).exp_m1() - p.r() * dt + lo_c[j] * rh.exp_m1() + up_c[j] * (-rh).exp_m1();
            -p.delta0() * ys[j] * dt - plain
        })
        .collect();
    let tol = settings.tolerance * strike;
    let tol_active = settings.tol_active * strike;
    let omega = settings.relaxation;

    let forward = p.k() > 0.0;
    let order: Vec<usize> = if forward { (0..nz).rev().collect() } else { (0..nz).collect() };

    let mut u = vec![0.0; nz * ny];
    let mut region = vec![Region::C; nz * ny];
    let mut upstream = vec![0.0; nz * ny];

    let mut xs = vec![0.0; ny];
    let mut lo = vec![0.0; ny];
    let mut hi = vec![0.0; ny];
    let mut src = vec![0.0; ny];
    let fill = |z: f64, xs: &mut [f64], lo: &mut [f64], hi: &mut [f64], src: &mut [f64]| {
        let ez = z.exp();
        for j in 0..ny {
            let x = ez * scale[j];
            xs[j] = x;
            lo[j] = shifted_lower(p, cap, x);
            hi[j] = lo[j] + eps;
            // (k d/dz + L - r) applied to F - K is r K - delta0 y F
            src[j] = match cap {
                None => dt * (p.r() * strike - p.delta0() * ys[j] * x),
                Some(n) if x < n => linear_fix[j] * x,
                Some(_) => 0.0,
            };
        }
    };
    let label = |x: f64, val: f64, lo: f64, hi: f64| {
        if x > strike && val - lo <= tol_active {
            Region::S1
        } else if x >= strike && hi - val <= tol_active {
            Region::S2
        } else {
            Region::C
        }
    };

    // starting slice
    let i0 = order[0];
    let z0 = g.z(i0);
    fill(z0, &mut xs, &mut lo, &mut hi, &mut src);
    let mut cur = vec![0.0; ny];
    for j in 0..ny {
        cur[j] = if forward {
            lo[j]
        } else {
            ((1.0 - ys[j]) * bottom.value(xs[j]) + ys[j] * top.value(xs[j])).clamp(lo[j], hi[j])
        };
    }
    cur[0] = bottom.value(xs[0]);
    cur[ny - 1] = top.value(xs[ny - 1]);

    let mut initial_slice_check = f64::NAN;
    if !forward {
        let gap = (1..ny - 1).map(|j| hi[j] - cur[j]).fold(f64::INFINITY, f64::min);
        initial_slice_check = gap;
        if gap < eps - 1e-3 * strike {
            return Err(Error::DomainTooSmall {
                reason: format!("starting slice comes within {gap:e} of the upper obstacle; lower z_min"),
            });
        }
    }

    let mut labels: Vec<Region> = (0..ny).map(|j| label(xs[j], cur[j], lo[j], hi[j])).collect();
    let lr = p.ratio() * h;
    let window = (settings.fit_window.0 * lr, settings.fit_window.1 * lr);
    let mut buyer = vec![CrossingTracker::new(window, lr, strike); ny];
    let mut seller = vec![CrossingTracker::new(window, lr, strike); ny];
    for j in 0..ny {
        let k = i0 * ny + j;
        u[k] = cur[j];
        upstream[k] = cur[j];
        region[k] = labels[j];
    }

    let mut prev = cur.clone();
    let mut total_sweeps: u64 = 0;
    let mut max_sweeps_step = 0;
    let mut max_final_update: f64 = 0.0;
    let mut z_last = z0;
    for (step, w) in order.windows(2).enumerate() {
        let (ia, ib) = (w[0], w[1]);
        let (za, zb) = (g.z(ia), g.z(ib));
        for s in 1..=m {
            let zs = if s == m { zb } else { za + (zb - za) * s as f64 / m as f64 };
            fill(zs, &mut xs, &mut lo, &mut hi, &mut src);
            prev.copy_from_slice(&cur);
            cur[0] = bottom.value(xs[0]);
            cur[ny - 1] = top.value(xs[ny - 1]);
            let mut converged = false;
            let mut sweeps = 0;
            let mut last = 0.0;
            while sweeps < settings.max_sweeps {
                sweeps += 1;
                let mut change: f64 = 0.0;
                for j in 1..ny - 1 {
                    let gs = (prev[j] + src[j] + lo_c[j] * cur[j - 1] + up_c[j] * cur[j + 1]) / diag;
                    let plain = gs.clamp(lo[j], hi[j]);
                    change = change.max((plain - cur[j]).abs());
                    cur[j] = (cur[j] + omega * (gs - cur[j])).clamp(lo[j], hi[j]);
                }
                last = change;
                if change <= tol {
                    converged = true;
                    break;
                }
            }
            total_sweeps += sweeps as u64;
            max_sweeps_step = max_sweeps_step.max(sweeps);
            if !converged {
                return Err(Error::NoConvergenceAtSlice {
                    z: zs,
                    sweeps: settings.max_sweeps,
                });
            }
            if s == m {
                max_final_update = max_final_update.max(last);
            }
            let mid = 0.5 * (z_last + zs);
            let emid = mid.exp();
            for j in 1..ny - 1 {
                let now = label(xs[j], cur[j], lo[j], hi[j]);
                let was = labels[j];
                let xm = emid * scale[j];
                let (t1, t2) = (&mut buyer[j], &mut seller[j]);
                if now == Region::C {
                    if !forward || t1.is_pending() {
                        t1.sample(zs, xs[j], cur[j] - lo[j]);
                    }
                    if forward || t2.is_pending() {
                        t2.sample(zs, xs[j], hi[j] - cur[j]);
                    }
                }
                if forward {
                    if was == Region::S1 && now != Region::S1 && t1.crossing.is_none() {
                        t1.left(mid, xm);
                    }
                    if now == Region::S2 && was != Region::S2 && t2.crossing.is_none() {
                        t2.entered(mid, xm);
                    }
                } else {
                    if now == Region::S1 && was != Region::S1 {
                        t1.entered(mid, xm);
                    }
                    if was == Region::S2 && now != Region::S2 {
                        t2.left(mid, xm);
                    }
                }
                labels[j] = now;
            }
            z_last = zs;
        }
        for j in 0..ny {
            let k = ib * ny + j;
            u[k] = cur[j];
            upstream[k] = prev[j];
            region[k] = labels[j];
        }
        region[ib * ny] = label(xs[0], cur[0], lo[0], hi[0]);
        region[ib * ny + ny - 1] = label(xs[ny - 1], cur[ny - 1], lo[ny - 1], hi[ny - 1]);
        if step == 0 && forward {
            let active = (1..ny - 1).filter(|&j| region[ib * ny + j] == Region::S1).count();
            let frac = active as f64 / (ny - 2) as f64;
            initial_slice_check = frac;
            if frac < 0.99 {
                return Err(Error::DomainTooSmall {
                    reason: format!("only {:.1}% of the first marched slice is exercised; raise z_max", 100.0 * frac),
                });
            }
        }
    }
    let z_end = g.z(*order.last().expect("grid has slices"));
    let mut rows = vec![RowCrossings::default(); ny];
    for j in 1..ny - 1 {
        buyer[j].finish_pending();
        seller[j].finish_pending();
        let x_end = z_end.exp() * scale[j];
        let end_b1 = (forward && labels[j] == Region::S1 && buyer[j].crossing.is_none()).then_some(x_end);
        let end_b2 = (!forward && labels[j] == Region::S2).then_some(x_end);
        rows[j] = RowCrossings {
            b1: end_b1.or(buyer[j].best()),
            b2: end_b2.or(seller[j].best()),
            b1_contact: end_b1.or(buyer[j].crossing),
            b2_contact: end_b2.or(seller[j].crossing),
        };
    }

    Ok(ValueSurface {
        params: *p,
        grid: *g,
        settings: *settings,
        cap,
        u,
        region,
        upstream,
        rows,
        stats: SolveStats {
            substeps: m,
            dt,
            total_sweeps,
            max_sweeps_per_step: max_sweeps_step,
            max_final_update,
            initial_slice_check,
        },
    })
}

#[cfg(test)]
mod tests;
