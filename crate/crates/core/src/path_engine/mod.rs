//! Monte Carlo paths of the filtered pair `(X, Y)` driven by the innovation
//! Brownian motion, raw price scenarios with a known dividend indicator, the
//! posterior recovered from an observed price, and the flow derivative of `Y`
//! with respect to its starting point.
//!
//! Every path draws from its own ChaCha8 stream, selected by the master seed
//! and the path index, so a path never depends on how many others are run or
//! in which order.

mod hitting;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{asset_level, logistic, logit, ModelParams, StatePoint};

pub use hitting::{hitting_time, BoundaryRule, StopTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler-Maruyama for `Y`.
    EulerYExactZ,
    /// Milstein for `Y`; the diffusion coefficient is smooth in `y`.
    MilsteinYExactZ,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::EulerYExactZ => "euler_y_exact_z",
            Scheme::MilsteinYExactZ => "milstein_y_exact_z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            horizon,
            n_paths,
            seed,
            scheme: Scheme::MilsteinYExactZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::sim(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::sim(format!(
                "horizon {} must be finite and at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::sim("n_paths must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; the last grid time is the first multiple of `dt` at
    /// or beyond the horizon.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|i| i as f64 * self.dt).collect()
    }
}

/// Generator for one path.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// Step-by-step state of one filtered path.
#[derive(Debug, Clone)]
pub struct FilteredWalker {
    a: f64,
    log_drift: f64,
    delta0: f64,
    sigma: f64,
    k: f64,
    params: ModelParams,
    dt: f64,
    sqrt_dt: f64,
    scheme: Scheme,
    rng: ChaCha8Rng,
    z0: Option<f64>,
    pub step: usize,
    pub y: f64,
    /// `ln` of the price built from the exponential form, which uses the
    /// posterior only through the dividend drift.
    pub log_xhat: f64,
}

impl FilteredWalker {
    pub fn new(p: &ModelParams, start: StatePoint, cfg: &SimConfig, path_id: u64) -> Result<Self> {
        check_start(start)?;
        let interior = start.y > 0.0 && start.y < 1.0;
        Ok(FilteredWalker {
            a: p.delta0() / p.sigma(),
            log_drift: p.r() - 0.5 * p.sigma() * p.sigma(),
            delta0: p.delta0(),
            sigma: p.sigma(),
            k: p.k(),
            params: *p,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            scheme: cfg.scheme,
            rng: path_rng(cfg.seed, path_id),
            z0: interior.then(|| start.x.ln() + p.ratio() * logit(start.y)),
            step: 0,
            y: start.y,
            log_xhat: start.x.ln(),
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// `z0 + k t`; `None` when the path started at an endpoint.
    pub fn z(&self) -> Option<f64> {
        self.z0.map(|z0| z0 + self.k * self.t())
    }

    /// `F(Z, Y)` while the posterior is inside `(0, 1)`, else the exponential form.
    pub fn x(&self) -> f64 {
        match self.z() {
            Some(z) if self.y > 0.0 && self.y < 1.0 => asset_level(&self.params, z, self.y),
            _ => self.log_xhat.exp(),
        }
    }

    pub fn xhat(&self) -> f64 {
        self.log_xhat.exp()
    }

    /// Advances one step and returns the Brownian increment used.
    pub fn advance(&mut self) -> f64 {
        let g: f64 = self.rng.sample(StandardNormal);
        let dw = g * self.sqrt_dt;
        let y = self.y;
        self.log_xhat += self.sigma * dw + (self.log_drift - self.delta0 * y) * self.dt;
        if y > 0.0 && y < 1.0 {
            let b = -self.a * y * (1.0 - y);
            let mut next = y + b * dw;
            if self.scheme == Scheme::MilsteinYExactZ {
                let db = -self.a * (1.0 - 2.0 * y);
                next += 0.5 * b * db * (dw * dw - self.dt);
            }
            self.y = next.clamp(0.0, 1.0);
        }
        self.step += 1;
        dw
    }
}

fn check_start(s: StatePoint) -> Result<()> {
    if !(s.y >= 0.0 && s.y <= 1.0) {
        return Err(Error::sim(format!("starting posterior {} is outside [0, 1]", s.y)));
    }
    if !(s.x > 0.0 && s.x.is_finite()) {
        return Err(Error::NonPositiveParameter { name: "x", value: s.x });
    }
    Ok(())
}

/// Stored paths on a shared time grid, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub start: StatePoint,
    pub cfg: SimConfig,
    pub times: Vec<f64>,
    /// `z0 + k t`; `None` for a start at `y = 0` or `y = 1`.
    pub z_values: Option<Vec<f64>>,
    pub y_paths: Vec<Vec<f64>>,
    pub x_paths: Vec<Vec<f64>>,
    pub xhat_paths: Vec<Vec<f64>>,
    /// Brownian increments, `dw[p][i]` drives step `i -> i + 1`.
    pub dw: Vec<Vec<f64>>,
    pub u_paths: Option<Vec<Vec<f64>>>,
    /// Stream identifier of each path.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMeta {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub x0: f64,
    pub y0: f64,
}

pub fn simulate_filtered(p: &ModelParams, start: StatePoint, cfg: &SimConfig) -> Result<PathBatch> {
    cfg.validate()?;
    check_start(start)?;
    let n = cfg.n_steps();
    let times = cfg.times();
    let mut batch = PathBatch {
        start,
        cfg: *cfg,
        z_values: None,
        y_paths: Vec::with_capacity(cfg.n_paths),
        x_paths: Vec::with_capacity(cfg.n_paths),
        xhat_paths: Vec::with_capacity(cfg.n_paths),
        dw: Vec::with_capacity(cfg.n_paths),
        u_paths: None,
        seeds: (0..cfg.n_paths as u64).collect(),
        times,
    };
    if start.y > 0.0 && start.y < 1.0 {
        let z0 = start.x.ln() + p.ratio() * logit(start.y);
        batch.z_values = Some(batch.times.iter().map(|&t| z0 + p.k() * t).collect());
    }
    for &id in &batch.seeds {
        let mut w = FilteredWalker::new(p, start, cfg, id)?;
        let mut ys = Vec::with_capacity(n + 1);
        let mut xs = Vec::with_capacity(n + 1);
        let mut xh = Vec::with_capacity(n + 1);
        let mut dws = Vec::with_capacity(n);
        ys.push(w.y);
        xs.push(w.x());
        xh.push(w.xhat());
        for _ in 0..n {
            dws.push(w.advance());
            ys.push(w.y);
            xs.push(w.x());
            xh.push(w.xhat());
        }
        batch.y_paths.push(ys);
        batch.x_paths.push(xs);
        batch.xhat_paths.push(xh);
        batch.dw.push(dws);
    }
    Ok(batch)
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.y_paths.len()
    }

    pub fn meta(&self) -> BatchMeta {
        BatchMeta {
            seed: self.cfg.seed,
            dt: self.cfg.dt,
            horizon: self.cfg.horizon,
            n_paths: self.n_paths(),
            n_steps: self.times.len() - 1,
            scheme: self.cfg.scheme,
            x0: self.start.x,
            y0: self.start.y,
        }
    }

    /// Path dump with header `t,path_id,y,z,x`; `z` is empty for endpoint starts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "path_id", "y", "z", "x"])?;
        for (pi, id) in self.seeds.iter().enumerate() {
            for (i, t) in self.times.iter().enumerate() {
                let z = self.z_values.as_ref().map(|zs| zs[i].to_string()).unwrap_or_default();
                w.write_record([
                    t.to_string(),
                    id.to_string(),
                    self.y_paths[pi][i].to_string(),
                    z,
                    self.x_paths[pi][i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Observed prices with the dividend indicator fixed at `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    pub x0: f64,
    pub d: u8,
    pub times: Vec<f64>,
    pub s_paths: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

/// Exact lognormal steps with drift `r - delta0 d`.
pub fn simulate_scenario(p: &ModelParams, x0: f64, d: u8, cfg: &SimConfig) -> Result<ScenarioBatch> {
    cfg.validate()?;
    if d > 1 {
        return Err(Error::sim(format!("dividend indicator must be 0 or 1, got {d}")));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::NonPositiveParameter { name: "x", value: x0 });
    }
    let n = cfg.n_steps();
    let drift = (p.r() - p.delta0() * d as f64 - 0.5 * p.sigma() * p.sigma()) * cfg.dt;
    let vol = p.sigma() * cfg.dt.sqrt();
    let seeds: Vec<u64> = (0..cfg.n_paths as u64).collect();
    let s_paths = seeds
        .iter()
        .map(|&id| {
            let mut rng = path_rng(cfg.seed, id);
            let mut ls = x0.ln();
            let mut path = Vec::with_capacity(n + 1);
            path.push(x0);
            for _ in 0..n {
                let g: f64 = rng.sample(StandardNormal);
                ls += vol * g + drift;
                path.push(ls.exp());
            }
            path
        })
        .collect();
    Ok(ScenarioBatch {
        x0,
        d,
        times: cfg.times(),
        s_paths,
        seeds,
    })
}

/// Posterior implied by an observed price path through the invariance of
/// `z`: `logit Y_t = logit y0 + (ln x0 + k t - ln S_t) delta0 / sigma^2`.
pub fn exact_filter(p: &ModelParams, times: &[f64], s_path: &[f64], x0: f64, y0: f64) -> Result<Vec<f64>> {
    if !(y0 > 0.0 && y0 < 1.0) {
        return Err(Error::SingularTransform { y: y0 });
    }
    if times.len() != s_path.len() {
        return Err(Error::sim(format!(
            "{} times for a price path of length {}",
            times.len(),
            s_path.len()
        )));
    }
    let (xi0, lx0, k, inv) = (logit(y0), x0.ln(), p.k(), 1.0 / p.ratio());
    Ok(times
        .iter()
        .zip(s_path)
        .map(|(&t, &s)| logistic(xi0 + inv * (lx0 + k * t - s.ln())))
        .collect())
}

/// Euler steps of `dU = -(delta0/sigma)(1 - 2Y) U dW`, `U_0 = 1`, on the
/// batch's own increments.
pub fn flow_derivative(p: &ModelParams, batch: &PathBatch) -> Vec<Vec<f64>> {
    let a = p.delta0() / p.sigma();
    batch
        .y_paths
        .iter()
        .zip(&batch.dw)
        .map(|(ys, dws)| {
            let mut u = 1.0;
            let mut path = Vec::with_capacity(ys.len());
            path.push(u);
            for (y, dw) in ys.iter().zip(dws) {
                u *= 1.0 - a * (1.0 - 2.0 * y) * dw;
                path.push(u);
            }
            path
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    if n < 2 {
        return (mean, 0.0, n);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}
