//! Run configuration, orchestration of the subcommands and the artifacts
//! they leave behind.
//!
//! A run directory holds CSV dumps of the surface and boundaries, JSON
//! reports and `manifest.json`, which records the SHA-256 of the config
//! file, the seed, the versions and the SHA-256 of every artifact. CSV
//! files carry no timestamps, so a rerun of the same config reproduces them
//! byte for byte.

pub mod suite;
#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::closed_form::{classify_case, edge_value, lambda_roots, perpetual_call, EdgeSide};
use crate::error::{Error, Result};
use crate::game_eval::{evaluate_pair, StrategySpec};
use crate::model::ModelParams;
use crate::path_engine::simulate_filtered;
use crate::report::{CheckOutcome, Verdict};
use crate::vi_solver::{
    extract_boundaries, pde_residual, solve, value_at, FreeBoundaries, GridSpec, ValueSurface, DEFAULT_NY, DEFAULT_NZ,
    DEFAULT_Y_MIN,
};
use suite::{CheckGroup, CheckName, FilterSettings, McSettings, ProbeSettings};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_z: usize,
    pub n_y: usize,
    pub y_min: f64,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_z: DEFAULT_NZ,
            n_y: DEFAULT_NY,
            y_min: DEFAULT_Y_MIN,
            z_min: None,
            z_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub dir: PathBuf,
    /// Paths written to `paths.csv` by `simulate`, from the first start.
    pub path_dump: usize,
    pub path_dump_horizon: f64,
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection {
            dir: PathBuf::from("out"),
            path_dump: 20,
            path_dump_horizon: 1.0,
        }
    }
}

/// Which checks `check` runs and what each is held to. Amounts in price
/// units are multiples of the strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub run: Vec<CheckName>,
    pub top_row_rel: f64,
    pub edge_sup: f64,
    pub root_rel: f64,
    pub ladder_caps: Vec<f64>,
    pub ladder_gap: f64,
    pub smooth_fit_rows: Vec<usize>,
    pub smooth_fit_band: [f64; 2],
    pub filter: FilterSettings,
    pub probe: ProbeSettings,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            run: CheckName::ALL.to_vec(),
            top_row_rel: 0.01,
            edge_sup: 5e-3,
            root_rel: 1e-8,
            ladder_caps: vec![2.0, 4.0, 8.0, 16.0],
            ladder_gap: 1e-3,
            smooth_fit_rows: vec![101, 201, 401, 801],
            smooth_fit_band: [1.4, 2.8],
            filter: FilterSettings::default(),
            probe: ProbeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub sim: McSettings,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub checks: ChecksSection,
}

impl RunConfig {
    /// Parses and validates; every error is an `Error::Config` naming the
    /// offending line or key.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let bytes = fs::read(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let hash = sha256_hex(&bytes);
        let text = String::from_utf8(bytes).map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
        Ok((RunConfig::parse(&text)?, hash))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        let mc = &self.sim;
        let key = |k: &str, e: Error| Error::config(format!("[sim] {k}: {e}"));
        mc.sim_config(mc.horizon.unwrap_or(1.0)).validate().map_err(|e| key("dt/n_paths/horizon", e))?;
        if !(mc.horizon_tol > 0.0) {
            return Err(Error::config("[sim] horizon_tol must be positive"));
        }
        if mc.starts.iter().any(|s| !(s.x > 0.0 && s.y > 0.0 && s.y < 1.0)) {
            return Err(Error::config("[sim] starts need x > 0 and 0 < y < 1"));
        }
        if mc.checkpoints.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::config("[sim] checkpoints must be finite and nonnegative"));
        }
        if mc.shifts.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("[sim] shifts must be finite"));
        }
        if !(self.outputs.path_dump_horizon > 0.0) {
            return Err(Error::config("[outputs] path_dump_horizon must be positive"));
        }
        let c = &self.checks;
        if c.ladder_caps.windows(2).any(|w| !(w[0] < w[1])) || c.ladder_caps.first().is_some_and(|&n| !(n > 1.0)) {
            return Err(Error::config("[checks] ladder_caps must increase from above 1"));
        }
        if c.smooth_fit_rows.len() < 2 || c.smooth_fit_rows.iter().any(|&n| n < 16) {
            return Err(Error::config("[checks] smooth_fit_rows needs at least two row counts of 16 or more"));
        }
        let f = &c.filter;
        if f.n_paths == 0 || f.dts.iter().any(|&d| !(d > 0.0 && d <= f.horizon)) || !(f.start.y > 0.0 && f.start.y < 1.0) {
            return Err(Error::config("[checks.filter] needs n_paths > 0, 0 < dt <= horizon and 0 < start.y < 1"));
        }
        if c.probe.n_paths == 0 || !(c.probe.dt > 0.0) {
            return Err(Error::config("[checks.probe] needs n_paths > 0 and dt > 0"));
        }
        Ok(())
    }

    /// Without an explicit `z` range, the rows cover the default asset range.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let spec = match (g.z_min, g.z_max) {
            (Some(z_min), Some(z_max)) => GridSpec {
                z_min,
                z_max,
                n_z: g.n_z,
                y_min: g.y_min,
                n_y: g.n_y,
            },
            (None, None) => {
                let desk = GridSpec::desk(&self.model, g.n_z, g.n_y);
                if g.y_min == desk.y_min {
                    desk
                } else {
                    let (lo, hi) = desk.common_asset_range(&self.model);
                    GridSpec::covering(&self.model, g.n_z, g.n_y, g.y_min, lo, hi)
                }
            }
            _ => return Err(Error::config("[grid] z_min and z_max must be given together")),
        };
        spec.validate().map_err(|e| Error::config(format!("[grid] {e}")))?;
        Ok(spec)
    }

    /// Command-line overrides.
    pub fn apply(&mut self, out: Option<&Path>, seed: Option<u64>, grid: Option<(usize, usize)>) -> Result<()> {
        if let Some(d) = out {
            self.outputs.dir = d.to_path_buf();
        }
        if let Some(s) = seed {
            self.sim.seed = s;
        }
        if let Some((nz, ny)) = grid {
            self.grid.n_z = nz;
            self.grid.n_y = ny;
        }
        self.validate()
    }
}

/// Parses `NZxNY`.
pub fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NZxNY, got `{s}`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("expected NZxNY, got `{s}`"));
    Ok((n(a)?, n(b)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Solve,
    Benchmark,
    Simulate,
    Check,
    All,
}

pub const SURFACE_CSV: &str = "surface.csv";
pub const BOUNDARIES_Z_CSV: &str = "boundaries_z.csv";
pub const BOUNDARIES_Y_CSV: &str = "boundaries_y.csv";
pub const PATHS_CSV: &str = "paths.csv";
pub const BENCHMARK_JSON: &str = "benchmark.json";
pub const SIMULATE_JSON: &str = "simulate.json";
pub const CHECKS_JSON: &str = "checks.json";
pub const METADATA_JSON: &str = "run_metadata.json";
pub const BUNDLE_JSON: &str = "bundle.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub package_version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seed: u64,
    pub grid: GridSpec,
    /// SHA-256 of every artifact in the directory.
    pub artifacts: BTreeMap<String, String>,
}

/// Outcome of a run: the checks it evaluated.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub groups: Vec<CheckGroup>,
    pub extra: Vec<CheckOutcome>,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.groups.iter().any(|g| g.verdict() == Verdict::Fail) || self.extra.iter().any(|c| c.verdict.is_failure())
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed())
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    hash: &'a str,
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
    solved: Option<(ValueSurface, FreeBoundaries)>,
}

impl<'a> Run<'a> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json(&mut self, name: &str, mut body: Value) -> Result<()> {
        if let Value::Object(m) = &mut body {
            m.insert("config_sha256".into(), Value::String(self.hash.to_string()));
        }
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn timed<T>(&mut self, what: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self)?;
        self.timings.insert(what.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }

    fn surface(&mut self) -> Result<&(ValueSurface, FreeBoundaries)> {
        if self.solved.is_none() {
            let g = self.cfg.grid_spec()?;
            let p = self.cfg.model;
            let pair = self.timed("solve", |_| {
                let s = solve(&p, &g)?;
                let fb = extract_boundaries(&s)?;
                Ok((s, fb))
            })?;
            self.solved = Some(pair);
        }
        Ok(self.solved.as_ref().expect("solved above"))
    }
}

/// Runs one subcommand and writes its artifacts under the configured
/// output directory. `config_sha256` is the hash of the config file.
pub fn run(cmd: Subcommand, cfg: &RunConfig, config_sha256: &str) -> Result<RunSummary> {
    let dir = cfg.outputs.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::config(format!("[outputs] dir {}: {e}", dir.display())))?;
    let mut r = Run {
        cfg,
        hash: config_sha256,
        dir,
        artifacts: BTreeMap::new(),
        timings: BTreeMap::new(),
        solved: None,
    };
    let mut summary = RunSummary::default();
    let all = cmd == Subcommand::All;
    if all || cmd == Subcommand::Solve {
        summary.groups.push(solve_step(&mut r)?);
    }
    if all || cmd == Subcommand::Benchmark {
        summary.groups.push(benchmark_step(&mut r)?);
    }
    if all || cmd == Subcommand::Simulate {
        simulate_step(&mut r)?;
    }
    if all || cmd == Subcommand::Check {
        summary.groups.extend(check_step(&mut r)?);
    }
    metadata_step(&mut r)?;
    write_manifest(&mut r)?;
    if all {
        summary.extra = export_bundle(&r.dir)?;
    }
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Solves and writes the surface and boundary dumps; the geometry suite
/// runs on every solve.
fn solve_step(r: &mut Run) -> Result<CheckGroup> {
    let (s, fb) = r.surface()?;
    let g = s.grid;
    let surface = csv_bytes(
        &["z", "y", "v", "region"],
        (0..g.n_z).flat_map(|i| {
            (0..g.n_y).map(move |j| {
                vec![
                    g.z(i).to_string(),
                    g.y(j).to_string(),
                    s.value(i, j).to_string(),
                    s.region_at(i, j).label().to_string(),
                ]
            })
        }),
    )?;
    let by_z = csv_bytes(
        &["z", "c1", "c2", "yK"],
        (0..fb.zs.len()).map(|i| vec![fb.zs[i].to_string(), opt(fb.c1[i]), opt(fb.c2[i]), fb.yk[i].to_string()]),
    )?;
    let by_y = csv_bytes(
        &["y", "b1", "b2"],
        (0..fb.ys.len()).map(|j| vec![fb.ys[j].to_string(), opt(fb.b1[j]), opt(fb.b2[j])]),
    )?;
    let group = suite::geometry(s, fb);
    r.write(SURFACE_CSV, &surface)?;
    r.write(BOUNDARIES_Z_CSV, &by_z)?;
    r.write(BOUNDARIES_Y_CSV, &by_y)?;
    Ok(group)
}

/// Closed-form values for the configured constants and the root sweep.
fn benchmark_step(r: &mut Run) -> Result<CheckGroup> {
    let p = r.cfg.model;
    let group = r.timed("benchmark", |r| Ok(suite::roots(&p, r.cfg.checks.root_rel)))?;
    let edges = [EdgeSide::Y0, EdgeSide::Y1]
        .iter()
        .map(|&side| edge_value(side, &p).map(|e| json!({ "side": side, "breakpoints": e.breakpoints() })))
        .collect::<Result<Vec<Value>>>()?;
    let body = json!({
        "params": p,
        "derived": derived(&p),
        "lambda_roots": lambda_roots(&p, p.delta0()),
        "lambda_roots_without_dividend": lambda_roots(&p, 0.0),
        "perpetual_threshold": perpetual_call(&p).threshold,
        "complete_information": classify_case(&p)?,
        "edge_values": edges,
        "checks": group.checks,
        "sweep": group.report,
    });
    r.write_json(BENCHMARK_JSON, body)?;
    Ok(group)
}

fn derived(p: &ModelParams) -> Value {
    json!({
        "k": p.k(),
        "ratio": p.ratio(),
        "assumption_ratio_ok": p.assumption_ratio_ok(),
        "strong_r": p.strong_r(),
    })
}

/// Path dump from the first start and equilibrium estimates from every
/// start next to the surface value there.
fn simulate_step(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let p = cfg.model;
    let mc = &cfg.sim;
    let mut outputs = Vec::new();
    if let (Some(&first), true) = (mc.starts.first(), cfg.outputs.path_dump > 0) {
        let mut sc = mc.sim_config(cfg.outputs.path_dump_horizon);
        sc.n_paths = cfg.outputs.path_dump;
        let batch = simulate_filtered(&p, first, &sc)?;
        let mut buf = BufWriter::new(Vec::new());
        batch.write_csv(&mut buf)?;
        buf.flush()?;
        let bytes = buf.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        r.write(PATHS_CSV, &bytes)?;
        outputs.push(json!({ "paths": batch.meta() }));
    }
    r.surface()?;
    let (s, fb) = r.solved.as_ref().expect("solved above");
    let t = Instant::now();
    let mut estimates = Vec::new();
    for &start in &mc.starts {
        let (h, choice) = mc.horizon_for(&p, fb, start)?;
        let b = StrategySpec::boundary();
        let e = evaluate_pair(&p, start, b, b, Some(fb), &mc.sim_config(h))?;
        estimates.push(json!({
            "start": start,
            "horizon": choice,
            "estimate": e,
            "surface_value": value_at(s, start.x, start.y)?,
        }));
    }
    r.timings.insert("simulate".into(), t.elapsed().as_secs_f64());
    r.write_json(SIMULATE_JSON, json!({ "dumps": outputs, "equilibrium": estimates }))
}

/// Runs the configured checks and writes their reports.
fn check_step(r: &mut Run) -> Result<Vec<CheckGroup>> {
    let cfg = r.cfg;
    let p = cfg.model;
    let c = &cfg.checks;
    let mc = &cfg.sim;
    let mut groups = Vec::new();
    for &name in &c.run {
        if name.needs_surface() {
            r.surface()?;
        }
        let t = Instant::now();
        let solved = r.solved.as_ref();
        let sf = || solved.expect("solved above");
        let group = match name {
            CheckName::CompleteInfo => suite::complete_info(&sf().1, c.top_row_rel)?,
            CheckName::EdgeValues => suite::edge_values(&sf().0, c.edge_sup)?,
            CheckName::Roots => suite::roots(&p, c.root_rel),
            CheckName::Geometry => suite::geometry(&sf().0, &sf().1),
            CheckName::Ladder => suite::ladder(&sf().0, &c.ladder_caps, c.ladder_gap)?,
            CheckName::Filter => suite::filter(&p, &c.filter, mc.scheme, mc.seed)?,
            CheckName::Martingale => suite::martingale(&sf().0, &sf().1, mc)?,
            CheckName::Saddle => suite::saddle(&sf().0, &sf().1, mc)?,
            CheckName::SmoothFit => suite::smooth_fit(&p, &cfg.grid_spec()?, &c.smooth_fit_rows, c.smooth_fit_band)?,
            CheckName::Regularity => suite::regularity(&p, &sf().1, &c.probe, mc)?,
        };
        r.timings.insert(format!("check {}", name.label()), t.elapsed().as_secs_f64());
        groups.push(group);
    }
    let verdicts: Vec<Value> = groups
        .iter()
        .map(|g| json!({ "name": g.name, "verdict": g.verdict() }))
        .collect();
    r.write_json(CHECKS_JSON, json!({ "summary": verdicts, "groups": groups }))?;
    Ok(groups)
}

fn metadata_step(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let mut body = json!({
        "params": cfg.model,
        "derived": derived(&cfg.model),
        "grid": cfg.grid_spec()?,
        "timings_s": r.timings,
    });
    if let Some((s, _)) = &r.solved {
        body["settings"] = serde_json::to_value(s.settings)?;
        body["stats"] = serde_json::to_value(&s.stats)?;
        body["pde_residual"] = json!(pde_residual(s));
    }
    r.write_json(METADATA_JSON, body)
}

/// Writes `manifest.json`, keeping the entries of an earlier run in the same
/// directory from the same config.
fn write_manifest(r: &mut Run) -> Result<()> {
    let cfg = r.cfg;
    let path = r.dir.join(MANIFEST_JSON);
    let mut artifacts = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(old) = serde_json::from_str::<Manifest>(&text) {
            if old.config_sha256 == r.hash && old.config == *cfg {
                artifacts = old.artifacts;
            }
        }
    }
    artifacts.extend(r.artifacts.clone());
    let m = Manifest {
        format_version: FORMAT_VERSION,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: r.hash.to_string(),
        config: cfg.clone(),
        seed: cfg.sim.seed,
        grid: cfg.grid_spec()?,
        artifacts,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_JSON))?;
    Ok(serde_json::from_str(&text)?)
}

/// Checks a completed run directory: every expected artifact is present
/// and matches its manifest hash, and the `y,b1,b2` dump is nonincreasing
/// in `y` to half a row cell in `ln x`, with its largest values on the
/// lowest row. Writes `bundle.json` listing the files.
pub fn export_bundle(dir: &Path) -> Result<Vec<CheckOutcome>> {
    let m = read_manifest(dir)?;
    let mut out = Vec::new();
    let expected = [
        SURFACE_CSV,
        BOUNDARIES_Z_CSV,
        BOUNDARIES_Y_CSV,
        BENCHMARK_JSON,
        CHECKS_JSON,
        METADATA_JSON,
    ];
    let missing: Vec<&str> = expected.iter().copied().filter(|f| !m.artifacts.contains_key(*f)).collect();
    out.push(CheckOutcome::flag("bundle_complete", missing.is_empty(), missing.join(", ")));
    let mut stale = Vec::new();
    for (name, hash) in &m.artifacts {
        let ok = fs::read(dir.join(name)).is_ok_and(|b| sha256_hex(&b) == *hash);
        if !ok {
            stale.push(name.clone());
        }
    }
    out.push(CheckOutcome::flag("artifacts_match_manifest", stale.is_empty(), stale.join(", ")));

    if m.artifacts.contains_key(BOUNDARIES_Y_CSV) {
        let rows = read_boundary_rows(&dir.join(BOUNDARIES_Y_CSV))?;
        let slack = 0.5 * m.config.model.ratio() * m.grid.dxi();
        for (col, name) in [(0, "b1"), (1, "b2")] {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.1[col]).collect();
            let rise = vals.windows(2).map(|w| (w[1] / w[0]).ln()).fold(0.0, f64::max);
            out.push(
                CheckOutcome::at_most(format!("exported_{name}_nonincreasing"), rise, slack)
                    .with_detail("largest increase of the log between consecutive rows"),
            );
            if let Some(&first) = vals.first() {
                let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out.push(CheckOutcome::flag(
                    format!("exported_{name}_largest_on_lowest_row"),
                    first >= top,
                    format!("lowest row {first}, largest {top}"),
                ));
            } else {
                out.push(CheckOutcome::skipped(format!("exported_{name}_largest_on_lowest_row"), "empty column"));
            }
        }
    }
    let files: Vec<&String> = m.artifacts.keys().collect();
    let body = json!({
        "config_sha256": m.config_sha256,
        "files": files,
        "checks": out,
    });
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    fs::write(dir.join(BUNDLE_JSON), text)?;
    Ok(out)
}

/// Rows of a `y,b1,b2` dump in file order.
pub fn read_boundary_rows(path: &Path) -> Result<Vec<(f64, [Option<f64>; 2])>> {
    let mut rd = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::Io(format!("{}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                Some("") => Ok(None),
                Some(t) => t.parse().map(Some).map_err(|_| bad("number")),
                None => Err(bad("row")),
            }
        };
        let y = num(0)?.ok_or_else(|| bad("y"))?;
        rows.push((y, [num(1)?, num(2)?]));
    }
    Ok(rows)
}
