use super::suite::{self, CheckName};
use super::*;
use crate::model::drift_k;

const MODEL: &str = "[model]\nr = 0.08\ndelta0 = 0.05\nsigma = 0.3\nstrike = 1.0\npenalty = 0.1\n";

fn config_error(text: &str) -> String {
    match RunConfig::parse(text) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn model_section_alone_fills_in_defaults() {
    let cfg = RunConfig::parse(MODEL).unwrap();
    assert_eq!(cfg.grid, GridSection::default());
    assert_eq!(cfg.sim, McSettings::default());
    assert_eq!(cfg.checks.run, CheckName::ALL.to_vec());
    assert_eq!(cfg.model.k(), drift_k(0.08, 0.05, 0.3));
    let g = cfg.grid_spec().unwrap();
    assert_eq!(g, GridSpec::desk(&cfg.model, DEFAULT_NZ, DEFAULT_NY));
}

#[test]
fn missing_key_is_named() {
    let text = MODEL.replace("sigma = 0.3\n", "");
    let msg = config_error(&text);
    assert!(msg.contains("missing field `sigma`"), "{msg}");
}

#[test]
fn unknown_and_derived_keys_are_rejected_with_their_line() {
    let msg = config_error(&format!("{MODEL}k = 0.02\n"));
    assert!(msg.contains("unknown field `k`") && msg.contains("line 7"), "{msg}");
    let msg = config_error(&format!("{MODEL}[grid]\nnz = 100\n"));
    assert!(msg.contains("unknown field `nz`"), "{msg}");
    let msg = config_error(&format!("{MODEL}[plots]\nwidth = 3\n"));
    assert!(msg.contains("unknown field `plots`"), "{msg}");
    let msg = config_error(&format!("{MODEL}[checks]\nrun = [\"vibes\"]\n"));
    assert!(msg.contains("unknown variant `vibes`"), "{msg}");
}

#[test]
fn expressions_are_not_values() {
    let msg = config_error(&MODEL.replace("r = 0.08", "r = \"0.04 * 2\""));
    assert!(msg.contains("line 2"), "{msg}");
}

#[test]
fn invalid_values_are_reported_by_section() {
    let msg = config_error(&MODEL.replace("sigma = 0.3", "sigma = 0.0"));
    assert!(msg.contains("sigma"), "{msg}");
    let msg = config_error(&format!("{MODEL}[grid]\nz_min = -3.0\n"));
    assert!(msg.contains("[grid]"), "{msg}");
    let msg = config_error(&format!("{MODEL}[grid]\nn_y = 4\n"));
    assert!(msg.contains("[grid]"), "{msg}");
    let msg = config_error(&format!("{MODEL}[sim]\ndt = -1.0\n"));
    assert!(msg.contains("[sim]"), "{msg}");
    let msg = config_error(&format!("{MODEL}[sim]\nstarts = [{{ x = 1.0, y = 1.0 }}]\n"));
    assert!(msg.contains("[sim] starts"), "{msg}");
    let msg = config_error(&format!("{MODEL}[checks]\nladder_caps = [4.0, 2.0]\n"));
    assert!(msg.contains("ladder_caps"), "{msg}");
}

#[test]
fn nested_sections_parse() {
    let text = format!(
        "{MODEL}[sim]\nscheme = \"euler_y_exact_z\"\nstarts = [{{ x = 2.0, y = 0.4 }}]\n\
         [checks.filter]\nn_paths = 10\n[checks.probe]\npoints = 2\n"
    );
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.sim.scheme, crate::path_engine::Scheme::EulerYExactZ);
    assert_eq!(cfg.sim.starts.len(), 1);
    assert_eq!(cfg.checks.filter.n_paths, 10);
    assert_eq!(cfg.checks.probe.points, 2);
    assert_eq!(cfg.checks.probe.dt, 1e-4);
}

#[test]
fn config_survives_a_round_trip() {
    let mut cfg = RunConfig::parse(MODEL).unwrap();
    cfg.grid.z_min = Some(-4.0);
    cfg.grid.z_max = Some(9.0);
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
}

#[test]
fn overrides_replace_config_values() {
    let mut cfg = RunConfig::parse(MODEL).unwrap();
    cfg.apply(Some(Path::new("elsewhere")), Some(99), Some((64, 32))).unwrap();
    assert_eq!(cfg.outputs.dir, PathBuf::from("elsewhere"));
    assert_eq!(cfg.sim.seed, 99);
    assert_eq!((cfg.grid.n_z, cfg.grid.n_y), (64, 32));
    assert!(cfg.apply(None, None, Some((4, 4))).is_err());
}

#[test]
fn grid_flag_parsing() {
    assert_eq!(parse_grid("400x200"), Ok((400, 200)));
    assert_eq!(parse_grid("64X32"), Ok((64, 32)));
    assert!(parse_grid("400").is_err());
    assert!(parse_grid("ax2").is_err());
}

#[test]
fn hash_matches_a_known_digest() {
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn root_sweep_passes_and_covers_several_cases() {
    let cfg = RunConfig::parse(MODEL).unwrap();
    let g = suite::roots(&cfg.model, 1e-8);
    assert_eq!(g.verdict(), Verdict::Pass, "{:#?}", g.checks);
    let points = g.report["points"].as_array().unwrap();
    assert_eq!(points.len(), 20);
    let mut cases: Vec<String> = points.iter().map(|q| q["solution"]["case_id"].to_string()).collect();
    cases.sort();
    cases.dedup();
    assert!(cases.len() >= 3, "{cases:?}");
}

#[test]
fn group_verdict_prefers_failure_then_pass() {
    let pass = CheckOutcome::at_most("a", 0.0, 1.0);
    let fail = CheckOutcome::at_most("b", 2.0, 1.0);
    let skip = CheckOutcome::skipped("c", "");
    let scoped = pass.clone().with_verdict(Verdict::OutOfTheoremScope);
    let group = |checks: Vec<CheckOutcome>| CheckGroup {
        name: CheckName::Geometry,
        checks,
        report: Value::Null,
    };
    assert_eq!(group(vec![pass.clone(), fail, skip.clone()]).verdict(), Verdict::Fail);
    assert_eq!(group(vec![pass, skip.clone()]).verdict(), Verdict::Pass);
    assert_eq!(group(vec![scoped, skip.clone()]).verdict(), Verdict::OutOfTheoremScope);
    assert_eq!(group(vec![skip]).verdict(), Verdict::Skipped);
}

#[test]
fn band_checks_include_both_ends() {
    assert_eq!(CheckOutcome::within("r", 1.5, 1.5, 3.0).verdict, Verdict::Pass);
    assert_eq!(CheckOutcome::within("r", 3.0, 1.5, 3.0).verdict, Verdict::Pass);
    assert_eq!(CheckOutcome::within("r", 1.49, 1.5, 3.0).verdict, Verdict::Fail);
    assert_eq!(CheckOutcome::within("r", f64::NAN, 1.5, 3.0).verdict, Verdict::Fail);
}

#[test]
fn shipped_config_parses() {
    let cfg = RunConfig::parse(include_str!("../../../../configs/desk.toml")).unwrap();
    assert_eq!(cfg.model, RunConfig::parse(MODEL).unwrap().model);
    assert_eq!(cfg.grid, GridSection::default());
    assert_eq!(cfg.checks.filter, FilterSettings::default());
}
