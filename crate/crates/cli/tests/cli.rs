use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kredux_cli::config::RunConfig;
use proptest::prelude::*;
use serde_json::Value;

fn kredux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kredux")).args(args).env("KREDUX_THREADS", "2").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

fn input_arg(dir: &Path) -> String {
    format!("input={}", dir.display())
}

#[test]
fn flow_lift_residual_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (flow, lift, res) = (tmp.path().join("flow"), tmp.path().join("lift"), tmp.path().join("res"));
    let o = kredux(&["flow", "--out", &out_arg(&flow), "--kind", "kr", "--testbed", "torus", "t_end=0.01", "samples=100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = kredux(&["lift", "--out", &out_arg(&lift), &input_arg(&flow), "concavity=100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = kredux(&["residual", "--out", &out_arg(&res), &input_arg(&lift), "--eq", "kr", "tolerance=1e-4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&res.join("residual.json"));
    let reduced: Vec<f64> = report["reduced_linf_by_tau"].as_array().unwrap().iter().map(|t| t["linf"].as_f64().unwrap()).collect();
    assert_eq!(reduced.len(), 3);
    assert!(reduced.iter().all(|v| *v < 1e-4));

    // every output directory records its config and the hashes of its files
    for dir in [&flow, &lift, &res] {
        let meta = json(&dir.join("meta.json"));
        let hashes = meta["run"]["hashes"].as_object().unwrap();
        assert!(!hashes.is_empty());
        for (name, h) in hashes {
            let bytes = fs::read(dir.join(name)).unwrap();
            assert_eq!(h.as_str().unwrap(), hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes)));
        }
        let text = meta["run"]["config_text"].as_str().unwrap();
        assert!(RunConfig::parse(text).is_ok());
    }
    // the lift directory still reads back as a structure
    assert!(kredux::io::read_kahler(&lift).is_ok());
}

#[test]
fn reduce_cylinder() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kredux(&["reduce", "--out", &out_arg(tmp.path()), "--tau", "0.7"]);
    assert_eq!(code(&o), 0);
    let psi = kredux::io::read_field_m(&tmp.path().join("psitau.csv")).unwrap();
    let (lo, hi) = psi.values.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(hi - lo < 1e-12 && (hi + 0.49 / 4.0).abs() < 1e-9);
    assert_eq!(json(&tmp.path().join("meta.json"))["tau"].as_f64(), Some(0.7));
}

#[test]
fn soliton_residual_on_fubini_study() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["residual", "--out", &out_arg(tmp.path()), "testbed=radial", "n=257", "pole_margin=64", "eq=v_soliton", "tolerance=1e-7"];
    let o = kredux(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    // the wrong potential is a visible failure
    let o = kredux(&[&args[..], &["soliton=0"]].concat());
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_battery() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kredux(&["verify", "--out", &out_arg(tmp.path()), "nl=65"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for name in kredux::battery::IDENTITIES {
        let r = json(&tmp.path().join(format!("{name}.json")));
        assert!(r["linf"].as_f64().unwrap() < 1e-5);
        assert!(r["slope"].as_f64().unwrap() >= 2.0);
        assert_eq!(r["grid"]["nl"], 129);
    }
    // nine fiber nodes: the first failing identity is named and the exit is 2
    let coarse = tmp.path().join("coarse");
    let o = kredux(&["verify", "--out", &out_arg(&coarse), "nl=9", "n=16"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("identity failed"));
}

#[test]
fn golden_case() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kredux(&["golden", "--out", &out_arg(tmp.path())]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let r = json(&tmp.path().join("golden.json"));
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert_eq!(json(&tmp.path().join("meta.json"))["run"]["config"]["testbed"], "radial");
}

#[test]
fn input_errors_exit_three_and_breakdowns_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "# corrupted\nnl = lots\n").unwrap();
    assert_eq!(code(&kredux(&["verify", "--config", cfg.to_str().unwrap()])), 3);
    fs::write(&cfg, "no assignment here\n").unwrap();
    assert_eq!(code(&kredux(&["verify", "--config", cfg.to_str().unwrap()])), 3);
    assert_eq!(code(&kredux(&["verify", "unknown_key=1"])), 3);
    assert_eq!(code(&kredux(&["verify", "nl=5"])), 3);
    assert_eq!(code(&kredux(&["frobnicate"])), 3);
    assert_eq!(code(&kredux(&["lift"])), 3);
    let out = tmp.path().join("r");
    assert_eq!(code(&kredux(&["reduce", "--out", &out_arg(&out), "tau=5"])), 3);
    // a concavity constant too small for the fibers' ranges to overlap is a bad input
    let flow = tmp.path().join("flow");
    assert_eq!(code(&kredux(&["flow", "--out", &out_arg(&flow), "kind=kr", "samples=20"])), 0);
    let o = kredux(&["lift", "--out", &out_arg(&tmp.path().join("lift")), &input_arg(&flow), "concavity=1"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // an initial potential that is not Kähler, and fixed steps far past stability
    let o = kredux(&["flow", "--out", &out_arg(&tmp.path().join("f1")), "psi0_amplitude=0.1"]);
    assert_eq!(code(&o), 4);
    let o = kredux(&["flow", "--out", &out_arg(&tmp.path().join("f2")), "kind=calabi", "dt=1e-3", "t_end=1e-3", "samples=1", "step=fixed"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(code(&kredux(&["flow", "--out", &out_arg(dir), "kind=kr", "samples=20"])), 0);
    }
    for name in ["path.csv", "sigma.csv", "path_meta.json", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (ma, mb) = (json(&a.join("meta.json")), json(&b.join("meta.json")));
    assert_eq!(ma["run"]["hashes"], mb["run"]["hashes"]);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "testbed = torus  # the flat testbed\nnl = 65\ntau = 0.25\n").unwrap();
    let out = tmp.path().join("out");
    let o = kredux(&["reduce", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out), "tau=-0.5"]);
    assert_eq!(code(&o), 0);
    let meta = json(&out.join("meta.json"));
    assert_eq!(meta["run"]["config"]["nl"], "65");
    assert_eq!(meta["run"]["config"]["tau"], "-0.5");
    assert_eq!(meta["tau"].as_f64(), Some(-0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn config_round_trips(
        n in 9usize..80, nl in 9usize..300, lmin in -5.0f64..-0.1, width in 0.2f64..6.0,
        tol in 1e-12f64..1.0, seed in any::<u64>(), taus in proptest::collection::vec(-2.0f64..2.0, 0..5),
        radial in any::<bool>(), h in prop_oneof![Just("tau".to_string()), Just("canonical".to_string()), (-3.0f64..3.0).prop_map(|v| v.to_string())],
    ) {
        let mut cfg = RunConfig::default();
        cfg.set("testbed", if radial { "radial" } else { "torus" }).unwrap();
        cfg.n = n;
        cfg.nl = nl;
        cfg.lmin = lmin;
        cfg.lmax = lmin + width;
        cfg.tolerance = tol;
        cfg.seed = seed;
        cfg.taus = (!taus.is_empty()).then_some(taus);
        cfg.set("h", &h).unwrap();
        cfg.set("out", "some dir/out").unwrap();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
