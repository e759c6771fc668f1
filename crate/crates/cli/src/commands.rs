//! One runner per subcommand. Each writes its artifacts into the output
//! directory and then records the resolved config and content hashes in
//! `meta.json`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use kredux::battery::{run_battery, BatteryConfig};
use kredux::flow::{self, FlowKind, FlowPath, Schedule};
use kredux::io;
use kredux::lift::{concavity_shift_with, legendre_lift, roundtrip_check, LiftOptions};
use kredux::reduction::reduced_potential;
use kredux::statics::{self, Profile, StaticEquationId};
use kredux::structure::KahlerData;
use kredux::{fixtures, golden, Form11M, GridKind, KreduxError, ScalarFieldM};

use crate::config::{Fixture, HSpec, Measure, RunConfig};

pub const EXIT_IDENTITY: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// How a run ended short of success.
#[derive(Debug)]
pub enum Failure {
    /// A computed identity missed its threshold.
    Identity(String),
    /// A numerical result outside its tolerance without a module error.
    Breakdown(String),
    Error(KreduxError),
}

impl From<KreduxError> for Failure {
    fn from(e: KreduxError) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Identity(_) => EXIT_IDENTITY,
            Failure::Breakdown(_) => EXIT_NUMERICAL,
            Failure::Error(e) => error_exit_code(e),
        }
    }
}

/// Input errors exit 3, numerical breakdowns exit 4.
pub fn error_exit_code(e: &KreduxError) -> i32 {
    use KreduxError::*;
    match e {
        InvalidGrid(_) | GridMismatch | InvalidOrder(_) | InvalidArgument(_) | OutOfRange { .. } | ClassNotFixed
        | TooFewSamples { .. } | Parse(_) | Io(_) => EXIT_INPUT,
        NotPositive { .. } | Degenerate(_) | PositivityLost(_) | StepUnstable(_) | SolvabilityViolated(_)
        | NonConcave(_) | OutOfWindow(_) | HypothesisViolated(_) => EXIT_NUMERICAL,
    }
}

pub type Outcome = std::result::Result<(), Failure>;

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("kredux-out"))
}

fn input_dir(cfg: &RunConfig) -> kredux::Result<&Path> {
    cfg.input.as_deref().ok_or_else(|| KreduxError::InvalidArgument("this command needs `input = DIR`".into()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes of every file under `dir` except `meta.json`, keyed by relative path.
fn content_hashes(dir: &Path) -> kredux::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            if rel != "meta.json" {
                out.insert(rel, sha256_hex(&fs::read(&p)?));
            }
        }
    }
    Ok(out)
}

/// Merge the run record into `meta.json`, keeping any structure metadata a
/// module already wrote there.
fn write_meta(dir: &Path, command: &str, cfg: &RunConfig, extra: Value) -> kredux::Result<()> {
    let path = dir.join("meta.json");
    let mut meta = match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice::<Value>(&bytes).map_err(|e| KreduxError::Parse(e.to_string()))?,
        Err(_) => json!({}),
    };
    let config: BTreeMap<&str, String> = cfg.entries().into_iter().collect();
    let run = json!({
        "command": command,
        "config": config,
        "config_text": cfg.to_text(),
        "hashes": content_hashes(dir)?,
        "summary": extra,
    });
    match meta.as_object_mut() {
        Some(obj) => {
            obj.insert("run".into(), run);
        }
        None => meta = json!({ "run": run }),
    }
    io::write_json(&path, &meta)
}

fn structure(cfg: &RunConfig) -> kredux::Result<KahlerData> {
    if let Some(dir) = &cfg.input {
        return io::read_kahler(dir);
    }
    let g = cfg.grid()?;
    match (cfg.fixture, g.kind) {
        (Fixture::Auto, GridKind::Torus) | (Fixture::Cyl, _) => fixtures::cyl(g),
        (Fixture::Auto, GridKind::Radial) | (Fixture::Fscyl, _) => fixtures::fscyl(g),
        (Fixture::Perturbed, _) => fixtures::perturbed_cyl(g, cfg.amplitude),
        (Fixture::Sq, _) => fixtures::sq(g),
        (Fixture::Random, _) => kredux::battery::randomized_fixture(g, cfg.seed),
    }
}

pub fn verify(cfg: &RunConfig) -> Outcome {
    let grid = cfg.grid()?;
    let bc = BatteryConfig {
        grid,
        seed: cfg.seed,
        taus: cfg.taus.clone().unwrap_or_else(|| BatteryConfig::default().taus),
        dtau: cfg.dtau,
        tolerance: cfg.tolerance,
        min_order: cfg.min_order,
    };
    let outcomes = run_battery(&bc)?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(KreduxError::from)?;
    for o in &outcomes {
        io::write_json(&dir.join(format!("{}.json", o.name)), &o.fine)?;
        io::write_json(&dir.join(format!("{}.coarse.json", o.name)), &o.coarse)?;
    }
    let summary: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({ "identity": o.name, "linf": o.fine.linf, "order": o.order(), "passed": o.passed }))
        .collect();
    write_meta(&dir, "verify", cfg, json!(summary))?;
    for o in &outcomes {
        println!("{:<16} linf {:.3e}  order {:>5.2}  {}", o.name, o.fine.linf, o.order(), if o.passed { "pass" } else { "FAIL" });
    }
    match outcomes.iter().find_map(|o| o.failure(&bc)) {
        Some(msg) => Err(Failure::Identity(msg)),
        None => Ok(()),
    }
}

pub fn reduce(cfg: &RunConfig) -> Outcome {
    let k = structure(cfg)?;
    let r = reduced_potential(&k, cfg.tau)?;
    let dir = out_dir(cfg);
    io::write_reduction(&dir, &r)?;
    let spread = r.psi_tau.interior_spread();
    write_meta(&dir, "reduce", cfg, json!({ "tau": r.tau, "max_root_residual": r.max_root_residual, "psi_tau_spread": spread }))?;
    println!("tau {}  root residual {:.3e}  psi_tau spread {:.3e}", r.tau, r.max_root_residual, spread);
    if r.max_root_residual > cfg.root_tol {
        return Err(Failure::Breakdown(format!("root residual {:e} exceeds {:e}", r.max_root_residual, cfg.root_tol)));
    }
    Ok(())
}

fn initial_potential(cfg: &RunConfig, g: kredux::TestbedGrid) -> ScalarFieldM {
    let (amp, axis) = (cfg.psi0_amplitude, cfg.psi0_axis);
    ScalarFieldM::from_fn(g, move |x, y| amp * (2.0 * PI * if axis == 1 { x } else { y }).cos())
}

pub fn flow(cfg: &RunConfig) -> Outcome {
    let g = cfg.grid()?;
    let sigma = Form11M::reference(g);
    let psi0 = initial_potential(cfg, g);
    let mut sched = Schedule::new(cfg.t_end, cfg.dt, cfg.samples);
    if cfg.fixed_steps {
        sched = sched.fixed();
    }
    let kind: FlowKind = cfg.kind.parse()?;
    let path = match kind {
        FlowKind::Calabi => flow::calabi_integrate(&psi0, &sigma, sched)?,
        FlowKind::PseudoCalabi => flow::pseudo_calabi_integrate(&psi0, &sigma, sched)?,
        FlowKind::Kr => flow::kr_integrate(&psi0, &sigma, sched, false, 0.0)?,
        FlowKind::KrNormalized => flow::kr_integrate(&psi0, &sigma, sched, true, statics::lambda_mean(&sigma)?)?,
        FlowKind::Given => return Err(KreduxError::InvalidArgument("kind = given cannot be integrated".into()).into()),
    };
    let lambda = statics::lambda_mean(&sigma)?;
    let diagnostics = (0..path.len())
        .into_par_iter()
        .map(|k| {
            let w = path.omega(k);
            Ok(json!({
                "t": path.times[k],
                "volume": flow::volume(&w)?,
                "ricci_linf": flow::ricci_linf(&w)?,
                "calabi_energy": flow::calabi_energy(&w, lambda)?,
            }))
        })
        .collect::<kredux::Result<Vec<Value>>>()?;
    let dir = out_dir(cfg);
    io::write_path(&dir, &path)?;
    io::write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    write_meta(&dir, "flow", cfg, json!({ "kind": kind.as_str(), "samples": path.len(), "steps": path.steps.len() }))?;
    println!("{} flow: {} samples up to t = {}", kind.as_str(), path.len(), cfg.t_end);
    Ok(())
}

/// Pseudo-Calabi paths lift in the doubled time variable.
fn lift_ready(path: FlowPath) -> kredux::Result<FlowPath> {
    match path.kind {
        FlowKind::PseudoCalabi => path.rescale_time(2.0),
        _ => Ok(path),
    }
}

fn mid_taus(range: (f64, f64), count: usize) -> Vec<f64> {
    let (lo, hi) = range;
    (0..count).map(|i| lo + (hi - lo) * (i + 1) as f64 / (count + 1) as f64).collect()
}

pub fn lift(cfg: &RunConfig) -> Outcome {
    let path = lift_ready(io::read_path(input_dir(cfg)?)?)?;
    let (shifted, a) = concavity_shift_with(&path, cfg.concavity)?;
    let lifted = legendre_lift(&shifted, LiftOptions { nl: cfg.lift_nl })?;
    let taus = mid_taus(lifted.tau_range, 3);
    let rt = roundtrip_check(&shifted, &lifted, &taus)?;
    let dir = out_dir(cfg);
    io::write_lift(&dir, &lifted, &a)?;
    io::write_json(&dir.join("roundtrip.json"), &rt.report)?;
    write_meta(
        &dir,
        "lift",
        cfg,
        json!({ "tau_range": lifted.tau_range, "window": lifted.window, "roundtrip_linf": rt.report.linf }),
    )?;
    println!("lift window {:?}  tau range {:?}  round trip {:.3e}", lifted.window, lifted.tau_range, rt.report.linf);
    Ok(())
}

fn h_profile(cfg: &RunConfig, k: &KahlerData, taus: &[f64]) -> kredux::Result<Profile> {
    Ok(match cfg.h {
        HSpec::Constant(c) => Profile::Constant(c),
        HSpec::Identity => Profile::analytic(|t| t),
        HSpec::Canonical => statics::h_canonical(k, taus)?,
    })
}

pub fn residual(cfg: &RunConfig) -> Outcome {
    let k = structure(cfg)?;
    let lift_meta: Option<io::LiftMeta> = match &cfg.input {
        Some(dir) if dir.join("lift_meta.json").exists() => Some(io::read_json(&dir.join("lift_meta.json"))?),
        _ => None,
    };
    let eq: StaticEquationId = cfg.eq.parse()?;
    let taus = match (&cfg.taus, &lift_meta) {
        (Some(t), _) => t.clone(),
        (None, Some(m)) => mid_taus(m.tau_range, 3),
        (None, None) => BatteryConfig::default().taus,
    };
    let report = match eq {
        StaticEquationId::Geodesic => statics::residual_geodesic(&k, &h_profile(cfg, &k, &taus)?, &taus)?,
        StaticEquationId::Calabi => statics::residual_calabi(&k, &h_profile(cfg, &k, &taus)?, &taus)?,
        StaticEquationId::PseudoCalabi => statics::residual_pseudo_calabi(&k, &taus)?,
        StaticEquationId::KrUnnormalized => statics::residual_kr(&k, &taus)?,
        StaticEquationId::VSoliton => {
            let a = match cfg.soliton {
                Some(a) => a,
                None => 0.25 * statics::lambda_mean(&k.sigma)?,
            };
            statics::residual_v_soliton(&k, &Profile::analytic(move |m| a * m * m))?
        }
    };
    let reduced = match cfg.measure {
        Measure::Full => false,
        Measure::Reduced => true,
        Measure::Auto => lift_meta.is_some() && eq != StaticEquationId::VSoliton,
    };
    if reduced && report.reduced_linf_by_tau.is_empty() {
        return Err(KreduxError::InvalidArgument(format!("{} has no reduced residual", eq.as_str())).into());
    }
    let value = if reduced { report.reduced_linf() } else { report.linf };
    let passed = value < cfg.tolerance;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(KreduxError::from)?;
    io::write_json(&dir.join("residual.json"), &report)?;
    write_meta(
        &dir,
        "residual",
        cfg,
        json!({ "equation": eq.as_str(), "measure": if reduced { "reduced" } else { "full" }, "value": value, "passed": passed }),
    )?;
    println!("{} {} residual {:.3e} (tolerance {:e})", eq.as_str(), if reduced { "reduced" } else { "full" }, value, cfg.tolerance);
    if passed {
        Ok(())
    } else {
        Err(Failure::Identity(format!("{}: residual {:e} exceeds {:e}", eq.as_str(), value, cfg.tolerance)))
    }
}

/// The singular quotient needs the log chart; a torus config falls back to
/// the case's own grid, which the resolved config then records.
pub fn golden(cfg: &mut RunConfig) -> Outcome {
    let grid = match cfg.testbed {
        GridKind::Radial => cfg.grid()?,
        GridKind::Torus => fixtures::sq_grid(),
    };
    cfg.set_grid(&grid);
    let report = golden::singquot(grid)?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(KreduxError::from)?;
    io::write_json(&dir.join("golden.json"), &report)?;
    write_meta(&dir, "golden", cfg, json!({ "case": report.case, "passed": report.passed() }))?;
    for c in &report.checks {
        println!("{:<40} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match report.first_failure() {
        Some(c) => Err(Failure::Identity(format!("{}: {}", c.name, c.detail))),
        None => Ok(()),
    }
}
