//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;

use kredux::{GridKind, KreduxError, Result, TestbedGrid};

/// Which structure `reduce` and `residual` act on when no input is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// CYL on the torus, FSCYL on the radial testbed.
    Auto,
    Cyl,
    Fscyl,
    Perturbed,
    Sq,
    Random,
}

impl Fixture {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => Fixture::Auto,
            "cyl" => Fixture::Cyl,
            "fscyl" => Fixture::Fscyl,
            "perturbed" => Fixture::Perturbed,
            "sq" => Fixture::Sq,
            "random" => Fixture::Random,
            other => return Err(KreduxError::Parse(format!("unknown fixture '{other}'"))),
        })
    }

    fn as_str(&self) -> &'static str {
        match self {
            Fixture::Auto => "auto",
            Fixture::Cyl => "cyl",
            Fixture::Fscyl => "fscyl",
            Fixture::Perturbed => "perturbed",
            Fixture::Sq => "sq",
            Fixture::Random => "random",
        }
    }
}

/// The `h` profile of the geodesic and Calabi residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HSpec {
    Constant(f64),
    /// `h(τ) = τ`.
    Identity,
    /// The canonical profile of the structure.
    Canonical,
}

/// Which residual decides pass or fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Reduced on lifted inputs, full on fixtures and for `v_soliton`.
    Auto,
    Full,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub testbed: GridKind,
    pub n: usize,
    pub nl: usize,
    pub lmin: f64,
    pub lmax: f64,
    pub lu: f64,
    pub margin: usize,
    pub pole_margin: usize,
    pub fixture: Fixture,
    pub amplitude: f64,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub tau: f64,
    /// `None` picks the levels from the input.
    pub taus: Option<Vec<f64>>,
    pub dtau: f64,
    pub root_tol: f64,
    pub tolerance: f64,
    pub min_order: f64,
    pub kind: String,
    pub dt: f64,
    pub t_end: f64,
    pub samples: usize,
    pub fixed_steps: bool,
    pub psi0_amplitude: f64,
    pub psi0_axis: usize,
    pub concavity: f64,
    pub lift_nl: usize,
    pub eq: String,
    pub h: HSpec,
    /// Coefficient `a` of `f(μ) = aμ²`; `None` is `λ/4`.
    pub soliton: Option<f64>,
    pub measure: Measure,
    pub case: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            testbed: GridKind::Torus,
            n: 32,
            nl: 129,
            lmin: -1.25,
            lmax: 1.25,
            lu: 8.0,
            margin: 2,
            pole_margin: 2,
            fixture: Fixture::Auto,
            amplitude: kredux::fixtures::PERTURBED_AMPLITUDE,
            input: None,
            out: None,
            seed: 1,
            tau: 0.0,
            taus: None,
            dtau: 2e-4,
            root_tol: 1e-10,
            tolerance: 1e-5,
            min_order: 2.0,
            kind: "kr".into(),
            dt: 1e-3,
            t_end: 0.01,
            samples: 100,
            fixed_steps: false,
            psi0_amplitude: 0.01,
            psi0_axis: 2,
            concavity: kredux::lift::DEFAULT_CONCAVITY,
            lift_nl: 129,
            eq: "kr_unnormalized".into(),
            h: HSpec::Constant(0.0),
            soliton: None,
            measure: Measure::Auto,
            case: "singquot".into(),
        }
    }
}

fn bad(key: &str, value: &str) -> KreduxError {
    KreduxError::Parse(format!("invalid value '{value}' for key '{key}'"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (key, value) = (key.trim(), value.trim());
        match key {
            "testbed" => {
                self.testbed = match value {
                    "torus" => GridKind::Torus,
                    "radial" => GridKind::Radial,
                    _ => return Err(bad(key, value)),
                }
            }
            "n" => self.n = num(key, value)?,
            "nl" => self.nl = num(key, value)?,
            "lmin" => self.lmin = num(key, value)?,
            "lmax" => self.lmax = num(key, value)?,
            "lu" => self.lu = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "pole_margin" => self.pole_margin = num(key, value)?,
            "fixture" => self.fixture = Fixture::parse(value)?,
            "amplitude" => self.amplitude = num(key, value)?,
            "input" => self.input = path(value),
            "out" => self.out = path(value),
            "seed" => self.seed = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "taus" => {
                self.taus = match value {
                    "auto" => None,
                    _ => Some(value.split(',').map(|t| num(key, t.trim())).collect::<Result<_>>()?),
                }
            }
            "dtau" => self.dtau = num(key, value)?,
            "root_tol" => self.root_tol = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "min_order" => self.min_order = num(key, value)?,
            "kind" => self.kind = value.parse::<kredux::flow::FlowKind>().map(|k| k.as_str().to_string())?,
            "dt" => self.dt = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "step" => {
                self.fixed_steps = match value {
                    "stable" => false,
                    "fixed" => true,
                    _ => return Err(bad(key, value)),
                }
            }
            "psi0_amplitude" => self.psi0_amplitude = num(key, value)?,
            "psi0_axis" => {
                self.psi0_axis = match value {
                    "x1" | "1" => 1,
                    "x2" | "2" => 2,
                    _ => return Err(bad(key, value)),
                }
            }
            "concavity" => self.concavity = num(key, value)?,
            "lift_nl" => self.lift_nl = num(key, value)?,
            "eq" => self.eq = value.parse::<kredux::statics::StaticEquationId>().map(|e| e.as_str().to_string())?,
            "h" => {
                self.h = match value {
                    "tau" => HSpec::Identity,
                    "canonical" => HSpec::Canonical,
                    _ => HSpec::Constant(num(key, value)?),
                }
            }
            "soliton" => {
                self.soliton = match value {
                    "auto" => None,
                    _ => Some(num(key, value)?),
                }
            }
            "measure" => {
                self.measure = match value {
                    "auto" => Measure::Auto,
                    "full" => Measure::Full,
                    "reduced" => Measure::Reduced,
                    _ => return Err(bad(key, value)),
                }
            }
            "case" => {
                if value != "singquot" {
                    return Err(bad(key, value));
                }
                self.case = value.to_string();
            }
            other => return Err(KreduxError::Parse(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a config file over the defaults and validate it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| KreduxError::Parse(format!("line {}: expected `key = value`, got `{raw}`", no + 1)))?;
            cfg.set(key, value).map_err(|e| match e {
                KreduxError::Parse(msg) => KreduxError::Parse(format!("line {}: {msg}", no + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key, in a fixed order, so that `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# kredux run configuration\n");
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let taus = match &self.taus {
            None => "auto".to_string(),
            Some(t) => t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        };
        let h = match self.h {
            HSpec::Constant(c) => c.to_string(),
            HSpec::Identity => "tau".into(),
            HSpec::Canonical => "canonical".into(),
        };
        let measure = match self.measure {
            Measure::Auto => "auto",
            Measure::Full => "full",
            Measure::Reduced => "reduced",
        };
        vec![
            ("testbed", self.testbed.as_str().to_string()),
            ("n", self.n.to_string()),
            ("nl", self.nl.to_string()),
            ("lmin", self.lmin.to_string()),
            ("lmax", self.lmax.to_string()),
            ("lu", self.lu.to_string()),
            ("margin", self.margin.to_string()),
            ("pole_margin", self.pole_margin.to_string()),
            ("fixture", self.fixture.as_str().to_string()),
            ("amplitude", self.amplitude.to_string()),
            ("input", path_str(&self.input)),
            ("out", path_str(&self.out)),
            ("seed", self.seed.to_string()),
            ("tau", self.tau.to_string()),
            ("taus", taus),
            ("dtau", self.dtau.to_string()),
            ("root_tol", self.root_tol.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("min_order", self.min_order.to_string()),
            ("kind", self.kind.clone()),
            ("dt", self.dt.to_string()),
            ("t_end", self.t_end.to_string()),
            ("samples", self.samples.to_string()),
            ("step", if self.fixed_steps { "fixed" } else { "stable" }.to_string()),
            ("psi0_amplitude", self.psi0_amplitude.to_string()),
            ("psi0_axis", format!("x{}", self.psi0_axis)),
            ("concavity", self.concavity.to_string()),
            ("lift_nl", self.lift_nl.to_string()),
            ("eq", self.eq.clone()),
            ("h", h),
            ("soliton", self.soliton.map(|a| a.to_string()).unwrap_or_else(|| "auto".into())),
            ("measure", measure.to_string()),
            ("case", self.case.clone()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 9 || self.nl < 9 || self.lift_nl < 9 {
            return Err(KreduxError::InvalidArgument("all resolutions must be at least 9".into()));
        }
        for (name, v) in [("dtau", self.dtau), ("root_tol", self.root_tol), ("tolerance", self.tolerance)] {
            if !(v > 0.0) {
                return Err(KreduxError::InvalidArgument(format!("{name} must be positive")));
            }
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<TestbedGrid> {
        let g = match self.testbed {
            GridKind::Torus => TestbedGrid::torus(self.n, self.nl, self.lmin, self.lmax)?,
            GridKind::Radial => TestbedGrid::radial(self.n, self.lu, self.nl, self.lmin, self.lmax)?,
        };
        g.with_margin(self.margin)?.with_pole_margin(self.pole_margin)
    }

    /// Overwrite the grid keys with `g`.
    pub fn set_grid(&mut self, g: &TestbedGrid) {
        self.testbed = g.kind;
        self.n = g.n;
        self.nl = g.nl;
        self.lmin = g.lmin;
        self.lmax = g.lmax;
        if g.kind == GridKind::Radial {
            self.lu = g.lu;
        }
        self.margin = g.margin;
        self.pole_margin = g.pole_margin;
    }
}
