//! The reduced-quantity identity battery on a randomized fixture, run at a
//! base resolution and again with the fiber resolution doubled and `δτ`
//! halved. An identity passes when its fine-grid gap is below the tolerance
//! and the observed order reaches the required minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::ScalarFieldP;
use crate::fixtures::{fscyl, perturbed_cyl, random_field_p, PERTURBED_AMPLITUDE};
use crate::grid::{GridKind, TestbedGrid};
use crate::reduction::{check_dcred, check_dertau, check_riccired, check_scalred, laplace_reduced, ma_reduced, DEFAULT_DTAU};
use crate::report::{observed_order, ResidualReport};
use crate::structure::{assemble, KahlerData};

/// Amplitude of the random potential added to the base fixture.
pub const FIXTURE_AMPLITUDE: f64 = 0.001;
/// Amplitude of the random test function `f`.
pub const TEST_FUNCTION_AMPLITUDE: f64 = 0.5;
/// Gaps below this at both resolutions are at roundoff and count as converged.
pub const CONVERGED_FLOOR: f64 = 1e-9;

pub const IDENTITIES: [&str; 6] = ["dertau", "dcred", "ma_reduced", "laplace_reduced", "riccired", "scalred"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    /// Coarse grid; the fine grid doubles its fiber resolution.
    pub grid: TestbedGrid,
    pub seed: u64,
    pub taus: Vec<f64>,
    /// Coarse `δτ`; halved on the fine grid.
    pub dtau: f64,
    pub tolerance: f64,
    pub min_order: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            grid: TestbedGrid::torus(32, 65, -1.25, 1.25).expect("valid defaults"),
            seed: 1,
            taus: vec![-0.3, 0.0, 0.3],
            dtau: 2.0 * DEFAULT_DTAU,
            tolerance: 1e-5,
            min_order: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub name: String,
    pub coarse: ResidualReport,
    /// Fine-grid report carrying the observed order as its slope.
    pub fine: ResidualReport,
    pub passed: bool,
}

impl IdentityOutcome {
    pub fn order(&self) -> f64 {
        self.fine.slope.unwrap_or(f64::NAN)
    }

    /// Why the identity failed, if it did.
    pub fn failure(&self, cfg: &BatteryConfig) -> Option<String> {
        if self.passed {
            return None;
        }
        if !(self.fine.linf < cfg.tolerance) {
            Some(format!("{}: gap {:e} exceeds {:e}", self.name, self.fine.linf, cfg.tolerance))
        } else {
            Some(format!("{}: observed order {:.2} below {}", self.name, self.order(), cfg.min_order))
        }
    }
}

/// The same testbed with `2(N_ℓ − 1) + 1` fiber nodes.
pub fn doubled_fiber(grid: TestbedGrid) -> Result<TestbedGrid> {
    grid.with_fiber(2 * (grid.nl - 1) + 1, grid.lmin, grid.lmax)
}

/// Perturbed cylinder (torus) or Fubini–Study cylinder (radial) plus a
/// seeded random potential.
pub fn randomized_fixture(grid: TestbedGrid, seed: u64) -> Result<KahlerData> {
    let base = match grid.kind {
        GridKind::Torus => perturbed_cyl(grid, PERTURBED_AMPLITUDE)?,
        GridKind::Radial => fscyl(grid)?,
    };
    assemble(&base.sigma, &base.phi.add(&random_field_p(grid, seed, FIXTURE_AMPLITUDE)), base.c)
}

fn test_function(grid: TestbedGrid, seed: u64) -> ScalarFieldP {
    random_field_p(grid, seed.wrapping_add(1), TEST_FUNCTION_AMPLITUDE)
}

fn identity_report(name: &str, k: &KahlerData, f: &ScalarFieldP, tau: f64, dtau: f64) -> Result<ResidualReport> {
    match name {
        "dertau" => check_dertau(k, f, tau, dtau),
        "dcred" => check_dcred(k, f, tau),
        "ma_reduced" => ma_reduced(k, &f.scale(0.1), tau),
        "laplace_reduced" => laplace_reduced(k, f, tau),
        "riccired" => check_riccired(k, tau),
        "scalred" => check_scalred(k, tau),
        other => Err(crate::error::KreduxError::InvalidArgument(format!("unknown identity `{other}`"))),
    }
}

fn run_level(name: &str, k: &KahlerData, f: &ScalarFieldP, taus: &[f64], dtau: f64) -> Result<ResidualReport> {
    let parts = taus
        .par_iter()
        .map(|&tau| identity_report(name, k, f, tau, dtau).map(|r| (tau, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ResidualReport::combine(name, k.grid(), &parts);
    if name == "dertau" {
        report.dtau = Some(dtau);
    }
    Ok(report)
}

/// Run every identity at both resolutions.
pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<IdentityOutcome>> {
    let fine_grid = doubled_fiber(cfg.grid)?;
    let coarse_k = randomized_fixture(cfg.grid, cfg.seed)?;
    let fine_k = randomized_fixture(fine_grid, cfg.seed)?;
    let (coarse_f, fine_f) = (test_function(cfg.grid, cfg.seed), test_function(fine_grid, cfg.seed));
    IDENTITIES
        .iter()
        .map(|&name| {
            let coarse = run_level(name, &coarse_k, &coarse_f, &cfg.taus, cfg.dtau)?;
            let mut fine = run_level(name, &fine_k, &fine_f, &cfg.taus, 0.5 * cfg.dtau)?;
            fine.slope = Some(observed_order(coarse.linf, fine.linf));
            let resolved = coarse.linf < CONVERGED_FLOOR && fine.linf < CONVERGED_FLOOR;
            let passed = fine.linf < cfg.tolerance && (resolved || fine.slope.unwrap() >= cfg.min_order);
            Ok(IdentityOutcome { name: name.to_string(), coarse, fine, passed })
        })
        .collect()
}
