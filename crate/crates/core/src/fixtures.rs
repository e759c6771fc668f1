//! Canonical test structures and randomized smooth fields.
//!
//! * CYL: flat unit torus, `φ = ¼ℓ²`, `c = 0`.
//! * FSCYL: Fubini–Study sphere, `φ = ¼ℓ²`, `c = 0`.
//! * SQ: `CP¹ × C*` with the metric induced from `CP² × C`; in the affine
//!   chart `u = |x₁/x₀|²` its moment map is `−s(1+s+u+u²)/(s+u+u²)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{KreduxError, Result};
use crate::field::{Form11M, ScalarFieldM, ScalarFieldP};
use crate::grid::{GridKind, TestbedGrid};
use crate::structure::{assemble, KahlerData};

/// Amplitude of the spatial bump in the perturbed cylinder.
pub const PERTURBED_AMPLITUDE: f64 = 0.01;

fn require(grid: &TestbedGrid, kind: GridKind) -> Result<()> {
    if grid.kind == kind {
        Ok(())
    } else {
        Err(KreduxError::InvalidGrid(format!("fixture needs a {} testbed", kind.as_str())))
    }
}

pub fn cylinder_potential(grid: TestbedGrid) -> ScalarFieldP {
    ScalarFieldP::from_fn(grid, |_, _, l| 0.25 * l * l)
}

pub fn cyl(grid: TestbedGrid) -> Result<KahlerData> {
    require(&grid, GridKind::Torus)?;
    assemble(&Form11M::reference(grid), &cylinder_potential(grid), 0.0)
}

pub fn fscyl(grid: TestbedGrid) -> Result<KahlerData> {
    require(&grid, GridKind::Radial)?;
    assemble(&Form11M::reference(grid), &cylinder_potential(grid), 0.0)
}

/// CYL with `φ += amp·cos(2πx₁) e^{−ℓ²}`.
pub fn perturbed_cyl(grid: TestbedGrid, amp: f64) -> Result<KahlerData> {
    require(&grid, GridKind::Torus)?;
    let phi = ScalarFieldP::from_fn(grid, |x, _, l| 0.25 * l * l + amp * (2.0 * PI * x).cos() * (-l * l).exp());
    assemble(&Form11M::reference(grid), &phi, 0.0)
}

/// The printed moment map in terms of `u = |x₁/x₀|²` and `s = |w|²`.
pub fn sq_moment(u: f64, s: f64) -> f64 {
    -s * (1.0 + s + u + u * u) / (s + u + u * u)
}

/// SQ grid defaults: radial `N_u = 257`, `L_u = 8`, `ℓ ∈ [−3, 1]`, `N_ℓ = 257`.
/// The window keeps `τ = −2` inside every fiber's range while `τ = −0.5`
/// fails only near `u = 0`.
pub fn sq_grid() -> TestbedGrid {
    TestbedGrid::radial(257, 8.0, 257, -3.0, 1.0).expect("valid defaults")
}

/// SQ as a triple: `σ = dd^c log(1+u)`, `φ = ½ log((s+u+u²)/(1+u)²) + ½ s`, `c = 0`.
pub fn sq(grid: TestbedGrid) -> Result<KahlerData> {
    require(&grid, GridKind::Radial)?;
    let sigma = Form11M::reference(grid).scale(2.0);
    let phi = ScalarFieldP::from_fn(grid, |v, _, l| {
        let (u, s) = (v.exp(), l.exp());
        0.5 * (s + u + u * u).ln() - v.exp().ln_1p() + 0.5 * s
    });
    assemble(&sigma, &phi, 0.0)
}

/// The SQ moment map sampled on a grid.
pub fn sq_moment_field(grid: TestbedGrid) -> ScalarFieldP {
    ScalarFieldP::from_fn(grid, |v, _, l| sq_moment(v.exp(), l.exp()))
}

/// Random smooth field on `P`: a few low spatial modes (torus) or smooth
/// functions of `u/(1+u)` (radial, hence smooth at both poles), each times a
/// smooth profile in `ℓ`.
pub fn random_field_p(grid: TestbedGrid, seed: u64, amp: f64) -> ScalarFieldP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<[f64; 6]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0..3) as f64,
                rng.gen_range(0..3) as f64,
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.3..1.2),
                rng.gen_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let kind = grid.kind;
    ScalarFieldP::from_fn(grid, move |x, y, l| {
        terms
            .iter()
            .map(|t| {
                let spatial = match kind {
                    GridKind::Torus => (2.0 * PI * (t[1] * x + t[2] * y) + t[3]).cos(),
                    GridKind::Radial => (0.5 * (t[1] + 1.0) / (1.0 + (-x).exp()) + t[3]).cos(),
                };
                amp * t[0] * spatial * (t[4] * l + t[5]).cos()
            })
            .sum()
    })
}

/// Random resolved field on `M`.
pub fn random_field_m(grid: TestbedGrid, seed: u64, amp: f64) -> ScalarFieldM {
    let f = random_field_p(grid, seed, amp);
    ScalarFieldM { grid, values: f.values.column(grid.nl / 2).to_owned() }
}
