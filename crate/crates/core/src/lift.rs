//! The converse construction: a path `ψ_t` of potentials on `M`, made
//! uniformly concave in `t`, lifts to an invariant structure on `P` whose
//! reductions at `τ = t` are `σ + dd^c ψ_t`. The fiber potential is the
//! Legendre-type transform `φ(x, ℓ) = ψ_μ(x) − μℓ/2` with `∂_t ψ_t = ℓ/2` at `t = μ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::scal_m;
use crate::error::{KreduxError, Result};
use crate::field::{ddc_m, ScalarFieldM, ScalarFieldP};
use crate::flow::FlowPath;
use crate::reduction::reduced_potential;
use crate::report::ResidualReport;
use crate::statics::Profile;
use crate::stencil::{interp_value_slope, FdStencil, LocalInterp, INTERP_POINTS};
use crate::structure::{assemble_unchecked, KahlerData};

/// The concavity constant of the shift `a_t = −C t² − ∬ sup ψ''`.
pub const DEFAULT_CONCAVITY: f64 = 1.0;

/// Fraction of the realized fiber range trimmed at each end.
pub const WINDOW_MARGIN: f64 = 0.025;

/// Largest second time-difference over `M` at every sample.
fn sup_second_derivative(path: &FlowPath) -> Result<Vec<f64>> {
    Ok(path.time_derivative(2)?.iter().map(|d| d.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect())
}

/// `a_t = −C (t − t₀)² − ∫∫ s` with `s` the per-sample sup of `ψ''`,
/// integrated exactly as a piecewise-linear function.
pub fn concavity_profile(path: &FlowPath, c: f64) -> Result<Vec<f64>> {
    if path.len() < 5 {
        return Err(KreduxError::TooFewSamples { needed: 5, got: path.len() });
    }
    if !(c >= DEFAULT_CONCAVITY) {
        return Err(KreduxError::InvalidArgument(format!("concavity constant {c} below {DEFAULT_CONCAVITY}")));
    }
    let h = path.uniform_dt()?;
    let s = sup_second_derivative(path)?;
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut a = Vec::with_capacity(path.len());
    for k in 0..path.len() {
        let t = path.times[k] - path.times[0];
        a.push(-c * t * t - i2);
        if k + 1 < path.len() {
            i2 += i1 * h + h * h * (2.0 * s[k] + s[k + 1]) / 6.0;
            i1 += 0.5 * h * (s[k] + s[k + 1]);
        }
    }
    Ok(a)
}

/// The shifted path `ψ_t + a_t` with `C = 1`, and the profile `a_t`.
pub fn concavity_shift(path: &FlowPath) -> Result<(FlowPath, Vec<f64>)> {
    concavity_shift_with(path, DEFAULT_CONCAVITY)
}

/// The shifted path `ψ_t + a_t` for a concavity constant `C ≥ 1`. Larger `C`
/// widens every fiber's range of `2∂_t ψ`, which the lift needs when `∂_t ψ`
/// varies strongly over `M`.
pub fn concavity_shift_with(path: &FlowPath, c: f64) -> Result<(FlowPath, Vec<f64>)> {
    let a = concavity_profile(path, c)?;
    Ok((path.shifted(&a)?, a))
}

/// Options for the lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    /// Fiber resolution of the lifted structure.
    pub nl: usize,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { nl: 129 }
    }
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    /// The lifted structure, with `c = 0`.
    pub data: KahlerData,
    /// Realized fiber interval `[ℓ_min, ℓ_max]`.
    pub window: (f64, f64),
    /// Levels `τ` whose level sets meet every fiber.
    pub tau_range: (f64, f64),
    pub times: Vec<f64>,
    /// Largest `|∂_t ψ − ℓ/2|` at the solved `t`.
    pub max_inversion_residual: f64,
    /// Largest `∂²ψ/∂t²` at `t = μ` over all nodes (negative iff the criterion holds).
    pub max_concavity: f64,
    /// Nodes where the sign criterion and the assembled certificate disagree.
    pub criterion_mismatches: usize,
}

struct Inversion {
    mu: Vec<f64>,
    phi: Vec<f64>,
    second: Vec<f64>,
    residual: f64,
}

/// Solve `ψ'(t) = target` on the local interpolant of one spatial node.
fn invert_node(values: &[f64], second: &[f64], t0: f64, h: f64, ells: &[f64]) -> Result<Inversion> {
    let n = values.len();
    let slope_in = |cell: usize, t: f64| interp_value_slope(values, t, t0, h, cell);
    let left: Vec<f64> = (0..n - 1).map(|k| slope_in(k, t0 + k as f64 * h).1).collect();
    let right: Vec<f64> = (0..n - 1).map(|k| slope_in(k, t0 + (k + 1) as f64 * h).1).collect();
    let mut out = Inversion { mu: Vec::with_capacity(ells.len()), phi: Vec::new(), second: Vec::new(), residual: 0.0 };
    for &l in ells {
        let target = 0.5 * l;
        if target > left[0] || target < right[n - 2] {
            return Err(KreduxError::OutOfWindow(l));
        }
        // last cell whose left slope is still above the target
        let cell = left.partition_point(|&d| d >= target).saturating_sub(1);
        let (mut a, mut b) = (t0 + cell as f64 * h, t0 + (cell + 1) as f64 * h);
        let t = if right[cell] > target {
            b
        } else {
            let w2 = |t: f64| LocalInterp::in_cell(t, t0, h, n, cell).eval(|j| second[j]);
            let mut t = a + h * (left[cell] - target) / (left[cell] - right[cell]).max(f64::MIN_POSITIVE);
            for _ in 0..60 {
                let g = slope_in(cell, t).1 - target;
                if g > 0.0 {
                    a = t;
                } else {
                    b = t;
                }
                if g.abs() <= 1e-14 * (1.0 + target.abs()) || b - a <= 1e-15 * h {
                    break;
                }
                let d = w2(t);
                let next = t - g / d;
                t = if d < 0.0 && next > a && next < b { next } else { 0.5 * (a + b) };
            }
            t
        };
        let (v, d) = slope_in(cell, t);
        out.residual = out.residual.max((d - target).abs());
        out.mu.push(t);
        out.phi.push(v - 0.5 * t * l);
        out.second.push(LocalInterp::in_cell(t, t0, h, n, cell).eval(|j| second[j]));
    }
    Ok(out)
}

/// Lift a path that is strictly concave in `t`.
pub fn legendre_lift(path: &FlowPath, opts: LiftOptions) -> Result<LiftResult> {
    let n = path.len();
    if n < INTERP_POINTS.max(6) {
        return Err(KreduxError::TooFewSamples { needed: INTERP_POINTS.max(6), got: n });
    }
    let h = path.uniform_dt()?;
    let t0 = path.times[0];
    let grid = path.grid();
    let ns = grid.spatial_len();
    let second = path.time_derivative(2)?;
    for d in &second {
        if let Some(s) = (0..ns).find(|&s| !(d.values[s] < 0.0)) {
            return Err(KreduxError::NonConcave(s));
        }
    }
    let column = |s: usize| -> Vec<f64> { (0..n).map(|k| path.psi[k].values[s]).collect() };
    let slope_at = |vals: &[f64], t: f64, cell: usize| interp_value_slope(vals, t, t0, h, cell).1;
    // per-node range of 2∂_tψ, intersected over M
    let (lo, hi) = (0..ns)
        .map(|s| {
            let v = column(s);
            (2.0 * slope_at(&v, path.times[n - 1], n - 2), 2.0 * slope_at(&v, t0, 0))
        })
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), (a, b)| (lo.max(a), hi.min(b)));
    if !(hi > lo) {
        return Err(KreduxError::InvalidArgument(format!(
            "fiber ranges of 2∂tψ do not overlap ([{lo}, {hi}]); increase the concavity constant"
        )));
    }
    let margin = WINDOW_MARGIN * (hi - lo);
    let lift_grid = grid.with_fiber(opts.nl, lo + margin, hi - margin)?;
    let ells = lift_grid.ells();
    let results: Vec<Result<Inversion>> = (0..ns)
        .into_par_iter()
        .map(|s| {
            let sec: Vec<f64> = (0..n).map(|k| second[k].values[s]).collect();
            invert_node(&column(s), &sec, t0, h, &ells)
        })
        .collect();
    let mut phi = ScalarFieldP::constant(lift_grid, 0.0);
    let mut max_inversion_residual: f64 = 0.0;
    let mut max_concavity = f64::NEG_INFINITY;
    let mut tau_lo = f64::NEG_INFINITY;
    let mut tau_hi = f64::INFINITY;
    let mut criterion = vec![false; ns * opts.nl];
    for (s, r) in results.into_iter().enumerate() {
        let inv = r?;
        max_inversion_residual = max_inversion_residual.max(inv.residual);
        tau_lo = tau_lo.max(inv.mu[opts.nl - 1]);
        tau_hi = tau_hi.min(inv.mu[0]);
        for j in 0..opts.nl {
            phi.values[[s, j]] = inv.phi[j];
            max_concavity = max_concavity.max(inv.second[j]);
            criterion[s * opts.nl + j] = inv.second[j] < 0.0;
        }
    }
    let data = assemble_unchecked(&path.sigma, &phi, 0.0)?;
    let eigs = data.omega.min_eigenvalues();
    let criterion_mismatches = (0..ns)
        .flat_map(|s| (0..opts.nl).map(move |j| (s, j)))
        .filter(|&(s, j)| criterion[s * opts.nl + j] != (eigs[[s, j]] > 0.0))
        .count();
    if !(max_concavity < 0.0) {
        return Err(KreduxError::NotPositive { node: data.worst_node, min_eig: data.positivity_min_eig });
    }
    Ok(LiftResult {
        data,
        window: (lift_grid.lmin, lift_grid.lmax),
        tau_range: (tau_lo, tau_hi),
        times: path.times.clone(),
        max_inversion_residual,
        max_concavity,
        criterion_mismatches,
    })
}

/// Reductions of a lift against its source path.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    /// Spread of (reduced `ψ_τ` − path `ψ_τ`) per level.
    pub report: ResidualReport,
    /// Largest gap between the reduced `ω_τ` and `σ + dd^c ψ_τ`.
    pub omega_gap: f64,
}

/// Compare the reductions of `lift` with the path it was built from.
pub fn roundtrip_check(path: &FlowPath, lift: &LiftResult, taus: &[f64]) -> Result<RoundtripReport> {
    let (t0, t1) = (path.times[0], path.times[path.len() - 1]);
    let grid = lift.data.grid();
    let mut report = ResidualReport::new("roundtrip", grid, 0.0, 0.0);
    let mut omega_gap: f64 = 0.0;
    let mut sq = 0.0;
    for &tau in taus {
        if tau < t0.max(lift.tau_range.0) || tau > t1.min(lift.tau_range.1) {
            return Err(KreduxError::OutOfRange { tau, nodes: vec![] });
        }
        let red = reduced_potential(&lift.data, tau)?;
        let expected = path.value_at(tau)?;
        let spread = red.psi_tau.zip_map(&expected, |a, b| a - b).interior_spread();
        let target = path.sigma.add(&ddc_m(&expected));
        let gap = ScalarFieldM { grid: target.grid, values: &red.omega_tau.h - &target.h }.interior_linf();
        omega_gap = omega_gap.max(gap);
        report = report.with_tau(tau, spread);
        report.linf = report.linf.max(spread);
        sq += spread * spread;
    }
    if !taus.is_empty() {
        report.l2 = (sq / taus.len() as f64).sqrt();
    }
    Ok(RoundtripReport { report, omega_gap })
}

/// The candidate `|V|² = −C / ∂_τ(scal(g_τ) − h)` along a path indexed by `τ = t`.
#[derive(Debug, Clone)]
pub struct ConverseW {
    pub taus: Vec<f64>,
    pub w: Vec<ScalarFieldM>,
    /// Smallest value of `w` over all samples and nodes.
    pub min_w: f64,
}

pub fn calabi_converse_w(path: &FlowPath, h: &Profile, c: f64) -> Result<ConverseW> {
    let n = path.len();
    if n < 6 {
        return Err(KreduxError::TooFewSamples { needed: 6, got: n });
    }
    let dt = path.uniform_dt()?;
    let grid = path.grid();
    let scal: Vec<ScalarFieldM> = (0..n).map(|k| scal_m(&path.omega(k))).collect::<Result<_>>()?;
    let hs: Vec<f64> = path.times.iter().map(|&t| h.eval(t)).collect::<Result<_>>()?;
    let stencil = FdStencil::new(n, 1);
    let dh = stencil.apply(&hs, dt);
    let mut w = vec![ScalarFieldM::constant(grid, 0.0); n];
    for s in 0..grid.spatial_len() {
        stencil.apply_with(dt, |k| scal[k].values[s], |k, d| w[k].values[s] = d);
    }
    let mut bad = Vec::new();
    let mut min_w = f64::INFINITY;
    for (k, wk) in w.iter_mut().enumerate() {
        for s in 0..grid.spatial_len() {
            let denom = wk.values[s] - dh[k];
            let value = -c / denom;
            if !(value > 0.0 && value.is_finite()) {
                if grid.spatial_interior(s) {
                    bad.push((path.times[k], s));
                }
            } else {
                min_w = min_w.min(value);
            }
            wk.values[s] = value;
        }
    }
    if !bad.is_empty() {
        return Err(KreduxError::HypothesisViolated(bad));
    }
    Ok(ConverseW { taus: path.times.clone(), w, min_w })
}
