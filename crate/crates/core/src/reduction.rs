//! Level sets of the moment map, the reduction map `f ↦ f_τ` for functions
//! and forms, reduced potentials, and the reduced-quantity identity checks.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{big_r_p, laplacian_m, laplacian_p, q_term, rho_p, ricci_m, scal_m};
use crate::error::{KreduxError, Result};
use crate::field::{d_c, ddc_m, jv_apply, Form11M, OneFormP, ScalarFieldM, ScalarFieldP, TwoFormP};
use crate::grid::TestbedGrid;
use crate::report::{m_norms, ResidualReport};
use crate::stencil::{interp_value_slope, LocalInterp};
use crate::structure::KahlerData;

/// Root tolerance relative to `max(1, |τ|)`.
pub const ROOT_TOL: f64 = 1e-12;
/// Default step for τ-derivatives.
pub const DEFAULT_DTAU: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct LevelSet {
    /// `ℓ_τ(x) = log s_τ(x)`.
    pub ltau: ScalarFieldM,
    pub max_residual: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionMeta {
    pub tau: f64,
    pub max_root_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub tau: f64,
    pub ltau: ScalarFieldM,
    pub psi_tau: ScalarFieldM,
    pub omega_tau: Form11M,
    pub max_root_residual: f64,
    pub max_iterations: usize,
}

impl ReductionResult {
    pub fn meta(&self) -> ReductionMeta {
        ReductionMeta { tau: self.tau, max_root_residual: self.max_root_residual }
    }
}

/// Solve `p(ℓ) = τ` for the local fiber interpolant `p` of `row`.
/// Returns `(ℓ, |p(ℓ) − τ|, iterations)` or `None` if τ is outside the row's range.
fn fiber_root(row: &[f64], tau: f64, x0: f64, h: f64) -> Option<(f64, f64, usize)> {
    let n = row.len();
    let tol = ROOT_TOL * tau.abs().max(1.0);
    let cell = (0..n - 1).find(|&k| (row[k] - tau) * (row[k + 1] - tau) <= 0.0)?;
    let (mut a, mut b) = (x0 + cell as f64 * h, x0 + (cell + 1) as f64 * h);
    let mut fa = row[cell] - tau;
    let fb = row[cell + 1] - tau;
    if fa == 0.0 {
        return Some((a, 0.0, 0));
    }
    if fb == 0.0 {
        return Some((b, 0.0, 0));
    }
    let mut x = a + (b - a) * fa / (fa - fb);
    let mut best = (x, f64::INFINITY);
    for it in 1..=200 {
        let (v, d) = interp_value_slope(row, x, x0, h, cell);
        let r = v - tau;
        if r.abs() < best.1 {
            best = (x, r.abs());
        }
        if r.abs() < tol {
            return Some((x, r.abs(), it));
        }
        if (r > 0.0) == (fa > 0.0) {
            a = x;
            fa = r;
        } else {
            b = x;
        }
        let newton = x - r / d;
        x = if d != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a < 4.0 * f64::EPSILON * (1.0 + x.abs()) {
            let (v, _) = interp_value_slope(row, x, x0, h, cell);
            return Some((x, (v - tau).abs().min(best.1), it));
        }
    }
    Some((best.0, best.1, 200))
}

/// Level set `μ(x, ℓ_τ(x)) = τ` with diagnostics.
pub fn solve_level_set(k: &KahlerData, tau: f64) -> Result<LevelSet> {
    let grid = k.grid();
    let (x0, h) = (grid.lmin, grid.dl());
    let sols: Vec<Option<(f64, f64, usize)>> = (0..grid.spatial_len())
        .into_par_iter()
        .map(|s| {
            let row: Vec<f64> = k.mu.values.row(s).to_vec();
            fiber_root(&row, tau, x0, h)
        })
        .collect();
    let failing: Vec<usize> = sols.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(s, _)| s).collect();
    if !failing.is_empty() {
        return Err(KreduxError::OutOfRange { tau, nodes: failing });
    }
    let mut values = Array1::zeros(grid.spatial_len());
    let mut max_residual: f64 = 0.0;
    let mut max_iterations = 0;
    for (s, r) in sols.into_iter().enumerate() {
        let (l, res, it) = r.expect("checked");
        values[s] = l;
        max_residual = max_residual.max(res);
        max_iterations = max_iterations.max(it);
    }
    Ok(LevelSet { ltau: ScalarFieldM { grid, values }, max_residual, max_iterations })
}

/// `ℓ_τ(x) = log s_τ(x)`.
pub fn level_set(k: &KahlerData, tau: f64) -> Result<ScalarFieldM> {
    Ok(solve_level_set(k, tau)?.ltau)
}

fn check_window(grid: &TestbedGrid, ltau: &ScalarFieldM) -> Result<()> {
    if !ltau.grid.same_spatial(grid) {
        return Err(KreduxError::GridMismatch);
    }
    if let Some(l) = ltau.values.iter().find(|&&l| !(l >= grid.lmin && l <= grid.lmax)) {
        return Err(KreduxError::InvalidArgument(format!(
            "level {l} outside fiber window [{}, {}]; extrapolation is not allowed",
            grid.lmin, grid.lmax
        )));
    }
    Ok(())
}

fn reduce_array(grid: &TestbedGrid, arr: &ndarray::Array2<f64>, ltau: &ScalarFieldM) -> Array1<f64> {
    let (x0, h, n) = (grid.lmin, grid.dl(), grid.nl);
    Array1::from_shape_fn(grid.spatial_len(), |s| {
        let li = LocalInterp::at(ltau.values[s], x0, h, n);
        li.eval(|j| arr[[s, j]])
    })
}

/// `f_τ(x) = f(x, ℓ_τ(x))` by fiber interpolation.
pub fn reduce_scalar(f: &ScalarFieldP, ltau: &ScalarFieldM) -> Result<ScalarFieldM> {
    check_window(&f.grid, ltau)?;
    Ok(ScalarFieldM { grid: ltau.grid, values: reduce_array(&f.grid, &f.values, ltau) })
}

/// Spatial components of the pullback of an invariant 1-form to the level set.
pub fn reduce_one_form(alpha: &OneFormP, ltau: &ScalarFieldM) -> Result<(Array1<f64>, Array1<f64>)> {
    let grid = alpha.grid;
    check_window(&grid, ltau)?;
    let (l1, l2) = ltau.gradient();
    let [a1, a2, al, _] = &alpha.c;
    let (r1, r2, rl) = (reduce_array(&grid, a1, ltau), reduce_array(&grid, a2, ltau), reduce_array(&grid, al, ltau));
    Ok((&r1 + &(&l1 * &rl), &r2 + &(&l2 * &rl)))
}

/// Reduction of a 2-form that is basic on the level set, returned as `H_τ`.
pub fn reduce_two_form(theta: &TwoFormP, ltau: &ScalarFieldM) -> Result<Form11M> {
    let grid = theta.grid;
    check_window(&grid, ltau)?;
    let (l1, l2) = ltau.gradient();
    let c12 = reduce_array(&grid, &theta.c12, ltau);
    let c1l = reduce_array(&grid, &theta.c1l, ltau);
    let c2l = reduce_array(&grid, &theta.c2l, ltau);
    let pulled = c12 + &l2 * &c1l - &l1 * &c2l;
    Ok(Form11M { grid: ltau.grid, h: pulled / (2.0 * grid.kappa()) })
}

/// `ψ = φ + ((μ − c)/2) ℓ`.
pub fn psi_field(k: &KahlerData) -> ScalarFieldP {
    let ell = ScalarFieldP::log_s(k.grid());
    k.phi.add(&k.mu.map(|m| 0.5 * (m - k.c)).mul(&ell))
}

/// Reduced potential `ψ_τ` and reduced form `ω_τ = σ + dd^c ψ_τ`.
pub fn reduced_potential(k: &KahlerData, tau: f64) -> Result<ReductionResult> {
    let ls = solve_level_set(k, tau)?;
    let psi_tau = reduce_scalar(&psi_field(k), &ls.ltau)?;
    let omega_tau = k.sigma.add(&ddc_m(&psi_tau));
    let (s, min) = omega_tau.min_component();
    if !(min > 0.0) {
        return Err(KreduxError::NotPositive { node: (s, 0), min_eig: min });
    }
    Ok(ReductionResult {
        tau,
        ltau: ls.ltau,
        psi_tau,
        omega_tau,
        max_root_residual: ls.max_residual,
        max_iterations: ls.max_iterations,
    })
}

fn gap_report(name: &str, grid: TestbedGrid, tau: f64, gaps: &[Array1<f64>]) -> ResidualReport {
    let mut linf: f64 = 0.0;
    let mut sq = 0.0;
    for g in gaps {
        let (a, b) = m_norms(&grid, g);
        linf = linf.max(a);
        sq += b * b;
    }
    ResidualReport::new(name, grid, linf, sq.sqrt()).with_tau(tau, linf)
}

/// `∂f_τ/∂τ = (JV(f)/|V|²)_τ`, with the left side by central differences.
pub fn check_dertau(k: &KahlerData, f: &ScalarFieldP, tau: f64, dtau: f64) -> Result<ResidualReport> {
    if !(dtau > 0.0) {
        return Err(KreduxError::InvalidArgument("δτ must be positive".into()));
    }
    let up = reduce_scalar(f, &level_set(k, tau + dtau)?)?;
    let dn = reduce_scalar(f, &level_set(k, tau - dtau)?)?;
    let lhs = (up.values - dn.values) / (2.0 * dtau);
    let ratio = jv_apply(f).zip_map(&k.vsq, |a, b| a / b);
    let rhs = reduce_scalar(&ratio, &level_set(k, tau)?)?;
    Ok(gap_report("dertau", k.grid(), tau, &[lhs - rhs.values]).with_dtau(dtau))
}

/// `d^c f − (JV(f)/|V|²) d^c μ`, the 1-form whose reduction is `d^c f_τ`.
pub fn dc_reduced_form(k: &KahlerData, f: &ScalarFieldP) -> OneFormP {
    let g = jv_apply(f).zip_map(&k.vsq, |a, b| a / b);
    d_c(f).sub(&d_c(&k.mu).scale_by(&g))
}

/// `d^c f_τ = (d^c f − (JV(f)/|V|²) d^c μ)_τ`, comparing spatial components.
pub fn check_dcred(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<ResidualReport> {
    let ltau = level_set(k, tau)?;
    let ft = reduce_scalar(f, &ltau)?;
    let kap = k.grid().kappa();
    let (g1, g2) = ft.gradient();
    let (r1, r2) = reduce_one_form(&dc_reduced_form(k, f), &ltau)?;
    let gap1 = &g2 * (-kap) - r1;
    let gap2 = &g1 / kap - r2;
    Ok(gap_report("dcred", k.grid(), tau, &[gap1, gap2]))
}

/// Both sides of the reduced Monge–Ampère identity at τ: `(M-side, P-side reduced)`.
pub fn ma_sides(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<(ScalarFieldM, ScalarFieldM)> {
    let red = reduced_potential(k, tau)?;
    let ft = reduce_scalar(f, &red.ltau)?;
    let lhs = ScalarFieldM { grid: ft.grid, values: 1.0 + ft.d_wwbar() * 2.0 / &red.omega_tau.h };
    let omega = k.omega.to_real();
    let xi = omega.add(&dc_reduced_form(k, f).d());
    let den = omega.wedge(&omega).c;
    if let Some(((s, l), _)) = den.indexed_iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(KreduxError::Degenerate((s, l)));
    }
    let ratio = ScalarFieldP { grid: k.grid(), values: xi.wedge(&xi).c / den };
    let rhs = reduce_scalar(&ratio, &red.ltau)?;
    Ok((lhs, rhs))
}

/// `(ω_τ + dd^c f_τ)/ω_τ = (ξ²/ω²)_τ` with `ξ = ω + d(d^c f − (JV f/|V|²) d^c μ)`.
pub fn ma_reduced(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<ResidualReport> {
    let (lhs, rhs) = ma_sides(k, f, tau)?;
    Ok(gap_report("ma_reduced", k.grid(), tau, &[lhs.values - rhs.values]))
}

/// The P-side expression whose reduction is `Δ_τ f_τ`.
pub fn laplace_reduced_rhs(k: &KahlerData, f: &ScalarFieldP) -> ScalarFieldP {
    let lap = laplacian_p(f, k);
    let q = q_term(k);
    let jvf = jv_apply(f);
    let jv2f = f.d_ell2().scale(4.0);
    let mut out = lap.values.clone();
    ndarray::Zip::from(&mut out)
        .and(&q.values)
        .and(&jvf.values)
        .and(&jv2f.values)
        .and(&k.vsq.values)
        .for_each(|o, &q, &j1, &j2, &v| *o -= q * j1 / v + j2 / (2.0 * v));
    ScalarFieldP { grid: k.grid(), values: out }
}

/// `Δ_τ f_τ = (Δf − Q JV(f)/|V|² − (JV)²f/(2|V|²))_τ`.
pub fn laplace_reduced(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<ResidualReport> {
    let red = reduced_potential(k, tau)?;
    let ft = reduce_scalar(f, &red.ltau)?;
    let lhs = laplacian_m(&ft, &red.omega_tau)?;
    let rhs = reduce_scalar(&laplace_reduced_rhs(k, f), &red.ltau)?;
    Ok(gap_report("laplace_reduced", k.grid(), tau, &[lhs.values - rhs.values]))
}

/// `Ric(ω_τ) = (ρ)_τ`, comparing the reduced form component with the Ricci
/// form of `ω_τ` taken against the testbed reference.
pub fn check_riccired(k: &KahlerData, tau: f64) -> Result<ResidualReport> {
    let red = reduced_potential(k, tau)?;
    let lhs = ricci_m(&red.omega_tau, &Form11M::reference(red.omega_tau.grid))?;
    let rhs = reduce_two_form(&rho_p(k), &red.ltau)?;
    Ok(gap_report("riccired", k.grid(), tau, &[lhs.h - rhs.h]))
}

/// `scal(g_τ) = (R)_τ`.
pub fn check_scalred(k: &KahlerData, tau: f64) -> Result<ResidualReport> {
    let red = reduced_potential(k, tau)?;
    let lhs = scal_m(&red.omega_tau)?;
    let rhs = reduce_scalar(&big_r_p(k), &red.ltau)?;
    Ok(gap_report("scalred", k.grid(), tau, &[lhs.values - rhs.values]))
}
