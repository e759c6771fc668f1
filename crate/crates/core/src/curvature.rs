//! Ricci forms, scalar curvatures and Laplacians on `M` and on `P`, and the
//! quantities `ρ` and `R` whose reductions are the curvature of `ω_τ`.
//!
//! All Ricci forms are computed relative to the analytic reference of the
//! testbed (flat or Fubini–Study on `M`, times the flat cylinder on the fiber),
//! so that only the logarithm of a volume ratio is ever differentiated.

use ndarray::Array2;

use crate::error::{KreduxError, Result};
use crate::field::{d_c, d_scalar, ddc_m, ddc_p_of, jv_apply, Form11M, Form11P, ScalarFieldM, ScalarFieldP, TwoFormP};
use crate::grid::TestbedGrid;
use crate::report::ResidualReport;
use crate::structure::KahlerData;

fn reference_ric(grid: TestbedGrid) -> Form11M {
    let h = (0..grid.spatial_len()).map(|s| grid.reference_ric_h(s)).collect();
    Form11M { grid, h }
}

/// `Ric(ω) = Ric(σ_ref) − ½ dd^c log(ω/σ_ref)`; the testbed reference
/// supplies the analytic base term, `sigma_ref` only needs to be positive.
pub fn ricci_m(omega: &Form11M, sigma_ref: &Form11M) -> Result<Form11M> {
    if !omega.grid.same_spatial(&sigma_ref.grid) {
        return Err(KreduxError::GridMismatch);
    }
    omega.require_positive()?;
    sigma_ref.require_positive()?;
    let grid = omega.grid;
    let ratio = ScalarFieldM {
        grid,
        values: (0..grid.spatial_len()).map(|s| (omega.h[s] / grid.reference_h(s)).ln()).collect(),
    };
    Ok(reference_ric(grid).add(&ddc_m(&ratio).scale(-0.5)))
}

/// `scal = H_Ric / H`.
pub fn scal_m(omega: &Form11M) -> Result<ScalarFieldM> {
    let ric = ricci_m(omega, omega)?;
    Ok(ScalarFieldM { grid: omega.grid, values: &ric.h / &omega.h })
}

/// `Δf = H⁻¹ ∂²f/∂w∂w̄`.
pub fn laplacian_m(f: &ScalarFieldM, omega: &Form11M) -> Result<ScalarFieldM> {
    omega.require_positive()?;
    Ok(ScalarFieldM { grid: f.grid, values: f.d_wwbar() / &omega.h })
}

/// Metric trace of `dd^c f` against `ω`, normalized so that it is the Laplacian.
pub fn laplacian_p(f: &ScalarFieldP, k: &KahlerData) -> ScalarFieldP {
    k.omega.half_trace_of(&ddc_p_of(f))
}

/// `Ric(ω)` on `P` relative to the product reference.
pub fn ricci_p(k: &KahlerData) -> Form11P {
    let grid = k.grid();
    let det = k.omega.det();
    let mut lr = Array2::zeros(det.raw_dim());
    for ((s, l), v) in lr.indexed_iter_mut() {
        *v = (det[[s, l]] / grid.reference_h(s)).ln();
    }
    let log_ratio = ScalarFieldP { grid, values: lr };
    reference_ric(grid).pullback(grid).add(&ddc_p_of(&log_ratio).scale(-0.5))
}

/// `scal(g) = 2 Ric ∧ ω / ω²`.
pub fn scal_p(k: &KahlerData, ric: &Form11P) -> ScalarFieldP {
    k.omega.half_trace_of(ric).scale(2.0)
}

/// `log |V|`.
pub fn log_v(k: &KahlerData) -> ScalarFieldP {
    k.vsq.map(|v| 0.5 * v.ln())
}

/// `Q = Δμ − JV log|V|`, the recurring correction term.
pub fn q_term(k: &KahlerData) -> ScalarFieldP {
    laplacian_p(&k.mu, k).sub(&jv_apply(&log_v(k)))
}

/// `ρ = Ric(ω) + dd^c log|V| + d((Q/|V|²) d^c μ)` as a real 2-form.
pub fn rho_p(k: &KahlerData) -> TwoFormP {
    let g = q_term(k).zip_map(&k.vsq, |q, v| q / v);
    ricci_p(k)
        .add(&ddc_p_of(&log_v(k)))
        .to_real()
        .add(&d_c(&k.mu).scale_by(&g).d())
}

/// `R = scal + 2Δ log|V| + (2/|V|²) Q² + JV(Q)/|V|²`.
pub fn big_r_p(k: &KahlerData) -> ScalarFieldP {
    let scal = scal_p(k, &ricci_p(k));
    let lap_logv = laplacian_p(&log_v(k), k);
    let q = q_term(k);
    let jvq = jv_apply(&q);
    let mut out = scal.values + lap_logv.values * 2.0;
    ndarray::Zip::from(&mut out).and(&q.values).and(&jvq.values).and(&k.vsq.values).for_each(|o, &q, &jq, &v| {
        *o += 2.0 * q * q / v + jq / v;
    });
    ScalarFieldP { grid: k.grid(), values: out }
}

/// Both sides stack three fiber derivatives of `φ`, so the one-sided edge
/// stencils spoil a band this many times wider than a single derivative does.
pub const MOMENT_RICCI_MARGIN_FACTOR: usize = 3;

/// Residual of `i_V Ric(ω) + dΔμ = 0`, measured on the widened fiber
/// interior (the grid's own margin when the fiber is too short to widen).
pub fn check_moment_ricci_identity(k: &KahlerData) -> ResidualReport {
    let lhs = ricci_p(k).to_real().contract_v();
    let rhs = d_scalar(&laplacian_p(&k.mu, k));
    let r = lhs.add(&rhs);
    let g = k.grid();
    let wide = g.with_margin(MOMENT_RICCI_MARGIN_FACTOR * g.margin).unwrap_or(g);
    let mut report = ResidualReport::from_p_components("moment_ricci", wide, &[&r.c[0], &r.c[1], &r.c[2]]);
    report.grid = g;
    report
}
