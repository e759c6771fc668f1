//! Circle-invariant Kähler structures `ω = π*σ + dd^c φ` with moment map
//! `μ = JV(φ) + c`, their gauge freedom, and recovery of `φ` from `μ`.

use ndarray::Array2;

use crate::error::{KreduxError, Result};
use crate::field::{ddc_m, ddc_p, jv_apply, Form11M, Form11P, ScalarFieldM, ScalarFieldP};
use crate::grid::TestbedGrid;
use crate::stencil::cumulative_integral;

#[derive(Debug, Clone)]
pub struct KahlerData {
    pub sigma: Form11M,
    pub phi: ScalarFieldP,
    pub c: f64,
    pub omega: Form11P,
    pub mu: ScalarFieldP,
    /// `|V|² = JV(μ)`.
    pub vsq: ScalarFieldP,
    /// Smallest eigenvalue of ω's component matrix over all nodes.
    pub positivity_min_eig: f64,
    pub worst_node: (usize, usize),
}

impl KahlerData {
    pub fn grid(&self) -> TestbedGrid {
        self.phi.grid
    }
}

fn check_spatial(sigma: &Form11M, grid: &TestbedGrid) -> Result<()> {
    if sigma.grid.same_spatial(grid) {
        Ok(())
    } else {
        Err(KreduxError::GridMismatch)
    }
}

/// Build the triple's derived data without rejecting degenerate forms.
pub fn assemble_unchecked(sigma: &Form11M, phi: &ScalarFieldP, c: f64) -> Result<KahlerData> {
    let grid = phi.grid;
    check_spatial(sigma, &grid)?;
    if phi.values.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(KreduxError::InvalidArgument("non-finite potential data".into()));
    }
    let mu = jv_apply(phi).map(|v| v + c);
    let vsq = jv_apply(&mu);
    let omega = sigma.pullback(grid).add(&ddc_p(phi, &mu)?);
    let (worst_node, positivity_min_eig) = omega.positivity_certificate();
    Ok(KahlerData { sigma: sigma.clone(), phi: phi.clone(), c, omega, mu, vsq, positivity_min_eig, worst_node })
}

/// `ω = π*σ + dd^c φ`, `μ = JV(φ) + c`, `|V|² = JV(μ)`, with a positivity check at every node.
pub fn assemble(sigma: &Form11M, phi: &ScalarFieldP, c: f64) -> Result<KahlerData> {
    sigma.require_positive()?;
    let k = assemble_unchecked(sigma, phi, c)?;
    if !(k.positivity_min_eig > 0.0) {
        return Err(KreduxError::NotPositive { node: k.worst_node, min_eig: k.positivity_min_eig });
    }
    Ok(k)
}

/// Replace `(σ, φ, c)` by `(σ + dd^c u, φ − π*u + ((c̃ − c)/2) ℓ + b, c̃)`;
/// the resulting `ω` and `μ` are those of `k`.
pub fn gauge(k: &KahlerData, u: &ScalarFieldM, b: f64, c_new: f64) -> Result<KahlerData> {
    let grid = k.grid();
    if !u.grid.same_spatial(&grid) {
        return Err(KreduxError::GridMismatch);
    }
    let sigma = k.sigma.add(&ddc_m(u));
    sigma.require_positive()?;
    let half = 0.5 * (c_new - k.c);
    let ells = grid.ells();
    let mut values = k.phi.values.clone();
    for ((s, l), v) in values.indexed_iter_mut() {
        *v += -u.values[s] + half * ells[l] + b;
    }
    assemble(&sigma, &ScalarFieldP { grid, values }, c_new)
}

/// `φ(x, ℓ) = −½ ∫_{ℓ_min}^{ℓ} (μ(x, λ) − c) dλ`, the potential with `JV(φ) + c = μ`
/// vanishing on the lower end of the fiber window.
pub fn potential_from_moment(mu: &ScalarFieldP, c: f64) -> ScalarFieldP {
    let grid = mu.grid;
    let h = grid.dl();
    let mut values = Array2::zeros(mu.values.raw_dim());
    for s in 0..grid.spatial_len() {
        let row: Vec<f64> = mu.values.row(s).iter().map(|m| m - c).collect();
        let q = cumulative_integral(&row, h);
        for (l, v) in q.into_iter().enumerate() {
            values[[s, l]] = -0.5 * v;
        }
    }
    ScalarFieldP { grid, values }
}

/// Maximum of `∂μ/∂ℓ` over all nodes; negative for positive data.
pub fn max_fiber_slope(k: &KahlerData) -> f64 {
    k.mu.d_ell().values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{contract_v, d_scalar};
    use std::f64::consts::PI;

    fn cyl() -> KahlerData {
        let g = TestbedGrid::torus(16, 65, -2.0, 2.0).unwrap();
        assemble(&Form11M::reference(g), &ScalarFieldP::from_fn(g, |_, _, l| 0.25 * l * l), 0.0).unwrap()
    }

    #[test]
    fn cylinder_moment_data() {
        let k = cyl();
        for ((_, l), m) in k.mu.values.indexed_iter() {
            assert!((m + k.grid().ell(l)).abs() < 1e-10);
        }
        assert!(k.vsq.values.iter().all(|v| (v - 2.0).abs() < 1e-9));
        assert!(k.positivity_min_eig > 0.0);
        assert!(max_fiber_slope(&k) < 0.0);
    }

    #[test]
    fn zero_potential_is_degenerate() {
        let g = TestbedGrid::torus(16, 17, -1.0, 1.0).unwrap();
        let r = assemble(&Form11M::reference(g), &ScalarFieldP::constant(g, 0.0), 0.0);
        assert!(matches!(r, Err(KreduxError::NotPositive { .. })));
    }

    #[test]
    fn fubini_study_cylinder() {
        let g = TestbedGrid::radial(129, 8.0, 33, -1.0, 1.0).unwrap();
        let sigma = Form11M::reference(g);
        let k = assemble(&sigma, &ScalarFieldP::from_fn(g, |_, _, l| 0.25 * l * l), 0.0).unwrap();
        assert!(k.vsq.values.iter().all(|v| (v - 2.0).abs() < 1e-9));
        for ((s, _), a) in k.omega.a.indexed_iter() {
            assert!((a - sigma.h[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_preserves_form_and_moment() {
        let k = cyl();
        let g = k.grid();
        let u = ScalarFieldM::from_fn(g, |x, _| 0.01 * (2.0 * PI * x).sin());
        for (b, c_new) in [(0.0, 0.0), (5.0, 0.0), (0.0, 1.0)] {
            let kz = gauge(&k, &u, b, c_new).unwrap();
            assert!(kz.omega.sub(&k.omega).interior_linf() < 1e-10);
            assert!(kz.mu.sub(&k.mu).interior_linf() < 1e-10);
        }
    }

    #[test]
    fn moment_potential_round_trip() {
        let k = cyl();
        let phi = potential_from_moment(&k.mu, k.c);
        let lmin = k.grid().lmin;
        for ((_, l), v) in phi.values.indexed_iter() {
            let e = k.grid().ell(l);
            assert!((v - 0.25 * (e * e - lmin * lmin)).abs() < 1e-12);
        }
        let mu = jv_apply(&phi).map(|v| v + k.c);
        assert!(mu.sub(&k.mu).interior_linf() < 1e-9);
    }

    #[test]
    fn contraction_with_v_is_dmu() {
        let g = TestbedGrid::torus(16, 65, -1.0, 1.0).unwrap();
        let phi = ScalarFieldP::from_fn(g, |x, y, l| 0.25 * l * l + 0.02 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin() * l.sin());
        let k = assemble(&Form11M::reference(g), &phi, 0.3).unwrap();
        let cv = contract_v(&k.omega);
        assert!(cv.i_v.sub(&d_scalar(&k.mu)).interior_linf() < 1e-9);
        assert!(cv.i_jv_i_v.sub(&k.vsq).interior_linf() < 1e-9);
    }
}
