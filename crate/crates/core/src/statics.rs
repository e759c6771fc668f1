//! Residuals of the five static equations on `P`, together with the
//! normalizations `λ` and `h(τ)` and reparametrization of the moment map.
//!
//! Every residual carries a reduced-level companion evaluated on the level
//! sets `μ = τ` of the requested τ samples: this is the statement whose
//! vanishing is equivalent to the corresponding flow on `M`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::curvature::{big_r_p, log_v, q_term, ricci_m, ricci_p, rho_p, scal_m};
use crate::error::{KreduxError, Result};
use crate::field::{d_c, ddc_m, ddc_p_of, integrate_m, Form11M, ScalarFieldM, ScalarFieldP};
use crate::reduction::{level_set, reduce_scalar, reduced_potential};
use crate::report::{m_norms, ResidualReport};
use crate::stencil::cumulative_integral;
use crate::structure::{assemble, KahlerData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticEquationId {
    Geodesic,
    Calabi,
    PseudoCalabi,
    KrUnnormalized,
    VSoliton,
}

impl StaticEquationId {
    pub fn as_str(&self) -> &'static str {
        match self {
            StaticEquationId::Geodesic => "geodesic",
            StaticEquationId::Calabi => "calabi",
            StaticEquationId::PseudoCalabi => "pseudo_calabi",
            StaticEquationId::KrUnnormalized => "kr_unnormalized",
            StaticEquationId::VSoliton => "v_soliton",
        }
    }
}

impl FromStr for StaticEquationId {
    type Err = KreduxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(StaticEquationId::Geodesic),
            "calabi" => Ok(StaticEquationId::Calabi),
            "pseudo_calabi" => Ok(StaticEquationId::PseudoCalabi),
            "kr" | "kr_unnormalized" => Ok(StaticEquationId::KrUnnormalized),
            "v_soliton" => Ok(StaticEquationId::VSoliton),
            other => Err(KreduxError::Parse(format!("unknown equation '{other}'"))),
        }
    }
}

/// A function of the moment map: constant, tabulated with local cubic
/// interpolation, or given analytically.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    Tabulated { taus: Vec<f64>, values: Vec<f64> },
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Tabulated { taus, values } => f.debug_struct("Tabulated").field("taus", taus).field("values", values).finish(),
            Profile::Analytic(_) => write!(f, "Analytic(..)"),
        }
    }
}

impl Profile {
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Analytic(Arc::new(f))
    }

    /// Tabulated profile on strictly increasing nodes.
    pub fn tabulated(taus: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if taus.is_empty() || taus.len() != values.len() {
            return Err(KreduxError::InvalidArgument("profile table needs matching non-empty columns".into()));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KreduxError::InvalidArgument("profile nodes must increase strictly".into()));
        }
        Ok(Profile::Tabulated { taus, values })
    }

    /// Value at τ; tabulated profiles reject τ outside their nodes.
    pub fn eval(&self, tau: f64) -> Result<f64> {
        match self {
            Profile::Constant(c) => Ok(*c),
            Profile::Analytic(f) => Ok(f(tau)),
            Profile::Tabulated { taus, values } => {
                let n = taus.len();
                let slack = 1e-12 * (1.0 + tau.abs());
                if tau < taus[0] - slack || tau > taus[n - 1] + slack {
                    return Err(KreduxError::OutOfRange { tau, nodes: Vec::new() });
                }
                if n == 1 {
                    return Ok(values[0]);
                }
                let cell = taus.partition_point(|&t| t <= tau).clamp(1, n - 1) - 1;
                let m = n.min(4);
                let start = (cell + 1).saturating_sub(m / 2).min(n - m);
                let mut out = 0.0;
                for j in start..start + m {
                    let mut w = 1.0;
                    for i in start..start + m {
                        if i != j {
                            w *= (tau - taus[i]) / (taus[j] - taus[i]);
                        }
                    }
                    out += w * values[j];
                }
                Ok(out)
            }
        }
    }

    /// `h(μ)` sampled on `P`.
    pub fn of_field(&self, mu: &ScalarFieldP) -> Result<ScalarFieldP> {
        let mut values = mu.values.clone();
        for v in values.iter_mut() {
            *v = self.eval(*v)?;
        }
        Ok(ScalarFieldP { grid: mu.grid, values })
    }
}

/// Mean scalar curvature `∫ scal(σ) σ / ∫ σ` of the class of `σ`.
pub fn lambda_mean(sigma: &Form11M) -> Result<f64> {
    let scal = scal_m(sigma)?;
    let one = ScalarFieldM::constant(sigma.grid, 1.0);
    Ok(integrate_m(&scal, sigma)? / integrate_m(&one, sigma)?)
}

/// `h(τ) = λ − ∫ log s_τ ω_τ / ∫ ω_τ`, tabulated on `taus`.
pub fn h_canonical(k: &KahlerData, taus: &[f64]) -> Result<Profile> {
    let lambda = lambda_mean(&k.sigma)?;
    let one = ScalarFieldM::constant(k.grid(), 1.0);
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        let red = reduced_potential(k, tau)?;
        values.push(lambda - integrate_m(&red.ltau, &red.omega_tau)? / integrate_m(&one, &red.omega_tau)?);
    }
    Profile::tabulated(taus.to_vec(), values)
}

/// Largest deviation of `f_τ` from its interior mean.
fn reduced_spread(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<f64> {
    let ltau = level_set(k, tau)?;
    Ok(reduce_scalar(f, &ltau)?.interior_spread())
}

fn reduced_linf(k: &KahlerData, f: &ScalarFieldP, tau: f64) -> Result<f64> {
    let ltau = level_set(k, tau)?;
    Ok(reduce_scalar(f, &ltau)?.interior_linf())
}

/// `Δs = h(μ) s`; reduced: spread of `(Δs/s)_τ`.
pub fn residual_geodesic(k: &KahlerData, h: &Profile, taus: &[f64]) -> Result<ResidualReport> {
    let grid = k.grid();
    let s = ScalarFieldP::from_fn(grid, |_, _, l| l.exp());
    let lap = crate::curvature::laplacian_p(&s, k);
    let res = lap.sub(&h.of_field(&k.mu)?.mul(&s));
    let mut report = ResidualReport::from_p(StaticEquationId::Geodesic.as_str(), grid, &res.values);
    let ratio = lap.zip_map(&s, |a, b| a / b);
    for &tau in taus {
        report = report.with_tau(tau, reduced_spread(k, &ratio, tau)?);
    }
    Ok(report)
}

/// `R = log s + h(μ)`; reduced: spread of `(ℓ − R)_τ`.
pub fn residual_calabi(k: &KahlerData, h: &Profile, taus: &[f64]) -> Result<ResidualReport> {
    let grid = k.grid();
    let r = big_r_p(k);
    let ell = ScalarFieldP::log_s(grid);
    let res = r.sub(&ell).sub(&h.of_field(&k.mu)?);
    let mut report = ResidualReport::from_p(StaticEquationId::Calabi.as_str(), grid, &res.values);
    let gap = ell.sub(&r);
    for &tau in taus {
        report = report.with_tau(tau, reduced_spread(k, &gap, tau)?);
    }
    Ok(report)
}

/// `R + (2/|V|²)(Δμ − JV log|V|) − λ`, the same expression reduced per τ.
pub fn pseudo_calabi_expression(k: &KahlerData) -> Result<ScalarFieldP> {
    let lambda = lambda_mean(&k.sigma)?;
    let corr = q_term(k).zip_map(&k.vsq, |q, v| 2.0 * q / v);
    Ok(big_r_p(k).add(&corr).map(|v| v - lambda))
}

pub fn residual_pseudo_calabi(k: &KahlerData, taus: &[f64]) -> Result<ResidualReport> {
    let e = pseudo_calabi_expression(k)?;
    let mut report = ResidualReport::from_p(StaticEquationId::PseudoCalabi.as_str(), k.grid(), &e.values);
    for &tau in taus {
        report = report.with_tau(tau, reduced_linf(k, &e, tau)?);
    }
    Ok(report)
}

/// `½ dd^c log s_τ + Ric(ω_τ)` on `M`, as a spatial component.
pub fn kr_reduced_gap(k: &KahlerData, tau: f64) -> Result<Form11M> {
    let red = reduced_potential(k, tau)?;
    Ok(ddc_m(&red.ltau).scale(0.5).add(&ricci_m(&red.omega_tau, &k.sigma)?))
}

/// `Ric(ω) + dd^c log|V| + d(((Δμ − JV log|V| + 1)/|V|²) d^c μ)` in real components;
/// reduced: `‖½ dd^c log s_τ + Ric(ω_τ)‖∞`.
pub fn residual_kr(k: &KahlerData, taus: &[f64]) -> Result<ResidualReport> {
    let grid = k.grid();
    let g = k.vsq.map(|v| 1.0 / v);
    let res = rho_p(k).add(&d_c(&k.mu).scale_by(&g).d());
    let comps = [&res.c12, &res.c1l, &res.c1t, &res.c2l, &res.c2t, &res.clt];
    let mut report = ResidualReport::from_p_components(StaticEquationId::KrUnnormalized.as_str(), grid, &comps);
    for &tau in taus {
        let gap = kr_reduced_gap(k, tau)?;
        report = report.with_tau(tau, m_norms(&grid, &gap.h).0);
    }
    Ok(report)
}

/// `Ric(ω) + dd^c(log|V| + f(μ)) − λω` in Hermitian components.
pub fn residual_v_soliton(k: &KahlerData, f: &Profile) -> Result<ResidualReport> {
    let lambda = lambda_mean(&k.sigma)?;
    let pot = log_v(k).add(&f.of_field(&k.mu)?);
    let res = ricci_p(k).add(&ddc_p_of(&pot)).sub(&k.omega.scale(lambda));
    Ok(ResidualReport::from_p_components(
        StaticEquationId::VSoliton.as_str(),
        k.grid(),
        &[&res.a, &res.br, &res.bi, &res.d],
    ))
}

/// `Ψ = ½ ∫_ℓ^{ℓ_max} (f(μ) − μ) dλ`, so that `JV(Ψ) = f(μ) − μ`.
pub fn reparametrization_potential(k: &KahlerData, f: &Profile) -> Result<ScalarFieldP> {
    let grid = k.grid();
    let g = f.of_field(&k.mu)?.sub(&k.mu);
    let mut values = g.values.clone();
    for s in 0..grid.spatial_len() {
        let q = cumulative_integral(&g.fiber_slice(s), grid.dl());
        let total = q[q.len() - 1];
        for (l, v) in q.into_iter().enumerate() {
            values[[s, l]] = 0.5 * (total - v);
        }
    }
    Ok(ScalarFieldP { grid, values })
}

/// `ω + dd^c Ψ` with moment map `f(μ)`; `f` must be increasing on `μ(P)`.
pub fn reparametrize(k: &KahlerData, f: &Profile) -> Result<KahlerData> {
    let psi = reparametrization_potential(k, f)?;
    assemble(&k.sigma, &k.phi.add(&psi), k.c)
}
