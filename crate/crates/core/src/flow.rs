//! Flows of Kähler potentials on `M`: the geodesic residual of a sampled
//! path, and explicit RK4 integration of Calabi, pseudo-Calabi and
//! Kähler–Ricci flows written on the potential `ψ` with `ω_ψ = σ + dd^c ψ`.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::curvature::{laplacian_m, ricci_m, scal_m};
use crate::error::{KreduxError, Result};
use crate::field::{ddc_m, grad_pair, integrate_m, Form11M, ScalarFieldM};
use crate::grid::{GridKind, TestbedGrid};
use crate::report::ResidualReport;
use crate::spectral::Spectrum;
use crate::statics::lambda_mean;
use crate::stencil::{cumulative_integral, fornberg_weights, FdStencil, LocalInterp, INTERP_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Calabi,
    PseudoCalabi,
    Kr,
    KrNormalized,
    /// A path given in closed form or read from disk.
    Given,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Calabi => "calabi",
            FlowKind::PseudoCalabi => "pseudo_calabi",
            FlowKind::Kr => "kr",
            FlowKind::KrNormalized => "kr_normalized",
            FlowKind::Given => "given",
        }
    }
}

impl FromStr for FlowKind {
    type Err = KreduxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calabi" => Ok(FlowKind::Calabi),
            "pseudo_calabi" => Ok(FlowKind::PseudoCalabi),
            "kr" => Ok(FlowKind::Kr),
            "kr_normalized" => Ok(FlowKind::KrNormalized),
            "given" => Ok(FlowKind::Given),
            other => Err(KreduxError::Parse(format!("unknown flow kind '{other}'"))),
        }
    }
}

/// Time samples `(t_k, ψ_k)` of a path of potentials over a fixed `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub kind: FlowKind,
    pub sigma: Form11M,
    pub times: Vec<f64>,
    pub psi: Vec<ScalarFieldM>,
    /// The additive-constant convention applied at each step.
    pub normalization: String,
    /// Smallest internal step used on each output interval.
    pub steps: Vec<f64>,
}

impl FlowPath {
    pub fn new(kind: FlowKind, sigma: Form11M, times: Vec<f64>, psi: Vec<ScalarFieldM>, normalization: &str) -> Result<Self> {
        if times.is_empty() || times.len() != psi.len() {
            return Err(KreduxError::InvalidArgument("path needs one potential per time sample".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KreduxError::InvalidArgument("path times must increase strictly".into()));
        }
        for (t, p) in times.iter().zip(&psi) {
            if !p.grid.same_spatial(&sigma.grid) {
                return Err(KreduxError::GridMismatch);
            }
            if !sigma.add(&ddc_m(p)).is_positive() {
                return Err(KreduxError::PositivityLost(*t));
            }
        }
        Ok(FlowPath { kind, sigma, times, psi, normalization: normalization.to_string(), steps: Vec::new() })
    }

    /// Sample a closed-form path.
    pub fn from_fn(kind: FlowKind, sigma: Form11M, times: &[f64], f: impl Fn(f64) -> ScalarFieldM) -> Result<Self> {
        let psi = times.iter().map(|&t| f(t)).collect();
        Self::new(kind, sigma, times.to_vec(), psi, "none")
    }

    pub fn grid(&self) -> TestbedGrid {
        self.sigma.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Common spacing of the samples; fails for non-uniform paths.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(KreduxError::TooFewSamples { needed: 2, got: self.len() });
        }
        let dt = (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64;
        for (k, t) in self.times.iter().enumerate() {
            if (t - self.times[0] - k as f64 * dt).abs() > 1e-9 * dt.max(t.abs()) {
                return Err(KreduxError::InvalidArgument("path samples are not uniform in time".into()));
            }
        }
        Ok(dt)
    }

    pub fn omega(&self, k: usize) -> Form11M {
        self.sigma.add(&ddc_m(&self.psi[k]))
    }

    /// `∂^order ψ / ∂t^order` at every sample: fourth-order differences, or
    /// the interpolating polynomial through all samples on paths of 3 to 5 samples.
    pub fn time_derivative(&self, order: usize) -> Result<Vec<ScalarFieldM>> {
        if order != 1 && order != 2 {
            return Err(KreduxError::InvalidOrder(order));
        }
        if self.len() < 3 {
            return Err(KreduxError::TooFewSamples { needed: 3, got: self.len() });
        }
        let dt = self.uniform_dt()?;
        let grid = self.grid();
        let n = self.len();
        let mut out = vec![ScalarFieldM::constant(grid, 0.0); n];
        if n >= 6 {
            let stencil = FdStencil::new(n, order);
            for s in 0..grid.spatial_len() {
                stencil.apply_with(dt, |k| self.psi[k].values[s], |k, v| out[k].values[s] = v);
            }
        } else {
            let xs: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let scale = dt.powi(order as i32).recip();
            for (k, o) in out.iter_mut().enumerate() {
                let w = fornberg_weights(k as f64, &xs, order);
                for s in 0..grid.spatial_len() {
                    o.values[s] = scale * (0..n).map(|j| w[j] * self.psi[j].values[s]).sum::<f64>();
                }
            }
        }
        Ok(out)
    }

    /// `ψ_t` by local Lagrange interpolation on the samples (uniform paths of
    /// at least `INTERP_POINTS` samples).
    pub fn value_at(&self, t: f64) -> Result<ScalarFieldM> {
        if self.len() < INTERP_POINTS {
            return Err(KreduxError::TooFewSamples { needed: INTERP_POINTS, got: self.len() });
        }
        let dt = self.uniform_dt()?;
        let (t0, t1) = (self.times[0], self.times[self.len() - 1]);
        if t < t0 - 1e-12 * dt || t > t1 + 1e-12 * dt {
            return Err(KreduxError::OutOfRange { tau: t, nodes: vec![] });
        }
        let w = LocalInterp::at(t, t0, dt, self.len());
        let grid = self.grid();
        Ok(ScalarFieldM { grid, values: (0..grid.spatial_len()).map(|s| w.eval(|k| self.psi[k].values[s])).collect() })
    }

    /// The path `ψ_k + a_k`.
    pub fn shifted(&self, a: &[f64]) -> Result<FlowPath> {
        if a.len() != self.len() {
            return Err(KreduxError::InvalidArgument("one shift per sample required".into()));
        }
        let mut out = self.clone();
        for (p, c) in out.psi.iter_mut().zip(a) {
            p.values.mapv_inplace(|v| v + c);
        }
        Ok(out)
    }

    /// The same potentials indexed by `factor · t`.
    pub fn rescale_time(&self, factor: f64) -> Result<FlowPath> {
        if !(factor > 0.0) {
            return Err(KreduxError::InvalidArgument("time rescaling must be positive".into()));
        }
        let mut out = self.clone();
        out.times.iter_mut().for_each(|t| *t *= factor);
        out.steps.iter_mut().for_each(|t| *t *= factor);
        Ok(out)
    }
}

/// Both forms of the geodesic residual along a sampled path.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPathReport {
    /// Spread of `ψ'' − ½|∇ψ'|²` per sample; geodesic up to normalization iff zero.
    pub report: ResidualReport,
    /// Spatial mean of the residual per sample (the `κ''` of the normalization).
    pub mean_residual: Vec<f64>,
    /// Largest gap between the two displayed forms.
    pub form_gap: f64,
}

/// `ψ'' − ½|∇ψ'|²` and `ψ'' − e^{−ψ'} Δ e^{ψ'} + Δψ'` at every sample.
pub fn geodesic_residual_path(path: &FlowPath) -> Result<GeodesicPathReport> {
    let d1 = path.time_derivative(1)?;
    let d2 = path.time_derivative(2)?;
    let grid = path.grid();
    let mut report = ResidualReport::new("geodesic_path", grid, 0.0, 0.0);
    let mut mean_residual = Vec::with_capacity(path.len());
    let mut form_gap: f64 = 0.0;
    let mut sq = 0.0;
    for k in 0..path.len() {
        let omega = path.omega(k);
        let g = grad_pair(&d1[k], &d1[k], &omega)?;
        let r1 = d2[k].zip_map(&g, |a, b| a - 0.5 * b);
        let e = d1[k].map(f64::exp);
        let lap_e = laplacian_m(&e, &omega)?;
        let lap = laplacian_m(&d1[k], &omega)?;
        let mut r2 = d2[k].clone();
        for s in 0..grid.spatial_len() {
            r2.values[s] += -lap_e.values[s] / e.values[s] + lap.values[s];
        }
        form_gap = form_gap.max(r1.zip_map(&r2, |a, b| a - b).interior_linf());
        let spread = r1.interior_spread();
        mean_residual.push(r1.interior_mean());
        report = report.with_tau(path.times[k], spread);
        report.linf = report.linf.max(spread);
        sq += spread * spread;
    }
    report.l2 = (sq / path.len() as f64).sqrt();
    Ok(GeodesicPathReport { report, mean_residual, form_gap })
}

/// How the RK4 step is chosen inside an output interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepControl {
    /// Steps of at most `dt`, further capped by the stability bound of the current metric.
    #[default]
    Stable,
    /// Steps of at most `dt`; the caller guarantees stability.
    Fixed,
}

/// Output schedule: `samples` equal intervals up to `t_end`, each covered by
/// RK4 steps no longer than `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_end: f64,
    pub dt: f64,
    pub samples: usize,
    #[serde(default)]
    pub control: StepControl,
}

impl Schedule {
    pub fn new(t_end: f64, dt: f64, samples: usize) -> Self {
        Schedule { t_end, dt, samples, control: StepControl::Stable }
    }

    pub fn fixed(self) -> Self {
        Schedule { control: StepControl::Fixed, ..self }
    }
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !(self.dt > 0.0) || self.samples == 0 {
            return Err(KreduxError::InvalidArgument("schedule needs t_end > 0, dt > 0, samples ≥ 1".into()));
        }
        Ok(())
    }
}

/// Largest eigenvalue of the discrete `Δ_ω` in absolute value.
fn laplacian_bound(omega: &Form11M) -> f64 {
    let g = omega.grid;
    let k = g.kappa();
    let symbol = match g.kind {
        GridKind::Torus => 2.0 * (std::f64::consts::PI * g.n as f64).powi(2),
        GridKind::Radial => 16.0 / (3.0 * g.h1() * g.h1()),
    };
    let hmin = omega.h.iter().cloned().fold(f64::INFINITY, f64::min);
    symbol / (4.0 * k * k * hmin)
}

/// A step inside the RK4 stability interval for the linearized flow at `ω`.
pub fn stable_dt(kind: FlowKind, omega: &Form11M) -> f64 {
    let l = laplacian_bound(omega);
    let rate = match kind {
        FlowKind::Calabi => l * l,
        FlowKind::PseudoCalabi => 2.0 * l,
        FlowKind::Kr | FlowKind::KrNormalized | FlowKind::Given => l,
    };
    0.8 * 2.785 / rate
}

/// `∫ (scal − λ)² ω`.
pub fn calabi_energy(omega: &Form11M, lambda: f64) -> Result<f64> {
    let scal = scal_m(omega)?;
    integrate_m(&scal.map(|s| (s - lambda) * (s - lambda)), omega)
}

/// `∫ ω`.
pub fn volume(omega: &Form11M) -> Result<f64> {
    integrate_m(&ScalarFieldM::constant(omega.grid, 1.0), omega)
}

/// `‖Ric‖∞` in the pointwise norm of `ω`, i.e. `max |H_Ric / H|`.
pub fn ricci_linf(omega: &Form11M) -> Result<f64> {
    let ric = ricci_m(omega, omega)?;
    Ok(ScalarFieldM { grid: omega.grid, values: &ric.h / &omega.h }.interior_linf())
}

fn subtract_mean(f: &ScalarFieldM, omega: &Form11M) -> Result<ScalarFieldM> {
    let m = integrate_m(f, omega)? / volume(omega)?;
    Ok(f.map(|v| v - m))
}

/// Solve `∂²f/∂w∂w̄ = g` for `f` (torus: spectral; radial: double quadrature in `v`).
/// The data must integrate to zero against the flat measure of the chart.
pub fn solve_wwbar(g: &ScalarFieldM) -> ScalarFieldM {
    let grid = g.grid;
    let k = grid.kappa();
    match grid.kind {
        GridKind::Torus => {
            let u = Spectrum::new(g.as_slice(), grid.n).inverse_laplacian();
            ScalarFieldM { grid, values: u.into_iter().map(|v| 4.0 * k * k * v).collect() }
        }
        GridKind::Radial => {
            let h = grid.h1();
            let rhs: Vec<f64> = g.values.iter().map(|v| 4.0 * k * k * v).collect();
            let slope = cumulative_integral(&rhs, h);
            let f = cumulative_integral(&slope, h);
            ScalarFieldM { grid, values: f.into() }
        }
    }
}

fn positive_omega(sigma: &Form11M, psi: &ScalarFieldM) -> Result<Form11M> {
    let omega = sigma.add(&ddc_m(psi));
    omega.require_positive()?;
    Ok(omega)
}

struct Integrator<'a> {
    kind: FlowKind,
    sigma: &'a Form11M,
    normalization: &'a str,
    rhs: Box<dyn Fn(&ScalarFieldM) -> Result<ScalarFieldM> + 'a>,
    energy: Option<Box<dyn Fn(&ScalarFieldM) -> Result<f64> + 'a>>,
}

/// Tolerance on energy increase between output samples.
const ENERGY_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 10;

impl Integrator<'_> {
    fn step(&self, psi: &ScalarFieldM, dt: f64) -> Result<ScalarFieldM> {
        let f = &self.rhs;
        let k1 = f(psi)?;
        let k2 = f(&psi.zip_map(&k1, |p, k| p + 0.5 * dt * k))?;
        let k3 = f(&psi.zip_map(&k2, |p, k| p + 0.5 * dt * k))?;
        let k4 = f(&psi.zip_map(&k3, |p, k| p + dt * k))?;
        let mut out = psi.clone();
        for s in 0..out.values.len() {
            out.values[s] += dt / 6.0 * (k1.values[s] + 2.0 * k2.values[s] + 2.0 * k3.values[s] + k4.values[s]);
        }
        Ok(out)
    }

    /// Advance one output interval with steps no longer than `dt` nor than
    /// the stability bound of the current metric. Returns the smallest step used.
    fn interval(&self, psi: &ScalarFieldM, t0: f64, length: f64, dt: f64, control: StepControl) -> Result<(ScalarFieldM, f64)> {
        let mut cur = psi.clone();
        let mut omega = self.sigma.add(&ddc_m(&cur));
        let mut t = 0.0;
        let mut smallest = dt;
        while length - t > 1e-12 * length {
            let remaining = length - t;
            let cap = match control {
                StepControl::Stable => dt.min(stable_dt(self.kind, &omega)),
                StepControl::Fixed => dt,
            };
            let h = remaining / (remaining / cap).ceil();
            cur = match self.step(&cur, h) {
                Ok(next) => next,
                Err(KreduxError::NotPositive { .. }) => return Err(KreduxError::PositivityLost(t0 + t)),
                Err(e) => return Err(e),
            };
            t += h;
            smallest = smallest.min(h);
            if cur.values.iter().any(|v| !v.is_finite()) {
                return Err(KreduxError::StepUnstable(t0 + t));
            }
            omega = self.sigma.add(&ddc_m(&cur));
            if !omega.is_positive() {
                return Err(KreduxError::PositivityLost(t0 + t));
            }
        }
        Ok((cur, smallest))
    }

    fn run(&self, psi0: &ScalarFieldM, sched: Schedule) -> Result<FlowPath> {
        sched.validate()?;
        if !psi0.grid.same_spatial(&self.sigma.grid) {
            return Err(KreduxError::GridMismatch);
        }
        positive_omega(self.sigma, psi0).map_err(|_| KreduxError::PositivityLost(0.0))?;
        let length = sched.t_end / sched.samples as f64;
        let mut times = vec![0.0];
        let mut psi = vec![psi0.clone()];
        let mut steps = Vec::with_capacity(sched.samples);
        let mut energy = match &self.energy {
            Some(e) => Some(e(psi0)?),
            None => None,
        };
        for k in 0..sched.samples {
            let t0 = k as f64 * length;
            let mut dt = sched.dt;
            let mut halvings = 0;
            let (next, used, e_next) = loop {
                let failure = match self.interval(&psi[k], t0, length, dt, sched.control) {
                    Ok((next, used)) => match (&self.energy, energy) {
                        (Some(e), Some(prev)) => {
                            let en = e(&next)?;
                            if en <= prev + ENERGY_TOL {
                                break (next, used, Some(en));
                            }
                            KreduxError::StepUnstable(t0 + length)
                        }
                        _ => break (next, used, None),
                    },
                    Err(e @ (KreduxError::StepUnstable(_) | KreduxError::PositivityLost(_))) => e,
                    Err(e) => return Err(e),
                };
                if halvings == MAX_HALVINGS {
                    return Err(failure);
                }
                halvings += 1;
                dt *= 0.5;
            };
            energy = e_next.or(energy);
            times.push(t0 + length);
            psi.push(next);
            steps.push(used);
        }
        let mut path = FlowPath::new(self.kind, self.sigma.clone(), times, psi, self.normalization)?;
        path.steps = steps;
        Ok(path)
    }
}

/// Calabi flow `ψ' = ½(scal(ω_ψ) − λ)`; the Calabi energy is monitored at
/// every output sample and an increase triggers step halving.
pub fn calabi_integrate(psi0: &ScalarFieldM, sigma: &Form11M, sched: Schedule) -> Result<FlowPath> {
    sigma.require_positive()?;
    let lambda = lambda_mean(sigma)?;
    let rhs = move |psi: &ScalarFieldM| -> Result<ScalarFieldM> {
        let omega = positive_omega(sigma, psi)?;
        Ok(scal_m(&omega)?.map(|s| 0.5 * (s - lambda)))
    };
    let energy = move |psi: &ScalarFieldM| -> Result<f64> { calabi_energy(&positive_omega(sigma, psi)?, lambda) };
    Integrator {
        kind: FlowKind::Calabi,
        sigma,
        normalization: "psi' = (scal - lambda)/2",
        rhs: Box::new(rhs),
        energy: Some(Box::new(energy)),
    }
    .run(psi0, sched)
}

/// Tolerance on `∫(λ − scal) ω` before solving for `ψ'`.
pub const SOLVABILITY_TOL: f64 = 1e-8;

/// Pseudo-Calabi flow: `Δ_ψ ψ' = λ − scal(ω_ψ)` with `∫ ψ' ω_ψ = 0`.
pub fn pseudo_calabi_integrate(psi0: &ScalarFieldM, sigma: &Form11M, sched: Schedule) -> Result<FlowPath> {
    sigma.require_positive()?;
    let lambda = lambda_mean(sigma)?;
    let rhs = move |psi: &ScalarFieldM| -> Result<ScalarFieldM> {
        let omega = positive_omega(sigma, psi)?;
        let source = scal_m(&omega)?.map(|s| lambda - s);
        let total = integrate_m(&source, &omega)?;
        if total.abs() > SOLVABILITY_TOL {
            return Err(KreduxError::SolvabilityViolated(total));
        }
        let g = source.zip_map(&omega.as_field(), |a, h| a * h);
        subtract_mean(&solve_wwbar(&g), &omega)
    };
    Integrator {
        kind: FlowKind::PseudoCalabi,
        sigma,
        normalization: "mean-zero psi' against omega_psi",
        rhs: Box::new(rhs),
        energy: None,
    }
    .run(psi0, sched)
}

/// Kähler–Ricci flow on the potential:
/// `ψ' = ½ log(H_ψ/H_ref) + λψ + χ` with `dd^c χ = λσ − Ric_ref`, mean-zero against `ω_ψ`.
/// Unnormalized mode (`λ = 0`) needs the torus; normalized mode needs `λ` to be
/// the mean scalar curvature of `[σ]` so that the class stays fixed.
pub fn kr_integrate(psi0: &ScalarFieldM, sigma: &Form11M, sched: Schedule, normalized: bool, lambda: f64) -> Result<FlowPath> {
    sigma.require_positive()?;
    let grid = sigma.grid;
    let lambda = if normalized { lambda } else { 0.0 };
    if !normalized && grid.kind != GridKind::Torus {
        return Err(KreduxError::ClassNotFixed);
    }
    let class_lambda = lambda_mean(sigma)?;
    if (lambda - class_lambda).abs() > 1e-8 {
        return Err(KreduxError::InvalidArgument(format!(
            "lambda {lambda} differs from the mean scalar curvature {class_lambda} of the class"
        )));
    }
    let source = ScalarFieldM {
        grid,
        values: (0..grid.spatial_len()).map(|s| 0.5 * (lambda * sigma.h[s] - grid.reference_ric_h(s))).collect(),
    };
    let chi = solve_wwbar(&source);
    let rhs = move |psi: &ScalarFieldM| -> Result<ScalarFieldM> {
        let omega = positive_omega(sigma, psi)?;
        let mut v = chi.clone();
        for s in 0..grid.spatial_len() {
            v.values[s] += 0.5 * (omega.h[s] / grid.reference_h(s)).ln() + lambda * psi.values[s];
        }
        subtract_mean(&v, &omega)
    };
    let kind = if normalized { FlowKind::KrNormalized } else { FlowKind::Kr };
    Integrator { kind, sigma, normalization: "mean-zero psi' against omega_psi", rhs: Box::new(rhs), energy: None }
        .run(psi0, sched)
}

/// `τ(t) = (a + b e^{λt})/λ`.
pub fn kr_time_map(a: f64, b: f64, lambda: f64, t: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(KreduxError::InvalidArgument("lambda = 0: use the unnormalized flow".into()));
    }
    Ok((a + b * (lambda * t).exp()) / lambda)
}
