//! Residual reports shared by the identity checks and the static equations.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::field::interior_norms;
use crate::grid::TestbedGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResidual {
    pub tau: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub equation: String,
    pub grid: TestbedGrid,
    pub linf: f64,
    pub l2: f64,
    pub reduced_linf_by_tau: Vec<TauResidual>,
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtau: Option<f64>,
}

impl ResidualReport {
    pub fn new(equation: &str, grid: TestbedGrid, linf: f64, l2: f64) -> Self {
        ResidualReport {
            equation: equation.to_string(),
            grid,
            linf,
            l2,
            reduced_linf_by_tau: Vec::new(),
            slope: None,
            dtau: None,
        }
    }

    /// Norms of a residual sampled on `P`, over interior nodes.
    pub fn from_p(equation: &str, grid: TestbedGrid, residual: &Array2<f64>) -> Self {
        let (linf, l2) = interior_norms(&grid, residual);
        Self::new(equation, grid, linf, l2)
    }

    /// Norms of several residual components sampled on `P`.
    pub fn from_p_components(equation: &str, grid: TestbedGrid, comps: &[&Array2<f64>]) -> Self {
        let mut linf: f64 = 0.0;
        let mut sq = 0.0;
        for c in comps {
            let (a, b) = interior_norms(&grid, c);
            linf = linf.max(a);
            sq += b * b;
        }
        Self::new(equation, grid, linf, sq.sqrt())
    }

    /// Norms of a residual sampled on `M`, over interior nodes.
    pub fn from_m(equation: &str, grid: TestbedGrid, residual: &Array1<f64>) -> Self {
        let (linf, l2) = m_norms(&grid, residual);
        Self::new(equation, grid, linf, l2)
    }

    /// Combine per-τ reports into one, keeping the per-τ maxima.
    pub fn combine(equation: &str, grid: TestbedGrid, parts: &[(f64, ResidualReport)]) -> Self {
        let linf = parts.iter().map(|(_, r)| r.linf).fold(0.0, f64::max);
        let l2 = (parts.iter().map(|(_, r)| r.l2 * r.l2).sum::<f64>() / parts.len().max(1) as f64).sqrt();
        let mut out = Self::new(equation, grid, linf, l2);
        out.reduced_linf_by_tau = parts.iter().map(|(tau, r)| TauResidual { tau: *tau, linf: r.linf }).collect();
        out.dtau = parts.first().and_then(|(_, r)| r.dtau);
        out
    }

    pub fn with_tau(mut self, tau: f64, linf: f64) -> Self {
        self.reduced_linf_by_tau.push(TauResidual { tau, linf });
        self
    }

    pub fn with_dtau(mut self, dtau: f64) -> Self {
        self.dtau = Some(dtau);
        self
    }

    /// Largest reduced residual over all recorded τ.
    pub fn reduced_linf(&self) -> f64 {
        self.reduced_linf_by_tau.iter().map(|t| t.linf).fold(0.0, f64::max)
    }

    /// Attach the observed order `log2(coarse/fine)` to the fine report.
    pub fn with_slope_from(mut self, coarse: &ResidualReport) -> Self {
        self.slope = Some(observed_order(coarse.linf, self.linf));
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `log2(coarse/fine)`, the observed order for a halving of the step.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// `(L∞, root-mean-square)` of a spatial field over interior nodes.
pub fn m_norms(grid: &TestbedGrid, v: &Array1<f64>) -> (f64, f64) {
    let mut linf: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, x) in v.iter().enumerate() {
        if grid.spatial_interior(s) {
            linf = linf.max(x.abs());
            sum += x * x;
            n += 1;
        }
    }
    (linf, (sum / n.max(1) as f64).sqrt())
}

/// Largest deviation from the interior mean of a spatial field.
pub fn m_spread(grid: &TestbedGrid, v: &Array1<f64>) -> f64 {
    let idx: Vec<usize> = (0..v.len()).filter(|&s| grid.spatial_interior(s)).collect();
    let mean = idx.iter().map(|&s| v[s]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&s| (v[s] - mean).abs()).fold(0.0, f64::max)
}
