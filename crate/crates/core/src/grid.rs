//! Structured testbeds for the product `P = M × A`.
//!
//! The fiber coordinate is `ℓ = log s`, `s = |w|²`, sampled uniformly on
//! `[lmin, lmax]`. The spatial factor is either the flat unit torus (periodic
//! `N × N` nodes, holomorphic coordinate `z = y1 + i y2`) or a rotationally
//! symmetric chart of `CP¹` in the logarithmic coordinate `ξ = log z`, whose
//! real part is `v/2` with `v = log |z|²` (only `v` is sampled; the angular
//! direction carries no dependence).
//!
//! In both cases the spatial holomorphic differential is `dw = κ dy1 + i dy2`
//! with `κ = 1` on the torus and `κ = 1/2` on the radial chart, so that
//! `∂_w = (1/2κ) ∂_1 − (i/2) ∂_2`.

use serde::{Deserialize, Serialize};

use crate::error::{KreduxError, Result};

/// Minimum admissible node count along any axis.
pub const MIN_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Torus,
    Radial,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::Torus => "torus",
            GridKind::Radial => "radial",
        }
    }
}

impl std::str::FromStr for GridKind {
    type Err = KreduxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(GridKind::Torus),
            "radial" => Ok(GridKind::Radial),
            other => Err(KreduxError::Parse(format!("unknown testbed kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestbedGrid {
    pub kind: GridKind,
    /// Torus: nodes per periodic axis. Radial: nodes in `v`.
    pub n: usize,
    pub nl: usize,
    pub lmin: f64,
    pub lmax: f64,
    /// Radial half-width `L_u` of the `v` interval; unused on the torus.
    pub lu: f64,
    pub margin: usize,
    /// Radial only: nodes trimmed at each end of the `v` axis for residual
    /// norms. The log chart compresses the metric like `e^{−|v|}` toward the
    /// poles, so identities there are roundoff-limited long before `margin`.
    #[serde(default = "default_margin")]
    pub pole_margin: usize,
}

fn default_margin() -> usize {
    2
}

impl TestbedGrid {
    pub fn torus(n: usize, nl: usize, lmin: f64, lmax: f64) -> Result<Self> {
        TestbedGrid { kind: GridKind::Torus, n, nl, lmin, lmax, lu: 0.0, margin: 2, pole_margin: 2 }.validated()
    }

    pub fn radial(nu: usize, lu: f64, nl: usize, lmin: f64, lmax: f64) -> Result<Self> {
        TestbedGrid { kind: GridKind::Radial, n: nu, nl, lmin, lmax, lu, margin: 2, pole_margin: 2 }.validated()
    }

    pub fn with_margin(mut self, margin: usize) -> Result<Self> {
        self.margin = margin;
        self.validated()
    }

    /// Trim `m` nodes at each pole of a radial testbed when taking norms.
    pub fn with_pole_margin(mut self, m: usize) -> Result<Self> {
        self.pole_margin = m;
        self.validated()
    }

    /// Trim nodes with `|v| > vmax` on a radial testbed.
    pub fn with_pole_cutoff(self, vmax: f64) -> Result<Self> {
        if self.kind != GridKind::Radial {
            return Ok(self);
        }
        let m = ((self.lu - vmax) / self.h1()).ceil().max(2.0) as usize;
        self.with_pole_margin(m)
    }

    /// Same spatial grid with a different fiber window.
    pub fn with_fiber(mut self, nl: usize, lmin: f64, lmax: f64) -> Result<Self> {
        self.nl = nl;
        self.lmin = lmin;
        self.lmax = lmax;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.n < MIN_NODES || self.nl < MIN_NODES {
            return Err(KreduxError::InvalidGrid(format!(
                "resolutions must be >= {MIN_NODES} (got N = {}, Nl = {})",
                self.n, self.nl
            )));
        }
        if !(self.lmin < self.lmax) || !self.lmin.is_finite() || !self.lmax.is_finite() {
            return Err(KreduxError::InvalidGrid(format!(
                "fiber window [{}, {}] is not increasing",
                self.lmin, self.lmax
            )));
        }
        if self.margin < 2 || self.pole_margin < 2 {
            return Err(KreduxError::InvalidGrid("interior margin must be >= 2".into()));
        }
        if self.kind == GridKind::Radial && !(self.lu > 0.0 && self.lu.is_finite()) {
            return Err(KreduxError::InvalidGrid("radial half-width must be positive".into()));
        }
        if 2 * self.margin >= self.nl || (self.kind == GridKind::Radial && 2 * self.margin.max(self.pole_margin) >= self.n) {
            return Err(KreduxError::InvalidGrid("margin leaves no interior".into()));
        }
        Ok(self)
    }

    /// Number of spatial nodes.
    pub fn spatial_len(&self) -> usize {
        match self.kind {
            GridKind::Torus => self.n * self.n,
            GridKind::Radial => self.n,
        }
    }

    /// Coefficient `κ` in `dw = κ dy1 + i dy2`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            GridKind::Torus => 1.0,
            GridKind::Radial => 0.5,
        }
    }

    /// Spacing along `y1` (torus `x1`, radial `v`).
    pub fn h1(&self) -> f64 {
        match self.kind {
            GridKind::Torus => 1.0 / self.n as f64,
            GridKind::Radial => 2.0 * self.lu / (self.n - 1) as f64,
        }
    }

    pub fn dl(&self) -> f64 {
        (self.lmax - self.lmin) / (self.nl - 1) as f64
    }

    pub fn ell(&self, k: usize) -> f64 {
        if k + 1 == self.nl {
            self.lmax
        } else {
            self.lmin + k as f64 * self.dl()
        }
    }

    pub fn ells(&self) -> Vec<f64> {
        (0..self.nl).map(|k| self.ell(k)).collect()
    }

    /// Real coordinates `(y1, y2)` of spatial node `s`.
    pub fn coords(&self, s: usize) -> (f64, f64) {
        match self.kind {
            GridKind::Torus => {
                let h = self.h1();
                ((s / self.n) as f64 * h, (s % self.n) as f64 * h)
            }
            GridKind::Radial => (-self.lu + s as f64 * self.h1(), 0.0),
        }
    }

    /// `u = |z|²` at a radial node (1 on the torus, where it is meaningless).
    pub fn u(&self, s: usize) -> f64 {
        match self.kind {
            GridKind::Torus => 1.0,
            GridKind::Radial => self.coords(s).0.exp(),
        }
    }

    /// Analytic reference metric component: flat on the torus, Fubini–Study
    /// `e^v / (1 + e^v)²` in the logarithmic chart.
    pub fn reference_h(&self, s: usize) -> f64 {
        match self.kind {
            GridKind::Torus => 1.0,
            GridKind::Radial => {
                let v = self.coords(s).0;
                0.25 / (0.5 * v).cosh().powi(2)
            }
        }
    }

    /// Ricci component of the reference metric (flat: 0; Fubini–Study: twice the metric).
    pub fn reference_ric_h(&self, s: usize) -> f64 {
        match self.kind {
            GridKind::Torus => 0.0,
            GridKind::Radial => 2.0 * self.reference_h(s),
        }
    }

    /// Whether spatial node `s` lies in the interior used for residual norms.
    pub fn spatial_interior(&self, s: usize) -> bool {
        match self.kind {
            GridKind::Torus => true,
            GridKind::Radial => {
                let m = self.margin.max(self.pole_margin);
                s >= m && s + m < self.n
            }
        }
    }

    pub fn fiber_interior(&self, k: usize) -> bool {
        k >= self.margin && k + self.margin < self.nl
    }

    /// Whether two grids share the same spatial factor.
    pub fn same_spatial(&self, other: &TestbedGrid) -> bool {
        self.kind == other.kind
            && self.n == other.n
            && (self.kind == GridKind::Torus || self.lu == other.lu)
    }
}
