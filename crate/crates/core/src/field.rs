//! Invariant fields on `P` and `M` and the differential calculus acting on them.
//!
//! Conventions: `d^c = i(∂̄ − ∂)`, so `dd^c f = 2i ∂∂̄ f`. A (1,1)-form on `M`
//! is stored through `H` with `form = i H dw ∧ dw̄`; on `P` through the
//! Hermitian matrix `G` in the frame `{dw, dζ}`, `ζ = log w_fiber = ℓ/2 + iθ`,
//! with `form = i Σ G_ab̄ dz^a ∧ dz̄^b`. General real forms on `P` are stored
//! by components on the real coframe `(dy1, dy2, dℓ, dθ)`. The circle
//! generator is `V = ∂_θ` and `JV = −2 ∂_ℓ`.

use ndarray::{Array1, Array2, Zip};
use rayon::prelude::*;

use crate::error::{KreduxError, Result};
use crate::grid::{GridKind, TestbedGrid};
use crate::spectral::Spectrum;
use crate::stencil::FdStencil;

/// Differentiation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Y1,
    Y2,
    Ell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldM {
    pub grid: TestbedGrid,
    pub values: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldP {
    pub grid: TestbedGrid,
    /// Indexed `[spatial node, fiber node]`.
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Form11M {
    pub grid: TestbedGrid,
    pub h: Array1<f64>,
}

/// Hermitian `[[a, b], [b̄, d]]` per node, `b = br + i bi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Form11P {
    pub grid: TestbedGrid,
    pub a: Array2<f64>,
    pub br: Array2<f64>,
    pub bi: Array2<f64>,
    pub d: Array2<f64>,
}

/// Real invariant 1-form, components on `(dy1, dy2, dℓ, dθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormP {
    pub grid: TestbedGrid,
    pub c: [Array2<f64>; 4],
}

/// Real invariant 2-form on the coframe `(dy1, dy2, dℓ, dθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormP {
    pub grid: TestbedGrid,
    pub c12: Array2<f64>,
    pub c1l: Array2<f64>,
    pub c1t: Array2<f64>,
    pub c2l: Array2<f64>,
    pub c2t: Array2<f64>,
    pub clt: Array2<f64>,
}

/// Top form `c dy1 ∧ dy2 ∧ dℓ ∧ dθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopFormP {
    pub grid: TestbedGrid,
    pub c: Array2<f64>,
}

// ---------------------------------------------------------------------------
// Spatial kernels on a single spatial slice.

/// `∂_1^p ∂_2^q` for each requested pair, on one spatial slice.
pub(crate) fn spatial_derivs(grid: &TestbedGrid, values: &[f64], which: &[(usize, usize)]) -> Vec<Vec<f64>> {
    match grid.kind {
        GridKind::Torus => {
            let sp = Spectrum::new(values, grid.n);
            which.iter().map(|&(p, q)| if p == 0 && q == 0 { values.to_vec() } else { sp.derivative(p, q) }).collect()
        }
        GridKind::Radial => which
            .iter()
            .map(|&(p, q)| {
                if q > 0 {
                    vec![0.0; values.len()]
                } else if p == 0 {
                    values.to_vec()
                } else {
                    let mut out = values.to_vec();
                    let s1 = FdStencil::new(grid.n, 1);
                    let s2 = FdStencil::new(grid.n, 2);
                    let mut left = p;
                    while left > 0 {
                        let step = if left >= 2 { 2 } else { 1 };
                        out = if step == 2 { s2.apply(&out, grid.h1()) } else { s1.apply(&out, grid.h1()) };
                        left -= step;
                    }
                    out
                }
            })
            .collect(),
    }
}

/// Apply a per-column spatial map to each fiber slice of a `P` array.
fn map_columns(grid: &TestbedGrid, arr: &Array2<f64>, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Array2<f64> {
    let ns = grid.spatial_len();
    let cols: Vec<Vec<f64>> = (0..grid.nl)
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = arr.column(k).to_vec();
            f(&col)
        })
        .collect();
    let mut out = Array2::zeros((ns, grid.nl));
    for (k, col) in cols.into_iter().enumerate() {
        for (s, v) in col.into_iter().enumerate() {
            out[[s, k]] = v;
        }
    }
    out
}

fn map_columns_multi(grid: &TestbedGrid, arr: &Array2<f64>, which: &[(usize, usize)]) -> Vec<Array2<f64>> {
    let ns = grid.spatial_len();
    let cols: Vec<Vec<Vec<f64>>> = (0..grid.nl)
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = arr.column(k).to_vec();
            spatial_derivs(grid, &col, which)
        })
        .collect();
    let mut outs = vec![Array2::zeros((ns, grid.nl)); which.len()];
    for (k, set) in cols.into_iter().enumerate() {
        for (o, col) in set.into_iter().enumerate() {
            for (s, v) in col.into_iter().enumerate() {
                outs[o][[s, k]] = v;
            }
        }
    }
    outs
}

/// Derivative along the fiber (rows of a `P` array).
pub(crate) fn fiber_derivative(grid: &TestbedGrid, arr: &Array2<f64>, order: usize) -> Array2<f64> {
    let st = FdStencil::new(grid.nl, order);
    let h = grid.dl();
    let mut out = Array2::zeros(arr.raw_dim());
    Zip::from(out.rows_mut()).and(arr.rows()).par_for_each(|mut o, r| {
        st.apply_with(h, |j| r[j], |i, v| o[i] = v);
    });
    out
}

fn check_order(order: usize) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(KreduxError::InvalidOrder(order))
    }
}

// ---------------------------------------------------------------------------

impl ScalarFieldM {
    pub fn new(grid: TestbedGrid, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.spatial_len() {
            return Err(KreduxError::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KreduxError::InvalidArgument("non-finite field value".into()));
        }
        Ok(ScalarFieldM { grid, values })
    }

    pub fn from_fn(grid: TestbedGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.spatial_len())
            .map(|s| {
                let (y1, y2) = grid.coords(s);
                f(y1, y2)
            })
            .collect();
        ScalarFieldM { grid, values }
    }

    pub fn constant(grid: TestbedGrid, c: f64) -> Self {
        ScalarFieldM { grid, values: Array1::from_elem(grid.spatial_len(), c) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarFieldM { grid: self.grid, values: self.values.mapv(f) }
    }

    pub fn zip_map(&self, other: &ScalarFieldM, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = self.values.clone();
        Zip::from(&mut values).and(&other.values).for_each(|a, &b| *a = f(*a, b));
        ScalarFieldM { grid: self.grid, values }
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("contiguous")
    }

    /// Spatial derivative along `Y1`/`Y2`.
    pub fn differentiate(&self, axis: Axis, order: usize) -> Result<ScalarFieldM> {
        check_order(order)?;
        let pq = match axis {
            Axis::Y1 => (order, 0),
            Axis::Y2 => (0, order),
            Axis::Ell => return Err(KreduxError::InvalidArgument("fields on M have no fiber axis".into())),
        };
        let d = spatial_derivs(&self.grid, self.as_slice(), &[pq]).remove(0);
        Ok(ScalarFieldM { grid: self.grid, values: Array1::from(d) })
    }

    /// `(∂_1 f, ∂_2 f)`.
    pub fn gradient(&self) -> (Array1<f64>, Array1<f64>) {
        let mut d = spatial_derivs(&self.grid, self.as_slice(), &[(1, 0), (0, 1)]);
        let d2 = d.pop().unwrap();
        (Array1::from(d.pop().unwrap()), Array1::from(d2))
    }

    /// `∂²f / ∂w∂w̄`.
    pub fn d_wwbar(&self) -> Array1<f64> {
        let g = self.grid;
        match g.kind {
            GridKind::Torus => Spectrum::new(self.as_slice(), g.n).laplacian().into_iter().map(|v| 0.25 * v).collect(),
            GridKind::Radial => {
                let k = g.kappa();
                let d2 = FdStencil::new(g.n, 2).apply(self.as_slice(), g.h1());
                d2.into_iter().map(|v| v / (4.0 * k * k)).collect()
            }
        }
    }

    /// Spatial mean over interior nodes (uniform weights).
    pub fn interior_mean(&self) -> f64 {
        let (sum, n) = (0..self.grid.spatial_len())
            .filter(|&s| self.grid.spatial_interior(s))
            .fold((0.0, 0usize), |(a, n), s| (a + self.values[s], n + 1));
        sum / n as f64
    }

    /// Largest deviation from the interior mean.
    pub fn interior_spread(&self) -> f64 {
        let m = self.interior_mean();
        (0..self.grid.spatial_len())
            .filter(|&s| self.grid.spatial_interior(s))
            .map(|s| (self.values[s] - m).abs())
            .fold(0.0, f64::max)
    }

    pub fn interior_linf(&self) -> f64 {
        (0..self.grid.spatial_len())
            .filter(|&s| self.grid.spatial_interior(s))
            .map(|s| self.values[s].abs())
            .fold(0.0, f64::max)
    }
}

impl ScalarFieldP {
    pub fn new(grid: TestbedGrid, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.spatial_len(), grid.nl) {
            return Err(KreduxError::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KreduxError::InvalidArgument("non-finite field value".into()));
        }
        Ok(ScalarFieldP { grid, values })
    }

    /// Sample `f(y1, y2, ℓ)`.
    pub fn from_fn(grid: TestbedGrid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let ells = grid.ells();
        let values = Array2::from_shape_fn((grid.spatial_len(), grid.nl), |(s, k)| {
            let (y1, y2) = grid.coords(s);
            f(y1, y2, ells[k])
        });
        ScalarFieldP { grid, values }
    }

    pub fn constant(grid: TestbedGrid, c: f64) -> Self {
        ScalarFieldP { grid, values: Array2::from_elem((grid.spatial_len(), grid.nl), c) }
    }

    /// `ℓ = log s`.
    pub fn log_s(grid: TestbedGrid) -> Self {
        Self::from_fn(grid, |_, _, l| l)
    }

    /// Pull back a function on `M`.
    pub fn pullback(f: &ScalarFieldM, grid: TestbedGrid) -> Self {
        let values = Array2::from_shape_fn((grid.spatial_len(), grid.nl), |(s, _)| f.values[s]);
        ScalarFieldP { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarFieldP { grid: self.grid, values: self.values.mapv(f) }
    }

    pub fn zip_map(&self, other: &ScalarFieldP, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = self.values.clone();
        Zip::from(&mut values).and(&other.values).for_each(|a, &b| *a = f(*a, b));
        ScalarFieldP { grid: self.grid, values }
    }

    pub fn add(&self, other: &ScalarFieldP) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarFieldP) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarFieldP) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|a| a * c)
    }

    pub fn differentiate(&self, axis: Axis, order: usize) -> Result<ScalarFieldP> {
        check_order(order)?;
        let values = match axis {
            Axis::Ell => fiber_derivative(&self.grid, &self.values, order),
            Axis::Y1 => map_columns(&self.grid, &self.values, |c| spatial_derivs(&self.grid, c, &[(order, 0)]).remove(0)),
            Axis::Y2 => map_columns(&self.grid, &self.values, |c| spatial_derivs(&self.grid, c, &[(0, order)]).remove(0)),
        };
        Ok(ScalarFieldP { grid: self.grid, values })
    }

    pub fn d_ell(&self) -> ScalarFieldP {
        ScalarFieldP { grid: self.grid, values: fiber_derivative(&self.grid, &self.values, 1) }
    }

    pub fn d_ell2(&self) -> ScalarFieldP {
        ScalarFieldP { grid: self.grid, values: fiber_derivative(&self.grid, &self.values, 2) }
    }

    /// `(∂_1, ∂_2)` of every fiber slice.
    pub(crate) fn spatial_gradient(&self) -> (Array2<f64>, Array2<f64>) {
        let mut v = map_columns_multi(&self.grid, &self.values, &[(1, 0), (0, 1)]);
        let d2 = v.pop().unwrap();
        (v.pop().unwrap(), d2)
    }

    /// `∂²/∂w∂w̄` of every fiber slice.
    pub(crate) fn d_wwbar(&self) -> Array2<f64> {
        let k = self.grid.kappa();
        let v = map_columns_multi(&self.grid, &self.values, &[(2, 0), (0, 2)]);
        let mut out = v[0].mapv(|a| a / (4.0 * k * k));
        out.scaled_add(0.25, &v[1]);
        out
    }

    /// Maximum absolute value over interior nodes.
    pub fn interior_linf(&self) -> f64 {
        interior_norms(&self.grid, &self.values).0
    }

    /// `(L∞, discrete L²)` over interior nodes.
    pub fn interior_norms(&self) -> (f64, f64) {
        interior_norms(&self.grid, &self.values)
    }

    pub fn fiber_slice(&self, s: usize) -> Vec<f64> {
        self.values.row(s).to_vec()
    }
}

/// `(L∞, root-mean-square)` over nodes away from non-periodic boundaries.
pub(crate) fn interior_norms(grid: &TestbedGrid, arr: &Array2<f64>) -> (f64, f64) {
    let mut linf: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((s, k), v) in arr.indexed_iter() {
        if grid.spatial_interior(s) && grid.fiber_interior(k) {
            linf = linf.max(v.abs());
            sum += v * v;
            n += 1;
        }
    }
    (linf, (sum / n.max(1) as f64).sqrt())
}

/// `JV(f) = −2 ∂f/∂ℓ`.
pub fn jv_apply(f: &ScalarFieldP) -> ScalarFieldP {
    f.d_ell().scale(-2.0)
}

/// `dd^c f` on `M`: `H = 2 ∂²f/∂w∂w̄`.
pub fn ddc_m(f: &ScalarFieldM) -> Form11M {
    Form11M { grid: f.grid, h: f.d_wwbar() * 2.0 }
}

/// `dd^c f` on `P` given `μ_f = JV(f) + const`: spatial block `2 f_ww̄`,
/// mixed block `−∂_w μ_f`, fiber block `−∂_ℓ μ_f`.
pub fn ddc_p(f: &ScalarFieldP, mu_of_f: &ScalarFieldP) -> Result<Form11P> {
    if f.grid != mu_of_f.grid {
        return Err(KreduxError::GridMismatch);
    }
    let grid = f.grid;
    let k = grid.kappa();
    let a = f.d_wwbar() * 2.0;
    let (m1, m2) = mu_of_f.spatial_gradient();
    let br = m1 * (-0.5 / k);
    let bi = m2 * 0.5;
    let d = mu_of_f.d_ell().values * -1.0;
    Ok(Form11P { grid, a, br, bi, d })
}

/// `dd^c f` on `P` with the moment data computed from `f` itself.
/// The fiber block uses a direct second difference rather than two
/// composed first differences, which keeps boundary closures out of the interior.
pub fn ddc_p_of(f: &ScalarFieldP) -> Form11P {
    let mut w = ddc_p(f, &jv_apply(f)).expect("same grid");
    w.d = f.d_ell2().values * 2.0;
    w
}

/// `d^c f = −κ f_2 dy1 + κ⁻¹ f_1 dy2 + 2 f_ℓ dθ`.
pub fn d_c(f: &ScalarFieldP) -> OneFormP {
    let k = f.grid.kappa();
    let (f1, f2) = f.spatial_gradient();
    let fl = f.d_ell().values;
    let zero = Array2::zeros(fl.raw_dim());
    OneFormP { grid: f.grid, c: [f2 * (-k), f1 / k, zero, fl * 2.0] }
}

/// `df`.
pub fn d_scalar(f: &ScalarFieldP) -> OneFormP {
    let (f1, f2) = f.spatial_gradient();
    let fl = f.d_ell().values;
    let zero = Array2::zeros(fl.raw_dim());
    OneFormP { grid: f.grid, c: [f1, f2, fl, zero] }
}

impl OneFormP {
    pub fn scale_by(&self, g: &ScalarFieldP) -> OneFormP {
        let c = self.c.clone().map(|a| a * &g.values);
        OneFormP { grid: self.grid, c }
    }

    /// Exterior derivative of an invariant 1-form.
    pub fn d(&self) -> TwoFormP {
        let grid = self.grid;
        let grads: Vec<(Array2<f64>, Array2<f64>)> = self
            .c
            .iter()
            .map(|a| ScalarFieldP { grid, values: a.clone() }.spatial_gradient())
            .collect();
        let dl = |i: usize| fiber_derivative(&grid, &self.c[i], 1);
        let (a1_1, a1_2) = &grads[0];
        let (a2_1, _) = &grads[1];
        let (al_1, al_2) = &grads[2];
        let (at_1, at_2) = &grads[3];
        let _ = a1_1;
        TwoFormP {
            grid,
            c12: a2_1 - a1_2,
            c1l: al_1 - &dl(0),
            c1t: at_1.clone(),
            c2l: al_2 - &dl(1),
            c2t: at_2.clone(),
            clt: dl(3),
        }
    }

    pub fn sub(&self, other: &OneFormP) -> OneFormP {
        let c = [0, 1, 2, 3].map(|i| &self.c[i] - &other.c[i]);
        OneFormP { grid: self.grid, c }
    }

    pub fn add(&self, other: &OneFormP) -> OneFormP {
        let c = [0, 1, 2, 3].map(|i| &self.c[i] + &other.c[i]);
        OneFormP { grid: self.grid, c }
    }

    pub fn interior_linf(&self) -> f64 {
        self.c.iter().map(|a| interior_norms(&self.grid, a).0).fold(0.0, f64::max)
    }
}

/// `dd^c f` as a real 2-form, computed as `d(d^c f)`.
pub fn ddc_real(f: &ScalarFieldP) -> TwoFormP {
    d_c(f).d()
}

impl Form11M {
    pub fn new(grid: TestbedGrid, h: Array1<f64>) -> Result<Self> {
        if h.len() != grid.spatial_len() {
            return Err(KreduxError::GridMismatch);
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(KreduxError::InvalidArgument("non-finite form component".into()));
        }
        Ok(Form11M { grid, h })
    }

    /// The analytic reference metric of the testbed (flat or Fubini–Study).
    pub fn reference(grid: TestbedGrid) -> Self {
        let h = (0..grid.spatial_len()).map(|s| grid.reference_h(s)).collect();
        Form11M { grid, h }
    }

    pub fn add(&self, other: &Form11M) -> Form11M {
        Form11M { grid: self.grid, h: &self.h + &other.h }
    }

    pub fn scale(&self, c: f64) -> Form11M {
        Form11M { grid: self.grid, h: &self.h * c }
    }

    pub fn min_component(&self) -> (usize, f64) {
        self.h.iter().enumerate().fold((0, f64::INFINITY), |acc, (s, &v)| if v < acc.1 { (s, v) } else { acc })
    }

    pub fn is_positive(&self) -> bool {
        self.min_component().1 > 0.0
    }

    pub fn require_positive(&self) -> Result<()> {
        let (s, v) = self.min_component();
        if v > 0.0 {
            Ok(())
        } else {
            Err(KreduxError::NotPositive { node: (s, 0), min_eig: v })
        }
    }

    pub fn as_field(&self) -> ScalarFieldM {
        ScalarFieldM { grid: self.grid, values: self.h.clone() }
    }

    /// Pull back to `P`.
    pub fn pullback(&self, grid: TestbedGrid) -> Form11P {
        let shape = (grid.spatial_len(), grid.nl);
        let a = Array2::from_shape_fn(shape, |(s, _)| self.h[s]);
        Form11P { grid, a, br: Array2::zeros(shape), bi: Array2::zeros(shape), d: Array2::zeros(shape) }
    }
}

impl Form11P {
    pub fn zeros(grid: TestbedGrid) -> Self {
        let z = Array2::zeros((grid.spatial_len(), grid.nl));
        Form11P { grid, a: z.clone(), br: z.clone(), bi: z.clone(), d: z }
    }

    pub fn add(&self, o: &Form11P) -> Form11P {
        Form11P { grid: self.grid, a: &self.a + &o.a, br: &self.br + &o.br, bi: &self.bi + &o.bi, d: &self.d + &o.d }
    }

    pub fn sub(&self, o: &Form11P) -> Form11P {
        Form11P { grid: self.grid, a: &self.a - &o.a, br: &self.br - &o.br, bi: &self.bi - &o.bi, d: &self.d - &o.d }
    }

    pub fn scale(&self, c: f64) -> Form11P {
        Form11P { grid: self.grid, a: &self.a * c, br: &self.br * c, bi: &self.bi * c, d: &self.d * c }
    }

    /// Determinant of the component matrix.
    pub fn det(&self) -> Array2<f64> {
        let mut out = &self.a * &self.d;
        Zip::from(&mut out).and(&self.br).and(&self.bi).for_each(|o, &r, &i| *o -= r * r + i * i);
        out
    }

    /// Smallest eigenvalue of the component matrix at every node.
    pub fn min_eigenvalues(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.a.raw_dim());
        Zip::from(&mut out).and(&self.a).and(&self.br).and(&self.bi).and(&self.d).for_each(|o, &a, &br, &bi, &d| {
            let half = 0.5 * (a - d);
            *o = 0.5 * (a + d) - (half * half + br * br + bi * bi).sqrt();
        });
        out
    }

    /// Worst node and its minimum eigenvalue.
    pub fn positivity_certificate(&self) -> ((usize, usize), f64) {
        let e = self.min_eigenvalues();
        e.indexed_iter().fold(((0, 0), f64::INFINITY), |acc, (idx, &v)| if v < acc.1 { (idx, v) } else { acc })
    }

    /// Real components on `(dy1, dy2, dℓ, dθ)`.
    pub fn to_real(&self) -> TwoFormP {
        let k = self.grid.kappa();
        TwoFormP {
            grid: self.grid,
            c12: &self.a * (2.0 * k),
            c1l: &self.bi * (-k),
            c1t: &self.br * (2.0 * k),
            c2l: &self.br * -1.0,
            c2t: &self.bi * -2.0,
            clt: self.d.clone(),
        }
    }

    /// Half the trace of `θ` against this (positive) form: `tr(G⁻¹ Θ)/2`.
    pub fn half_trace_of(&self, theta: &Form11P) -> ScalarFieldP {
        let det = self.det();
        let mut out = Array2::zeros(det.raw_dim());
        Zip::indexed(&mut out).for_each(|(s, l), o| {
            let (a, br, bi, d) = (self.a[[s, l]], self.br[[s, l]], self.bi[[s, l]], self.d[[s, l]]);
            let (ta, tbr, tbi, td) = (theta.a[[s, l]], theta.br[[s, l]], theta.bi[[s, l]], theta.d[[s, l]]);
            *o = 0.5 * (d * ta + a * td - 2.0 * (br * tbr + bi * tbi)) / det[[s, l]];
        });
        ScalarFieldP { grid: self.grid, values: out }
    }

    pub fn interior_linf(&self) -> f64 {
        [&self.a, &self.br, &self.bi, &self.d]
            .iter()
            .map(|a| interior_norms(&self.grid, a).0)
            .fold(0.0, f64::max)
    }
}

impl TwoFormP {
    pub fn zeros(grid: TestbedGrid) -> Self {
        let z = Array2::zeros((grid.spatial_len(), grid.nl));
        TwoFormP { grid, c12: z.clone(), c1l: z.clone(), c1t: z.clone(), c2l: z.clone(), c2t: z.clone(), clt: z }
    }

    fn comps(&self) -> [&Array2<f64>; 6] {
        [&self.c12, &self.c1l, &self.c1t, &self.c2l, &self.c2t, &self.clt]
    }

    fn from_comps(grid: TestbedGrid, c: [Array2<f64>; 6]) -> Self {
        let [c12, c1l, c1t, c2l, c2t, clt] = c;
        TwoFormP { grid, c12, c1l, c1t, c2l, c2t, clt }
    }

    pub fn add(&self, o: &TwoFormP) -> TwoFormP {
        let (a, b) = (self.comps(), o.comps());
        Self::from_comps(self.grid, [0, 1, 2, 3, 4, 5].map(|i| a[i] + b[i]))
    }

    pub fn sub(&self, o: &TwoFormP) -> TwoFormP {
        let (a, b) = (self.comps(), o.comps());
        Self::from_comps(self.grid, [0, 1, 2, 3, 4, 5].map(|i| a[i] - b[i]))
    }

    pub fn scale(&self, c: f64) -> TwoFormP {
        let a = self.comps();
        Self::from_comps(self.grid, [0, 1, 2, 3, 4, 5].map(|i| a[i] * c))
    }

    /// `self ∧ other` as a top form.
    pub fn wedge(&self, o: &TwoFormP) -> TopFormP {
        let c = &self.c12 * &o.clt - &self.c1l * &o.c2t + &self.c1t * &o.c2l + &self.c2l * &o.c1t - &self.c2t * &o.c1l
            + &self.clt * &o.c12;
        TopFormP { grid: self.grid, c }
    }

    /// Metric trace `2 (θ ∧ ω)/(ω ∧ ω)`.
    pub fn trace_against(&self, omega: &TwoFormP) -> ScalarFieldP {
        let num = self.wedge(omega).c;
        let den = omega.wedge(omega).c;
        ScalarFieldP { grid: self.grid, values: num * 2.0 / den }
    }

    /// `i_V θ` with `V = ∂_θ`.
    pub fn contract_v(&self) -> OneFormP {
        let z = Array2::zeros(self.c12.raw_dim());
        OneFormP { grid: self.grid, c: [&self.c1t * -1.0, &self.c2t * -1.0, &self.clt * -1.0, z] }
    }

    /// `i_JV i_V θ`, with `JV = −2 ∂_ℓ`.
    pub fn contract_jv_v(&self) -> ScalarFieldP {
        ScalarFieldP { grid: self.grid, values: &self.clt * 2.0 }
    }

    pub fn interior_linf(&self) -> f64 {
        self.comps().iter().map(|a| interior_norms(&self.grid, a).0).fold(0.0, f64::max)
    }
}

impl TopFormP {
    /// The spatial density `η` in `θ = η ∧ dℓ ∧ d^c ℓ`, recovered from
    /// `i_JV i_V θ = 4η` and returned as the coefficient of `i dw ∧ dw̄`.
    pub fn spatial_density(&self) -> ScalarFieldP {
        let k = self.grid.kappa();
        ScalarFieldP { grid: self.grid, values: &self.c / (4.0 * k) }
    }
}

/// Result of contracting a 2-form with the circle generator.
#[derive(Debug, Clone)]
pub struct Contraction {
    pub i_v: OneFormP,
    pub i_jv_i_v: ScalarFieldP,
}

/// Contract a (1,1)-form with `V` and `JV`.
pub fn contract_v(theta: &Form11P) -> Contraction {
    let real = theta.to_real();
    Contraction { i_v: real.contract_v(), i_jv_i_v: real.contract_jv_v() }
}

/// `½ ∫_M f ω` for a positive `ω`; on the flat unit torus this is the plain average.
pub fn integrate_m(f: &ScalarFieldM, volume: &Form11M) -> Result<f64> {
    if f.grid.kind != volume.grid.kind || f.grid.spatial_len() != volume.grid.spatial_len() {
        return Err(KreduxError::GridMismatch);
    }
    volume.require_positive()?;
    Ok(integrate_density(&f.grid, &(&f.values * &volume.h)))
}

/// `κ ∫ g dy1 dy2` with no positivity requirement.
pub(crate) fn integrate_density(grid: &TestbedGrid, g: &Array1<f64>) -> f64 {
    match grid.kind {
        GridKind::Torus => {
            let h = grid.h1();
            g.sum() * h * h
        }
        GridKind::Radial => {
            let h = grid.h1();
            let n = g.len();
            let trap = h * (g.sum() - 0.5 * (g[0] + g[n - 1]));
            grid.kappa() * 2.0 * std::f64::consts::PI * trap
        }
    }
}

/// `∇f·∇g = 2 Re(f_w ḡ_w)/H`.
pub fn grad_pair(f: &ScalarFieldM, g: &ScalarFieldM, metric: &Form11M) -> Result<ScalarFieldM> {
    if f.grid != g.grid || f.grid.spatial_len() != metric.grid.spatial_len() {
        return Err(KreduxError::GridMismatch);
    }
    metric.require_positive()?;
    let k = f.grid.kappa();
    let (f1, f2) = f.gradient();
    let (g1, g2) = g.gradient();
    let values = ((&f1 * &g1) / (2.0 * k * k) + (&f2 * &g2) * 0.5) / &metric.h;
    Ok(ScalarFieldM { grid: f.grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn torus() -> TestbedGrid {
        TestbedGrid::torus(32, 65, -2.0, 2.0).unwrap()
    }

    #[test]
    fn spectral_derivative_of_resolved_mode() {
        let f = ScalarFieldM::from_fn(torus(), |x, _| (2.0 * PI * x).sin());
        let d = f.differentiate(Axis::Y1, 1).unwrap();
        for s in 0..f.grid.spatial_len() {
            let x = f.grid.coords(s).0;
            assert!((d.values[s] - 2.0 * PI * (2.0 * PI * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_in_ell_has_constant_second_derivative() {
        let f = ScalarFieldP::from_fn(torus(), |_, _, l| l * l);
        let d = f.differentiate(Axis::Ell, 2).unwrap();
        assert!(d.values.iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn exponential_fiber_derivative_converges_at_fourth_order() {
        let err = |nl: usize| {
            let g = TestbedGrid::torus(9, nl, -1.0, 1.0).unwrap();
            let f = ScalarFieldP::from_fn(g, |_, _, l| l.exp());
            let d = f.differentiate(Axis::Ell, 1).unwrap();
            let ex = ScalarFieldP::from_fn(g, |_, _, l| l.exp());
            d.values.iter().zip(ex.values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let order = (err(17) / err(33)).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn rejects_bad_order_and_axis() {
        let f = ScalarFieldP::constant(torus(), 1.0);
        assert_eq!(f.differentiate(Axis::Ell, 3), Err(KreduxError::InvalidOrder(3)));
        let m = ScalarFieldM::constant(torus(), 1.0);
        assert!(m.differentiate(Axis::Ell, 1).is_err());
    }

    #[test]
    fn jv_examples() {
        let g = torus();
        let jl = jv_apply(&ScalarFieldP::log_s(g));
        assert!(jl.values.iter().all(|v| (v + 2.0).abs() < 1e-12));
        let flat = jv_apply(&ScalarFieldP::from_fn(g, |x, _, _| x.sin()));
        assert!(flat.values.iter().all(|v| v.abs() < 1e-12));
        let cyl = jv_apply(&ScalarFieldP::from_fn(g, |_, _, l| 0.25 * l * l));
        for ((_, k), v) in cyl.values.indexed_iter() {
            assert!((v + g.ell(k)).abs() < 1e-11);
        }
    }

    #[test]
    fn ddc_m_examples() {
        let g = torus();
        assert!(ddc_m(&ScalarFieldM::constant(g, 3.0)).h.iter().all(|v| v.abs() < 1e-12));
        let f = ScalarFieldM::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let h = ddc_m(&f);
        for s in 0..g.spatial_len() {
            let x = g.coords(s).0;
            assert!((h.h[s] + 2.0 * PI * PI * (2.0 * PI * x).cos()).abs() < 1e-9);
        }
        // log(1+u) in the logarithmic chart: 2 u/(1+u)², twice the reference metric.
        let r = TestbedGrid::radial(257, 8.0, 9, -1.0, 1.0).unwrap();
        let f = ScalarFieldM::from_fn(r, |v, _| v.exp().ln_1p());
        let h = ddc_m(&f);
        for s in 0..r.spatial_len() {
            if r.spatial_interior(s) {
                assert!((h.h[s] - 2.0 * r.reference_h(s)).abs() < 1e-6, "{s}");
            }
        }
    }

    #[test]
    fn ddc_p_examples() {
        let g = torus();
        let cylf = ScalarFieldP::from_fn(g, |_, _, l| 0.25 * l * l);
        let w = ddc_p_of(&cylf);
        assert!(w.a.iter().chain(w.br.iter()).chain(w.bi.iter()).all(|v| v.abs() < 1e-10));
        assert!(w.d.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let w0 = ddc_p_of(&ScalarFieldP::log_s(g));
        assert!(w0.interior_linf() < 1e-12);
        let fx = ScalarFieldP::from_fn(g, |x, y, _| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let w = ddc_p_of(&fx);
        let m = ddc_m(&ScalarFieldM::from_fn(g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos()));
        for ((s, _), v) in w.a.indexed_iter() {
            assert!((v - m.h[s]).abs() < 1e-9);
        }
        assert!(w.d.iter().chain(w.br.iter()).all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn hermitian_and_real_forms_agree_on_ddc() {
        // quartic in ℓ, so composed and direct fiber stencils are both exact
        let g = TestbedGrid::torus(16, 33, -1.0, 1.0).unwrap();
        let f = ScalarFieldP::from_fn(g, |x, y, l| {
            (2.0 * PI * x).sin() * (l - l.powi(3) / 6.0) + (2.0 * PI * y).cos() * l.powi(4) * 0.1
        });
        let a = ddc_p_of(&f).to_real();
        let b = ddc_real(&f);
        assert!(a.sub(&b).interior_linf() < 1e-9);
    }

    #[test]
    fn integrate_examples() {
        let g = torus();
        let flat = Form11M::reference(g);
        assert!((integrate_m(&ScalarFieldM::constant(g, 1.0), &flat).unwrap() - 1.0).abs() < 1e-12);
        let s = ScalarFieldM::from_fn(g, |x, _| (2.0 * PI * x).sin());
        assert!(integrate_m(&s, &flat).unwrap().abs() < 1e-12);
        let c2 = ScalarFieldM::from_fn(g, |x, _| (2.0 * PI * x).cos().powi(2));
        assert!((integrate_m(&c2, &flat).unwrap() - 0.5).abs() < 1e-10);
        assert!(integrate_m(&c2, &flat.scale(-1.0)).is_err());
    }

    #[test]
    fn grad_pair_examples() {
        let g = torus();
        let flat = Form11M::reference(g);
        let c = ScalarFieldM::constant(g, 2.0);
        assert!(grad_pair(&c, &c, &flat).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        let f = ScalarFieldM::from_fn(g, |_, y| (2.0 * PI * y).sin());
        let h = ScalarFieldM::from_fn(g, |x, _| (2.0 * PI * x).cos());
        assert!(grad_pair(&f, &h, &flat).unwrap().values.iter().all(|v| v.abs() < 1e-10));
        let s = ScalarFieldM::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let gp = grad_pair(&s, &s, &flat).unwrap();
        for i in 0..g.spatial_len() {
            let x = g.coords(i).0;
            assert!((gp.values[i] - 2.0 * PI * PI * (2.0 * PI * x).cos().powi(2)).abs() < 1e-9);
        }
    }
}
