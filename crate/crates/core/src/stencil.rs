//! Finite-difference, quadrature and interpolation kernels on uniform 1-D axes.

/// Fornberg's recursion: weights of the `m`-th derivative at `x0` from nodes `xs`.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Per-node stencils of a fourth-order derivative on `n` uniform nodes:
/// centered 5-point in the interior, one-sided closures of matching order
/// at the two nodes next to each end.
#[derive(Debug, Clone)]
pub struct FdStencil {
    pub order: usize,
    /// `(first node index, weights)` for each output node, unscaled by `h`.
    nodes: Vec<(usize, Vec<f64>)>,
}

impl FdStencil {
    pub fn new(n: usize, order: usize) -> Self {
        assert!(n >= 6, "fourth-order stencils need at least 6 nodes");
        let width_edge = if order == 1 { 5 } else { 6 };
        let nodes = (0..n)
            .map(|i| {
                let (start, width) = if i >= 2 && i + 2 < n {
                    (i - 2, 5)
                } else if i < 2 {
                    (0, width_edge)
                } else {
                    (n - width_edge, width_edge)
                };
                let xs: Vec<f64> = (start..start + width).map(|j| j as f64).collect();
                (start, fornberg_weights(i as f64, &xs, order))
            })
            .collect();
        FdStencil { order, nodes }
    }

    /// Apply along a strided view: `get(j)` reads node `j`, result written via `put`.
    #[inline]
    pub fn apply_with(&self, h: f64, get: impl Fn(usize) -> f64, mut put: impl FnMut(usize, f64)) {
        let scale = h.powi(self.order as i32).recip();
        for (i, (start, w)) in self.nodes.iter().enumerate() {
            let mut acc = 0.0;
            for (o, wi) in w.iter().enumerate() {
                acc += wi * get(start + o);
            }
            put(i, acc * scale);
        }
    }

    pub fn apply(&self, values: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.apply_with(h, |j| values[j], |i, v| out[i] = v);
        out
    }
}

/// Cumulative integral `∫_{x_0}^{x_k} f`, integrating on each cell the same
/// local interpolant used along fibers, with the first entry zero. Cell
/// weights come from 4-point Gauss–Legendre, exact for the degree-7 pieces.
pub fn cumulative_integral(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= INTERP_POINTS);
    const GAUSS: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
        (-0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    ];
    let mut out = vec![0.0; n];
    for k in 0..n - 1 {
        let mut piece = 0.0;
        for (x, w) in GAUSS {
            let t = k as f64 + 0.5 * (x + 1.0);
            piece += w * LocalInterp::in_cell(t, 0.0, 1.0, n, k).eval(|j| values[j]);
        }
        out[k + 1] = out[k] + 0.5 * piece * h;
    }
    out
}

/// Number of nodes in the local Lagrange interpolant used along fibers.
pub const INTERP_POINTS: usize = 8;

/// Local Lagrange interpolation on a uniform axis `x0 + j h`, `j < n`.
#[derive(Debug, Clone, Copy)]
pub struct LocalInterp {
    pub start: usize,
    pub weights: [f64; INTERP_POINTS],
}

impl LocalInterp {
    /// Index of the cell `[x_k, x_{k+1}]` containing `x` (clamped to the axis).
    pub fn cell(x: f64, x0: f64, h: f64, n: usize) -> usize {
        let t = ((x - x0) / h).floor();
        (t.max(0.0) as usize).min(n - 2)
    }

    pub fn stencil_start(cell: usize, n: usize) -> usize {
        let half = INTERP_POINTS / 2;
        let lo = (cell + 1).saturating_sub(half);
        lo.min(n - INTERP_POINTS)
    }

    /// Interpolation weights at `x` using the stencil attached to `cell`.
    pub fn in_cell(x: f64, x0: f64, h: f64, n: usize, cell: usize) -> Self {
        let start = Self::stencil_start(cell, n);
        let t = (x - x0) / h - start as f64;
        let mut weights = [0.0; INTERP_POINTS];
        for (j, w) in weights.iter_mut().enumerate() {
            let mut p = 1.0;
            for m in 0..INTERP_POINTS {
                if m != j {
                    p *= (t - m as f64) / (j as f64 - m as f64);
                }
            }
            *w = p;
        }
        LocalInterp { start, weights }
    }

    pub fn at(x: f64, x0: f64, h: f64, n: usize) -> Self {
        Self::in_cell(x, x0, h, n, Self::cell(x, x0, h, n))
    }

    #[inline]
    pub fn eval(&self, get: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(j, w)| w * get(self.start + j)).sum()
    }
}

/// Value and derivative of the local interpolant attached to `cell` at `x`.
pub fn interp_value_slope(values: &[f64], x: f64, x0: f64, h: f64, cell: usize) -> (f64, f64) {
    let n = values.len();
    let start = LocalInterp::stencil_start(cell, n);
    let t = (x - x0) / h - start as f64;
    let mut val = 0.0;
    let mut der = 0.0;
    for j in 0..INTERP_POINTS {
        let mut p = 1.0;
        let mut dp = 0.0;
        for m in 0..INTERP_POINTS {
            if m == j {
                continue;
            }
            let denom = j as f64 - m as f64;
            dp = dp * (t - m as f64) / denom + p / denom;
            p *= (t - m as f64) / denom;
        }
        val += p * values[start + j];
        der += dp * values[start + j];
    }
    (val, der / h)
}
