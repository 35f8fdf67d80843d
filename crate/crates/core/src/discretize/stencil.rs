//! Finite-difference Laplacians on structured grids.
//!
//! On a reduced axis with measure `x^m dx` the second-order stencil is the
//! finite-volume flux form
//!
//! ```text
//! (L u)_i = [x_{i+1/2}^m (u_{i+1} - u_i) - x_{i-1/2}^m (u_i - u_{i-1})] / (V_i h)
//! ```
//!
//! with `V_i` the exact cell volume of `x^m dx`. Nodes sit at `(i + 1/2) h`,
//! so the axis flux `x_{-1/2}^m` vanishes and no `1/x` is ever evaluated
//! at 0. Beyond the outer node the field is extended by zero. The operator is self-adjoint in the
//! quadrature inner product.

use super::field::Field;
use super::grid::Grid;
use crate::par;

/// `out = Delta_h u` on raw node values.
pub fn apply_laplacian(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let axes = grid.axes();
    let strides = grid.strides();
    par::fill(out, |k| {
        let uk = u[k];
        let mut rem = k;
        let mut acc = 0.0;
        for (a, ax) in axes.iter().enumerate() {
            let s = strides[a];
            let i = rem / s;
            rem %= s;
            let next = if i + 1 < ax.count { u[k + s] } else { 0.0 };
            let prev = if i > 0 { u[k - s] } else { 0.0 };
            acc += ax.up[i] * (next - uk) - ax.lo[i] * (uk - prev);
        }
        acc
    });
}

pub fn laplacian_values(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    apply_laplacian(grid, u, &mut out);
    out
}

/// Second-order discrete Laplacian of a field (same grid and metadata).
pub fn laplacian(f: &Field) -> Field {
    f.with_values(laplacian_values(f.grid(), f.values()))
}

/// Fourth-order centered Laplacian, evaluated only where the five-point
/// stencil stays clear of the outer boundary layer. Returns the values and
/// a mask of the nodes where they are defined.
///
/// Used as an independent discretization when checking equations that the
/// solver enforced with the second-order stencil.
pub fn laplacian_fourth_order(f: &Field, margin: usize) -> (Vec<f64>, Vec<bool>) {
    let grid = f.grid();
    let u = f.values();
    let axes = grid.axes();
    let strides = grid.strides();
    let margin = margin.max(3);
    let n = u.len();
    let valid: Vec<bool> = (0..n)
        .map(|k| {
            let mut rem = k;
            axes.iter().enumerate().all(|(a, ax)| {
                let i = rem / strides[a];
                rem %= strides[a];
                let hi_ok = i + margin < ax.count;
                let lo_ok = ax.reduced || i >= margin;
                hi_ok && lo_ok
            })
        })
        .collect();
    let vals = par::collect(n, |k| {
        if !valid[k] {
            return 0.0;
        }
        let mut rem = k;
        let mut acc = 0.0;
        for (a, ax) in axes.iter().enumerate() {
            let s = strides[a];
            let i = rem / s;
            rem %= s;
            let at = |d: i64| -> f64 {
                let j = i as i64 + d;
                // Even reflection across the axis for cell-centered nodes.
                let j = if j < 0 { -1 - j } else { j };
                u[k - i * s + j as usize * s]
            };
            let h = ax.spacing;
            let (m2, m1, z, p1, p2) = (at(-2), at(-1), at(0), at(1), at(2));
            let d2 = (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * h * h);
            acc += d2;
            if ax.reduced && ax.metric_power > 0 {
                let d1 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
                acc += ax.metric_power as f64 / ax.coords[i] * d1;
            }
        }
        acc
    });
    (vals, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid, GridKind};
    use std::sync::Arc;

    fn biradial(n: usize, r: f64) -> Arc<Grid> {
        Arc::new(build_grid(GridKind::Biradial2d, 4, 1, r, n).unwrap())
    }

    fn interior(grid: &Grid, k: usize, band: usize) -> bool {
        let mut idx = vec![0; grid.axes().len()];
        grid.unravel(k, &mut idx);
        idx.iter()
            .zip(grid.axes())
            .all(|(&i, ax)| i + band < ax.count && (ax.reduced || i >= band))
    }

    #[test]
    fn s_squared_has_laplacian_four() {
        let g = biradial(32, 1.0);
        let f = Field::from_fn(g.clone(), |x| x[0] * x[0]);
        let l = laplacian(&f);
        for k in 0..g.len() {
            if interior(&g, k, 1) {
                assert!((l.values()[k] - 4.0).abs() < 1e-9, "{}", l.values()[k]);
            }
        }
    }

    #[test]
    fn harmonic_polynomial() {
        let g = biradial(32, 1.0);
        let f = Field::from_fn(g.clone(), |x| x[0] * x[0] - x[1] * x[1]);
        let l = laplacian(&f);
        for k in 0..g.len() {
            if interior(&g, k, 1) {
                assert!(l.values()[k].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn radial_bubble_second_order() {
        // -Delta (1+r^2)^{-1} = 8 (1+r^2)^{-3} in R^4.
        let err = |n: usize| {
            let g = Arc::new(build_grid(GridKind::Radial1d, 4, 1, 10.0, n).unwrap());
            let f = Field::from_fn(g.clone(), |x| 1.0 / (1.0 + x[0] * x[0]));
            let l = laplacian(&f);
            (0..n - 1)
                .map(|k| {
                    let r = g.node(k)[0];
                    (-l.values()[k] - 8.0 / (1.0 + r * r).powi(3)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e1 < 0.1, "{e1}");
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "observed order {order}");
    }

    #[test]
    fn bounded_near_axis() {
        // Smooth even-in-s function: Delta stays bounded as s -> 0.
        let g = biradial(64, 2.0);
        let f = Field::from_fn(g.clone(), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let l = laplacian(&f);
        let worst = (0..g.len())
            .filter(|&k| interior(&g, k, 1))
            .map(|k| l.values()[k].abs())
            .fold(0.0, f64::max);
        assert!(worst < 8.1, "{worst}");
    }

    #[test]
    fn self_adjoint_in_quadrature_metric() {
        let g = Arc::new(build_grid(GridKind::BiradialRadial3d, 6, 1, 3.0, 16).unwrap());
        let a = Field::from_fn(g.clone(), |x| (x[0] - 0.3 * x[1] + x[2]).sin());
        let b = Field::from_fn(g.clone(), |x| (x[0] * x[1] + 0.5 * x[2]).cos());
        let lhs = laplacian(&a).dot(&b);
        let rhs = a.dot(&laplacian(&b));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn fourth_order_on_biradial() {
        let err = |n: usize| {
            let g = biradial(n, 4.0);
            let f = Field::from_fn(g.clone(), |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp());
            let (l, valid) = laplacian_fourth_order(&f, 4);
            (0..g.len())
                .filter(|&k| valid[k])
                .map(|k| {
                    let x = g.node(k);
                    let (s, t) = (x[0], x[1]);
                    let e = (-(s * s + 2.0 * t * t)).exp();
                    let exact = e * ((4.0 * s * s - 4.0) + (16.0 * t * t - 8.0));
                    (l[k] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!((e1 / e2).log2() > 2.5, "{e1} {e2}");
    }
}
