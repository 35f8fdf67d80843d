//! Fast inverse of the discrete Laplacian on the free (unpinned) nodes.
//!
//! The grid operator is a tensor sum of one-dimensional operators, each
//! self-adjoint in its axis weights. Diagonalizing every axis once gives
//! `Delta^{-1} = G diag(1 / sum_a lambda_a) F` with `F = V^T W^{1/2}` and
//! `G = W^{-1/2} V` applied axis by axis. One-axis grids use a tridiagonal
//! solve instead.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::discretize::{laplacian_values, Axis, Grid};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Free index range of an axis.
fn free_range(ax: &Axis) -> std::ops::Range<usize> {
    let hi = ax.count - 2;
    let lo = if ax.reduced { 0 } else { 2 };
    lo..hi
}

struct AxisFactor {
    /// Row-major `F` and `G`.
    fwd: Vec<f64>,
    inv: Vec<f64>,
    eig: Vec<f64>,
}

fn factor_axis(ax: &Axis) -> AxisFactor {
    let r = free_range(ax);
    let n = r.len();
    let sw: Vec<f64> = r.clone().map(|i| ax.weights[i].sqrt()).collect();
    // B = W^{1/2} L W^{-1/2} is symmetric because w_i up_i = w_{i+1} lo_{i+1}.
    let mut b = DMatrix::zeros(n, n);
    for (a, i) in r.clone().enumerate() {
        b[(a, a)] = -(ax.up[i] + ax.lo[i]);
        if a + 1 < n {
            let off = sw[a] * ax.up[i] / sw[a + 1];
            b[(a, a + 1)] = off;
            b[(a + 1, a)] = off;
        }
    }
    let se = SymmetricEigen::new(b);
    let v = se.eigenvectors;
    let mut fwd = vec![0.0; n * n];
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            fwd[i * n + j] = v[(j, i)] * sw[j];
            inv[i * n + j] = v[(i, j)] / sw[i];
        }
    }
    AxisFactor {
        fwd,
        inv,
        eig: se.eigenvalues.iter().copied().collect(),
    }
}

/// `out = T x` along `axis` of a row-major tensor with shape `dims`.
pub fn transform_axis(x: &[f64], dims: &[usize], axis: usize, t: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; x.len()];
    let row = |(r, dst): (usize, &mut [f64])| {
        // Output row `r` covers (outer o, index i) and `inner` contiguous values.
        let (o, i) = (r / n, r % n);
        let trow = &t[i * n..(i + 1) * n];
        let base = o * n * inner;
        if inner == 1 {
            let src = &x[base..base + n];
            dst[0] = trow.iter().zip(src).map(|(a, b)| a * b).sum();
        } else {
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (j, &c) in trow.iter().enumerate() {
                let src = &x[base + j * inner..base + (j + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    };
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(inner).enumerate().for_each(row);
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(inner).enumerate().for_each(row);
    out
}

enum Kind {
    Tridiagonal {
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
    },
    Spectral {
        factors: Vec<AxisFactor>,
        denom: Vec<f64>,
    },
}

pub struct InverseLaplacian {
    /// Full-grid index of every free node, in free-tensor order.
    free: Vec<usize>,
    dims: Vec<usize>,
    kind: Kind,
}

impl InverseLaplacian {
    pub fn new(grid: &Grid) -> Self {
        let axes = grid.axes();
        let ranges: Vec<_> = axes.iter().map(free_range).collect();
        let dims: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        let total: usize = dims.iter().product();
        let mut free = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims.len()];
        for m in 0..total {
            let mut rem = m;
            for a in (0..dims.len()).rev() {
                idx[a] = ranges[a].start + rem % dims[a];
                rem /= dims[a];
            }
            free.push(grid.ravel(&idx));
        }
        let kind = if axes.len() == 1 {
            let ax = &axes[0];
            let r = ranges[0].clone();
            Kind::Tridiagonal {
                lower: r.clone().map(|i| ax.lo[i]).collect(),
                diag: r.clone().map(|i| -(ax.up[i] + ax.lo[i])).collect(),
                upper: r.map(|i| ax.up[i]).collect(),
            }
        } else {
            let factors: Vec<AxisFactor> = axes.iter().map(factor_axis).collect();
            let mut denom = vec![0.0; total];
            for (m, d) in denom.iter_mut().enumerate() {
                let mut rem = m;
                let mut s = 0.0;
                for a in (0..dims.len()).rev() {
                    s += factors[a].eig[rem % dims[a]];
                    rem /= dims[a];
                }
                *d = 1.0 / s;
            }
            Kind::Spectral { factors, denom }
        };
        InverseLaplacian { free, dims, kind }
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Solves `Delta_h x = g` on the free nodes with `x = 0` on the pinned
    /// layers. Entries of `g` on pinned nodes are ignored.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self.free.iter().map(|&k| g[k]).collect();
        let sol = match &self.kind {
            Kind::Tridiagonal { lower, diag, upper } => thomas(lower, diag, upper, &rhs),
            Kind::Spectral { factors, denom } => {
                let mut x = rhs;
                for (a, f) in factors.iter().enumerate() {
                    x = transform_axis(&x, &self.dims, a, &f.fwd);
                }
                x.iter_mut().zip(denom).for_each(|(v, d)| *v *= d);
                for (a, f) in factors.iter().enumerate() {
                    x = transform_axis(&x, &self.dims, a, &f.inv);
                }
                x
            }
        };
        let mut out = vec![0.0; g.len()];
        for (&k, v) in self.free.iter().zip(sol) {
            out[k] = v;
        }
        out
    }

    /// [`apply`](Self::apply) followed by one step of iterative refinement
    /// against the stencil of `grid`.
    pub fn apply_refined(&self, grid: &Grid, g: &[f64]) -> Vec<f64> {
        let mut x = self.apply(g);
        let lap = laplacian_values(grid, &x);
        let r: Vec<f64> = g.iter().zip(&lap).map(|(a, b)| a - b).collect();
        let dx = self.apply(&r);
        x.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        x
    }
}

/// Tridiagonal solve; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid, GridKind};

    fn check(grid: &Grid) {
        let inv = InverseLaplacian::new(grid);
        let g: Vec<f64> = (0..grid.len())
            .map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let x = inv.apply(&g);
        let lx = laplacian_values(grid, &x);
        let pinned = grid.pinned();
        let mut worst: f64 = 0.0;
        for k in 0..grid.len() {
            if pinned[k] {
                assert_eq!(x[k], 0.0);
            } else {
                worst = worst.max((lx[k] - g[k]).abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn inverts_on_free_nodes() {
        check(&build_grid(GridKind::Radial1d, 4, 1, 5.0, 300).unwrap());
        check(&build_grid(GridKind::Biradial2d, 4, 1, 5.0, 40).unwrap());
        check(&build_grid(GridKind::BiradialRadial3d, 7, 1, 4.0, 18).unwrap());
        check(&build_grid(GridKind::Cartesian, 3, 0, 1.0, 10).unwrap());
    }

    #[test]
    fn transform_matches_dense_product() {
        let dims = [3, 4, 2];
        let x: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let t: Vec<f64> = (0..16).map(|v| (v as f64).sin()).collect();
        let y = transform_axis(&x, &dims, 1, &t);
        for o in 0..3 {
            for i in 0..4 {
                for r in 0..2 {
                    let want: f64 = (0..4).map(|j| t[i * 4 + j] * x[o * 8 + j * 2 + r]).sum();
                    assert!((y[o * 8 + i * 2 + r] - want).abs() < 1e-12);
                }
            }
        }
    }
}
