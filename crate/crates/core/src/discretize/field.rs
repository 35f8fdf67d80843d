use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::par;
use crate::symmetry::SymmetrySpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    #[serde(default)]
    pub exponents: Option<Exponents>,
    #[serde(default)]
    pub symmetry: Option<SymmetrySpec>,
    /// Set only by the symmetrizer (and preserved by operations that keep
    /// equivariance).
    #[serde(default)]
    pub equivariant: bool,
}

/// One real sample per grid node.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    pub meta: FieldMeta,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite value at node {k}")));
        }
        Ok(Field {
            grid,
            values,
            meta: FieldMeta::default(),
        })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Field {
            grid,
            values: vec![0.0; n],
            meta: FieldMeta::default(),
        }
    }

    /// Samples `f` at every node (in the grid's own coordinates).
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let g = grid.clone();
        let values = par::collect(grid.len(), |k| f(&g.node(k)));
        Field {
            grid,
            values,
            meta: FieldMeta::default(),
        }
    }

    /// Same grid and metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Field {
            grid: self.grid.clone(),
            values,
            meta: self.meta.clone(),
        }
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let v = &self.values;
        self.with_values(par::collect(v.len(), |k| f(v[k])))
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|x| t * x)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_meta(mut self, meta: FieldMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn max_abs(&self) -> f64 {
        let v = &self.values;
        par::max(v.len(), |k| v[k].abs())
    }

    /// Weighted inner product `sum_k w_k f_k g_k`.
    pub fn dot(&self, other: &Field) -> f64 {
        let (a, b, w) = (&self.values, &other.values, self.grid.weights());
        par::sum(a.len(), |k| w[k] * a[k] * b[k])
    }

    /// Quadrature norm `(sum_k w_k f_k^2)^{1/2}`.
    pub fn norm_w(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// True when both signs occur above `rel_floor * max|f|`.
    pub fn changes_sign(&self, rel_floor: f64) -> bool {
        let floor = rel_floor * self.max_abs();
        let pos = self.values.iter().any(|&x| x > floor);
        let neg = self.values.iter().any(|&x| x < -floor);
        pos && neg
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid.descriptor(),
                other.grid.descriptor()
            )))
        }
    }

    /// Multilinear interpolation at a point given in grid coordinates.
    /// Reduced axes are extended evenly across 0; every axis is extended by
    /// zero beyond the outer boundary.
    pub fn sample(&self, x: &[f64]) -> f64 {
        let axes = self.grid.axes();
        let strides = self.grid.strides();
        let mut corners: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (a, ax) in axes.iter().enumerate() {
            let h = ax.spacing;
            let pos = if ax.reduced {
                x[a].abs() / h - 0.5
            } else {
                (x[a] + ax.count as f64 * h / 2.0) / h - 0.5
            };
            let i0 = pos.floor();
            let frac = pos - i0;
            let i0 = i0 as i64;
            let resolve = |i: i64| -> Option<usize> {
                if ax.reduced && i < 0 {
                    Some((-1 - i) as usize).filter(|&j| j < ax.count)
                } else if i < 0 || i >= ax.count as i64 {
                    None
                } else {
                    Some(i as usize)
                }
            };
            let lo = resolve(i0);
            let hi = resolve(i0 + 1);
            let mut next = Vec::with_capacity(corners.len() * 2);
            for &(off, w) in &corners {
                if let Some(i) = lo {
                    next.push((off + i * strides[a], w * (1.0 - frac)));
                }
                if let Some(i) = hi {
                    next.push((off + i * strides[a], w * frac));
                }
            }
            corners = next;
        }
        corners.iter().map(|&(k, w)| w * self.values[k]).sum()
    }
}

/// Quadrature `sum_k w_k f_k`.
pub fn integrate(f: &Field) -> f64 {
    let (v, w) = (f.values(), f.grid().weights());
    par::sum(v.len(), |k| w[k] * v[k])
}
