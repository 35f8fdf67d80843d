use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest node count per axis accepted on reduced grids.
pub const MIN_RESOLUTION: usize = 16;

/// Largest node total accepted on full Cartesian grids.
pub const MAX_CARTESIAN_NODES: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `r = |x|` on `R^N`.
    #[serde(rename = "radial_1d")]
    Radial1d,
    /// `(s, t) = (|z1|, |z2|)` on `C^2 = R^4`.
    #[serde(rename = "biradial_2d")]
    Biradial2d,
    /// `(s, t, r) = (|z1|, |z2|, |y|)` on `C^2 x R^{N-4}`.
    #[serde(rename = "biradial_radial_3d")]
    BiradialRadial3d,
    /// Full Cartesian grid on `[-R, R]^N`.
    Cartesian,
}

impl GridKind {
    pub fn code(self) -> u8 {
        match self {
            GridKind::Radial1d => 0,
            GridKind::Biradial2d => 1,
            GridKind::BiradialRadial3d => 2,
            GridKind::Cartesian => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GridKind::Radial1d,
            1 => GridKind::Biradial2d,
            2 => GridKind::BiradialRadial3d,
            3 => GridKind::Cartesian,
            _ => return None,
        })
    }

    pub fn is_reduced(self) -> bool {
        !matches!(self, GridKind::Cartesian)
    }
}

/// Area of the unit `k`-sphere in `R^{k+1}`.
pub fn sphere_area(k: u32) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: u32) -> f64 {
    sphere_area(n - 1) / n as f64
}

/// One grid axis. Reduced axes are moduli `x >= 0` with measure
/// `c * x^m dx` and even reflection across `x = 0`; full axes are
/// Cartesian coordinates with zero extension on both sides.
#[derive(Clone, Debug)]
pub struct Axis {
    pub count: usize,
    pub spacing: f64,
    pub reduced: bool,
    /// Power `m` of the radial measure `x^m dx` (0 on full axes).
    pub metric_power: u32,
    /// Node coordinates (cell-centered).
    pub coords: Vec<f64>,
    /// One-dimensional quadrature weights including the sphere factor.
    pub weights: Vec<f64>,
    /// Stencil coefficients: `(L u)_i = up_i (u_{i+1} - u_i) - lo_i (u_i - u_{i-1})`.
    pub up: Vec<f64>,
    pub lo: Vec<f64>,
}

impl Axis {
    fn reduced(count: usize, spacing: f64, metric_power: u32, sphere: f64) -> Self {
        let h = spacing;
        let m = metric_power as i32;
        let coords: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) * h).collect();
        // Exact cell volumes int x^m dx over [x - h/2, x + h/2]; the control
        // volume normalization keeps the stencil consistent at the axis.
        let cells: Vec<f64> = coords
            .iter()
            .map(|x| ((x + 0.5 * h).powi(m + 1) - (x - 0.5 * h).powi(m + 1)) / (m + 1) as f64)
            .collect();
        let weights = cells.iter().map(|v| sphere * v).collect();
        let mut up = Vec::with_capacity(count);
        let mut lo = Vec::with_capacity(count);
        for (i, &x) in coords.iter().enumerate() {
            up.push((x + 0.5 * h).powi(m) / (cells[i] * h));
            // The flux through the axis vanishes (even reflection).
            lo.push(if i == 0 {
                0.0
            } else {
                (x - 0.5 * h).powi(m) / (cells[i] * h)
            });
        }
        Axis {
            count,
            spacing,
            reduced: true,
            metric_power,
            coords,
            weights,
            up,
            lo,
        }
    }

    fn full(count: usize, spacing: f64) -> Self {
        let h = spacing;
        let half = count as f64 * h / 2.0;
        let coords = (0..count).map(|i| -half + (i as f64 + 0.5) * h).collect();
        let c = 1.0 / (h * h);
        Axis {
            count,
            spacing,
            reduced: false,
            metric_power: 0,
            coords,
            weights: vec![h; count],
            up: vec![c; count],
            lo: vec![c; count],
        }
    }

    /// The outermost node: a ghost layer that carries values for the
    /// stencil but is excluded from the energy integrals.
    pub fn is_boundary(&self, i: usize) -> bool {
        i + 1 == self.count || (!self.reduced && i == 0)
    }

    /// The two outer layers, held at zero by the solver. Zero value on the
    /// last counted layer plus zero ghost beyond it is the clamped condition.
    pub fn is_pinned(&self, i: usize) -> bool {
        i + 2 >= self.count || (!self.reduced && i <= 1)
    }
}

/// Structured grid with cell-centered nodes and volume-element weights.
#[derive(Clone, Debug)]
pub struct Grid {
    kind: GridKind,
    dim: u32,
    blocks: u32,
    extent: f64,
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    weights: Vec<f64>,
    pinned: Vec<bool>,
    boundary: Vec<bool>,
}

/// The information needed to rebuild a grid bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub kind: GridKind,
    pub dim: u32,
    pub blocks: u32,
    pub extent: f64,
    pub counts: Vec<usize>,
    pub spacings: Vec<f64>,
}

/// Builds a grid of `resolution` nodes per axis on the truncated domain of
/// radius `extent`.
///
/// Reduced grids cover `[0, R]` on every modulus axis (for the bi-radial
/// kinds this is the polydisc `|z1|, |z2| < R`); Cartesian grids cover
/// `[-R, R]^N`.
pub fn build_grid(
    kind: GridKind,
    dim: u32,
    blocks: u32,
    extent: f64,
    resolution: usize,
) -> Result<Grid> {
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "extent must be positive, got {extent}"
        )));
    }
    let (naxes, spacing) = match kind {
        GridKind::Radial1d => (1, extent / resolution as f64),
        GridKind::Biradial2d => (2, extent / resolution as f64),
        GridKind::BiradialRadial3d => (3, extent / resolution as f64),
        GridKind::Cartesian => (dim as usize, 2.0 * extent / resolution as f64),
    };
    let desc = GridDescriptor {
        kind,
        dim,
        blocks,
        extent,
        counts: vec![resolution; naxes],
        spacings: vec![spacing; naxes],
    };
    Grid::from_descriptor(&desc)
}

impl Grid {
    pub fn from_descriptor(d: &GridDescriptor) -> Result<Grid> {
        use std::f64::consts::PI;
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if d.counts.len() != d.spacings.len() {
            return bad("axis count mismatch".into());
        }
        if d.spacings.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || !(d.extent > 0.0) {
            return bad("spacings and extent must be positive".into());
        }
        let expected_axes = match d.kind {
            GridKind::Radial1d => {
                if d.dim < 2 {
                    return bad(format!("radial grid needs N >= 2, got {}", d.dim));
                }
                1
            }
            GridKind::Biradial2d => {
                if d.dim != 4 || d.blocks != 1 {
                    return bad(format!(
                        "bi-radial 2d grid needs N = 4 and j = 1, got N = {} j = {}",
                        d.dim, d.blocks
                    ));
                }
                2
            }
            GridKind::BiradialRadial3d => {
                if d.dim < 5 || d.blocks != 1 {
                    return bad(format!(
                        "bi-radial-radial grid needs N >= 5 and j = 1, got N = {} j = {}",
                        d.dim, d.blocks
                    ));
                }
                3
            }
            GridKind::Cartesian => d.dim as usize,
        };
        if d.counts.len() != expected_axes {
            return bad(format!(
                "{:?} grid needs {expected_axes} axes, got {}",
                d.kind,
                d.counts.len()
            ));
        }
        if d.kind.is_reduced() {
            if let Some(c) = d.counts.iter().find(|&&c| c < MIN_RESOLUTION) {
                return bad(format!("resolution {c} below minimum {MIN_RESOLUTION}"));
            }
        } else {
            if d.counts.iter().any(|&c| c < 2 || c % 2 != 0) {
                return bad("Cartesian axes need an even node count >= 2".into());
            }
            let total = d.counts.iter().try_fold(1usize, |a, &c| a.checked_mul(c));
            if total.is_none_or(|t| t > MAX_CARTESIAN_NODES) {
                return bad(format!(
                    "Cartesian grid exceeds {MAX_CARTESIAN_NODES} nodes"
                ));
            }
        }
        let axes: Vec<Axis> = match d.kind {
            GridKind::Radial1d => vec![Axis::reduced(
                d.counts[0],
                d.spacings[0],
                d.dim - 1,
                sphere_area(d.dim - 1),
            )],
            GridKind::Biradial2d => (0..2)
                .map(|a| Axis::reduced(d.counts[a], d.spacings[a], 1, 2.0 * PI))
                .collect(),
            GridKind::BiradialRadial3d => vec![
                Axis::reduced(d.counts[0], d.spacings[0], 1, 2.0 * PI),
                Axis::reduced(d.counts[1], d.spacings[1], 1, 2.0 * PI),
                Axis::reduced(
                    d.counts[2],
                    d.spacings[2],
                    d.dim - 5,
                    sphere_area(d.dim - 5),
                ),
            ],
            GridKind::Cartesian => d
                .counts
                .iter()
                .zip(&d.spacings)
                .map(|(&c, &h)| Axis::full(c, h))
                .collect(),
        };
        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].count;
        }
        let len = axes.iter().map(|a| a.count).product();
        let mut grid = Grid {
            kind: d.kind,
            dim: d.dim,
            blocks: d.blocks,
            extent: d.extent,
            axes,
            strides,
            len,
            weights: Vec::new(),
            pinned: Vec::new(),
            boundary: Vec::new(),
        };
        let mut idx = vec![0usize; grid.axes.len()];
        let mut weights = Vec::with_capacity(len);
        let mut pinned = Vec::with_capacity(len);
        let mut boundary = Vec::with_capacity(len);
        for k in 0..len {
            grid.unravel(k, &mut idx);
            let mut w = 1.0;
            let (mut pin, mut edge) = (false, false);
            for (a, &i) in idx.iter().enumerate() {
                w *= grid.axes[a].weights[i];
                pin |= grid.axes[a].is_pinned(i);
                edge |= grid.axes[a].is_boundary(i);
            }
            weights.push(w);
            pinned.push(pin);
            boundary.push(edge);
        }
        grid.weights = weights;
        grid.pinned = pinned;
        grid.boundary = boundary;
        Ok(grid)
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            kind: self.kind,
            dim: self.dim,
            blocks: self.blocks,
            extent: self.extent,
            counts: self.axes.iter().map(|a| a.count).collect(),
            spacings: self.axes.iter().map(|a| a.spacing).collect(),
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Ambient dimension `N`.
    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn blocks(&self) -> u32 {
        self.blocks
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes on the two clamped outer layers (held at zero by the solver).
    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Nodes on the outermost ghost layer.
    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn unravel(&self, mut k: usize, idx: &mut [usize]) {
        for (a, s) in self.strides.iter().enumerate() {
            idx[a] = k / s;
            k %= s;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Node coordinates in the grid's own variables.
    pub fn node(&self, k: usize) -> Vec<f64> {
        let mut idx = vec![0; self.axes.len()];
        self.unravel(k, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a].coords[i])
            .collect()
    }

    /// Euclidean norm `|x|` in `R^N` of node `k`.
    pub fn radius(&self, k: usize) -> f64 {
        self.node(k).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Same axes, spacings and kind.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.descriptor() == other.descriptor()
    }
}
