//! Reduction by inversion: a solution `u` of the fourth-order problem gives
//! the system pair `(u, v)` with `v = -|Delta u|^{q'-2} Delta u`.
//!
//! Because `(q'-1)(q-1) = 1`, the second equation `-Delta u = |v|^{q-2} v`
//! holds by construction; the first, `-Delta v = |u|^{p-2} u`, is the
//! Euler-Lagrange equation and is checked with an independent fourth-order
//! stencil.

use serde::{Deserialize, Serialize};

use crate::discretize::{laplacian_fourth_order, laplacian_values, Field};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::functional::signed_pow;
use crate::par;

/// `v = -|Delta_h u|^{q'-2} Delta_h u` on the free nodes, zero on the
/// pinned layers.
///
/// Where `u` is negligible the root amplifies the cancellation error of
/// `Delta_h u`; a solver that already holds `v` should pass it to
/// [`SystemPair::from_pair`] instead.
pub fn second_component(u: &Field, e: &Exponents) -> Field {
    let qp = e.qp();
    let lap = laplacian_values(u.grid(), u.values());
    let pinned = u.grid().pinned();
    u.with_values(par::collect(lap.len(), |k| {
        if pinned[k] {
            0.0
        } else {
            -signed_pow(lap[k], qp)
        }
    }))
}

#[derive(Clone, Debug)]
pub struct SystemPair {
    pub u: Field,
    pub v: Field,
    pub residual_1: f64,
    pub residual_2: f64,
    /// Tail slopes of `u` and `v` when a fit window was usable.
    pub decay_slopes: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual_1: f64,
    pub residual_2: f64,
    /// Largest relative nodewise deviation of `|v|^{q-2} v` from `-Delta_h u`.
    pub identity_defect: f64,
    #[serde(default)]
    pub decay_slope_u: Option<f64>,
    #[serde(default)]
    pub decay_slope_v: Option<f64>,
}

impl SystemPair {
    pub fn new(u: Field, e: &Exponents) -> Result<Self> {
        let v = second_component(&u, e);
        Self::from_pair(u, v, e)
    }

    /// Pair from both components, e.g. when `v` is the solver's own variable.
    pub fn from_pair(u: Field, v: Field, e: &Exponents) -> Result<Self> {
        let (residual_1, residual_2) = system_residual(&u, &v, e)?;
        let r = u.grid().extent();
        let window = (0.25 * r, 0.6 * r);
        let slope = |f: &Field| decay_exponent(f, window.0, window.1).ok();
        let decay_slopes = slope(&u).zip(slope(&v));
        Ok(SystemPair {
            u,
            v,
            residual_1,
            residual_2,
            decay_slopes,
        })
    }

    pub fn report(&self, e: &Exponents) -> ResidualReport {
        ResidualReport {
            residual_1: self.residual_1,
            residual_2: self.residual_2,
            identity_defect: identity_defect(&self.u, &self.v, e),
            decay_slope_u: self.decay_slopes.map(|s| s.0),
            decay_slope_v: self.decay_slopes.map(|s| s.1),
        }
    }
}

/// Weighted `L^r` norm over the nodes selected by `mask`.
fn masked_norm(w: &[f64], f: &[f64], mask: &[bool], r: f64) -> f64 {
    par::sum(f.len(), |k| {
        if mask[k] {
            w[k] * f[k].abs().powf(r)
        } else {
            0.0
        }
    })
    .powf(1.0 / r)
}

/// Number of outer nodes excluded from the first residual: an eighth of
/// the axis, so the excluded band is fixed in physical units under
/// refinement.
pub fn residual_margin(count: usize) -> usize {
    (count / 8).max(4)
}

/// `(residual_1, residual_2)`:
///
/// * `residual_1 = |Delta v + |u|^{p-2} u|_{p'} / ||u|^{p-2} u|_{p'}`, with the
///   fourth-order Laplacian, away from the clamped boundary band;
/// * `residual_2 = |Delta_h u + |v|^{q-2} v|_{q'} / ||v|^{q-2} v|_{q'}` with
///   the solver's own stencil, on the free nodes.
pub fn system_residual(u: &Field, v: &Field, e: &Exponents) -> Result<(f64, f64)> {
    u.check_same_grid(v)?;
    let grid = u.grid();
    let w = grid.weights();
    let (p, q) = (e.p(), e.q());
    let count = grid.axes().iter().map(|a| a.count).min().unwrap_or(0);
    let (lap_v, valid) = laplacian_fourth_order(v, residual_margin(count));
    let (uv, vv) = (u.values(), v.values());
    let src = par::collect(uv.len(), |k| signed_pow(uv[k], p));
    let diff = par::collect(uv.len(), |k| lap_v[k] + src[k]);
    let den = masked_norm(w, &src, &valid, e.pp());
    let r1 = if den > 0.0 {
        masked_norm(w, &diff, &valid, e.pp()) / den
    } else {
        0.0
    };

    let interior: Vec<bool> = grid.pinned().iter().map(|b| !b).collect();
    let lap_u = laplacian_values(grid, uv);
    let src = par::collect(vv.len(), |k| signed_pow(vv[k], q));
    let diff = par::collect(vv.len(), |k| lap_u[k] + src[k]);
    let den = masked_norm(w, &src, &interior, e.qp());
    let r2 = if den > 0.0 {
        masked_norm(w, &diff, &interior, e.qp()) / den
    } else {
        0.0
    };
    Ok((r1, r2))
}

/// `max_k |(|v|^{q-2} v)_k + (Delta_h u)_k| / max_k |Delta_h u|` over the
/// free nodes.
pub fn identity_defect(u: &Field, v: &Field, e: &Exponents) -> f64 {
    let lap = laplacian_values(u.grid(), u.values());
    let pinned = u.grid().pinned();
    let scale = par::max(lap.len(), |k| if pinned[k] { 0.0 } else { lap[k].abs() });
    if scale == 0.0 {
        return 0.0;
    }
    let q = e.q();
    let vv = v.values();
    par::max(lap.len(), |k| {
        if pinned[k] {
            0.0
        } else {
            (signed_pow(vv[k], q) + lap[k]).abs()
        }
    }) / scale
}

/// Least-squares slope of `log |<f>|` against `log r`, where `<f>` are
/// shell averages over `[r_min, r_max]`.
pub fn decay_exponent(f: &Field, r_min: f64, r_max: f64) -> Result<f64> {
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::UnusableWindow(format!(
            "bad window [{r_min}, {r_max}]"
        )));
    }
    let grid = f.grid();
    let bins = 24;
    let ratio = (r_max / r_min).ln();
    let mut acc = vec![(0.0, 0.0, 0.0); bins];
    let w = grid.weights();
    for (k, wk) in w.iter().enumerate() {
        if grid.pinned()[k] {
            continue;
        }
        let r = grid.radius(k);
        if r < r_min || r >= r_max {
            continue;
        }
        let b = (((r / r_min).ln() / ratio) * bins as f64) as usize;
        let b = b.min(bins - 1);
        acc[b].0 += wk * f.values()[k];
        acc[b].1 += wk * r.ln();
        acc[b].2 += wk;
    }
    let shells: Vec<(f64, f64)> = acc
        .iter()
        .filter(|a| a.2 > 0.0)
        .map(|a| (a.1 / a.2, a.0 / a.2))
        .collect();
    if shells.len() < 3 {
        return Err(Error::UnusableWindow(
            "fewer than three populated shells".into(),
        ));
    }
    let sign = shells[0].1.signum();
    if shells.iter().any(|s| s.1 == 0.0 || s.1.signum() != sign) {
        return Err(Error::UnusableWindow("shell averages change sign".into()));
    }
    let n = shells.len() as f64;
    let mx = shells.iter().map(|s| s.0).sum::<f64>() / n;
    let my = shells.iter().map(|s| s.1.abs().ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for s in &shells {
        let (x, y) = (s.0 - mx, s.1.abs().ln() - my);
        sxy += x * y;
        sxx += x * x;
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid, GridKind};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn radial(res: usize, r: f64) -> Arc<crate::discretize::Grid> {
        Arc::new(build_grid(GridKind::Radial1d, 4, 1, r, res).unwrap())
    }

    #[test]
    fn linear_case_is_minus_laplacian() {
        let e = Exponents::paneitz(5).unwrap();
        let g = Arc::new(build_grid(GridKind::BiradialRadial3d, 5, 1, 3.0, 20).unwrap());
        let u = Field::from_fn(g.clone(), |x| {
            (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()
        });
        let v = second_component(&u, &e);
        let lap = laplacian_values(&g, u.values());
        let pinned = g.pinned();
        assert!(v
            .values()
            .iter()
            .zip(&lap)
            .zip(pinned)
            .all(|((a, b), &pin)| if pin { *a == 0.0 } else { *a == -*b }));
    }

    #[test]
    fn conjugate_identity_nodewise() {
        for e in [
            Exponents::yamabe(4).unwrap(),
            Exponents::from_q(6, 4).unwrap(),
        ] {
            let u = Field::from_fn(radial(300, 6.0), |x| (x[0] - 1.0) * (-x[0] * x[0]).exp());
            let v = second_component(&u, &e);
            assert!(identity_defect(&u, &v, &e) < 1e-12);
            let (_, r2) = system_residual(&u, &v, &e).unwrap();
            assert!(r2 < 1e-12, "{r2}");
        }
    }

    #[test]
    fn bubble_v_is_a_multiple_of_u() {
        let e = Exponents::yamabe(4).unwrap();
        let u = Field::from_fn(radial(4000, 20.0), |x| 1.0 / (1.0 + x[0] * x[0]));
        let v = second_component(&u, &e);
        let ratios: Vec<f64> = (0..2000).map(|k| v.values()[k] / u.values()[k]).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!((hi - lo) / lo < 1e-3, "{lo} {hi}");
        assert!((lo - 2.0).abs() < 1e-3, "8^{{1/3}} = 2");
    }

    #[test]
    fn zero_and_noise() {
        let e = Exponents::yamabe(4).unwrap();
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 4.0, 64).unwrap());
        let z = Field::zeros(g.clone());
        assert_eq!(
            system_residual(&z, &second_component(&z, &e), &e).unwrap(),
            (0.0, 0.0)
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = Field::new(g, vals).unwrap();
        let (r1, _) = system_residual(&n, &second_component(&n, &e), &e).unwrap();
        assert!(r1 >= 0.5, "{r1}");
    }

    #[test]
    fn decay_slopes() {
        let g = radial(2000, 40.0);
        let s = decay_exponent(&Field::from_fn(g.clone(), |x| x[0].powi(-2)), 5.0, 20.0).unwrap();
        assert!((s + 2.0).abs() < 0.05, "{s}");
        let s = decay_exponent(
            &Field::from_fn(g.clone(), |x| 1.0 / (1.0 + x[0] * x[0])),
            10.0,
            30.0,
        )
        .unwrap();
        assert!((s + 2.0).abs() < 0.1, "{s}");
        let s = decay_exponent(&Field::from_fn(g.clone(), |_| 1.0), 5.0, 20.0).unwrap();
        assert!(s.abs() < 0.05);
        let osc = Field::from_fn(g, |x| x[0].sin());
        assert!(matches!(
            decay_exponent(&osc, 5.0, 20.0),
            Err(Error::UnusableWindow(_))
        ));
    }
}
