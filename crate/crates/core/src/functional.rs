//! The energy
//!
//! ```text
//! J(u) = (1/q') int |Delta u|^{q'} - (1/p) int |u|^p
//! ```
//!
//! on a grid, its gradient in the quadrature metric, the Nehari projection,
//! the critical rescaling and the monotonicity inequality for `|a|^{q'-2} a`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretize::{laplacian_values, Field, Grid, GridDescriptor, GridKind};
use crate::error::{Error, Result};
use crate::exponents::{Exponents, ExponentsRecord};
use crate::par;
use crate::symmetry::SymmetrySpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `int |Delta u|^{q'}`
    pub seminorm_qp: f64,
    /// `int |u|^p`
    pub lp_norm_p: f64,
    pub energy: f64,
    pub nehari_defect: f64,
    /// `seminorm_qp / lp_norm_p^{q'/p}`, scale invariant.
    pub quotient: f64,
    pub grid: GridDescriptor,
    pub exponents: ExponentsRecord,
}

impl EnergyReport {
    /// Nehari defect relative to the seminorm (0 when both vanish).
    pub fn relative_defect(&self) -> f64 {
        let scale = self.seminorm_qp.abs().max(self.lp_norm_p.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.nehari_defect.abs() / scale
        }
    }
}

/// `|a|^{r-2} a`, with the value 0 at `a = 0` for every `r > 1`.
#[inline]
pub fn signed_pow(a: f64, r: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if r == 2.0 {
        a
    } else {
        a.abs().powf(r - 1.0).copysign(a)
    }
}

/// `(int |Delta u|^{q'}, int |u|^p)` from a precomputed Laplacian, summed
/// over the free nodes. On that set `Delta_h` is invertible, which keeps
/// `Delta_h^{-1}` exactly adjoint to the discrete energy.
pub(crate) fn energy_parts(grid: &Grid, u: &[f64], lap: &[f64], qp: f64, p: f64) -> (f64, f64) {
    let (w, edge) = (grid.weights(), grid.pinned());
    let s = par::sum(u.len(), |k| {
        if edge[k] {
            0.0
        } else {
            w[k] * lap[k].abs().powf(qp)
        }
    });
    let l = par::sum(u.len(), |k| {
        if edge[k] {
            0.0
        } else {
            w[k] * u[k].abs().powf(p)
        }
    });
    (s, l)
}

pub(crate) fn report_from_parts(grid: &Grid, e: &Exponents, s: f64, l: f64) -> EnergyReport {
    let (qp, p) = (e.qp(), e.p());
    let quotient = if l > 0.0 {
        s / l.powf(qp / p)
    } else {
        f64::INFINITY
    };
    EnergyReport {
        seminorm_qp: s,
        lp_norm_p: l,
        energy: s / qp - l / p,
        nehari_defect: s - l,
        quotient,
        grid: grid.descriptor(),
        exponents: e.record(),
    }
}

pub fn energy(u: &Field, e: &Exponents) -> EnergyReport {
    let lap = laplacian_values(u.grid(), u.values());
    let (s, l) = energy_parts(u.grid(), u.values(), &lap, e.qp(), e.p());
    report_from_parts(u.grid(), e, s, l)
}

/// Gradient from a precomputed Laplacian; pinned nodes get 0.
pub(crate) fn gradient_values(
    grid: &Grid,
    u: &[f64],
    lap: &[f64],
    qp: f64,
    p: f64,
    eps: f64,
) -> Vec<f64> {
    let edge = grid.pinned();
    let psi = par::collect(u.len(), |k| {
        let a = lap[k];
        if edge[k] {
            0.0
        } else if eps > 0.0 {
            (a * a + eps * eps).powf(0.5 * (qp - 2.0)) * a
        } else {
            signed_pow(a, qp)
        }
    });
    let lap_psi = laplacian_values(grid, &psi);
    let pinned = grid.pinned();
    par::collect(u.len(), |k| {
        if pinned[k] {
            0.0
        } else {
            lap_psi[k] - signed_pow(u[k], p)
        }
    })
}

/// Riesz representative of `J'(u)` in the weighted inner product, over
/// perturbations that vanish on the pinned layers:
/// `g = Delta_h(psi) - |u|^{p-2} u` with `psi = |Delta_h u|^{q'-2} Delta_h u`
/// (zero on the pinned layers).
///
/// `Delta_h` is self-adjoint in the quadrature weights, so no transpose
/// appears.
pub fn gradient(u: &Field, e: &Exponents) -> Field {
    let lap = laplacian_values(u.grid(), u.values());
    u.with_values(gradient_values(
        u.grid(),
        u.values(),
        &lap,
        e.qp(),
        e.p(),
        0.0,
    ))
}

/// As [`gradient`], with `|a|^{q'-2}` replaced by `(a^2 + eps^2)^{(q'-2)/2}`.
pub fn gradient_regularized(u: &Field, e: &Exponents, eps: f64) -> Field {
    let lap = laplacian_values(u.grid(), u.values());
    u.with_values(gradient_values(
        u.grid(),
        u.values(),
        &lap,
        e.qp(),
        e.p(),
        eps,
    ))
}

/// `t* = (S / P)^{1/(p - q')}`, the maximizer of `t -> J(t u)`.
pub fn nehari_scale_from(seminorm_qp: f64, lp_norm_p: f64, e: &Exponents) -> Result<f64> {
    if !(seminorm_qp > 0.0) || !(lp_norm_p > 0.0) {
        return Err(Error::Degenerate(format!(
            "Nehari scale needs both norms positive (seminorm {seminorm_qp:e}, L^p {lp_norm_p:e})"
        )));
    }
    Ok((seminorm_qp / lp_norm_p).powf(1.0 / (e.p() - e.qp())))
}

pub fn nehari_scale(u: &Field, e: &Exponents) -> Result<f64> {
    let r = energy(u, e);
    nehari_scale_from(r.seminorm_qp, r.lp_norm_p, e)
}

pub fn nehari_project(u: &Field, e: &Exponents) -> Result<Field> {
    Ok(u.scaled(nehari_scale(u, e)?))
}

/// `J(t u)` from the two norms of `u`.
pub fn energy_on_ray(seminorm_qp: f64, lp_norm_p: f64, t: f64, e: &Exponents) -> f64 {
    t.powf(e.qp()) * seminorm_qp / e.qp() - t.powf(e.p()) * lp_norm_p / e.p()
}

/// `x -> eps^{-N/p} f((x - xi) / eps)` for a function on `R^N`.
pub fn rescale_fn<F>(f: F, eps: f64, xi: Vec<f64>, e: &Exponents) -> impl Fn(&[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let amp = eps.powf(-e.dim() / e.p());
    move |x: &[f64]| {
        let y: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| (a - b) / eps).collect();
        amp * f(&y)
    }
}

/// Samples `x -> eps^{-N/p} u((x - xi) / eps)` on `target` by interpolation.
///
/// `xi` must be fixed by `spec` so that equivariance survives. Reduced grids
/// only carry dilations about the origin.
pub fn rescale(
    u: &Field,
    eps: f64,
    xi: &[f64],
    spec: Option<&SymmetrySpec>,
    target: Arc<Grid>,
    e: &Exponents,
) -> Result<Field> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!(
            "dilation must be positive, got {eps}"
        )));
    }
    if xi.len() != e.dim() as usize {
        return Err(Error::DimensionMismatch {
            expected: e.dim() as usize,
            got: xi.len(),
        });
    }
    if let Some(s) = spec {
        if !s.is_fixed_point(xi, 0.0) {
            return Err(Error::Precondition(format!(
                "{xi:?} is not a fixed point of the group"
            )));
        }
    }
    let translated = xi.iter().any(|v| *v != 0.0);
    if translated && u.grid().kind() != GridKind::Cartesian {
        return Err(Error::Precondition(
            "reduced grids support dilations about the origin only".into(),
        ));
    }
    if target.kind() != u.grid().kind() || target.dim() != u.grid().dim() {
        return Err(Error::GridMismatch(
            "rescale target must have the same kind".into(),
        ));
    }
    let amp = eps.powf(-e.dim() / e.p());
    let shift: Vec<f64> = if translated {
        xi.to_vec()
    } else {
        vec![0.0; target.axes().len()]
    };
    let src = u.clone();
    let out = Field::from_fn(target, move |x| {
        let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| (a - b) / eps).collect();
        amp * src.sample(&y)
    });
    Ok(out.with_meta(u.meta.clone()))
}

/// The constant `C0(q')` in
///
/// ```text
/// (|s|^{q'-2}s - |t|^{q'-2}t)(s - t) >= C0 |s-t|^{q'}                      q' >= 2
/// (|s|^{q'-2}s - |t|^{q'-2}t)(s - t) >= C0 |s-t|^2 / (|s|^{q'}+|t|^{q'}+1)^{2-q'}   1 < q' < 2
/// ```
///
/// For `q' >= 2` the sharp value `2^{2-q'}` is attained at `t = -s`. For
/// `q' < 2` the ratio is minimized on the antidiagonal `t = -s` at
/// `s^{q'} = 1 / (2(q'-1))`.
pub fn monotonicity_constant(qp: f64) -> Result<f64> {
    if !(qp > 1.0) || !qp.is_finite() {
        return Err(Error::InvalidExponent(format!(
            "q' must exceed 1, got {qp}"
        )));
    }
    if qp >= 2.0 {
        Ok(2f64.powf(2.0 - qp))
    } else {
        let sq = 1.0 / (2.0 * (qp - 1.0));
        let s = sq.powf(1.0 / qp);
        Ok((qp - 1.0) * s.powf(qp - 2.0) * (2.0 * sq + 1.0).powf(2.0 - qp))
    }
}

/// `(lhs, rhs_bound)` for the inequality above, `rhs_bound` including `C0`.
pub fn monotonicity_gap(s: f64, t: f64, qp: f64) -> Result<(f64, f64)> {
    let c0 = monotonicity_constant(qp)?;
    let lhs = (signed_pow(s, qp) - signed_pow(t, qp)) * (s - t);
    let d = (s - t).abs();
    let rhs = if qp >= 2.0 {
        c0 * d.powf(qp)
    } else {
        c0 * d * d / (s.abs().powf(qp) + t.abs().powf(qp) + 1.0).powf(2.0 - qp)
    };
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_grid;
    use crate::symmetry::{symmetrize, SymmetrySpec};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn bubble_grid(res: usize) -> Arc<Grid> {
        Arc::new(build_grid(GridKind::Radial1d, 4, 1, 40.0, res).unwrap())
    }

    fn yamabe4() -> Exponents {
        Exponents::yamabe(4).unwrap()
    }

    #[test]
    fn zero_field() {
        let g = bubble_grid(64);
        let r = energy(&Field::zeros(g.clone()), &yamabe4());
        assert_eq!(
            (r.seminorm_qp, r.lp_norm_p, r.energy, r.nehari_defect),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(gradient(&Field::zeros(g), &yamabe4()).max_abs(), 0.0);
    }

    #[test]
    fn bubble_norms() {
        let u = Field::from_fn(bubble_grid(4000), |x| 1.0 / (1.0 + x[0] * x[0]));
        let r = energy(&u, &yamabe4());
        let (s, l) = (8.0 * PI * PI / 3.0, PI * PI / 6.0);
        assert!((r.seminorm_qp / s - 1.0).abs() < 0.02, "{}", r.seminorm_qp);
        assert!((r.lp_norm_p / l - 1.0).abs() < 0.02, "{}", r.lp_norm_p);
    }

    #[test]
    fn homogeneity() {
        let e = yamabe4();
        let u = Field::from_fn(bubble_grid(500), |x| (-x[0] * x[0]).exp());
        let a = energy(&u, &e).seminorm_qp;
        let b = energy(&u.scaled(2.0), &e).seminorm_qp;
        assert!((b / a - 2f64.powf(e.qp())).abs() < 1e-12);
    }

    #[test]
    fn nehari_scale_examples() {
        let e = yamabe4();
        assert_eq!(nehari_scale_from(1.0, 1.0, &e).unwrap(), 1.0);
        let t = nehari_scale_from(2.0, 1.0, &e).unwrap();
        assert!((t - 2f64.powf(3.0 / 8.0)).abs() < 1e-14);
        // Brute-force scan of t -> J(t u).
        let best = (1..=100_000)
            .map(|k| k as f64 * 3e-5)
            .max_by(|a, b| {
                energy_on_ray(2.0, 1.0, *a, &e).total_cmp(&energy_on_ray(2.0, 1.0, *b, &e))
            })
            .unwrap();
        assert!((best - t).abs() < 1e-4);
        assert!(nehari_scale_from(0.0, 1.0, &e).is_err());
    }

    #[test]
    fn projection_and_level_identity() {
        let e = Exponents::from_q(6, 4).unwrap();
        let g = Arc::new(build_grid(GridKind::BiradialRadial3d, 6, 1, 4.0, 24).unwrap());
        let u = Field::from_fn(g, |x| {
            (x[0] * x[0] - x[1] * x[1]) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()
        });
        let v = nehari_project(&u, &e).unwrap();
        let r = energy(&v, &e);
        assert!(r.relative_defect() < 1e-12);
        assert!((r.energy / (2.0 / 6.0 * r.seminorm_qp) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_is_unimodal_with_peak_at_nehari_scale() {
        let e = yamabe4();
        let u = Field::from_fn(bubble_grid(400), |x| 0.3 / (1.0 + x[0] * x[0]));
        let r = energy(&u, &e);
        let t = nehari_scale(&u, &e).unwrap();
        let vals: Vec<f64> = (1..400)
            .map(|k| energy_on_ray(r.seminorm_qp, r.lp_norm_p, t * k as f64 / 200.0, &e))
            .collect();
        let peak = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 199);
        assert!(vals[..peak].windows(2).all(|w| w[1] > w[0]));
        assert!(vals[peak..].windows(2).all(|w| w[1] < w[0]));
    }

    fn directional_check(e: &Exponents) -> f64 {
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 3.0, 24).unwrap());
        let pinned = g.pinned().to_vec();
        let u = Field::from_fn(g.clone(), |x| {
            (1.0 + x[0] - 0.5 * x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()
        });
        let u = u.with_values(
            u.values()
                .iter()
                .zip(&pinned)
                .map(|(v, p)| if *p { 0.0 } else { *v })
                .collect(),
        );
        let grad = gradient(&u, e);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let (a, b, c) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.0),
            );
            let h = Field::from_fn(g.clone(), move |x| {
                (a * x[0] + b * x[1] + 1.0) * (-c * (x[0] * x[0] + x[1] * x[1])).exp()
            });
            let h = h.with_values(
                h.values()
                    .iter()
                    .zip(&pinned)
                    .map(|(v, p)| if *p { 0.0 } else { *v })
                    .collect(),
            );
            let eps = 1e-5;
            let plus = energy(
                &u.with_values(
                    u.values()
                        .iter()
                        .zip(h.values())
                        .map(|(x, y)| x + eps * y)
                        .collect(),
                ),
                e,
            )
            .energy;
            let minus = energy(
                &u.with_values(
                    u.values()
                        .iter()
                        .zip(h.values())
                        .map(|(x, y)| x - eps * y)
                        .collect(),
                ),
                e,
            )
            .energy;
            let fd = (plus - minus) / (2.0 * eps);
            let an = grad.dot(&h);
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for e in [
            yamabe4(),
            Exponents::from_q(6, 3).unwrap(),
            Exponents::paneitz(5).unwrap(),
        ] {
            let err = directional_check(&e);
            assert!(err < 1e-5, "q' = {}: {err}", e.qp());
        }
    }

    #[test]
    fn gradient_of_equivariant_field_is_equivariant() {
        let e = yamabe4();
        let spec = SymmetrySpec::family(4, 1).unwrap();
        let g = Arc::new(build_grid(GridKind::Biradial2d, 4, 1, 3.0, 32).unwrap());
        let u = Field::from_fn(g, |x| {
            (x[0] * x[0] - x[1] * x[1]) * (-(x[0] * x[0] + x[1] * x[1])).exp()
        });
        let grad = gradient(&symmetrize(&u, &spec).unwrap(), &e);
        let sym = symmetrize(&grad, &spec).unwrap();
        let d = grad
            .values()
            .iter()
            .zip(sym.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d <= 1e-12 * grad.max_abs(), "{d}");
    }

    #[test]
    fn regularized_gradient_tends_to_exact() {
        let e = yamabe4();
        let u = Field::from_fn(bubble_grid(200), |x| 1.0 / (1.0 + x[0] * x[0]));
        let g0 = gradient(&u, &e);
        // Delta_h u is ~1e-10 at the outer free nodes.
        let g1 = gradient_regularized(&u, &e, 1e-13);
        let d = g0
            .values()
            .iter()
            .zip(g1.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-6 * g0.max_abs());
    }

    #[test]
    fn rescale_identity_and_isometry() {
        let e = yamabe4();
        let g = Arc::new(build_grid(GridKind::Radial1d, 4, 1, 40.0, 4000).unwrap());
        let u = Field::from_fn(g.clone(), |x| 1.0 / (1.0 + x[0] * x[0]));
        let same = rescale(&u, 1.0, &[0.0; 4], None, g.clone(), &e).unwrap();
        let d = same
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-14);
        let bubble = |x: &[f64]| 1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>());
        let small = rescale_fn(bubble, 0.5, vec![0.0; 4], &e);
        let half = Arc::new(build_grid(GridKind::Radial1d, 4, 1, 20.0, 4000).unwrap());
        let us = Field::from_fn(half, |x| small(&[x[0], 0.0, 0.0, 0.0]));
        let (a, b) = (energy(&u, &e), energy(&us, &e));
        assert!((a.lp_norm_p / b.lp_norm_p - 1.0).abs() < 0.01);
        assert!((a.energy / b.energy - 1.0).abs() < 0.02);
        let spec = SymmetrySpec::family(4, 1).unwrap();
        assert!(rescale(&u, 0.5, &[1.0, 0.0, 0.0, 0.0], Some(&spec), g, &e).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let (l, r) = monotonicity_gap(0.7, -2.0, 2.0).unwrap();
        assert!((l - 2.7 * 2.7).abs() < 1e-14 && (l - r).abs() < 1e-14);
        let (l, r) = monotonicity_gap(1.0, -1.0, 3.0).unwrap();
        assert_eq!(l, 4.0);
        assert!((r - 4.0).abs() < 1e-14, "sharp at t = -s");
        assert_eq!(monotonicity_gap(0.4, 0.4, 1.5).unwrap(), (0.0, 0.0));
        assert!(monotonicity_gap(1.0, 0.0, 1.0).is_err());
    }

    /// Brute-force minimum of the ratio over a polar grid of (s, t).
    fn grid_oracle(qp: f64) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            let rad = 10f64.powf(-3.0 + 6.0 * i as f64 / 400.0);
            for k in 0..720 {
                let a = PI * k as f64 / 720.0 + 1e-7;
                let (s, t) = (rad * a.cos(), rad * a.sin());
                let lhs = (signed_pow(s, qp) - signed_pow(t, qp)) * (s - t);
                let d = (s - t).abs();
                let base = if qp >= 2.0 {
                    d.powf(qp)
                } else {
                    d * d / (s.abs().powf(qp) + t.abs().powf(qp) + 1.0).powf(2.0 - qp)
                };
                best = best.min(lhs / base);
            }
        }
        best
    }

    #[test]
    fn constant_agrees_with_grid_oracle() {
        for qp in [1.2, 1.5, 2.0, 3.0, 4.0] {
            let c0 = monotonicity_constant(qp).unwrap();
            let oracle = grid_oracle(qp);
            assert!(c0 <= oracle * (1.0 + 1e-9), "{qp}: {c0} > {oracle}");
            assert!(oracle / c0 < 1.01, "{qp}: {c0} far below {oracle}");
        }
        assert!((monotonicity_constant(1.2).unwrap() - 0.455258).abs() < 1e-5);
        assert!((monotonicity_constant(1.5).unwrap() - 0.866025).abs() < 1e-5);
    }
}
