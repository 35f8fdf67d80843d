//! Inversion in the unit sphere and the Kelvin invariance test.
//!
//! The weighted inversion `u_i(x) = |x|^alpha u(x / |x|^2)` with
//! `alpha = -2N/p` is an isometry of `L^p`. For the operator
//! `L[u] = Delta(|Delta u|^{q'-2} Delta u)` one finds
//! `L[|x|^alpha] = C |x|^{(q'-1)(alpha-2)-2}`, and the `q'`-seminorm is
//! Kelvin invariant exactly when `C = 0`, i.e. for `q = 2` or
//! `p = q = 2N/(N-2)`.
//!
//! Norms here are radial: profiles live on uniform cell-centered annuli
//! with `|S^{N-1}| r^{N-1} h` weights.

use serde::{Deserialize, Serialize};

use crate::discretize::{sphere_area, Field};
use crate::error::{Error, Result};
use crate::exponents::{Exponent, Exponents, Rational};
use crate::functional::signed_pow;
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelvinReport {
    pub alpha: f64,
    /// `alpha (N - 2 + alpha)`, so that `Delta |x|^alpha = A |x|^{alpha-2}`.
    pub a: f64,
    /// `(q'-1)(alpha-2)`, the power of `|Delta u|^{q'-2} Delta u`.
    pub b: f64,
    /// `|A|^{q'-2} A B (B + N - 2)`; 0 when `A = 0`.
    pub constant_c: f64,
    pub is_zero: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometry_defect: Option<f64>,
}

/// Relative tolerance for the zero test on inexact exponents.
const ZERO_TOL: f64 = 1e-12;

pub fn kelvin_constant(e: &Exponents) -> KelvinReport {
    let n = e.n as i64;
    let exact = match (e.kelvin_alpha().exact(), e.qp.exact()) {
        (Some(alpha), Some(qp)) => {
            let a = alpha * (Rational::from_integer(n - 2) + alpha);
            let b = (qp - Rational::from_integer(1)) * (alpha - Rational::from_integer(2));
            Some(
                (a == Rational::from_integer(0))
                    || (b + Rational::from_integer(n - 2) == Rational::from_integer(0)),
            )
        }
        _ => None,
    };
    let nf = e.dim();
    let alpha = e.kelvin_alpha().value();
    let qp = e.qp();
    let a = alpha * (nf - 2.0 + alpha);
    let b = (qp - 1.0) * (alpha - 2.0);
    let is_zero = exact.unwrap_or_else(|| {
        let scale = alpha.abs().max(nf);
        a.abs() <= ZERO_TOL * scale * scale || (b + nf - 2.0).abs() <= ZERO_TOL * scale
    });
    let constant_c = if a == 0.0 {
        0.0
    } else {
        signed_pow(a, qp) * b * (b + nf - 2.0)
    };
    KelvinReport {
        alpha,
        a,
        b,
        constant_c,
        is_zero,
        isometry_defect: None,
    }
}

/// `x -> |x|^alpha f(x / |x|^2)` for a function on `R^N`.
pub fn kelvin_fn<F>(f: F, e: &Exponents) -> impl Fn(&[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let alpha = e.kelvin_alpha().value();
    move |x: &[f64]| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let y: Vec<f64> = x.iter().map(|v| v / r2).collect();
        r2.powf(0.5 * alpha) * f(&y)
    }
}

/// `r -> r^alpha f(1 / r)` for a radial profile.
pub fn kelvin_profile_fn<F>(f: F, e: &Exponents) -> impl Fn(f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let alpha = e.kelvin_alpha().value();
    move |r: f64| r.powf(alpha) * f(1.0 / r)
}

/// Samples the inversion of `u` at every node of its own grid, `u` being
/// extended by zero beyond the outer boundary.
pub fn kelvin_transform(u: &Field, e: &Exponents) -> Result<Field> {
    let grid = u.grid().clone();
    if (0..grid.len()).any(|k| grid.radius(k) == 0.0) {
        return Err(Error::Precondition("the grid contains the origin".into()));
    }
    let alpha = e.kelvin_alpha().value();
    let vals = par::collect(grid.len(), |k| {
        let x = grid.node(k);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let y: Vec<f64> = x.iter().map(|v| v / r2).collect();
        r2.powf(0.5 * alpha) * u.sample(&y)
    });
    Ok(u.with_values(vals))
}

/// Uniform cell-centered nodes on `[inner, outer]` in `R^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub dim: u32,
    pub inner: f64,
    pub outer: f64,
    pub count: usize,
}

impl Annulus {
    pub fn new(dim: u32, inner: f64, outer: f64, count: usize) -> Result<Self> {
        if !(inner > 0.0) {
            return Err(Error::Precondition(format!(
                "annulus must exclude the origin, inner radius {inner}"
            )));
        }
        if !(outer > inner) || !outer.is_finite() {
            return Err(Error::Precondition(format!(
                "bad annulus [{inner}, {outer}]"
            )));
        }
        if count < 8 {
            return Err(Error::Precondition(format!(
                "annulus needs at least 8 nodes, got {count}"
            )));
        }
        Ok(Annulus {
            dim,
            inner,
            outer,
            count,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.outer - self.inner) / self.count as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.inner + (i as f64 + 0.5) * self.spacing()
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.radius(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let c = sphere_area(self.dim - 1) * self.spacing();
        (0..self.count)
            .map(|i| c * self.radius(i).powi(self.dim as i32 - 1))
            .collect()
    }

    /// The image `[1/outer, 1/inner]` at the same resolution.
    pub fn image(&self) -> Annulus {
        Annulus {
            inner: 1.0 / self.outer,
            outer: 1.0 / self.inner,
            ..*self
        }
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Profile {
        Profile {
            annulus: *self,
            values: self.radii().into_iter().map(f).collect(),
        }
    }
}

/// Radial profile on an annulus, zero beyond both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub annulus: Annulus,
    pub values: Vec<f64>,
}

impl Profile {
    /// Linear interpolation, with zero ghosts half a cell outside.
    pub fn at(&self, r: f64) -> f64 {
        let an = &self.annulus;
        let pos = (r - an.inner) / an.spacing() - 0.5;
        let i0 = pos.floor();
        let t = pos - i0;
        let i0 = i0 as i64;
        let get = |i: i64| {
            if i < 0 || i >= an.count as i64 {
                0.0
            } else {
                self.values[i as usize]
            }
        };
        (1.0 - t) * get(i0) + t * get(i0 + 1)
    }

    /// Radial Laplacian with zero ghosts.
    pub fn laplacian(&self) -> Vec<f64> {
        radial_laplacian(&self.annulus, &self.values, [0.0; 4])
    }

    /// `(sum_k w_k |Delta u|_k^{q'})^{1/q'}`.
    pub fn seminorm(&self, qp: f64) -> f64 {
        let lap = self.laplacian();
        let w = self.annulus.weights();
        lap.iter()
            .zip(&w)
            .map(|(l, w)| w * l.abs().powf(qp))
            .sum::<f64>()
            .powf(1.0 / qp)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let w = self.annulus.weights();
        self.values
            .iter()
            .zip(&w)
            .map(|(v, w)| w * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Fourth-order `u'' + (N-1)/r u'`; `ghosts` are the two values below
/// and the two above the annulus, innermost first.
fn radial_laplacian(an: &Annulus, u: &[f64], ghosts: [f64; 4]) -> Vec<f64> {
    let h = an.spacing();
    let m = an.dim as f64 - 1.0;
    let n = u.len() as i64;
    let at = |i: i64| match i {
        -2 => ghosts[1],
        -1 => ghosts[0],
        i if i == n => ghosts[2],
        i if i == n + 1 => ghosts[3],
        i => u[i as usize],
    };
    (0..n)
        .map(|i| {
            let (a, b, c, d, e) = (at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2));
            let d2 = (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * h * h);
            let d1 = (a - 8.0 * b + 8.0 * d - e) / (12.0 * h);
            d2 + m / an.radius(i as usize) * d1
        })
        .collect()
}

/// Inversion of a profile onto the image annulus, by interpolation.
pub fn kelvin_transform_profile(u: &Profile, e: &Exponents) -> Profile {
    let alpha = e.kelvin_alpha().value();
    u.annulus.image().sample(|r| r.powf(alpha) * u.at(1.0 / r))
}

/// `max_f | |f_i|_{q'} / |f|_{q'} - 1 |` over a family of radial profiles
/// supported in `annulus`, with each seminorm evaluated on its own annulus
/// (`f_i` on the image) at the same resolution.
pub fn isometry_defect<F>(e: &Exponents, family: &[F], annulus: &Annulus) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let qp = e.qp();
    let image = annulus.image();
    let mut worst: Option<f64> = None;
    for f in family {
        let base = annulus.sample(f).seminorm(qp);
        if !(base > 0.0) {
            continue;
        }
        let inverted = image.sample(kelvin_profile_fn(f, e)).seminorm(qp);
        let d = (inverted / base - 1.0).abs();
        worst = Some(worst.map_or(d, |w: f64| w.max(d)));
    }
    worst.ok_or_else(|| Error::Degenerate("every test profile has zero seminorm".into()))
}

/// A radial test profile `r -> f(r)`.
pub type TestProfile = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// `exp(-1/(1-x^2))` on `|x| < 1`.
pub fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// The three-profile test family on `[center - width, center + width]`:
/// a plain bump, the bump times `2x^3 - 2x^2 - x/2 + 1` and a bump tilted by
/// `(r/center)^5`, with `x = (r - center) / width`.
pub fn test_family(center: f64, width: f64) -> Vec<TestProfile> {
    let x = move |r: f64| (r - center) / width;
    vec![
        Box::new(move |r| bump(x(r))),
        Box::new(move |r| {
            let t = x(r);
            bump(t) * (((2.0 * t - 2.0) * t - 0.5) * t + 1.0)
        }),
        Box::new(move |r| bump(x(r)) * (r / center).powi(5)),
    ]
}

pub const FAMILY_CENTER: f64 = 0.5;
pub const FAMILY_WIDTH: f64 = 0.4;

/// The test family and the annulus holding it, with `count` nodes.
pub fn standard_family(dim: u32, count: usize) -> Result<(Vec<TestProfile>, Annulus)> {
    let annulus = Annulus::new(
        dim,
        FAMILY_CENTER - FAMILY_WIDTH,
        FAMILY_CENTER + FAMILY_WIDTH,
        count,
    )?;
    Ok((test_family(FAMILY_CENTER, FAMILY_WIDTH), annulus))
}

/// [`kelvin_constant`] plus the defect of the standard family at `count`.
pub fn kelvin_report(e: &Exponents, count: usize) -> Result<KelvinReport> {
    let (family, annulus) = standard_family(e.n, count)?;
    let mut r = kelvin_constant(e);
    r.isometry_defect = Some(isometry_defect(e, &family, &annulus)?);
    Ok(r)
}

/// Least-squares power law `|L[|x|^alpha]| ~ |C| r^power` on an annulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorFit {
    pub power: f64,
    pub constant: f64,
    pub predicted_power: f64,
    pub predicted_constant: f64,
}

impl OperatorFit {
    pub fn constant_error(&self) -> f64 {
        (self.constant / self.predicted_constant - 1.0).abs()
    }

    pub fn power_error(&self) -> f64 {
        (self.power - self.predicted_power).abs() / self.predicted_power.abs().max(1.0)
    }
}

/// Applies the discrete `L` (Laplacian, power, Laplacian) to `|x|^alpha`
/// on `annulus` and fits the result. Ghost values come from the exact
/// power, so every node is used.
pub fn operator_fit(e: &Exponents, annulus: &Annulus) -> Result<OperatorFit> {
    let report = kelvin_constant(e);
    if report.a == 0.0 || report.constant_c == 0.0 {
        return Err(Error::Degenerate(
            "L vanishes on |x|^alpha at this point".into(),
        ));
    }
    let (alpha, qp) = (report.alpha, e.qp());
    let h = annulus.spacing();
    // Two ghost cells per side for each Laplacian.
    let ext = Annulus {
        inner: annulus.inner - 4.0 * h,
        outer: annulus.outer + 4.0 * h,
        count: annulus.count + 8,
        ..*annulus
    };
    if !(ext.inner - 2.0 * h > 0.0) {
        return Err(Error::Precondition(
            "annulus too close to the origin for the ghost cells".into(),
        ));
    }
    let u: Vec<f64> = ext.radii().iter().map(|r| r.powf(alpha)).collect();
    let ghost = |k: f64| {
        (if k < 0.0 {
            ext.inner + (k + 0.5) * h
        } else {
            ext.outer + (k - 0.5) * h
        })
        .powf(alpha)
    };
    let lap = radial_laplacian(&ext, &u, [ghost(-1.0), ghost(-2.0), ghost(1.0), ghost(2.0)]);
    let psi: Vec<f64> = lap.iter().map(|l| signed_pow(*l, qp)).collect();
    let l2 = radial_laplacian(&ext, &psi, [0.0; 4]);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (4..ext.count - 4)
        .map(|i| (ext.radius(i).ln(), l2[i].abs().ln()))
        .unzip();
    let sign = l2[ext.count / 2].signum();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let power = sxy / sxx;
    Ok(OperatorFit {
        power,
        constant: sign * (my - power * mx).exp(),
        predicted_power: report.b - 2.0,
        predicted_constant: report.constant_c,
    })
}

/// Up to `count` rational points of the hyperbola in dimension `n`, always
/// including `q = 2` (when `n >= 5`) and `q = 2N/(N-2)`, ordered by
/// denominator then value.
pub fn rational_sweep(n: u32, count: usize) -> Vec<Exponents> {
    let lo = Rational::new(n as i64, n as i64 - 2);
    let hi = Rational::from_integer(4 * n as i64);
    let mut qs: Vec<Rational> = vec![
        Rational::from_integer(2),
        Rational::new(2 * n as i64, n as i64 - 2),
    ];
    'outer: for den in 1..=64i64 {
        for num in 1..=hi.to_integer() * den {
            let q = Rational::new(num, den);
            if *q.denom() != den || q <= lo || q > hi {
                continue;
            }
            if !qs.contains(&q) {
                qs.push(q);
            }
            if qs.len() >= 4 * count {
                break 'outer;
            }
        }
    }
    let mut out: Vec<Exponents> = qs
        .into_iter()
        .filter_map(|q| Exponents::from_q(n, Exponent::Exact(q)).ok())
        .collect();
    out.truncate(count);
    out
}
