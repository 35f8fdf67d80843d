//! Minimization of the energy over the phi-equivariant Nehari set.
//!
//! Every iteration takes a preconditioned descent direction, projects it
//! onto the equivariant subspace and the free nodes, and searches along
//! `t*(u + eta d) (u + eta d)`, the Nehari projection of the trial point.
//! Along that curve the energy has slope `<J'(u), d>` at `eta = 0`, so an
//! Armijo test on the projected energy gives a monotone trace.

mod config;
mod precond;

use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};

pub use config::{
    ExponentConfig, ExponentValue, GridConfig, InitConfig, InitKind, Metric, Regularization,
    SolveConfig, StepConfig, SymmetryConfig, SymmetryKind, Tolerances,
};
pub use precond::{transform_axis, InverseLaplacian};

use crate::discretize::{build_grid, laplacian_values, load_field, Field, Grid, GridKind};
use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::functional::{
    energy_parts, gradient_values, nehari_scale_from, report_from_parts, signed_pow, EnergyReport,
};
use crate::inversion::{ResidualReport, SystemPair};
use crate::par;
use crate::symmetry::{symmetrize, SymmetrySpec};

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;

/// A step is rejected when `int |u|^p` drops below this fraction of the
/// seed's value.
const COLLAPSE_FRACTION: f64 = 1e-8;

const GAUGE_NEWTON_STEPS: usize = 50;
const GAUGE_TOL: f64 = 1e-13;

/// Relative energy change treated as round-off by the line search.
const ROUNDOFF: f64 = 1e-12;
/// Relative noise floor for the sign-change test.
pub const SIGN_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No step length gave sufficient decrease.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: Field,
    pub v: Field,
    pub report: EnergyReport,
    pub residuals: ResidualReport,
    pub trace: Vec<TraceRow>,
    /// `|J'|_w |x|_w / int |Delta u|^{q'}` in the search variable `x`, with
    /// the gauge component of `J'` removed.
    pub residual: f64,
    pub gradient_norm: f64,
    /// Relative size of the gradient component along the scale-gauge normal.
    pub gauge_residual: f64,
    pub sign_change: bool,
    pub v_sign_change: bool,
    pub converged: bool,
    pub stop: StopReason,
    /// Index into `init.widths` of the run that was kept.
    pub seed_index: usize,
    pub rejected_collapses: usize,
}

/// Scalar summary of a run, the JSON metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveMetrics {
    pub energy: EnergyReport,
    pub residuals: ResidualReport,
    pub residual: f64,
    pub gradient_norm: f64,
    pub gauge_residual: f64,
    pub sign_change: bool,
    pub v_sign_change: bool,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub seed_index: usize,
    pub rejected_collapses: usize,
}

impl SolveResult {
    pub fn metrics(&self) -> SolveMetrics {
        SolveMetrics {
            energy: self.report.clone(),
            residuals: self.residuals.clone(),
            residual: self.residual,
            gradient_norm: self.gradient_norm,
            gauge_residual: self.gauge_residual,
            sign_change: self.sign_change,
            v_sign_change: self.v_sign_change,
            converged: self.converged,
            stop: self.stop,
            iterations: self.trace.len(),
            seed_index: self.seed_index,
            rejected_collapses: self.rejected_collapses,
        }
    }
}

/// Everything a descent run needs besides its starting field.
pub struct Problem {
    pub exponents: Exponents,
    pub spec: Option<SymmetrySpec>,
    pub grid: Arc<Grid>,
    inverse: InverseLaplacian,
    pub metric: Metric,
    pub step: StepConfig,
    pub tolerances: Tolerances,
    pub regularization: Regularization,
    gauge_radius: f64,
    /// `|x|^2 / (l^2 + |x|^2) - 1/2` per node, zero on pinned nodes.
    gauge: Option<Vec<f64>>,
}

impl Problem {
    pub fn new(cfg: &SolveConfig) -> Result<Self> {
        cfg.validate()?;
        let e = cfg.exponents.resolve()?;
        let spec = cfg.symmetry.spec(e.n)?;
        let blocks = spec.as_ref().map_or(1, |s| s.j);
        let grid = Arc::new(build_grid(
            cfg.grid.kind,
            e.n,
            blocks,
            cfg.grid.extent,
            cfg.grid.resolution,
        )?);
        Ok(Self::on_grid(cfg, e, spec, grid))
    }

    fn on_grid(
        cfg: &SolveConfig,
        e: Exponents,
        spec: Option<SymmetrySpec>,
        grid: Arc<Grid>,
    ) -> Self {
        let inverse = InverseLaplacian::new(&grid);
        let l2 = cfg.gauge_radius * cfg.gauge_radius;
        let gauge = (cfg.gauge_radius > 0.0).then(|| {
            let g = grid.clone();
            par::collect(g.len(), |k| {
                let r2 = g.radius(k).powi(2);
                if g.pinned()[k] {
                    0.0
                } else {
                    r2 / (l2 + r2) - 0.5
                }
            })
        });
        Problem {
            gauge_radius: cfg.gauge_radius,
            gauge,
            exponents: e,
            spec,
            grid,
            inverse,
            metric: cfg.metric,
            step: cfg.step.clone(),
            tolerances: cfg.tolerances.clone(),
            regularization: cfg.regularization.clone(),
        }
    }

    /// Zero on pinned nodes, then the equivariant projection.
    fn admissible(&self, values: Vec<f64>) -> Result<Vec<f64>> {
        let pinned = self.grid.pinned();
        let masked: Vec<f64> = values
            .iter()
            .zip(pinned)
            .map(|(v, p)| if *p { 0.0 } else { *v })
            .collect();
        match &self.spec {
            Some(s) => {
                let f = Field::new(self.grid.clone(), masked)?;
                Ok(symmetrize(&f, s)?.into_values())
            }
            None => Ok(masked),
        }
    }

    fn seed(&self, kind: InitKind, width: f64) -> Vec<f64> {
        let n = self.exponents.n as f64;
        let kind_grid = self.grid.kind();
        let j = self.spec.as_ref().map_or(0, |s| s.j as usize);
        let f = move |x: &[f64]| -> f64 {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            match kind {
                InitKind::RadialSeed | InitKind::File => {
                    (1.0 + r2 / (width * width)).powf(-(n - 2.0) / 2.0)
                }
                InitKind::BiradialSeed => {
                    let envelope = (-r2 / (width * width)).exp();
                    let odd = match kind_grid {
                        GridKind::Cartesian => (0..j.max(1))
                            .map(|b| {
                                let z = &x[4 * b..4 * b + 4];
                                z[0] * z[0] + z[1] * z[1] - z[2] * z[2] - z[3] * z[3]
                            })
                            .product::<f64>(),
                        GridKind::Radial1d => 1.0,
                        _ => x[0] * x[0] - x[1] * x[1],
                    };
                    odd * envelope
                }
            }
        };
        let g = self.grid.clone();
        par::collect(g.len(), |k| f(&g.node(k)))
    }

    /// Whether the search runs in `v = -|Delta_h u|^{q'-2} Delta_h u`
    /// instead of `u`. The energy is smooth in whichever variable carries an
    /// exponent of at least 2.
    fn dual(&self) -> bool {
        self.metric == Metric::FixedPoint && self.exponents.qp() < 2.0
    }

    fn mask(&self, mut x: Vec<f64>) -> Vec<f64> {
        x.iter_mut().zip(self.grid.pinned()).for_each(|(v, p)| {
            if *p {
                *v = 0.0
            }
        });
        x
    }

    /// Equivariant projection of a field that is already zero on the pinned
    /// nodes. Round-off in `Delta_h^{-1}` breaks the symmetry slightly, and the
    /// descent would amplify it.
    fn sym(&self, x: Vec<f64>) -> Vec<f64> {
        self.admissible(x).expect("field on the problem grid")
    }

    fn evaluate(&self, x: Vec<f64>) -> State {
        let e = &self.exponents;
        let (q, qp, p) = (e.q(), e.qp(), e.p());
        let w = self.grid.weights();
        let x = self.sym(x);
        if self.dual() {
            let fx = par::collect(x.len(), |k| -signed_pow(x[k], q));
            let u = self.sym(self.inverse.apply(&fx));
            let pinned = self.grid.pinned();
            let s = par::sum(x.len(), |k| {
                if pinned[k] {
                    0.0
                } else {
                    w[k] * x[k].abs().powf(q)
                }
            });
            let l = par::sum(u.len(), |k| {
                if pinned[k] {
                    0.0
                } else {
                    w[k] * u[k].abs().powf(p)
                }
            });
            State { x, u, s, l }
        } else {
            let lap = laplacian_values(&self.grid, &x);
            let (s, l) = energy_parts(&self.grid, &x, &lap, qp, p);
            State {
                u: x.clone(),
                x,
                s,
                l,
            }
        }
    }

    /// The state at `t u`, `t` acting on `u`.
    fn scaled(&self, st: State, t: f64) -> State {
        let e = &self.exponents;
        let tx = if self.dual() {
            t.powf(1.0 / (e.q() - 1.0))
        } else {
            t
        };
        State {
            x: st.x.iter().map(|v| v * tx).collect(),
            u: st.u.iter().map(|v| v * t).collect(),
            s: st.s * t.powf(e.qp()),
            l: st.l * t.powf(e.p()),
        }
    }

    fn project_nehari(&self, st: State) -> Result<State> {
        let t = nehari_scale_from(st.s, st.l, &self.exponents)?;
        Ok(self.scaled(st, t))
    }

    fn energy_of(&self, st: &State) -> f64 {
        st.s / self.exponents.qp() - st.l / self.exponents.p()
    }

    /// `F(u) = int a |u|^p`.
    fn gauge_value(&self, st: &State) -> f64 {
        let (a, w, p) = (
            self.gauge.as_ref().expect("gauge"),
            self.grid.weights(),
            self.exponents.p(),
        );
        par::sum(st.u.len(), |k| w[k] * a[k] * st.u[k].abs().powf(p))
    }

    /// `A (a |u|^{p-2} u)`.
    fn gauge_potential(&self, st: &State) -> Option<Vec<f64>> {
        let a = self.gauge.as_ref()?;
        let p = self.exponents.p();
        Some(
            self.inverse
                .apply(&par::collect(st.u.len(), |k| a[k] * signed_pow(st.u[k], p))),
        )
    }

    /// Riesz representative of `F'` in the search variable.
    fn gauge_gradient(&self, st: &State, m: Option<&[f64]>) -> Option<Vec<f64>> {
        let a = self.gauge.as_ref()?;
        let e = &self.exponents;
        let p = e.p();
        if self.dual() {
            let owned;
            let m = match m {
                Some(m) => m,
                None => {
                    owned = self.gauge_potential(st)?;
                    &owned
                }
            };
            let c = -p * (e.q() - 1.0);
            Some(self.mask(par::collect(st.x.len(), |k| {
                c * st.x[k].abs().powf(e.q() - 2.0) * m[k]
            })))
        } else {
            Some(self.mask(par::collect(st.u.len(), |k| {
                p * a[k] * signed_pow(st.u[k], p)
            })))
        }
    }

    /// Moves `c + sigma n` onto `F = 0` by Newton in `sigma`.
    fn retract(&self, c: &[f64], n: &[f64]) -> Option<State> {
        let w = self.grid.weights();
        let mut sigma = 0.0;
        for _ in 0..GAUGE_NEWTON_STEPS {
            let st = self.evaluate(par::collect(c.len(), |k| c[k] + sigma * n[k]));
            if !(st.l > 0.0) {
                return None;
            }
            let f = self.gauge_value(&st);
            if f.abs() <= GAUGE_TOL * st.l {
                return Some(st);
            }
            let grad = self.gauge_gradient(&st, None)?;
            let df = par::sum(n.len(), |k| w[k] * grad[k] * n[k]);
            if !(df.abs() > 0.0) {
                return None;
            }
            sigma -= f / df;
            if !sigma.is_finite() {
                return None;
            }
        }
        None
    }

    /// Places an initial state on the gauge: a retraction when one
    /// converges, otherwise the dilation `u(x / lambda)` of the initial field
    /// with `lambda` found by bisection, then a retraction.
    fn onto_gauge(&self, st: State, u0: Vec<f64>) -> Result<State> {
        let n = self.gauge_gradient(&st, None).expect("gauge");
        if let Some(st) = self.retract(&st.x, &n) {
            return Ok(st);
        }
        let fail =
            || Error::Precondition("initial field cannot be moved onto the scale gauge".into());
        let field = Field::new(self.grid.clone(), u0)?;
        let dilated = |lambda: f64| -> Result<State> {
            let u = par::collect(self.grid.len(), |k| {
                let x: Vec<f64> = self.grid.node(k).iter().map(|c| c / lambda).collect();
                field.sample(&x)
            });
            Ok(self.evaluate(self.to_search(self.admissible(u)?)))
        };
        let sign = |lambda: f64| -> Result<f64> { Ok(self.gauge_value(&dilated(lambda)?)) };
        let (mut lo, mut hi) = (1.0, 1.0);
        for _ in 0..40 {
            if sign(lo)? < 0.0 {
                break;
            }
            lo *= 0.5;
        }
        for _ in 0..40 {
            if sign(hi)? > 0.0 {
                break;
            }
            hi *= 2.0;
        }
        if !(sign(lo)? < 0.0 && sign(hi)? > 0.0) {
            return Err(fail());
        }
        for _ in 0..50 {
            let mid = (lo * hi).sqrt();
            if sign(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let st = dilated((lo * hi).sqrt())?;
        let n = self.gauge_gradient(&st, None).expect("gauge");
        self.retract(&st.x, &n).ok_or_else(fail)
    }

    /// Analytic seed whose width is tuned, by bisection, to satisfy the
    /// gauge.
    fn gauged_seed(&self, kind: InitKind, width: f64) -> Result<Vec<f64>> {
        if self.gauge.is_none() {
            return Ok(self.seed(kind, width));
        }
        let h = self
            .grid
            .axes()
            .iter()
            .map(|a| a.spacing)
            .fold(f64::INFINITY, f64::min);
        let f = |width: f64| self.gauge_value(&self.evaluate_u(self.seed(kind, width)));
        let (mut lo, mut hi) = (width.min(2.0 * h), width.max(0.5 * self.grid.extent()));
        if !(f(lo) < 0.0 && f(hi) > 0.0) {
            return Err(Error::Precondition(format!(
                "no seed width satisfies the scale gauge at radius {}",
                self.gauge_radius
            )));
        }
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(self.seed(kind, (lo * hi).sqrt()))
    }

    /// State with `u` given (masked, not yet admissible in the dual sense).
    fn evaluate_u(&self, u: Vec<f64>) -> State {
        let u = self.mask(u);
        State {
            x: Vec::new(),
            s: 0.0,
            l: 0.0,
            u,
        }
    }

    /// Search variable for a given `u`. In the dual parametrization this is
    /// one fixed-point update, `v = -A |u|^{p-2} u`, rather than
    /// `-|Delta_h u|^{q'-2} Delta_h u`: the latter takes a root of round-off
    /// wherever `u` is negligible, and the resulting far-field noise is only
    /// invisible to the energy, not to the equations. Both agree at a solution.
    fn to_search(&self, u: Vec<f64>) -> Vec<f64> {
        if self.dual() {
            let p = self.exponents.p();
            let y = self
                .inverse
                .apply(&par::collect(u.len(), |k| signed_pow(u[k], p)));
            self.mask(y.iter().map(|v| -v).collect())
        } else {
            u
        }
    }

    /// Gradient of the energy in the search variable, and
    /// `y = A |u|^{p-2} u`.
    fn gradient(&self, st: &State) -> (Vec<f64>, Vec<f64>) {
        let e = &self.exponents;
        let (q, p) = (e.q(), e.p());
        let y = self
            .inverse
            .apply(&par::collect(st.u.len(), |k| signed_pow(st.u[k], p)));
        let g = if self.dual() {
            self.mask(par::collect(st.x.len(), |k| {
                (q - 1.0) * st.x[k].abs().powf(q - 2.0) * (st.x[k] + y[k])
            }))
        } else {
            let lap = laplacian_values(&self.grid, &st.u);
            gradient_values(&self.grid, &st.u, &lap, e.qp(), p, 0.0)
        };
        (g, y)
    }

    /// `c` with `<n, d - c m>_w = 0`.
    fn tangent_coefficient(&self, d: &[f64], m: &[f64], n: &[f64]) -> f64 {
        let w = self.grid.weights();
        let nd = par::sum(d.len(), |k| w[k] * n[k] * d[k]);
        let nm = par::sum(d.len(), |k| w[k] * n[k] * m[k]);
        if nm != 0.0 {
            nd / nm
        } else {
            0.0
        }
    }

    /// `eps` is relative to `max |Delta_h u|`.
    fn direction(
        &self,
        st: &State,
        g: &[f64],
        y: &[f64],
        m: Option<&[f64]>,
        normal: Option<&[f64]>,
        eps: f64,
    ) -> Result<Vec<f64>> {
        let e = &self.exponents;
        let inv = &self.inverse;
        Ok(match self.metric {
            Metric::Plain => g.iter().map(|v| -v).collect(),
            Metric::Bilaplacian => inv.apply(&inv.apply(g)).iter().map(|v| -v).collect(),
            Metric::Quasilinear => {
                let qp = e.qp();
                let lap = laplacian_values(&self.grid, &st.u);
                let eps = eps * par::max(lap.len(), |k| lap[k].abs());
                let a = inv.apply(g);
                let scaled = par::collect(a.len(), |k| {
                    let l = lap[k];
                    let dinv = (l * l + eps * eps).powf(0.5 * (2.0 - qp)) / (qp - 1.0);
                    a[k] * dinv
                });
                inv.apply(&scaled).iter().map(|v| -v).collect()
            }
            Metric::FixedPoint if self.dual() => {
                // Picard step -(v + y + lambda m); lambda, the gauge
                // multiplier estimate, makes the step tangent to the gauge.
                let mut d = self.mask(par::collect(st.x.len(), |k| -(st.x[k] + y[k])));
                if let (Some(m), Some(n)) = (m, normal) {
                    let lambda = self.tangent_coefficient(&d, m, n);
                    d.iter_mut().zip(m).for_each(|(v, mk)| *v -= lambda * mk);
                }
                d
            }
            Metric::FixedPoint => {
                // T(u) plus its linearized response to the gauge multiplier,
                // lambda chosen for tangency, then projected onto the Nehari
                // set; at a solution this is u itself.
                let q = e.q();
                let mut target = inv.apply(&par::collect(y.len(), |k| signed_pow(y[k], q)));
                if let (Some(m), Some(n)) = (m, normal) {
                    let d1 = inv.apply(&par::collect(y.len(), |k| {
                        (q - 1.0) * y[k].abs().powf(q - 2.0) * m[k]
                    }));
                    let d0 = par::collect(y.len(), |k| target[k] - st.x[k]);
                    let lambda = self.tangent_coefficient(&d0, &d1, n);
                    target
                        .iter_mut()
                        .zip(&d1)
                        .for_each(|(v, a)| *v -= lambda * a);
                }
                let tt = self.project_nehari(self.evaluate(target))?;
                par::collect(st.x.len(), |k| tt.x[k] - st.x[k])
            }
        })
    }

    /// Runs the projected descent from `init`, a field `u`.
    pub fn minimize(&self, init: Vec<f64>) -> Result<Descent> {
        let e = &self.exponents;
        let w = self.grid.weights();
        let dot = |x: &[f64], y: &[f64]| par::sum(x.len(), |k| w[k] * x[k] * y[k]);
        let tangent = |x: &mut Vec<f64>, n: &Option<Vec<f64>>| {
            if let Some(n) = n {
                let nn = dot(n, n);
                if nn > 0.0 {
                    let mu = dot(x, n) / nn;
                    x.iter_mut().zip(n).for_each(|(v, m)| *v -= mu * m);
                }
            }
        };
        let u0 = self.admissible(init)?;
        let mut st = self.evaluate(self.to_search(u0.clone()));
        if self.gauge.is_some() {
            st = self.onto_gauge(st, u0)?;
        }
        if !(st.l > 0.0) {
            return Err(Error::Precondition(
                "initial field vanishes on the free nodes".into(),
            ));
        }
        st = self.project_nehari(st)?;
        let seed_lp = st.l;
        let mut energy = self.energy_of(&st);
        let mut eta = self.step.initial;
        let mut trace: Vec<TraceRow> = Vec::new();
        let mut history: Vec<f64> = vec![energy];
        let mut stop = StopReason::MaxIterations;
        let mut collapses = 0;
        let reg = &self.regularization;
        // The fixed-point step is a contraction only for steps below 2 where
        // the energy is flat (far field), so it stays at the natural step.
        let max_eta = match self.metric {
            Metric::FixedPoint => self.step.initial.min(1.0),
            _ => self.step.initial.max(1.0) * 4.0,
        };
        let tangential = |st: &State| {
            let (mut g, y) = self.gradient(st);
            let m = self.gauge_potential(st);
            let normal = self.gauge_gradient(st, m.as_deref());
            tangent(&mut g, &normal);
            let residual = dot(&g, &g).sqrt() * dot(&st.x, &st.x).sqrt() / st.s;
            (g, y, m, normal, residual)
        };
        for it in 1..=self.step.max_iterations {
            let (g, y, m, normal, residual) = tangential(&st);
            let window = self.tolerances.window;
            if history.len() > window {
                let old = history[history.len() - 1 - window];
                let change = (old - energy).abs() / energy.abs();
                if change <= self.tolerances.energy_rel_tol
                    && residual <= self.tolerances.residual_tol
                {
                    stop = StopReason::Converged;
                    break;
                }
            }
            let eps = (reg.eps_start * reg.eps_decay.powi(it as i32 - 1)).max(reg.eps_min);
            let mut d = self.admissible(self.direction(
                &st,
                &g,
                &y,
                m.as_deref(),
                normal.as_deref(),
                eps,
            )?)?;
            tangent(&mut d, &normal);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                debug!("iteration {it}: direction is not descent, using -g");
                d = g.iter().map(|v| -v).collect();
                slope = dot(&g, &d);
                if !(slope < 0.0) {
                    stop = StopReason::Stalled;
                    trace.push(TraceRow {
                        iteration: it,
                        energy,
                        residual,
                        step: 0.0,
                        eps,
                    });
                    break;
                }
            }
            let mut trial_eta = (eta * self.step.growth).min(max_eta);
            let mut accepted = None;
            for attempt in 0..=self.step.max_backtracks {
                let cand: Vec<f64> = par::collect(st.x.len(), |k| st.x[k] + trial_eta * d[k]);
                let cst = match &normal {
                    Some(n) => self.retract(&cand, n),
                    None => Some(self.evaluate(cand)),
                };
                let cst = match cst {
                    Some(c) if c.l > COLLAPSE_FRACTION * seed_lp && c.s > 0.0 => c,
                    Some(_) => {
                        collapses += 1;
                        trial_eta *= self.step.backtrack;
                        continue;
                    }
                    None => {
                        trial_eta *= self.step.backtrack;
                        continue;
                    }
                };
                let cst = self.project_nehari(cst)?;
                let ce = self.energy_of(&cst);
                if ce.is_finite() && ce <= energy + ARMIJO * trial_eta * slope {
                    accepted = Some((cst, ce));
                    break;
                }
                // Near a critical point the energy change of a full step is
                // round-off; the step is then judged by the residual instead.
                if attempt == 0
                    && (ce - energy).abs() <= ROUNDOFF * energy.abs()
                    && tangential(&cst).4 < 0.9 * residual
                {
                    accepted = Some((cst, ce));
                    break;
                }
                trial_eta *= self.step.backtrack;
            }
            match accepted {
                Some((nst, ne)) => {
                    st = nst;
                    energy = ne;
                    eta = trial_eta;
                    history.push(energy);
                    trace.push(TraceRow {
                        iteration: it,
                        energy,
                        residual,
                        step: eta,
                        eps,
                    });
                }
                None => {
                    trace.push(TraceRow {
                        iteration: it,
                        energy,
                        residual,
                        step: 0.0,
                        eps,
                    });
                    stop = StopReason::Stalled;
                    break;
                }
            }
        }
        let (mut g, _) = self.gradient(&st);
        let normal = self.gauge_gradient(&st, None);
        let full_x = dot(&g, &g).sqrt();
        tangent(&mut g, &normal);
        let xnorm = dot(&st.x, &st.x).sqrt();
        let tangential = dot(&g, &g).sqrt();
        let residual = tangential * xnorm / st.s;
        let gauge_residual =
            (full_x * full_x - tangential * tangential).max(0.0).sqrt() * xnorm / st.s;
        if stop == StopReason::Stalled && residual <= self.tolerances.residual_tol {
            stop = StopReason::Converged;
        }
        let (u, v) = if self.dual() {
            // The final u is solved once more with refinement so that the
            // pair satisfies the second equation to round-off.
            let fx = par::collect(st.x.len(), |k| -signed_pow(st.x[k], e.q()));
            (
                self.sym(self.inverse.apply_refined(&self.grid, &fx)),
                Some(st.x),
            )
        } else {
            (st.u, None)
        };
        let lap = laplacian_values(&self.grid, &u);
        let (s, l) = energy_parts(&self.grid, &u, &lap, e.qp(), e.p());
        let full = gradient_values(&self.grid, &u, &lap, e.qp(), e.p(), 0.0);
        Ok(Descent {
            report: report_from_parts(&self.grid, e, s, l),
            u,
            v,
            trace,
            residual,
            gradient_norm: dot(&full, &full).sqrt(),
            gauge_residual,
            stop,
            collapses,
        })
    }
}

/// A point of the search: the search variable `x` (`u` itself, or `v` in
/// the dual parametrization), the field `u`, and the two energy integrals.
struct State {
    x: Vec<f64>,
    u: Vec<f64>,
    s: f64,
    l: f64,
}

/// Raw outcome of one descent run.
pub struct Descent {
    pub u: Vec<f64>,
    /// The second component when the search ran in it.
    pub v: Option<Vec<f64>>,
    pub report: EnergyReport,
    pub trace: Vec<TraceRow>,
    pub residual: f64,
    /// Norm of the full, unprojected gradient.
    pub gradient_norm: f64,
    /// Relative size of the gauge component of the gradient.
    pub gauge_residual: f64,
    pub stop: StopReason,
    pub collapses: usize,
}

fn initial_fields(problem: &Problem, cfg: &SolveConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.init.kind {
        InitKind::File => {
            let path = cfg.init.path.as_ref().expect("validated");
            let f = load_field(path)?;
            Ok(vec![onto_grid(&f, &problem.grid)])
        }
        kind => cfg
            .init
            .widths
            .iter()
            .map(|w| problem.gauged_seed(kind, *w))
            .collect(),
    }
}

/// Values of `f` on `grid`, interpolating when the grids differ.
fn onto_grid(f: &Field, grid: &Arc<Grid>) -> Vec<f64> {
    if f.grid().same_as(grid) {
        f.values().to_vec()
    } else {
        let g = grid.clone();
        par::collect(g.len(), |k| f.sample(&g.node(k)))
    }
}

/// Picks the orientation of `u` (a solution together with `-u`): positive
/// overlap with the seed profile.
fn normalize_sign(problem: &Problem, d: &mut Descent) {
    let kind = if problem.spec.is_some() {
        InitKind::BiradialSeed
    } else {
        InitKind::RadialSeed
    };
    let reference = problem.seed(kind, 1.0);
    let w = problem.grid.weights();
    let u = &mut d.u;
    let overlap = par::sum(u.len(), |k| w[k] * u[k] * reference[k]);
    if overlap < 0.0 {
        u.iter_mut().for_each(|a| *a = -*a);
        if let Some(v) = &mut d.v {
            v.iter_mut().for_each(|a| *a = -*a);
        }
    }
}

fn finish(problem: &Problem, mut d: Descent, seed_index: usize) -> Result<SolveResult> {
    normalize_sign(problem, &mut d);
    let mut u = Field::new(problem.grid.clone(), d.u)?;
    u.meta.exponents = Some(problem.exponents);
    u.meta.symmetry = problem.spec.clone();
    u.meta.equivariant = problem.spec.is_some();
    // Rebuilding v from u takes a root of Delta_h u, which is round-off
    // dominated in the far field; the dual search already carries v.
    let pair = match d.v {
        Some(v) => {
            let v = u.with_values(v);
            SystemPair::from_pair(u, v, &problem.exponents)?
        }
        None => SystemPair::new(u, &problem.exponents)?,
    };
    let residuals = pair.report(&problem.exponents);
    let sign_change = pair.u.changes_sign(SIGN_FLOOR);
    let v_sign_change = pair.v.changes_sign(SIGN_FLOOR);
    Ok(SolveResult {
        u: pair.u,
        v: pair.v,
        report: d.report,
        residuals,
        trace: d.trace,
        residual: d.residual,
        gradient_norm: d.gradient_norm,
        gauge_residual: d.gauge_residual,
        sign_change,
        v_sign_change,
        converged: d.stop == StopReason::Converged,
        stop: d.stop,
        seed_index,
        rejected_collapses: d.collapses,
    })
}

/// Keeps the lowest level among converged runs, or among all runs when
/// none converged. Ties go to the earlier seed.
fn best_of(runs: Vec<Result<SolveResult>>) -> Result<SolveResult> {
    let mut best: Option<SolveResult> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => (r.converged, -r.report.energy) > (b.converged, -b.report.energy),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Precondition("no seeds".into())))
}

fn solve_with(problem: &Problem, seeds: Vec<Vec<f64>>) -> Result<SolveResult> {
    let jobs: Vec<(usize, Vec<f64>)> = seeds.into_iter().enumerate().collect();
    let runs = par::map_jobs(jobs, |(i, s)| {
        let d = problem.minimize(s)?;
        info!(
            "seed {i}: J = {:.12e}, residual = {:.3e}, {:?} after {} iterations",
            d.report.energy,
            d.residual,
            d.stop,
            d.trace.len()
        );
        finish(problem, d, i)
    });
    best_of(runs)
}

/// Minimizes the energy over the phi-equivariant Nehari set.
pub fn minimize_equivariant(cfg: &SolveConfig) -> Result<SolveResult> {
    if cfg.symmetry.kind != SymmetryKind::Equivariant {
        return Err(Error::Precondition(
            "minimize_equivariant needs an equivariant symmetry".into(),
        ));
    }
    let problem = Problem::new(cfg)?;
    let seeds = initial_fields(&problem, cfg)?;
    solve_with(&problem, seeds)
}

/// Least-energy radial solution (positive when converged).
pub fn ground_state_radial(cfg: &SolveConfig) -> Result<SolveResult> {
    if cfg.symmetry.kind != SymmetryKind::Radial {
        return Err(Error::Precondition(
            "ground_state_radial needs symmetry.kind = \"radial\"".into(),
        ));
    }
    let problem = Problem::new(cfg)?;
    let seeds = initial_fields(&problem, cfg)?;
    solve_with(&problem, seeds)
}

/// Either solver, by the configured symmetry.
pub fn solve(cfg: &SolveConfig) -> Result<SolveResult> {
    match cfg.symmetry.kind {
        SymmetryKind::Radial => ground_state_radial(cfg),
        SymmetryKind::Equivariant => minimize_equivariant(cfg),
    }
}

/// Solves along a list of hyperbola points, each warm-started from the
/// previous solution. A failed point does not abort the sweep; the next
/// point then starts from the configured seed again.
pub fn continuation_sweep(base: &SolveConfig, points: &[Exponents]) -> Vec<Result<SolveResult>> {
    let mut out = Vec::with_capacity(points.len());
    let mut previous: Option<Field> = None;
    for e in points {
        let mut cfg = base.clone();
        cfg.exponents = ExponentConfig::from_exponents(e);
        let run = (|| {
            let problem = Problem::new(&cfg)?;
            let seeds = match &previous {
                Some(f) => vec![onto_grid(f, &problem.grid)],
                None => initial_fields(&problem, &cfg)?,
            };
            solve_with(&problem, seeds)
        })();
        previous = run.as_ref().ok().map(|r| r.u.clone());
        out.push(run);
    }
    out
}
