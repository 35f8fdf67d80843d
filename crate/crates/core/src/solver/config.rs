use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::discretize::GridKind;
use crate::error::{Error, Result};
use crate::exponents::{Exponent, Exponents};
use crate::symmetry::{LambdaKind, SymmetrySpec};

/// An exponent written as a number or a string such as `"12/5"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentValue(pub Exponent);

impl Serialize for ExponentValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for ExponentValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Str(String),
        }
        let e = match Raw::deserialize(d)? {
            Raw::Int(n) => Exponent::int(n),
            Raw::Float(x) => Exponent::Real(x),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        Ok(ExponentValue(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<ExponentValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<ExponentValue>,
}

impl ExponentConfig {
    pub fn resolve(&self) -> Result<Exponents> {
        match (self.p, self.q) {
            (Some(p), None) => Exponents::from_p(self.n, p.0),
            (None, Some(q)) => Exponents::from_q(self.n, q.0),
            (Some(p), Some(q)) => {
                let e = Exponents::from_p(self.n, p.0)?;
                if (e.q() - q.0.value()).abs() > 1e-12 * e.q() {
                    return Err(Error::InvalidExponent(format!(
                        "p = {} and q = {} are not on the critical hyperbola for N = {}",
                        p.0, q.0, self.n
                    )));
                }
                Ok(e)
            }
            (None, None) => Err(Error::InvalidExponent("give p or q".into())),
        }
    }

    pub fn from_exponents(e: &Exponents) -> Self {
        ExponentConfig {
            n: e.n,
            p: None,
            q: Some(ExponentValue(e.q)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    /// Radial functions, no sign constraint (ground state).
    Radial,
    /// phi_j-equivariant functions for the group `G_j`.
    Equivariant,
}

fn default_j() -> u32 {
    1
}

fn default_haar() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    pub kind: SymmetryKind,
    #[serde(default = "default_j")]
    pub j: u32,
    /// Defaults to the standard family choice for `(N, j)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaKind>,
    #[serde(default = "default_haar")]
    pub haar_samples: usize,
}

impl SymmetryConfig {
    pub fn spec(&self, n: u32) -> Result<Option<SymmetrySpec>> {
        match self.kind {
            SymmetryKind::Radial => Ok(None),
            SymmetryKind::Equivariant => {
                let mut s = SymmetrySpec::family(n, self.j)?;
                if let Some(l) = self.lambda {
                    s.lambda = l;
                }
                s.haar_samples = self.haar_samples;
                Ok(Some(s))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: GridKind,
    /// Truncation radius `R`.
    pub extent: f64,
    pub resolution: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `(s^2 - t^2) exp(-|x|^2 / w^2)`, one block factor per `C^2` block.
    BiradialSeed,
    /// `(1 + |x|^2 / w^2)^{-(N-2)/2}`.
    RadialSeed,
    /// A saved field, interpolated when the grids differ.
    File,
}

fn default_widths() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub kind: InitKind,
    /// One independent solve per width; the lowest converged level wins.
    #[serde(default = "default_widths")]
    pub widths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub initial: f64,
    pub backtrack: f64,
    pub growth: f64,
    pub max_backtracks: usize,
    pub max_iterations: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            initial: 1.0,
            backtrack: 0.5,
            growth: 2.0,
            max_backtracks: 40,
            max_iterations: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative energy change allowed over `window` iterations.
    pub energy_rel_tol: f64,
    pub window: usize,
    /// Bound on `|g|_w |u|_w / int |Delta u|^{q'}`.
    pub residual_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            energy_rel_tol: 1e-9,
            window: 50,
            residual_tol: 1e-6,
        }
    }
}

/// Smoothing of the metric weight `|Delta u|^{q'-2}`: `eps` is relative to
/// `max |Delta u|` and decays geometrically to `eps_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Regularization {
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_min: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization {
            eps_start: 1e-1,
            eps_decay: 0.9,
            eps_min: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Steepest descent in the quadrature metric.
    Plain,
    /// `(Delta_h^2)^{-1}`, factored once per grid.
    Bilaplacian,
    /// `Delta_h^{-1} D^{-1} Delta_h^{-1}` with `D` the linearization of
    /// `|a|^{q'-2} a` at the current `Delta_h u`.
    Quasilinear,
    /// `d = T(u) - u` for the fixed-point map of the system,
    /// `T(u) = Delta_h^{-1} |y|^{q-2} y` with `y = Delta_h^{-1} |u|^{p-2} u`,
    /// with `T(u)` projected onto the Nehari set. Monotonicity of
    /// `a -> |a|^{q-2} a` makes it a descent direction at every `(p, q)`.
    #[default]
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub exponents: ExponentConfig,
    pub symmetry: SymmetryConfig,
    pub grid: GridConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default)]
    pub metric: Metric,
    /// Radius `l` of the scale gauge `int (|x|^2/(l^2+|x|^2) - 1/2) |u|^p = 0`;
    /// 0 switches it off.
    #[serde(default = "default_gauge")]
    pub gauge_radius: f64,
}

fn default_gauge() -> f64 {
    1.0
}

impl SolveConfig {
    /// Sign-changing `G_1` run on a bi-radial grid in `R^4` at the Yamabe point.
    pub fn yamabe_biradial(extent: f64, resolution: usize) -> Self {
        SolveConfig {
            exponents: ExponentConfig {
                n: 4,
                p: Some(ExponentValue(Exponent::int(4))),
                q: None,
            },
            symmetry: SymmetryConfig {
                kind: SymmetryKind::Equivariant,
                j: 1,
                lambda: None,
                haar_samples: 64,
            },
            grid: GridConfig {
                kind: GridKind::Biradial2d,
                extent,
                resolution,
            },
            init: InitConfig {
                kind: InitKind::BiradialSeed,
                widths: default_widths(),
                path: None,
            },
            step: StepConfig::default(),
            tolerances: Tolerances::default(),
            regularization: Regularization::default(),
            metric: Metric::default(),
            gauge_radius: default_gauge(),
        }
    }

    /// Radial ground-state run.
    pub fn radial(e: &Exponents, extent: f64, resolution: usize) -> Self {
        let mut cfg = Self::yamabe_biradial(extent, resolution);
        cfg.exponents = ExponentConfig::from_exponents(e);
        cfg.symmetry.kind = SymmetryKind::Radial;
        cfg.grid.kind = GridKind::Radial1d;
        cfg.init.kind = InitKind::RadialSeed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.exponents.resolve()?;
        let bad = |m: String| Err(Error::Precondition(m));
        if !(self.grid.extent > 0.0) {
            return bad(format!(
                "grid.extent must be positive, got {}",
                self.grid.extent
            ));
        }
        if self.tolerances.energy_rel_tol <= 0.0 || self.tolerances.residual_tol <= 0.0 {
            return bad("tolerances must be positive".into());
        }
        if self.tolerances.window == 0 {
            return bad("tolerances.window must be positive".into());
        }
        if !(self.step.initial > 0.0) || !(self.step.backtrack > 0.0 && self.step.backtrack < 1.0) {
            return bad("step.initial must be positive and step.backtrack in (0, 1)".into());
        }
        if !(self.gauge_radius >= 0.0 && self.gauge_radius < self.grid.extent) {
            return bad("gauge_radius must lie in [0, grid.extent)".into());
        }
        if self.step.growth < 1.0 {
            return bad("step.growth must be at least 1".into());
        }
        if self.init.kind != InitKind::File && self.init.widths.iter().any(|w| !(*w > 0.0)) {
            return bad("init.widths must be positive".into());
        }
        if self.init.widths.is_empty() {
            return bad("init.widths is empty".into());
        }
        if self.init.kind == InitKind::File && self.init.path.is_none() {
            return bad("init.kind = \"file\" needs init.path".into());
        }
        let spec = self.symmetry.spec(e.n)?;
        match (self.symmetry.kind, self.grid.kind) {
            (SymmetryKind::Radial, GridKind::Radial1d) => {}
            (SymmetryKind::Radial, k) => return bad(format!("radial runs need a radial_1d grid, got {k:?}")),
            (SymmetryKind::Equivariant, GridKind::Radial1d) => {
                return bad("equivariant runs cannot live on a radial grid (phi-equivariant radial functions vanish)".into())
            }
            (SymmetryKind::Equivariant, GridKind::Cartesian) => {}
            (SymmetryKind::Equivariant, _) => {
                if spec.as_ref().map(|s| s.j) != Some(1) {
                    return bad("reduced bi-radial grids carry only j = 1".into());
                }
            }
        }
        Ok(())
    }
}
