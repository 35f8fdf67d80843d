//! Exponent arithmetic on the critical hyperbola `1/p + 1/q = (N-2)/N`.
//!
//! Exponents given as rationals stay exact; everything downstream that
//! needs a zero test (the Kelvin zero locus, special-case tags) uses the
//! exact value when one is available.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for hyperbola membership of floating exponents.
pub const HYPERBOLA_TOL: f64 = 1e-12;

pub type Rational = Ratio<i64>;

/// A real exponent, exact when it came from a rational input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Exact(Rational),
    Real(f64),
}

impl Exponent {
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Exponent::Real(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<Rational> {
        match self {
            Exponent::Exact(r) => Some(*r),
            Exponent::Real(_) => None,
        }
    }

    pub fn int(n: i64) -> Self {
        Exponent::Exact(Rational::from_integer(n))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Exponent::Exact(Rational::new(num, den))
    }
}

impl From<f64> for Exponent {
    fn from(x: f64) -> Self {
        Exponent::Real(x)
    }
}

impl From<i32> for Exponent {
    fn from(n: i32) -> Self {
        Exponent::int(n as i64)
    }
}

impl From<i64> for Exponent {
    fn from(n: i64) -> Self {
        Exponent::int(n)
    }
}

impl From<Rational> for Exponent {
    fn from(r: Rational) -> Self {
        Exponent::Exact(r)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Exact(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Exponent::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Exponent::Real(x) => write!(f, "{x:.17}"),
        }
    }
}

/// Parses `"4"`, `"12/5"` (exact) or `"2.5"` (real).
impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidExponent(format!("cannot parse exponent {s:?}"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: i64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Exponent::Exact(Rational::new(num, den)));
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Exponent::int(n));
        }
        s.parse::<f64>().map(Exponent::Real).map_err(|_| bad())
    }
}

/// Which of the two exponents is prescribed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Given {
    P(Exponent),
    Q(Exponent),
}

/// A point `(p, q)` on the critical hyperbola in dimension `n`, with the
/// conjugates `q' = q/(q-1)` and `p' = p/(p-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents {
    pub n: u32,
    pub p: Exponent,
    pub q: Exponent,
    pub qp: Exponent,
    pub pp: Exponent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecialCase {
    /// `p = q = 2N/(N-2)`: the system decouples into the Yamabe equation.
    Yamabe,
    /// `q = 2`: the Paneitz (bilaplacian) equation.
    Paneitz,
    Generic,
}

/// `r/(r-1)`.
pub fn conjugate(r: f64) -> Result<f64> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::InvalidExponent(format!(
            "conjugate exponent requires r > 1, got {r}"
        )));
    }
    Ok(r / (r - 1.0))
}

fn conjugate_exponent(r: Exponent) -> Result<Exponent> {
    match r {
        Exponent::Exact(x) => {
            if x <= Rational::one() {
                return Err(Error::InvalidExponent(format!(
                    "conjugate exponent requires r > 1, got {x}"
                )));
            }
            Ok(Exponent::Exact(x / (x - Rational::one())))
        }
        Exponent::Real(x) => conjugate(x).map(Exponent::Real),
    }
}

/// The Sobolev exponent `2* = 2N/(N-2)`.
pub fn sobolev_critical(n: u32) -> Rational {
    Rational::new(2 * n as i64, n as i64 - 2)
}

/// The second-order Sobolev exponent `2_* = 2N/(N-4)`, defined for `N >= 5`.
pub fn second_order_critical(n: u32) -> Option<Rational> {
    (n >= 5).then(|| Rational::new(2 * n as i64, n as i64 - 4))
}

/// Completes a hyperbola point from one prescribed exponent.
pub fn hyperbola_complete(n: u32, given: Given) -> Result<Exponents> {
    if n < 4 {
        return Err(Error::InvalidExponent(format!(
            "dimension N = {n} is not supported (need N >= 4)"
        )));
    }
    let asymptote = Rational::new(n as i64, n as i64 - 2);
    let level = Rational::new(n as i64 - 2, n as i64);
    let (value, label) = match given {
        Given::P(e) => (e, "p"),
        Given::Q(e) => (e, "q"),
    };
    let other = match value {
        Exponent::Exact(r) => {
            if r <= asymptote {
                return Err(Error::InvalidExponent(format!(
                    "{label} = {r} must exceed N/(N-2) = {asymptote}"
                )));
            }
            Exponent::Exact((level - r.recip()).recip())
        }
        Exponent::Real(x) => {
            let a = asymptote.to_f64().unwrap_or(f64::NAN);
            if !x.is_finite() || x <= a {
                return Err(Error::InvalidExponent(format!(
                    "{label} = {x} must exceed N/(N-2) = {a}"
                )));
            }
            let l = level.to_f64().unwrap_or(f64::NAN);
            Exponent::Real(1.0 / (l - 1.0 / x))
        }
    };
    let (p, q) = match given {
        Given::P(_) => (value, other),
        Given::Q(_) => (other, value),
    };
    let e = Exponents {
        n,
        p,
        q,
        qp: conjugate_exponent(q)?,
        pp: conjugate_exponent(p)?,
    };
    e.validate()?;
    Ok(e)
}

impl Exponents {
    pub fn from_p(n: u32, p: impl Into<Exponent>) -> Result<Self> {
        hyperbola_complete(n, Given::P(p.into()))
    }

    pub fn from_q(n: u32, q: impl Into<Exponent>) -> Result<Self> {
        hyperbola_complete(n, Given::Q(q.into()))
    }

    /// The symmetric point `p = q = 2N/(N-2)`.
    pub fn yamabe(n: u32) -> Result<Self> {
        Self::from_p(n, sobolev_critical(n))
    }

    /// The point `q = 2`, `p = 2N/(N-4)`.
    pub fn paneitz(n: u32) -> Result<Self> {
        Self::from_q(n, Rational::from_integer(2))
    }

    pub fn p(&self) -> f64 {
        self.p.value()
    }

    pub fn q(&self) -> f64 {
        self.q.value()
    }

    pub fn qp(&self) -> f64 {
        self.qp.value()
    }

    pub fn pp(&self) -> f64 {
        self.pp.value()
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    pub fn is_exact(&self) -> bool {
        self.p.exact().is_some() && self.q.exact().is_some()
    }

    /// Checks every hyperbola identity. Exact exponents must satisfy them
    /// exactly; real ones within [`HYPERBOLA_TOL`].
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let checks = [
            (
                "1/p + 1/q = (N-2)/N",
                1.0 / self.p() + 1.0 / self.q() - (n - 2.0) / n,
            ),
            (
                "p = N q'/(N - 2q')",
                self.p() - n * self.qp() / (n - 2.0 * self.qp()),
            ),
            (
                "1/q' - 1/p = 2/N",
                1.0 / self.qp() - 1.0 / self.p() - 2.0 / n,
            ),
            ("q' = q/(q-1)", self.qp() - self.q() / (self.q() - 1.0)),
            ("p' = p/(p-1)", self.pp() - self.p() / (self.p() - 1.0)),
        ];
        for (name, defect) in checks {
            let scale = 1.0f64.max(self.p().abs()).max(self.q().abs());
            if !(defect.abs() <= HYPERBOLA_TOL * scale) {
                return Err(Error::InvalidExponent(format!(
                    "identity {name} violated by {defect:e}"
                )));
            }
        }
        if let (Some(p), Some(q)) = (self.p.exact(), self.q.exact()) {
            let level = Rational::new(self.n as i64 - 2, self.n as i64);
            if p.recip() + q.recip() != level {
                return Err(Error::InvalidExponent(
                    "exact exponents off the hyperbola".into(),
                ));
            }
        }
        if (self.qp() < 2.0) != (self.q() > 2.0) && (self.q() - 2.0).abs() > HYPERBOLA_TOL {
            return Err(Error::InvalidExponent("q' < 2 iff q > 2 violated".into()));
        }
        if !(self.p() > self.qp()) {
            return Err(Error::InvalidExponent("p > q' violated".into()));
        }
        Ok(())
    }

    pub fn special_case(&self) -> SpecialCase {
        let crit = sobolev_critical(self.n);
        let two = Rational::from_integer(2);
        match (self.p.exact(), self.q.exact()) {
            (Some(p), Some(q)) => {
                if p == crit && q == crit {
                    SpecialCase::Yamabe
                } else if q == two {
                    SpecialCase::Paneitz
                } else {
                    SpecialCase::Generic
                }
            }
            _ => {
                let c = crit.to_f64().unwrap_or(f64::NAN);
                let close = |a: f64, b: f64| (a - b).abs() <= HYPERBOLA_TOL * b.abs().max(1.0);
                if close(self.p(), c) && close(self.q(), c) {
                    SpecialCase::Yamabe
                } else if close(self.q(), 2.0) {
                    SpecialCase::Paneitz
                } else {
                    SpecialCase::Generic
                }
            }
        }
    }

    /// `-2N/p`, the exponent of the Kelvin weight `|x|^{-2N/p}`.
    pub fn kelvin_alpha(&self) -> Exponent {
        match self.p.exact() {
            Some(p) => Exponent::Exact(-Rational::from_integer(2 * self.n as i64) / p),
            None => Exponent::Real(-2.0 * self.dim() / self.p()),
        }
    }

    /// `N/p`, the amplitude exponent of the `L^p`-isometric dilation.
    pub fn dilation_power(&self) -> f64 {
        self.dim() / self.p()
    }

    pub fn record(&self) -> ExponentsRecord {
        let exact = |e: &Exponent| e.exact().map(|_| e.to_string());
        ExponentsRecord {
            n: self.n,
            p: self.p(),
            q: self.q(),
            qp: self.qp(),
            pp: self.pp(),
            p_exact: exact(&self.p),
            q_exact: exact(&self.q),
            special_case: self.special_case(),
        }
    }
}

impl fmt::Display for Exponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} p={} q={} q'={} p'={}",
            self.n, self.p, self.q, self.qp, self.pp
        )
    }
}

/// Serialized form of [`Exponents`]: floating values for readers, exact
/// strings when available so the record round-trips losslessly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentsRecord {
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub qp: f64,
    pub pp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_exact: Option<String>,
    pub special_case: SpecialCase,
}

impl TryFrom<&ExponentsRecord> for Exponents {
    type Error = Error;

    fn try_from(r: &ExponentsRecord) -> Result<Self> {
        match &r.p_exact {
            Some(p) => Exponents::from_p(r.n, p.parse::<Exponent>()?),
            None => Exponents::from_p(r.n, r.p),
        }
    }
}

impl Serialize for Exponents {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exponents {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ExponentsRecord::deserialize(d)?;
        Exponents::try_from(&r).map_err(serde::de::Error::custom)
    }
}
