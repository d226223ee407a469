//! Lévy–Khintchine triplets, polar Lévy measures and radial measures.
//!
//! The cumulant is
//! `C(z) = −½⟨z,Az⟩ + i⟨γ,z⟩ + ∫(e^{i⟨z,x⟩} − 1 − i⟨z,x⟩/(1+|x|²)) ν(dx)`
//! with `ν(dr dξ) = λ(dξ) ν_ξ(dr)` and `λ` a finite sum of point masses.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LevyError, Result};
use crate::expr::Expr;
use crate::grid::GridDensity;
use crate::quad::Quad;
use crate::special::{gamma, levy_integrand, ln_1p, pow1p_m1, pow1p_m1_mlin, EULER_GAMMA};

/// Unit vector on the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.iter().any(|c| !c.is_finite()) {
            return Err(LevyError::invalid("direction coordinates must be finite"));
        }
        let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(LevyError::invalid(format!(
                "direction must have unit length, got {n}"
            )));
        }
        Ok(Direction(coords))
    }

    /// Normalize a nonzero vector.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(LevyError::invalid(
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(Direction(v.iter().map(|c| c / n).collect()))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, z: &[f64]) -> f64 {
        self.0.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    pub fn negated(&self) -> Direction {
        Direction(self.0.iter().map(|c| -c).collect())
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = LevyError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub r: f64,
    pub mass: f64,
}

#[derive(Deserialize)]
struct AtomsRaw {
    #[serde(default)]
    atoms: Option<Vec<Atom>>,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    mass: Option<f64>,
}

#[derive(Serialize)]
struct AtomsOut {
    atoms: Vec<Atom>,
}

/// Finitely many point masses. JSON accepts `{"atoms": [{"r", "mass"}, ..]}`
/// or the single-atom shorthand `{"r", "mass"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomsRaw", into = "AtomsOut")]
pub struct Atoms(Vec<Atom>);

impl Atoms {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(LevyError::invalid("atom list is empty"));
        }
        for a in &atoms {
            if !(a.r > 0.0 && a.r.is_finite() && a.mass > 0.0 && a.mass.is_finite()) {
                return Err(LevyError::invalid("atoms need r > 0 and mass > 0"));
            }
        }
        Ok(Atoms(atoms))
    }

    pub fn as_slice(&self) -> &[Atom] {
        &self.0
    }
}

impl TryFrom<AtomsRaw> for Atoms {
    type Error = LevyError;
    fn try_from(raw: AtomsRaw) -> Result<Self> {
        match (raw.atoms, raw.r, raw.mass) {
            (Some(list), None, None) => Atoms::new(list),
            (None, Some(r), Some(mass)) => Atoms::new(vec![Atom { r, mass }]),
            _ => Err(LevyError::Parse(
                "atom measure needs either \"atoms\" or both \"r\" and \"mass\"".into(),
            )),
        }
    }
}

impl From<Atoms> for AtomsOut {
    fn from(a: Atoms) -> Self {
        AtomsOut { atoms: a.0 }
    }
}

fn one() -> f64 {
    1.0
}

/// Radial component `ν_ξ(dr)` on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialMeasure {
    Atom(Atoms),
    /// `scale·r^{-α-1} dr`, `0 < α < 2`.
    PowerLaw {
        alpha: f64,
        scale: f64,
    },
    /// `scale·r^{-α-1} e^{-βr} dr`, `α < 2`, `β > 0`.
    Tempered {
        alpha: f64,
        scale: f64,
        beta: f64,
    },
    Grid(GridDensity),
    /// `scale·expr(r) dr` on `(lower, upper)`.
    Density {
        expr: Expr,
        #[serde(default)]
        lower: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    Sum {
        parts: Vec<RadialMeasure>,
    },
}

// Breakpoints in x = ln r for quadrature over the whole half-line.
const X_BREAKS: [f64; 21] = [
    -300.0, -100.0, -40.0, -30.0, -20.0, -15.0, -10.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 10.0,
    15.0, 20.0, 30.0, 40.0, 100.0, 300.0,
];
// r^{-3} stays finite down to e^{-230}
const X_MIN: f64 = -230.0;
const X_MAX: f64 = 700.0;

fn x_range(lo: f64, hi: f64) -> (f64, f64) {
    let a = if lo > 0.0 { lo.ln().max(X_MIN) } else { X_MIN };
    let b = if hi.is_finite() {
        hi.ln().min(X_MAX)
    } else {
        X_MAX
    };
    (a, b)
}

fn x_points(a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    pts.extend(X_BREAKS.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts
}

/// `∫_lo^hi F(r) dr` computed in `x = ln r`.
pub(crate) fn integrate_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let (a, b) = x_range(lo, hi);
    if b <= a {
        return Ok(0.0);
    }
    // relative accuracy only: far-tail values feed monotonicity tests
    let q = Quad::new(0.0, 1e-11);
    Ok(q.integrate_pts(
        |x: f64| {
            let r = x.exp();
            let v = f(r) * r;
            // overflow/underflow products far out are treated as negligible
            if !v.is_finite() && x.abs() > 100.0 {
                0.0
            } else {
                v
            }
        },
        &x_points(a, b),
    )?
    .value)
}

impl RadialMeasure {
    pub fn atom(r: f64, mass: f64) -> Result<Self> {
        Ok(RadialMeasure::Atom(Atoms::new(vec![Atom { r, mass }])?))
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        Ok(RadialMeasure::Atom(Atoms::new(atoms)?))
    }

    pub fn power_law(alpha: f64, scale: f64) -> Result<Self> {
        let m = RadialMeasure::PowerLaw { alpha, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn tempered(alpha: f64, scale: f64, beta: f64) -> Result<Self> {
        let m = RadialMeasure::Tempered { alpha, scale, beta };
        m.validate()?;
        Ok(m)
    }

    pub fn grid(r: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Ok(RadialMeasure::Grid(GridDensity::new(r, density)?))
    }

    pub fn density_expr(expr: &str, lower: f64, upper: Option<f64>) -> Result<Self> {
        let m = RadialMeasure::Density {
            expr: Expr::parse(expr)?,
            lower,
            upper,
            scale: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn sum(parts: Vec<RadialMeasure>) -> Result<Self> {
        let m = RadialMeasure::Sum { parts };
        m.validate()?;
        Ok(m)
    }

    /// Check parameter ranges and `∫(r²∧1)ν(dr) < ∞`.
    pub fn validate(&self) -> Result<()> {
        match self {
            RadialMeasure::Atom(_) | RadialMeasure::Grid(_) => Ok(()),
            RadialMeasure::PowerLaw { alpha, scale } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(LevyError::invalid(format!(
                        "power-law alpha must lie in (0,2), got {alpha}"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(LevyError::invalid("power-law scale must be positive"));
                }
                Ok(())
            }
            RadialMeasure::Tempered { alpha, scale, beta } => {
                if !(*alpha < 2.0 && alpha.is_finite()) {
                    return Err(LevyError::invalid(format!(
                        "tempered alpha must be below 2, got {alpha}"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite() && *beta > 0.0 && beta.is_finite()) {
                    return Err(LevyError::invalid(
                        "tempered scale and beta must be positive",
                    ));
                }
                Ok(())
            }
            RadialMeasure::Density {
                expr,
                lower,
                upper,
                scale,
            } => {
                let hi = upper.unwrap_or(f64::INFINITY);
                if !(*lower >= 0.0 && hi > *lower && *scale > 0.0 && scale.is_finite()) {
                    return Err(LevyError::invalid(format!(
                        "density '{}' needs 0 ≤ lower < upper and scale > 0",
                        expr.source()
                    )));
                }
                let (a, b) = x_range(*lower, hi);
                for k in 1..16 {
                    let r = (a + (b - a) * k as f64 / 16.0).exp();
                    let v = expr.eval(r);
                    if v.is_nan() || v < 0.0 {
                        return Err(LevyError::invalid(format!(
                            "density '{}' is negative or undefined at r = {r:e}",
                            expr.source()
                        )));
                    }
                }
                let c = self.r2_mass()?;
                if !c.is_finite() {
                    return Err(LevyError::invalid("density violates ∫(r²∧1)ν(dr) < ∞"));
                }
                Ok(())
            }
            RadialMeasure::Sum { parts } => {
                if parts.is_empty() {
                    return Err(LevyError::invalid("sum of radial measures is empty"));
                }
                parts.iter().try_for_each(|p| p.validate())
            }
        }
    }

    /// True when the measure has a density with respect to `dr`.
    pub fn has_density(&self) -> bool {
        match self {
            RadialMeasure::Atom(_) => false,
            RadialMeasure::Sum { parts } => parts.iter().all(|p| p.has_density()),
            _ => true,
        }
    }

    /// Density `ℓ(r)`, or `None` for measures with atoms.
    pub fn density(&self, r: f64) -> Option<f64> {
        if !(r > 0.0) {
            return Some(0.0);
        }
        match self {
            RadialMeasure::Atom(_) => None,
            RadialMeasure::PowerLaw { alpha, scale } => Some(scale * r.powf(-alpha - 1.0)),
            RadialMeasure::Tempered { alpha, scale, beta } => {
                Some(scale * r.powf(-alpha - 1.0) * (-beta * r).exp())
            }
            RadialMeasure::Grid(g) => Some(g.density(r)),
            RadialMeasure::Density {
                expr,
                lower,
                upper,
                scale,
            } => {
                if r > *lower && upper.is_none_or(|u| r < u) {
                    Some(scale * expr.eval(r))
                } else {
                    Some(0.0)
                }
            }
            RadialMeasure::Sum { parts } => parts.iter().map(|p| p.density(r)).sum(),
        }
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            RadialMeasure::Atom(a) => {
                let lo = a.0.iter().map(|x| x.r).fold(f64::INFINITY, f64::min);
                let hi = a.0.iter().map(|x| x.r).fold(0.0, f64::max);
                (lo, hi)
            }
            RadialMeasure::PowerLaw { .. } | RadialMeasure::Tempered { .. } => (0.0, f64::INFINITY),
            RadialMeasure::Grid(g) => (g.radii()[0], g.radii()[g.len() - 1]),
            RadialMeasure::Density { lower, upper, .. } => (*lower, upper.unwrap_or(f64::INFINITY)),
            RadialMeasure::Sum { parts } => parts
                .iter()
                .map(|p| p.support())
                .fold((f64::INFINITY, 0.0), |(a, b), (c, d)| (a.min(c), b.max(d))),
        }
    }

    /// Radii of point masses (used as quadrature breakpoints).
    pub fn atom_radii(&self) -> Vec<f64> {
        match self {
            RadialMeasure::Atom(a) => a.0.iter().map(|x| x.r).collect(),
            RadialMeasure::Sum { parts } => parts.iter().flat_map(|p| p.atom_radii()).collect(),
            _ => Vec::new(),
        }
    }

    /// Multiply the measure by `k > 0`.
    pub fn scaled(&self, k: f64) -> RadialMeasure {
        match self {
            RadialMeasure::Atom(a) => RadialMeasure::Atom(Atoms(
                a.0.iter()
                    .map(|x| Atom {
                        r: x.r,
                        mass: x.mass * k,
                    })
                    .collect(),
            )),
            RadialMeasure::PowerLaw { alpha, scale } => RadialMeasure::PowerLaw {
                alpha: *alpha,
                scale: scale * k,
            },
            RadialMeasure::Tempered { alpha, scale, beta } => RadialMeasure::Tempered {
                alpha: *alpha,
                scale: scale * k,
                beta: *beta,
            },
            RadialMeasure::Grid(g) => RadialMeasure::Grid(g.scaled(k)),
            RadialMeasure::Density {
                expr,
                lower,
                upper,
                scale,
            } => RadialMeasure::Density {
                expr: expr.clone(),
                lower: *lower,
                upper: *upper,
                scale: scale * k,
            },
            RadialMeasure::Sum { parts } => RadialMeasure::Sum {
                parts: parts.iter().map(|p| p.scaled(k)).collect(),
            },
        }
    }

    /// `∫_{(lo, hi]} φ(r) ν(dr)`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64) -> Result<f64> {
        match self {
            RadialMeasure::Atom(a) => Ok(a
                .0
                .iter()
                .filter(|x| x.r > lo && x.r <= hi)
                .map(|x| x.mass * phi(x.r))
                .sum()),
            RadialMeasure::Grid(g) => Ok(g.integrate(phi, lo, hi)),
            RadialMeasure::Density { lower, upper, .. } => {
                let a = lo.max(*lower);
                let b = hi.min(upper.unwrap_or(f64::INFINITY));
                integrate_log(|r| phi(r) * self.density(r).unwrap_or(0.0), a, b)
            }
            RadialMeasure::PowerLaw { .. } | RadialMeasure::Tempered { .. } => {
                integrate_log(|r| phi(r) * self.density(r).unwrap_or(0.0), lo, hi)
            }
            RadialMeasure::Sum { parts } => parts.iter().map(|p| p.integrate(phi, lo, hi)).sum(),
        }
    }

    /// `ν((r, ∞))`; `NaN` if a quadrature fails.
    pub fn tail(&self, r: f64) -> f64 {
        self.try_tail(r).unwrap_or(f64::NAN)
    }

    pub fn try_tail(&self, r: f64) -> Result<f64> {
        match self {
            RadialMeasure::Atom(a) => Ok(a.0.iter().filter(|x| x.r > r).map(|x| x.mass).sum()),
            RadialMeasure::PowerLaw { alpha, scale } => Ok(if r > 0.0 {
                scale * r.powf(-alpha) / alpha
            } else {
                f64::INFINITY
            }),
            RadialMeasure::Grid(g) => Ok(g.tail(r)),
            RadialMeasure::Sum { parts } => parts.iter().map(|p| p.try_tail(r)).sum(),
            _ => self.integrate(|_| 1.0, r, f64::INFINITY),
        }
    }

    /// `∫(r²∧1) ν(dr)`.
    pub fn r2_mass(&self) -> Result<f64> {
        match self {
            RadialMeasure::PowerLaw { alpha, scale } => {
                Ok(scale * (1.0 / (2.0 - alpha) + 1.0 / alpha))
            }
            RadialMeasure::Sum { parts } => parts.iter().map(|p| p.r2_mass()).sum(),
            _ => Ok(self.integrate(|r| r * r, 0.0, 1.0)? + self.try_tail(1.0)?),
        }
    }

    /// `∫_{r>1} (ln r)^m ν(dr)`, `+∞` when divergent.
    pub fn log_moment(&self, m: u32) -> f64 {
        let lm = |r: f64| r.ln().powi(m as i32);
        match self {
            RadialMeasure::Atom(a) => {
                a.0.iter()
                    .filter(|x| x.r > 1.0)
                    .map(|x| x.mass * lm(x.r))
                    .sum()
            }
            RadialMeasure::PowerLaw { alpha, scale } => {
                let fact: f64 = (1..=m).map(|k| k as f64).product();
                scale * fact / alpha.powi(m as i32 + 1)
            }
            RadialMeasure::Grid(g) => g.integrate(lm, 1.0, f64::INFINITY),
            RadialMeasure::Tempered { .. } => self
                .integrate(lm, 1.0, f64::INFINITY)
                .unwrap_or(f64::INFINITY),
            RadialMeasure::Density { upper: Some(u), .. } if u.is_finite() => {
                self.integrate(lm, 1.0, *u).unwrap_or(f64::INFINITY)
            }
            RadialMeasure::Density { .. } => self.log_moment_shells(m),
            RadialMeasure::Sum { parts } => parts.iter().map(|p| p.log_moment(m)).sum(),
        }
    }

    // Shell test in x = ln r over [2^{k-1}, 2^k]: five consecutive non-decreasing
    // shell integrals at the far end mean divergence, otherwise the geometric
    // remainder is added.
    fn log_moment_shells(&self, m: u32) -> f64 {
        let f = |x: f64| {
            let r = x.exp();
            x.powi(m as i32) * self.density(r).unwrap_or(0.0) * r
        };
        let q = Quad::default();
        let mut total = match q.integrate(f, 0.0, 1.0) {
            Ok(o) => o.value,
            Err(_) => return f64::INFINITY,
        };
        let mut shells = Vec::new();
        for k in 1..=9 {
            let a = 2f64.powi(k - 1);
            let b = 2f64.powi(k);
            match q.integrate_pts(f, &[a, 0.5 * (a + b), b]) {
                Ok(o) => shells.push(o.value),
                Err(_) => return f64::INFINITY,
            }
        }
        total += shells.iter().sum::<f64>();
        let n = shells.len();
        let growing =
            (n - 5..n).all(|k| shells[k - 1] > 0.0 && shells[k] >= (1.0 - 1e-6) * shells[k - 1]);
        if growing {
            return f64::INFINITY;
        }
        let (s1, s0) = (shells[n - 1], shells[n - 2]);
        if s0 > 0.0 && s1 > 0.0 {
            let ratio = s1 / s0;
            if ratio < 1.0 {
                total += s1 * ratio / (1.0 - ratio);
            }
        }
        total
    }

    /// `∫(e^{iwr} − 1 − iwr/(1+r²)) ν(dr)`.
    pub fn cumulant(&self, w: f64) -> Result<Complex64> {
        RadialEval::new(self)?.cumulant(w)
    }
}

/// `h(u) = e^{-u} ν_ξ((e^u, ∞))`.
pub fn h_function(rm: &RadialMeasure, u: f64) -> f64 {
    let r = u.exp();
    if r.is_infinite() {
        return 0.0;
    }
    (-u).exp() * rm.tail(r)
}

/// Free-function form of [`RadialMeasure::tail`].
pub fn radial_tail(rm: &RadialMeasure, r: f64) -> f64 {
    rm.tail(r)
}

// (1+x)ln(1+x) − x
fn xlogx_m1(x: Complex64) -> Complex64 {
    if x.norm() < 1e-2 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut xp = x;
        for k in 2..=16 {
            xp *= x;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += xp * (sign / (k * (k - 1)) as f64);
        }
        sum
    } else {
        (x + 1.0) * ln_1p(x) - x
    }
}

fn power_cumulant(alpha: f64, w: f64) -> Complex64 {
    if w == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let aw = w.abs();
    if alpha == 1.0 {
        Complex64::new(-FRAC_PI_2 * aw, -w * aw.ln() + w * (1.0 - EULER_GAMMA))
    } else {
        let main = Complex64::from_polar(
            gamma(-alpha) * aw.powf(alpha),
            -FRAC_PI_2 * alpha * w.signum(),
        );
        main - Complex64::new(0.0, w * FRAC_PI_2 / (FRAC_PI_2 * alpha).cos())
    }
}

/// Radial measure with constants precomputed for repeated cumulant evaluation.
#[derive(Debug, Clone)]
pub(crate) enum RadialEval {
    Atoms(Vec<Atom>),
    Power {
        alpha: f64,
        scale: f64,
    },
    Tempered {
        alpha: f64,
        scale: f64,
        beta: f64,
        comp: f64,
    },
    Grid(GridDensity),
    Generic(RadialMeasure),
    Sum(Vec<RadialEval>),
}

impl RadialEval {
    pub(crate) fn new(rm: &RadialMeasure) -> Result<Self> {
        Ok(match rm {
            RadialMeasure::Atom(a) => RadialEval::Atoms(a.0.clone()),
            RadialMeasure::PowerLaw { alpha, scale } => RadialEval::Power {
                alpha: *alpha,
                scale: *scale,
            },
            RadialMeasure::Tempered { alpha, scale, beta } => {
                // α < 1: ∫ r/(1+r²) ℓ₀ ; α ≥ 1: ∫ r³/(1+r²) ℓ₀, with ℓ₀ = r^{-α-1}e^{-βr}
                let p = if *alpha < 1.0 { -alpha } else { 2.0 - alpha };
                let comp = integrate_log(
                    |r| r.powf(p) / (1.0 + r * r) * (-beta * r).exp(),
                    0.0,
                    f64::INFINITY,
                )?;
                RadialEval::Tempered {
                    alpha: *alpha,
                    scale: *scale,
                    beta: *beta,
                    comp,
                }
            }
            RadialMeasure::Grid(g) => RadialEval::Grid(g.clone()),
            RadialMeasure::Density { .. } => RadialEval::Generic(rm.clone()),
            RadialMeasure::Sum { parts } => {
                RadialEval::Sum(parts.iter().map(RadialEval::new).collect::<Result<_>>()?)
            }
        })
    }

    pub(crate) fn cumulant(&self, w: f64) -> Result<Complex64> {
        if w == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(match self {
            RadialEval::Atoms(a) => a.iter().map(|x| levy_integrand(w, x.r) * x.mass).sum(),
            RadialEval::Power { alpha, scale } => power_cumulant(*alpha, w) * *scale,
            RadialEval::Tempered {
                alpha,
                scale,
                beta,
                comp,
            } => {
                let x = Complex64::new(0.0, -w / beta);
                let iw = Complex64::new(0.0, w);
                let total = if *alpha < 1.0 {
                    let base = if *alpha == 0.0 {
                        -ln_1p(x)
                    } else {
                        pow1p_m1(x, *alpha) * (gamma(-alpha) * beta.powf(*alpha))
                    };
                    base - iw * *comp
                } else {
                    let base = if *alpha == 1.0 {
                        xlogx_m1(x) * *beta
                    } else {
                        pow1p_m1_mlin(x, *alpha) * (gamma(-alpha) * beta.powf(*alpha))
                    };
                    base + iw * *comp
                };
                total * *scale
            }
            RadialEval::Grid(g) => g.cumulant(w),
            RadialEval::Generic(rm) => generic_cumulant(rm, w)?,
            RadialEval::Sum(parts) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in parts {
                    acc += p.cumulant(w)?;
                }
                acc
            }
        })
    }
}

fn generic_cumulant(rm: &RadialMeasure, w: f64) -> Result<Complex64> {
    let (lo, hi) = rm.support();
    let mut upper = hi;
    if hi.is_infinite() {
        // cut where the remaining tail is negligible: |integrand| ≤ (2+|w|) per unit mass
        let mut x: f64 = 1.0;
        loop {
            let r = x.exp();
            if (2.0 + w.abs()) * rm.try_tail(r)? < 1e-13 || x >= 512.0 {
                upper = r;
                break;
            }
            x *= 2.0;
        }
    }
    let (a, b) = x_range(lo, upper);
    if b <= a {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let q = Quad {
        max_intervals: 20_000,
        ..Default::default()
    };
    let out = q.integrate_pts(
        |x: f64| {
            let r = x.exp();
            levy_integrand(w, r) * (rm.density(r).unwrap_or(0.0) * r)
        },
        &x_points(a, b),
    )?;
    Ok(out.value)
}

/// One direction of a polar Lévy measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarComponent {
    pub xi: Direction,
    pub weight: f64,
    pub radial: RadialMeasure,
}

/// `ν(dx) = Σ_ξ λ_ξ ν_ξ(dr)` on finitely many directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarLevyMeasure {
    pub directions: Vec<PolarComponent>,
}

impl PolarLevyMeasure {
    pub fn new(directions: Vec<PolarComponent>) -> Result<Self> {
        let m = PolarLevyMeasure { directions };
        m.validate()?;
        Ok(m)
    }

    /// One direction with weight 1.
    pub fn single(xi: Direction, radial: RadialMeasure) -> Result<Self> {
        PolarLevyMeasure::new(vec![PolarComponent {
            xi,
            weight: 1.0,
            radial,
        }])
    }

    /// One-dimensional symmetric measure: the same radial part at `±1`.
    pub fn symmetric_1d(radial: RadialMeasure) -> Result<Self> {
        PolarLevyMeasure::new(vec![
            PolarComponent {
                xi: Direction(vec![1.0]),
                weight: 1.0,
                radial: radial.clone(),
            },
            PolarComponent {
                xi: Direction(vec![-1.0]),
                weight: 1.0,
                radial,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.directions.first() else {
            return Err(LevyError::invalid(
                "polar Lévy measure needs at least one direction",
            ));
        };
        let d = first.xi.dim();
        for c in &self.directions {
            if c.xi.dim() != d {
                return Err(LevyError::invalid("directions have mixed dimensions"));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(LevyError::invalid(
                    "direction weights must be positive and finite",
                ));
            }
            c.radial.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.directions[0].xi.dim()
    }

    /// `∫_{|x|>1} (ln|x|)^m ν(dx)`, `+∞` when divergent.
    pub fn log_moment(&self, m: u32) -> f64 {
        self.directions
            .iter()
            .map(|c| c.weight * c.radial.log_moment(m))
            .sum()
    }

    /// Largest `m ≤ 16` with finite log-moment of order `m`; `u32::MAX` when order 16 is finite.
    pub fn log_moment_order(&self) -> u32 {
        if self.log_moment(16).is_finite() {
            return u32::MAX;
        }
        (0..16)
            .rev()
            .find(|&m| self.log_moment(m).is_finite())
            .unwrap_or(0)
    }

    /// `ν({x : |x| > r, x/|x| ∈ D})` where `D` is given by direction indices.
    pub fn tail_on(&self, r: f64, dirs: &[usize]) -> f64 {
        dirs.iter()
            .map(|&i| self.directions[i].weight * self.directions[i].radial.tail(r))
            .sum()
    }

    /// Rescale so every direction has `∫(r²∧1)ν_ξ(dr) = c` and the weights sum
    /// to one. Returns the rescaled measure and `c`.
    pub fn normalize(&self) -> Result<(PolarLevyMeasure, f64)> {
        let cs: Vec<f64> = self
            .directions
            .iter()
            .map(|d| d.radial.r2_mass())
            .collect::<Result<_>>()?;
        if let Some(i) = cs.iter().position(|c| !(*c > 0.0)) {
            return Err(LevyError::invalid(format!(
                "direction {i} has zero radial mass"
            )));
        }
        let c: f64 = self
            .directions
            .iter()
            .zip(&cs)
            .map(|(d, cx)| d.weight * cx)
            .sum();
        let directions = self
            .directions
            .iter()
            .zip(&cs)
            .map(|(d, cx)| PolarComponent {
                xi: d.xi.clone(),
                weight: d.weight * cx / c,
                radial: d.radial.scaled(c / cx),
            })
            .collect();
        Ok((PolarLevyMeasure { directions }, c))
    }
}

/// Free-function form of [`PolarLevyMeasure::log_moment`].
pub fn log_moment(nu: &PolarLevyMeasure, m: u32) -> f64 {
    nu.log_moment(m)
}

/// Free-function form of [`PolarLevyMeasure::normalize`].
pub fn normalize_polar(nu: &PolarLevyMeasure) -> Result<(PolarLevyMeasure, f64)> {
    nu.normalize()
}

#[derive(Deserialize)]
struct TripletRaw {
    dimension: usize,
    #[serde(rename = "A", default)]
    a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    gamma: Option<Vec<f64>>,
    #[serde(default)]
    levy: Option<PolarLevyMeasure>,
}

/// Lévy–Khintchine triplet `(A, ν, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripletRaw")]
pub struct LevyTriplet {
    pub dimension: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levy: Option<PolarLevyMeasure>,
}

impl TryFrom<TripletRaw> for LevyTriplet {
    type Error = LevyError;
    fn try_from(raw: TripletRaw) -> Result<Self> {
        let d = raw.dimension;
        let levy = raw.levy.filter(|l| !l.directions.is_empty());
        LevyTriplet::new(
            raw.a.unwrap_or_else(|| vec![vec![0.0; d]; d]),
            raw.gamma.unwrap_or_else(|| vec![0.0; d]),
            levy,
        )
    }
}

pub(crate) fn quad_form(a: &[Vec<f64>], z: &[f64]) -> f64 {
    a.iter()
        .zip(z)
        .map(|(row, zi)| zi * row.iter().zip(z).map(|(aij, zj)| aij * zj).sum::<f64>())
        .sum()
}

// Smallest eigenvalue of the symmetric part is at least −shift.
fn is_psd(a: &[Vec<f64>], shift: f64) -> bool {
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i][j] + a[j][i]));
    m.symmetric_eigenvalues().iter().all(|&ev| ev >= -shift)
}

impl LevyTriplet {
    pub fn new(a: Vec<Vec<f64>>, gamma: Vec<f64>, levy: Option<PolarLevyMeasure>) -> Result<Self> {
        let t = LevyTriplet {
            dimension: gamma.len(),
            a,
            gamma,
            levy,
        };
        t.validate()?;
        Ok(t)
    }

    /// Centered Gaussian with covariance `a`.
    pub fn gaussian(a: Vec<Vec<f64>>) -> Result<Self> {
        let d = a.len();
        LevyTriplet::new(a, vec![0.0; d], None)
    }

    /// Pure-jump triplet with zero drift.
    pub fn pure_jump(levy: PolarLevyMeasure) -> Result<Self> {
        let d = levy.dim();
        LevyTriplet::new(vec![vec![0.0; d]; d], vec![0.0; d], Some(levy))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(LevyError::invalid("dimension must be positive"));
        }
        if self.gamma.len() != d || self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(LevyError::invalid(
                "gamma must be a finite vector of length d",
            ));
        }
        if self.a.len() != d
            || self
                .a
                .iter()
                .any(|r| r.len() != d || r.iter().any(|v| !v.is_finite()))
        {
            return Err(LevyError::invalid("A must be a finite d×d matrix"));
        }
        let scale = self.a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (self.a[i][j] - self.a[j][i]).abs() > 1e-12 * scale {
                    return Err(LevyError::invalid("A must be symmetric"));
                }
            }
        }
        if !is_psd(&self.a, 1e-12) {
            return Err(LevyError::invalid("A must be nonnegative definite"));
        }
        if let Some(l) = &self.levy {
            l.validate()?;
            if l.dim() != d {
                return Err(LevyError::invalid(
                    "Lévy measure directions do not match the dimension",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Precompute per-direction constants for repeated evaluation.
    pub fn compile(&self) -> Result<CompiledTriplet> {
        let comps = match &self.levy {
            Some(l) => l
                .directions
                .iter()
                .map(|c| Ok((c.xi.clone(), c.weight, RadialEval::new(&c.radial)?)))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(CompiledTriplet {
            triplet: self.clone(),
            comps,
        })
    }

    pub fn cumulant(&self, z: &[f64]) -> Result<Complex64> {
        self.compile()?.eval(z)
    }

    pub fn log_moment_order(&self) -> u32 {
        self.levy
            .as_ref()
            .map_or(u32::MAX, |l| l.log_moment_order())
    }
}

/// Free-function form of [`LevyTriplet::cumulant`].
pub fn cumulant_eval(triplet: &LevyTriplet, z: &[f64]) -> Result<Complex64> {
    triplet.cumulant(z)
}

/// Something with a cumulant function `z ↦ C(z)`.
pub trait Cumulant: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Result<Complex64>;
    /// Largest `m` for which the law is known to lie in `I_log^m`
    /// (`u32::MAX` when every order is finite).
    fn log_moment_order(&self) -> u32;
}

/// A triplet with its radial constants precomputed.
#[derive(Debug, Clone)]
pub struct CompiledTriplet {
    triplet: LevyTriplet,
    comps: Vec<(Direction, f64, RadialEval)>,
}

impl CompiledTriplet {
    pub fn triplet(&self) -> &LevyTriplet {
        &self.triplet
    }
}

impl Cumulant for CompiledTriplet {
    fn dimension(&self) -> usize {
        self.triplet.dimension
    }

    fn eval(&self, z: &[f64]) -> Result<Complex64> {
        if z.len() != self.triplet.dimension || z.iter().any(|v| !v.is_finite()) {
            return Err(LevyError::invalid("z must be a finite vector of length d"));
        }
        if z.iter().all(|v| *v == 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let drift: f64 = self.triplet.gamma.iter().zip(z).map(|(g, v)| g * v).sum();
        let mut acc = Complex64::new(-0.5 * quad_form(&self.triplet.a, z), drift);
        for (xi, weight, radial) in &self.comps {
            acc += radial.cumulant(xi.dot(z))? * *weight;
        }
        Ok(acc)
    }

    fn log_moment_order(&self) -> u32 {
        self.triplet.log_moment_order()
    }
}

impl Cumulant for LevyTriplet {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn eval(&self, z: &[f64]) -> Result<Complex64> {
        self.cumulant(z)
    }

    fn log_moment_order(&self) -> u32 {
        LevyTriplet::log_moment_order(self)
    }
}

/// Strictly or non-strictly α-stable law on finitely many directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    pub alpha: f64,
    pub spherical: Vec<(Direction, f64)>,
    pub tau: Vec<f64>,
    pub scale: f64,
}

impl StableLaw {
    pub fn new(
        alpha: f64,
        spherical: Vec<(Direction, f64)>,
        tau: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(LevyError::invalid(format!(
                "stable alpha must lie in (0,2], got {alpha}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LevyError::invalid("stable scale must be positive"));
        }
        if spherical.iter().any(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(LevyError::invalid("spherical weights must be positive"));
        }
        if alpha < 2.0 && spherical.is_empty() {
            return Err(LevyError::invalid(
                "non-Gaussian stable law needs at least one direction",
            ));
        }
        Ok(StableLaw {
            alpha,
            spherical,
            tau,
            scale,
        })
    }

    /// Symmetric one-dimensional law with unit weights at `±1`.
    pub fn symmetric_1d(alpha: f64, scale: f64) -> Result<Self> {
        StableLaw::new(
            alpha,
            vec![(Direction(vec![1.0]), 1.0), (Direction(vec![-1.0]), 1.0)],
            vec![0.0],
            scale,
        )
    }
}
