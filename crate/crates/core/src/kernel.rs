//! Mapping kernels `(p, t₀, g, s₀, f)`.
//!
//! A kernel acts on cumulants through `C ↦ ∫_0^{s₀} C(f(s)z) ds`, which after
//! `t = f(s)` is `∫_0^{t₀} C(tz) p(t) dt`. All transforms use the second form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_ur;

use crate::error::{LevyError, Result};
use crate::expr::Expr;
use crate::quad::{Quad, QuadValue};
use crate::special::{erfc, erfc_inv, exp_integral_e1, gamma};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Named built-in kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    U,
    Upsilon,
    G,
    Phi,
    Psi,
    PsiAlpha(f64),
    PhiBetaAlpha(f64, f64),
}

impl Builtin {
    /// Parse names such as `upsilon`, `Psi_alpha(-0.5)` or `phi_beta_alpha(-2,-1)`.
    pub fn parse(name: &str) -> Result<Self> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        let lower = compact.to_ascii_lowercase();
        let (head, args) = match lower.find('(') {
            Some(i) if lower.ends_with(')') => {
                let inner = &lower[i + 1..lower.len() - 1];
                let args = inner
                    .split(',')
                    .map(|a| {
                        a.parse::<f64>().map_err(|_| {
                            LevyError::Parse(format!("bad kernel parameter '{a}' in '{name}'"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (&lower[..i], args)
            }
            Some(_) => {
                return Err(LevyError::Parse(format!(
                    "unbalanced parentheses in kernel '{name}'"
                )))
            }
            None => (lower.as_str(), Vec::new()),
        };
        Builtin::from_parts(head, &args, name)
    }

    fn from_parts(head: &str, args: &[f64], name: &str) -> Result<Self> {
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(LevyError::Parse(format!(
                    "kernel '{name}' takes {n} parameter(s)"
                )))
            }
        };
        match head {
            "u" | "jurek" => want(0).map(|_| Builtin::U),
            "upsilon" => want(0).map(|_| Builtin::Upsilon),
            "g" => want(0).map(|_| Builtin::G),
            "phi" => want(0).map(|_| Builtin::Phi),
            "psi" => want(0).map(|_| Builtin::Psi),
            "psi_alpha" => want(1).map(|_| Builtin::PsiAlpha(args[0])),
            "phi_beta_alpha" => want(2).map(|_| Builtin::PhiBetaAlpha(args[0], args[1])),
            _ => Err(LevyError::Parse(format!("unknown kernel '{name}'"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Builtin::U => "U".into(),
            Builtin::Upsilon => "Upsilon".into(),
            Builtin::G => "G".into(),
            Builtin::Phi => "Phi".into(),
            Builtin::Psi => "Psi".into(),
            Builtin::PsiAlpha(a) => format!("Psi_alpha({a})"),
            Builtin::PhiBetaAlpha(b, a) => format!("Phi_beta_alpha({b},{a})"),
        }
    }
}

fn ser_t0<S: Serializer>(t0: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if t0.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*t0)
    }
}

fn de_t0<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    match &v {
        serde_json::Value::Null => Ok(f64::INFINITY),
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| serde::de::Error::custom("t0 is not a number")),
        serde_json::Value::String(s)
            if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") =>
        {
            Ok(f64::INFINITY)
        }
        _ => Err(serde::de::Error::custom(format!(
            "t0 must be a number, null or \"inf\", got {v}"
        ))),
    }
}

fn infinity() -> f64 {
    f64::INFINITY
}

/// JSON description of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Named {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    Custom {
        p: Expr,
        #[serde(
            default = "infinity",
            serialize_with = "ser_t0",
            deserialize_with = "de_t0"
        )]
        t0: f64,
    },
    Composite {
        compose: Vec<KernelSpec>,
    },
}

impl KernelSpec {
    pub fn named(name: &str) -> Self {
        KernelSpec::Named {
            name: name.to_string(),
            alpha: None,
            beta: None,
        }
    }

    pub fn build(&self) -> Result<MappingKernel> {
        match self {
            KernelSpec::Named { name, alpha, beta } => {
                let b = match (alpha, beta) {
                    (None, None) => Builtin::parse(name)?,
                    _ => {
                        let mut args = Vec::new();
                        args.extend(*beta);
                        args.extend(*alpha);
                        let head = name.to_ascii_lowercase();
                        Builtin::from_parts(head.trim(), &args, name)?
                    }
                };
                MappingKernel::builtin(b)
            }
            KernelSpec::Custom { p, t0 } => {
                let e = p.clone();
                let mut k = kernel_from_p(move |u| e.eval(u), *t0)?;
                k.spec = self.clone();
                k.name = format!("p(u)={}", p.source());
                Ok(k)
            }
            KernelSpec::Composite { compose } => {
                MappingKernel::compose(compose.iter().map(|s| s.build()).collect::<Result<_>>()?)
            }
        }
    }
}

#[derive(Clone)]
struct Simple {
    p: RealFn,
    t0: f64,
    s0: f64,
    g: Option<RealFn>,
    f: Option<RealFn>,
}

#[derive(Clone)]
enum Body {
    Simple(Arc<Simple>),
    // factors in application order
    Composite(Vec<MappingKernel>),
}

/// A mapping `Φ_f`.
#[derive(Clone)]
pub struct MappingKernel {
    name: String,
    spec: KernelSpec,
    body: Body,
}

impl fmt::Debug for MappingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MappingKernel")
            .field("name", &self.name)
            .field("t0", &self.t0())
            .field("s0", &self.s0())
            .finish()
    }
}

const SQRT_PI_2: f64 = 0.886_226_925_452_758;

fn simple(name: String, spec: KernelSpec, s: Simple) -> MappingKernel {
    MappingKernel {
        name,
        spec,
        body: Body::Simple(Arc::new(s)),
    }
}

/// `∫_0^{t₀} h(t) p(t) dt` for a kernel density `p`.
fn integrate_against<T: QuadValue>(
    p: &dyn Fn(f64) -> f64,
    t0: f64,
    mut h: impl FnMut(f64) -> T,
) -> Result<T> {
    let q = Quad::default();
    let mut f = |t: f64| {
        let w = p(t);
        if w == 0.0 {
            T::zero()
        } else {
            h(t) * w
        }
    };
    if t0.is_finite() {
        Ok(q.integrate_pts(&mut f, &[0.0, 0.5 * t0, t0])?.value)
    } else {
        let head = q.integrate_pts(&mut f, &[0.0, 0.5, 1.0])?.value;
        let tail = q.integrate_to_inf(&mut f, 1.0, 1.0)?.value;
        Ok(head + tail)
    }
}

/// Kernel from a positive decreasing `p` on `(0, t₀)`; `g` by quadrature and
/// `f` by bracketed bisection with a Newton polish.
pub fn kernel_from_p(
    p: impl Fn(f64) -> f64 + Send + Sync + 'static,
    t0: f64,
) -> Result<MappingKernel> {
    if !(t0 > 0.0) {
        return Err(LevyError::invalid("t0 must be positive"));
    }
    let samples: Vec<f64> = if t0.is_finite() {
        (0..256).map(|k| t0 * (k as f64 + 0.5) / 256.0).collect()
    } else {
        (0..256)
            .map(|k| (-12.0 + 16.0 * k as f64 / 255.0).exp())
            .collect()
    };
    let vals: Vec<f64> = samples.iter().map(|&t| p(t)).collect();
    if vals.iter().any(|v| v.is_nan() || *v < 0.0) || !(vals[0] > 0.0) {
        return Err(LevyError::invalid("kernel density p must be positive"));
    }
    if let Some(k) = (1..vals.len()).find(|&k| vals[k] > vals[k - 1] * (1.0 + 1e-12)) {
        return Err(LevyError::invalid(format!(
            "kernel density p is not decreasing near u = {:.4e}",
            samples[k]
        )));
    }
    if t0.is_infinite() {
        // t²p(t) integrable needs t³p(t) → 0
        let m3: Vec<f64> = [1e4, 1e5, 1e6].iter().map(|&t| t * t * t * p(t)).collect();
        if !(m3[2] < 1.0 && m3[2] <= m3[1] && m3[1] <= m3[0]) {
            return Err(LevyError::invalid(
                "∫(1+u²)p(u)du diverges: p decays too slowly",
            ));
        }
    }
    let p: RealFn = Arc::new(move |t| if t > 0.0 && t < t0 { p(t) } else { 0.0 });
    let moment = integrate_against(&*p, t0, |t| 1.0 + t * t).map_err(|_| {
        LevyError::invalid("∫(1+u²)p(u)du diverges: p does not define a kernel with s0 < ∞")
    })?;
    if !moment.is_finite() {
        return Err(LevyError::invalid("∫(1+u²)p(u)du is not finite"));
    }
    let s0 = integrate_against(&*p, t0, |_| 1.0)?;
    Ok(simple(
        "custom".into(),
        KernelSpec::Custom {
            p: Expr::parse("0").expect("literal"),
            t0,
        },
        Simple {
            p,
            t0,
            s0,
            g: None,
            f: None,
        },
    ))
}

impl MappingKernel {
    pub fn builtin(b: Builtin) -> Result<Self> {
        let spec = KernelSpec::named(&b.label());
        let name = b.label();
        let k = match b {
            Builtin::U => simple(
                name,
                spec,
                Simple {
                    p: Arc::new(|t| if t > 0.0 && t < 1.0 { 1.0 } else { 0.0 }),
                    t0: 1.0,
                    s0: 1.0,
                    g: Some(Arc::new(|t| (1.0 - t).clamp(0.0, 1.0))),
                    f: Some(Arc::new(|s| 1.0 - s)),
                },
            ),
            Builtin::Upsilon => simple(
                name,
                spec,
                Simple {
                    p: Arc::new(|t| if t > 0.0 { (-t).exp() } else { 0.0 }),
                    t0: f64::INFINITY,
                    s0: 1.0,
                    g: Some(Arc::new(|t| (-t.max(0.0)).exp())),
                    f: Some(Arc::new(|s| -s.ln())),
                },
            ),
            Builtin::G => simple(
                name,
                spec,
                Simple {
                    p: Arc::new(|t| if t > 0.0 { (-t * t).exp() } else { 0.0 }),
                    t0: f64::INFINITY,
                    s0: SQRT_PI_2,
                    g: Some(Arc::new(|t| SQRT_PI_2 * erfc(t.max(0.0)))),
                    f: Some(Arc::new(|s| erfc_inv(s / SQRT_PI_2))),
                },
            ),
            Builtin::Phi => simple(
                name,
                spec,
                Simple {
                    p: Arc::new(|t| if t > 0.0 && t < 1.0 { 1.0 / t } else { 0.0 }),
                    t0: 1.0,
                    s0: f64::INFINITY,
                    g: Some(Arc::new(|t| if t < 1.0 { -t.ln() } else { 0.0 })),
                    f: Some(Arc::new(|s| (-s).exp())),
                },
            ),
            Builtin::Psi => {
                let mut k = MappingKernel::compose(vec![
                    MappingKernel::builtin(Builtin::Phi)?,
                    MappingKernel::builtin(Builtin::Upsilon)?,
                ])?;
                k.name = name;
                k.spec = spec;
                k
            }
            Builtin::PsiAlpha(alpha) => {
                if !((-1.0..0.0).contains(&alpha)) {
                    return Err(LevyError::invalid(format!(
                        "Psi_alpha needs -1 ≤ α < 0, got {alpha}"
                    )));
                }
                let a = -alpha;
                let ga = gamma(a);
                simple(
                    name,
                    spec,
                    Simple {
                        p: Arc::new(move |t| {
                            if t > 0.0 {
                                t.powf(a - 1.0) * (-t).exp()
                            } else {
                                0.0
                            }
                        }),
                        t0: f64::INFINITY,
                        s0: ga,
                        g: Some(Arc::new(
                            move |t| if t > 0.0 { ga * gamma_ur(a, t) } else { ga },
                        )),
                        f: None,
                    },
                )
            }
            Builtin::PhiBetaAlpha(beta, alpha) => {
                if !((-1.0..0.0).contains(&alpha)) || !(beta <= alpha - 1.0) {
                    return Err(LevyError::invalid(format!(
                        "Phi_beta_alpha needs -1 ≤ α < 0 and β ≤ α-1, got β={beta}, α={alpha}"
                    )));
                }
                let (a, b) = (-alpha, alpha - beta);
                let norm = 1.0 / gamma(b);
                let s0 = gamma(a) / gamma(-beta);
                simple(
                    name,
                    spec,
                    Simple {
                        p: Arc::new(move |t| {
                            if t > 0.0 && t < 1.0 {
                                norm * (1.0 - t).powf(b - 1.0) * t.powf(a - 1.0)
                            } else {
                                0.0
                            }
                        }),
                        t0: 1.0,
                        s0,
                        // ∫_t^1 u^{a-1}(1-u)^{b-1}du = B(a,b)·I_{1-t}(b,a)
                        g: Some(Arc::new(move |t| {
                            s0 * beta_reg(b, a, (1.0 - t).clamp(0.0, 1.0))
                        })),
                        f: None,
                    },
                )
            }
        };
        Ok(k)
    }

    /// Kernel with `p(t) = e^{-t}/t` on `(0,∞)`, `g = E1` and `f = e*`. It
    /// realizes Ψ in one step and serves as an independent check of the
    /// composite form.
    pub fn psi_direct() -> MappingKernel {
        simple(
            "Psi(direct)".into(),
            KernelSpec::named("Psi"),
            Simple {
                p: Arc::new(|t| if t > 0.0 { (-t).exp() / t } else { 0.0 }),
                t0: f64::INFINITY,
                s0: f64::INFINITY,
                g: Some(Arc::new(exp_integral_e1)),
                f: Some(Arc::new(|s| e_star(s).unwrap_or(f64::NAN))),
            },
        )
    }

    /// Compose kernels, listed in the order they are applied.
    pub fn compose(factors: Vec<MappingKernel>) -> Result<Self> {
        if factors.is_empty() {
            return Err(LevyError::invalid("empty kernel composition"));
        }
        let mut flat = Vec::new();
        for k in factors {
            match k.body {
                Body::Composite(inner) => flat.extend(inner),
                Body::Simple(_) => flat.push(k),
            }
        }
        let name = flat
            .iter()
            .map(|k| k.name.clone())
            .collect::<Vec<_>>()
            .join("∘");
        let spec = KernelSpec::Composite {
            compose: flat.iter().map(|k| k.spec.clone()).collect(),
        };
        Ok(MappingKernel {
            name,
            spec,
            body: Body::Composite(flat),
        })
    }

    pub fn from_name(name: &str) -> Result<Self> {
        MappingKernel::builtin(Builtin::parse(name)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.body, Body::Composite(_))
    }

    /// Factors in application order (a single-element list for simple kernels).
    pub fn factors(&self) -> Vec<MappingKernel> {
        match &self.body {
            Body::Simple(_) => vec![self.clone()],
            Body::Composite(f) => f.clone(),
        }
    }

    fn simple_body(&self) -> Result<&Simple> {
        match &self.body {
            Body::Simple(s) => Ok(s),
            Body::Composite(_) => Err(LevyError::invalid(format!(
                "kernel {} is a composition; apply its factors in turn",
                self.name
            ))),
        }
    }

    /// `t₀` (for compositions the product of the factors' `t₀`).
    pub fn t0(&self) -> f64 {
        match &self.body {
            Body::Simple(s) => s.t0,
            Body::Composite(f) => f.iter().map(|k| k.t0()).product(),
        }
    }

    /// `s₀ = g(0+)`; `∞` marks kernels needing log-moments.
    pub fn s0(&self) -> f64 {
        match &self.body {
            Body::Simple(s) => s.s0,
            Body::Composite(f) => {
                if f.iter().any(|k| k.s0().is_infinite()) {
                    f64::INFINITY
                } else {
                    f.iter().map(|k| k.s0()).product()
                }
            }
        }
    }

    /// Number of factors with `s₀ = ∞`; each consumes one log-moment order.
    pub fn log_moment_cost(&self) -> u32 {
        self.factors()
            .iter()
            .filter(|k| k.s0().is_infinite())
            .count() as u32
    }

    pub fn requires_log_moment(&self) -> bool {
        self.log_moment_cost() > 0
    }

    /// `p(t)`, zero outside `(0, t₀)`.
    pub fn p(&self, t: f64) -> Result<f64> {
        Ok((self.simple_body()?.p)(t))
    }

    /// `g(t) = ∫_t^{t₀} p(u) du`.
    pub fn g(&self, t: f64) -> Result<f64> {
        let s = self.simple_body()?;
        if t >= s.t0 {
            return Ok(0.0);
        }
        if t <= 0.0 {
            return Ok(s.s0);
        }
        if let Some(g) = &s.g {
            return Ok(g(t));
        }
        let q = Quad::default();
        let p = &s.p;
        if s.t0.is_finite() {
            Ok(q.integrate(|u: f64| p(u), t, s.t0)?.value)
        } else {
            Ok(q.integrate_to_inf(|u: f64| p(u), t, 1.0f64.max(t))?.value)
        }
    }

    /// `f(s)`, the inverse of `g`, for `0 < s < s₀`.
    pub fn f_eval(&self, s: f64) -> Result<f64> {
        let body = self.simple_body()?;
        if !(s > 0.0 && s < body.s0) {
            return Err(LevyError::invalid(format!(
                "f is defined on (0, {}), got s = {s}",
                body.s0
            )));
        }
        if let Some(f) = &body.f {
            return Ok(f(s));
        }
        self.invert_g(s)
    }

    fn invert_g(&self, s: f64) -> Result<f64> {
        let body = self.simple_body()?;
        let mut lo = 0.0;
        let mut hi = if body.t0.is_finite() { body.t0 } else { 1.0 };
        if body.t0.is_infinite() {
            while self.g(hi)? > s {
                lo = hi;
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(LevyError::invalid("could not bracket f(s)"));
                }
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let gm = self.g(mid)?;
            if (gm - s).abs() <= 1e-13 * s.clamp(1e-300, 1.0) || hi - lo <= 4.0 * f64::EPSILON * mid
            {
                lo = mid;
                hi = mid;
                break;
            }
            if gm > s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = 0.5 * (lo + hi);
        // g' = −p
        let pt = (body.p)(t);
        if pt > 0.0 && pt.is_finite() {
            let step = (self.g(t)? - s) / pt;
            let cand = t + step;
            if cand > 0.0 && cand < body.t0 && (self.g(cand)? - s).abs() <= (self.g(t)? - s).abs() {
                t = cand;
            }
        }
        Ok(t)
    }

    /// `∫_0^{t₀} h(t) p(t) dt` for a simple kernel.
    pub fn integrate_t<T: QuadValue>(&self, h: impl FnMut(f64) -> T) -> Result<T> {
        let body = self.simple_body()?;
        integrate_against(&*body.p, body.t0, h)
    }

    /// `∫_0^{s₀} f(s)^k ds = ∫_0^{t₀} t^k p(t) dt`; compositions multiply.
    pub fn moment(&self, k: f64) -> Result<f64> {
        match &self.body {
            Body::Simple(_) => self.integrate_t(|t| t.powf(k)),
            Body::Composite(f) => f.iter().map(|x| x.moment(k)).product(),
        }
    }
}

/// `e(t) = ∫_t^∞ e^{-u}u^{-1} du`.
pub fn e_fn(t: f64) -> f64 {
    exp_integral_e1(t)
}

/// Inverse of [`e_fn`] on `(0, ∞)`.
pub fn e_star(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(LevyError::invalid("e* is defined for 0 < s < ∞"));
    }
    // e is decreasing from ∞ to 0
    let (mut lo, mut hi) = (0.0, 1.0);
    while e_fn(hi) > s {
        lo = hi;
        hi *= 2.0;
    }
    while e_fn(lo.max(1e-300)) < s && lo > 0.0 {
        lo *= 0.5;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        t = 0.5 * (lo + hi);
        if hi - lo <= 2.0 * f64::EPSILON * t {
            break;
        }
        if e_fn(t) > s {
            lo = t;
        } else {
            hi = t;
        }
    }
    let step = (e_fn(t) - s) * t * t.exp();
    if (t + step) > 0.0 && (e_fn(t + step) - s).abs() <= (e_fn(t) - s).abs() {
        t += step;
    }
    Ok(t)
}
