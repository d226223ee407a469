//! Finite-difference tests for monotonicity and complete monotonicity, class
//! membership in U, B, L, T, G, and the nested level of a distribution.

use serde::Serialize;

use crate::error::{LevyError, Result};
use crate::grid::default_grid;
use crate::kernel::MappingKernel;
use crate::measure::{h_function, LevyTriplet, PolarLevyMeasure, RadialMeasure};
use crate::quad::Quad;
use crate::transform::mapped_density;

/// Default highest derivative order for complete-monotonicity tests.
pub const DEFAULT_CM_ORDER: usize = 6;
/// Default normalized tolerance for complete-monotonicity tests.
pub const DEFAULT_CM_TOL: f64 = 1e-6;
/// Default relative tolerance for plain monotonicity. Equal to the CM
/// tolerance so that order 1 of a CM test and the plain test agree.
pub const DEFAULT_DECREASING_TOL: f64 = DEFAULT_CM_TOL;

/// Outcome of a single numerical test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Indeterminate,
    Fail,
}

impl Status {
    fn from_violation(worst: f64, tol: f64) -> Status {
        if worst <= tol {
            Status::Pass
        } else if worst <= 10.0 * tol {
            Status::Indeterminate
        } else {
            Status::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Indeterminate => "indeterminate",
            Status::Fail => "fail",
        }
    }
}

/// Sign test of one derivative order. `worst` is the largest normalized
/// violation (`≤ 0` means no violation at all), `at` its location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderResult {
    pub order: usize,
    pub status: Status,
    pub worst: f64,
    pub at: f64,
}

/// Orders `0..=max_order` of `(−1)^j f^{(j)} ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub max_order: usize,
    pub tolerance: f64,
    pub status: Status,
    pub orders: Vec<OrderResult>,
}

impl MonotonicityReport {
    /// True when every order `≤ m` passes.
    pub fn passes_through(&self, m: usize) -> bool {
        self.orders
            .iter()
            .filter(|o| o.order <= m)
            .all(|o| o.status == Status::Pass)
    }

    /// Lowest order that fails outright.
    pub fn first_failure(&self) -> Option<usize> {
        self.orders
            .iter()
            .find(|o| o.status == Status::Fail)
            .map(|o| o.order)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,status,worst_violation,at\n");
        for o in &self.orders {
            s.push_str(&format!(
                "{},{},{:e},{:e}\n",
                o.order,
                o.status.as_str(),
                o.worst,
                o.at
            ));
        }
        s
    }
}

fn check_inputs(x: &[f64], values: &[f64], min_len: usize) -> Result<()> {
    if x.len() != values.len() {
        return Err(LevyError::invalid("grid and values differ in length"));
    }
    if x.len() < min_len {
        return Err(LevyError::invalid(format!(
            "need at least {min_len} grid points"
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LevyError::invalid("grid must be strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LevyError::invalid("values must be finite"));
    }
    Ok(())
}

/// Non-increase test: the relative increase between neighbours must stay
/// below `tol`.
pub fn check_decreasing(x: &[f64], values: &[f64], tol: f64) -> Result<OrderResult> {
    check_inputs(x, values, 3)?;
    let mut worst = f64::NEG_INFINITY;
    let mut at = x[0];
    for i in 0..x.len() - 1 {
        let scale = values[i].abs().max(values[i + 1].abs());
        if scale == 0.0 {
            continue;
        }
        let v = (values[i + 1] - values[i]) / scale;
        if v > worst {
            worst = v;
            at = x[i];
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(OrderResult {
        order: 1,
        status: Status::from_violation(worst, tol),
        worst,
        at,
    })
}

// Grid spacing in the natural scale: logarithmic for positive grids.
fn spacing(x: &[f64], i: usize) -> f64 {
    if x[0] > 0.0 {
        (x[i + 1] / x[i]).ln()
    } else {
        x[i + 1] - x[i]
    }
}

// Drop nodes that nearly coincide with their predecessor; jump pairs would
// otherwise amplify rounding in high-order differences.
fn thin(x: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut gaps: Vec<f64> = (0..x.len() - 1).map(|i| spacing(x, i)).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let h = gaps[gaps.len() / 2];
    let mut xs = vec![x[0]];
    let mut vs = vec![values[0]];
    for i in 1..x.len() {
        let last = *xs.last().unwrap();
        let d = if x[0] > 0.0 {
            (x[i] / last).ln()
        } else {
            x[i] - last
        };
        if d >= 0.01 * h {
            xs.push(x[i]);
            vs.push(values[i]);
        }
    }
    (xs, vs, h)
}

fn divided_difference(x: &[f64], f: &[f64]) -> f64 {
    let mut d = f.to_vec();
    let n = d.len();
    for level in 1..n {
        for i in 0..n - level {
            d[i] = (d[i + 1] - d[i]) / (x[i + level] - x[i]);
        }
    }
    d[0]
}

/// Complete-monotonicity test up to order `max_order` by divided differences.
///
/// For order `j` the stencil uses every `s`-th node with `s` chosen so the
/// stencil is not shorter than `10^{-5/j}` in grid units. The normalized
/// violation is `−(−1)^j Δ^j f / max|f|` over the stencil.
pub fn check_completely_monotone(
    x: &[f64],
    values: &[f64],
    max_order: usize,
    tol: f64,
) -> Result<MonotonicityReport> {
    check_inputs(x, values, max_order + 2)?;
    let (xs, vs, h) = thin(x, values);
    let n = xs.len();
    let mut orders = Vec::with_capacity(max_order + 1);
    for j in 0..=max_order {
        let stride = if j == 0 {
            1
        } else {
            ((10f64.powf(-5.0 / j as f64) / h).ceil() as usize).max(1)
        };
        let width = j * stride;
        let mut worst = f64::NEG_INFINITY;
        let mut at = xs[0];
        if width < n {
            let fact: f64 = (1..=j).map(|k| k as f64).product();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut sx = vec![0.0; j + 1];
            let mut sf = vec![0.0; j + 1];
            for i in 0..n - width {
                let mut scale = 0.0f64;
                for k in 0..=j {
                    sx[k] = xs[i + k * stride];
                    sf[k] = vs[i + k * stride];
                    scale = scale.max(sf[k].abs());
                }
                if scale < 1e-250 {
                    continue;
                }
                let step = (sx[j] - sx[0]) / j.max(1) as f64;
                let dd = if j == 0 {
                    sf[0]
                } else {
                    divided_difference(&sx, &sf) * fact * step.powi(j as i32)
                };
                let v = -sign * dd / scale;
                if v > worst {
                    worst = v;
                    at = sx[0];
                }
            }
        }
        if worst == f64::NEG_INFINITY {
            worst = 0.0;
        }
        orders.push(OrderResult {
            order: j,
            status: Status::from_violation(worst, tol),
            worst,
            at,
        });
    }
    let status = orders
        .iter()
        .map(|o| o.status)
        .max()
        .unwrap_or(Status::Pass);
    Ok(MonotonicityReport {
        max_order,
        tolerance: tol,
        status,
        orders,
    })
}

/// The classes tested by [`classify_distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Class {
    U,
    B,
    L,
    T,
    G,
}

impl Class {
    pub const ALL: [Class; 5] = [Class::U, Class::B, Class::L, Class::T, Class::G];

    pub fn criterion(&self) -> &'static str {
        match self {
            Class::U => "l(r) non-increasing",
            Class::B => "l(r) completely monotone",
            Class::L => "r l(r) non-increasing",
            Class::T => "r l(r) completely monotone",
            Class::G => "l(sqrt(u)) completely monotone in u",
        }
    }

    // Direct superclasses.
    fn supersets(&self) -> &'static [Class] {
        match self {
            Class::U => &[],
            Class::G => &[Class::U],
            Class::B => &[Class::U, Class::G],
            Class::L => &[Class::U],
            Class::T => &[Class::B, Class::L],
        }
    }
}

/// Verdict for one class. `raw_status` is the outcome of the direct test,
/// `status` the outcome after the inclusions between classes are enforced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassResult {
    pub class: Class,
    pub status: Status,
    pub raw_status: Status,
    pub worst_violation: f64,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassVerdict {
    pub classes: Vec<ClassResult>,
}

impl ClassVerdict {
    pub fn get(&self, c: Class) -> &ClassResult {
        self.classes
            .iter()
            .find(|r| r.class == c)
            .expect("every class is present")
    }

    pub fn status(&self, c: Class) -> Status {
        self.get(c).status
    }

    /// Inclusions violated by the raw verdicts (a subclass passing while a
    /// superclass fails).
    pub fn raw_inclusion_violations(&self) -> Vec<(Class, Class)> {
        let mut out = Vec::new();
        for r in &self.classes {
            for &sup in r.class.supersets() {
                if r.raw_status == Status::Pass && self.get(sup).raw_status == Status::Fail {
                    out.push((r.class, sup));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,status,raw_status,worst_violation,evidence\n");
        for r in &self.classes {
            s.push_str(&format!(
                "{:?},{},{},{:e},\"{}\"\n",
                r.class,
                r.status.as_str(),
                r.raw_status.as_str(),
                r.worst_violation,
                r.evidence
            ));
        }
        s
    }
}

/// Options for [`classify_distribution`] and [`nested_level`].
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub cm_order: usize,
    pub cm_tol: f64,
    pub decreasing_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            cm_order: DEFAULT_CM_ORDER,
            cm_tol: DEFAULT_CM_TOL,
            decreasing_tol: DEFAULT_DECREASING_TOL,
        }
    }
}

fn grid_nodes(rm: &RadialMeasure, out: &mut Vec<f64>) {
    match rm {
        RadialMeasure::Grid(g) => out.extend_from_slice(g.radii()),
        RadialMeasure::Sum { parts } => parts.iter().for_each(|p| grid_nodes(p, out)),
        _ => {}
    }
}

/// Density samples used for class tests: the nodes of grid components, or the
/// default log grid, restricted to the support.
pub fn radial_samples(rm: &RadialMeasure) -> Option<(Vec<f64>, Vec<f64>)> {
    if !rm.has_density() {
        return None;
    }
    let mut nodes = Vec::new();
    grid_nodes(rm, &mut nodes);
    if nodes.is_empty() {
        nodes = default_grid();
    }
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup();
    let (lo, hi) = rm.support();
    let r: Vec<f64> = nodes
        .into_iter()
        .filter(|&r| r >= lo && r <= hi && r > 0.0)
        .collect();
    let l: Vec<f64> = r.iter().map(|&x| rm.density(x).unwrap_or(0.0)).collect();
    Some((r, l))
}

struct Raw {
    status: Status,
    worst: f64,
    evidence: String,
}

fn radial_class(c: Class, r: &[f64], l: &[f64], opts: &ClassifyOptions) -> Result<Raw> {
    let rl: Vec<f64> = r.iter().zip(l).map(|(a, b)| a * b).collect();
    let report = |o: &OrderResult, what: &str| Raw {
        status: o.status,
        worst: o.worst,
        evidence: format!(
            "{what}: worst violation {:.3e} at order {} near {:.4e}",
            o.worst, o.order, o.at
        ),
    };
    let cm = |x: &[f64], v: &[f64], what: &str| -> Result<Raw> {
        let rep = check_completely_monotone(x, v, opts.cm_order, opts.cm_tol)?;
        let worst = rep
            .orders
            .iter()
            .max_by(|a, b| a.status.cmp(&b.status).then(a.worst.total_cmp(&b.worst)))
            .unwrap();
        Ok(report(worst, what))
    };
    match c {
        Class::U => Ok(report(&check_decreasing(r, l, opts.decreasing_tol)?, "l")),
        Class::L => Ok(report(
            &check_decreasing(r, &rl, opts.decreasing_tol)?,
            "r l",
        )),
        Class::B => cm(r, l, "l"),
        Class::T => cm(r, &rl, "r l"),
        Class::G => {
            let u: Vec<f64> = r.iter().map(|x| x * x).collect();
            cm(&u, l, "l(sqrt u)")
        }
    }
}

/// Test a Lévy measure against the criteria of every class. Every direction
/// has to satisfy a criterion; radial parts with atoms satisfy none.
pub fn classify_measure(
    nu: Option<&PolarLevyMeasure>,
    opts: &ClassifyOptions,
) -> Result<ClassVerdict> {
    let mut raw: Vec<Raw> = Class::ALL
        .iter()
        .map(|_| Raw {
            status: Status::Pass,
            worst: 0.0,
            evidence: "no Lévy measure".into(),
        })
        .collect();
    if let Some(nu) = nu {
        for r in raw.iter_mut() {
            r.evidence = String::new();
            r.worst = f64::NEG_INFINITY;
        }
        for (d, comp) in nu.directions.iter().enumerate() {
            let Some((r, l)) = radial_samples(&comp.radial) else {
                for x in raw.iter_mut() {
                    x.status = Status::Fail;
                    x.worst = f64::INFINITY;
                    x.evidence = format!("direction {d}: radial part has atoms");
                }
                break;
            };
            if r.len() < opts.cm_order + 2 {
                return Err(LevyError::invalid(format!(
                    "direction {d}: too few density samples"
                )));
            }
            for (i, &c) in Class::ALL.iter().enumerate() {
                let got = radial_class(c, &r, &l, opts)?;
                let cur = &mut raw[i];
                if got.status > cur.status || (got.status == cur.status && got.worst > cur.worst) {
                    cur.status = cur.status.max(got.status);
                    cur.worst = got.worst;
                    cur.evidence = format!("direction {d}: {}", got.evidence);
                }
            }
        }
    }
    let mut classes: Vec<ClassResult> = Class::ALL
        .iter()
        .zip(raw)
        .map(|(&class, r)| ClassResult {
            class,
            status: r.status,
            raw_status: r.status,
            worst_violation: r.worst,
            evidence: r.evidence,
        })
        .collect();
    // ALL is ordered so that supersets come before subsets except G before B.
    for c in [Class::U, Class::G, Class::B, Class::L, Class::T] {
        let i = Class::ALL.iter().position(|&x| x == c).unwrap();
        for &sup in c.supersets() {
            let j = Class::ALL.iter().position(|&x| x == sup).unwrap();
            let sup_status = classes[j].status;
            if sup_status > classes[i].status {
                classes[i].status = sup_status;
                classes[i].evidence = format!(
                    "{}; implied by {:?} ({})",
                    classes[i].evidence,
                    sup,
                    sup_status.as_str()
                );
            }
        }
    }
    Ok(ClassVerdict { classes })
}

/// [`classify_measure`] applied to a triplet's Lévy measure.
pub fn classify_distribution(tr: &LevyTriplet, opts: &ClassifyOptions) -> Result<ClassVerdict> {
    classify_measure(tr.levy.as_ref(), opts)
}

/// Points of `u = ln r` at which `h` is sampled.
pub const H_GRID_POINTS: usize = 1024;
pub const H_GRID_HALF_WIDTH: f64 = 14.0;

/// `u`-grid for `h`. Grid-based radial parts are cut half a unit inside
/// their node range so the artificial ends do not register as kinks.
pub fn h_grid(rm: &RadialMeasure) -> Vec<f64> {
    let (mut lo, mut hi) = (-H_GRID_HALF_WIDTH, H_GRID_HALF_WIDTH);
    let mut nodes = Vec::new();
    grid_nodes(rm, &mut nodes);
    if !nodes.is_empty() {
        let a = nodes.iter().copied().fold(f64::INFINITY, f64::min);
        let b = nodes.iter().copied().fold(0.0, f64::max);
        lo = lo.max(a.ln() + 0.5);
        hi = hi.min(b.ln() - 0.5);
    }
    let n = H_GRID_POINTS;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Nested-level estimate for a Lévy measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedLevel {
    /// Largest `m ≤ max_m` with `h` passing orders up to `m + 1` in every
    /// direction; `None` if not even `m = 0` is supported.
    pub level: Option<u32>,
    pub max_m: u32,
    pub reports: Vec<MonotonicityReport>,
}

/// Estimate the nested level from complete-monotonicity of `h` up to order
/// `max_m + 1`.
pub fn nested_level(nu: Option<&PolarLevyMeasure>, max_m: u32, tol: f64) -> Result<NestedLevel> {
    let Some(nu) = nu else {
        return Ok(NestedLevel {
            level: Some(max_m),
            max_m,
            reports: Vec::new(),
        });
    };
    let mut reports = Vec::with_capacity(nu.directions.len());
    for c in &nu.directions {
        let u = h_grid(&c.radial);
        if u[u.len() - 1] <= u[0] {
            return Err(LevyError::invalid("radial grid too narrow for the h test"));
        }
        let h: Vec<f64> = u.iter().map(|&x| h_function(&c.radial, x)).collect();
        reports.push(check_completely_monotone(&u, &h, max_m as usize + 1, tol)?);
    }
    let level = (0..=max_m)
        .rev()
        .find(|&m| reports.iter().all(|r| r.passes_through(m as usize + 1)));
    Ok(NestedLevel {
        level,
        max_m,
        reports,
    })
}

/// True when `m` applications of `kernel` are defined for `nu`.
pub fn check_domain(kernel: &MappingKernel, nu: Option<&PolarLevyMeasure>, m: u32) -> bool {
    let need = kernel.log_moment_cost().saturating_mul(m);
    match nu {
        None => true,
        Some(_) if need == 0 => true,
        Some(nu) => nu.log_moment(need).is_finite(),
    }
}

/// Both sides of `∫_{|x|>1} (log|x|)^m ν_Φ(dx) = (m+1)^{-1} ∫_{|x|>1} (log|x|)^{m+1} ν(dx)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogMomentIdentity {
    pub m: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const LOG_MOMENT_TOL: f64 = 1e-6;

/// Check the log-moment identity for the Φ-mapping. The left side is
/// integrated from the pointwise mapped density.
pub fn verify_log_moment_identity(nu: &PolarLevyMeasure, m: u32) -> Result<LogMomentIdentity> {
    let full = nu.log_moment(m + 1);
    if !full.is_finite() {
        return Err(LevyError::Domain {
            stage: "log-moment identity".into(),
            order: m + 1,
        });
    }
    let phi = MappingKernel::from_name("phi")?;
    let q = Quad::default();
    let mut lhs = 0.0;
    for c in &nu.directions {
        let mut pts = vec![0.0];
        pts.extend(
            c.radial
                .atom_radii()
                .iter()
                .map(|r| r.ln())
                .filter(|&x| x > 0.0),
        );
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let mut err = None;
        let mut f = |x: f64| {
            let u = x.exp();
            if !u.is_finite() {
                return 0.0;
            }
            match mapped_density(&phi, &c.radial, u) {
                Ok(l) => x.powi(m as i32) * l * u,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        };
        let mut total = 0.0;
        if pts.len() > 1 {
            total += q.integrate_pts(&mut f, &pts)?.value;
        }
        let last = *pts.last().unwrap();
        total += q.integrate_to_inf(&mut f, last, 1.0)?.value;
        if let Some(e) = err {
            return Err(e);
        }
        lhs += c.weight * total;
    }
    let rhs = full / (m as f64 + 1.0);
    let deviation = (lhs - rhs).abs() / rhs.abs().max(1.0);
    Ok(LogMomentIdentity {
        m,
        lhs,
        rhs,
        deviation,
        tolerance: LOG_MOMENT_TOL,
        passed: deviation <= LOG_MOMENT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn decreasing_detects_bump() {
        let x = linspace(0.01, 5.0, 400);
        let up: Vec<f64> = x.iter().map(|u| u * (-u).exp()).collect();
        assert_eq!(
            check_decreasing(&x, &up, 1e-8).unwrap().status,
            Status::Fail
        );
        let down: Vec<f64> = x.iter().map(|u| (-u).exp()).collect();
        assert_eq!(
            check_decreasing(&x, &down, 1e-8).unwrap().status,
            Status::Pass
        );
        assert!(check_decreasing(&x[..2], &down[..2], 1e-8).is_err());
    }

    #[test]
    fn cm_exponential_and_power() {
        let x = crate::grid::log_grid(1e-3, 1e3, 1024);
        let f: Vec<f64> = x.iter().map(|r| r.powf(-0.5)).collect();
        let rep = check_completely_monotone(&x, &f, 6, 1e-6).unwrap();
        assert_eq!(rep.status, Status::Pass, "{rep:?}");
        let g: Vec<f64> = x.iter().map(|r| (-r).exp()).collect();
        assert_eq!(
            check_completely_monotone(&x, &g, 6, 1e-6).unwrap().status,
            Status::Pass
        );
    }

    #[test]
    fn cm_rejects_oscillation_and_jump() {
        let x = crate::grid::log_grid(1e-3, 50.0, 1024);
        let f: Vec<f64> = x
            .iter()
            .map(|r| (-r).exp() * (1.0 + 0.5 * (10.0 * r).sin()))
            .collect();
        assert_eq!(
            check_completely_monotone(&x, &f, 6, 1e-6).unwrap().status,
            Status::Fail
        );
        let s: Vec<f64> = x.iter().map(|&r| if r < 1.0 { 1.0 } else { 0.0 }).collect();
        let rep = check_completely_monotone(&x, &s, 6, 1e-6).unwrap();
        assert_eq!(rep.first_failure(), Some(2));
    }
}
