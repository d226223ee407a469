//! Mappings acting on cumulants, triplets and radial measures.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LevyError, Result};
use crate::grid::default_grid;
use crate::kernel::MappingKernel;
use crate::measure::{Cumulant, LevyTriplet, PolarComponent, PolarLevyMeasure, RadialMeasure};

type EvalFn = Arc<dyn Fn(&[f64]) -> Result<Complex64> + Send + Sync>;

/// Cumulant function with the log-moment order known to be available.
#[derive(Clone)]
pub struct CumulantFn {
    eval: EvalFn,
    dimension: usize,
    domain_order: u32,
    provenance: Vec<String>,
}

impl std::fmt::Debug for CumulantFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CumulantFn")
            .field("dimension", &self.dimension)
            .field("domain_order", &self.domain_order)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl CumulantFn {
    pub fn new(
        dimension: usize,
        domain_order: u32,
        label: &str,
        eval: impl Fn(&[f64]) -> Result<Complex64> + Send + Sync + 'static,
    ) -> Self {
        CumulantFn {
            eval: Arc::new(eval),
            dimension,
            domain_order,
            provenance: vec![label.to_string()],
        }
    }

    pub fn from_triplet(tr: &LevyTriplet) -> Result<Self> {
        let compiled = tr.compile()?;
        Ok(CumulantFn {
            dimension: tr.dimension,
            domain_order: tr.log_moment_order(),
            provenance: vec!["triplet".into()],
            eval: Arc::new(move |z| compiled.eval(z)),
        })
    }

    /// Available log-moment order (`u32::MAX` when unbounded).
    pub fn domain_order(&self) -> u32 {
        self.domain_order
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }
}

impl Cumulant for CumulantFn {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn eval(&self, z: &[f64]) -> Result<Complex64> {
        if z.len() != self.dimension {
            return Err(LevyError::invalid("z has the wrong dimension"));
        }
        if z.iter().all(|v| *v == 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        (self.eval)(z)
    }

    fn log_moment_order(&self) -> u32 {
        self.domain_order
    }
}

fn apply_factor(k: &MappingKernel, base: CumulantFn) -> Result<CumulantFn> {
    let mut order = base.domain_order;
    if k.s0().is_infinite() {
        if order == 0 {
            return Err(LevyError::Domain {
                stage: format!("{} applied to {}", k.name(), base.provenance.join(" → ")),
                order: 1,
            });
        }
        if order != u32::MAX {
            order -= 1;
        }
    }
    let mut provenance = base.provenance.clone();
    provenance.push(k.name().to_string());
    let kernel = k.clone();
    let dimension = base.dimension;
    let eval: EvalFn = Arc::new(move |z: &[f64]| {
        let mut err = None;
        let mut buf = vec![0.0; z.len()];
        let v = kernel.integrate_t(|t| {
            if err.is_some() {
                return Complex64::new(0.0, 0.0);
            }
            for (b, zi) in buf.iter_mut().zip(z) {
                *b = t * zi;
            }
            base.eval(&buf).unwrap_or_else(|e| {
                err = Some(e);
                Complex64::new(0.0, 0.0)
            })
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    });
    Ok(CumulantFn {
        eval,
        dimension,
        domain_order: order,
        provenance,
    })
}

/// Cumulant of the mapped law, `z ↦ ∫_0^{t₀} C(tz) p(t) dt` (factor by factor).
pub fn map_cumulant_fn(kernel: &MappingKernel, mu: &CumulantFn) -> Result<CumulantFn> {
    kernel
        .factors()
        .iter()
        .try_fold(mu.clone(), |acc, k| apply_factor(k, acc))
}

/// `C_{Φ_f(μ)}(z)`.
pub fn map_cumulant(kernel: &MappingKernel, mu: &CumulantFn, z: &[f64]) -> Result<Complex64> {
    map_cumulant_fn(kernel, mu)?.eval(z)
}

/// `∫ r (1/(1+t²r²) − 1/(1+r²)) ν_ξ(dr)`, the shift in the centering term
/// when jumps are scaled by `t`.
fn centering_shift(rm: &RadialMeasure, t: f64) -> Result<f64> {
    match rm {
        RadialMeasure::PowerLaw { alpha, scale } => {
            if *alpha == 1.0 {
                Ok(-scale * t.ln())
            } else {
                let k = std::f64::consts::FRAC_PI_2 / (std::f64::consts::FRAC_PI_2 * alpha).cos();
                Ok(scale * k * (t.powf(alpha - 1.0) - 1.0))
            }
        }
        RadialMeasure::Sum { parts } => parts.iter().map(|p| centering_shift(p, t)).sum(),
        _ => {
            let c = 1.0 - t * t;
            rm.integrate(
                |r| {
                    let r2 = r * r;
                    r * r2 * c / ((1.0 + t * t * r2) * (1.0 + r2))
                },
                0.0,
                f64::INFINITY,
            )
        }
    }
}

// Insert node pairs around u = t₀·r_k where atoms produce jumps.
fn grid_with_breaks(grid: &[f64], breaks: &[f64]) -> Vec<f64> {
    // keep interpolation stencils well separated from the inserted pair
    let spacing = (grid[grid.len() - 1] / grid[0]).ln() / (grid.len() - 1) as f64;
    let mut nodes: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|u| breaks.iter().all(|b| (u / b).ln().abs() > 0.5 * spacing))
        .collect();
    for &b in breaks {
        if b > grid[0] && b < grid[grid.len() - 1] {
            nodes.push(b * (1.0 - 1e-10));
            nodes.push(b * (1.0 + 1e-10));
        }
    }
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup();
    nodes
}

const INTERMEDIATE_MARGIN: f64 = 1e4;

// Extend a grid by `margin` on both ends with its average log spacing.
fn extended_grid(grid: &[f64], margin: f64) -> Vec<f64> {
    let n = grid.len();
    let h = (grid[n - 1] / grid[0]).ln() / (n - 1) as f64;
    let k = (margin.ln() / h).ceil() as i32;
    let mut out: Vec<f64> = (1..=k)
        .rev()
        .map(|i| grid[0] * (-h * i as f64).exp())
        .collect();
    out.extend_from_slice(grid);
    out.extend((1..=k).map(|i| grid[n - 1] * (h * i as f64).exp()));
    out
}

/// Radial density of the mapped measure on the given grid:
/// `l̃(u) = ∫_{u/t₀}^∞ p(u/r) r^{-1} ν_ξ(dr)`.
pub fn map_radial_on(
    kernel: &MappingKernel,
    rm: &RadialMeasure,
    grid: &[f64],
) -> Result<RadialMeasure> {
    let factors = kernel.factors();
    // intermediate images must cover the radii the next factor integrates over
    let wide = extended_grid(grid, INTERMEDIATE_MARGIN);
    let mut cur = rm.clone();
    for (i, k) in factors.iter().enumerate() {
        let t0 = k.t0();
        let breaks: Vec<f64> = if t0.is_finite() {
            cur.atom_radii().iter().map(|r| r * t0).collect()
        } else {
            Vec::new()
        };
        let base = if i + 1 == factors.len() { grid } else { &wide };
        let nodes = grid_with_breaks(base, &breaks);
        let values = nodes
            .par_iter()
            .map(|&u| {
                let v = cur.integrate(|r| k.p(u / r).unwrap_or(0.0) / r, u / t0, f64::INFINITY)?;
                Ok(v.max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        cur = RadialMeasure::grid(nodes, values)?;
    }
    Ok(cur)
}

/// Mapped radial density at a single point, for a non-composite kernel.
pub fn mapped_density(kernel: &MappingKernel, rm: &RadialMeasure, u: f64) -> Result<f64> {
    if kernel.is_composite() {
        return Err(LevyError::invalid(
            "pointwise mapped density needs a simple kernel",
        ));
    }
    if !(u > 0.0) {
        return Ok(0.0);
    }
    let v = rm.integrate(
        |r| kernel.p(u / r).unwrap_or(0.0) / r,
        u / kernel.t0(),
        f64::INFINITY,
    )?;
    Ok(v.max(0.0))
}

/// [`map_radial_on`] with the default log-spaced grid.
pub fn map_radial(kernel: &MappingKernel, rm: &RadialMeasure) -> Result<RadialMeasure> {
    map_radial_on(kernel, rm, &default_grid())
}

fn check_log_domain(k: &MappingKernel, tr: &LevyTriplet, stage: &str) -> Result<()> {
    if k.s0().is_infinite() {
        if let Some(l) = &tr.levy {
            if !l.log_moment(1).is_finite() {
                return Err(LevyError::Domain {
                    stage: stage.to_string(),
                    order: 1,
                });
            }
        }
    }
    Ok(())
}

fn map_triplet_simple(k: &MappingKernel, tr: &LevyTriplet, grid: &[f64]) -> Result<LevyTriplet> {
    let m1 = k.moment(1.0)?;
    let m2 = k.moment(2.0)?;
    let a =
        tr.a.iter()
            .map(|row| row.iter().map(|v| v * m2).collect())
            .collect();
    let mut gamma: Vec<f64> = tr.gamma.iter().map(|g| g * m1).collect();
    let levy = match &tr.levy {
        None => None,
        Some(l) => {
            let mut dirs = Vec::with_capacity(l.directions.len());
            for c in &l.directions {
                let mut err = None;
                let shift = k.integrate_t(|t| {
                    if err.is_some() {
                        return 0.0;
                    }
                    t * centering_shift(&c.radial, t).unwrap_or_else(|e| {
                        err = Some(e);
                        0.0
                    })
                })?;
                if let Some(e) = err {
                    return Err(e);
                }
                for (g, x) in gamma.iter_mut().zip(c.xi.coords()) {
                    *g += c.weight * x * shift;
                }
                dirs.push(PolarComponent {
                    xi: c.xi.clone(),
                    weight: c.weight,
                    radial: map_radial_on(k, &c.radial, grid)?,
                });
            }
            Some(PolarLevyMeasure::new(dirs)?)
        }
    };
    LevyTriplet::new(a, gamma, levy)
}

/// Triplet of the mapped law on a given radial grid.
pub fn map_triplet_on(
    kernel: &MappingKernel,
    tr: &LevyTriplet,
    grid: &[f64],
) -> Result<LevyTriplet> {
    check_log_domain(kernel, tr, kernel.name())?;
    let factors = kernel.factors();
    let wide = extended_grid(grid, INTERMEDIATE_MARGIN);
    let mut cur = tr.clone();
    for (i, k) in factors.iter().enumerate() {
        let base = if i + 1 == factors.len() { grid } else { &wide };
        cur = map_triplet_simple(k, &cur, base)?;
    }
    Ok(cur)
}

/// Triplet `(Ã, ν̃, γ̃)` of the mapped law, with `ν̃` on the default grid.
pub fn map_triplet(kernel: &MappingKernel, tr: &LevyTriplet) -> Result<LevyTriplet> {
    map_triplet_on(kernel, tr, &default_grid())
}

/// Result of [`iterate_map`].
#[derive(Debug, Clone)]
pub struct Iterated {
    pub triplet: LevyTriplet,
    pub provenance: Vec<String>,
}

/// Apply `kernel` `m` times. For kernels with `s₀ = ∞` the input must have a
/// finite log-moment of order `m` per factor.
pub fn iterate_map(kernel: &MappingKernel, tr: &LevyTriplet, m: u32) -> Result<Iterated> {
    if m == 0 {
        return Err(LevyError::invalid("iteration count must be at least 1"));
    }
    let cost = kernel.log_moment_cost();
    if cost > 0 {
        let available = tr.log_moment_order();
        if available != u32::MAX && available < cost * m {
            let step = available / cost + 1;
            return Err(LevyError::Domain {
                stage: format!("iteration {step} of {}", kernel.name()),
                order: cost * step,
            });
        }
    }
    // one composite pass keeps intermediate images on the widened grid
    let composite = MappingKernel::compose(vec![kernel.clone(); m as usize])?;
    let triplet = map_triplet(&composite, tr)?;
    let mut provenance = vec!["input".to_string()];
    provenance.extend((1..=m).map(|step| format!("step {step}: {}", kernel.name())));
    Ok(Iterated {
        triplet,
        provenance,
    })
}

/// Outcome of a numerical identity check over a grid of `z`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub z: Vec<Vec<f64>>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityReport {
    fn new(identity: String, z: Vec<Vec<f64>>, deviations: Vec<f64>, tolerance: f64) -> Self {
        let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(*d));
        IdentityReport {
            identity,
            z,
            deviations,
            max_deviation,
            passed: max_deviation < tolerance,
            tolerance,
        }
    }
}

fn deviations(z_grid: &[Vec<f64>], paths: &[CumulantFn]) -> Result<Vec<f64>> {
    z_grid
        .par_iter()
        .map(|z| {
            let vals = paths
                .iter()
                .map(|p| p.eval(z))
                .collect::<Result<Vec<_>>>()?;
            let mut dev = 0.0f64;
            for v in &vals[1..] {
                dev = dev.max((v - vals[0]).norm());
            }
            Ok(dev)
        })
        .collect()
}

/// `max_z |C_{Φ₁Φ₀(μ)}(z) − C_{Φ₀Φ₁(μ)}(z)|`.
pub fn verify_commutativity(
    k0: &MappingKernel,
    k1: &MappingKernel,
    tr: &LevyTriplet,
    z_grid: &[Vec<f64>],
) -> Result<IdentityReport> {
    if k0.s0().is_infinite() || k1.s0().is_infinite() {
        return Err(LevyError::invalid(
            "commutativity check needs kernels with s0 < ∞",
        ));
    }
    let mu = CumulantFn::from_triplet(tr)?;
    let a = map_cumulant_fn(k1, &map_cumulant_fn(k0, &mu)?)?;
    let b = map_cumulant_fn(k0, &map_cumulant_fn(k1, &mu)?)?;
    let dev = deviations(z_grid, &[a, b])?;
    Ok(IdentityReport::new(
        format!("{}∘{} = {}∘{}", k1.name(), k0.name(), k0.name(), k1.name()),
        z_grid.to_vec(),
        dev,
        1e-6,
    ))
}

/// `Ψ(μ) = Υ(Φ(μ)) = Φ(Υ(μ))`, also compared with the one-step kernel
/// `p(t) = e^{-t}/t`.
pub fn verify_psi_identity(tr: &LevyTriplet, z_grid: &[Vec<f64>]) -> Result<IdentityReport> {
    let phi = MappingKernel::from_name("Phi")?;
    let ups = MappingKernel::from_name("Upsilon")?;
    let mu = CumulantFn::from_triplet(tr)?;
    let ups_phi = map_cumulant_fn(&ups, &map_cumulant_fn(&phi, &mu)?)?;
    let phi_ups = map_cumulant_fn(&phi, &map_cumulant_fn(&ups, &mu)?)?;
    let direct = map_cumulant_fn(&MappingKernel::psi_direct(), &mu)?;
    let dev = deviations(z_grid, &[ups_phi, phi_ups, direct])?;
    Ok(IdentityReport::new(
        "Psi = Upsilon∘Phi = Phi∘Upsilon".into(),
        z_grid.to_vec(),
        dev,
        1e-6,
    ))
}

/// Triplet path against cumulant path: `C_{map_triplet(k,μ)}(z)` vs `map_cumulant(k,μ,z)`.
pub fn verify_path_consistency(
    kernel: &MappingKernel,
    tr: &LevyTriplet,
    z_grid: &[Vec<f64>],
) -> Result<IdentityReport> {
    let mapped = map_triplet(kernel, tr)?;
    let a = CumulantFn::from_triplet(&mapped)?;
    let b = map_cumulant_fn(kernel, &CumulantFn::from_triplet(tr)?)?;
    let dev = deviations(z_grid, &[a, b])?;
    Ok(IdentityReport::new(
        format!("triplet path = cumulant path for {}", kernel.name()),
        z_grid.to_vec(),
        dev,
        1e-6,
    ))
}

/// CSV `direction,u,density` for every grid radial component.
pub fn radial_csv(tr: &LevyTriplet) -> String {
    let mut out = String::from("direction,u,density\n");
    if let Some(l) = &tr.levy {
        for (i, c) in l.directions.iter().enumerate() {
            if let RadialMeasure::Grid(g) = &c.radial {
                for (u, v) in g.radii().iter().zip(g.values()) {
                    out.push_str(&format!("{i},{u:e},{v:e}\n"));
                }
            }
        }
    }
    out
}
