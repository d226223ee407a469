//! Bernstein inversion of `h`-functions, the mixture-of-stable (L_∞)
//! representation, stable laws and their fixed-point property.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{check_completely_monotone, DEFAULT_CM_TOL};
use crate::error::{LevyError, Result};
use crate::kernel::MappingKernel;
use crate::measure::{
    h_function, Cumulant, Direction, LevyTriplet, PolarComponent, PolarLevyMeasure, RadialMeasure,
    StableLaw,
};
use crate::special::EULER_GAMMA;
use crate::transform::{map_cumulant_fn, CumulantFn};

pub const DEFAULT_NODE_COUNT: usize = 128;
pub const TIKHONOV: f64 = 1e-8;
pub const MAX_FIT_RESIDUAL: f64 = 1e-3;
/// `u`-range and resolution on which `h` is fitted.
pub const FIT_U_RANGE: (f64, f64) = (-1.0, 3.0);
pub const FIT_U_POINTS: usize = 256;
/// Radii at which reconstructed tails are compared.
pub const TAIL_PROBES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Nonnegative least squares `min |Ax − b|`, `x ≥ 0` (Lawson–Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() != b.len() {
        return Err(LevyError::invalid("nnls: dimension mismatch"));
    }
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm() * b.norm();
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let solve = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-15)
            .map_err(|e| LevyError::invalid(format!("nnls: {e}")))?;
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = sol[k];
        }
        Ok(full)
    };
    for _ in 0..3 * n {
        let w = a.transpose() * (b - a * &x);
        let Some((j, wj)) = (0..n)
            .filter(|&j| !passive[j])
            .map(|j| (j, w[j]))
            .max_by(|p, q| p.1.total_cmp(&q.1))
        else {
            break;
        };
        if wj <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let s = solve(&passive)?;
            if (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                step = step.min(x[i] / (x[i] - s[i]));
            }
            x += (s - &x) * step;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-300 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
    }
    Ok(x)
}

// Exponential dictionary e^{-u v} with Tikhonov rows, solved by NNLS.
fn fit_exponentials(u: &[f64], h: &[f64], nodes: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = u.len();
    let n = nodes.len();
    let hmax = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if !(hmax > 0.0) {
        return Err(LevyError::invalid("h vanishes on the fit range"));
    }
    let reg = TIKHONOV.sqrt();
    let a = DMatrix::from_fn(m + n, n, |i, k| {
        if i < m {
            (-u[i] * nodes[k]).exp()
        } else if i - m == k {
            reg
        } else {
            0.0
        }
    });
    let b = DVector::from_fn(m + n, |i, _| if i < m { h[i] / hmax } else { 0.0 });
    let x = nnls(&a, &b)?;
    let masses: Vec<f64> = x.iter().map(|v| v * hmax).collect();
    let residual = (0..m)
        .map(|i| {
            let fit: f64 = nodes
                .iter()
                .zip(&masses)
                .map(|(v, w)| w * (-u[i] * v).exp())
                .sum();
            (fit - h[i]).abs()
        })
        .fold(0.0, f64::max)
        / hmax;
    Ok((masses, residual))
}

/// Masses an unrestricted fit puts below, inside and above `(1, 3)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub below: f64,
    pub inside: f64,
    pub above: f64,
}

/// Discrete `H` with `h(u) ≈ Σ masses_k e^{-u v_k}`, nodes in `(1, 3)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernsteinFit {
    pub nodes: Vec<f64>,
    pub masses: Vec<f64>,
    /// `max|fit − h| / max h` over the fitted grid.
    pub residual: f64,
    pub support: SupportReport,
}

impl BernsteinFit {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.masses)
            .map(|(v, w)| w * (-u * v).exp())
            .sum()
    }

    pub fn to_csv(&self) -> String {
        node_csv("node", &self.nodes, &self.masses)
    }
}

fn node_csv(label: &str, nodes: &[f64], masses: &[f64]) -> String {
    let mut s = format!("{label},mass\n");
    for (v, w) in nodes.iter().zip(masses) {
        s.push_str(&format!("{v:.12e},{w:.12e}\n"));
    }
    s
}

/// Log-spaced nodes `3^{(k+½)/n}`, `k = 0..n`.
pub fn bernstein_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 3f64.powf((k as f64 + 0.5) / n as f64))
        .collect()
}

/// Fit `h(u) = ∫ e^{-uv} H(dv)` with `H` on `(1, 3)`.
pub fn bernstein_invert(u: &[f64], h: &[f64], node_count: usize) -> Result<BernsteinFit> {
    if node_count < 2 {
        return Err(LevyError::invalid("need at least two Bernstein nodes"));
    }
    let cm = check_completely_monotone(u, h, 4, DEFAULT_CM_TOL)?;
    if let Some(j) = cm.first_failure() {
        return Err(LevyError::invalid(format!(
            "h is not completely monotone (order {j} fails)"
        )));
    }
    let nodes = bernstein_nodes(node_count);
    let (masses, residual) = fit_exponentials(u, h, &nodes)?;
    if residual > MAX_FIT_RESIDUAL {
        return Err(LevyError::NotRepresentable { residual });
    }
    // unrestricted dictionary on [0, 6] to see where mass wants to sit
    let wide: Vec<f64> = (0..=240).map(|k| 6.0 * k as f64 / 240.0).collect();
    let (wm, _) = fit_exponentials(u, h, &wide)?;
    let mut support = SupportReport {
        below: 0.0,
        inside: 0.0,
        above: 0.0,
    };
    for (v, w) in wide.iter().zip(&wm) {
        if *v <= 1.0 {
            support.below += w;
        } else if *v >= 3.0 {
            support.above += w;
        } else {
            support.inside += w;
        }
    }
    Ok(BernsteinFit {
        nodes,
        masses,
        residual,
        support,
    })
}

/// Sample `h` of a radial measure on the default fit grid.
pub fn h_samples(rm: &RadialMeasure) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = FIT_U_RANGE;
    let n = FIT_U_POINTS;
    let u: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let h = u.iter().map(|&x| h_function(rm, x)).collect();
    (u, h)
}

/// Discrete `Γ` on `(0, 2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaMeasure {
    pub nodes: Vec<f64>,
    pub masses: Vec<f64>,
    /// `∫ (1/α + 1/(2−α)) Γ(dα)`.
    pub finiteness: f64,
}

impl GammaMeasure {
    pub fn new(nodes: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if nodes.len() != masses.len() {
            return Err(LevyError::invalid(
                "gamma nodes and masses differ in length",
            ));
        }
        if nodes.iter().any(|a| !(*a > 0.0 && *a < 2.0)) {
            return Err(LevyError::invalid("gamma nodes must lie in (0, 2)"));
        }
        if masses.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(LevyError::invalid("gamma masses must be nonnegative"));
        }
        let finiteness = nodes
            .iter()
            .zip(&masses)
            .map(|(a, w)| w * (1.0 / a + 1.0 / (2.0 - a)))
            .sum();
        Ok(GammaMeasure {
            nodes,
            masses,
            finiteness,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass within `radius` of `alpha`.
    pub fn mass_near(&self, alpha: f64, radius: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.masses)
            .filter(|(a, _)| (*a - alpha).abs() <= radius)
            .map(|(_, w)| w)
            .sum()
    }

    /// Radial measure `∫ Γ(dα) r^{-α-1} dr`.
    pub fn radial(&self) -> Result<RadialMeasure> {
        let parts: Vec<RadialMeasure> = self
            .nodes
            .iter()
            .zip(&self.masses)
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, w)| RadialMeasure::power_law(*a, *w))
            .collect::<Result<_>>()?;
        match parts.len() {
            0 => Err(LevyError::invalid("gamma measure is zero")),
            1 => Ok(parts.into_iter().next().unwrap()),
            _ => RadialMeasure::sum(parts),
        }
    }

    pub fn to_csv(&self) -> String {
        node_csv("alpha", &self.nodes, &self.masses)
    }
}

/// `Γ(E) = ∫_{(1,3)} 1_E(v−1) (v−1) H(dv)`.
pub fn gamma_extract(fit: &BernsteinFit) -> Result<GammaMeasure> {
    let nodes = fit.nodes.iter().map(|v| v - 1.0).collect::<Vec<_>>();
    let masses = fit
        .nodes
        .iter()
        .zip(&fit.masses)
        .map(|(v, w)| (v - 1.0) * w)
        .collect();
    GammaMeasure::new(nodes, masses)
}

/// Output of [`linf_reconstruct`].
#[derive(Debug, Clone, Serialize)]
pub struct LinfReconstruction {
    pub measure: PolarLevyMeasure,
    /// Mixed `Γ(dα) = Σ_ξ λ_ξ Γ_ξ(dα)` on the common node set.
    pub gamma: GammaMeasure,
    /// `λ_α(ξ)` per Γ node (rows) and direction (columns); rows with zero
    /// Γ-mass are zero.
    pub lambda_alpha: Vec<Vec<f64>>,
    /// Largest relative tail deviation over directions and probe radii.
    pub residual: f64,
}

fn tail_residual(a: &RadialMeasure, b: &RadialMeasure) -> f64 {
    TAIL_PROBES
        .iter()
        .map(|&r| {
            let (x, y) = (a.tail(r), b.tail(r));
            if y == 0.0 {
                x.abs()
            } else {
                ((x - y) / y).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Rebuild a Lévy measure from per-direction Γ measures (sharing the node
/// set) with the directions and weights of `original`, and compare tails.
pub fn linf_reconstruct(
    gammas: &[GammaMeasure],
    original: &PolarLevyMeasure,
) -> Result<LinfReconstruction> {
    if gammas.len() != original.directions.len() {
        return Err(LevyError::invalid(
            "one gamma measure per direction is required",
        ));
    }
    let nodes = gammas[0].nodes.clone();
    if gammas.iter().any(|g| g.nodes != nodes) {
        return Err(LevyError::invalid("gamma measures must share their nodes"));
    }
    let mut dirs = Vec::with_capacity(gammas.len());
    let mut residual = 0.0f64;
    for (g, c) in gammas.iter().zip(&original.directions) {
        let radial = g.radial()?;
        residual = residual.max(tail_residual(&radial, &c.radial));
        dirs.push(PolarComponent {
            xi: c.xi.clone(),
            weight: c.weight,
            radial,
        });
    }
    let mixed: Vec<f64> = (0..nodes.len())
        .map(|k| {
            gammas
                .iter()
                .zip(&original.directions)
                .map(|(g, c)| c.weight * g.masses[k])
                .sum()
        })
        .collect();
    let lambda_alpha = (0..nodes.len())
        .map(|k| {
            gammas
                .iter()
                .zip(&original.directions)
                .map(|(g, c)| {
                    if mixed[k] > 0.0 {
                        c.weight * g.masses[k] / mixed[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(LinfReconstruction {
        measure: PolarLevyMeasure::new(dirs)?,
        gamma: GammaMeasure::new(nodes, mixed)?,
        lambda_alpha,
        residual,
    })
}

/// Full pipeline on a Lévy measure.
#[derive(Debug, Clone, Serialize)]
pub struct LinfReport {
    /// Normalization constant `∫(|x|²∧1) ν(dx)`.
    pub c: f64,
    pub fits: Vec<BernsteinFit>,
    pub gammas: Vec<GammaMeasure>,
    pub reconstruction: LinfReconstruction,
}

/// Normalize, fit every direction's `h`, extract Γ and rebuild.
pub fn linf_pipeline(nu: &PolarLevyMeasure, node_count: usize) -> Result<LinfReport> {
    let (normed, c) = nu.normalize()?;
    let fits = normed
        .directions
        .par_iter()
        .map(|d| {
            let (u, h) = h_samples(&d.radial);
            bernstein_invert(&u, &h, node_count)
        })
        .collect::<Result<Vec<_>>>()?;
    let gammas = fits.iter().map(gamma_extract).collect::<Result<Vec<_>>>()?;
    let reconstruction = linf_reconstruct(&gammas, &normed)?;
    Ok(LinfReport {
        c,
        fits,
        gammas,
        reconstruction,
    })
}

/// Triplet of the α-stable law with radial parts `scale·r^{-α-1}dr` and
/// shift `τ`: `C(z) = Σ λ_ξ scale·Γ(−α)(−i⟨z,ξ⟩)^α + i⟨τ,z⟩` for `α ≠ 1`.
/// For `α = 1`, `τ` is the drift left after the `−i w ln|w|` terms.
/// `α = 2` gives the Gaussian with `A = scale·I` and mean `τ`.
pub fn make_stable(
    alpha: f64,
    spherical: &[(Direction, f64)],
    tau: &[f64],
    scale: f64,
) -> Result<LevyTriplet> {
    let law = StableLaw::new(alpha, spherical.to_vec(), tau.to_vec(), scale)?;
    stable_triplet(&law)
}

/// [`make_stable`] for a [`StableLaw`].
pub fn stable_triplet(law: &StableLaw) -> Result<LevyTriplet> {
    let d = law.tau.len();
    if d == 0 {
        return Err(LevyError::invalid(
            "shift vector must have the law's dimension",
        ));
    }
    if law.alpha == 2.0 {
        let a = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { law.scale } else { 0.0 })
                    .collect()
            })
            .collect();
        return LevyTriplet::new(a, law.tau.clone(), None);
    }
    if law.spherical.iter().any(|(xi, _)| xi.dim() != d) {
        return Err(LevyError::invalid(
            "direction dimension differs from the shift",
        ));
    }
    // linear coefficient of one radial power law under the 1/(1+r²) centering
    let k = if law.alpha == 1.0 {
        1.0 - EULER_GAMMA
    } else {
        -std::f64::consts::FRAC_PI_2 / (std::f64::consts::FRAC_PI_2 * law.alpha).cos()
    };
    let mut gamma = law.tau.clone();
    let mut dirs = Vec::with_capacity(law.spherical.len());
    for (xi, w) in &law.spherical {
        for (g, x) in gamma.iter_mut().zip(xi.coords()) {
            *g -= w * law.scale * k * x;
        }
        dirs.push(PolarComponent {
            xi: xi.clone(),
            weight: *w,
            radial: RadialMeasure::power_law(law.alpha, law.scale)?,
        });
    }
    let zero = vec![vec![0.0; d]; d];
    LevyTriplet::new(zero, gamma, Some(PolarLevyMeasure::new(dirs)?))
}

/// Result of [`stable_fixed_point_check`].
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub kernel: String,
    pub alpha: f64,
    /// `κ = ∫ f(s)^α ds`.
    pub kappa: f64,
    /// Least-squares drift `b` in `C_mapped − κC ≈ i⟨b, z⟩`.
    pub drift: Vec<f64>,
    /// `max |C_mapped − κC − i⟨b,z⟩| / max |κC|`.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const FIXED_POINT_TOL: f64 = 1e-6;

/// Check that `kernel` maps the stable law to `κ` times itself up to a drift.
pub fn stable_fixed_point_check(
    kernel: &MappingKernel,
    law: &StableLaw,
    z_grid: &[Vec<f64>],
) -> Result<FixedPointReport> {
    let tr = stable_triplet(law)?;
    let d = tr.dimension;
    if z_grid.is_empty() || z_grid.iter().any(|z| z.len() != d) {
        return Err(LevyError::invalid(
            "z-grid must be non-empty with the law's dimension",
        ));
    }
    let kappa = kernel.moment(law.alpha)?;
    let mu = CumulantFn::from_triplet(&tr)?;
    let mapped = map_cumulant_fn(kernel, &mu)?;
    let rows = z_grid
        .par_iter()
        .map(|z| Ok((mapped.eval(z)?, mu.eval(z)?)))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<_> = rows.iter().map(|(m, c)| m - c * kappa).collect();
    let scale = rows
        .iter()
        .map(|(_, c)| (c * kappa).norm())
        .fold(0.0, f64::max);
    // drift by least squares on the imaginary parts
    let zm = DMatrix::from_fn(z_grid.len(), d, |i, j| z_grid[i][j]);
    let im = DVector::from_iterator(diffs.len(), diffs.iter().map(|v| v.im));
    let drift = zm
        .clone()
        .svd(true, true)
        .solve(&im, 1e-14)
        .map_err(|e| LevyError::invalid(format!("drift fit: {e}")))?;
    let fitted = &zm * &drift;
    let max_dev = diffs
        .iter()
        .enumerate()
        .map(|(i, v)| (v.re.powi(2) + (v.im - fitted[i]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let max_deviation = if scale > 0.0 {
        max_dev / scale
    } else {
        max_dev
    };
    Ok(FixedPointReport {
        kernel: kernel.name().to_string(),
        alpha: law.alpha,
        kappa,
        drift: drift.iter().copied().collect(),
        max_deviation,
        tolerance: FIXED_POINT_TOL,
        passed: max_deviation < FIXED_POINT_TOL,
    })
}
