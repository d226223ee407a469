//! Monte Carlo sampling of `∫_0^{s₀} f(s) dX_s` and empirical
//! characteristic-function checks.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LevyError, Result};
use crate::kernel::MappingKernel;
use crate::measure::{Cumulant, LevyTriplet, RadialMeasure};
use crate::quad::Quad;

/// Simulation settings. Results depend only on these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub n_steps: usize,
    pub jump_cutoff: f64,
    pub seed: u64,
    /// Upper end of the `s`-range for kernels with `s₀ = ∞`.
    pub s0_truncation: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_samples: 100_000,
            n_steps: 512,
            jump_cutoff: 1e-3,
            seed: 42,
            s0_truncation: 13.8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1000 {
            return Err(LevyError::invalid("n_samples must be at least 1000"));
        }
        if self.n_steps == 0 {
            return Err(LevyError::invalid("n_steps must be positive"));
        }
        if !(self.jump_cutoff > 0.0 && self.jump_cutoff <= 0.1) {
            return Err(LevyError::invalid("jump cutoff must lie in (0, 0.1]"));
        }
        if !(self.s0_truncation > 0.0 && self.s0_truncation.is_finite()) {
            return Err(LevyError::invalid(
                "s0 truncation must be positive and finite",
            ));
        }
        Ok(())
    }
}

// Inverse-tail sampler for the normalized jump law on (ε, ∞).
#[derive(Debug, Clone)]
enum RadialSampler {
    Atoms {
        radii: Vec<f64>,
        cum: Vec<f64>,
    },
    // tail ∝ r^{-α}
    Power {
        alpha: f64,
        eps: f64,
    },
    // ln r against ln tail, tail decreasing
    Table {
        ln_r: Vec<f64>,
        ln_t: Vec<f64>,
    },
    Mix {
        parts: Vec<RadialSampler>,
        cum: Vec<f64>,
    },
}

const TABLE_POINTS: usize = 4096;

fn pick(cum: &[f64], u: f64) -> usize {
    let x = u * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

impl RadialSampler {
    // `None` when there is no mass beyond ε.
    fn new(rm: &RadialMeasure, eps: f64) -> Result<Option<Self>> {
        let total = rm.try_tail(eps)?;
        if !total.is_finite() {
            return Err(LevyError::invalid(format!(
                "infinite jump rate above {eps}"
            )));
        }
        if total <= 0.0 {
            return Ok(None);
        }
        Ok(Some(match rm {
            RadialMeasure::Atom(a) => {
                let (radii, w): (Vec<f64>, Vec<f64>) = a
                    .as_slice()
                    .iter()
                    .filter(|x| x.r > eps)
                    .map(|x| (x.r, x.mass))
                    .unzip();
                RadialSampler::Atoms {
                    radii,
                    cum: cumsum(&w),
                }
            }
            RadialMeasure::PowerLaw { alpha, .. } => RadialSampler::Power { alpha: *alpha, eps },
            RadialMeasure::Sum { parts } => {
                let mut samplers = Vec::new();
                let mut w = Vec::new();
                for p in parts {
                    if let Some(s) = RadialSampler::new(p, eps)? {
                        w.push(p.try_tail(eps)?);
                        samplers.push(s);
                    }
                }
                RadialSampler::Mix {
                    parts: samplers,
                    cum: cumsum(&w),
                }
            }
            _ => {
                let (_, sup_hi) = rm.support();
                let mut hi = if sup_hi.is_finite() { sup_hi } else { 1e8 };
                // trim the far range where the tail is negligible
                while hi > 2.0 * eps && rm.try_tail(hi / 2.0)? < 1e-15 * total {
                    hi /= 2.0;
                }
                let (a, b) = (eps.ln(), hi.ln());
                let mut ln_r = Vec::with_capacity(TABLE_POINTS);
                let mut ln_t = Vec::with_capacity(TABLE_POINTS);
                for i in 0..TABLE_POINTS {
                    let x = a + (b - a) * i as f64 / (TABLE_POINTS - 1) as f64;
                    let t = rm.try_tail(x.exp())?;
                    if t <= 0.0 {
                        break;
                    }
                    // keep the table strictly decreasing in the tail
                    if ln_t.last().is_some_and(|&l: &f64| t.ln() >= l) {
                        continue;
                    }
                    ln_r.push(x);
                    ln_t.push(t.ln());
                }
                RadialSampler::Table { ln_r, ln_t }
            }
        }))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            RadialSampler::Atoms { radii, cum } => radii[pick(cum, rng.random())],
            RadialSampler::Power { alpha, eps } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                eps * u.powf(-1.0 / alpha)
            }
            RadialSampler::Mix { parts, cum } => parts[pick(cum, rng.random())].sample(rng),
            RadialSampler::Table { ln_r, ln_t } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let target = ln_t[0] + u.ln();
                let n = ln_t.len();
                if n == 1 || target >= ln_t[0] {
                    return ln_r[0].exp();
                }
                if target <= ln_t[n - 1] {
                    return ln_r[n - 1].exp();
                }
                // ln_t is decreasing
                let k = ln_t.partition_point(|&t| t > target).clamp(1, n - 1);
                let (t0, t1) = (ln_t[k - 1], ln_t[k]);
                let w = (target - t0) / (t1 - t0);
                (ln_r[k - 1] + w * (ln_r[k] - ln_r[k - 1])).exp()
            }
        }
    }
}

fn cumsum(w: &[f64]) -> Vec<f64> {
    w.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

// Symmetric square root via eigen-decomposition, clipping tiny negative
// eigenvalues from rounding.
fn sqrt_psd(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mat = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = SymmetricEigen::new(mat);
    let v = &eig.eigenvectors;
    let root =
        v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(0.0).sqrt())) * v.transpose();
    (0..d)
        .map(|i| root.row(i).iter().copied().collect())
        .collect()
}

/// Per-unit-time pieces of the Lévy–Itô split at cutoff `ε`.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    dimension: usize,
    /// `A + ∫_{|x|≤ε} x xᵀ ν(dx)`.
    covariance: Vec<Vec<f64>>,
    /// `γ − ∫_{|x|>ε} x/(1+|x|²) ν(dx) + ∫_{|x|≤ε} x|x|²/(1+|x|²) ν(dx)`.
    drift: Vec<f64>,
    rate: f64,
    dir_cum: Vec<f64>,
    dirs: Vec<(Vec<f64>, RadialSampler)>,
}

impl IncrementSampler {
    pub fn new(tr: &LevyTriplet, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(LevyError::invalid("jump cutoff must be positive"));
        }
        let d = tr.dimension;
        let mut covariance = tr.a.clone();
        let mut drift = tr.gamma.clone();
        let mut rates = Vec::new();
        let mut dirs = Vec::new();
        if let Some(nu) = &tr.levy {
            for c in &nu.directions {
                let xi = c.xi.coords();
                let small2 = c.radial.integrate(|r| r * r, 0.0, eps)?;
                let small3 = c
                    .radial
                    .integrate(|r| r * r * r / (1.0 + r * r), 0.0, eps)?;
                let big = c
                    .radial
                    .integrate(|r| r / (1.0 + r * r), eps, f64::INFINITY)?;
                for i in 0..d {
                    drift[i] += c.weight * xi[i] * (small3 - big);
                    for j in 0..d {
                        covariance[i][j] += c.weight * xi[i] * xi[j] * small2;
                    }
                }
                if let Some(s) = RadialSampler::new(&c.radial, eps)? {
                    rates.push(c.weight * c.radial.try_tail(eps)?);
                    dirs.push((xi.to_vec(), s));
                }
            }
        }
        let rate = rates.iter().sum();
        Ok(IncrementSampler {
            dimension: d,
            covariance,
            drift,
            rate,
            dir_cum: cumsum(&rates),
            dirs,
        })
    }

    /// Total rate of jumps above the cutoff.
    pub fn jump_rate(&self) -> f64 {
        self.rate
    }

    fn jump<R: Rng>(&self, rng: &mut R) -> (&[f64], f64) {
        let (xi, s) = &self.dirs[pick(&self.dir_cum, rng.random())];
        (xi, s.sample(rng))
    }

    /// One increment `X_{t+dt} − X_t`.
    pub fn sample<R: Rng>(&self, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(LevyError::invalid("time step must be positive"));
        }
        let d = self.dimension;
        let root = sqrt_psd(&self.covariance);
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut x: Vec<f64> = (0..d)
            .map(|i| {
                dt * self.drift[i] + dt.sqrt() * (0..d).map(|j| root[i][j] * g[j]).sum::<f64>()
            })
            .collect();
        for _ in 0..poisson(self.rate * dt, rng)? {
            let (xi, r) = self.jump(rng);
            for i in 0..d {
                x[i] += r * xi[i];
            }
        }
        Ok(x)
    }
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| LevyError::invalid(format!("poisson: {e}")))?;
    Ok(p.sample(rng) as u64)
}

/// Free-function form of [`IncrementSampler::sample`].
pub fn sample_increment<R: Rng>(
    tr: &LevyTriplet,
    dt: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    IncrementSampler::new(tr, eps)?.sample(dt, rng)
}

/// Realizations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dimension: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.data.len() / self.dimension.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dimension)
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (0..self.dimension).map(|i| format!("x{i}")).collect();
        let mut s = header.join(",");
        s.push('\n');
        for row in self.iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Little-endian `f64` values, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

// Cell values of f on an equal partition of (0, s_end). The first cell of a
// kernel with t₀ = ∞ gets the cell average since f blows up at 0.
fn cell_values(kernel: &MappingKernel, s_end: f64, n: usize) -> Result<Vec<f64>> {
    let h = s_end / n as f64;
    let mut f: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| kernel.f_eval((j as f64 + 0.5) * h))
        .collect::<Result<_>>()?;
    if kernel.t0().is_infinite() {
        // ∫_0^h f = h f(h) + ∫_{f(h)}^∞ g(t) dt
        let fh = kernel.f_eval(h)?;
        let mut err = None;
        let tail = Quad::default()
            .integrate_to_inf(
                |t: f64| {
                    kernel.g(t).unwrap_or_else(|e| {
                        err.get_or_insert(e);
                        0.0
                    })
                },
                fh,
                fh.max(1.0),
            )?
            .value;
        if let Some(e) = err {
            return Err(e);
        }
        f[0] = fh + tail / h;
    }
    Ok(f)
}

/// Samples of the midpoint Riemann–Stieltjes sum `Σ f(s_j) ΔX_j`.
///
/// The Gaussian parts of all cells are drawn as one Gaussian and the jumps
/// above the cutoff as one compound Poisson sum over the whole `s`-range.
pub fn sample_integral(
    kernel: &MappingKernel,
    tr: &LevyTriplet,
    cfg: &SimConfig,
) -> Result<Samples> {
    cfg.validate()?;
    if kernel.is_composite() {
        return Err(LevyError::invalid(
            "simulation needs a single kernel; use the one-step form",
        ));
    }
    let cost = kernel.log_moment_cost();
    if cost > 0 && tr.log_moment_order() < cost {
        return Err(LevyError::Domain {
            stage: format!("simulation with {}", kernel.name()),
            order: cost,
        });
    }
    let s_end = if kernel.s0().is_finite() {
        kernel.s0()
    } else {
        cfg.s0_truncation
    };
    let n = cfg.n_steps;
    let h = s_end / n as f64;
    let f = cell_values(kernel, s_end, n)?;
    let sum_f: f64 = f.iter().sum::<f64>() * h;
    let sum_f2: f64 = f.iter().map(|v| v * v).sum::<f64>() * h;

    let inc = IncrementSampler::new(tr, cfg.jump_cutoff)?;
    let d = tr.dimension;
    let root = sqrt_psd(&inc.covariance);
    let sd = sum_f2.sqrt();
    let mean: Vec<f64> = inc.drift.iter().map(|g| g * sum_f).collect();
    let jump_mean = inc.rate * s_end;
    let pois = if jump_mean > 0.0 {
        Some(Poisson::new(jump_mean).map_err(|e| LevyError::invalid(format!("poisson: {e}")))?)
    } else {
        None
    };

    let data: Vec<f64> = (0..cfg.n_samples)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut x: Vec<f64> = (0..d)
                .map(|a| mean[a] + sd * (0..d).map(|b| root[a][b] * g[b]).sum::<f64>())
                .collect();
            let count = pois.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
            for _ in 0..count {
                let cell = rng.random_range(0..n);
                let (xi, r) = inc.jump(&mut rng);
                for a in 0..d {
                    x[a] += f[cell] * r * xi[a];
                }
            }
            x
        })
        .collect();
    Ok(Samples { dimension: d, data })
}

/// Empirical CF against `exp(C(z))`.
#[derive(Debug, Clone, Serialize)]
pub struct CfReport {
    pub n: usize,
    pub z: Vec<Vec<f64>>,
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// Monte Carlo confidence radius `4/√n`.
    pub radius: f64,
    pub passed: bool,
}

/// Compare the empirical characteristic function of `samples` with
/// `exp(expected(z))` on `z_grid`.
pub fn compare_cf(
    samples: &Samples,
    expected: &dyn Cumulant,
    z_grid: &[Vec<f64>],
) -> Result<CfReport> {
    let n = samples.len();
    if n == 0 {
        return Err(LevyError::invalid("no samples"));
    }
    if z_grid.iter().any(|z| z.len() != samples.dimension) {
        return Err(LevyError::invalid(
            "z-grid dimension differs from the samples",
        ));
    }
    let deviations = z_grid
        .par_iter()
        .map(|z| {
            if z.iter().all(|v| *v == 0.0) {
                return Ok(0.0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for x in samples.iter() {
                let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
                acc += Complex64::new(dot.cos(), dot.sin());
            }
            let emp = acc / n as f64;
            Ok((emp - expected.eval(z)?.exp()).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().fold(0.0f64, |a, &b| a.max(b));
    let radius = 4.0 / (n as f64).sqrt();
    Ok(CfReport {
        n,
        z: z_grid.to_vec(),
        deviations,
        max_deviation,
        radius,
        passed: max_deviation < radius,
    })
}
