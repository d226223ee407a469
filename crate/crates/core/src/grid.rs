//! Radial densities tabulated on a log-spaced grid.
//!
//! Between nodes the density is interpolated with a local four-point
//! Lagrange polynomial in `x = ln r`, applied to `ln ℓ` where the stencil is
//! strictly positive and to `ℓ` itself otherwise. A cell much narrower than
//! the grid spacing marks a jump: stencils never straddle it. Outside
//! `[r₁, r_n]` the density is zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LevyError, Result};
use crate::quad::{GL4_W, GL4_X};
use crate::special::levy_integrand;

pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_GRID_MIN: f64 = 1e-6;
pub const DEFAULT_GRID_MAX: f64 = 1e6;

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The default radial grid.
pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS)
}

#[derive(Serialize, Deserialize)]
struct GridRaw {
    r: Vec<f64>,
    density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridRaw", into = "GridRaw")]
pub struct GridDensity {
    r: Vec<f64>,
    density: Vec<f64>,
    x: Vec<f64>,
    lnv: Vec<f64>,
    // barrier[i]: cell i is a jump, interpolation stencils stay on one side
    barrier: Vec<bool>,
    // cum[i] = ∫_{r_i}^{r_n} ℓ(r) dr
    cum: Vec<f64>,
}

impl PartialEq for GridDensity {
    fn eq(&self, other: &Self) -> bool {
        self.r == other.r && self.density == other.density
    }
}

impl TryFrom<GridRaw> for GridDensity {
    type Error = LevyError;
    fn try_from(raw: GridRaw) -> Result<Self> {
        GridDensity::new(raw.r, raw.density)
    }
}

impl From<GridDensity> for GridRaw {
    fn from(g: GridDensity) -> Self {
        GridRaw {
            r: g.r,
            density: g.density,
        }
    }
}

impl GridDensity {
    pub fn new(r: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if r.len() != density.len() {
            return Err(LevyError::invalid("grid r and density lengths differ"));
        }
        if r.len() < 4 {
            return Err(LevyError::invalid("grid density needs at least 4 points"));
        }
        if !(r[0] > 0.0) || r.windows(2).any(|w| !(w[1] > w[0])) || !r[r.len() - 1].is_finite() {
            return Err(LevyError::invalid(
                "grid radii must be positive, finite and strictly increasing",
            ));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(LevyError::invalid(
                "grid density values must be finite and nonnegative",
            ));
        }
        let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
        let lnv: Vec<f64> = density
            .iter()
            .map(|&d| if d > 0.0 { d.ln() } else { f64::NEG_INFINITY })
            .collect();
        let typical = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let barrier = x.windows(2).map(|w| w[1] - w[0] < 1e-6 * typical).collect();
        let mut g = GridDensity {
            r,
            density,
            x,
            lnv,
            barrier,
            cum: Vec::new(),
        };
        let n = g.r.len();
        let mut cum = vec![0.0; n];
        for i in (0..n - 1).rev() {
            cum[i] = cum[i + 1] + g.cell_integral(i, g.x[i], g.x[i + 1], |_| 1.0);
        }
        g.cum = cum;
        Ok(g)
    }

    /// Tabulate `f` on the given radii.
    pub fn from_fn(r: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let density = r.iter().map(|&v| f(v)).collect();
        GridDensity::new(r, density)
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn scaled(&self, k: f64) -> GridDensity {
        GridDensity::new(self.r.clone(), self.density.iter().map(|d| d * k).collect())
            .expect("scaling preserves validity")
    }

    fn cell_of(&self, x: f64) -> Option<usize> {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] {
            return None;
        }
        let i = self.x.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(n - 2))
    }

    /// Interpolated density at `x = ln r` inside cell `i`.
    fn value_in_cell(&self, i: usize, x: f64) -> f64 {
        let n = self.x.len();
        // centered stencil first, then the one-sided ones (next to zeros)
        let stencil = [i as isize - 1, i as isize - 2, i as isize]
            .into_iter()
            .map(|j| j.clamp(0, n as isize - 4) as usize)
            .find(|&j| {
                j <= i
                    && j + 3 > i
                    && !self.barrier[j..j + 3].iter().any(|b| *b)
                    && self.lnv[j..j + 4].iter().all(|v| v.is_finite())
            });
        if let Some(j0) = stencil {
            let xs = &self.x[j0..j0 + 4];
            let ls = &self.lnv[j0..j0 + 4];
            let mut acc = 0.0;
            for k in 0..4 {
                let mut w = 1.0;
                for m in 0..4 {
                    if m != k {
                        w *= (x - xs[m]) / (xs[k] - xs[m]);
                    }
                }
                acc += w * ls[k];
            }
            acc.exp()
        } else {
            let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
            if self.lnv[i].is_finite() && self.lnv[i + 1].is_finite() {
                ((1.0 - t) * self.lnv[i] + t * self.lnv[i + 1]).exp()
            } else {
                ((1.0 - t) * self.density[i] + t * self.density[i + 1]).max(0.0)
            }
        }
    }

    pub fn density(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let x = r.ln();
        match self.cell_of(x) {
            Some(i) => self.value_in_cell(i, x),
            None => 0.0,
        }
    }

    /// `∫ φ(r) ℓ(r) dr` over the part of cell `i` with `ln r ∈ [xa, xb]`.
    fn cell_integral(&self, i: usize, xa: f64, xb: f64, phi: impl Fn(f64) -> f64) -> f64 {
        if xb <= xa
            || (self.density[i] == 0.0 && self.density[i + 1] == 0.0 && self.lnv_zero_stencil(i))
        {
            return 0.0;
        }
        let c = 0.5 * (xa + xb);
        let h = 0.5 * (xb - xa);
        let mut acc = 0.0;
        for k in 0..4 {
            let x = c + h * GL4_X[k];
            let r = x.exp();
            acc += GL4_W[k] * phi(r) * self.value_in_cell(i, x) * r;
        }
        acc * h
    }

    fn lnv_zero_stencil(&self, i: usize) -> bool {
        // linear fallback between two zeros gives zero
        !(self.lnv[i].is_finite() && self.lnv[i + 1].is_finite())
    }

    /// `ν((r, ∞))`.
    pub fn tail(&self, r: f64) -> f64 {
        let n = self.r.len();
        if r <= self.r[0] {
            return self.cum[0];
        }
        if r >= self.r[n - 1] {
            return 0.0;
        }
        let x = r.ln();
        let i = self.cell_of(x).expect("inside grid");
        self.cum[i + 1] + self.cell_integral(i, x, self.x[i + 1], |_| 1.0)
    }

    /// `∫_{(lo, hi)} φ(r) ℓ(r) dr`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = self.r.len();
        let xlo = if lo > 0.0 {
            lo.ln().max(self.x[0])
        } else {
            self.x[0]
        };
        let xhi = if hi.is_finite() {
            hi.ln().min(self.x[n - 1])
        } else {
            self.x[n - 1]
        };
        if xhi <= xlo {
            return 0.0;
        }
        let i0 = self.cell_of(xlo).unwrap_or(0);
        let i1 = self.cell_of(xhi).unwrap_or(n - 2);
        let mut acc = 0.0;
        for i in i0..=i1 {
            let a = self.x[i].max(xlo);
            let b = self.x[i + 1].min(xhi);
            acc += self.cell_integral(i, a, b, &phi);
        }
        acc
    }

    /// `∫ (e^{iwr} − 1 − iwr/(1+r²)) ℓ(r) dr`.
    pub fn cumulant(&self, w: f64) -> Complex64 {
        let n = self.r.len();
        let mut acc = Complex64::new(0.0, 0.0);
        if w == 0.0 {
            return acc;
        }
        for i in 0..n - 1 {
            if self.density[i] == 0.0 && self.density[i + 1] == 0.0 && self.lnv_zero_stencil(i) {
                continue;
            }
            let width = self.r[i + 1] - self.r[i];
            let panels = (w.abs() * width).ceil().max(1.0);
            if panels <= 64.0 {
                let np = panels as usize;
                let dx = (self.x[i + 1] - self.x[i]) / np as f64;
                for p in 0..np {
                    let c = self.x[i] + (p as f64 + 0.5) * dx;
                    let h = 0.5 * dx;
                    let mut part = Complex64::new(0.0, 0.0);
                    for k in 0..4 {
                        let x = c + h * GL4_X[k];
                        let r = x.exp();
                        part += levy_integrand(w, r) * (GL4_W[k] * self.value_in_cell(i, x) * r);
                    }
                    acc += part * h;
                }
            } else {
                acc += self.filon_cell(i, w);
            }
        }
        acc
    }

    // Oscillatory cell: Filon rule with quadratic interpolation of ℓ in r for
    // the e^{iwr} part, Gauss–Legendre for the smooth remainder.
    fn filon_cell(&self, i: usize, w: f64) -> Complex64 {
        let (a, b) = (self.r[i], self.r[i + 1]);
        let h = b - a;
        let xm = (0.5 * (a + b)).ln();
        let f0 = self.density[i];
        let fm = self.value_in_cell(i, xm);
        let f1 = self.density[i + 1];
        let c0 = f0;
        let c1 = (4.0 * fm - 3.0 * f0 - f1) / h;
        let c2 = 2.0 * (f0 - 2.0 * fm + f1) / (h * h);
        let iw = Complex64::new(0.0, w);
        let e = (iw * h).exp();
        let m0 = (e - 1.0) / iw;
        let m1 = (e * h - m0) / iw;
        let m2 = (e * (h * h) - m1 * 2.0) / iw;
        let osc = (iw * a).exp() * (m0 * c0 + m1 * c1 + m2 * c2);
        let smooth = self.cell_integral(i, self.x[i], self.x[i + 1], |_| -1.0);
        let drift = self.cell_integral(i, self.x[i], self.x[i + 1], |r| r / (1.0 + r * r));
        osc + Complex64::new(smooth, -w * drift)
    }
}
