//! Adaptive Gauss–Kronrod quadrature (21-point rule) for real and complex
//! integrands on finite and semi-infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{LevyError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_351_996,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOutput<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
}

/// Tolerance settings for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quad {
    fn default() -> Self {
        Quad {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

struct Piece<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> Result<(T, f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = T::zero();
    let mut resabs = fc.magnitude() * WGK[10];
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        let s = f1 + f2;
        kron = kron + s * WGK[j];
        resabs += (f1.magnitude() + f2.magnitude()) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let value = kron * h;
    let err = (kron - gauss).magnitude() * h.abs();
    if !(value.magnitude().is_finite() && err.is_finite()) {
        return Err(LevyError::Quadrature {
            context: format!("non-finite integrand on [{a:e}, {b:e}]"),
            residual: f64::INFINITY,
        });
    }
    Ok((value, err, resabs * h.abs()))
}

impl Quad {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Quad {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    /// Integrate over `[a, b]`.
    pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        f: F,
        a: f64,
        b: f64,
    ) -> Result<QuadOutput<T>> {
        self.integrate_pts(f, &[a, b])
    }

    /// Integrate over `[pts[0], pts[last]]` using `pts` as the initial partition.
    pub fn integrate_pts<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        mut f: F,
        pts: &[f64],
    ) -> Result<QuadOutput<T>> {
        if pts.len() < 2 {
            return Err(LevyError::invalid("integration needs at least two points"));
        }
        let mut heap = BinaryHeap::new();
        let mut total = T::zero();
        let mut total_err = 0.0;
        let mut total_abs = 0.0;
        for w in pts.windows(2) {
            if w[1] == w[0] {
                continue;
            }
            let (v, e, ra) = gk21(&mut f, w[0], w[1])?;
            total = total + v;
            total_err += e;
            total_abs += ra;
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value: v,
                error: e,
            });
        }
        let mut count = heap.len();
        loop {
            let tol = self
                .abs_tol
                .max(self.rel_tol * total.magnitude())
                .max(50.0 * f64::EPSILON * total_abs);
            if total_err <= tol {
                break;
            }
            if count >= self.max_intervals {
                if total_err <= 1e3 * tol {
                    break;
                }
                return Err(LevyError::Quadrature {
                    context: format!(
                        "[{:e}, {:e}] after {count} subintervals",
                        pts[0],
                        pts[pts.len() - 1]
                    ),
                    residual: total_err,
                });
            }
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
                // interval no longer splittable in floating point
                heap.push(worst);
                if total_err <= 1e3 * tol {
                    break;
                }
                return Err(LevyError::Quadrature {
                    context: "interval underflow".into(),
                    residual: total_err,
                });
            }
            let (v1, e1, r1) = gk21(&mut f, worst.a, mid)?;
            let (v2, e2, r2) = gk21(&mut f, mid, worst.b)?;
            total = total - worst.value + v1 + v2;
            total_err += e1 + e2 - worst.error;
            total_abs += r1 + r2;
            heap.push(Piece {
                a: worst.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Piece {
                a: mid,
                b: worst.b,
                value: v2,
                error: e2,
            });
            count += 1;
        }
        // re-sum to limit drift from incremental updates
        let mut value = T::zero();
        let mut error = 0.0;
        for p in heap.iter() {
            value = value + p.value;
            error += p.error;
        }
        Ok(QuadOutput {
            value,
            error,
            intervals: count,
        })
    }

    /// Integrate over `[a, ∞)` through `t = a + scale·x/(1−x)`.
    pub fn integrate_to_inf<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        mut f: F,
        a: f64,
        scale: f64,
    ) -> Result<QuadOutput<T>> {
        let g = move |x: f64| {
            let om = 1.0 - x;
            let t = a + scale * x / om;
            if !t.is_finite() {
                return T::zero();
            }
            f(t) * (scale / (om * om))
        };
        self.integrate_pts(g, &[0.0, 0.5, 0.75, 0.875, 1.0])
    }

    /// Integrate over `[a, b]` where `b` may be `+∞`.
    pub fn integrate_upto<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        f: F,
        a: f64,
        b: f64,
    ) -> Result<QuadOutput<T>> {
        if b.is_infinite() {
            self.integrate_to_inf(f, a, 1.0)
        } else {
            self.integrate(f, a, b)
        }
    }
}

/// Default-tolerance integral of a real function over `[a, b]` (`b` may be `+∞`).
pub fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    Ok(Quad::default().integrate_upto(f, a, b)?.value)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (4 points).
pub(crate) const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
pub(crate) const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];
