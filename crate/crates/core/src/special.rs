//! Special functions used by the closed-form cumulants and kernels.

use num_complex::Complex64;

pub use statrs::function::erf::{erfc, erfc_inv};
pub use statrs::function::gamma::{gamma, ln_gamma};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln(1 + z)` accurate for small `|z|`.
pub fn ln_1p(z: Complex64) -> Complex64 {
    if z.norm() < 1e-2 {
        // alternating series, 10 terms is below 1e-20 relative here
        let mut term = z;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..=12 {
            sum += term / k as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
            term *= z;
        }
        sum
    } else {
        (Complex64::new(1.0, 0.0) + z).ln()
    }
}

/// `exp(z) − 1` accurate for small `|z|`.
pub fn exp_m1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-2 {
        let mut term = z;
        let mut sum = z;
        for k in 2..=10 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        z.exp() - 1.0
    }
}

/// `(1 + x)^a − 1 − a·x`, accurate when `|x|` is small.
pub fn pow1p_m1_mlin(x: Complex64, a: f64) -> Complex64 {
    if x.norm() < 1e-2 {
        let mut coef = a;
        let mut xp = x;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 2..=14 {
            coef *= (a - (k - 1) as f64) / k as f64;
            xp *= x;
            sum += xp * coef;
        }
        sum
    } else {
        exp_m1(ln_1p(x) * a) - x * a
    }
}

/// `(1 + x)^a − 1`.
pub fn pow1p_m1(x: Complex64, a: f64) -> Complex64 {
    exp_m1(ln_1p(x) * a)
}

/// `sin(a) − a`, accurate for small `a`.
pub fn sin_minus_id(a: f64) -> f64 {
    if a.abs() < 0.1 {
        let a2 = a * a;
        -a * a2 / 6.0
            * (1.0 - a2 / 20.0 * (1.0 - a2 / 42.0 * (1.0 - a2 / 72.0 * (1.0 - a2 / 110.0))))
    } else {
        a.sin() - a
    }
}

/// `e^{ia} − 1 − ia·c` with `c = 1/(1+r²)`, written so that small `a` keeps
/// full relative accuracy; `a = w·r`.
pub fn levy_integrand(w: f64, r: f64) -> Complex64 {
    let a = w * r;
    let half = (0.5 * a).sin();
    let re = -2.0 * half * half;
    let r2 = r * r;
    let im = sin_minus_id(a) + a * r2 / (1.0 + r2);
    Complex64::new(re, im)
}

/// Exponential integral `E1(t) = ∫_t^∞ e^{-u}/u du` for `t > 0`.
pub fn exp_integral_e1(t: f64) -> f64 {
    if t <= 0.0 {
        return f64::INFINITY;
    }
    if t < 1.0 {
        // power series
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -t / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - t.ln() + sum
    } else {
        // continued fraction (modified Lentz)
        let tiny = 1e-300;
        let mut b = t + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-t).exp()
    }
}
