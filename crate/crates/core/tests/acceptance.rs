//! Acceptance criteria 1–11. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

mod common;

use std::f64::consts::{E, PI};
use std::time::Instant;

use levy_nested::classify::*;
use levy_nested::grid::{log_grid, GridDensity};
use levy_nested::kernel::MappingKernel;
use levy_nested::limits::*;
use levy_nested::montecarlo::{compare_cf, sample_integral, SimConfig};
use levy_nested::transform::*;
use levy_nested::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn kernel(name: &str) -> MappingKernel {
    MappingKernel::from_name(name).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Composite Simpson on (a, b) with n (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

// ∫_0^∞ t^k p(t) dt for the test kernels, computed here by Simpson.
fn kernel_moment_oracle(name: &str, k: f64) -> f64 {
    match name {
        // substitute t = x² to remove the t^k singularity for k < 1
        "U" => simpson(|x: f64| 2.0 * x * x.powf(2.0 * k), 0.0, 1.0, 20_000),
        "Upsilon" => simpson(
            |x: f64| 2.0 * x * x.powf(2.0 * k) * (-x * x).exp(),
            0.0,
            8.0,
            40_000,
        ),
        "G" => simpson(
            |x: f64| 2.0 * x * x.powf(2.0 * k) * (-x.powi(4)).exp(),
            0.0,
            3.0,
            40_000,
        ),
        _ => unreachable!(),
    }
}

fn criterion_1() -> Outcome {
    let g = LevyTriplet::gaussian(vec![vec![1.0]]).unwrap();
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (name, closed) in [
        ("Upsilon", 2.0),
        ("U", 1.0 / 3.0),
        ("G", PI.sqrt() / 4.0),
        ("Phi", 0.5),
    ] {
        let a = map_triplet(&kernel(name), &g).unwrap().a[0][0];
        // ∫ f(s)² ds = ∫ t² p(t) dt; for Φ, f(s) = e^{-s} gives ∫_0^∞ e^{-2s} ds
        let quad = if name == "Phi" {
            simpson(|s| (-2.0 * s).exp(), 0.0, 40.0, 40_000)
        } else {
            kernel_moment_oracle(name, 2.0)
        };
        worst = worst.max((a - quad).abs()).max((a - closed).abs());
        rows.push(format!("{name}={a:.9}"));
    }
    check(
        worst < 1e-8,
        format!("{} max err {worst:.2e}", rows.join(" ")),
    )
}

fn criterion_2() -> Outcome {
    let atom = RadialMeasure::atom(1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for (name, p, t0) in [
        (
            "Upsilon",
            (|u: f64| (-u).exp()) as fn(f64) -> f64,
            f64::INFINITY,
        ),
        ("U", |_| 1.0, 1.0),
        ("G", |u| (-u * u).exp(), f64::INFINITY),
    ] {
        let RadialMeasure::Grid(g) = map_radial(&kernel(name), &atom).unwrap() else {
            return Err(format!("{name}: mapped atom is not a grid density"));
        };
        for (&u, &v) in g.radii().iter().zip(g.values()) {
            // the one-sided limits at a jump of p are both admissible
            if (u - t0).abs() < 1e-12 {
                continue;
            }
            let want = if u < t0 { p(u) } else { 0.0 };
            worst = worst.max((v - want).abs());
        }
    }
    check(
        worst < 1e-6,
        format!("sup error {worst:.2e} over Upsilon, U, G"),
    )
}

fn criterion_3() -> Outcome {
    let zs: Vec<Vec<f64>> = (1..=16)
        .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } * 0.25 * i as f64])
        .collect();
    let mut worst_dev = 0.0f64;
    let mut worst_kappa = 0.0f64;
    let mut failed = Vec::new();
    for name in ["U", "Upsilon", "G"] {
        for alpha in [0.5, 1.0, 1.5] {
            let law = StableLaw::symmetric_1d(alpha, 1.0).unwrap();
            let rep = stable_fixed_point_check(&kernel(name), &law, &zs).unwrap();
            let oracle = kernel_moment_oracle(name, alpha);
            let closed = match name {
                "U" => 1.0 / (alpha + 1.0),
                "Upsilon" => gamma(alpha + 1.0),
                _ => 0.5 * gamma((alpha + 1.0) / 2.0),
            };
            let kerr = (rep.kappa - oracle).abs().max((rep.kappa - closed).abs());
            worst_dev = worst_dev.max(rep.max_deviation);
            worst_kappa = worst_kappa.max(kerr);
            if !(rep.max_deviation < 1e-6 && kerr < 1e-8) {
                failed.push(format!("{name}/{alpha}"));
            }
        }
    }
    check(
        failed.is_empty(),
        format!("max rel deviation {worst_dev:.2e}, max kappa error {worst_kappa:.2e} {failed:?}"),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for (a, b) in [("U", "Upsilon"), ("Upsilon", "G")] {
        for (_, tr) in common::battery() {
            let z = common::z_grid(tr.dimension, 12, 4.0);
            let rep = verify_commutativity(&kernel(a), &kernel(b), &tr, &z).unwrap();
            worst = worst.max(rep.max_deviation);
        }
    }
    check(
        worst < 1e-6,
        format!("max deviation {worst:.2e} over 2 pairs x 5 laws"),
    )
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for (_, tr) in common::battery() {
        if tr.log_moment_order() < 1 {
            continue;
        }
        let z = common::z_grid(tr.dimension, 12, 4.0);
        worst = worst.max(verify_psi_identity(&tr, &z).unwrap().max_deviation);
    }
    check(worst < 1e-6, format!("max deviation {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let single = |rm| PolarLevyMeasure::single(common::dir(&[1.0]), rm).unwrap();
    let measures = [
        single(
            RadialMeasure::atoms(vec![
                Atom { r: E, mass: 1.0 },
                Atom {
                    r: E * E,
                    mass: 0.5,
                },
            ])
            .unwrap(),
        ),
        single(RadialMeasure::tempered(0.5, 1.0, 1.0).unwrap()),
        single(RadialMeasure::tempered(-0.5, 2.0, 0.5).unwrap()),
    ];
    let mut worst = 0.0f64;
    for nu in &measures {
        for m in 0..=4 {
            let r = verify_log_moment_identity(nu, m).unwrap();
            worst = worst.max((r.lhs - r.rhs).abs());
        }
    }
    // independent value for the atoms: (1 + 0.5·2^{m+1}) / (m+1)
    let mut oracle = 0.0f64;
    for m in 0..=4 {
        let r = verify_log_moment_identity(&measures[0], m).unwrap();
        let want = (1.0 + 0.5 * 2f64.powi(m as i32 + 1)) / (m as f64 + 1.0);
        oracle = oracle.max((r.lhs - want).abs());
    }
    check(
        worst < 1e-6 && oracle < 1e-6,
        format!("max |lhs-rhs| {worst:.2e}, atoms vs closed form {oracle:.2e}"),
    )
}

fn random_density(rng: &mut ChaCha8Rng) -> (String, Box<dyn Fn(f64) -> f64>) {
    let exponent = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            rng.random_range(-0.9..-0.1)
        } else {
            rng.random_range(0.1..1.5)
        }
    };
    match rng.random_range(0..4) {
        0 => {
            let n = rng.random_range(1..=3);
            let terms: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| {
                    (
                        rng.random_range(0.1..2.0),
                        exponent(rng),
                        rng.random_range(0.2..3.0),
                    )
                })
                .collect();
            (
                format!("mixture{terms:?}"),
                Box::new(move |r: f64| {
                    terms
                        .iter()
                        .map(|(c, a, b)| c * r.powf(-a - 1.0) * (-b * r).exp())
                        .sum()
                }),
            )
        }
        1 => {
            let k = rng.random_range(0.2..2.0);
            (
                format!("bump({k})"),
                Box::new(move |r: f64| r.powf(k) * (-r).exp()),
            )
        }
        2 => {
            let b = rng.random_range(0.1..3.0);
            (
                format!("halfgauss({b})"),
                Box::new(move |r: f64| (-b * r * r).exp()),
            )
        }
        _ => {
            let (a, cut) = (exponent(rng), rng.random_range(0.5..20.0));
            (
                format!("truncated({a},{cut})"),
                Box::new(move |r: f64| if r < cut { r.powf(-a - 1.0) } else { 0.0 }),
            )
        }
    }
}

fn criterion_7() -> Outcome {
    let seed =
        RadialMeasure::atoms(vec![Atom { r: 0.5, mass: 0.7 }, Atom { r: 2.0, mass: 0.4 }]).unwrap();
    let opts = ClassifyOptions::default();
    let mut misses = Vec::new();
    for (k, c) in [
        ("U", Class::U),
        ("Upsilon", Class::B),
        ("Phi", Class::L),
        ("Psi", Class::T),
        ("G", Class::G),
    ] {
        let mapped = map_radial(&kernel(k), &seed).unwrap();
        let nu = PolarLevyMeasure::single(common::dir(&[1.0]), mapped).unwrap();
        if classify_measure(Some(&nu), &opts).unwrap().status(c) != Status::Pass {
            misses.push(k.to_string());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut violations = 0;
    for _ in 0..50 {
        let (label, f) = random_density(&mut rng);
        let grid = GridDensity::from_fn(log_grid(1e-4, 1e3, 600), f).unwrap();
        let nu = PolarLevyMeasure::single(common::dir(&[1.0]), RadialMeasure::Grid(grid)).unwrap();
        let v = classify_measure(Some(&nu), &opts).unwrap();
        if !v.raw_inclusion_violations().is_empty() {
            violations += 1;
            misses.push(label);
        }
    }
    check(
        misses.is_empty(),
        format!("5/5 seeds on target unless listed, {violations} inclusion violations in 50 densities {misses:?}"),
    )
}

fn criterion_8() -> Outcome {
    let u_kernel = kernel("U");
    // h decays like exp(-c e^u) on the right, so the central-difference
    // truncation error is kept small relative to h itself
    let step = 1e-4;
    let mut worst = 0.0f64;
    for seed in [
        RadialMeasure::tempered(0.5, 1.0, 1.0).unwrap(),
        RadialMeasure::tempered(-0.5, 1.0, 2.0).unwrap(),
    ] {
        let mapped = map_radial(&u_kernel, &seed).unwrap();
        for i in 0..=160 {
            let u = -4.0 + 0.05 * i as f64;
            let fd =
                -(h_function(&mapped, u + step) - h_function(&mapped, u - step)) / (2.0 * step);
            let want = h_function(&seed, u);
            worst = worst.max((fd - want).abs() / want);
        }
    }
    check(
        worst < 1e-3,
        format!("max relative error {worst:.2e} on u in [-4, 4]"),
    )
}

fn criterion_9() -> Outcome {
    let seed = common::atom_seed();
    let mut rows = Vec::new();
    let mut ok = true;
    for m in 1..=4u32 {
        let it = iterate_map(&kernel("Upsilon"), &seed, m).unwrap();
        let lv = nested_level(it.triplet.levy.as_ref(), m, 1e-6).unwrap();
        let pass = lv.reports.iter().all(|r| r.passes_through(m as usize));
        ok &= pass;
        rows.push(format!("m={m}:{}", if pass { "ok" } else { "fail" }));
    }
    check(ok, rows.join(" "))
}

fn criterion_10() -> Outcome {
    let nu = PolarLevyMeasure::single(
        common::dir(&[1.0]),
        RadialMeasure::power_law(0.7, 1.0).unwrap(),
    )
    .unwrap();
    let rep = linf_pipeline(&nu, DEFAULT_NODE_COUNT).unwrap();
    let g = &rep.gammas[0];
    let share = g.mass_near(0.7, 0.05) / g.total_mass();
    let residual = rep.reconstruction.residual;

    let (a, b) = FIT_U_RANGE;
    let u: Vec<f64> = (0..FIT_U_POINTS)
        .map(|i| a + (b - a) * i as f64 / (FIT_U_POINTS - 1) as f64)
        .collect();
    let h: Vec<f64> = u
        .iter()
        .map(|x| 0.5 * (-1.3 * x).exp() + 0.5 * (-2.5 * x).exp())
        .collect();
    let fit = bernstein_invert(&u, &h, DEFAULT_NODE_COUNT).unwrap();
    let near = |v: f64| -> f64 {
        fit.nodes
            .iter()
            .zip(&fit.masses)
            .filter(|(x, _)| (*x - v).abs() <= 0.1)
            .map(|(_, w)| w)
            .sum()
    };
    let (m1, m2) = (near(1.3), near(2.5));
    let cluster_err = ((m1 - 0.5).abs() / 0.5).max((m2 - 0.5).abs() / 0.5);
    check(
        share >= 0.98 && residual < 0.02 && cluster_err < 0.02,
        format!("stable share {share:.5}, residual {residual:.2e}, clusters {m1:.4}/{m2:.4}"),
    )
}

fn criterion_11() -> Outcome {
    let tempered = {
        let nu = PolarLevyMeasure::new(vec![
            common::comp(&[1.0], 1.0, RadialMeasure::tempered(0.5, 1.0, 1.0).unwrap()),
            common::comp(
                &[-1.0],
                1.0,
                RadialMeasure::tempered(0.5, 1.0, 1.0).unwrap(),
            ),
        ])
        .unwrap();
        LevyTriplet::pure_jump(nu).unwrap()
    };
    let laws = [
        (
            "gaussian",
            LevyTriplet::new(vec![vec![1.0]], vec![0.3], None).unwrap(),
        ),
        ("atom", common::atom_seed()),
        ("tempered", tempered),
    ];
    let z: Vec<Vec<f64>> = (1..=16)
        .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } * 0.125 * i as f64])
        .collect();
    let cfg = SimConfig::default();
    let mut worst_ratio = 0.0f64;
    let mut slowest = 0.0f64;
    let mut failed = Vec::new();
    for k in ["U", "Upsilon", "G"] {
        let kern = kernel(k);
        for (name, tr) in &laws {
            let t = Instant::now();
            let s = sample_integral(&kern, tr, &cfg).unwrap();
            let expected = map_cumulant_fn(&kern, &CumulantFn::from_triplet(tr).unwrap()).unwrap();
            let rep = compare_cf(&s, &expected, &z).unwrap();
            let secs = t.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            worst_ratio = worst_ratio.max(rep.max_deviation / rep.radius);
            if !rep.passed || secs >= 60.0 {
                failed.push(format!("{k}/{name}"));
            }
        }
    }
    check(
        failed.is_empty(),
        format!(
            "n={}, worst deviation {worst_ratio:.2} x radius, slowest case {slowest:.1}s {failed:?}",
            cfg.n_samples
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("Gaussian scale factors", criterion_1),
        ("atom maps to kernel density", criterion_2),
        ("stable fixed points", criterion_3),
        ("commutativity", criterion_4),
        ("Psi identity", criterion_5),
        ("log-moment identity", criterion_6),
        ("class correspondence and inclusions", criterion_7),
        ("h-calculus", criterion_8),
        ("nested monotonicity", criterion_9),
        ("Bernstein / L_inf pipeline", criterion_10),
        ("Monte Carlo CF", criterion_11),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failures,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
