mod common;

use common::dir;
use levy_nested::kernel::MappingKernel;
use levy_nested::limits::*;
use levy_nested::special::gamma;
use levy_nested::*;
use proptest::prelude::*;

fn fit_grid() -> Vec<f64> {
    let (a, b) = FIT_U_RANGE;
    (0..FIT_U_POINTS)
        .map(|i| a + (b - a) * i as f64 / (FIT_U_POINTS - 1) as f64)
        .collect()
}

fn mass_within(fit: &BernsteinFit, v: f64, r: f64) -> f64 {
    fit.nodes
        .iter()
        .zip(&fit.masses)
        .filter(|(x, _)| (*x - v).abs() <= r)
        .map(|(_, w)| w)
        .sum()
}

#[test]
fn two_exponentials_give_two_clusters() {
    let u = fit_grid();
    let h: Vec<f64> = u
        .iter()
        .map(|x| 0.5 * (-1.3 * x).exp() + 0.5 * (-2.5 * x).exp())
        .collect();
    let fit = bernstein_invert(&u, &h, DEFAULT_NODE_COUNT).unwrap();
    assert!((mass_within(&fit, 1.3, 0.1) - 0.5).abs() < 0.01);
    assert!((mass_within(&fit, 2.5, 0.1) - 0.5).abs() < 0.01);
    assert!(fit.support.below + fit.support.above < 1e-6);

    // Γ carries (v−1)-weighted masses at 0.3 and 1.5
    let g = gamma_extract(&fit).unwrap();
    assert!((g.mass_near(0.3, 0.1) - 0.5 * 0.3).abs() < 0.01);
    assert!((g.mass_near(1.5, 0.1) - 0.5 * 1.5).abs() < 0.02);
}

#[test]
fn non_cm_input_is_rejected() {
    let u = fit_grid();
    let h: Vec<f64> = u
        .iter()
        .map(|x| (-1.5 * x).exp() * (1.0 + 0.3 * (4.0 * x).sin()))
        .collect();
    assert!(matches!(
        bernstein_invert(&u, &h, 64),
        Err(LevyError::InvalidParameter(_))
    ));
}

#[test]
fn gamma_of_point_mass() {
    let fit = BernsteinFit {
        nodes: vec![2.0],
        masses: vec![1.0],
        residual: 0.0,
        support: SupportReport {
            below: 0.0,
            inside: 1.0,
            above: 0.0,
        },
    };
    let g = gamma_extract(&fit).unwrap();
    assert_eq!(g.nodes, vec![1.0]);
    assert_eq!(g.masses, vec![1.0]);
    assert!((g.finiteness - 2.0).abs() < 1e-15);
    assert!(g.to_csv().starts_with("alpha,mass\n"));
    assert!(GammaMeasure::new(vec![2.5], vec![1.0]).is_err());
}

#[test]
fn stable_direction_round_trip() {
    let nu =
        PolarLevyMeasure::single(dir(&[1.0]), RadialMeasure::power_law(0.7, 1.0).unwrap()).unwrap();
    let rep = linf_pipeline(&nu, DEFAULT_NODE_COUNT).unwrap();
    let g = &rep.gammas[0];
    assert!(g.mass_near(0.7, 0.05) >= 0.98 * g.total_mass());
    assert!((g.total_mass() - 1.0).abs() < 0.02);
    assert!(rep.reconstruction.residual < 0.02);
    // ∫(r²∧1) r^{-1.7} dr = 1/1.3 + 1/0.7
    assert!((rep.c - (1.0 / 1.3 + 1.0 / 0.7)).abs() < 1e-9);
}

#[test]
fn one_term_gamma_rebuilds_power_law_exactly() {
    let nu =
        PolarLevyMeasure::single(dir(&[1.0]), RadialMeasure::power_law(1.2, 0.8).unwrap()).unwrap();
    let g = GammaMeasure::new(vec![1.2], vec![0.8]).unwrap();
    let rec = linf_reconstruct(&[g], &nu).unwrap();
    assert!(rec.residual < 1e-12);
    assert_eq!(rec.lambda_alpha, vec![vec![1.0]]);
}

fn mixture_battery() -> Vec<PolarLevyMeasure> {
    let mix = RadialMeasure::sum(vec![
        RadialMeasure::power_law(0.4, 1.0).unwrap(),
        RadialMeasure::power_law(1.3, 0.5).unwrap(),
    ])
    .unwrap();
    vec![
        PolarLevyMeasure::new(vec![
            common::comp(&[1.0], 1.0, mix.clone()),
            common::comp(&[-1.0], 0.5, RadialMeasure::power_law(1.0, 1.0).unwrap()),
        ])
        .unwrap(),
        PolarLevyMeasure::single(dir(&[0.6, 0.8]), mix).unwrap(),
    ]
}

#[test]
fn mixture_residual_shrinks_with_nodes() {
    for nu in mixture_battery() {
        let res: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| linf_pipeline(&nu, n).unwrap().reconstruction.residual)
            .collect();
        assert!(res[0] < 0.05, "{res:?}");
        assert!(res[1] < res[0] && res[2] < res[1], "{res:?}");
    }
}

#[test]
fn lambda_alpha_rows_are_distributions() {
    let nu = &mixture_battery()[0];
    let rep = linf_pipeline(nu, 64).unwrap();
    for (row, m) in rep
        .reconstruction
        .lambda_alpha
        .iter()
        .zip(&rep.reconstruction.gamma.masses)
    {
        let s: f64 = row.iter().sum();
        if *m > 0.0 {
            assert!((s - 1.0).abs() < 1e-12);
        } else {
            assert_eq!(s, 0.0);
        }
    }
}

#[test]
fn stable_constructor() {
    // α = 2: Gaussian
    let g = make_stable(2.0, &[], &[0.5, 0.0], 3.0).unwrap();
    assert_eq!(g.a, vec![vec![3.0, 0.0], vec![0.0, 3.0]]);
    assert!(g.levy.is_none());
    // α = 1 symmetric: C(z) = −π|z| with unit weights at ±1
    let c = make_stable(1.0, &[(dir(&[1.0]), 1.0), (dir(&[-1.0]), 1.0)], &[0.0], 1.0).unwrap();
    for z in [0.3, -1.0, 2.5] {
        let v = c.cumulant(&[z]).unwrap();
        assert!((v.re + std::f64::consts::PI * z.abs()).abs() < 1e-12 && v.im.abs() < 1e-12);
    }
    // α = 0.5 one-sided: tail scale·r^{-α}/α
    let h = make_stable(0.5, &[(dir(&[1.0]), 1.0)], &[0.0], 2.0).unwrap();
    let rm = &h.levy.as_ref().unwrap().directions[0].radial;
    assert!((rm.tail(4.0) - 2.0 * 4f64.powf(-0.5) / 0.5).abs() < 1e-12);
    assert!(make_stable(2.5, &[(dir(&[1.0]), 1.0)], &[0.0], 1.0).is_err());
}

#[test]
fn shift_parameter_scales_as_stable() {
    // C(cz) = c^α C(z) + i(c − c^α)⟨τ, z⟩ for α ≠ 1
    let tau = 0.4;
    let tr = make_stable(1.5, &[(dir(&[1.0]), 1.0)], &[tau], 0.7).unwrap();
    let (c, z) = (2.0f64, 0.6);
    let lhs = tr.cumulant(&[c * z]).unwrap();
    let rhs = tr.cumulant(&[z]).unwrap() * c.powf(1.5)
        + num_complex::Complex64::new(0.0, (c - c.powf(1.5)) * tau * z);
    assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
}

fn zs() -> Vec<Vec<f64>> {
    (1..=16)
        .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } * 4.0 * i as f64 / 16.0])
        .collect()
}

#[test]
fn fixed_points_of_finite_kernels() {
    for k in ["U", "Upsilon", "G"] {
        let kern = MappingKernel::from_name(k).unwrap();
        for a in [0.5, 1.0, 1.5] {
            let law = StableLaw::symmetric_1d(a, 1.0).unwrap();
            let rep = stable_fixed_point_check(&kern, &law, &zs()).unwrap();
            assert!(rep.passed && rep.kappa > 0.0, "{k} α={a}: {rep:?}");
        }
    }
    let ups = MappingKernel::from_name("Upsilon").unwrap();
    for a in [0.5, 1.0, 1.5, 2.0] {
        let law = StableLaw::symmetric_1d(a, 1.0).unwrap();
        let rep = stable_fixed_point_check(&ups, &law, &zs()).unwrap();
        assert!((rep.kappa - gamma(a + 1.0)).abs() < 1e-8);
    }
    let u = MappingKernel::from_name("U").unwrap();
    let rep =
        stable_fixed_point_check(&u, &StableLaw::symmetric_1d(1.0, 1.0).unwrap(), &zs()).unwrap();
    assert!((rep.kappa - 0.5).abs() < 1e-12);
}

#[test]
fn one_sided_fixed_point_has_drift() {
    // Υ has ∫f = 1, so the drift is (1 − κ)τ
    let law = StableLaw::new(1.5, vec![(dir(&[1.0]), 1.0)], vec![0.3], 1.0).unwrap();
    let rep = stable_fixed_point_check(&MappingKernel::from_name("Upsilon").unwrap(), &law, &zs())
        .unwrap();
    assert!(rep.passed);
    assert!((rep.drift[0] - (1.0 - gamma(2.5)) * 0.3).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthesized_h_is_recovered(atoms in prop::collection::vec((1.05..2.95f64, 0.05..1.0f64), 1..=4)) {
        let u = fit_grid();
        let h: Vec<f64> = u.iter().map(|x| atoms.iter().map(|(v, w)| w * (-x * v).exp()).sum()).collect();
        let fit = bernstein_invert(&u, &h, DEFAULT_NODE_COUNT).unwrap();
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        let first: f64 = atoms.iter().map(|(v, w)| v * w).sum();
        let fit_first: f64 = fit.nodes.iter().zip(&fit.masses).map(|(v, w)| v * w).sum();
        prop_assert!((fit.total_mass() / total - 1.0).abs() < 0.01);
        prop_assert!((fit_first / first - 1.0).abs() < 0.02);
        prop_assert!(fit.masses.iter().all(|m| *m >= 0.0));
    }
}
