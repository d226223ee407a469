#![allow(dead_code)]

use levy_nested::measure::{
    Atom, Direction, LevyTriplet, PolarComponent, PolarLevyMeasure, RadialMeasure,
};

pub fn dir(v: &[f64]) -> Direction {
    Direction::from_vector(v).unwrap()
}

pub fn comp(xi: &[f64], weight: f64, radial: RadialMeasure) -> PolarComponent {
    PolarComponent {
        xi: dir(xi),
        weight,
        radial,
    }
}

pub fn gauss_drift() -> LevyTriplet {
    LevyTriplet::new(vec![vec![1.0]], vec![0.3], None).unwrap()
}

pub fn atom_seed() -> LevyTriplet {
    let nu = PolarLevyMeasure::single(dir(&[1.0]), RadialMeasure::atom(1.0, 1.0).unwrap()).unwrap();
    LevyTriplet::pure_jump(nu).unwrap()
}

pub fn two_sided_atoms() -> LevyTriplet {
    let nu = PolarLevyMeasure::new(vec![
        comp(&[1.0], 1.0, RadialMeasure::atom(1.0, 1.0).unwrap()),
        comp(
            &[-1.0],
            1.0,
            RadialMeasure::atoms(vec![Atom { r: 0.5, mass: 0.7 }, Atom { r: 2.0, mass: 0.4 }])
                .unwrap(),
        ),
    ])
    .unwrap();
    LevyTriplet::pure_jump(nu).unwrap()
}

pub fn tempered_pair() -> LevyTriplet {
    let nu = PolarLevyMeasure::new(vec![
        comp(&[1.0], 1.0, RadialMeasure::tempered(0.5, 1.0, 1.0).unwrap()),
        comp(
            &[-1.0],
            0.5,
            RadialMeasure::tempered(-0.5, 1.0, 2.0).unwrap(),
        ),
    ])
    .unwrap();
    LevyTriplet::new(vec![vec![0.0]], vec![0.1], Some(nu)).unwrap()
}

pub fn mixed_1d() -> LevyTriplet {
    let nu = PolarLevyMeasure::new(vec![
        comp(&[1.0], 0.6, RadialMeasure::atom(1.5, 1.0).unwrap()),
        comp(
            &[-1.0],
            1.0,
            RadialMeasure::tempered(0.8, 0.5, 1.5).unwrap(),
        ),
    ])
    .unwrap();
    LevyTriplet::new(vec![vec![0.5]], vec![-0.2], Some(nu)).unwrap()
}

pub fn symmetric_stable(alpha: f64) -> LevyTriplet {
    let nu = PolarLevyMeasure::symmetric_1d(RadialMeasure::power_law(alpha, 1.0).unwrap()).unwrap();
    LevyTriplet::pure_jump(nu).unwrap()
}

pub fn planar_mixed() -> LevyTriplet {
    let nu = PolarLevyMeasure::new(vec![
        comp(&[1.0, 0.0], 1.0, RadialMeasure::atom(1.0, 0.8).unwrap()),
        comp(
            &[0.6, 0.8],
            0.7,
            RadialMeasure::tempered(0.3, 1.0, 1.5).unwrap(),
        ),
    ])
    .unwrap();
    LevyTriplet::new(
        vec![vec![0.4, 0.1], vec![0.1, 0.3]],
        vec![0.2, -0.1],
        Some(nu),
    )
    .unwrap()
}

/// Five laws whose mapped Lévy measures live well inside the default radial grid.
pub fn battery() -> Vec<(&'static str, LevyTriplet)> {
    vec![
        ("gauss+drift", gauss_drift()),
        ("atoms", two_sided_atoms()),
        ("tempered", tempered_pair()),
        ("mixed", mixed_1d()),
        ("planar", planar_mixed()),
    ]
}

pub fn z_grid(dim: usize, n: usize, zmax: f64) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|k| {
            let s = zmax * k as f64 / n as f64;
            match dim {
                1 => vec![if k % 2 == 0 { s } else { -s }],
                _ => {
                    let th = 0.7 * k as f64;
                    vec![s * th.cos(), s * th.sin()]
                }
            }
        })
        .collect()
}
