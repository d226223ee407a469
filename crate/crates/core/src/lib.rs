//! Infinitely divisible laws given by Lévy–Khintchine triplets with polar
//! Lévy measures, stochastic-integral mappings acting on them, and numerical
//! tests for the classes U, B, L, T, G and their nested subclasses.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod expr;
pub mod grid;
pub mod kernel;
pub mod limits;
pub mod measure;
pub mod montecarlo;
pub mod quad;
pub mod special;
pub mod transform;

pub use error::{LevyError, Result};
pub use measure::{
    cumulant_eval, h_function, log_moment, normalize_polar, radial_tail, Atom, CompiledTriplet,
    Cumulant, Direction, LevyTriplet, PolarComponent, PolarLevyMeasure, RadialMeasure, StableLaw,
};
