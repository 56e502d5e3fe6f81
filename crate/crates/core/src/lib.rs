//! Numerical toolkit for boundary regularity of anisotropic stable operators
//! on domains whose boundary is only Dini-continuously differentiable.
//!
//! The building blocks are spherical measures, moduli of continuity with the
//! concavity upgrade, the one-dimensional profiles `zeta`, the nonlocal
//! operator itself, domain geometry with barriers, and a collocation solver.
//!
//! Everything is generic over a scalar implementing [`Real`]; `f64` aliases
//! are exported for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod config;
pub mod geometry;
pub mod measure;
pub mod modulus;
pub mod operator;
pub mod quad;
pub mod report;
pub mod solver;
pub mod zeta;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline(always)]
pub fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).unwrap()
}

/// Converts the working scalar back to `f64`.
#[inline(always)]
pub fn f<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap()
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("input modulus is not monotone: {0}")]
    NonMonotone(String),
    #[error("modulus lacks an upgrade certificate: {0}")]
    NotUpgraded(String),
    #[error("degenerate measure: {0}")]
    Degenerate(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("sign pattern violated in row {row}: {detail}")]
    SignPattern { row: usize, detail: String },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use geometry::{Barrier, BarrierKind, Domain, RegularizedDistance};
pub use measure::{OperatorSpec, SphericalMeasure};
pub use modulus::Modulus;
pub use operator::ProfiledFunction;
pub use solver::{DirichletResult, Grid};
pub use zeta::ZetaProfile;

pub type Measure64 = SphericalMeasure<f64>;
pub type OperatorSpec64 = OperatorSpec<f64>;
pub type Modulus64 = Modulus<f64>;
pub type Zeta64 = ZetaProfile<f64>;
pub type Domain64 = Domain<f64>;
pub type Barrier64 = Barrier<f64>;
pub type Grid64 = Grid<f64>;

pub type Measure32 = SphericalMeasure<f32>;
pub type Modulus32 = Modulus<f32>;
