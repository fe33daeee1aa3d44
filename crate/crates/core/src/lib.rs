//! Coverage probability and energy wastage of IoT uplinks that repeat frames
//! to extend coverage, in a cell of Poisson-distributed interferers.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod energy;
pub mod error;
pub mod interference;
pub mod inversion;
pub mod model;
pub mod montecarlo;
pub mod num;
pub mod quadrature;
pub mod validation;

pub use error::{Error, Result};

pub type Profile = model::RepetitionProfile<f64>;
pub type Cell = model::CellConfig<f64>;
pub type Radial = model::RadialLaw<f64>;
pub type Spec = interference::LaplaceSpec<f64>;
pub type Cdf = interference::InterferenceCdf<f64>;
pub type Energy = energy::EnergyParams<f64>;
pub type Inverter = inversion::EulerInverter<f64>;
