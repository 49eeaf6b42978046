//! Multiple-impulse rendezvous design in the Clohessy-Wiltshire frame, with
//! navigation-covariance prediction and safe-corridor constraints.
//!
//! The math modules are generic over the scalar type; the aliases below fix
//! it to `f64`.

pub mod cli;
pub mod config;
pub mod constraints;
pub mod cw;
pub mod design;
pub mod error;
pub mod linalg;
pub mod num;
pub mod plan;
pub mod uncertainty;

pub use design::{DesignProblem, DesignResult};
pub use error::{Error, Result};
pub use num::Real;

pub type OrbitContext = cw::OrbitContext<f64>;
pub type RelativeState = cw::RelativeState<f64>;
pub type StmBlocks = cw::StmBlocks<f64>;
pub type UpsilonBlocks = cw::UpsilonBlocks<f64>;
pub type WaypointSchedule = plan::WaypointSchedule<f64>;
pub type ImpulsePlan = plan::ImpulsePlan<f64>;
pub type UncertaintyModel = uncertainty::UncertaintyModel<f64>;
pub type CovarianceState = uncertainty::CovarianceState<f64>;
pub type Ellipsoid = constraints::Ellipsoid<f64>;
pub type MissionConstraints = constraints::MissionConstraints<f64>;

#[cfg(test)]
mod tests;
