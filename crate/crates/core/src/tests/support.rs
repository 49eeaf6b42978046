//! Shared fixtures: the 400 km reference scenario.

use std::path::PathBuf;

use nalgebra::Vector3;

use crate::config::MissionConfig;
use crate::constraints::{Ellipsoid, MissionConstraints};
use crate::cw::{OrbitContext, RelativeState};
use crate::design::DesignProblem;

pub fn leo() -> OrbitContext<f64> {
    OrbitContext::earth_altitude(400e3).unwrap()
}

pub fn initial() -> RelativeState<f64> {
    RelativeState::new(0.0, Vector3::new(-1000.0, -1000.0, 0.0), Vector3::new(10.0, -10.0, 0.0))
}


pub fn koe() -> Ellipsoid<f64> {
    Ellipsoid::new(50.0, 60.0, 70.0).unwrap()
}

pub fn ae() -> Ellipsoid<f64> {
    Ellipsoid::new(1e4, 1e4, 1e4).unwrap()
}

pub fn constraints(j_max: f64, dv_max: f64, t_final_max: f64) -> MissionConstraints<f64> {
    MissionConstraints::new(j_max, dv_max, t_final_max, koe(), ae()).unwrap()
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn case(n: u8) -> DesignProblem {
    MissionConfig::load(&config_path(&format!("case{n}.toml"))).unwrap().problem().unwrap()
}
