//! Mission configuration files (TOML).
//!
//! Every quantity carries its unit in the key name. Unknown keys are errors.
//!
//! ```toml
//! [orbit]
//! altitude_m = 400000.0
//!
//! [initial]
//! r_m = [-1000.0, -1000.0, 0.0]
//! v_mps = [10.0, -10.0, 0.0]
//!
//! [target]
//! r_m = [-100.0, 0.0, 0.0]
//! v_plus_mps = [0.0, 0.0, 0.0]
//!
//! [noise]
//! p1_pos_m2 = [100.0, 100.0, 100.0]
//! p1_vel_m2ps2 = [1.0, 1.0, 1.0]
//! q_pos_m2ps = [0.0, 0.0, 0.0]
//! q_vel_m2ps3 = [1e-12, 1e-12, 1e-12]
//! r_pos_m2 = [1.0, 1.0, 1.0]
//! r_vel_m2ps2 = [1e-2, 1e-2, 1e-2]
//!
//! [constraints]
//! j_max_mps = 30.0
//! dv_max_mps = 20.0
//! t_final_max_s = 7200.0
//! koe_axes_m = [50.0, 60.0, 70.0]
//! ae_axes_m = [10000.0, 10000.0, 10000.0]
//! ```
//!
//! `[search]` and `[output]` are optional.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Deserialize;

use crate::constraints::{Ellipsoid, MissionConstraints};
use crate::cw::{OrbitContext, RelativeState, EARTH_MU, EARTH_RADIUS_M};
use crate::design::{DesignProblem, R2Search};
use crate::error::{Error, Result};
use crate::uncertainty::UncertaintyModel;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub orbit: OrbitSection,
    pub initial: InitialSection,
    pub target: TargetSection,
    pub noise: NoiseSection,
    pub constraints: ConstraintSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    pub altitude_m: Option<f64>,
    pub a_t_m: Option<f64>,
    pub mu_m3ps2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub t_s: f64,
    pub r_m: [f64; 3],
    pub v_mps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub r_m: [f64; 3],
    #[serde(default)]
    pub v_plus_mps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub p1_pos_m2: [f64; 3],
    pub p1_vel_m2ps2: [f64; 3],
    pub q_pos_m2ps: [f64; 3],
    pub q_vel_m2ps3: [f64; 3],
    pub r_pos_m2: [f64; 3],
    pub r_vel_m2ps2: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub j_max_mps: f64,
    pub dv_max_mps: f64,
    pub t_final_max_s: f64,
    pub koe_axes_m: [f64; 3],
    pub ae_axes_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub coarse_dt_s: f64,
    pub refine_dt_s: f64,
    pub sample_step_s: f64,
    pub r2_x_range_m: Option<[f64; 2]>,
    pub r2_y_range_m: Option<[f64; 2]>,
    pub r2_coarse_pitch_m: f64,
    pub r2_fine_pitch_m: f64,
    pub fixed_t1_s: Option<f64>,
    pub fixed_t3_s: Option<f64>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            coarse_dt_s: 10.0,
            refine_dt_s: 0.1,
            sample_step_s: 1.0,
            r2_x_range_m: None,
            r2_y_range_m: None,
            r2_coarse_pitch_m: 50.0,
            r2_fine_pitch_m: 0.1,
            fixed_t1_s: None,
            fixed_t3_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

fn at(key: &str, e: Error) -> Error {
    Error::Invalid(format!("{key}: {e}"))
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl MissionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn orbit(&self) -> Result<OrbitContext<f64>> {
        let mu = self.orbit.mu_m3ps2.unwrap_or(EARTH_MU);
        let a_t = match (self.orbit.altitude_m, self.orbit.a_t_m) {
            (Some(h), None) => EARTH_RADIUS_M + h,
            (None, Some(a)) => a,
            _ => return Err(Error::Invalid("orbit: give exactly one of altitude_m and a_t_m".into())),
        };
        OrbitContext::new(mu, a_t).map_err(|e| at("orbit", e))
    }

    pub fn initial_state(&self) -> RelativeState<f64> {
        RelativeState::new(self.initial.t_s, vec3(self.initial.r_m), vec3(self.initial.v_mps))
    }

    pub fn uncertainty(&self, ctx: &OrbitContext<f64>) -> Result<UncertaintyModel<f64>> {
        let n = &self.noise;
        let join = |a: [f64; 3], b: [f64; 3]| [a[0], a[1], a[2], b[0], b[1], b[2]];
        UncertaintyModel::relative_gps(
            ctx,
            join(n.p1_pos_m2, n.p1_vel_m2ps2),
            join(n.q_pos_m2ps, n.q_vel_m2ps3),
            join(n.r_pos_m2, n.r_vel_m2ps2),
        )
        .map_err(|e| at("noise", e))
    }

    pub fn mission_constraints(&self) -> Result<MissionConstraints<f64>> {
        let c = &self.constraints;
        let ell = |key: &str, a: [f64; 3]| Ellipsoid::new(a[0], a[1], a[2]).map_err(|e| at(key, e));
        let koe = ell("constraints.koe_axes_m", c.koe_axes_m)?;
        let ae = ell("constraints.ae_axes_m", c.ae_axes_m)?;
        MissionConstraints::new(c.j_max_mps, c.dv_max_mps, c.t_final_max_s, koe, ae).map_err(|e| at("constraints", e))
    }

    /// Full design problem. The mid-waypoint box defaults to the approach
    /// ellipsoid's in-plane bounding box.
    pub fn problem(&self) -> Result<DesignProblem> {
        let ctx = self.orbit()?;
        let model = self.uncertainty(&ctx)?;
        let mc = self.mission_constraints()?;
        let s = &self.search;
        let ae = mc.ae.semi_axes();
        let x = s.r2_x_range_m.unwrap_or([-ae.x, ae.x]);
        let y = s.r2_y_range_m.unwrap_or([-ae.y, ae.y]);
        let problem = DesignProblem {
            ctx,
            initial: self.initial_state(),
            target_r: vec3(self.target.r_m),
            target_v_plus: vec3(self.target.v_plus_mps),
            model,
            mc,
            delta_t: s.coarse_dt_s,
            refine_t: s.refine_dt_s,
            sample_step: s.sample_step_s,
            r2: R2Search { x_range: (x[0], x[1]), y_range: (y[0], y[1]), coarse_pitch: s.r2_coarse_pitch_m, fine_pitch: s.r2_fine_pitch_m },
            fixed_t1: s.fixed_t1_s,
            fixed_t3: s.fixed_t3_s,
        };
        problem.validate().map_err(|e| at("search", e))?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[orbit]
altitude_m = 400000.0

[initial]
r_m = [-1000.0, -1000.0, 0.0]
v_mps = [10.0, -10.0, 0.0]

[target]
r_m = [-100.0, 0.0, 0.0]

[noise]
p1_pos_m2 = [100.0, 100.0, 100.0]
p1_vel_m2ps2 = [1.0, 1.0, 1.0]
q_pos_m2ps = [0.0, 0.0, 0.0]
q_vel_m2ps3 = [1e-12, 1e-12, 1e-12]
r_pos_m2 = [1.0, 1.0, 1.0]
r_vel_m2ps2 = [1e-2, 1e-2, 1e-2]

[constraints]
j_max_mps = 30.0
dv_max_mps = 20.0
t_final_max_s = 7200.0
koe_axes_m = [50.0, 60.0, 70.0]
ae_axes_m = [10000.0, 10000.0, 10000.0]
"#;

    #[test]
    fn minimal_config_builds_problem() {
        let cfg = MissionConfig::from_toml(MINIMAL).unwrap();
        let p = cfg.problem().unwrap();
        assert!((p.ctx.mean_motion() - 0.0011313666536110223).abs() < 1e-15);
        assert_eq!(p.delta_t, 10.0);
        assert_eq!(p.r2.x_range, (-1e4, 1e4));
        assert_eq!(p.target_v_plus, Vector3::zeros());
        assert_eq!(cfg.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn unknown_key_rejected_with_its_name() {
        let text = MINIMAL.replace("j_max_mps = 30.0", "j_max_mps = 30.0\njmax = 3.0");
        let err = MissionConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("jmax"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_section() {
        let text = MINIMAL.replace("koe_axes_m = [50.0, 60.0, 70.0]", "koe_axes_m = [50.0, -60.0, 70.0]");
        let err = MissionConfig::from_toml(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("constraints.koe_axes_m"), "{err}");
        let text = MINIMAL.replace("altitude_m = 400000.0", "altitude_m = 400000.0\na_t_m = 7e6");
        assert!(MissionConfig::from_toml(&text).unwrap().problem().is_err());
    }
}
