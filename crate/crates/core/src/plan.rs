//! Impulse synthesis from waypoint schedules.
//!
//! Given impulse instants `t_1 < ... < t_N` and the positions the chaser must
//! occupy at those instants, every velocity impulse follows from the leg
//! transition matrices: the first from the known pre-burn velocity, interior
//! impulses from the arrival velocity of the incoming leg and the departure
//! velocity of the outgoing leg, and the last from the commanded final
//! velocity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cw::{self, stm_blocks, upsilon_from_stm, OrbitContext, RelativeState, UpsilonBlocks};
use crate::error::{Error, Result};
use crate::num::Real;

/// Impulse instants with their scheduled positions.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointSchedule<T: Real> {
    times: Vec<T>,
    waypoints: Vec<Vector3<T>>,
    v_initial: Vector3<T>,
    v_final_plus: Vector3<T>,
}

impl<T: Real> WaypointSchedule<T> {
    /// `v_initial` is the velocity at `times[0]` before the first burn;
    /// `v_final_plus` the velocity required after the last burn.
    pub fn new(
        times: Vec<T>,
        waypoints: Vec<Vector3<T>>,
        v_initial: Vector3<T>,
        v_final_plus: Vector3<T>,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Invalid(format!("schedule needs at least 2 impulses, got {}", times.len())));
        }
        if times.len() != waypoints.len() {
            return Err(Error::Invalid(format!(
                "{} impulse times but {} waypoints",
                times.len(),
                waypoints.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(format!("impulse times not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { times, waypoints, v_initial, v_final_plus })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn waypoints(&self) -> &[Vector3<T>] {
        &self.waypoints
    }

    pub fn v_initial(&self) -> Vector3<T> {
        self.v_initial
    }

    pub fn v_final_plus(&self) -> Vector3<T> {
        self.v_final_plus
    }

    /// Number of impulses.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn leg_duration(&self, leg: usize) -> T {
        self.times[leg + 1] - self.times[leg]
    }

    pub fn final_time(&self) -> T {
        self.times[self.times.len() - 1]
    }
}

/// A schedule together with its impulses and cost figures.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulsePlan<T: Real> {
    pub schedule: WaypointSchedule<T>,
    pub impulses: Vec<Vector3<T>>,
    pub total_effort: T,
    pub max_impulse: T,
    pub argmax_index: usize,
}

impl<T: Real> ImpulsePlan<T> {
    /// Wraps precomputed impulses, deriving effort and the largest impulse.
    pub fn from_impulses(schedule: WaypointSchedule<T>, impulses: Vec<Vector3<T>>) -> Result<Self> {
        if impulses.len() != schedule.len() {
            return Err(Error::Invalid(format!(
                "{} impulses for a {}-impulse schedule",
                impulses.len(),
                schedule.len()
            )));
        }
        let mut total_effort = T::zero();
        let mut max_impulse = T::zero();
        let mut argmax_index = 0;
        for (i, dv) in impulses.iter().enumerate() {
            let m = dv.norm();
            total_effort += m;
            if m > max_impulse {
                max_impulse = m;
                argmax_index = i;
            }
        }
        Ok(Self { schedule, impulses, total_effort, max_impulse, argmax_index })
    }
}

fn leg_upsilons<T: Real>(ctx: &OrbitContext<T>, schedule: &WaypointSchedule<T>) -> Result<Vec<UpsilonBlocks<T>>> {
    (0..schedule.len() - 1)
        .map(|leg| {
            let dt = schedule.leg_duration(leg);
            upsilon_from_stm(&stm_blocks(ctx, dt)).map_err(|condition| Error::SingularTransfer {
                leg,
                dt_s: dt.as_f64(),
                condition: condition.as_f64(),
            })
        })
        .collect()
}

/// Arrival velocity at `r_cur` after a ballistic leg of `dt` from `r_prev`.
pub fn velocity_at_node<T: Real>(ctx: &OrbitContext<T>, r_prev: &Vector3<T>, r_cur: &Vector3<T>, dt: T) -> Result<Vector3<T>> {
    let u = cw::upsilon_blocks(ctx, dt)?;
    Ok(-(u.ups1 * r_prev) - u.ups2 * r_cur)
}

/// Departure velocity at `r_cur` that reaches `r_next` after `dt`.
pub fn departure_velocity<T: Real>(ctx: &OrbitContext<T>, r_cur: &Vector3<T>, r_next: &Vector3<T>, dt: T) -> Result<Vector3<T>> {
    let u = cw::upsilon_blocks(ctx, dt)?;
    Ok(u.ups3 * r_cur + u.ups4 * r_next)
}

/// Computes every impulse of the schedule.
pub fn build_plan<T: Real>(ctx: &OrbitContext<T>, schedule: &WaypointSchedule<T>) -> Result<ImpulsePlan<T>> {
    let ups = leg_upsilons(ctx, schedule)?;
    let r = schedule.waypoints();
    let last = schedule.len() - 1;
    let mut impulses = Vec::with_capacity(schedule.len());

    impulses.push(ups[0].ups3 * r[0] + ups[0].ups4 * r[1] - schedule.v_initial());
    for i in 1..last {
        let inbound = &ups[i - 1];
        let outbound = &ups[i];
        impulses.push(inbound.ups1 * r[i - 1] + (inbound.ups2 + outbound.ups3) * r[i] + outbound.ups4 * r[i + 1]);
    }
    let inbound = &ups[last - 1];
    impulses.push(schedule.v_final_plus() + inbound.ups1 * r[last - 1] + inbound.ups2 * r[last]);

    ImpulsePlan::from_impulses(schedule.clone(), impulses)
}

/// State of the chaser at one impulse node when a plan is flown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState<T: Real> {
    pub t: T,
    pub scheduled: Vector3<T>,
    pub achieved: Vector3<T>,
    pub v_before: Vector3<T>,
    pub v_after: Vector3<T>,
}

/// Flies `plan` from `initial`: coast to the first impulse, then apply each
/// stored impulse and propagate leg by leg.
pub fn fly_plan<T: Real>(ctx: &OrbitContext<T>, plan: &ImpulsePlan<T>, initial: &RelativeState<T>) -> Vec<NodeState<T>> {
    let times = plan.schedule.times();
    let zero = Vector3::zeros();
    let mut state = cw::propagate(ctx, initial, &zero, times[0] - initial.t);
    let mut nodes = Vec::with_capacity(times.len());
    for (i, dv) in plan.impulses.iter().enumerate() {
        let node = NodeState {
            t: times[i],
            scheduled: plan.schedule.waypoints()[i],
            achieved: state.r,
            v_before: state.v,
            v_after: state.v + dv,
        };
        nodes.push(node);
        if i + 1 < times.len() {
            state = cw::propagate(ctx, &state, dv, times[i + 1] - times[i]);
        }
    }
    nodes
}

/// Largest distance between scheduled and achieved waypoints.
pub fn verify_plan<T: Real>(ctx: &OrbitContext<T>, plan: &ImpulsePlan<T>, initial: &RelativeState<T>) -> T {
    fly_plan(ctx, plan, initial)
        .iter()
        .map(|n| (n.achieved - n.scheduled).norm())
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// JSON form of a plan. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub times_s: Vec<f64>,
    pub waypoints_m: Vec<[f64; 3]>,
    pub v_initial_mps: [f64; 3],
    pub v_final_plus_mps: [f64; 3],
    pub impulses_mps: Vec<[f64; 3]>,
    pub total_effort_mps: f64,
    pub max_impulse_mps: f64,
    pub argmax_index: usize,
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl From<&ImpulsePlan<f64>> for PlanDocument {
    fn from(plan: &ImpulsePlan<f64>) -> Self {
        Self {
            times_s: plan.schedule.times().to_vec(),
            waypoints_m: plan.schedule.waypoints().iter().map(arr).collect(),
            v_initial_mps: arr(&plan.schedule.v_initial()),
            v_final_plus_mps: arr(&plan.schedule.v_final_plus()),
            impulses_mps: plan.impulses.iter().map(arr).collect(),
            total_effort_mps: plan.total_effort,
            max_impulse_mps: plan.max_impulse,
            argmax_index: plan.argmax_index,
        }
    }
}

impl PlanDocument {
    /// Rebuilds the plan; effort figures are recomputed from the stored impulses.
    pub fn to_plan(&self) -> Result<ImpulsePlan<f64>> {
        let schedule = WaypointSchedule::new(
            self.times_s.clone(),
            self.waypoints_m.iter().map(vec3).collect(),
            vec3(&self.v_initial_mps),
            vec3(&self.v_final_plus_mps),
        )?;
        ImpulsePlan::from_impulses(schedule, self.impulses_mps.iter().map(vec3).collect())
    }
}
