//! Mission feasibility: effort, thruster limit, flight time and the safe
//! corridor between a keep-out ellipsoid (KOE) and an approach ellipsoid (AE),
//! both centred on the target.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::cw::{self, sample_times, stm_blocks, OrbitContext, RelativeState};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::plan::{fly_plan, ImpulsePlan};

/// Target-centred, axis-aligned ellipsoid `rᵀ L r = 1` with
/// `L = Diag(1/a², 1/b², 1/c²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid<T: Real> {
    axes: Vector3<T>,
    inv_sq: Vector3<T>,
}

impl<T: Real> Ellipsoid<T> {
    pub fn new(a: T, b: T, c: T) -> Result<Self> {
        if !(a > T::zero() && b > T::zero() && c > T::zero()) {
            return Err(Error::Invalid(format!("ellipsoid semi-axes must be positive: {:?}", (a, b, c))));
        }
        let axes = Vector3::new(a, b, c);
        Ok(Self { axes, inv_sq: axes.map(|x| T::one() / (x * x)) })
    }

    pub fn semi_axes(&self) -> Vector3<T> {
        self.axes
    }

    pub fn l_matrix(&self) -> Matrix3<T> {
        Matrix3::from_diagonal(&self.inv_sq)
    }

    /// `rᵀ L r`.
    #[inline]
    pub fn form(&self, r: &Vector3<T>) -> T {
        r.component_mul(r).dot(&self.inv_sq)
    }

    /// Same ellipsoid with every axis multiplied by `s`.
    pub fn scaled(&self, s: T) -> Result<Self> {
        Self::new(self.axes.x * s, self.axes.y * s, self.axes.z * s)
    }
}

/// Which boundary of the corridor was crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    #[serde(rename = "KOE")]
    KeepOut,
    #[serde(rename = "AE")]
    Approach,
}

/// `None` when `r` is inside the corridor (outside or on the KOE, inside or on the AE).
#[inline]
pub fn corridor_status<T: Real>(koe: &Ellipsoid<T>, ae: &Ellipsoid<T>, r: &Vector3<T>) -> Option<ViolationKind> {
    if !(koe.form(r) >= T::one()) {
        Some(ViolationKind::KeepOut)
    } else if !(ae.form(r) <= T::one()) {
        Some(ViolationKind::Approach)
    } else {
        None
    }
}

pub fn corridor_ok<T: Real>(koe: &Ellipsoid<T>, ae: &Ellipsoid<T>, r: &Vector3<T>) -> bool {
    corridor_status(koe, ae, r).is_none()
}

/// A corridor violation found while sampling a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub t_s: f64,
    pub r_m: [f64; 3],
    pub kind: ViolationKind,
}

/// First corridor violation of the ballistic arc starting at `depart`
/// (velocity already includes any impulse) over `[0, dt]`.
pub fn first_violation<T: Real>(
    ctx: &OrbitContext<T>,
    depart: &RelativeState<T>,
    dt: T,
    koe: &Ellipsoid<T>,
    ae: &Ellipsoid<T>,
    sample_step: T,
) -> Option<Violation> {
    sample_times(T::zero(), dt, sample_step).into_iter().find_map(|tau| {
        let r = stm_blocks(ctx, tau).position(&depart.r, &depart.v);
        corridor_status(koe, ae, &r).map(|kind| Violation {
            t_s: (depart.t + tau).as_f64(),
            r_m: [r.x.as_f64(), r.y.as_f64(), r.z.as_f64()],
            kind,
        })
    })
}

/// Whether the arc from `depart` stays in the corridor at every sample of
/// `[0, dt_leg]`, both endpoints included.
pub fn leg_in_corridor<T: Real>(
    ctx: &OrbitContext<T>,
    depart: &RelativeState<T>,
    dt_leg: T,
    koe: &Ellipsoid<T>,
    ae: &Ellipsoid<T>,
    sample_step: T,
) -> bool {
    first_violation(ctx, depart, dt_leg, koe, ae, sample_step).is_none()
}

/// Corridor test of the leg joining waypoints `r_i` and `r_next`, written as a
/// quadratic form in the two waypoints rather than through the propagated
/// state: with `M(t) = Φrr(t) + Φrv(t) Υ3(Δt)` and `N(t) = Φrv(t) Υ4(Δt)`,
/// `r(t)ᵀ L r(t) = r_iᵀ Mᵀ L M r_i + 2 r_nextᵀ Nᵀ L M r_i + r_nextᵀ Nᵀ L N r_next`.
pub fn leg_in_corridor_quadratic<T: Real>(
    ctx: &OrbitContext<T>,
    r_i: &Vector3<T>,
    r_next: &Vector3<T>,
    dt_leg: T,
    koe: &Ellipsoid<T>,
    ae: &Ellipsoid<T>,
    sample_step: T,
) -> Result<bool> {
    let ups = cw::upsilon_blocks(ctx, dt_leg)?;
    let (l1, l2) = (koe.l_matrix(), ae.l_matrix());
    let two = T::lit(2.0);
    let form = |m: &Matrix3<T>, n: &Matrix3<T>, l: &Matrix3<T>| {
        let lm = l * m;
        r_i.dot(&(m.transpose() * lm * r_i)) + two * r_next.dot(&(n.transpose() * lm * r_i)) + r_next.dot(&(n.transpose() * l * n * r_next))
    };
    Ok(sample_times(T::zero(), dt_leg, sample_step).into_iter().all(|tau| {
        let s = stm_blocks(ctx, tau);
        let m = s.phi_rr + s.phi_rv * ups.ups3;
        let n = s.phi_rv * ups.ups4;
        form(&m, &n, &l1) >= T::one() && form(&m, &n, &l2) <= T::one()
    }))
}

/// Effort, thruster, flight-time and corridor limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionConstraints<T: Real> {
    pub j_max: T,
    pub dv_max: T,
    pub t_final_max: T,
    pub koe: Ellipsoid<T>,
    pub ae: Ellipsoid<T>,
}

impl<T: Real> MissionConstraints<T> {
    pub fn new(j_max: T, dv_max: T, t_final_max: T, koe: Ellipsoid<T>, ae: Ellipsoid<T>) -> Result<Self> {
        if j_max < T::zero() || dv_max < T::zero() || !(t_final_max > T::zero()) {
            return Err(Error::Invalid("effort, impulse and time limits must be non-negative".into()));
        }
        let (k, a) = (koe.semi_axes(), ae.semi_axes());
        if !(k.x < a.x && k.y < a.y && k.z < a.z) {
            return Err(Error::Invalid("keep-out ellipsoid must lie strictly inside the approach ellipsoid".into()));
        }
        Ok(Self { j_max, dv_max, t_final_max, koe, ae })
    }
}

/// Per-constraint verdicts for one plan. Infeasibility is data, not an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub effort_ok: bool,
    pub impulse_ok: bool,
    pub time_ok: bool,
    pub corridor_ok: bool,
    pub overall: bool,
    pub total_effort_mps: f64,
    pub max_impulse_mps: f64,
    pub final_time_s: f64,
    pub first_violation: Option<Violation>,
}

/// Checks a plan flown from `initial`, including the coast before the first burn.
pub fn check_plan<T: Real>(
    ctx: &OrbitContext<T>,
    plan: &ImpulsePlan<T>,
    initial: &RelativeState<T>,
    mc: &MissionConstraints<T>,
    sample_step: T,
) -> FeasibilityReport {
    let effort_ok = plan.total_effort <= mc.j_max;
    let impulse_ok = plan.max_impulse <= mc.dv_max;
    let final_time = plan.schedule.final_time();
    let time_ok = final_time <= mc.t_final_max;

    let times = plan.schedule.times();
    let mut first = first_violation(ctx, initial, times[0] - initial.t, &mc.koe, &mc.ae, sample_step);
    if first.is_none() {
        let nodes = fly_plan(ctx, plan, initial);
        first = nodes.windows(2).find_map(|w| {
            let depart = RelativeState::new(w[0].t, w[0].achieved, w[0].v_after);
            first_violation(ctx, &depart, w[1].t - w[0].t, &mc.koe, &mc.ae, sample_step)
        });
    }
    let corridor_ok = first.is_none();

    FeasibilityReport {
        effort_ok,
        impulse_ok,
        time_ok,
        corridor_ok,
        overall: effort_ok && impulse_ok && time_ok && corridor_ok,
        total_effort_mps: plan.total_effort.as_f64(),
        max_impulse_mps: plan.max_impulse.as_f64(),
        final_time_s: final_time.as_f64(),
        first_violation: first,
    }
}

/// Latest time, on the sampling grid `initial.t + k step` and not beyond
/// `t_cap`, up to which the ballistic coast from `initial` stays in the corridor.
pub fn latest_coast_time<T: Real>(
    ctx: &OrbitContext<T>,
    initial: &RelativeState<T>,
    koe: &Ellipsoid<T>,
    ae: &Ellipsoid<T>,
    t_cap: T,
    step: T,
) -> Result<T> {
    if !(step > T::zero()) {
        return Err(Error::Invalid("coast sampling step must be positive".into()));
    }
    if !corridor_ok(koe, ae, &initial.r) {
        return Err(Error::NeverInCorridor { t_s: initial.t.as_f64() });
    }
    let mut latest = initial.t;
    for t in sample_times(initial.t, t_cap, step) {
        let r = stm_blocks(ctx, t - initial.t).position(&initial.r, &initial.v);
        if !corridor_ok(koe, ae, &r) {
            break;
        }
        latest = t;
    }
    Ok(latest)
}
