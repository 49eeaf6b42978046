//! Clohessy-Wiltshire relative motion about a circular target orbit.
//!
//! Positions and velocities are expressed in the target-centred RSW frame:
//! `x` radial, `z` along the orbit normal, `y` completing the triad. All
//! propagation is closed form; the transition matrix is split into four 3x3
//! blocks so that impulse synthesis can invert the position-from-velocity
//! block directly.

use nalgebra::{Matrix3, Matrix6, Vector3};

use crate::error::{Error, Result};
use crate::num::Real;

/// Earth gravitational parameter (m^3/s^2).
pub const EARTH_MU: f64 = 3.986004418e14;
/// Earth equatorial radius (m).
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Target orbit constants. Every transition matrix is parametrized by `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitContext<T: Real> {
    mu: T,
    a_t: T,
    n: T,
}

impl<T: Real> OrbitContext<T> {
    pub fn new(mu: T, a_t: T) -> Result<Self> {
        if !(mu > T::zero()) || !(a_t > T::zero()) || !mu.is_finite() || !a_t.is_finite() {
            return Err(Error::Invalid(format!(
                "orbit needs mu > 0 and a_t > 0 (got mu = {:?}, a_t = {:?})",
                mu, a_t
            )));
        }
        let n = (mu / (a_t * a_t * a_t)).sqrt();
        Ok(Self { mu, a_t, n })
    }

    /// Circular Earth orbit at the given altitude above the equatorial radius.
    pub fn earth_altitude(altitude_m: T) -> Result<Self> {
        Self::new(T::lit(EARTH_MU), T::lit(EARTH_RADIUS_M) + altitude_m)
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn semi_major_axis(&self) -> T {
        self.a_t
    }

    /// Mean motion (rad/s).
    pub fn mean_motion(&self) -> T {
        self.n
    }

    /// Orbital period (s).
    pub fn period(&self) -> T {
        T::two_pi() / self.n
    }
}

/// Position/velocity pair at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState<T: Real> {
    pub t: T,
    pub r: Vector3<T>,
    pub v: Vector3<T>,
}

impl<T: Real> RelativeState<T> {
    pub fn new(t: T, r: Vector3<T>, v: Vector3<T>) -> Self {
        Self { t, r, v }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.r.iter().all(|c| c.is_finite()) && self.v.iter().all(|c| c.is_finite())
    }
}

/// The four 3x3 blocks of the transition matrix over `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StmBlocks<T: Real> {
    pub phi_rr: Matrix3<T>,
    pub phi_rv: Matrix3<T>,
    pub phi_vr: Matrix3<T>,
    pub phi_vv: Matrix3<T>,
    pub dt: T,
}

impl<T: Real> StmBlocks<T> {
    /// Full 6x6 transition matrix acting on `[r; v]`.
    pub fn assemble(&self) -> Matrix6<T> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.phi_rr);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.phi_rv);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.phi_vr);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.phi_vv);
        m
    }

    pub fn position(&self, r: &Vector3<T>, v: &Vector3<T>) -> Vector3<T> {
        self.phi_rr * r + self.phi_rv * v
    }

    pub fn velocity(&self, r: &Vector3<T>, v: &Vector3<T>) -> Vector3<T> {
        self.phi_vr * r + self.phi_vv * v
    }
}

/// Combination matrices used to express impulses in terms of waypoints.
///
/// `ups1 = Φvv Φrv⁻¹ Φrr − Φvr`, `ups2 = −Φvv Φrv⁻¹`, `ups3 = −Φrv⁻¹ Φrr`,
/// `ups4 = Φrv⁻¹`, all evaluated at the leg duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsilonBlocks<T: Real> {
    pub ups1: Matrix3<T>,
    pub ups2: Matrix3<T>,
    pub ups3: Matrix3<T>,
    pub ups4: Matrix3<T>,
    pub dt: T,
}

/// Largest 1-norm condition number of `Φrv` accepted as invertible.
pub fn singular_threshold<T: Real>() -> T {
    let limit = T::lit(1e12);
    let precision = T::one() / (T::eps() * T::lit(100.0));
    if precision < limit {
        precision
    } else {
        limit
    }
}

/// Closed-form transition blocks at `dt` (`dt >= 0`).
pub fn stm_blocks<T: Real>(ctx: &OrbitContext<T>, dt: T) -> StmBlocks<T> {
    let n = ctx.n;
    let nt = n * dt;
    let (s, c) = nt.sin_cos();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let six = T::lit(6.0);

    #[rustfmt::skip]
    let phi_rr = Matrix3::new(
        four - three * c,   zero, zero,
        six * (s - nt),     one,  zero,
        zero,               zero, c,
    );
    #[rustfmt::skip]
    let phi_rv = Matrix3::new(
        s,                  two * (one - c),      zero,
        -two * (one - c),   four * s - three * nt, zero,
        zero,               zero,                 s,
    ) / n;
    #[rustfmt::skip]
    let phi_vr = Matrix3::new(
        three * s,          zero, zero,
        -six * (one - c),   zero, zero,
        zero,               zero, -s,
    ) * n;
    #[rustfmt::skip]
    let phi_vv = Matrix3::new(
        c,          two * s,       zero,
        -two * s,   four * c - three, zero,
        zero,       zero,          c,
    );

    StmBlocks { phi_rr, phi_rv, phi_vr, phi_vv, dt }
}

fn norm1<T: Real>(m: &Matrix3<T>) -> T {
    (0..3)
        .map(|j| m.column(j).iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Inverts `Φrv`, returning its 1-norm condition number on failure.
pub(crate) fn invert_phi_rv<T: Real>(phi_rv: &Matrix3<T>) -> std::result::Result<Matrix3<T>, T> {
    match phi_rv.try_inverse() {
        Some(inv) => {
            let cond = norm1(phi_rv) * norm1(&inv);
            if cond.is_finite() && cond <= singular_threshold() {
                Ok(inv)
            } else {
                Err(cond)
            }
        }
        None => Err(T::max_value().unwrap_or_else(|| T::lit(f64::MAX))),
    }
}

/// Builds the combination matrices for a leg of duration `dt`.
///
/// Fails with [`Error::SingularTransfer`] (leg index 0) when `Φrv(dt)` is
/// singular: at `dt = 0`, whole orbits in-plane, and half orbits out-of-plane.
pub fn upsilon_blocks<T: Real>(ctx: &OrbitContext<T>, dt: T) -> Result<UpsilonBlocks<T>> {
    let stm = stm_blocks(ctx, dt);
    upsilon_from_stm(&stm).map_err(|condition| Error::SingularTransfer {
        leg: 0,
        dt_s: dt.as_f64(),
        condition: condition.as_f64(),
    })
}

pub(crate) fn upsilon_from_stm<T: Real>(stm: &StmBlocks<T>) -> std::result::Result<UpsilonBlocks<T>, T> {
    let inv = invert_phi_rv(&stm.phi_rv)?;
    let vv_inv = stm.phi_vv * inv;
    Ok(UpsilonBlocks {
        ups1: vv_inv * stm.phi_rr - stm.phi_vr,
        ups2: -vv_inv,
        ups3: -(inv * stm.phi_rr),
        ups4: inv,
        dt: stm.dt,
    })
}

/// Applies `dv` at `state.t` and coasts for `dt`.
pub fn propagate<T: Real>(ctx: &OrbitContext<T>, state: &RelativeState<T>, dv: &Vector3<T>, dt: T) -> RelativeState<T> {
    let stm = stm_blocks(ctx, dt);
    let v = state.v + dv;
    RelativeState {
        t: state.t + dt,
        r: stm.position(&state.r, &v),
        v: stm.velocity(&state.r, &v),
    }
}

/// Sample times `start, start + step, ...` up to and including `end`.
///
/// The last sample is exactly `end`; a trailing sample closer than a
/// millionth of a step to `end` is merged into it.
pub fn sample_times<T: Real>(start: T, end: T, step: T) -> Vec<T> {
    let span = end - start;
    if span <= T::zero() {
        return vec![start];
    }
    let count = (span / step).floor().as_f64() as usize;
    let mut out = Vec::with_capacity(count + 2);
    for k in 0..=count {
        let t = start + step * T::lit(k as f64);
        if end - t > step * T::lit(1e-6) {
            out.push(t);
        }
    }
    out.push(end);
    out
}

/// Ballistic samples from `state.t` to `t_end` at spacing `step`.
pub fn coast_trajectory<T: Real>(ctx: &OrbitContext<T>, state: &RelativeState<T>, t_end: T, step: T) -> Vec<RelativeState<T>> {
    let zero = Vector3::zeros();
    sample_times(state.t, t_end, step)
        .into_iter()
        .map(|t| {
            if t == state.t {
                *state
            } else {
                propagate(ctx, state, &zero, t - state.t)
            }
        })
        .collect()
}
