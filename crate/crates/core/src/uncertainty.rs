//! Covariance of the filtered estimation error.
//!
//! With linear dynamics and a linear measurement model the covariance evolves
//! independently of the trajectory, so it is propagated offline and only
//! depends on the model and elapsed time. Propagation uses the fractional
//! (Möbius) form of the Riccati flow built from the exponential of the 12x12
//! Hamiltonian; the steady state solves the algebraic Riccati equation.

use nalgebra::{DMatrix, Matrix3, Matrix6, SymmetricEigen};

use crate::cw::{sample_times, OrbitContext};
use crate::error::{Error, Result};
use crate::linalg::{condition_1, expm, solve_lyapunov};
use crate::num::Real;

/// Longest single exponential step; longer spans are composed from sub-steps.
pub const MAX_SUBSTEP_S: f64 = 1000.0;
/// Denominator conditioning above which propagation is rejected.
pub const MAX_DENOMINATOR_CONDITION: f64 = 1e13;

/// Process, measurement and initial-uncertainty description.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel<T: Real> {
    f: Matrix6<T>,
    h: Matrix6<T>,
    q: Matrix6<T>,
    r: Matrix6<T>,
    p1: Matrix6<T>,
    r_inv: Matrix6<T>,
}

/// Linearized relative dynamics `d[r; v]/dt = F [r; v]`.
pub fn cw_dynamics<T: Real>(ctx: &OrbitContext<T>) -> Matrix6<T> {
    let n = ctx.mean_motion();
    let two = T::lit(2.0);
    let mut f = Matrix6::zeros();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    f[(3, 0)] = T::lit(3.0) * n * n;
    f[(3, 4)] = two * n;
    f[(4, 3)] = -two * n;
    f[(5, 2)] = -n * n;
    f
}

fn is_symmetric<T: Real>(m: &Matrix6<T>) -> bool {
    let scale = m.norm();
    (m - m.transpose()).norm() <= T::lit(1e-12) * scale
}

fn min_eigenvalue<T: Real>(m: &Matrix6<T>) -> T {
    let sym = (m + m.transpose()) * T::lit(0.5);
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn is_psd<T: Real>(m: &Matrix6<T>) -> bool {
    min_eigenvalue(m) >= -T::lit(1e-12) * m.norm()
}

impl<T: Real> UncertaintyModel<T> {
    pub fn new(f: Matrix6<T>, h: Matrix6<T>, q: Matrix6<T>, r: Matrix6<T>, p1: Matrix6<T>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r), ("P1", &p1)] {
            if !is_symmetric(m) || !is_psd(m) {
                return Err(Error::Invalid(format!("{name} must be symmetric positive semidefinite")));
            }
        }
        let r_inv = r
            .try_inverse()
            .ok_or_else(|| Error::Invalid("measurement covariance R is singular".into()))?;
        Ok(Self { f, h, q, r, p1, r_inv })
    }

    /// CW dynamics with full-state relative GPS (`H = I`) and diagonal covariances,
    /// each given as `[position x3, velocity x3]`.
    pub fn relative_gps(ctx: &OrbitContext<T>, p1_diag: [T; 6], q_diag: [T; 6], r_diag: [T; 6]) -> Result<Self> {
        let diag = |d: [T; 6]| Matrix6::from_diagonal(&nalgebra::Vector6::from_row_slice(&d));
        Self::new(cw_dynamics(ctx), Matrix6::identity(), diag(q_diag), diag(r_diag), diag(p1_diag))
    }

    pub fn f(&self) -> &Matrix6<T> {
        &self.f
    }
    pub fn h(&self) -> &Matrix6<T> {
        &self.h
    }
    pub fn q(&self) -> &Matrix6<T> {
        &self.q
    }
    pub fn r(&self) -> &Matrix6<T> {
        &self.r
    }
    pub fn p1(&self) -> &Matrix6<T> {
        &self.p1
    }

    /// Information rate `Hᵀ R⁻¹ H`.
    pub fn information(&self) -> Matrix6<T> {
        self.h.transpose() * self.r_inv * self.h
    }

    pub fn initial_state(&self) -> CovarianceState<T> {
        CovarianceState { t: T::zero(), p: self.p1 }
    }
}

/// Covariance at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState<T: Real> {
    pub t: T,
    pub p: Matrix6<T>,
}

impl<T: Real> CovarianceState<T> {
    pub fn p_r(&self) -> Matrix3<T> {
        self.p.fixed_view::<3, 3>(0, 0).into_owned()
    }
    pub fn p_v(&self) -> Matrix3<T> {
        self.p.fixed_view::<3, 3>(3, 3).into_owned()
    }
    pub fn p_rv(&self) -> Matrix3<T> {
        self.p.fixed_view::<3, 3>(0, 3).into_owned()
    }
    pub fn trace_r(&self) -> T {
        self.p_r().trace()
    }
    pub fn trace_v(&self) -> T {
        self.p_v().trace()
    }
    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.p)
    }
}

/// The 12x12 matrix `[[F, Q], [Hᵀ R⁻¹ H, −Fᵀ]]` whose exponential carries the
/// Riccati flow.
pub fn hamiltonian<T: Real>(model: &UncertaintyModel<T>) -> DMatrix<T> {
    let mut m = DMatrix::zeros(12, 12);
    m.view_mut((0, 0), (6, 6)).copy_from(&model.f);
    m.view_mut((0, 6), (6, 6)).copy_from(&model.q);
    m.view_mut((6, 0), (6, 6)).copy_from(&model.information());
    m.view_mut((6, 6), (6, 6)).copy_from(&(-model.f.transpose()));
    m
}

fn fraction_step<T: Real>(lambda: &DMatrix<T>, p: &Matrix6<T>, dt: T) -> Result<Matrix6<T>> {
    let theta = expm(&(lambda * dt))?;
    let p_dyn = DMatrix::from_column_slice(6, 6, p.as_slice());
    let num = theta.view((0, 0), (6, 6)) * &p_dyn + theta.view((0, 6), (6, 6));
    let den = theta.view((6, 0), (6, 6)) * &p_dyn + theta.view((6, 6), (6, 6));
    let cond = condition_1(&den);
    if !(cond <= T::lit(MAX_DENOMINATOR_CONDITION)) {
        return Err(Error::SingularPropagation { dt_s: dt.as_f64(), condition: cond.as_f64() });
    }
    // P' = num den⁻¹  <=>  den' P'' = num'
    let next_t = den
        .transpose()
        .lu()
        .solve(&num.transpose())
        .ok_or(Error::SingularPropagation { dt_s: dt.as_f64(), condition: cond.as_f64() })?;
    let next = Matrix6::from_column_slice(next_t.transpose().as_slice());
    Ok((next + next.transpose()) * T::lit(0.5))
}

/// Advances the covariance by `dt` seconds.
pub fn propagate_covariance<T: Real>(model: &UncertaintyModel<T>, state: &CovarianceState<T>, dt: T) -> Result<CovarianceState<T>> {
    if !(dt >= T::zero()) {
        return Err(Error::Invalid(format!("negative propagation interval {:?}", dt)));
    }
    let lambda = hamiltonian(model);
    let max_step = T::lit(MAX_SUBSTEP_S);
    let pieces = (dt / max_step).ceil().as_f64().max(1.0) as usize;
    let h = dt / T::lit(pieces as f64);
    let mut p = state.p;
    if dt > T::zero() {
        for _ in 0..pieces {
            p = fraction_step(&lambda, &p, h)?;
        }
    }
    Ok(CovarianceState { t: state.t + dt, p })
}

fn are_terms<T: Real>(model: &UncertaintyModel<T>, p: &Matrix6<T>) -> [Matrix6<T>; 4] {
    let s = model.information();
    [model.f * p, p * model.f.transpose(), -(p * s * p), model.q]
}

/// `F P + P Fᵀ − P Hᵀ R⁻¹ H P + Q`.
pub fn are_residual<T: Real>(model: &UncertaintyModel<T>, p: &Matrix6<T>) -> Matrix6<T> {
    are_terms(model, p).iter().fold(Matrix6::zeros(), |acc, t| acc + t)
}

/// Sum of the Frobenius norms of the residual terms; the scale the residual is
/// judged against.
pub fn are_scale<T: Real>(model: &UncertaintyModel<T>, p: &Matrix6<T>) -> T {
    are_terms(model, p).iter().fold(T::zero(), |acc, t| acc + t.norm())
}

/// Steady-state covariance solving the algebraic Riccati equation.
///
/// Seeds Newton–Kleinman iteration with a long propagation from `P1`, so the
/// iterate starts inside the stabilizing basin.
pub fn steady_state<T: Real>(model: &UncertaintyModel<T>) -> Result<CovarianceState<T>> {
    let seed = propagate_covariance(model, &model.initial_state(), T::lit(2.0e4))?;
    let s = model.information();
    let to_dyn = |m: &Matrix6<T>| DMatrix::from_column_slice(6, 6, m.as_slice());

    let mut p = seed.p;
    let mut best = p;
    let mut best_res = are_residual(model, &p).norm();
    for _ in 0..50 {
        let a = model.f - p * s;
        let c = p * s * p + model.q;
        let x = match solve_lyapunov(&to_dyn(&a), &to_dyn(&c)) {
            Some(x) => Matrix6::from_column_slice(x.as_slice()),
            None => break,
        };
        let next = (x + x.transpose()) * T::lit(0.5);
        let change = (next - p).norm();
        p = next;
        let res = are_residual(model, &p).norm();
        if res < best_res {
            best_res = res;
            best = p;
        }
        if change <= T::eps() * T::lit(4.0) * p.norm() {
            break;
        }
    }

    let scale = are_scale(model, &best);
    if !(best_res <= T::lit(1e-9) * scale) || !is_psd(&best) {
        return Err(Error::NoStabilizingSolution { residual: best_res.as_f64() });
    }
    Ok(CovarianceState { t: T::lit(f64::INFINITY), p: best })
}

/// One row of a covariance trace history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample<T: Real> {
    pub t: T,
    pub trace_r: T,
    pub trace_v: T,
    pub trace_r_norm: T,
    pub trace_v_norm: T,
}

/// Position/velocity covariance traces at `0, step, 2 step, ..., t_end`.
///
/// Normalized columns divide by `norm` (typically the steady-state traces);
/// without it they repeat the raw values.
pub fn trace_history<T: Real>(model: &UncertaintyModel<T>, t_end: T, step: T, norm: Option<(T, T)>) -> Result<Vec<TraceSample<T>>> {
    if !(step > T::zero()) || !(t_end >= T::zero()) {
        return Err(Error::Invalid("trace history needs step > 0 and t_end >= 0".into()));
    }
    let (nr, nv) = norm.unwrap_or((T::one(), T::one()));
    let mut state = model.initial_state();
    let mut out = Vec::new();
    for t in sample_times(T::zero(), t_end, step) {
        state = propagate_covariance(model, &state, t - state.t)?;
        state.t = t;
        let (tr, tv) = (state.trace_r(), state.trace_v());
        out.push(TraceSample { t, trace_r: tr, trace_v: tv, trace_r_norm: tr / nr, trace_v_norm: tv / nv });
    }
    Ok(out)
}

/// Independent check of the fractional propagation: RK4 on the differential
/// Riccati equation `dP/dt = F P + P Fᵀ + Q − P Hᵀ R⁻¹ H P`.
///
/// The step is `step`, shortened while the measurement term is stiff
/// (`h ‖P Hᵀ R⁻¹ H‖ ≤ 0.1`).
pub fn riccati_ode_reference<T: Real>(model: &UncertaintyModel<T>, p1: &Matrix6<T>, t_end: T, step: T) -> CovarianceState<T> {
    let s = model.information();
    let rhs = |p: &Matrix6<T>| model.f * p + p * model.f.transpose() + model.q - p * s * p;
    let mut p = *p1;
    let mut t = T::zero();
    let two = T::lit(2.0);
    while t < t_end {
        let stiff = (p * s).norm();
        let mut h = if stiff > T::zero() { step.min(T::lit(0.1) / stiff) } else { step };
        h = h.min(t_end - t);
        let half = h * T::lit(0.5);
        let k1 = rhs(&p);
        let k2 = rhs(&(p + k1 * half));
        let k3 = rhs(&(p + k2 * half));
        let k4 = rhs(&(p + k3 * h));
        p += (k1 + (k2 + k3) * two + k4) * (h / T::lit(6.0));
        t += h;
    }
    CovarianceState { t: t_end, p }
}
