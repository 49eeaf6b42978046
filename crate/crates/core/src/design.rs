//! Impulse-time and mid-waypoint selection.
//!
//! Estimation uncertainty shrinks monotonically with time under the relative
//! navigation filter, so the searches prefer the latest final time, then the
//! latest earlier impulses. Both searches walk their time lattices in
//! descending order and return the first feasible point; a coarse pass finds
//! the neighbourhood and a fine pass pins the answer to `refine_t`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::constraints::{check_plan, corridor_ok, first_violation, latest_coast_time, FeasibilityReport, MissionConstraints, ViolationKind};
use crate::cw::{self, sample_times, upsilon_blocks, OrbitContext, RelativeState, UpsilonBlocks};
use crate::error::{Error, Result};
use crate::plan::{build_plan, verify_plan, ImpulsePlan, PlanDocument, WaypointSchedule};
use crate::uncertainty::{propagate_covariance, UncertaintyModel};

/// Largest waypoint defect accepted when a found plan is re-flown.
pub const MAX_CLOSURE_DEFECT_M: f64 = 1e-6;
/// Corridor checks attempted per time triple, in ascending effort order.
pub const MAX_CORRIDOR_CANDIDATES: usize = 256;

/// Rectangle in the orbital plane searched for the mid waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R2Search {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub coarse_pitch: f64,
    pub fine_pitch: f64,
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub ctx: OrbitContext<f64>,
    pub initial: RelativeState<f64>,
    pub target_r: Vector3<f64>,
    pub target_v_plus: Vector3<f64>,
    pub model: UncertaintyModel<f64>,
    pub mc: MissionConstraints<f64>,
    pub delta_t: f64,
    pub refine_t: f64,
    pub sample_step: f64,
    pub r2: R2Search,
    pub fixed_t1: Option<f64>,
    pub fixed_t3: Option<f64>,
}

impl DesignProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(msg.to_string()));
        if !(self.refine_t > 0.0 && self.delta_t >= self.refine_t) {
            return bad("time steps need delta_t >= refine_t > 0");
        }
        if !(self.sample_step > 0.0) {
            return bad("corridor sample step must be positive");
        }
        let r2 = &self.r2;
        if !(r2.fine_pitch > 0.0 && r2.coarse_pitch >= r2.fine_pitch) {
            return bad("r2 pitches need coarse >= fine > 0");
        }
        if !(r2.x_range.0 < r2.x_range.1 && r2.y_range.0 < r2.y_range.1) {
            return bad("r2 ranges must be non-empty");
        }
        let ae = self.mc.ae.semi_axes();
        if r2.x_range.0 < -ae.x || r2.x_range.1 > ae.x || r2.y_range.0 < -ae.y || r2.y_range.1 > ae.y {
            return bad("r2 box must lie inside the approach ellipsoid's bounding box");
        }
        if !self.initial.is_finite() || self.target_r.iter().chain(self.target_v_plus.iter()).any(|x| !x.is_finite()) {
            return bad("initial and target states must be finite");
        }
        if !(self.mc.t_final_max > self.initial.t) {
            return bad("final time limit must be after the initial epoch");
        }
        for t in [self.fixed_t1, self.fixed_t3].into_iter().flatten() {
            if !(t >= self.initial.t && t <= self.mc.t_final_max) {
                return bad("fixed impulse times must lie between the initial epoch and the final time limit");
            }
        }
        if let (Some(t1), Some(t3)) = (self.fixed_t1, self.fixed_t3) {
            if !(t1 < t3) {
                return bad("fixed t1 must precede fixed t3");
            }
        }
        Ok(())
    }

    fn ratio(&self) -> i64 {
        (self.delta_t / self.refine_t).round().max(1.0) as i64
    }

    fn coast_to(&self, t: f64) -> RelativeState<f64> {
        cw::propagate(&self.ctx, &self.initial, &Vector3::zeros(), t - self.initial.t)
    }

    /// Latest first-impulse time allowed by the coast corridor, on the fine grid.
    pub fn t1_max(&self) -> Result<f64> {
        latest_coast_time(&self.ctx, &self.initial, &self.mc.koe, &self.mc.ae, self.mc.t_final_max, self.refine_t)
    }
}

/// Rejections per constraint, counted at the first failing check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub effort: u64,
    pub impulse: u64,
    pub time: u64,
    pub corridor: u64,
    pub singular: u64,
}

impl Tally {
    fn add(&mut self, r: Rejection) {
        match r {
            Rejection::Effort => self.effort += 1,
            Rejection::Impulse => self.impulse += 1,
            Rejection::Time => self.time += 1,
            Rejection::Corridor => self.corridor += 1,
            Rejection::Singular => self.singular += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.effort + self.impulse + self.time + self.corridor + self.singular
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rejection {
    Effort,
    Impulse,
    Time,
    Corridor,
    Singular,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t1_max_s: Option<f64>,
    /// Time candidates (pairs or triples) evaluated.
    pub evaluated: u64,
    pub rejected: Tally,
    pub coarse_times_s: Option<Vec<f64>>,
    pub r2_points_evaluated: u64,
    /// Feasible r2 points seen at the winning times, before picking minimal effort.
    pub r2_feasible_candidates: u64,
    /// Position/velocity covariance traces at the final impulse.
    pub final_trace_r_m2: Option<f64>,
    pub final_trace_v_m2ps2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub feasible: bool,
    pub plan: Option<ImpulsePlan<f64>>,
    /// Chosen impulse times; a degenerate three-impulse result repeats `t3`.
    pub times: Vec<f64>,
    pub r2: Option<Vector3<f64>>,
    /// Three-impulse search settled on `t2 = t3` with no middle burn.
    pub degenerate: bool,
    pub report: Option<FeasibilityReport>,
    pub diagnostics: Diagnostics,
}

impl DesignResult {
    fn infeasible(diagnostics: Diagnostics) -> Self {
        Self { feasible: false, plan: None, times: Vec::new(), r2: None, degenerate: false, report: None, diagnostics }
    }

    /// Impulses in mission order; a degenerate three-impulse result reports a
    /// zero middle impulse.
    pub fn impulse_sequence(&self) -> Vec<Vector3<f64>> {
        match &self.plan {
            None => Vec::new(),
            Some(p) if self.degenerate => vec![p.impulses[0], Vector3::zeros(), p.impulses[1]],
            Some(p) => p.impulses.clone(),
        }
    }

    pub fn document(&self) -> DesignDocument {
        DesignDocument {
            feasible: self.feasible,
            times_s: self.times.clone(),
            r2_m: self.r2.map(|r| [r.x, r.y, r.z]),
            degenerate: self.degenerate,
            impulses_mps: self.impulse_sequence().iter().map(|v| [v.x, v.y, v.z]).collect(),
            total_effort_mps: self.plan.as_ref().map(|p| p.total_effort),
            max_impulse_mps: self.plan.as_ref().map(|p| p.max_impulse),
            plan: self.plan.as_ref().map(PlanDocument::from),
            report: self.report.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// JSON form of a design result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignDocument {
    pub feasible: bool,
    pub times_s: Vec<f64>,
    pub r2_m: Option<[f64; 3]>,
    pub degenerate: bool,
    pub impulses_mps: Vec<[f64; 3]>,
    pub total_effort_mps: Option<f64>,
    pub max_impulse_mps: Option<f64>,
    pub plan: Option<PlanDocument>,
    pub report: Option<FeasibilityReport>,
    pub diagnostics: Diagnostics,
}

// ---------------------------------------------------------------------------
// Shared evaluation

fn two_impulse_plan(p: &DesignProblem, t1: f64, t2: f64) -> Result<ImpulsePlan<f64>> {
    let c = p.coast_to(t1);
    let sched = WaypointSchedule::new(vec![t1, t2], vec![c.r, p.target_r], c.v, p.target_v_plus)?;
    build_plan(&p.ctx, &sched)
}

fn three_impulse_plan(p: &DesignProblem, t: [f64; 3], r2: &Vector3<f64>) -> Result<ImpulsePlan<f64>> {
    let c = p.coast_to(t[0]);
    let sched = WaypointSchedule::new(t.to_vec(), vec![c.r, *r2, p.target_r], c.v, p.target_v_plus)?;
    build_plan(&p.ctx, &sched)
}

/// Checks in the order effort, impulse, time, corridor; the corridor is only
/// sampled when the cheap checks pass.
fn screen(p: &DesignProblem, plan: &ImpulsePlan<f64>) -> std::result::Result<FeasibilityReport, Rejection> {
    let mc = &p.mc;
    if !(plan.total_effort <= mc.j_max) {
        return Err(Rejection::Effort);
    }
    if !(plan.max_impulse <= mc.dv_max) {
        return Err(Rejection::Impulse);
    }
    if !(plan.schedule.final_time() <= mc.t_final_max) {
        return Err(Rejection::Time);
    }
    let report = check_plan(&p.ctx, plan, &p.initial, mc, p.sample_step);
    if report.overall {
        Ok(report)
    } else {
        Err(Rejection::Corridor)
    }
}

type Cell = std::result::Result<(ImpulsePlan<f64>, FeasibilityReport), Rejection>;

fn eval_pair(p: &DesignProblem, t1: f64, t2: f64) -> Cell {
    let plan = two_impulse_plan(p, t1, t2).map_err(|_| Rejection::Singular)?;
    let report = screen(p, &plan)?;
    Ok((plan, report))
}

/// `hi, hi - step, ...` down to `lo` inclusive, as integer multiples of `step`
/// below `hi`.
fn descending(hi: f64, lo: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let count = ((hi - lo) / step + 1e-9).floor() as i64;
    (0..=count).map(|k| hi - step * k as f64).collect()
}

fn final_covariance(p: &DesignProblem, plan: &ImpulsePlan<f64>, d: &mut Diagnostics) {
    let dt = plan.schedule.final_time() - p.initial.t;
    if let Ok(s) = propagate_covariance(&p.model, &p.model.initial_state(), dt) {
        d.final_trace_r_m2 = Some(s.trace_r());
        d.final_trace_v_m2ps2 = Some(s.trace_v());
    }
}

fn finish(p: &DesignProblem, plan: ImpulsePlan<f64>, mut d: Diagnostics) -> Result<(ImpulsePlan<f64>, FeasibilityReport, Diagnostics)> {
    let report = check_plan(&p.ctx, &plan, &p.initial, &p.mc, p.sample_step);
    let defect = verify_plan(&p.ctx, &plan, &p.initial);
    if !report.overall || !(defect < MAX_CLOSURE_DEFECT_M) {
        return Err(Error::Invalid(format!("selected plan failed re-validation (closure defect {defect:e} m)")));
    }
    final_covariance(p, &plan, &mut d);
    Ok((plan, report, d))
}

// ---------------------------------------------------------------------------
// Two impulses

/// First feasible cell of each row, scanning rows in order. Cells of a row are
/// evaluated in parallel; the tally counts only cells up to the hit.
fn scan_rows<R, F>(rows: &[(f64, Vec<f64>)], tally: &mut Tally, evaluated: &mut u64, eval: F) -> Option<(f64, f64, R)>
where
    R: Send,
    F: Fn(f64, f64) -> std::result::Result<R, Rejection> + Sync,
{
    for (t2, t1s) in rows {
        let cells: Vec<_> = t1s.par_iter().map(|&t1| eval(t1, *t2)).collect();
        for (t1, cell) in t1s.iter().zip(cells) {
            *evaluated += 1;
            match cell {
                Ok(r) => return Some((*t1, *t2, r)),
                Err(why) => tally.add(why),
            }
        }
    }
    None
}

/// Two-impulse design: latest feasible `t2`, then latest feasible `t1`.
pub fn design_two_impulse(p: &DesignProblem) -> Result<DesignResult> {
    p.validate()?;
    let mut d = Diagnostics::default();
    let t1_max = match p.t1_max() {
        Ok(t) => t,
        Err(Error::NeverInCorridor { .. }) => return Ok(DesignResult::infeasible(d)),
        Err(e) => return Err(e),
    };
    d.t1_max_s = Some(t1_max);
    let (t0, h, dt) = (p.initial.t, p.refine_t, p.delta_t);

    let coarse_rows: Vec<(f64, Vec<f64>)> = descending(p.mc.t_final_max, t0 + h, dt)
        .into_iter()
        .map(|t2| (t2, descending(t1_max, t0, dt).into_iter().filter(|&t1| t1 <= t2 - h).collect()))
        .collect();
    let mut tally = Tally::default();
    let mut evaluated = 0;
    let Some((t1c, t2c, _)) = scan_rows(&coarse_rows, &mut tally, &mut evaluated, |t1, t2| eval_pair(p, t1, t2)) else {
        d.evaluated = evaluated;
        d.rejected = tally;
        return Ok(DesignResult::infeasible(d));
    };
    d.coarse_times_s = Some(vec![t1c, t2c]);

    // Fine lattice within one coarse step of the hit, same descending order.
    let k = p.ratio();
    let fine_rows: Vec<(f64, Vec<f64>)> = (-k..=k)
        .rev()
        .map(|m| t2c + h * m as f64)
        .filter(|&t2| t2 <= p.mc.t_final_max && t2 >= t0 + h)
        .map(|t2| {
            let t1s = (-k..=k).rev().map(|m| t1c + h * m as f64).filter(|&t1| t1 <= t1_max && t1 >= t0 && t1 <= t2 - h).collect();
            (t2, t1s)
        })
        .collect();
    let (t1, t2, (plan, _)) = scan_rows(&fine_rows, &mut tally, &mut evaluated, |t1, t2| eval_pair(p, t1, t2))
        .expect("the coarse hit lies on the fine lattice");
    d.evaluated = evaluated;
    d.rejected = tally;

    let (plan, report, d) = finish(p, plan, d)?;
    Ok(DesignResult { feasible: true, plan: Some(plan), times: vec![t1, t2], r2: None, degenerate: false, report: Some(report), diagnostics: d })
}

// ---------------------------------------------------------------------------
// Three impulses

/// Impulses as affine functions of the mid waypoint: `dv_i = a_i + B_i r2`.
struct AffineImpulses {
    a: [Vector3<f64>; 3],
    b: [Matrix3<f64>; 3],
    j_max: f64,
    dv_max: f64,
}

#[derive(Debug, Clone, Copy)]
struct R2Eval {
    x: f64,
    y: f64,
    effort: f64,
    max: f64,
}

impl AffineImpulses {
    fn new(p: &DesignProblem, c: &RelativeState<f64>, u12: &UpsilonBlocks<f64>, u23: &UpsilonBlocks<f64>) -> Self {
        let (r1, r3) = (c.r, p.target_r);
        Self {
            a: [u12.ups3 * r1 - c.v, u12.ups1 * r1 + u23.ups4 * r3, p.target_v_plus + u23.ups2 * r3],
            b: [u12.ups4, u12.ups2 + u23.ups3, u23.ups1],
            j_max: p.mc.j_max,
            dv_max: p.mc.dv_max,
        }
    }

    fn eval(&self, x: f64, y: f64) -> R2Eval {
        let r = Vector3::new(x, y, 0.0);
        let mut effort = 0.0;
        let mut max: f64 = 0.0;
        for i in 0..3 {
            let m = (self.a[i] + self.b[i] * r).norm();
            effort += m;
            max = max.max(m);
        }
        R2Eval { x, y, effort, max }
    }

    /// Excess over the tighter of the two limits; feasible iff `<= 0`. Convex in `r2`.
    fn violation(&self, x: f64, y: f64) -> f64 {
        let e = self.eval(x, y);
        (e.effort - self.j_max).max(e.max - self.dv_max)
    }

    fn effort(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).effort
    }
}

const GOLDEN_ITERS: usize = 90;

/// Minimiser of a convex function on `[lo, hi]` by golden-section search.
fn golden_min(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    // The ends are candidates too: golden section never probes them.
    [(lo, f(lo)), (hi, f(hi))].into_iter().fold((x, fx), |best, e| if e.1 < best.1 { e } else { best })
}

/// Boundary of `{f <= 0}` between a feasible `inside` and an `outside` point.
fn bisect_edge(mut inside: f64, mut outside: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(outside) <= 0.0 {
        return outside;
    }
    for _ in 0..GOLDEN_ITERS {
        let mid = 0.5 * (inside + outside);
        if f(mid) <= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Feasible `y` interval at fixed `x`, or the least-violating `y` when empty.
fn y_slice(m: &AffineImpulses, x: f64, y0: f64, y1: f64) -> std::result::Result<(f64, f64), (f64, f64)> {
    let (yg, g) = golden_min(y0, y1, |y| m.violation(x, y));
    if g > 0.0 {
        return Err((yg, g));
    }
    let f = |y| m.violation(x, y);
    Ok((bisect_edge(yg, y0, f), bisect_edge(yg, y1, f)))
}

/// Outcome of the mid-waypoint search at one time triple.
enum TripleOutcome {
    Found { plan: ImpulsePlan<f64>, r2: Vector3<f64>, candidates: u64 },
    Rejected(Rejection),
}

struct TripleSearch<'a> {
    p: &'a DesignProblem,
    points: u64,
}

/// Half-width, in fine pitches, of the lattice neighbourhood examined around
/// the continuous optimum.
const SNAP_HALF: i64 = 20;

impl TripleSearch<'_> {
    /// Least-effort mid waypoint satisfying both impulse limits, found on the
    /// continuum. Effort and the largest impulse are convex in `r2`, so the
    /// feasible set is convex and nested one-dimensional searches are exact.
    fn continuous_optimum(&self, m: &AffineImpulses) -> std::result::Result<(f64, f64), Rejection> {
        let s = &self.p.r2;
        let (x0, x1, y0, y1) = (s.x_range.0, s.x_range.1, s.y_range.0, s.y_range.1);
        let slice_violation = |x: f64| match y_slice(m, x, y0, y1) {
            Ok(_) => golden_min(y0, y1, |y| m.violation(x, y)).1,
            Err((_, g)) => g,
        };
        let (xg, g) = golden_min(x0, x1, slice_violation);
        if g > 0.0 {
            let (yg, _) = golden_min(y0, y1, |y| m.violation(xg, y));
            let e = m.eval(xg, yg);
            return Err(if e.effort - m.j_max >= e.max - m.dv_max { Rejection::Effort } else { Rejection::Impulse });
        }
        let xlo = bisect_edge(xg, x0, slice_violation);
        let xhi = bisect_edge(xg, x1, slice_violation);
        let slice_effort = |x: f64| match y_slice(m, x, y0, y1) {
            Ok((lo, hi)) => golden_min(lo, hi, |y| m.effort(x, y)).1,
            Err(_) => f64::INFINITY,
        };
        let (x, _) = golden_min(xlo, xhi, slice_effort);
        let y = match y_slice(m, x, y0, y1) {
            Ok((lo, hi)) => golden_min(lo, hi, |y| m.effort(x, y)).0,
            Err((yg, _)) => yg,
        };
        Ok((x, y))
    }

    /// Fine-lattice points near `(x, y)` within both impulse limits.
    fn snap(&mut self, m: &AffineImpulses, x: f64, y: f64) -> Vec<R2Eval> {
        let s = &self.p.r2;
        let h = s.fine_pitch;
        let (ix, iy) = (((x - s.x_range.0) / h).round() as i64, ((y - s.y_range.0) / h).round() as i64);
        let mut out = Vec::new();
        for i in ix - SNAP_HALF..=ix + SNAP_HALF {
            for j in iy - SNAP_HALF..=iy + SNAP_HALF {
                let (px, py) = (s.x_range.0 + h * i as f64, s.y_range.0 + h * j as f64);
                if px < s.x_range.0 || px > s.x_range.1 || py < s.y_range.0 || py > s.y_range.1 {
                    continue;
                }
                let e = m.eval(px, py);
                self.points += 1;
                if e.effort <= m.j_max && e.max <= m.dv_max {
                    out.push(e);
                }
            }
        }
        out
    }

    /// Feasible points of the coarse lattice, a fallback pool for the corridor.
    fn coarse(&mut self, m: &AffineImpulses) -> Vec<R2Eval> {
        let s = &self.p.r2;
        let xs = sample_times(s.x_range.0, s.x_range.1, s.coarse_pitch);
        let ys = sample_times(s.y_range.0, s.y_range.1, s.coarse_pitch);
        self.points += (xs.len() * ys.len()) as u64;
        xs.par_iter()
            .flat_map_iter(|&x| ys.iter().map(move |&y| m.eval(x, y)))
            .filter(|e| e.effort <= m.j_max && e.max <= m.dv_max)
            .collect()
    }

    fn run(&mut self, t: [f64; 3]) -> TripleOutcome {
        let p = self.p;
        let c = p.coast_to(t[0]);
        if !coast_in_corridor(p, t[0]) {
            return TripleOutcome::Rejected(Rejection::Corridor);
        }
        let (Ok(u12), Ok(u23)) = (upsilon_blocks(&p.ctx, t[1] - t[0]), upsilon_blocks(&p.ctx, t[2] - t[1])) else {
            return TripleOutcome::Rejected(Rejection::Singular);
        };
        let m = AffineImpulses::new(p, &c, &u12, &u23);
        let (x, y) = match self.continuous_optimum(&m) {
            Ok(r) => r,
            Err(why) => return TripleOutcome::Rejected(why),
        };
        let by_effort = |a: &R2Eval, b: &R2Eval| a.effort.total_cmp(&b.effort).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y));
        let mut near = self.snap(&m, x, y);
        if near.is_empty() {
            // Feasible set thinner than the lattice around its best point.
            let e = m.eval(x, y);
            return TripleOutcome::Rejected(if e.effort - m.j_max >= e.max - m.dv_max { Rejection::Effort } else { Rejection::Impulse });
        }
        near.sort_by(by_effort);
        let mut far = self.coarse(&m);
        far.sort_by(by_effort);
        let candidates = (near.len() + far.len()) as u64;
        for e in near.iter().chain(far.iter()).take(MAX_CORRIDOR_CANDIDATES) {
            let r2 = Vector3::new(e.x, e.y, 0.0);
            let Ok(plan) = three_impulse_plan(p, t, &r2) else { continue };
            if screen(p, &plan).is_ok() {
                return TripleOutcome::Found { plan, r2, candidates };
            }
        }
        TripleOutcome::Rejected(Rejection::Corridor)
    }
}

fn coast_in_corridor(p: &DesignProblem, t1: f64) -> bool {
    corridor_ok(&p.mc.koe, &p.mc.ae, &p.initial.r)
        && first_violation(&p.ctx, &p.initial, t1 - p.initial.t, &p.mc.koe, &p.mc.ae, p.sample_step).is_none()
}

struct Hit {
    t: [f64; 3],
    plan: ImpulsePlan<f64>,
    r2: Vector3<f64>,
    degenerate: bool,
    candidates: u64,
}

struct ThreeSearch<'a> {
    p: &'a DesignProblem,
    tally: Tally,
    evaluated: u64,
    points: u64,
}

impl ThreeSearch<'_> {
    fn try_triple(&mut self, t: [f64; 3]) -> Option<Hit> {
        self.evaluated += 1;
        let p = self.p;
        if t[1] >= t[2] {
            // t2 = t3: no middle burn, two-impulse plan straight to the target.
            return match eval_pair(p, t[0], t[2]) {
                Ok((plan, _)) => Some(Hit { t: [t[0], t[2], t[2]], plan, r2: p.target_r, degenerate: true, candidates: 1 }),
                Err(why) => {
                    self.tally.add(why);
                    None
                }
            };
        }
        let mut s = TripleSearch { p, points: 0 };
        let out = s.run(t);
        self.points += s.points;
        match out {
            TripleOutcome::Found { plan, r2, candidates } => Some(Hit { t, plan, r2, degenerate: false, candidates }),
            TripleOutcome::Rejected(why) => {
                self.tally.add(why);
                None
            }
        }
    }
}

/// Three-impulse design: latest `t3`, then latest `t1`, then latest `t2`, with
/// any mid waypoint in the search box that satisfies every constraint. Among
/// feasible mid waypoints the one of least effort is taken.
pub fn design_three_impulse(p: &DesignProblem) -> Result<DesignResult> {
    p.validate()?;
    let mut d = Diagnostics::default();
    let t1_max = match p.t1_max() {
        Ok(t) => t,
        Err(Error::NeverInCorridor { .. }) => return Ok(DesignResult::infeasible(d)),
        Err(e) => return Err(e),
    };
    d.t1_max_s = Some(t1_max);
    let (t0, h, dt) = (p.initial.t, p.refine_t, p.delta_t);
    let mut s = ThreeSearch { p, tally: Tally::default(), evaluated: 0, points: 0 };

    let t3s = match p.fixed_t3 {
        Some(t) => vec![t],
        None => descending(p.mc.t_final_max, t0 + 2.0 * h, dt),
    };
    let mut coarse = None;
    'outer: for &t3 in &t3s {
        let t1s = match p.fixed_t1 {
            Some(t) if t < t3 => vec![t],
            Some(_) => Vec::new(),
            None => descending(t1_max, t0, dt).into_iter().filter(|&t1| t1 <= t3 - h).collect(),
        };
        for &t1 in &t1s {
            for t2 in descending(t3, t1 + h, dt) {
                if let Some(hit) = s.try_triple([t1, t2, t3]) {
                    coarse = Some(hit);
                    break 'outer;
                }
            }
        }
    }
    let Some(mut best) = coarse else {
        d.evaluated = s.evaluated;
        d.rejected = s.tally;
        d.r2_points_evaluated = s.points;
        return Ok(DesignResult::infeasible(d));
    };
    d.coarse_times_s = Some(best.t.to_vec());

    // Greedy refinement, one time at a time, over the fine lattice between the
    // coarse hit and the next coarse value above it.
    let k = p.ratio();
    let ups = |c: f64| (1..k).rev().map(move |m| c + h * m as f64);
    if p.fixed_t3.is_none() {
        for t3 in ups(best.t[2]).filter(|&t| t <= p.mc.t_final_max) {
            let t2 = if best.degenerate { t3 } else { best.t[1] };
            if let Some(hit) = s.try_triple([best.t[0], t2, t3]) {
                best = hit;
                break;
            }
        }
    }
    if p.fixed_t1.is_none() {
        for t1 in ups(best.t[0]).filter(|&t| t <= t1_max && t <= best.t[1] - h) {
            if let Some(hit) = s.try_triple([t1, best.t[1], best.t[2]]) {
                best = hit;
                break;
            }
        }
    }
    if !best.degenerate {
        let t3 = best.t[2];
        for t2 in (1..=k).rev().map(|m| best.t[1] + h * m as f64).filter(|&t| t <= t3) {
            // The top of the range can round past t3; treat it as t3.
            let t2 = if t3 - t2 < 1e-9 * h { t3 } else { t2 };
            if let Some(hit) = s.try_triple([best.t[0], t2, t3]) {
                best = hit;
                break;
            }
        }
    }

    d.evaluated = s.evaluated;
    d.rejected = s.tally;
    d.r2_points_evaluated = s.points;
    d.r2_feasible_candidates = best.candidates;
    let Hit { t, plan, r2, degenerate, .. } = best;
    let (plan, report, d) = finish(p, plan, d)?;
    Ok(DesignResult { feasible: true, plan: Some(plan), times: t.to_vec(), r2: Some(r2), degenerate, report: Some(report), diagnostics: d })
}

// ---------------------------------------------------------------------------
// Grids for plotting

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Effort,
    MaxImpulse,
    CorridorFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellFlag {
    Ok,
    Singular,
    KoeViolation,
    AeViolation,
}

impl CellFlag {
    pub fn label(&self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::Singular => "singular",
            CellFlag::KoeViolation => "koe",
            CellFlag::AeViolation => "ae",
        }
    }
}

/// Values over `t1` (rows) by `dt12` (columns); singular cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub quantity: Quantity,
    pub t1_s: Vec<f64>,
    pub dt12_s: Vec<f64>,
    pub values: Vec<f64>,
    pub flags: Vec<CellFlag>,
}

impl ContourGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, CellFlag) {
        let k = i * self.dt12_s.len() + j;
        (self.values[k], self.flags[k])
    }
}

/// Two-impulse effort, largest impulse, or corridor flags over `(t1, Δt12)`.
/// Corridor flags cover the coast to `t1` and the transfer; the value column
/// then holds 1 for a clean cell and 0 otherwise.
pub fn contour_grid(p: &DesignProblem, t1_s: &[f64], dt12_s: &[f64], quantity: Quantity) -> Result<ContourGrid> {
    if t1_s.is_empty() || dt12_s.is_empty() {
        return Err(Error::Invalid("contour ranges must be non-empty".into()));
    }
    if t1_s.iter().any(|&t| !(t >= p.initial.t)) || dt12_s.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Invalid("contour ranges need t1 >= initial epoch and dt12 > 0".into()));
    }
    let cells: Vec<(f64, CellFlag)> = t1_s
        .par_iter()
        .flat_map_iter(|&t1| dt12_s.iter().map(move |&dt12| contour_cell(p, t1, dt12, quantity)))
        .collect();
    let (values, flags) = cells.into_iter().unzip();
    Ok(ContourGrid { quantity, t1_s: t1_s.to_vec(), dt12_s: dt12_s.to_vec(), values, flags })
}

fn contour_cell(p: &DesignProblem, t1: f64, dt12: f64, quantity: Quantity) -> (f64, CellFlag) {
    let Ok(plan) = two_impulse_plan(p, t1, t1 + dt12) else {
        return (f64::NAN, CellFlag::Singular);
    };
    match quantity {
        Quantity::Effort => (plan.total_effort, CellFlag::Ok),
        Quantity::MaxImpulse => (plan.max_impulse, CellFlag::Ok),
        Quantity::CorridorFlags => match check_plan(&p.ctx, &plan, &p.initial, &p.mc, p.sample_step).first_violation {
            None => (1.0, CellFlag::Ok),
            Some(v) if v.kind == ViolationKind::KeepOut => (0.0, CellFlag::KoeViolation),
            Some(_) => (0.0, CellFlag::AeViolation),
        },
    }
}

/// One mid-waypoint candidate at fixed impulse times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R2Point {
    pub x_m: f64,
    pub y_m: f64,
    pub effort_mps: f64,
    pub max_impulse_mps: f64,
    pub corridor_ok: bool,
    pub feasible: bool,
}

/// Effort, largest impulse and corridor verdict over a lattice of mid
/// waypoints. With `t2 = t3` the only candidate is the target itself.
pub fn r2_feasible_region(p: &DesignProblem, t: [f64; 3], xs: &[f64], ys: &[f64]) -> Result<Vec<R2Point>> {
    if !(t[0] < t[1] && t[1] <= t[2]) {
        return Err(Error::Invalid("r2 region needs t1 < t2 <= t3".into()));
    }
    let mc = &p.mc;
    let point = |plan: &ImpulsePlan<f64>, r2: &Vector3<f64>| {
        let report = check_plan(&p.ctx, plan, &p.initial, mc, p.sample_step);
        R2Point {
            x_m: r2.x,
            y_m: r2.y,
            effort_mps: plan.total_effort,
            max_impulse_mps: plan.max_impulse,
            corridor_ok: report.corridor_ok,
            feasible: report.overall,
        }
    };
    if t[1] == t[2] {
        let plan = two_impulse_plan(p, t[0], t[2])?;
        return Ok(vec![point(&plan, &p.target_r)]);
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Invalid("r2 ranges must be non-empty".into()));
    }
    upsilon_blocks(&p.ctx, t[1] - t[0])?;
    upsilon_blocks(&p.ctx, t[2] - t[1])?;
    xs.par_iter()
        .flat_map_iter(|&x| {
            ys.iter().map(move |&y| {
                let r2 = Vector3::new(x, y, 0.0);
                three_impulse_plan(p, t, &r2).map(|plan| point(&plan, &r2))
            })
        })
        .collect()
}
