//! Reference scenario acceptance checks. One line per criterion; the process
//! exits non-zero when any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix6, Vector3, Vector6};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use rendezvous::config::MissionConfig;
use rendezvous::constraints::{corridor_ok, leg_in_corridor, leg_in_corridor_quadratic, MissionConstraints};
use rendezvous::cw::{propagate, stm_blocks, OrbitContext, RelativeState};
use rendezvous::design::{design_three_impulse, design_two_impulse, DesignProblem};
use rendezvous::linalg::expm;
use rendezvous::plan::{build_plan, departure_velocity, verify_plan, WaypointSchedule};
use rendezvous::uncertainty::{propagate_covariance, riccati_ode_reference, steady_state};
use rendezvous::DesignResult;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

fn case(n: u8) -> DesignProblem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("case{n}.toml"));
    MissionConfig::load(&path).unwrap().problem().unwrap()
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed())
}

fn summary(r: &DesignResult) -> String {
    match &r.plan {
        Some(p) => format!(
            "times {:?} s, J {:.4} m/s, max {:.4} m/s",
            r.times.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            p.total_effort,
            p.max_impulse
        ),
        None => format!("infeasible after {} candidates, rejections {:?}", r.diagnostics.evaluated, r.diagnostics.rejected),
    }
}

fn steady() -> Outcome {
    let p = case(1);
    let (ss, took) = timed(|| steady_state(&p.model).unwrap());
    let (tr, tv) = (ss.trace_r(), ss.trace_v());
    let pass = within(tr / 4.4169e-3, 1.0, 5e-4) && within(tv / 1.1170e-8, 1.0, 5e-4) && took < Duration::from_secs(1);
    check(pass, format!("trace Pr {tr:.5e} m^2, trace Pv {tv:.5e} m^2/s^2, {took:.2?}"))
}

fn coast() -> Outcome {
    let p = case(1);
    let (s, took) = timed(|| propagate(&p.ctx, &p.initial, &Vector3::zeros(), 702.0));
    let want = Vector3::new(-881.0, -9962.7, 0.0);
    let pass = (s.r - want).abs().max() <= 0.5 && took < Duration::from_millis(1);
    check(pass, format!("r(702 s) = ({:.2}, {:.2}, {:.2}) m, {took:.2?}", s.r.x, s.r.y, s.r.z))
}

fn two_impulse(n: u8, t: [f64; 2], tol_t: [f64; 2], j: f64, max: f64, budget: Duration) -> (Outcome, Option<DesignResult>) {
    let p = case(n);
    let (r, took) = timed(|| design_two_impulse(&p).unwrap());
    let pass = match &r.plan {
        Some(plan) => {
            within(r.times[0], t[0], tol_t[0])
                && within(r.times[1], t[1], tol_t[1])
                && within(plan.total_effort, j, 0.01)
                && within(plan.max_impulse, max, 0.01)
                && took < budget
        }
        None => false,
    };
    let detail = format!("{}, {took:.2?}", summary(&r));
    (check(pass, detail), Some(r))
}

fn three_impulse_fixed() -> Outcome {
    let mut p = case(2);
    p.fixed_t1 = Some(702.0);
    p.fixed_t3 = Some(7200.0);
    let (r, took) = timed(|| design_three_impulse(&p).unwrap());
    let pass = match (&r.plan, r.r2) {
        (Some(plan), Some(r2)) => {
            within(r.times[1], 6387.0, 10.0)
                && (within(r2.x, -1400.3, 5.0) || within(r2.x, -1400.0, 5.0))
                && within(r2.y, -1000.0, 5.0)
                && within(plan.total_effort, 20.0, 0.05)
                && within(plan.max_impulse, 13.0, 0.01)
                && took < Duration::from_secs(600)
        }
        _ => false,
    };
    let r2 = r.r2.map(|v| format!(", r2 ({:.1}, {:.1}) m", v.x, v.y)).unwrap_or_default();
    check(pass, format!("t1 = 702, t3 = 7200: {}{r2}, {took:.2?}", summary(&r)))
}

fn degeneration(two: Option<&DesignResult>) -> Outcome {
    let p = case(1);
    let (r, took) = timed(|| design_three_impulse(&p).unwrap());
    let Some(two_plan) = two.and_then(|t| t.plan.as_ref()) else {
        return check(false, "no two-impulse plan to compare with".into());
    };
    let pass = match &r.plan {
        Some(plan) => {
            let seq = r.impulse_sequence();
            r.degenerate
                && seq.len() == 3
                && seq[1].norm() == 0.0
                && (seq[0] - two_plan.impulses[0]).norm() < 1e-9
                && (seq[2] - two_plan.impulses[1]).norm() < 1e-9
                && within(plan.total_effort, two_plan.total_effort, 1e-9)
                && took < Duration::from_secs(600)
        }
        None => false,
    };
    check(pass, format!("degenerate {}, {}, {took:.2?}", r.degenerate, summary(&r)))
}

fn ode_oracle() -> Outcome {
    let p = case(1);
    let m = &p.model;
    let (errs, took) = timed(|| {
        [100.0, 1000.0, 7200.0]
            .map(|t| {
                let a = propagate_covariance(m, &m.initial_state(), t).unwrap();
                let b = riccati_ode_reference(m, m.p1(), t, 0.5);
                (a.p - b.p).norm() / b.p.norm()
            })
    });
    let pass = errs.iter().all(|e| *e < 1e-6) && took < Duration::from_secs(10);
    check(pass, format!("relative errors {:.1e} {:.1e} {:.1e}, {took:.2?}", errs[0], errs[1], errs[2]))
}

// ---------------------------------------------------------------------------
// Property suites

fn vec3(lim: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-lim..lim, -lim..lim, -lim..lim).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn stm_props(ctx: &OrbitContext<f64>) -> Result<(), String> {
    runner(200)
        .run(&(0.0..20000.0f64, 0.0..20000.0f64), |(a, b)| {
            let ab = stm_blocks(ctx, a + b).assemble();
            let composed = stm_blocks(ctx, b).assemble() * stm_blocks(ctx, a).assemble();
            prop_assert!((ab - composed).abs().max() <= 1e-9 * ab.abs().max());
            prop_assert!((stm_blocks(ctx, a).assemble().determinant() - 1.0).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| format!("stm: {e}"))
}

fn closure_props(ctx: &OrbitContext<f64>) -> Result<(), String> {
    let schedule = (prop::collection::vec(60.0..2500.0f64, 1..6), prop::collection::vec(vec3(5000.0), 6), vec3(10.0), vec3(1.0));
    runner(200)
        .run(&schedule, |(gaps, pts, v0, vf)| {
            let mut times = vec![0.0];
            for g in &gaps {
                times.push(times.last().unwrap() + g);
            }
            let wps = pts[..times.len()].to_vec();
            let initial = RelativeState::new(0.0, wps[0], v0);
            let plan = build_plan(ctx, &WaypointSchedule::new(times, wps, v0, vf).unwrap()).unwrap();
            prop_assert!(verify_plan(ctx, &plan, &initial) < 1e-6);
            Ok(())
        })
        .map_err(|e| format!("closure: {e}"))
}

fn covariance_props(p: &DesignProblem) -> Result<(), String> {
    let m = &p.model;
    let mut s = m.initial_state();
    for k in 0..72 {
        s = propagate_covariance(m, &s, 100.0).map_err(|e| e.to_string())?;
        let asym = (s.p - s.p.transpose()).abs().max();
        if asym > 1e-12 * s.p.abs().max() || s.min_eigenvalue() < -1e-10 * s.p.abs().max() {
            return Err(format!("covariance not symmetric PSD at step {k}"));
        }
    }
    Ok(())
}

fn corridor_props(p: &DesignProblem) -> Result<(), String> {
    let (ctx, koe, ae) = (&p.ctx, &p.mc.koe, &p.mc.ae);
    runner(100)
        .run(&(vec3(4000.0), vec3(4000.0), 200.0..3000.0f64), |(ri, rj, dt)| {
            let v = departure_velocity(ctx, &ri, &rj, dt).unwrap();
            let sampled = leg_in_corridor(ctx, &RelativeState::new(0.0, ri, v), dt, koe, ae, 1.0);
            prop_assert_eq!(sampled, leg_in_corridor_quadratic(ctx, &ri, &rj, dt, koe, ae, 1.0).unwrap());
            Ok(())
        })
        .map_err(|e| format!("corridor: {e}"))
}

/// Full transition matrix from the exponential of the CW system matrix.
fn phi(n: f64, dt: f64) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    let e = expm(&DMatrix::from_column_slice(6, 6, (a * dt).as_slice())).unwrap();
    Matrix6::from_column_slice(e.as_slice())
}

fn pair_feasible(p: &DesignProblem, t1: f64, t2: f64) -> bool {
    let n = p.ctx.mean_motion();
    let x0 = Vector6::new(p.initial.r.x, p.initial.r.y, p.initial.r.z, p.initial.v.x, p.initial.v.y, p.initial.v.z);
    let c = phi(n, t1) * x0;
    let f = phi(n, t2 - t1);
    let r1: Vector3<f64> = c.fixed_rows::<3>(0).into();
    let v1: Vector3<f64> = c.fixed_rows::<3>(3).into();
    let rr = f.fixed_view::<3, 3>(0, 0).into_owned();
    let Some(vdep) = f.fixed_view::<3, 3>(0, 3).into_owned().lu().solve(&(p.target_r - rr * r1)) else { return false };
    let x1 = Vector6::new(r1.x, r1.y, r1.z, vdep.x, vdep.y, vdep.z);
    let arrive = f * x1;
    let (d1, d2) = ((vdep - v1).norm(), arrive.fixed_rows::<3>(3).norm());
    if d1 + d2 > p.mc.j_max || d1.max(d2) > p.mc.dv_max {
        return false;
    }
    let inside = |x: Vector6<f64>| corridor_ok(&p.mc.koe, &p.mc.ae, &x.fixed_rows::<3>(0).into());
    let coast_ok = (0..t1.ceil() as usize).map(|s| s as f64).filter(|&s| s < t1).all(|s| inside(phi(n, s) * x0));
    let leg_ok = (0..(t2 - t1).ceil() as usize).map(|s| s as f64).filter(|&s| s < t2 - t1).all(|s| inside(phi(n, s) * x1));
    coast_ok && leg_ok && inside(arrive)
}

fn enumeration_prop() -> Result<(), String> {
    let mut p = case(1);
    p.mc = MissionConstraints::new(30.0, 20.0, 2000.0, p.mc.koe, p.mc.ae).unwrap();
    p.delta_t = 50.0;
    p.refine_t = 5.0;
    p.fixed_t3 = None;
    let res = design_two_impulse(&p).map_err(|e| e.to_string())?;
    let t1max = res.diagnostics.t1_max_s.ok_or("no t1max")?;
    let mut expect = None;
    let mut t2 = p.mc.t_final_max;
    'rows: while t2 >= p.refine_t {
        let mut t1 = t1max;
        while t1 >= 0.0 {
            if t1 <= t2 - p.refine_t && pair_feasible(&p, t1, t2) {
                expect = Some(vec![t1, t2]);
                break 'rows;
            }
            t1 -= p.delta_t;
        }
        t2 -= p.delta_t;
    }
    let got = res.diagnostics.coarse_times_s.clone();
    let same = match (&got, &expect) {
        (Some(g), Some(e)) => g.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-6),
        (None, None) => true,
        _ => false,
    };
    if same {
        Ok(())
    } else {
        Err(format!("enumeration: search {got:?}, exhaustive {expect:?}"))
    }
}

fn properties() -> Outcome {
    let p = case(1);
    let (r, took) = timed(|| {
        stm_props(&p.ctx)
            .and_then(|_| closure_props(&p.ctx))
            .and_then(|_| covariance_props(&p))
            .and_then(|_| corridor_props(&p))
            .and_then(|_| enumeration_prop())
    });
    match r {
        Ok(()) => check(true, format!("stm, closure, covariance, corridor, enumeration, {took:.2?}")),
        Err(e) => check(false, e),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "steady-state covariance", steady());
    report(2, "coast to 702 s", coast());
    let (o, two1) = two_impulse(1, [702.0, 7200.0], [1.0, 1e-9], 16.6242, 15.9526, Duration::from_secs(60));
    report(3, "case 1 two-impulse", o);
    let (o, _) = two_impulse(2, [513.7, 5613.6], [0.2, 0.2], 14.5017, 13.0, Duration::from_secs(120));
    report(4, "case 2 two-impulse", o);
    report(5, "case 2 three-impulse", three_impulse_fixed());
    report(6, "case 1 three-impulse degeneration", degeneration(two1.as_ref()));
    report(7, "covariance vs Riccati ODE", ode_oracle());
    report(8, "property suites", properties());

    // Case 2 with the first impulse at the latest time the coast allows.
    let p = case(2);
    if let Ok(r) = design_three_impulse(&p) {
        let r2 = r.r2.map(|v| format!(", r2 ({:.1}, {:.1}) m", v.x, v.y)).unwrap_or_default();
        println!("info: case 2 three-impulse, free t1: {}{r2}", summary(&r));
    }

    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
