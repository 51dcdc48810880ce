//! Numerical oracle suite.
//!
//! Each check compares a closed-form quantity against an independent
//! computation: central-difference Jacobians for the discrete model, the
//! scalar entry formulas of the published A and B matrices, finite
//! differences in time along constant-input flows for the barrier
//! derivatives, and active-set enumeration for the QP solver.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::dynamics::{AffineDynamics, Msttr};
use crate::linmodel::{linearize, numerical_jacobians};
use crate::qp::{QpProblem, QpSolver, QpStatus};
use crate::safety::{h, tractor_derivatives, trailer_derivatives, Body};
use crate::types::{InputVector, State8, StateVector};
use crate::{Error, Limits, Obstacle, RobotGeometry};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, max_error: f64, tolerance: f64, samples: usize, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: max_error.is_finite() && max_error < tolerance,
            max_error,
            tolerance,
            samples,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub ts: f64,
    pub jacobian_samples: usize,
    pub flow_samples: usize,
    pub qp_samples: usize,
    /// Offset added to one named entry of the published matrix table.
    pub entry_perturbation: Option<(String, f64)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            ts: 0.2,
            jacobian_samples: 100,
            flow_samples: 20,
            qp_samples: 500,
            entry_perturbation: None,
        }
    }
}

pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<CheckResult>, Error> {
    if let Some((name, _)) = &opts.entry_perturbation {
        if !matrix_entries().iter().any(|e| e.0 == name) {
            return Err(Error::InvalidParameter(format!("unknown matrix entry '{name}'")));
        }
    }
    let mut out = vec![jacobian_check(opts.seed, opts.jacobian_samples, opts.ts)?];
    out.extend(matrix_entry_checks(
        opts.seed,
        opts.jacobian_samples,
        opts.ts,
        opts.entry_perturbation.as_ref().map(|(n, d)| (n.as_str(), *d)),
    )?);
    out.extend(barrier_derivative_checks(opts.seed, opts.flow_samples)?);
    out.extend(qp_checks(opts.seed, opts.qp_samples)?);
    Ok(out)
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:<6}  {:>11}  {:>9}  {:>7}", "check", "result", "max error", "tolerance", "samples");
    for r in results {
        let _ = writeln!(
            s,
            "{:<width$}  {:<6}  {:>11.3e}  {:>9.0e}  {:>7}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_error,
            r.tolerance,
            r.samples
        );
    }
    s
}

/// State drawn uniformly from the admissible box of the published limits.
pub fn random_state(rng: &mut StdRng, lim: &Limits) -> StateVector {
    StateVector {
        x1: rng.random_range(-50.0..50.0),
        y1: rng.random_range(-50.0..50.0),
        v: rng.random_range(0.0..10.0),
        a: rng.random_range(-lim.a_max..lim.a_max),
        theta: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        psi: rng.random_range(-lim.psi_max..lim.psi_max),
        delta1: rng.random_range(-lim.delta1_max..lim.delta1_max),
        delta2: rng.random_range(-lim.delta2_max..lim.delta2_max),
    }
}

pub fn random_input(rng: &mut StdRng, lim: &Limits) -> InputVector {
    InputVector::new(
        rng.random_range(-lim.jerk_max..lim.jerk_max),
        rng.random_range(-lim.omega1_max..lim.omega1_max),
        rng.random_range(-lim.omega2_max..lim.omega2_max),
    )
}

/// Discrete model against central-difference Jacobians of the continuous
/// model, discretized the same way.
pub fn jacobian_check(seed: u64, samples: usize, ts: f64) -> Result<CheckResult, Error> {
    let geom = RobotGeometry::default();
    let lim = Limits::default();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let s = random_state(&mut rng, &lim);
        let u = random_input(&mut rng, &lim);
        let m = linearize(&s, &u, &geom, ts)?;
        let (jx, ju) = numerical_jacobians(&s, &u, &geom)?;
        let x = s.to_vector();
        let uv = u.to_vector();
        let f = Msttr { geom }.flow(&x, &uv)?;
        let a_fd = SMatrix::<f64, 8, 8>::identity() + jx * ts;
        let b_fd = ju * ts;
        let c_fd = (f - jx * x - ju * uv) * ts;
        worst = worst
            .max((m.a - a_fd).amax())
            .max((m.b - b_fd).amax())
            .max((m.c - c_fd).amax());
    }
    Ok(CheckResult::new(
        "A, B, C vs finite differences",
        worst,
        1e-5,
        samples,
        format!("max abs error over {samples} random admissible states"),
    ))
}

type Entry = fn(&StateVector, &RobotGeometry, f64) -> f64;

/// Named entries of the published A and B matrices as
/// `(name, row, col, value, is_b)` with zero-based indices.
pub fn matrix_entries() -> Vec<(&'static str, usize, usize, Entry, bool)> {
    fn sec2(d: f64) -> f64 {
        1.0 + d.tan().powi(2)
    }
    vec![
        ("a_13", 0, 2, |s, _, ts| s.theta.cos() * ts, false),
        ("a_15", 0, 4, |s, _, ts| -s.v * s.theta.sin() * ts, false),
        ("a_23", 1, 2, |s, _, ts| s.theta.sin() * ts, false),
        ("a_25", 1, 4, |s, _, ts| s.v * s.theta.cos() * ts, false),
        ("a_34", 2, 3, |_, _, ts| ts, false),
        ("a_53", 4, 2, |s, g, ts| s.delta1.tan() / g.l1 * ts, false),
        ("a_57", 4, 6, |s, g, ts| s.v / g.l1 * sec2(s.delta1) * ts, false),
        (
            "a_63",
            5,
            2,
            |s, g, ts| (s.delta1.tan() / g.l1 - (s.delta2.tan() * s.psi.cos() + s.psi.sin()) / g.l2) * ts,
            false,
        ),
        (
            "a_66",
            5,
            5,
            |s, g, ts| 1.0 - s.v / g.l2 * (-s.delta2.tan() * s.psi.sin() + s.psi.cos()) * ts,
            false,
        ),
        ("a_67", 5, 6, |s, g, ts| s.v / g.l1 * sec2(s.delta1) * ts, false),
        ("a_68", 5, 7, |s, g, ts| -s.v / g.l2 * sec2(s.delta2) * s.psi.cos() * ts, false),
        ("b_31", 3, 0, |_, _, ts| ts, true),
        ("b_72", 6, 1, |_, _, ts| ts, true),
        ("b_83", 7, 2, |_, _, ts| ts, true),
    ]
}

/// Every named entry of the published matrices, plus one check that all
/// remaining entries equal the identity (A) or zero (B).
pub fn matrix_entry_checks(
    seed: u64,
    samples: usize,
    ts: f64,
    perturb: Option<(&str, f64)>,
) -> Result<Vec<CheckResult>, Error> {
    let geom = RobotGeometry::default();
    let lim = Limits::default();
    let table = matrix_entries();
    let mut rng = StdRng::seed_from_u64(seed ^ 0xA11);
    let mut worst = vec![0.0f64; table.len()];
    let mut structure = 0.0f64;
    for _ in 0..samples {
        let s = random_state(&mut rng, &lim);
        let u = random_input(&mut rng, &lim);
        let m = linearize(&s, &u, &geom, ts)?;
        let mut named_a = SMatrix::<f64, 8, 8>::identity();
        let mut named_b = SMatrix::<f64, 8, 3>::zeros();
        for (i, (name, r, c, f, is_b)) in table.iter().enumerate() {
            let mut expected = f(&s, &geom, ts);
            if let Some((p, d)) = perturb {
                if p == *name {
                    expected += d;
                }
            }
            let actual = if *is_b { m.b[(*r, *c)] } else { m.a[(*r, *c)] };
            worst[i] = worst[i].max((actual - expected).abs());
            if *is_b {
                named_b[(*r, *c)] = m.b[(*r, *c)];
            } else {
                named_a[(*r, *c)] = m.a[(*r, *c)];
            }
        }
        structure = structure.max((m.a - named_a).amax()).max((m.b - named_b).amax());
    }
    let mut out: Vec<CheckResult> = table
        .iter()
        .zip(worst)
        .map(|((name, ..), w)| {
            CheckResult::new(name, w, 1e-12, samples, "closed-form entry vs discrete model".into())
        })
        .collect();
    out.push(CheckResult::new(
        "A, B sparsity pattern",
        structure,
        1e-15,
        samples,
        "entries outside the named ones are identity or zero".into(),
    ));
    Ok(out)
}

fn rk4(model: &Msttr, x: &State8, u: &SVector<f64, 3>, dt: f64) -> Result<State8, Error> {
    let k1 = model.flow(x, u)?;
    let k2 = model.flow(&(x + k1 * (dt / 2.0)), u)?;
    let k3 = model.flow(&(x + k2 * (dt / 2.0)), u)?;
    let k4 = model.flow(&(x + k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Central difference in time of `g` along the flow of `u` through `x`.
fn time_derivative<F>(model: &Msttr, x: &State8, u: &SVector<f64, 3>, tau: f64, g: F) -> Result<f64, Error>
where
    F: Fn(&StateVector) -> Result<f64, Error>,
{
    let fwd = rk4(model, x, u, tau)?;
    let bwd = rk4(model, x, u, -tau)?;
    Ok((g(&StateVector::from_vector(&fwd))? - g(&StateVector::from_vector(&bwd))?) / (2.0 * tau))
}

/// Relative error with the magnitude floored at one.
fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

/// Each closed-form barrier derivative against the time derivative of the
/// level below it along random constant-input flows. The zeroth level is
/// the barrier evaluated directly at the body point.
pub fn barrier_derivative_checks(seed: u64, flows: usize) -> Result<Vec<CheckResult>, Error> {
    const TAU: f64 = 1e-4;
    let geom = RobotGeometry::default();
    let lim = Limits::default();
    let model = Msttr { geom };
    let (d1, d2) = (4.6, 3.0);
    let mut rng = StdRng::seed_from_u64(seed ^ 0xBA55);
    let mut worst = [0.0f64; 5];
    for _ in 0..flows {
        let mut s = random_state(&mut rng, &lim);
        s.v = rng.random_range(0.5..10.0);
        let u = random_input(&mut rng, &lim);
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = rng.random_range(3.0..15.0);
        let obs = Obstacle::new(s.x1 + dist * ang.cos(), s.y1 + dist * ang.sin(), 0.5);
        let x = s.to_vector();
        let uv = u.to_vector();

        let t = tractor_derivatives(&s, &obs, d1, &geom)?;
        let h1_dot = time_derivative(&model, &x, &uv, TAU, |p| Ok(h(p, Body::Tractor, d1, &obs, &geom)))?;
        let h1_ddot = time_derivative(&model, &x, &uv, TAU, |p| Ok(tractor_derivatives(p, &obs, d1, &geom)?.h_dot))?;
        let h1_dddot = time_derivative(&model, &x, &uv, TAU, |p| Ok(tractor_derivatives(p, &obs, d1, &geom)?.h_ddot))?;
        worst[0] = worst[0].max(rel_err(h1_dot, t.h_dot));
        worst[1] = worst[1].max(rel_err(h1_ddot, t.h_ddot));
        worst[2] = worst[2].max(rel_err(h1_dddot, t.drift + t.grad_u.dot(&uv)));

        let r = trailer_derivatives(&s, &obs, d2, &geom)?;
        let h2_dot = time_derivative(&model, &x, &uv, TAU, |p| Ok(h(p, Body::Trailer, d2, &obs, &geom)))?;
        let h2_ddot = time_derivative(&model, &x, &uv, TAU, |p| Ok(trailer_derivatives(p, &obs, d2, &geom)?.h_dot))?;
        worst[3] = worst[3].max(rel_err(h2_dot, r.h_dot));
        worst[4] = worst[4].max(rel_err(h2_ddot, r.drift + r.grad_u.dot(&uv)));
    }
    let names = [
        "tractor h' vs flow",
        "tractor h'' vs flow",
        "tractor h''' vs flow",
        "trailer h' vs flow",
        "trailer h'' vs flow",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(n, w)| CheckResult::new(n, w, 1e-3, flows, "max relative error".into()))
        .collect())
}

/// Exact minimizer of a strictly convex inequality-constrained QP by
/// enumerating working sets in order of size. For a strictly convex problem
/// the first working set whose equality-constrained minimizer is primal
/// feasible with nonnegative multipliers gives the unique optimum.
pub fn brute_force_qp(p: &QpProblem) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.h.nrows();
    let m = p.a_ineq.nrows();
    let scale = 1.0 + p.b_ineq.amax();
    for size in 0..=n.min(m) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if let Some(sol) = solve_working_set(p, &idx, scale) {
                return Some(sol);
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    None
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn solve_working_set(p: &QpProblem, idx: &[usize], scale: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.h.nrows();
    let k = idx.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    rhs.rows_mut(0, n).copy_from(&(-&p.q));
    for (j, &i) in idx.iter().enumerate() {
        for c in 0..n {
            kkt[(n + j, c)] = p.a_ineq[(i, c)];
            kkt[(c, n + j)] = p.a_ineq[(i, c)];
        }
        rhs[n + j] = p.b_ineq[i];
    }
    let sol = kkt.lu().solve(&rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let z = sol.rows(0, n).into_owned();
    let tol = 1e-9 * scale;
    if (&p.a_ineq * &z - &p.b_ineq).iter().any(|s| *s > tol) {
        return None;
    }
    let mut duals = DVector::zeros(p.a_ineq.nrows());
    for (j, &i) in idx.iter().enumerate() {
        if sol[n + j] < -tol {
            return None;
        }
        duals[i] = sol[n + j].max(0.0);
    }
    Some((z, duals))
}

/// Random strictly convex QP with `n <= 10` variables and `m <= 20`
/// constraints whose feasible set contains a known interior point.
pub fn random_qp(rng: &mut StdRng) -> QpProblem {
    let n = rng.random_range(1..=10);
    let m = rng.random_range(1..=20);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * rng.random_range(0.1..1.0);
    let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let z0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let b = &a * z0 + DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    QpProblem::new(h, q, a, b).expect("well-formed random QP")
}

/// Solver against enumeration on random strictly convex QPs: objective
/// value, minimizer and KKT residuals.
pub fn qp_checks(seed: u64, samples: usize) -> Result<Vec<CheckResult>, Error> {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x0F0F);
    let mut solver = QpSolver::default();
    let (mut value_err, mut arg_err, mut kkt_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0usize;
    for _ in 0..samples {
        let p = random_qp(&mut rng);
        let sol = solver.solve(&p)?;
        let Some((z_ref, _)) = brute_force_qp(&p) else {
            failures += 1;
            continue;
        };
        if sol.status != QpStatus::Optimal {
            failures += 1;
            continue;
        }
        value_err = value_err.max((p.objective(&sol.z) - p.objective(&z_ref)).abs());
        arg_err = arg_err.max((&sol.z - &z_ref).amax());
        kkt_err = kkt_err.max(sol.kkt.max());
    }
    let bump = |e: f64| if failures > 0 { f64::INFINITY } else { e };
    let detail = format!("{failures} problems unsolved");
    Ok(vec![
        CheckResult::new("QP objective vs enumeration", bump(value_err), 1e-6, samples, detail.clone()),
        CheckResult::new("QP minimizer vs enumeration", bump(arg_err), 1e-5, samples, detail.clone()),
        CheckResult::new("QP KKT residuals", bump(kkt_err), 1e-8, samples, detail),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            jacobian_samples: 10,
            flow_samples: 5,
            qp_samples: 30,
            ..Default::default()
        }
    }

    #[test]
    fn suite_passes() {
        let results = run_suite(&small()).unwrap();
        for r in &results {
            assert!(r.passed, "{r:?}");
        }
        assert!(format_table(&results).contains("a_57"));
    }

    #[test]
    fn perturbed_entry_fails_only_that_check() {
        let mut opts = small();
        opts.entry_perturbation = Some(("a_57".into(), 1e-3));
        let results = run_suite(&opts).unwrap();
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        assert_eq!(failed, ["a_57"]);
    }

    #[test]
    fn enumeration_finds_unconstrained_and_active_optima() {
        // min (z - 2)^2 subject to z <= 1.
        let p = QpProblem::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -4.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let (z, y) = brute_force_qp(&p).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
        assert!((y[0] - 2.0).abs() < 1e-12);
        let loose = QpProblem::new(p.h.clone(), p.q.clone(), p.a_ineq.clone(), DVector::from_element(1, 5.0)).unwrap();
        assert!((brute_force_qp(&loose).unwrap().0[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut idx = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
    }
}
