use mcbf_core::dynamics::{AffineDynamics, Msttr};
use mcbf_core::qp::QpSolver;
use mcbf_core::safety::{
    assemble_constraints, filter, h, tractor_derivatives, trailer_derivatives, Body, FilterSettings,
    GainVectors, SafetyDistances,
};
use mcbf_core::types::{InputVector, State8, StateVector};
use mcbf_core::{Limits, Obstacle, RobotGeometry};
use nalgebra::{DVector, SVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn state() -> impl Strategy<Value = StateVector> {
    (
        (-20.0..20.0f64, -20.0..20.0f64, 0.5..10.0f64, -1.0..1.0f64),
        (-3.2..3.2f64, -0.78..0.78f64, -0.78..0.78f64, -0.78..0.78f64),
    )
        .prop_map(|((x1, y1, v, a), (theta, psi, delta1, delta2))| StateVector {
            x1,
            y1,
            v,
            a,
            theta,
            psi,
            delta1,
            delta2,
        })
}

fn input() -> impl Strategy<Value = InputVector> {
    (-2.5..2.5f64, -1.5..1.5f64, -0.5..0.5f64).prop_map(|(j, w1, w2)| InputVector::new(j, w1, w2))
}

fn obstacle_near(s: &StateVector, ang: f64, dist: f64) -> Obstacle {
    Obstacle::new(s.x1 + dist * ang.cos(), s.y1 + dist * ang.sin(), 0.5)
}

/// Forward Euler would bias the estimate; a fine RK4 step keeps the flow exact
/// to well below the difference error.
fn flow(x: &State8, u: &SVector<f64, 3>, dt: f64) -> State8 {
    let m = Msttr { geom: RobotGeometry::default() };
    let f = |y: &State8| m.flow(y, u).unwrap();
    let k1 = f(x);
    let k2 = f(&(x + k1 * (dt / 2.0)));
    let k3 = f(&(x + k2 * (dt / 2.0)));
    let k4 = f(&(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn d_dt(s: &StateVector, u: &InputVector, g: impl Fn(&StateVector) -> f64) -> f64 {
    let tau = 1e-4;
    let x = s.to_vector();
    let uv = u.to_vector();
    let fwd = StateVector::from_vector(&flow(&x, &uv, tau));
    let bwd = StateVector::from_vector(&flow(&x, &uv, -tau));
    (g(&fwd) - g(&bwd)) / (2.0 * tau)
}

fn close(approx: f64, exact: f64) -> bool {
    (approx - exact).abs() <= 1e-3 * exact.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn highest_derivatives_match_flow(
        s in state(), u in input(), ang in 0.0..std::f64::consts::TAU, dist in 3.0..15.0f64,
    ) {
        let geom = RobotGeometry::default();
        let obs = obstacle_near(&s, ang, dist);
        let t = tractor_derivatives(&s, &obs, 4.6, &geom).unwrap();
        let r = trailer_derivatives(&s, &obs, 3.0, &geom).unwrap();
        let uv = u.to_vector();

        let fd = d_dt(&s, &u, |p| h(p, Body::Tractor, 4.6, &obs, &geom));
        prop_assert!(close(fd, t.h_dot), "{fd} vs {}", t.h_dot);
        let fd = d_dt(&s, &u, |p| tractor_derivatives(p, &obs, 4.6, &geom).unwrap().h_dot);
        prop_assert!(close(fd, t.h_ddot), "{fd} vs {}", t.h_ddot);
        let fd = d_dt(&s, &u, |p| tractor_derivatives(p, &obs, 4.6, &geom).unwrap().h_ddot);
        prop_assert!(close(fd, t.drift + t.grad_u.dot(&uv)));

        let fd = d_dt(&s, &u, |p| h(p, Body::Trailer, 3.0, &obs, &geom));
        prop_assert!(close(fd, r.h_dot), "{fd} vs {}", r.h_dot);
        let fd = d_dt(&s, &u, |p| trailer_derivatives(p, &obs, 3.0, &geom).unwrap().h_dot);
        prop_assert!(close(fd, r.drift + r.grad_u.dot(&uv)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn filter_output_is_the_closest_admissible_input(
        s in state(), u_nom in input(), ang in 0.0..std::f64::consts::TAU, dist in 5.0..9.0f64, seed in 0u64..1000,
    ) {
        let geom = RobotGeometry::default();
        let obstacles = [obstacle_near(&s, ang, dist)];
        let c = assemble_constraints(&s, &obstacles, &GainVectors::default(), &SafetyDistances::default(), &geom).unwrap();
        let mut solver = QpSolver::default();
        let Ok(out) = filter(&u_nom, &c, &Limits::default(), &FilterSettings::default(), &mut solver) else {
            return Ok(());
        };
        let us = out.u_safe.to_vector();
        let us = DVector::from_column_slice(us.as_slice());
        let un = DVector::from_column_slice(u_nom.to_vector().as_slice());
        prop_assert!(c.margins(&us).iter().all(|m| *m >= -1e-6 * c.b.amax().max(1.0)));
        let best = (&us - &un).norm();

        let mut rng = StdRng::seed_from_u64(seed);
        let mut accepted = 0;
        for i in 0..1000 {
            // Half the candidates near the filter output, half anywhere in a wide box.
            let cand = if i % 2 == 0 {
                DVector::from_fn(3, |k, _| us[k] + rng.random_range(-0.5..0.5))
            } else {
                DVector::from_fn(3, |_, _| rng.random_range(-10.0..10.0))
            };
            if c.satisfied_by(&cand) {
                accepted += 1;
                prop_assert!(best <= (&cand - &un).norm() + 1e-9);
            }
        }
        prop_assert!(accepted > 0 || c.a.nrows() == 0);
    }

    #[test]
    fn admissible_nominal_passes_unchanged(s in state(), u_nom in input(), ang in 0.0..std::f64::consts::TAU) {
        let geom = RobotGeometry::default();
        let obstacles = [obstacle_near(&s, ang, 40.0)];
        let c = assemble_constraints(&s, &obstacles, &GainVectors::default(), &SafetyDistances::default(), &geom).unwrap();
        let un = DVector::from_column_slice(u_nom.to_vector().as_slice());
        prop_assume!(c.satisfied_by(&un));
        let out = filter(&u_nom, &c, &Limits::default(), &FilterSettings::default(), &mut QpSolver::default()).unwrap();
        prop_assert_eq!(out.u_safe, u_nom);
        prop_assert!(!out.active);
    }
}
