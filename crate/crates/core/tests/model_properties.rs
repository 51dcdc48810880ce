use mcbf_core::dynamics::{msttr_f, ssttr_f, AffineDynamics, Msttr};
use mcbf_core::linmodel::{linearize, msttr_state_jacobian, numerical_jacobians};
use mcbf_core::types::{InputVector, SsttrState, StateVector};
use mcbf_core::RobotGeometry;
use nalgebra::SMatrix;
use proptest::prelude::*;

fn state() -> impl Strategy<Value = StateVector> {
    (
        (-50.0..50.0f64, -50.0..50.0f64, 0.0..20.0f64, -1.0..1.0f64),
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn passive_trailer_reduces_to_single_steering(s in state()) {
        let geom = RobotGeometry::default();
        let full = StateVector { delta2: 0.0, ..s };
        let fm = msttr_f(&full, &geom).unwrap();
        let fs = ssttr_f(&SsttrState::from_full(&full), &geom).unwrap();
        // Shared coordinates: x1, y1, theta, psi, delta1 (speed is an input of the reduced model).
        for (i, j) in [(0, 0), (1, 1), (4, 3), (5, 4), (6, 5)] {
            prop_assert!((fm[i] - fs[j]).abs() <= 1e-12 * (1.0 + fm[i].abs()), "row {i}: {} vs {}", fm[i], fs[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symbolic_state_jacobian_matches_finite_differences(s in state(), u in input()) {
        let geom = RobotGeometry::default();
        let sym = msttr_state_jacobian(&s, &geom).unwrap();
        let (fd, _) = numerical_jacobians(&s, &u, &geom).unwrap();
        for (a, b) in sym.iter().zip(fd.iter()) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn discrete_a_is_euler_of_numerical_jacobian(s in state(), u in input(), ts in 0.01..0.5f64) {
        let geom = RobotGeometry::default();
        let m = linearize(&s, &u, &geom, ts).unwrap();
        let (fd, _) = numerical_jacobians(&s, &u, &geom).unwrap();
        let expected = SMatrix::<f64, 8, 8>::identity() + fd * ts;
        prop_assert!((m.a - expected).amax() < 1e-5);
    }

    #[test]
    fn affine_model_is_exact_at_linearization_point(s in state(), u in input()) {
        let geom = RobotGeometry::default();
        let ts = 0.2;
        let m = linearize(&s, &u, &geom, ts).unwrap();
        let x = s.to_vector();
        let uv = u.to_vector();
        let euler = x + Msttr { geom }.flow(&x, &uv).unwrap() * ts;
        prop_assert!((m.predict(&x, &uv) - euler).norm() < 1e-12 * (1.0 + x.norm()));
    }
}
