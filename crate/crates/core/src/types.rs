//! Shared domain types: state and input vectors, limits, geometry,
//! obstacles and the trajectory log.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type State8 = SVector<f64, 8>;
pub type State6 = SVector<f64, 6>;
pub type Input2 = SVector<f64, 2>;

/// Full state of the multi-steering tractor-trailer robot.
///
/// Angles are kept unwrapped; wrapping happens only when a tracking error is
/// formed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub x1: f64,
    pub y1: f64,
    pub v: f64,
    pub a: f64,
    pub theta: f64,
    pub psi: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl StateVector {
    pub const FIELD_NAMES: [&'static str; 8] =
        ["x1", "y1", "v", "a", "theta", "psi", "delta1", "delta2"];

    pub fn to_vector(&self) -> State8 {
        State8::from([
            self.x1,
            self.y1,
            self.v,
            self.a,
            self.theta,
            self.psi,
            self.delta1,
            self.delta2,
        ])
    }

    pub fn from_vector(x: &State8) -> Self {
        Self {
            x1: x[0],
            y1: x[1],
            v: x[2],
            a: x[3],
            theta: x[4],
            psi: x[5],
            delta1: x[6],
            delta2: x[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

/// Input of the multi-steering robot: jerk and the two steering rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputVector {
    pub jerk: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl InputVector {
    pub fn new(jerk: f64, omega1: f64, omega2: f64) -> Self {
        Self { jerk, omega1, omega2 }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.jerk, self.omega1, self.omega2)
    }

    pub fn from_vector(u: &Vector3<f64>) -> Self {
        Self::new(u[0], u[1], u[2])
    }

    pub fn is_finite(&self) -> bool {
        self.jerk.is_finite() && self.omega1.is_finite() && self.omega2.is_finite()
    }
}

/// State of the single-steering robot (passive trailer, `delta2 = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SsttrState {
    pub x1: f64,
    pub y1: f64,
    pub v: f64,
    pub theta: f64,
    pub psi: f64,
    pub delta1: f64,
}

impl SsttrState {
    pub fn to_vector(&self) -> State6 {
        State6::from([self.x1, self.y1, self.v, self.theta, self.psi, self.delta1])
    }

    pub fn from_vector(x: &State6) -> Self {
        Self {
            x1: x[0],
            y1: x[1],
            v: x[2],
            theta: x[3],
            psi: x[4],
            delta1: x[5],
        }
    }

    /// Embeds into the full state with the given acceleration and `delta2 = 0`.
    pub fn to_full(&self, a: f64) -> StateVector {
        StateVector {
            x1: self.x1,
            y1: self.y1,
            v: self.v,
            a,
            theta: self.theta,
            psi: self.psi,
            delta1: self.delta1,
            delta2: 0.0,
        }
    }

    pub fn from_full(s: &StateVector) -> Self {
        Self {
            x1: s.x1,
            y1: s.y1,
            v: s.v,
            theta: s.theta,
            psi: s.psi,
            delta1: s.delta1,
        }
    }
}

/// Input of the single-steering robot: acceleration and tractor steering rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SsttrInput {
    pub a: f64,
    pub omega1: f64,
}

impl SsttrInput {
    pub fn to_vector(&self) -> Input2 {
        Input2::new(self.a, self.omega1)
    }

    pub fn from_vector(u: &Input2) -> Self {
        Self { a: u[0], omega1: u[1] }
    }
}

/// Symmetric box limits on states and inputs (`|x_i| <= max`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    pub psi_max: f64,
    pub delta1_max: f64,
    pub delta2_max: f64,
    pub jerk_max: f64,
    pub omega1_max: f64,
    pub omega2_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            a_max: 1.0,
            psi_max: 0.784,
            delta1_max: 0.784,
            delta2_max: 0.784,
            jerk_max: 2.5,
            omega1_max: 1.5,
            omega2_max: 0.5,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), crate::Error> {
        let all = [
            self.v_max,
            self.a_max,
            self.psi_max,
            self.delta1_max,
            self.delta2_max,
            self.jerk_max,
            self.omega1_max,
            self.omega2_max,
        ];
        if all.iter().all(|m| m.is_finite() && *m > 0.0) {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(
                "all limits must be finite and strictly positive".into(),
            ))
        }
    }

    /// `(state index, max)` pairs for the bounded full-state components.
    pub fn state_boxes(&self) -> [(usize, f64); 5] {
        [
            (2, self.v_max),
            (3, self.a_max),
            (5, self.psi_max),
            (6, self.delta1_max),
            (7, self.delta2_max),
        ]
    }

    pub fn input_maxima(&self) -> [f64; 3] {
        [self.jerk_max, self.omega1_max, self.omega2_max]
    }
}

/// A field that exceeds its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: &'static str,
    pub value: f64,
    pub limit: f64,
}

/// Lists every bounded state field outside its (inclusive) limit.
pub fn validate_state(s: &StateVector, lim: &Limits) -> Vec<Violation> {
    let checks = [
        ("v", s.v, lim.v_max),
        ("a", s.a, lim.a_max),
        ("psi", s.psi, lim.psi_max),
        ("delta1", s.delta1, lim.delta1_max),
        ("delta2", s.delta2, lim.delta2_max),
    ];
    collect_violations(&checks)
}

pub fn validate_input(u: &InputVector, lim: &Limits) -> Vec<Violation> {
    let checks = [
        ("jerk", u.jerk, lim.jerk_max),
        ("omega1", u.omega1, lim.omega1_max),
        ("omega2", u.omega2, lim.omega2_max),
    ];
    collect_violations(&checks)
}

fn collect_violations(checks: &[(&'static str, f64, f64)]) -> Vec<Violation> {
    checks
        .iter()
        // NaN compares false, so `!(<=)` also flags non-finite values.
        .filter(|(_, value, limit)| !(value.abs() <= *limit))
        .map(|&(field, value, limit)| Violation { field, value, limit })
        .collect()
}

/// An oriented body rectangle described relative to its rear-axle reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyRect {
    pub length: f64,
    pub width: f64,
    /// Distance from the rear edge of the body to the rear axle.
    pub rear_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    /// Tractor wheelbase.
    pub l1: f64,
    /// Trailer wheelbase (hitch to trailer rear axle).
    pub l2: f64,
    pub tractor_body: BodyRect,
    pub trailer_body: BodyRect,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self {
            l1: 2.5,
            l2: 5.5,
            tractor_body: BodyRect {
                length: 3.7,
                width: 2.0,
                rear_offset: 0.6,
            },
            trailer_body: BodyRect {
                length: 7.0,
                width: 2.4,
                rear_offset: 1.0,
            },
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<(), crate::Error> {
        let body_ok = |b: &BodyRect| b.length > 0.0 && b.width > 0.0 && b.rear_offset.is_finite();
        if self.l1 > 0.0 && self.l2 > 0.0 && body_ok(&self.tractor_body) && body_ok(&self.trailer_body)
        {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(
                "wheelbases and body dimensions must be positive".into(),
            ))
        }
    }
}

/// Point obstacle; `radius` is the physical extent used for collision reports
/// and rendering only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub radius: f64,
}

impl Obstacle {
    pub fn new(x: f64, y: f64, radius: f64) -> Self {
        Self { x, y, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Msttr,
    Ssttr,
}

/// One control period of a closed-loop run.
///
/// For single-steering runs the first input slot carries the commanded
/// acceleration instead of jerk and the third slot is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub t: f64,
    pub state: StateVector,
    pub u_nominal: InputVector,
    pub u_safe: InputVector,
    /// Indexed `[k]` for obstacle `k`.
    pub h_tractor: Vec<f64>,
    pub h_trailer: Vec<f64>,
    pub filter_active: bool,
    pub mpc_cost: f64,
    pub min_clearance: f64,
}

/// Time-ordered closed-loop record with fixed spacing `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub robot: RobotKind,
    pub ts: f64,
    pub num_obstacles: usize,
    pub entries: Vec<LogEntry>,
}

impl TrajectoryLog {
    pub fn new(robot: RobotKind, ts: f64, num_obstacles: usize) -> Self {
        Self {
            robot,
            ts,
            num_obstacles,
            entries: Vec::new(),
        }
    }

    /// Appends an entry, enforcing strictly increasing time.
    pub fn push(&mut self, entry: LogEntry) -> Result<(), crate::Error> {
        if let Some(last) = self.entries.last() {
            if !(entry.t > last.t) {
                return Err(crate::Error::InvalidParameter(format!(
                    "log time must increase strictly ({} after {})",
                    entry.t, last.t
                )));
            }
        }
        if entry.h_tractor.len() != self.num_obstacles || entry.h_trailer.len() != self.num_obstacles
        {
            return Err(crate::Error::DimensionMismatch(
                "barrier value count differs from obstacle count".into(),
            ));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_on_boundary_is_inside() {
        let s = StateVector {
            v: 20.0,
            ..Default::default()
        };
        assert!(validate_state(&s, &Limits::default()).is_empty());
    }

    #[test]
    fn zero_state_has_no_violation() {
        assert!(validate_state(&StateVector::default(), &Limits::default()).is_empty());
    }

    #[test]
    fn steering_beyond_limit_is_flagged() {
        let s = StateVector {
            delta1: 0.8,
            ..Default::default()
        };
        let v = validate_state(&s, &Limits::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "delta1");
        assert_eq!(v[0].limit, 0.784);
    }

    #[test]
    fn nan_is_a_violation() {
        let s = StateVector {
            psi: f64::NAN,
            ..Default::default()
        };
        assert_eq!(validate_state(&s, &Limits::default()).len(), 1);
    }

    #[test]
    fn input_limits_from_table() {
        let lim = Limits::default();
        assert_eq!(lim.input_maxima(), [2.5, 1.5, 0.5]);
        let u = InputVector::new(-2.5, 1.5, 0.50001);
        let v = validate_input(&u, &lim);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "omega2");
    }

    #[test]
    fn log_rejects_non_increasing_time() {
        let mut log = TrajectoryLog::new(RobotKind::Msttr, 0.2, 0);
        let e = LogEntry {
            t: 0.0,
            state: StateVector::default(),
            u_nominal: InputVector::default(),
            u_safe: InputVector::default(),
            h_tractor: vec![],
            h_trailer: vec![],
            filter_active: false,
            mpc_cost: 0.0,
            min_clearance: f64::INFINITY,
        };
        log.push(e.clone()).unwrap();
        assert!(log.push(e).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    proptest::proptest! {
        #[test]
        fn shrinking_limits_never_removes_violations(
            v in -30.0..30.0f64, a in -2.0..2.0f64, psi in -1.0..1.0f64,
            d1 in -1.0..1.0f64, d2 in -1.0..1.0f64, shrink in 0.1..1.0f64,
        ) {
            let s = StateVector { v, a, psi, delta1: d1, delta2: d2, ..Default::default() };
            let lim = Limits::default();
            let tight = Limits {
                v_max: lim.v_max * shrink,
                a_max: lim.a_max * shrink,
                psi_max: lim.psi_max * shrink,
                delta1_max: lim.delta1_max * shrink,
                delta2_max: lim.delta2_max * shrink,
                ..lim
            };
            let loose: Vec<_> = validate_state(&s, &lim).into_iter().map(|v| v.field).collect();
            let strict: Vec<_> = validate_state(&s, &tight).into_iter().map(|v| v.field).collect();
            for f in loose {
                proptest::prop_assert!(strict.contains(&f));
            }
        }
    }
}
