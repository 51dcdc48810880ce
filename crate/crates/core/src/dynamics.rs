//! Kinematic tractor-trailer models in input-affine form, trailer pose,
//! body footprints and a fixed-step RK4 integrator.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{SMatrix, SVector, Vector2};

use crate::types::{
    BodyRect, RobotGeometry, SsttrState, State6, State8, StateVector,
};
use crate::Error;

/// `x' = f(x) + G(x) u`.
pub trait AffineDynamics<const N: usize, const M: usize> {
    fn drift(&self, x: &SVector<f64, N>) -> Result<SVector<f64, N>, Error>;
    fn input_matrix(&self, x: &SVector<f64, N>) -> SMatrix<f64, N, M>;

    fn flow(&self, x: &SVector<f64, N>, u: &SVector<f64, M>) -> Result<SVector<f64, N>, Error> {
        Ok(self.drift(x)? + self.input_matrix(x) * u)
    }
}

/// Multi-steering robot: state `(x1, y1, v, a, theta, psi, delta1, delta2)`,
/// input `(jerk, omega1, omega2)`.
#[derive(Debug, Clone, Copy)]
pub struct Msttr {
    pub geom: RobotGeometry,
}

/// Single-steering robot: state `(x1, y1, v, theta, psi, delta1)`, input
/// `(a, omega1)`.
#[derive(Debug, Clone, Copy)]
pub struct Ssttr {
    pub geom: RobotGeometry,
}

pub(crate) fn check_steering(delta: f64) -> Result<(), Error> {
    if delta.is_finite() && delta.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::SteeringSingularity(delta))
    }
}

pub fn msttr_f(s: &StateVector, geom: &RobotGeometry) -> Result<State8, Error> {
    check_steering(s.delta1)?;
    check_steering(s.delta2)?;
    let yaw_rate = s.v / geom.l1 * s.delta1.tan();
    let psi_rate =
        yaw_rate - s.v / geom.l2 * (s.delta2.tan() * s.psi.cos() + s.psi.sin());
    Ok(State8::from([
        s.v * s.theta.cos(),
        s.v * s.theta.sin(),
        s.a,
        0.0,
        yaw_rate,
        psi_rate,
        0.0,
        0.0,
    ]))
}

/// Input columns are constant unit vectors (pure integrators).
pub fn msttr_g() -> SMatrix<f64, 8, 3> {
    let mut g = SMatrix::<f64, 8, 3>::zeros();
    g[(3, 0)] = 1.0;
    g[(6, 1)] = 1.0;
    g[(7, 2)] = 1.0;
    g
}

pub fn ssttr_f(s: &SsttrState, geom: &RobotGeometry) -> Result<State6, Error> {
    check_steering(s.delta1)?;
    let yaw_rate = s.v / geom.l1 * s.delta1.tan();
    Ok(State6::from([
        s.v * s.theta.cos(),
        s.v * s.theta.sin(),
        0.0,
        yaw_rate,
        yaw_rate - s.v / geom.l2 * s.psi.sin(),
        0.0,
    ]))
}

pub fn ssttr_g() -> SMatrix<f64, 6, 2> {
    let mut g = SMatrix::<f64, 6, 2>::zeros();
    g[(2, 0)] = 1.0;
    g[(5, 1)] = 1.0;
    g
}

impl AffineDynamics<8, 3> for Msttr {
    fn drift(&self, x: &State8) -> Result<State8, Error> {
        msttr_f(&StateVector::from_vector(x), &self.geom)
    }

    fn input_matrix(&self, _x: &State8) -> SMatrix<f64, 8, 3> {
        msttr_g()
    }
}

impl AffineDynamics<6, 2> for Ssttr {
    fn drift(&self, x: &State6) -> Result<State6, Error> {
        ssttr_f(&SsttrState::from_vector(x), &self.geom)
    }

    fn input_matrix(&self, _x: &State6) -> SMatrix<f64, 6, 2> {
        ssttr_g()
    }
}

/// Pose of the trailer rear-axle midpoint: `(x2, y2, heading2)`.
pub fn trailer_pose(s: &StateVector, geom: &RobotGeometry) -> (f64, f64, f64) {
    let heading = s.theta - s.psi;
    (
        s.x1 - geom.l2 * heading.cos(),
        s.y1 - geom.l2 * heading.sin(),
        heading,
    )
}

/// One classical RK4 step with the input held constant.
pub fn integrate_step<D, const N: usize, const M: usize>(
    dynamics: &D,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    dt: f64,
) -> Result<SVector<f64, N>, Error>
where
    D: AffineDynamics<N, M>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
    }
    let k1 = dynamics.flow(x, u)?;
    let k2 = dynamics.flow(&(x + k1 * (dt / 2.0)), u)?;
    let k3 = dynamics.flow(&(x + k2 * (dt / 2.0)), u)?;
    let k4 = dynamics.flow(&(x + k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Zero-order-hold propagation over `dt` split into `substeps` RK4 steps.
pub fn integrate_substepped<D, const N: usize, const M: usize>(
    dynamics: &D,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    dt: f64,
    substeps: usize,
) -> Result<SVector<f64, N>, Error>
where
    D: AffineDynamics<N, M>,
{
    let n = substeps.max(1);
    let h = dt / n as f64;
    let mut state = *x;
    for _ in 0..n {
        state = integrate_step(dynamics, &state, u, h)?;
    }
    Ok(state)
}

/// A posed rectangle in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vector2<f64>,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    fn from_body(x: f64, y: f64, heading: f64, body: &BodyRect) -> Self {
        // Body center sits ahead of the axle by (length / 2 - rear_offset).
        let ahead = body.length / 2.0 - body.rear_offset;
        Self {
            center: Vector2::new(x + ahead * heading.cos(), y + ahead * heading.sin()),
            heading,
            half_length: body.length / 2.0,
            half_width: body.width / 2.0,
        }
    }

    /// Corners counter-clockwise starting at rear-right.
    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let (s, c) = self.heading.sin_cos();
        let fwd = Vector2::new(c, s);
        let left = Vector2::new(-s, c);
        let (l, w) = (self.half_length, self.half_width);
        [
            self.center - fwd * l - left * w,
            self.center + fwd * l - left * w,
            self.center + fwd * l + left * w,
            self.center - fwd * l + left * w,
        ]
    }

    /// Signed distance from a point to the rectangle (negative inside).
    pub fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        let (s, c) = self.heading.sin_cos();
        let d = p - self.center;
        let local = Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
        let qx = local.x.abs() - self.half_length;
        let qy = local.y.abs() - self.half_width;
        let outside = Vector2::new(qx.max(0.0), qy.max(0.0)).norm();
        let inside = qx.max(qy).min(0.0);
        outside + inside
    }

    /// Gap between the rectangle and a disc; negative when they overlap.
    pub fn disc_clearance(&self, center: &Vector2<f64>, radius: f64) -> f64 {
        self.signed_distance(center) - radius
    }
}

/// Tractor and trailer body rectangles at a given state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub tractor: OrientedRect,
    pub trailer: OrientedRect,
}

pub fn footprint(s: &StateVector, geom: &RobotGeometry) -> Footprint {
    let (x2, y2, h2) = trailer_pose(s, geom);
    Footprint {
        tractor: OrientedRect::from_body(s.x1, s.y1, s.theta, &geom.tractor_body),
        trailer: OrientedRect::from_body(x2, y2, h2, &geom.trailer_body),
    }
}
