//! Discrete linear time-varying approximation `x+ = A x + B u + C` of the
//! kinematic models, built by forward-Euler discretization of the Jacobians
//! at a reference point.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{check_steering, msttr_f, msttr_g, ssttr_f, ssttr_g, AffineDynamics, Msttr};
use crate::types::{InputVector, RobotGeometry, SsttrInput, SsttrState, State8, StateVector};
use crate::Error;

/// Affine one-step model around `(ref_state, ref_input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel<const N: usize, const M: usize> {
    pub a: SMatrix<f64, N, N>,
    pub b: SMatrix<f64, N, M>,
    pub c: SVector<f64, N>,
    pub ref_state: SVector<f64, N>,
    pub ref_input: SVector<f64, M>,
    pub ts: f64,
}

impl<const N: usize, const M: usize> LinearizedModel<N, M> {
    pub fn predict(&self, x: &SVector<f64, N>, u: &SVector<f64, M>) -> SVector<f64, N> {
        self.a * x + self.b * u + self.c
    }

    fn from_jacobian(
        jx: SMatrix<f64, N, N>,
        ju: SMatrix<f64, N, M>,
        drift: SVector<f64, N>,
        x_r: SVector<f64, N>,
        u_r: SVector<f64, M>,
        ts: f64,
    ) -> Self {
        let flow = drift + ju * u_r;
        Self {
            a: SMatrix::<f64, N, N>::identity() + jx * ts,
            b: ju * ts,
            c: (flow - jx * x_r - ju * u_r) * ts,
            ref_state: x_r,
            ref_input: u_r,
            ts,
        }
    }
}

pub type MsttrModel = LinearizedModel<8, 3>;
pub type SsttrModel = LinearizedModel<6, 2>;

fn check_ts(ts: f64) -> Result<(), Error> {
    if ts > 0.0 && ts.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sampling time must be positive, got {ts}")))
    }
}

/// Continuous-time state Jacobian of the multi-steering model.
pub fn msttr_state_jacobian(s: &StateVector, geom: &RobotGeometry) -> Result<SMatrix<f64, 8, 8>, Error> {
    check_steering(s.delta1)?;
    check_steering(s.delta2)?;
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.psi.sin_cos();
    let (t1, t2) = (s.delta1.tan(), s.delta2.tan());
    let (l1, l2, v) = (geom.l1, geom.l2, s.v);
    let w = t2 * cp + sp;

    let mut j = SMatrix::<f64, 8, 8>::zeros();
    j[(0, 2)] = ct;
    j[(0, 4)] = -v * st;
    j[(1, 2)] = st;
    j[(1, 4)] = v * ct;
    j[(2, 3)] = 1.0;
    j[(4, 2)] = t1 / l1;
    j[(4, 6)] = v / l1 * (1.0 + t1 * t1);
    j[(5, 2)] = t1 / l1 - w / l2;
    j[(5, 5)] = -v / l2 * (-t2 * sp + cp);
    j[(5, 6)] = v / l1 * (1.0 + t1 * t1);
    j[(5, 7)] = -v / l2 * (1.0 + t2 * t2) * cp;
    Ok(j)
}

pub fn ssttr_state_jacobian(s: &SsttrState, geom: &RobotGeometry) -> Result<SMatrix<f64, 6, 6>, Error> {
    check_steering(s.delta1)?;
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.psi.sin_cos();
    let t1 = s.delta1.tan();
    let (l1, l2, v) = (geom.l1, geom.l2, s.v);

    let mut j = SMatrix::<f64, 6, 6>::zeros();
    j[(0, 2)] = ct;
    j[(0, 3)] = -v * st;
    j[(1, 2)] = st;
    j[(1, 3)] = v * ct;
    j[(3, 2)] = t1 / l1;
    j[(3, 5)] = v / l1 * (1.0 + t1 * t1);
    j[(4, 2)] = t1 / l1 - sp / l2;
    j[(4, 4)] = -v / l2 * cp;
    j[(4, 5)] = v / l1 * (1.0 + t1 * t1);
    Ok(j)
}

/// `A = I + dF/dx Ts`, `B = dF/du Ts`, `C = (F - dF/dx x_r - dF/du u_r) Ts`.
pub fn linearize(
    x_r: &StateVector,
    u_r: &InputVector,
    geom: &RobotGeometry,
    ts: f64,
) -> Result<MsttrModel, Error> {
    check_ts(ts)?;
    let jx = msttr_state_jacobian(x_r, geom)?;
    let drift = msttr_f(x_r, geom)?;
    Ok(LinearizedModel::from_jacobian(
        jx,
        msttr_g(),
        drift,
        x_r.to_vector(),
        u_r.to_vector(),
        ts,
    ))
}

pub fn linearize_ssttr(
    x_r: &SsttrState,
    u_r: &SsttrInput,
    geom: &RobotGeometry,
    ts: f64,
) -> Result<SsttrModel, Error> {
    check_ts(ts)?;
    let jx = ssttr_state_jacobian(x_r, geom)?;
    let drift = ssttr_f(x_r, geom)?;
    Ok(LinearizedModel::from_jacobian(
        jx,
        ssttr_g(),
        drift,
        x_r.to_vector(),
        u_r.to_vector(),
        ts,
    ))
}

/// Central-difference Jacobians of `F(x, u) = f(x) + G u` (step `1e-6`).
pub fn numerical_jacobians(
    x_r: &StateVector,
    u_r: &InputVector,
    geom: &RobotGeometry,
) -> Result<(SMatrix<f64, 8, 8>, SMatrix<f64, 8, 3>), Error> {
    const STEP: f64 = 1e-6;
    let model = Msttr { geom: *geom };
    let x0 = x_r.to_vector();
    let u0 = u_r.to_vector();
    let eval = |x: &State8, u: &SVector<f64, 3>| model.flow(x, u);

    let mut jx = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..8 {
        let mut e = State8::zeros();
        e[i] = STEP;
        let d = (eval(&(x0 + e), &u0)? - eval(&(x0 - e), &u0)?) / (2.0 * STEP);
        jx.set_column(i, &d);
    }
    let mut ju = SMatrix::<f64, 8, 3>::zeros();
    for i in 0..3 {
        let mut e = SVector::<f64, 3>::zeros();
        e[i] = STEP;
        let d = (eval(&x0, &(u0 + e))? - eval(&x0, &(u0 - e))?) / (2.0 * STEP);
        ju.set_column(i, &d);
    }
    Ok((jx, ju))
}
