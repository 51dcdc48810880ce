//! Condensed linear time-varying MPC tracker.
//!
//! The prediction `x_{k+1} = A_k x_k + B_k u_k + C_k` is relinearized along
//! the reference window and condensed into a QP over the input sequence.
//! Input boxes are hard; state boxes are softened with nonnegative slacks
//! unless `hard_state_boxes` is set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linmodel::{linearize, linearize_ssttr};
use crate::qp::{QpProblem, QpSolver, QpStatus};
use crate::types::{wrap_angle, InputVector, Limits, RobotGeometry, SsttrInput, SsttrState, StateVector};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub ts: f64,
    /// Diagonal stage weight.
    pub q: Vec<f64>,
    /// Diagonal terminal weight.
    pub p: Vec<f64>,
    /// Diagonal input weight.
    pub r: Vec<f64>,
    pub limits: Limits,
    #[serde(default)]
    pub hard_state_boxes: bool,
    #[serde(default)]
    pub linearize_at_state: bool,
    #[serde(default = "default_slack_weight")]
    pub slack_weight: f64,
}

fn default_slack_weight() -> f64 {
    1e4
}

impl MpcConfig {
    pub fn msttr_default() -> Self {
        let q = vec![1.0, 1.0, 0.5, 0.0, 0.05, 0.1, 0.0, 0.0];
        Self {
            horizon: 5,
            ts: 0.2,
            p: q.clone(),
            q,
            r: vec![0.01, 0.05, 0.05],
            limits: Limits::default(),
            hard_state_boxes: false,
            linearize_at_state: false,
            slack_weight: default_slack_weight(),
        }
    }

    /// Weights over `(x1, y1, v, theta, psi, delta1)`; `delta1` unweighted.
    pub fn ssttr_default() -> Self {
        let q = vec![1.0, 1.0, 0.5, 0.5, 0.5, 0.0];
        Self {
            p: q.clone(),
            q,
            r: vec![0.01, 0.05],
            ..Self::msttr_default()
        }
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.horizon == 0 {
            return bad("MPC horizon must be at least 1");
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return bad("MPC sampling time must be positive");
        }
        if self.q.len() != nx || self.p.len() != nx || self.r.len() != nu {
            return Err(Error::DimensionMismatch(format!(
                "weights must have {nx} state and {nu} input entries"
            )));
        }
        if self.q.iter().chain(&self.p).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("state weights must be nonnegative");
        }
        if self.r.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("input weights must be strictly positive");
        }
        if !(self.slack_weight > 0.0) {
            return bad("slack weight must be positive");
        }
        self.limits.validate()
    }
}

/// Reference states `x^r_t .. x^r_{t+N}` and inputs `u^r_t .. u^r_{t+N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow<S, U> {
    pub states: Vec<S>,
    pub inputs: Vec<U>,
}

impl<S, U> ReferenceWindow<S, U> {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    fn check(&self, horizon: usize) -> Result<(), Error> {
        if self.inputs.len() != horizon || self.states.len() != horizon + 1 {
            return Err(Error::DimensionMismatch(format!(
                "reference window needs {} states and {horizon} inputs, got {} and {}",
                horizon + 1,
                self.states.len(),
                self.inputs.len()
            )));
        }
        Ok(())
    }
}

pub type MsttrWindow = ReferenceWindow<StateVector, InputVector>;
pub type SsttrWindow = ReferenceWindow<SsttrState, SsttrInput>;
/// Discrete model `(A, B, c)` with `x+ = A x + B u + c`.
pub type AffineModel = (DMatrix<f64>, DMatrix<f64>, DVector<f64>);

/// Model-specific pieces of the condensed problem.
trait Plant {
    type State: Copy;
    type Input: Copy;
    const NX: usize;
    const NU: usize;
    const THETA: usize;

    fn state_vec(s: &Self::State) -> DVector<f64>;
    fn input_vec(u: &Self::Input) -> DVector<f64>;
    fn linearize(
        x: &Self::State,
        u: &Self::Input,
        geom: &RobotGeometry,
        ts: f64,
    ) -> Result<AffineModel, Error>;
    fn state_boxes(lim: &Limits) -> Vec<(usize, f64)>;
    fn input_maxima(lim: &Limits) -> Vec<f64>;
}

struct MsttrPlant;
struct SsttrPlant;

impl Plant for MsttrPlant {
    type State = StateVector;
    type Input = InputVector;
    const NX: usize = 8;
    const NU: usize = 3;
    const THETA: usize = 4;

    fn state_vec(s: &StateVector) -> DVector<f64> {
        DVector::from_column_slice(s.to_vector().as_slice())
    }

    fn input_vec(u: &InputVector) -> DVector<f64> {
        DVector::from_column_slice(u.to_vector().as_slice())
    }

    fn linearize(
        x: &StateVector,
        u: &InputVector,
        geom: &RobotGeometry,
        ts: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>), Error> {
        let m = linearize(x, u, geom, ts)?;
        Ok((
            DMatrix::from_column_slice(8, 8, m.a.as_slice()),
            DMatrix::from_column_slice(8, 3, m.b.as_slice()),
            DVector::from_column_slice(m.c.as_slice()),
        ))
    }

    fn state_boxes(lim: &Limits) -> Vec<(usize, f64)> {
        lim.state_boxes().to_vec()
    }

    fn input_maxima(lim: &Limits) -> Vec<f64> {
        lim.input_maxima().to_vec()
    }
}

impl Plant for SsttrPlant {
    type State = SsttrState;
    type Input = SsttrInput;
    const NX: usize = 6;
    const NU: usize = 2;
    const THETA: usize = 3;

    fn state_vec(s: &SsttrState) -> DVector<f64> {
        DVector::from_column_slice(s.to_vector().as_slice())
    }

    fn input_vec(u: &SsttrInput) -> DVector<f64> {
        DVector::from_column_slice(u.to_vector().as_slice())
    }

    fn linearize(
        x: &SsttrState,
        u: &SsttrInput,
        geom: &RobotGeometry,
        ts: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>), Error> {
        let m = linearize_ssttr(x, u, geom, ts)?;
        Ok((
            DMatrix::from_column_slice(6, 6, m.a.as_slice()),
            DMatrix::from_column_slice(6, 2, m.b.as_slice()),
            DVector::from_column_slice(m.c.as_slice()),
        ))
    }

    fn state_boxes(lim: &Limits) -> Vec<(usize, f64)> {
        vec![(2, lim.v_max), (5, lim.delta1_max)]
    }

    fn input_maxima(lim: &Limits) -> Vec<f64> {
        vec![lim.a_max, lim.omega1_max]
    }
}

/// Condensed MPC problem with the bookkeeping needed to read it back.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcQp {
    pub problem: QpProblem,
    pub num_inputs: usize,
    pub num_slacks: usize,
    /// Cost terms independent of the decision variables.
    pub constant: f64,
    /// Predicted free response `Phi x0 + c` stacked over `k = 1..N`.
    pub free_response: DVector<f64>,
    /// Input-to-state map stacked over `k = 1..N`.
    pub gamma: DMatrix<f64>,
}

fn build_generic<P: Plant>(
    x_now: &P::State,
    window: &ReferenceWindow<P::State, P::Input>,
    cfg: &MpcConfig,
    geom: &RobotGeometry,
    soft: bool,
) -> Result<MpcQp, Error> {
    let (nx, nu, n) = (P::NX, P::NU, cfg.horizon);
    cfg.validate(nx, nu)?;
    window.check(n)?;

    let xr: Vec<DVector<f64>> = window.states.iter().map(P::state_vec).collect();
    let ur: Vec<DVector<f64>> = window.inputs.iter().map(P::input_vec).collect();
    let mut x0 = P::state_vec(x_now);
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("current state is not finite".into()));
    }
    x0[P::THETA] = xr[0][P::THETA] + wrap_angle(x0[P::THETA] - xr[0][P::THETA]);

    // Prediction maps: x_k = phi_k x0 + gamma_k U + c_k.
    let mut phi = DMatrix::<f64>::identity(nx, nx);
    let mut gam = DMatrix::<f64>::zeros(nx, n * nu);
    let mut c = DVector::<f64>::zeros(nx);
    let mut free = DVector::zeros(n * nx);
    let mut gamma = DMatrix::zeros(n * nx, n * nu);
    for k in 0..n {
        let (a, b, ck) = if cfg.linearize_at_state {
            P::linearize(x_now, &window.inputs[k], geom, cfg.ts)?
        } else {
            P::linearize(&window.states[k], &window.inputs[k], geom, cfg.ts)?
        };
        phi = &a * phi;
        gam = &a * gam;
        gam.view_mut((0, k * nu), (nx, nu)).copy_from(&b);
        c = &a * c + ck;
        free.rows_mut(k * nx, nx).copy_from(&(&phi * &x0 + &c));
        gamma.view_mut((k * nx, 0), (nx, n * nu)).copy_from(&gam);
    }

    // Tracking cost.
    let mut w = DVector::zeros(n * nx);
    let mut target = DVector::zeros(n * nx);
    for k in 0..n {
        let weights = if k + 1 == n { &cfg.p } else { &cfg.q };
        for i in 0..nx {
            w[k * nx + i] = weights[i];
        }
        let mut x_target = xr[k + 1].clone();
        // Keep the heading target on the branch of the prediction.
        let pred_theta = free[k * nx + P::THETA];
        x_target[P::THETA] = pred_theta - wrap_angle(pred_theta - x_target[P::THETA]);
        target.rows_mut(k * nx, nx).copy_from(&x_target);
    }
    let mut r = DVector::zeros(n * nu);
    let mut u_target = DVector::zeros(n * nu);
    for k in 0..n {
        for i in 0..nu {
            r[k * nu + i] = cfg.r[i];
            u_target[k * nu + i] = ur[k][i];
        }
    }
    let d = &free - &target;
    let wg = DMatrix::from_diagonal(&w) * &gamma;
    let mut h_uu = gamma.tr_mul(&wg) * 2.0;
    for i in 0..n * nu {
        h_uu[(i, i)] += 2.0 * r[i];
    }
    let q_u = wg.tr_mul(&d) * 2.0 - r.component_mul(&u_target) * 2.0;
    let constant = d.dot(&d.component_mul(&w)) + u_target.dot(&u_target.component_mul(&r));

    // Constraints.
    let boxes = P::state_boxes(&cfg.limits);
    let umax = P::input_maxima(&cfg.limits);
    let ns = if soft { n * boxes.len() } else { 0 };
    let nv = n * nu + ns;
    let rows = 2 * n * nu + 2 * n * boxes.len() + ns;
    let mut a = DMatrix::zeros(rows, nv);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for k in 0..n {
        for i in 0..nu {
            for sign in [1.0, -1.0] {
                a[(row, k * nu + i)] = sign;
                b[row] = umax[i];
                row += 1;
            }
        }
    }
    for k in 0..n {
        for (j, &(idx, max)) in boxes.iter().enumerate() {
            let r_idx = k * nx + idx;
            for sign in [1.0, -1.0] {
                for col in 0..n * nu {
                    a[(row, col)] = sign * gamma[(r_idx, col)];
                }
                if soft {
                    a[(row, n * nu + k * boxes.len() + j)] = -1.0;
                }
                b[row] = max - sign * free[r_idx];
                row += 1;
            }
        }
    }
    for s in 0..ns {
        a[(row, n * nu + s)] = -1.0;
        row += 1;
    }

    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (n * nu, n * nu)).copy_from(&h_uu);
    let mut q = DVector::zeros(nv);
    q.rows_mut(0, n * nu).copy_from(&q_u);
    for s in 0..ns {
        h[(n * nu + s, n * nu + s)] = 2.0 * cfg.slack_weight;
        q[n * nu + s] = cfg.slack_weight;
    }
    // Remove rounding asymmetry from the products above.
    let h = (&h + h.transpose()) * 0.5;

    Ok(MpcQp {
        problem: QpProblem::new(h, q, a, b)?,
        num_inputs: n * nu,
        num_slacks: ns,
        constant,
        free_response: free,
        gamma,
    })
}

/// Condensed QP for the multi-steering robot.
pub fn build_qp(x_now: &StateVector, window: &MsttrWindow, cfg: &MpcConfig, geom: &RobotGeometry) -> Result<MpcQp, Error> {
    build_generic::<MsttrPlant>(x_now, window, cfg, geom, !cfg.hard_state_boxes)
}

pub fn build_ssttr_qp(x_now: &SsttrState, window: &SsttrWindow, cfg: &MpcConfig, geom: &RobotGeometry) -> Result<MpcQp, Error> {
    build_generic::<SsttrPlant>(x_now, window, cfg, geom, !cfg.hard_state_boxes)
}

/// Result of one MPC step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcOutput<U> {
    pub u: U,
    /// Full optimal input sequence.
    pub sequence: DVector<f64>,
    pub cost: f64,
    pub slack_used: f64,
    /// Hard state boxes were infeasible and the step was re-solved with slacks.
    pub relaxed: bool,
}

/// Receding-horizon controller owning its solver and warm-start cache.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    pub geom: RobotGeometry,
    pub solver: QpSolver,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, geom: RobotGeometry) -> Self {
        Self {
            cfg,
            geom,
            solver: QpSolver::default(),
        }
    }

    fn solve_generic<P: Plant>(
        &mut self,
        x_now: &P::State,
        window: &ReferenceWindow<P::State, P::Input>,
    ) -> Result<MpcOutput<DVector<f64>>, Error> {
        let mut relaxed = false;
        let mut qp = build_generic::<P>(x_now, window, &self.cfg, &self.geom, !self.cfg.hard_state_boxes)?;
        let mut sol = self.solver.solve(&qp.problem)?;
        if sol.status == QpStatus::Infeasible && qp.num_slacks == 0 {
            relaxed = true;
            qp = build_generic::<P>(x_now, window, &self.cfg, &self.geom, true)?;
            sol = self.solver.solve(&qp.problem)?;
        }
        if sol.status != QpStatus::Optimal {
            return Err(Error::SolverFailure(format!("MPC QP ended with {:?}", sol.status)));
        }
        let umax = P::input_maxima(&self.cfg.limits);
        let nu = P::NU;
        let u = DVector::from_iterator(nu, (0..nu).map(|i| sol.z[i].clamp(-umax[i], umax[i])));
        let slack_used = sol.z.rows(qp.num_inputs, qp.num_slacks).iter().map(|s| s.max(0.0)).sum();
        Ok(MpcOutput {
            u,
            sequence: sol.z.rows(0, qp.num_inputs).into_owned(),
            cost: sol.objective + qp.constant,
            slack_used,
            relaxed,
        })
    }

    pub fn step(&mut self, x_now: &StateVector, window: &MsttrWindow) -> Result<MpcOutput<InputVector>, Error> {
        let out = self.solve_generic::<MsttrPlant>(x_now, window)?;
        Ok(MpcOutput {
            u: InputVector::new(out.u[0], out.u[1], out.u[2]),
            sequence: out.sequence,
            cost: out.cost,
            slack_used: out.slack_used,
            relaxed: out.relaxed,
        })
    }

    pub fn ssttr_step(&mut self, x_now: &SsttrState, window: &SsttrWindow) -> Result<MpcOutput<SsttrInput>, Error> {
        let out = self.solve_generic::<SsttrPlant>(x_now, window)?;
        Ok(MpcOutput {
            u: SsttrInput {
                a: out.u[0],
                omega1: out.u[1],
            },
            sequence: out.sequence,
            cost: out.cost,
            slack_used: out.slack_used,
            relaxed: out.relaxed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::msttr_f;
    use crate::types::State8;
    use nalgebra::SymmetricEigen;

    fn geom() -> RobotGeometry {
        RobotGeometry::default()
    }

    fn stationary_window(s: StateVector, n: usize) -> MsttrWindow {
        ReferenceWindow {
            states: vec![s; n + 1],
            inputs: vec![InputVector::default(); n],
        }
    }

    /// Euler-consistent reference so the LTV prediction reproduces it exactly.
    fn consistent_window(x0: StateVector, inputs: &[InputVector], ts: f64) -> MsttrWindow {
        let mut states = vec![x0];
        for u in inputs {
            let x = states.last().unwrap();
            let f = msttr_f(x, &geom()).unwrap() + crate::dynamics::msttr_g() * u.to_vector();
            states.push(StateVector::from_vector(&(x.to_vector() + f * ts)));
        }
        ReferenceWindow {
            states,
            inputs: inputs.to_vec(),
        }
    }

    #[test]
    fn stationary_reference_gives_zero_input() {
        let s = StateVector {
            x1: 3.0,
            y1: -1.0,
            theta: 0.7,
            ..Default::default()
        };
        let mut ctl = MpcController::new(MpcConfig::msttr_default(), geom());
        let out = ctl.step(&s, &stationary_window(s, 5)).unwrap();
        assert!(out.u.to_vector().amax() < 1e-7);
        assert!(out.cost.abs() < 1e-9);
    }

    #[test]
    fn consistent_reference_is_reproduced() {
        let x0 = StateVector {
            v: 2.0,
            a: 0.1,
            theta: 0.3,
            psi: 0.05,
            delta1: 0.1,
            delta2: -0.02,
            ..Default::default()
        };
        let inputs = [
            InputVector::new(0.1, 0.05, -0.02),
            InputVector::new(-0.2, 0.1, 0.0),
            InputVector::new(0.0, -0.05, 0.03),
            InputVector::new(0.3, 0.0, 0.01),
            InputVector::new(0.1, 0.02, -0.01),
        ];
        let cfg = MpcConfig::msttr_default();
        let w = consistent_window(x0, &inputs, cfg.ts);
        let qp = build_qp(&x0, &w, &cfg, &geom()).unwrap();
        for k in 0..5 {
            let mut u = DVector::zeros(15);
            for (i, ui) in inputs.iter().enumerate() {
                u.rows_mut(3 * i, 3).copy_from(&DVector::from_column_slice(ui.to_vector().as_slice()));
            }
            let pred = &qp.free_response + &qp.gamma * &u;
            let err = (pred.rows(8 * k, 8) - DVector::from_column_slice(w.states[k + 1].to_vector().as_slice())).amax();
            assert!(err < 1e-8, "step {k}: {err}");
        }
        let mut ctl = MpcController::new(cfg, geom());
        let out = ctl.step(&x0, &w).unwrap();
        assert!((out.u.to_vector() - inputs[0].to_vector()).amax() < 1e-6);
        assert!(out.cost.abs() < 1e-8);
    }

    #[test]
    fn single_step_matches_normal_equations() {
        let cfg = MpcConfig {
            horizon: 1,
            q: vec![1.0; 8],
            p: vec![1.0; 8],
            r: vec![1.0; 3],
            ..MpcConfig::msttr_default()
        };
        let x0 = StateVector {
            v: 1.0,
            theta: 0.2,
            delta1: 0.05,
            ..Default::default()
        };
        let target = StateVector {
            x1: 0.25,
            y1: 0.05,
            v: 1.02,
            a: 0.05,
            theta: 0.21,
            delta1: 0.07,
            delta2: 0.02,
            ..Default::default()
        };
        let ur = InputVector::new(0.1, 0.0, 0.0);
        let w = ReferenceWindow {
            states: vec![x0, target],
            inputs: vec![ur],
        };
        let mut ctl = MpcController::new(cfg.clone(), geom());
        let out = ctl.step(&x0, &w).unwrap();

        let m = linearize(&x0, &ur, &geom(), cfg.ts).unwrap();
        let rhs = m.b.transpose() * (target.to_vector() - m.a * x0.to_vector() - m.c) + ur.to_vector();
        let lhs = m.b.transpose() * m.b + nalgebra::Matrix3::identity();
        let expected = lhs.lu().solve(&rhs).unwrap();
        assert!((out.u.to_vector() - expected).amax() < 1e-7);
    }

    /// Sparse formulation over `(x_1..x_N, u_0..u_{N-1})` with the dynamics
    /// as equality constraints, solved through its KKT system.
    #[test]
    fn condensed_matches_sparse_kkt() {
        let cfg = MpcConfig::msttr_default();
        let n = cfg.horizon;
        let x0 = StateVector {
            x1: 0.1,
            y1: -0.2,
            v: 2.0,
            theta: 0.1,
            psi: 0.02,
            delta1: 0.03,
            ..Default::default()
        };
        let mut states = Vec::new();
        for k in 0..=n {
            let t = k as f64 * cfg.ts;
            states.push(StateVector {
                x1: 2.0 * t,
                y1: 0.05 * t,
                v: 2.0,
                theta: 0.05,
                ..Default::default()
            });
        }
        let w = ReferenceWindow {
            states,
            inputs: vec![InputVector::default(); n],
        };
        let (nx, nu) = (8, 3);
        let nz = n * (nx + nu);
        let mut hm = DMatrix::zeros(nz, nz);
        let mut qv = DVector::zeros(nz);
        let mut aeq = DMatrix::zeros(n * nx, nz);
        let mut beq = DVector::zeros(n * nx);
        for k in 0..n {
            let weights = if k + 1 == n { &cfg.p } else { &cfg.q };
            let xt: State8 = w.states[k + 1].to_vector();
            for i in 0..nx {
                hm[(k * nx + i, k * nx + i)] = 2.0 * weights[i];
                qv[k * nx + i] = -2.0 * weights[i] * xt[i];
            }
            for i in 0..nu {
                let j = n * nx + k * nu + i;
                hm[(j, j)] = 2.0 * cfg.r[i];
            }
            let m = linearize(&w.states[k], &w.inputs[k], &geom(), cfg.ts).unwrap();
            // x_{k+1} - A x_k - B u_k = C (+ A x0 for k = 0)
            for i in 0..nx {
                aeq[(k * nx + i, k * nx + i)] = 1.0;
                for j in 0..nx {
                    if k > 0 {
                        aeq[(k * nx + i, (k - 1) * nx + j)] = -m.a[(i, j)];
                    }
                }
                for j in 0..nu {
                    aeq[(k * nx + i, n * nx + k * nu + j)] = -m.b[(i, j)];
                }
            }
            let mut rhs = m.c;
            if k == 0 {
                rhs += m.a * x0.to_vector();
            }
            beq.rows_mut(k * nx, nx).copy_from(&DVector::from_column_slice(rhs.as_slice()));
        }
        let dim = nz + n * nx;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (nz, nz)).copy_from(&hm);
        kkt.view_mut((nz, 0), (n * nx, nz)).copy_from(&aeq);
        kkt.view_mut((0, nz), (nz, n * nx)).copy_from(&aeq.transpose());
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, nz).copy_from(&(-&qv));
        rhs.rows_mut(nz, n * nx).copy_from(&beq);
        let sol = kkt.full_piv_lu().solve(&rhs).unwrap();
        let u_sparse = sol.rows(n * nx, n * nu).into_owned();

        let mut ctl = MpcController::new(cfg, geom());
        let out = ctl.step(&x0, &w).unwrap();
        assert!(u_sparse.amax() < 1.4, "oracle must stay inside the input boxes");
        assert!((out.sequence - u_sparse).amax() < 1e-6);
    }

    #[test]
    fn hessian_is_positive_definite() {
        let s = StateVector {
            v: 3.0,
            ..Default::default()
        };
        let qp = build_qp(&s, &stationary_window(s, 5), &MpcConfig::msttr_default(), &geom()).unwrap();
        let eig = SymmetricEigen::new(qp.problem.h.clone()).eigenvalues;
        assert!(eig.min() > 0.0);
        let ss = SsttrState::from_full(&s);
        let w = ReferenceWindow {
            states: vec![ss; 6],
            inputs: vec![SsttrInput::default(); 5],
        };
        let qp = build_ssttr_qp(&ss, &w, &MpcConfig::ssttr_default(), &geom()).unwrap();
        assert!(SymmetricEigen::new(qp.problem.h.clone()).eigenvalues.min() > 0.0);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let cfg = MpcConfig::msttr_default();
        let mut warm = MpcController::new(cfg.clone(), geom());
        let mut cold = MpcController::new(cfg, geom());
        cold.solver.settings.warm_start = false;
        for step in 0..6 {
            let x = StateVector {
                x1: 0.3 * step as f64,
                y1: 1.0,
                v: 1.5,
                ..Default::default()
            };
            let mut states = Vec::new();
            for k in 0..=5 {
                states.push(StateVector {
                    x1: 0.3 * (step + k) as f64 + 0.5,
                    v: 2.0,
                    ..Default::default()
                });
            }
            let w = ReferenceWindow {
                states,
                inputs: vec![InputVector::default(); 5],
            };
            let a = warm.step(&x, &w).unwrap();
            let b = cold.step(&x, &w).unwrap();
            assert!((a.u.to_vector() - b.u.to_vector()).amax() < 1e-6);
        }
    }

    #[test]
    fn large_offset_saturates_inputs_within_boxes() {
        let s = StateVector::default();
        let target = StateVector {
            v: 15.0,
            delta1: 0.7,
            delta2: -0.7,
            ..Default::default()
        };
        let w = ReferenceWindow {
            states: vec![target; 6],
            inputs: vec![InputVector::default(); 5],
        };
        let mut ctl = MpcController::new(MpcConfig::msttr_default(), geom());
        let out = ctl.step(&s, &w).unwrap();
        let lim = Limits::default();
        assert!(out.u.jerk.abs() <= lim.jerk_max);
        assert!(out.u.omega1.abs() <= lim.omega1_max);
        assert!(out.u.omega2.abs() <= lim.omega2_max);
        assert!(out.u.omega1 > 1.0);
    }

    #[test]
    fn hard_boxes_relax_when_infeasible() {
        let cfg = MpcConfig {
            hard_state_boxes: true,
            ..MpcConfig::msttr_default()
        };
        // Speed above its box cannot be brought back within one step.
        let s = StateVector {
            v: 21.0,
            a: 1.0,
            ..Default::default()
        };
        let mut ctl = MpcController::new(cfg, geom());
        let out = ctl.step(&s, &stationary_window(StateVector::default(), 5)).unwrap();
        assert!(out.relaxed);
        assert!(out.slack_used > 0.0);
    }

    #[test]
    fn heading_error_is_wrapped() {
        let r = StateVector {
            theta: std::f64::consts::PI - 0.01,
            ..Default::default()
        };
        let s = StateVector {
            theta: -std::f64::consts::PI + 0.01,
            ..Default::default()
        };
        let qp = build_qp(&s, &stationary_window(r, 5), &MpcConfig::msttr_default(), &geom()).unwrap();
        // Heading error of 0.02 rad, not ~2 pi.
        assert!(qp.constant < 0.05 * 0.02f64.powi(2) * 6.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = MpcConfig::msttr_default();
        cfg.r[0] = 0.0;
        assert!(cfg.validate(8, 3).is_err());
        let cfg = MpcConfig {
            horizon: 0,
            ..MpcConfig::msttr_default()
        };
        assert!(cfg.validate(8, 3).is_err());
        let s = StateVector::default();
        let w = stationary_window(s, 3);
        assert!(build_qp(&s, &w, &MpcConfig::msttr_default(), &geom()).is_err());
    }
}
