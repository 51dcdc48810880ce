//! Position barriers for the tractor and trailer, their closed-form time
//! derivatives along the kinematic flow, the linear-gain barrier cascade,
//! constraint assembly, decoupling diagnostics, the QP safety filters and
//! the regularity probe.
//!
//! Every barrier is `h = |p_body - p_obstacle|^2 - d^2`. The tractor barrier
//! has relative degree three (jerk and tractor steering rate appear in its
//! third derivative); the trailer barrier has relative degree two (trailer
//! steering rate appears in its second derivative).

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_steering, trailer_pose};
use crate::qp::{solve_lp, QpProblem, QpSolver, QpStatus};
use crate::types::{InputVector, Limits, Obstacle, RobotGeometry, SsttrInput, SsttrState, StateVector};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body {
    Tractor,
    Trailer,
}

impl Body {
    pub fn relative_degree(self) -> usize {
        match self {
            Body::Tractor => 3,
            Body::Trailer => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Body::Tractor => "tractor",
            Body::Trailer => "trailer",
        }
    }
}

/// Barrier of one body against one obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBarrier {
    pub body: Body,
    pub obstacle_index: usize,
    pub d: f64,
}

impl PositionBarrier {
    pub fn new(body: Body, obstacle_index: usize, d: f64) -> Result<Self, Error> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("safety distance must be positive, got {d}")));
        }
        Ok(Self { body, obstacle_index, d })
    }

    pub fn relative_degree(&self) -> usize {
        self.body.relative_degree()
    }
}

/// Safety distances of the tractor and trailer reference points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyDistances {
    pub d1: f64,
    pub d2: f64,
}

impl Default for SafetyDistances {
    fn default() -> Self {
        Self { d1: 4.6, d2: 3.0 }
    }
}

impl SafetyDistances {
    pub fn for_body(&self, body: Body) -> f64 {
        match body {
            Body::Tractor => self.d1,
            Body::Trailer => self.d2,
        }
    }
}

/// Per-level linear class-K gains: level `j` of a cascade uses
/// `alpha_j(m) = k[j] * m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainVectors {
    pub k1: [f64; 3],
    pub k2: [f64; 2],
}

impl Default for GainVectors {
    fn default() -> Self {
        Self {
            k1: [1.0, 2.0, 2.0],
            k2: [4.0, 4.0],
        }
    }
}

impl GainVectors {
    pub fn new(k1: [f64; 3], k2: [f64; 2]) -> Result<Self, Error> {
        let g = Self { k1, k2 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.k1.iter().chain(self.k2.iter()).all(|k| *k > 0.0 && k.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("class-K gains must be strictly positive".into()))
        }
    }

    pub fn for_body(&self, body: Body) -> &[f64] {
        match body {
            Body::Tractor => &self.k1,
            Body::Trailer => &self.k2,
        }
    }
}

/// Coefficients of the cascade functions over the barrier derivatives.
///
/// Entry `j` holds `c` with `m^j = sum_i c[i] h^(i)` (`c[j] = 1`), built by
/// `m^j = d/dt m^(j-1) + k[j-1] m^(j-1)`. The last entry (index `r`) is the
/// constraint polynomial.
pub fn cascade_coefficients(gains: &[f64]) -> Vec<Vec<f64>> {
    let mut levels = vec![vec![1.0]];
    for (j, &k) in gains.iter().enumerate() {
        let prev = &levels[j];
        let mut next = vec![0.0; prev.len() + 1];
        for (i, c) in prev.iter().enumerate() {
            next[i + 1] += c;
            next[i] += k * c;
        }
        levels.push(next);
    }
    levels
}

/// Barrier value for the given body.
pub fn h(s: &StateVector, body: Body, d: f64, obs: &Obstacle, geom: &RobotGeometry) -> f64 {
    let p = body_point(s, body, geom);
    (p.x - obs.x).powi(2) + (p.y - obs.y).powi(2) - d * d
}

pub fn body_point(s: &StateVector, body: Body, geom: &RobotGeometry) -> Vector2<f64> {
    match body {
        Body::Tractor => Vector2::new(s.x1, s.y1),
        Body::Trailer => {
            let (x2, y2, _) = trailer_pose(s, geom);
            Vector2::new(x2, y2)
        }
    }
}

/// Tractor barrier and its derivatives; `h''' = drift + grad . u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractorDerivatives {
    pub h: f64,
    pub h_dot: f64,
    pub h_ddot: f64,
    pub drift: f64,
    pub grad_u: Vector3<f64>,
}

/// Trailer barrier and its derivatives; `h'' = drift + grad . u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrailerDerivatives {
    pub h: f64,
    pub h_dot: f64,
    pub drift: f64,
    pub grad_u: Vector3<f64>,
}

/// Projections of the tractor-to-obstacle offset `(dx, dy)` onto the
/// tractor heading (`s`) and its normal (`d`).
fn tractor_projections(dx: f64, dy: f64, theta: f64) -> (f64, f64) {
    let (st, ct) = theta.sin_cos();
    (dx * ct + dy * st, dx * st - dy * ct)
}

pub fn tractor_derivatives(
    s: &StateVector,
    obs: &Obstacle,
    d1: f64,
    geom: &RobotGeometry,
) -> Result<TractorDerivatives, Error> {
    check_steering(s.delta1)?;
    let (dx, dy) = (s.x1 - obs.x, s.y1 - obs.y);
    let (proj, normal) = tractor_projections(dx, dy, s.theta);
    let (v, a, l1) = (s.v, s.a, geom.l1);
    let t1 = s.delta1.tan();
    let sec2 = 1.0 + t1 * t1;

    let h_dot = 2.0 * v * proj;
    let h_ddot = 2.0 * v * v + 2.0 * a * proj - 2.0 * v * v / l1 * t1 * normal;
    let drift = 6.0 * v * a
        - 6.0 * v * a / l1 * t1 * normal
        - 2.0 * v.powi(3) / (l1 * l1) * t1 * t1 * proj;
    let grad_u = Vector3::new(2.0 * proj, -2.0 * v * v / l1 * sec2 * normal, 0.0);
    Ok(TractorDerivatives {
        h: dx * dx + dy * dy - d1 * d1,
        h_dot,
        h_ddot,
        drift,
        grad_u,
    })
}

pub fn trailer_derivatives(
    s: &StateVector,
    obs: &Obstacle,
    d2: f64,
    geom: &RobotGeometry,
) -> Result<TrailerDerivatives, Error> {
    check_steering(s.delta1)?;
    check_steering(s.delta2)?;
    let (dx, dy) = (s.x1 - obs.x, s.y1 - obs.y);
    let (proj, normal) = tractor_projections(dx, dy, s.theta);
    let (v, a, l1, l2) = (s.v, s.a, geom.l1, geom.l2);
    let (sp, cp) = s.psi.sin_cos();
    let (sh, ch) = (s.theta - s.psi).sin_cos();
    let (t1, t2) = (s.delta1.tan(), s.delta2.tan());
    // Trailer heading rate (theta - psi)' = v w / l2.
    let w = t2 * cp + sp;
    let psi_rate = v / l1 * t1 - v / l2 * w;
    let lateral = dx * sh - dy * ch;
    let along = dx * ch + dy * sh;

    let h_dot = 2.0 * v * proj - 2.0 * l2 * v * cp + 2.0 * v * w * lateral;
    let drift = 2.0 * v * v
        - 2.0 * v * v * w * sp
        - 2.0 * l2 * a * cp
        + 2.0 * l2 * v * sp * psi_rate
        + 2.0 * a * proj
        - 2.0 * v * v / l1 * t1 * normal
        + 2.0 * a * w * lateral
        - 2.0 * v * (t2 * sp - cp) * psi_rate * lateral
        + 2.0 * v * v / l2 * w * w * along;
    let grad_u = Vector3::new(0.0, 0.0, 2.0 * v * (1.0 + t2 * t2) * cp * lateral);

    let (ex, ey) = (dx - l2 * ch, dy - l2 * sh);
    Ok(TrailerDerivatives {
        h: ex * ex + ey * ey - d2 * d2,
        h_dot,
        drift,
        grad_u,
    })
}

/// Derivative data of one barrier in a uniform layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierDerivatives {
    pub barrier: PositionBarrier,
    /// `[h, h', ..., h^(r-1)]`
    pub lower: Vec<f64>,
    pub drift: f64,
    pub grad_u: Vector3<f64>,
}

pub fn barrier_derivatives(
    s: &StateVector,
    barrier: &PositionBarrier,
    obs: &Obstacle,
    geom: &RobotGeometry,
) -> Result<BarrierDerivatives, Error> {
    Ok(match barrier.body {
        Body::Tractor => {
            let t = tractor_derivatives(s, obs, barrier.d, geom)?;
            BarrierDerivatives {
                barrier: *barrier,
                lower: vec![t.h, t.h_dot, t.h_ddot],
                drift: t.drift,
                grad_u: t.grad_u,
            }
        }
        Body::Trailer => {
            let t = trailer_derivatives(s, obs, barrier.d, geom)?;
            BarrierDerivatives {
                barrier: *barrier,
                lower: vec![t.h, t.h_dot],
                drift: t.drift,
                grad_u: t.grad_u,
            }
        }
    })
}

/// Input-independent cascade values `m^0 .. m^(r-1)` of one barrier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierCascade {
    pub body: Body,
    pub obstacle_index: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeValues {
    pub barriers: Vec<BarrierCascade>,
}

impl CascadeValues {
    pub fn min(&self) -> f64 {
        self.barriers
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// All barriers of a scenario: tractor rows for every obstacle, then trailer
/// rows for every obstacle.
pub fn barriers_for(num_obstacles: usize, dists: &SafetyDistances) -> Result<Vec<PositionBarrier>, Error> {
    let mut out = Vec::with_capacity(2 * num_obstacles);
    for body in [Body::Tractor, Body::Trailer] {
        for k in 0..num_obstacles {
            out.push(PositionBarrier::new(body, k, dists.for_body(body))?);
        }
    }
    Ok(out)
}

fn cascade_from(deriv: &BarrierDerivatives, gains: &[f64]) -> BarrierCascade {
    let coeffs = cascade_coefficients(gains);
    let r = deriv.lower.len();
    let values = (0..r)
        .map(|j| coeffs[j].iter().zip(&deriv.lower).map(|(c, hd)| c * hd).sum())
        .collect();
    BarrierCascade {
        body: deriv.barrier.body,
        obstacle_index: deriv.barrier.obstacle_index,
        values,
    }
}

pub fn cascade(
    s: &StateVector,
    obstacles: &[Obstacle],
    gains: &GainVectors,
    dists: &SafetyDistances,
    geom: &RobotGeometry,
) -> Result<CascadeValues, Error> {
    let mut barriers = Vec::new();
    for b in barriers_for(obstacles.len(), dists)? {
        let d = barrier_derivatives(s, &b, &obstacles[b.obstacle_index], geom)?;
        barriers.push(cascade_from(&d, gains.for_body(b.body)));
    }
    Ok(CascadeValues { barriers })
}

/// Row provenance of a safety constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowInfo {
    pub body: Body,
    pub obstacle_index: usize,
}

/// `A u <= b`, one row per (body, obstacle).
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rows: Vec<RowInfo>,
}

impl SafetyConstraints {
    pub fn empty(num_inputs: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, num_inputs),
            b: DVector::zeros(0),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `b - A u`; nonnegative entries are satisfied rows.
    pub fn margins(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * u
    }

    pub fn satisfied_by(&self, u: &DVector<f64>) -> bool {
        self.margins(u).iter().all(|m| *m >= 0.0)
    }
}

/// Stacks `-grad_u . u <= drift + sum_i c_i h^(i)` for every barrier.
pub fn assemble_constraints(
    s: &StateVector,
    obstacles: &[Obstacle],
    gains: &GainVectors,
    dists: &SafetyDistances,
    geom: &RobotGeometry,
) -> Result<SafetyConstraints, Error> {
    let barriers = barriers_for(obstacles.len(), dists)?;
    let mut a = DMatrix::zeros(barriers.len(), 3);
    let mut b = DVector::zeros(barriers.len());
    let mut rows = Vec::with_capacity(barriers.len());
    for (i, barrier) in barriers.iter().enumerate() {
        let d = barrier_derivatives(s, barrier, &obstacles[barrier.obstacle_index], geom)?;
        let top = cascade_coefficients(gains.for_body(barrier.body)).pop().unwrap_or_default();
        let feedback: f64 = top.iter().zip(&d.lower).map(|(c, hd)| c * hd).sum();
        for j in 0..3 {
            a[(i, j)] = -d.grad_u[j];
        }
        b[i] = d.drift + feedback;
        rows.push(RowInfo {
            body: barrier.body,
            obstacle_index: barrier.obstacle_index,
        });
    }
    Ok(SafetyConstraints { a, b, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingReport {
    /// Input coefficients of the top barrier derivatives, one row per barrier.
    pub matrix: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub row_rank: usize,
    pub min_singular_value: f64,
    pub full_row_rank: bool,
}

pub const RANK_THRESHOLD: f64 = 1e-9;

/// Numerical rank of the decoupling matrix (rows `grad_u` = `-A`).
pub fn decoupling_report(constraints: &SafetyConstraints) -> DecouplingReport {
    let e = -&constraints.a;
    let rows = e.nrows();
    let matrix = (0..rows).map(|i| e.row(i).iter().copied().collect()).collect();
    if rows == 0 {
        return DecouplingReport {
            matrix,
            singular_values: vec![],
            row_rank: 0,
            min_singular_value: 0.0,
            full_row_rank: true,
        };
    }
    let mut sv: Vec<f64> = e.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let row_rank = sv.iter().filter(|s| **s > RANK_THRESHOLD).count();
    // Rows beyond the column count contribute implicit zero singular values.
    let min_singular_value = if rows > e.ncols() { 0.0 } else { *sv.last().unwrap_or(&0.0) };
    DecouplingReport {
        matrix,
        row_rank,
        min_singular_value,
        full_row_rank: row_rank == rows,
        singular_values: sv,
    }
}

/// Safety-filter options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    /// Resolve infeasible problems with penalized per-row slacks.
    pub slack: bool,
    pub slack_penalty: f64,
    /// Add the input boxes to the filter QP.
    pub input_boxes: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            slack: false,
            slack_penalty: 1e6,
            input_boxes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<U> {
    pub u_safe: U,
    pub active: bool,
    pub slack_used: f64,
}

/// Minimum-norm correction `min |u - u_nom|^2 s.t. A u <= b` (optionally with
/// `|u_i| <= box_i`).
pub fn project(
    u_nom: &DVector<f64>,
    constraints: &SafetyConstraints,
    boxes: Option<&[f64]>,
    settings: &FilterSettings,
    solver: &mut QpSolver,
) -> Result<FilterOutput<DVector<f64>>, Error> {
    let n = u_nom.len();
    let in_boxes = |u: &DVector<f64>| boxes.is_none_or(|bx| u.iter().zip(bx).all(|(v, m)| v.abs() <= *m));
    if constraints.satisfied_by(u_nom) && in_boxes(u_nom) {
        return Ok(FilterOutput {
            u_safe: u_nom.clone(),
            active: false,
            slack_used: 0.0,
        });
    }

    let m = constraints.len();
    let nb = boxes.map_or(0, |_| 2 * n);
    let mut a = DMatrix::zeros(m + nb, n);
    let mut b = DVector::zeros(m + nb);
    a.rows_mut(0, m).copy_from(&constraints.a);
    b.rows_mut(0, m).copy_from(&constraints.b);
    if let Some(bx) = boxes {
        for i in 0..n {
            a[(m + 2 * i, i)] = 1.0;
            a[(m + 2 * i + 1, i)] = -1.0;
            b[m + 2 * i] = bx[i];
            b[m + 2 * i + 1] = bx[i];
        }
    }
    let problem = QpProblem::new(DMatrix::identity(n, n) * 2.0, -u_nom * 2.0, a.clone(), b.clone())?;
    let sol = solver.solve(&problem)?;
    let clamp = |mut u: DVector<f64>| {
        if let Some(bx) = boxes {
            for i in 0..n {
                u[i] = u[i].clamp(-bx[i], bx[i]);
            }
        }
        u
    };
    match sol.status {
        QpStatus::Optimal => Ok(FilterOutput {
            u_safe: clamp(sol.z),
            active: true,
            slack_used: 0.0,
        }),
        QpStatus::Infeasible if settings.slack => {
            let total = n + m;
            let mut hs = DMatrix::zeros(total, total);
            let mut qs = DVector::zeros(total);
            for i in 0..n {
                hs[(i, i)] = 2.0;
                qs[i] = -2.0 * u_nom[i];
            }
            for j in 0..m {
                hs[(n + j, n + j)] = 2.0 * settings.slack_penalty;
                qs[n + j] = settings.slack_penalty;
            }
            let mut a_s = DMatrix::zeros(m + nb + m, total);
            a_s.view_mut((0, 0), (m + nb, n)).copy_from(&a);
            for j in 0..m {
                a_s[(j, n + j)] = -1.0;
                a_s[(m + nb + j, n + j)] = -1.0;
            }
            let mut b_s = DVector::zeros(m + nb + m);
            b_s.rows_mut(0, m + nb).copy_from(&b);
            let relaxed = QpProblem::new(hs, qs, a_s, b_s)?;
            let sol = solver.solve(&relaxed)?;
            if sol.status != QpStatus::Optimal {
                return Err(Error::SolverFailure(format!("slack filter QP ended with {:?}", sol.status)));
            }
            let slack_used = sol.z.rows(n, m).iter().map(|s| s.max(0.0)).sum();
            Ok(FilterOutput {
                u_safe: clamp(sol.z.rows(0, n).into_owned()),
                active: true,
                slack_used,
            })
        }
        QpStatus::Infeasible => Err(Error::FilterInfeasible(format!(
            "{m} barrier rows admit no common input"
        ))),
        other => Err(Error::SolverFailure(format!("filter QP ended with {other:?}"))),
    }
}

/// Multi-barrier safety filter for the multi-steering robot.
pub fn filter(
    u_nom: &InputVector,
    constraints: &SafetyConstraints,
    limits: &Limits,
    settings: &FilterSettings,
    solver: &mut QpSolver,
) -> Result<FilterOutput<InputVector>, Error> {
    let boxes = limits.input_maxima();
    let out = project(
        &DVector::from_column_slice(u_nom.to_vector().as_slice()),
        constraints,
        settings.input_boxes.then_some(&boxes[..]),
        settings,
        solver,
    )?;
    Ok(FilterOutput {
        u_safe: InputVector::new(out.u_safe[0], out.u_safe[1], out.u_safe[2]),
        active: out.active,
        slack_used: out.slack_used,
    })
}

/// Expanded exponential-barrier gains: `h'' + k[1] h' + k[0] h >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcbfGains {
    pub k: [f64; 2],
}

impl Default for EcbfGains {
    fn default() -> Self {
        Self { k: [1.0, 2.0] }
    }
}

impl EcbfGains {
    /// Real per-level gains whose cascade reproduces the expanded polynomial,
    /// if its roots are real.
    pub fn factored(&self) -> Option<[f64; 2]> {
        let [k0, k1] = self.k;
        let disc = k1 * k1 - 4.0 * k0;
        if disc < 0.0 {
            return None;
        }
        let r = disc.sqrt();
        Some([(k1 - r) / 2.0, (k1 + r) / 2.0])
    }
}

/// Derivatives of the tractor barrier under single-steering dynamics:
/// `(h, h', drift, coefficient of a)` with `h'' = drift + coeff * a`.
pub fn ssttr_tractor_derivatives(
    s: &SsttrState,
    obs: &Obstacle,
    d1: f64,
    geom: &RobotGeometry,
) -> Result<(f64, f64, f64, f64), Error> {
    check_steering(s.delta1)?;
    let (dx, dy) = (s.x1 - obs.x, s.y1 - obs.y);
    let (proj, normal) = tractor_projections(dx, dy, s.theta);
    let v = s.v;
    let h = dx * dx + dy * dy - d1 * d1;
    let h_dot = 2.0 * v * proj;
    let drift = 2.0 * v * v - 2.0 * v * v / geom.l1 * s.delta1.tan() * normal;
    Ok((h, h_dot, drift, 2.0 * proj))
}

pub fn ecbf_constraints(
    s: &SsttrState,
    obstacles: &[Obstacle],
    gains: &EcbfGains,
    d1: f64,
    geom: &RobotGeometry,
) -> Result<SafetyConstraints, Error> {
    let mut a = DMatrix::zeros(obstacles.len(), 2);
    let mut b = DVector::zeros(obstacles.len());
    let mut rows = Vec::new();
    for (k, obs) in obstacles.iter().enumerate() {
        let (h, h_dot, drift, coeff) = ssttr_tractor_derivatives(s, obs, d1, geom)?;
        a[(k, 0)] = -coeff;
        b[k] = drift + gains.k[0] * h + gains.k[1] * h_dot;
        rows.push(RowInfo {
            body: Body::Tractor,
            obstacle_index: k,
        });
    }
    Ok(SafetyConstraints { a, b, rows })
}

/// Exponential-barrier filter for the single-steering robot; only the
/// tractor reference point is protected.
pub fn ecbf_filter(
    u_nom: &SsttrInput,
    constraints: &SafetyConstraints,
    limits: &Limits,
    settings: &FilterSettings,
    solver: &mut QpSolver,
) -> Result<FilterOutput<SsttrInput>, Error> {
    let boxes = [limits.a_max, limits.omega1_max];
    let out = project(
        &DVector::from_vec(vec![u_nom.a, u_nom.omega1]),
        constraints,
        settings.input_boxes.then_some(&boxes[..]),
        settings,
        solver,
    )?;
    Ok(FilterOutput {
        u_safe: SsttrInput {
            a: out.u_safe[0],
            omega1: out.u_safe[1],
        },
        active: out.active,
        slack_used: out.slack_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeStatus {
    Bounded,
    Unbounded,
    NoConstraints,
    Infeasible,
}

/// Common feasibility margin `p* = max p s.t. A u + p 1 <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityProbe {
    pub status: ProbeStatus,
    pub p_star: f64,
}

impl RegularityProbe {
    /// `p* > 0`, counting an unbounded program as positive.
    pub fn is_regular(&self) -> bool {
        match self.status {
            ProbeStatus::Bounded => self.p_star > 0.0,
            ProbeStatus::Unbounded => true,
            ProbeStatus::NoConstraints | ProbeStatus::Infeasible => false,
        }
    }
}

pub fn regularity_probe(constraints: &SafetyConstraints, solver: &mut QpSolver) -> Result<RegularityProbe, Error> {
    let (m, n) = (constraints.a.nrows(), constraints.a.ncols());
    if m == 0 {
        return Ok(RegularityProbe {
            status: ProbeStatus::NoConstraints,
            p_star: f64::INFINITY,
        });
    }
    let mut a = DMatrix::from_element(m, n + 1, 1.0);
    a.view_mut((0, 0), (m, n)).copy_from(&constraints.a);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let lp = solve_lp(solver, &c, &a, &constraints.b)?;
    Ok(match lp.status {
        QpStatus::Optimal => RegularityProbe {
            status: ProbeStatus::Bounded,
            p_star: lp.value,
        },
        QpStatus::Unbounded => RegularityProbe {
            status: ProbeStatus::Unbounded,
            p_star: f64::INFINITY,
        },
        QpStatus::Infeasible => RegularityProbe {
            status: ProbeStatus::Infeasible,
            p_star: f64::NEG_INFINITY,
        },
        QpStatus::MaxIter => {
            return Err(Error::SolverFailure("regularity LP did not converge".into()));
        }
    })
}
