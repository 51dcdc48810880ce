//! Closed-loop simulation: reference window, MPC, safety filter, plant
//! integration and logging, plus run metrics and the offline invariance
//! audit.

use nalgebra::{Vector2, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{footprint, integrate_step, integrate_substepped, Msttr, Ssttr};
use crate::mpc::{MpcConfig, MpcController};
use crate::qp::QpSolver;
use crate::reference::{generate_reference, Reference, ReferenceSpec};
use crate::safety::{
    assemble_constraints, cascade, ecbf_constraints, ecbf_filter, filter, h, regularity_probe,
    ssttr_tractor_derivatives, Body, EcbfGains, FilterSettings, GainVectors, ProbeStatus,
    SafetyDistances,
};
use crate::types::{
    InputVector, Limits, LogEntry, Obstacle, RobotGeometry, RobotKind, SsttrInput, SsttrState,
    StateVector, TrajectoryLog,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    MultiCbf,
    Ecbf,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_ts")]
    pub ts: f64,
    pub q: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub hard_state_boxes: bool,
    #[serde(default)]
    pub linearize_at_state: bool,
    #[serde(default = "default_slack_weight")]
    pub slack_weight: f64,
}

fn default_horizon() -> usize {
    5
}
fn default_ts() -> f64 {
    0.2
}
fn default_slack_weight() -> f64 {
    1e4
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            ts: default_ts(),
            q: None,
            p: None,
            r: None,
            hard_state_boxes: false,
            linearize_at_state: false,
            slack_weight: default_slack_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySection {
    #[serde(default = "default_d1")]
    pub d1: f64,
    #[serde(default = "default_d2")]
    pub d2: f64,
    #[serde(default = "default_k1")]
    pub k1: [f64; 3],
    #[serde(default = "default_k2")]
    pub k2: [f64; 2],
    #[serde(default = "default_k_ecbf")]
    pub k_ecbf: [f64; 2],
    #[serde(default)]
    pub slack: bool,
    #[serde(default)]
    pub input_boxes: bool,
}

fn default_d1() -> f64 {
    4.6
}
fn default_d2() -> f64 {
    3.0
}
fn default_k1() -> [f64; 3] {
    [1.0, 2.0, 2.0]
}
fn default_k2() -> [f64; 2] {
    [4.0, 4.0]
}
fn default_k_ecbf() -> [f64; 2] {
    [1.0, 2.0]
}

impl Default for SafetySection {
    fn default() -> Self {
        Self {
            d1: default_d1(),
            d2: default_d2(),
            k1: default_k1(),
            k2: default_k2(),
            k_ecbf: default_k_ecbf(),
            slack: false,
            input_boxes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Lateral shift of the start pose from the path start (left positive).
    #[serde(default = "default_offset")]
    pub lateral_offset: f64,
    /// Explicit initial state; overrides `lateral_offset`.
    pub state: Option<StateVector>,
}

fn default_offset() -> f64 {
    2.0
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            lateral_offset: default_offset(),
            state: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// RK4 substeps per control period.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Re-evaluate the safety filter at every plant substep, holding the
    /// nominal input over the control period.
    #[serde(default)]
    pub filter_every_substep: bool,
}

fn default_substeps() -> usize {
    10
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            substeps: default_substeps(),
            filter_every_substep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub robot: RobotKind,
    pub filter: FilterKind,
    pub duration: f64,
    #[serde(default)]
    pub geometry: RobotGeometry,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub safety: SafetySection,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub sim: SimSection,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Scenario(m));
        match (self.robot, self.filter) {
            (RobotKind::Msttr, FilterKind::Ecbf) => return bad("the ecbf filter requires robot = \"ssttr\"".into()),
            (RobotKind::Ssttr, FilterKind::MultiCbf) => {
                return bad("the multicbf filter requires robot = \"msttr\"".into())
            }
            _ => {}
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.sim.substeps == 0 {
            return bad("sim.substeps must be at least 1".into());
        }
        if let Some(o) = self.obstacles.iter().find(|o| !(o.radius >= 0.0) || !o.x.is_finite() || !o.y.is_finite()) {
            return bad(format!("invalid obstacle {o:?}"));
        }
        self.geometry.validate()?;
        self.limits.validate()?;
        self.gains()?;
        self.distances()?;
        let (nx, nu) = match self.robot {
            RobotKind::Msttr => (8, 3),
            RobotKind::Ssttr => (6, 2),
        };
        self.mpc_config().validate(nx, nu)
    }

    pub fn mpc_config(&self) -> MpcConfig {
        let base = match self.robot {
            RobotKind::Msttr => MpcConfig::msttr_default(),
            RobotKind::Ssttr => MpcConfig::ssttr_default(),
        };
        MpcConfig {
            horizon: self.mpc.horizon,
            ts: self.mpc.ts,
            q: self.mpc.q.clone().unwrap_or(base.q),
            p: self.mpc.p.clone().unwrap_or(base.p),
            r: self.mpc.r.clone().unwrap_or(base.r),
            limits: self.limits,
            hard_state_boxes: self.mpc.hard_state_boxes,
            linearize_at_state: self.mpc.linearize_at_state,
            slack_weight: self.mpc.slack_weight,
        }
    }

    pub fn gains(&self) -> Result<GainVectors, Error> {
        GainVectors::new(self.safety.k1, self.safety.k2)
    }

    pub fn ecbf_gains(&self) -> Result<EcbfGains, Error> {
        if self.safety.k_ecbf.iter().all(|k| *k > 0.0 && k.is_finite()) {
            Ok(EcbfGains { k: self.safety.k_ecbf })
        } else {
            Err(Error::InvalidParameter("ECBF gains must be strictly positive".into()))
        }
    }

    pub fn distances(&self) -> Result<SafetyDistances, Error> {
        let d = SafetyDistances {
            d1: self.safety.d1,
            d2: self.safety.d2,
        };
        if d.d1 > 0.0 && d.d2 > 0.0 {
            Ok(d)
        } else {
            Err(Error::InvalidParameter("safety distances must be positive".into()))
        }
    }

    pub fn filter_settings(&self) -> FilterSettings {
        FilterSettings {
            slack: self.safety.slack,
            input_boxes: self.safety.input_boxes,
            ..FilterSettings::default()
        }
    }

    pub fn reference(&self) -> Result<Reference, Error> {
        generate_reference(&self.reference, &self.geometry, &self.limits, self.mpc.ts)
    }

    pub fn initial_state(&self, reference: &Reference) -> StateVector {
        match self.initial.state {
            Some(s) => s,
            None => reference.initial_state(self.initial.lateral_offset),
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.mpc.ts).round() as usize
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    FilterInfeasible(String),
    SolverFailure(String),
    DomainError(String),
}

impl Termination {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::FilterInfeasible(m) => Termination::FilterInfeasible(m.clone()),
            Error::SolverFailure(m) => Termination::SolverFailure(m.clone()),
            other => Termination::DomainError(other.to_string()),
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierMinimum {
    pub body: Body,
    pub obstacle: usize,
    pub min_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub robot: RobotKind,
    pub filter: FilterKind,
    pub steps: usize,
    pub termination: Termination,
    pub min_h: Vec<BarrierMinimum>,
    pub min_h_tractor: Option<f64>,
    pub min_h_trailer: Option<f64>,
    pub min_footprint_clearance: Option<f64>,
    pub min_tractor_clearance: Option<f64>,
    pub min_trailer_clearance: Option<f64>,
    pub collision: bool,
    pub rms_tracking_error: f64,
    pub rms_tracking_error_final_10s: f64,
    pub final_position_error: f64,
    pub filter_activation_count: usize,
    pub slack_total: f64,
    pub mpc_relaxed_count: usize,
    pub max_abs_u_nominal: [f64; 3],
    pub max_abs_u_safe: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
    pub reference: Reference,
    /// Per-step slack of the filter and relaxation flag of the MPC.
    pub step_flags: Vec<StepFlags>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepFlags {
    pub filter_slack: f64,
    pub mpc_relaxed: bool,
}

/// Minimum clearance of the tractor and trailer bodies to the obstacle discs.
pub fn body_clearances(s: &StateVector, obstacles: &[Obstacle], geom: &RobotGeometry) -> (f64, f64) {
    let fp = footprint(s, geom);
    obstacles.iter().fold((f64::INFINITY, f64::INFINITY), |(t, r), o| {
        let c = Vector2::new(o.x, o.y);
        (
            t.min(fp.tractor.disc_clearance(&c, o.radius)),
            r.min(fp.trailer.disc_clearance(&c, o.radius)),
        )
    })
}

fn barrier_values(s: &StateVector, sc: &Scenario, d: &SafetyDistances) -> (Vec<f64>, Vec<f64>) {
    let hv = |body| sc.obstacles.iter().map(|o| h(s, body, d.for_body(body), o, &sc.geometry)).collect();
    (hv(Body::Tractor), hv(Body::Trailer))
}

/// Runs the scenario. Errors during the loop stop the run; the partial log
/// is returned with the termination reason in the metrics.
pub fn run(sc: &Scenario) -> Result<RunResult, Error> {
    sc.validate()?;
    let reference = sc.reference()?;
    let cfg = sc.mpc_config();
    let dists = sc.distances()?;
    let gains = sc.gains()?;
    let ecbf = sc.ecbf_gains()?;
    let settings = sc.filter_settings();
    let ts = cfg.ts;
    let mut ctl = MpcController::new(cfg.clone(), sc.geometry);
    let mut filter_solver = QpSolver::default();
    let mut log = TrajectoryLog::new(sc.robot, ts, sc.obstacles.len());
    let mut flags = Vec::new();
    let mut x = sc.initial_state(&reference);
    if sc.robot == RobotKind::Ssttr {
        x.a = 0.0;
        x.delta2 = 0.0;
    }
    let mut termination = Termination::Completed;

    for k in 0..sc.steps() {
        let t = k as f64 * ts;
        let step = match sc.robot {
            RobotKind::Msttr => msttr_step(sc, &reference, k, &x, &mut ctl, &mut filter_solver, &gains, &dists, &settings),
            RobotKind::Ssttr => ssttr_step(sc, &reference, k, &x, &mut ctl, &mut filter_solver, &ecbf, &dists, &settings),
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                termination = Termination::from_error(&e);
                break;
            }
        };
        let (h_tractor, h_trailer) = barrier_values(&step.logged_state, sc, &dists);
        let (ct, cr) = body_clearances(&step.logged_state, &sc.obstacles, &sc.geometry);
        log.push(LogEntry {
            t,
            state: step.logged_state,
            u_nominal: step.u_nominal,
            u_safe: step.u_safe,
            h_tractor,
            h_trailer,
            filter_active: step.active,
            mpc_cost: step.mpc_cost,
            min_clearance: ct.min(cr),
        })?;
        flags.push(StepFlags {
            filter_slack: step.slack,
            mpc_relaxed: step.relaxed,
        });
        match step.next_state {
            Ok(next) => x = next,
            Err(e) => {
                termination = Termination::from_error(&e);
                break;
            }
        }
    }

    let metrics = compute_metrics(sc, &log, &reference, &flags, termination);
    Ok(RunResult {
        log,
        metrics,
        reference,
        step_flags: flags,
    })
}

struct StepOutcome {
    logged_state: StateVector,
    u_nominal: InputVector,
    u_safe: InputVector,
    active: bool,
    slack: f64,
    relaxed: bool,
    mpc_cost: f64,
    next_state: Result<StateVector, Error>,
}

#[allow(clippy::too_many_arguments)]
fn msttr_step(
    sc: &Scenario,
    reference: &Reference,
    k: usize,
    x: &StateVector,
    ctl: &mut MpcController,
    solver: &mut QpSolver,
    gains: &GainVectors,
    dists: &SafetyDistances,
    settings: &FilterSettings,
) -> Result<StepOutcome, Error> {
    let window = reference.window(k, ctl.cfg.horizon);
    let mpc = ctl.step(x, &window)?;
    let model = Msttr { geom: sc.geometry };
    let safe = |s: &StateVector, solver: &mut QpSolver| -> Result<(InputVector, bool, f64), Error> {
        if sc.filter == FilterKind::None {
            return Ok((mpc.u, false, 0.0));
        }
        let c = assemble_constraints(s, &sc.obstacles, gains, dists, &sc.geometry)?;
        let out = filter(&mpc.u, &c, &sc.limits, settings, solver)?;
        Ok((out.u_safe, out.active, out.slack_used))
    };
    let (u_safe, mut active, mut slack) = safe(x, solver)?;
    let next = if sc.sim.filter_every_substep && sc.filter != FilterKind::None {
        let dt = ctl.cfg.ts / sc.sim.substeps as f64;
        let mut state = x.to_vector();
        let mut u = u_safe;
        let mut result = Ok(());
        for j in 0..sc.sim.substeps {
            if j > 0 {
                let (uj, aj, sj) = safe(&StateVector::from_vector(&state), solver)?;
                u = uj;
                active |= aj;
                slack += sj;
            }
            match integrate_step(&model, &state, &u.to_vector(), dt) {
                Ok(v) => state = v,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        result.map(|_| StateVector::from_vector(&state))
    } else {
        integrate_substepped(&model, &x.to_vector(), &u_safe.to_vector(), ctl.cfg.ts, sc.sim.substeps)
            .map(|v| StateVector::from_vector(&v))
    };
    Ok(StepOutcome {
        logged_state: *x,
        u_nominal: mpc.u,
        u_safe,
        active,
        slack,
        relaxed: mpc.relaxed,
        mpc_cost: mpc.cost,
        next_state: next,
    })
}

#[allow(clippy::too_many_arguments)]
fn ssttr_step(
    sc: &Scenario,
    reference: &Reference,
    k: usize,
    x: &StateVector,
    ctl: &mut MpcController,
    solver: &mut QpSolver,
    gains: &EcbfGains,
    dists: &SafetyDistances,
    settings: &FilterSettings,
) -> Result<StepOutcome, Error> {
    let s = SsttrState::from_full(x);
    let window = reference.ssttr_window(k, ctl.cfg.horizon);
    let mpc = ctl.ssttr_step(&s, &window)?;
    let model = Ssttr { geom: sc.geometry };
    let safe = |s: &SsttrState, solver: &mut QpSolver| -> Result<(SsttrInput, bool, f64), Error> {
        if sc.filter == FilterKind::None {
            return Ok((mpc.u, false, 0.0));
        }
        let c = ecbf_constraints(s, &sc.obstacles, gains, dists.d1, &sc.geometry)?;
        let out = ecbf_filter(&mpc.u, &c, &sc.limits, settings, solver)?;
        Ok((out.u_safe, out.active, out.slack_used))
    };
    let (u_safe, mut active, mut slack) = safe(&s, solver)?;
    let next = if sc.sim.filter_every_substep && sc.filter != FilterKind::None {
        let dt = ctl.cfg.ts / sc.sim.substeps as f64;
        let mut state = s.to_vector();
        let mut u = u_safe;
        let mut result = Ok(());
        for j in 0..sc.sim.substeps {
            if j > 0 {
                let (uj, aj, sj) = safe(&SsttrState::from_vector(&state), solver)?;
                u = uj;
                active |= aj;
                slack += sj;
            }
            match integrate_step(&model, &state, &u.to_vector(), dt) {
                Ok(v) => state = v,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        result.map(|_| SsttrState::from_vector(&state).to_full(u.a))
    } else {
        integrate_substepped(&model, &s.to_vector(), &u_safe.to_vector(), ctl.cfg.ts, sc.sim.substeps)
            .map(|v| SsttrState::from_vector(&v).to_full(u_safe.a))
    };
    let widen = |u: SsttrInput| InputVector::new(u.a, u.omega1, 0.0);
    Ok(StepOutcome {
        logged_state: s.to_full(u_safe.a),
        u_nominal: widen(mpc.u),
        u_safe: widen(u_safe),
        active,
        slack,
        relaxed: mpc.relaxed,
        mpc_cost: mpc.cost,
        next_state: next,
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn min_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}

pub fn compute_metrics(
    sc: &Scenario,
    log: &TrajectoryLog,
    reference: &Reference,
    flags: &[StepFlags],
    termination: Termination,
) -> RunMetrics {
    let n_obs = sc.obstacles.len();
    let mut min_h = Vec::new();
    for (body, pick) in [(Body::Tractor, 0usize), (Body::Trailer, 1)] {
        for k in 0..n_obs {
            let m = log
                .entries
                .iter()
                .map(|e| if pick == 0 { e.h_tractor[k] } else { e.h_trailer[k] })
                .fold(f64::INFINITY, f64::min);
            if !log.is_empty() {
                min_h.push(BarrierMinimum { body, obstacle: k, min_h: m });
            }
        }
    }
    let body_min = |b: Body| min_of(min_h.iter().filter(|m| m.body == b).map(|m| m.min_h));
    let clear: Vec<(f64, f64)> = log
        .entries
        .iter()
        .map(|e| body_clearances(&e.state, &sc.obstacles, &sc.geometry))
        .collect();
    let finite = |v: f64| v.is_finite().then_some(v);
    let min_tractor = min_of(clear.iter().map(|c| c.0)).and_then(finite);
    let min_trailer = min_of(clear.iter().map(|c| c.1)).and_then(finite);
    let min_fp = match (min_tractor, min_trailer) {
        (Some(a), Some(b)) => Some(a.min(b)),
        _ => None,
    };
    let errors: Vec<f64> = log
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let r = reference.state_at(k);
            (e.state.x1 - r.x1).hypot(e.state.y1 - r.y1)
        })
        .collect();
    let tail = (10.0 / log.ts).round() as usize;
    let tail_start = errors.len().saturating_sub(tail);
    let mut max_nom = [0.0f64; 3];
    let mut max_safe = [0.0f64; 3];
    for e in &log.entries {
        let (a, b) = (e.u_nominal.to_vector(), e.u_safe.to_vector());
        for i in 0..3 {
            max_nom[i] = max_nom[i].max(a[i].abs());
            max_safe[i] = max_safe[i].max(b[i].abs());
        }
    }
    RunMetrics {
        scenario: sc.name.clone(),
        robot: sc.robot,
        filter: sc.filter,
        steps: log.len(),
        termination,
        min_h_tractor: body_min(Body::Tractor),
        min_h_trailer: body_min(Body::Trailer),
        min_h,
        min_footprint_clearance: min_fp,
        min_tractor_clearance: min_tractor,
        min_trailer_clearance: min_trailer,
        collision: min_fp.is_some_and(|c| c < 0.0),
        rms_tracking_error: rms(errors.iter().copied()),
        rms_tracking_error_final_10s: rms(errors[tail_start..].iter().copied()),
        final_position_error: errors.last().copied().unwrap_or(0.0),
        filter_activation_count: log.entries.iter().filter(|e| e.filter_active).count(),
        slack_total: flags.iter().map(|f| f.filter_slack).sum(),
        mpc_relaxed_count: flags.iter().filter(|f| f.mpc_relaxed).count(),
        max_abs_u_nominal: max_nom,
        max_abs_u_safe: max_safe,
    }
}

pub const AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierAudit {
    pub body: Body,
    pub obstacle: usize,
    /// Minimum over time of each cascade level, `m^0 = h` first.
    pub min_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditViolation {
    pub t: f64,
    pub body: Body,
    pub obstacle: usize,
    pub level: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityAudit {
    pub min_p_star: Option<f64>,
    pub unbounded_steps: usize,
    pub bounded_steps: usize,
    pub nonpositive_steps: usize,
    pub all_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub tolerance: f64,
    pub barriers: Vec<BarrierAudit>,
    pub min_h: Option<f64>,
    pub min_cascade: Option<f64>,
    pub first_violation: Option<AuditViolation>,
    pub passed: bool,
    pub regularity: Option<RegularityAudit>,
}

/// Recomputes every barrier and cascade value at the logged states.
///
/// Multi-steering runs use the tractor and trailer cascades; single-steering
/// runs use the exponential-barrier cascade of the tractor point and the
/// plain trailer barrier.
pub fn invariance_audit(log: &TrajectoryLog, sc: &Scenario) -> Result<AuditReport, Error> {
    let dists = sc.distances()?;
    let gains = sc.gains()?;
    let ecbf = sc.ecbf_gains()?;
    let n_obs = sc.obstacles.len();
    let mut barriers: Vec<BarrierAudit> = Vec::new();
    let mut first: Option<AuditViolation> = None;
    let mut solver = QpSolver::default();
    let mut reg = RegularityAudit {
        min_p_star: None,
        unbounded_steps: 0,
        bounded_steps: 0,
        nonpositive_steps: 0,
        all_positive: true,
    };

    for e in &log.entries {
        let levels: Vec<(Body, usize, Vec<f64>)> = match sc.robot {
            RobotKind::Msttr => cascade(&e.state, &sc.obstacles, &gains, &dists, &sc.geometry)?
                .barriers
                .into_iter()
                .map(|b| (b.body, b.obstacle_index, b.values))
                .collect(),
            RobotKind::Ssttr => {
                let s = SsttrState::from_full(&e.state);
                let lambda = ecbf.factored().map_or(ecbf.k[0] / ecbf.k[1], |f| f[0]);
                let mut v = Vec::new();
                for (k, o) in sc.obstacles.iter().enumerate() {
                    let (hv, hd, _, _) = ssttr_tractor_derivatives(&s, o, dists.d1, &sc.geometry)?;
                    v.push((Body::Tractor, k, vec![hv, hd + lambda * hv]));
                }
                for (k, o) in sc.obstacles.iter().enumerate() {
                    v.push((Body::Trailer, k, vec![h(&e.state, Body::Trailer, dists.d2, o, &sc.geometry)]));
                }
                v
            }
        };
        if barriers.is_empty() {
            barriers = levels
                .iter()
                .map(|(b, k, v)| BarrierAudit {
                    body: *b,
                    obstacle: *k,
                    min_levels: vec![f64::INFINITY; v.len()],
                })
                .collect();
        }
        for (audit, (body, k, values)) in barriers.iter_mut().zip(&levels) {
            for (j, &m) in values.iter().enumerate() {
                audit.min_levels[j] = audit.min_levels[j].min(m);
                if first.is_none() && !(m >= -AUDIT_TOLERANCE) {
                    first = Some(AuditViolation {
                        t: e.t,
                        body: *body,
                        obstacle: *k,
                        level: j,
                        value: m,
                    });
                }
            }
        }
        if sc.robot == RobotKind::Msttr && n_obs > 0 {
            let c = assemble_constraints(&e.state, &sc.obstacles, &gains, &dists, &sc.geometry)?;
            let p = regularity_probe(&c, &mut solver)?;
            match p.status {
                ProbeStatus::Unbounded => reg.unbounded_steps += 1,
                ProbeStatus::Bounded => {
                    reg.bounded_steps += 1;
                    reg.min_p_star = Some(reg.min_p_star.map_or(p.p_star, |m: f64| m.min(p.p_star)));
                }
                _ => {}
            }
            if !p.is_regular() {
                reg.nonpositive_steps += 1;
                reg.all_positive = false;
            }
        }
    }
    let min_h = min_of(barriers.iter().map(|b| b.min_levels[0]));
    let min_cascade = min_of(barriers.iter().flat_map(|b| b.min_levels.iter().copied()));
    Ok(AuditReport {
        tolerance: AUDIT_TOLERANCE,
        barriers,
        min_h,
        min_cascade,
        passed: first.is_none(),
        first_violation: first,
        regularity: (sc.robot == RobotKind::Msttr && n_obs > 0).then_some(reg),
    })
}

/// Safe-input projection at a single state, used by interactive front ends.
pub fn project_at_state(
    s: &StateVector,
    u_nom: &InputVector,
    obstacles: &[Obstacle],
    gains: &GainVectors,
    dists: &SafetyDistances,
    geom: &RobotGeometry,
    settings: &FilterSettings,
    limits: &Limits,
) -> Result<(InputVector, bool, DVector<f64>), Error> {
    let c = assemble_constraints(s, obstacles, gains, dists, geom)?;
    let mut solver = QpSolver::default();
    let out = filter(u_nom, &c, limits, settings, &mut solver)?;
    let u = DVector::from_column_slice(out.u_safe.to_vector().as_slice());
    Ok((out.u_safe, out.active, c.margins(&u)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(filter: FilterKind, robot: RobotKind, obstacles: Vec<Obstacle>) -> Scenario {
        Scenario {
            name: "straight".into(),
            description: String::new(),
            robot,
            filter,
            duration: 20.0,
            geometry: RobotGeometry::default(),
            limits: Limits::default(),
            mpc: MpcSection::default(),
            safety: SafetySection::default(),
            reference: ReferenceSpec {
                waypoints: vec![[0.0, 0.0], [60.0, 0.0]],
                speed: 3.0,
                segment_speeds: vec![],
                fillet_radius: 10.0,
                accel: 0.5,
            },
            initial: InitialSection::default(),
            obstacles,
            sim: SimSection::default(),
        }
    }

    #[test]
    fn obstacle_free_run_is_clean() {
        let r = run(&straight(FilterKind::None, RobotKind::Msttr, vec![])).unwrap();
        assert!(r.metrics.termination.is_completed());
        assert_eq!(r.metrics.filter_activation_count, 0);
        assert!(!r.metrics.collision);
        assert_eq!(r.log.len(), 100);
    }

    #[test]
    fn pairing_is_checked() {
        assert!(straight(FilterKind::Ecbf, RobotKind::Msttr, vec![]).validate().is_err());
        assert!(straight(FilterKind::MultiCbf, RobotKind::Ssttr, vec![]).validate().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let sc = straight(FilterKind::MultiCbf, RobotKind::Msttr, vec![Obstacle::new(30.0, 6.0, 1.0)]);
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn ssttr_run_completes() {
        let sc = straight(FilterKind::Ecbf, RobotKind::Ssttr, vec![Obstacle::new(30.0, 8.0, 1.0)]);
        let r = run(&sc).unwrap();
        assert!(r.metrics.termination.is_completed(), "{:?}", r.metrics.termination);
        assert!(r.log.entries.iter().all(|e| e.state.delta2 == 0.0 && e.u_safe.omega2 == 0.0));
    }

    #[test]
    fn audit_flags_corrupted_entry() {
        let sc = straight(FilterKind::MultiCbf, RobotKind::Msttr, vec![Obstacle::new(30.0, 8.0, 1.0)]);
        let r = run(&sc).unwrap();
        let clean = invariance_audit(&r.log, &sc).unwrap();
        assert!(clean.passed, "{:?}", clean.first_violation);
        let mut log = r.log.clone();
        log.entries[40].state.x1 = 30.0;
        log.entries[40].state.y1 = 8.0;
        let bad = invariance_audit(&log, &sc).unwrap();
        let v = bad.first_violation.unwrap();
        assert_eq!(v.t, log.entries[40].t);
        assert_eq!(v.body, Body::Tractor);
    }
}
