//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//!     minimize     1/2 z' H z + q' z
//!     subject to   A_ineq z <= b_ineq
//!                  A_eq   z  = b_eq
//! ```
//!
//! with an operator-splitting (ADMM) iteration and adaptive penalty, followed
//! by an active-set polish that solves the equality-constrained KKT system of
//! the identified active set and repairs it until primal feasibility and dual
//! sign conditions hold. Every returned solution carries its KKT residuals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::Error;

/// Constraint rows with `|b|` at or above this are treated as absent.
const INF_BOUND: f64 = 1e20;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: Option<DMatrix<f64>>,
    pub b_eq: Option<DVector<f64>>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        q: DVector<f64>,
        a_ineq: DMatrix<f64>,
        b_ineq: DVector<f64>,
    ) -> Result<Self, Error> {
        let p = Self {
            h,
            q,
            a_ineq,
            b_ineq,
            a_eq: None,
            b_eq: None,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    /// Problem without inequality constraints.
    pub fn unconstrained(h: DMatrix<f64>, q: DVector<f64>) -> Result<Self, Error> {
        let n = q.len();
        Self::new(h, q, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Result<Self, Error> {
        self.a_eq = Some(a_eq);
        self.b_eq = Some(b_eq);
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.b_ineq.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.as_ref().map_or(0, |b| b.len())
    }

    fn check_dimensions(&self) -> Result<(), Error> {
        let n = self.q.len();
        let mismatch = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if self.h.nrows() != n || self.h.ncols() != n {
            return mismatch("H must be n x n with n = len(q)");
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return mismatch("A_ineq must be m x n with m = len(b_ineq)");
        }
        match (&self.a_eq, &self.b_eq) {
            (None, None) => {}
            (Some(a), Some(b)) if a.ncols() == n && a.nrows() == b.len() => {}
            _ => return mismatch("A_eq must be p x n with p = len(b_eq)"),
        }
        Ok(())
    }

    /// Checks dimensions, symmetry and positive semidefiniteness of `H`.
    pub fn validate(&self) -> Result<(), Error> {
        self.check_dimensions()?;
        let n = self.num_vars();
        if n == 0 {
            return Ok(());
        }
        if !self.h.iter().chain(self.q.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite cost data".into()));
        }
        let scale = self.h.amax().max(1.0);
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidParameter(format!(
                "H is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = SymmetricEigen::new(self.h.clone()).eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return Err(Error::NotPositiveSemidefinite(min_eig));
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.q.dot(z)
    }

    /// KKT residuals of a primal-dual pair (`duals` for inequalities,
    /// `eq_duals` for equalities).
    pub fn kkt_residuals(
        &self,
        z: &DVector<f64>,
        duals: &DVector<f64>,
        eq_duals: &DVector<f64>,
    ) -> KktResiduals {
        let mut grad = &self.h * z + &self.q + self.a_ineq.tr_mul(duals);
        if let Some(a_eq) = &self.a_eq {
            grad += a_eq.tr_mul(eq_duals);
        }
        let slack = &self.a_ineq * z - &self.b_ineq;
        let mut primal = slack.iter().fold(0.0f64, |acc, s| acc.max(*s));
        if let (Some(a_eq), Some(b_eq)) = (&self.a_eq, &self.b_eq) {
            primal = primal.max((a_eq * z - b_eq).amax());
        }
        let dual_sign = duals.iter().fold(0.0f64, |acc, l| acc.max(-l));
        let complementarity = duals
            .iter()
            .zip(slack.iter())
            .filter(|(_, s)| s.is_finite())
            .fold(0.0f64, |acc, (l, s)| acc.max((l * s).abs()));
        KktResiduals {
            stationarity: grad.amax(),
            primal,
            dual_sign,
            complementarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct KktResiduals {
    /// `|H z + q + A' lambda|_inf`
    pub stationarity: f64,
    /// Largest constraint violation.
    pub primal: f64,
    /// Largest negative inequality multiplier (as a positive number).
    pub dual_sign: f64,
    /// `max_i |lambda_i (A_i z - b_i)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual_sign)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub duals: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// KKT tolerance for declaring a solution optimal (scaled by problem size).
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho_interval: usize,
    /// ADMM stopping tolerance before polishing.
    pub admm_eps: f64,
    pub infeasibility_eps: f64,
    pub warm_start: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            admm_eps: 1e-6,
            infeasibility_eps: 1e-7,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone)]
struct WarmStart {
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

/// A solver instance owns its warm-start cache. Create one per thread.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
    warm: Option<WarmStart>,
}

enum AdmmOutcome {
    Converged,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

struct AdmmState {
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    iterations: usize,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings, warm: None }
    }

    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution, Error> {
        p.validate()?;
        let n = p.num_vars();
        let (a, lower, upper) = stacked_constraints(p);
        let m = a.nrows();

        if n == 0 {
            let z = DVector::zeros(0);
            let infeasible = (0..m).any(|i| lower[i] > 0.0 || upper[i] < 0.0);
            return Ok(QpSolution {
                kkt: p.kkt_residuals(&z, &DVector::zeros(p.num_ineq()), &DVector::zeros(p.num_eq())),
                z,
                duals: DVector::zeros(p.num_ineq()),
                eq_duals: DVector::zeros(p.num_eq()),
                status: if infeasible { QpStatus::Infeasible } else { QpStatus::Optimal },
                iterations: 0,
                objective: 0.0,
            });
        }

        let mut state = match (&self.warm, self.settings.warm_start) {
            (Some(w), true) if w.x.len() == n && w.y.len() == m => AdmmState {
                x: w.x.clone(),
                z: w.z.clone(),
                y: w.y.clone(),
                iterations: 0,
            },
            _ => AdmmState {
                x: DVector::zeros(n),
                z: DVector::zeros(m),
                y: DVector::zeros(m),
                iterations: 0,
            },
        };

        let outcome = self.admm(p, &a, &lower, &upper, &mut state)?;
        let scale = problem_scale(p);
        let accept = self.settings.tol * scale;

        match outcome {
            AdmmOutcome::PrimalInfeasible => {
                self.warm = None;
                return Ok(self.unpolished(p, &state, QpStatus::Infeasible));
            }
            AdmmOutcome::DualInfeasible => {
                self.warm = None;
                return Ok(self.unpolished(p, &state, QpStatus::Unbounded));
            }
            AdmmOutcome::Converged | AdmmOutcome::MaxIter => {}
        }

        // Initial working set from the ADMM multipliers.
        let m_ineq = p.num_ineq();
        let y_scale = state.y.amax().max(1.0);
        let working: Vec<bool> = (0..m_ineq).map(|i| state.y[i] > 1e-7 * y_scale).collect();

        if let Some((z, duals, eq_duals)) = polish(p, working, scale) {
            let kkt = p.kkt_residuals(&z, &duals, &eq_duals);
            if kkt.max() <= accept {
                let mut y = DVector::zeros(m);
                y.rows_mut(0, m_ineq).copy_from(&duals);
                y.rows_mut(m_ineq, p.num_eq()).copy_from(&eq_duals);
                self.warm = Some(WarmStart {
                    z: &a * &z,
                    x: z.clone(),
                    y,
                });
                return Ok(QpSolution {
                    objective: p.objective(&z),
                    z,
                    duals,
                    eq_duals,
                    status: QpStatus::Optimal,
                    kkt,
                    iterations: state.iterations,
                });
            }
        }

        // Polish could not certify: fall back to a cold active-set search.
        if let Some((z, duals, eq_duals)) = polish(p, vec![false; m_ineq], scale) {
            let kkt = p.kkt_residuals(&z, &duals, &eq_duals);
            if kkt.max() <= accept {
                self.warm = None;
                return Ok(QpSolution {
                    objective: p.objective(&z),
                    z,
                    duals,
                    eq_duals,
                    status: QpStatus::Optimal,
                    kkt,
                    iterations: state.iterations,
                });
            }
        }

        match dual_active_set(p, scale) {
            Some(DualOutcome::Solved((z, duals, eq_duals))) => {
                let kkt = p.kkt_residuals(&z, &duals, &eq_duals);
                if kkt.max() <= accept {
                    self.warm = None;
                    return Ok(QpSolution {
                        objective: p.objective(&z),
                        z,
                        duals,
                        eq_duals,
                        status: QpStatus::Optimal,
                        kkt,
                        iterations: state.iterations,
                    });
                }
            }
            Some(DualOutcome::Infeasible) => {
                self.warm = None;
                return Ok(self.unpolished(p, &state, QpStatus::Infeasible));
            }
            None => {}
        }

        self.warm = None;
        Ok(self.unpolished(p, &state, QpStatus::MaxIter))
    }

    fn unpolished(&self, p: &QpProblem, s: &AdmmState, status: QpStatus) -> QpSolution {
        let m_ineq = p.num_ineq();
        let duals = s.y.rows(0, m_ineq).into_owned();
        let eq_duals = s.y.rows(m_ineq, p.num_eq()).into_owned();
        QpSolution {
            kkt: p.kkt_residuals(&s.x, &duals, &eq_duals),
            objective: p.objective(&s.x),
            z: s.x.clone(),
            duals,
            eq_duals,
            status,
            iterations: s.iterations,
        }
    }

    fn admm(
        &self,
        p: &QpProblem,
        a: &DMatrix<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        st: &mut AdmmState,
    ) -> Result<AdmmOutcome, Error> {
        let cfg = &self.settings;
        let m = a.nrows();
        let is_eq: Vec<bool> = (0..m).map(|i| lower[i] == upper[i]).collect();
        let mut rho = cfg.rho;
        let rho_vec = |rho: f64| -> DVector<f64> {
            DVector::from_iterator(m, is_eq.iter().map(|&e| if e { rho * 1e3 } else { rho }))
        };
        let mut rv = rho_vec(rho);
        let mut factor = factorize(&p.h, a, &rv, cfg.sigma)?;

        for k in 0..cfg.max_iter {
            st.iterations = k + 1;
            let rhs = &st.x * cfg.sigma - &p.q + a.tr_mul(&(rv.component_mul(&st.z) - &st.y));
            let x_tilde = factor.solve(&rhs);
            let z_tilde = a * &x_tilde;
            let x_next = &x_tilde * cfg.alpha + &st.x * (1.0 - cfg.alpha);
            let z_relax = &z_tilde * cfg.alpha + &st.z * (1.0 - cfg.alpha);
            let mut z_next = &z_relax + st.y.component_div(&rv);
            for i in 0..m {
                z_next[i] = z_next[i].clamp(lower[i], upper[i]);
            }
            let y_next = &st.y + rv.component_mul(&(&z_relax - &z_next));

            let dy = &y_next - &st.y;
            let dx = &x_next - &st.x;
            st.x = x_next;
            st.z = z_next;
            st.y = y_next;

            let ax = a * &st.x;
            let hx = &p.h * &st.x;
            let aty = a.tr_mul(&st.y);
            let r_prim = if m > 0 { (&ax - &st.z).amax() } else { 0.0 };
            let r_dual = (&hx + &p.q + &aty).amax();
            let eps_prim = cfg.admm_eps * (1.0 + ax.amax().max(st.z.amax()));
            let eps_dual = cfg.admm_eps * (1.0 + hx.amax().max(aty.amax()).max(p.q.amax()));
            if r_prim <= eps_prim && r_dual <= eps_dual {
                return Ok(AdmmOutcome::Converged);
            }

            if m > 0 && primal_infeasible(a, lower, upper, &dy, cfg.infeasibility_eps) {
                return Ok(AdmmOutcome::PrimalInfeasible);
            }
            if dual_infeasible(p, a, lower, upper, &dx, cfg.infeasibility_eps) {
                return Ok(AdmmOutcome::DualInfeasible);
            }

            if m > 0 && cfg.adaptive_rho_interval > 0 && (k + 1) % cfg.adaptive_rho_interval == 0 {
                let prim_norm = r_prim / (ax.amax().max(st.z.amax()) + 1e-30);
                let dual_norm = r_dual / (hx.amax().max(aty.amax()).max(p.q.amax()) + 1e-30);
                let new_rho = (rho * (prim_norm / (dual_norm + 1e-30)).sqrt()).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                    rho = new_rho;
                    rv = rho_vec(rho);
                    factor = factorize(&p.h, a, &rv, cfg.sigma)?;
                }
            }
        }
        Ok(AdmmOutcome::MaxIter)
    }
}

fn problem_scale(p: &QpProblem) -> f64 {
    let b_max = p
        .b_ineq
        .iter()
        .filter(|b| b.abs() < INF_BOUND)
        .fold(0.0f64, |acc, b| acc.max(b.abs()));
    1.0f64.max(p.q.amax()).max(b_max).max(p.h.amax())
}

/// Stacks inequalities (`-inf <= A z <= b`) and equalities (`b <= A z <= b`).
fn stacked_constraints(p: &QpProblem) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = p.num_vars();
    let (mi, me) = (p.num_ineq(), p.num_eq());
    let mut a = DMatrix::zeros(mi + me, n);
    let mut lower = DVector::from_element(mi + me, f64::NEG_INFINITY);
    let mut upper = DVector::zeros(mi + me);
    a.rows_mut(0, mi).copy_from(&p.a_ineq);
    for i in 0..mi {
        upper[i] = if p.b_ineq[i] >= INF_BOUND { f64::INFINITY } else { p.b_ineq[i] };
    }
    if let (Some(ae), Some(be)) = (&p.a_eq, &p.b_eq) {
        a.rows_mut(mi, me).copy_from(ae);
        for i in 0..me {
            lower[mi + i] = be[i];
            upper[mi + i] = be[i];
        }
    }
    (a, lower, upper)
}

fn factorize(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    rho: &DVector<f64>,
    sigma: f64,
) -> Result<Cholesky<f64, Dyn>, Error> {
    let n = h.nrows();
    let mut k = h + DMatrix::identity(n, n) * sigma;
    let mut scaled = a.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= rho[i];
    }
    k += a.tr_mul(&scaled);
    Cholesky::new(k).ok_or_else(|| Error::SolverFailure("ADMM KKT matrix is not positive definite".into()))
}

fn primal_infeasible(
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    dy: &DVector<f64>,
    eps: f64,
) -> bool {
    let norm = dy.amax();
    if norm < 1e-12 {
        return false;
    }
    if a.tr_mul(dy).amax() > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let d = dy[i];
        if d > 0.0 {
            if upper[i].is_infinite() {
                return false;
            }
            support += upper[i] * d;
        } else if d < 0.0 {
            if lower[i].is_infinite() {
                if -d > eps * norm {
                    return false;
                }
                continue;
            }
            support += lower[i] * d;
        }
    }
    support < -eps * norm
}

fn dual_infeasible(
    p: &QpProblem,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    dx: &DVector<f64>,
    eps: f64,
) -> bool {
    let norm = dx.amax();
    if norm < 1e-12 {
        return false;
    }
    if (&p.h * dx).amax() > eps * norm || p.q.dot(dx) > -eps * norm {
        return false;
    }
    let adx = a * dx;
    (0..adx.len()).all(|i| {
        let up_ok = upper[i].is_infinite() || adx[i] <= eps * norm;
        let lo_ok = lower[i].is_infinite() || adx[i] >= -eps * norm;
        up_ok && lo_ok
    })
}

type PrimalDual = (DVector<f64>, DVector<f64>, DVector<f64>);

/// Active-set repair starting from `working`: solve the KKT system of the
/// working set, add the most violated inactive row or drop the most negative
/// multiplier, and repeat until both conditions hold.
fn polish(p: &QpProblem, mut working: Vec<bool>, scale: f64) -> Option<PrimalDual> {
    let n = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();
    let feas_tol = 1e-11 * scale;
    let dual_tol = 1e-11 * scale;
    let max_rounds = 4 * (mi + n) + 20;
    // Rows with infinite bounds never bind.
    for (i, w) in working.iter_mut().enumerate() {
        if p.b_ineq[i] >= INF_BOUND {
            *w = false;
        }
    }
    let mut last_added: Option<usize> = None;

    for _ in 0..max_rounds {
        let active: Vec<usize> = (0..mi).filter(|&i| working[i]).collect();
        let k = me + active.len();
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.q));
        if let (Some(ae), Some(be)) = (&p.a_eq, &p.b_eq) {
            for r in 0..me {
                let row = ae.row(r);
                kkt.view_mut((n + r, 0), (1, n)).copy_from(&row);
                kkt.view_mut((0, n + r), (n, 1)).copy_from(&row.transpose());
                rhs[n + r] = be[r];
            }
        }
        for (j, &i) in active.iter().enumerate() {
            let row = p.a_ineq.row(i);
            kkt.view_mut((n + me + j, 0), (1, n)).copy_from(&row);
            kkt.view_mut((0, n + me + j), (n, 1)).copy_from(&row.transpose());
            rhs[n + me + j] = p.b_ineq[i];
        }
        let sol = solve_symmetric(&kkt, &rhs)?;
        let z = sol.rows(0, n).into_owned();
        let eq_duals = sol.rows(n, me).into_owned();
        let mut duals = DVector::zeros(mi);
        for (j, &i) in active.iter().enumerate() {
            duals[i] = sol[n + me + j];
        }

        let slack = &p.a_ineq * &z - &p.b_ineq;
        let worst_violation = (0..mi)
            .filter(|&i| !working[i] && p.b_ineq[i] < INF_BOUND)
            .map(|i| (i, slack[i]))
            .filter(|(_, s)| *s > feas_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = worst_violation {
            working[i] = true;
            last_added = Some(i);
            continue;
        }
        let worst_dual = active
            .iter()
            .map(|&i| (i, duals[i]))
            .filter(|(i, l)| *l < -dual_tol && Some(*i) != last_added)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .or_else(|| {
                active
                    .iter()
                    .map(|&i| (i, duals[i]))
                    .filter(|(_, l)| *l < -dual_tol)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            });
        if let Some((i, _)) = worst_dual {
            working[i] = false;
            last_added = None;
            continue;
        }
        return Some((z, duals, eq_duals));
    }
    None
}

enum DualOutcome {
    Solved(PrimalDual),
    Infeasible,
}

fn kkt_step(
    p: &QpProblem,
    active: &[usize],
    rhs_top: &DVector<f64>,
    rhs_bottom: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.num_vars();
    let me = p.num_eq();
    let k = me + active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    if let Some(ae) = &p.a_eq {
        kkt.view_mut((n, 0), (me, n)).copy_from(ae);
        kkt.view_mut((0, n), (n, me)).copy_from(&ae.transpose());
    }
    for (j, &i) in active.iter().enumerate() {
        let row = p.a_ineq.row(i);
        kkt.view_mut((n + me + j, 0), (1, n)).copy_from(&row);
        kkt.view_mut((0, n + me + j), (n, 1)).copy_from(&row.transpose());
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(rhs_top);
    rhs.rows_mut(n, k).copy_from(rhs_bottom);
    let sol = solve_symmetric(&kkt, &rhs)?;
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Dual active-set method (Goldfarb-Idnani) for strictly convex problems.
///
/// Starts from the equality-constrained minimizer and adds the most violated
/// inequality one at a time, stepping along the dual ray and dropping
/// constraints whose multipliers reach zero. Every iterate is dual feasible,
/// so the first primal-feasible iterate is optimal.
fn dual_active_set(p: &QpProblem, scale: f64) -> Option<DualOutcome> {
    let n = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();
    p.h.clone().cholesky()?;
    let feas_tol = 1e-11 * scale;
    let b_eq = p.b_eq.clone().unwrap_or_else(|| DVector::zeros(me));
    let (mut z, eq_part) = kkt_step(p, &[], &(-&p.q), &b_eq)?;
    let mut eq_duals = eq_part;
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let max_iter = 10 * (mi + n) + 50;

    let mut pending: Option<(usize, f64)> = None;
    for _ in 0..max_iter {
        let (pi, mut lp) = match pending.take() {
            Some(x) => x,
            None => {
                let slack = &p.a_ineq * &z - &p.b_ineq;
                let worst = (0..mi)
                    .filter(|i| !active.contains(i) && p.b_ineq[*i] < INF_BOUND)
                    .map(|i| (i, slack[i]))
                    .filter(|(_, s)| *s > feas_tol)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    None => {
                        let mut duals = DVector::zeros(mi);
                        for (j, &i) in active.iter().enumerate() {
                            duals[i] = lambda[j];
                        }
                        return Some(DualOutcome::Solved((z, duals, eq_duals)));
                    }
                    Some((i, _)) => (i, 0.0),
                }
            }
        };
        let a_p = p.a_ineq.row(pi).transpose();
        let (dz, dmult) = kkt_step(p, &active, &(-&a_p), &DVector::zeros(me + active.len()))?;
        let dr = dmult.rows(me, active.len()).into_owned();
        let de = dmult.rows(0, me).into_owned();

        let curvature = a_p.dot(&dz);
        let violation = a_p.dot(&z) - p.b_ineq[pi];
        let full = if dz.amax() > 1e-14 * (1.0 + a_p.amax()) && curvature < 0.0 {
            violation / -curvature
        } else {
            f64::INFINITY
        };
        let mut partial = f64::INFINITY;
        let mut blocking = None;
        for (j, r) in dr.iter().enumerate() {
            if *r < 0.0 {
                let t = lambda[j] / -r;
                if t < partial {
                    partial = t;
                    blocking = Some(j);
                }
            }
        }
        let t = full.min(partial);
        if !t.is_finite() {
            return Some(DualOutcome::Infeasible);
        }
        z += &dz * t;
        eq_duals += &de * t;
        for (j, r) in dr.iter().enumerate() {
            lambda[j] += t * r;
        }
        lp += t;
        if full <= partial {
            active.push(pi);
            lambda.push(lp);
        } else {
            let j = blocking.expect("partial step has a blocking constraint");
            active.remove(j);
            lambda.remove(j);
            pending = Some((pi, lp));
        }
    }
    None
}

/// Solves the (possibly rank-deficient) KKT system with LU and one round of
/// iterative refinement, falling back to an SVD least-squares solve.
fn solve_symmetric(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = k.clone().full_piv_lu();
    if let Some(mut x) = lu.solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            for _ in 0..2 {
                let r = rhs - k * &x;
                if let Some(dx) = lu.solve(&r) {
                    x += dx;
                }
            }
            let res = (rhs - k * &x).amax();
            if res <= 1e-9 * (1.0 + rhs.amax()) {
                return Some(x);
            }
        }
    }
    let svd = k.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    svd.solve(rhs, tol).ok()
}

/// Result of a linear program `max c'z s.t. A z <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub point: DVector<f64>,
    pub status: QpStatus,
}

/// Box used to detect unbounded linear programs.
pub const LP_UNBOUNDED_GUARD: f64 = 1e6;

/// Maximizes `c'z` over `{z : A z <= b}` with a `1e-8 I` regularization of
/// the QP engine. A variable reaching the `1e6` guard box reports
/// [`QpStatus::Unbounded`].
pub fn solve_lp(
    solver: &mut QpSolver,
    c: &DVector<f64>,
    a_ineq: &DMatrix<f64>,
    b_ineq: &DVector<f64>,
) -> Result<LpSolution, Error> {
    const REG: f64 = 1e-8;
    let n = c.len();
    if a_ineq.ncols() != n || a_ineq.nrows() != b_ineq.len() {
        return Err(Error::DimensionMismatch("LP constraint shape".into()));
    }
    let m = a_ineq.nrows();
    let mut a = DMatrix::zeros(m + 2 * n, n);
    let mut b = DVector::zeros(m + 2 * n);
    a.rows_mut(0, m).copy_from(a_ineq);
    b.rows_mut(0, m).copy_from(b_ineq);
    for i in 0..n {
        a[(m + 2 * i, i)] = 1.0;
        a[(m + 2 * i + 1, i)] = -1.0;
        b[m + 2 * i] = LP_UNBOUNDED_GUARD;
        b[m + 2 * i + 1] = LP_UNBOUNDED_GUARD;
    }
    let problem = QpProblem::new(DMatrix::identity(n, n) * REG, -c, a, b)?;
    let saved = solver.settings;
    solver.settings.warm_start = false;
    let mut result = solver.solve(&problem);
    for budget in [10, 50] {
        match &result {
            Ok(s) if s.status == QpStatus::MaxIter => {
                solver.settings.max_iter = saved.max_iter * budget;
                result = solver.solve(&problem);
            }
            _ => break,
        }
    }
    solver.settings = saved;
    let sol = result?;
    let status = match sol.status {
        QpStatus::Optimal => {
            let guard_hit = sol.z.iter().any(|v| v.abs() >= LP_UNBOUNDED_GUARD * (1.0 - 1e-9));
            if guard_hit {
                QpStatus::Unbounded
            } else {
                QpStatus::Optimal
            }
        }
        other => other,
    };
    let value = match status {
        QpStatus::Unbounded => f64::INFINITY,
        QpStatus::Infeasible => f64::NEG_INFINITY,
        _ => c.dot(&sol.z),
    };
    Ok(LpSolution {
        value,
        point: sol.z,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(h: f64, q: f64, a: &[f64], b: &[f64]) -> QpProblem {
        QpProblem::new(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, q),
            DMatrix::from_column_slice(a.len(), 1, a),
            DVector::from_column_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn active_bound_with_dual() {
        // min z^2 s.t. z <= -1: stationarity 2z + lambda = 0 at z = -1.
        let p = scalar(2.0, 0.0, &[1.0], &[-1.0]);
        let sol = QpSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z[0], -1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.duals[0], 2.0, epsilon = 1e-9);
        assert!(sol.kkt.max() < 1e-8);
    }

    #[test]
    fn unconstrained_parabola() {
        // (z - 3)^2 = z^2 - 6z + 9
        let p = QpProblem::unconstrained(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, -6.0))
            .unwrap();
        let sol = QpSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let u_nom = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let p = QpProblem::new(
            DMatrix::identity(3, 3) * 2.0,
            -&u_nom * 2.0,
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, -1.0]),
            DVector::from_vec(vec![5.0, 5.0]),
        )
        .unwrap();
        let sol = QpSolver::default().solve(&p).unwrap();
        assert!((sol.z - u_nom).amax() < 1e-10);
        assert!(sol.duals.amax() < 1e-10);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let p = scalar(1.0, 0.0, &[1.0, -1.0], &[0.0, -1.0]);
        let sol = QpSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn equality_constraint() {
        // min x^2 + y^2 s.t. x + y = 2 -> (1, 1)
        let p = QpProblem::unconstrained(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2))
            .unwrap()
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 2.0))
            .unwrap();
        let sol = QpSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.z[1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.eq_duals[0], -2.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = QpProblem::new(
            DMatrix::from_element(2, 2, 1.0),
            DVector::zeros(3),
            DMatrix::zeros(0, 3),
            DVector::zeros(0),
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch(_))));
        let indefinite = QpProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            QpSolver::default().solve(&indefinite),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        let asym = QpProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(QpSolver::default().solve(&asym).is_err());
    }

    #[test]
    fn lp_simple_bound() {
        let mut s = QpSolver::default();
        let r = solve_lp(
            &mut s,
            &DVector::from_element(1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 5.0),
        )
        .unwrap();
        assert_eq!(r.status, QpStatus::Optimal);
        assert_relative_eq!(r.value, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn lp_empty_polytope() {
        let mut s = QpSolver::default();
        let r = solve_lp(
            &mut s,
            &DVector::from_element(1, 1.0),
            &DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            &DVector::from_vec(vec![0.0, -1.0]),
        )
        .unwrap();
        assert_eq!(r.status, QpStatus::Infeasible);
    }

    #[test]
    fn lp_unbounded_direction() {
        // max p s.t. u + p <= 1: take u -> -inf.
        let mut s = QpSolver::default();
        let r = solve_lp(
            &mut s,
            &DVector::from_vec(vec![0.0, 1.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(r.status, QpStatus::Unbounded);
        assert!(r.value.is_infinite());
    }

    #[test]
    fn lp_two_dimensional_vertex() {
        // max x + y s.t. x <= 2, y <= 3, x + 2y <= 7 -> (2, 2.5), value 4.5
        let mut s = QpSolver::default();
        let r = solve_lp(
            &mut s,
            &DVector::from_vec(vec![1.0, 1.0]),
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 2.0]),
            &DVector::from_vec(vec![2.0, 3.0, 7.0]),
        )
        .unwrap();
        assert_eq!(r.status, QpStatus::Optimal);
        assert_relative_eq!(r.value, 4.5, epsilon = 1e-6);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let p = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        )
        .unwrap();
        let mut warm = QpSolver::default();
        let first = warm.solve(&p).unwrap();
        let second = warm.solve(&p).unwrap();
        let cold = QpSolver::default().solve(&p).unwrap();
        assert!((second.z - &cold.z).amax() < 1e-9);
        assert!((first.z - cold.z).amax() < 1e-9);
        assert!(second.iterations <= first.iterations);
    }
}
