//! Dense convex quadratic programming.
//!
//! Problems are written as
//!
//! ```text
//! minimise   xᵀQx + cᵀx
//! subject to Aeq·x + beq = 0
//!            Aineq·x + bineq ≤ 0
//! ```
//!
//! Note the objective has **no ½ factor**: the gradient is `2Qx + c` and the
//! stationarity condition reads `2Qx + c + Aeqᵀλ + Aineqᵀμ = 0` with `μ ≥ 0`.
//!
//! The solver is a primal active-set method with an internal phase-1 linear
//! program. It reports the exact active set, which the critical-region code
//! consumes directly.

mod active_set;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{greedy_independent_rows, inf_norm, lstsq, select_rows};

use active_set::{Data, Outcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {what} has shape {got:?}, expected {expected:?}")]
    Dimension {
        what: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("quadratic term is singular; closed-form dual is undefined")]
    SingularQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem in `n` variables.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)] + self.c.dot(x)
    }

    /// `2Qx + c`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x * 2.0 + &self.c
    }

    /// Inequality values `Aineq·x + bineq`.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_ineq * x + &self.b_ineq
    }

    pub fn eq_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_eq * x + &self.b_eq
    }

    /// `2Qx + c + Aeqᵀλ + Aineqᵀμ`.
    pub fn stationarity(&self, x: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        self.gradient(x) + self.a_eq.transpose() * lambda + self.a_ineq.transpose() * mu
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.c.len();
        let check = |what, m: &DMatrix<f64>, rows: usize| {
            if m.ncols() != n || m.nrows() != rows {
                Err(QpError::Dimension {
                    what,
                    got: m.shape(),
                    expected: (rows, n),
                })
            } else {
                Ok(())
            }
        };
        check("Q", &self.q, n)?;
        check("Aeq", &self.a_eq, self.b_eq.len())?;
        check("Aineq", &self.a_ineq, self.b_ineq.len())?;
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.q.as_slice()) {
            return Err(QpError::NonFinite("Q"));
        }
        if !finite(self.c.as_slice()) {
            return Err(QpError::NonFinite("c"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(self.b_eq.as_slice()) {
            return Err(QpError::NonFinite("equalities"));
        }
        if !finite(self.a_ineq.as_slice()) || !finite(self.b_ineq.as_slice()) {
            return Err(QpError::NonFinite("inequalities"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// KKT tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Constraint `j` is reported active iff `|(Aineq·x + bineq)_j| ≤ activity·(1 + |bineq_j|)`.
    pub activity_threshold: f64,
    /// Largest normalized violation accepted as feasible.
    pub feasibility: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 5000,
            activity_threshold: 1e-7,
            feasibility: FEAS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    /// Sorted inequality indices satisfied with equality (activity threshold).
    pub active_set: Vec<usize>,
    /// Sorted inequality indices of the solver's final working set; always
    /// linearly independent and carrying the nonzero multipliers.
    pub working_set: Vec<usize>,
    pub objective: f64,
    pub duality_gap: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Smallest achievable normalised violation when `status` is `Infeasible`.
    pub infeasibility: Option<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Outcome of a linear feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// `margin` is the largest normalised slack achieved (capped at 1); positive
    /// means the returned point is strictly interior.
    Feasible { point: DVector<f64>, margin: f64 },
    /// `violation` is the smallest achievable worst normalised violation.
    Infeasible { violation: f64 },
}

const FEAS_TOL: f64 = 1e-9;

fn row_norms(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let n = a.row(i).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect()
}

fn max_normalized_violation(a: &DMatrix<f64>, b: &DVector<f64>, norms: &[f64], x: &DVector<f64>) -> f64 {
    let v = a * x + b;
    v.iter()
        .zip(norms)
        .fold(f64::NEG_INFINITY, |acc, (vi, ni)| acc.max(vi / ni))
}

/// Independent subset of equality rows, or `None` when the system is inconsistent.
struct ReducedEq {
    rows: Vec<usize>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

fn reduce_equalities(problem: &QpProblem) -> ReducedEq {
    let n = problem.dim();
    let order: Vec<usize> = (0..problem.a_eq.nrows()).collect();
    let rows = greedy_independent_rows(&DMatrix::zeros(0, n), &problem.a_eq, &order, 1e-12);
    let a = select_rows(&problem.a_eq, &rows);
    let b = DVector::from_fn(rows.len(), |i, _| problem.b_eq[rows[i]]);
    ReducedEq { rows, a, b }
}

/// Minimises the worst normalised violation `t` subject to the equalities and
/// `a_j x + b_j ≤ ‖a_j‖ t`, with `t ≥ -cap`. Returns `(x, t)`.
fn phase_one(
    a_eq: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    cap: f64,
    opts: &QpOptions,
) -> Option<(DVector<f64>, f64)> {
    let n = x0.len();
    let m = a.nrows();
    let norms = row_norms(a);
    let t0 = max_normalized_violation(a, b, &norms, x0).max(-cap);
    let np = n + 1;
    let mut g = DMatrix::zeros(m + 1, np);
    let mut h = DVector::zeros(m + 1);
    for j in 0..m {
        for k in 0..n {
            g[(j, k)] = a[(j, k)];
        }
        g[(j, n)] = -norms[j];
        h[j] = b[j];
    }
    g[(m, n)] = -1.0;
    h[m] = -cap;
    let mut aeq = DMatrix::zeros(a_eq.nrows(), np);
    if a_eq.nrows() > 0 {
        aeq.view_mut((0, 0), (a_eq.nrows(), n)).copy_from(a_eq);
    }
    let q = DMatrix::zeros(np, np);
    let mut c = DVector::zeros(np);
    c[n] = 1.0;
    let pn = row_norms(&g);
    let data = Data {
        q: &q,
        c: &c,
        a_eq: &aeq,
        g: &g,
        h: &h,
        row_norms: &pn,
    };
    let mut start = DVector::zeros(np);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = t0;
    let it = active_set::iterate(&data, start, opts.tolerance, opts.max_iter);
    match it.outcome {
        Outcome::Optimal => {
            let x = it.x.rows(0, n).into_owned();
            // Report the true worst violation rather than the LP's t.
            let t = max_normalized_violation(a, b, &norms, &x).max(-cap);
            Some((x, t))
        }
        _ => None,
    }
}

fn project_onto_equalities(eq: &ReducedEq, x: &DVector<f64>) -> DVector<f64> {
    if eq.a.nrows() == 0 {
        return x.clone();
    }
    let r = &eq.a * x + &eq.b;
    x - lstsq(&eq.a, &r)
}

/// Solve a convex QP from scratch (phase-1 is performed internally).
pub fn solve(problem: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    solve_from(problem, None, opts)
}

/// Solve starting the search at `start` (projected onto the equalities; phase-1
/// runs only when that point violates an inequality).
pub(crate) fn solve_from(
    problem: &QpProblem,
    start: Option<&DVector<f64>>,
    opts: &QpOptions,
) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let m = problem.a_ineq.nrows();
    let eq = reduce_equalities(problem);

    let origin = DVector::zeros(n);
    let x0 = project_onto_equalities(&eq, start.unwrap_or(&origin));
    let eq_scale = 1.0 + inf_norm(&problem.b_eq);
    let eq_res = inf_norm(&problem.eq_residual(&x0));
    if eq_res > 1e-9 * eq_scale {
        return Ok(infeasible(problem, x0, eq_res));
    }

    let norms = row_norms(&problem.a_ineq);
    for j in 0..m {
        if problem.a_ineq.row(j).norm() == 0.0 && problem.b_ineq[j] > opts.feasibility {
            return Ok(infeasible(problem, x0, problem.b_ineq[j]));
        }
    }
    let mut x = x0;
    if m > 0 && max_normalized_violation(&problem.a_ineq, &problem.b_ineq, &norms, &x) > opts.feasibility {
        match phase_one(&eq.a, &problem.a_ineq, &problem.b_ineq, &x, 0.0, opts) {
            Some((x1, t)) if t <= opts.feasibility => x = x1,
            Some((x1, t)) => return Ok(infeasible(problem, x1, t)),
            None => {
                return Ok(QpSolution {
                    status: QpStatus::MaxIter,
                    ..infeasible(problem, x, f64::NAN)
                })
            }
        }
    }

    let data = Data {
        q: &problem.q,
        c: &problem.c,
        a_eq: &eq.a,
        g: &problem.a_ineq,
        h: &problem.b_ineq,
        row_norms: &norms,
    };
    let it = active_set::iterate(&data, x, opts.tolerance, opts.max_iter);

    let mut lambda = DVector::zeros(problem.a_eq.nrows());
    for (k, &r) in eq.rows.iter().enumerate() {
        lambda[r] = it.lambda[k];
    }
    let mut mu = DVector::zeros(m);
    for (k, &j) in it.working.iter().enumerate() {
        mu[j] = it.mu_working[k];
    }
    let mut working_set = it.working.clone();
    working_set.sort_unstable();

    let slacks = problem.slacks(&it.x);
    let active_set: Vec<usize> = (0..m)
        .filter(|&j| slacks[j].abs() <= opts.activity_threshold * (1.0 + problem.b_ineq[j].abs()))
        .collect();

    let status = match it.outcome {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::Unbounded => QpStatus::Unbounded,
        Outcome::MaxIter => QpStatus::MaxIter,
    };
    let objective = problem.objective(&it.x);
    let duality_gap = if status == QpStatus::Optimal {
        let dual = dual_objective(problem, &lambda, &mu)
            .unwrap_or_else(|_| lagrangian(problem, &it.x, &lambda, &mu));
        (objective - dual).max(0.0)
    } else {
        f64::NAN
    };
    Ok(QpSolution {
        x: it.x,
        lambda,
        mu,
        active_set,
        working_set,
        objective,
        duality_gap,
        status,
        iterations: it.iterations,
        infeasibility: None,
    })
}

fn infeasible(problem: &QpProblem, x: DVector<f64>, violation: f64) -> QpSolution {
    QpSolution {
        objective: problem.objective(&x),
        x,
        lambda: DVector::zeros(problem.a_eq.nrows()),
        mu: DVector::zeros(problem.a_ineq.nrows()),
        active_set: Vec::new(),
        working_set: Vec::new(),
        duality_gap: f64::NAN,
        status: QpStatus::Infeasible,
        iterations: 0,
        infeasibility: Some(violation),
    }
}

fn lagrangian(problem: &QpProblem, x: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    problem.objective(x) + lambda.dot(&problem.eq_residual(x)) + mu.dot(&problem.slacks(x))
}

/// Closed-form Lagrange dual for positive definite `Q`:
///
/// `D(λ, μ) = -¼ wᵀQ⁻¹w + beqᵀλ + bineqᵀμ`, with `w = c + Aeqᵀλ + Aineqᵀμ`.
pub fn dual_objective(problem: &QpProblem, lambda: &DVector<f64>, mu: &DVector<f64>) -> Result<f64, QpError> {
    let chol = Cholesky::new(problem.q.clone()).ok_or(QpError::SingularQuadratic)?;
    let w = &problem.c + problem.a_eq.transpose() * lambda + problem.a_ineq.transpose() * mu;
    let qinv_w = chol.solve(&w);
    Ok(-0.25 * w.dot(&qinv_w) + problem.b_eq.dot(lambda) + problem.b_ineq.dot(mu))
}

/// Finds a point of `{x | a·x + b ≤ 0}` maximising the smallest normalised slack.
pub fn linear_feasibility(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Feasibility, QpError> {
    if a.nrows() != b.len() {
        return Err(QpError::Dimension {
            what: "A",
            got: a.shape(),
            expected: (b.len(), a.ncols()),
        });
    }
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(Feasibility::Feasible {
            point: DVector::zeros(n),
            margin: 1.0,
        });
    }
    let opts = QpOptions::default();
    let x0 = DVector::zeros(n);
    match phase_one(&DMatrix::zeros(0, n), a, b, &x0, 1.0, &opts) {
        Some((x, t)) if t <= FEAS_TOL => Ok(Feasibility::Feasible { point: x, margin: -t }),
        Some((_, t)) => Ok(Feasibility::Infeasible { violation: t }),
        None => Ok(Feasibility::Infeasible { violation: f64::NAN }),
    }
}
