//! Critical region projection: the coordinator loop over boundary states.
//!
//! Each iteration sends `θ̄⁽ᵗ⁾` to the areas, collects one critical region per
//! area, minimizes the summed quadratic cost over the intersection of those
//! regions and Θ, and either stops (small region multipliers) or steps along
//! the projected anti-gradient into a neighbouring region.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{greedy_independent_rows, lstsq, null_space, select_rows, vcat, vstack};
use crate::mpqp::{critical_region, solve_local, CriticalRegion, LocalSolution, MpqpError, RowOrigin};
use crate::netmodel::{boundary_polytope, build_local_qp, BoundaryPolytope, LocalQpData, MultiAreaSystem, NetError};
use crate::qp::{self, QpError, QpOptions, QpProblem, QpStatus};

/// Halvings allowed when a step leaves Θ.
const MAX_HALVINGS: usize = 30;
/// Step rescalings allowed per iteration by the descent safeguard.
const PROBE_BUDGET: usize = 30;
const PROJECTED_GRAD_TOL: f64 = 1e-10;
/// Relative to the largest marginal cost among the areas.
const CERTIFICATE_TOL: f64 = 1e-7;
/// Rows within this slack enter the certificate's multiplier sets, so a
/// boundary state a rounding error away from a kink still sees both sides.
/// Feasibility tolerance of the master on unit-norm rows.
const MASTER_FEAS_TOL: f64 = 1e-12;
const EPS_ACTIVE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CrpError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Local(#[from] MpqpError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("master problem infeasible at iteration {0}")]
    MasterInfeasible(usize),
    #[error("master problem stopped with status {0:?}")]
    MasterNotOptimal(QpStatus),
    #[error("step underflow: no Θ-feasible step after {MAX_HALVINGS} halvings")]
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpConfig {
    pub epsilon: f64,
    pub epsilon1: f64,
    pub alpha: f64,
    pub max_iter: usize,
    pub initial_theta: Option<DVector<f64>>,
}

impl Default for CrpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            epsilon1: 1e-6,
            alpha: 1e-4,
            max_iter: 200,
            initial_theta: None,
        }
    }
}

impl CrpConfig {
    pub fn validate(&self) -> Result<(), CrpError> {
        for (name, v) in [("epsilon", self.epsilon), ("epsilon1", self.epsilon1), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CrpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(CrpError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpStatus {
    Converged,
    MaxIter,
    Infeasible,
    StepUnderflow,
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub theta_star: DVector<f64>,
    /// Multipliers on the stacked region rows (rows scaled to unit norm).
    pub mu_bar: DVector<f64>,
    /// Multipliers on the rows of Θ (unit-norm scaling).
    pub nu_bar: DVector<f64>,
    pub gap: f64,
    /// `θ̄ᵀĀ_Σθ̄ + b̄_Σᵀθ̄ + Σc̄` at `theta_star`, without regularization.
    pub objective: f64,
    pub regularized: bool,
    /// Rows of Θ active at `theta_star`.
    pub active_boundary: Vec<usize>,
    pub a_sum: DMatrix<f64>,
    pub b_sum: DVector<f64>,
}

impl MasterSolution {
    pub fn gradient(&self) -> DVector<f64> {
        &self.a_sum * &self.theta_star * 2.0 + &self.b_sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// `‖μ̄‖² < ε`.
    Multipliers,
    /// Vanishing projected gradient with nonnegative boundary multipliers.
    ProjectedGradient,
    /// Vanishing min-norm element of the summed local subdifferential plus the normal cone of Θ.
    Subgradient,
}

impl std::fmt::Display for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopRule::Multipliers => "multiplier",
            StopRule::ProjectedGradient => "projected-gradient",
            StopRule::Subgradient => "subgradient",
        })
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub t: usize,
    pub theta: DVector<f64>,
    pub signatures: Vec<Vec<usize>>,
    pub theta_star: DVector<f64>,
    pub master_cost: f64,
    pub mu_norm_sq: f64,
    pub nu_bar: DVector<f64>,
    pub n_active_boundary: usize,
    pub floats_up: usize,
    pub floats_down: usize,
    /// (rows before, rows after) redundancy removal per area.
    pub region_rows: Vec<(usize, usize)>,
    pub regularized: bool,
    pub gap: f64,
    pub gap_exceeded: bool,
    /// Step leaving this iteration, if one was taken.
    pub step: Option<f64>,
    /// Probes rejected by the descent safeguard before this record.
    pub rejected_probes: usize,
    /// Rule that ended the run at this record.
    pub stop: Option<StopRule>,
}

#[derive(Debug, Clone)]
pub struct CrpRun {
    pub status: CrpStatus,
    pub iterations: Vec<IterationRecord>,
    pub final_theta: DVector<f64>,
    /// Total cost in $/h from local re-solves at `final_theta`; NaN when no
    /// iteration completed.
    pub final_cost: f64,
    pub final_generation: Vec<DVector<f64>>,
    pub step_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl CrpRun {
    pub fn floats_up(&self) -> usize {
        self.iterations.iter().map(|r| r.floats_up).sum()
    }

    pub fn floats_down(&self) -> usize {
        self.iterations.iter().map(|r| r.floats_down).sum()
    }
}

fn unit_rows(s: &DMatrix<f64>, st: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = s.clone();
    let mut b = st.clone();
    for r in 0..s.nrows() {
        let n = s.row(r).norm();
        if n > 0.0 {
            a.row_mut(r).scale_mut(1.0 / n);
            b[r] /= n;
        }
    }
    (a, b)
}

pub fn master_solve(
    regions: &[CriticalRegion],
    theta_poly: &BoundaryPolytope,
    start: &DVector<f64>,
) -> Result<MasterSolution, CrpError> {
    let dim = theta_poly.h.ncols();
    let mut a_sum = DMatrix::zeros(dim, dim);
    let mut b_sum = DVector::zeros(dim);
    let mut c_sum = 0.0;
    let mut region_rows = 0;
    for r in regions {
        a_sum += &r.a_bar;
        b_sum += &r.b_bar;
        c_sum += r.c_bar;
        region_rows += r.n_rows();
    }
    let mut blocks: Vec<&DMatrix<f64>> = regions.iter().map(|r| &r.s_bar).collect();
    blocks.push(&theta_poly.h);
    let mut offsets: Vec<&DVector<f64>> = regions.iter().map(|r| &r.s_tilde).collect();
    offsets.push(&theta_poly.h_tilde);
    let s = vstack(&blocks, dim);
    let st = vcat(&offsets);
    let (s, st) = unit_rows(&s, &st);

    let eig = SymmetricEigen::new(a_sum.clone()).eigenvalues;
    let max_eig = eig.iter().fold(0.0_f64, |m, &e| m.max(e));
    let min_eig = eig.iter().fold(f64::INFINITY, |m, &e| m.min(e));
    let regularized = dim > 0 && min_eig <= 1e-12 * max_eig.max(1.0);
    let mut q = a_sum.clone();
    if regularized {
        let delta = 1e-10 * (a_sum.trace() / dim as f64).max(1.0);
        for i in 0..dim {
            q[(i, i)] += delta;
        }
    }
    let problem = QpProblem::new(q, b_sum.clone()).with_inequalities(s, st);
    // rows are unit-norm here; the local check applies to raw rows
    let opts = QpOptions {
        feasibility: MASTER_FEAS_TOL,
        ..QpOptions::default()
    };
    let sol = qp::solve_from(&problem, Some(start), &opts)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(CrpError::MasterInfeasible(0)),
        other => return Err(CrpError::MasterNotOptimal(other)),
    }
    let theta_star = sol.x.clone();
    let objective = theta_star.dot(&(&a_sum * &theta_star)) + b_sum.dot(&theta_star) + c_sum;
    let active_boundary = sol
        .active_set
        .iter()
        .filter(|&&j| j >= region_rows)
        .map(|&j| j - region_rows)
        .collect();
    Ok(MasterSolution {
        mu_bar: sol.mu.rows(0, region_rows).into_owned(),
        nu_bar: sol.mu.rows(region_rows, theta_poly.n_rows()).into_owned(),
        gap: sol.duality_gap,
        theta_star,
        objective,
        regularized,
        active_boundary,
        a_sum,
        b_sum,
    })
}

pub fn check_stop(mu_bar: &DVector<f64>, epsilon: f64) -> bool {
    mu_bar.norm_squared() < epsilon
}

/// Orthogonal projector onto the null space of the given rows, after keeping a
/// linearly independent subset in storage order.
pub fn projection_matrix(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rows.ncols();
    let order: Vec<usize> = (0..rows.nrows()).collect();
    let kept = greedy_independent_rows(&DMatrix::zeros(0, n), rows, &order, 1e-9);
    let eye = DMatrix::identity(n, n);
    if kept.is_empty() {
        return eye;
    }
    let a = select_rows(rows, &kept);
    let gram = &a * a.transpose();
    let chol = gram.cholesky().expect("independent rows give a positive definite Gram matrix");
    let p = eye - a.transpose() * chol.solve(&a);
    debug_assert!((&p * a.transpose()).amax() <= 1e-8 * (1.0 + a.amax()));
    p
}

#[derive(Debug, Clone)]
pub struct Step {
    pub theta: DVector<f64>,
    pub step: f64,
}

/// `θ̄* − α·P·∇`, halving `α` until the candidate lies in Θ.
pub fn project_step(
    theta_star: &DVector<f64>,
    gradient: &DVector<f64>,
    p: &DMatrix<f64>,
    alpha: f64,
    theta_poly: &BoundaryPolytope,
) -> Result<Step, CrpError> {
    let d = -(p * gradient);
    let mut step = alpha;
    for _ in 0..=MAX_HALVINGS {
        let cand = theta_star + &d * step;
        if theta_poly.contains(&cand, 1e-9) {
            return Ok(Step { theta: cand, step });
        }
        step *= 0.5;
    }
    Err(CrpError::StepUnderflow)
}

/// `2 / max_k λ_max(Ā_Σ,(k))` over the given summed curvature matrices;
/// `None` when none has positive curvature.
pub fn step_bound_diagnostic(a_sums: &[DMatrix<f64>]) -> Option<f64> {
    let m = a_sums
        .iter()
        .map(|a| SymmetricEigen::new(a.clone()).eigenvalues.iter().fold(0.0_f64, |m, &e| m.max(e)))
        .fold(0.0_f64, f64::max);
    (m > 0.0).then(|| 2.0 / m)
}

/// Floats sent up by one area for one region under symmetric packing of `Ā`.
pub fn region_floats(rows: usize, dim: usize) -> usize {
    rows * (dim + 1) + dim * (dim + 1) / 2 + dim
}

enum Direction {
    Descent(DVector<f64>),
    Corner,
}

/// Projected anti-gradient with the given boundary rows treated as active,
/// dropping rows whose multiplier estimate is negative.
fn descent_direction(grad: &DVector<f64>, rows: &DMatrix<f64>) -> Direction {
    let n = grad.len();
    let tol = PROJECTED_GRAD_TOL * grad.norm().max(1.0);
    let order: Vec<usize> = (0..rows.nrows()).collect();
    let mut kept = greedy_independent_rows(&DMatrix::zeros(0, n), rows, &order, 1e-9);
    loop {
        let a = select_rows(rows, &kept);
        let p = projection_matrix(&a);
        let d = -(&p * grad);
        if d.norm() > tol {
            return Direction::Descent(d);
        }
        if kept.is_empty() {
            return Direction::Corner;
        }
        let gram = &a * a.transpose();
        let w = -gram.cholesky().expect("independent rows").solve(&(&a * grad));
        let (worst, wv) = w
            .iter()
            .copied()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if wv >= -tol {
            return Direction::Corner;
        }
        kept.remove(worst);
    }
}

/// Stacked unit-norm rows treated as boundary at `θ̄*`: the active rows of Θ
/// and the active pinned rows of every region.
fn boundary_rows(master: &MasterSolution, regions: &[CriticalRegion], theta_poly: &BoundaryPolytope) -> DMatrix<f64> {
    let dim = master.theta_star.len();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for &j in &master.active_boundary {
        let r = theta_poly.h.row(j).transpose();
        let n = r.norm();
        if n > 0.0 {
            rows.push(r / n);
        }
    }
    for reg in regions {
        let vals = &reg.s_bar * &master.theta_star + &reg.s_tilde;
        for (k, o) in reg.origins.iter().enumerate() {
            if let RowOrigin::Inactive { pinned: true, .. } = o {
                let r = reg.s_bar.row(k).transpose();
                let n = r.norm();
                if n > 0.0 && vals[k] / n >= -1e-9 {
                    rows.push(r / n);
                }
            }
        }
    }
    DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c])
}

/// Pieces of the min-norm subgradient problem contributed by one area:
/// `v_i = F_i w_i + f_i` under `G_i w_i + q_i ≤ 0`.
struct SubgradientBlock {
    f_mat: DMatrix<f64>,
    f_vec: DVector<f64>,
    g_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
    /// Marginal-cost scale of the area.
    scale: f64,
}

impl SubgradientBlock {
    fn floats(&self) -> usize {
        self.f_mat.len() + self.f_vec.len() + self.g_mat.len() + self.q_vec.len()
    }
}

/// Parametrizes the local multiplier set at `theta`,
/// `{(λ, μ_A ≥ 0) | 2Ag + b + Mᵀλ + N_Aᵀμ_A = 0}`, and maps it to the
/// sensitivity `M̄ᵀλ + N̄_Aᵀμ_A`. `None` when the set looks empty numerically.
fn subgradient_block(data: &LocalQpData, sol: &LocalSolution, theta: &DVector<f64>) -> Option<SubgradientBlock> {
    let g = &sol.g_star;
    let slack = &data.n * g + &data.n_bar * theta + &data.n_tilde;
    let active: Vec<usize> = (0..data.n_rows())
        .filter(|&j| sol.mu[j] > 0.0 || slack[j] >= -EPS_ACTIVE * (1.0 + data.n_tilde[j].abs()))
        .collect();
    let ne = data.m.nrows();
    let nz = ne + active.len();
    let ng = data.n_gen();
    let mut e = DMatrix::zeros(ng, nz);
    e.view_mut((0, 0), (ng, ne)).copy_from(&data.m.transpose());
    let mut s = DMatrix::zeros(theta.len(), nz);
    s.view_mut((0, 0), (theta.len(), ne)).copy_from(&data.m_bar.transpose());
    for (k, &j) in active.iter().enumerate() {
        e.column_mut(ne + k).copy_from(&data.n.row(j).transpose());
        s.column_mut(ne + k).copy_from(&data.n_bar.row(j).transpose());
    }
    let marginal = &data.a * g * 2.0 + &data.b;
    let rhs = -&marginal;
    let scale = marginal.amax().max(1.0);
    let z0 = lstsq(&e, &rhs);
    if (&e * &z0 - &rhs).amax() > 1e-6 * scale {
        return None;
    }
    let order: Vec<usize> = (0..ng).collect();
    let kept = greedy_independent_rows(&DMatrix::zeros(0, nz), &e, &order, 1e-9);
    let z = null_space(&select_rows(&e, &kept), nz);
    let mu_tol = 1e-9 * (1.0 + z0.amax());
    let g_mat = -z.rows(ne, active.len()).into_owned();
    let q_vec = -z0.rows(ne, active.len()).into_owned() - DVector::from_element(active.len(), mu_tol);
    Some(SubgradientBlock {
        f_mat: &s * &z,
        f_vec: &s * &z0,
        g_mat,
        q_vec,
        scale,
    })
}

/// Smallest vector of `∂J(θ̄) + N_Θ(θ̄)` and the tolerance below which it
/// certifies optimality.
fn min_norm_subgradient(blocks: &[SubgradientBlock], theta_poly: &BoundaryPolytope, theta: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let dim = theta.len();
    let vals = theta_poly.values(theta);
    let theta_rows: Vec<DVector<f64>> = (0..theta_poly.n_rows())
        .filter_map(|j| {
            let h = theta_poly.h.row(j).transpose();
            let n = h.norm();
            (n > 0.0 && vals[j] / n >= -EPS_ACTIVE).then(|| h / n)
        })
        .collect();
    let nvar: usize = blocks.iter().map(|b| b.f_mat.ncols()).sum::<usize>() + theta_rows.len();
    let nineq: usize = blocks.iter().map(|b| b.g_mat.nrows()).sum::<usize>() + theta_rows.len();
    let mut f_mat = DMatrix::zeros(dim, nvar);
    let mut f_vec = DVector::zeros(dim);
    let mut g_mat = DMatrix::zeros(nineq, nvar);
    let mut q_vec = DVector::zeros(nineq);
    let (mut col, mut row) = (0, 0);
    for b in blocks {
        let k = b.f_mat.ncols();
        f_mat.view_mut((0, col), (dim, k)).copy_from(&b.f_mat);
        f_vec += &b.f_vec;
        g_mat.view_mut((row, col), (b.g_mat.nrows(), k)).copy_from(&b.g_mat);
        q_vec.rows_mut(row, b.q_vec.len()).copy_from(&b.q_vec);
        col += k;
        row += b.g_mat.nrows();
    }
    for h in &theta_rows {
        f_mat.column_mut(col).copy_from(h);
        g_mat[(row, col)] = -1.0;
        col += 1;
        row += 1;
    }
    let mut q = f_mat.transpose() * &f_mat;
    let delta = 1e-12 * (q.diagonal().amax()).max(1.0);
    for i in 0..nvar {
        q[(i, i)] += delta;
    }
    let c = f_mat.transpose() * &f_vec * 2.0;
    let problem = QpProblem::new(q, c).with_inequalities(g_mat, q_vec);
    let sol = qp::solve(&problem, &QpOptions::default()).ok()?;
    if sol.status != QpStatus::Optimal {
        return None;
    }
    let v = &f_mat * &sol.x + &f_vec;
    // v is a sum of per-area sensitivities that cancel at an optimum; measure
    // it against the largest of them
    let mut scale = blocks.iter().map(|b| b.scale).fold(1.0, f64::max);
    let mut col = 0;
    for b in blocks {
        let k = b.f_mat.ncols();
        let part = &b.f_mat * sol.x.rows(col, k) + &b.f_vec;
        scale = scale.max(part.norm());
        col += k;
    }
    let boundary = f_mat.columns(col, nvar - col) * sol.x.rows(col, nvar - col);
    scale = scale.max(boundary.norm());
    Some((v, CERTIFICATE_TOL * scale))
}

struct Probe {
    theta_star: DVector<f64>,
    /// Boundary state the master was built at; locally feasible.
    origin: DVector<f64>,
    direction: DVector<f64>,
    step: f64,
    objective: f64,
    redirected: bool,
}

impl Probe {
    fn point(&self) -> DVector<f64> {
        &self.theta_star + &self.direction * self.step
    }
}

enum Redirect {
    Certified,
    Moved,
    Exhausted,
}

type AreaResult = Result<(LocalSolution, CriticalRegion), MpqpError>;

struct Driver<'a> {
    datas: Vec<LocalQpData>,
    theta_poly: BoundaryPolytope,
    config: &'a CrpConfig,
    dim: usize,
    pending_up: usize,
    pending_down: usize,
    max_eig: f64,
}

impl Driver<'_> {
    fn solve_all(&mut self, theta: &DVector<f64>) -> Result<Vec<LocalSolution>, MpqpError> {
        self.pending_down += self.datas.len() * self.dim;
        let results: Vec<Result<LocalSolution, MpqpError>> =
            self.datas.par_iter().map(|d| solve_local(d, theta)).collect();
        results.into_iter().collect()
    }

    fn fan_out(&mut self, theta: &DVector<f64>) -> Result<Vec<CriticalRegion>, MpqpError> {
        self.pending_down += self.datas.len() * self.dim;
        let results: Vec<AreaResult> = self
            .datas
            .par_iter()
            .map(|d| {
                let s = solve_local(d, theta)?;
                let r = critical_region(d, &s);
                Ok((s, r))
            })
            .collect();
        let regions: Vec<CriticalRegion> = results
            .into_iter()
            .map(|r| r.map(|(_, reg)| reg))
            .collect::<Result<_, _>>()?;
        self.pending_up += regions.iter().map(|r| region_floats(r.n_rows(), self.dim)).sum::<usize>();
        Ok(regions)
    }

    fn alpha(&self) -> f64 {
        if self.max_eig > 0.0 {
            self.config.alpha.min(0.5 / self.max_eig)
        } else {
            self.config.alpha
        }
    }

    /// Tests `θ̄*` of the probe against the min-norm subgradient certificate
    /// and, if it fails, points the probe along the steepest descent direction.
    fn redirect(&mut self, p: &mut Probe) -> Redirect {
        if p.redirected {
            return Redirect::Exhausted;
        }
        // θ* can sit just outside a pinned facet; fall back to the iterate
        let sols = match self.solve_all(&p.theta_star) {
            Ok(s) => s,
            Err(_) => match self.solve_all(&p.origin) {
                Ok(s) => {
                    p.theta_star = p.origin.clone();
                    s
                }
                Err(_) => return Redirect::Exhausted,
            },
        };
        let blocks: Option<Vec<SubgradientBlock>> = self
            .datas
            .iter()
            .zip(&sols)
            .map(|(d, s)| subgradient_block(d, s, &p.theta_star))
            .collect();
        let Some(blocks) = blocks else {
            return Redirect::Exhausted;
        };
        self.pending_up += blocks.iter().map(SubgradientBlock::floats).sum::<usize>();
        let Some((v, tol)) = min_norm_subgradient(&blocks, &self.theta_poly, &p.theta_star) else {
            return Redirect::Exhausted;
        };
        if v.norm() <= tol {
            return Redirect::Certified;
        }
        p.direction = -v;
        p.step = self.alpha();
        p.redirected = true;
        let mut halvings = 0;
        while !self.theta_poly.contains(&p.point(), 1e-9) && halvings < MAX_HALVINGS {
            p.step *= 0.5;
            halvings += 1;
        }
        Redirect::Moved
    }
}

pub fn run_crp(system: &MultiAreaSystem, config: &CrpConfig) -> Result<CrpRun, CrpError> {
    config.validate()?;
    let dim = system.theta_dim();
    let datas: Vec<LocalQpData> = (0..system.areas.len())
        .map(|i| build_local_qp(system, i))
        .collect::<Result<_, _>>()?;
    let theta0 = config.initial_theta.clone().unwrap_or_else(|| DVector::zeros(dim));
    if theta0.len() != dim {
        return Err(CrpError::Config(format!(
            "initial theta has {} entries, boundary state has {dim}",
            theta0.len()
        )));
    }
    let theta_poly = boundary_polytope(system);
    theta_poly.check(&theta0)?;
    let mut drv = Driver {
        datas,
        theta_poly,
        config,
        dim,
        pending_up: 0,
        pending_down: 0,
        max_eig: 0.0,
    };

    let mut theta = theta0.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut history: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut a_sums: Vec<DMatrix<f64>> = Vec::new();
    let mut warnings = Vec::new();
    let mut rejected = 0usize;
    let mut last: Option<Probe> = None;
    let mut status = CrpStatus::MaxIter;
    let mut stop = None;

    while records.len() < config.max_iter {
        let regions = match drv.fan_out(&theta) {
            Ok(r) => r,
            Err(MpqpError::Infeasible { area_id, .. }) => {
                let Some(p) = last.as_mut() else {
                    warnings.push(format!("area `{area_id}` infeasible at the initial boundary state"));
                    status = CrpStatus::Infeasible;
                    break;
                };
                if rejected < PROBE_BUDGET {
                    rejected += 1;
                    p.step *= 0.5;
                    theta = p.point();
                    continue;
                }
                match drv.redirect(p) {
                    Redirect::Certified => {
                        stop = Some(StopRule::Subgradient);
                        status = CrpStatus::Converged;
                    }
                    Redirect::Moved => {
                        rejected = 0;
                        theta = p.point();
                        continue;
                    }
                    Redirect::Exhausted => {
                        warnings.push(format!("area `{area_id}` infeasible along every probe after iteration {}", records.len() - 1));
                        status = CrpStatus::Infeasible;
                    }
                }
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let master = match master_solve(&regions, &drv.theta_poly, &theta) {
            Ok(m) => m,
            // a probe can land where the regions only meet within round-off
            Err(CrpError::MasterInfeasible(_)) if last.is_some() && rejected < PROBE_BUDGET => {
                let p = last.as_mut().unwrap();
                rejected += 1;
                p.step *= 0.5;
                theta = p.point();
                continue;
            }
            Err(CrpError::MasterInfeasible(_)) => return Err(CrpError::MasterInfeasible(records.len())),
            Err(e) => return Err(e),
        };
        let sig: Vec<Vec<usize>> = regions.iter().map(|r| r.signature.clone()).collect();

        if let Some(p) = last.as_mut() {
            let decreased = master.objective < p.objective - 1e-12 * (1.0 + p.objective.abs());
            let same = history.last() == Some(&sig);
            if !decreased || history.contains(&sig) {
                if rejected < PROBE_BUDGET {
                    rejected += 1;
                    p.step *= if same { 2.0 } else { 0.5 };
                    let mut halvings = 0;
                    while !drv.theta_poly.contains(&p.point(), 1e-9) && halvings < MAX_HALVINGS {
                        p.step *= 0.5;
                        halvings += 1;
                    }
                    theta = p.point();
                    continue;
                }
                match drv.redirect(p) {
                    Redirect::Certified => {
                        stop = Some(StopRule::Subgradient);
                        status = CrpStatus::Converged;
                    }
                    Redirect::Moved => {
                        rejected = 0;
                        theta = p.point();
                        continue;
                    }
                    Redirect::Exhausted => {
                        warnings.push(format!(
                            "no descent from iteration {} after {PROBE_BUDGET} probes",
                            records.len() - 1
                        ));
                        status = CrpStatus::StepUnderflow;
                    }
                }
                break;
            }
        }

        let eig = SymmetricEigen::new(master.a_sum.clone()).eigenvalues;
        drv.max_eig = eig.iter().fold(drv.max_eig, |m, &e| m.max(e));
        a_sums.push(master.a_sum.clone());
        if master.regularized {
            log::debug!("iteration {}: master curvature regularized", records.len());
        }
        records.push(IterationRecord {
            t: records.len(),
            theta: theta.clone(),
            signatures: sig.clone(),
            theta_star: master.theta_star.clone(),
            master_cost: master.objective,
            mu_norm_sq: master.mu_bar.norm_squared(),
            nu_bar: master.nu_bar.clone(),
            n_active_boundary: master.active_boundary.len(),
            floats_up: drv.pending_up,
            floats_down: drv.pending_down,
            region_rows: regions.iter().map(|r| (r.rows_before_reduction, r.n_rows())).collect(),
            regularized: master.regularized,
            gap: master.gap,
            gap_exceeded: master.gap > config.epsilon1,
            step: None,
            rejected_probes: rejected,
            stop: None,
        });
        history.push(sig);
        drv.pending_up = 0;
        drv.pending_down = 0;
        rejected = 0;

        if check_stop(&master.mu_bar, config.epsilon) {
            stop = Some(StopRule::Multipliers);
            status = CrpStatus::Converged;
            break;
        }
        let rows = boundary_rows(&master, &regions, &drv.theta_poly);
        let mut probe = Probe {
            theta_star: master.theta_star.clone(),
            origin: theta.clone(),
            direction: DVector::zeros(dim),
            step: drv.alpha(),
            objective: master.objective,
            redirected: false,
        };
        match descent_direction(&master.gradient(), &rows) {
            Direction::Corner => {
                stop = Some(StopRule::ProjectedGradient);
                status = CrpStatus::Converged;
                break;
            }
            Direction::Descent(d) => {
                let eye = DMatrix::identity(dim, dim);
                match project_step(&master.theta_star, &(-&d), &eye, probe.step, &drv.theta_poly) {
                    Ok(s) => {
                        probe.direction = d;
                        probe.step = s.step;
                    }
                    Err(CrpError::StepUnderflow) => match drv.redirect(&mut probe) {
                        Redirect::Certified => {
                            stop = Some(StopRule::Subgradient);
                            status = CrpStatus::Converged;
                            break;
                        }
                        Redirect::Moved => {}
                        Redirect::Exhausted => {
                            warnings.push(format!("step underflow at iteration {}", records.len() - 1));
                            status = CrpStatus::StepUnderflow;
                            break;
                        }
                    },
                    Err(e) => return Err(e),
                }
            }
        }
        records.last_mut().unwrap().step = Some(probe.step);
        theta = probe.point();
        last = Some(probe);
    }

    if let (Some(rule), Some(r)) = (stop, records.last_mut()) {
        r.stop = Some(rule);
        r.step = None;
        if rule != StopRule::Multipliers {
            warnings.push(format!("terminated by the {rule} rule"));
        }
    }
    let mut final_theta = records.last().map_or_else(|| theta0.clone(), |r| r.theta_star.clone());
    let (final_cost, final_generation) = match records.last() {
        None => (f64::NAN, Vec::new()),
        Some(last) => match drv.solve_all(&final_theta) {
            Ok(v) => (v.iter().map(|s| s.cost).sum(), v.into_iter().map(|s| s.g_star).collect()),
            Err(e) => match drv.solve_all(&last.theta) {
                Ok(v) => {
                    warnings.push(format!("master point not locally feasible ({e}); reporting the last iterate"));
                    final_theta = last.theta.clone();
                    (v.iter().map(|s| s.cost).sum(), v.into_iter().map(|s| s.g_star).collect())
                }
                Err(e) => {
                    warnings.push(format!("final re-solve failed: {e}"));
                    (f64::NAN, Vec::new())
                }
            },
        },
    };
    Ok(CrpRun {
        status,
        iterations: records,
        final_theta,
        final_cost,
        final_generation,
        step_bound: step_bound_diagnostic(&a_sums),
        warnings,
    })
}
