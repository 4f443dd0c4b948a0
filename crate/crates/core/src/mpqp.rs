//! Explicit solution of one area's sub-problem around a given boundary state:
//! the affine maps `g*(θ̄)`, `μ_𝒜(θ̄)`, the critical region where they hold,
//! and the quadratic optimal cost on that region.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{greedy_independent_rows, lstsq, select_rows};
use crate::netmodel::LocalQpData;
use crate::qp::{self, QpError, QpOptions, QpProblem, QpStatus};

/// Membership slack for [`contains`].
pub const CONTAINS_TOL: f64 = 1e-8;
/// Margin by which an LP optimum must exceed a row's bound to keep the row.
const REDUNDANCY_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MpqpError {
    #[error("area `{area_id}` is infeasible at the given boundary state (violation {violation:.3e})")]
    Infeasible { area: usize, area_id: String, violation: f64 },
    #[error("area `{area_id}`: local solve stopped with status {status:?}")]
    NotOptimal { area: usize, area_id: String, status: QpStatus },
    #[error("area `{area_id}`: KKT system singular after active-set regularization")]
    SingularKkt { area: usize, area_id: String },
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub area: usize,
    pub theta: DVector<f64>,
    pub g_star: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Multipliers on every inequality row of the area.
    pub mu: DVector<f64>,
    /// Regularized active set, ascending row order.
    pub active_set: Vec<usize>,
    pub r_bar: DMatrix<f64>,
    pub r_tilde: DVector<f64>,
    /// `μ_𝒜(θ̄) = mu_slope·θ̄ + mu_offset`, rows aligned with `active_set`.
    pub mu_slope: DMatrix<f64>,
    pub mu_offset: DVector<f64>,
    /// Local cost in $/h.
    pub cost: f64,
    /// The solver's working set was used because the thresholded set gave
    /// negative multipliers or a region missing the query point.
    pub used_working_set: bool,
}

/// Origin of a region row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    /// `−μ_j(θ̄) ≤ 0` for active row `j`.
    Multiplier(usize),
    /// Feasibility of inactive row `j`. A `pinned` row satisfies
    /// `N_j = αM + βN_A` with `β ≤ 0`, so no feasible dispatch exists beyond it.
    Inactive { row: usize, pinned: bool },
}

#[derive(Debug, Clone)]
pub struct CriticalRegion {
    pub area: usize,
    pub s_bar: DMatrix<f64>,
    pub s_tilde: DVector<f64>,
    pub origins: Vec<RowOrigin>,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub c_bar: f64,
    pub signature: Vec<usize>,
    pub rows_before_reduction: usize,
    pub theta: DVector<f64>,
}

impl CriticalRegion {
    pub fn n_rows(&self) -> usize {
        self.s_bar.nrows()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        theta.dot(&(&self.a_bar * theta)) + self.b_bar.dot(theta) + self.c_bar
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a_bar * theta * 2.0 + &self.b_bar
    }
}

/// Outcome of redundancy removal. Kept rows retain their original scaling.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub s_bar: DMatrix<f64>,
    pub s_tilde: DVector<f64>,
    pub kept: Vec<usize>,
    pub before: usize,
    pub after: usize,
}

pub fn regularize_active_set(data: &LocalQpData, active: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = active.to_vec();
    order.sort_unstable();
    order.dedup();
    greedy_independent_rows(&data.m, &data.n, &order, RANK_TOL)
}

struct AffineMaps {
    r_bar: DMatrix<f64>,
    r_tilde: DVector<f64>,
    lambda_slope: DMatrix<f64>,
    lambda_offset: DVector<f64>,
    mu_slope: DMatrix<f64>,
    mu_offset: DVector<f64>,
}

/// Solves `K z = r₀ + r₁θ̄` for the KKT matrix of the given active set by LU.
fn affine_maps(data: &LocalQpData, active: &[usize]) -> Option<AffineMaps> {
    let ng = data.n_gen();
    let ne = data.m.nrows();
    let k = active.len();
    let dim = data.theta_dim();
    let size = ng + ne + k;
    let n_a = select_rows(&data.n, active);
    let nb_a = select_rows(&data.n_bar, active);

    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (ng, ng)).copy_from(&(&data.a * 2.0));
    kkt.view_mut((0, ng), (ng, ne)).copy_from(&data.m.transpose());
    kkt.view_mut((ng, 0), (ne, ng)).copy_from(&data.m);
    if k > 0 {
        kkt.view_mut((0, ng + ne), (ng, k)).copy_from(&n_a.transpose());
        kkt.view_mut((ng + ne, 0), (k, ng)).copy_from(&n_a);
    }
    // columns 0..dim: slope, column dim: offset
    let mut rhs = DMatrix::zeros(size, dim + 1);
    for i in 0..ng {
        rhs[(i, dim)] = -data.b[i];
    }
    for i in 0..ne {
        for c in 0..dim {
            rhs[(ng + i, c)] = -data.m_bar[(i, c)];
        }
        rhs[(ng + i, dim)] = -data.m_tilde[i];
    }
    for (r, &j) in active.iter().enumerate() {
        for c in 0..dim {
            rhs[(ng + ne + r, c)] = -nb_a[(r, c)];
        }
        rhs[(ng + ne + r, dim)] = -data.n_tilde[j];
    }
    let lu = kkt.lu();
    if !lu.is_invertible() {
        return None;
    }
    let z = lu.solve(&rhs)?;
    if z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(AffineMaps {
        r_bar: z.view((0, 0), (ng, dim)).into_owned(),
        r_tilde: z.view((0, dim), (ng, 1)).column(0).into_owned(),
        lambda_slope: z.view((ng, 0), (ne, dim)).into_owned(),
        lambda_offset: z.view((ng, dim), (ne, 1)).column(0).into_owned(),
        mu_slope: z.view((ng + ne, 0), (k, dim)).into_owned(),
        mu_offset: z.view((ng + ne, dim), (k, 1)).column(0).into_owned(),
    })
}

/// Worst violation at `theta` of the region implied by an active set, scaled
/// by the row magnitudes.
fn region_violation(data: &LocalQpData, active: &[usize], maps: &AffineMaps, theta: &DVector<f64>) -> f64 {
    let mu = &maps.mu_slope * theta + &maps.mu_offset;
    let mu_scale = 1.0 + data.b.amax() + data.a.amax();
    let mut worst = mu.iter().fold(f64::NEG_INFINITY, |w, &m| w.max(-m / mu_scale));
    let g = &maps.r_bar * theta + &maps.r_tilde;
    let slack = &data.n * g + &data.n_bar * theta + &data.n_tilde;
    for j in 0..data.n_rows() {
        if !active.contains(&j) {
            worst = worst.max(slack[j] / (1.0 + data.n_tilde[j].abs()));
        }
    }
    worst
}

/// Local problems accept this normalized violation, since a boundary state on a
/// region facet carries the master solver's rounding.
pub const LOCAL_FEAS_TOL: f64 = 1e-8;

pub fn solve_local(data: &LocalQpData, theta: &DVector<f64>) -> Result<LocalSolution, MpqpError> {
    let opts = QpOptions {
        feasibility: LOCAL_FEAS_TOL,
        ..QpOptions::default()
    };
    solve_local_with(data, theta, &opts)
}

pub fn solve_local_with(
    data: &LocalQpData,
    theta: &DVector<f64>,
    opts: &QpOptions,
) -> Result<LocalSolution, MpqpError> {
    let problem = data.qp_at(theta);
    let sol = qp::solve(&problem, opts)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(MpqpError::Infeasible {
                area: data.area,
                area_id: data.area_id.clone(),
                violation: sol.infeasibility.unwrap_or(f64::NAN),
            })
        }
        status => {
            return Err(MpqpError::NotOptimal {
                area: data.area,
                area_id: data.area_id.clone(),
                status,
            })
        }
    }

    let tol = 1e-7;
    let mut candidates = vec![(regularize_active_set(data, &sol.active_set), false)];
    let working = regularize_active_set(data, &sol.working_set);
    if working != candidates[0].0 {
        candidates.push((working, true));
    }
    let mut best: Option<(Vec<usize>, bool, AffineMaps, f64)> = None;
    for (active, fallback) in candidates {
        let Some(maps) = affine_maps(data, &active) else { continue };
        let v = region_violation(data, &active, &maps, theta);
        let better = best.as_ref().is_none_or(|b| v < b.3);
        if better {
            best = Some((active, fallback, maps, v));
        }
        if v <= tol {
            break;
        }
    }
    let Some((active_set, used_working_set, maps, _)) = best else {
        return Err(MpqpError::SingularKkt {
            area: data.area,
            area_id: data.area_id.clone(),
        });
    };

    let mu_a = &maps.mu_slope * theta + &maps.mu_offset;
    let mut mu = DVector::zeros(data.n_rows());
    for (r, &j) in active_set.iter().enumerate() {
        mu[j] = mu_a[r];
    }
    let lambda = &maps.lambda_slope * theta + &maps.lambda_offset;
    Ok(LocalSolution {
        area: data.area,
        theta: theta.clone(),
        cost: sol.objective,
        g_star: sol.x,
        lambda,
        mu,
        active_set,
        r_bar: maps.r_bar,
        r_tilde: maps.r_tilde,
        mu_slope: maps.mu_slope,
        mu_offset: maps.mu_offset,
        used_working_set,
    })
}

/// Rows of the region before redundancy removal, stacked as multiplier rows
/// followed by inactive-constraint rows.
pub fn stacked_region_rows(data: &LocalQpData, sol: &LocalSolution) -> (DMatrix<f64>, DVector<f64>, Vec<RowOrigin>) {
    let dim = data.theta_dim();
    let k = sol.active_set.len();
    let inactive: Vec<usize> = (0..data.n_rows())
        .filter(|j| !sol.active_set.contains(j))
        .collect();
    let rows = k + inactive.len();
    let mut s = DMatrix::zeros(rows, dim);
    let mut st = DVector::zeros(rows);
    let mut origins = Vec::with_capacity(rows);
    for (r, &j) in sol.active_set.iter().enumerate() {
        s.row_mut(r).copy_from(&(-sol.mu_slope.row(r)));
        st[r] = -sol.mu_offset[r];
        origins.push(RowOrigin::Multiplier(j));
    }
    let n_i = select_rows(&data.n, &inactive);
    let slope = &n_i * &sol.r_bar + select_rows(&data.n_bar, &inactive);
    let offset = &n_i * &sol.r_tilde;
    for (r, &j) in inactive.iter().enumerate() {
        s.row_mut(k + r).copy_from(&slope.row(r));
        st[k + r] = offset[r] + data.n_tilde[j];
        origins.push(RowOrigin::Inactive { row: j, pinned: false });
    }
    (s, st, origins)
}

pub fn critical_region(data: &LocalQpData, sol: &LocalSolution) -> CriticalRegion {
    let (s, st, origins) = stacked_region_rows(data, sol);
    let red = remove_redundant(&s, &st, Some(&sol.theta));

    let base = {
        let a_rows = select_rows(&data.n, &sol.active_set);
        let mut b = DMatrix::zeros(data.m.nrows() + a_rows.nrows(), data.n_gen());
        b.view_mut((0, 0), (data.m.nrows(), data.n_gen())).copy_from(&data.m);
        b.view_mut((data.m.nrows(), 0), (a_rows.nrows(), data.n_gen())).copy_from(&a_rows);
        b
    };
    let base_t = base.transpose();
    let n_eq = data.m.nrows();
    let origins = red
        .kept
        .iter()
        .map(|&r| match origins[r] {
            RowOrigin::Inactive { row, .. } => {
                let nj = data.n.row(row).transpose();
                let coeff = lstsq(&base_t, &nj);
                let resid = (&base_t * &coeff - &nj).amax();
                let tol = RANK_TOL * (1.0 + nj.amax());
                let pinned = resid <= tol && coeff.iter().skip(n_eq).all(|&c| c <= tol);
                RowOrigin::Inactive { row, pinned }
            }
            o => o,
        })
        .collect();

    let ar = &data.a * &sol.r_bar;
    let mut a_bar = sol.r_bar.transpose() * &ar;
    a_bar = (&a_bar + a_bar.transpose()) * 0.5;
    let b_bar = ar.transpose() * &sol.r_tilde * 2.0 + sol.r_bar.transpose() * &data.b;
    let c_bar = sol.r_tilde.dot(&(&data.a * &sol.r_tilde)) + data.b.dot(&sol.r_tilde);
    CriticalRegion {
        area: data.area,
        s_bar: red.s_bar,
        s_tilde: red.s_tilde,
        origins,
        a_bar,
        b_bar,
        c_bar,
        signature: sol.active_set.clone(),
        rows_before_reduction: red.before,
        theta: sol.theta.clone(),
    }
}

/// Drops rows of `{θ | Sθ + s ≤ 0}` implied by the others. Row `j` stays iff
/// maximizing `S_j θ` over the remaining rows (with row `j` relaxed by one
/// normalized unit) exceeds `−s_j` by more than the tolerance. `interior`, if
/// given, must satisfy every row and is used as the LP starting point.
pub fn remove_redundant(s: &DMatrix<f64>, st: &DVector<f64>, interior: Option<&DVector<f64>>) -> Reduction {
    let rows = s.nrows();
    let dim = s.ncols();
    let norms: Vec<f64> = (0..rows).map(|j| s.row(j).norm()).collect();
    let scale = norms.iter().fold(0.0_f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
    let mut alive: Vec<bool> = vec![true; rows];
    for j in 0..rows {
        if norms[j] <= 1e-12 * scale {
            // constant row: redundant when satisfied
            alive[j] = st[j] > REDUNDANCY_TOL;
        }
    }
    let ns = DMatrix::from_fn(rows, dim, |r, c| if norms[r] > 0.0 { s[(r, c)] / norms[r] } else { 0.0 });
    let nst = DVector::from_fn(rows, |r, _| if norms[r] > 0.0 { st[r] / norms[r] } else { st[r] });
    let opts = QpOptions::default();
    for j in 0..rows {
        if !alive[j] || norms[j] <= 1e-12 * scale {
            continue;
        }
        let others: Vec<usize> = (0..rows).filter(|&r| r != j && alive[r] && norms[r] > 1e-12 * scale).collect();
        let mut a = select_rows(&ns, &others);
        let mut b = DVector::from_fn(others.len(), |i, _| nst[others[i]]);
        a = a.insert_row(others.len(), 0.0);
        a.row_mut(others.len()).copy_from(&ns.row(j));
        b = b.insert_row(others.len(), nst[j] - 1.0);
        let lp = QpProblem::new(DMatrix::zeros(dim, dim), -ns.row(j).transpose()).with_inequalities(a, b);
        let sol = qp::solve_from(&lp, interior, &opts);
        let keep = match sol {
            Ok(sol) if sol.status == QpStatus::Optimal => {
                let max = ns.row(j).dot(&sol.x.transpose());
                max > -nst[j] + REDUNDANCY_TOL
            }
            _ => true,
        };
        alive[j] = keep;
    }
    let kept: Vec<usize> = (0..rows).filter(|&j| alive[j]).collect();
    Reduction {
        s_bar: select_rows(s, &kept),
        s_tilde: DVector::from_fn(kept.len(), |i, _| st[kept[i]]),
        after: kept.len(),
        before: rows,
        kept,
    }
}

pub fn contains(region: &CriticalRegion, theta: &DVector<f64>) -> bool {
    if region.n_rows() == 0 {
        return true;
    }
    (&region.s_bar * theta + &region.s_tilde).max() <= CONTAINS_TOL
}
