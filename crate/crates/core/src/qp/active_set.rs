//! Primal active-set iteration on a feasible start.
//!
//! Works on `min xᵀQx + cᵀx` with `Aeq x + beq = 0`, `G x + h ≤ 0`, where `Q` may be
//! singular. Directions of zero curvature inside the working-set null space are
//! followed as rays, which turns the method into a simplex-like walk when `Q = 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg::{inf_norm, lstsq, null_space};

/// Consecutive zero-length steps before switching to Bland's smallest-index rule.
const DEGENERATE_SWITCH: usize = 50;

pub(crate) struct Data<'a> {
    pub q: &'a DMatrix<f64>,
    pub c: &'a DVector<f64>,
    /// Equality rows already reduced to a linearly independent subset.
    pub a_eq: &'a DMatrix<f64>,
    pub g: &'a DMatrix<f64>,
    pub h: &'a DVector<f64>,
    pub row_norms: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Unbounded,
    MaxIter,
}

pub(crate) struct Iterate {
    pub x: DVector<f64>,
    /// Inequality rows in the final working set, in insertion order.
    pub working: Vec<usize>,
    pub lambda: DVector<f64>,
    /// Multipliers aligned with `working`.
    pub mu_working: DVector<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
}

fn working_matrix(data: &Data<'_>, working: &[usize]) -> DMatrix<f64> {
    let n = data.q.ncols();
    let me = data.a_eq.nrows();
    let mut w = DMatrix::zeros(me + working.len(), n);
    if me > 0 {
        w.view_mut((0, 0), (me, n)).copy_from(data.a_eq);
    }
    for (k, &j) in working.iter().enumerate() {
        w.row_mut(me + k).copy_from(&data.g.row(j));
    }
    w
}

enum Direction {
    /// Stationary on the current working set.
    Zero,
    /// Newton step to the subspace minimiser; full step length is 1.
    Newton(DVector<f64>),
    /// Descent ray with zero curvature; unbounded unless blocked.
    Ray(DVector<f64>),
}

fn direction(data: &Data<'_>, w: &DMatrix<f64>, x: &DVector<f64>, grad: &DVector<f64>) -> Direction {
    let n = x.len();
    let z = null_space(w, n);
    if z.ncols() == 0 {
        return Direction::Zero;
    }
    let hz = z.transpose() * (data.q * 2.0) * &z;
    let rz = z.transpose() * grad;
    let eig = SymmetricEigen::new(hz);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, e| a.max(e.abs()));
    let flat_tol = 1e-12 * scale;
    let y = eig.eigenvectors.transpose() * &rz;
    let grad_scale = 1.0 + inf_norm(grad);

    let mut flat = DVector::zeros(y.len());
    let mut flat_norm = 0.0_f64;
    let mut newton = DVector::zeros(y.len());
    for i in 0..y.len() {
        if eig.eigenvalues[i] <= flat_tol {
            flat[i] = y[i];
            flat_norm = flat_norm.max(y[i].abs());
        } else {
            newton[i] = y[i] / eig.eigenvalues[i];
        }
    }
    if flat_norm > 1e-12 * grad_scale {
        let p = -(&z * (&eig.eigenvectors * flat));
        return Direction::Ray(p);
    }
    let p = -(&z * (&eig.eigenvectors * newton));
    if inf_norm(&p) <= 1e-13 * (1.0 + inf_norm(x)) {
        Direction::Zero
    } else {
        Direction::Newton(p)
    }
}

/// Runs the active-set loop from a point that satisfies the equalities and
/// (up to tolerance) the inequalities.
pub(crate) fn iterate(data: &Data<'_>, x0: DVector<f64>, tolerance: f64, max_iter: usize) -> Iterate {
    let m = data.g.nrows();
    let me = data.a_eq.nrows();
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; m];
    let mut degenerate_run = 0usize;
    // set after an unblocked Newton step: x already minimises on the working set
    let mut at_minimiser = false;

    for it in 0..max_iter {
        let grad = data.q * &x * 2.0 + data.c;
        let w = working_matrix(data, &working);
        let dir = if at_minimiser {
            Direction::Zero
        } else {
            direction(data, &w, &x, &grad)
        };
        let (p, ray) = match dir {
            Direction::Newton(p) => (p, false),
            Direction::Ray(p) => (p, true),
            Direction::Zero => {
                let nu = lstsq(&w.transpose(), &(-&grad));
                let grad_scale = 1.0 + inf_norm(&grad);
                let mu_tol = 0.1 * tolerance * grad_scale;
                let bland = degenerate_run > DEGENERATE_SWITCH;
                let mut drop: Option<(usize, f64)> = None;
                for (k, &j) in working.iter().enumerate() {
                    let scaled = nu[me + k] * data.row_norms[j];
                    if scaled < -mu_tol {
                        let better = match drop {
                            None => true,
                            Some((kk, best)) => {
                                if bland {
                                    j < working[kk]
                                } else {
                                    scaled < best
                                }
                            }
                        };
                        if better {
                            drop = Some((k, scaled));
                        }
                    }
                }
                match drop {
                    None => {
                        let lambda = nu.rows(0, me).into_owned();
                        let mu_working = nu.rows(me, working.len()).map(|v| v.max(0.0));
                        return Iterate {
                            x,
                            working,
                            lambda,
                            mu_working,
                            outcome: Outcome::Optimal,
                            iterations: it,
                        };
                    }
                    Some((k, _)) => {
                        let j = working.remove(k);
                        in_working[j] = false;
                        at_minimiser = false;
                    }
                }
                continue;
            }
        };
        let pnorm = p.norm();
        let mut step = if ray { f64::INFINITY } else { 1.0 };
        let mut blocking: Option<usize> = None;
        for j in 0..m {
            if in_working[j] {
                continue;
            }
            let d = data.g.row(j).dot(&p.transpose());
            if d <= 1e-12 * data.row_norms[j] * pnorm {
                continue;
            }
            let slack = -(data.g.row(j).dot(&x.transpose()) + data.h[j]);
            let ratio = slack.max(0.0) / d;
            if ratio < step {
                step = ratio;
                blocking = Some(j);
            }
        }
        if step.is_infinite() {
            let lambda = DVector::zeros(me);
            let mu_working = DVector::zeros(working.len());
            return Iterate {
                x,
                working,
                lambda,
                mu_working,
                outcome: Outcome::Unbounded,
                iterations: it,
            };
        }
        x += &p * step;
        if step == 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        at_minimiser = blocking.is_none();
        if let Some(j) = blocking {
            working.push(j);
            in_working[j] = true;
        }
    }
    let lambda = DVector::zeros(me);
    let mu_working = DVector::zeros(working.len());
    Iterate {
        x,
        working,
        lambda,
        mu_working,
        outcome: Outcome::MaxIter,
        iterations: max_iter,
    }
}
