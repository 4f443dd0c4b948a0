//! Centralized joint economic dispatch over the whole network.
//!
//! Variables are all generator outputs followed by every bus angle except the
//! reference; the DC load flow `Yθ − Cg + d = 0` is imposed at every bus.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::netmodel::{full_susceptance, MultiAreaSystem};
use crate::qp::{self, QpError, QpOptions, QpProblem, QpSolution, QpStatus};

#[derive(Debug, Error)]
pub enum JedError {
    #[error("joint dispatch is infeasible (worst normalized violation {0:.3e})")]
    Infeasible(f64),
    #[error("joint dispatch solver stopped with status {0:?}")]
    NotOptimal(QpStatus),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone)]
pub struct JedResult {
    pub status: QpStatus,
    /// Generation per area (p.u.), in generator order.
    pub g: Vec<DVector<f64>>,
    /// Angle of every bus per area (rad), reference at zero.
    pub theta: Vec<DVector<f64>>,
    /// Boundary angles in reduced coordinates, comparable with CRP.
    pub theta_boundary: DVector<f64>,
    pub cost: f64,
    /// Tie-line flows (p.u.).
    pub tie_flows: Vec<f64>,
    pub binding: Vec<String>,
    pub solution: QpSolution,
}

struct Layout {
    labels: Vec<(usize, usize)>,
    /// Column of each bus angle in the decision vector; `None` for the reference.
    angle_col: Vec<Option<usize>>,
    n_gen: usize,
}

impl Layout {
    fn new(system: &MultiAreaSystem) -> (Self, DMatrix<f64>) {
        let (y, labels) = full_susceptance(system);
        let n_gen = system.n_generators();
        let mut angle_col = Vec::with_capacity(labels.len());
        let mut next = n_gen;
        for &l in &labels {
            if l == system.reference {
                angle_col.push(None);
            } else {
                angle_col.push(Some(next));
                next += 1;
            }
        }
        (
            Self {
                labels,
                angle_col,
                n_gen,
            },
            y,
        )
    }

    fn row_of(&self, area: usize, bus: usize) -> usize {
        self.labels.iter().position(|&l| l == (area, bus)).unwrap()
    }

    fn dim(&self) -> usize {
        self.n_gen + self.labels.len() - 1
    }

    /// Flow row over the decision vector for a (u → v) line of reactance `x`.
    fn flow(&self, u: usize, v: usize, x: f64) -> DVector<f64> {
        let mut r = DVector::zeros(self.dim());
        if let Some(c) = self.angle_col[u] {
            r[c] += 1.0 / x;
        }
        if let Some(c) = self.angle_col[v] {
            r[c] -= 1.0 / x;
        }
        r
    }
}

/// Assembles the joint QP together with a label for every inequality row.
pub fn jed_problem(system: &MultiAreaSystem) -> (QpProblem, Vec<String>) {
    let (lay, y) = Layout::new(system);
    let nb = lay.labels.len();
    let dim = lay.dim();

    let mut q = DMatrix::zeros(dim, dim);
    let mut c = DVector::zeros(dim);
    let mut a_eq = DMatrix::zeros(nb, dim);
    let mut b_eq = DVector::zeros(nb);
    for (bus, &(ai, bi)) in lay.labels.iter().enumerate() {
        b_eq[bus] = system.areas[ai].buses[bi].load;
        for other in 0..nb {
            if let Some(col) = lay.angle_col[other] {
                a_eq[(bus, col)] = y[(bus, other)];
            }
        }
    }

    let mut rows: Vec<(DVector<f64>, f64, String)> = Vec::new();
    let mut gcol = 0;
    for (ai, area) in system.areas.iter().enumerate() {
        for gen in &area.generators {
            q[(gcol, gcol)] = gen.a;
            c[gcol] = gen.b;
            a_eq[(lay.row_of(ai, gen.bus), gcol)] -= 1.0;
            gcol += 1;
        }
    }
    for (ai, area) in system.areas.iter().enumerate() {
        for (k, br) in area.branches.iter().enumerate() {
            if let Some(f) = br.limit {
                let r = lay.flow(lay.row_of(ai, br.from), lay.row_of(ai, br.to), br.x);
                let name = format!(
                    "{} branch {k} ({}-{})",
                    area.id, area.buses[br.from].id, area.buses[br.to].id
                );
                rows.push((r.clone(), -f, format!("{name} forward")));
                rows.push((-r, -f, format!("{name} reverse")));
            }
        }
    }
    let tie_rows: Vec<DVector<f64>> = system
        .tie_lines
        .iter()
        .map(|t| lay.flow(lay.row_of(t.from_area, t.from_bus), lay.row_of(t.to_area, t.to_bus), t.x))
        .collect();
    for (k, t) in system.tie_lines.iter().enumerate() {
        if let Some(f) = t.limit {
            rows.push((tie_rows[k].clone(), -f, format!("tie {k} forward limit")));
            rows.push((-tie_rows[k].clone(), -f, format!("tie {k} reverse limit")));
        }
    }
    for (k, bc) in system.boundary_constraints.iter().enumerate() {
        let mut r = DVector::zeros(dim);
        for &(tie, coeff) in &bc.terms {
            r += &tie_rows[tie] * coeff;
        }
        if let Some(u) = bc.upper {
            rows.push((r.clone(), -u, format!("boundary constraint {k} upper")));
        }
        if let Some(l) = bc.lower {
            rows.push((-r, l, format!("boundary constraint {k} lower")));
        }
    }
    let mut gcol = 0;
    for area in &system.areas {
        for gen in &area.generators {
            let mut up = DVector::zeros(dim);
            up[gcol] = 1.0;
            let name = format!("{} generator at {}", area.id, area.buses[gen.bus].id);
            rows.push((up.clone(), -gen.pmax, format!("{name} upper")));
            rows.push((-up, gen.pmin, format!("{name} lower")));
            gcol += 1;
        }
    }
    let a_ineq = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    let b_ineq = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let labels = rows.into_iter().map(|r| r.2).collect();
    let problem = QpProblem::new(q, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_ineq, b_ineq);
    (problem, labels)
}

pub fn solve_jed(system: &MultiAreaSystem) -> Result<JedResult, JedError> {
    solve_jed_with(system, &QpOptions::default())
}

pub fn solve_jed_with(system: &MultiAreaSystem, opts: &QpOptions) -> Result<JedResult, JedError> {
    let (problem, labels) = jed_problem(system);
    let sol = qp::solve(&problem, opts)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(JedError::Infeasible(sol.infeasibility.unwrap_or(f64::NAN))),
        s => return Err(JedError::NotOptimal(s)),
    }
    let (lay, _) = Layout::new(system);
    let mut g = Vec::new();
    let mut col = 0;
    for area in &system.areas {
        let n = area.generators.len();
        g.push(sol.x.rows(col, n).into_owned());
        col += n;
    }
    let mut theta: Vec<DVector<f64>> = system
        .areas
        .iter()
        .map(|a| DVector::zeros(a.buses.len()))
        .collect();
    for (k, &(ai, bi)) in lay.labels.iter().enumerate() {
        if let Some(c) = lay.angle_col[k] {
            theta[ai][bi] = sol.x[c];
        }
    }
    let mut theta_boundary = DVector::zeros(system.theta_dim());
    for &(ai, bi) in system.boundary_buses() {
        if let Some(r) = system.reduced_index(ai, bi) {
            theta_boundary[r] = theta[ai][bi];
        }
    }
    let tie_flows = (0..system.tie_lines.len())
        .map(|k| system.tie_flow(k, theta_boundary.as_slice()))
        .collect();
    let binding = sol.active_set.iter().map(|&j| labels[j].clone()).collect();
    Ok(JedResult {
        status: sol.status,
        g,
        theta,
        theta_boundary,
        cost: sol.objective,
        tie_flows,
        binding,
        solution: sol,
    })
}
