//! Feasible set of the boundary state, `Θ = {θ̄ | H̄θ̄ + h̃ ≤ 0}`, in tie-flow units.

use nalgebra::{DMatrix, DVector};

use super::{MultiAreaSystem, NetError};

/// Slack above which a row counts as violated.
const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolytope {
    pub h: DMatrix<f64>,
    pub h_tilde: DVector<f64>,
    pub labels: Vec<String>,
}

impl BoundaryPolytope {
    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    pub fn values(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.h * theta + &self.h_tilde
    }

    /// Most violated row, if any row exceeds `tol`.
    pub fn worst_violation(&self, theta: &DVector<f64>, tol: f64) -> Option<(usize, f64)> {
        let v = self.values(theta);
        let (row, val) = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        (val > tol).then_some((row, val))
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.worst_violation(theta, tol).is_none()
    }

    pub fn check(&self, theta: &DVector<f64>) -> Result<(), NetError> {
        match self.worst_violation(theta, VIOLATION_TOL) {
            None => Ok(()),
            Some((row, value)) => Err(NetError::ThetaInfeasible {
                row,
                label: self.labels[row].clone(),
                value,
            }),
        }
    }
}

/// Row vector of the p.u. flow on a tie-line as a function of the reduced state.
fn flow_row(system: &MultiAreaSystem, tie: usize) -> DVector<f64> {
    let t = &system.tie_lines[tie];
    let mut row = DVector::zeros(system.theta_dim());
    if let Some(i) = system.reduced_index(t.from_area, t.from_bus) {
        row[i] += 1.0 / t.x;
    }
    if let Some(i) = system.reduced_index(t.to_area, t.to_bus) {
        row[i] -= 1.0 / t.x;
    }
    row
}

/// Θ without the zero-state check.
pub fn boundary_polytope(system: &MultiAreaSystem) -> BoundaryPolytope {
    let mut rows: Vec<(DVector<f64>, f64, String)> = Vec::new();
    for (k, t) in system.tie_lines.iter().enumerate() {
        if let Some(l) = t.limit {
            let f = flow_row(system, k);
            rows.push((f.clone(), -l, format!("tie {k} forward limit")));
            rows.push((-f, -l, format!("tie {k} reverse limit")));
        }
    }
    for (k, c) in system.boundary_constraints.iter().enumerate() {
        let mut f = DVector::zeros(system.theta_dim());
        for &(tie, coeff) in &c.terms {
            f += flow_row(system, tie) * coeff;
        }
        if let Some(u) = c.upper {
            rows.push((f.clone(), -u, format!("boundary constraint {k} upper")));
        }
        if let Some(l) = c.lower {
            rows.push((-f, l, format!("boundary constraint {k} lower")));
        }
    }
    let dim = system.theta_dim();
    let h = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    let h_tilde = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let labels = rows.into_iter().map(|r| r.2).collect();
    BoundaryPolytope { h, h_tilde, labels }
}

/// Θ, verified to contain the zero boundary state.
pub fn build_boundary_polytope(system: &MultiAreaSystem) -> Result<BoundaryPolytope, NetError> {
    let p = boundary_polytope(system);
    p.check(&DVector::zeros(system.theta_dim()))?;
    Ok(p)
}
