//! Per-area sub-problem in multi-parametric form:
//!
//! ```text
//! min  gᵀAg + bᵀg
//! s.t. M g + M̄ θ̄ + m̃ = 0
//!      N g + N̄ θ̄ + ñ ≤ 0
//! ```
//!
//! obtained by eliminating the internal angles through `Y_ii`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::admittance::{assemble_admittance, AreaBlocks};
use super::{MultiAreaSystem, NetError};
use crate::linalg::rank;
use crate::qp::QpProblem;

/// Physical meaning of one row of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintLabel {
    /// Flow from `from` to `to` at most the limit; branch index within the area.
    BranchForward(usize),
    BranchReverse(usize),
    GenUpper(usize),
    GenLower(usize),
}

#[derive(Debug, Clone)]
pub struct LocalQpData {
    pub area: usize,
    pub area_id: String,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub m: DMatrix<f64>,
    pub m_bar: DMatrix<f64>,
    pub m_tilde: DVector<f64>,
    pub n: DMatrix<f64>,
    pub n_bar: DMatrix<f64>,
    pub n_tilde: DVector<f64>,
    pub labels: Vec<ConstraintLabel>,
    y_ii: Option<Cholesky<f64, Dyn>>,
    y_ib: DMatrix<f64>,
    incidence: DMatrix<f64>,
    d_internal: DVector<f64>,
    /// Reduced coordinate of each own boundary bus (`None` for the reference).
    own_reduced: Vec<Option<usize>>,
    internal: Vec<usize>,
    boundary: Vec<usize>,
}

impl LocalQpData {
    pub fn n_gen(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_rows(&self) -> usize {
        self.n.nrows()
    }

    pub fn theta_dim(&self) -> usize {
        self.m_bar.ncols()
    }

    /// Internal bus indices (area-local) in elimination order.
    pub fn internal_buses(&self) -> &[usize] {
        &self.internal
    }

    pub fn boundary_buses(&self) -> &[usize] {
        &self.boundary
    }

    /// The plain QP obtained by fixing the boundary state.
    pub fn qp_at(&self, theta: &DVector<f64>) -> QpProblem {
        QpProblem::new(self.a.clone(), self.b.clone())
            .with_equalities(self.m.clone(), &self.m_bar * theta + &self.m_tilde)
            .with_inequalities(self.n.clone(), &self.n_bar * theta + &self.n_tilde)
    }

    /// Angles of this area's boundary buses taken from the reduced state.
    pub fn boundary_angles(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.own_reduced.len(),
            self.own_reduced.iter().map(|r| r.map_or(0.0, |i| theta[i])),
        )
    }

    /// Eliminated internal angles: `θ_i = Y_ii⁻¹ (C g − d − Y_iī θ̄_i)`.
    pub fn internal_angles(&self, g: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let Some(chol) = &self.y_ii else {
            return DVector::zeros(0);
        };
        let rhs = &self.incidence * g - &self.d_internal - &self.y_ib * self.boundary_angles(theta);
        chol.solve(&rhs)
    }
}

fn scatter_columns(
    own: &DMatrix<f64>,
    own_reduced: &[Option<usize>],
    dim: usize,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(own.nrows(), dim);
    for (c, r) in own_reduced.iter().enumerate() {
        if let Some(r) = *r {
            for row in 0..own.nrows() {
                out[(row, r)] += own[(row, c)];
            }
        }
    }
    out
}

pub fn build_local_qp(system: &MultiAreaSystem, area: usize) -> Result<LocalQpData, NetError> {
    let adm = assemble_admittance(system)?;
    build_from_blocks(system, area, &adm.areas[area])
}

pub(crate) fn build_from_blocks(
    system: &MultiAreaSystem,
    ai: usize,
    blk: &AreaBlocks,
) -> Result<LocalQpData, NetError> {
    let ar = &system.areas[ai];
    let dim = system.theta_dim();
    let ni = blk.internal.len();
    let nb = blk.boundary.len();
    let ng = ar.generators.len();
    let pos_internal = |bus: usize| blk.internal.iter().position(|&b| b == bus);
    let pos_boundary = |bus: usize| blk.boundary.iter().position(|&b| b == bus);

    let mut incidence = DMatrix::zeros(ni, ng);
    for (k, g) in ar.generators.iter().enumerate() {
        let p = pos_internal(g.bus).expect("generators sit on internal buses after loading");
        incidence[(p, k)] = 1.0;
    }
    let d_internal = DVector::from_iterator(ni, blk.internal.iter().map(|&b| ar.buses[b].load));
    let d_boundary = DVector::from_iterator(nb, blk.boundary.iter().map(|&b| ar.buses[b].load));
    let own_reduced: Vec<Option<usize>> = blk
        .boundary
        .iter()
        .map(|&b| system.reduced_index(ai, b))
        .collect();

    let y_ii = if ni > 0 {
        Some(
            blk.y_ii
                .clone()
                .cholesky()
                .ok_or_else(|| NetError::SingularInternal(ar.id.clone()))?,
        )
    } else {
        None
    };
    let solve = |rhs: &DMatrix<f64>| match &y_ii {
        Some(c) => c.solve(rhs),
        None => DMatrix::zeros(0, rhs.ncols()),
    };
    let x_gen = solve(&incidence);
    let x_bnd = solve(&blk.y_ib);
    let x_load = solve(&DMatrix::from_column_slice(ni, 1, d_internal.as_slice()));
    let x_load = x_load.column(0).into_owned();

    let m = &blk.y_bi * &x_gen;
    let own = &blk.y_bb - &blk.y_bi * &x_bnd;
    let mut m_bar = scatter_columns(&own, &own_reduced, dim);
    for (k, _) in system.boundary_buses().iter().enumerate() {
        if let Some(r) = system.reduce_global(k) {
            for row in 0..nb {
                m_bar[(row, r)] += blk.y_bj[(row, k)];
            }
        }
    }
    let m_tilde = &d_boundary - &blk.y_bi * &x_load;

    let r = rank(&m, 1e-9);
    if r < nb {
        return Err(NetError::RankDeficient {
            area: ar.id.clone(),
            rank: r,
            boundary: nb,
        });
    }

    let limited: Vec<usize> = (0..ar.branches.len())
        .filter(|&k| ar.branches[k].limit.is_some())
        .collect();
    let nl = limited.len();
    let rows = 2 * nl + 2 * ng;
    let mut n = DMatrix::zeros(rows, ng);
    let mut n_bar = DMatrix::zeros(rows, dim);
    let mut n_tilde = DVector::zeros(rows);
    let mut labels = Vec::with_capacity(rows);
    for (j, &k) in limited.iter().enumerate() {
        let br = &ar.branches[k];
        let mut h_int = DMatrix::zeros(1, ni);
        let mut h_bnd = DMatrix::zeros(1, nb);
        for (bus, s) in [(br.from, 1.0 / br.x), (br.to, -1.0 / br.x)] {
            if let Some(p) = pos_internal(bus) {
                h_int[(0, p)] += s;
            } else if let Some(p) = pos_boundary(bus) {
                h_bnd[(0, p)] += s;
            }
        }
        let f = br.limit.unwrap();
        let row_n = &h_int * &x_gen;
        let row_nb = scatter_columns(&(&h_bnd - &h_int * &x_bnd), &own_reduced, dim);
        let flow_load = (&h_int * &x_load)[0];
        n.row_mut(j).copy_from(&row_n);
        n_bar.row_mut(j).copy_from(&row_nb);
        n_tilde[j] = -flow_load - f;
        n.row_mut(nl + j).copy_from(&(-row_n));
        n_bar.row_mut(nl + j).copy_from(&(-row_nb));
        n_tilde[nl + j] = flow_load - f;
    }
    labels.extend(limited.iter().map(|&k| ConstraintLabel::BranchForward(k)));
    labels.extend(limited.iter().map(|&k| ConstraintLabel::BranchReverse(k)));
    for (k, g) in ar.generators.iter().enumerate() {
        n[(2 * nl + k, k)] = 1.0;
        n_tilde[2 * nl + k] = -g.pmax;
        n[(2 * nl + ng + k, k)] = -1.0;
        n_tilde[2 * nl + ng + k] = g.pmin;
    }
    labels.extend((0..ng).map(ConstraintLabel::GenUpper));
    labels.extend((0..ng).map(ConstraintLabel::GenLower));

    let a = DMatrix::from_diagonal(&DVector::from_iterator(ng, ar.generators.iter().map(|g| g.a)));
    let b = DVector::from_iterator(ng, ar.generators.iter().map(|g| g.b));
    Ok(LocalQpData {
        area: ai,
        area_id: ar.id.clone(),
        a,
        b,
        m,
        m_bar,
        m_tilde,
        n,
        n_bar,
        n_tilde,
        labels,
        y_ii,
        y_ib: blk.y_ib.clone(),
        incidence,
        d_internal,
        own_reduced,
        internal: blk.internal.clone(),
        boundary: blk.boundary.clone(),
    })
}
