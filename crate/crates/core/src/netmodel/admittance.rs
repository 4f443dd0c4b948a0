//! DC susceptance matrix and its internal/boundary partition per area.

use nalgebra::DMatrix;

use super::{Area, BusKind, MultiAreaSystem, NetError};

/// Partitioned susceptance blocks of one area. Index sets are the area's
/// internal buses (`i`) and boundary buses (`b`) in bus order; `y_bj` couples
/// this area's boundary buses to every global boundary bus of other areas.
#[derive(Debug, Clone)]
pub struct AreaBlocks {
    pub internal: Vec<usize>,
    pub boundary: Vec<usize>,
    pub y_ii: DMatrix<f64>,
    pub y_ib: DMatrix<f64>,
    pub y_bi: DMatrix<f64>,
    /// Includes the diagonal contribution of incident tie-lines.
    pub y_bb: DMatrix<f64>,
    /// Columns indexed by the global (unreduced) boundary list.
    pub y_bj: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Admittance {
    pub areas: Vec<AreaBlocks>,
}

/// Full pre-reduction susceptance matrix over all buses, with the
/// (area, bus) label of each row in area order, then bus order.
pub fn full_susceptance(system: &MultiAreaSystem) -> (DMatrix<f64>, Vec<(usize, usize)>) {
    let mut labels = Vec::new();
    let mut offsets = Vec::new();
    for (ai, a) in system.areas.iter().enumerate() {
        offsets.push(labels.len());
        for bi in 0..a.buses.len() {
            labels.push((ai, bi));
        }
    }
    let n = labels.len();
    let mut y = DMatrix::zeros(n, n);
    let mut add = |u: usize, v: usize, x: f64| {
        let s = 1.0 / x;
        y[(u, u)] += s;
        y[(v, v)] += s;
        y[(u, v)] -= s;
        y[(v, u)] -= s;
    };
    for (ai, a) in system.areas.iter().enumerate() {
        for br in &a.branches {
            add(offsets[ai] + br.from, offsets[ai] + br.to, br.x);
        }
    }
    for t in &system.tie_lines {
        add(offsets[t.from_area] + t.from_bus, offsets[t.to_area] + t.to_bus, t.x);
    }
    (y, labels)
}

/// `Y_ii` is nonsingular iff every internal bus has an in-area path to a boundary bus.
fn internal_reaches_boundary(area: &Area) -> bool {
    let n = area.buses.len();
    let mut seen: Vec<bool> = area.buses.iter().map(|b| b.kind == BusKind::Boundary).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
    while let Some(u) = stack.pop() {
        for br in &area.branches {
            let v = if br.from == u {
                br.to
            } else if br.to == u {
                br.from
            } else {
                continue;
            };
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn assemble_admittance(system: &MultiAreaSystem) -> Result<Admittance, NetError> {
    let (y, labels) = full_susceptance(system);
    let row_of = |ai: usize, bi: usize| labels.iter().position(|&l| l == (ai, bi)).unwrap();
    let global: Vec<usize> = system.boundary_buses().iter().map(|&(a, b)| row_of(a, b)).collect();
    let mut areas = Vec::new();
    for (ai, a) in system.areas.iter().enumerate() {
        let internal = a.internal_buses();
        let boundary = a.boundary_buses();
        let ri: Vec<usize> = internal.iter().map(|&b| row_of(ai, b)).collect();
        let rb: Vec<usize> = boundary.iter().map(|&b| row_of(ai, b)).collect();
        let block = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| y[(rows[r], cols[c])])
        };
        let y_ii = block(&ri, &ri);
        if !internal_reaches_boundary(a) {
            return Err(NetError::SingularInternal(a.id.clone()));
        }
        let mut y_bj = block(&rb, &global);
        for (k, &(oa, _)) in system.boundary_buses().iter().enumerate() {
            if oa == ai {
                y_bj.column_mut(k).fill(0.0);
            }
        }
        areas.push(AreaBlocks {
            y_ib: block(&ri, &rb),
            y_bi: block(&rb, &ri),
            y_bb: block(&rb, &rb),
            y_ii,
            y_bj,
            internal,
            boundary,
        });
    }
    Ok(Admittance { areas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{parse_case, tests::TOY, LoadOptions};

    #[test]
    fn single_branch_block() {
        let s = parse_case(TOY, &LoadOptions::default()).unwrap();
        let adm = assemble_admittance(&s).unwrap();
        let a = &adm.areas[0];
        assert!((a.y_ii[(0, 0)] - 10.0).abs() < 1e-12);
        assert!((a.y_ib[(0, 0)] + 10.0).abs() < 1e-12);
        assert!((a.y_bi[(0, 0)] + 10.0).abs() < 1e-12);
        // 10 from the internal branch, 10 from the tie-line
        assert!((a.y_bb[(0, 0)] - 20.0).abs() < 1e-12);
        assert!((a.y_bj[(0, 1)] + 10.0).abs() < 1e-12);
        assert_eq!(a.y_bj[(0, 0)], 0.0);
    }

    #[test]
    fn full_matrix_is_a_laplacian() {
        let s = parse_case(TOY, &LoadOptions::default()).unwrap();
        let (y, labels) = full_susceptance(&s);
        assert_eq!(labels.len(), 4);
        assert!((&y - y.transpose()).amax() < 1e-15);
        for r in 0..4 {
            assert!(y.row(r).sum().abs() < 1e-12);
            for c in 0..4 {
                if r != c {
                    assert!(y[(r, c)] <= 0.0);
                }
            }
        }
    }
}
