//! Multi-area network model: case loading, validation and the matrices of the
//! joint and per-area dispatch problems.
//!
//! Internally every power quantity is per-unit on `base_mva`; cost coefficients
//! are rescaled so that costs stay in $/h.

mod admittance;
pub mod case;
mod local;
mod polytope;
mod random;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use thiserror::Error;

pub use admittance::{assemble_admittance, full_susceptance, Admittance, AreaBlocks};
pub use case::{BusKind, CaseFile};
pub use local::{build_local_qp, ConstraintLabel, LocalQpData};
pub use polytope::{boundary_polytope, build_boundary_polytope, BoundaryPolytope};
pub use random::{random_case, random_case_file, RandomCaseSpec};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("duplicate area id `{0}`")]
    DuplicateArea(String),
    #[error("unknown area `{0}`")]
    UnknownArea(String),
    #[error("area `{area}`: duplicate bus id `{bus}`")]
    DuplicateBus { area: String, bus: String },
    #[error("area `{area}`: unknown bus `{bus}`")]
    UnknownBus { area: String, bus: String },
    #[error("tie-line {index}: endpoint `{area}/{bus}` is not a boundary bus")]
    TieEndpoint { index: usize, area: String, bus: String },
    #[error("tie-line {index} connects area `{area}` to itself")]
    TieSameArea { index: usize, area: String },
    #[error("{element}: reactance must be positive, got {value}")]
    NonPositiveReactance { element: String, value: f64 },
    #[error("{element}: quadratic cost coefficient must be positive, got {value}")]
    NonPositiveCost { element: String, value: f64 },
    #[error("{element}: pmin {pmin} MW exceeds pmax {pmax} MW")]
    GeneratorLimits { element: String, pmin: f64, pmax: f64 },
    #[error("{element}: invalid value {value}")]
    InvalidValue { element: String, value: f64 },
    #[error("network is disconnected: bus `{area}/{bus}` is unreachable from the reference")]
    Disconnected { area: String, bus: String },
    #[error("reference bus `{area}/{bus}` does not exist")]
    MissingReference { area: String, bus: String },
    #[error("reference bus `{area}/{bus}` is not a boundary bus")]
    ReferenceNotBoundary { area: String, bus: String },
    #[error("boundary constraint {index}: unknown tie index {tie}")]
    UnknownTie { index: usize, tie: usize },
    #[error("area `{0}`: internal susceptance block is singular (internal island without a boundary path)")]
    SingularInternal(String),
    #[error("area `{area}`: generator-to-boundary map has rank {rank} < {boundary} boundary buses")]
    RankDeficient { area: String, rank: usize, boundary: usize },
    #[error("boundary state is infeasible: row {row} ({label}) has value {value:.3e} > 0")]
    ThetaInfeasible { row: usize, label: String, value: f64 },
    #[error("random case generation exhausted its retry budget for seed {seed}")]
    RetryExhausted { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Reactance (p.u.) of the branch joining a boundary bus that carries a
    /// generator to its inserted fictitious boundary twin.
    pub fictitious_reactance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            fictitious_reactance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    /// Load in p.u.
    pub load: f64,
    /// Inserted during loading to keep generators off boundary buses.
    pub fictitious: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Bus indices within the owning area.
    pub from: usize,
    pub to: usize,
    pub x: f64,
    /// Flow limit in p.u., symmetric.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    /// Quadratic coefficient in $/h per p.u.².
    pub a: f64,
    /// Linear coefficient in $/h per p.u.
    pub b: f64,
    pub pmin: f64,
    pub pmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Area {
    pub id: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl Area {
    pub fn internal_buses(&self) -> Vec<usize> {
        self.indices(BusKind::Internal)
    }

    pub fn boundary_buses(&self) -> Vec<usize> {
        self.indices(BusKind::Boundary)
    }

    fn indices(&self, kind: BusKind) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&i| self.buses[i].kind == kind)
            .collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TieLine {
    pub from_area: usize,
    pub from_bus: usize,
    pub to_area: usize,
    pub to_bus: usize,
    pub x: f64,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConstraint {
    /// (tie index, coefficient) pairs over tie flows.
    pub terms: Vec<(usize, f64)>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiAreaSystem {
    pub base_mva: f64,
    pub areas: Vec<Area>,
    pub tie_lines: Vec<TieLine>,
    pub boundary_constraints: Vec<BoundaryConstraint>,
    /// (area index, bus index) of the zero-angle boundary bus.
    pub reference: (usize, usize),
    boundary: Vec<(usize, usize)>,
}

impl MultiAreaSystem {
    /// All boundary buses in area order, then bus order.
    pub fn boundary_buses(&self) -> &[(usize, usize)] {
        &self.boundary
    }

    /// Dimension of the reduced boundary state (reference removed).
    pub fn theta_dim(&self) -> usize {
        self.boundary.len() - 1
    }

    /// Position of a boundary bus in the reduced boundary state; `None` for the
    /// reference or a non-boundary bus.
    pub fn reduced_index(&self, area: usize, bus: usize) -> Option<usize> {
        let pos = self.boundary.iter().position(|&p| p == (area, bus))?;
        let r = self.boundary.iter().position(|&p| p == self.reference)?;
        match pos.cmp(&r) {
            std::cmp::Ordering::Less => Some(pos),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(pos - 1),
        }
    }

    /// Maps a global boundary index to the reduced coordinate.
    pub(crate) fn reduce_global(&self, global: usize) -> Option<usize> {
        let (a, b) = self.boundary[global];
        self.reduced_index(a, b)
    }

    pub fn n_generators(&self) -> usize {
        self.areas.iter().map(|a| a.generators.len()).sum()
    }

    pub fn total_load(&self) -> f64 {
        self.areas.iter().map(|a| a.total_load()).sum()
    }

    /// Cost in $/h of a per-area list of p.u. generation vectors.
    pub fn cost(&self, gens: &[Vec<f64>]) -> f64 {
        self.areas
            .iter()
            .zip(gens)
            .map(|(a, g)| {
                a.generators
                    .iter()
                    .zip(g)
                    .map(|(gen, &p)| gen.a * p * p + gen.b * p)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn bus_label(&self, area: usize, bus: usize) -> String {
        format!("{}/{}", self.areas[area].id, self.areas[area].buses[bus].id)
    }

    /// Tie flow (p.u.) from the reduced boundary state.
    pub fn tie_flow(&self, tie: usize, theta: &[f64]) -> f64 {
        let t = &self.tie_lines[tie];
        let ang = |a, b| self.reduced_index(a, b).map_or(0.0, |i| theta[i]);
        (ang(t.from_area, t.from_bus) - ang(t.to_area, t.to_bus)) / t.x
    }

    /// Converts back to the external schema. Fictitious buses are written as
    /// ordinary boundary buses, so reloading yields the same system.
    pub fn to_case_file(&self) -> CaseFile {
        let base = self.base_mva;
        let areas = self
            .areas
            .iter()
            .map(|a| case::AreaFile {
                id: a.id.clone(),
                buses: a
                    .buses
                    .iter()
                    .map(|b| case::BusFile {
                        id: b.id.clone(),
                        kind: b.kind,
                        load_mw: b.load * base,
                    })
                    .collect(),
                branches: a
                    .branches
                    .iter()
                    .map(|br| case::BranchFile {
                        from: a.buses[br.from].id.clone(),
                        to: a.buses[br.to].id.clone(),
                        x_pu: br.x,
                        limit_mw: br.limit.map(|l| l * base),
                    })
                    .collect(),
                generators: a
                    .generators
                    .iter()
                    .map(|g| case::GeneratorFile {
                        bus: a.buses[g.bus].id.clone(),
                        a_usd_per_mw2h: g.a / (base * base),
                        b_usd_per_mwh: g.b / base,
                        pmin_mw: g.pmin * base,
                        pmax_mw: g.pmax * base,
                    })
                    .collect(),
            })
            .collect();
        let tie_lines = self
            .tie_lines
            .iter()
            .map(|t| case::TieLineFile {
                from_area: self.areas[t.from_area].id.clone(),
                from_bus: self.areas[t.from_area].buses[t.from_bus].id.clone(),
                to_area: self.areas[t.to_area].id.clone(),
                to_bus: self.areas[t.to_area].buses[t.to_bus].id.clone(),
                x_pu: t.x,
                limit_mw: t.limit.map(|l| l * base),
            })
            .collect();
        let boundary_constraints = self
            .boundary_constraints
            .iter()
            .map(|c| case::BoundaryConstraintFile {
                terms: c
                    .terms
                    .iter()
                    .map(|&(tie_index, coeff)| case::TermFile { tie_index, coeff })
                    .collect(),
                lower_mw: c.lower.map(|l| l * base),
                upper_mw: c.upper.map(|u| u * base),
            })
            .collect();
        let (ra, rb) = self.reference;
        CaseFile {
            base_mva: base,
            areas,
            tie_lines,
            boundary_constraints,
            reference: case::ReferenceFile {
                area: self.areas[ra].id.clone(),
                bus: self.areas[ra].buses[rb].id.clone(),
            },
        }
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<MultiAreaSystem, NetError> {
    load_case_with(path, &LoadOptions::default())
}

pub fn load_case_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<MultiAreaSystem, NetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text, opts)
}

pub fn parse_case(text: &str, opts: &LoadOptions) -> Result<MultiAreaSystem, NetError> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| NetError::Schema(e.to_string()))?;
    from_case_file(&file, opts)
}

fn finite(element: impl FnOnce() -> String, value: f64) -> Result<(), NetError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(NetError::InvalidValue {
            element: element(),
            value,
        })
    }
}

/// Validates and normalizes a parsed case.
pub fn from_case_file(file: &CaseFile, opts: &LoadOptions) -> Result<MultiAreaSystem, NetError> {
    let base = file.base_mva;
    if !(base.is_finite() && base > 0.0) {
        return Err(NetError::InvalidValue {
            element: "base_mva".into(),
            value: base,
        });
    }
    if !(opts.fictitious_reactance.is_finite() && opts.fictitious_reactance > 0.0) {
        return Err(NetError::NonPositiveReactance {
            element: "fictitious reactance option".into(),
            value: opts.fictitious_reactance,
        });
    }
    if file.areas.is_empty() {
        return Err(NetError::Schema("case has no areas".into()));
    }

    let mut area_index = HashMap::new();
    let mut bus_maps: Vec<HashMap<String, usize>> = Vec::new();
    let mut areas = Vec::new();
    for (ai, af) in file.areas.iter().enumerate() {
        if area_index.insert(af.id.clone(), ai).is_some() {
            return Err(NetError::DuplicateArea(af.id.clone()));
        }
        let mut map = HashMap::new();
        let mut buses = Vec::new();
        for (bi, bf) in af.buses.iter().enumerate() {
            if map.insert(bf.id.clone(), bi).is_some() {
                return Err(NetError::DuplicateBus {
                    area: af.id.clone(),
                    bus: bf.id.clone(),
                });
            }
            finite(|| format!("bus `{}/{}` load", af.id, bf.id), bf.load_mw)?;
            buses.push(Bus {
                id: bf.id.clone(),
                kind: bf.kind,
                load: bf.load_mw / base,
                fictitious: false,
            });
        }
        let lookup = |id: &str| {
            map.get(id).copied().ok_or_else(|| NetError::UnknownBus {
                area: af.id.clone(),
                bus: id.to_string(),
            })
        };
        let mut branches = Vec::new();
        for (k, br) in af.branches.iter().enumerate() {
            let from = lookup(&br.from)?;
            let to = lookup(&br.to)?;
            let element = || format!("area `{}` branch {k} ({}-{})", af.id, br.from, br.to);
            if !(br.x_pu.is_finite() && br.x_pu > 0.0) {
                return Err(NetError::NonPositiveReactance {
                    element: element(),
                    value: br.x_pu,
                });
            }
            if from == to {
                return Err(NetError::Schema(format!("{} is a self-loop", element())));
            }
            if let Some(l) = br.limit_mw {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(NetError::InvalidValue {
                        element: format!("{} limit", element()),
                        value: l,
                    });
                }
            }
            branches.push(Branch {
                from,
                to,
                x: br.x_pu,
                limit: br.limit_mw.map(|l| l / base),
            });
        }
        let mut generators = Vec::new();
        for gf in &af.generators {
            let bus = lookup(&gf.bus)?;
            let element = || format!("generator at `{}/{}`", af.id, gf.bus);
            if !(gf.a_usd_per_mw2h.is_finite() && gf.a_usd_per_mw2h > 0.0) {
                return Err(NetError::NonPositiveCost {
                    element: element(),
                    value: gf.a_usd_per_mw2h,
                });
            }
            finite(|| format!("{} linear cost", element()), gf.b_usd_per_mwh)?;
            finite(|| format!("{} pmin", element()), gf.pmin_mw)?;
            finite(|| format!("{} pmax", element()), gf.pmax_mw)?;
            if gf.pmin_mw > gf.pmax_mw {
                return Err(NetError::GeneratorLimits {
                    element: element(),
                    pmin: gf.pmin_mw,
                    pmax: gf.pmax_mw,
                });
            }
            generators.push(Generator {
                bus,
                a: gf.a_usd_per_mw2h * base * base,
                b: gf.b_usd_per_mwh * base,
                pmin: gf.pmin_mw / base,
                pmax: gf.pmax_mw / base,
            });
        }
        areas.push(Area {
            id: af.id.clone(),
            buses,
            branches,
            generators,
        });
        bus_maps.push(map);
    }

    let find = |area: &str, bus: &str| -> Result<(usize, usize), NetError> {
        let a = *area_index
            .get(area)
            .ok_or_else(|| NetError::UnknownArea(area.to_string()))?;
        let b = *bus_maps[a].get(bus).ok_or_else(|| NetError::UnknownBus {
            area: area.to_string(),
            bus: bus.to_string(),
        })?;
        Ok((a, b))
    };

    let mut tie_lines = Vec::new();
    for (k, tf) in file.tie_lines.iter().enumerate() {
        let (fa, fb) = find(&tf.from_area, &tf.from_bus)?;
        let (ta, tb) = find(&tf.to_area, &tf.to_bus)?;
        if fa == ta {
            return Err(NetError::TieSameArea {
                index: k,
                area: tf.from_area.clone(),
            });
        }
        for (a, b) in [(fa, fb), (ta, tb)] {
            if areas[a].buses[b].kind != BusKind::Boundary {
                return Err(NetError::TieEndpoint {
                    index: k,
                    area: areas[a].id.clone(),
                    bus: areas[a].buses[b].id.clone(),
                });
            }
        }
        if !(tf.x_pu.is_finite() && tf.x_pu > 0.0) {
            return Err(NetError::NonPositiveReactance {
                element: format!("tie-line {k}"),
                value: tf.x_pu,
            });
        }
        if let Some(l) = tf.limit_mw {
            if !(l.is_finite() && l >= 0.0) {
                return Err(NetError::InvalidValue {
                    element: format!("tie-line {k} limit"),
                    value: l,
                });
            }
        }
        tie_lines.push(TieLine {
            from_area: fa,
            from_bus: fb,
            to_area: ta,
            to_bus: tb,
            x: tf.x_pu,
            limit: tf.limit_mw.map(|l| l / base),
        });
    }

    let mut boundary_constraints = Vec::new();
    for (k, cf) in file.boundary_constraints.iter().enumerate() {
        let mut terms = Vec::new();
        for t in &cf.terms {
            if t.tie_index >= tie_lines.len() {
                return Err(NetError::UnknownTie {
                    index: k,
                    tie: t.tie_index,
                });
            }
            finite(|| format!("boundary constraint {k} coefficient"), t.coeff)?;
            terms.push((t.tie_index, t.coeff));
        }
        for v in [cf.lower_mw, cf.upper_mw].into_iter().flatten() {
            finite(|| format!("boundary constraint {k} bound"), v)?;
        }
        if let (Some(l), Some(u)) = (cf.lower_mw, cf.upper_mw) {
            if l > u {
                return Err(NetError::Schema(format!(
                    "boundary constraint {k}: lower {l} MW exceeds upper {u} MW"
                )));
            }
        }
        boundary_constraints.push(BoundaryConstraint {
            terms,
            lower: cf.lower_mw.map(|l| l / base),
            upper: cf.upper_mw.map(|u| u / base),
        });
    }

    let reference = find(&file.reference.area, &file.reference.bus).map_err(|_| NetError::MissingReference {
        area: file.reference.area.clone(),
        bus: file.reference.bus.clone(),
    })?;
    if areas[reference.0].buses[reference.1].kind != BusKind::Boundary {
        return Err(NetError::ReferenceNotBoundary {
            area: file.reference.area.clone(),
            bus: file.reference.bus.clone(),
        });
    }

    let mut sys = MultiAreaSystem {
        base_mva: base,
        areas,
        tie_lines,
        boundary_constraints,
        reference,
        boundary: Vec::new(),
    };
    normalize_boundary_generators(&mut sys, opts.fictitious_reactance)?;
    sys.boundary = collect_boundary(&sys.areas);
    check_connected(&sys)?;
    for i in 0..sys.areas.len() {
        build_local_qp(&sys, i)?;
    }
    Ok(sys)
}

fn collect_boundary(areas: &[Area]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ai, a) in areas.iter().enumerate() {
        for bi in a.boundary_buses() {
            out.push((ai, bi));
        }
    }
    out
}

/// Demotes every boundary bus that carries a generator to internal and inserts
/// a fictitious boundary twin right after it, which takes over its tie-lines
/// (and the reference role, if any).
fn normalize_boundary_generators(sys: &mut MultiAreaSystem, x: f64) -> Result<(), NetError> {
    for ai in 0..sys.areas.len() {
        let mut bi = 0;
        while bi < sys.areas[ai].buses.len() {
            let area = &sys.areas[ai];
            let has_gen = area.generators.iter().any(|g| g.bus == bi);
            if area.buses[bi].kind != BusKind::Boundary || !has_gen {
                bi += 1;
                continue;
            }
            let twin_id = format!("{}~f", area.buses[bi].id);
            if area.buses.iter().any(|b| b.id == twin_id) {
                return Err(NetError::DuplicateBus {
                    area: area.id.clone(),
                    bus: twin_id,
                });
            }
            let twin = bi + 1;
            let area = &mut sys.areas[ai];
            area.buses[bi].kind = BusKind::Internal;
            area.buses.insert(
                twin,
                Bus {
                    id: twin_id,
                    kind: BusKind::Boundary,
                    load: 0.0,
                    fictitious: true,
                },
            );
            let shift = |i: usize| if i >= twin { i + 1 } else { i };
            for br in &mut area.branches {
                br.from = shift(br.from);
                br.to = shift(br.to);
            }
            for g in &mut area.generators {
                g.bus = shift(g.bus);
            }
            area.branches.push(Branch {
                from: bi,
                to: twin,
                x,
                limit: None,
            });
            for t in &mut sys.tie_lines {
                for (a, b) in [(t.from_area, &mut t.from_bus), (t.to_area, &mut t.to_bus)] {
                    if a == ai {
                        *b = if *b == bi { twin } else { shift(*b) };
                    }
                }
            }
            if sys.reference.0 == ai {
                let r = sys.reference.1;
                sys.reference.1 = if r == bi { twin } else { shift(r) };
            }
            bi = twin + 1;
        }
    }
    Ok(())
}

fn check_connected(sys: &MultiAreaSystem) -> Result<(), NetError> {
    let offsets: Vec<usize> = sys
        .areas
        .iter()
        .scan(0, |acc, a| {
            let o = *acc;
            *acc += a.buses.len();
            Some(o)
        })
        .collect();
    let total: usize = sys.areas.iter().map(|a| a.buses.len()).sum();
    let mut adj = vec![Vec::new(); total];
    for (ai, a) in sys.areas.iter().enumerate() {
        for br in &a.branches {
            let (u, v) = (offsets[ai] + br.from, offsets[ai] + br.to);
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    for t in &sys.tie_lines {
        let (u, v) = (offsets[t.from_area] + t.from_bus, offsets[t.to_area] + t.to_bus);
        adj[u].push(v);
        adj[v].push(u);
    }
    let start = offsets[sys.reference.0] + sys.reference.1;
    let mut seen = vec![false; total];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    for (ai, a) in sys.areas.iter().enumerate() {
        for (bi, b) in a.buses.iter().enumerate() {
            if !seen[offsets[ai] + bi] {
                return Err(NetError::Disconnected {
                    area: a.id.clone(),
                    bus: b.id.clone(),
                });
            }
        }
    }
    Ok(())
}
