//! Seeded generator of feasible multi-area cases.

use std::collections::HashSet;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::case::{
    AreaFile, BoundaryConstraintFile, BranchFile, BusFile, BusKind, CaseFile, GeneratorFile, ReferenceFile,
    TermFile, TieLineFile,
};
use super::{build_local_qp, from_case_file, LoadOptions, MultiAreaSystem, NetError};
use crate::jed::solve_jed;
use crate::qp::{solve, QpOptions, QpStatus};

const MAX_RETRIES: usize = 100;
const BASE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomCaseSpec {
    pub areas: usize,
    pub buses_min: usize,
    pub buses_max: usize,
    pub seed: u64,
}

impl RandomCaseSpec {
    pub fn new(areas: usize, buses_min: usize, buses_max: usize, seed: u64) -> Self {
        Self {
            areas,
            buses_min,
            buses_max,
            seed,
        }
    }
}

/// Returns a connected, validated case that is feasible both jointly and per
/// area at the zero boundary state. The stream depends only on `spec`.
pub fn random_case(spec: &RandomCaseSpec) -> Result<MultiAreaSystem, NetError> {
    random_case_file(spec).and_then(|f| from_case_file(&f, &LoadOptions::default()))
}

/// Same as [`random_case`] but returns the external representation.
pub fn random_case_file(spec: &RandomCaseSpec) -> Result<CaseFile, NetError> {
    if spec.areas == 0 || spec.buses_min < 2 || spec.buses_max < spec.buses_min {
        return Err(NetError::Schema(format!(
            "invalid random case spec: {} areas, {}..{} buses",
            spec.areas, spec.buses_min, spec.buses_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_RETRIES {
        let draft = draft(&mut rng, spec);
        if let Some(file) = calibrate(&mut rng, draft) {
            return Ok(file);
        }
    }
    Err(NetError::RetryExhausted { seed: spec.seed })
}

fn draft<R: Rng>(rng: &mut R, spec: &RandomCaseSpec) -> CaseFile {
    let mut areas = Vec::new();
    let mut boundary_ids: Vec<Vec<String>> = Vec::new();
    for k in 0..spec.areas {
        let n = rng.gen_range(spec.buses_min..=spec.buses_max);
        let n_bnd = if spec.areas > 1 && n >= 4 && rng.gen_bool(0.5) { 2 } else { 1 };
        let n_int = n - n_bnd;
        let id = |j: usize| format!("a{}b{}", k + 1, j + 1);
        let mut buses = Vec::new();
        for j in 0..n {
            buses.push(BusFile {
                id: id(j),
                kind: if j < n_int {
                    BusKind::Internal
                } else {
                    BusKind::Boundary
                },
                load_mw: round2(rng.gen_range(5.0..40.0)),
            });
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        let mut branches = Vec::new();
        let mut add = |u: usize, v: usize, rng: &mut R, branches: &mut Vec<BranchFile>| {
            let key = (u.min(v), u.max(v));
            if u != v && edges.insert(key) {
                branches.push(BranchFile {
                    from: id(u),
                    to: id(v),
                    x_pu: round4(rng.gen_range(0.05..0.5)),
                    limit_mw: None,
                });
            }
        };
        for j in 1..n_int {
            let p = rng.gen_range(0..j);
            add(p, j, rng, &mut branches);
        }
        for j in n_int..n {
            let p = rng.gen_range(0..n_int);
            add(p, j, rng, &mut branches);
        }
        for _ in 0..n / 3 {
            let u = rng.gen_range(0..n_int);
            let v = rng.gen_range(0..n);
            add(u, v, rng, &mut branches);
        }

        let bias = rng.gen_range(0.7..1.3);
        let lo = (n_bnd + 1).min(n_int);
        let n_gen = rng.gen_range(lo..=n_int.max(lo));
        let mut sites: Vec<usize> = (0..n_int).collect();
        sites.shuffle(rng);
        sites.truncate(n_gen);
        sites.sort_unstable();
        let generators = sites
            .into_iter()
            .map(|s| GeneratorFile {
                bus: id(s),
                a_usd_per_mw2h: round4(rng.gen_range(0.002..0.02) * bias),
                b_usd_per_mwh: round2(rng.gen_range(10.0..40.0) * bias),
                pmin_mw: 0.0,
                pmax_mw: 0.0,
            })
            .collect();
        boundary_ids.push((n_int..n).map(id).collect());
        areas.push(AreaFile {
            id: format!("A{}", k + 1),
            buses,
            branches,
            generators,
        });
    }

    let mut tie_lines = Vec::new();
    let tie = |fa: usize, fb: &str, ta: usize, tb: &str, rng: &mut R| TieLineFile {
        from_area: format!("A{}", fa + 1),
        from_bus: fb.to_string(),
        to_area: format!("A{}", ta + 1),
        to_bus: tb.to_string(),
        x_pu: round4(rng.gen_range(0.05..0.5)),
        limit_mw: Some(round2(rng.gen_range(20.0..80.0))),
    };
    let mut used: Vec<HashSet<String>> = vec![HashSet::new(); spec.areas];
    for k in 0..spec.areas.saturating_sub(1) {
        let fb = boundary_ids[k].choose(rng).unwrap().clone();
        let tb = boundary_ids[k + 1].choose(rng).unwrap().clone();
        used[k].insert(fb.clone());
        used[k + 1].insert(tb.clone());
        tie_lines.push(tie(k, &fb, k + 1, &tb, rng));
    }
    // every boundary bus gets at least one tie
    for k in 0..spec.areas {
        for b in boundary_ids[k].clone() {
            if used[k].contains(&b) || spec.areas < 2 {
                continue;
            }
            let other = if k + 1 < spec.areas { k + 1 } else { k - 1 };
            let ob = boundary_ids[other].choose(rng).unwrap().clone();
            used[k].insert(b.clone());
            tie_lines.push(tie(k, &b, other, &ob, rng));
        }
    }
    if spec.areas >= 3 && rng.gen_bool(0.5) {
        let fb = boundary_ids[spec.areas - 1].choose(rng).unwrap().clone();
        let tb = boundary_ids[0].choose(rng).unwrap().clone();
        tie_lines.push(tie(spec.areas - 1, &fb, 0, &tb, rng));
    }

    let mut boundary_constraints = Vec::new();
    if tie_lines.len() >= 2 && rng.gen_bool(0.3) {
        let cap: f64 = tie_lines.iter().take(2).map(|t| t.limit_mw.unwrap()).sum();
        let lim = round2(cap * rng.gen_range(0.5..0.9));
        boundary_constraints.push(BoundaryConstraintFile {
            terms: vec![TermFile { tie_index: 0, coeff: 1.0 }, TermFile { tie_index: 1, coeff: 1.0 }],
            lower_mw: Some(-lim),
            upper_mw: Some(lim),
        });
    }

    let reference = ReferenceFile {
        area: "A1".into(),
        bus: boundary_ids[0][0].clone(),
    };
    // capacities: each area can cover its own load plus full export
    for area in areas.iter_mut() {
        let load: f64 = area.buses.iter().map(|b| b.load_mw).sum();
        let export: f64 = tie_lines
            .iter()
            .filter(|t| t.from_area == area.id || t.to_area == area.id)
            .map(|t| t.limit_mw.unwrap())
            .sum();
        let total = (load + export) * rng.gen_range(1.2..1.6);
        let w: Vec<f64> = area.generators.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
        let ws: f64 = w.iter().sum();
        for (g, wi) in area.generators.iter_mut().zip(w) {
            g.pmax_mw = round2(total * wi / ws);
            if rng.gen_bool(0.3) {
                g.pmin_mw = round2(g.pmax_mw * 0.05);
            }
        }
    }
    CaseFile {
        base_mva: BASE,
        areas,
        tie_lines,
        boundary_constraints,
        reference,
    }
}

/// Tightens a few limits around a reference dispatch so the optimum binds
/// some branch and generator constraints, then checks feasibility. Returns
/// `None` when the attempt should be discarded.
fn calibrate<R: Rng>(rng: &mut R, mut file: CaseFile) -> Option<CaseFile> {
    let sys = from_case_file(&file, &LoadOptions::default()).ok()?;
    let reference = solve_jed(&sys).ok()?;

    for (ai, area) in file.areas.iter_mut().enumerate() {
        let internal: HashSet<&str> = area
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Internal)
            .map(|b| b.id.as_str())
            .collect();
        let theta = &reference.theta[ai];
        let idx = |id: &str| area.buses.iter().position(|b| b.id == id).unwrap();
        let flows: Vec<f64> = area
            .branches
            .iter()
            .map(|br| (theta[idx(&br.from)] - theta[idx(&br.to)]) / br.x_pu * BASE)
            .collect();
        for (br, f) in area.branches.iter_mut().zip(flows) {
            if !(internal.contains(br.from.as_str()) && internal.contains(br.to.as_str())) {
                continue;
            }
            let u: f64 = rng.gen();
            br.limit_mw = if u < 0.25 {
                Some(round2((f.abs() * rng.gen_range(0.75..0.95)).max(2.0)))
            } else if u < 0.6 {
                Some(round2((f.abs() * rng.gen_range(1.5..3.0)).max(10.0)))
            } else {
                None
            };
        }
        for (g, &p) in area.generators.iter_mut().zip(reference.g[ai].iter()) {
            if rng.gen_bool(0.2) {
                let target = round2(p * BASE * rng.gen_range(0.8..0.95));
                if target > g.pmin_mw + 1.0 {
                    g.pmax_mw = target;
                }
            }
        }
    }

    let sys = from_case_file(&file, &LoadOptions::default()).ok()?;
    let cap: f64 = sys.areas.iter().flat_map(|a| &a.generators).map(|g| g.pmax).sum();
    if cap < 1.2 * sys.total_load() {
        return None;
    }
    solve_jed(&sys).ok()?;
    let zero = DVector::zeros(sys.theta_dim());
    for ai in 0..sys.areas.len() {
        let local = build_local_qp(&sys, ai).ok()?;
        let s = solve(&local.qp_at(&zero), &QpOptions::default()).ok()?;
        if s.status != QpStatus::Optimal {
            return None;
        }
    }
    Some(file)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}
