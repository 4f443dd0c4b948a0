//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use crp_core::qp::{QpProblem, QpSolution};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Exhaustive active-set enumeration: for every subset of inequalities, solve the
/// equality-constrained KKT system directly and keep the best primal-feasible point.
pub fn brute_force_qp(p: &QpProblem) -> Option<f64> {
    let n = p.dim();
    let m = p.a_ineq.nrows();
    let me = p.a_eq.nrows();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m) {
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let k = me + set.len();
        if k > n {
            continue;
        }
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&p.q * 2.0));
        for i in 0..n {
            rhs[i] = -p.c[i];
        }
        for r in 0..me {
            for c in 0..n {
                kkt[(n + r, c)] = p.a_eq[(r, c)];
                kkt[(c, n + r)] = p.a_eq[(r, c)];
            }
            rhs[n + r] = -p.b_eq[r];
        }
        for (s, &j) in set.iter().enumerate() {
            let r = me + s;
            for c in 0..n {
                kkt[(n + r, c)] = p.a_ineq[(j, c)];
                kkt[(c, n + r)] = p.a_ineq[(j, c)];
            }
            rhs[n + r] = -p.b_ineq[j];
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let resid = (&p.a_eq * &x + &p.b_eq).amax();
        if me > 0 && resid > 1e-9 {
            continue;
        }
        let slack = &p.a_ineq * &x + &p.b_ineq;
        if slack.iter().any(|&s| s > 1e-9) {
            continue;
        }
        let obj = p.objective(&x);
        if best.is_none_or(|b| obj < b) {
            best = Some(obj);
        }
    }
    best
}

/// Strictly convex QP with `m` inequalities around a known feasible point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m: usize, me: usize) -> QpProblem {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = b.transpose() * &b + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let xf = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| rng.gen_range(0.0..0.5));
    let bi = -(&a * &xf) - slack;
    let ae = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    let be = -(&ae * &xf);
    QpProblem::new(q, c).with_equalities(ae, be).with_inequalities(a, bi)
}

#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
    pub stationarity: f64,
}

pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let slack = p.slacks(&s.x);
    let eq = p.eq_residual(&s.x);
    let primal = slack.iter().fold(eq.amax(), |a, &v| a.max(v));
    let dual = s.mu.iter().fold(0.0_f64, |a, &v| a.max(-v));
    let complementarity = s
        .mu
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |a, (m, v)| a.max((m * v).abs()));
    let stationarity = p.stationarity(&s.x, &s.lambda, &s.mu).amax();
    KktResiduals {
        primal,
        dual,
        complementarity,
        stationarity,
    }
}
