//! Per-iteration CSV trace.
//!
//! Columns: `iter, theta_0..theta_{n-1}, master_cost_usd_hr, mu_norm_sq,
//! n_active_boundary, floats_up, floats_down, region_signature_hash`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crp_core::coordinator::{CrpRun, IterationRecord};
use sha2::{Digest, Sha256};

/// First 16 hex digits of SHA-256 over the per-area active sets.
pub fn signature_hash(signatures: &[Vec<usize>]) -> String {
    let text: Vec<String> = signatures
        .iter()
        .enumerate()
        .map(|(a, s)| {
            let rows: Vec<String> = s.iter().map(usize::to_string).collect();
            format!("{a}:{}", rows.join(","))
        })
        .collect();
    let digest = Sha256::digest(text.join(";").as_bytes());
    digest.iter().take(8).fold(String::new(), |mut out, b| {
        let _ = write!(out, "{b:02x}");
        out
    })
}

pub fn render(run: &CrpRun) -> String {
    let dim = run.final_theta.len();
    let mut out = String::from("iter");
    for i in 0..dim {
        let _ = write!(out, ",theta_{i}");
    }
    out.push_str(",master_cost_usd_hr,mu_norm_sq,n_active_boundary,floats_up,floats_down,region_signature_hash\n");
    for r in &run.iterations {
        row(&mut out, r);
    }
    out
}

fn row(out: &mut String, r: &IterationRecord) {
    let _ = write!(out, "{}", r.t);
    for v in r.theta.iter() {
        let _ = write!(out, ",{v:e}");
    }
    let _ = writeln!(
        out,
        ",{:e},{:e},{},{},{},{}",
        r.master_cost,
        r.mu_norm_sq,
        r.n_active_boundary,
        r.floats_up,
        r.floats_down,
        signature_hash(&r.signatures)
    );
}

pub fn write(path: &Path, run: &CrpRun) -> io::Result<()> {
    std::fs::write(path, render(run))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_area_split() {
        let a = signature_hash(&[vec![1, 2], vec![]]);
        let b = signature_hash(&[vec![1], vec![2]]);
        assert_eq!(a.len(), 16);
        assert_ne!(a, b);
        assert_eq!(a, signature_hash(&[vec![1, 2], vec![]]));
    }
}
