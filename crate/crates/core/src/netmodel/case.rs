//! On-disk case schema. All MW and $ quantities are in external units here.

use serde::{Deserialize, Serialize};

fn default_base() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub areas: Vec<AreaFile>,
    #[serde(default)]
    pub tie_lines: Vec<TieLineFile>,
    #[serde(default)]
    pub boundary_constraints: Vec<BoundaryConstraintFile>,
    pub reference: ReferenceFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaFile {
    pub id: String,
    pub buses: Vec<BusFile>,
    #[serde(default)]
    pub branches: Vec<BranchFile>,
    #[serde(default)]
    pub generators: Vec<GeneratorFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Internal,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub id: String,
    pub kind: BusKind,
    #[serde(default)]
    pub load_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchFile {
    pub from: String,
    pub to: String,
    pub x_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub bus: String,
    pub a_usd_per_mw2h: f64,
    pub b_usd_per_mwh: f64,
    #[serde(default)]
    pub pmin_mw: f64,
    pub pmax_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLineFile {
    pub from_area: String,
    pub from_bus: String,
    pub to_area: String,
    pub to_bus: String,
    pub x_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub tie_index: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConstraintFile {
    pub terms: Vec<TermFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub area: String,
    pub bus: String,
}
