//! Structured command output.

use heis_core::{
    CellParams, Direction, Matrix, ObstructionCertificate, Outcome, Provenance, SearchBudget,
    SearchStage, Vector, Verdict,
};
use serde::{Deserialize, Serialize};

use crate::spec::SystemSpec;

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn entries(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub input: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_form: Option<NormalFormReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub d: f64,
    pub derivation_structural: bool,
    pub derivation_leibniz: bool,
    pub independent_controls: usize,
    pub controls_commute: bool,
    pub rank_condition: bool,
    pub ad_rank_condition: bool,
    pub singular: bool,
    /// 0-based indices of decoupled cells.
    pub decoupled_cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub outcome: Outcome,
    pub provenance: Provenance,
    pub exact_time: bool,
    pub notes: String,
    pub parameters: Vec<Parameter>,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
}

impl VerdictReport {
    pub fn new(v: &Verdict, explanation: String, verified: bool) -> Self {
        Self {
            outcome: v.outcome,
            provenance: v.provenance,
            exact_time: v.exact_time,
            notes: v.notes.clone(),
            parameters: v
                .parameters
                .iter()
                .map(|(name, value)| Parameter { name: name.clone(), value: *value })
                .collect(),
            explanation,
            certificate: v.certificate.as_ref().map(|c| CertificateReport::new(c, verified)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub stage: SearchStage,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub lprime: Vec<f64>,
    #[serde(rename = "Qprime")]
    pub qprime: Vec<Vec<f64>>,
    pub mu: f64,
    pub d: f64,
    /// `w` never crosses this level in the forbidden direction.
    pub threshold: f64,
    /// Columns of the frame the certificate lives in.
    pub frame: Vec<Vec<f64>>,
    pub residual: f64,
    pub verified: bool,
}

impl CertificateReport {
    pub fn new(c: &ObstructionCertificate, verified: bool) -> Self {
        Self {
            stage: c.stage,
            s: rows(&c.s),
            p: entries(&c.p),
            lprime: entries(&c.lprime),
            qprime: rows(&c.qprime),
            mu: c.mu,
            d: c.d,
            threshold: c.threshold(),
            frame: rows(c.frame.columns()),
            residual: c.residual,
            verified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub budget: SearchBudget,
    pub seed: u64,
    pub found: bool,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub index: usize,
    pub b: f64,
    pub c: f64,
    pub f: f64,
}

impl From<&CellParams> for CellReport {
    fn from(p: &CellParams) -> Self {
        Self { index: p.index, b: p.b, c: p.c, f: p.f }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalFormReport {
    H1 {
        b: f64,
        d: f64,
        f: f64,
        frame: Vec<Vec<f64>>,
    },
    Decoupled {
        d: f64,
        cells: Vec<CellReport>,
        frame: Vec<Vec<f64>>,
        /// Derivation in the normal-form frame.
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub segments: Vec<Segment>,
    pub endpoint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub horizon: f64,
    pub samples: usize,
    pub amplitude: f64,
    pub step: f64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    pub runs: Vec<Run>,
}
