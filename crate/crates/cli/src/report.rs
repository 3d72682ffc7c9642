//! Versioned JSON reports.

use ldg_core::asymptotics::{self, ConvergenceReport};
use ldg_core::bulk::MaterialParams;
use ldg_core::field::{self, QField};
use ldg_core::qtensor;
use ldg_core::solve::SolveReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::export::Stamp;

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct ReportProvenance {
    #[serde(flatten)]
    pub stamp: Stamp,
    /// The effective configuration after command-line overrides.
    pub config: Option<RunConfig>,
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub kind: &'static str,
    pub provenance: ReportProvenance,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &'static str, stamp: Stamp, config: Option<RunConfig>, result: T) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            kind,
            provenance: ReportProvenance { stamp, config },
            result,
        }
    }

    pub fn to_json(&self) -> String {
        // Reports hold only plain data; serialization cannot fail.
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldSummary {
    pub dims: [usize; 3],
    pub h: f64,
    pub params: MaterialParams,
    pub elastic_energy: f64,
    /// `∫ f̃_B`, the bulk energy relative to its minimum.
    pub bulk_energy: f64,
    pub total_energy: f64,
    pub residual: f64,
    pub max_q_norm: f64,
    pub max_beta: f64,
    /// Measure of `{|Q| ≤ ½√(2/3)s₊}`.
    pub omega_star_measure: f64,
    /// Measure of `{|Q| > ½√(2/3)s₊, β > λ}`.
    pub omega_lambda_measure: f64,
    pub lambda: f64,
    pub boundary_normal_deriv_sq: f64,
    pub min_eigen_gap: f64,
}

pub fn summarize(f: &QField, p: &MaterialParams, lambda: f64) -> Result<FieldSummary> {
    let (omega_star, omega_lambda) = asymptotics::region_measures(f, p, lambda)?;
    let elastic = field::elastic_energy(f, p);
    let bulk = field::bulk_energy(f, p);
    Ok(FieldSummary {
        dims: f.grid.dims(),
        h: f.grid.h,
        params: *p,
        elastic_energy: elastic,
        bulk_energy: bulk,
        total_energy: elastic + bulk,
        residual: field::el_residual(f, p).0,
        max_q_norm: f.max_norm(),
        max_beta: f.values.iter().map(qtensor::biaxiality).fold(0.0, f64::max),
        omega_star_measure: omega_star,
        omega_lambda_measure: omega_lambda,
        lambda,
        boundary_normal_deriv_sq: asymptotics::boundary_normal_energy(f),
        min_eigen_gap: asymptotics::eigen_gap_map(f).into_iter().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Serialize)]
pub struct SolveResult {
    pub solver: SolveReport,
    pub field: FieldSummary,
}

pub type SolveDocument = Report<SolveResult>;
pub type SweepDocument = Report<ConvergenceReport>;
pub type AnalyzeDocument = Report<FieldSummary>;
