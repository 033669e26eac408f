//! CSV and JSON emission.

use std::fs;
use std::path::Path;

use cautious_core::GapReport;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// 17 significant digits, `.` decimal separator.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_line<I: IntoIterator<Item = String>>(fields: I) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

pub fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub upper: f64,
    pub lower: f64,
    pub max_uncertainty: f64,
    pub attained_at: Vec<f64>,
    pub certified: bool,
}

impl From<&GapReport> for GapSummary {
    fn from(r: &GapReport) -> Self {
        Self {
            upper: r.upper,
            lower: r.lower,
            max_uncertainty: r.max_uncertainty,
            attained_at: r.attained_at.iter().copied().collect(),
            certified: r.certified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub z_star: Vec<f64>,
    /// Worst-case bound at `z_star` (weighted objective when `lambda > 0`).
    pub value: f64,
    pub lambda: f64,
    pub fw_gap: f64,
    pub solver_gap: f64,
    pub members: usize,
    pub convexity: String,
    pub gap_report: GapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub seed: u64,
    pub start_index: usize,
    pub z0: Vec<f64>,
    pub iterations: usize,
    pub final_z: Vec<f64>,
    pub final_bound: f64,
    pub final_uncertainty: f64,
    pub convexity: String,
    pub gap_report: Option<GapSummary>,
    pub monotonicity_violations: Vec<usize>,
    pub csv: String,
    pub wall_time_s: f64,
}
