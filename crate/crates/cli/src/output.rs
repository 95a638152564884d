//! CSV row types of the primary outputs.
//!
//! Floats are written in shortest round-trip form, so every file parses
//! back into the rows that produced it.

use mhscale_core::estimators::EstimateWithError;
use mhscale_core::scaling::{M2Table, NSweepTable, ScalingCurve};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCALING_HEADER: [&str; 7] = ["tau", "acc", "acc_se", "esjd", "esjd_se", "c_theory", "eff_theory"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCsvRow {
    pub tau: f64,
    pub acc: f64,
    pub acc_se: f64,
    pub esjd: f64,
    pub esjd_se: f64,
    pub c_theory: f64,
    pub eff_theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub delta_h: f64,
    pub accepted: bool,
    pub jump_sq_first_coord: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub config_hash: String,
}

impl EstimatorRow {
    pub fn new(name: &str, e: &EstimateWithError, config_hash: &str) -> Self {
        EstimatorRow {
            estimator: name.to_string(),
            value: e.value,
            std_error: e.std_error,
            n_samples: e.n_samples,
            config_hash: config_hash.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSweepCsvRow {
    pub n: usize,
    pub acc: f64,
    pub acc_se: f64,
    pub c_theory: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2CsvRow {
    pub n: usize,
    pub empirical: f64,
    pub empirical_se: f64,
    pub limiting: f64,
    pub limiting_se: f64,
    pub gap: f64,
    pub gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

pub fn scaling_rows(curve: &ScalingCurve) -> Vec<ScalingCsvRow> {
    curve
        .rows
        .iter()
        .map(|r| ScalingCsvRow {
            tau: r.tau,
            acc: r.acceptance.value,
            acc_se: r.acceptance.std_error,
            esjd: r.esjd.value,
            esjd_se: r.esjd.std_error,
            c_theory: r.c_theory,
            eff_theory: r.efficiency_theory,
        })
        .collect()
}

pub fn n_sweep_rows(table: &NSweepTable) -> Vec<NSweepCsvRow> {
    table
        .rows
        .iter()
        .map(|r| NSweepCsvRow {
            n: r.n,
            acc: r.acceptance.value,
            acc_se: r.acceptance.std_error,
            c_theory: r.c_theory,
            gap: r.gap,
        })
        .collect()
}

pub fn m2_rows(table: &M2Table) -> Vec<M2CsvRow> {
    table
        .rows
        .iter()
        .map(|r| M2CsvRow {
            n: r.n,
            empirical: r.empirical.value,
            empirical_se: r.empirical.std_error,
            limiting: r.limiting.value,
            limiting_se: r.limiting.std_error,
            gap: r.gap,
            gap_se: r.gap_se,
        })
        .collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

pub fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, CliError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Runtime(format!("csv: {e}")))
}
