//! Token accounting, dollar cost and linear cost/runtime projections.
//!
//! Provider token counts are approximated by whitespace words of the prompt
//! sent to the model; outputs label the unit accordingly.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassificationOutcome;

pub const TOKEN_UNIT: &str = "tokens (word-approximated)";

#[derive(Debug, Error)]
pub enum CostError {
    #[error("outcome sets cover different patients; only in long: [{}], only in rag: [{}]", only_long.join(", "), only_rag.join(", "))]
    PatientMismatch { only_long: Vec<String>, only_rag: Vec<String> },
    #[error("price sheet value {field} must be non-negative and finite")]
    InvalidPrice { field: &'static str },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceSheet {
    pub usd_per_million_tokens: f64,
    pub seconds_per_patient_rag: f64,
    pub seconds_per_patient_long: f64,
}

impl Default for PriceSheet {
    fn default() -> Self {
        PriceSheet { usd_per_million_tokens: 2.50, seconds_per_patient_rag: 0.90, seconds_per_patient_long: 1.11 }
    }
}

impl PriceSheet {
    pub fn validate(&self) -> Result<(), CostError> {
        for (field, v) in [
            ("usd_per_million_tokens", self.usd_per_million_tokens),
            ("seconds_per_patient_rag", self.seconds_per_patient_rag),
            ("seconds_per_patient_long", self.seconds_per_patient_long),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CostError::InvalidPrice { field });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub unit: String,
    pub patients: usize,
    pub total_words_long: u64,
    pub total_words_rag: u64,
    pub cost_long_usd: f64,
    pub cost_rag_usd: f64,
    /// 1 - cost_rag / cost_long; 0 when the long-context cost is 0.
    pub savings_fraction: f64,
}

pub fn cost_usd(tokens: u64, usd_per_million: f64) -> f64 {
    tokens as f64 * usd_per_million / 1e6
}

pub fn summarize_totals(patients: usize, total_long: u64, total_rag: u64, prices: &PriceSheet) -> UsageSummary {
    let cost_long = cost_usd(total_long, prices.usd_per_million_tokens);
    let cost_rag = cost_usd(total_rag, prices.usd_per_million_tokens);
    UsageSummary {
        unit: TOKEN_UNIT.to_string(),
        patients,
        total_words_long: total_long,
        total_words_rag: total_rag,
        cost_long_usd: cost_long,
        cost_rag_usd: cost_rag,
        savings_fraction: if cost_long > 0.0 { 1.0 - cost_rag / cost_long } else { 0.0 },
    }
}

/// Sums prompt sizes per mode over the same patient set and prices them.
pub fn summarize_usage(
    outcomes_long: &[ClassificationOutcome],
    outcomes_rag: &[ClassificationOutcome],
    prices: &PriceSheet,
) -> Result<UsageSummary, CostError> {
    prices.validate()?;
    let ids_long: BTreeSet<&str> = outcomes_long.iter().map(|o| o.patient_id.as_str()).collect();
    let ids_rag: BTreeSet<&str> = outcomes_rag.iter().map(|o| o.patient_id.as_str()).collect();
    if ids_long != ids_rag {
        return Err(CostError::PatientMismatch {
            only_long: ids_long.difference(&ids_rag).map(|s| s.to_string()).collect(),
            only_rag: ids_rag.difference(&ids_long).map(|s| s.to_string()).collect(),
        });
    }
    let total = |os: &[ClassificationOutcome]| os.iter().map(|o| o.prompt_words as u64).sum::<u64>();
    Ok(summarize_totals(ids_long.len(), total(outcomes_long), total(outcomes_rag), prices))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub patients: u64,
    pub cost_usd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub patients: u64,
    pub seconds_rag: f64,
    pub seconds_long: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeProjection {
    pub points: Vec<TimePoint>,
    /// 1 - rag/long seconds per patient.
    pub improvement: f64,
}

pub fn project_cost(per_patient_tokens: f64, prices: &PriceSheet, patient_counts: &[u64]) -> Vec<CostPoint> {
    patient_counts
        .iter()
        .map(|&count| CostPoint {
            patients: count,
            cost_usd: count as f64 * per_patient_tokens * prices.usd_per_million_tokens / 1e6,
        })
        .collect()
}

pub fn project_time(prices: &PriceSheet, patient_counts: &[u64]) -> TimeProjection {
    let improvement = if prices.seconds_per_patient_long > 0.0 {
        1.0 - prices.seconds_per_patient_rag / prices.seconds_per_patient_long
    } else {
        0.0
    };
    TimeProjection {
        points: patient_counts
            .iter()
            .map(|&count| TimePoint {
                patients: count,
                seconds_rag: count as f64 * prices.seconds_per_patient_rag,
                seconds_long: count as f64 * prices.seconds_per_patient_long,
            })
            .collect(),
        improvement,
    }
}

/// `0, step, 2*step, ..., max` (max included when it is a multiple of step).
pub fn patient_grid(max: u64, step: u64) -> Vec<u64> {
    (0..=max).step_by(step.max(1) as usize).collect()
}

pub fn cost_csv(points: &[CostPoint]) -> String {
    let mut out = String::from("patients,cost_usd\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6}", p.patients, p.cost_usd);
    }
    out
}

pub fn time_csv(points: &[TimePoint]) -> String {
    let mut out = String::from("patients,seconds_rag,seconds_long\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6}", p.patients, p.seconds_rag, p.seconds_long);
    }
    out
}
