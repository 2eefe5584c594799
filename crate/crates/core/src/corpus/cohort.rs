//! Cohort filters and summary statistics over indemnity amounts.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beta::Proportion;
use crate::error::{Error, Result};
use crate::money::Money;

use super::record::CaseRecord;

/// Quantile levels reported in every summary.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Predicate over case records. Dimensions combine conjunctively; values
/// within a set combine disjunctively. An absent or empty set places no
/// constraint on its dimension.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjects: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_from: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_to: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counties: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judges: Option<BTreeSet<String>>,
}

fn active(set: &Option<BTreeSet<String>>) -> Option<&BTreeSet<String>> {
    set.as_ref().filter(|s| !s.is_empty())
}

impl CohortFilter {
    pub fn validate(&self) -> Result<()> {
        if let (Some(from), Some(to)) = (self.date_from, self.date_to) {
            if from > to {
                return Err(Error::Invalid(format!(
                    "date_from {from} is after date_to {to}"
                )));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> Option<&BTreeSet<String>> {
        active(&self.classes)
    }

    pub fn subjects(&self) -> Option<&BTreeSet<String>> {
        active(&self.subjects)
    }

    pub fn counties(&self) -> Option<&BTreeSet<String>> {
        active(&self.counties)
    }

    pub fn judges(&self) -> Option<&BTreeSet<String>> {
        active(&self.judges)
    }

    /// Metadata match only; eligibility (an indemnity being present) is
    /// checked separately.
    pub fn matches(&self, r: &CaseRecord) -> bool {
        self.classes().is_none_or(|s| s.contains(&r.case_class))
            && self
                .subjects()
                .is_none_or(|s| r.subjects.iter().any(|t| s.contains(t)))
            && self.counties().is_none_or(|s| s.contains(&r.county))
            && self.judges().is_none_or(|s| s.contains(&r.judge))
            && self.date_from.is_none_or(|d| r.decision_date >= d)
            && self.date_to.is_none_or(|d| r.decision_date <= d)
    }

    /// Canonical form, with empty sets dropped, used for hashing.
    fn canonical(&self) -> CohortFilter {
        let keep = |s: &Option<BTreeSet<String>>| active(s).cloned();
        CohortFilter {
            classes: keep(&self.classes),
            subjects: keep(&self.subjects),
            date_from: self.date_from,
            date_to: self.date_to,
            counties: keep(&self.counties),
            judges: keep(&self.judges),
        }
    }

    /// Content hash of this filter against a given corpus version.
    pub fn cohort_id(&self, corpus_version: u64) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.canonical()).expect("filter serializes"));
        h.update(corpus_version.to_be_bytes());
        hex::encode(&h.finalize()[..12])
    }
}

/// Summary statistics of a cohort's indemnity amounts.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortSummary {
    pub cohort_id: String,
    pub n: usize,
    pub min: Money,
    pub max: Money,
    /// Mean in minor units.
    pub mean: f64,
    /// Sample variance (n - 1 denominator) in squared minor units.
    pub variance: f64,
    /// Type-7 quantiles, rounded half-up to the minor unit, keyed by level
    /// formatted as in [`QUANTILE_LEVELS`].
    pub quantiles: BTreeMap<String, Money>,
    values: Vec<Money>,
}

impl CohortSummary {
    /// Amounts in ascending order.
    pub fn values(&self) -> &[Money] {
        &self.values
    }

    pub fn range(&self) -> Money {
        self.max - self.min
    }

    pub fn quantile(&self, level: f64) -> Option<Money> {
        self.quantiles.get(&quantile_key(level)).copied()
    }

    /// `(x - m) / (M - m)`.
    pub fn normalize(&self, x: Money) -> Result<Proportion> {
        if x < self.min || x > self.max {
            return Err(Error::Domain(format!(
                "{x} lies outside the cohort range [{}, {}]",
                self.min, self.max
            )));
        }
        Proportion::new(self.normalize_real(x.as_f64())?)
    }

    /// Normalization of a real-valued amount, without the range check.
    pub fn normalize_real(&self, x: f64) -> Result<f64> {
        if self.max == self.min {
            return Err(Error::DegenerateCohort(self.min.0));
        }
        let v = (x - self.min.as_f64()) / self.range().as_f64();
        // endpoints exact regardless of rounding
        Ok(if x == self.min.as_f64() {
            0.0
        } else if x == self.max.as_f64() {
            1.0
        } else {
            v
        })
    }

    /// Every cohort value mapped into `[0, 1]`.
    pub fn normalized_values(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .map(|&v| self.normalize(v).map(f64::from))
            .collect()
    }
}

pub fn quantile_key(level: f64) -> String {
    format!("{level}")
}

/// Linear interpolation between order statistics at `h = (n - 1) p`.
pub fn type7_quantile(sorted: &[Money], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let (a, b) = (sorted[lo].as_f64(), sorted[hi].as_f64());
    a + (h - lo as f64) * (b - a)
}

/// Summary of a list of amounts. Order of the input does not matter.
pub fn summarize_amounts(cohort_id: impl Into<String>, amounts: &[Money]) -> Result<CohortSummary> {
    if amounts.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut values = amounts.to_vec();
    values.sort_unstable();
    let n = values.len();

    // Integer sums are exact; only the final divisions round.
    let sum: i128 = values.iter().map(|v| v.0 as i128).sum();
    let sum_sq: i128 = values.iter().map(|v| (v.0 as i128) * (v.0 as i128)).sum();
    let mean = sum as f64 / n as f64;
    let variance = if n > 1 {
        let numerator = n as i128 * sum_sq - sum * sum;
        numerator as f64 / (n as f64 * (n - 1) as f64)
    } else {
        0.0
    };

    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|&p| {
            (
                quantile_key(p),
                Money::round_half_up(type7_quantile(&values, p)),
            )
        })
        .collect();

    Ok(CohortSummary {
        cohort_id: cohort_id.into(),
        n,
        min: values[0],
        max: values[n - 1],
        mean,
        variance,
        quantiles,
        values,
    })
}

/// Summary of a filtered cohort of records.
pub fn summarize(cohort_id: impl Into<String>, cohort: &[CaseRecord]) -> Result<CohortSummary> {
    let amounts: Vec<Money> = cohort.iter().filter_map(|r| r.indemnity).collect();
    summarize_amounts(cohort_id, &amounts)
}
