//! JSON request/response forms shared by the HTTP service and the CLI.
//!
//! Money is always an integer count of minor units (`*_minor_units`);
//! probabilities are plain JSON numbers printed with full round-trip
//! precision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beta::{beta_pdf, BetaParams, Proportion};
use crate::corpus::{CohortFilter, CohortSummary};
use crate::elicitation::{IndemnityEstimate, PointEstimator, PoolingMode};
use crate::error::Error;
use crate::money::Money;

pub const HISTOGRAM_BINS: usize = 20;
pub const DENSITY_POINTS: usize = 101;

/// The opinion part of a request: an ordinal level, explicit shapes, or an
/// automatic fit to the cohort.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Fit the prior to the cohort's normalized mean and variance. A
    /// `scale` given alongside is the fallback when the fit is infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolingWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PoolingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_weight: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequestWire {
    #[serde(default)]
    pub filter: CohortFilter,
    pub opinion: OpinionWire,
    #[serde(default)]
    pub pooling: PoolingWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_minor_units: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_estimator: Option<PointEstimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low_minor_units: i64,
    pub high_minor_units: i64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummaryWire {
    pub cohort_id: String,
    pub corpus_version: u64,
    pub n: usize,
    pub min_minor_units: i64,
    pub max_minor_units: i64,
    pub mean_minor_units: f64,
    pub variance: f64,
    pub quantiles_minor_units: BTreeMap<String, i64>,
    pub histogram: Vec<HistogramBin>,
}

impl CohortSummaryWire {
    pub fn new(s: &CohortSummary, corpus_version: u64) -> Self {
        CohortSummaryWire {
            cohort_id: s.cohort_id.clone(),
            corpus_version,
            n: s.n,
            min_minor_units: s.min.0,
            max_minor_units: s.max.0,
            mean_minor_units: s.mean,
            variance: s.variance,
            quantiles_minor_units: s.quantiles.iter().map(|(k, v)| (k.clone(), v.0)).collect(),
            histogram: histogram(s),
        }
    }
}

/// Equal-width bins over `[m, M]`; a single bin when the range is empty.
pub fn histogram(s: &CohortSummary) -> Vec<HistogramBin> {
    let (m, big_m) = (s.min, s.max);
    if m == big_m {
        return vec![HistogramBin {
            low_minor_units: m.0,
            high_minor_units: big_m.0,
            count: s.n as u64,
        }];
    }
    let width = (big_m - m).as_f64() / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            low_minor_units: Money::round_half_up(m.as_f64() + i as f64 * width).0,
            high_minor_units: if i + 1 == HISTOGRAM_BINS {
                big_m.0
            } else {
                Money::round_half_up(m.as_f64() + (i + 1) as f64 * width).0
            },
            count: 0,
        })
        .collect();
    for v in s.values() {
        let idx = (((*v - m).as_f64() / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[idx].count += 1;
    }
    bins
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParamsWire {
    pub alpha: f64,
    pub beta: f64,
    pub source: crate::beta::ParamSource,
}

impl From<&BetaParams> for BetaParamsWire {
    fn from(p: &BetaParams) -> Self {
        BetaParamsWire {
            alpha: p.alpha(),
            beta: p.beta(),
            source: p.source(),
        }
    }
}

/// How the opinion was resolved into a prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedOpinion {
    Ordinal {
        scale: u8,
        concentration: f64,
    },
    Manual {
        alpha: f64,
        beta: f64,
    },
    Auto {
        fallback_scale: Option<u8>,
        concentration: f64,
        fell_back: bool,
    },
}

/// Every input of an estimate with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInputs {
    pub filter: CohortFilter,
    pub opinion: ResolvedOpinion,
    pub pooling_mode: PoolingMode,
    pub data_weight: f64,
    pub calibration_minor_units: i64,
    pub point_estimator: PointEstimator,
    pub interval_mass: f64,
}

/// Density curve sampled on an even grid over `[0, 1]`; `null` marks a pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurves {
    pub x: Vec<f64>,
    pub prior: Vec<Option<f64>>,
    pub posterior: Vec<Option<f64>>,
}

impl DensityCurves {
    pub fn sample(prior: &BetaParams, posterior: &BetaParams) -> Self {
        let x: Vec<f64> = (0..DENSITY_POINTS)
            .map(|i| i as f64 / (DENSITY_POINTS - 1) as f64)
            .collect();
        let curve = |p: &BetaParams| -> Vec<Option<f64>> {
            x.iter()
                .map(|&xi| {
                    Proportion::new(xi)
                        .ok()
                        .and_then(|xi| beta_pdf(xi, p).ok())
                        .filter(|d| d.is_finite())
                })
                .collect()
        };
        DensityCurves {
            prior: curve(prior),
            posterior: curve(posterior),
            x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub pi_hat: f64,
    pub theta_hat_minor_units: i64,
    pub interval_low_minor_units: i64,
    pub interval_high_minor_units: i64,
    pub clamped: bool,
    pub prior: BetaParamsWire,
    pub posterior: BetaParamsWire,
    pub resolved: ResolvedInputs,
    pub cohort: CohortSummaryWire,
    pub grammar_version: String,
    pub densities: DensityCurves,
}

impl EstimateResponse {
    pub fn new(e: &IndemnityEstimate, resolved: ResolvedInputs, cohort: CohortSummaryWire) -> Self {
        EstimateResponse {
            pi_hat: e.pi_hat.value(),
            theta_hat_minor_units: e.theta_hat.0,
            interval_low_minor_units: e.interval_low.0,
            interval_high_minor_units: e.interval_high.0,
            clamped: e.clamped,
            prior: (&e.prior).into(),
            posterior: (&e.posterior).into(),
            resolved,
            cohort,
            grammar_version: crate::extraction::GRAMMAR_VERSION.to_string(),
            densities: DensityCurves::sample(&e.prior, &e.posterior),
        }
    }
}

/// Structured error body: a stable code plus human-readable text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        let detail = match e {
            Error::DegenerateCohort(v) => Some(serde_json::json!({ "value_minor_units": v })),
            Error::InfeasibleMoments { mean, variance } => {
                Some(serde_json::json!({ "mean": mean, "variance": variance }))
            }
            _ => None,
        };
        ErrorBody {
            code: e.code().to_string(),
            message: e.to_string(),
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub corpus_version: u64,
    pub record_count: u64,
}
