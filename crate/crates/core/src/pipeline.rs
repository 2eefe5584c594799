//! Ingest → filter → summarize → elicit → estimate, against one snapshot.

use crate::beta::{BetaParams, ParamSource};
use crate::corpus::{summarize, CohortFilter, CohortSummary, Snapshot};
use crate::elicitation::{
    self, auto_prior, ordinal_to_beta, EstimateRequest, IndemnityEstimate, OpinionInput,
    PoolingPolicy, DEFAULT_CONCENTRATION, DEFAULT_DATA_WEIGHT, DEFAULT_INTERVAL_MASS,
};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::wire::{
    CohortSummaryWire, EstimateRequestWire, EstimateResponse, ResolvedInputs, ResolvedOpinion,
};

/// Filters and summarizes in one snapshot.
pub fn cohort_summary(snap: &Snapshot, filter: &CohortFilter) -> Result<CohortSummary> {
    let version = snap.version()?;
    let cohort = snap.filter_cases(filter)?;
    summarize(filter.cohort_id(version), &cohort)
}

pub fn cohort_summary_wire(snap: &Snapshot, filter: &CohortFilter) -> Result<CohortSummaryWire> {
    let version = snap.version()?;
    Ok(CohortSummaryWire::new(
        &cohort_summary(snap, filter)?,
        version,
    ))
}

enum PriorChoice {
    Fixed(BetaParams),
    Auto { fallback: Option<BetaParams> },
}

/// Validates a request and fills in every default.
fn resolve(wire: &EstimateRequestWire) -> Result<(ResolvedInputs, PriorChoice)> {
    wire.filter.validate()?;
    let o = &wire.opinion;
    let auto = o.auto.unwrap_or(false);
    let manual = o.alpha.is_some() || o.beta.is_some();
    if manual && (o.scale.is_some() || auto) {
        return Err(Error::Invalid(
            "give either an opinion scale or explicit alpha/beta, not both".into(),
        ));
    }
    if manual && o.concentration.is_some() {
        return Err(Error::Invalid(
            "concentration applies to the ordinal scale only".into(),
        ));
    }
    let concentration = o.concentration.unwrap_or(DEFAULT_CONCENTRATION);

    let (opinion, choice) = if manual {
        let (Some(alpha), Some(beta)) = (o.alpha, o.beta) else {
            return Err(Error::Invalid(
                "alpha and beta must be given together".into(),
            ));
        };
        let p = BetaParams::new(alpha, beta, ParamSource::Manual)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        (
            ResolvedOpinion::Manual { alpha, beta },
            PriorChoice::Fixed(p),
        )
    } else if auto {
        let fallback = o
            .scale
            .map(|s| OpinionInput::new(s, concentration).map(|op| ordinal_to_beta(&op)))
            .transpose()?;
        (
            ResolvedOpinion::Auto {
                fallback_scale: o.scale,
                concentration,
                fell_back: false,
            },
            PriorChoice::Auto { fallback },
        )
    } else {
        let Some(scale) = o.scale else {
            return Err(Error::Invalid(
                "opinion needs a scale, alpha/beta, or auto".into(),
            ));
        };
        let op = OpinionInput::new(scale, concentration)?;
        (
            ResolvedOpinion::Ordinal {
                scale,
                concentration,
            },
            PriorChoice::Fixed(ordinal_to_beta(&op)),
        )
    };

    let mode = wire.pooling.mode.unwrap_or_default();
    let data_weight = wire.pooling.data_weight.unwrap_or(DEFAULT_DATA_WEIGHT);
    PoolingPolicy::new(mode, data_weight)?;
    let interval_mass = wire.interval_mass.unwrap_or(DEFAULT_INTERVAL_MASS);
    if !(interval_mass > 0.0 && interval_mass < 1.0) {
        return Err(Error::Invalid(format!(
            "interval_mass must be in (0, 1), got {interval_mass}"
        )));
    }

    let resolved = ResolvedInputs {
        filter: wire.filter.clone(),
        opinion,
        pooling_mode: mode,
        data_weight,
        calibration_minor_units: wire.calibration_minor_units.unwrap_or(0),
        point_estimator: wire.point_estimator.unwrap_or_default(),
        interval_mass,
    };
    Ok((resolved, choice))
}

/// A finished estimate together with what it was computed from.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub estimate: IndemnityEstimate,
    pub summary: CohortSummary,
    pub resolved: ResolvedInputs,
    pub corpus_version: u64,
}

impl Outcome {
    pub fn response(&self) -> EstimateResponse {
        EstimateResponse::new(
            &self.estimate,
            self.resolved.clone(),
            CohortSummaryWire::new(&self.summary, self.corpus_version),
        )
    }
}

/// Runs a wire request end to end against one snapshot.
pub fn run_estimate(snap: &Snapshot, wire: &EstimateRequestWire) -> Result<Outcome> {
    let (mut resolved, choice) = resolve(wire)?;
    let corpus_version = snap.version()?;
    let summary = cohort_summary(snap, &wire.filter)?;

    let prior = match choice {
        PriorChoice::Fixed(p) => p,
        PriorChoice::Auto { fallback } => match (auto_prior(&summary), fallback) {
            (Ok(p), _) => p,
            (Err(Error::InfeasibleMoments { .. } | Error::DegenerateCohort(_)), Some(fb)) => {
                if let ResolvedOpinion::Auto { fell_back, .. } = &mut resolved.opinion {
                    *fell_back = true;
                }
                fb
            }
            (Err(e), _) => return Err(e),
        },
    };

    let request = EstimateRequest {
        prior,
        cohort: summary.clone(),
        calibration: Money(resolved.calibration_minor_units),
        point_estimator: resolved.point_estimator,
        interval_mass: resolved.interval_mass,
        policy: PoolingPolicy::new(resolved.pooling_mode, resolved.data_weight)?,
    };
    let estimate = elicitation::run(&request)?;
    Ok(Outcome {
        estimate,
        summary,
        resolved,
        corpus_version,
    })
}

/// Convenience for callers that only need the wire form.
pub fn estimate_response(snap: &Snapshot, wire: &EstimateRequestWire) -> Result<EstimateResponse> {
    run_estimate(snap, wire).map(|o| o.response())
}
