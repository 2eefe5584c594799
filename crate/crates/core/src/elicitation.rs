//! From the magistrate's opinion to a suggested indemnity.
//!
//! The opinion is a level `s` on a 0..=10 scale, mapped to a Beta prior on
//! the fraction `π` of the historical range `[m, M]` to award. The prior may
//! be updated with the cohort's own (normalized) values, and the suggested
//! amount is `m + π̂ (M - m) + c` for a user-chosen calibration `c`.

use serde::{Deserialize, Serialize};

use crate::beta::{
    beta_mean, beta_mode, beta_quantile, fit_beta_moments, BetaParams, ParamSource, Proportion,
};
use crate::corpus::CohortSummary;
use crate::error::{Error, Result};
use crate::money::Money;

pub const DEFAULT_CONCENTRATION: f64 = 8.0;
pub const DEFAULT_DATA_WEIGHT: f64 = 1.0;
pub const DEFAULT_INTERVAL_MASS: f64 = 0.90;
pub const MAX_SCALE: u8 = 10;

/// The magistrate's ordinal opinion and how strongly it is held.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OpinionInput {
    scale: u8,
    concentration: f64,
}

impl OpinionInput {
    pub fn new(scale: u8, concentration: f64) -> Result<Self> {
        if scale > MAX_SCALE {
            return Err(Error::Invalid(format!(
                "opinion scale must be in 0..=10, got {scale}"
            )));
        }
        if !(concentration.is_finite() && concentration > 0.0) {
            return Err(Error::Invalid(format!(
                "concentration must be positive and finite, got {concentration}"
            )));
        }
        Ok(OpinionInput {
            scale,
            concentration,
        })
    }

    pub fn with_default_concentration(scale: u8) -> Result<Self> {
        Self::new(scale, DEFAULT_CONCENTRATION)
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }
}

/// `α = 1 + λ s/10`, `β = 1 + λ (1 - s/10)`: the mode sits exactly at
/// `s/10` and both shapes stay at or above 1.
pub fn ordinal_to_beta(opinion: &OpinionInput) -> BetaParams {
    let frac = opinion.scale as f64 / MAX_SCALE as f64;
    let lambda = opinion.concentration;
    BetaParams::new(
        1.0 + lambda * frac,
        1.0 + lambda * (1.0 - frac),
        ParamSource::Ordinal,
    )
    .expect("ordinal shapes are >= 1")
}

/// Prior fitted by moments to the cohort's normalized mean and variance.
pub fn auto_prior(cohort: &CohortSummary) -> Result<BetaParams> {
    if cohort.max == cohort.min {
        return Err(Error::DegenerateCohort(cohort.min.0));
    }
    let range = cohort.range().as_f64();
    let mean = cohort.normalize_real(cohort.mean)?;
    let variance = cohort.variance / (range * range);
    fit_beta_moments(mean, variance)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    PriorOnly,
    #[default]
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoolingPolicy {
    data_weight: f64,
    mode: PoolingMode,
}

impl PoolingPolicy {
    pub fn new(mode: PoolingMode, data_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&data_weight) {
            return Err(Error::Invalid(format!(
                "data_weight must be in [0, 1], got {data_weight}"
            )));
        }
        Ok(PoolingPolicy { data_weight, mode })
    }

    pub fn prior_only() -> Self {
        PoolingPolicy {
            data_weight: DEFAULT_DATA_WEIGHT,
            mode: PoolingMode::PriorOnly,
        }
    }

    pub fn pooled(data_weight: f64) -> Result<Self> {
        Self::new(PoolingMode::Pooled, data_weight)
    }

    pub fn data_weight(&self) -> f64 {
        self.data_weight
    }

    pub fn mode(&self) -> PoolingMode {
        self.mode
    }
}

impl Default for PoolingPolicy {
    fn default() -> Self {
        PoolingPolicy {
            data_weight: DEFAULT_DATA_WEIGHT,
            mode: PoolingMode::default(),
        }
    }
}

/// Conjugate update treating each normalized value as a fractional success:
/// `α' = α + w Σπᵢ`, `β' = β + w Σ(1 - πᵢ)`.
pub fn pool_posterior(
    prior: &BetaParams,
    values: &[f64],
    policy: &PoolingPolicy,
) -> Result<BetaParams> {
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!(
            "pooled value {bad} is outside [0, 1]"
        )));
    }
    match policy.mode {
        PoolingMode::PriorOnly => Ok(prior.with_source(ParamSource::Posterior)),
        PoolingMode::Pooled => {
            let successes: f64 = values.iter().sum();
            let failures: f64 = values.iter().map(|v| 1.0 - v).sum();
            let w = policy.data_weight;
            BetaParams::new(
                prior.alpha() + w * successes,
                prior.beta() + w * failures,
                ParamSource::Posterior,
            )
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimator {
    #[default]
    PosteriorMean,
    PosteriorMode,
}

/// Everything needed to turn a prior and a cohort into a suggestion.
#[derive(Clone, Debug)]
pub struct EstimateRequest {
    pub prior: BetaParams,
    pub cohort: CohortSummary,
    pub calibration: Money,
    pub point_estimator: PointEstimator,
    pub interval_mass: f64,
    pub policy: PoolingPolicy,
}

impl EstimateRequest {
    pub fn new(prior: BetaParams, cohort: CohortSummary) -> Self {
        EstimateRequest {
            prior,
            cohort,
            calibration: Money::ZERO,
            point_estimator: PointEstimator::default(),
            interval_mass: DEFAULT_INTERVAL_MASS,
            policy: PoolingPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval_mass > 0.0 && self.interval_mass < 1.0) {
            return Err(Error::Invalid(format!(
                "interval_mass must be in (0, 1), got {}",
                self.interval_mass
            )));
        }
        if self.cohort.n == 0 {
            return Err(Error::DegenerateCohort(self.cohort.min.0));
        }
        Ok(())
    }
}

/// The suggested award with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndemnityEstimate {
    pub pi_hat: Proportion,
    pub theta_hat: Money,
    pub interval_low: Money,
    pub interval_high: Money,
    /// Set when `c` pushed the raw suggestion below zero.
    pub clamped: bool,
    pub prior: BetaParams,
    pub posterior: BetaParams,
    pub cohort_id: String,
    pub cohort_min: Money,
    pub cohort_max: Money,
    pub calibration: Money,
    pub policy: PoolingPolicy,
    pub point_estimator: PointEstimator,
    pub interval_mass: f64,
}

/// `m + π (M - m) + c`, unrounded.
pub fn affine_theta(pi: f64, min: Money, max: Money, calibration: Money) -> f64 {
    min.as_f64() + pi * (max - min).as_f64() + calibration.as_f64()
}

fn to_money(raw: f64) -> (Money, bool) {
    let rounded = Money::round_half_up(raw);
    if rounded < Money::ZERO {
        (Money::ZERO, true)
    } else {
        (rounded, false)
    }
}

/// Point estimate and credible interval from a posterior.
pub fn estimate(req: &EstimateRequest, posterior: &BetaParams) -> Result<IndemnityEstimate> {
    req.validate()?;
    let (m, big_m, c) = (req.cohort.min, req.cohort.max, req.calibration);
    let pi_hat = match req.point_estimator {
        PointEstimator::PosteriorMean => beta_mean(posterior),
        PointEstimator::PosteriorMode => beta_mode(posterior)?,
    };
    let tail = (1.0 - req.interval_mass) / 2.0;
    let low_pi = beta_quantile(Proportion::new(tail)?, posterior)?;
    let high_pi = beta_quantile(Proportion::new(1.0 - tail)?, posterior)?;

    let (theta_hat, clamped) = to_money(affine_theta(pi_hat.value(), m, big_m, c));
    let (interval_low, _) = to_money(affine_theta(low_pi.value(), m, big_m, c));
    let (interval_high, _) = to_money(affine_theta(high_pi.value(), m, big_m, c));

    Ok(IndemnityEstimate {
        pi_hat,
        theta_hat,
        interval_low,
        interval_high,
        clamped,
        prior: req.prior,
        posterior: *posterior,
        cohort_id: req.cohort.cohort_id.clone(),
        cohort_min: m,
        cohort_max: big_m,
        calibration: c,
        policy: req.policy,
        point_estimator: req.point_estimator,
        interval_mass: req.interval_mass,
    })
}

/// Pools the request's prior with its cohort per its policy, then estimates.
pub fn run(req: &EstimateRequest) -> Result<IndemnityEstimate> {
    req.validate()?;
    let values = match req.policy.mode() {
        PoolingMode::PriorOnly => Vec::new(),
        PoolingMode::Pooled => req.cohort.normalized_values()?,
    };
    let posterior = pool_posterior(&req.prior, &values, &req.policy)?;
    estimate(req, &posterior)
}

/// One estimate per opinion level, everything else held fixed. The
/// template's prior is replaced by the ordinal prior for each level.
pub fn whatif_sweep(
    template: &EstimateRequest,
    concentration: f64,
    scales: &[u8],
) -> Result<Vec<(u8, IndemnityEstimate)>> {
    let mut scales = scales.to_vec();
    scales.sort();
    let values = match template.policy.mode() {
        PoolingMode::PriorOnly => Vec::new(),
        PoolingMode::Pooled => template.cohort.normalized_values()?,
    };
    scales
        .into_iter()
        .map(|s| {
            let prior = ordinal_to_beta(&OpinionInput::new(s, concentration)?);
            let posterior = pool_posterior(&prior, &values, &template.policy)?;
            let req = EstimateRequest {
                prior,
                ..template.clone()
            };
            Ok((s, estimate(&req, &posterior)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::{beta_mode, beta_variance};
    use crate::corpus::summarize_amounts;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cohort(values: &[i64]) -> CohortSummary {
        let v: Vec<Money> = values.iter().copied().map(Money).collect();
        summarize_amounts("test", &v).unwrap()
    }

    fn params(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b, ParamSource::Manual).unwrap()
    }

    fn fixture() -> CohortSummary {
        cohort(&[100000, 200000, 300000, 400000, 500000])
    }

    #[test]
    fn opinion_validation() {
        assert!(OpinionInput::new(11, 8.0).is_err());
        assert!(OpinionInput::new(5, 0.0).is_err());
        assert!(OpinionInput::new(5, f64::NAN).is_err());
        assert!(PoolingPolicy::pooled(1.5).is_err());
        assert!(PoolingPolicy::pooled(-0.1).is_err());
    }

    #[test]
    fn ordinal_examples() {
        let p = ordinal_to_beta(&OpinionInput::new(5, 8.0).unwrap());
        assert_eq!((p.alpha(), p.beta()), (5.0, 5.0));
        assert_eq!(p.source(), ParamSource::Ordinal);

        let p = ordinal_to_beta(&OpinionInput::new(0, 8.0).unwrap());
        assert_eq!((p.alpha(), p.beta()), (1.0, 9.0));
        assert_eq!(beta_mode(&p).unwrap().value(), 0.0);

        let p = ordinal_to_beta(&OpinionInput::new(10, 8.0).unwrap());
        assert_eq!((p.alpha(), p.beta()), (9.0, 1.0));
        assert_eq!(beta_mode(&p).unwrap().value(), 1.0);
    }

    #[test]
    fn ordinal_mode_and_mean() {
        for lambda in [0.5, 1.0, 8.0, 40.0] {
            let mut last_mean = -1.0;
            for s in 0..=10u8 {
                let p = ordinal_to_beta(&OpinionInput::new(s, lambda).unwrap());
                assert!(p.alpha() >= 1.0 && p.beta() >= 1.0);
                if s > 0 && s < 10 {
                    assert_relative_eq!(
                        beta_mode(&p).unwrap().value(),
                        s as f64 / 10.0,
                        epsilon = 1e-15
                    );
                }
                let mean = beta_mean(&p).value();
                assert!(mean > last_mean);
                last_mean = mean;
            }
        }
    }

    #[test]
    fn auto_prior_examples() {
        assert!(matches!(
            auto_prior(&cohort(&[100, 150, 200])),
            Err(Error::InfeasibleMoments { .. })
        ));
        let p = auto_prior(&cohort(&[0, 25, 50, 75, 100])).unwrap();
        assert_relative_eq!(p.alpha(), 0.3, max_relative = 1e-12);
        assert_relative_eq!(p.beta(), 0.3, max_relative = 1e-12);
        assert_eq!(p.source(), ParamSource::AutoFit);
        assert!(matches!(
            auto_prior(&cohort(&[700, 700, 700])),
            Err(Error::DegenerateCohort(700))
        ));
    }

    #[test]
    fn auto_prior_matches_normalized_moments() {
        let c = cohort(&[10, 20, 20, 30, 30, 30, 40, 40, 50, 90]);
        let p = auto_prior(&c).unwrap();
        let range = c.range().as_f64();
        assert_relative_eq!(
            beta_mean(&p).value(),
            (c.mean - 10.0) / range,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            beta_variance(&p),
            c.variance / (range * range),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pooling_examples() {
        let pooled = PoolingPolicy::pooled(1.0).unwrap();
        let p = pool_posterior(&params(5.0, 5.0), &[], &pooled).unwrap();
        assert_eq!((p.alpha(), p.beta()), (5.0, 5.0));
        assert_eq!(p.source(), ParamSource::Posterior);

        let p = pool_posterior(&params(1.0, 1.0), &[0.2, 0.4, 0.6, 0.8], &pooled).unwrap();
        assert_relative_eq!(p.alpha(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(p.beta(), 3.0, epsilon = 1e-14);

        let half = PoolingPolicy::pooled(0.5).unwrap();
        let p = pool_posterior(&params(1.0, 1.0), &[1.0, 1.0], &half).unwrap();
        assert_eq!((p.alpha(), p.beta()), (2.0, 1.0));
        assert_relative_eq!(beta_mean(&p).value(), 2.0 / 3.0);

        let p = pool_posterior(&params(2.0, 3.0), &[0.9], &PoolingPolicy::prior_only()).unwrap();
        assert_eq!((p.alpha(), p.beta()), (2.0, 3.0));

        assert!(matches!(
            pool_posterior(&params(1.0, 1.0), &[1.2], &pooled),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn affine_examples() {
        let c = cohort(&[100000, 500000]);
        let mut req = EstimateRequest::new(params(1.0, 3.0), c);
        // Beta(1, 3) has mean 0.25
        let e = estimate(&req, &params(1.0, 3.0)).unwrap();
        assert_eq!(e.pi_hat.value(), 0.25);
        assert_eq!(e.theta_hat, Money(200000));

        // π̂ = 0 via the mode of Beta(1, 9)
        req.point_estimator = PointEstimator::PosteriorMode;
        assert_eq!(
            estimate(&req, &params(1.0, 9.0)).unwrap().theta_hat,
            Money(100000)
        );

        // π̂ = 1 with c = +50000
        req.calibration = Money(50000);
        assert_eq!(
            estimate(&req, &params(9.0, 1.0)).unwrap().theta_hat,
            Money(550000)
        );

        // both shapes <= 1: no mode
        assert!(matches!(
            estimate(&req, &params(1.0, 1.0)),
            Err(Error::AmbiguousMode { .. })
        ));
    }

    #[test]
    fn fixture_midpoint() {
        let prior = ordinal_to_beta(&OpinionInput::new(5, 8.0).unwrap());
        let mut req = EstimateRequest::new(prior, fixture());
        req.policy = PoolingPolicy::prior_only();
        let e = run(&req).unwrap();
        assert_eq!(e.pi_hat.value(), 0.5);
        assert_eq!(e.theta_hat, Money(300000));
        req.calibration = Money(25000);
        assert_eq!(run(&req).unwrap().theta_hat, Money(325000));
    }

    #[test]
    fn clamp_at_zero() {
        let prior = ordinal_to_beta(&OpinionInput::new(5, 8.0).unwrap());
        let mut req = EstimateRequest::new(prior, fixture());
        req.calibration = Money(-999_999_999);
        let e = run(&req).unwrap();
        assert_eq!(e.theta_hat, Money::ZERO);
        assert!(e.clamped);
        assert!(e.interval_low <= e.interval_high);
        req.calibration = Money(-300_000);
        let e = run(&req).unwrap();
        assert!(!e.clamped);
    }

    #[test]
    fn interval_mass_validated() {
        let mut req = EstimateRequest::new(params(2.0, 2.0), fixture());
        for bad in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            req.interval_mass = bad;
            assert!(matches!(run(&req), Err(Error::Invalid(_))));
        }
    }

    #[test]
    fn degenerate_cohort_pooled_vs_prior_only() {
        let mut req = EstimateRequest::new(params(2.0, 2.0), cohort(&[5000, 5000]));
        assert!(matches!(run(&req), Err(Error::DegenerateCohort(5000))));
        req.policy = PoolingPolicy::prior_only();
        req.calibration = Money(10);
        assert_eq!(run(&req).unwrap().theta_hat, Money(5010));
    }

    #[test]
    fn sweep_examples() {
        let mut template = EstimateRequest::new(params(1.0, 1.0), fixture());
        template.policy = PoolingPolicy::prior_only();
        let out = whatif_sweep(&template, 8.0, &[10, 0, 5]).unwrap();
        let scales: Vec<u8> = out.iter().map(|(s, _)| *s).collect();
        assert_eq!(scales, vec![0, 5, 10]);
        assert!(out[0].1.theta_hat < out[1].1.theta_hat && out[1].1.theta_hat < out[2].1.theta_hat);

        assert!(whatif_sweep(&template, 8.0, &[]).unwrap().is_empty());

        let twice = whatif_sweep(&template, 8.0, &[5, 5]).unwrap();
        assert_eq!(twice[0], twice[1]);

        assert!(whatif_sweep(&template, 8.0, &[11]).is_err());
    }

    #[test]
    fn vanishing_concentration_washes_out() {
        let mut req = EstimateRequest::new(params(1.0, 1.0), fixture());
        req.policy = PoolingPolicy::prior_only();
        for s in 0..=10 {
            req.prior = ordinal_to_beta(&OpinionInput::new(s, 1e-6).unwrap());
            let e = run(&req).unwrap();
            assert!((e.pi_hat.value() - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn pooling_dominance() {
        let v = 0.8;
        let n = 10_000;
        let prior = params(5.0, 5.0);
        let post =
            pool_posterior(&prior, &vec![v; n], &PoolingPolicy::pooled(1.0).unwrap()).unwrap();
        let bound =
            10.0 * (prior.alpha() + prior.beta()) / (prior.alpha() + prior.beta() + n as f64);
        assert!((beta_mean(&post).value() - v).abs() <= bound);
    }

    fn cohort_strategy() -> impl Strategy<Value = CohortSummary> {
        (
            0i64..10_000_000,
            proptest::collection::vec(0i64..5_000_000, 1..40),
        )
            .prop_filter("non-degenerate", |(_, d)| d.iter().any(|&x| x != 0))
            .prop_map(|(base, deltas)| {
                let mut v: Vec<i64> = deltas.iter().map(|d| base + d).collect();
                v.push(base);
                cohort(&v)
            })
    }

    proptest! {
        #[test]
        fn prior_only_monotone_in_scale(c in cohort_strategy(), lambda in 0.1f64..100.0, cal in -100_000i64..100_000) {
            let mut req = EstimateRequest::new(params(1.0, 1.0), c.clone());
            req.policy = PoolingPolicy::prior_only();
            req.calibration = Money(cal);
            let mut last: Option<f64> = None;
            for s in 0..=10 {
                req.prior = ordinal_to_beta(&OpinionInput::new(s, lambda).unwrap());
                let e = run(&req).unwrap();
                let raw = affine_theta(e.pi_hat.value(), c.min, c.max, req.calibration);
                if let Some(prev) = last {
                    prop_assert!(raw > prev);
                }
                last = Some(raw);
            }
        }

        #[test]
        fn affine_consistency(c in cohort_strategy(), a in 0.5f64..50.0, b in 0.5f64..50.0) {
            let req = EstimateRequest::new(params(a, b), c.clone());
            let e = estimate(&req, &params(a, b)).unwrap();
            let raw = affine_theta(e.pi_hat.value(), c.min, c.max, Money::ZERO);
            prop_assert!((c.normalize_real(raw).unwrap() - e.pi_hat.value()).abs() <= 1e-12);
            prop_assert!(c.min <= e.theta_hat && e.theta_hat <= c.max);
        }

        #[test]
        fn calibration_is_a_shift(c in cohort_strategy(), s in 0u8..=10, cal in -1_000_000i64..1_000_000) {
            let prior = ordinal_to_beta(&OpinionInput::new(s, 8.0).unwrap());
            let mut req = EstimateRequest::new(prior, c.clone());
            let base = run(&req).unwrap();
            req.calibration = Money(cal);
            let shifted = run(&req).unwrap();
            let raw0 = affine_theta(base.pi_hat.value(), c.min, c.max, Money::ZERO);
            let raw1 = affine_theta(shifted.pi_hat.value(), c.min, c.max, Money(cal));
            prop_assert!((raw1 - raw0 - cal as f64).abs() <= 1e-6);
            if !shifted.clamped {
                prop_assert_eq!(shifted.theta_hat.0 - base.theta_hat.0, cal);
            }
        }

        #[test]
        fn interval_ordered_and_in_shifted_range(c in cohort_strategy(), s in 0u8..=10, cal in -1_000_000i64..1_000_000, mass in 0.01f64..0.99) {
            let prior = ordinal_to_beta(&OpinionInput::new(s, 8.0).unwrap());
            let mut req = EstimateRequest::new(prior, c.clone());
            req.calibration = Money(cal);
            req.interval_mass = mass;
            let e = run(&req).unwrap();
            prop_assert!(e.interval_low <= e.interval_high);
            let lo = (c.min.0 + cal - cal.abs()).max(0);
            let hi = c.max.0 + cal + cal.abs();
            prop_assert!(lo <= e.interval_low.0 && e.interval_high.0 <= hi);
        }
    }
}
