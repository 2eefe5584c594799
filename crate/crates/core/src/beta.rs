//! Beta distribution numerics: density, regularized incomplete beta, its
//! inverse, moments, and method-of-moments fitting.
//!
//! Everything is plain `f64`. The normalizing constant is evaluated in log
//! space so large shapes do not overflow. The incomplete beta is computed by
//! Lentz's continued fraction on whichever tail converges fastest, and the
//! complementary tail is carried alongside in [`Proportion`] so that values
//! very close to 1 can still be inverted accurately.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A fraction in `[0, 1]`.
///
/// Besides the value itself the type keeps `1 - value`. For ordinary values
/// the complement is just that subtraction; values produced by [`beta_cdf`]
/// carry an independently computed upper tail, which [`beta_quantile`] uses
/// when the lower tail has rounded to 1.
#[derive(Clone, Copy)]
pub struct Proportion {
    value: f64,
    complement: f64,
}

impl Proportion {
    pub const ZERO: Proportion = Proportion {
        value: 0.0,
        complement: 1.0,
    };
    pub const ONE: Proportion = Proportion {
        value: 1.0,
        complement: 0.0,
    };

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!(
                "proportion {value} is outside [0, 1]"
            )));
        }
        Ok(Proportion {
            value,
            complement: 1.0 - value,
        })
    }

    /// Builds a proportion from a pair of tails that are each accurate in
    /// their own right.
    fn from_tails(lower: f64, upper: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0);
        Proportion {
            value: lower,
            complement: upper,
        }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// `1 - value`, accurate even when `value` has rounded to 1.
    pub fn complement(self) -> f64 {
        self.complement
    }
}

impl TryFrom<f64> for Proportion {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Proportion::new(value)
    }
}

impl From<Proportion> for f64 {
    fn from(p: Proportion) -> f64 {
        p.value
    }
}

impl PartialEq for Proportion {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for Proportion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl fmt::Debug for Proportion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Proportion({})", self.value)
    }
}

impl fmt::Display for Proportion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value, f)
    }
}

impl Serialize for Proportion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value)
    }
}

impl<'de> Deserialize<'de> for Proportion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Proportion::new(v).map_err(serde::de::Error::custom)
    }
}

/// Where a pair of shape parameters came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Ordinal,
    Manual,
    AutoFit,
    Posterior,
}

/// Shape parameters of a Beta distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
    source: ParamSource,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64, source: ParamSource) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "shape parameters must be finite, got ({alpha}, {beta})"
            )));
        }
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::Domain(format!(
                "shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaParams {
            alpha,
            beta,
            source,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source(&self) -> ParamSource {
        self.source
    }

    pub fn with_source(self, source: ParamSource) -> Self {
        BetaParams { source, ..self }
    }
}

impl<'de> Deserialize<'de> for BetaParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            alpha: f64,
            beta: f64,
            source: ParamSource,
        }
        let raw = Raw::deserialize(deserializer)?;
        BetaParams::new(raw.alpha, raw.beta, raw.source).map_err(serde::de::Error::custom)
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)`.
pub(crate) fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 20_000;

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn incomplete_beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;

        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Lower and upper tails `(I_x(a,b), 1 - I_x(a,b))`, the smaller of the two
/// computed directly.
fn incomplete_beta_tails(x: f64, a: f64, b: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta_fn(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (ln_front.exp() * incomplete_beta_cf(a, b, x) / a).clamp(0.0, 1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (ln_front.exp() * incomplete_beta_cf(b, a, 1.0 - x) / b).clamp(0.0, 1.0);
        (1.0 - upper, upper)
    }
}

fn ln_pdf_interior(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta_fn(a, b)
}

/// Density of `Beta(alpha, beta)` at `x`.
///
/// Evaluating exactly on a pole (`x = 0` with `alpha < 1`, `x = 1` with
/// `beta < 1`) is an error rather than an infinity.
pub fn beta_pdf(x: Proportion, p: &BetaParams) -> Result<f64> {
    let x = x.value();
    let (a, b) = (p.alpha, p.beta);
    if x == 0.0 {
        return match a.partial_cmp(&1.0) {
            Some(Ordering::Less) => Err(Error::SingularDensity { x }),
            Some(Ordering::Equal) => Ok((-ln_beta_fn(a, b)).exp()),
            _ => Ok(0.0),
        };
    }
    if x == 1.0 {
        return match b.partial_cmp(&1.0) {
            Some(Ordering::Less) => Err(Error::SingularDensity { x }),
            Some(Ordering::Equal) => Ok((-ln_beta_fn(a, b)).exp()),
            _ => Ok(0.0),
        };
    }
    Ok(ln_pdf_interior(x, a, b).exp())
}

/// Regularized incomplete beta `I_x(alpha, beta)`.
pub fn beta_cdf(x: Proportion, p: &BetaParams) -> Proportion {
    let (lower, upper) = incomplete_beta_tails(x.value(), p.alpha, p.beta);
    Proportion::from_tails(lower, upper)
}

/// Survival function `1 - I_x(alpha, beta)`, accurate in the upper tail.
pub fn beta_sf(x: Proportion, p: &BetaParams) -> f64 {
    incomplete_beta_tails(x.value(), p.alpha, p.beta).1
}

const QUANTILE_MAX_ITER: usize = 400;

/// Inverse of [`beta_cdf`].
///
/// The search runs on the distance `d` from the nearer end of the support
/// (`x` itself for probabilities up to one half, `1 - x` above), so both
/// tails are resolved to full relative precision. Bisection (geometric once
/// the bracket spans orders of magnitude) narrows the bracket, then Newton
/// steps on `ln tail` against `ln d` polish the root. Steps that leave the
/// bracket fall back to bisection, so the bracket shrinks every iteration.
///
/// When the exact quantile is not representable (it lies closer to an
/// endpoint than the nearest `f64`), the nearest representable point is
/// returned.
pub fn beta_quantile(prob: Proportion, p: &BetaParams) -> Result<Proportion> {
    if prob.value() == 0.0 {
        return Ok(Proportion::ZERO);
    }
    if prob.complement() == 0.0 {
        return Ok(Proportion::ONE);
    }
    let (a, b) = (p.alpha, p.beta);
    let upper_side = prob.value() > 0.5;
    let ln_target = if upper_side {
        prob.complement().ln()
    } else {
        prob.value().ln()
    };
    let to_x = |d: f64| if upper_side { 1.0 - d } else { d };

    // G(d) = ln tail - ln target, increasing in d.
    let residual = |d: f64| -> (f64, f64) {
        let (lower, upper) = incomplete_beta_tails(to_x(d), a, b);
        let tail = if upper_side { upper } else { lower };
        (tail.ln() - ln_target, tail)
    };
    let shrink = |lo: f64, hi: f64| -> f64 {
        if lo == 0.0 {
            if hi > 1e-3 {
                0.5 * hi
            } else {
                (hi * 1e-20).max(f64::from_bits(1))
            }
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        }
    };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut d = 0.5;
    for iter in 0..QUANTILE_MAX_ITER {
        let (gd, tail) = residual(d);
        if gd == 0.0 {
            return Proportion::new(to_x(d));
        }
        if gd.is_nan() {
            return Err(Error::Convergence(format!(
                "non-finite tail at x = {}",
                to_x(d)
            )));
        }
        if gd < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        if lo.next_up() >= hi || to_x(lo) == to_x(hi) {
            let best = if residual(lo).0.abs() < residual(hi).0.abs() {
                lo
            } else {
                hi
            };
            return Proportion::new(to_x(best).clamp(0.0, 1.0));
        }

        let mut next = shrink(lo, hi);
        if iter >= 4 && gd.is_finite() {
            let x = to_x(d);
            let slope = (ln_pdf_interior(x, a, b) + d.ln() - tail.ln()).exp();
            let candidate = d * (-gd / slope).exp();
            if candidate.is_finite() && candidate > lo && candidate < hi {
                next = candidate;
            }
        }
        if (next - d).abs() <= 2.0 * f64::EPSILON * d {
            return Proportion::new(to_x(next).clamp(0.0, 1.0));
        }
        d = next;
    }
    Err(Error::Convergence(format!(
        "quantile of {} for Beta({a}, {b}) not found in {QUANTILE_MAX_ITER} iterations",
        prob.value()
    )))
}

pub fn beta_mean(p: &BetaParams) -> Proportion {
    Proportion::new(p.alpha / (p.alpha + p.beta)).expect("mean of positive shapes lies in [0, 1]")
}

pub fn beta_variance(p: &BetaParams) -> f64 {
    let s = p.alpha + p.beta;
    p.alpha * p.beta / (s * s * (s + 1.0))
}

/// Mode, with boundary rules when a shape parameter is at most 1.
pub fn beta_mode(p: &BetaParams) -> Result<Proportion> {
    let (a, b) = (p.alpha, p.beta);
    match (a > 1.0, b > 1.0) {
        (true, true) => Proportion::new(((a - 1.0) / (a + b - 2.0)).clamp(0.0, 1.0)),
        (false, true) => Ok(Proportion::ZERO),
        (true, false) => Ok(Proportion::ONE),
        (false, false) => Err(Error::AmbiguousMode { alpha: a, beta: b }),
    }
}

/// Method-of-moments fit: the Beta whose mean and variance match the inputs.
pub fn fit_beta_moments(mean: f64, variance: f64) -> Result<BetaParams> {
    let infeasible = || Error::InfeasibleMoments { mean, variance };
    if !(mean.is_finite() && variance.is_finite()) || mean <= 0.0 || mean >= 1.0 || variance <= 0.0
    {
        return Err(infeasible());
    }
    let bound = mean * (1.0 - mean);
    if variance >= bound {
        return Err(infeasible());
    }
    let kappa = bound / variance - 1.0;
    BetaParams::new(mean * kappa, (1.0 - mean) * kappa, ParamSource::AutoFit)
        .map_err(|_| infeasible())
}
