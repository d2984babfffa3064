//! Closed-form asymptotic quantities for the rescaled Brownian motion prior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{cdf, two_sided_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Truth smoother than the prior (`alpha > gamma`).
    Undersmoothing,
    CorrectSmoothing,
    /// Truth rougher than the prior (`alpha < gamma`).
    Oversmoothing,
}

impl Regime {
    pub fn classify(alpha: f64, gamma: f64) -> Self {
        if alpha > gamma {
            Regime::Undersmoothing
        } else if alpha < gamma {
            Regime::Oversmoothing
        } else {
            Regime::CorrectSmoothing
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Undersmoothing => "Undersmoothing",
            Regime::CorrectSmoothing => "CorrectSmoothing",
            Regime::Oversmoothing => "Oversmoothing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub alpha: f64,
    pub gamma: f64,
    pub regime: Regime,
    /// Limiting coverage of the `1 - delta` credible interval; only known when undersmoothing.
    pub predicted_coverage: Option<f64>,
}

/// Scaling applied to the base inducing-count threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdModifier {
    #[default]
    None,
    /// `m* / log n`, just below the threshold.
    LogBelow,
    /// `m* · log n`, just above the threshold.
    LogAbove,
}

fn threshold_real(n: usize, alpha: f64, gamma: f64, d: usize) -> f64 {
    let n = n as f64;
    if d == 1 {
        n.powf((1.0 / (1.0 + 2.0 * gamma)) * ((2.0 + alpha) / (1.0 + alpha)))
    } else {
        let d = d as f64;
        n.powf(d / (d + 2.0 * gamma))
    }
}

/// Number of inducing variables `m*`: `n^{(2+α)/((1+2γ)(1+α))}` when `d = 1`,
/// `n^{d/(d+2γ)}` otherwise, rounded half away from zero.
pub fn inducing_threshold(n: usize, alpha: f64, gamma: f64, d: usize) -> usize {
    threshold_real(n, alpha, gamma, d).round() as usize
}

/// `n^{d/(d+2γ)}` rounded, for any `d ≥ 1`.
pub fn dimension_threshold(n: usize, gamma: f64, d: usize) -> usize {
    let d = d as f64;
    (n as f64).powf(d / (d + 2.0 * gamma)).round() as usize
}

/// [`inducing_threshold`] with a logarithmic modifier, clamped to `1..=n`.
pub fn inducing_threshold_modified(n: usize, alpha: f64, gamma: f64, d: usize, modifier: ThresholdModifier) -> usize {
    let base = threshold_real(n, alpha, gamma, d);
    let log_n = (n as f64).ln();
    let m = match modifier {
        ThresholdModifier::None => base,
        ThresholdModifier::LogBelow if log_n > 0.0 => base / log_n,
        ThresholdModifier::LogBelow => base,
        ThresholdModifier::LogAbove => base * log_n.max(1.0),
    };
    (m.round() as usize).clamp(1, n.max(1))
}

/// Limiting pointwise coverage `P(|N(0, 1/2)| ≤ z_{1-δ}) = 2Φ(√2 z_{1-δ}) - 1` in the undersmoothing regime.
pub fn undersmoothing_coverage_limit(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let z = two_sided_quantile(delta);
    Ok(2.0 * cdf(std::f64::consts::SQRT_2 * z) - 1.0)
}

pub fn predicted_asymptotic_coverage(alpha: f64, gamma: f64, delta: f64) -> Result<RegimeReport> {
    if !(alpha > 0.0 && gamma > 0.0) {
        return Err(Error::Argument(format!(
            "smoothness parameters must be positive, got alpha={alpha}, gamma={gamma}"
        )));
    }
    let regime = Regime::classify(alpha, gamma);
    let predicted_coverage = match regime {
        Regime::Undersmoothing => Some(undersmoothing_coverage_limit(delta)?),
        _ => {
            undersmoothing_coverage_limit(delta)?;
            None
        }
    };
    Ok(RegimeReport {
        alpha,
        gamma,
        regime,
        predicted_coverage,
    })
}

/// Pointwise contraction exponent `min(α, γ) / (1 + 2γ)`.
pub fn contraction_exponent(alpha: f64, gamma: f64) -> f64 {
    alpha.min(gamma) / (1.0 + 2.0 * gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KlRegime {
    /// `m < n^{1/(1+2γ)}`.
    BelowEstimationThreshold,
    /// `n^{1/(1+2γ)} ≤ m < n^{2/(1+2γ)}`: expected KL to the posterior diverges.
    DivergentKLBand,
    /// `m ≥ n^{2/(1+2γ)}`.
    VanishingKLBand,
}

impl KlRegime {
    pub fn name(self) -> &'static str {
        match self {
            KlRegime::BelowEstimationThreshold => "BelowEstimationThreshold",
            KlRegime::DivergentKLBand => "DivergentKLBand",
            KlRegime::VanishingKLBand => "VanishingKLBand",
        }
    }
}

/// Band of `m` relative to the KL rates; boundaries are assigned to the upper band.
pub fn kl_regime(n: usize, m: usize, gamma: f64) -> KlRegime {
    let n = n as f64;
    let m = m as f64;
    let lower = n.powf(1.0 / (1.0 + 2.0 * gamma));
    let upper = n.powf(2.0 / (1.0 + 2.0 * gamma));
    if m < lower {
        KlRegime::BelowEstimationThreshold
    } else if m < upper {
        KlRegime::DivergentKLBand
    } else {
        KlRegime::VanishingKLBand
    }
}
