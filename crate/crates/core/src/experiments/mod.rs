//! Simulation designs, data generation and Monte-Carlo coverage studies.

mod data;
mod features;
mod monte_carlo;
mod rates;

pub use data::{generate_dataset, generate_design, truth_value, Noise, Truth};
pub use features::{load_feature_file, parse_features, FeatureTable};
pub use monte_carlo::{
    posterior_grid, run_monte_carlo, run_replicate, GridRow, MetricsReport, MonteCarloOutcome, PointRecord,
    PreparedExperiment, ReplicateRecord, Sigma2Summary,
};
pub use rates::{loglog_slope, remainder_gaps, RemainderGap};

use crate::error::{Error, Result};
use crate::gp_full::DEFAULT_NOISE_BOUNDS;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::theory::{dimension_threshold, inducing_threshold, inducing_threshold_modified, ThresholdModifier};

/// How design points are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// `x_i = i / (n + 1/2)` on `[0, 1]`; shared by all replicates.
    RegularGrid,
    /// Uniform on `[0, 1]` when `d = 1`, on `[-1/2, 1/2]^d` otherwise.
    UniformRandom,
    /// `N_d(0, Σ_ρ)` with unit variances and common correlation `rho`.
    GaussianEquicorrelated { rho: f64 },
    /// Rows sampled without replacement from a feature table, then standardised.
    External(FeatureTable),
}

impl DesignSpec {
    pub fn name(&self) -> String {
        match self {
            DesignSpec::RegularGrid => "grid".into(),
            DesignSpec::UniformRandom => "uniform".into(),
            DesignSpec::GaussianEquicorrelated { rho } => format!("gaussian(rho={rho})"),
            DesignSpec::External(_) => "external".into(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, DesignSpec::RegularGrid)
    }
}

/// Rule for choosing the number of inducing variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MRule {
    Explicit(usize),
    /// `n^{(2+α)/((1+2γ)(1+α))}` (requires `d = 1`).
    ThresholdAlphaGamma,
    /// `n^{d/(d+2γ)}`.
    ThresholdD,
    /// Base threshold divided by `log n`.
    ThresholdLogBelow,
    /// Base threshold multiplied by `log n`.
    ThresholdLogAbove,
    Full,
}

/// Treatment of the noise variance used by the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseVariance {
    /// Marginal-likelihood estimate per replicate within the given bracket.
    Estimate { lo: f64, hi: f64 },
    Fixed(f64),
}

impl Default for NoiseVariance {
    fn default() -> Self {
        NoiseVariance::Estimate {
            lo: DEFAULT_NOISE_BOUNDS.0,
            hi: DEFAULT_NOISE_BOUNDS.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelSpec,
    pub design: DesignSpec,
    pub n: usize,
    pub truth: Truth,
    pub noise: Noise,
    pub m_rule: MRule,
    pub delta: f64,
    /// Defaults to `0.5` in one dimension and the origin otherwise.
    pub query_point: Option<Vec<f64>>,
    pub replicates: usize,
    pub master_seed: u64,
    pub noise_variance: NoiseVariance,
    /// Bracket for a joint marginal-likelihood fit of the lengthscale (stationary kernels only).
    pub lengthscale_fit: Option<(f64, f64)>,
    /// Also evaluate the full posterior on every replicate.
    pub compare_full: bool,
}

impl ExperimentConfig {
    /// Rescaled Brownian motion on the regular grid with `f_0(x) = |x - 1/2|^α`, Gaussian unit noise.
    pub fn brownian_fixed_design(n: usize, alpha: f64, gamma: f64) -> Self {
        Self {
            name: format!("rbm-grid-n{n}-a{alpha}-g{gamma}"),
            kernel: KernelSpec::rescaled_brownian_motion(gamma),
            design: DesignSpec::RegularGrid,
            n,
            truth: Truth::AbsPower { alpha, x0: 0.5 },
            noise: Noise::Gaussian { sigma: 1.0 },
            m_rule: MRule::ThresholdAlphaGamma,
            delta: 0.1,
            query_point: None,
            replicates: 500,
            master_seed: 0,
            noise_variance: NoiseVariance::default(),
            lengthscale_fit: None,
            compare_full: false,
        }
    }

    pub fn dimension(&self) -> usize {
        self.kernel.dimension
    }

    pub fn query_point(&self) -> Vec<f64> {
        match &self.query_point {
            Some(p) => p.clone(),
            None if self.dimension() == 1 => vec![0.5],
            None => vec![0.0; self.dimension()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Argument("number of replicates must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let d = self.dimension();
        if self.query_point().len() != d {
            return Err(Error::Config(format!(
                "query point has dimension {}, kernel has {d}",
                self.query_point().len()
            )));
        }
        self.truth.validate(d)?;
        self.noise.validate()?;
        match &self.design {
            DesignSpec::RegularGrid if d != 1 => {
                return Err(Error::Config("the regular grid design is one-dimensional".into()));
            }
            DesignSpec::GaussianEquicorrelated { rho } if !(0.0..1.0).contains(rho) => {
                return Err(Error::Config(format!("rho must lie in [0, 1), got {rho}")));
            }
            DesignSpec::External(table) => {
                if table.ncols() < d {
                    return Err(Error::Config(format!(
                        "feature table has {} columns, need {d}",
                        table.ncols()
                    )));
                }
                if table.nrows() < self.n {
                    return Err(Error::Config(format!(
                        "feature table has {} rows, need {}",
                        table.nrows(),
                        self.n
                    )));
                }
            }
            _ => {}
        }
        if self.kernel.family == KernelFamily::RescaledBrownianMotion
            && !matches!(self.design, DesignSpec::RegularGrid | DesignSpec::UniformRandom)
        {
            return Err(Error::Config(
                "rescaled Brownian motion needs a design on [0, 1] (grid or uniform)".into(),
            ));
        }
        if let NoiseVariance::Estimate { lo, hi } = self.noise_variance {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!("noise bounds must satisfy 0 < lo < hi, got ({lo}, {hi})")));
            }
        }
        if let NoiseVariance::Fixed(s) = self.noise_variance {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("fixed noise variance must be positive, got {s}")));
            }
        }
        if let Some((lo, hi)) = self.lengthscale_fit {
            if self.kernel.family == KernelFamily::RescaledBrownianMotion {
                return Err(Error::Config("lengthscale fitting needs a stationary kernel".into()));
            }
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!(
                    "lengthscale bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.m_rule == MRule::ThresholdAlphaGamma && d != 1 {
            return Err(Error::Config("the alpha/gamma threshold is defined for d = 1 only".into()));
        }
        self.inducing_count()?;
        Ok(())
    }

    /// Number of inducing variables implied by the `m_rule`, clamped to `1..=n`.
    pub fn inducing_count(&self) -> Result<usize> {
        let n = self.n;
        let d = self.dimension();
        let alpha = self.truth.smoothness();
        let gamma = self.kernel.gamma;
        let m = match self.m_rule {
            MRule::Explicit(m) => {
                if m == 0 || m > n {
                    return Err(Error::Config(format!("explicit m must lie in 1..={n}, got {m}")));
                }
                m
            }
            MRule::Full => n,
            MRule::ThresholdAlphaGamma => inducing_threshold(n, alpha, gamma, 1),
            MRule::ThresholdD => dimension_threshold(n, gamma, d),
            MRule::ThresholdLogBelow => inducing_threshold_modified(n, alpha, gamma, d, ThresholdModifier::LogBelow),
            MRule::ThresholdLogAbove => inducing_threshold_modified(n, alpha, gamma, d, ThresholdModifier::LogAbove),
        };
        Ok(m.clamp(1, n))
    }
}
