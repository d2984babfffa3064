//! Full Gaussian-process posterior, marginal likelihood and noise estimation.
//!
//! All quantities are evaluated in the eigenbasis of `K_nn`:
//! `(K_nn + σ² I)^{-1} = Σ_j η_j v_j v_jᵀ` with `η_j = 1 / (σ² + μ_j)`.
//! The sparse posterior in [`crate::sgpr`] is the same sum cut at rank `m`.

use nalgebra::DVector;
use std::f64::consts::PI;

use crate::eigen::{symmetric_eigensystem, EigenSystem};
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, kernel_value, kernel_vector, Design, ResolvedKernel};
use crate::optimize::{golden_section_max, scan_then_refine};

/// Relative band below zero inside which a posterior variance is treated as round-off.
pub const NEGATIVE_VARIANCE_BAND: f64 = 1e-12;

/// Default search bracket for the noise variance.
pub const DEFAULT_NOISE_BOUNDS: (f64, f64) = (1e-4, 1e2);

/// Pointwise posterior marginal `f(x) | data ~ N(mean, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub point: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `n` for the full posterior, `m` for a sparse one.
    pub rank: usize,
}

impl PosteriorSummary {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub(crate) fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "noise variance must be positive, got {sigma2}"
        )))
    }
}

pub(crate) fn check_rank(es: &EigenSystem, m: usize) -> Result<()> {
    if m == 0 || m > es.rank() {
        Err(Error::Argument(format!(
            "rank m must lie in 1..={}, got {m}",
            es.rank()
        )))
    } else {
        Ok(())
    }
}

/// Clamps round-off negativity in a posterior variance; errors on anything worse.
pub(crate) fn clamp_variance(variance: f64, prior_variance: f64) -> Result<f64> {
    if variance >= 0.0 {
        Ok(variance)
    } else if variance >= -NEGATIVE_VARIANCE_BAND * prior_variance.abs() {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "posterior variance {variance:e} is negative beyond round-off (prior variance {prior_variance:e})"
        )))
    }
}

/// Posterior mean and variance from projections onto the eigenbasis, summing the leading `m` pairs.
///
/// `kx_proj = Vᵀ k_n(x)`, `y_proj = Vᵀ y`, `prior_variance = k(x, x)`.
pub fn posterior_from_projections(
    es: &EigenSystem,
    m: usize,
    sigma2: f64,
    kx_proj: &DVector<f64>,
    prior_variance: f64,
    y_proj: &DVector<f64>,
) -> Result<(f64, f64)> {
    check_rank(es, m)?;
    check_sigma2(sigma2)?;
    if kx_proj.len() < m || y_proj.len() < m {
        return Err(Error::Argument("projections shorter than requested rank".into()));
    }
    let mu = es.eigenvalues();
    let mut mean = 0.0;
    let mut reduction = 0.0;
    for j in 0..m {
        let eta = 1.0 / (sigma2 + mu[j]);
        mean += eta * kx_proj[j] * y_proj[j];
        reduction += eta * kx_proj[j] * kx_proj[j];
    }
    let variance = clamp_variance(prior_variance - reduction, prior_variance)?;
    Ok((mean, variance))
}

pub(crate) fn posterior_at_rank(
    es: &EigenSystem,
    m: usize,
    rk: &ResolvedKernel,
    design: &Design,
    y: &DVector<f64>,
    sigma2: f64,
    x: &[f64],
) -> Result<PosteriorSummary> {
    if design.len() != es.n() {
        return Err(Error::Argument(format!(
            "design has {} points, eigensystem has n = {}",
            design.len(),
            es.n()
        )));
    }
    let kx = kernel_vector(rk, design, x)?;
    let kxx = kernel_value(rk, x, x)?;
    let kx_proj = es.project(&kx)?;
    let y_proj = es.project(y)?;
    let (mean, variance) = posterior_from_projections(es, m, sigma2, &kx_proj, kxx, &y_proj)?;
    Ok(PosteriorSummary {
        point: x.to_vec(),
        mean,
        variance,
        rank: m,
    })
}

/// Full posterior marginal at `x`; `es` must be a complete decomposition of `K_nn`.
pub fn full_posterior_at(
    es: &EigenSystem,
    rk: &ResolvedKernel,
    design: &Design,
    y: &DVector<f64>,
    sigma2: f64,
    x: &[f64],
) -> Result<PosteriorSummary> {
    require_complete(es)?;
    posterior_at_rank(es, es.n(), rk, design, y, sigma2, x)
}

fn require_complete(es: &EigenSystem) -> Result<()> {
    if es.is_complete() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "full posterior needs all {} eigenpairs, got {}",
            es.n(),
            es.rank()
        )))
    }
}

/// Log marginal likelihood evaluated from the projected data `Vᵀ y`.
pub fn log_marginal_likelihood_projected(es: &EigenSystem, y_proj: &DVector<f64>, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    require_complete(es)?;
    let n = es.n();
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for (mu, yp) in es.eigenvalues().iter().zip(y_proj.iter()) {
        let s = mu + sigma2;
        quad += yp * yp / s;
        logdet += s.ln();
    }
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * n as f64 * (2.0 * PI).ln())
}

pub fn log_marginal_likelihood(es: &EigenSystem, y: &DVector<f64>, sigma2: f64) -> Result<f64> {
    let y_proj = es.project(y)?;
    log_marginal_likelihood_projected(es, &y_proj, sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryWarning {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub sigma2: f64,
    pub log_marginal_likelihood: f64,
    pub boundary: Option<BoundaryWarning>,
}

/// Absolute tolerance on `log σ²` for the noise search.
pub const LOG_NOISE_TOLERANCE: f64 = 1e-6;
const NOISE_SCAN_POINTS: usize = 41;

fn check_bounds(bounds: (f64, f64)) -> Result<()> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Argument(format!(
            "bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

/// Maximises the log marginal likelihood over `log σ²` in `[log lo, log hi]`.
///
/// A coarse scan picks the bracket, golden-section search refines it. A
/// maximiser within tolerance of either end is snapped to that bound and flagged.
pub fn estimate_noise_variance(es: &EigenSystem, y: &DVector<f64>, bounds: (f64, f64)) -> Result<NoiseEstimate> {
    check_bounds(bounds)?;
    require_complete(es)?;
    let y_proj = es.project(y)?;
    estimate_noise_variance_projected(es, &y_proj, bounds)
}

pub fn estimate_noise_variance_projected(
    es: &EigenSystem,
    y_proj: &DVector<f64>,
    bounds: (f64, f64),
) -> Result<NoiseEstimate> {
    check_bounds(bounds)?;
    let (lo, hi) = (bounds.0.ln(), bounds.1.ln());
    let objective = |t: f64| log_marginal_likelihood_projected(es, y_proj, t.exp()).unwrap_or(f64::NAN);
    let (t, value) = scan_then_refine(objective, lo, hi, NOISE_SCAN_POINTS, LOG_NOISE_TOLERANCE)?;
    let (sigma2, boundary) = if t - lo <= LOG_NOISE_TOLERANCE {
        (bounds.0, Some(BoundaryWarning::Lower))
    } else if hi - t <= LOG_NOISE_TOLERANCE {
        (bounds.1, Some(BoundaryWarning::Upper))
    } else {
        (t.exp(), None)
    };
    let log_marginal_likelihood = if boundary.is_some() {
        log_marginal_likelihood_projected(es, y_proj, sigma2)?
    } else {
        value
    };
    Ok(NoiseEstimate {
        sigma2,
        log_marginal_likelihood,
        boundary,
    })
}

/// Result of a joint noise/lengthscale fit.
#[derive(Debug, Clone)]
pub struct JointFit {
    pub kernel: ResolvedKernel,
    pub eigensystem: EigenSystem,
    pub noise: NoiseEstimate,
}

const JOINT_FIT_SWEEPS: usize = 5;
const LOG_LENGTHSCALE_TOLERANCE: f64 = 1e-3;

/// Coordinate-wise fit of `(σ², lengthscale)` for a stationary kernel: alternate
/// golden-section searches over `log σ²` and `log ℓ`, five sweeps.
pub fn fit_noise_and_lengthscale(
    rk: &ResolvedKernel,
    design: &Design,
    y: &DVector<f64>,
    noise_bounds: (f64, f64),
    lengthscale_bounds: (f64, f64),
) -> Result<JointFit> {
    check_bounds(noise_bounds)?;
    check_bounds(lengthscale_bounds)?;
    if rk.lengthscale().is_none() {
        return Err(Error::Config("joint fit requires a kernel with a lengthscale".into()));
    }
    let decompose = |l: f64| -> Result<(ResolvedKernel, EigenSystem)> {
        let k = rk.with_lengthscale(l)?;
        let es = symmetric_eigensystem(&kernel_matrix(&k, design)?)?;
        Ok((k, es))
    };

    let start = rk
        .lengthscale()
        .unwrap()
        .clamp(lengthscale_bounds.0, lengthscale_bounds.1);
    let (mut kernel, mut es) = decompose(start)?;
    let mut noise = estimate_noise_variance(&es, y, noise_bounds)?;
    let (llo, lhi) = (lengthscale_bounds.0.ln(), lengthscale_bounds.1.ln());
    for _ in 0..JOINT_FIT_SWEEPS {
        let sigma2 = noise.sigma2;
        let mut failure = None;
        let objective = |t: f64| match decompose(t.exp())
            .and_then(|(_, es)| log_marginal_likelihood(&es, y, sigma2))
        {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let searched = golden_section_max(objective, llo, lhi, LOG_LENGTHSCALE_TOLERANCE);
        if let Some(e) = failure {
            return Err(e);
        }
        let (t, _) = searched?;
        (kernel, es) = decompose(t.exp())?;
        noise = estimate_noise_variance(&es, y, noise_bounds)?;
    }
    Ok(JointFit {
        kernel,
        eigensystem: es,
        noise,
    })
}

/// Full posterior marginal at `x` by a Cholesky solve with `K_nn + σ² I`, costing `O(n³)`.
pub fn dense_posterior_at(
    rk: &ResolvedKernel,
    design: &Design,
    y: &DVector<f64>,
    sigma2: f64,
    x: &[f64],
) -> Result<PosteriorSummary> {
    check_sigma2(sigma2)?;
    let n = design.len();
    if y.len() != n {
        return Err(Error::Argument(format!("y has {} entries, design has {n} points", y.len())));
    }
    let mut a = kernel_matrix(rk, design)?;
    for i in 0..n {
        a[(i, i)] += sigma2;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("K_nn + sigma2 I is not positive definite".into()))?;
    let kx = kernel_vector(rk, design, x)?;
    let kxx = kernel_value(rk, x, x)?;
    let mean = kx.dot(&chol.solve(y));
    let variance = clamp_variance(kxx - kx.dot(&chol.solve(&kx)), kxx)?;
    Ok(PosteriorSummary {
        point: x.to_vec(),
        mean,
        variance,
        rank: n,
    })
}
