//! Sparse variational GP regression with eigenvector inducing variables.
//!
//! With inducing variables `u_j = v_jᵀ f` the variational posterior replaces
//! `Σ_{j ≤ n} η_j v_j v_jᵀ` in the full posterior by its leading `m` terms.
//! The discarded part drives every comparison with the full posterior, via
//! the rank gap `r_m(x) = [Σ_{j > m} η_j v_j v_jᵀ] k_n(x)`:
//!
//! ```text
//! b_m(x)  = b_n(x)  - <r_m(x), f_0>
//! t_m²(x) = t_n²(x) - τ² ||r_m(x)||²        (τ² = noise variance of y)
//! σ_m²(x) = σ_n²(x) + <r_m(x), k_n(x)>
//! ```

use nalgebra::DVector;

use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::gp_full::{check_rank, check_sigma2, posterior_at_rank, PosteriorSummary};
use crate::kernels::{kernel_vector, Design, ResolvedKernel};
use crate::normal::two_sided_quantile;

/// Sparse posterior marginal at `x` using the leading `m` eigenpairs.
pub fn sgpr_posterior_at(
    es: &EigenSystem,
    m: usize,
    rk: &ResolvedKernel,
    design: &Design,
    y: &DVector<f64>,
    sigma2: f64,
    x: &[f64],
) -> Result<PosteriorSummary> {
    posterior_at_rank(es, m, rk, design, y, sigma2, x)
}

fn require_complete(es: &EigenSystem) -> Result<()> {
    if es.is_complete() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "operation needs the complete eigensystem ({} of {} pairs present)",
            es.rank(),
            es.n()
        )))
    }
}

/// The rank-gap vector `r_m(x)` for `kx = k_n(x)`.
pub fn rank_gap_vector(es: &EigenSystem, m: usize, sigma2: f64, kx: &DVector<f64>) -> Result<DVector<f64>> {
    require_complete(es)?;
    check_rank(es, m)?;
    check_sigma2(sigma2)?;
    let proj = es.project(kx)?;
    let mu = es.eigenvalues();
    let v = es.eigenvectors();
    let mut r = DVector::zeros(es.n());
    for j in m..es.n() {
        let w = proj[j] / (sigma2 + mu[j]);
        r.axpy(w, &v.column(j), 1.0);
    }
    Ok(r)
}

/// Frequentist bias, sampling variance and posterior variance of the rank-`m` posterior at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequentistDecomposition {
    pub bias: f64,
    pub sampling_variance: f64,
    pub posterior_variance: f64,
    pub rank: usize,
}

/// Bias and variance of the rank-`m` posterior mean under `y = f_0 + ε`, `ε ~ N(0, sigma2 I)`,
/// where `sigma2` is also the noise variance used by the posterior.
#[allow(clippy::too_many_arguments)]
pub fn frequentist_decomposition(
    es: &EigenSystem,
    m: usize,
    rk: &ResolvedKernel,
    design: &Design,
    f0_values: &DVector<f64>,
    sigma2: f64,
    x: &[f64],
    f0_at_x: f64,
) -> Result<FrequentistDecomposition> {
    check_rank(es, m)?;
    check_sigma2(sigma2)?;
    if f0_values.len() != es.n() || design.len() != es.n() {
        return Err(Error::Argument(format!(
            "length mismatch: f0 has {}, design has {}, eigensystem has n = {}",
            f0_values.len(),
            design.len(),
            es.n()
        )));
    }
    let kx = kernel_vector(rk, design, x)?;
    let kx_proj = es.project(&kx)?;
    let f_proj = es.project(f0_values)?;
    let mu = es.eigenvalues();
    let mut smoothed = 0.0;
    let mut weight_norm2 = 0.0;
    for j in 0..m {
        let eta = 1.0 / (sigma2 + mu[j]);
        smoothed += eta * kx_proj[j] * f_proj[j];
        weight_norm2 += eta * eta * kx_proj[j] * kx_proj[j];
    }
    let posterior = posterior_at_rank(es, m, rk, design, f0_values, sigma2, x)?;
    Ok(FrequentistDecomposition {
        bias: smoothed - f0_at_x,
        sampling_variance: sigma2 * weight_norm2,
        posterior_variance: posterior.variance,
        rank: m,
    })
}

/// Symmetric credible interval `[center - half_width, center + half_width]` of probability `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CredibleInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
}

impl CredibleInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

/// Smallest pointwise credible set of probability `1 - delta`.
pub fn credible_interval(ps: &PosteriorSummary, delta: f64) -> Result<CredibleInterval> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(ps.variance >= 0.0) {
        return Err(Error::Argument(format!(
            "posterior variance must be nonnegative, got {}",
            ps.variance
        )));
    }
    Ok(CredibleInterval {
        center: ps.mean,
        half_width: two_sided_quantile(delta) * ps.variance.sqrt(),
        level: 1.0 - delta,
    })
}

/// `KL(Q_m || posterior)` between the rank-`m` variational posterior and the full posterior.
pub fn kl_to_full_posterior(es: &EigenSystem, m: usize, y: &DVector<f64>, sigma2: f64) -> Result<f64> {
    require_complete(es)?;
    check_rank(es, m)?;
    check_sigma2(sigma2)?;
    let y_proj = es.project(y)?;
    let mu = es.eigenvalues();
    let mut twice = 0.0;
    for j in m..es.n() {
        let ratio = mu[j] / sigma2;
        // quadratic term plus ratio - log(1 + ratio) ≥ 0
        twice += ratio / (1.0 + ratio) * y_proj[j] * y_proj[j] / sigma2 + (ratio - ratio.ln_1p());
    }
    Ok(0.5 * twice)
}
