use nalgebra::DVector;

use super::{truth_value, Truth};
use crate::eigen::brownian_eigensystem_closed_form;
use crate::error::{Error, Result};
use crate::kernels::{kernel_vector, resolve_kernel, Design, KernelSpec};
use crate::sgpr::rank_gap_vector;

/// Gaps between the rank-`m` and full posteriors at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderGap {
    pub m: usize,
    /// `σ_m²(x) - σ_n²(x) = <r_m(x), k_n(x)>`.
    pub variance_gap: f64,
    /// `|b_m(x) - b_n(x)| = |<r_m(x), f_0>|`.
    pub bias_gap: f64,
}

/// Variance and bias gaps for the Brownian motion prior on the regular grid with unit noise
/// and `f_0(x) = |x - 1/2|^α`, evaluated at `x`.
pub fn remainder_gaps(n: usize, gamma: f64, alpha: f64, ms: &[usize], x: f64) -> Result<Vec<RemainderGap>> {
    let rk = resolve_kernel(KernelSpec::rescaled_brownian_motion(gamma), n)?;
    let design = Design::regular_grid(n)?;
    let es = brownian_eigensystem_closed_form(n, gamma)?;
    let truth = Truth::AbsPower { alpha, x0: 0.5 };
    let f0 = DVector::from_iterator(n, design.points().iter().map(|p| truth_value(&truth, p)));
    let kx = kernel_vector(&rk, &design, &[x])?;
    ms.iter()
        .map(|&m| {
            let r = rank_gap_vector(&es, m, 1.0, &kx)?;
            Ok(RemainderGap {
                m,
                variance_gap: r.dot(&kx),
                bias_gap: r.dot(&f0).abs(),
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Argument("need at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Argument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}
