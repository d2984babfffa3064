//! Prior covariance functions and kernel matrices over a design.
//!
//! Three families are supported: the rescaled Brownian motion kernel
//! `c_n * min(x, x')` on `[0, 1]`, the Matérn kernel with half-integer
//! smoothness, and the squared exponential kernel. Each family is given by a
//! [`KernelSpec`] and becomes usable once its sample-size dependent scaling has
//! been fixed by [`resolve_kernel`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    RescaledBrownianMotion,
    Matern,
    SquaredExponential,
}

impl KernelFamily {
    pub fn short_name(self) -> &'static str {
        match self {
            KernelFamily::RescaledBrownianMotion => "rbm",
            KernelFamily::Matern => "matern",
            KernelFamily::SquaredExponential => "se",
        }
    }
}

/// A prior covariance family together with its smoothness `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub gamma: f64,
    pub lengthscale_override: Option<f64>,
    pub dimension: usize,
}

impl KernelSpec {
    pub fn rescaled_brownian_motion(gamma: f64) -> Self {
        Self {
            family: KernelFamily::RescaledBrownianMotion,
            gamma,
            lengthscale_override: None,
            dimension: 1,
        }
    }

    pub fn matern(gamma: f64, dimension: usize) -> Self {
        Self {
            family: KernelFamily::Matern,
            gamma,
            lengthscale_override: None,
            dimension,
        }
    }

    pub fn squared_exponential(gamma: f64, dimension: usize) -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            gamma,
            lengthscale_override: None,
            dimension,
        }
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        self.lengthscale_override = Some(lengthscale);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be a positive finite number, got {}",
                self.gamma
            )));
        }
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if let Some(l) = self.lengthscale_override {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!(
                    "lengthscale override must be positive, got {l}"
                )));
            }
        }
        match self.family {
            KernelFamily::RescaledBrownianMotion => {
                if self.gamma > 1.0 {
                    return Err(Error::Config(format!(
                        "rescaled Brownian motion requires gamma in (0, 1], got {}",
                        self.gamma
                    )));
                }
                if self.dimension != 1 {
                    return Err(Error::Config(format!(
                        "rescaled Brownian motion requires dimension 1, got {}",
                        self.dimension
                    )));
                }
            }
            KernelFamily::Matern => {
                if MaternOrder::from_gamma(self.gamma).is_none() {
                    return Err(Error::Config(format!(
                        "Matérn smoothness must be one of 0.5, 1.5, 2.5, got {}",
                        self.gamma
                    )));
                }
            }
            KernelFamily::SquaredExponential => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    fn from_gamma(gamma: f64) -> Option<Self> {
        if gamma == 0.5 {
            Some(Self::Half)
        } else if gamma == 1.5 {
            Some(Self::ThreeHalves)
        } else if gamma == 2.5 {
            Some(Self::FiveHalves)
        } else {
            None
        }
    }

    fn eval(self, r: f64, lengthscale: f64) -> f64 {
        let s = r / lengthscale;
        match self {
            Self::Half => (-s).exp(),
            Self::ThreeHalves => {
                let a = 3f64.sqrt() * s;
                (1.0 + a) * (-a).exp()
            }
            Self::FiveHalves => {
                let a = 5f64.sqrt() * s;
                (1.0 + a + 5.0 * s * s / 3.0) * (-a).exp()
            }
        }
    }
}

/// The rescaling constant `c_n = (n + 1/2)^((1 - 2γ) / (1 + 2γ))` of the Brownian motion prior.
pub fn brownian_scale(n: usize, gamma: f64) -> f64 {
    let exponent = (1.0 - 2.0 * gamma) / (1.0 + 2.0 * gamma);
    if exponent == 0.0 {
        return 1.0;
    }
    (n as f64 + 0.5).powf(exponent)
}

/// Sample-size dependent lengthscale of the squared exponential kernel.
pub fn squared_exponential_lengthscale(n: usize, gamma: f64, dimension: usize) -> f64 {
    let d = dimension as f64;
    let denom = if dimension == 1 { 1.0 + 2.0 * gamma } else { d + 2.0 * gamma };
    (n as f64).powf(-1.0 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Brownian(f64),
    Lengthscale(f64),
}

/// A kernel whose scaling has been fixed for a given sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedKernel {
    spec: KernelSpec,
    n: usize,
    scale: Scale,
}

pub fn resolve_kernel(spec: KernelSpec, n: usize) -> Result<ResolvedKernel> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    spec.validate()?;
    let scale = match spec.family {
        KernelFamily::RescaledBrownianMotion => Scale::Brownian(brownian_scale(n, spec.gamma)),
        KernelFamily::Matern => Scale::Lengthscale(spec.lengthscale_override.unwrap_or(1.0)),
        KernelFamily::SquaredExponential => Scale::Lengthscale(
            spec.lengthscale_override
                .unwrap_or_else(|| squared_exponential_lengthscale(n, spec.gamma, spec.dimension)),
        ),
    };
    Ok(ResolvedKernel { spec, n, scale })
}

impl ResolvedKernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn family(&self) -> KernelFamily {
        self.spec.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    /// Brownian scaling `c_n`; `None` for stationary families.
    pub fn c_n(&self) -> Option<f64> {
        match self.scale {
            Scale::Brownian(c) => Some(c),
            Scale::Lengthscale(_) => None,
        }
    }

    /// Lengthscale of a stationary kernel; `None` for Brownian motion.
    pub fn lengthscale(&self) -> Option<f64> {
        match self.scale {
            Scale::Lengthscale(l) => Some(l),
            Scale::Brownian(_) => None,
        }
    }

    /// Same kernel with a different lengthscale. Fails for Brownian motion.
    pub fn with_lengthscale(&self, lengthscale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::Argument(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        match self.scale {
            Scale::Brownian(_) => Err(Error::Config(
                "rescaled Brownian motion has no lengthscale".into(),
            )),
            Scale::Lengthscale(_) => {
                let mut out = *self;
                out.spec.lengthscale_override = Some(lengthscale);
                out.scale = Scale::Lengthscale(lengthscale);
                Ok(out)
            }
        }
    }
}

/// Evaluates `k(x, x')`.
pub fn kernel_value(rk: &ResolvedKernel, x: &[f64], xp: &[f64]) -> Result<f64> {
    let d = rk.spec.dimension;
    if x.len() != d || xp.len() != d {
        return Err(Error::Argument(format!(
            "points must have dimension {d}, got {} and {}",
            x.len(),
            xp.len()
        )));
    }
    match rk.scale {
        Scale::Brownian(c) => {
            let (a, b) = (x[0], xp[0]);
            for v in [a, b] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!(
                        "Brownian motion kernel is defined on [0, 1], got {v}"
                    )));
                }
            }
            Ok(c * a.min(b))
        }
        Scale::Lengthscale(l) => {
            let r2: f64 = x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(match rk.spec.family {
                KernelFamily::SquaredExponential => (-0.5 * r2 / (l * l)).exp(),
                KernelFamily::Matern => MaternOrder::from_gamma(rk.spec.gamma)
                    .expect("validated in resolve_kernel")
                    .eval(r2.sqrt(), l),
                KernelFamily::RescaledBrownianMotion => unreachable!(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    RegularGrid1D,
    UniformRandom,
    GaussianEquicorrelated { rho: f64 },
    External,
}

/// An ordered set of design points.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<Vec<f64>>,
    kind: DesignKind,
    dimension: usize,
}

impl Design {
    /// The regular grid `x_i = i / (n + 1/2)`, `i = 1..n`.
    pub fn regular_grid(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("design must be nonempty".into()));
        }
        let h = n as f64 + 0.5;
        let points = (1..=n).map(|i| vec![i as f64 / h]).collect();
        Ok(Self {
            points,
            kind: DesignKind::RegularGrid1D,
            dimension: 1,
        })
    }

    pub fn from_points(points: Vec<Vec<f64>>, kind: DesignKind) -> Result<Self> {
        let dimension = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Argument("design must be nonempty".into()))?;
        if dimension == 0 {
            return Err(Error::Argument("design points must have dimension ≥ 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dimension {
                return Err(Error::Argument(format!(
                    "design point {i} has dimension {}, expected {dimension}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("design point {i} is not finite")));
            }
        }
        Ok(Self {
            points,
            kind,
            dimension,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// The `n × n` matrix `[k(x_i, x_j)]`. Each off-diagonal entry is computed once and mirrored.
pub fn kernel_matrix(rk: &ResolvedKernel, design: &Design) -> Result<DMatrix<f64>> {
    let n = design.len();
    if n == 0 {
        return Err(Error::Argument("design must be nonempty".into()));
    }
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = kernel_value(rk, design.point(i), design.point(j))?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// The vector `k_n(x) = (k(x, x_1), ..., k(x, x_n))`.
pub fn kernel_vector(rk: &ResolvedKernel, design: &Design, x: &[f64]) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(design.len());
    for (i, p) in design.points().iter().enumerate() {
        out[i] = kernel_value(rk, x, p)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rbm(gamma: f64, n: usize) -> ResolvedKernel {
        resolve_kernel(KernelSpec::rescaled_brownian_motion(gamma), n).unwrap()
    }

    #[test]
    fn resolve_scalings() {
        assert_eq!(rbm(0.5, 1000).c_n(), Some(1.0));
        let se = resolve_kernel(KernelSpec::squared_exponential(0.5, 1), 1000).unwrap();
        // 1000^(-1/2)
        assert_relative_eq!(se.lengthscale().unwrap(), 0.031_622_776_601_683_79, max_relative = 1e-14);
        // 1000.5^(-1/3)
        assert_relative_eq!(rbm(1.0, 1000).c_n().unwrap(), 0.099_983_338_886_729_29, max_relative = 1e-12);
        let m = resolve_kernel(KernelSpec::matern(1.5, 3), 10).unwrap();
        assert_eq!(m.lengthscale(), Some(1.0));
        assert_eq!(m.c_n(), None);
        let m = resolve_kernel(KernelSpec::matern(1.5, 3).with_lengthscale(0.2), 10).unwrap();
        assert_eq!(m.lengthscale(), Some(0.2));
        // d > 1: n^{-1/(d + 2γ)}
        let se = resolve_kernel(KernelSpec::squared_exponential(0.5, 10), 1000).unwrap();
        assert_relative_eq!(se.lengthscale().unwrap(), 1000f64.powf(-1.0 / 11.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            KernelSpec::rescaled_brownian_motion(1.5),
            KernelSpec::rescaled_brownian_motion(0.0),
            KernelSpec { dimension: 2, ..KernelSpec::rescaled_brownian_motion(0.5) },
            KernelSpec::matern(1.0, 1),
            KernelSpec::squared_exponential(-1.0, 1),
        ];
        for spec in bad {
            assert!(matches!(resolve_kernel(spec, 10), Err(Error::Config(_))), "{spec:?}");
        }
        assert!(resolve_kernel(KernelSpec::matern(0.5, 1), 0).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_value(&rbm(0.5, 10), &[0.3], &[0.7]).unwrap(), 0.3);
        let m = resolve_kernel(KernelSpec::matern(0.5, 1), 10).unwrap();
        assert_relative_eq!(kernel_value(&m, &[0.0], &[1.0]).unwrap(), (-1.0f64).exp());
        let se = resolve_kernel(KernelSpec::squared_exponential(0.5, 2).with_lengthscale(1.0), 10).unwrap();
        assert_eq!(kernel_value(&se, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let m52 = resolve_kernel(KernelSpec::matern(2.5, 1), 10).unwrap();
        let a = 5f64.sqrt();
        assert_relative_eq!(
            kernel_value(&m52, &[0.0], &[1.0]).unwrap(),
            (1.0 + a + 5.0 / 3.0) * (-a).exp()
        );
        let m32 = resolve_kernel(KernelSpec::matern(1.5, 1), 10).unwrap();
        let a = 3f64.sqrt();
        assert_relative_eq!(kernel_value(&m32, &[0.5], &[-0.5]).unwrap(), (1.0 + a) * (-a).exp());
    }

    #[test]
    fn brownian_domain_error() {
        assert!(matches!(kernel_value(&rbm(0.5, 10), &[1.2], &[0.5]), Err(Error::Domain(_))));
        assert!(matches!(kernel_value(&rbm(0.5, 10), &[0.5], &[-0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_matrix_and_vector() {
        let design = Design::regular_grid(2).unwrap();
        assert_eq!(design.point(0), &[0.4]);
        assert_eq!(design.point(1), &[0.8]);
        let k = kernel_matrix(&rbm(0.5, 2), &design).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[0.4, 0.4, 0.4, 0.8]));
        assert_relative_eq!(k.trace(), 1.2, max_relative = 1e-15);
        let kv = kernel_vector(&rbm(0.5, 2), &design, &[0.5]).unwrap();
        assert_eq!(kv.as_slice(), &[0.4, 0.5]);
        let col = kernel_vector(&rbm(0.5, 2), &design, &[0.8]).unwrap();
        assert_eq!(col, k.column(1).into_owned());
    }

    #[test]
    fn single_point_design() {
        let se = resolve_kernel(KernelSpec::squared_exponential(0.5, 1).with_lengthscale(1.0), 1).unwrap();
        let design = Design::from_points(vec![vec![0.0]], DesignKind::External).unwrap();
        assert_eq!(kernel_matrix(&se, &design).unwrap()[(0, 0)], 1.0);
        assert_eq!(kernel_vector(&se, &design, &[0.0]).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn brownian_grid_matrix_is_scaled_min() {
        for &(n, gamma) in &[(7usize, 0.3), (20, 0.5), (33, 1.0)] {
            let rk = rbm(gamma, n);
            let k = kernel_matrix(&rk, &Design::regular_grid(n).unwrap()).unwrap();
            let big_n = (n as f64 + 0.5) / rk.c_n().unwrap();
            for i in 0..n {
                for j in 0..n {
                    let expected = (i.min(j) + 1) as f64 / big_n;
                    assert!((k[(i, j)] - expected).abs() <= 1e-14, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn design_rejects_non_finite() {
        assert!(Design::from_points(vec![vec![f64::NAN]], DesignKind::External).is_err());
        assert!(Design::from_points(vec![vec![0.0], vec![0.0, 1.0]], DesignKind::External).is_err());
        assert!(Design::from_points(vec![], DesignKind::External).is_err());
    }
}
