use nalgebra::DVector;
use rand::seq::index;

use super::{DesignSpec, ExperimentConfig};
use crate::error::{Error, Result};
use crate::kernels::{Design, DesignKind};
use crate::rng::{laplace, open_unit, stream, BoxMuller, DESIGN_STREAM, NOISE_STREAM};

/// True regression function `f_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    /// `|x - x0|^α` in one dimension.
    AbsPower { alpha: f64, x0: f64 },
    /// `sign(x - 1/2) |x - 1/2|^2`.
    SignedSquare,
    /// `||x - x0||^α`.
    NormPower { alpha: f64, x0: Vec<f64> },
}

impl Truth {
    /// Hölder smoothness of the function.
    pub fn smoothness(&self) -> f64 {
        match self {
            Truth::AbsPower { alpha, .. } | Truth::NormPower { alpha, .. } => *alpha,
            Truth::SignedSquare => 2.0,
        }
    }

    pub(crate) fn validate(&self, d: usize) -> Result<()> {
        match self {
            Truth::AbsPower { .. } | Truth::SignedSquare if d != 1 => Err(Error::Config(format!(
                "truth {self:?} is one-dimensional, design has d = {d}"
            ))),
            Truth::NormPower { x0, .. } if x0.len() != d => Err(Error::Config(format!(
                "truth centre has dimension {}, design has d = {d}",
                x0.len()
            ))),
            _ if !(self.smoothness() > 0.0) => {
                Err(Error::Config(format!("truth smoothness must be positive, got {}", self.smoothness())))
            }
            _ => Ok(()),
        }
    }
}

pub fn truth_value(truth: &Truth, x: &[f64]) -> f64 {
    match truth {
        Truth::AbsPower { alpha, x0 } => (x[0] - x0).abs().powf(*alpha),
        Truth::SignedSquare => {
            let u = x[0] - 0.5;
            u.signum() * u * u
        }
        Truth::NormPower { alpha, x0 } => {
            let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
            r2.sqrt().powf(*alpha)
        }
    }
}

/// Observation noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// Standard Laplace, variance 2.
    Laplace,
}

impl Noise {
    pub fn variance(&self) -> f64 {
        match self {
            Noise::Gaussian { sigma } => sigma * sigma,
            Noise::Laplace => 2.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Noise::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            Noise::Laplace => "laplace".into(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Noise::Gaussian { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("noise sigma must be nonnegative, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Draws the design for the replicate with the given seed.
///
/// The regular grid ignores the seed.
pub fn generate_design(cfg: &ExperimentConfig, seed: u64) -> Result<Design> {
    let n = cfg.n;
    let d = cfg.dimension();
    let mut rng = stream(seed, DESIGN_STREAM);
    match &cfg.design {
        DesignSpec::RegularGrid => Design::regular_grid(n),
        DesignSpec::UniformRandom => {
            let offset = if d == 1 { 0.0 } else { -0.5 };
            let points = (0..n)
                .map(|_| (0..d).map(|_| open_unit(&mut rng) + offset).collect())
                .collect();
            Design::from_points(points, DesignKind::UniformRandom)
        }
        DesignSpec::GaussianEquicorrelated { rho } => {
            let mut g = BoxMuller::new(rng);
            let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
            let points = (0..n)
                .map(|_| {
                    let shared = g.sample();
                    (0..d).map(|_| a * shared + b * g.sample()).collect()
                })
                .collect();
            Design::from_points(points, DesignKind::GaussianEquicorrelated { rho: *rho })
        }
        DesignSpec::External(table) => {
            if table.nrows() < n || table.ncols() < d {
                return Err(Error::Ingestion(format!(
                    "feature table {} has {} rows x {} columns, need at least {n} x {d}",
                    table.source(),
                    table.nrows(),
                    table.ncols()
                )));
            }
            let rows = index::sample(&mut rng, table.nrows(), n);
            let mut points: Vec<Vec<f64>> = rows.iter().map(|r| table.row(r)[..d].to_vec()).collect();
            standardise_columns(&mut points);
            Design::from_points(points, DesignKind::External)
        }
    }
}

/// Centres each column and scales it to unit sample variance; constant columns are only centred.
fn standardise_columns(points: &mut [Vec<f64>]) {
    let n = points.len();
    if n == 0 {
        return;
    }
    let d = points[0].len();
    for c in 0..d {
        let mean = points.iter().map(|p| p[c]).sum::<f64>() / n as f64;
        let var = if n > 1 {
            points.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for p in points.iter_mut() {
            p[c] = (p[c] - mean) / scale;
        }
    }
}

/// `y_i = f_0(x_i) + ε_i` with noise drawn from the replicate's noise stream.
pub fn generate_dataset(design: &Design, truth: &Truth, noise: &Noise, seed: u64) -> DVector<f64> {
    let mut rng = stream(seed, NOISE_STREAM);
    let f0 = design.points().iter().map(|p| truth_value(truth, p));
    match noise {
        Noise::Gaussian { sigma } => {
            let mut g = BoxMuller::new(rng);
            DVector::from_iterator(design.len(), f0.map(|f| f + sigma * g.sample()))
        }
        Noise::Laplace => DVector::from_iterator(design.len(), f0.map(|f| f + laplace(&mut rng))),
    }
}
