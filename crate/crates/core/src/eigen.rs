//! Eigendecompositions of kernel matrices.
//!
//! The Brownian motion kernel on the regular grid `x_i = i / (n + 1/2)` has
//! the closed-form spectrum
//!
//! ```text
//! mu_j  = 1 / (2 N (1 - cos psi_j)),  psi_j = (j - 1/2) pi / (n + 1/2),  N = (n + 1/2) / c_n
//! v_j^l = 2 sin(l psi_j) / sqrt(2n + 1)
//! ```
//!
//! Every other kernel/design pair goes through a dense symmetric solver.
//! All eigensystems are normalised the same way: eigenvalues descending, each
//! eigenvector's first non-negligible component positive.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::brownian_scale;

/// Relative band below zero inside which eigenvalues are treated as round-off and clamped.
pub const NEGATIVE_EIGENVALUE_BAND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSource {
    ClosedForm,
    Numeric,
}

/// Dense solver used by [`symmetric_eigensystem_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    /// Householder tridiagonalisation followed by implicit QR.
    #[default]
    Tridiagonal,
    /// Cyclic Jacobi rotations.
    Jacobi,
}

/// Leading eigenpairs of an `n × n` kernel matrix.
///
/// `eigenvectors` has `n` rows and one column per retained pair; a full
/// decomposition keeps all `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    source: EigenSource,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn source(&self) -> EigenSource {
        self.source
    }

    /// Size of the decomposed matrix.
    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Number of retained eigenpairs.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rank() == self.n()
    }

    /// Projections `V^T w` onto the retained eigenvectors.
    pub fn project(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n() {
            return Err(Error::Argument(format!(
                "vector has length {}, eigensystem has n = {}",
                w.len(),
                self.n()
            )));
        }
        Ok(self.eigenvectors.tr_mul(w))
    }

    /// `Σ_j mu_j v_j v_j^T` over the retained pairs.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }
}

/// Closed-form eigensystem of the rescaled Brownian motion kernel matrix on the regular grid.
pub fn brownian_eigensystem_closed_form(n: usize, gamma: f64) -> Result<EigenSystem> {
    brownian_eigensystem_leading(n, gamma, n)
}

/// Like [`brownian_eigensystem_closed_form`] but only builds the leading `m` pairs, in `O(nm)`.
pub fn brownian_eigensystem_leading(n: usize, gamma: f64, m: usize) -> Result<EigenSystem> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!(
            "rescaled Brownian motion requires gamma in (0, 1], got {gamma}"
        )));
    }
    if m == 0 || m > n {
        return Err(Error::Argument(format!("m must lie in 1..={n}, got {m}")));
    }
    let h = n as f64 + 0.5;
    let big_n = h / brownian_scale(n, gamma);
    let norm = 2.0 / (2.0 * n as f64 + 1.0).sqrt();
    let psi: Vec<f64> = (1..=m).map(|j| (j as f64 - 0.5) * PI / h).collect();
    // 1 - cos(psi) = 2 sin^2(psi / 2)
    let eigenvalues = DVector::from_iterator(
        m,
        psi.iter().map(|&p| {
            let s = (0.5 * p).sin();
            1.0 / (4.0 * big_n * s * s)
        }),
    );
    let eigenvectors = DMatrix::from_fn(n, m, |l, j| norm * (((l + 1) as f64) * psi[j]).sin());
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        source: EigenSource::ClosedForm,
    })
}

/// Numeric eigensystem of a symmetric matrix with the default solver.
pub fn symmetric_eigensystem(k: &DMatrix<f64>) -> Result<EigenSystem> {
    symmetric_eigensystem_with(k, EigenMethod::default())
}

pub fn symmetric_eigensystem_with(k: &DMatrix<f64>, method: EigenMethod) -> Result<EigenSystem> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::Argument(format!(
            "expected a nonempty square matrix, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("matrix has non-finite entries".into()));
    }
    let scale = k.amax();
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "matrix is not symmetric: max asymmetry {asym:e} exceeds 1e-12 * {scale:e}"
        )));
    }
    let (values, vectors) = match method {
        EigenMethod::Tridiagonal => {
            let eig = SymmetricEigen::new(k.clone());
            (eig.eigenvalues, eig.eigenvectors)
        }
        EigenMethod::Jacobi => jacobi_eigen(k),
    };
    normalise(values, vectors, EigenSource::Numeric)
}

/// Keeps the leading `m` eigenpairs.
pub fn truncate(es: &EigenSystem, m: usize) -> Result<EigenSystem> {
    if m == 0 || m > es.rank() {
        return Err(Error::Argument(format!(
            "truncation rank must lie in 1..={}, got {m}",
            es.rank()
        )));
    }
    Ok(EigenSystem {
        eigenvalues: es.eigenvalues.rows(0, m).into_owned(),
        eigenvectors: es.eigenvectors.columns(0, m).into_owned(),
        source: es.source,
    })
}

fn sign_fix(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = 1e-12 * norm;
    if let Some(&lead) = v.iter().find(|x| x.abs() > threshold) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn normalise(values: DVector<f64>, vectors: DMatrix<f64>, source: EigenSource) -> Result<EigenSystem> {
    let n = values.len();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut v = vectors.column(j).iter().copied().collect::<Vec<_>>();
            sign_fix(&mut v);
            (values[j], v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Near-equal eigenvalues are ordered by their sign-fixed eigenvectors.
    let top = pairs.first().map(|p| p.0.abs()).unwrap_or(0.0);
    let tie = 1e-12 * top;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end - 1].0 - pairs[end].0 <= tie {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| lex_desc(&a.1, &b.1));
        }
        start = end;
    }

    let mu1 = pairs.first().map(|p| p.0).unwrap_or(0.0).max(0.0);
    let band = NEGATIVE_EIGENVALUE_BAND * mu1;
    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (j, (mu, v)) in pairs.into_iter().enumerate() {
        eigenvalues[j] = if mu >= 0.0 {
            mu
        } else if mu >= -band {
            0.0
        } else {
            return Err(Error::Numerical(format!(
                "eigenvalue {mu:e} is below -{NEGATIVE_EIGENVALUE_BAND:e} * mu_1; matrix is not positive semi-definite"
            )));
        };
        eigenvectors.set_column(j, &DVector::from_vec(v));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        source,
    })
}

/// Cyclic Jacobi; stops once the off-diagonal Frobenius mass falls below `1e-12 ||K||_F`.
fn jacobi_eigen(k: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    const MAX_SWEEPS: usize = 100;
    let n = k.nrows();
    let mut a = k.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = 1e-12 * k.norm();

    let off = |a: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        if off(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }
    (a.diagonal(), v)
}
