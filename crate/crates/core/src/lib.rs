//! Gaussian-process regression with eigenvector inducing variables.
//!
//! The crate covers the full GP posterior, its sparse variational
//! approximation built from the leading eigenvectors of the kernel matrix,
//! frequentist diagnostics of the pointwise credible intervals both produce,
//! and a seeded Monte-Carlo harness for coverage studies.
//!
//! ```
//! use nalgebra::DVector;
//! use sgpr_core::{eigen, kernels, sgpr};
//!
//! let n = 200;
//! let rk = kernels::resolve_kernel(kernels::KernelSpec::rescaled_brownian_motion(0.5), n).unwrap();
//! let design = kernels::Design::regular_grid(n).unwrap();
//! let es = eigen::brownian_eigensystem_closed_form(n, 0.5).unwrap();
//! let y = DVector::from_fn(n, |i, _| (design.point(i)[0] - 0.5).abs());
//! let post = sgpr::sgpr_posterior_at(&es, 40, &rk, &design, &y, 1.0, &[0.5]).unwrap();
//! let ci = sgpr::credible_interval(&post, 0.1).unwrap();
//! assert!(ci.lower() < ci.upper());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod experiments;
pub mod gp_full;
pub mod kernels;
pub mod normal;
pub mod optimize;
pub mod rng;
pub mod sgpr;
pub mod theory;

pub use error::{Error, Result};
