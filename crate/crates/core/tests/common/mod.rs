#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgpr_core::eigen::{symmetric_eigensystem, EigenSystem};
use sgpr_core::kernels::{kernel_matrix, kernel_value, kernel_vector, resolve_kernel, Design, DesignKind, KernelSpec, ResolvedKernel};

pub struct Instance {
    pub rk: ResolvedKernel,
    pub design: Design,
    pub k: DMatrix<f64>,
    pub es: EigenSystem,
    pub y: DVector<f64>,
    pub sigma2: f64,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random kernel, design and response; `sigma2` is drawn unless given.
pub fn random_instance(rng: &mut ChaCha8Rng, n_max: usize, sigma2: Option<f64>) -> Instance {
    let n = rng.random_range(1..=n_max);
    let (spec, d) = match rng.random_range(0..4) {
        0 => (KernelSpec::rescaled_brownian_motion(rng.random_range(0.2..1.0)), 1),
        1 => (KernelSpec::matern([0.5, 1.5, 2.5][rng.random_range(0..3)], 1), 1),
        2 => (KernelSpec::matern(1.5, 2).with_lengthscale(0.7), 2),
        _ => (KernelSpec::squared_exponential(0.5, 1).with_lengthscale(0.3), 1),
    };
    let design = if rng.random_bool(0.3) && d == 1 {
        Design::regular_grid(n).unwrap()
    } else {
        let points = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        Design::from_points(points, DesignKind::UniformRandom).unwrap()
    };
    let rk = resolve_kernel(spec, n).unwrap();
    let k = kernel_matrix(&rk, &design).unwrap();
    let es = symmetric_eigensystem(&k).unwrap();
    let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let sigma2 = sigma2.unwrap_or_else(|| rng.random_range(0.05..2.0));
    Instance { rk, design, k, es, y, sigma2 }
}

/// Random query point: a design point or an off-design point.
pub fn random_query(rng: &mut ChaCha8Rng, inst: &Instance) -> Vec<f64> {
    if rng.random_bool(0.3) {
        inst.design.point(rng.random_range(0..inst.design.len())).to_vec()
    } else {
        (0..inst.design.dimension()).map(|_| rng.random::<f64>()).collect()
    }
}

/// Posterior mean and variance by Gaussian elimination on `K + σ²I`.
pub fn dense_posterior(inst: &Instance, x: &[f64]) -> (f64, f64) {
    let n = inst.design.len();
    let a = &inst.k + DMatrix::identity(n, n) * inst.sigma2;
    let lu = a.lu();
    let kx = kernel_vector(&inst.rk, &inst.design, x).unwrap();
    let alpha = lu.solve(&inst.y).unwrap();
    let beta = lu.solve(&kx).unwrap();
    let kxx = kernel_value(&inst.rk, x, x).unwrap();
    (kx.dot(&alpha), kxx - kx.dot(&beta))
}

/// Sparse posterior from the inducing-variable matrix form with `u_j = v_jᵀ f`:
/// `K_mm = diag(μ)`, `K_mn = V_mᵀ K`, `k_m(x) = V_mᵀ k_n(x)`.
pub fn matrix_form_sparse_posterior(inst: &Instance, m: usize, x: &[f64]) -> (f64, f64) {
    let vm = inst.es.eigenvectors().columns(0, m).into_owned();
    let kmn = vm.transpose() * &inst.k;
    let kmm = vm.transpose() * &inst.k * &vm;
    let kx = kernel_vector(&inst.rk, &inst.design, x).unwrap();
    let km = vm.transpose() * kx;
    let kxx = kernel_value(&inst.rk, x, x).unwrap();
    let sigma2 = inst.sigma2;
    let a = &kmm * sigma2 + &kmn * kmn.transpose();
    let mean = km.dot(&a.clone().lu().solve(&(&kmn * &inst.y)).unwrap());
    let b = &kmm + &kmn * kmn.transpose() / sigma2;
    let var = kxx - km.dot(&kmm.clone().lu().solve(&km).unwrap()) + km.dot(&b.lu().solve(&km).unwrap());
    (mean, var)
}

/// `KL(N(0, Q) || N(0, K))`-style divergence of the variational bound, from dense matrices:
/// `½[yᵀ(Q⁻¹ − K⁻¹)y + log|Q|/|K| + σ⁻² tr(K − Q)]` with `K = K_nn + σ²I`, `Q = Q_nn + σ²I`.
pub fn dense_kl(inst: &Instance, m: usize) -> f64 {
    let n = inst.design.len();
    let vm = inst.es.eigenvectors().columns(0, m).into_owned();
    let kmn = vm.transpose() * &inst.k;
    let kmm = vm.transpose() * &inst.k * &vm;
    let qnn = kmn.transpose() * kmm.clone().lu().solve(&kmn).unwrap();
    let id = DMatrix::identity(n, n) * inst.sigma2;
    let kf = &inst.k + &id;
    let qf = &qnn + &id;
    let quad = inst.y.dot(&(qf.clone().lu().solve(&inst.y).unwrap() - kf.clone().lu().solve(&inst.y).unwrap()));
    let logdet = qf.clone().cholesky().unwrap().ln_determinant() - kf.clone().cholesky().unwrap().ln_determinant();
    let trace = (&inst.k - &qnn).trace() / inst.sigma2;
    0.5 * (quad + logdet + trace)
}
