use std::time::Instant;

use anyhow::Context;
use chrono::{SecondsFormat, Utc};

use sgpr_core::eigen::{brownian_eigensystem_leading, symmetric_eigensystem, truncate, EigenSystem};
use sgpr_core::experiments::{
    generate_dataset, generate_design, run_monte_carlo, DesignSpec, NoiseVariance, PreparedExperiment,
};
use sgpr_core::gp_full::{dense_posterior_at, posterior_from_projections};
use sgpr_core::kernels::{kernel_matrix, kernel_value, kernel_vector, resolve_kernel, KernelFamily};
use sgpr_core::rng::replicate_seed;
use sgpr_core::theory::{contraction_exponent, inducing_threshold, kl_regime, predicted_asymptotic_coverage};

use crate::config::{self, LoadedConfig, Overrides};
use crate::output::{self, Outputs, RunManifest};
use crate::{Common, PredictArgs, ProfileArgs, RunArgs, UsageError};

const SEED_ENV: &str = "SGPR_SEED";

fn load(common: &Common) -> anyhow::Result<LoadedConfig> {
    let master_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| UsageError(format!("{SEED_ENV} must be an unsigned 64-bit integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    if let Some(s) = common.fixed_sigma2 {
        if !(s > 0.0 && s.is_finite()) {
            return Err(UsageError(format!("--fixed-sigma2 must be positive, got {s}")).into());
        }
    }
    let overrides = Overrides {
        set: common.set.clone(),
        master_seed,
        fixed_sigma2: common.fixed_sigma2,
    };
    config::load(&common.config, &overrides)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn run(args: &RunArgs) -> anyhow::Result<()> {
    let started = now();
    let cfg = load(&args.common)?;
    if args.workers == Some(0) {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    let workers = pool.current_num_threads();

    let mut runs = Vec::with_capacity(cfg.experiments.len());
    let mut grids = Vec::new();
    for exp in &cfg.experiments {
        let c = &exp.config;
        let outcome = pool
            .install(|| run_monte_carlo(c))
            .with_context(|| format!("experiment {}", c.name))?;
        eprintln!(
            "{}: n={} m={} coverage={:.3} length={:.3} rmse={:.3}",
            c.name, c.n, outcome.sparse.m_used, outcome.sparse.coverage, outcome.sparse.length_mean, outcome.sparse.rmse
        );
        let s = &outcome.sparse.sigma2_estimates;
        if s.lower_boundary_hits + s.upper_boundary_hits > 0 {
            eprintln!(
                "warning: {}: noise variance estimate hit the search bounds in {} replicates (lower {}, upper {})",
                c.name,
                s.lower_boundary_hits + s.upper_boundary_hits,
                s.lower_boundary_hits,
                s.upper_boundary_hits
            );
        }
        if let Some(g) = &exp.grid {
            let rows = PreparedExperiment::new(c)
                .and_then(|p| p.posterior_grid(g.replicate, &g.ranks, &g.locations()))
                .with_context(|| format!("experiment {}: grid", c.name))?;
            grids.push((c.name.clone(), rows));
        }
        runs.push((c.clone(), outcome));
    }

    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let outputs = Outputs {
        results: args.out.join("results.csv"),
        replicates: args.out.join("replicates.csv"),
        grid: (!grids.is_empty()).then(|| args.out.join("grid.csv")),
    };
    output::write_results(&outputs.results, &runs)?;
    output::write_replicates(&outputs.replicates, &runs)?;
    if let Some(path) = &outputs.grid {
        output::write_grid(path, &grids)?;
    }
    let manifest = RunManifest {
        config_hash: cfg.hash.clone(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: cfg.path.clone(),
        started,
        finished: now(),
        workers,
        experiments: cfg.experiments.iter().map(|e| e.config.name.clone()).collect(),
        outputs,
        config: cfg.canonical.clone(),
    };
    output::write_manifest(&args.out.join("manifest.json"), &manifest)
}

pub fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    let PredictArgs { alpha, gamma, delta, n, d } = *args;
    if !(alpha > 0.0 && alpha.is_finite() && gamma > 0.0 && gamma.is_finite()) {
        return Err(UsageError(format!("alpha and gamma must be positive, got {alpha} and {gamma}")).into());
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(UsageError(format!("delta must lie in (0, 1), got {delta}")).into());
    }
    if n == 0 || d == 0 {
        return Err(UsageError("n and d must be at least 1".into()).into());
    }
    let report = predicted_asymptotic_coverage(alpha, gamma, delta).map_err(|e| UsageError(e.to_string()))?;
    let m_star = inducing_threshold(n, alpha, gamma, d);
    println!("regime={}", report.regime.name());
    match report.predicted_coverage {
        Some(p) => println!("predicted_coverage={p:.3}"),
        None => println!("predicted_coverage=none"),
    }
    println!("m_star={m_star}");
    println!("contraction_exponent={}", contraction_exponent(alpha, gamma));
    println!("kl_regime={}", kl_regime(n, m_star.clamp(1, n), gamma).name());
    Ok(())
}

pub fn profile(args: &ProfileArgs) -> anyhow::Result<()> {
    let cfg = load(&args.common)?;
    for exp in &cfg.experiments {
        let c = &exp.config;
        let m = c.inducing_count()?;
        let seed = replicate_seed(c.master_seed, 0);
        let design = generate_design(c, seed)?;
        let y = generate_dataset(&design, &c.truth, &c.noise, seed);
        let rk = resolve_kernel(c.kernel, c.n)?;
        let sigma2 = match c.noise_variance {
            NoiseVariance::Fixed(s) => s,
            NoiseVariance::Estimate { .. } => c.noise.variance().max(1e-4),
        };
        let x = c.query_point();

        let t = Instant::now();
        let full = dense_posterior_at(&rk, &design, &y, sigma2, &x)?;
        let full_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let closed = rk.family() == KernelFamily::RescaledBrownianMotion && matches!(c.design, DesignSpec::RegularGrid);
        let es: EigenSystem = if closed {
            brownian_eigensystem_leading(c.n, c.kernel.gamma, m)?
        } else {
            truncate(&symmetric_eigensystem(&kernel_matrix(&rk, &design)?)?, m)?
        };
        let kx_proj = es.project(&kernel_vector(&rk, &design, &x)?)?;
        let (mean, variance) =
            posterior_from_projections(&es, m, sigma2, &kx_proj, kernel_value(&rk, &x, &x)?, &es.project(&y)?)?;
        let sgpr_seconds = t.elapsed().as_secs_f64();

        println!("experiment={}", c.name);
        println!("n={}", c.n);
        println!("m={m}");
        println!("eigenpairs={}", if closed { "closed_form" } else { "numeric" });
        println!("full_seconds={full_seconds:.6}");
        println!("sgpr_seconds={sgpr_seconds:.6}");
        println!("ratio={:.3}", full_seconds / sgpr_seconds.max(1e-12));
        println!("mean_gap={:.3e}", (mean - full.mean).abs());
        println!("variance_gap={:.3e}", (variance - full.variance).abs());
    }
    Ok(())
}
