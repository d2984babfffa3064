//! Experiment configuration files.
//!
//! A config is a TOML document. Top-level keys other than `experiment` are defaults that are
//! deep-merged into every `[[experiment]]` table; a file without `[[experiment]]` tables
//! describes a single experiment.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use sgpr_core::experiments::{load_feature_file, DesignSpec, ExperimentConfig, MRule, Noise, NoiseVariance, Truth};
use sgpr_core::kernels::{KernelFamily, KernelSpec};

use crate::UsageError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    n: usize,
    kernel: RawKernel,
    #[serde(default)]
    design: RawDesign,
    truth: RawTruth,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default = "default_m_rule")]
    m_rule: RawRank,
    #[serde(default = "default_delta")]
    delta: f64,
    query_point: Option<Vec<f64>>,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    noise_variance: RawNoiseVariance,
    lengthscale_fit: Option<[f64; 2]>,
    #[serde(default)]
    compare_full: bool,
    grid: Option<RawGrid>,
}

fn default_m_rule() -> RawRank {
    RawRank::Name("threshold_alpha_gamma".into())
}

fn default_delta() -> f64 {
    0.1
}

fn default_replicates() -> usize {
    500
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: String,
    gamma: f64,
    lengthscale: Option<f64>,
    #[serde(default = "one")]
    d: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawDesign {
    #[default]
    Grid,
    Uniform,
    Gaussian {
        rho: f64,
    },
    External {
        path: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawTruth {
    AbsPower {
        alpha: f64,
        #[serde(default = "half")]
        x0: f64,
    },
    SignedSquare,
    NormPower {
        alpha: f64,
        x0: Option<Vec<f64>>,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawNoise {
    Gaussian {
        #[serde(default = "unit")]
        sigma: f64,
    },
    Laplace,
}

fn unit() -> f64 {
    1.0
}

impl Default for RawNoise {
    fn default() -> Self {
        RawNoise::Gaussian { sigma: 1.0 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoiseVariance {
    fixed: Option<f64>,
    bounds: Option<[f64; 2]>,
}

/// An inducing count: an integer or a rule name such as `"full"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawRank {
    Count(usize),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default = "default_grid_points")]
    points: usize,
    ranks: Vec<RawRank>,
    #[serde(default)]
    replicate: usize,
}

fn default_grid_points() -> usize {
    101
}

/// Posterior bands to evaluate on an evenly spaced grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    /// `None` is the full posterior.
    pub ranks: Vec<Option<usize>>,
    pub replicate: usize,
}

impl GridSpec {
    pub fn locations(&self) -> Vec<Vec<f64>> {
        let last = (self.points - 1).max(1) as f64;
        (0..self.points).map(|i| vec![i as f64 / last]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Option<GridSpec>,
}

/// Command-line adjustments applied after merging defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(dotted key, raw value)` pairs.
    pub set: Vec<(String, String)>,
    pub master_seed: Option<u64>,
    pub fixed_sigma2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub experiments: Vec<Experiment>,
    /// SHA-256 of the canonical JSON form of the effective experiment tables.
    pub hash: String,
    pub canonical: Json,
}

pub fn parse_override(arg: &str) -> Result<(String, String), String> {
    let (k, v) = arg.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {arg:?}"))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(format!("invalid key in {arg:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let mut loaded = from_str(&text, &path.display().to_string(), base_dir, overrides)?;
    loaded.path = path.to_path_buf();
    Ok(loaded)
}

pub fn from_str(text: &str, source: &str, base_dir: &Path, overrides: &Overrides) -> anyhow::Result<LoadedConfig> {
    let mut root: Table = toml::from_str(text).map_err(|e| UsageError(format!("{source}: {e}")))?;
    let entries = match root.remove("experiment") {
        None => vec![Table::new()],
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Table(t) => Ok(t),
                _ => Err(UsageError(format!("{source}: experiment {} is not a table", i + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(UsageError(format!("{source}: `experiment` must be an array of tables")).into()),
    };
    if entries.is_empty() {
        return Err(UsageError(format!("{source}: no experiments defined")).into());
    }
    let mut tables = Vec::with_capacity(entries.len());
    let mut experiments = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let mut table = root.clone();
        merge(&mut table, entry);
        for (key, value) in &overrides.set {
            set_path(&mut table, key, parse_value(value));
        }
        if let Some(s) = overrides.fixed_sigma2 {
            let mut nv = Table::new();
            nv.insert("fixed".into(), Value::Float(s));
            table.insert("noise_variance".into(), Value::Table(nv));
        }
        let label = table
            .get("name")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("experiment {}", i + 1));
        let raw: RawExperiment = Value::Table(table.clone())
            .try_into()
            .map_err(|e| UsageError(format!("{source}: {label}: {e}")))?;
        let mut experiment = build(raw, i, base_dir).map_err(|e| UsageError(format!("{source}: {label}: {e}")))?;
        if let Some(seed) = overrides.master_seed {
            experiment.config.master_seed = seed;
            // same bits, so distinct seeds hash differently
            table.insert("master_seed".into(), Value::Integer(seed as i64));
        }
        experiments.push(experiment);
        tables.push(table);
    }
    let canonical = canonical_json(&Value::Array(tables.into_iter().map(Value::Table).collect()));
    let hash = hex(&Sha256::digest(canonical.to_string().as_bytes()));
    Ok(LoadedConfig {
        path: PathBuf::from(source),
        experiments,
        hash,
        canonical,
    })
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or(key);
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        if !entry.is_table() {
            *entry = Value::Table(Table::new());
        }
        cur = entry.as_table_mut().expect("table just ensured");
    }
    cur.insert(last.to_string(), value);
}

/// Interprets an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sorted keys; integral floats and integers share one representation.
fn canonical_json(v: &Value) -> Json {
    match v {
        Value::String(s) => Json::String(s.clone()),
        Value::Integer(i) => Json::from(*i),
        Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Json::from(*f as i64),
        Value::Float(f) => serde_json::Number::from_f64(*f).map(Json::Number).unwrap_or(Json::Null),
        Value::Boolean(b) => Json::Bool(*b),
        Value::Datetime(d) => Json::String(d.to_string()),
        Value::Array(a) => Json::Array(a.iter().map(canonical_json).collect()),
        Value::Table(t) => Json::Object(t.iter().map(|(k, v)| (k.clone(), canonical_json(v))).collect()),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn normalise_name(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '(' || *c == ')').collect::<String>().to_ascii_lowercase()
}

fn m_rule(r: &RawRank) -> Result<MRule, String> {
    let name = match r {
        RawRank::Count(m) => return Ok(MRule::Explicit(*m)),
        RawRank::Name(s) => normalise_name(s),
    };
    if let Some(inner) = name.strip_prefix("explicit(").and_then(|s| s.strip_suffix(')')) {
        return inner.parse().map(MRule::Explicit).map_err(|_| format!("invalid explicit count {inner:?}"));
    }
    match name.as_str() {
        "full" => Ok(MRule::Full),
        "thresholdalphagamma" => Ok(MRule::ThresholdAlphaGamma),
        "thresholdd" => Ok(MRule::ThresholdD),
        "thresholdlogbelow" => Ok(MRule::ThresholdLogBelow),
        "thresholdlogabove" => Ok(MRule::ThresholdLogAbove),
        _ => Err(format!(
            "unknown m_rule {r:?}; expected an integer, full, threshold_alpha_gamma, threshold_d, threshold_log_below or threshold_log_above"
        )),
    }
}

fn build(raw: RawExperiment, index: usize, base_dir: &Path) -> Result<Experiment, String> {
    let d = raw.kernel.d;
    let mut kernel = match normalise_name(&raw.kernel.family).as_str() {
        "rbm" | "brownian" | "rescaledbrownianmotion" => KernelSpec::rescaled_brownian_motion(raw.kernel.gamma),
        "matern" => KernelSpec::matern(raw.kernel.gamma, d),
        "se" | "squaredexponential" => KernelSpec::squared_exponential(raw.kernel.gamma, d),
        other => return Err(format!("unknown kernel family {other:?}; expected rbm, matern or se")),
    };
    if kernel.family == KernelFamily::RescaledBrownianMotion && d != 1 {
        return Err(format!("rbm kernel is one-dimensional, got d = {d}"));
    }
    if let Some(l) = raw.kernel.lengthscale {
        kernel = kernel.with_lengthscale(l);
    }
    let design = match raw.design {
        RawDesign::Grid => DesignSpec::RegularGrid,
        RawDesign::Uniform => DesignSpec::UniformRandom,
        RawDesign::Gaussian { rho } => DesignSpec::GaussianEquicorrelated { rho },
        RawDesign::External { path } => {
            let path = if path.is_absolute() { path } else { base_dir.join(path) };
            DesignSpec::External(load_feature_file(&path).map_err(|e| e.to_string())?)
        }
    };
    let truth = match raw.truth {
        RawTruth::AbsPower { alpha, x0 } => Truth::AbsPower { alpha, x0 },
        RawTruth::SignedSquare => Truth::SignedSquare,
        RawTruth::NormPower { alpha, x0 } => Truth::NormPower {
            alpha,
            x0: x0.unwrap_or_else(|| vec![0.0; d]),
        },
    };
    let noise = match raw.noise {
        RawNoise::Gaussian { sigma } => Noise::Gaussian { sigma },
        RawNoise::Laplace => Noise::Laplace,
    };
    let noise_variance = match (raw.noise_variance.fixed, raw.noise_variance.bounds) {
        (Some(_), Some(_)) => return Err("noise_variance takes either `fixed` or `bounds`, not both".into()),
        (Some(s), None) => NoiseVariance::Fixed(s),
        (None, Some([lo, hi])) => NoiseVariance::Estimate { lo, hi },
        (None, None) => NoiseVariance::default(),
    };
    let config = ExperimentConfig {
        name: raw.name.unwrap_or_else(|| format!("experiment-{}", index + 1)),
        kernel,
        design,
        n: raw.n,
        truth,
        noise,
        m_rule: m_rule(&raw.m_rule)?,
        delta: raw.delta,
        query_point: raw.query_point,
        replicates: raw.replicates,
        master_seed: raw.master_seed,
        noise_variance,
        lengthscale_fit: raw.lengthscale_fit.map(|[lo, hi]| (lo, hi)),
        compare_full: raw.compare_full,
    };
    config.validate().map_err(|e| e.to_string())?;
    let grid = match raw.grid {
        None => None,
        Some(g) => {
            if d != 1 {
                return Err("grid output is available for d = 1 only".into());
            }
            if g.points < 2 {
                return Err("grid needs at least 2 points".into());
            }
            if g.replicate >= config.replicates {
                return Err(format!("grid replicate {} out of range", g.replicate));
            }
            let ranks = g
                .ranks
                .iter()
                .map(|r| match m_rule(r)? {
                    MRule::Full => Ok(None),
                    MRule::Explicit(m) if m >= 1 && m <= config.n => Ok(Some(m)),
                    MRule::Explicit(m) => Err(format!("grid rank {m} outside 1..={}", config.n)),
                    rule => {
                        let mut c = config.clone();
                        c.m_rule = rule;
                        c.inducing_count().map(Some).map_err(|e| e.to_string())
                    }
                })
                .collect::<Result<Vec<_>, String>>()?;
            Some(GridSpec {
                points: g.points,
                ranks,
                replicate: g.replicate,
            })
        }
    };
    Ok(Experiment { config, grid })
}
