//! Experiment driver: configuration, deterministic seed streams, parallel
//! disorder averaging, and tabular output.
//!
//! Every preset maps realization index `i` to the RNG stream
//! `realization_rng(seed, i)`, folds results in index order, and is
//! therefore byte-identical across reruns and across worker counts. A
//! failed realization is logged and skipped; the run only fails (exit
//! code 3) when more than 1% of realizations fail.

mod presets;

pub use presets::laplacian_spectrum_deviation;

use std::io::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PotentialSpec;

/// Inputs of one experiment run. Unset fields take preset-specific
/// defaults; command-line flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// hierarchy depth (volume 2^n)
    #[serde(default = "default_n")]
    pub n: u32,
    /// explicit matrix size for Rosenzweig-Porter (otherwise 2^n)
    #[serde(default)]
    pub size: Option<usize>,
    #[serde(default = "default_c")]
    pub c: f64,
    /// sweep values overriding `c` for sweep presets
    #[serde(default)]
    pub c_values: Option<Vec<f64>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_dist")]
    pub dist: PotentialSpec,
    #[serde(default = "default_reals")]
    pub realizations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// energy target; presets default to their natural energy when unset
    #[serde(default)]
    pub energy: Option<f64>,
    /// energy half-width (localization windows, flow window padding)
    #[serde(default = "default_window")]
    pub window: f64,
    /// index window for gap-ratio statistics, as spectral quantiles
    #[serde(default = "default_quantile_window")]
    pub quantile_window: (f64, f64),
    /// renormalization flow steps
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// kernel bandwidth (DOS, IPR averages, Monte Carlo transport)
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    /// volume sweep for the IPR profile
    #[serde(default)]
    pub n_values: Option<Vec<u32>>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// output base path; writes `<out>.csv` and `<out>.meta.json`
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_n() -> u32 {
    6
}
fn default_c() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1.0
}
fn default_dist() -> PotentialSpec {
    PotentialSpec::Gaussian { sigma: 1.0 }
}
fn default_reals() -> usize {
    20
}
fn default_seed() -> u64 {
    42
}
fn default_window() -> f64 {
    0.5
}
fn default_quantile_window() -> (f64, f64) {
    (0.375, 0.625)
}
fn default_steps() -> usize {
    8
}
fn default_bandwidth() -> f64 {
    0.05
}

impl RunConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment.into() }))
            .expect("defaults are valid")
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::config("realization count must be >= 1"));
        }
        self.dist.validate()?;
        if let Some(values) = &self.c_values {
            if values.is_empty() {
                return Err(Error::config("c_values must not be empty"));
            }
        }
        Ok(())
    }
}

/// Parse the CLI potential grammar: `gaussian:SIGMA`, `cauchy:MEDIAN,SCALE`,
/// `uniform:A,B`. Mixtures are configured through the JSON config file.
pub fn parse_dist(text: &str) -> Result<PotentialSpec> {
    let (name, params) = text
        .split_once(':')
        .ok_or_else(|| Error::config(format!("bad distribution '{text}', expected NAME:PARAMS")))?;
    let values: Vec<f64> = params
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad distribution parameter '{t}'")))
        })
        .collect::<Result<_>>()?;
    let spec = match (name, values.as_slice()) {
        ("gaussian", [sigma]) => PotentialSpec::Gaussian { sigma: *sigma },
        ("cauchy", [median, scale]) => PotentialSpec::Cauchy {
            median: *median,
            scale: *scale,
        },
        ("uniform", [a, b]) => PotentialSpec::Uniform { a: *a, b: *b },
        _ => {
            return Err(Error::config(format!(
                "unknown distribution '{name}' or wrong parameter count"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// A named, unit-annotated numeric column.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
}

impl ColumnSpec {
    pub fn new(name: &str, unit: &str) -> Self {
        ColumnSpec {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

/// Numeric result table with a fixed schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(columns: Vec<ColumnSpec>) -> Self {
        ResultTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Comma-separated text with a `name [unit]` header row. Float
    /// formatting is the shortest round-trip representation, so identical
    /// runs serialize byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{} [{}]", c.name, c.unit))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Result of one experiment: the table, a preset-specific summary, and the
/// failure count.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: ResultTable,
    pub summary: serde_json::Value,
    pub failures: usize,
    pub attempted: usize,
}

impl RunOutput {
    pub fn failure_fraction(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.failures as f64 / self.attempted as f64
        }
    }
}

/// Dispatch an experiment by name.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment.as_str() {
        "laplacian-exact" => presets::laplacian_exact(cfg),
        "specdim" => presets::specdim(cfg),
        "anderson-stats" => presets::anderson_stats(cfg),
        "ultrametric-sweep" => presets::ultrametric_sweep(cfg),
        "rp-transition" => presets::rp_transition(cfg),
        "rgflow" => presets::rgflow_preset(cfg),
        "dbm-check" => presets::dbm_check(cfg),
        "spine-check" => presets::spine_check(cfg),
        "trace-norm-check" => presets::trace_norm_check(cfg),
        "ipr-profile" => presets::ipr_profile(cfg),
        "correlator-profile" => presets::correlator_profile_preset(cfg),
        other => Err(Error::config(format!(
            "unknown experiment '{other}'; available: laplacian-exact, specdim, \
             anderson-stats, ultrametric-sweep, rp-transition, rgflow, dbm-check, \
             spine-check, trace-norm-check, ipr-profile, correlator-profile"
        ))),
    }
}

/// Map realization indices to results on a private worker pool, preserving
/// index order. Failures become `None` and are counted.
pub(crate) fn map_realizations<T: Send>(
    workers: usize,
    count: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<(Vec<Option<T>>, usize)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let results: Vec<std::result::Result<T, String>> = pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| f(i).map_err(|e| e.to_string()))
            .collect()
    });
    let mut out = Vec::with_capacity(count);
    let mut failures = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(Some(v)),
            Err(msg) => {
                failures += 1;
                eprintln!("realization {i} failed: {msg}");
                out.push(None);
            }
        }
    }
    Ok((out, failures))
}

/// Write `<base>.csv` and `<base>.meta.json` (config echo, seed, code
/// version, wall time, summary). Densities, when a preset produces one, are
/// written separately by the preset as `<base>.density.txt`.
pub fn write_outputs(cfg: &RunConfig, output: &RunOutput, wall_time_s: f64) -> Result<()> {
    let base = cfg
        .out
        .as_ref()
        .ok_or_else(|| Error::config("no output path configured"))?;
    if let Some(dir) = base.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let csv_path = base.with_extension("csv");
    let mut f = std::fs::File::create(&csv_path)?;
    f.write_all(output.table.to_csv().as_bytes())?;

    let meta = serde_json::json!({
        "experiment": cfg.experiment,
        "config": cfg,
        "seed": cfg.seed,
        "code_version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall_time_s,
        "summary": output.summary,
        "realizations_attempted": output.attempted,
        "realizations_failed": output.failures,
    });
    let meta_path = base.with_extension("meta.json");
    let mut f = std::fs::File::create(&meta_path)?;
    f.write_all(serde_json::to_string_pretty(&meta)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
