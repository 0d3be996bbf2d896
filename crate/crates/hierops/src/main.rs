use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use hierops::harness::{parse_dist, run_experiment, write_outputs, RunConfig};
use hierops::Error;

/// Experiment driver for hierarchical random operators.
#[derive(Parser, Debug)]
#[command(name = "hierops", version, about)]
struct Cli {
    /// Preset name: laplacian-exact, specdim, anderson-stats,
    /// ultrametric-sweep, rp-transition, rgflow, dbm-check, spine-check,
    /// trace-norm-check, ipr-profile, correlator-profile
    experiment: String,

    /// JSON config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,

    /// hierarchy depth (volume 2^n)
    #[arg(long)]
    n: Option<u32>,

    /// decay / bandwidth exponent c
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,

    /// kinetic coupling strength
    #[arg(long)]
    eps: Option<f64>,

    /// potential distribution, e.g. gaussian:1.0, cauchy:0,1, uniform:-1,1
    #[arg(long)]
    dist: Option<String>,

    /// number of disorder realizations
    #[arg(long)]
    reals: Option<usize>,

    /// master seed; every realization derives its own stream from it
    #[arg(long)]
    seed: Option<u64>,

    /// energy target (preset-specific default when omitted)
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,

    /// energy half-width for windows
    #[arg(long)]
    window: Option<f64>,

    /// renormalization flow steps
    #[arg(long)]
    steps: Option<usize>,

    /// kernel bandwidth
    #[arg(long)]
    bandwidth: Option<f64>,

    /// explicit matrix size (Rosenzweig-Porter)
    #[arg(long)]
    size: Option<usize>,

    /// worker threads (results are worker-count independent)
    #[arg(long)]
    workers: Option<usize>,

    /// output base path; writes <out>.csv and <out>.meta.json
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
            cfg.experiment = cli.experiment.clone();
            cfg
        }
        None => RunConfig::new(cli.experiment.clone()),
    };
    if let Some(n) = cli.n {
        cfg.n = n;
    }
    if let Some(c) = cli.c {
        cfg.c = c;
        cfg.c_values = None;
    }
    if let Some(eps) = cli.eps {
        cfg.eps = eps;
    }
    if let Some(dist) = &cli.dist {
        cfg.dist = parse_dist(dist)?;
    }
    if let Some(reals) = cli.reals {
        cfg.realizations = reals;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(energy) = cli.energy {
        cfg.energy = Some(energy);
    }
    if let Some(window) = cli.window {
        cfg.window = window;
    }
    if let Some(steps) = cli.steps {
        cfg.steps = steps;
    }
    if let Some(bandwidth) = cli.bandwidth {
        cfg.bandwidth = bandwidth;
    }
    if let Some(size) = cli.size {
        cfg.size = Some(size);
    }
    if let Some(workers) = cli.workers {
        cfg.workers = Some(workers);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = build_config(cli)?;
    let start = Instant::now();
    let output = run_experiment(&cfg)?;
    let wall = start.elapsed().as_secs_f64();

    println!(
        "experiment: {} ({} rows)",
        cfg.experiment,
        output.table.rows.len()
    );
    let preview = output.table.to_csv();
    for line in preview.lines().take(21) {
        println!("{line}");
    }
    if output.table.rows.len() > 20 {
        println!("... ({} more rows)", output.table.rows.len() - 20);
    }
    println!(
        "summary: {}",
        serde_json::to_string_pretty(&output.summary)?
    );
    println!(
        "realizations: {} attempted, {} failed, {:.1}s",
        output.attempted, output.failures, wall
    );

    if cfg.out.is_some() {
        write_outputs(&cfg, &output, wall)?;
        println!("wrote {}.csv and {}.meta.json", base(&cfg), base(&cfg));
    }

    if output.failure_fraction() > 0.01 {
        eprintln!(
            "failure fraction {:.3} exceeds the 1% threshold",
            output.failure_fraction()
        );
        return Ok(3);
    }
    Ok(0)
}

fn base(cfg: &RunConfig) -> String {
    cfg.out
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ (Error::Config(_) | Error::Argument(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
