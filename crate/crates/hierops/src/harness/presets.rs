//! The preset experiments behind `run_experiment`.

use serde_json::json;

use super::{map_realizations, ColumnSpec, ResultTable, RunConfig, RunOutput};
use crate::dbm;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;
use crate::localization::{self, EnergyWindow};
use crate::models::{
    self, assemble, build_anderson, build_laplacian, build_rosenzweig_porter, build_ultrametric,
    laplacian_spectrum, sample_realization, spine_operator, LaplacianSpec, ModelSpec,
    UltrametricRealization,
};
use crate::rgflow;
use crate::rng::{realization_rng, substream_rng};
use crate::spectra::{self, eigenvalues_only, eigh};
use crate::stats;

fn laplacian_spec(cfg: &RunConfig, n: u32) -> Result<LaplacianSpec> {
    LaplacianSpec::new(HierarchySpec::new(n)?, cfg.eps, cfg.c)
}

fn c_list(cfg: &RunConfig, default: &[f64]) -> Vec<f64> {
    match &cfg.c_values {
        Some(v) => v.clone(),
        None if default.len() > 1 => default.to_vec(),
        None => vec![cfg.c],
    }
}

/// Exact-spectrum check of the hierarchical Laplacian: numerical eigenvalues
/// against the closed form, per (n, c), deviation relative to the top of the
/// spectrum.
pub fn laplacian_exact(cfg: &RunConfig) -> Result<RunOutput> {
    let n_values: Vec<u32> = cfg.n_values.clone().unwrap_or_else(|| vec![cfg.n]);
    let cs = c_list(cfg, &[cfg.c]);
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("n", "dimensionless"),
        ColumnSpec::new("c", "dimensionless"),
        ColumnSpec::new("eps", "energy"),
        ColumnSpec::new("dim", "dimensionless"),
        ColumnSpec::new("max_rel_dev", "dimensionless"),
    ]);
    let mut worst = 0.0f64;
    for &n in &n_values {
        for &c in &cs {
            let spec = LaplacianSpec::new(HierarchySpec::new(n)?, cfg.eps, c)?;
            let dev = laplacian_spectrum_deviation(&spec)?;
            worst = worst.max(dev);
            table.push(vec![
                n as f64,
                c,
                cfg.eps,
                spec.hierarchy.volume() as f64,
                dev,
            ]);
        }
    }
    Ok(RunOutput {
        table,
        summary: json!({ "max_rel_dev": worst }),
        failures: 0,
        attempted: n_values.len() * cs.len(),
    })
}

/// Max eigenvalue deviation from the closed-form spectrum, relative to the
/// spectral diameter.
pub fn laplacian_spectrum_deviation(spec: &LaplacianSpec) -> Result<f64> {
    let m = build_laplacian(spec)?;
    let vals = eigenvalues_only(&m)?;
    let mut expected = Vec::with_capacity(vals.len());
    for (e, mult) in laplacian_spectrum(spec) {
        expected.extend(std::iter::repeat_n(e, mult));
    }
    expected.sort_by(f64::total_cmp);
    let scale = expected
        .last()
        .copied()
        .unwrap_or(1.0)
        .abs()
        .max(f64::MIN_POSITIVE);
    let dev = vals
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(dev / scale)
}

/// Spectral dimension estimates against `d_s = 2/c`.
pub fn specdim(cfg: &RunConfig) -> Result<RunOutput> {
    let cs = c_list(cfg, &[0.5, 1.0, 2.0]);
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("c", "dimensionless"),
        ColumnSpec::new("estimate", "dimensionless"),
        ColumnSpec::new("expected", "dimensionless"),
        ColumnSpec::new("rel_err", "dimensionless"),
        ColumnSpec::new("fit_rms", "dimensionless"),
    ]);
    let mut worst = 0.0f64;
    for &c in &cs {
        let spec = LaplacianSpec::new(HierarchySpec::new(cfg.n.max(1))?, cfg.eps, c)?;
        let grid = spectra::default_lambda_grid(&spec)?;
        let (estimate, diag) = spectra::spectral_dimension(&spec, &grid)?;
        let expected = 2.0 / c;
        let rel = (estimate - expected).abs() / expected;
        worst = worst.max(rel);
        table.push(vec![c, estimate, expected, rel, diag.rms_residual]);
    }
    Ok(RunOutput {
        table,
        summary: json!({ "max_rel_err": worst }),
        failures: 0,
        attempted: cs.len(),
    })
}

/// Anderson level statistics and kernel-averaged IPR at one energy.
pub fn anderson_stats(cfg: &RunConfig) -> Result<RunOutput> {
    let spec = laplacian_spec(cfg, cfg.n)?;
    let energy = cfg.energy.unwrap_or(0.0);
    let dist = cfg.dist.clone();
    let results = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
        let mut rng = realization_rng(cfg.seed, i);
        let m = build_anderson(&spec, &dist, &mut rng)?;
        let sd = eigh(&m)?;
        let gap = spectra::gap_ratio_mean(&sd.eigenvalues, cfg.quantile_window)?;
        let (num, den) = localization::ipr_kernel_contribution(&sd, energy, cfg.bandwidth);
        let lambda_min = sd.eigenvalues[0];
        let lambda_max = *sd.eigenvalues.last().expect("nonempty");
        Ok((gap, lambda_min, lambda_max, num, den))
    })?;
    let (rows, failures) = results;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("realization", "dimensionless"),
        ColumnSpec::new("gap_ratio", "dimensionless"),
        ColumnSpec::new("lambda_min", "energy"),
        ColumnSpec::new("lambda_max", "energy"),
    ]);
    let mut gaps = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, row) in rows.iter().enumerate() {
        if let Some((gap, lo, hi, a, b)) = row {
            table.push(vec![i as f64, *gap, *lo, *hi]);
            gaps.push(*gap);
            num += a;
            den += b;
        }
    }
    let ipr_avg = if den > 0.0 { num / den } else { f64::NAN };
    Ok(RunOutput {
        table,
        summary: json!({
            "gap_ratio_mean": stats::mean(&gaps),
            "gap_ratio_se": stats::standard_error(&gaps),
            "ipr_kernel_average": ipr_avg,
            "energy": energy,
        }),
        failures,
        attempted: cfg.realizations,
    })
}

/// Gap-ratio statistics of the ultrametric ensemble over a list of `c`.
pub fn ultrametric_sweep(cfg: &RunConfig) -> Result<RunOutput> {
    let cs = c_list(cfg, &[cfg.c]);
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("c", "dimensionless"),
        ColumnSpec::new("realization", "dimensionless"),
        ColumnSpec::new("gap_ratio", "dimensionless"),
    ]);
    let mut summary = Vec::new();
    let mut failures = 0usize;
    for (ci, &c) in cs.iter().enumerate() {
        let (rows, fails) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
            let mut rng = substream_rng(cfg.seed, i, ci as u64);
            let m = build_ultrametric(cfg.n, c, &mut rng)?;
            let vals = eigenvalues_only(&m)?;
            spectra::gap_ratio_mean(&vals, cfg.quantile_window)
        })?;
        failures += fails;
        let mut gaps = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if let Some(gap) = row {
                table.push(vec![c, i as f64, *gap]);
                gaps.push(*gap);
            }
        }
        summary.push(json!({
            "c": c,
            "gap_ratio_mean": stats::mean(&gaps),
            "gap_ratio_se": stats::standard_error(&gaps),
            "count": gaps.len(),
        }));
    }
    Ok(RunOutput {
        table,
        summary: json!({ "per_c": summary }),
        failures,
        attempted: cs.len() * cfg.realizations,
    })
}

/// Rosenzweig-Porter gap statistics across the Poisson/GOE dichotomy.
pub fn rp_transition(cfg: &RunConfig) -> Result<RunOutput> {
    let size = cfg.size.unwrap_or(1usize << cfg.n);
    let cs = c_list(cfg, &[-0.5, 0.5]);
    let dist = cfg.dist.clone();
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("c", "dimensionless"),
        ColumnSpec::new("realization", "dimensionless"),
        ColumnSpec::new("gap_ratio", "dimensionless"),
    ]);
    let mut summary = Vec::new();
    let mut failures = 0usize;
    for (ci, &c) in cs.iter().enumerate() {
        let (rows, fails) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
            let mut rng = substream_rng(cfg.seed, i, 1000 + ci as u64);
            let m = build_rosenzweig_porter(size, c, &dist, &mut rng)?;
            let vals = eigenvalues_only(&m)?;
            spectra::gap_ratio_mean(&vals, cfg.quantile_window)
        })?;
        failures += fails;
        let mut gaps = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if let Some(gap) = row {
                table.push(vec![c, i as f64, *gap]);
                gaps.push(*gap);
            }
        }
        summary.push(json!({
            "c": c,
            "t": models::rp_time(size, c),
            "gap_ratio_mean": stats::mean(&gaps),
            "gap_ratio_se": stats::standard_error(&gaps),
            "count": gaps.len(),
        }));
    }
    Ok(RunOutput {
        table,
        summary: json!({ "size": size, "per_c": summary }),
        failures,
        attempted: cs.len() * cfg.realizations,
    })
}

/// Renormalization flow of the potential density with sup-norm tracking.
pub fn rgflow_preset(cfg: &RunConfig) -> Result<RunOutput> {
    let shift_total: f64 = (1..=cfg.steps)
        .map(|r| cfg.eps * 2f64.powf(-cfg.c * r as f64))
        .sum();
    let window = (-cfg.window, shift_total + cfg.window);
    let report = rgflow::flow_from_potential(&cfg.dist, cfg.eps, cfg.c, cfg.steps, window)?;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("step", "dimensionless"),
        ColumnSpec::new("shift", "energy"),
        ColumnSpec::new("sup_norm", "1/energy"),
    ]);
    for (i, (p, s)) in report.shifts.iter().zip(&report.sup_norms).enumerate() {
        table.push(vec![(i + 1) as f64, *p, *s]);
    }
    if let Some(base) = &cfg.out {
        if let Some(dir) = base.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let f = std::fs::File::create(base.with_extension("density.txt"))?;
        report
            .final_density
            .write_text(std::io::BufWriter::new(f))?;
    }
    Ok(RunOutput {
        table,
        summary: json!({
            "fitted_exponent": report.fitted_exponent,
            "fit_residual": report.fit_residual,
            "aborted_at": report.aborted_at,
            "window": [window.0, window.1],
        }),
        failures: if report.aborted_at.is_some() { 1 } else { 0 },
        attempted: 1,
    })
}

/// Recursive DBM spectra against direct ultrametric builds: per-realization
/// gap ratios and the pooled two-sample KS statistic.
pub fn dbm_check(cfg: &RunConfig) -> Result<RunOutput> {
    let (rows, failures) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
        let mut rng_rec = substream_rng(cfg.seed, i, 1);
        let mut rng_dir = substream_rng(cfg.seed, i, 2);
        let (rec, _) = dbm::recursive_spectrum(cfg.n, cfg.c, &mut rng_rec)?;
        let dir = eigenvalues_only(&build_ultrametric(cfg.n, cfg.c, &mut rng_dir)?)?;
        let gap_rec = spectra::gap_ratio_mean(&rec, cfg.quantile_window)?;
        let gap_dir = spectra::gap_ratio_mean(&dir, cfg.quantile_window)?;
        Ok((rec, dir, gap_rec, gap_dir))
    })?;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("realization", "dimensionless"),
        ColumnSpec::new("gap_ratio_recursive", "dimensionless"),
        ColumnSpec::new("gap_ratio_direct", "dimensionless"),
    ]);
    let mut pool_rec = Vec::new();
    let mut pool_dir = Vec::new();
    let mut gaps_rec = Vec::new();
    let mut gaps_dir = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some((rec, dir, gr, gd)) = row {
            table.push(vec![i as f64, *gr, *gd]);
            pool_rec.extend_from_slice(rec);
            pool_dir.extend_from_slice(dir);
            gaps_rec.push(*gr);
            gaps_dir.push(*gd);
        }
    }
    let ks = stats::ks_statistic(&pool_rec, &pool_dir);
    Ok(RunOutput {
        table,
        summary: json!({
            "ks_statistic": ks,
            "gap_ratio_mean_recursive": stats::mean(&gaps_rec),
            "gap_ratio_mean_direct": stats::mean(&gaps_dir),
            "gap_ratio_mean_difference": (stats::mean(&gaps_rec) - stats::mean(&gaps_dir)).abs(),
        }),
        failures,
        attempted: cfg.realizations,
    })
}

fn model_families(cfg: &RunConfig) -> Result<Vec<(String, ModelSpec)>> {
    let lap = laplacian_spec(cfg, cfg.n)?;
    Ok(vec![
        (
            "laplacian".into(),
            ModelSpec::Laplacian {
                laplacian: lap.clone(),
            },
        ),
        (
            "anderson".into(),
            ModelSpec::Anderson {
                laplacian: lap,
                potential: cfg.dist.clone(),
            },
        ),
        (
            "ultrametric".into(),
            ModelSpec::Ultrametric {
                depth: cfg.n,
                c: cfg.c,
            },
        ),
        (
            "rosenzweig-porter".into(),
            ModelSpec::RosenzweigPorter {
                size: cfg.size.unwrap_or(1usize << cfg.n),
                c: cfg.c,
                potential: cfg.dist.clone(),
            },
        ),
    ])
}

/// Numeric rank at a tolerance relative to the largest eigenvalue scale.
fn numeric_rank(m: &crate::matrix::SymMatrix, rel_tol: f64) -> Result<usize> {
    let vals = eigenvalues_only(m)?;
    let scale = vals.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    if scale == 0.0 {
        return Ok(0);
    }
    Ok(vals.iter().filter(|l| l.abs() > rel_tol * scale).count())
}

/// Sum of the numeric ranks of the blocks containing `x` in a realization.
fn spine_rank_budget(
    model: &ModelSpec,
    realization: &models::Realization,
    x: usize,
) -> Result<usize> {
    let budget = match (model, realization) {
        (ModelSpec::Laplacian { laplacian }, _) => (1..=laplacian.hierarchy.depth())
            .filter(|&r| laplacian.coupling(r) != 0.0)
            .count(),
        (ModelSpec::Anderson { laplacian, .. }, models::Realization::Anderson { potential }) => {
            let kinetic = (1..=laplacian.hierarchy.depth())
                .filter(|&r| laplacian.coupling(r) != 0.0)
                .count();
            kinetic + usize::from(potential[x] != 0.0)
        }
        (ModelSpec::Ultrametric { depth, .. }, models::Realization::Ultrametric(real)) => {
            let h = HierarchySpec::new(*depth)?;
            let mut total = 0usize;
            for r in 0..=*depth {
                let b = h.block_id(x, r)?;
                total += numeric_rank(real.block(r, b), 1e-12)?;
            }
            total
        }
        (
            ModelSpec::RosenzweigPorter { .. },
            models::Realization::RosenzweigPorter { potential, flow },
        ) => numeric_rank(flow, 1e-12)? + usize::from(potential[x] != 0.0),
        _ => return Err(Error::argument("realization does not match model")),
    };
    Ok(budget)
}

/// Spine disconnection check: for every family, realization, and center,
/// the cross-spine-block entries of `F = H - S_x` vanish identically,
/// `F + S_x` reassembles `H`, and `rank(S_x)` respects the per-block budget.
pub fn spine_check(cfg: &RunConfig) -> Result<RunOutput> {
    let families = model_families(cfg)?;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("family", "dimensionless"),
        ColumnSpec::new("realization", "dimensionless"),
        ColumnSpec::new("max_cross_block_entry", "energy"),
        ColumnSpec::new("max_reassembly_err", "energy"),
        ColumnSpec::new("rank_bound_ok", "dimensionless"),
    ]);
    let mut failures = 0usize;
    let mut all_cross_zero = true;
    let mut all_ranks_ok = true;
    for (fi, (_, model)) in families.iter().enumerate() {
        let (rows, fails) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
            let mut rng = substream_rng(cfg.seed, i, 2000 + fi as u64);
            let realization = sample_realization(model, &mut rng)?;
            let h = assemble(model, &realization)?;
            let dim = model.dimension();
            let scale = h.max_abs().max(1.0);
            let mut max_cross = 0.0f64;
            let mut max_reassembly = 0.0f64;
            let mut ranks_ok = true;
            for x in 0..dim {
                let op = spine_operator(model, x, &realization)?;
                let levels: Vec<Option<usize>> =
                    (0..dim).map(|j| op.decomposition.level_of(j)).collect();
                for j in 0..dim {
                    for k in 0..dim {
                        if levels[j] != levels[k] {
                            max_cross = max_cross.max(op.f.get(j, k).abs());
                        }
                        let sum = op.f.get(j, k) + op.s.get(j, k);
                        max_reassembly = max_reassembly.max((sum - h.get(j, k)).abs());
                    }
                }
                let rank_s = numeric_rank(&op.s, 1e-10)?;
                let budget = spine_rank_budget(model, &realization, x)?.min(dim);
                if rank_s > budget {
                    ranks_ok = false;
                }
            }
            Ok((max_cross, max_reassembly / scale, ranks_ok))
        })?;
        failures += fails;
        for (i, row) in rows.iter().enumerate() {
            if let Some((cross, reassembly, rank_ok)) = row {
                table.push(vec![
                    fi as f64,
                    i as f64,
                    *cross,
                    *reassembly,
                    f64::from(u8::from(*rank_ok)),
                ]);
                if *cross != 0.0 {
                    all_cross_zero = false;
                }
                if !rank_ok {
                    all_ranks_ok = false;
                }
            }
        }
    }
    Ok(RunOutput {
        table,
        summary: json!({
            "families": families.iter().map(|(name, _)| name.clone()).collect::<Vec<_>>(),
            "all_cross_block_entries_zero": all_cross_zero,
            "all_rank_bounds_ok": all_ranks_ok,
        }),
        failures,
        attempted: families.len() * cfg.realizations,
    })
}

/// Monte Carlo mean of the trace norm of the ultrametric blocks around site
/// 0 against the bound `2^{r(1-c)/2}`.
pub fn trace_norm_check(cfg: &RunConfig) -> Result<RunOutput> {
    let n = cfg.n;
    let c = cfg.c;
    let (rows, failures) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
        let mut rng = realization_rng(cfg.seed, i);
        let real = UltrametricRealization::sample(n, c, &mut rng);
        let mut norms = Vec::with_capacity(n as usize);
        for r in 1..=n {
            norms.push(models::trace_norm(real.block(r, 0))?);
        }
        Ok(norms)
    })?;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("level", "dimensionless"),
        ColumnSpec::new("block_dim", "dimensionless"),
        ColumnSpec::new("mean_trace_norm", "energy"),
        ColumnSpec::new("standard_error", "energy"),
        ColumnSpec::new("bound", "energy"),
        ColumnSpec::new("margin_se", "dimensionless"),
    ]);
    let mut all_within = true;
    for r in 1..=n as usize {
        let samples: Vec<f64> = rows.iter().flatten().map(|norms| norms[r - 1]).collect();
        let mean = stats::mean(&samples);
        let se = stats::standard_error(&samples);
        let bound = 2f64.powf(r as f64 * (1.0 - c) / 2.0);
        let margin = (bound - mean) / se;
        if margin < -3.0 {
            all_within = false;
        }
        table.push(vec![r as f64, (1u64 << r) as f64, mean, se, bound, margin]);
    }
    Ok(RunOutput {
        table,
        summary: json!({ "all_within_3_se": all_within }),
        failures,
        attempted: cfg.realizations,
    })
}

/// Kernel-averaged IPR of the Anderson model across volumes, with bootstrap
/// confidence intervals.
pub fn ipr_profile(cfg: &RunConfig) -> Result<RunOutput> {
    let n_values: Vec<u32> = cfg.n_values.clone().unwrap_or_else(|| vec![7, 10]);
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("n", "dimensionless"),
        ColumnSpec::new("ipr_kernel_average", "dimensionless"),
        ColumnSpec::new("ci_lo", "dimensionless"),
        ColumnSpec::new("ci_hi", "dimensionless"),
        ColumnSpec::new("count", "dimensionless"),
    ]);
    let mut failures = 0usize;
    let mut averages = Vec::new();
    for (ni, &n) in n_values.iter().enumerate() {
        let spec = laplacian_spec(cfg, n)?;
        let energy = match cfg.energy {
            Some(e) => e,
            None => spec.lambda_infinity()?,
        };
        let dist = cfg.dist.clone();
        let (rows, fails) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
            let mut rng = substream_rng(cfg.seed, i, 3000 + ni as u64);
            let m = build_anderson(&spec, &dist, &mut rng)?;
            let sd = eigh(&m)?;
            Ok(localization::ipr_kernel_contribution(
                &sd,
                energy,
                cfg.bandwidth,
            ))
        })?;
        failures += fails;
        let contributions: Vec<(f64, f64)> = rows.iter().flatten().copied().collect();
        let total_num: f64 = contributions.iter().map(|(a, _)| a).sum();
        let total_den: f64 = contributions.iter().map(|(_, b)| b).sum();
        if total_den <= 0.0 {
            return Err(Error::statistics(format!(
                "no spectral weight at E = {energy} for n = {n}"
            )));
        }
        let avg = total_num / total_den;
        // bootstrap the ratio over realizations
        let mut rng = substream_rng(cfg.seed, u64::MAX, 3000 + ni as u64);
        let mut boots = Vec::with_capacity(200);
        for _ in 0..200 {
            let (mut bn, mut bd) = (0.0, 0.0);
            for _ in 0..contributions.len() {
                let (a, b) =
                    contributions[rand::Rng::random_range(&mut rng, 0..contributions.len())];
                bn += a;
                bd += b;
            }
            if bd > 0.0 {
                boots.push(bn / bd);
            }
        }
        let ci = (
            stats::percentile(&boots, 2.5),
            stats::percentile(&boots, 97.5),
        );
        averages.push(avg);
        table.push(vec![n as f64, avg, ci.0, ci.1, contributions.len() as f64]);
    }
    let ratios: Vec<f64> = averages.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(RunOutput {
        table,
        summary: json!({ "averages": averages, "successive_ratios": ratios }),
        failures,
        attempted: n_values.len() * cfg.realizations,
    })
}

/// Correlator decay profile of the Anderson model plus the median decay
/// moment of the window eigenfunctions around their peak site.
pub fn correlator_profile_preset(cfg: &RunConfig) -> Result<RunOutput> {
    let spec = laplacian_spec(cfg, cfg.n)?;
    let energy = cfg.energy.unwrap_or(0.0);
    let window = EnergyWindow::new(energy - cfg.window, energy + cfg.window)?;
    let dist = cfg.dist.clone();
    let c = cfg.c;
    let (rows, failures) = map_realizations(cfg.worker_count(), cfg.realizations, |i| {
        let mut rng = realization_rng(cfg.seed, i);
        let m = build_anderson(&spec, &dist, &mut rng)?;
        let sd = eigh(&m)?;
        let class_means = localization::correlator_class_means(&sd, window, 0)?;
        // decay moments of the window states around their own peak
        let mut moments = Vec::new();
        for (idx, l) in sd.eigenvalues.iter().enumerate() {
            if !window.contains(*l) {
                continue;
            }
            let psi = sd.eigenvectors.column(idx);
            let peak = psi
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(site, _)| site)
                .unwrap_or(0);
            moments.push(localization::decay_moment(psi, c, peak)?);
        }
        Ok((class_means, moments))
    })?;
    let per_real: Vec<Vec<f64>> = rows
        .iter()
        .flatten()
        .map(|(means, _)| means.clone())
        .collect();
    let moments: Vec<f64> = rows
        .iter()
        .flatten()
        .flat_map(|(_, m)| m.iter().copied())
        .collect();
    let mut rng = substream_rng(cfg.seed, u64::MAX, 4000);
    let profile = localization::correlator_profile_from_class_means(&per_real, &mut rng)?;
    let mut table = ResultTable::new(vec![
        ColumnSpec::new("distance", "dimensionless"),
        ColumnSpec::new("mean_correlator", "dimensionless"),
    ]);
    for (d, mean) in profile.means.iter().enumerate() {
        table.push(vec![d as f64, *mean]);
    }
    Ok(RunOutput {
        table,
        summary: json!({
            "rate": profile.rate,
            "rate_ci": [profile.rate_ci.0, profile.rate_ci.1],
            "fit_residual": profile.fit_residual,
            "median_decay_moment": stats::median(&moments),
            "window_states": moments.len(),
            "realizations": profile.realizations,
        }),
        failures,
        attempted: cfg.realizations,
    })
}
