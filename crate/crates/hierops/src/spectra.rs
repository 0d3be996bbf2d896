//! Eigendecomposition with residual certificates and level-statistics
//! estimators: rescaled point processes, gap ratios, kernel density of
//! states, and the spectral dimension of the hierarchical Laplacian.

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::matrix::{symmetric_eigen, symmetric_eigenvalues, EigenVectors, SymMatrix};
use crate::models::LaplacianSpec;

/// Relative residual accepted from the eigensolver.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Mean gap ratio of a Poisson point process, `2 ln 2 - 1`.
///
/// Oganesyan & Huse (2007), Phys. Rev. B 75, 155111.
pub const POISSON_GAP_RATIO: f64 = 0.386_294_361_119_890_6;

/// Mean gap ratio of the Gaussian Orthogonal Ensemble (large-N numerical
/// value; the 3x3 Wigner surmise gives 0.5359).
pub const GOE_GAP_RATIO: f64 = 0.5307;

/// Eigendecomposition of one realization.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// ascending
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: EigenVectors,
    /// max over i of `||H psi_i - lambda_i psi_i||_2`
    pub residual_bound: f64,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Full symmetric eigendecomposition with a residual certificate. Fails if
/// the residual exceeds `RESIDUAL_TOL * max(1, ||H||)`.
pub fn eigh(a: &SymMatrix) -> Result<SpectralData> {
    let (eigenvalues, eigenvectors, residual_bound) = symmetric_eigen(a)?;
    let scale = eigenvalues.iter().fold(1.0f64, |m, &l| m.max(l.abs()));
    if !(residual_bound <= RESIDUAL_TOL * scale) {
        return Err(Error::numerical(format!(
            "eigensolver residual {residual_bound:.3e} exceeds {:.3e} (dim={} trace={:.6e} max|entry|={:.6e})",
            RESIDUAL_TOL * scale,
            a.dim(),
            a.trace(),
            a.max_abs()
        )));
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        residual_bound,
    })
}

/// Ascending eigenvalues only (no vectors, no certificate): the cheap path
/// for statistics sweeps.
pub fn eigenvalues_only(a: &SymMatrix) -> Result<Vec<f64>> {
    symmetric_eigenvalues(a)
}

/// One realization of the rescaled eigenvalue point process near `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessSample {
    /// `2^n (lambda - E)` for eigenvalues landing in the window
    pub points: Vec<f64>,
    /// `(-halfwidth, +halfwidth)`
    pub window: (f64, f64),
}

/// Microscopic rescaling `lambda -> 2^n (lambda - E)`, keeping points with
/// absolute value at most `halfwidth`.
pub fn rescale_points(
    eigenvalues: &[f64],
    energy: f64,
    n: u32,
    halfwidth: f64,
) -> PointProcessSample {
    let scale = 2f64.powi(n as i32);
    let points = eigenvalues
        .iter()
        .map(|l| scale * (l - energy))
        .filter(|p| p.abs() <= halfwidth)
        .collect();
    PointProcessSample {
        points,
        window: (-halfwidth, halfwidth),
    }
}

/// Mean of `min(s_i, s_{i+1}) / max(s_i, s_{i+1})` over consecutive spacings
/// inside the quantile index window `[lo*dim, hi*dim)`. Degenerate pairs
/// (both spacings zero) carry no information and are skipped.
pub fn gap_ratio_mean(eigenvalues: &[f64], quantile_window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = quantile_window;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::config(format!("bad quantile window ({lo}, {hi})")));
    }
    let n = eigenvalues.len();
    let start = (lo * n as f64).floor() as usize;
    let end = ((hi * n as f64).ceil() as usize).min(n);
    if end.saturating_sub(start) < 3 {
        return Err(Error::statistics(format!(
            "need at least 3 eigenvalues in the window, have {}",
            end.saturating_sub(start)
        )));
    }
    let mut w: Vec<f64> = eigenvalues[start..end].to_vec();
    w.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in w.windows(3) {
        let s1 = t[1] - t[0];
        let s2 = t[2] - t[1];
        let max = s1.max(s2);
        if max > 0.0 {
            sum += s1.min(s2) / max;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::statistics("all spacings degenerate"));
    }
    Ok(sum / count as f64)
}

/// Kernel-smoothed density of states at a site: the eigenvalue histogram
/// weighted by `|psi_lambda(site)|^2`, Gaussian-smoothed, averaged over
/// realizations. Integrates to 1 by eigenvector completeness.
pub fn empirical_dos(
    realizations: &[SpectralData],
    site: usize,
    bandwidth: f64,
) -> Result<DensityGrid> {
    if realizations.is_empty() {
        return Err(Error::statistics("need at least one realization"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::config(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    for sd in realizations {
        if site >= sd.dim() {
            return Err(Error::argument(format!("site {site} out of range")));
        }
    }
    let lo = realizations
        .iter()
        .map(|sd| sd.eigenvalues[0])
        .fold(f64::INFINITY, f64::min);
    let hi = realizations
        .iter()
        .map(|sd| *sd.eigenvalues.last().expect("nonempty"))
        .fold(f64::NEG_INFINITY, f64::max);
    // step fine enough that the trapezoid mass is exact to ~1e-7
    let step = bandwidth / 320.0;
    let (a, b) = (lo - 8.5 * bandwidth, hi + 8.5 * bandwidth);
    if (b - a) / step > 3e7 {
        return Err(Error::config(
            "bandwidth too small relative to the spectral range",
        ));
    }
    let nodes = DensityGrid::uniform_nodes(a, b, step);
    let actual_step = nodes[1] - nodes[0];
    let mut values = vec![0.0; nodes.len()];
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let cut = 8.0 * bandwidth;
    for sd in realizations {
        for (i, &l) in sd.eigenvalues.iter().enumerate() {
            let w = {
                let amp = sd.eigenvectors.amplitude(site, i);
                amp * amp
            };
            if w == 0.0 {
                continue;
            }
            let first = (((l - cut) - a) / actual_step).floor().max(0.0) as usize;
            let last = ((((l + cut) - a) / actual_step).ceil() as usize).min(nodes.len() - 1);
            for node in first..=last {
                let u = (nodes[node] - l) / bandwidth;
                values[node] += w * norm * (-0.5 * u * u).exp();
            }
        }
    }
    let inv = 1.0 / realizations.len() as f64;
    for v in &mut values {
        *v *= inv;
    }
    // kernel mass beyond the 8-sigma truncation is ~1e-15
    DensityGrid::new(nodes, values, 0.0)
}

/// Density of the semicircle law, `sqrt(max(0, 4 - E^2)) / (2 pi)`.
pub fn semicircle_density(energy: f64) -> f64 {
    (4.0 - energy * energy).max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// Least-squares fit diagnostics for the spectral-dimension estimate.
#[derive(Debug, Clone, Copy)]
pub struct FitDiagnostics {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub points: usize,
}

/// Infinite-volume spectral measure of `delta_k` for the hierarchical
/// Laplacian: weight `1/2` at `0` and `2^{-r-1}` at `E_r = p_1 + ... + p_r`.
/// Returned truncated at `r_max` (the omitted weight is `2^{-r_max-1}`).
pub fn laplacian_site_spectral_weights(spec: &LaplacianSpec, r_max: u32) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.5)];
    let mut partial = 0.0;
    for r in 1..=r_max {
        partial += spec.eps * 2f64.powf(-spec.c * r as f64);
        out.push((partial, 2f64.powi(-(r as i32) - 1)));
    }
    out
}

/// Spectral dimension from the analytic band-edge mass
/// `N(lambda) = <delta_k, 1_{[lambda_inf - lambda, lambda_inf]} delta_k>`:
/// the slope of `ln N` against `ln sqrt(lambda)` over the grid. For the
/// geometric couplings the mass is exactly `2^{-r0(lambda)}` with
/// `r0 = max(1, ceil(log2(lambda_inf/lambda)/c))`.
pub fn spectral_dimension(
    spec: &LaplacianSpec,
    lambda_grid: &[f64],
) -> Result<(f64, FitDiagnostics)> {
    let lambda_inf = spec.lambda_infinity()?;
    if lambda_grid.len() < 2 {
        return Err(Error::config("lambda grid needs at least two points"));
    }
    if !lambda_grid.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::config("lambda grid must be strictly descending"));
    }
    if lambda_grid
        .iter()
        .any(|&l| !(l > 0.0) || l >= lambda_inf || !l.is_finite())
    {
        return Err(Error::config(format!(
            "lambda grid must lie in (0, lambda_inf = {lambda_inf})"
        )));
    }
    let mut xs = Vec::with_capacity(lambda_grid.len());
    let mut ys = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let r0 = ((lambda_inf / l).log2() / spec.c).ceil().max(1.0);
        let mass = 2f64.powf(-r0);
        xs.push(l.sqrt().ln());
        ys.push(mass.ln());
    }
    let (slope, intercept, rms) = crate::stats::linear_fit(&xs, &ys)?;
    Ok((
        slope,
        FitDiagnostics {
            slope,
            intercept,
            rms_residual: rms,
            points: lambda_grid.len(),
        },
    ))
}

/// Default descending grid for [`spectral_dimension`]: four points per
/// octave over 40 octaves below `lambda_inf`.
pub fn default_lambda_grid(spec: &LaplacianSpec) -> Result<Vec<f64>> {
    let lambda_inf = spec.lambda_infinity()?;
    Ok((1..=160)
        .map(|j| lambda_inf * 2f64.powf(-(j as f64) / 4.0))
        .collect())
}
