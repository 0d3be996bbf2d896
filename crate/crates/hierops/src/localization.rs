//! Eigenfunction diagnostics: the eigenfunction correlator, inverse
//! participation ratios, hierarchical decay moments, and correlator decay
//! profiles with bootstrapped rate fits.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;
use crate::spectra::SpectralData;
use crate::stats;

/// Closed energy window `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::argument(format!(
                "energy window [{lo}, {hi}] is empty"
            )));
        }
        Ok(EnergyWindow { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Eigenvalues closer than `1e-8 * max(1, ||lambda||_inf)` are treated as one
/// degenerate group; genuine spectral gaps at desk scale sit far above this.
fn degeneracy_groups(eigenvalues: &[f64]) -> Vec<std::ops::Range<usize>> {
    let scale = eigenvalues.iter().fold(1.0f64, |m, &l| m.max(l.abs()));
    let tol = 1e-8 * scale;
    let mut groups = Vec::new();
    let mut start = 0usize;
    for i in 1..=eigenvalues.len() {
        if i == eigenvalues.len() || eigenvalues[i] - eigenvalues[i - 1] > tol {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// The eigenfunction correlator `Q(j, k; I)`: the supremum of
/// `|<delta_k, f(H) delta_j>|` over functions supported in `I` with
/// `||f||_inf <= 1`. For a finite matrix this is the absolute-overlap sum
/// `sum_G |P_G(j,k)|` over degenerate groups with energy in `I`, where `P_G`
/// is the group's spectral projector (basis-independent).
pub fn eigenfunction_correlator(
    sd: &SpectralData,
    j: usize,
    k: usize,
    window: EnergyWindow,
) -> f64 {
    let mut total = 0.0;
    for group in degeneracy_groups(&sd.eigenvalues) {
        let rep = 0.5 * (sd.eigenvalues[group.start] + sd.eigenvalues[group.end - 1]);
        if !window.contains(rep) {
            continue;
        }
        let overlap: f64 = group
            .map(|i| sd.eigenvectors.amplitude(j, i) * sd.eigenvectors.amplitude(k, i))
            .sum();
        total += overlap.abs();
    }
    total
}

/// `Q(j, k; I)` for all `k` at once.
pub fn correlator_row(sd: &SpectralData, j: usize, window: EnergyWindow) -> Vec<f64> {
    let dim = sd.dim();
    let mut out = vec![0.0; dim];
    for group in degeneracy_groups(&sd.eigenvalues) {
        let rep = 0.5 * (sd.eigenvalues[group.start] + sd.eigenvalues[group.end - 1]);
        if !window.contains(rep) {
            continue;
        }
        let mut overlaps = vec![0.0; dim];
        for i in group {
            let aj = sd.eigenvectors.amplitude(j, i);
            let col = sd.eigenvectors.column(i);
            for (o, amp) in overlaps.iter_mut().zip(col) {
                *o += aj * amp;
            }
        }
        for (o, acc) in overlaps.iter().zip(out.iter_mut()) {
            *acc += o.abs();
        }
    }
    out
}

fn check_normalized(psi: &[f64]) -> Result<()> {
    let norm: f64 = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::argument(format!(
            "vector is not l2-normalized (norm = {norm})"
        )));
    }
    Ok(())
}

/// Inverse participation ratio `sum_k |psi(k)|^q` of a unit vector;
/// `q = 4` is the standard localization diagnostic.
pub fn ipr(psi: &[f64], q: f64) -> Result<f64> {
    check_normalized(psi)?;
    Ok(psi.iter().map(|x| x.abs().powf(q)).sum())
}

/// Hierarchical decay moment `sum_k 2^{(c/4) d(origin,k)} |psi(k)|^2`.
/// The volume must be dyadic so the hierarchical metric is defined.
pub fn decay_moment(psi: &[f64], c: f64, origin: usize) -> Result<f64> {
    check_normalized(psi)?;
    if !psi.len().is_power_of_two() {
        return Err(Error::argument(format!(
            "decay moment needs a dyadic volume, got {}",
            psi.len()
        )));
    }
    if origin >= psi.len() {
        return Err(Error::argument(format!("origin {origin} out of range")));
    }
    Ok(psi
        .iter()
        .enumerate()
        .map(|(k, amp)| {
            let d = HierarchySpec::distance_of(origin, k);
            2f64.powf(c / 4.0 * d as f64) * amp * amp
        })
        .sum())
}

/// Disorder-averaged correlator profile by hierarchical distance, with the
/// fitted exponential decay rate.
#[derive(Debug, Clone)]
pub struct CorrelatorProfile {
    /// `means[d]` = Monte Carlo mean of `Q(j, k; I)` over `k` at distance `d`
    pub means: Vec<f64>,
    /// decay rate: `log2(mean)` falls like `-rate * d`; `+inf` when the
    /// profile hits exact zero after one distance class
    pub rate: f64,
    /// bootstrap percentile interval (2.5%, 97.5%) for the rate
    pub rate_ci: (f64, f64),
    pub fit_residual: f64,
    pub realizations: usize,
}

/// Per-distance-class means of `Q(site, k; I)` for one realization;
/// `out[d]` averages over the `2^{d-1}` sites at hierarchical distance `d`.
pub fn correlator_class_means(
    sd: &SpectralData,
    window: EnergyWindow,
    site: usize,
) -> Result<Vec<f64>> {
    let dim = sd.dim();
    if !dim.is_power_of_two() {
        return Err(Error::argument("correlator classes need a dyadic volume"));
    }
    if site >= dim {
        return Err(Error::argument(format!("site {site} out of range")));
    }
    let n = dim.trailing_zeros() as usize;
    let mut sums = vec![0.0; n + 1];
    let mut counts = vec![0usize; n + 1];
    let row = correlator_row(sd, site, window);
    for (k, q) in row.iter().enumerate() {
        let d = HierarchySpec::distance_of(site, k) as usize;
        sums[d] += q;
        counts[d] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect())
}

/// Estimate `E[Q(j, k; I)]` by distance class and fit the decay rate.
/// Needs at least 20 realizations of a fixed dyadic volume.
pub fn correlator_profile<R: Rng + ?Sized>(
    realizations: &[SpectralData],
    window: EnergyWindow,
    site: usize,
    rng: &mut R,
) -> Result<CorrelatorProfile> {
    if window.width() <= 0.0 {
        return Err(Error::statistics("empty energy window"));
    }
    let per_real: Vec<Vec<f64>> = realizations
        .iter()
        .map(|sd| correlator_class_means(sd, window, site))
        .collect::<Result<_>>()?;
    correlator_profile_from_class_means(&per_real, rng)
}

/// Aggregate per-realization class means (streaming-friendly entry point).
pub fn correlator_profile_from_class_means<R: Rng + ?Sized>(
    per_real: &[Vec<f64>],
    rng: &mut R,
) -> Result<CorrelatorProfile> {
    if per_real.len() < 20 {
        return Err(Error::statistics(format!(
            "correlator profile needs >= 20 realizations, got {}",
            per_real.len()
        )));
    }
    let classes = per_real[0].len();
    if per_real.iter().any(|r| r.len() != classes) {
        return Err(Error::argument("realizations have mixed dimensions"));
    }

    let means: Vec<f64> = (0..classes)
        .map(|d| stats::mean(&per_real.iter().map(|r| r[d]).collect::<Vec<_>>()))
        .collect();

    let fit = fit_profile(&means);
    let (rate, fit_residual) = fit.unwrap_or((f64::INFINITY, 0.0));

    // bootstrap the rate over realizations
    let b = 200usize;
    let mut rates = Vec::with_capacity(b);
    for _ in 0..b {
        let sample: Vec<&Vec<f64>> = (0..per_real.len())
            .map(|_| &per_real[rng.random_range(0..per_real.len())])
            .collect();
        let boot_means: Vec<f64> = (0..classes)
            .map(|d| stats::mean(&sample.iter().map(|r| r[d]).collect::<Vec<_>>()))
            .collect();
        match fit_profile(&boot_means) {
            Some((r, _)) => rates.push(r),
            None => rates.push(f64::INFINITY),
        }
    }
    rates.sort_by(f64::total_cmp);
    let rate_ci = (
        stats::percentile(&rates, 2.5),
        stats::percentile(&rates, 97.5),
    );

    Ok(CorrelatorProfile {
        means,
        rate,
        rate_ci,
        fit_residual,
        realizations: per_real.len(),
    })
}

/// Slope fit of `log2(mean)` against distance over the positive classes;
/// `None` when fewer than two classes survive.
fn fit_profile(means: &[f64]) -> Option<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (d, &m) in means.iter().enumerate() {
        if m > 0.0 {
            xs.push(d as f64);
            ys.push(m.log2());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let (slope, _, rms) = stats::linear_fit(&xs, &ys).ok()?;
    Some((-slope, rms))
}

/// One realization's contribution `(sum_l ipr(psi_l) K(E - l), sum_l K(E - l))`
/// to the kernel-averaged IPR, with the normalized triangular kernel.
pub fn ipr_kernel_contribution(sd: &SpectralData, energy: f64, bandwidth: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &l) in sd.eigenvalues.iter().enumerate() {
        let u = (energy - l).abs() / bandwidth;
        if u >= 1.0 {
            continue;
        }
        let kernel = (1.0 - u) / bandwidth;
        let psi = sd.eigenvectors.column(i);
        let p4: f64 = psi
            .iter()
            .map(|x| {
                let a = x * x;
                a * a
            })
            .sum();
        num += p4 * kernel;
        den += kernel;
    }
    (num, den)
}

/// Kernel-averaged inverse participation ratio at energy `E`:
/// `E[sum_l ipr(psi_l) K_bw(E - l)] / E[sum_l K_bw(E - l)]` with a
/// normalized triangular kernel. Self-normalizing, so no density-of-states
/// factor is needed.
pub fn ipr_spectral_average(
    realizations: &[SpectralData],
    energy: f64,
    bandwidth: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::config(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if realizations.is_empty() {
        return Err(Error::statistics("need at least one realization"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for sd in realizations {
        let (a, b) = ipr_kernel_contribution(sd, energy, bandwidth);
        num += a;
        den += b;
    }
    if den <= 0.0 {
        return Err(Error::statistics(format!(
            "no spectral weight within the kernel at E = {energy}"
        )));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchySpec;
    use crate::matrix::SymMatrix;
    use crate::models::{build_anderson, LaplacianSpec, PotentialSpec};
    use crate::rng::realization_rng;
    use crate::spectra::eigh;

    fn window(lo: f64, hi: f64) -> EnergyWindow {
        EnergyWindow::new(lo, hi).unwrap()
    }

    #[test]
    fn correlator_scalar_examples() {
        let mut m = SymMatrix::zeros(1);
        m.set_sym(0, 0, 0.3);
        let sd = eigh(&m).unwrap();
        assert!((eigenfunction_correlator(&sd, 0, 0, window(0.0, 1.0)) - 1.0).abs() < 1e-12);

        let mut d = SymMatrix::zeros(2);
        d.set_sym(0, 0, 1.0);
        d.set_sym(1, 1, 2.0);
        let sd = eigh(&d).unwrap();
        let w = window(0.5, 1.5);
        assert!((eigenfunction_correlator(&sd, 0, 0, w) - 1.0).abs() < 1e-12);
        assert!(eigenfunction_correlator(&sd, 0, 1, w).abs() < 1e-12);

        let mut s = SymMatrix::zeros(2);
        s.set_sym(0, 1, 1.0);
        let sd = eigh(&s).unwrap();
        let q = eigenfunction_correlator(&sd, 0, 1, window(-2.0, 2.0));
        assert!((q - 1.0).abs() < 1e-10, "swap correlator {q}");
    }

    #[test]
    fn correlator_bounds_symmetry_monotonicity() {
        let spec = LaplacianSpec::new(HierarchySpec::new(4).unwrap(), 1.0, 1.0).unwrap();
        let pot = PotentialSpec::gaussian(1.0);
        for i in 0..5 {
            let m = build_anderson(&spec, &pot, &mut realization_rng(60, i)).unwrap();
            let sd = eigh(&m).unwrap();
            let full = window(-100.0, 100.0);
            let small = window(-0.5, 0.5);
            for j in 0..m.dim() {
                let qjj = eigenfunction_correlator(&sd, j, j, full);
                assert!((qjj - 1.0).abs() < 1e-10, "Q(j,j;R) = {qjj}");
                for k in 0..m.dim() {
                    let q = eigenfunction_correlator(&sd, j, k, full);
                    assert!((-1e-12..=1.0 + 1e-10).contains(&q));
                    let qt = eigenfunction_correlator(&sd, k, j, full);
                    assert_eq!(q, qt, "symmetry");
                    let qs = eigenfunction_correlator(&sd, j, k, small);
                    assert!(qs <= q + 1e-12, "window monotonicity");
                }
            }
        }
    }

    #[test]
    fn correlator_row_matches_pairwise() {
        let spec = LaplacianSpec::new(HierarchySpec::new(4).unwrap(), 1.0, 1.0).unwrap();
        let m = build_anderson(
            &spec,
            &PotentialSpec::gaussian(1.0),
            &mut realization_rng(61, 0),
        )
        .unwrap();
        let sd = eigh(&m).unwrap();
        let w = window(-1.0, 1.0);
        let row = correlator_row(&sd, 3, w);
        for k in 0..m.dim() {
            assert!((row[k] - eigenfunction_correlator(&sd, 3, k, w)).abs() < 1e-12);
        }
    }

    #[test]
    fn ipr_examples() {
        let delta = [0.0, 1.0, 0.0, 0.0];
        assert!((ipr(&delta, 4.0).unwrap() - 1.0).abs() < 1e-15);

        let uniform = [0.5; 4];
        assert!((ipr(&uniform, 4.0).unwrap() - 0.25).abs() < 1e-15);

        let v = [0.8f64.sqrt(), 0.2f64.sqrt()];
        assert!((ipr(&v, 4.0).unwrap() - 0.68).abs() < 1e-12);

        assert!(ipr(&[0.5, 0.5], 4.0).is_err());
    }

    #[test]
    fn ipr_bounds() {
        let mut rng = realization_rng(62, 0);
        for _ in 0..50 {
            let mut v: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            let p = ipr(&v, 4.0).unwrap();
            assert!((1.0 / 16.0 - 1e-12..=1.0 + 1e-12).contains(&p));
        }
    }

    #[test]
    fn decay_moment_examples() {
        let mut delta = vec![0.0; 16];
        delta[5] = 1.0;
        assert!((decay_moment(&delta, 1.0, 5).unwrap() - 1.0).abs() < 1e-15);

        // delta at distance 3 from the origin, c = 1: 2^{3/4}
        let mut far = vec![0.0; 16];
        far[4] = 1.0; // d(0, 4) = 3
        let expected = 2f64.powf(0.75);
        assert!((decay_moment(&far, 1.0, 0).unwrap() - expected).abs() < 1e-12);

        // uniform on 4 sites, c = 2, origin 0: (1 + sqrt(2) + 2 + 2)/4
        let uniform = [0.5; 4];
        let expected = (1.0 + 2f64.sqrt() + 2.0 + 2.0) / 4.0;
        assert!((decay_moment(&uniform, 2.0, 0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn decay_moment_at_least_one() {
        let mut rng = realization_rng(63, 0);
        for _ in 0..50 {
            let mut v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            assert!(decay_moment(&v, 1.5, 3).unwrap() >= 1.0 - 1e-12);
        }
        // equality iff supported on the origin
        let mut delta = vec![0.0; 8];
        delta[2] = -1.0;
        assert!((decay_moment(&delta, 1.5, 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn profile_needs_realizations() {
        let mut m = SymMatrix::zeros(2);
        m.set_sym(0, 1, 1.0);
        let sd = eigh(&m).unwrap();
        let mut rng = realization_rng(64, 0);
        assert!(correlator_profile(&[sd], window(-2.0, 2.0), 0, &mut rng).is_err());
    }

    #[test]
    fn profile_of_diagonal_model_vanishes() {
        // eps = 0 with distinct potentials: eigenvectors are site deltas, so
        // Q is zero beyond distance zero up to solver roundoff
        let spec = LaplacianSpec::new(HierarchySpec::new(4).unwrap(), 0.0, 1.0).unwrap();
        let pot = PotentialSpec::gaussian(1.0);
        let data: Vec<_> = (0..25)
            .map(|i| {
                eigh(&build_anderson(&spec, &pot, &mut realization_rng(65, i)).unwrap()).unwrap()
            })
            .collect();
        let mut rng = realization_rng(65, 999);
        let profile = correlator_profile(&data, window(-3.0, 3.0), 0, &mut rng).unwrap();
        assert!(profile.means[0] <= 1.0 + 1e-10);
        for d in 1..profile.means.len() {
            assert!(
                profile.means[d] < 1e-12,
                "diagonal model leaked to d = {d}: {}",
                profile.means[d]
            );
        }
    }

    #[test]
    fn profile_d0_bounded_by_one() {
        let spec = LaplacianSpec::new(HierarchySpec::new(4).unwrap(), 1.0, 1.0).unwrap();
        let pot = PotentialSpec::gaussian(1.0);
        let data: Vec<_> = (0..20)
            .map(|i| {
                eigh(&build_anderson(&spec, &pot, &mut realization_rng(66, i)).unwrap()).unwrap()
            })
            .collect();
        let mut rng = realization_rng(66, 999);
        let profile = correlator_profile(&data, window(-0.5, 0.5), 0, &mut rng).unwrap();
        assert!(profile.means[0] <= 1.0 + 1e-10);
    }

    #[test]
    fn ipr_average_diagonal_model_is_one() {
        let spec = LaplacianSpec::new(HierarchySpec::new(3).unwrap(), 0.0, 1.0).unwrap();
        let pot = PotentialSpec::gaussian(1.0);
        let data: Vec<_> = (0..10)
            .map(|i| {
                eigh(&build_anderson(&spec, &pot, &mut realization_rng(67, i)).unwrap()).unwrap()
            })
            .collect();
        let v = ipr_spectral_average(&data, 0.0, 0.5).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "diagonal ipr average {v}");
    }

    #[test]
    fn ipr_average_uniform_projector() {
        // single nonzero eigenvalue with the maximally extended eigenvector
        let dim = 4;
        let m = SymMatrix::from_upper_fn(dim, |_, _| 0.8 / dim as f64);
        let sd = eigh(&m).unwrap();
        let v = ipr_spectral_average(&[sd], 0.8, 0.1).unwrap();
        assert!((v - 0.25).abs() < 1e-10, "projector ipr {v}");
    }

    #[test]
    fn ipr_average_kernel_insensitive_on_isolated_spectrum() {
        let mut m = SymMatrix::zeros(3);
        m.set_sym(0, 0, -1.0);
        m.set_sym(1, 1, 0.5);
        m.set_sym(2, 2, 2.0);
        m.set_sym(0, 1, 0.05);
        let sd = eigh(&m).unwrap();
        let a = ipr_spectral_average(std::slice::from_ref(&sd), 0.5, 0.2).unwrap();
        let b = ipr_spectral_average(&[sd], 0.5, 0.05).unwrap();
        assert!((a - b).abs() < 1e-9, "bandwidth limit: {a} vs {b}");
    }

    #[test]
    fn ipr_average_error_paths() {
        let mut m = SymMatrix::zeros(2);
        m.set_sym(0, 1, 1.0);
        let sd = eigh(&m).unwrap();
        assert!(ipr_spectral_average(std::slice::from_ref(&sd), 0.0, 0.0).is_err());
        assert!(ipr_spectral_average(&[sd], 50.0, 0.1).is_err());
    }
}
