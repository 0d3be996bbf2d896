//! The renormalization map on potential densities: `T_p rho` is the law of
//! `(1/(2V) + 1/(2V'))^{-1} + p` for independent `V, V' ~ rho`, iterated
//! along the coupling sequence `p_r` with sup-norm tracking.
//!
//! The deterministic transport evaluates the output density at `w` as the
//! single quadrature
//!
//! ```text
//! f(w) = 2 [ int_{R1} + int_{R2} ] rho(v) rho(phi_w(v)) 2v^2/(2v - w)^2 dv
//!        + rho(w/2) * tail_mass,
//! ```
//!
//! where `phi_w(v) = w v / (2v - w)` solves `h(v, v') = w` for `v'`. The
//! substitution `u = phi_w(v)` is an involution exchanging `(w/2, w)` with
//! `(w, inf)` and `(0, w/2)` with `(-inf, 0)` (mirrored for `w < 0`), which
//! folds the full-line integral onto the two regions `R1, R2` away from the
//! singular point `v = w/2`. Off-grid input mass concentrates at `v' ~ w/2`
//! and reappears through the remainder term.

use rand::Rng;

use crate::density::{DensityGrid, GridShape};
use crate::error::{Error, Result};
use crate::models::PotentialSpec;

/// `(1/(2v) + 1/(2v'))^{-1}`, the harmonic pair combination.
pub fn harmonic_pair(v: f64, vp: f64) -> f64 {
    2.0 * v * vp / (v + vp)
}

/// Byproducts of one deterministic transport step.
#[derive(Debug, Clone, Copy)]
pub struct TransportDiagnostics {
    /// trapezoid mass of the raw quadrature before renormalization
    pub on_grid_mass: f64,
    /// magnitude of negative quadrature values clamped to zero
    pub clamped_mass: f64,
    /// the grid was widened because input mass concentrates near v = 0
    pub widened: bool,
}

/// Quadrature of `rho(v) rho(phi_w(v)) 2v^2/(2v-w)^2` over one region,
/// trapezoid on the grid with `nsub` substeps per cell and extra resolution
/// near `v = w` where the Jacobian varies on the scale `|w|`.
fn region_integral(rho: &DensityGrid, w: f64, lo: f64, hi: f64, nsub: usize) -> f64 {
    let first = rho.nodes[0];
    let last = rho.nodes[rho.len() - 1];
    let a = lo.max(first);
    let b = hi.min(last);
    if b <= a {
        return 0.0;
    }
    // integration knots: region boundaries, grid nodes inside, fine points
    // spanning [w, w + 4|w|] where the Jacobian bends
    let mut knots: Vec<f64> = Vec::with_capacity(rho.len() + 80);
    knots.push(a);
    let lo_idx = rho.nodes.partition_point(|&x| x <= a);
    let hi_idx = rho.nodes.partition_point(|&x| x < b);
    knots.extend_from_slice(&rho.nodes[lo_idx..hi_idx]);
    knots.push(b);
    if w != 0.0 {
        let (fl, fh) = if w > 0.0 {
            (w, w + 4.0 * w)
        } else {
            (w + 4.0 * w, w)
        };
        let (fl, fh) = (fl.max(a), fh.min(b));
        if fh > fl {
            for i in 0..=64 {
                knots.push(fl + (fh - fl) * i as f64 / 64.0);
            }
            knots.sort_by(f64::total_cmp);
            knots.dedup();
        }
    }

    let kernel = |v: f64| -> f64 {
        let jac = if w == 0.0 {
            0.5
        } else {
            let denom = 2.0 * v - w;
            if denom == 0.0 {
                return 0.0;
            }
            2.0 * v * v / (denom * denom)
        };
        let phi = if w == 0.0 { 0.0 } else { w * v / (2.0 * v - w) };
        rho.interp(v) * rho.interp(phi) * jac
    };

    let mut acc = 0.0;
    let inv = 1.0 / nsub as f64;
    for pair in knots.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        if x1 <= x0 {
            continue;
        }
        let h = (x1 - x0) * inv;
        let mut prev = kernel(x0);
        for i in 1..=nsub {
            let next = kernel(x0 + (x1 - x0) * i as f64 * inv);
            acc += 0.5 * (prev + next) * h;
            prev = next;
        }
    }
    acc
}

fn transport_density(rho: &DensityGrid, w: f64, nsub: usize) -> f64 {
    let (r1, r2) = if w >= 0.0 {
        ((w, f64::INFINITY), (f64::NEG_INFINITY, 0.0))
    } else {
        ((f64::NEG_INFINITY, w), (0.0, f64::INFINITY))
    };
    let bulk =
        region_integral(rho, w, r1.0, r1.1, nsub) + region_integral(rho, w, r2.0, r2.1, nsub);
    2.0 * bulk + rho.interp(w / 2.0) * rho.tail_mass
}

/// One renormalization step `T_p rho`, deterministic transport.
pub fn apply_t(rho: &DensityGrid, p: f64) -> Result<DensityGrid> {
    Ok(apply_t_detailed(rho, p)?.0)
}

/// [`apply_t`] with mass-accounting diagnostics.
pub fn apply_t_detailed(rho: &DensityGrid, p: f64) -> Result<(DensityGrid, TransportDiagnostics)> {
    let total = rho.total_mass();
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::config(format!(
            "input density mass {total} is not normalized"
        )));
    }
    let median = rho.median();
    let scale = rho.iqr_scale();

    // mass piling up near v = 0 spreads far out under the reciprocal; widen
    let eta = 1e-2 * scale;
    let near_zero_mass = 2.0 * eta * rho.interp(0.0);
    let widened = near_zero_mass > 0.05;
    let shape = if widened {
        eprintln!(
            "apply_t: ~{:.1}% of the input mass sits within {eta:.3e} of v = 0; widening the output grid",
            100.0 * near_zero_mass
        );
        GridShape::default().widened(10.0)
    } else {
        GridShape::default()
    };

    let out_nodes = shape.build(median, scale);
    let nsub = 4;
    let mut values: Vec<f64> = out_nodes
        .iter()
        .map(|&w| transport_density(rho, w, nsub))
        .collect();

    let mut clamped = 0.0;
    for (i, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            let width = if i == 0 {
                out_nodes[1] - out_nodes[0]
            } else {
                out_nodes[i] - out_nodes[i - 1]
            };
            clamped += -*v * width;
            *v = 0.0;
        }
    }

    // shift by p (exact on the nodes), then renormalize with a 1/w^2 tail
    // model anchored at the grid edges
    let shifted: Vec<f64> = out_nodes.iter().map(|w| w + p).collect();
    let mut out = DensityGrid::new(shifted, values, 0.0)?;
    let on_grid_mass = out.trapz();
    let w_min = out_nodes[0];
    let w_max = out_nodes[out_nodes.len() - 1];
    let tail_est = out.values[out.len() - 1] * w_max.abs().max(1e-300)
        + out.values[0] * w_min.abs().max(1e-300);
    let z = on_grid_mass + tail_est;
    if !(z > 0.0) {
        return Err(Error::numerical("transport produced zero mass"));
    }
    for v in &mut out.values {
        *v /= z;
    }
    out.tail_mass = tail_est / z;
    Ok((
        out,
        TransportDiagnostics {
            on_grid_mass,
            clamped_mass: clamped,
            widened,
        },
    ))
}

/// Anything that can produce i.i.d. draws of a potential value.
pub trait DensitySampler {
    fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

impl DensitySampler for PotentialSpec {
    fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample(rng)
    }
}

/// Inverse-CDF sampler over the gridded part of a density (cell-linear).
pub struct GridSampler {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridSampler {
    pub fn new(grid: &DensityGrid) -> Self {
        let mut cumulative = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..grid.len() - 1 {
            acc +=
                0.5 * (grid.values[i] + grid.values[i + 1]) * (grid.nodes[i + 1] - grid.nodes[i]);
            cumulative.push(acc);
        }
        GridSampler {
            nodes: grid.nodes.clone(),
            cumulative,
        }
    }
}

impl DensitySampler for GridSampler {
    fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().expect("nonempty");
        let target = rng.random::<f64>() * total;
        match self.cumulative.partition_point(|&c| c < target) {
            0 => self.nodes[0],
            p if p >= self.nodes.len() => *self.nodes.last().expect("nonempty"),
            p => {
                let (c0, c1) = (self.cumulative[p - 1], self.cumulative[p]);
                let t = if c1 > c0 {
                    (target - c0) / (c1 - c0)
                } else {
                    0.0
                };
                self.nodes[p - 1] + t * (self.nodes[p] - self.nodes[p - 1])
            }
        }
    }
}

/// Monte Carlo image of `T_p`: kernel density estimate of
/// `harmonic_pair(V, V') + p` over i.i.d. pairs. The independent oracle for
/// [`apply_t`].
pub fn mc_apply_t<S: DensitySampler, R: Rng + ?Sized>(
    sampler: &S,
    p: f64,
    count: usize,
    bandwidth: f64,
    rng: &mut R,
) -> Result<DensityGrid> {
    if count < 10_000 {
        return Err(Error::statistics(format!(
            "Monte Carlo transport needs >= 10^4 samples, got {count}"
        )));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::config(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let mut samples: Vec<f64> = Vec::with_capacity(count);
    let mut lost = 0usize;
    for _ in 0..count {
        let v = sampler.sample_value(rng);
        let vp = sampler.sample_value(rng);
        let w = harmonic_pair(v, vp) + p;
        if w.is_finite() {
            samples.push(w);
        } else {
            lost += 1;
        }
    }
    samples.sort_by(f64::total_cmp);
    let median = samples[samples.len() / 2];
    let q25 = samples[samples.len() / 4];
    let q75 = samples[3 * samples.len() / 4];
    let scale = ((q75 - q25) / 2.0).max(1e-12);

    let nodes = GridShape::default().build(median, scale);
    let mut values = vec![0.0; nodes.len()];
    let norm = 1.0 / (count as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let cut = 8.0 * bandwidth;
    let mut off_grid = lost;
    for &s in &samples {
        if s < nodes[0] || s > nodes[nodes.len() - 1] {
            off_grid += 1;
            continue;
        }
        let lo = nodes.partition_point(|&x| x < s - cut);
        let hi = nodes.partition_point(|&x| x <= s + cut);
        for i in lo..hi {
            let u = (nodes[i] - s) / bandwidth;
            values[i] += norm * (-0.5 * u * u).exp();
        }
    }
    DensityGrid::new(nodes, values, off_grid as f64 / count as f64)
}

/// Gaussian smoothing of a gridded density at one point — exactly the
/// expectation of a Gaussian KDE when the gridded density is the truth, so
/// the deterministic and Monte Carlo transports become directly comparable
/// even across jumps of the output density.
pub fn kernel_smooth(grid: &DensityGrid, bandwidth: f64, x: f64) -> f64 {
    let m = 256usize;
    let lo = x - 8.0 * bandwidth;
    let step = 16.0 * bandwidth / m as f64;
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut acc = 0.0;
    for i in 0..=m {
        let y = lo + i as f64 * step;
        let u = (y - x) / bandwidth;
        let w = if i == 0 || i == m { 0.5 } else { 1.0 };
        acc += w * grid.interp(y) * norm * (-0.5 * u * u).exp();
    }
    acc * step
}

/// Pointwise tolerance for comparing the kernel-smoothed deterministic
/// transport with the Monte Carlo estimate: three KDE standard errors plus
/// a deterministic quadrature budget of `1e-3 * sup`.
pub fn combined_tolerance(
    det: &DensityGrid,
    mc: &DensityGrid,
    count: usize,
    bandwidth: f64,
    x: f64,
) -> f64 {
    let f = mc.interp(x).max(0.0);
    // R(K) for the Gaussian kernel
    let rk = 0.5 / std::f64::consts::PI.sqrt();
    let stderr = (f * rk / (count as f64 * bandwidth)).sqrt();
    3.0 * stderr + 1e-3 * det.sup()
}

/// Max over the central mass region of
/// `|smooth(det) - mc| / combined_tolerance`; at most 1 when the two
/// transports agree within their error estimates.
pub fn transport_agreement(
    det: &DensityGrid,
    mc: &DensityGrid,
    count: usize,
    bandwidth: f64,
    central_mass: f64,
) -> f64 {
    let lo_q = (1.0 - central_mass) / 2.0;
    let (lo, hi) = (det.quantile(lo_q), det.quantile(1.0 - lo_q));
    let mut worst = 0.0f64;
    for x in &det.nodes {
        if *x < lo || *x > hi {
            continue;
        }
        let tol = combined_tolerance(det, mc, count, bandwidth, *x);
        let smoothed = kernel_smooth(det, bandwidth, *x);
        worst = worst.max((smoothed - mc.interp(*x)).abs() / tol);
    }
    worst
}

/// Sup-norm trajectory of the iterated flow `T_{p_r} ... T_{p_1}`.
#[derive(Debug, Clone)]
pub struct FlowReport {
    /// window-max of the density after each step (discretized sup-norm)
    pub sup_norms: Vec<f64>,
    /// the shifts `p_1, ..., p_r` applied
    pub shifts: Vec<f64>,
    /// least-squares slope of `log2(sup)` against the step index
    pub fitted_exponent: f64,
    pub fit_residual: f64,
    /// step at which the flow ran out of grid, if it did
    pub aborted_at: Option<usize>,
    pub final_density: DensityGrid,
}

/// Iterate `apply_t` with the geometric shifts `p_r = eps 2^{-cr}`,
/// recording the sup-norm over the window after every step.
pub fn flow(
    rho0: &DensityGrid,
    eps: f64,
    c: f64,
    steps: usize,
    window: (f64, f64),
) -> Result<FlowReport> {
    if steps < 1 {
        return Err(Error::config("flow needs at least one step"));
    }
    if !(window.0 < window.1) {
        return Err(Error::config(format!(
            "bad flow window ({}, {})",
            window.0, window.1
        )));
    }
    let mut rho = rho0.clone();
    let mut sup_norms = Vec::with_capacity(steps);
    let mut shifts = Vec::with_capacity(steps);
    let mut aborted_at = None;
    for r in 1..=steps {
        let p = eps * 2f64.powf(-c * r as f64);
        rho = apply_t(&rho, p)?;
        shifts.push(p);
        let sup = rho.sup_on(window.0, window.1);
        sup_norms.push(sup);
        if sup <= 0.0 || rho.tail_mass > 0.5 {
            aborted_at = Some(r);
            break;
        }
    }
    let (fitted_exponent, fit_residual) = {
        let pts: Vec<(f64, f64)> = sup_norms
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > 0.0)
            .map(|(i, s)| ((i + 1) as f64, s.log2()))
            .collect();
        if pts.len() >= 2 {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (slope, _, rms) = crate::stats::linear_fit(&xs, &ys)?;
            (slope, rms)
        } else {
            (f64::NAN, f64::NAN)
        }
    };
    Ok(FlowReport {
        sup_norms,
        shifts,
        fitted_exponent,
        fit_residual,
        aborted_at,
        final_density: rho,
    })
}

/// [`flow`] starting from an analytic potential density.
pub fn flow_from_potential(
    spec: &PotentialSpec,
    eps: f64,
    c: f64,
    steps: usize,
    window: (f64, f64),
) -> Result<FlowReport> {
    let rho0 = DensityGrid::from_potential(spec, &GridShape::default())?;
    flow(&rho0, eps, c, steps, window)
}
