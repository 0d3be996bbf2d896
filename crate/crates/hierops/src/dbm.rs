//! Dyson Brownian motion: exact spectral evolution under additive Gaussian
//! perturbations, an Euler-Maruyama cross-check integrator, and the
//! recursive merge-and-evolve construction of ultrametric spectra.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::sample_gaussian_flow;
use crate::spectra::eigenvalues_only;

/// An eigenvalue configuration undergoing Dyson Brownian motion.
#[derive(Debug, Clone, PartialEq)]
pub struct DBMState {
    particles: Vec<f64>,
    time: f64,
}

impl DBMState {
    /// Start a flow from the given configuration (sorted internally).
    pub fn new(mut particles: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::argument("DBM needs at least one particle"));
        }
        if particles.iter().any(|p| !p.is_finite()) {
            return Err(Error::argument("DBM particles must be finite"));
        }
        particles.sort_by(f64::total_cmp);
        Ok(DBMState {
            particles,
            time: 0.0,
        })
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn size(&self) -> usize {
        self.particles.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

/// Exact evolution: the spectrum of `diag(particles) + G` with `G` the
/// symmetric Gaussian flow increment of entry variance
/// `(1 + delta_jk) * duration / N`. Distributionally exact by orthogonal
/// invariance of the Gaussian ensemble, whatever matrix realized the
/// starting spectrum.
pub fn evolve_exact<R: Rng + ?Sized>(
    state: &DBMState,
    duration: f64,
    rng: &mut R,
) -> Result<DBMState> {
    if !(duration >= 0.0) {
        return Err(Error::argument(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    if duration == 0.0 {
        return Ok(state.clone());
    }
    let n = state.size();
    let mut m = sample_gaussian_flow(n, duration, rng);
    m.add_to_diagonal(&state.particles);
    let particles = eigenvalues_only(&m)?;
    Ok(DBMState {
        particles,
        time: state.time + duration,
    })
}

/// Euler-Maruyama integration of
/// `d lambda_j = sqrt(2/N) dB_j + (1/N) sum_{i != j} dt / (lambda_j - lambda_i)`.
///
/// Steps that would cross particles are retried with half the step (fresh
/// noise); more than 40 consecutive halvings is reported as a collision.
/// This integrator is a cross-check on [`evolve_exact`], not the reference
/// semantics.
pub fn evolve_sde<R: Rng + ?Sized>(
    state: &DBMState,
    duration: f64,
    step: f64,
    rng: &mut R,
) -> Result<DBMState> {
    evolve_sde_impl(state, duration, step, 1.0, rng)
}

/// The deterministic drift part alone (noise coefficient zero); used to
/// check the interaction term against the two-particle limit.
pub fn evolve_drift_only(state: &DBMState, duration: f64, step: f64) -> Result<DBMState> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    evolve_sde_impl(state, duration, step, 0.0, &mut rng)
}

use rand_chacha::rand_core::SeedableRng;

fn evolve_sde_impl<R: Rng + ?Sized>(
    state: &DBMState,
    duration: f64,
    step: f64,
    noise_scale: f64,
    rng: &mut R,
) -> Result<DBMState> {
    if !(duration >= 0.0) {
        return Err(Error::argument(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    if !(step > 0.0) {
        return Err(Error::argument(format!(
            "step must be positive, got {step}"
        )));
    }
    let n = state.size();
    for w in state.particles.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::argument(
                "SDE integration needs strictly distinct particles",
            ));
        }
    }
    let mut particles = state.particles.clone();
    let mut drift = vec![0.0; n];
    let mut proposal = vec![0.0; n];
    let inv_n = 1.0 / n as f64;
    let mut remaining = duration;
    while remaining > 1e-15 * duration {
        let mut dt = step.min(remaining);
        for (j, d) in drift.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                if i != j {
                    acc += 1.0 / (particles[j] - particles[i]);
                }
            }
            *d = acc * inv_n;
        }
        let mut halvings = 0u32;
        loop {
            let amp = noise_scale * (2.0 * dt * inv_n).sqrt();
            for j in 0..n {
                let xi: f64 = StandardNormal.sample(rng);
                proposal[j] = particles[j] + drift[j] * dt + amp * xi;
            }
            if proposal.windows(2).all(|w| w[0] < w[1]) {
                break;
            }
            halvings += 1;
            if halvings > 40 {
                return Err(Error::numerical(
                    "SDE step underflow: particles collide after 40 halvings",
                ));
            }
            dt *= 0.5;
        }
        particles.copy_from_slice(&proposal);
        remaining -= dt;
    }
    Ok(DBMState {
        particles,
        time: state.time + duration,
    })
}

/// Sizes and Dyson times of the recursive spectrum construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionTrace {
    /// `2^0, 2^1, ..., 2^n`
    pub sizes: Vec<usize>,
    /// `durations[k-1] = 2^{-(1+c)k}` for level `k = 1..=n`
    pub durations: Vec<f64>,
}

/// Dyson time of the level-`k` merge, `t = 2^{-(1+c)k}`.
pub fn recursion_duration(k: u32, c: f64) -> f64 {
    2f64.powf(-(1.0 + c) * k as f64)
}

/// Recursive construction of an ultrametric spectrum: level 0 is the 1x1
/// ultrametric matrix (a centered Gaussian of variance 2, the diagonal of
/// the block variance profile); level k evolves the union of two
/// independent level-(k-1) spectra under Dyson Brownian motion for the time
/// `2^{-(1+c)k}`. With this initialization the construction reproduces the
/// direct ensemble exactly in distribution.
pub fn recursive_spectrum<R: Rng + ?Sized>(
    n: u32,
    c: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, RecursionTrace)> {
    if n > 20 {
        return Err(Error::config(format!(
            "recursion depth {n} is unreasonably large"
        )));
    }
    let spectrum = sample_level(n, c, rng)?;
    let trace = RecursionTrace {
        sizes: (0..=n).map(|k| 1usize << k).collect(),
        durations: (1..=n).map(|k| recursion_duration(k, c)).collect(),
    };
    Ok((spectrum, trace))
}

fn sample_level<R: Rng + ?Sized>(k: u32, c: f64, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 {
        let z: f64 = StandardNormal.sample(rng);
        return Ok(vec![std::f64::consts::SQRT_2 * z]);
    }
    let mut merged = sample_level(k - 1, c, rng)?;
    merged.extend(sample_level(k - 1, c, rng)?);
    merged.sort_by(f64::total_cmp);
    let state = DBMState {
        particles: merged,
        time: 0.0,
    };
    Ok(evolve_exact(&state, recursion_duration(k, c), rng)?.particles)
}
