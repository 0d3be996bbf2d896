//! Finite-volume Hamiltonians: hierarchical Laplacian, hierarchical Anderson
//! model, ultrametric ensemble, and Rosenzweig-Porter matrices, together with
//! the spine operator that disconnects a model when the blocks around a
//! center are removed.
//!
//! Builders are pure functions of `(spec, rng stream)`: a fixed stream
//! reproduces the matrix bitwise. Dense storage is refused above
//! [`DEFAULT_DEPTH_CAP`] unless a caller raises the cap explicitly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, SpineDecomposition};
use crate::matrix::{symmetric_eigenvalues, SymMatrix};

/// Largest hierarchy depth built without an explicit cap override
/// (volume 2^13 = 8192; dense eigensolves dominate beyond that).
pub const DEFAULT_DEPTH_CAP: u32 = 13;

fn check_dim(dim: usize, cap_dim: usize) -> Result<()> {
    if dim > cap_dim {
        return Err(Error::config(format!(
            "dense volume {dim} exceeds cap {cap_dim}; raise the cap explicitly if intended"
        )));
    }
    Ok(())
}

/// Hierarchical Laplacian parameters: couplings `p_r = eps * 2^{-c r}`,
/// optionally overridden by an explicit sequence `p_1..p_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSpec {
    pub hierarchy: HierarchySpec,
    pub eps: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<f64>>,
}

impl LaplacianSpec {
    /// `eps = 0` is allowed and degenerates to the zero Laplacian (pure
    /// potential model); negative `eps` is rejected.
    pub fn new(hierarchy: HierarchySpec, eps: f64, c: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::config(format!(
                "eps must be finite and >= 0, got {eps}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::config(format!("c must be finite, got {c}")));
        }
        Ok(LaplacianSpec {
            hierarchy,
            eps,
            c,
            couplings: None,
        })
    }

    /// Explicit coupling sequence `p_1..p_n` replacing the geometric default.
    pub fn with_couplings(hierarchy: HierarchySpec, couplings: Vec<f64>) -> Result<Self> {
        if couplings.len() != hierarchy.depth() as usize {
            return Err(Error::config(format!(
                "need exactly {} couplings for depth {}, got {}",
                hierarchy.depth(),
                hierarchy.depth(),
                couplings.len()
            )));
        }
        Ok(LaplacianSpec {
            hierarchy,
            eps: 0.0,
            c: 0.0,
            couplings: Some(couplings),
        })
    }

    /// Coupling `p_r` for `1 <= r <= n`.
    pub fn coupling(&self, r: u32) -> f64 {
        debug_assert!(r >= 1 && r <= self.hierarchy.depth());
        match &self.couplings {
            Some(p) => p[(r - 1) as usize],
            None => self.eps * 2f64.powf(-self.c * r as f64),
        }
    }

    /// Partial sum `E_r = p_1 + ... + p_r` (the exact level-`r` eigenvalue).
    pub fn coupling_partial_sum(&self, r: u32) -> f64 {
        (1..=r).map(|s| self.coupling(s)).sum()
    }

    /// Sum of the full infinite coupling series `sum_{r>=1} eps 2^{-cr}`,
    /// the top of the infinite-volume spectrum. Defined for the geometric
    /// default with `c > 0` only.
    pub fn lambda_infinity(&self) -> Result<f64> {
        if self.couplings.is_some() {
            return Err(Error::config(
                "lambda_infinity requires the geometric default couplings",
            ));
        }
        if self.c <= 0.0 {
            return Err(Error::config("lambda_infinity requires c > 0"));
        }
        let q = 2f64.powf(-self.c);
        Ok(self.eps * q / (1.0 - q))
    }
}

/// Distribution of the i.i.d. potential values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialSpec {
    /// Centered Gaussian; `sigma = 0` is the degenerate zero potential.
    Gaussian {
        sigma: f64,
    },
    Cauchy {
        median: f64,
        scale: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Convex combination of components; weights must sum to 1.
    Mixture {
        components: Vec<(f64, PotentialSpec)>,
    },
}

impl PotentialSpec {
    pub fn gaussian(sigma: f64) -> Self {
        PotentialSpec::Gaussian { sigma }
    }

    pub fn cauchy(median: f64, scale: f64) -> Self {
        PotentialSpec::Cauchy { median, scale }
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        PotentialSpec::Uniform { a, b }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Gaussian { sigma } => {
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::config(format!(
                        "gaussian sigma must be >= 0, got {sigma}"
                    )));
                }
            }
            PotentialSpec::Cauchy { median, scale } => {
                if !(*scale > 0.0) || !median.is_finite() || !scale.is_finite() {
                    return Err(Error::config(format!(
                        "cauchy needs finite median and scale > 0, got ({median}, {scale})"
                    )));
                }
            }
            PotentialSpec::Uniform { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::config(format!(
                        "uniform needs a < b, got [{a}, {b}]"
                    )));
                }
            }
            PotentialSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::config("mixture needs at least one component"));
                }
                let mut total = 0.0;
                for (w, spec) in components {
                    if !(*w >= 0.0) {
                        return Err(Error::config(format!("mixture weight {w} is negative")));
                    }
                    total += w;
                    spec.validate()?;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Points where the density jumps (uniform edges); grids straddle these
    /// so trapezoid masses stay exact.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PotentialSpec::Uniform { a, b } => vec![*a, *b],
            PotentialSpec::Mixture { components } => components
                .iter()
                .flat_map(|(_, s)| s.breakpoints())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Whether the law has a density (everything except `sigma = 0`).
    pub fn is_absolutely_continuous(&self) -> bool {
        match self {
            PotentialSpec::Gaussian { sigma } => *sigma > 0.0,
            PotentialSpec::Cauchy { .. } | PotentialSpec::Uniform { .. } => true,
            PotentialSpec::Mixture { components } => {
                components.iter().all(|(_, s)| s.is_absolutely_continuous())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PotentialSpec::Gaussian { sigma } => {
                if *sigma == 0.0 {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * z
                }
            }
            PotentialSpec::Cauchy { median, scale } => {
                let u: f64 = rng.random();
                median + scale * (std::f64::consts::PI * (u - 0.5)).tan()
            }
            PotentialSpec::Uniform { a, b } => rng.random_range(*a..*b),
            PotentialSpec::Mixture { components } => {
                let mut u: f64 = rng.random();
                for (w, spec) in components {
                    if u < *w {
                        return spec.sample(rng);
                    }
                    u -= w;
                }
                components.last().expect("validated nonempty").1.sample(rng)
            }
        }
    }

    /// Probability density at `x` (zero for the degenerate Gaussian).
    pub fn density(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Gaussian { sigma } => {
                if *sigma == 0.0 {
                    0.0
                } else {
                    let z = x / sigma;
                    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                }
            }
            PotentialSpec::Cauchy { median, scale } => {
                scale / (std::f64::consts::PI * (scale * scale + (x - median) * (x - median)))
            }
            PotentialSpec::Uniform { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            PotentialSpec::Mixture { components } => {
                components.iter().map(|(w, s)| w * s.density(x)).sum()
            }
        }
    }

    /// Cumulative distribution function at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Gaussian { sigma } => {
                if *sigma == 0.0 {
                    if x >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5 * erfc(-x / (sigma * std::f64::consts::SQRT_2))
                }
            }
            PotentialSpec::Cauchy { median, scale } => {
                0.5 + ((x - median) / scale).atan() / std::f64::consts::PI
            }
            PotentialSpec::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            PotentialSpec::Mixture { components } => {
                components.iter().map(|(w, s)| w * s.cdf(x)).sum()
            }
        }
    }
}

/// Complementary error function: Taylor series below 2, continued fraction
/// above. Accurate to ~1e-15, enough for tail-mass bookkeeping.
fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        // series for erf
        let mut term = 2.0 * x / std::f64::consts::PI.sqrt();
        let mut sum = term;
        let x2 = x * x;
        let mut n = 0usize;
        while term.abs() > 1e-17 * sum.abs().max(1.0) && n < 200 {
            n += 1;
            term *= -x2 * (2.0 * n as f64 - 1.0) / (n as f64 * (2.0 * n as f64 + 1.0));
            sum += term;
        }
        1.0 - sum
    } else {
        // continued fraction for erfc
        let x2 = x * x;
        let mut f = 0.0;
        for k in (1..=60).rev() {
            f = 0.5 * k as f64 / (x + f);
        }
        (-x2).exp() / ((x + f) * std::f64::consts::PI.sqrt())
    }
}

/// Which Hamiltonian to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Laplacian {
        laplacian: LaplacianSpec,
    },
    Anderson {
        laplacian: LaplacianSpec,
        potential: PotentialSpec,
    },
    Ultrametric {
        depth: u32,
        c: f64,
    },
    RosenzweigPorter {
        size: usize,
        c: f64,
        potential: PotentialSpec,
    },
}

impl ModelSpec {
    pub fn dimension(&self) -> usize {
        match self {
            ModelSpec::Laplacian { laplacian } | ModelSpec::Anderson { laplacian, .. } => {
                laplacian.hierarchy.volume()
            }
            ModelSpec::Ultrametric { depth, .. } => 1usize << depth,
            ModelSpec::RosenzweigPorter { size, .. } => *size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Laplacian { .. } => Ok(()),
            ModelSpec::Anderson { potential, .. } => potential.validate(),
            ModelSpec::Ultrametric { depth, c } => {
                if *depth > 57 || !c.is_finite() {
                    return Err(Error::config("bad ultrametric parameters"));
                }
                Ok(())
            }
            ModelSpec::RosenzweigPorter { size, c, potential } => {
                if *size == 0 {
                    return Err(Error::config("Rosenzweig-Porter needs size >= 1"));
                }
                if !c.is_finite() {
                    return Err(Error::config("c must be finite"));
                }
                potential.validate()
            }
        }
    }

    /// Build one realization on the default volume cap.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SymMatrix> {
        self.build_with_cap(1usize << DEFAULT_DEPTH_CAP, rng)
    }

    pub fn build_with_cap<R: Rng + ?Sized>(
        &self,
        cap_dim: usize,
        rng: &mut R,
    ) -> Result<SymMatrix> {
        check_dim(self.dimension(), cap_dim)?;
        match self {
            ModelSpec::Laplacian { laplacian } => build_laplacian_uncapped(laplacian),
            ModelSpec::Anderson {
                laplacian,
                potential,
            } => {
                potential.validate()?;
                let v = sample_potential(potential, laplacian.hierarchy.volume(), rng)?;
                let mut m = build_laplacian_uncapped(laplacian)?;
                m.add_to_diagonal(&v);
                Ok(m)
            }
            ModelSpec::Ultrametric { depth, c } => build_ultrametric_uncapped(*depth, *c, rng),
            ModelSpec::RosenzweigPorter { size, c, potential } => {
                build_rosenzweig_porter_uncapped(*size, *c, potential, rng)
            }
        }
    }
}

/// Matrix element of the hierarchical Laplacian: the blocks containing both
/// sites contribute `p_r * 2^{-r}` each, so the entry is
/// `sum_{r = max(d(j,k), 1)}^{n} p_r 2^{-r}`.
pub fn laplacian_entry(spec: &LaplacianSpec, j: usize, k: usize) -> Result<f64> {
    let d = spec.hierarchy.distance(j, k)?;
    let n = spec.hierarchy.depth();
    let mut sum = 0.0;
    for r in d.max(1)..=n {
        sum += spec.coupling(r) * 2f64.powi(-(r as i32));
    }
    Ok(sum)
}

fn laplacian_entry_table(spec: &LaplacianSpec) -> Vec<f64> {
    let n = spec.hierarchy.depth();
    // value[d] = sum_{r=max(d,1)}^n p_r 2^{-r}, accumulated in ascending r
    // order to match laplacian_entry bitwise
    (0..=n)
        .map(|d| {
            let mut sum = 0.0;
            for r in d.max(1)..=n {
                sum += spec.coupling(r) * 2f64.powi(-(r as i32));
            }
            sum
        })
        .collect()
}

fn build_laplacian_uncapped(spec: &LaplacianSpec) -> Result<SymMatrix> {
    let dim = spec.hierarchy.volume();
    let table = laplacian_entry_table(spec);
    Ok(SymMatrix::from_upper_fn(dim, |j, k| {
        table[HierarchySpec::distance_of(j, k) as usize]
    }))
}

/// Dense hierarchical Laplacian. The spectrum is exactly `E_0 = 0` with
/// multiplicity `2^{n-1}` and `E_r = p_1 + ... + p_r` with multiplicity
/// `2^{n-r-1}` (`1` for `r = n`).
pub fn build_laplacian(spec: &LaplacianSpec) -> Result<SymMatrix> {
    check_dim(spec.hierarchy.volume(), 1usize << DEFAULT_DEPTH_CAP)?;
    build_laplacian_uncapped(spec)
}

/// Closed-form spectrum as `(eigenvalue, multiplicity)` pairs, ascending in
/// `r` (not necessarily in eigenvalue for exotic coupling overrides).
pub fn laplacian_spectrum(spec: &LaplacianSpec) -> Vec<(f64, usize)> {
    let n = spec.hierarchy.depth();
    if n == 0 {
        return vec![(0.0, 1)];
    }
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push((0.0, 1usize << (n - 1)));
    for r in 1..n {
        out.push((spec.coupling_partial_sum(r), 1usize << (n - r - 1)));
    }
    out.push((spec.coupling_partial_sum(n), 1));
    out
}

/// i.i.d. draws from the potential distribution.
pub fn sample_potential<R: Rng + ?Sized>(
    spec: &PotentialSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..count).map(|_| spec.sample(rng)).collect())
}

/// Hierarchical Anderson Hamiltonian `H = Laplacian + diag(V)`.
pub fn build_anderson<R: Rng + ?Sized>(
    spec: &LaplacianSpec,
    potential: &PotentialSpec,
    rng: &mut R,
) -> Result<SymMatrix> {
    check_dim(spec.hierarchy.volume(), 1usize << DEFAULT_DEPTH_CAP)?;
    let v = sample_potential(potential, spec.hierarchy.volume(), rng)?;
    let mut m = build_laplacian_uncapped(spec)?;
    m.add_to_diagonal(&v);
    Ok(m)
}

/// Entry variance classes of the ultrametric ensemble by hierarchical
/// distance: the diagonal class is `2 sum_{r=0}^{n} 2^{-(2+c)r}` and the
/// distance-`d` class is `sum_{r=d}^{n} 2^{-(2+c)r}`.
pub fn ultrametric_entry_variance(depth: u32, c: f64, dist: u32) -> Result<f64> {
    if dist > depth {
        return Err(Error::argument(format!(
            "distance {dist} out of range for depth {depth}"
        )));
    }
    let classes = ultrametric_variance_classes(depth, c);
    Ok(classes[dist as usize])
}

fn ultrametric_variance_classes(depth: u32, c: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..=depth)
        .map(|r| 2f64.powf(-(2.0 + c) * r as f64))
        .collect();
    let mut classes = Vec::with_capacity(depth as usize + 1);
    classes.push(2.0 * weights.iter().sum::<f64>());
    for d in 1..=depth {
        classes.push(weights[d as usize..].iter().sum::<f64>());
    }
    classes
}

fn build_ultrametric_uncapped<R: Rng + ?Sized>(
    depth: u32,
    c: f64,
    rng: &mut R,
) -> Result<SymMatrix> {
    // Sum of the independent Gaussian level contributions: the entry at
    // hierarchical distance d is a single centered Gaussian whose variance is
    // the summed class variance, independent across upper-triangle pairs.
    let sd: Vec<f64> = ultrametric_variance_classes(depth, c)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let dim = 1usize << depth;
    Ok(SymMatrix::from_upper_fn(dim, |j, k| {
        let z: f64 = StandardNormal.sample(rng);
        sd[HierarchySpec::distance_of(j, k) as usize] * z
    }))
}

/// One realization of the ultrametric ensemble
/// `H_n = sum_{r=0}^n 2^{-(1+c)r/2} Phi_{n,r}` with the block-GOE variance
/// profile (entry variance of `Phi_{n,r}`: `2^{-r} * 2` on the diagonal,
/// `2^{-r}` at distances `1..=r`, zero otherwise).
pub fn build_ultrametric<R: Rng + ?Sized>(depth: u32, c: f64, rng: &mut R) -> Result<SymMatrix> {
    check_dim(1usize << depth, 1usize << DEFAULT_DEPTH_CAP)?;
    build_ultrametric_uncapped(depth, c, rng)
}

/// Dyson time of the Rosenzweig-Porter model: `t = N^{-(1+c)}`.
pub fn rp_time(size: usize, c: f64) -> f64 {
    (size as f64).powf(-(1.0 + c))
}

fn build_rosenzweig_porter_uncapped<R: Rng + ?Sized>(
    size: usize,
    c: f64,
    potential: &PotentialSpec,
    rng: &mut R,
) -> Result<SymMatrix> {
    if size == 0 {
        return Err(Error::config("Rosenzweig-Porter needs size >= 1"));
    }
    potential.validate()?;
    let v = sample_potential(potential, size, rng)?;
    let mut m = sample_gaussian_flow(size, rp_time(size, c), rng);
    m.add_to_diagonal(&v);
    Ok(m)
}

/// `diag(V_1..V_N) + Phi(t)` with `t = N^{-(1+c)}`; `Phi(t)` is the symmetric
/// Gaussian flow with entry variance `(1 + delta_jk) t / N`.
pub fn build_rosenzweig_porter<R: Rng + ?Sized>(
    size: usize,
    c: f64,
    potential: &PotentialSpec,
    rng: &mut R,
) -> Result<SymMatrix> {
    check_dim(size, 1usize << DEFAULT_DEPTH_CAP)?;
    build_rosenzweig_porter_uncapped(size, c, potential, rng)
}

/// Symmetric Gaussian matrix with entry variance `(1 + delta_jk) * t / N`
/// (the increment of the symmetric stochastic matrix flow over time `t`).
pub fn sample_gaussian_flow<R: Rng + ?Sized>(size: usize, t: f64, rng: &mut R) -> SymMatrix {
    let off = (t / size as f64).sqrt();
    let diag = (2.0 * t / size as f64).sqrt();
    SymMatrix::from_upper_fn(size, |j, k| {
        let z: f64 = StandardNormal.sample(rng);
        if j == k {
            diag * z
        } else {
            off * z
        }
    })
}

/// All random data of one disorder realization, kept block-resolved so the
/// per-block operators `H(B)` can be reassembled exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum Realization {
    Laplacian,
    Anderson {
        potential: Vec<f64>,
    },
    Ultrametric(UltrametricRealization),
    RosenzweigPorter {
        potential: Vec<f64>,
        flow: SymMatrix,
    },
}

/// Block-resolved ultrametric realization: `blocks[r][b]` is the level-`r`
/// operator `H(B)` on the `b`-th level-`r` block, weight included.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrametricRealization {
    depth: u32,
    blocks: Vec<Vec<SymMatrix>>,
}

impl UltrametricRealization {
    pub fn sample<R: Rng + ?Sized>(depth: u32, c: f64, rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(depth as usize + 1);
        for r in 0..=depth {
            let weight = 2f64.powf(-(1.0 + c) * r as f64 / 2.0);
            let level_sd = 2f64.powi(-(r as i32)).sqrt();
            let off = weight * level_sd;
            let diag = off * std::f64::consts::SQRT_2;
            let k = 1usize << r;
            let count = 1usize << (depth - r);
            let level: Vec<SymMatrix> = (0..count)
                .map(|_| {
                    SymMatrix::from_upper_fn(k, |i, j| {
                        let z: f64 = StandardNormal.sample(rng);
                        if i == j {
                            diag * z
                        } else {
                            off * z
                        }
                    })
                })
                .collect();
            blocks.push(level);
        }
        UltrametricRealization { depth, blocks }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// The operator `H(B)` of the `b`-th level-`r` block.
    pub fn block(&self, r: u32, b: usize) -> &SymMatrix {
        &self.blocks[r as usize][b]
    }

    /// Assemble the full Hamiltonian from the blocks.
    pub fn assemble(&self) -> SymMatrix {
        let hierarchy = HierarchySpec::new(self.depth).expect("depth validated at sampling");
        let mut m = SymMatrix::zeros(hierarchy.volume());
        for r in 0..=self.depth {
            for (b, block) in self.blocks[r as usize].iter().enumerate() {
                let at = hierarchy.block_members(r, b).expect("in range");
                m.add_embedded(at, block);
            }
        }
        m
    }
}

/// Sample a block-resolved realization of any model family.
pub fn sample_realization<R: Rng + ?Sized>(model: &ModelSpec, rng: &mut R) -> Result<Realization> {
    model.validate()?;
    check_dim(model.dimension(), 1usize << DEFAULT_DEPTH_CAP)?;
    Ok(match model {
        ModelSpec::Laplacian { .. } => Realization::Laplacian,
        ModelSpec::Anderson {
            laplacian,
            potential,
        } => Realization::Anderson {
            potential: sample_potential(potential, laplacian.hierarchy.volume(), rng)?,
        },
        ModelSpec::Ultrametric { depth, c } => {
            Realization::Ultrametric(UltrametricRealization::sample(*depth, *c, rng))
        }
        ModelSpec::RosenzweigPorter { size, c, potential } => Realization::RosenzweigPorter {
            potential: sample_potential(potential, *size, rng)?,
            flow: sample_gaussian_flow(*size, rp_time(*size, *c), rng),
        },
    })
}

/// The Hamiltonian of a fixed realization.
pub fn assemble(model: &ModelSpec, realization: &Realization) -> Result<SymMatrix> {
    match (model, realization) {
        (ModelSpec::Laplacian { laplacian }, Realization::Laplacian) => {
            build_laplacian_uncapped(laplacian)
        }
        (ModelSpec::Anderson { laplacian, .. }, Realization::Anderson { potential }) => {
            let mut m = build_laplacian_uncapped(laplacian)?;
            m.add_to_diagonal(potential);
            Ok(m)
        }
        (ModelSpec::Ultrametric { .. }, Realization::Ultrametric(real)) => Ok(real.assemble()),
        (ModelSpec::RosenzweigPorter { .. }, Realization::RosenzweigPorter { potential, flow }) => {
            let mut m = flow.clone();
            m.add_to_diagonal(potential);
            Ok(m)
        }
        _ => Err(Error::argument("realization does not match model family")),
    }
}

/// The spine operator `S_x = sum_{r>=0} H(B_r(x))` of a realization, and the
/// disconnected remainder `F`.
///
/// `F` is assembled block-diagonally over the spine sets (its cross-block
/// entries are never written, so they are exact zeros), and `S_x` from
/// exactly the blocks containing `x`; `F + S_x` reproduces the Hamiltonian
/// up to floating-point resummation.
pub struct SpineOperator {
    pub s: SymMatrix,
    pub f: SymMatrix,
    pub decomposition: SpineDecomposition,
}

pub fn spine_operator(
    model: &ModelSpec,
    x: usize,
    realization: &Realization,
) -> Result<SpineOperator> {
    let dim = model.dimension();
    if x >= dim {
        return Err(Error::argument(format!(
            "center {x} out of range for volume {dim}"
        )));
    }
    match (model, realization) {
        (ModelSpec::Laplacian { laplacian }, Realization::Laplacian) => {
            spine_hierarchical(laplacian, None, x)
        }
        (ModelSpec::Anderson { laplacian, .. }, Realization::Anderson { potential }) => {
            spine_hierarchical(laplacian, Some(potential), x)
        }
        (ModelSpec::Ultrametric { .. }, Realization::Ultrametric(real)) => {
            spine_ultrametric(real, x)
        }
        (ModelSpec::RosenzweigPorter { .. }, Realization::RosenzweigPorter { potential, flow }) => {
            Ok(spine_rosenzweig_porter(potential, flow, x))
        }
        _ => Err(Error::argument("realization does not match model family")),
    }
}

fn spine_hierarchical(
    spec: &LaplacianSpec,
    potential: Option<&[f64]>,
    x: usize,
) -> Result<SpineOperator> {
    let h = spec.hierarchy;
    let n = h.depth();
    let dim = h.volume();
    let decomposition = h.spine(x)?;

    // S: the averaging projector of every block containing x, plus the
    // potential at x itself (the r = 0 layer).
    let mut s = SymMatrix::zeros(dim);
    for r in 1..=n {
        let block = h.block_around(x, r)?;
        let value = spec.coupling(r) * 2f64.powi(-(r as i32));
        for j in block.clone() {
            for k in block.clone() {
                if k >= j {
                    s.add_sym(j, k, value);
                }
            }
        }
    }
    if let Some(v) = potential {
        s.add_sym(x, x, v[x]);
    }

    // F: for spine set X_m (a level m-1 block), all blocks of level <= m-1
    // lying inside it.
    let mut f = SymMatrix::zeros(dim);
    for (m, spine_block) in decomposition.blocks.iter().enumerate().skip(1) {
        let inner_level = (m - 1) as u32;
        for level in 1..=inner_level {
            let first = spine_block.start >> level;
            let last = (spine_block.end >> level) - 1;
            let value = spec.coupling(level) * 2f64.powi(-(level as i32));
            for b in first..=last {
                let members = h.block_members(level, b)?;
                for j in members.clone() {
                    for k in members.clone() {
                        if k >= j {
                            f.add_sym(j, k, value);
                        }
                    }
                }
            }
        }
        if let Some(v) = potential {
            for j in spine_block.clone() {
                f.add_sym(j, j, v[j]);
            }
        }
    }
    Ok(SpineOperator {
        s,
        f,
        decomposition,
    })
}

fn spine_ultrametric(real: &UltrametricRealization, x: usize) -> Result<SpineOperator> {
    let h = HierarchySpec::new(real.depth())?;
    let dim = h.volume();
    let decomposition = h.spine(x)?;

    let mut s = SymMatrix::zeros(dim);
    for r in 0..=real.depth() {
        let b = h.block_id(x, r)?;
        s.add_embedded(h.block_members(r, b)?, real.block(r, b));
    }

    let mut f = SymMatrix::zeros(dim);
    for (m, spine_block) in decomposition.blocks.iter().enumerate().skip(1) {
        let inner_level = (m - 1) as u32;
        for level in 0..=inner_level {
            let first = spine_block.start >> level;
            let last = (spine_block.end >> level) - 1;
            for b in first..=last {
                f.add_embedded(h.block_members(level, b)?, real.block(level, b));
            }
        }
    }
    Ok(SpineOperator {
        s,
        f,
        decomposition,
    })
}

fn spine_rosenzweig_porter(potential: &[f64], flow: &SymMatrix, x: usize) -> SpineOperator {
    // Trivial two-layer hierarchy: singleton potentials below one full-volume
    // Gaussian block, so F = diag(V) minus the center entry and the spine
    // sets are the singletons.
    let dim = potential.len();
    let mut s = flow.clone();
    s.add_sym(x, x, potential[x]);

    let mut f = SymMatrix::zeros(dim);
    for (j, v) in potential.iter().enumerate() {
        if j != x {
            f.add_sym(j, j, *v);
        }
    }
    let mut blocks = vec![x..x + 1];
    blocks.extend((0..dim).filter(|&j| j != x).map(|j| j..j + 1));
    SpineOperator {
        s,
        f,
        decomposition: SpineDecomposition { center: x, blocks },
    }
}

/// Trace norm (Schatten-1): sum of the absolute eigenvalues.
pub fn trace_norm(a: &SymMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?.iter().map(|l| l.abs()).sum())
}

/// Scale diagnostics of the ultrametric ensemble:
/// `Z = (sum_l Var<delta_l, H delta_0>)^{1/2}` (the l2-norm scale of a column)
/// and `M = 1 / max entry variance` (the spread after rescaling by `Z`).
pub fn scale_diagnostics(depth: u32, c: f64) -> (f64, f64) {
    let classes = ultrametric_variance_classes(depth, c);
    // sites at distance exactly d from 0: one at d = 0, 2^{d-1} for d >= 1
    let mut z2 = classes[0];
    for d in 1..=depth {
        z2 += 2f64.powi(d as i32 - 1) * classes[d as usize];
    }
    let max_var = classes.iter().fold(0.0f64, |m, &v| m.max(v));
    (z2.sqrt(), 1.0 / max_var)
}
