//! Gridded probability densities.
//!
//! A `DensityGrid` is a density sampled on a strictly increasing node set
//! plus the mass living outside the grid. The renormalization map pushes
//! mass toward both the origin and infinity, so grids combine a uniform core
//! with geometrically stretched tails and the off-grid remainder is tracked
//! explicitly instead of silently truncated.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::models::PotentialSpec;

/// Probability density on a grid with explicit off-grid mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_mass: f64,
}

/// Shape of an adaptive grid: a uniform core around the center plus two
/// geometric tail zones per side.
#[derive(Debug, Clone, Copy)]
pub struct GridShape {
    /// core half-width in units of the scale
    pub core_half: f64,
    /// core step in units of the scale
    pub core_step: f64,
    /// first geometric zone reaches this multiple of the scale
    pub mid_factor: f64,
    pub mid_ratio: f64,
    /// second geometric zone reaches this multiple of the scale
    pub far_factor: f64,
    pub far_ratio: f64,
}

impl Default for GridShape {
    fn default() -> Self {
        GridShape {
            core_half: 12.0,
            core_step: 1.0 / 64.0,
            mid_factor: 128.0,
            mid_ratio: 1.02,
            far_factor: 2.0e4,
            far_ratio: 1.045,
        }
    }
}

impl GridShape {
    /// Widen the far zone (used when input mass piles up near the origin and
    /// the reciprocal map spreads it far out).
    pub fn widened(mut self, factor: f64) -> Self {
        self.far_factor *= factor;
        self
    }

    /// Build the node set around `center` with the given scale.
    pub fn build(&self, center: f64, scale: f64) -> Vec<f64> {
        let s = scale.max(1e-300);
        let step = s * self.core_step;
        let m = (self.core_half * s / step).ceil() as i64;
        let mut right: Vec<f64> = Vec::new();
        let mut x = self.core_half * s;
        while x < self.mid_factor * s {
            x *= self.mid_ratio;
            right.push(x);
        }
        while x < self.far_factor * s {
            x *= self.far_ratio;
            right.push(x);
        }
        let mut nodes = Vec::with_capacity(2 * (m as usize + right.len()) + 1);
        for r in right.iter().rev() {
            nodes.push(center - r);
        }
        for i in -m..=m {
            nodes.push(center + i as f64 * step);
        }
        for r in &right {
            nodes.push(center + r);
        }
        nodes
    }
}

impl DensityGrid {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::config(
                "density grid needs matching nodes/values, len >= 2",
            ));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(
                "density grid nodes must be strictly increasing",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(
                "density values must be finite and nonnegative",
            ));
        }
        if !(0.0..=1.0 + 1e-9).contains(&tail_mass) {
            return Err(Error::config(format!(
                "tail mass {tail_mass} out of [0, 1]"
            )));
        }
        Ok(DensityGrid {
            nodes,
            values,
            tail_mass,
        })
    }

    /// Evaluate an absolutely continuous potential law on an adaptive grid.
    pub fn from_potential(spec: &PotentialSpec, shape: &GridShape) -> Result<Self> {
        spec.validate()?;
        if !spec.is_absolutely_continuous() {
            return Err(Error::config(
                "cannot grid a degenerate (atomic) potential distribution",
            ));
        }
        let median = invert_cdf(spec, 0.5);
        let q25 = invert_cdf(spec, 0.25);
        let q75 = invert_cdf(spec, 0.75);
        let scale = ((q75 - q25) / 2.0).max(1e-12);
        let mut nodes = shape.build(median, scale);
        // straddle density jumps with tight node triples so the trapezoid
        // rule does not smear them over a whole cell
        let eta = 1e-9 * scale;
        let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
        for b in spec.breakpoints() {
            for x in [b - eta, b, b + eta] {
                if x > lo && x < hi {
                    nodes.push(x);
                }
            }
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let values: Vec<f64> = nodes.iter().map(|&x| spec.density(x)).collect();
        let mut grid = DensityGrid::new(nodes, values, 0.0)?;
        // off-grid mass from the quadrature itself keeps trapz + tail = 1
        // exactly; it agrees with the analytic CDF tail to quadrature error
        grid.tail_mass = (1.0 - grid.trapz()).max(0.0);
        Ok(grid)
    }

    /// Uniform grid over `[a, b]` with approximately the given step.
    pub fn uniform_nodes(a: f64, b: f64, step: f64) -> Vec<f64> {
        let m = ((b - a) / step).ceil().max(1.0) as usize;
        (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interp(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x < self.nodes[0] || x > self.nodes[n - 1] {
            return 0.0;
        }
        let i = match self.nodes.partition_point(|&v| v <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Trapezoid integral of the gridded part.
    pub fn trapz(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.nodes.len() - 1 {
            acc +=
                0.5 * (self.values[i] + self.values[i + 1]) * (self.nodes[i + 1] - self.nodes[i]);
        }
        acc
    }

    pub fn total_mass(&self) -> f64 {
        self.trapz() + self.tail_mass
    }

    /// Grid quantile from the trapezoid cumulative; off-grid mass is split
    /// evenly between the two sides.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut cum = Vec::with_capacity(self.nodes.len());
        let mut acc = self.tail_mass / 2.0;
        cum.push(acc);
        for i in 0..self.nodes.len() - 1 {
            acc +=
                0.5 * (self.values[i] + self.values[i + 1]) * (self.nodes[i + 1] - self.nodes[i]);
            cum.push(acc);
        }
        let total = acc + self.tail_mass / 2.0;
        let target = (q * total).clamp(0.0, total);
        match cum.partition_point(|&v| v < target) {
            0 => self.nodes[0],
            p if p >= self.nodes.len() => *self.nodes.last().expect("nonempty"),
            p => {
                let (c0, c1) = (cum[p - 1], cum[p]);
                let t = if c1 > c0 {
                    (target - c0) / (c1 - c0)
                } else {
                    0.0
                };
                self.nodes[p - 1] + t * (self.nodes[p] - self.nodes[p - 1])
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Robust scale: half the interquartile range.
    pub fn iqr_scale(&self) -> f64 {
        ((self.quantile(0.75) - self.quantile(0.25)) / 2.0).max(1e-12)
    }

    /// Largest grid value within the window (the discretized sup-norm).
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .fold(0.0f64, |m, (_, v)| m.max(*v))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Two-column text format: `# tail_mass <t>` header, then `node value`
    /// per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# tail_mass {:e}", self.tail_mass)?;
        for (x, v) in self.nodes.iter().zip(&self.values) {
            writeln!(w, "{x:e} {v:e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut tail = 0.0;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("tail_mass") {
                    tail = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::config("bad tail_mass header"))?;
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let x: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::config(format!("bad density line: {line}")))?;
            let v: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::config(format!("bad density line: {line}")))?;
            nodes.push(x);
            values.push(v);
        }
        DensityGrid::new(nodes, values, tail)
    }
}

/// Invert a potential CDF by bisection.
fn invert_cdf(spec: &PotentialSpec, q: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while spec.cdf(lo) > q {
        lo *= 2.0;
        if lo < -1e300 {
            break;
        }
    }
    while spec.cdf(hi) < q {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_grid_is_normalized() {
        let spec = PotentialSpec::cauchy(0.0, 1.0);
        let g = DensityGrid::from_potential(&spec, &GridShape::default()).unwrap();
        assert!(
            (g.total_mass() - 1.0).abs() < 1e-6,
            "mass {}",
            g.total_mass()
        );
        // the bookkept tail agrees with the analytic CDF tail to quadrature error
        let analytic_tail = 1.0 - (spec.cdf(g.nodes[g.len() - 1]) - spec.cdf(g.nodes[0]));
        assert!(
            (g.tail_mass - analytic_tail).abs() < 5e-5,
            "tail {} vs analytic {analytic_tail}",
            g.tail_mass
        );
        assert!((g.median()).abs() < 1e-3);
        assert!((g.iqr_scale() - 1.0).abs() < 1e-2);
        assert!((g.sup() - 1.0 / std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn uniform_grid_mass_is_exact_across_jumps() {
        let g =
            DensityGrid::from_potential(&PotentialSpec::uniform(-1.0, 2.0), &GridShape::default())
                .unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-6);
        assert!(g.tail_mass < 1e-6, "uniform tail {}", g.tail_mass);
    }

    #[test]
    fn gaussian_grid_quantiles() {
        let g = DensityGrid::from_potential(&PotentialSpec::gaussian(2.0), &GridShape::default())
            .unwrap();
        assert!((g.quantile(0.5)).abs() < 1e-3);
        // Phi^{-1}(0.75) = 0.6744898
        assert!((g.quantile(0.75) - 2.0 * 0.6744898).abs() < 5e-3);
        assert!((g.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_potential_is_rejected() {
        let r = DensityGrid::from_potential(&PotentialSpec::gaussian(0.0), &GridShape::default());
        assert!(r.is_err());
    }

    #[test]
    fn interp_inside_and_outside() {
        let g = DensityGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(g.interp(0.5), 0.5);
        assert_eq!(g.interp(1.5), 0.5);
        assert_eq!(g.interp(-0.1), 0.0);
        assert_eq!(g.interp(2.1), 0.0);
        assert_eq!(g.interp(1.0), 1.0);
    }

    #[test]
    fn text_round_trip() {
        let g = DensityGrid::from_potential(&PotentialSpec::gaussian(1.0), &GridShape::default())
            .unwrap();
        let mut buf = Vec::new();
        g.write_text(&mut buf).unwrap();
        let back = DensityGrid::read_text(&buf[..]).unwrap();
        assert_eq!(g.nodes.len(), back.nodes.len());
        assert!(g
            .nodes
            .iter()
            .zip(&back.nodes)
            .all(|(a, b)| (a - b).abs() < 1e-12 * a.abs().max(1.0)));
        assert!((g.tail_mass - back.tail_mass).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(DensityGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.0).is_err());
        assert!(DensityGrid::new(vec![0.0, 1.0], vec![1.0, -1.0], 0.0).is_err());
        assert!(DensityGrid::new(vec![0.0, 1.0], vec![1.0], 0.0).is_err());
    }
}
