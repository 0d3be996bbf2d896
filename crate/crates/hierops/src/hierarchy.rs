//! Dyadic hierarchical structure on `{0, ..., 2^n - 1}`.
//!
//! Level-`r` blocks are the contiguous runs `[b*2^r, (b+1)*2^r)`; every
//! level-`r` block is the union of exactly two level-`(r-1)` blocks. The
//! hierarchical distance between two sites is the smallest level at which
//! they share a block, which for this binary hierarchy equals the bit length
//! of the XOR of the site indices. It is an ultrametric.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the dyadic hierarchy: depth `n`, volume `2^n` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    depth: u32,
}

impl HierarchySpec {
    /// Hierarchy of depth `n` on `2^n` sites. Depths above 57 would overflow
    /// the site arithmetic and are rejected.
    pub fn new(depth: u32) -> Result<Self> {
        if depth > 57 {
            return Err(Error::argument(format!(
                "hierarchy depth {depth} too large"
            )));
        }
        Ok(HierarchySpec { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of sites, `2^n`.
    pub fn volume(&self) -> usize {
        1usize << self.depth
    }

    pub fn sites(&self) -> Range<usize> {
        0..self.volume()
    }

    fn check_site(&self, x: usize) -> Result<()> {
        if x >= self.volume() {
            return Err(Error::argument(format!(
                "site {x} out of range for volume {}",
                self.volume()
            )));
        }
        Ok(())
    }

    fn check_level(&self, r: u32) -> Result<()> {
        if r > self.depth {
            return Err(Error::argument(format!(
                "level {r} out of range for depth {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Index of the level-`r` block containing site `x`: `floor(x / 2^r)`.
    pub fn block_id(&self, x: usize, r: u32) -> Result<usize> {
        self.check_site(x)?;
        self.check_level(r)?;
        Ok(x >> r)
    }

    /// Hierarchical distance: the smallest `r >= 0` with
    /// `block_id(j, r) == block_id(k, r)`; equals the bit length of `j ^ k`.
    pub fn distance(&self, j: usize, k: usize) -> Result<u32> {
        self.check_site(j)?;
        self.check_site(k)?;
        Ok(Self::distance_of(j, k))
    }

    /// Distance without range checks, for hot loops over known-valid sites.
    #[inline]
    pub fn distance_of(j: usize, k: usize) -> u32 {
        usize::BITS - (j ^ k).leading_zeros()
    }

    /// Sites of the `b`-th level-`r` block: the range `[b*2^r, (b+1)*2^r)`.
    pub fn block_members(&self, r: u32, b: usize) -> Result<Range<usize>> {
        self.check_level(r)?;
        let count = self.volume() >> r;
        if b >= count {
            return Err(Error::argument(format!(
                "block index {b} out of range at level {r} ({count} blocks)"
            )));
        }
        Ok((b << r)..((b + 1) << r))
    }

    /// Sites of the level-`r` block containing `x`.
    pub fn block_around(&self, x: usize, r: u32) -> Result<Range<usize>> {
        let b = self.block_id(x, r)?;
        self.block_members(r, b)
    }

    /// Peel the blocks around `x` into the disjoint spine sets
    /// `X_0 = {x}`, `X_r = B_{r-1}(x_r)` where `x_r` is the smallest site of
    /// `B_r(x) \ B_{r-1}(x)`. The union of `X_0..X_r` is `B_r(x)`.
    pub fn spine(&self, x: usize) -> Result<SpineDecomposition> {
        self.check_site(x)?;
        let mut blocks = Vec::with_capacity(self.depth as usize + 1);
        blocks.push(x..x + 1);
        for r in 1..=self.depth {
            let outer = self.block_around(x, r)?;
            let inner = self.block_around(x, r - 1)?;
            // the sibling half of B_{r-1}(x) inside B_r(x)
            let sibling = if inner.start == outer.start {
                inner.end..outer.end
            } else {
                outer.start..inner.start
            };
            blocks.push(sibling);
        }
        Ok(SpineDecomposition { center: x, blocks })
    }
}

/// The disjoint sets `X_0, ..., X_n` peeled off the blocks around a center.
/// Removing every block that contains the center leaves an operator that is
/// block-diagonal with respect to these sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpineDecomposition {
    pub center: usize,
    /// `blocks[r]` is `X_r`, a contiguous site range of size `2^{r-1}`
    /// (size 1 for `r = 0`).
    pub blocks: Vec<Range<usize>>,
}

impl SpineDecomposition {
    /// Spine level of a site: the unique `r` with `site` in `X_r`.
    pub fn level_of(&self, site: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&site))
    }
}
