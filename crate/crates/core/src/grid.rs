//! Uniform box subdivision of a compact rectangle.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Largest supported subdivision depth per axis.
pub const MAX_DEPTH: u32 = 16;

/// Default cap on the total number of boxes in a grid.
pub const DEFAULT_BOX_CAP: usize = 1 << 24;

/// Relative inward offset applied to sampled box corners.
pub const CORNER_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("domain must have at least one axis")]
    EmptyDomain,
    #[error("axis {axis}: lower bound {lo} must be finite and below upper bound {hi}")]
    InvalidBounds { axis: usize, lo: f64, hi: f64 },
    #[error("depth {0} outside 1..={MAX_DEPTH}")]
    InvalidDepth(u32),
    #[error("grid of depth {depth} in dimension {dim} exceeds the cap of {cap} boxes")]
    CapExceeded { depth: u32, dim: usize, cap: usize },
    #[error("at least 2 samples per axis are required, got {0}")]
    TooFewSamples(usize),
}

/// Closed axis-aligned rectangle `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rect {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self, GridError> {
        if bounds.is_empty() {
            return Err(GridError::EmptyDomain);
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GridError::InvalidBounds { axis, lo, hi });
            }
        }
        Ok(Rect {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Clamps `x` into the rectangle in place; returns whether anything moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (lo, hi)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            if *v < *lo {
                *v = *lo;
                moved = true;
            } else if *v > *hi {
                *v = *hi;
                moved = true;
            }
        }
        moved
    }
}

/// Linearized box index, row-major with the first axis most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoxId(pub usize);

/// Uniform subdivision of a rectangle into `2^depth` boxes per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    domain: Rect,
    depth: u32,
    per_axis: usize,
    widths: Vec<f64>,
    count: usize,
}

/// Builds a grid with the default box cap.
pub fn build_grid(domain: Rect, depth: u32) -> Result<BoxGrid, GridError> {
    BoxGrid::with_cap(domain, depth, DEFAULT_BOX_CAP)
}

impl BoxGrid {
    pub fn with_cap(domain: Rect, depth: u32, cap: usize) -> Result<Self, GridError> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(GridError::InvalidDepth(depth));
        }
        let dim = domain.dim();
        let per_axis = 1usize << depth;
        let count = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(per_axis))
            .filter(|&c| c <= cap)
            .ok_or(GridError::CapExceeded { depth, dim, cap })?;
        let widths = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(lo, hi)| (hi - lo) / per_axis as f64)
            .collect();
        Ok(BoxGrid {
            domain,
            depth,
            per_axis,
            widths,
            count,
        })
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Boxes per axis, `2^depth`.
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn box_count(&self) -> usize {
        self.count
    }

    pub fn ids(&self) -> impl Iterator<Item = BoxId> {
        (0..self.count).map(BoxId)
    }

    /// Axis coordinate of `x_i` on axis `i`, clamped to the grid.
    pub fn axis_coord(&self, axis: usize, v: f64) -> usize {
        let u = (v - self.domain.lo[axis]) / self.widths[axis];
        if u.is_nan() || u < 0.0 {
            return 0;
        }
        let c = libm::floor(u) as usize;
        c.min(self.per_axis - 1)
    }

    pub fn locate(&self, x: &[f64]) -> BoxId {
        debug_assert_eq!(x.len(), self.dim());
        let mut id = 0;
        for (axis, &v) in x.iter().enumerate() {
            id = id * self.per_axis + self.axis_coord(axis, v);
        }
        BoxId(id)
    }

    pub fn coords(&self, b: BoxId) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.coords_into(b, &mut out);
        out
    }

    pub fn coords_into(&self, b: BoxId, out: &mut [usize]) {
        let mut rest = b.0;
        for c in out.iter_mut().rev() {
            *c = rest % self.per_axis;
            rest /= self.per_axis;
        }
    }

    pub fn id_of(&self, coords: &[usize]) -> BoxId {
        BoxId(coords.iter().fold(0, |acc, &c| acc * self.per_axis + c))
    }

    /// Lower and upper corners of box `b`.
    pub fn bounds(&self, b: BoxId) -> (Vec<f64>, Vec<f64>) {
        let coords = self.coords(b);
        let lo: Vec<f64> = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| self.domain.lo[i] + c as f64 * self.widths[i])
            .collect();
        let hi = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c + 1 == self.per_axis {
                    self.domain.hi[i]
                } else {
                    self.domain.lo[i] + (c + 1) as f64 * self.widths[i]
                }
            })
            .collect();
        (lo, hi)
    }

    pub fn center(&self, b: BoxId) -> Vec<f64> {
        self.coords(b)
            .iter()
            .enumerate()
            .map(|(i, &c)| self.domain.lo[i] + (c as f64 + 0.5) * self.widths[i])
            .collect()
    }

    /// Chebyshev distance between two boxes in box units.
    pub fn box_distance(&self, a: BoxId, b: BoxId) -> usize {
        let (ca, cb) = (self.coords(a), self.coords(b));
        ca.iter()
            .zip(&cb)
            .map(|(x, y)| x.abs_diff(*y))
            .max()
            .unwrap_or(0)
    }

    /// The `k^n` interior lattice at fractions `(j + 0.5) / k` followed by the
    /// `2^n` corners nudged inward by `CORNER_NUDGE` box widths.
    pub fn sample_points(&self, b: BoxId, k: usize) -> Result<Vec<Vec<f64>>, GridError> {
        if k < 2 {
            return Err(GridError::TooFewSamples(k));
        }
        let n = self.dim();
        let (lo, _) = self.bounds(b);
        let mut out = Vec::with_capacity(k.pow(n as u32) + (1 << n));
        let mut idx = vec![0usize; n];
        loop {
            out.push(
                (0..n)
                    .map(|i| lo[i] + (idx[i] as f64 + 0.5) / k as f64 * self.widths[i])
                    .collect(),
            );
            if !advance(&mut idx, k) {
                break;
            }
        }
        for mask in 0..(1usize << n) {
            out.push(
                (0..n)
                    .map(|i| {
                        // bit for axis 0 is the most significant, matching id order
                        let upper = mask >> (n - 1 - i) & 1 == 1;
                        let w = self.widths[i];
                        if upper {
                            lo[i] + w - w * CORNER_NUDGE
                        } else {
                            lo[i] + w * CORNER_NUDGE
                        }
                    })
                    .collect(),
            );
        }
        Ok(out)
    }
}

/// Odometer increment over `[0, base)^n`, last axis fastest.
pub(crate) fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}
