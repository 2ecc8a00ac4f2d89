//! Complete Lyapunov function for the discretized time-one map.
//!
//! Values are exact ternary fractions `numerator / 3^40`. Recurrent
//! components get Cantor values: the rank `r` of a component, written with
//! `D` binary digits, becomes the ternary expansion with digit `2` wherever
//! the binary digit is `1`. Transient components get values whose ternary
//! digit `D + 1` is `1`, so no transient box can share a value with a
//! recurrent one, and the value set on the recurrent boxes is a finite subset
//! of the middle-thirds Cantor set.
//!
//! A transient component `T` is placed above its *floor*, the largest
//! recurrent value it can reach, inside the band
//! `[floor + 3^-(D+1), floor + 2·3^-(D+1))`. Within one band, components are
//! ordered by height (longest transient path down to the band's floor), so
//! values strictly decrease along every condensation edge.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::chainrec::MorseGraph;
use crate::grid::BoxGrid;

/// Ternary digits carried by a [`TernaryValue`].
pub const TERNARY_DIGITS: u32 = 40;

const SCALE: u64 = 3u64.pow(TERNARY_DIGITS);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LyapunovError {
    #[error("empty chain recurrent set")]
    EmptyChainRecurrentSet,
    #[error("{0} recurrent components need more ternary digits than available")]
    TooManyComponents(usize),
    #[error("transient component {0} reaches no recurrent component and has no successor")]
    DeadEnd(usize),
    #[error("monotone assignment infeasible on edge C{from} -> C{to}")]
    MonotoneInfeasible { from: usize, to: usize },
}

/// A value in `[0, 1)` stored exactly as `numerator / 3^40`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TernaryValue(u64);

impl TernaryValue {
    pub const ZERO: TernaryValue = TernaryValue(0);

    pub fn from_numerator(n: u64) -> Option<Self> {
        (n < SCALE).then_some(TernaryValue(n))
    }

    /// Builds `sum_j digits[j] * 3^-(j+1)`.
    pub fn from_digits(digits: &[u8]) -> Self {
        assert!(digits.len() <= TERNARY_DIGITS as usize);
        let mut n = 0u64;
        let mut place = SCALE;
        for &d in digits {
            assert!(d < 3);
            place /= 3;
            n += d as u64 * place;
        }
        TernaryValue(n)
    }

    pub fn numerator(self) -> u64 {
        self.0
    }

    /// Ternary digit at 1-based position `pos`.
    pub fn digit(self, pos: u32) -> u8 {
        assert!((1..=TERNARY_DIGITS).contains(&pos));
        ((self.0 / 3u64.pow(TERNARY_DIGITS - pos)) % 3) as u8
    }

    pub fn digits(self) -> Vec<u8> {
        (1..=TERNARY_DIGITS).map(|p| self.digit(p)).collect()
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// First `depth` digits in `{0, 2}`, all later digits zero.
    pub fn is_cantor_at_depth(self, depth: u32) -> bool {
        (1..=TERNARY_DIGITS).all(|p| match self.digit(p) {
            0 => true,
            2 => p <= depth,
            _ => false,
        })
    }

    /// Ternary digit `depth + 1` equals `1`.
    pub fn is_transient_at_depth(self, depth: u32) -> bool {
        self.digit(depth + 1) == 1
    }
}

/// Cantor value of rank `rank` with `depth` binary digits.
pub fn cantor_value(rank: usize, depth: u32) -> TernaryValue {
    let digits: Vec<u8> = (0..depth)
        .map(|j| {
            if rank >> (depth - 1 - j) & 1 == 1 {
                2
            } else {
                0
            }
        })
        .collect();
    TernaryValue::from_digits(&digits)
}

/// `ceil(log2(max(k, 2)))`.
pub fn cantor_depth(k: usize) -> u32 {
    let k = k.max(2);
    usize::BITS - (k - 1).leading_zeros()
}

/// Values of the recurrent components, ranked by (layer, smallest box id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentValues {
    depth: u32,
    /// Recurrent component ids in ascending rank order.
    ranked: Vec<usize>,
    /// Indexed by component id; `None` for transient components.
    values: Vec<Option<TernaryValue>>,
}

impl ComponentValues {
    pub fn cantor_depth(&self) -> u32 {
        self.depth
    }

    pub fn ranked_components(&self) -> &[usize] {
        &self.ranked
    }

    pub fn value(&self, component: usize) -> Option<TernaryValue> {
        self.values[component]
    }

    /// `(component, value)` in ascending rank order.
    pub fn table(&self) -> impl Iterator<Item = (usize, TernaryValue)> + '_ {
        self.ranked
            .iter()
            .map(move |&c| (c, self.values[c].unwrap()))
    }
}

pub fn assign_component_values(m: &MorseGraph) -> Result<ComponentValues, LyapunovError> {
    let mut ranked: Vec<usize> = m.recurrent_components().collect();
    if ranked.is_empty() {
        return Err(LyapunovError::EmptyChainRecurrentSet);
    }
    ranked.sort_by_key(|&c| (m.layer(c), m.members(c)[0]));
    let depth = cantor_depth(ranked.len());
    // leave room for the transient digit and the height fraction
    if depth + 1 + 16 > TERNARY_DIGITS {
        return Err(LyapunovError::TooManyComponents(ranked.len()));
    }
    let mut values = vec![None; m.component_count()];
    for (rank, &c) in ranked.iter().enumerate() {
        values[c] = Some(cantor_value(rank, depth));
    }
    Ok(ComponentValues {
        depth,
        ranked,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxTag {
    Recurrent,
    Transient,
    /// Some sample image was clamped; excluded from all guarantees.
    Exiting,
}

impl BoxTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoxTag::Recurrent => "recurrent",
            BoxTag::Transient => "transient",
            BoxTag::Exiting => "exiting",
        }
    }
}

/// The discrete Lyapunov function: one exact value per box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LyapunovAssignment {
    table: ComponentValues,
    component_values: Vec<TernaryValue>,
    component_of: Vec<usize>,
    recurrent: Vec<bool>,
    tags: Vec<BoxTag>,
}

pub fn assign_transient_values(
    m: &MorseGraph,
    table: &ComponentValues,
) -> Result<LyapunovAssignment, LyapunovError> {
    let depth = table.cantor_depth();
    let cc = m.component_count();
    let mut floor = vec![TernaryValue::ZERO; cc];
    let mut height = vec![0u64; cc];

    // successors have larger ids, so walk ids downwards (sinks first)
    for c in (0..cc).rev() {
        if table.value(c).is_some() {
            continue;
        }
        if m.successors(c).is_empty() {
            return Err(LyapunovError::DeadEnd(c));
        }
        let f = m
            .successors(c)
            .iter()
            .map(|&d| table.value(d).unwrap_or(floor[d]))
            .max()
            .unwrap();
        let h = m
            .successors(c)
            .iter()
            .filter(|&&d| table.value(d).is_none() && floor[d] == f)
            .map(|&d| height[d])
            .max()
            .unwrap_or(0);
        floor[c] = f;
        height[c] = h + 1;
    }

    let max_height = height.iter().copied().max().unwrap_or(0);
    let band = SCALE / 3u64.pow(depth + 1);
    let mut component_values = vec![TernaryValue::ZERO; cc];
    for c in 0..cc {
        component_values[c] = match table.value(c) {
            Some(v) => v,
            None => {
                let frac = (band as u128 * height[c] as u128 / (max_height as u128 + 1)) as u64;
                TernaryValue(floor[c].0 + band + frac)
            }
        };
    }

    for c in 0..cc {
        for &d in m.successors(c) {
            if component_values[c] <= component_values[d]
                || component_values[c].to_f64() <= component_values[d].to_f64()
            {
                return Err(LyapunovError::MonotoneInfeasible { from: c, to: d });
            }
        }
    }

    let n = m.node_count();
    let component_of: Vec<usize> = (0..n).map(|b| m.component_of(b)).collect();
    let recurrent: Vec<bool> = (0..cc).map(|c| m.is_recurrent(c)).collect();
    let tags = (0..n)
        .map(|b| {
            if m.is_exiting(b) {
                BoxTag::Exiting
            } else if recurrent[component_of[b]] {
                BoxTag::Recurrent
            } else {
                BoxTag::Transient
            }
        })
        .collect();
    Ok(LyapunovAssignment {
        table: table.clone(),
        component_values,
        component_of,
        recurrent,
        tags,
    })
}

/// Both assignment stages in sequence.
pub fn build_assignment(m: &MorseGraph) -> Result<LyapunovAssignment, LyapunovError> {
    let table = assign_component_values(m)?;
    assign_transient_values(m, &table)
}

impl LyapunovAssignment {
    pub fn table(&self) -> &ComponentValues {
        &self.table
    }

    pub fn cantor_depth(&self) -> u32 {
        self.table.cantor_depth()
    }

    pub fn box_count(&self) -> usize {
        self.component_of.len()
    }

    pub fn value(&self, b: usize) -> TernaryValue {
        self.component_values[self.component_of[b]]
    }

    pub fn value_f64(&self, b: usize) -> f64 {
        self.value(b).to_f64()
    }

    pub fn component_value(&self, c: usize) -> TernaryValue {
        self.component_values[c]
    }

    pub fn component_of(&self, b: usize) -> usize {
        self.component_of[b]
    }

    /// Component id of a recurrent box, `None` for transient boxes.
    pub fn recurrent_component(&self, b: usize) -> Option<usize> {
        let c = self.component_of[b];
        self.recurrent[c].then_some(c)
    }

    pub fn is_recurrent_box(&self, b: usize) -> bool {
        self.recurrent[self.component_of[b]]
    }

    pub fn tag(&self, b: usize) -> BoxTag {
        self.tags[b]
    }

    /// Distinct box values, ascending.
    pub fn distinct_values(&self) -> Vec<TernaryValue> {
        let mut v: Vec<TernaryValue> = (0..self.box_count()).map(|b| self.value(b)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Smallest gap between distinct box values (as f64), or `None` with
    /// fewer than two values.
    pub fn min_value_gap(&self) -> Option<f64> {
        gaps(&self.distinct_values()).reduce(f64::min)
    }

    /// Largest gap between consecutive distinct box values.
    pub fn max_value_gap(&self) -> Option<f64> {
        gaps(&self.distinct_values()).reduce(f64::max)
    }

    pub fn value_range(&self) -> (f64, f64) {
        let v = self.distinct_values();
        (v[0].to_f64(), v[v.len() - 1].to_f64())
    }
}

fn gaps(v: &[TernaryValue]) -> impl Iterator<Item = f64> + '_ {
    v.windows(2).map(|w| w[1].to_f64() - w[0].to_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EllMode {
    /// Value of the box containing the point.
    #[default]
    Constant,
    /// Multilinear interpolation between the `2^n` nearest box centers.
    Interpolated,
}

/// Point evaluation of the assignment on a grid.
#[derive(Debug, Clone, Copy)]
pub struct Ell<'a> {
    pub assignment: &'a LyapunovAssignment,
    pub grid: &'a BoxGrid,
    pub mode: EllMode,
}

impl<'a> Ell<'a> {
    pub fn new(assignment: &'a LyapunovAssignment, grid: &'a BoxGrid, mode: EllMode) -> Self {
        assert_eq!(assignment.box_count(), grid.box_count());
        Ell {
            assignment,
            grid,
            mode,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        ell(self.assignment, self.grid, x, self.mode)
    }
}

/// `ell(x)`: the discrete Lyapunov function at a point of the domain.
/// Points outside the domain are clamped.
pub fn ell(a: &LyapunovAssignment, grid: &BoxGrid, x: &[f64], mode: EllMode) -> f64 {
    match mode {
        EllMode::Constant => a.value_f64(grid.locate(x).0),
        EllMode::Interpolated => interpolate(a, grid, x),
    }
}

fn interpolate(a: &LyapunovAssignment, grid: &BoxGrid, x: &[f64]) -> f64 {
    let n = grid.dim();
    let m = grid.per_axis();
    let mut base = vec![0usize; n];
    let mut frac = vec![0.0f64; n];
    for i in 0..n {
        let u = (x[i] - grid.domain().lo()[i]) / grid.widths()[i] - 0.5;
        let u = u.clamp(0.0, (m - 1) as f64);
        let c = (libm::floor(u) as usize).min(m - 2);
        base[i] = c;
        frac[i] = u - c as f64;
    }
    let mut acc = 0.0;
    let mut coords = vec![0usize; n];
    for mask in 0..(1usize << n) {
        let mut weight = 1.0;
        for i in 0..n {
            let upper = mask >> i & 1 == 1;
            coords[i] = base[i] + upper as usize;
            weight *= if upper { frac[i] } else { 1.0 - frac[i] };
        }
        if weight != 0.0 {
            acc += weight * a.value_f64(grid.id_of(&coords).0);
        }
    }
    acc
}
