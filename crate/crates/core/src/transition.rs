//! Combinatorial outer approximation of a map as a directed graph on boxes.
//!
//! Each box is sampled on a lattice plus its nudged corners; every sample
//! image `y` contributes edges to all boxes meeting the padded rectangle
//! `y ± padding * w`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::{FlowError, MapImage, SemiflowSystem};
use crate::grid::{BoxGrid, BoxId, GridError};

/// Default lattice samples per axis.
pub const DEFAULT_SAMPLES: usize = 3;
/// Default padding, in box widths.
pub const DEFAULT_PADDING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransitionError {
    #[error("box {box_id}: {source}")]
    Flow { box_id: usize, source: FlowError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("padding must be finite and non-negative, got {0}")]
    InvalidPadding(f64),
    #[error("edge {src} -> {dst} references a box outside 0..{nodes}")]
    InvalidEdge {
        src: usize,
        dst: usize,
        nodes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSettings {
    pub samples_per_axis: usize,
    pub padding: f64,
}

impl Default for TransitionSettings {
    fn default() -> Self {
        TransitionSettings {
            samples_per_axis: DEFAULT_SAMPLES,
            padding: DEFAULT_PADDING,
        }
    }
}

impl TransitionSettings {
    pub fn validate(&self) -> Result<(), TransitionError> {
        if self.samples_per_axis < 2 {
            return Err(GridError::TooFewSamples(self.samples_per_axis).into());
        }
        if !(self.padding >= 0.0 && self.padding.is_finite()) {
            return Err(TransitionError::InvalidPadding(self.padding));
        }
        Ok(())
    }
}

/// Outgoing edges of a single box.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoxImage {
    /// Sorted, duplicate-free target boxes.
    pub targets: Vec<usize>,
    pub exiting: bool,
}

/// Directed graph over box ids in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    exiting: Vec<bool>,
}

impl TransitionGraph {
    /// Builds a graph from per-node successor lists; lists are sorted and
    /// deduplicated, and every target must be a valid node.
    pub fn from_adjacency(
        adjacency: Vec<Vec<usize>>,
        exiting: Vec<bool>,
    ) -> Result<Self, TransitionError> {
        assert_eq!(adjacency.len(), exiting.len());
        let nodes = adjacency.len();
        let mut offsets = Vec::with_capacity(nodes + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (src, mut succ) in adjacency.into_iter().enumerate() {
            succ.sort_unstable();
            succ.dedup();
            if let Some(&dst) = succ.last() {
                if dst >= nodes {
                    return Err(TransitionError::InvalidEdge { src, dst, nodes });
                }
            }
            targets.extend_from_slice(&succ);
            offsets.push(targets.len());
        }
        Ok(TransitionGraph {
            offsets,
            targets,
            exiting,
        })
    }

    /// Plain graph with no exiting flags, mostly for tests and oracles.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self, TransitionError> {
        let mut adj = vec![Vec::new(); nodes];
        for &(src, dst) in edges {
            if src >= nodes {
                return Err(TransitionError::InvalidEdge { src, dst, nodes });
            }
            adj[src].push(dst);
        }
        Self::from_adjacency(adj, vec![false; nodes])
    }

    pub fn from_images(images: Vec<BoxImage>) -> Result<Self, TransitionError> {
        let (adj, exiting) = images.into_iter().map(|i| (i.targets, i.exiting)).unzip();
        Self::from_adjacency(adj, exiting)
    }

    pub fn node_count(&self) -> usize {
        self.exiting.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.successors(src).binary_search(&dst).is_ok()
    }

    pub fn is_exiting(&self, node: usize) -> bool {
        self.exiting[node]
    }

    pub fn exiting_flags(&self) -> &[bool] {
        &self.exiting
    }

    pub fn exiting_count(&self) -> usize {
        self.exiting.iter().filter(|e| **e).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |s| self.successors(s).iter().map(move |&d| (s, d)))
    }

    /// Edge list export: one `src dst` line per edge, sorted.
    pub fn write_edge_list<W: core::fmt::Write>(&self, out: &mut W) -> core::fmt::Result {
        for (s, d) in self.edges() {
            writeln!(out, "{s} {d}")?;
        }
        Ok(())
    }

    pub fn edge_list_string(&self) -> alloc::string::String {
        let mut s = alloc::string::String::new();
        let _ = self.write_edge_list(&mut s);
        s
    }
}

/// Adds to `targets` every box meeting the rectangle `y ± padding * w`.
pub fn padded_targets(grid: &BoxGrid, y: &[f64], padding: f64, targets: &mut Vec<usize>) {
    let n = grid.dim();
    let mut lo = vec![0usize; n];
    let mut span = vec![0usize; n];
    for i in 0..n {
        let r = padding * grid.widths()[i];
        let a = grid.axis_coord(i, y[i] - r);
        let b = grid.axis_coord(i, y[i] + r);
        lo[i] = a;
        span[i] = b - a + 1;
    }
    let mut idx = vec![0usize; n];
    loop {
        let id = (0..n).fold(0, |acc, i| acc * grid.per_axis() + lo[i] + idx[i]);
        targets.push(id);
        let mut carried = true;
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < span[i] {
                carried = false;
                break;
            }
            idx[i] = 0;
        }
        if carried {
            break;
        }
    }
}

/// Outgoing edges of box `b` under `map`.
pub fn box_image<F>(
    grid: &BoxGrid,
    settings: &TransitionSettings,
    b: BoxId,
    map: &F,
) -> Result<BoxImage, TransitionError>
where
    F: Fn(&[f64]) -> Result<MapImage, FlowError>,
{
    let mut targets = Vec::new();
    let mut exiting = false;
    for p in grid.sample_points(b, settings.samples_per_axis)? {
        let img = map(&p).map_err(|source| TransitionError::Flow {
            box_id: b.0,
            source,
        })?;
        exiting |= img.exiting;
        padded_targets(grid, &img.point, settings.padding, &mut targets);
    }
    targets.sort_unstable();
    targets.dedup();
    Ok(BoxImage { targets, exiting })
}

/// Transition graph of an arbitrary point map, box by box in id order.
pub fn build_transition_with<F>(
    grid: &BoxGrid,
    settings: &TransitionSettings,
    map: F,
) -> Result<TransitionGraph, TransitionError>
where
    F: Fn(&[f64]) -> Result<MapImage, FlowError>,
{
    settings.validate()?;
    let images = grid
        .ids()
        .map(|b| box_image(grid, settings, b, &map))
        .collect::<Result<Vec<_>, _>>()?;
    TransitionGraph::from_images(images)
}

/// Transition graph of the time-one map of `sys`.
pub fn build_transition(
    grid: &BoxGrid,
    sys: &SemiflowSystem,
    settings: &TransitionSettings,
) -> Result<TransitionGraph, TransitionError> {
    build_transition_with(grid, settings, |x| sys.time_one_map(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::grid::{build_grid, Rect};

    fn map_sys(update: &[&str], bounds: &[(f64, f64)]) -> SemiflowSystem {
        let n = update.len();
        let u = update
            .iter()
            .map(|s| parse_expression(s, n).unwrap())
            .collect();
        SemiflowSystem::discrete(u, Rect::new(bounds).unwrap()).unwrap()
    }

    #[test]
    fn identity_has_self_loops() {
        let sys = map_sys(&["x1", "x2"], &[(0.0, 1.0), (0.0, 1.0)]);
        let grid = build_grid(sys.domain().clone(), 3).unwrap();
        let g = build_transition(&grid, &sys, &TransitionSettings::default()).unwrap();
        for b in 0..grid.box_count() {
            assert!(g.has_edge(b, b));
        }
        assert_eq!(g.exiting_count(), 0);
    }

    #[test]
    fn halving_map_reaches_origin_box() {
        let sys = map_sys(&["x1/2"], &[(-1.0, 1.0)]);
        let grid = build_grid(sys.domain().clone(), 3).unwrap();
        let settings = TransitionSettings {
            samples_per_axis: 3,
            padding: 0.5,
        };
        let g = build_transition(&grid, &sys, &settings).unwrap();

        // oracle: evaluate x/2 directly on every sample, pad, compare
        for b in grid.ids() {
            let mut expect = Vec::new();
            for p in grid.sample_points(b, 3).unwrap() {
                let y = p[0] / 2.0;
                let w = grid.widths()[0];
                for c in 0..grid.per_axis() {
                    let lo = -1.0 + c as f64 * w;
                    let hi = lo + w;
                    if lo <= y + 0.5 * w && hi > y - 0.5 * w {
                        expect.push(c);
                    }
                }
            }
            expect.sort_unstable();
            expect.dedup();
            assert_eq!(g.successors(b.0), expect.as_slice(), "box {}", b.0);
        }

        let zero_box = grid.locate(&[0.0]).0;
        for b in 0..grid.box_count() {
            let mut frontier = vec![b];
            let mut found = b == zero_box;
            for _ in 0..3 {
                let mut next: Vec<usize> = frontier
                    .iter()
                    .flat_map(|&v| g.successors(v).to_vec())
                    .collect();
                next.sort_unstable();
                next.dedup();
                found |= next.contains(&zero_box);
                frontier = next;
            }
            assert!(found, "box {b} does not reach the origin box");
        }
    }

    #[test]
    fn contraction_targets_scaled_coordinates() {
        let rhs = vec![parse_expression("-x1", 1).unwrap()];
        let sys = SemiflowSystem::continuous(rhs, Rect::new(&[(-1.0, 1.0)]).unwrap(), 1.0 / 256.0)
            .unwrap();
        let grid = build_grid(sys.domain().clone(), 5).unwrap();
        let g = build_transition(&grid, &sys, &TransitionSettings::default()).unwrap();
        let w = grid.widths()[0];
        let shrink = libm::exp(-1.0);
        for b in grid.ids() {
            let (lo, hi) = grid.bounds(b);
            // closed-form image interval of the box, padded by half a width
            let (ilo, ihi) = (lo[0] * shrink - 0.5 * w, hi[0] * shrink + 0.5 * w);
            for &t in g.successors(b.0) {
                let (tlo, thi) = grid.bounds(BoxId(t));
                assert!(tlo[0] <= ihi && thi[0] >= ilo, "box {} -> {t}", b.0);
            }
            let center = grid.center(b)[0] * shrink;
            assert!(g.has_edge(b.0, grid.locate(&[center]).0));
        }
    }

    #[test]
    fn padding_zero_gives_single_box_per_sample() {
        let grid = build_grid(Rect::new(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(), 2).unwrap();
        let mut t = Vec::new();
        padded_targets(&grid, &[0.3, 0.6], 0.0, &mut t);
        assert_eq!(t, vec![grid.locate(&[0.3, 0.6]).0]);
        t.clear();
        padded_targets(&grid, &[0.3, 0.6], 0.5, &mut t);
        // x: [0.175, 0.425] -> cols 0,1 ; y: [0.475, 0.725] -> rows 1,2
        let want: Vec<usize> = [[0, 1], [0, 2], [1, 1], [1, 2]]
            .iter()
            .map(|c| grid.id_of(c).0)
            .collect();
        assert_eq!(t, want);
    }

    #[test]
    fn invalid_settings_and_edges() {
        let s = TransitionSettings {
            samples_per_axis: 1,
            padding: 0.5,
        };
        assert!(s.validate().is_err());
        let s = TransitionSettings {
            samples_per_axis: 3,
            padding: -1.0,
        };
        assert_eq!(s.validate(), Err(TransitionError::InvalidPadding(-1.0)));
        assert!(matches!(
            TransitionGraph::from_edges(2, &[(0, 2)]),
            Err(TransitionError::InvalidEdge { .. })
        ));
    }

    #[test]
    fn edge_list_export_sorted() {
        let g = TransitionGraph::from_edges(3, &[(2, 0), (0, 1), (0, 1), (1, 2), (0, 0)]).unwrap();
        assert_eq!(g.edge_list_string(), "0 0\n0 1\n1 2\n2 0\n");
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn flow_errors_carry_box_id() {
        let u = vec![parse_expression("1/x1", 1).unwrap()];
        let sys = SemiflowSystem::discrete(u, Rect::new(&[(-1.0, 1.0)]).unwrap()).unwrap();
        let grid = build_grid(sys.domain().clone(), 1).unwrap();
        let map = |x: &[f64]| {
            if x[0].abs() < 1e-3 {
                sys.time_one_map(&[0.0])
            } else {
                sys.time_one_map(x)
            }
        };
        let err = build_transition_with(&grid, &TransitionSettings::default(), map).unwrap_err();
        assert!(
            matches!(err, TransitionError::Flow { box_id: 0, .. }),
            "{err:?}"
        );
    }
}
