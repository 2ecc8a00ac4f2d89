//! Numerical verification of a finished analysis.
//!
//! Every check is always listed in the report. Checks that need a semiflow
//! are skipped in map mode; checks that need qualifying samples are skipped
//! when there are none, with the reason recorded.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use lyapgen_core::{
    average_over, box_image, chain_recurrent_boxes, continuity_probe, epsilon_chain_oracle,
    shift_decomposition, strongly_connected_components, BoxGrid, BoxId, LiftConfig, LiftValue,
    MorseGraph, ScalarField, TransitionSettings,
};

use crate::pipeline::{time_t_graph, Analysis, PipelineError};

/// Random points drawn per recurrent box, on top of the lattice samples.
pub const RANDOM_PER_RECURRENT_BOX: usize = 32;
/// Box-distance margin for transient samples: Chebyshev box distance 3
/// keeps a point at least two box widths from every recurrent box.
pub const TRANSIENT_BOX_MARGIN: usize = 3;
/// Shifts tried by the constancy check.
pub const CONSTANCY_SHIFTS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Random `(x, s)` pairs for the shift identity.
pub const SHIFT_TRIALS: usize = 20;
/// Required shrink factor of the shift discrepancy when `N` doubles.
pub const SHIFT_SHRINK: f64 = 1.8;
/// Probe centers and samples per probe.
pub const PROBE_CENTERS: usize = 8;
pub const PROBE_SAMPLES: usize = 16;
/// Boxes re-imaged by the monotonicity checks.
pub const MONOTONICITY_BOXES: usize = 64;
/// Largest graph on which the chain oracle runs on every node.
pub const ORACLE_FULL_LIMIT: usize = 10_000;
pub const ORACLE_SUBSET: usize = 2_000;

// independent random streams, one per consumer
const STREAM_RECURRENT: u64 = 1;
const STREAM_SHIFT: u64 = 2;
const STREAM_PROBE: u64 = 3;
const STREAM_ORACLE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub samples: usize,
    pub detail: String,
    pub counterexample: Option<Value>,
    pub reason: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            status: Status::Pass,
            measured: None,
            tolerance: None,
            samples: 0,
            detail: String::new(),
            counterexample: None,
            reason: None,
        }
    }

    fn skipped(name: &'static str, reason: impl Into<String>) -> Self {
        Check {
            status: Status::Skipped,
            reason: Some(reason.into()),
            ..Check::new(name)
        }
    }

    fn judge(mut self, ok: bool) -> Self {
        self.status = if ok { Status::Pass } else { Status::Fail };
        self
    }

    fn measure(mut self, measured: f64, tolerance: f64) -> Self {
        self.measured = Some(measured);
        self.tolerance = Some(tolerance);
        self
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    fn counterexample(mut self, c: Option<Value>) -> Self {
        self.counterexample = c;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentEntry {
    pub id: usize,
    pub rank: usize,
    pub value: f64,
    pub numerator: u64,
    pub ternary: String,
    pub boxes: usize,
    pub layer: usize,
    pub exiting: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub name: String,
    pub mode: &'static str,
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    pub depth: u32,
    pub samples_per_axis: usize,
    pub padding: f64,
    pub h: Option<f64>,
    pub quad_n: usize,
    pub ell_mode: &'static str,
    pub seed: u64,
    pub box_count: usize,
    pub edge_count: usize,
    pub exiting_box_count: usize,
    pub scc_count: usize,
    pub recurrent_component_count: usize,
    pub recurrent_box_count: usize,
    pub cantor_depth: u32,
    pub tolerance_q: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub components: Vec<ComponentEntry>,
    pub checks: Vec<Check>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Every check name, in report order.
pub const CHECK_NAMES: [&str; 16] = [
    "scc_matches_chain_oracle",
    "transition_monotone_in_padding",
    "transition_monotone_in_samples",
    "ell_decreases_along_edges",
    "cantor_digits",
    "ell_level_sets",
    "time_scale_invariance",
    "component_coincidence",
    "mean_value_bound",
    "constancy_on_recurrent",
    "strict_decrease_off_recurrent",
    "image_equality",
    "lift_level_sets",
    "shift_identity",
    "shift_convergence",
    "continuity_probe",
];

fn ternary_string(a: &Analysis, c: usize) -> String {
    let v = a.assignment.component_value(c);
    let d = (a.assignment.cantor_depth() + 2) as usize;
    let digits: String = v.digits()[..d]
        .iter()
        .map(|x| char::from(b'0' + x))
        .collect();
    format!("0.{digits}")
}

fn metadata(a: &Analysis) -> Metadata {
    let cfg = &a.config;
    let range = a.assignment.value_range();
    Metadata {
        name: cfg.name.clone(),
        mode: cfg.kind.as_str(),
        dimension: cfg.dim(),
        domain: cfg.domain.iter().map(|&(l, h)| [l, h]).collect(),
        depth: cfg.depth,
        samples_per_axis: cfg.transition.samples_per_axis,
        padding: cfg.transition.padding,
        h: a.is_ode().then_some(cfg.h),
        quad_n: cfg.lift.quad_n,
        ell_mode: match cfg.ell_mode {
            lyapgen_core::EllMode::Constant => "constant",
            lyapgen_core::EllMode::Interpolated => "interpolated",
        },
        seed: cfg.seed,
        box_count: a.grid.box_count(),
        edge_count: a.graph.edge_count(),
        exiting_box_count: a.graph.exiting_count(),
        scc_count: a.morse.component_count(),
        recurrent_component_count: a.morse.recurrent_count(),
        recurrent_box_count: chain_recurrent_boxes(&a.morse).len(),
        cantor_depth: a.assignment.cantor_depth(),
        tolerance_q: a.is_ode().then(|| cfg.lift.tolerance(range.1 - range.0)),
    }
}

pub fn components(a: &Analysis) -> Vec<ComponentEntry> {
    a.assignment
        .table()
        .table()
        .enumerate()
        .map(|(rank, (c, v))| ComponentEntry {
            id: c,
            rank,
            value: v.to_f64(),
            numerator: v.numerator(),
            ternary: ternary_string(a, c),
            boxes: a.morse.members(c).len(),
            layer: a.morse.layer(c),
            exiting: a.morse.members(c).iter().any(|&b| a.morse.is_exiting(b)),
        })
        .collect()
}

/// Chebyshev box distance from every box to the nearest box in `sources`
/// (`usize::MAX` when `sources` is empty).
pub fn box_distance_transform(grid: &BoxGrid, sources: &[usize]) -> Vec<usize> {
    let n = grid.dim();
    let m = grid.per_axis() as isize;
    let mut dist = vec![usize::MAX; grid.box_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    let mut coords = vec![0usize; n];
    let mut nb = vec![0usize; n];
    let offsets = 3usize.pow(n as u32);
    while let Some(b) = queue.pop_front() {
        grid.coords_into(BoxId(b), &mut coords);
        'offset: for code in 0..offsets {
            let mut c = code;
            for i in 0..n {
                let step = (c % 3) as isize - 1;
                c /= 3;
                let v = coords[i] as isize + step;
                if v < 0 || v >= m {
                    continue 'offset;
                }
                nb[i] = v as usize;
            }
            let id = grid.id_of(&nb).0;
            if dist[id] == usize::MAX {
                dist[id] = dist[b] + 1;
                queue.push_back(id);
            }
        }
    }
    dist
}

/// Rounds to the nearest of the sorted `values`; `None` when farther than
/// `tol`.
fn round_to(values: &[f64], v: f64, tol: f64) -> Option<usize> {
    let i = values.partition_point(|&w| w < v);
    let best = [i.checked_sub(1), (i < values.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (values[a] - v).abs().total_cmp(&(values[b] - v).abs()))?;
    ((values[best] - v).abs() <= tol).then_some(best)
}

fn point_json(x: &[f64]) -> Value {
    json!(x)
}

/// A lifted sample with its orbit over `[0, 2]`.
struct Lifted {
    point: Vec<f64>,
    origin: usize,
    /// `L(phi^{j/N} x)` for the shifts the caller asked for, starting with
    /// `j = 0`.
    values: Vec<LiftValue>,
    /// Boxes visited by the orbit samples.
    visited: Vec<usize>,
    exiting: bool,
}

fn lift_samples<F: ScalarField + Sync>(
    a: &Analysis,
    field: &F,
    points: Vec<(Vec<f64>, usize)>,
    shifts: &[usize],
) -> Result<Vec<Lifted>, PipelineError> {
    let n = a.config.lift.quad_n;
    points
        .into_par_iter()
        .map(|(point, origin)| {
            let orbit = a
                .system
                .quadrature_orbit(&point, n, 2)
                .map_err(lyapgen_core::LiftError::from)?;
            let values = shifts
                .iter()
                .map(|&j| average_over(field, &orbit, j))
                .collect();
            let mut visited: Vec<usize> = orbit.iter().map(|p| a.grid.locate(p).0).collect();
            visited.sort_unstable();
            visited.dedup();
            Ok(Lifted {
                point,
                origin,
                values,
                visited,
                exiting: orbit.exiting,
            })
        })
        .collect()
}

/// `s * N` when `s` lies on both the quadrature and integrator grids.
fn aligned(s: f64, n: usize, spu: u32) -> Option<usize> {
    let k = s * n as f64;
    let steps = s * spu as f64;
    (k.fract() == 0.0 && steps.fract() == 0.0 && k >= 1.0).then_some(k as usize)
}

/// Runs every check on `a`.
pub fn verify(a: &Analysis) -> Result<VerificationReport, PipelineError> {
    let mut checks = Vec::with_capacity(CHECK_NAMES.len());
    checks.push(check_oracle(a));
    checks.extend(check_transition_monotone(a)?);
    checks.push(check_edges(a));
    checks.push(check_cantor(a));
    checks.push(check_ell_level_sets(a));
    if a.is_ode() {
        checks.extend(check_time_scales(a)?);
        checks.extend(check_lift(a)?);
    } else {
        for name in &CHECK_NAMES[6..] {
            checks.push(Check::skipped(name, "map mode"));
        }
    }
    debug_assert_eq!(
        checks.iter().map(|c| c.name).collect::<Vec<_>>(),
        CHECK_NAMES.to_vec()
    );
    let count = |s| checks.iter().filter(|c| c.status == s).count();
    let summary = Summary {
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        skipped: count(Status::Skipped),
    };
    Ok(VerificationReport {
        schema_version: crate::config::SCHEMA_VERSION,
        metadata: metadata(a),
        components: components(a),
        checks,
        summary,
    })
}

fn check_oracle(a: &Analysis) -> Check {
    let nodes = a.graph.node_count();
    let subset: Vec<usize> = if nodes <= ORACLE_FULL_LIMIT {
        (0..nodes).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed);
        rng.set_stream(STREAM_ORACLE);
        let mut s: BTreeSet<usize> = BTreeSet::new();
        while s.len() < ORACLE_SUBSET {
            s.insert(rng.gen_range(0..nodes));
        }
        s.into_iter().collect()
    };
    let mismatches: Vec<usize> = subset
        .par_iter()
        .copied()
        .filter(|&b| epsilon_chain_oracle(&a.graph, b) != a.morse.is_recurrent_node(b))
        .collect();
    Check::new("scc_matches_chain_oracle")
        .measure(mismatches.len() as f64, 0.0)
        .samples(subset.len())
        .detail(if subset.len() == nodes {
            "every box".to_string()
        } else {
            format!("{} of {nodes} boxes", subset.len())
        })
        .counterexample(mismatches.first().map(|&b| {
            json!({
                "box": b,
                "oracle": epsilon_chain_oracle(&a.graph, b),
                "scc_recurrent": a.morse.is_recurrent_node(b),
            })
        }))
        .judge(mismatches.is_empty())
}

fn monotone_subset(a: &Analysis) -> Vec<usize> {
    let n = a.grid.box_count();
    let take = n.min(MONOTONICITY_BOXES);
    (0..take).map(|i| i * n / take).collect()
}

fn check_transition_monotone(a: &Analysis) -> Result<[Check; 2], PipelineError> {
    let boxes = monotone_subset(a);
    let base = a.config.transition;
    let sys = &a.system;
    let map = |x: &[f64]| sys.time_one_map(x);
    let image = |settings: TransitionSettings, b: usize| {
        box_image(&a.grid, &settings, BoxId(b), &map).map(|img| img.targets)
    };
    let finer_padding = TransitionSettings {
        padding: base.padding / 2.0,
        ..base
    };
    let finer_samples = TransitionSettings {
        samples_per_axis: base.samples_per_axis * 3,
        ..base
    };
    let results: Vec<(usize, Vec<usize>, Vec<usize>)> = boxes
        .par_iter()
        .map(|&b| Ok((b, image(finer_padding, b)?, image(finer_samples, b)?)))
        .collect::<Result<_, lyapgen_core::TransitionError>>()?;

    let mut pad_bad = None;
    let mut samp_bad = None;
    for (b, small, dense) in &results {
        let current = a.graph.successors(*b);
        if pad_bad.is_none() {
            if let Some(t) = small.iter().find(|t| current.binary_search(t).is_err()) {
                pad_bad = Some(json!({"box": b, "edge_only_at_smaller_padding": t}));
            }
        }
        if samp_bad.is_none() {
            if let Some(t) = current.iter().find(|t| dense.binary_search(t).is_err()) {
                samp_bad = Some(json!({"box": b, "edge_missing_after_refinement": t}));
            }
        }
    }
    let pad = Check::new("transition_monotone_in_padding")
        .samples(boxes.len())
        .detail(format!(
            "edges at padding {} within edges at padding {}",
            finer_padding.padding, base.padding
        ));
    let pad_ok = pad_bad.is_none();
    let samp = Check::new("transition_monotone_in_samples")
        .samples(boxes.len())
        .detail(format!(
            "edges at k = {} within edges at k = {}",
            base.samples_per_axis, finer_samples.samples_per_axis
        ));
    let samp_ok = samp_bad.is_none();
    Ok([
        pad.counterexample(pad_bad).judge(pad_ok),
        samp.counterexample(samp_bad).judge(samp_ok),
    ])
}

fn check_edges(a: &Analysis) -> Check {
    let mut bad = 0usize;
    let mut first = None;
    for (s, t) in a.graph.edges() {
        let same = a.morse.component_of(s) == a.morse.component_of(t);
        let (vs, vt) = (a.assignment.value(s), a.assignment.value(t));
        let ok = if same { vs == vt } else { vs > vt };
        if !ok {
            bad += 1;
            first.get_or_insert_with(|| {
                json!({"edge": [s, t], "values": [vs.to_f64(), vt.to_f64()], "same_component": same})
            });
        }
    }
    Check::new("ell_decreases_along_edges")
        .measure(bad as f64, 0.0)
        .samples(a.graph.edge_count())
        .detail("equal within a component, strictly decreasing between components")
        .counterexample(first)
        .judge(bad == 0)
}

fn check_cantor(a: &Analysis) -> Check {
    let d = a.assignment.cantor_depth();
    let mut bad = 0usize;
    let mut first = None;
    for b in 0..a.assignment.box_count() {
        let v = a.assignment.value(b);
        let ok = if a.assignment.is_recurrent_box(b) {
            v.is_cantor_at_depth(d)
        } else {
            v.is_transient_at_depth(d)
        };
        if !ok {
            bad += 1;
            first.get_or_insert_with(|| {
                json!({"box": b, "numerator": v.numerator(), "digits": v.digits()[..(d as usize + 2)]})
            });
        }
    }
    let table: Vec<_> = a.assignment.table().table().map(|(_, v)| v).collect();
    let increasing = table.windows(2).all(|w| w[0] < w[1]);
    if !increasing && first.is_none() {
        let ranked: Vec<u64> = table.iter().map(|v| v.numerator()).collect();
        first = Some(json!({"ranked_numerators": ranked}));
    }
    Check::new("cantor_digits")
        .measure(bad as f64, 0.0)
        .samples(a.assignment.box_count())
        .detail(format!(
            "depth {d}; recurrent digits in {{0,2}} to depth {d}, transient digit {} equal to 1; rank order {}",
            d + 1,
            if increasing { "strictly increasing" } else { "NOT increasing" }
        ))
        .counterexample(first)
        .judge(bad == 0 && increasing)
}

fn distinct_f64(a: &Analysis) -> Vec<f64> {
    a.assignment
        .distinct_values()
        .into_iter()
        .map(|v| v.to_f64())
        .collect()
}

fn rounding_tolerance(a: &Analysis) -> f64 {
    a.assignment
        .min_value_gap()
        .map_or(f64::INFINITY, |g| g / 2.0)
}

fn check_ell_level_sets(a: &Analysis) -> Check {
    let values = distinct_f64(a);
    let tol = rounding_tolerance(a);
    let ell = a.ell();
    let by_value: BTreeMap<usize, usize> = a
        .assignment
        .table()
        .table()
        .filter_map(|(c, v)| {
            let i = values.binary_search_by(|w| w.total_cmp(&v.to_f64())).ok()?;
            Some((i, c))
        })
        .collect();
    let mut bad = 0usize;
    let mut first = None;
    for b in 0..a.grid.box_count() {
        let center = a.grid.center(BoxId(b));
        let v = ell.eval(&center);
        let got = round_to(&values, v, tol).and_then(|i| by_value.get(&i).copied());
        if got != a.assignment.recurrent_component(b) {
            bad += 1;
            first.get_or_insert_with(|| {
                json!({"box": b, "center": center, "ell": v, "component": a.assignment.recurrent_component(b)})
            });
        }
    }
    Check::new("ell_level_sets")
        .measure(bad as f64, 0.0)
        .samples(a.grid.box_count())
        .detail("rounded ell at box centers selects exactly each component's boxes")
        .counterexample(first)
        .judge(bad == 0)
}

fn recurrent_set(m: &MorseGraph) -> Vec<usize> {
    chain_recurrent_boxes(m)
}

fn check_time_scales(a: &Analysis) -> Result<[Check; 2], PipelineError> {
    let base = recurrent_set(&a.morse);
    let base_dist = box_distance_transform(&a.grid, &base);
    let mut worst = 0usize;
    let mut haus_bad = None;
    let mut coincide_bad: Option<Value> = None;
    let mut detail = Vec::new();
    for t in [0.5, 2.0] {
        let g = time_t_graph(&a.grid, &a.system, &a.config.transition, t)?;
        let m = strongly_connected_components(&g);
        let other = recurrent_set(&m);
        let other_dist = box_distance_transform(&a.grid, &other);
        let fwd = base.iter().map(|&b| other_dist[b]).max().unwrap_or(0);
        let back = other.iter().map(|&b| base_dist[b]).max().unwrap_or(0);
        worst = worst.max(fwd).max(back);
        detail.push(format!(
            "T={t}: {} boxes, distances {fwd}/{back}",
            other.len()
        ));
        if (fwd > 1 || back > 1) && haus_bad.is_none() {
            let far = base
                .iter()
                .find(|&&b| other_dist[b] > 1)
                .or_else(|| other.iter().find(|&&b| base_dist[b] > 1));
            haus_bad = Some(json!({"time": t, "box": far, "forward": fwd, "backward": back}));
        }

        // components at time t relate to the time-one components whose
        // boxes lie within one box width
        let one_comps: Vec<Vec<usize>> = a
            .morse
            .recurrent_components()
            .map(|c| a.morse.members(c).to_vec())
            .collect();
        let t_comps: Vec<Vec<usize>> = m
            .recurrent_components()
            .map(|c| m.members(c).to_vec())
            .collect();
        let one_dists: Vec<Vec<usize>> = one_comps
            .iter()
            .map(|c| box_distance_transform(&a.grid, c))
            .collect();
        let mut covered = vec![false; one_comps.len()];
        for (j, tc) in t_comps.iter().enumerate() {
            let near: Vec<usize> = one_dists
                .iter()
                .enumerate()
                .filter(|(_, d)| tc.iter().any(|&b| d[b] <= 1))
                .map(|(i, _)| i)
                .collect();
            for &i in &near {
                covered[i] = true;
            }
            if near.len() != 1 && coincide_bad.is_none() {
                coincide_bad = Some(
                    json!({"time": t, "component_boxes": tc, "time_one_matches": near.len(), "index": j}),
                );
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            coincide_bad.get_or_insert_with(
                || json!({"time": t, "unmatched_time_one_component": one_comps[i]}),
            );
        }
    }
    let haus_ok = haus_bad.is_none();
    let coincide_ok = coincide_bad.is_none();
    Ok([
        Check::new("time_scale_invariance")
            .measure(worst as f64, 1.0)
            .samples(2)
            .detail(format!(
                "one-sided box-width Hausdorff distances of recurrent sets vs T=1 ({})",
                detail.join("; ")
            ))
            .counterexample(haus_bad)
            .judge(haus_ok),
        Check::new("component_coincidence")
            .samples(2)
            .detail("each component at T=0.5 and T=2 lies within one box width of exactly one T=1 component, and every T=1 component is matched")
            .counterexample(coincide_bad)
            .judge(coincide_ok),
    ])
}

/// Sample points for the lift checks.
struct SampleSets {
    recurrent: Vec<(Vec<f64>, usize)>,
    transient: Vec<(Vec<f64>, usize)>,
}

fn sample_sets(a: &Analysis) -> Result<SampleSets, PipelineError> {
    let k = a.config.transition.samples_per_axis;
    let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed);
    rng.set_stream(STREAM_RECURRENT);
    let mut recurrent = Vec::new();
    let mut transient = Vec::new();
    let rec = recurrent_set(&a.morse);
    let dist = box_distance_transform(&a.grid, &rec);
    for b in a.grid.ids() {
        if a.graph.is_exiting(b.0) {
            continue;
        }
        if a.assignment.is_recurrent_box(b.0) {
            for p in a.grid.sample_points(b, k)? {
                recurrent.push((p, b.0));
            }
            let (lo, hi) = a.grid.bounds(b);
            for _ in 0..RANDOM_PER_RECURRENT_BOX {
                let p: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| rng.gen_range(*l..*h))
                    .collect();
                recurrent.push((p, b.0));
            }
        } else if dist[b.0] >= TRANSIENT_BOX_MARGIN {
            if a.grid.dim() == 1 {
                for p in a.grid.sample_points(b, k)? {
                    transient.push((p, b.0));
                }
            } else {
                transient.push((a.grid.center(b), b.0));
            }
        }
    }
    Ok(SampleSets {
        recurrent,
        transient,
    })
}

fn check_lift(a: &Analysis) -> Result<Vec<Check>, PipelineError> {
    let cfg = &a.config;
    let n = cfg.lift.quad_n;
    let spu = a.system.steps_per_unit().expect("ode mode");
    let (lo, hi) = a.assignment.value_range();
    let tol_q = cfg.lift.tolerance(hi - lo);
    let field = a.ell();
    let sets = sample_sets(a)?;

    let shift_samples: Vec<(f64, usize)> = CONSTANCY_SHIFTS
        .iter()
        .filter_map(|&s| aligned(s, n, spu).map(|k| (s, k)))
        .collect();
    let mut shifts = vec![0];
    shifts.extend(shift_samples.iter().map(|&(_, k)| k));
    let recurrent = lift_samples(a, &field, sets.recurrent, &shifts)?;
    let transient = lift_samples(a, &field, sets.transient, &[0, n])?;

    let mut checks = Vec::new();

    // mean-value bound over everything lifted
    let mut mv_worst = f64::NEG_INFINITY;
    let mut mv_bad = None;
    let mut mv_count = 0;
    let mv_tol = 4.0 * n as f64 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0);
    for s in recurrent.iter().chain(&transient) {
        for v in &s.values {
            mv_count += 1;
            let excess = (v.min_sample - v.value).max(v.value - v.max_sample);
            if excess > mv_worst {
                mv_worst = excess;
            }
            if excess > mv_tol && mv_bad.is_none() {
                mv_bad = Some(
                    json!({"point": point_json(&s.point), "lift": v.value, "min": v.min_sample, "max": v.max_sample}),
                );
            }
        }
    }
    let mv_ok = mv_bad.is_none();
    checks.push(
        Check::new("mean_value_bound")
            .measure(mv_worst.max(0.0), mv_tol)
            .samples(mv_count)
            .detail("min of sampled ell <= L <= max of sampled ell")
            .counterexample(mv_bad)
            .judge(mv_ok),
    );

    // deep-recurrent samples: orbit over [0, 2] stays in the sample's component
    let deep: Vec<&Lifted> = recurrent
        .iter()
        .filter(|s| {
            let c = a.assignment.component_of(s.origin);
            !s.exiting && s.visited.iter().all(|&b| a.assignment.component_of(b) == c)
        })
        .collect();

    // constancy
    let mut worst = 0.0f64;
    let mut bad = None;
    for s in &deep {
        let base = s.values[0].value;
        for (i, &(shift, _)) in shift_samples.iter().enumerate() {
            let d = (s.values[i + 1].value - base).abs();
            if d > worst {
                worst = d;
                if d > tol_q {
                    bad = Some(
                        json!({"point": point_json(&s.point), "shift": shift, "L": base, "L_shifted": s.values[i + 1].value}),
                    );
                }
            }
        }
    }
    let shift_list: Vec<String> = shift_samples.iter().map(|(s, _)| s.to_string()).collect();
    checks.push(if deep.is_empty() {
        Check::skipped("constancy_on_recurrent", "no deep-recurrent samples")
    } else {
        let ok = worst <= tol_q;
        Check::new("constancy_on_recurrent")
            .measure(worst, tol_q)
            .samples(deep.len())
            .detail(format!(
                "{} deep-recurrent samples, shifts {{{}}}",
                deep.len(),
                shift_list.join(", ")
            ))
            .counterexample(bad)
            .judge(ok)
    });

    // strict decrease on margin-qualified transient samples
    let rec = recurrent_set(&a.morse);
    let dist = box_distance_transform(&a.grid, &rec);
    let qualified: Vec<&Lifted> = transient
        .iter()
        .filter(|s| !s.exiting && s.visited.iter().all(|&b| dist[b] >= TRANSIENT_BOX_MARGIN))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut bad = None;
    for s in &qualified {
        let diff = s.values[1].value - s.values[0].value;
        if diff > worst {
            worst = diff;
        }
        if diff >= 0.0 && bad.is_none() {
            bad = Some(
                json!({"point": point_json(&s.point), "L": s.values[0].value, "L_after_one": s.values[1].value}),
            );
        }
    }
    checks.push(if qualified.is_empty() {
        Check::skipped(
            "strict_decrease_off_recurrent",
            "no transient samples keep two box widths from the recurrent set",
        )
    } else {
        let ok = bad.is_none();
        Check::new("strict_decrease_off_recurrent")
            .measure(worst, 0.0)
            .samples(qualified.len())
            .detail(format!(
                "L(phi^1 x) - L(x) < 0 on {} of {} transient samples whose orbit over [0,2] keeps two box widths from every recurrent box",
                qualified.len(),
                transient.len()
            ))
            .counterexample(bad)
            .judge(ok)
    });

    // image equality and level sets over deep samples
    let values = distinct_f64(a);
    let round_tol = rounding_tolerance(a);
    let table: BTreeMap<usize, f64> = a
        .assignment
        .table()
        .table()
        .map(|(c, v)| (c, v.to_f64()))
        .collect();
    let mut worst = 0.0f64;
    let mut image = BTreeSet::new();
    let mut bad_img = None;
    let mut misrounded = 0usize;
    let mut bad_level = None;
    let mut covered_boxes = BTreeSet::new();
    for s in &deep {
        let c = a.assignment.component_of(s.origin);
        let target = table[&c];
        let l = s.values[0].value;
        let d = (l - target).abs();
        worst = worst.max(d);
        if d > tol_q && bad_img.is_none() {
            bad_img =
                Some(json!({"point": point_json(&s.point), "L": l, "component_value": target}));
        }
        let rounded = round_to(&values, l, round_tol);
        if let Some(i) = rounded {
            image.insert(values[i].to_bits());
        }
        if rounded.map(|i| values[i]) != Some(target) {
            misrounded += 1;
            bad_level.get_or_insert_with(|| {
                json!({"point": point_json(&s.point), "L": l, "rounded": rounded.map(|i| values[i]), "component_value": target})
            });
        }
        covered_boxes.insert(s.origin);
    }
    let table_set: BTreeSet<u64> = table.values().map(|v| v.to_bits()).collect();
    let missing: Vec<f64> = table_set
        .difference(&image)
        .map(|&b| f64::from_bits(b))
        .collect();
    let extra: Vec<f64> = image
        .difference(&table_set)
        .map(|&b| f64::from_bits(b))
        .collect();
    let rec_boxes = rec.len();
    if deep.is_empty() {
        checks.push(Check::skipped(
            "image_equality",
            "no deep-recurrent samples",
        ));
        checks.push(Check::skipped(
            "lift_level_sets",
            "no deep-recurrent samples",
        ));
    } else {
        let ok = bad_img.is_none() && missing.is_empty() && extra.is_empty();
        let cex = bad_img.or_else(|| {
            (!missing.is_empty() || !extra.is_empty()).then(
                || json!({"values_without_deep_samples": missing, "values_not_in_table": extra}),
            )
        });
        checks.push(
            Check::new("image_equality")
                .measure(worst, tol_q)
                .samples(deep.len())
                .detail(format!(
                    "rounded L over deep-recurrent samples gives {} of {} component values",
                    table_set.len() - missing.len(),
                    table_set.len()
                ))
                .counterexample(cex)
                .judge(ok),
        );
        checks.push(
            Check::new("lift_level_sets")
                .measure(misrounded as f64, 0.0)
                .samples(deep.len())
                .detail(format!(
                    "rounding tolerance {round_tol:e}; deep samples cover {} of {rec_boxes} recurrent boxes",
                    covered_boxes.len()
                ))
                .counterexample(bad_level)
                .judge(misrounded == 0),
        );
    }

    checks.extend(check_shift(a, &field, tol_q)?);
    checks.push(check_probe(a, &field)?);
    Ok(checks)
}

fn check_shift<F: ScalarField + Sync>(
    a: &Analysis,
    field: &F,
    tol_q: f64,
) -> Result<[Check; 2], PipelineError> {
    let n = a.config.lift.quad_n;
    let spu = a.system.steps_per_unit().expect("ode mode") as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed);
    rng.set_stream(STREAM_SHIFT);
    // shifts lying on the quadrature grid of N (hence 2N) and on the integrator grid
    let grid = gcd(n, spu);
    let dom = a.system.domain();
    let trials: Vec<(Vec<f64>, f64)> = (0..SHIFT_TRIALS)
        .map(|_| {
            let x: Vec<f64> = dom
                .lo()
                .iter()
                .zip(dom.hi())
                .map(|(l, h)| rng.gen_range(*l..*h))
                .collect();
            let s = rng.gen_range(1..=grid) as f64 / grid as f64;
            (x, s)
        })
        .collect();
    let doubled = LiftConfig { quad_n: 2 * n };
    let results: Vec<(f64, f64)> = trials
        .par_iter()
        .map(|(x, s)| {
            let d1 = shift_decomposition(field, &a.system, x, *s, &a.config.lift)?.discrepancy();
            let d2 = shift_decomposition(field, &a.system, x, *s, &doubled)?.discrepancy();
            Ok((d1, d2))
        })
        .collect::<Result<_, lyapgen_core::LiftError>>()?;

    let mut worst = 0.0f64;
    let mut bad = None;
    for ((x, s), (d1, _)) in trials.iter().zip(&results) {
        if *d1 > worst {
            worst = *d1;
        }
        if *d1 > tol_q && bad.is_none() {
            bad = Some(json!({"point": point_json(x), "shift": s, "discrepancy": d1}));
        }
    }
    let ok = bad.is_none();
    let identity = Check::new("shift_identity")
        .measure(worst, tol_q)
        .samples(trials.len())
        .detail("|L(phi^s x) - (tail + wrapped)| over random (x, s)")
        .counterexample(bad)
        .judge(ok);

    let mean =
        |f: fn(&(f64, f64)) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    let (m1, m2) = (mean(|r| r.0), mean(|r| r.1));
    let floor = roundoff_floor(a, n);
    let (ok, detail) = if m1 <= floor && m2 <= floor {
        (
            true,
            format!("both discrepancies at the summation roundoff floor {floor:e} (N = {n}: {m1:e}, 2N: {m2:e})"),
        )
    } else {
        (
            m2 * SHIFT_SHRINK <= m1,
            format!("mean discrepancy N = {n}: {m1:e}, 2N: {m2:e}"),
        )
    };
    let ratio = if m2 > 0.0 { m1 / m2 } else { f64::INFINITY };
    let convergence = Check {
        measured: ratio.is_finite().then_some(ratio),
        tolerance: Some(SHIFT_SHRINK),
        ..Check::new("shift_convergence")
            .samples(trials.len())
            .detail(detail)
            .counterexample((!ok).then(|| json!({"mean_n": m1, "mean_2n": m2})))
            .judge(ok)
    };
    Ok([identity, convergence])
}

/// Largest rounding error of summing `2N` values of the assignment's range.
fn roundoff_floor(a: &Analysis, n: usize) -> f64 {
    let (_, hi) = a.assignment.value_range();
    4.0 * (2 * n) as f64 * f64::EPSILON * hi.max(1.0)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_probe<F: ScalarField + Sync>(a: &Analysis, field: &F) -> Result<Check, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed);
    rng.set_stream(STREAM_PROBE);
    let dom = a.system.domain();
    let r = a.grid.widths().iter().cloned().fold(0.0, f64::max);
    let centers: Vec<(Vec<f64>, u64)> = (0..PROBE_CENTERS)
        .map(|_| {
            let x = dom
                .lo()
                .iter()
                .zip(dom.hi())
                .map(|(l, h)| rng.gen_range(*l..*h))
                .collect();
            (x, rng.gen())
        })
        .collect();
    let probes = centers
        .par_iter()
        .map(|(x, seed)| {
            let mut r2 = ChaCha8Rng::seed_from_u64(*seed);
            continuity_probe(
                field,
                &a.system,
                x,
                r,
                PROBE_SAMPLES,
                &a.config.lift,
                &mut r2,
            )
            .map(|p| (x.clone(), p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tol = 3.0 * a.assignment.max_value_gap().unwrap_or(0.0);
    let (x, worst) = probes
        .iter()
        .max_by(|a, b| a.1.modulus.total_cmp(&b.1.modulus))
        .expect("at least one probe");
    let ok = worst.modulus <= tol;
    Ok(Check::new("continuity_probe")
        .measure(worst.modulus, tol)
        .samples(PROBE_CENTERS * PROBE_SAMPLES)
        .detail(format!(
            "{PROBE_CENTERS} random centers, radius {r} (one box width), tolerance three times the largest gap between assignment values"
        ))
        .counterexample((!ok).then(|| json!({"center": x, "argmax": worst.argmax, "modulus": worst.modulus})))
        .judge(ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lyapgen_core::{build_grid, Rect};

    #[test]
    fn distance_transform_is_chebyshev() {
        let grid = build_grid(Rect::new(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(), 3).unwrap();
        let src = grid.id_of(&[2, 5]).0;
        let d = box_distance_transform(&grid, &[src]);
        for b in grid.ids() {
            assert_eq!(d[b.0], grid.box_distance(b, BoxId(src)));
        }
        assert!(box_distance_transform(&grid, &[])
            .iter()
            .all(|&v| v == usize::MAX));
    }

    #[test]
    fn rounding_picks_nearest_within_tolerance() {
        let v = [0.0, 0.25, 1.0];
        assert_eq!(round_to(&v, 0.1, 0.125), Some(0));
        assert_eq!(round_to(&v, 0.2, 0.125), Some(1));
        assert_eq!(round_to(&v, 0.9, 0.125), Some(2));
        assert_eq!(round_to(&v, 0.6, 0.125), None);
        assert_eq!(round_to(&v, 7.0, f64::INFINITY), Some(2));
    }

    #[test]
    fn shift_alignment() {
        assert_eq!(aligned(0.25, 256, 256), Some(64));
        assert_eq!(aligned(1.0, 16, 256), Some(16));
        assert_eq!(aligned(0.25, 18, 256), None);
        assert_eq!(aligned(0.5, 256, 3), None);
        assert_eq!(gcd(256, 96), 32);
    }

    #[test]
    fn map_mode_lists_every_check() {
        let cfg = crate::config::builtin_config("halfmap")
            .resolve(&crate::config::Overrides::default())
            .unwrap();
        let a = Analysis::run(cfg).unwrap();
        let r = verify(&a).unwrap();
        let names: Vec<&str> = r.checks.iter().map(|c| c.name).collect();
        assert_eq!(names, CHECK_NAMES.to_vec());
        for c in &r.checks[6..] {
            assert_eq!(c.status, Status::Skipped);
            assert_eq!(c.reason.as_deref(), Some("map mode"));
        }
        assert!(r.passed());
        assert_eq!(r.metadata.h, None);
    }
}
