//! Discrete chain recurrence on a transition graph.
//!
//! Chain transitive components are the recurrent strongly connected
//! components: those with at least two boxes, or a single box carrying a
//! self-loop. The condensation DAG of all components is the Morse graph.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::transition::TransitionGraph;

/// Condensation of a transition graph with recurrence flags.
///
/// Component ids follow a deterministic topological order: components are
/// sorted by layer (longest path to a sink) descending, ties broken by the
/// smallest member box id. Every DAG edge therefore goes from a smaller to a
/// larger component id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorseGraph {
    component_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    recurrent: Vec<bool>,
    dag: Vec<Vec<usize>>,
    layer: Vec<usize>,
    exiting: Vec<bool>,
}

impl MorseGraph {
    pub fn component_count(&self) -> usize {
        self.members.len()
    }

    pub fn node_count(&self) -> usize {
        self.component_of.len()
    }

    pub fn component_of(&self, node: usize) -> usize {
        self.component_of[node]
    }

    /// Sorted member boxes of component `c`.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn is_recurrent(&self, c: usize) -> bool {
        self.recurrent[c]
    }

    /// Sorted, deduplicated successor components.
    pub fn successors(&self, c: usize) -> &[usize] {
        &self.dag[c]
    }

    pub fn layer(&self, c: usize) -> usize {
        self.layer[c]
    }

    /// Topological order of the condensation (the identity by construction).
    pub fn topological_order(&self) -> impl Iterator<Item = usize> {
        0..self.component_count()
    }

    pub fn is_exiting(&self, node: usize) -> bool {
        self.exiting[node]
    }

    /// Recurrent components in topological order.
    pub fn recurrent_components(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.component_count()).filter(move |&c| self.recurrent[c])
    }

    pub fn recurrent_count(&self) -> usize {
        self.recurrent.iter().filter(|r| **r).count()
    }

    pub fn is_recurrent_node(&self, node: usize) -> bool {
        self.recurrent[self.component_of[node]]
    }

    /// Recurrent components holding at least one exiting box.
    pub fn exiting_recurrent_components(&self) -> Vec<usize> {
        self.recurrent_components()
            .filter(|&c| self.members[c].iter().any(|&b| self.exiting[b]))
            .collect()
    }

    /// DOT rendering: one node per component, labeled `Ci (size, kind)`.
    pub fn to_dot(&self) -> alloc::string::String {
        let mut s = alloc::string::String::from("digraph morse {\n  rankdir=TB;\n");
        for c in 0..self.component_count() {
            let (kind, style) = if self.recurrent[c] {
                ("recurrent", ", style=filled, fillcolor=lightblue")
            } else {
                ("transient", "")
            };
            let _ = writeln!(
                s,
                "  C{c} [label=\"C{c} ({}, {kind})\"{style}];",
                self.members[c].len()
            );
        }
        for c in 0..self.component_count() {
            for &d in &self.dag[c] {
                let _ = writeln!(s, "  C{c} -> C{d};");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Tarjan's algorithm, iterative. Returns components in the order Tarjan
/// completes them, which is a reverse topological order of the condensation.
fn tarjan(g: &TransitionGraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = g.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// Strongly connected components of `g` assembled into a [`MorseGraph`].
pub fn strongly_connected_components(g: &TransitionGraph) -> MorseGraph {
    let n = g.node_count();
    let raw = tarjan(g);
    let mut raw_of = vec![0usize; n];
    for (c, comp) in raw.iter().enumerate() {
        for &v in comp {
            raw_of[v] = c;
        }
    }

    // Tarjan emits sinks first, so every successor of raw component c has a
    // smaller raw index and is already layered.
    let mut raw_dag: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
    let mut raw_layer = vec![0usize; raw.len()];
    let mut raw_recurrent = vec![false; raw.len()];
    for (c, comp) in raw.iter().enumerate() {
        let mut succ = Vec::new();
        for &v in comp {
            for &w in g.successors(v) {
                let d = raw_of[w];
                if d == c {
                    raw_recurrent[c] = true;
                } else {
                    succ.push(d);
                }
            }
        }
        succ.sort_unstable();
        succ.dedup();
        raw_layer[c] = succ.iter().map(|&d| raw_layer[d] + 1).max().unwrap_or(0);
        raw_dag[c] = succ;
    }

    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by_key(|&c| (core::cmp::Reverse(raw_layer[c]), raw[c][0]));
    let mut new_id = vec![0usize; raw.len()];
    for (id, &c) in order.iter().enumerate() {
        new_id[c] = id;
    }

    let component_of = raw_of.iter().map(|&c| new_id[c]).collect();
    let mut members = vec![Vec::new(); raw.len()];
    let mut recurrent = vec![false; raw.len()];
    let mut dag = vec![Vec::new(); raw.len()];
    let mut layer = vec![0; raw.len()];
    for (c, comp) in raw.into_iter().enumerate() {
        let id = new_id[c];
        let mut succ: Vec<usize> = raw_dag[c].iter().map(|&d| new_id[d]).collect();
        succ.sort_unstable();
        dag[id] = succ;
        layer[id] = raw_layer[c];
        recurrent[id] = raw_recurrent[c];
        members[id] = comp;
    }
    MorseGraph {
        component_of,
        members,
        recurrent,
        dag,
        layer,
        exiting: g.exiting_flags().to_vec(),
    }
}

/// Union of the recurrent components' boxes, sorted.
pub fn chain_recurrent_boxes(m: &MorseGraph) -> Vec<usize> {
    let mut out: Vec<usize> = m
        .recurrent_components()
        .flat_map(|c| m.members(c).iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Recurrent components' box sets, in topological order.
pub fn chain_transitive_components(m: &MorseGraph) -> Vec<Vec<usize>> {
    m.recurrent_components()
        .map(|c| m.members(c).to_vec())
        .collect()
}

/// Brute-force recurrence test: does `b` lie on a directed cycle?
///
/// Breadth-first search from the successors of `b` looking for `b`.
/// Independent of the SCC machinery; intended for graphs of at most ~10^4
/// nodes.
pub fn epsilon_chain_oracle(g: &TransitionGraph, b: usize) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::new();
    for &w in g.successors(b) {
        if w == b {
            return true;
        }
        if !seen[w] {
            seen[w] = true;
            queue.push_back(w);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in g.successors(v) {
            if w == b {
                return true;
            }
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> TransitionGraph {
        TransitionGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn three_cycle_is_one_recurrent_component() {
        let m = strongly_connected_components(&graph(3, &[(0, 1), (1, 2), (2, 0)]));
        assert_eq!(m.component_count(), 1);
        assert!(m.is_recurrent(0));
        assert_eq!(m.members(0), &[0, 1, 2]);
        assert_eq!(chain_recurrent_boxes(&m), vec![0, 1, 2]);
    }

    #[test]
    fn chain_has_no_recurrence() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let m = strongly_connected_components(&g);
        assert_eq!(m.component_count(), 3);
        assert_eq!(m.recurrent_count(), 0);
        assert!(chain_recurrent_boxes(&m).is_empty());
        assert!((0..3).all(|b| !epsilon_chain_oracle(&g, b)));
        // layers: 0 -> 1 -> 2 has 2, 1, 0
        assert_eq!(
            (0..3).map(|c| m.layer(c)).collect::<Vec<_>>(),
            vec![2, 1, 0]
        );
    }

    #[test]
    fn self_loop_makes_singleton_recurrent() {
        let g = graph(2, &[(0, 0), (0, 1)]);
        let m = strongly_connected_components(&g);
        assert!(m.is_recurrent(m.component_of(0)));
        assert!(!m.is_recurrent(m.component_of(1)));
        assert!(epsilon_chain_oracle(&g, 0));
        assert!(!epsilon_chain_oracle(&g, 1));
    }

    #[test]
    fn deterministic_topological_ids() {
        // two sinks {4} and {2,3} at layer 0, source 0 -> 1 -> both sinks
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 2), (1, 4), (4, 4)]);
        let m = strongly_connected_components(&g);
        let comps: Vec<_> = (0..m.component_count())
            .map(|c| m.members(c).to_vec())
            .collect();
        assert_eq!(comps, vec![vec![0], vec![1], vec![2, 3], vec![4]]);
        for c in 0..m.component_count() {
            for &d in m.successors(c) {
                assert!(d > c && m.layer(c) > m.layer(d));
            }
        }
        assert_eq!(chain_transitive_components(&m), vec![vec![2, 3], vec![4]]);
        let dot = m.to_dot();
        assert!(dot.contains("C2 [label=\"C2 (2, recurrent)\""));
        assert!(dot.contains("C0 -> C1;"));
    }

    #[test]
    fn deep_path_does_not_overflow() {
        let n = 200_000;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).chain([(n - 1, 0)]).collect();
        let m = strongly_connected_components(&graph(n, &edges));
        assert_eq!(m.component_count(), 1);
    }

    #[test]
    fn exiting_recurrent_components_are_reported() {
        let g = TransitionGraph::from_adjacency(
            vec![vec![0], vec![1], vec![0]],
            vec![false, true, true],
        )
        .unwrap();
        let m = strongly_connected_components(&g);
        let ex = m.exiting_recurrent_components();
        assert_eq!(ex, vec![m.component_of(1)]);
    }

    fn reachability(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; n]; n];
        for &(a, b) in edges {
            r[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if r[i][k] {
                    for j in 0..n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
    }

    proptest! {
        #[test]
        fn scc_matches_floyd_warshall((n, edges) in arb_graph(64)) {
            let g = graph(n, &edges);
            let m = strongly_connected_components(&g);
            let r = reachability(n, &edges);
            for a in 0..n {
                for b in 0..n {
                    let same = a == b || (r[a][b] && r[b][a]);
                    prop_assert_eq!(m.component_of(a) == m.component_of(b), same);
                }
                prop_assert_eq!(m.is_recurrent_node(a), r[a][a]);
                prop_assert_eq!(epsilon_chain_oracle(&g, a), r[a][a]);
            }
            for c in 0..m.component_count() {
                for &d in m.successors(c) {
                    prop_assert!(d > c);
                    prop_assert!(m.layer(c) > m.layer(d));
                }
            }
        }
    }
}
