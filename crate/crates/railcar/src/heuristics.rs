//! Language-preserving transformations on the NFA representation.
//!
//! One global pass and four local passes, plus the multi-round driver:
//!
//! * `nesting` — splice a nonterminal's digraph in place of an edge
//!   referencing it, subject to the size threshold `k`
//! * `loopback` — turn a tail self-reference ending at t′ into a
//!   backward ε-edge, creating the diagram's repetition loop
//! * `squish` (forward/backward) — merge same-labeled edges sharing a
//!   source (resp. destination) through a fresh vertex and ε-edges
//! * `eps_removal` — contract redundant ε-edges by merging endpoints
//! * `pinch` — replace an all-ε complete bipartite subgraph with a
//!   single crossing vertex (a drawing optimization; symbol-neutral)
//!
//! Every pass leaves the generated language unchanged; the oracle
//! checks this on fixtures in the test suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::nfa::{prune_unreferenced, EdgeId, Label, NfaSystem, StDigraph, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PassKind {
    Loopback,
    Nesting,
    SquishForward,
    SquishBackward,
    EpsRemoval,
    Pinch,
}

impl PassKind {
    pub const ALL: [PassKind; 6] = [
        PassKind::Loopback,
        PassKind::Nesting,
        PassKind::SquishForward,
        PassKind::SquishBackward,
        PassKind::EpsRemoval,
        PassKind::Pinch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassKind::Loopback => "loopback",
            PassKind::Nesting => "nesting",
            PassKind::SquishForward => "squish_fwd",
            PassKind::SquishBackward => "squish_bwd",
            PassKind::EpsRemoval => "eps_removal",
            PassKind::Pinch => "pinch",
        }
    }
}

impl fmt::Display for PassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PassKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PassKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown pass `{s}` (expected one of: loopback, nesting, squish_fwd, squish_bwd, eps_removal, pinch)"))
    }
}

/// Optimizer knobs. `nesting_threshold_k` bounds the symbol count of
/// any graph produced by nesting (strictly less than k).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimizerConfig {
    pub nesting_threshold_k: usize,
    pub max_rounds: usize,
    pub passes: Vec<PassKind>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { nesting_threshold_k: 30, max_rounds: 10, passes: PassKind::ALL.to_vec() }
    }
}

/// What one pass execution did to the system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassReport {
    pub pass: PassKind,
    pub applications: usize,
    pub symbols_before: usize,
    pub symbols_after: usize,
    pub graphs_before: usize,
    pub graphs_after: usize,
}

impl fmt::Display for PassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pass={} applications={} symbols={}->{} graphs={}->{}",
            self.pass,
            self.applications,
            self.symbols_before,
            self.symbols_after,
            self.graphs_before,
            self.graphs_after
        )
    }
}

/// Tail recursion loop back. When `owner` labels exactly one edge of
/// its own digraph and that edge ends at t′, retarget it to s′,
/// relabel ε, and mark it reversed. Skipped when s′/t′ are not unique
/// or when the edge is t′'s only forward in-edge (t′ would become
/// unreachable, which only happens for empty-language tails).
pub fn apply_loopback(d: &StDigraph, owner: &str) -> (StDigraph, bool) {
    let self_edges: Vec<EdgeId> = d
        .edges()
        .filter(|e| matches!(&e.label, Label::Nonterm(n) if n == owner))
        .map(|e| e.id)
        .collect();
    let [edge_id] = self_edges.as_slice() else { return (d.clone(), false) };
    let (Some(sp), Some(tp)) = (d.s_prime(), d.t_prime()) else { return (d.clone(), false) };
    let edge = d.edge(*edge_id).expect("edge exists");
    if edge.to != tp {
        return (d.clone(), false);
    }
    if d.in_edges(tp).filter(|e| e.id != *edge_id && !e.reversed).count() == 0 {
        return (d.clone(), false);
    }
    let mut out = d.clone();
    let e = out.edge_mut(*edge_id).expect("edge exists");
    e.to = sp;
    e.label = Label::Epsilon;
    e.reversed = true;
    out.dedup_edges();
    (out, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SquishDirection {
    Forward,
    Backward,
}

/// Squish heuristic: every maximal group of two or more non-reversed
/// edges sharing `(source, label)` — `(destination, label)` for the
/// backward direction — with label ≠ ε collapses into one labeled edge
/// through a fresh vertex, fanned out by ε-edges. Returns the number
/// of groups collapsed.
pub fn apply_squish(d: &StDigraph, direction: SquishDirection) -> (StDigraph, usize) {
    let mut out = d.clone();
    let mut applications = 0;
    loop {
        let mut groups: BTreeMap<(VertexId, Label), Vec<EdgeId>> = BTreeMap::new();
        for e in out.edges().filter(|e| !e.reversed && !e.label.is_epsilon()) {
            let anchor = match direction {
                SquishDirection::Forward => e.from,
                SquishDirection::Backward => e.to,
            };
            groups.entry((anchor, e.label.clone())).or_default().push(e.id);
        }
        let Some(((anchor, label), members)) =
            groups.into_iter().find(|(_, members)| members.len() >= 2)
        else {
            break;
        };
        let w = out.fresh_vertex();
        let mut far_ends = Vec::new();
        for id in members {
            let e = out.remove_edge(id).expect("group member exists");
            far_ends.push(match direction {
                SquishDirection::Forward => e.to,
                SquishDirection::Backward => e.from,
            });
        }
        match direction {
            SquishDirection::Forward => {
                out.add_edge(anchor, w, label, false);
                for v in far_ends {
                    out.add_edge(w, v, Label::Epsilon, false);
                }
            }
            SquishDirection::Backward => {
                out.add_edge(w, anchor, label, false);
                for u in far_ends {
                    out.add_edge(u, w, Label::Epsilon, false);
                }
            }
        }
        applications += 1;
    }
    (out, applications)
}

/// ε-transition removal: an ε-edge `(u, v)` with `u≠s`, `v≠t`, not
/// reversed, that is the only outgoing edge of `u` or the only
/// incoming edge of `v` (counting reversed edges by their stored
/// direction) is contracted by merging its endpoints. Repeats in
/// ascending edge-id order until no edge qualifies.
pub fn apply_eps_removal(d: &StDigraph) -> (StDigraph, usize) {
    let mut out = d.clone();
    let mut removed = 0;
    loop {
        let candidate = out.edges().find(|e| {
            e.label.is_epsilon()
                && !e.reversed
                && e.from != out.s
                && e.to != out.t
                && (out.out_edges(e.from).count() == 1 || out.in_edges(e.to).count() == 1)
        });
        let Some(e) = candidate else { break };
        let (id, u, v) = (e.id, e.from, e.to);
        out.remove_edge(id);
        let (keep, drop) = if u.0 <= v.0 { (u, v) } else { (v, u) };
        out.merge_vertices(keep, drop);
        // the merged pair never includes s or t, so their degrees are
        // untouched
        debug_assert!(out.in_edges(out.s).next().is_none());
        debug_assert!(out.out_edges(out.t).next().is_none());
        removed += 1;
    }
    (out, removed)
}

/// Confluent pinch: a maximal pair of vertex sets `U`, `V` (each of
/// size ≥ 2) whose every pair `(u, v)` carries a non-reversed ε-edge
/// is rerouted through a fresh crossing vertex: the |U|·|V| direct
/// edges become |U|+|V| star edges. K₂,₂ ties the edge count but still
/// removes a crossing, so it is pinched too.
pub fn apply_pinch(d: &StDigraph) -> (StDigraph, usize) {
    let mut out = d.clone();
    let mut applications = 0;
    'search: loop {
        let mut out_eps: BTreeMap<VertexId, BTreeSet<VertexId>> = BTreeMap::new();
        let mut in_eps: BTreeMap<VertexId, BTreeSet<VertexId>> = BTreeMap::new();
        for e in out.edges().filter(|e| e.label.is_epsilon() && !e.reversed) {
            out_eps.entry(e.from).or_default().insert(e.to);
            in_eps.entry(e.to).or_default().insert(e.from);
        }
        for (&seed_u, targets) in &out_eps {
            if targets.len() < 2 {
                continue;
            }
            let targets: Vec<VertexId> = targets.iter().copied().collect();
            for i in 0..targets.len() {
                for j in i + 1..targets.len() {
                    let mut v_set = BTreeSet::from([targets[i], targets[j]]);
                    let mut u_set: BTreeSet<VertexId> = BTreeSet::new();
                    // grow (U, V) to the maximal biclique containing the seed
                    loop {
                        let new_u: BTreeSet<VertexId> = out_eps
                            .iter()
                            .filter(|(_, outs)| v_set.iter().all(|v| outs.contains(v)))
                            .map(|(&u, _)| u)
                            .collect();
                        let new_v: BTreeSet<VertexId> = in_eps
                            .iter()
                            .filter(|(_, ins)| new_u.iter().all(|u| ins.contains(u)))
                            .map(|(&v, _)| v)
                            .collect();
                        if new_u == u_set && new_v == v_set {
                            break;
                        }
                        u_set = new_u;
                        v_set = new_v;
                    }
                    if u_set.len() < 2 || v_set.len() < 2 {
                        continue;
                    }
                    if u_set.len() * v_set.len() < u_set.len() + v_set.len() {
                        continue;
                    }
                    debug_assert!(u_set.contains(&seed_u));
                    let doomed: Vec<EdgeId> = out
                        .edges()
                        .filter(|e| {
                            e.label.is_epsilon()
                                && !e.reversed
                                && u_set.contains(&e.from)
                                && v_set.contains(&e.to)
                        })
                        .map(|e| e.id)
                        .collect();
                    let w = out.fresh_vertex();
                    for id in doomed {
                        out.remove_edge(id);
                    }
                    for &u in &u_set {
                        out.add_edge(u, w, Label::Epsilon, false);
                    }
                    for &v in &v_set {
                        out.add_edge(w, v, Label::Epsilon, false);
                    }
                    applications += 1;
                    continue 'search;
                }
            }
        }
        break;
    }
    (out, applications)
}

/// Nonterminal nesting: repeatedly splices the digraph `H` of a
/// nonterminal `A` into a graph `G` at an edge labeled `A`, then drops
/// `H` once nothing references `A`. A candidate must satisfy: `A` is
/// not the start symbol; `G` and `H` are distinct; when `H` has more
/// than one labeled edge, `A` occurs exactly once in the whole system;
/// and the post-nesting symbol count of `G` stays below `k`. Graphs
/// that reference themselves are never spliced (splicing them cannot
/// retire the reference). Smallest `H` first, ties by name, then host
/// name, then edge id.
pub fn apply_nesting(sys: &NfaSystem, cfg: &OptimizerConfig) -> (NfaSystem, PassReport) {
    let mut out = sys.clone();
    let symbols_before = out.total_symbols();
    let graphs_before = out.graphs.len();
    let mut applications = 0;
    // reference cycles can feed each other splices without ever retiring
    // a graph; cap the pass rather than risk non-termination
    let cap = 4 * (symbols_before + graphs_before) + 64;

    while applications < cap {
        let refs: BTreeMap<String, usize> =
            out.reference_counts().into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        let mut best: Option<(usize, String, String, EdgeId)> = None;
        for (gname, graph) in &out.graphs {
            let g_symbols = graph.count_symbols();
            for edge in graph.edges() {
                let Label::Nonterm(a) = &edge.label else { continue };
                if a == &out.start || a == gname {
                    continue;
                }
                let h = &out.graphs[a.as_str()];
                if h.edges().any(|e| matches!(&e.label, Label::Nonterm(n) if n == a)) {
                    continue;
                }
                let h_symbols = h.count_symbols();
                if h_symbols > 1 && refs.get(a).copied().unwrap_or(0) != 1 {
                    continue;
                }
                if g_symbols - 1 + h_symbols >= cfg.nesting_threshold_k {
                    continue;
                }
                let key = (h_symbols, a.clone(), gname.clone(), edge.id);
                if best.as_ref().map_or(true, |b| key < *b) {
                    best = Some(key);
                }
            }
        }
        let Some((_, a, gname, edge_id)) = best else { break };
        splice(&mut out, &gname, edge_id, &a);
        applications += 1;
        if !out.reference_counts().contains_key(a.as_str()) {
            out.graphs.shift_remove(&a);
        }
    }

    let report = PassReport {
        pass: PassKind::Nesting,
        applications,
        symbols_before,
        symbols_after: out.total_symbols(),
        graphs_before,
        graphs_after: out.graphs.len(),
    };
    (out, report)
}

/// Replaces edge `edge_id` of `gname` with a copy of `graphs[a]`,
/// identifying the copy's s with the edge source and t with the edge
/// target. The copy's sentinel ε-edges become interior edges.
fn splice(sys: &mut NfaSystem, gname: &str, edge_id: EdgeId, a: &str) {
    let h = sys.graphs[a].clone();
    let g = sys.graphs.get_mut(gname).expect("host graph exists");
    let e = g.remove_edge(edge_id).expect("spliced edge exists");

    let mut vmap: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    vmap.insert(h.s, e.from);
    vmap.insert(h.t, e.to);
    for v in h.vertices() {
        if v != h.s && v != h.t {
            vmap.insert(v, g.fresh_vertex());
        }
    }
    for edge in h.edges() {
        g.add_edge(vmap[&edge.from], vmap[&edge.to], edge.label.clone(), edge.reversed);
    }
}

/// Runs `cfg.passes` in order as one round and repeats rounds until a
/// round changes nothing or `max_rounds` is reached. Returns the
/// optimized system plus one report per executed pass.
pub fn optimize(sys: &NfaSystem, cfg: &OptimizerConfig) -> (NfaSystem, Vec<PassReport>) {
    let mut out = sys.clone();
    let mut reports = Vec::new();
    for _ in 0..cfg.max_rounds {
        let mut changed = false;
        for &pass in &cfg.passes {
            let symbols_before = out.total_symbols();
            let graphs_before = out.graphs.len();
            let applications = match pass {
                PassKind::Nesting => {
                    let (next, report) = apply_nesting(&out, cfg);
                    out = next;
                    changed |= report.applications > 0;
                    reports.push(report);
                    continue;
                }
                PassKind::Loopback => for_each_graph(&mut out, |name, g| {
                    let (next, applied) = apply_loopback(g, name);
                    (next, applied as usize)
                }),
                PassKind::SquishForward => {
                    for_each_graph(&mut out, |_, g| apply_squish(g, SquishDirection::Forward))
                }
                PassKind::SquishBackward => {
                    for_each_graph(&mut out, |_, g| apply_squish(g, SquishDirection::Backward))
                }
                PassKind::EpsRemoval => for_each_graph(&mut out, |_, g| apply_eps_removal(g)),
                PassKind::Pinch => for_each_graph(&mut out, |_, g| apply_pinch(g)),
            };
            let report = PassReport {
                pass,
                applications,
                symbols_before,
                symbols_after: out.total_symbols(),
                graphs_before,
                graphs_after: out.graphs.len(),
            };
            debug_assert!(report.symbols_after <= report.symbols_before);
            changed |= applications > 0;
            reports.push(report);
        }
        if !changed {
            break;
        }
    }
    prune_unreferenced(&mut out);
    (out, reports)
}

fn for_each_graph(
    sys: &mut NfaSystem,
    mut f: impl FnMut(&str, &StDigraph) -> (StDigraph, usize),
) -> usize {
    let names: Vec<String> = sys.graphs.keys().cloned().collect();
    let mut total = 0;
    for name in names {
        let (next, count) = f(&name, &sys.graphs[name.as_str()]);
        if count > 0 {
            total += count;
            sys.graphs.insert(name, next);
        }
    }
    total
}
