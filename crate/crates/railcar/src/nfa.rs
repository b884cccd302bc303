//! The NFA representation: one labeled st-digraph per nonterminal.
//!
//! Each digraph has a single source `s` and sink `t` joined to the rule
//! structure by two sentinel ε-edges `s→s′` and `t′→t`. Edges carry a
//! terminal, a nonterminal reference, or ε; edges flagged `reversed`
//! are the loop-back edges and are stored in their actual (backward)
//! direction. Ignoring reversed edges every digraph is acyclic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use indexmap::IndexMap;

use crate::grammar::{Grammar, Production, Symbol, Terminal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

/// Edge label: ε, a terminal symbol, or a nonterminal reference.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Epsilon,
    Term(Terminal),
    Nonterm(String),
}

impl Label {
    pub fn is_epsilon(&self) -> bool {
        matches!(self, Label::Epsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub label: Label,
    pub reversed: bool,
}

/// A labeled digraph with distinguished source `s` and sink `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StDigraph {
    vertices: BTreeSet<VertexId>,
    edges: BTreeMap<EdgeId, Edge>,
    pub s: VertexId,
    pub t: VertexId,
    next_vertex: u32,
    next_edge: u32,
}

impl StDigraph {
    /// Empty digraph holding only `s` and `t`. Callers are responsible
    /// for wiring them up before the graph is used.
    pub fn new(s: VertexId, t: VertexId, next_vertex: u32, next_edge: u32) -> Self {
        let mut vertices = BTreeSet::new();
        vertices.insert(s);
        vertices.insert(t);
        StDigraph { vertices, edges: BTreeMap::new(), s, t, next_vertex, next_edge }
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge> {
        self.edges.values().filter(move |e| e.from == v)
    }

    pub fn in_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge> {
        self.edges.values().filter(move |e| e.to == v)
    }

    pub fn fresh_vertex(&mut self) -> VertexId {
        let v = VertexId(self.next_vertex);
        self.next_vertex += 1;
        self.vertices.insert(v);
        v
    }

    /// Inserts an edge unless an identical `(from, to, label, reversed)`
    /// edge already exists; returns the id actually in the graph.
    pub fn add_edge(&mut self, from: VertexId, to: VertexId, label: Label, reversed: bool) -> EdgeId {
        debug_assert!(self.vertices.contains(&from) && self.vertices.contains(&to));
        if let Some(existing) = self
            .edges
            .values()
            .find(|e| e.from == from && e.to == to && e.label == label && e.reversed == reversed)
        {
            return existing.id;
        }
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.edges.insert(id, Edge { id, from, to, label, reversed });
        id
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Option<Edge> {
        self.edges.remove(&id)
    }

    pub fn edge_mut(&mut self, id: EdgeId) -> Option<&mut Edge> {
        self.edges.get_mut(&id)
    }

    /// Merges `b` into `a`: every edge endpoint at `b` is re-pointed to
    /// `a`, then duplicate `(from, to, label, reversed)` edges collapse
    /// onto the smallest edge id.
    pub fn merge_vertices(&mut self, a: VertexId, b: VertexId) {
        debug_assert_ne!(a, b);
        for edge in self.edges.values_mut() {
            if edge.from == b {
                edge.from = a;
            }
            if edge.to == b {
                edge.to = a;
            }
        }
        self.vertices.remove(&b);
        self.dedup_edges();
    }

    /// Drops parallel duplicates, keeping the smallest id of each group.
    pub fn dedup_edges(&mut self) {
        let mut seen: BTreeSet<(VertexId, VertexId, Label, bool)> = BTreeSet::new();
        let ids: Vec<EdgeId> = self.edges.keys().copied().collect();
        for id in ids {
            let e = &self.edges[&id];
            let key = (e.from, e.to, e.label.clone(), e.reversed);
            if !seen.insert(key) {
                self.edges.remove(&id);
            }
        }
    }

    /// The unique out-neighbor of `s`, when unique.
    pub fn s_prime(&self) -> Option<VertexId> {
        let mut outs = self.out_edges(self.s);
        match (outs.next(), outs.next()) {
            (Some(e), None) => Some(e.to),
            _ => None,
        }
    }

    /// The unique in-neighbor of `t`, when unique.
    pub fn t_prime(&self) -> Option<VertexId> {
        let mut ins = self.in_edges(self.t);
        match (ins.next(), ins.next()) {
            (Some(e), None) => Some(e.from),
            _ => None,
        }
    }

    /// Number of edges whose label is not ε.
    pub fn count_symbols(&self) -> usize {
        self.edges.values().filter(|e| !e.label.is_epsilon()).count()
    }

    /// Topological order of the graph with reversed edges excluded, or
    /// `None` if the forward edges contain a cycle.
    pub fn forward_topo_order(&self) -> Option<Vec<VertexId>> {
        let mut indeg: BTreeMap<VertexId, usize> = self.vertices.iter().map(|&v| (v, 0)).collect();
        for e in self.edges.values().filter(|e| !e.reversed) {
            *indeg.get_mut(&e.to).unwrap() += 1;
        }
        let mut queue: VecDeque<VertexId> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(&v, _)| v).collect();
        let mut order = Vec::with_capacity(self.vertices.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for e in self.edges.values().filter(|e| !e.reversed && e.from == v) {
                let d = indeg.get_mut(&e.to).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(e.to);
                }
            }
        }
        (order.len() == self.vertices.len()).then_some(order)
    }

    fn reachable(&self, from: VertexId, forward: bool) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            for e in self.edges.values() {
                let next = if forward {
                    (e.from == v).then_some(e.to)
                } else {
                    (e.to == v).then_some(e.from)
                };
                if let Some(n) = next {
                    if !seen.contains(&n) {
                        stack.push(n);
                    }
                }
            }
        }
        seen
    }
}

/// The whole system: nonterminal name → digraph, in source order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NfaSystem {
    pub graphs: IndexMap<String, StDigraph>,
    pub start: String,
}

impl NfaSystem {
    /// Sum of [`StDigraph::count_symbols`] over all graphs: the quantity
    /// the optimizer minimizes, and the "tokens" metric.
    pub fn total_symbols(&self) -> usize {
        self.graphs.values().map(|g| g.count_symbols()).sum()
    }

    /// Occurrence count of each nonterminal as an edge label, across
    /// the whole system.
    pub fn reference_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for graph in self.graphs.values() {
            for edge in graph.edges() {
                if let Label::Nonterm(name) = &edge.label {
                    *counts.entry(name.as_str()).or_insert(0) += 1;
                }
            }
        }
        counts
    }
}

/// Converts a grammar to its NFA representation.
///
/// Per nonterminal: one path per production (rhs symbols in order),
/// path begins merged into s′ and ends into t′, then sentinel ε-edges
/// `s→s′` and `t′→t`. An ε-production becomes an ε-edge `s′→t′`, except
/// when every production of the nonterminal is ε, in which case s′ and
/// t′ collapse into a single shared vertex. Identical parallel edges
/// are deduplicated, and non-start graphs that are never referenced by
/// any edge label are pruned.
pub fn grammar_to_nfa(g: &Grammar) -> NfaSystem {
    let mut graphs = IndexMap::new();
    let mut next_vertex = 0u32;
    let mut next_edge = 0u32;

    for name in g.nonterminals() {
        let prods: Vec<&Production> = g.rules_of(name).collect();
        let all_eps = prods.iter().all(|p| p.rhs.is_empty());

        let s = VertexId(next_vertex);
        let t = VertexId(next_vertex + 1);
        let mut graph = StDigraph::new(s, t, next_vertex + 2, next_edge);

        let (s_prime, t_prime) = if all_eps {
            let m = graph.fresh_vertex();
            (m, m)
        } else {
            let sp = graph.fresh_vertex();
            let tp = graph.fresh_vertex();
            (sp, tp)
        };
        graph.add_edge(s, s_prime, Label::Epsilon, false);

        for prod in &prods {
            if prod.rhs.is_empty() {
                if !all_eps {
                    graph.add_edge(s_prime, t_prime, Label::Epsilon, false);
                }
                continue;
            }
            let mut at = s_prime;
            for (i, sym) in prod.rhs.iter().enumerate() {
                let next = if i + 1 == prod.rhs.len() { t_prime } else { graph.fresh_vertex() };
                let label = match sym {
                    Symbol::Terminal(t) => Label::Term(t.clone()),
                    Symbol::Nonterminal(n) => Label::Nonterm(n.clone()),
                };
                graph.add_edge(at, next, label, false);
                at = next;
            }
        }

        graph.add_edge(t_prime, t, Label::Epsilon, false);

        next_vertex = graph.next_vertex;
        next_edge = graph.next_edge;
        graphs.insert(name.to_owned(), graph);
    }

    let mut sys = NfaSystem { graphs, start: g.start.clone() };
    prune_unreferenced(&mut sys);
    sys
}

/// Removes non-start graphs that no edge label references, repeating
/// until the system is orphan-free.
pub fn prune_unreferenced(sys: &mut NfaSystem) {
    loop {
        let refs = sys.reference_counts();
        let orphan = sys
            .graphs
            .keys()
            .find(|name| *name != &sys.start && !refs.contains_key(name.as_str()))
            .cloned();
        match orphan {
            Some(name) => {
                sys.graphs.shift_remove(&name);
            }
            None => break,
        }
    }
}

/// Encodes the system back into a grammar with one nonterminal per
/// vertex: edge `(u, v)` labeled `x` becomes `u → x̂ v`, each sink gets
/// `t → ε`, and reversed edges are treated as ordinary directed edges.
/// The result generates exactly the language of the system.
pub fn nfa_to_grammar(sys: &NfaSystem) -> Grammar {
    let index_of: BTreeMap<&str, usize> =
        sys.graphs.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let vertex_name = |gi: usize, v: VertexId| format!("g{gi}_v{}", v.0);

    let mut rules = Vec::new();
    for (gi, graph) in sys.graphs.values().enumerate() {
        for edge in graph.edges() {
            let mut rhs = Vec::new();
            match &edge.label {
                Label::Epsilon => {}
                Label::Term(t) => rhs.push(Symbol::Terminal(t.clone())),
                Label::Nonterm(name) => {
                    let target = index_of[name.as_str()];
                    rhs.push(Symbol::Nonterminal(vertex_name(target, sys.graphs[target].s)));
                }
            }
            rhs.push(Symbol::Nonterminal(vertex_name(gi, edge.to)));
            rules.push(Production { lhs: vertex_name(gi, edge.from), rhs });
        }
        rules.push(Production { lhs: vertex_name(gi, graph.t), rhs: vec![] });
        // vertices with no outgoing edges other than t cannot occur in a
        // valid system, but keep the grammar total just in case
        for v in graph.vertices() {
            if v != graph.t && graph.out_edges(v).next().is_none() {
                rules.push(Production { lhs: vertex_name(gi, v), rhs: vec![] });
            }
        }
    }

    let start_gi = index_of[sys.start.as_str()];
    let start = vertex_name(start_gi, sys.graphs[start_gi].s);
    Grammar { rules, start }
}

/// One broken invariant, described for humans.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub graph: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.graph, self.detail)
    }
}

/// Checks every digraph and system invariant; an empty list means the
/// system is well-formed. Reachability counts reversed edges in their
/// stored (backward) direction; acyclicity ignores them.
pub fn validate_system(sys: &NfaSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |graph: &str, detail: String| {
        out.push(Violation { graph: graph.to_owned(), detail });
    };

    if !sys.graphs.contains_key(&sys.start) {
        push("<system>", format!("start nonterminal `{}` has no digraph", sys.start));
    }

    for (name, graph) in &sys.graphs {
        if graph.in_edges(graph.s).next().is_some() {
            push(name, format!("source vertex v{} has positive in-degree", graph.s.0));
        }
        if graph.out_edges(graph.t).next().is_some() {
            push(name, format!("sink vertex v{} has positive out-degree", graph.t.0));
        }
        for edge in graph.edges() {
            if edge.reversed && !edge.label.is_epsilon() {
                push(name, format!("reversed edge e{} is not ε-labeled", edge.id.0));
            }
            if let Label::Nonterm(target) = &edge.label {
                if !sys.graphs.contains_key(target) {
                    push(name, format!("edge e{} references undefined nonterminal `{target}`", edge.id.0));
                }
            }
        }
        if graph.forward_topo_order().is_none() {
            push(name, "forward edges contain a cycle".to_owned());
        }
        let from_s = graph.reachable(graph.s, true);
        let to_t = graph.reachable(graph.t, false);
        for v in graph.vertices() {
            if !from_s.contains(&v) {
                push(name, format!("vertex v{} is unreachable from s", v.0));
            }
            if !to_t.contains(&v) {
                push(name, format!("vertex v{} cannot reach t", v.0));
            }
        }
    }

    let refs = sys.reference_counts();
    for name in sys.graphs.keys() {
        if name != &sys.start && !refs.contains_key(name.as_str()) {
            push(name, "graph is not referenced by any edge label".to_owned());
        }
    }
    out
}

/// Deterministic JSON image of the system (alphabetical keys) for the
/// `--dump-stage` CLI flag.
pub fn system_to_json(sys: &NfaSystem) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    let mut graphs = Map::new();
    let mut names: Vec<&String> = sys.graphs.keys().collect();
    names.sort();
    for name in names {
        let graph = &sys.graphs[name.as_str()];
        let edges: Vec<Value> = graph
            .edges()
            .map(|e| {
                json!({
                    "from": e.from.0,
                    "id": e.id.0,
                    "label": label_json(&e.label),
                    "reversed": e.reversed,
                    "to": e.to.0,
                })
            })
            .collect();
        graphs.insert(
            name.clone(),
            json!({
                "edges": edges,
                "s": graph.s.0,
                "t": graph.t.0,
                "vertices": graph.vertices().map(|v| v.0).collect::<Vec<_>>(),
            }),
        );
    }
    json!({ "graphs": graphs, "start": sys.start })
}

fn label_json(label: &Label) -> serde_json::Value {
    use serde_json::json;
    match label {
        Label::Epsilon => json!({ "kind": "epsilon" }),
        Label::Term(Terminal::Text(t)) => json!({ "kind": "terminal", "text": t }),
        Label::Term(Terminal::Class { lo, hi }) => {
            json!({ "hi": hi.to_string(), "kind": "char_class", "lo": lo.to_string() })
        }
        Label::Nonterm(n) => json!({ "kind": "nonterminal", "name": n }),
    }
}
