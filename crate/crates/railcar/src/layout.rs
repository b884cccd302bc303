//! Horizontal layered (Sugiyama-style) drawing of one st-digraph.
//!
//! Phases, in order:
//! 1. layer assignment — longest path from `s`, reversed edges excluded
//!    (they are the feedback arc set, known in advance from loopback)
//! 2. dummy insertion so every forward hop spans exactly one layer
//! 3. crossing reduction — barycenter sweeps, best ordering kept
//! 4. routing — orthogonal polylines; vertical connectors packed into
//!    channel columns by greedy interval coloring; reversed edges loop
//!    around below the drawing
//!
//! Grid units: one row per track, one column per layer slot or
//! connector slot. Token boxes never widen the grid; rendering
//! stretches columns visually instead.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::nfa::{EdgeId, NfaSystem, StDigraph, VertexId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("graph `{graph}` has a cycle among non-reversed edges")]
    CyclicGraph { graph: String },
}

/// A layout node: a digraph vertex, the box vertex sitting at the
/// middle of a labeled edge, or a dummy subdividing a long hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LNode {
    V(VertexId),
    Box(EdgeId),
    Dummy(u32),
}

impl LNode {
    pub fn key(&self) -> String {
        match self {
            LNode::V(v) => format!("v{}", v.0),
            LNode::Box(e) => format!("b{}", e.0),
            LNode::Dummy(d) => format!("d{d}"),
        }
    }
}

/// One single-layer hop of an expanded forward edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub from: LNode,
    pub to: LNode,
    pub edge: EdgeId,
}

/// Layering with dummies, before and after crossing reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layering {
    pub layers: Vec<Vec<LNode>>,
    pub hops: Vec<Hop>,
    /// forward edge -> its node chain `[from, dummies.., to]`
    pub chains: BTreeMap<EdgeId, Vec<LNode>>,
    pub reversed: Vec<EdgeId>,
}

/// A vertical connector segment placed in a channel column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelSegment {
    pub edge: EdgeId,
    pub top: i32,
    pub bottom: i32,
    pub column: usize,
}

/// The finished orthogonal drawing of one digraph, in grid units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredDrawing {
    pub layers: Vec<Vec<LNode>>,
    pub coords: BTreeMap<LNode, (i32, i32)>,
    /// edge -> orthogonal polyline of (col, row) grid points
    pub routes: BTreeMap<EdgeId, Vec<(i32, i32)>>,
    /// channel index -> vertical segments with their assigned columns
    pub connector_columns: Vec<Vec<ChannelSegment>>,
    pub reversed: Vec<EdgeId>,
    pub grid_cols: i32,
    pub grid_rows: i32,
}

impl LayeredDrawing {
    /// Grid cell of a labeled edge's token box.
    pub fn box_position(&self, edge: EdgeId) -> Option<(i32, i32)> {
        self.coords.get(&LNode::Box(edge)).copied()
    }
}

/// Drawing quality numbers reported per run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Metrics {
    pub area: usize,
    pub tokens: usize,
    pub components: usize,
}

/// The forward structure to be layered: every labeled non-reversed
/// edge is split through its box node, so boxes occupy grid cells of
/// their own.
fn expanded_edges(d: &StDigraph) -> Vec<(LNode, LNode, EdgeId)> {
    let mut out = Vec::new();
    for e in d.edges().filter(|e| !e.reversed) {
        if e.label.is_epsilon() {
            out.push((LNode::V(e.from), LNode::V(e.to), e.id));
        } else {
            out.push((LNode::V(e.from), LNode::Box(e.id), e.id));
            out.push((LNode::Box(e.id), LNode::V(e.to), e.id));
        }
    }
    out
}

/// Longest-path layering over the forward edges (with labeled edges
/// split through their box nodes); `s` sits in layer 0 and `t` is
/// pushed to a layer of its own past everything else.
pub fn layer_assign(d: &StDigraph) -> Result<BTreeMap<LNode, usize>, LayoutError> {
    if d.forward_topo_order().is_none() {
        return Err(LayoutError::CyclicGraph { graph: "<digraph>".into() });
    }
    let edges = expanded_edges(d);
    let mut nodes: Vec<LNode> = d.vertices().map(LNode::V).collect();
    nodes.extend(
        d.edges().filter(|e| !e.reversed && !e.label.is_epsilon()).map(|e| LNode::Box(e.id)),
    );
    let mut indeg: BTreeMap<LNode, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    for (_, to, _) in &edges {
        *indeg.get_mut(to).unwrap() += 1;
    }
    let mut queue: std::collections::VecDeque<LNode> =
        indeg.iter().filter(|(_, &deg)| deg == 0).map(|(&n, _)| n).collect();
    let mut layer: BTreeMap<LNode, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    while let Some(n) = queue.pop_front() {
        let ln = layer[&n];
        for (from, to, _) in edges.iter().filter(|(f, _, _)| *f == n) {
            debug_assert_eq!(*from, n);
            let entry = layer.get_mut(to).unwrap();
            *entry = (*entry).max(ln + 1);
            let deg = indeg.get_mut(to).unwrap();
            *deg -= 1;
            if *deg == 0 {
                queue.push_back(*to);
            }
        }
    }
    let sink = LNode::V(d.t);
    let deepest = layer.iter().filter(|(&n, _)| n != sink).map(|(_, &l)| l).max().unwrap_or(0);
    layer.insert(sink, deepest + 1);
    Ok(layer)
}

/// Expands long hops with dummy nodes, one per crossed layer. The
/// chain of a labeled edge runs source, dummies, box, dummies, target.
pub fn insert_dummies(d: &StDigraph, layer: &BTreeMap<LNode, usize>) -> Layering {
    let depth = layer.values().max().copied().unwrap_or(0);
    let mut layers: Vec<Vec<LNode>> = vec![Vec::new(); depth + 1];
    for (&node, &l) in layer {
        layers[l].push(node);
    }

    let mut hops = Vec::new();
    let mut chains: BTreeMap<EdgeId, Vec<LNode>> = BTreeMap::new();
    let mut reversed = Vec::new();
    let mut next_dummy = 0u32;
    for e in d.edges() {
        if e.reversed {
            reversed.push(e.id);
            continue;
        }
        let waypoints: Vec<LNode> = if e.label.is_epsilon() {
            vec![LNode::V(e.from), LNode::V(e.to)]
        } else {
            vec![LNode::V(e.from), LNode::Box(e.id), LNode::V(e.to)]
        };
        let mut chain = vec![waypoints[0]];
        for pair in waypoints.windows(2) {
            let (lf, lt) = (layer[&pair[0]], layer[&pair[1]]);
            debug_assert!(lt > lf, "forward hop must ascend");
            for mid in lf + 1..lt {
                let dummy = LNode::Dummy(next_dummy);
                next_dummy += 1;
                layers[mid].push(dummy);
                chain.push(dummy);
            }
            chain.push(pair[1]);
        }
        for pair in chain.windows(2) {
            hops.push(Hop { from: pair[0], to: pair[1], edge: e.id });
        }
        chains.insert(e.id, chain);
    }

    // initial order: depth-first from s in edge-id order, so the first
    // alternative of each branch runs along the top of the drawing
    let mut disc: BTreeMap<LNode, usize> = BTreeMap::new();
    let mut stack = vec![LNode::V(d.s)];
    while let Some(n) = stack.pop() {
        if disc.contains_key(&n) {
            continue;
        }
        let next_disc = disc.len();
        disc.insert(n, next_disc);
        for hop in hops.iter().filter(|h| h.from == n).rev() {
            if !disc.contains_key(&hop.to) {
                stack.push(hop.to);
            }
        }
    }
    for row in layers.iter_mut() {
        row.sort_by_key(|n| (disc.get(n).copied().unwrap_or(usize::MAX), *n));
    }
    Layering { layers, hops, chains, reversed }
}

/// Counts pairwise hop crossings between adjacent layers for the
/// current ordering.
pub fn crossing_count(l: &Layering) -> usize {
    let pos: BTreeMap<LNode, (usize, usize)> = l
        .layers
        .iter()
        .enumerate()
        .flat_map(|(li, row)| row.iter().enumerate().map(move |(ri, &n)| (n, (li, ri))))
        .collect();
    let mut total = 0;
    for li in 0..l.layers.len().saturating_sub(1) {
        let spans: Vec<(usize, usize)> = l
            .hops
            .iter()
            .filter(|h| pos[&h.from].0 == li)
            .map(|h| (pos[&h.from].1, pos[&h.to].1))
            .collect();
        for i in 0..spans.len() {
            for j in i + 1..spans.len() {
                let (a, b) = (spans[i], spans[j]);
                if (a.0 < b.0 && a.1 > b.1) || (a.0 > b.0 && a.1 < b.1) {
                    total += 1;
                }
            }
        }
    }
    total
}

/// Barycenter crossing reduction: up to four down/up sweep pairs,
/// keeping the best ordering seen. Ties preserve the previous order,
/// so the result is deterministic; the returned ordering never has
/// more crossings than the input.
pub fn order_layers(mut l: Layering) -> Layering {
    let mut best = l.layers.clone();
    let mut best_crossings = crossing_count(&l);
    for _ in 0..4 {
        let before = l.layers.clone();
        sweep(&mut l, true);
        sweep(&mut l, false);
        let now = crossing_count(&l);
        if now < best_crossings {
            best_crossings = now;
            best = l.layers.clone();
        }
        if l.layers == before {
            break;
        }
    }
    l.layers = best;
    l
}

fn sweep(l: &mut Layering, down: bool) {
    let n = l.layers.len();
    let indices: Vec<usize> =
        if down { (1..n).collect() } else { (0..n.saturating_sub(1)).rev().collect() };
    for li in indices {
        let fixed: BTreeMap<LNode, usize> = {
            let fixed_layer = if down { li - 1 } else { li + 1 };
            l.layers[fixed_layer].iter().enumerate().map(|(i, &n)| (n, i)).collect()
        };
        let current: BTreeMap<LNode, usize> =
            l.layers[li].iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut keyed: Vec<(f64, usize, LNode)> = l.layers[li]
            .iter()
            .map(|&node| {
                let neighbors: Vec<usize> = l
                    .hops
                    .iter()
                    .filter_map(|h| {
                        if down && h.to == node {
                            fixed.get(&h.from).copied()
                        } else if !down && h.from == node {
                            fixed.get(&h.to).copied()
                        } else {
                            None
                        }
                    })
                    .collect();
                let bc = if neighbors.is_empty() {
                    current[&node] as f64
                } else {
                    neighbors.iter().sum::<usize>() as f64 / neighbors.len() as f64
                };
                (bc, current[&node], node)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        l.layers[li] = keyed.into_iter().map(|(_, _, n)| n).collect();
    }
}

/// Greedy left-to-right interval coloring. Intervals are closed;
/// touching rows conflict. On interval graphs this uses exactly the
/// clique number of colors.
pub fn color_intervals(intervals: &[(i32, i32)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| (intervals[i].0, intervals[i].1, i));
    let mut colors = vec![0usize; intervals.len()];
    let mut color_end: Vec<i32> = Vec::new();
    for &i in &order {
        let (start, end) = intervals[i];
        let slot = color_end.iter().position(|&e| e < start);
        match slot {
            Some(c) => {
                colors[i] = c;
                color_end[c] = end;
            }
            None => {
                colors[i] = color_end.len();
                color_end.push(end);
            }
        }
    }
    colors
}

/// Assigns grid coordinates and orthogonal routes to an ordered
/// layering. Rows are chosen by aligning each node with its
/// predecessors (chains run straight where possible) while preserving
/// the crossing-reduced order. Reversed edges dive below the rows of
/// their own column span, run leftward, and rejoin at their target.
pub fn route_edges(d: &StDigraph, l: &Layering) -> LayeredDrawing {
    let layer_of: BTreeMap<LNode, usize> = l
        .layers
        .iter()
        .enumerate()
        .flat_map(|(li, row)| row.iter().map(move |&n| (n, li)))
        .collect();
    let n_layers = l.layers.len();
    let n_channels = n_layers.saturating_sub(1);

    // row assignment: follow the ordering, but pull each node up to the
    // mean row of its layer-(i-1) neighbors so chains stay straight
    let mut row_of: BTreeMap<LNode, i32> = BTreeMap::new();
    for (li, layer) in l.layers.iter().enumerate() {
        let mut last = -1i32;
        for &node in layer {
            let desired = if li == 0 {
                last + 1
            } else {
                let sources: Vec<i32> = l
                    .hops
                    .iter()
                    .filter(|h| h.to == node)
                    .filter_map(|h| row_of.get(&h.from).copied())
                    .collect();
                // hug the topmost in-neighbor: chains run straight and
                // merges return to the main line
                sources.iter().copied().min().unwrap_or(last + 1)
            };
            let row = desired.max(last + 1);
            row_of.insert(node, row);
            last = row;
        }
    }
    let max_node_row = row_of.values().copied().max().unwrap_or(0);

    // loop bottom rows: overlapping loops form a group; the group sits
    // just below the deepest node row inside its own column span
    let mut loop_edges: Vec<(EdgeId, usize, usize)> = Vec::new();
    for &eid in &l.reversed {
        let e = d.edge(eid).expect("reversed edge exists");
        let lu = layer_of[&LNode::V(e.from)];
        let lt = layer_of[&LNode::V(e.to)];
        let down_channel = lu.min(n_channels.saturating_sub(1));
        let up_channel = lt.saturating_sub(1);
        loop_edges.push((eid, up_channel.min(down_channel), up_channel.max(down_channel)));
    }
    let loop_spans: Vec<(i32, i32)> =
        loop_edges.iter().map(|&(_, a, b)| (a as i32, b as i32)).collect();
    let loop_depths = color_intervals(&loop_spans);
    // transitive overlap groups over the channel spans
    let mut group = (0..loop_edges.len()).collect::<Vec<usize>>();
    fn find(group: &mut Vec<usize>, mut i: usize) -> usize {
        while group[i] != i {
            group[i] = group[group[i]];
            i = group[i];
        }
        i
    }
    for i in 0..loop_edges.len() {
        for j in i + 1..loop_edges.len() {
            let (a, b) = (loop_spans[i], loop_spans[j]);
            if a.0 <= b.1 && b.0 <= a.1 {
                let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                if ri != rj {
                    group[ri] = rj;
                }
            }
        }
    }
    let mut group_base: BTreeMap<usize, i32> = BTreeMap::new();
    for i in 0..loop_edges.len() {
        let root = find(&mut group, i);
        let (lo_ch, hi_ch) = (loop_edges[i].1, loop_edges[i].2);
        // layers touched by the bottom run: both channel endpoints
        let deepest = (lo_ch..=hi_ch + 1)
            .filter(|&li| li < n_layers)
            .flat_map(|li| l.layers[li].iter())
            .map(|n| row_of[n])
            .max()
            .unwrap_or(max_node_row);
        let entry = group_base.entry(root).or_insert(0);
        *entry = (*entry).max(deepest + 1);
    }
    let bottom_row_of: BTreeMap<EdgeId, i32> = loop_edges
        .iter()
        .enumerate()
        .map(|(i, &(eid, _, _))| {
            let root = find(&mut group, i);
            (eid, group_base[&root] + loop_depths[i] as i32)
        })
        .collect();

    // collect vertical connector intervals per channel
    #[derive(Clone, PartialEq)]
    enum Seg {
        Hop(usize),
        LoopDown(EdgeId),
        LoopUp(EdgeId),
    }
    // a bent hop prefers a vertical in its own junction column (the
    // branch or merge spine of railroad drawings); it falls back to a
    // channel column when another node occupies that span
    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Source,
        Target,
        Channel,
    }
    let occupied = |li: usize, lo: i32, hi: i32, except: LNode| -> bool {
        l.layers[li]
            .iter()
            .any(|&n| n != except && (lo..=hi).contains(&row_of[&n]))
    };
    let mut hop_side: Vec<Side> = Vec::with_capacity(l.hops.len());
    let mut channel_segs: Vec<Vec<(Seg, i32, i32)>> = vec![Vec::new(); n_channels];
    for (hi, hop) in l.hops.iter().enumerate() {
        let (rf, rt) = (row_of[&hop.from], row_of[&hop.to]);
        if rf == rt {
            hop_side.push(Side::Channel); // unused: straight hop
            continue;
        }
        let (lo, hi_row) = (rf.min(rt), rf.max(rt));
        let lf = layer_of[&hop.from];
        if !occupied(lf, lo, hi_row, hop.from) {
            hop_side.push(Side::Source);
        } else if !occupied(lf + 1, lo, hi_row, hop.to) {
            hop_side.push(Side::Target);
        } else {
            hop_side.push(Side::Channel);
            channel_segs[lf].push((Seg::Hop(hi), lo, hi_row));
        }
    }
    for &(eid, _, _) in &loop_edges {
        let e = d.edge(eid).unwrap();
        let (lu, ru) = (layer_of[&LNode::V(e.from)], row_of[&LNode::V(e.from)]);
        let (lt, rt) = (layer_of[&LNode::V(e.to)], row_of[&LNode::V(e.to)]);
        let bottom = bottom_row_of[&eid];
        let down_channel = lu.min(n_channels.saturating_sub(1));
        let up_channel = lt.saturating_sub(1);
        channel_segs[down_channel].push((Seg::LoopDown(eid), ru, bottom));
        channel_segs[up_channel].push((Seg::LoopUp(eid), rt, bottom));
    }

    let mut channel_width = vec![0usize; n_channels];
    let mut seg_column: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut connector_columns: Vec<Vec<ChannelSegment>> = vec![Vec::new(); n_channels];
    for (ci, segs) in channel_segs.iter().enumerate() {
        let intervals: Vec<(i32, i32)> = segs.iter().map(|&(_, a, b)| (a, b)).collect();
        let colors = color_intervals(&intervals);
        channel_width[ci] = colors.iter().map(|&c| c + 1).max().unwrap_or(0);
        for (si, ((seg, a, b), &col)) in segs.iter().zip(&colors).enumerate() {
            seg_column.insert((ci, si), col);
            let edge = match seg {
                Seg::Hop(hi) => l.hops[*hi].edge,
                Seg::LoopDown(e) | Seg::LoopUp(e) => *e,
            };
            connector_columns[ci].push(ChannelSegment { edge, top: *a, bottom: *b, column: col });
        }
    }

    // x position of each layer column; column 0 and the last column
    // hold the entry and exit stubs of the component's track
    let mut layer_x = vec![1i32; n_layers];
    for i in 1..n_layers {
        layer_x[i] = layer_x[i - 1] + 1 + channel_width[i - 1] as i32;
    }
    let coords: BTreeMap<LNode, (i32, i32)> = layer_of
        .iter()
        .map(|(&n, &li)| (n, (layer_x[li], row_of[&n])))
        .collect();

    let find_col = |ci: usize, wanted: &Seg| -> Option<usize> {
        channel_segs[ci]
            .iter()
            .enumerate()
            .find(|(_, (seg, _, _))| seg == wanted)
            .map(|(si, _)| seg_column[&(ci, si)])
    };

    let mut routes: BTreeMap<EdgeId, Vec<(i32, i32)>> = BTreeMap::new();
    for (eid, chain) in &l.chains {
        let mut pts: Vec<(i32, i32)> = Vec::new();
        for pair in chain.windows(2) {
            let lf = layer_of[&pair[0]];
            let (y0, y1) = (row_of[&pair[0]], row_of[&pair[1]]);
            let (x0, x1) = (layer_x[lf], layer_x[lf + 1]);
            push_pt(&mut pts, (x0, y0));
            if y0 != y1 {
                let hop_idx = l
                    .hops
                    .iter()
                    .position(|h| h.edge == *eid && h.from == pair[0])
                    .expect("hop exists");
                let xc = match hop_side[hop_idx] {
                    Side::Source => x0,
                    Side::Target => x1,
                    Side::Channel => {
                        let col =
                            find_col(lf, &Seg::Hop(hop_idx)).expect("bent hop has a column");
                        layer_x[lf] + 1 + col as i32
                    }
                };
                push_pt(&mut pts, (xc, y0));
                push_pt(&mut pts, (xc, y1));
            }
            push_pt(&mut pts, (x1, y1));
        }
        routes.insert(*eid, pts);
    }
    for &eid in &l.reversed {
        let e = d.edge(eid).unwrap();
        let (lu, ru) = (layer_of[&LNode::V(e.from)], row_of[&LNode::V(e.from)]);
        let (lt, rt) = (layer_of[&LNode::V(e.to)], row_of[&LNode::V(e.to)]);
        let bottom = bottom_row_of[&eid];
        let down_channel = lu.min(n_channels.saturating_sub(1));
        let up_channel = lt.saturating_sub(1);
        let col_down =
            find_col(down_channel, &Seg::LoopDown(eid)).expect("loop down leg has a column");
        let col_up = find_col(up_channel, &Seg::LoopUp(eid)).expect("loop up leg has a column");
        let xd = layer_x[down_channel] + 1 + col_down as i32;
        let xu = layer_x[up_channel] + 1 + col_up as i32;
        let mut pts = Vec::new();
        push_pt(&mut pts, (layer_x[lu], ru));
        push_pt(&mut pts, (xd, ru));
        push_pt(&mut pts, (xd, bottom));
        push_pt(&mut pts, (xu, bottom));
        push_pt(&mut pts, (xu, rt));
        push_pt(&mut pts, (layer_x[lt], rt));
        routes.insert(eid, pts);
    }

    let grid_cols = layer_x[n_layers - 1] + 2;
    let max_bottom = bottom_row_of.values().copied().max().unwrap_or(0);
    let grid_rows = max_node_row.max(max_bottom) + 1;
    LayeredDrawing {
        layers: l.layers.clone(),
        coords,
        routes,
        connector_columns,
        reversed: l.reversed.clone(),
        grid_cols,
        grid_rows,
    }
}

fn push_pt(pts: &mut Vec<(i32, i32)>, p: (i32, i32)) {
    if pts.last() != Some(&p) {
        pts.push(p);
    }
}

/// Full layout of one digraph: layering, ordering, routing.
pub fn layout_digraph(name: &str, d: &StDigraph) -> Result<LayeredDrawing, LayoutError> {
    let layer = layer_assign(d).map_err(|_| LayoutError::CyclicGraph { graph: name.into() })?;
    let layering = insert_dummies(d, &layer);
    let ordered = order_layers(layering);
    Ok(route_edges(d, &ordered))
}

/// Lays out every digraph of the system in its stored order.
pub fn layout_system(
    sys: &NfaSystem,
) -> Result<indexmap::IndexMap<String, LayeredDrawing>, LayoutError> {
    let mut out = indexmap::IndexMap::new();
    for (name, graph) in &sys.graphs {
        out.insert(name.clone(), layout_digraph(name, graph)?);
    }
    Ok(out)
}

/// Component drawings stack vertically into one page; area is the
/// bounding box of the stack, total rows times the widest component.
/// Tokens and components restate the system's own counts.
pub fn compute_metrics(
    drawings: &indexmap::IndexMap<String, LayeredDrawing>,
    sys: &NfaSystem,
) -> Metrics {
    let rows: usize = drawings.values().map(|d| d.grid_rows.max(1) as usize).sum();
    let cols: usize = drawings.values().map(|d| d.grid_cols.max(1) as usize).max().unwrap_or(0);
    Metrics { area: rows * cols, tokens: sys.total_symbols(), components: sys.graphs.len() }
}

/// Deterministic JSON image of all drawings plus metrics for the
/// `--dump-stage layout` flag (alphabetical keys).
pub fn layout_to_json(
    drawings: &indexmap::IndexMap<String, LayeredDrawing>,
    sys: &NfaSystem,
) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    let mut graphs = Map::new();
    let mut names: Vec<&String> = drawings.keys().collect();
    names.sort();
    for name in names {
        let d = &drawings[name.as_str()];
        let layers: Vec<Value> = d
            .layers
            .iter()
            .map(|row| Value::Array(row.iter().map(|n| Value::String(n.key())).collect()))
            .collect();
        let mut coords = Map::new();
        for (n, &(x, y)) in &d.coords {
            coords.insert(n.key(), json!([x, y]));
        }
        let mut routes = Map::new();
        for (e, pts) in &d.routes {
            routes.insert(
                format!("e{}", e.0),
                Value::Array(pts.iter().map(|&(x, y)| json!([x, y])).collect()),
            );
        }
        graphs.insert(
            name.clone(),
            json!({
                "coords": coords,
                "grid_cols": d.grid_cols,
                "grid_rows": d.grid_rows,
                "layers": layers,
                "routes": routes,
            }),
        );
    }
    let metrics = compute_metrics(drawings, sys);
    json!({ "graphs": graphs, "metrics": metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use crate::heuristics::{apply_pinch, optimize, OptimizerConfig};
    use crate::nfa::{grammar_to_nfa, Label};

    const LISP15: &str = include_str!("../../../grammars/lisp15.rr");

    fn system(text: &str) -> NfaSystem {
        grammar_to_nfa(&parse_grammar(text).unwrap())
    }

    #[test]
    fn chain_gets_one_vertex_per_layer() {
        let sys = system("A ::= \"x\" \"y\" ;");
        let g = &sys.graphs["A"];
        let layer = layer_assign(g).unwrap();
        // s, s', box, interior, box, t', t form a single path
        let mut by_layer: Vec<usize> = layer.values().copied().collect();
        by_layer.sort();
        assert_eq!(by_layer, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(layer[&LNode::V(g.s)], 0);
        assert_eq!(layer[&LNode::V(g.t)], 6);
    }

    #[test]
    fn short_alternative_gets_a_dummy() {
        let sys = system("A ::= \"b\" | \"b\" C ; C ::= \"c\" ;");
        let g = &sys.graphs["A"];
        let layer = layer_assign(g).unwrap();
        let layering = insert_dummies(g, &layer);
        let dummies: usize =
            layering.layers.iter().flatten().filter(|n| matches!(n, LNode::Dummy(_))).count();
        // the direct b alternative is short: its box-to-t' hop crosses
        // the layers holding x and the C box
        assert_eq!(dummies, 2);
        for hop in &layering.hops {
            let lf = layering.layers.iter().position(|r| r.contains(&hop.from)).unwrap();
            let lt = layering.layers.iter().position(|r| r.contains(&hop.to)).unwrap();
            assert_eq!(lt, lf + 1, "each hop spans exactly one layer");
        }
    }

    #[test]
    fn cyclic_forward_graph_is_rejected() {
        let mut g = StDigraph::new(VertexId(0), VertexId(3), 4, 0);
        let a = g.fresh_vertex();
        let b = g.fresh_vertex();
        g.add_edge(VertexId(0), a, Label::Epsilon, false);
        g.add_edge(a, b, Label::Epsilon, false);
        g.add_edge(b, a, Label::Epsilon, false);
        g.add_edge(b, VertexId(3), Label::Epsilon, false);
        assert!(layer_assign(&g).is_err());
        assert_eq!(
            layout_digraph("bad", &g).unwrap_err(),
            LayoutError::CyclicGraph { graph: "bad".into() }
        );
    }

    #[test]
    fn parallel_paths_have_no_crossings() {
        let sys = system("A ::= \"x\" \"y\" | \"p\" \"q\" ;");
        let g = &sys.graphs["A"];
        let layering = insert_dummies(g, &layer_assign(g).unwrap());
        let ordered = order_layers(layering);
        assert_eq!(crossing_count(&ordered), 0);
    }

    #[test]
    fn ordering_never_increases_crossings() {
        for text in [LISP15, "A ::= \"x\" \"a\" | \"y\" \"b\" | \"x\" \"b\" ;"] {
            let sys = system(text);
            for g in sys.graphs.values() {
                let layering = insert_dummies(g, &layer_assign(g).unwrap());
                let before = crossing_count(&layering);
                let after = crossing_count(&order_layers(layering));
                assert!(after <= before);
            }
        }
    }

    #[test]
    fn singleton_layers_keep_identity_order() {
        let sys = system("A ::= \"x\" \"y\" \"z\" ;");
        let g = &sys.graphs["A"];
        let layering = insert_dummies(g, &layer_assign(g).unwrap());
        let ordered = order_layers(layering.clone());
        assert_eq!(ordered.layers, layering.layers);
    }

    /// The pinch acceptance probe: an all-ε K₂,₂ draws with one
    /// crossing; pinching it through a crossing vertex removes it.
    #[test]
    fn pinch_removes_the_k22_crossing() {
        let mut g = StDigraph::new(VertexId(0), VertexId(1), 2, 0);
        let sp = g.fresh_vertex();
        let tp = g.fresh_vertex();
        g.add_edge(VertexId(0), sp, Label::Epsilon, false);
        g.add_edge(tp, VertexId(1), Label::Epsilon, false);
        let us: Vec<VertexId> = (0..2).map(|_| g.fresh_vertex()).collect();
        let vs: Vec<VertexId> = (0..2).map(|_| g.fresh_vertex()).collect();
        for (i, &u) in us.iter().enumerate() {
            g.add_edge(sp, u, Label::Term(crate::grammar::Terminal::Text(format!("p{i}"))), false);
        }
        for (j, &v) in vs.iter().enumerate() {
            g.add_edge(v, tp, Label::Term(crate::grammar::Terminal::Text(format!("q{j}"))), false);
        }
        for &u in &us {
            for &v in &vs {
                g.add_edge(u, v, Label::Epsilon, false);
            }
        }
        let layering = insert_dummies(&g, &layer_assign(&g).unwrap());
        assert_eq!(crossing_count(&order_layers(layering)), 1);

        let (pinched, n) = apply_pinch(&g);
        assert_eq!(n, 1);
        let layering = insert_dummies(&pinched, &layer_assign(&pinched).unwrap());
        assert_eq!(crossing_count(&order_layers(layering)), 0);
    }

    #[test]
    fn straight_chain_consumes_no_connector_columns() {
        let sys = system("A ::= \"x\" \"y\" ;");
        let d = layout_digraph("A", &sys.graphs["A"]).unwrap();
        assert!(d.connector_columns.iter().all(|c| c.is_empty()));
        assert_eq!(d.grid_rows, 1);
        for pts in d.routes.values() {
            assert!(pts.windows(2).all(|w| w[0].1 == w[1].1), "straight routes have no bends");
        }
    }

    #[test]
    fn greedy_coloring_matches_clique_bound() {
        // three pairwise-overlapping intervals need three columns
        let colors = color_intervals(&[(0, 2), (0, 1), (1, 2)]);
        let used = colors.iter().max().unwrap() + 1;
        assert_eq!(used, 3);
        // disjoint intervals share one column
        let colors = color_intervals(&[(0, 1), (2, 3), (4, 5)]);
        assert_eq!(colors.iter().max().unwrap() + 1, 1);
    }

    #[test]
    fn coloring_is_optimal_on_lisp_channels() {
        let sys = system(LISP15);
        let (opt, _) = optimize(&sys, &OptimizerConfig::default());
        for current in [&sys, &opt] {
            for (name, g) in &current.graphs {
                let d = layout_digraph(name, g).unwrap();
                for segs in &d.connector_columns {
                    if segs.is_empty() {
                        continue;
                    }
                    let used = segs.iter().map(|s| s.column).max().unwrap() + 1;
                    assert_eq!(used, max_overlap(segs), "channel in {name}");
                }
            }
        }
    }

    fn max_overlap(segs: &[ChannelSegment]) -> usize {
        let mut best = 0;
        for probe in segs.iter().flat_map(|s| [s.top, s.bottom]) {
            let covering = segs.iter().filter(|s| s.top <= probe && probe <= s.bottom).count();
            best = best.max(covering);
        }
        best
    }

    #[test]
    fn tokens_read_left_to_right_and_loops_run_leftward() {
        let sys = system(LISP15);
        let (opt, _) = optimize(&sys, &OptimizerConfig::default());
        for (name, g) in &opt.graphs {
            let d = layout_digraph(name, g).unwrap();
            for e in g.edges() {
                if e.reversed {
                    assert!(d.reversed.contains(&e.id));
                    let pts = &d.routes[&e.id];
                    let bottom_run: Vec<_> =
                        pts.windows(2).filter(|w| w[0].1 == w[1].1 && w[0].1 > 0).collect();
                    assert!(
                        bottom_run.iter().any(|w| w[1].0 < w[0].0),
                        "loop must run leftward in {name}"
                    );
                } else {
                    let (fx, _) = d.coords[&LNode::V(e.from)];
                    let (tx, _) = d.coords[&LNode::V(e.to)];
                    assert!(fx < tx, "forward edge must read left to right in {name}");
                }
            }
            let rev_in_drawing: Vec<EdgeId> = d.reversed.clone();
            let rev_in_graph: Vec<EdgeId> =
                g.edges().filter(|e| e.reversed).map(|e| e.id).collect();
            assert_eq!(rev_in_drawing, rev_in_graph);
        }
    }

    #[test]
    fn epsilon_digraph_occupies_one_row_of_track() {
        let sys = system("A ::= ;");
        let drawings = layout_system(&sys).unwrap();
        let metrics = compute_metrics(&drawings, &sys);
        assert_eq!(metrics.tokens, 0);
        assert_eq!(metrics.components, 1);
        assert_eq!(drawings["A"].grid_rows, 1);
        // sentinel track: stub, s, shared vertex, t, stub
        assert_eq!(metrics.area, 5);
    }

    #[test]
    fn lisp_metrics_match_table_counts() {
        let sys = system(LISP15);
        let drawings = layout_system(&sys).unwrap();
        let unopt = compute_metrics(&drawings, &sys);
        assert_eq!(unopt.tokens, 19);
        assert_eq!(unopt.components, 6);

        let (opt_sys, _) = optimize(&sys, &OptimizerConfig::default());
        let drawings = layout_system(&opt_sys).unwrap();
        let opt = compute_metrics(&drawings, &opt_sys);
        assert_eq!(opt.tokens, 9);
        assert_eq!(opt.components, 1);
        assert!(opt.area > 0 && unopt.area > 0);
        assert!(opt.area < unopt.area, "optimized {} vs unoptimized {}", opt.area, unopt.area);
    }

    #[test]
    fn layout_is_deterministic() {
        let sys = system(LISP15);
        let a = layout_system(&sys).unwrap();
        let b = layout_system(&sys).unwrap();
        assert_eq!(a, b);
        let ja = serde_json::to_string(&layout_to_json(&a, &sys)).unwrap();
        let jb = serde_json::to_string(&layout_to_json(&b, &sys)).unwrap();
        assert_eq!(ja, jb);
    }
}
