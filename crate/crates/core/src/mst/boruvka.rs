//! Borůvka rounds with contraction, finished with soft-heap edge selection.
//!
//! Each scan round finds the cheapest edge leaving every component by a
//! linear pass, joins along those edges, relabels the edge list by component
//! and drops internal edges. Of several edges joining the same pair of
//! components only the lightest is kept (the others close a cycle in which
//! they are heaviest, so no minimum spanning tree uses them).
//!
//! Once the contracted list is small, every component gets a soft heap of
//! its incident edges and the remaining rounds select from the heaps;
//! components that merge meld their heaps. A soft heap may hand back an
//! edge whose key is not the true minimum because some stored edges were
//! corrupted (their current key was raised). Every uncorrupted edge still in
//! the heap has an own key at least the current key of the peeked edge, so
//! only corrupted edges can beat it. The arena logs each edge the moment it
//! becomes corrupted, and the verification pass compares the peeked
//! candidate against the component's logged edges that are still external.
//! Selection is therefore exact and the result equals the unique minimum
//! spanning tree under the `(w, u, v)` order.

use std::cmp::Ordering;

use super::soft_heap::{HeapId, OrdF64, SoftHeapArena};
use super::{check_edges, SpanningTree, UnionFind};
use crate::error::{GgError, Result};
use crate::graph::WeightedEdge;

pub const DEFAULT_EPSILON: f64 = 0.125;

/// The heap phase starts once the contracted edge list has at most
/// `edges / HEAP_SWITCH` entries.
const HEAP_SWITCH: usize = 8;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct EdgeKey {
    w: OrdF64,
    u: u32,
    v: u32,
}

impl EdgeKey {
    fn of(e: &WeightedEdge) -> Self {
        Self { w: OrdF64(e.w), u: e.u as u32, v: e.v as u32 }
    }
}

/// An edge between two current components; `id` indexes the input edges.
#[derive(Clone, Copy, Debug)]
struct Arc {
    w: f64,
    a: u32,
    b: u32,
    id: u32,
}

/// Counters from one run, mostly for tests and reports.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoruvkaStats {
    pub scan_rounds: usize,
    pub heap_rounds: usize,
    pub heap_insertions: usize,
    /// Corrupted edges that were re-checked against their own keys.
    pub rechecked: usize,
    /// Selections where a re-checked edge replaced the soft-heap candidate.
    pub repairs: usize,
}

struct Ctx<'a> {
    edges: &'a [WeightedEdge],
    // component of every input node
    label: Vec<u32>,
    tree: Vec<WeightedEdge>,
    stats: BoruvkaStats,
}

impl Ctx<'_> {
    #[inline]
    fn lighter(&self, x: &Arc, y: &Arc) -> bool {
        match x.w.total_cmp(&y.w) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.edges[x.id as usize].cmp_key(&self.edges[y.id as usize]) == Ordering::Less,
        }
    }

    fn accept(&mut self, arc: &Arc) {
        let e = self.edges[arc.id as usize];
        self.tree.push(WeightedEdge::new(e.u, e.v, e.w));
    }

    /// Names node 0 and a node outside its component.
    fn disconnected(&self, find: impl Fn(u32) -> u32) -> GgError {
        let r0 = find(self.label[0]);
        let b = self.label.iter().position(|&c| find(c) != r0).unwrap_or(1);
        GgError::Disconnected { a: 0, b }
    }
}

pub fn mst_boruvka_soft(edges: &[WeightedEdge], nodes: usize, epsilon: f64) -> Result<SpanningTree> {
    mst_boruvka_soft_with_stats(edges, nodes, epsilon).map(|(t, _)| t)
}

pub fn mst_boruvka_soft_with_stats(
    edges: &[WeightedEdge],
    nodes: usize,
    epsilon: f64,
) -> Result<(SpanningTree, BoruvkaStats)> {
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return Err(GgError::InvalidConfig(format!("boruvka_soft epsilon must be in (0, 1/4], got {epsilon}")));
    }
    check_edges(edges, nodes)?;
    if edges.len() >= NONE as usize || nodes >= NONE as usize {
        return Err(GgError::Contract("graph too large for 32-bit indices".into()));
    }
    let mut cx = Ctx {
        edges,
        label: (0..nodes as u32).collect(),
        tree: Vec::with_capacity(nodes - 1),
        stats: BoruvkaStats::default(),
    };
    if nodes == 1 {
        return Ok((SpanningTree::from_accepted(1, Vec::new()), BoruvkaStats::default()));
    }
    // The first round reads the input directly.
    let (mut arcs, mut comps) = scan_round(&mut cx, edges.len(), nodes, |k| {
        let e = &edges[k];
        Arc { w: e.w, a: e.u as u32, b: e.v as u32, id: k as u32 }
    })?;
    let switch = edges.len() / HEAP_SWITCH;
    while comps > 1 {
        if arcs.len() <= switch {
            heap_phase(&mut cx, &arcs, comps, epsilon)?;
            break;
        }
        let (next, n) = scan_round(&mut cx, arcs.len(), comps, |k| arcs[k])?;
        arcs = next;
        comps = n;
    }
    let stats = std::mem::take(&mut cx.stats);
    Ok((SpanningTree::from_accepted(nodes, cx.tree), stats))
}

/// One exact Borůvka round followed by contraction.
fn scan_round(cx: &mut Ctx, len: usize, comps: usize, arc: impl Fn(usize) -> Arc + Copy) -> Result<(Vec<Arc>, usize)> {
    cx.stats.scan_rounds += 1;
    let mut best = vec![NONE; comps];
    let mut best_w = vec![f64::INFINITY; comps];
    for k in 0..len {
        let x = arc(k);
        if x.a == x.b {
            continue;
        }
        for end in [x.a as usize, x.b as usize] {
            // weights are finite, so an empty slot always loses here
            if x.w < best_w[end] || (x.w == best_w[end] && cx.lighter(&x, &arc(best[end] as usize))) {
                best[end] = k as u32;
                best_w[end] = x.w;
            }
        }
    }
    if best.contains(&NONE) {
        return Err(cx.disconnected(|c| c));
    }
    let mut uf = UnionFind::new(comps);
    for &k in &best {
        let x = arc(k as usize);
        if uf.union(x.a as usize, x.b as usize) {
            cx.accept(&x);
        }
    }
    let mut map = vec![NONE; comps];
    let mut n = 0u32;
    for c in 0..comps {
        let r = uf.find(c);
        if map[r] == NONE {
            map[r] = n;
            n += 1;
        }
        map[c] = map[r];
    }
    for l in &mut cx.label {
        *l = map[*l as usize];
    }
    Ok((contract(cx, len, arc, &map, n as usize), n as usize))
}

/// Relabels arcs and drops internal ones. When there are more arcs than
/// component pairs, only the lightest of parallel arcs is kept; that output
/// is grouped by the smaller endpoint, which keeps it deterministic.
fn contract(cx: &Ctx, len: usize, arc: impl Fn(usize) -> Arc, map: &[u32], comps: usize) -> Vec<Arc> {
    let ends = |arc: &Arc| {
        let (a, b) = (map[arc.a as usize], map[arc.b as usize]);
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    };
    if len <= comps * (comps - 1) / 2 {
        // Room for every arc to join a distinct pair; dedup rarely pays.
        let mut out = Vec::with_capacity(len);
        for k in 0..len {
            let x = arc(k);
            let (a, b) = ends(&x);
            if a != b {
                out.push(Arc { a, b, ..x });
            }
        }
        return out;
    }
    let mut start = vec![0u32; comps + 1];
    for k in 0..len {
        let (a, b) = ends(&arc(k));
        if a != b {
            start[a as usize + 1] += 1;
        }
    }
    for c in 0..comps {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut grouped = vec![Arc { w: 0.0, a: 0, b: 0, id: 0 }; start[comps] as usize];
    for k in 0..len {
        let x = arc(k);
        let (a, b) = ends(&x);
        if a != b {
            let f = &mut fill[a as usize];
            grouped[*f as usize] = Arc { a, b, ..x };
            *f += 1;
        }
    }
    drop(fill);
    let mut slot = vec![NONE; comps];
    let mut out: Vec<Arc> = Vec::with_capacity(grouped.len().min(comps * comps / 2 + 1));
    for c in 0..comps {
        let from = out.len();
        for arc in &grouped[start[c] as usize..start[c + 1] as usize] {
            let s = &mut slot[arc.b as usize];
            if *s == NONE {
                *s = out.len() as u32;
                out.push(*arc);
            } else if cx.lighter(arc, &out[*s as usize]) {
                out[*s as usize] = *arc;
            }
        }
        for arc in &out[from..] {
            slot[arc.b as usize] = NONE;
        }
    }
    out
}

/// Remaining rounds with one soft heap per component.
fn heap_phase(cx: &mut Ctx, arcs: &[Arc], comps: usize, epsilon: f64) -> Result<()> {
    let mut arena: SoftHeapArena<EdgeKey, u32> = SoftHeapArena::with_capacity(epsilon, 2 * arcs.len())?;
    arena.set_corruption_log(true);
    let mut heap_of: Vec<Option<HeapId>> = (0..comps).map(|_| Some(arena.new_heap())).collect();
    let mut suspects: Vec<Vec<u32>> = vec![Vec::new(); comps];
    for (k, arc) in arcs.iter().enumerate() {
        let key = EdgeKey::of(&cx.edges[arc.id as usize]);
        for c in [arc.a, arc.b] {
            arena.insert(heap_of[c as usize].unwrap(), key, k as u32);
            arena.drain_corruptions(|&item, _| suspects[c as usize].push(item));
        }
    }
    cx.stats.heap_insertions += 2 * arcs.len();

    let mut uf = UnionFind::new(comps);
    let external = |uf: &mut UnionFind, k: u32| {
        let arc = &arcs[k as usize];
        uf.find(arc.a as usize) != uf.find(arc.b as usize)
    };
    let mut active: Vec<usize> = (0..comps).collect();
    let mut chosen = Vec::with_capacity(comps);
    while uf.components() > 1 {
        cx.stats.heap_rounds += 1;
        chosen.clear();
        for &r in &active {
            let h = heap_of[r].expect("every component root owns a heap");
            let candidate = loop {
                let Some((&k, _, _)) = arena.peek(h) else {
                    return Err(cx.disconnected(|c| uf.find_const(c as usize) as u32));
                };
                if external(&mut uf, k) {
                    break k;
                }
                arena.extract_min(h)?;
                arena.drain_corruptions(|&item, _| suspects[r].push(item));
            };
            // Verification: only corrupted edges can undercut the candidate.
            let mut list = std::mem::take(&mut suspects[r]);
            list.retain(|&s| external(&mut uf, s));
            cx.stats.rechecked += list.len();
            let mut pick = candidate;
            for &s in &list {
                if cx.lighter(&arcs[s as usize], &arcs[pick as usize]) {
                    pick = s;
                }
            }
            if pick != candidate {
                cx.stats.repairs += 1;
            }
            suspects[r] = list;
            chosen.push(pick);
        }
        for &k in &chosen {
            let arc = arcs[k as usize];
            let Some((hi, lo)) = uf.union_roots(arc.a as usize, arc.b as usize) else {
                continue;
            };
            cx.accept(&arc);
            let (ha, hb) = (heap_of[hi].take().unwrap(), heap_of[lo].take().unwrap());
            let (big, small) = if arena.len(ha) >= arena.len(hb) { (ha, hb) } else { (hb, ha) };
            arena.meld(big, small);
            heap_of[hi] = Some(big);
            let mut moved = std::mem::take(&mut suspects[lo]);
            if moved.len() > suspects[hi].len() {
                std::mem::swap(&mut moved, &mut suspects[hi]);
            }
            suspects[hi].extend(moved);
            arena.drain_corruptions(|&item, _| suspects[hi].push(item));
        }
        active.retain(|&r| uf.find(r) == r);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mst::mst_kruskal;

    fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, extra: usize) -> Vec<WeightedEdge> {
        let mut edges = Vec::new();
        for v in 1..nodes {
            let u = rng.random_range(0..v);
            edges.push(WeightedEdge::new(u, v, rng.random()));
        }
        for _ in 0..extra {
            let u = rng.random_range(0..nodes);
            let v = rng.random_range(0..nodes);
            if u != v {
                edges.push(WeightedEdge::new(u, v, rng.random()));
            }
        }
        edges
    }

    #[test]
    fn epsilon_range() {
        let g = vec![WeightedEdge::new(0, 1, 1.0)];
        for eps in [0.0, 0.3, -1.0, f64::NAN] {
            assert!(matches!(mst_boruvka_soft(&g, 2, eps), Err(GgError::InvalidConfig(_))));
        }
        assert!(mst_boruvka_soft(&g, 2, 0.25).is_ok());
    }

    #[test]
    fn matches_kruskal_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.random_range(2..64);
            let g = random_graph(&mut rng, n, 3 * n);
            let k = mst_kruskal(&g, n).unwrap();
            let b = mst_boruvka_soft(&g, n, 0.125).unwrap();
            assert_eq!(b.edges(), k.edges());
        }
    }

    #[test]
    fn verification_repairs_corrupted_selections() {
        // Dense graphs give heaps large enough to corrupt; with a large
        // epsilon the verification pass has real work to do.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut repairs = 0;
        let mut rechecked = 0;
        for _ in 0..3 {
            let n = 300;
            let mut g = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    g.push(WeightedEdge::new(u, v, rng.random()));
                }
            }
            let (b, stats) = mst_boruvka_soft_with_stats(&g, n, 0.25).unwrap();
            assert_eq!(b.edges(), mst_kruskal(&g, n).unwrap().edges());
            assert!(stats.heap_rounds > 0);
            repairs += stats.repairs;
            rechecked += stats.rechecked;
        }
        assert!(rechecked > 0);
        eprintln!("repairs = {repairs}, rechecked = {rechecked}");
    }

    #[test]
    fn isolated_node_is_disconnected() {
        let g = vec![WeightedEdge::new(1, 2, 1.0)];
        assert!(matches!(mst_boruvka_soft(&g, 3, 0.125), Err(GgError::Disconnected { a: 0, b: 1 })));
        let g = vec![WeightedEdge::new(0, 1, 1.0), WeightedEdge::new(2, 3, 1.0)];
        assert!(matches!(mst_boruvka_soft(&g, 4, 0.125), Err(GgError::Disconnected { .. })));
    }
}
