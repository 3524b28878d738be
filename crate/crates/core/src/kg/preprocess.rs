use std::collections::{HashMap, HashSet, VecDeque};

use super::graph::{EntityId, KnowledgeGraph, RawTriple};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_ENTITY_FREQ: usize = 10;
pub const DEFAULT_MIN_RELATION_TRIPLES: usize = 100;
pub const DEFAULT_KHOP: usize = 2;

/// Drops rare relations and low-degree entities until both thresholds hold
/// simultaneously, then builds the graph.
///
/// A relation survives with at least `min_relation_triples` triples; an entity
/// survives with head+tail occurrence count of at least `min_entity_freq`.
/// Removing either can push the other below threshold, so the two passes
/// alternate until nothing changes.
pub fn filter_kg(raw: &[RawTriple], min_entity_freq: usize, min_relation_triples: usize) -> Result<KnowledgeGraph> {
    let mut seen = HashSet::with_capacity(raw.len());
    let mut kept: Vec<&RawTriple> = raw.iter().filter(|t| seen.insert(*t)).collect();

    loop {
        let before = kept.len();

        let mut rel_count: HashMap<&str, usize> = HashMap::new();
        for t in &kept {
            *rel_count.entry(t.relation.as_str()).or_default() += 1;
        }
        kept.retain(|t| rel_count[t.relation.as_str()] >= min_relation_triples);

        let mut degree: HashMap<&str, usize> = HashMap::new();
        for t in &kept {
            *degree.entry(t.head.as_str()).or_default() += 1;
            *degree.entry(t.tail.as_str()).or_default() += 1;
        }
        kept.retain(|t| degree[t.head.as_str()] >= min_entity_freq && degree[t.tail.as_str()] >= min_entity_freq);

        if kept.len() == before {
            break;
        }
    }

    if kept.is_empty() {
        return Err(Error::EmptyGraph(format!(
            "no triples survive filtering (min_entity_freq={min_entity_freq}, min_relation_triples={min_relation_triples})"
        )));
    }
    Ok(KnowledgeGraph::from_raw(kept))
}

/// Undirected BFS distances from `seeds`, capped at `k`.
pub fn khop_distances(g: &KnowledgeGraph, seeds: &[EntityId], k: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_entities()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if dist[s.0].is_none() {
            dist[s.0] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v.0].unwrap();
        if d == k {
            continue;
        }
        for &(_, w) in g.out_edges(v).iter().chain(g.in_edges(v)) {
            if dist[w.0].is_none() {
                dist[w.0] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Subgraph induced by the entities within undirected distance `k` of any seed:
/// a triple is kept when both endpoints are within reach.
///
/// Ids in the result are re-densified in triple order.
pub fn khop_subgraph(g: &KnowledgeGraph, seeds: &[EntityId], k: usize) -> KnowledgeGraph {
    let dist = khop_distances(g, seeds, k);
    let raw: Vec<RawTriple> = g
        .triples()
        .iter()
        .zip(g.raw_triples())
        .filter(|(t, _)| dist[t.head.0].is_some() && dist[t.tail.0].is_some())
        .map(|(_, r)| r)
        .collect();
    KnowledgeGraph::from_raw(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(h: &str, r: &str, t: &str) -> RawTriple {
        RawTriple::new(h, r, t)
    }

    #[test]
    fn zero_thresholds_only_deduplicate() {
        let input = vec![raw("a", "r", "b"), raw("a", "r", "b"), raw("b", "s", "c")];
        let g = filter_kg(&input, 0, 0).unwrap();
        assert_eq!(g.raw_triples(), vec![raw("a", "r", "b"), raw("b", "s", "c")]);
    }

    #[test]
    fn rare_relation_leaves_empty_graph() {
        let input: Vec<_> = (0..5).map(|i| raw(&format!("h{i}"), "r", &format!("t{i}"))).collect();
        let err = filter_kg(&input, 0, 6).unwrap_err();
        assert!(matches!(err, Error::EmptyGraph(_)));
    }

    #[test]
    fn removal_cascades() {
        // "x" has degree 2 only because of the rare relation; once "rare" goes,
        // x drops to degree 1 and its remaining triple must go too.
        let mut input = vec![raw("x", "rare", "hub"), raw("x", "common", "hub")];
        for i in 0..4 {
            input.push(raw(&format!("n{i}"), "common", "hub"));
            input.push(raw("hub", "common", &format!("n{i}")));
        }
        let g = filter_kg(&input, 2, 2).unwrap();
        assert!(g.entity_id("x").is_none());
        assert!(g.relation_id("rare").is_none());
    }

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_raw(&[raw("a", "r", "b"), raw("b", "r", "c"), raw("c", "r", "d")])
    }

    #[test]
    fn two_hop_chain() {
        let g = chain();
        let sub = khop_subgraph(&g, &[g.entity_id("a").unwrap()], 2);
        assert_eq!(sub.raw_triples(), vec![raw("a", "r", "b"), raw("b", "r", "c")]);
    }

    #[test]
    fn zero_hop_keeps_seed_only_triples() {
        let g = chain();
        let seeds = [g.entity_id("a").unwrap(), g.entity_id("b").unwrap(), g.entity_id("d").unwrap()];
        let sub = khop_subgraph(&g, &seeds, 0);
        assert_eq!(sub.raw_triples(), vec![raw("a", "r", "b")]);
    }

    #[test]
    fn large_k_saturates_to_component() {
        let mut triples = chain().raw_triples();
        triples.push(raw("p", "r", "q"));
        let g = KnowledgeGraph::from_raw(&triples);
        let sub = khop_subgraph(&g, &[g.entity_id("d").unwrap()], 10);
        assert_eq!(sub.num_triples(), 3);
        assert!(sub.entity_id("p").is_none());
    }

    #[test]
    fn distances_follow_edges_both_ways() {
        let g = chain();
        let d = khop_distances(&g, &[g.entity_id("c").unwrap()], 5);
        assert_eq!(d, vec![Some(2), Some(1), Some(0), Some(1)]);
    }
}
