use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// A triple as read from a file, before dictionary encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// Multi-relational directed graph with dense entity and relation ids.
///
/// Per-entity edge lists are grouped by relation (a stable sort, so within a
/// relation neighbors keep triple order). Lookups for one relation are a
/// contiguous slice, and relabeling entities never changes summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    in_edges: Vec<Vec<(RelationId, EntityId)>>,
    out_edges: Vec<Vec<(RelationId, EntityId)>>,
}

impl KnowledgeGraph {
    /// Builds a graph from raw triples, dropping exact duplicates.
    ///
    /// Ids are assigned in order of first appearance (head, relation, tail of
    /// each triple in turn), so the same triple sequence always yields the
    /// same ids.
    pub fn from_raw<'a, I>(raw: I) -> Self
    where
        I: IntoIterator<Item = &'a RawTriple>,
    {
        let mut g = Self::empty();
        let mut seen = HashSet::new();
        for t in raw {
            let head = g.intern_entity(&t.head);
            let relation = g.intern_relation(&t.relation);
            let tail = g.intern_entity(&t.tail);
            let triple = Triple { head, relation, tail };
            if seen.insert(triple) {
                g.triples.push(triple);
            }
        }
        g.build_adjacency();
        g
    }

    /// Builds a graph directly from dense ids. Names default to the id digits.
    pub fn from_ids(n_entities: usize, n_relations: usize, triples: &[Triple]) -> Result<Self> {
        let mut g = Self::empty();
        for i in 0..n_entities {
            g.intern_entity(&format!("e{i}"));
        }
        for r in 0..n_relations {
            g.intern_relation(&format!("r{r}"));
        }
        let mut seen = HashSet::new();
        for &t in triples {
            if t.head.0 >= n_entities || t.tail.0 >= n_entities || t.relation.0 >= n_relations {
                return Err(Error::Lookup(format!("triple {t:?} references an unknown id")));
            }
            if seen.insert(t) {
                g.triples.push(t);
            }
        }
        g.build_adjacency();
        Ok(g)
    }

    fn empty() -> Self {
        Self {
            entity_names: Vec::new(),
            entity_index: HashMap::new(),
            relation_names: Vec::new(),
            relation_index: HashMap::new(),
            triples: Vec::new(),
            triple_set: HashSet::new(),
            in_edges: Vec::new(),
            out_edges: Vec::new(),
        }
    }

    fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len());
        self.entity_names.push(name.to_owned());
        self.entity_index.insert(name.to_owned(), id);
        id
    }

    fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len());
        self.relation_names.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), id);
        id
    }

    fn build_adjacency(&mut self) {
        let n = self.entity_names.len();
        self.in_edges = vec![Vec::new(); n];
        self.out_edges = vec![Vec::new(); n];
        for t in &self.triples {
            self.out_edges[t.head.0].push((t.relation, t.tail));
            self.in_edges[t.tail.0].push((t.relation, t.head));
        }
        for list in self.in_edges.iter_mut().chain(self.out_edges.iter_mut()) {
            list.sort_by_key(|&(r, _)| r);
        }
        self.triple_set = self.triples.iter().copied().collect();
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.0]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.0]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// All incoming `(relation, source)` edges of `entity`, grouped by relation.
    pub fn in_edges(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_edges[entity.0]
    }

    pub fn out_edges(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_edges[entity.0]
    }

    /// Heads `j` of triples `(j, relation, entity)`.
    pub fn in_neighbors(&self, entity: EntityId, relation: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        relation_slice(&self.in_edges[entity.0], relation).iter().map(|&(_, j)| j)
    }

    /// Tails `j` of triples `(entity, relation, j)`.
    pub fn out_neighbors(&self, entity: EntityId, relation: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        relation_slice(&self.out_edges[entity.0], relation).iter().map(|&(_, j)| j)
    }

    pub fn raw_triples(&self) -> Vec<RawTriple> {
        self.triples
            .iter()
            .map(|t| RawTriple {
                head: self.entity_names[t.head.0].clone(),
                relation: self.relation_names[t.relation.0].clone(),
                tail: self.entity_names[t.tail.0].clone(),
            })
            .collect()
    }

    /// Relabels entity `i` as `perm[i]`, keeping names attached to their entity.
    pub fn permute_entities(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_entities();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Data("entity relabeling is not a permutation".into()));
        }
        let mut names = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = self.entity_names[old].clone();
        }
        let mut g = Self::empty();
        for name in &names {
            g.intern_entity(name);
        }
        for name in &self.relation_names {
            g.intern_relation(name);
        }
        g.triples = self
            .triples
            .iter()
            .map(|t| Triple {
                head: EntityId(perm[t.head.0]),
                relation: t.relation,
                tail: EntityId(perm[t.tail.0]),
            })
            .collect();
        g.build_adjacency();
        Ok(g)
    }

    /// Shuffles neighbor order inside each adjacency list. Only used to test
    /// that aggregation is order-independent; lookups by relation still work
    /// because lists stay grouped by relation.
    #[doc(hidden)]
    pub fn shuffle_adjacency<R: rand::Rng>(&mut self, rng: &mut R) {
        use rand::seq::SliceRandom;
        for list in self.in_edges.iter_mut() {
            let mut start = 0;
            while start < list.len() {
                let rel = list[start].0;
                let end = start + list[start..].iter().take_while(|(r, _)| *r == rel).count();
                list[start..end].shuffle(rng);
                start = end;
            }
        }
    }
}

fn relation_slice(edges: &[(RelationId, EntityId)], relation: RelationId) -> &[(RelationId, EntityId)] {
    let lo = edges.partition_point(|&(r, _)| r < relation);
    let hi = lo + edges[lo..].partition_point(|&(r, _)| r == relation);
    &edges[lo..hi]
}
