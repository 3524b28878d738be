use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::graph::{EntityId, KnowledgeGraph};
use super::io::{for_each_line, split_fields};
use crate::domain::Domain;
use crate::error::{Error, Result};

/// Item → KG entity mapping, partial and injective within each domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentTable {
    maps: [BTreeMap<String, EntityId>; 2],
}

impl AlignmentTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a mapping, rejecting conflicts and non-injective entries.
    pub fn insert(&mut self, domain: Domain, item: &str, entity: EntityId) -> Result<()> {
        let map = &mut self.maps[domain.index()];
        if let Some(&prev) = map.get(item) {
            if prev == entity {
                return Ok(());
            }
            return Err(Error::Data(format!(
                "item {item:?} in domain {domain} aligned to two entities"
            )));
        }
        if let Some((other, _)) = map.iter().find(|(_, &e)| e == entity) {
            return Err(Error::Data(format!(
                "items {other:?} and {item:?} in domain {domain} share entity id {}",
                entity.0
            )));
        }
        map.insert(item.to_owned(), entity);
        Ok(())
    }

    pub fn get(&self, domain: Domain, item: &str) -> Option<EntityId> {
        self.maps[domain.index()].get(item).copied()
    }

    pub fn len(&self, domain: Domain) -> usize {
        self.maps[domain.index()].len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.iter().all(BTreeMap::is_empty)
    }

    pub fn iter(&self, domain: Domain) -> impl Iterator<Item = (&str, EntityId)> {
        self.maps[domain.index()].iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Entity ids of every aligned item in either domain, deduplicated.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self.maps.iter().flat_map(|m| m.values().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Re-resolves all mappings against another graph by entity name,
    /// dropping items whose entity is absent there. Returns the new table and
    /// the number of dropped items.
    pub fn remap(&self, from: &KnowledgeGraph, to: &KnowledgeGraph) -> (AlignmentTable, usize) {
        let mut out = AlignmentTable::new();
        let mut dropped = 0;
        for d in Domain::BOTH {
            for (item, e) in self.iter(d) {
                match to.entity_id(from.entity_name(e)) {
                    // Injectivity is preserved: distinct names map to distinct ids.
                    Some(id) => {
                        out.maps[d.index()].insert(item.to_owned(), id);
                    }
                    None => dropped += 1,
                }
            }
        }
        (out, dropped)
    }

    pub fn write(&self, path: &Path, g: &KnowledgeGraph) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in Domain::BOTH {
            for (item, e) in self.iter(d) {
                writeln!(w, "{}\t{}\t{}", d.tag(), item, g.entity_name(e)).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a `domain item entity` alignment file, resolving entity strings in `g`.
///
/// Returns the table and the number of lines whose entity is not in `g`
/// (typically filtered away); those items are left unaligned.
pub fn load_alignment(path: &Path, g: &KnowledgeGraph) -> Result<(AlignmentTable, usize)> {
    let mut raw: HashMap<(Domain, String), String> = HashMap::new();
    let mut order = Vec::new();
    for_each_line(path, |line_no, line| {
        let [d, item, entity] = split_fields::<3>(line, path, line_no)?;
        let domain: Domain = d.parse().map_err(|e: Error| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let key = (domain, item.to_owned());
        match raw.get(&key) {
            Some(prev) if prev != entity => Err(Error::Data(format!(
                "{}:{line_no}: item {item:?} in domain {domain} already aligned to {prev:?}, now {entity:?}",
                path.display()
            ))),
            Some(_) => Ok(()),
            None => {
                raw.insert(key.clone(), entity.to_owned());
                order.push(key);
                Ok(())
            }
        }
    })?;

    let mut table = AlignmentTable::new();
    let mut dropped = 0;
    for key in order {
        let entity = &raw[&key];
        match g.entity_id(entity) {
            Some(id) => table.insert(key.0, &key.1, id)?,
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: {dropped} aligned items reference entities not in the graph", path.display());
    }
    Ok((table, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RawTriple;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::from_raw(&[RawTriple::new("m/1", "genre", "g/drama"), RawTriple::new("m/2", "genre", "g/drama")])
    }

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file() {
        let (t, dropped) = load_alignment(file("").path(), &graph()).unwrap();
        assert!(t.is_empty());
        assert_eq!(dropped, 0);
    }

    #[test]
    fn filtered_entity_is_dropped_with_warning() {
        let (t, dropped) = load_alignment(file("S\titem1\tm/1\nT\titem9\tm/gone\n").path(), &graph()).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(t.get(Domain::Source, "item1"), graph().entity_id("m/1"));
        assert_eq!(t.get(Domain::Target, "item9"), None);
    }

    #[test]
    fn conflicting_lines_are_a_data_error() {
        let err = load_alignment(file("S\titem1\tm/1\nS\titem1\tm/2\n").path(), &graph()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn same_item_id_in_both_domains_is_fine() {
        let (t, _) = load_alignment(file("S\tx\tm/1\nT\tx\tm/2\n").path(), &graph()).unwrap();
        assert_eq!(t.len(Domain::Source), 1);
        assert_eq!(t.len(Domain::Target), 1);
    }

    #[test]
    fn injective_per_domain() {
        let err = load_alignment(file("S\ta\tm/1\nS\tb\tm/1\n").path(), &graph()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn bad_domain_tag_is_parse_error() {
        let err = load_alignment(file("X\ta\tm/1\n").path(), &graph()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
