//! Knowledge-graph model, triple-file ingestion, frequency filtering,
//! k-hop extraction and item alignment.

mod alignment;
mod graph;
mod io;
mod preprocess;

pub use alignment::{load_alignment, AlignmentTable};
pub use graph::{EntityId, KnowledgeGraph, RawTriple, RelationId, Triple};
pub use io::{load_triples, write_raw_triples, write_triples};
pub use preprocess::{
    filter_kg, khop_distances, khop_subgraph, DEFAULT_KHOP, DEFAULT_MIN_ENTITY_FREQ, DEFAULT_MIN_RELATION_TRIPLES,
};

pub(crate) use io::{for_each_line, split_fields};
