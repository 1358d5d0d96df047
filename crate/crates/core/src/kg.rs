//! Knowledge-graph dataset model.
//!
//! Triples are read from `head\trelation\ttail` files, entity and relation ids
//! are interned into first-appearance vocabularies, and an undirected adjacency
//! is built from the training split only so that walks never see held-out facts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;

use crate::error::{Error, ParseErrorKind, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.head, self.relation, self.tail)
    }
}

/// A triple with all three components resolved to vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedTriple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl IndexedTriple {
    pub fn pair(&self) -> (u32, u32) {
        (self.head, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Reads non-blank lines from a byte stream, yielding `(line_number, text)` with
/// any trailing `\r` removed. Line numbers are 1-based.
pub(crate) fn for_each_line<R: BufRead>(
    mut reader: R,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        line_no += 1;
        let mut bytes = buf.as_slice();
        if let Some(stripped) = bytes.strip_suffix(b"\n") {
            bytes = stripped;
        }
        if let Some(stripped) = bytes.strip_suffix(b"\r") {
            bytes = stripped;
        }
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
            line: line_no,
            kind: ParseErrorKind::Utf8,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        f(line_no, text)?;
    }
}

fn split_fields(line_no: usize, text: &str, expected: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            line: line_no,
            kind: ParseErrorKind::FieldCount {
                expected,
                found: fields.len(),
            },
        });
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(Error::Parse {
            line: line_no,
            kind: ParseErrorKind::EmptyField,
        });
    }
    Ok(fields)
}

/// Parses a `head\trelation\ttail` file. Blank lines are skipped.
pub fn parse_triples<R: BufRead>(reader: R) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for_each_line(reader, |line_no, text| {
        let fields = split_fields(line_no, text, 3)?;
        triples.push(Triple::new(fields[0], fields[1], fields[2]));
        Ok(())
    })?;
    Ok(triples)
}

/// Bijection between string ids and dense indices, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Self::new();
        for item in items {
            vocab.intern(&item);
        }
        vocab
    }

    pub fn intern(&mut self, item: &str) -> u32 {
        if let Some(&idx) = self.index.get(item) {
            return idx;
        }
        let idx = self.items.len() as u32;
        self.items.push(item.to_owned());
        self.index.insert(item.to_owned(), idx);
        idx
    }

    pub fn get(&self, item: &str) -> Option<u32> {
        self.index.get(item).copied()
    }

    pub fn name(&self, idx: u32) -> &str {
        &self.items[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Which directions of a relation were observed between two adjacent nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDir {
    /// Only `node -> neighbor` facts.
    Out,
    /// Only `neighbor -> node` facts.
    In,
    Both,
}

impl EdgeDir {
    fn merge(self, other: EdgeDir) -> EdgeDir {
        if self == other {
            self
        } else {
            EdgeDir::Both
        }
    }
}

/// Undirected adjacency in CSR layout. Neighbor lists are sorted and
/// deduplicated; self-loops are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    dirs: Vec<EdgeDir>,
}

impl Adjacency {
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut lists: Vec<BTreeMap<u32, EdgeDir>> = vec![BTreeMap::new(); node_count];
        for (from, to) in edges {
            if from == to {
                continue;
            }
            let e = lists[from as usize].entry(to).or_insert(EdgeDir::Out);
            *e = e.merge(EdgeDir::Out);
            let e = lists[to as usize].entry(from).or_insert(EdgeDir::In);
            *e = e.merge(EdgeDir::In);
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut neighbors = Vec::new();
        let mut dirs = Vec::new();
        offsets.push(0);
        for list in lists {
            for (n, d) in list {
                neighbors.push(n);
                dirs.push(d);
            }
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            dirs,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let n = node as usize;
        &self.neighbors[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn edge_dirs(&self, node: u32) -> &[EdgeDir] {
        let n = node as usize;
        &self.dirs[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn degree(&self, node: u32) -> usize {
        let n = node as usize;
        self.offsets[n + 1] - self.offsets[n]
    }

    /// Position of `node`'s first neighbor in the flat neighbor array.
    pub fn offset(&self, node: u32) -> usize {
        self.offsets[node as usize]
    }

    pub fn is_adjacent(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Total number of directed adjacency entries (twice the undirected edge count).
    pub fn entry_count(&self) -> usize {
        self.neighbors.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<IndexedTriple>,
    pub valid: Vec<IndexedTriple>,
    pub test: Vec<IndexedTriple>,
    pub adjacency: Adjacency,
}

impl KnowledgeGraph {
    pub fn split(&self, split: Split) -> &[IndexedTriple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn resolve(&self, t: &IndexedTriple) -> Triple {
        Triple::new(
            self.entities.name(t.head),
            self.relations.name(t.relation),
            self.entities.name(t.tail),
        )
    }

    pub fn entity(&self, id: &str) -> Result<u32> {
        self.entities
            .get(id)
            .ok_or_else(|| Error::UnknownEntity(id.to_owned()))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Rebuilds a graph from already-indexed parts, e.g. when loading a cache.
    pub fn from_indexed(
        entities: Vocab,
        relations: Vocab,
        train: Vec<IndexedTriple>,
        valid: Vec<IndexedTriple>,
        test: Vec<IndexedTriple>,
    ) -> Self {
        let adjacency =
            Adjacency::from_edges(entities.len(), train.iter().map(|t| (t.head, t.tail)));
        Self {
            entities,
            relations,
            train,
            valid,
            test,
            adjacency,
        }
    }
}

/// Interns all three splits (train first) and builds the training adjacency.
pub fn build_graph(train: &[Triple], valid: &[Triple], test: &[Triple]) -> KnowledgeGraph {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut index = |triples: &[Triple]| -> Vec<IndexedTriple> {
        triples
            .iter()
            .map(|t| IndexedTriple {
                head: entities.intern(&t.head),
                relation: relations.intern(&t.relation),
                tail: entities.intern(&t.tail),
            })
            .collect()
    };
    let train = index(train);
    let valid = index(valid);
    let test = index(test);
    KnowledgeGraph::from_indexed(entities, relations, train, valid, test)
}

#[derive(Debug, Clone, Default)]
pub struct NameMap {
    mapping: HashMap<String, String>,
    pub overwrites: usize,
}

/// Result of a name lookup; `fallback` is set when the raw id was returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NameLookup<'a> {
    pub name: &'a str,
    pub fallback: bool,
}

impl NameMap {
    pub fn insert(&mut self, id: impl Into<String>, name: impl Into<String>) {
        if self.mapping.insert(id.into(), name.into()).is_some() {
            self.overwrites += 1;
        }
    }

    pub fn lookup<'a>(&'a self, id: &'a str) -> NameLookup<'a> {
        match self.mapping.get(id) {
            Some(name) => NameLookup {
                name,
                fallback: false,
            },
            None => NameLookup {
                name: id,
                fallback: true,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// Reads an `entity-id\tname` sidecar. Later duplicates overwrite earlier ones.
pub fn load_names<R: BufRead>(reader: R) -> Result<NameMap> {
    let mut names = NameMap::default();
    for_each_line(reader, |line_no, text| {
        let fields = split_fields(line_no, text, 2)?;
        names.insert(fields[0], fields[1]);
        Ok(())
    })?;
    Ok(names)
}

/// Every relation known to hold for an ordered (head, tail) pair across all splits.
#[derive(Debug, Clone, Default)]
pub struct PairRelationIndex {
    index: HashMap<(u32, u32), Vec<u32>>,
}

impl PairRelationIndex {
    /// Sorted relation indices for the pair, if any.
    pub fn get(&self, head: u32, tail: u32) -> Option<&[u32]> {
        self.index.get(&(head, tail)).map(Vec::as_slice)
    }

    pub fn contains(&self, head: u32, tail: u32, relation: u32) -> bool {
        self.get(head, tail)
            .is_some_and(|rs| rs.binary_search(&relation).is_ok())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

pub fn build_pair_index(graph: &KnowledgeGraph) -> PairRelationIndex {
    let mut index: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for split in Split::ALL {
        for t in graph.split(split) {
            index.entry(t.pair()).or_default().push(t.relation);
        }
    }
    for rels in index.values_mut() {
        rels.sort_unstable();
        rels.dedup();
    }
    PairRelationIndex { index }
}

/// Multi-label targets for the pairs of one split, in (head, tail) order.
/// Relation lists are sorted and deduplicated.
pub fn pair_targets(graph: &KnowledgeGraph, split: Split) -> Vec<((u32, u32), Vec<u32>)> {
    let mut map: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for t in graph.split(split) {
        map.entry(t.pair()).or_default().push(t.relation);
    }
    map.into_iter()
        .map(|(pair, mut rels)| {
            rels.sort_unstable();
            rels.dedup();
            (pair, rels)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub isolated_entities: usize,
    pub unmapped_names: usize,
}

impl GraphStats {
    pub fn collect(graph: &KnowledgeGraph, names: &NameMap) -> Self {
        let isolated_entities = (0..graph.num_entities() as u32)
            .filter(|&e| graph.adjacency.degree(e) == 0)
            .count();
        let unmapped_names = graph
            .entities
            .items()
            .iter()
            .filter(|id| names.lookup(id).fallback)
            .count();
        Self {
            entities: graph.num_entities(),
            relations: graph.num_relations(),
            train: graph.train.len(),
            valid: graph.valid.len(),
            test: graph.test.len(),
            isolated_entities,
            unmapped_names,
        }
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities={}", self.entities)?;
        writeln!(f, "relations={}", self.relations)?;
        writeln!(f, "train_triples={}", self.train)?;
        writeln!(f, "valid_triples={}", self.valid)?;
        writeln!(f, "test_triples={}", self.test)?;
        writeln!(f, "isolated_entities={}", self.isolated_entities)?;
        write!(f, "unmapped_names={}", self.unmapped_names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl)
    }

    #[test]
    fn parses_tab_separated_line() {
        let triples = parse_triples("A\t/loc/in\tB\n".as_bytes()).unwrap();
        assert_eq!(triples, vec![t("A", "/loc/in", "B")]);
    }

    #[test]
    fn skips_blank_lines_and_handles_crlf() {
        let triples = parse_triples("\nA\tr\tB\r\n\r\nC\tr\tD".as_bytes()).unwrap();
        assert_eq!(triples, vec![t("A", "r", "B"), t("C", "r", "D")]);
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = parse_triples("A\tr\tB\nA\tB\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, kind } => {
                assert_eq!(line, 2);
                assert_eq!(
                    kind,
                    ParseErrorKind::FieldCount {
                        expected: 3,
                        found: 2
                    }
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_utf8_is_a_decode_error() {
        let bytes: &[u8] = b"A\tr\t\xff\xfe\n";
        let err = parse_triples(bytes).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                line: 1,
                kind: ParseErrorKind::Utf8
            }
        ));
    }

    #[test]
    fn single_triple_graph() {
        let g = build_graph(&[t("A", "r", "B")], &[], &[]);
        assert_eq!(g.num_entities(), 2);
        assert_eq!(g.num_relations(), 1);
        assert_eq!(g.adjacency.neighbors(0), &[1]);
        assert_eq!(g.adjacency.neighbors(1), &[0]);
        assert_eq!(g.adjacency.edge_dirs(0), &[EdgeDir::Out]);
        assert_eq!(g.adjacency.edge_dirs(1), &[EdgeDir::In]);
    }

    #[test]
    fn test_only_entity_has_no_adjacency() {
        let g = build_graph(&[t("A", "r", "B")], &[], &[t("A", "r", "C")]);
        let c = g.entity("C").unwrap();
        assert_eq!(g.num_entities(), 3);
        assert_eq!(g.adjacency.degree(c), 0);
        assert!(!g.adjacency.is_adjacent(g.entity("A").unwrap(), c));
    }

    #[test]
    fn empty_inputs_give_empty_graph() {
        let g = build_graph(&[], &[], &[]);
        assert_eq!(g.num_entities(), 0);
        assert_eq!(g.adjacency.node_count(), 0);
    }

    #[test]
    fn names_fallback_and_overwrite() {
        let names = load_names("/m/0abc\tAlfred Nobel\n/m/1\tx\n/m/1\ty\n".as_bytes()).unwrap();
        assert_eq!(
            names.lookup("/m/0abc"),
            NameLookup {
                name: "Alfred Nobel",
                fallback: false
            }
        );
        assert_eq!(
            names.lookup("/m/zzz"),
            NameLookup {
                name: "/m/zzz",
                fallback: true
            }
        );
        assert_eq!(names.lookup("/m/1").name, "y");
        assert_eq!(names.overwrites, 1);
    }

    #[test]
    fn malformed_name_line() {
        let err = load_names("a\tb\nonly-one-field\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn pair_index_is_multi_label_and_directional() {
        let g = build_graph(&[t("A", "r1", "B"), t("A", "r2", "B")], &[], &[]);
        let idx = build_pair_index(&g);
        let (a, b) = (g.entity("A").unwrap(), g.entity("B").unwrap());
        assert_eq!(idx.get(a, b), Some(&[0u32, 1][..]));
        assert_eq!(idx.get(b, a), None);
    }

    #[test]
    fn train_targets_ignore_other_splits() {
        let g = build_graph(&[t("A", "r1", "B")], &[t("A", "r2", "B")], &[]);
        let targets = pair_targets(&g, Split::Train);
        assert_eq!(targets, vec![((0, 1), vec![0])]);
        let idx = build_pair_index(&g);
        assert_eq!(idx.get(0, 1), Some(&[0u32, 1][..]));
    }

    fn arb_triples() -> impl Strategy<Value = Vec<Triple>> {
        let id = "[a-e]";
        let rel = "r[0-3]";
        prop::collection::vec((id, rel, id).prop_map(|(h, r, t)| Triple::new(h, r, t)), 0..40)
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(triples in arb_triples()) {
            let text: String = triples.iter().map(|t| format!("{t}\n")).collect();
            prop_assert_eq!(parse_triples(text.as_bytes()).unwrap(), triples);
        }

        #[test]
        fn graph_invariants(train in arb_triples(), valid in arb_triples(), test in arb_triples()) {
            let g = build_graph(&train, &valid, &test);
            let again = build_graph(&train, &valid, &test);
            prop_assert_eq!(&g.entities, &again.entities);
            prop_assert_eq!(&g.relations, &again.relations);

            // every adjacency edge is induced by some train triple
            for a in 0..g.num_entities() as u32 {
                for &b in g.adjacency.neighbors(a) {
                    let induced = g.train.iter().any(|t| {
                        (t.head == a && t.tail == b) || (t.head == b && t.tail == a)
                    });
                    prop_assert!(induced);
                }
            }

            let idx = build_pair_index(&g);
            for split in Split::ALL {
                for t in g.split(split) {
                    prop_assert!(idx.contains(t.head, t.tail, t.relation));
                }
            }
        }
    }
}
