//! Object/pointer graph and the type inference pipeline.
//!
//! One node per heap object and per static symbol; one edge per aligned
//! word whose value lands inside a heap object. Types flow out from nodes
//! whose type is known (typed allocator caches, static symbols, manual pins)
//! through the pointer members of those types. See [`TypeGraph::run`] for
//! the pass order.

mod passes;
mod reach;
mod report;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dumpio::{CacheId, DumpImage};
use crate::typecat::{MemberPath, TypeCatalog, TypeId, TypeKind};

pub use passes::{check_array, fam_count};
pub use reach::Reach;
pub use report::{Alternative, Certainty, TypeReport};
pub use stats::{render_all, InitialCounts, PassKind, PassStats, StatsStyle};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cache/type table: malformed document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("cache/type table: duplicate cache `{0}`")]
    DuplicateCache(String),
    #[error("cache/type table: unknown type `{0}`")]
    UnknownType(String),
    #[error("cache/type table: cache `{0}` not present in dump")]
    UnknownCache(String),
    #[error("address {0:#x} is not within any object")]
    NoObject(u64),
    #[error("{addr:#x} is already known to be {known}")]
    KnownConflict { addr: u64, known: String },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Allocator caches whose objects are all of one type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheTypeTable {
    entries: Vec<(String, TypeId)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheTableDocument {
    pub entries: Vec<CacheTableEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheTableEntry {
    pub cache: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl CacheTypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str, catalog: &TypeCatalog) -> Result<Self> {
        let doc: CacheTableDocument = serde_json::from_str(text)?;
        Self::load(&doc, catalog)
    }

    pub fn load(doc: &CacheTableDocument, catalog: &TypeCatalog) -> Result<Self> {
        let mut table = CacheTypeTable::new();
        for e in &doc.entries {
            let ty = catalog.lookup(&e.ty).ok_or_else(|| GraphError::UnknownType(e.ty.clone()))?;
            table.insert(&e.cache, ty)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, cache: &str, ty: TypeId) -> Result<()> {
        if self.get(cache).is_some() {
            return Err(GraphError::DuplicateCache(cache.to_string()));
        }
        self.entries.push((cache.to_string(), ty));
        Ok(())
    }

    pub fn get(&self, cache: &str) -> Option<TypeId> {
        self.entries.iter().find(|(c, _)| c == cache).map(|&(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, TypeId)] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Heap { cache: CacheId },
    Static { symbol: String },
}

/// Where a base-offset inference came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Referrer {
    pub node: NodeId,
    pub src_offset: u64,
    /// Pointer member of the referring type that produced the inference.
    pub via: MemberPath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inference {
    /// Always typedef-resolved.
    pub ty: TypeId,
    /// `None` for known and pinned types.
    pub referrer: Option<Referrer>,
}

/// Interior interpretation of part of a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentNote {
    pub offset: u64,
    pub ty: TypeId,
    pub via: MemberPath,
    pub referrer: NodeId,
    /// Offset of the pointer within the referrer.
    pub src_offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrayVerdict {
    #[default]
    Undetermined,
    Array {
        count: u64,
    },
    Fam {
        element: TypeId,
        count: u64,
    },
    NotArray,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub base: u64,
    pub size: u64,
    pub kind: NodeKind,
    pub inferences: Vec<Inference>,
    pub known: bool,
    pub fragments: Vec<FragmentNote>,
    /// Inference attempts that could not apply: unions, types larger than
    /// the object, or types contradicting a known/pinned node.
    pub rejected: Vec<FragmentNote>,
    pub marked: bool,
    pub verdict: ArrayVerdict,
    pub pinned: bool,
    out_edges: Range<u32>,
    in_edges: Vec<EdgeId>,
}

impl Node {
    pub fn is_static(&self) -> bool {
        matches!(self.kind, NodeKind::Static { .. })
    }

    pub fn symbol(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Static { symbol } => Some(symbol),
            NodeKind::Heap { .. } => None,
        }
    }

    pub fn cache(&self) -> Option<CacheId> {
        match self.kind {
            NodeKind::Heap { cache } => Some(cache),
            NodeKind::Static { .. } => None,
        }
    }

    /// The single inferred type, if there is exactly one.
    pub fn single_type(&self) -> Option<TypeId> {
        match self.inferences.as_slice() {
            [only] => Some(only.ty),
            _ => None,
        }
    }

    pub fn inferred_types(&self) -> impl Iterator<Item = TypeId> + '_ {
        self.inferences.iter().map(|i| i.ty)
    }

    pub fn certainty(&self) -> Certainty {
        if self.known {
            return Certainty::Known;
        }
        match self.inferences.len() {
            1 => Certainty::Conjectured,
            0 if !self.fragments.is_empty() => Certainty::Fragment,
            0 => Certainty::Unknown,
            _ => Certainty::Conflict,
        }
    }

    /// Known or conjectured: the node has exactly one type to stand on.
    pub fn is_identified(&self) -> bool {
        self.known || self.inferences.len() == 1
    }

    pub fn out_edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        self.out_edges.clone().map(EdgeId)
    }

    pub fn in_edge_ids(&self) -> &[EdgeId] {
        &self.in_edges
    }

    fn reset(&mut self) {
        self.inferences.clear();
        self.known = false;
        self.fragments.clear();
        self.rejected.clear();
        self.marked = false;
        self.verdict = ArrayVerdict::Undetermined;
        self.pinned = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub src_offset: u64,
    pub dst: NodeId,
    pub dst_offset: u64,
}

pub struct TypeGraph {
    catalog: Arc<TypeCatalog>,
    image: Arc<DumpImage>,
    table: CacheTypeTable,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    heap_count: usize,
    pins: BTreeMap<NodeId, TypeId>,
    initial: InitialCounts,
    build_time: Duration,
    history: Vec<PassStats>,
    fragment_keys: HashSet<(NodeId, u64, TypeId, NodeId)>,
}

impl fmt::Debug for TypeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TypeGraph").field("nodes", &self.nodes.len()).field("edges", &self.edges.len()).finish()
    }
}

impl TypeGraph {
    /// Builds nodes and edges and applies the known types. No pass runs.
    pub fn build(image: Arc<DumpImage>, catalog: Arc<TypeCatalog>, table: CacheTypeTable) -> Result<Self> {
        let start = Instant::now();
        for (cache, _) in table.entries() {
            if image.cache_by_name(cache).is_none() {
                return Err(GraphError::UnknownCache(cache.clone()));
            }
        }

        enum Source {
            Heap(usize),
            Static(usize),
        }
        let mut order: Vec<(u64, Source)> = image
            .objects()
            .iter()
            .enumerate()
            .map(|(i, o)| (o.base, Source::Heap(i)))
            .chain(image.statics().iter().enumerate().map(|(i, s)| (s.base, Source::Static(i))))
            .collect();
        order.sort_by_key(|(base, _)| *base);

        let mut heap_node = vec![NodeId(0); image.objects().len()];
        let mut nodes = Vec::with_capacity(order.len());
        for (idx, (_, src)) in order.into_iter().enumerate() {
            let id = NodeId(idx as u32);
            let (base, size, kind) = match src {
                Source::Heap(i) => {
                    heap_node[i] = id;
                    let o = &image.objects()[i];
                    (o.base, o.size, NodeKind::Heap { cache: o.cache })
                }
                Source::Static(i) => {
                    let s = &image.statics()[i];
                    (s.base, s.size, NodeKind::Static { symbol: s.symbol.clone() })
                }
            };
            nodes.push(Node {
                id,
                base,
                size,
                kind,
                inferences: Vec::new(),
                known: false,
                fragments: Vec::new(),
                rejected: Vec::new(),
                marked: false,
                verdict: ArrayVerdict::Undetermined,
                pinned: false,
                out_edges: 0..0,
                in_edges: Vec::new(),
            });
        }

        // pointer scan; edges come out sorted by (src base, src offset)
        let ps = image.pointer_size() as u64;
        let mut edges: Vec<Edge> = Vec::new();
        for node in nodes.iter_mut() {
            let first = edges.len() as u32;
            let start_addr = node.base.div_ceil(ps) * ps;
            let end = node.base + node.size;
            if let Some(bytes) = image.bytes(start_addr, end.saturating_sub(start_addr)) {
                for (k, chunk) in bytes.chunks_exact(ps as usize).enumerate() {
                    let word = image.decode_word(chunk);
                    if word == 0 {
                        continue;
                    }
                    if let Some((obj, dst_offset)) = image.object_index_containing(word) {
                        let addr = start_addr + k as u64 * ps;
                        edges.push(Edge {
                            id: EdgeId(edges.len() as u32),
                            src: node.id,
                            src_offset: addr - node.base,
                            dst: heap_node[obj],
                            dst_offset,
                        });
                    }
                }
            }
            node.out_edges = first..edges.len() as u32;
        }
        for e in &edges {
            nodes[e.dst.index()].in_edges.push(e.id);
        }

        let mut graph = TypeGraph {
            heap_count: image.objects().len(),
            initial: InitialCounts {
                maximum_nodes: maximum_nodes(&image),
                actual_nodes: image.objects().len() as u64,
                anchored_nodes: image.statics().len() as u64,
            },
            catalog,
            image,
            table,
            nodes,
            edges,
            pins: BTreeMap::new(),
            build_time: Duration::ZERO,
            history: Vec::new(),
            fragment_keys: HashSet::new(),
        };
        graph.reset();
        graph.build_time = start.elapsed();
        Ok(graph)
    }

    /// Clears all inference state, then reapplies known and pinned types.
    fn reset(&mut self) {
        let statics: BTreeMap<u64, TypeId> = self.image.statics().iter().map(|s| (s.base, s.ty)).collect();
        for node in self.nodes.iter_mut() {
            node.reset();
            let known = match &node.kind {
                NodeKind::Static { .. } => statics.get(&node.base).copied(),
                NodeKind::Heap { cache } => {
                    let name = &self.image.cache(*cache).expect("validated cache").name;
                    self.table.get(name)
                }
            };
            if let Some(ty) = known {
                node.known = true;
                node.inferences.push(Inference { ty: self.catalog.resolve_id(ty), referrer: None });
            }
        }
        for (&id, &ty) in &self.pins {
            let node = &mut self.nodes[id.index()];
            if !node.known {
                node.inferences = vec![Inference { ty, referrer: None }];
                node.pinned = true;
            }
        }
        self.fragment_keys.clear();
        self.history.clear();
    }

    pub fn catalog(&self) -> &TypeCatalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> &Arc<TypeCatalog> {
        &self.catalog
    }

    pub fn image(&self) -> &DumpImage {
        &self.image
    }

    pub fn table(&self) -> &CacheTypeTable {
        &self.table
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn heap_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_static())
    }

    pub fn heap_count(&self) -> usize {
        self.heap_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn out_edges(&self, id: NodeId) -> &[Edge] {
        let r = &self.nodes[id.index()].out_edges;
        &self.edges[r.start as usize..r.end as usize]
    }

    /// The edge stored at `src_offset` within `src`, if any.
    pub fn edge_at(&self, src: NodeId, src_offset: u64) -> Option<&Edge> {
        let out = self.out_edges(src);
        out.binary_search_by_key(&src_offset, |e| e.src_offset).ok().map(|i| &out[i])
    }

    /// Node holding `addr` (heap object or static) and the offset into it.
    pub fn node_containing(&self, addr: u64) -> Option<(NodeId, u64)> {
        let i = self.nodes.partition_point(|n| n.base <= addr);
        if i == 0 {
            return None;
        }
        let n = &self.nodes[i - 1];
        (addr < n.base + n.size.max(1)).then(|| (n.id, addr - n.base))
    }

    pub fn node_at(&self, base: u64) -> Option<NodeId> {
        self.node_containing(base).filter(|&(_, off)| off == 0).map(|(id, _)| id)
    }

    pub fn pins(&self) -> &BTreeMap<NodeId, TypeId> {
        &self.pins
    }

    /// Stats of the most recent [`run`](Self::run).
    pub fn history(&self) -> &[PassStats] {
        &self.history
    }

    /// Display name of a node's type, or its array/FAM shape.
    pub fn shape_name(&self, node: &Node, ty: TypeId) -> String {
        let name = self.catalog.name(ty);
        match node.verdict {
            ArrayVerdict::Array { count } => format!("{name}[{count}]"),
            ArrayVerdict::Fam { element, count } => {
                format!("{name} with {}[{count}]", self.catalog.name(element))
            }
            _ => name.to_string(),
        }
    }

    pub(crate) fn type_kind(&self, ty: TypeId) -> TypeKind {
        self.catalog.def(ty).kind()
    }
}

/// Slot capacity of the segments holding heap objects: each segment is
/// counted in slots of the smallest cache whose objects it contains.
fn maximum_nodes(image: &DumpImage) -> u64 {
    let mut slot: BTreeMap<u64, u64> = BTreeMap::new();
    for o in image.objects() {
        let Some(seg) = image.segment_containing(o.base) else { continue };
        let size = image.cache(o.cache).map_or(o.size, |c| c.object_size);
        let e = slot.entry(seg.base).or_insert(size);
        *e = (*e).min(size);
    }
    slot.iter().map(|(base, size)| image.segment_containing(*base).map_or(0, |s| s.bytes.len() as u64 / size)).sum()
}
