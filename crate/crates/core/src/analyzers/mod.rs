//! Diagnoses layered on a processed [`TypeGraph`]: held locks, arrays of
//! lock-bearing structures prone to false sharing, and type conflicts.

use std::fmt;

use thiserror::Error;

use crate::graph::{Alternative, ArrayVerdict, Certainty, Node, NodeId, TypeGraph};
use crate::typecat::{TypeCatalog, TypeId, TypeShape};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("lock type `{0}` not in catalog")]
    UnknownLockType(String),
    #[error("lock type `{0}` is not flagged as a synchronization primitive")]
    NotSync(String),
    #[error("coherence granularity must be positive")]
    Granularity,
}

/// How to recognize a held lock and find its owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockModel {
    pub lock_types: Vec<String>,
    /// Offset of the owner word within the lock.
    pub owner_word_offset: u64,
    /// Applied to the owner word to get the owning thread.
    pub owner_mask: u64,
}

impl Default for LockModel {
    /// An adaptive mutex: the owning thread pointer in the first word, with
    /// the low three bits used as flags.
    fn default() -> Self {
        LockModel { lock_types: vec!["struct mutex".to_string()], owner_word_offset: 0, owner_mask: !7 }
    }
}

impl LockModel {
    pub fn resolve(&self, catalog: &TypeCatalog) -> Result<Vec<TypeId>, AnalyzerError> {
        self.lock_types
            .iter()
            .map(|name| {
                let ty = catalog.lookup(name).ok_or_else(|| AnalyzerError::UnknownLockType(name.clone()))?;
                if !catalog.is_sync(ty) {
                    return Err(AnalyzerError::NotSync(name.clone()));
                }
                Ok(catalog.resolve_id(ty))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockDescriptor {
    /// The lock is the whole object.
    Whole,
    Symbol(String),
    /// `struct anon_map.serial_lock`
    Member(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockRecord {
    pub addr: u64,
    pub descriptor: LockDescriptor,
    pub owner: u64,
}

impl fmt::Display for LockRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.descriptor {
            LockDescriptor::Whole => write!(f, "{:x} is owned by {:x}", self.addr, self.owner),
            LockDescriptor::Symbol(d) | LockDescriptor::Member(d) => {
                write!(f, "{:x} ({d}) is owned by {:x}", self.addr, self.owner)
            }
        }
    }
}

/// `(offset, type)` of every typed instance making up an identified node:
/// the array elements, the flexible-array head and trailing elements, or
/// the node's single type.
fn instances(g: &TypeGraph, node: &Node) -> Vec<(u64, TypeId)> {
    let Some(ty) = node.single_type() else { return Vec::new() };
    let catalog = g.catalog();
    match node.verdict {
        ArrayVerdict::Array { count } => {
            let tsize = catalog.size_of(ty);
            (0..count).map(|i| (i * tsize, ty)).collect()
        }
        ArrayVerdict::Fam { element, count } => {
            let mut out = vec![(0, ty)];
            if let Ok(Some(fam)) = catalog.detect_fam(ty) {
                let esize = catalog.size_of(element);
                out.extend((fam.declared_count..count).map(|k| (fam.offset + k * esize, element)));
            }
            out
        }
        ArrayVerdict::Undetermined | ArrayVerdict::NotArray => vec![(0, ty)],
    }
}

/// Every lock of a model type, inside a known or conjectured node, whose
/// owner word is nonzero. Sorted by lock address.
pub fn findlocks(g: &TypeGraph, model: &LockModel) -> Result<Vec<LockRecord>, AnalyzerError> {
    let lock_types = model.resolve(g.catalog())?;
    let catalog = g.catalog();
    let image = g.image();
    let mut out = Vec::new();
    for node in g.nodes() {
        if !matches!(node.certainty(), Certainty::Known | Certainty::Conjectured) {
            continue;
        }
        for (inst_off, ty) in instances(g, node) {
            let Ok(syncs) = catalog.sync_members(ty) else { continue };
            for m in syncs.iter() {
                if !lock_types.contains(&catalog.resolve_id(m.ty)) {
                    continue;
                }
                let offset = inst_off + m.offset;
                let addr = node.base + offset;
                let word = match image.read_word(addr + model.owner_word_offset) {
                    Ok(w) => w,
                    Err(e) => {
                        log::warn!("lock at {addr:#x}: {e}");
                        continue;
                    }
                };
                let owner = word & model.owner_mask;
                if owner == 0 {
                    continue;
                }
                let descriptor = match node.symbol() {
                    Some(sym) if m.path.is_empty() => LockDescriptor::Symbol(sym.to_string()),
                    Some(sym) => LockDescriptor::Symbol(format!("{sym}.{}", m.path.member_suffix())),
                    None if m.path.is_empty() && offset == 0 && node.size <= catalog.size_of(m.ty).max(1) => {
                        LockDescriptor::Whole
                    }
                    None => LockDescriptor::Member(m.path.to_string()),
                };
                out.push(LockRecord { addr, descriptor, owner });
            }
        }
    }
    out.sort_by_key(|r| r.addr);
    Ok(out)
}

/// An array of small lock-bearing structures spanning several coherence
/// units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FalseSharingRecord {
    pub addr: u64,
    pub symbol: Option<String>,
    pub element_type: String,
    pub element_size: u64,
    pub total_size: u64,
}

pub const DEFAULT_GRANULARITY: u64 = 64;

/// The element type and total size if `node` is an array: a static with a
/// declared array type, or a heap node with an array verdict.
pub fn array_shape(g: &TypeGraph, node: &Node) -> Option<(TypeId, u64)> {
    let ty = node.single_type()?;
    let catalog = g.catalog();
    if node.is_static() {
        match catalog.def(ty).shape {
            TypeShape::Array { element, .. } => Some((catalog.resolve_id(element), catalog.size_of(ty))),
            _ => None,
        }
    } else {
        match node.verdict {
            ArrayVerdict::Array { .. } => Some((ty, node.size)),
            _ => None,
        }
    }
}

/// Whether an array of `element` totalling `total` bytes qualifies.
pub fn false_sharing_candidate(catalog: &TypeCatalog, element: TypeId, total: u64, granularity: u64) -> bool {
    let def = catalog.def(element);
    def.is_struct()
        && def.size < granularity
        && total > granularity
        && catalog.sync_members(element).is_ok_and(|s| !s.is_empty())
}

/// Statics first, then heap nodes, each in address order.
pub fn findfalse(g: &TypeGraph, granularity: u64) -> Result<Vec<FalseSharingRecord>, AnalyzerError> {
    if granularity == 0 {
        return Err(AnalyzerError::Granularity);
    }
    let catalog = g.catalog();
    let mut statics = Vec::new();
    let mut heap = Vec::new();
    for node in g.nodes() {
        let Some((element, total)) = array_shape(g, node) else { continue };
        if !false_sharing_candidate(catalog, element, total, granularity) {
            continue;
        }
        let rec = FalseSharingRecord {
            addr: node.base,
            symbol: node.symbol().map(str::to_string),
            element_type: catalog.name(element).to_string(),
            element_size: catalog.size_of(element),
            total_size: total,
        };
        if node.is_static() {
            statics.push(rec);
        } else {
            heap.push(rec);
        }
    }
    statics.extend(heap);
    Ok(statics)
}

/// The five-column table, header included.
pub fn render_findfalse(records: &[FalseSharingRecord]) -> String {
    let mut out = format!("{:>11} {:<28} {:<22} {:>2} {:>7}\n", "ADDR", "SYMBOL", "TYPE", "SZ", "TOTSIZE");
    for r in records {
        out.push_str(&format!(
            "{:>11x} {:<28} {:<22} {:>2} {:>7}\n",
            r.addr,
            r.symbol.as_deref().unwrap_or("-"),
            r.element_type,
            r.element_size,
            r.total_size
        ));
    }
    out
}

/// A node holding two or more distinct base-offset inferences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictRecord {
    pub node: NodeId,
    pub base: u64,
    pub alternatives: Vec<Alternative>,
}

/// Sorted by base address.
pub fn conflicts(g: &TypeGraph) -> Vec<ConflictRecord> {
    g.nodes()
        .iter()
        .filter(|n| n.certainty() == Certainty::Conflict)
        .map(|n| ConflictRecord { node: n.id, base: n.base, alternatives: g.whattype(n.base).alternatives })
        .collect()
}

impl fmt::Display for ConflictRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x} is possibly one of the following:", self.base)?;
        for alt in &self.alternatives {
            write!(
                f,
                "\n  {} (from {:x}+{:x}, type {})",
                alt.type_name, alt.from_base, alt.from_offset, alt.referring_type
            )?;
        }
        Ok(())
    }
}
