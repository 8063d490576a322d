//! Synthetic dumps with ground truth.
//!
//! A [`SynthSpec`] is a small allocation script: objects are allocated from
//! a modeled slab allocator (one general-purpose cache per size class plus
//! named single-type caches), linked through pointer members, and optionally
//! decorated with held locks, casts and stale references. [`generate`] turns
//! it into a [`DumpDocument`] and a [`GroundTruth`] that records what every
//! heap object really is.

pub mod corpus;
mod truth;

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzers::LockModel;
use crate::dumpio::{
    encode_word, parse_hex, CacheEntry, DumpDocument, Endianness, ObjectEntry, SegmentEntry, StaticEntry,
};
use crate::typecat::{TypeCatalog, TypeId, TypeKind, TypeShape};

pub use truth::{
    evaluate, ConflictTruth, EvalError, EvalReport, GroundTruth, LockTruth, Misidentified, ObjectKind, ObjectTruth,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("malformed synth spec: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("pointer size must be 4 or 8, not {0}")]
    PointerSize(u8),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("object `{0}` defined twice")]
    DuplicateObject(String),
    #[error("undefined object `{0}`")]
    UndefinedObject(String),
    #[error("`{0}` is not a flexible-array type")]
    NotFam(String),
    #[error("object `{name}`: zero-sized request")]
    ZeroRequest { name: String },
    #[error("object `{name}`: request of {size} bytes exceeds every general-purpose cache")]
    NoCache { name: String, size: u64 },
    #[error("object `{name}`: unknown typed cache `{cache}`")]
    UnknownCache { name: String, cache: String },
    #[error("object `{name}`: typed cache `{cache}` holds a different type")]
    CacheType { name: String, cache: String },
    #[error("`{object}`: bad member path `{path}`: {why}")]
    BadPath { object: String, path: String, why: String },
    #[error("`{object}`: `{path}` is not a pointer")]
    NotPointer { object: String, path: String },
    #[error("`{object}`: `{path}` is not a synchronization primitive")]
    NotLock { object: String, path: String },
    #[error("bad owner `{0}`")]
    BadOwner(String),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// A single-type allocator cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypedCache {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Directive {
    /// A heap object: one instance, an array of `count`, or a flexible-array
    /// struct with `fam_count` trailing-array elements in total.
    Alloc {
        name: String,
        #[serde(rename = "type")]
        ty: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fam_count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache: Option<String>,
    },
    /// Stores the address of `dst` (plus the offset of `dst_path` within it)
    /// in the pointer at `path` within `src`.
    Link {
        src: String,
        path: String,
        dst: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        dst_path: String,
    },
    Static {
        symbol: String,
        #[serde(rename = "type")]
        ty: String,
    },
    /// Writes `owner` (an object name or a `0x` address, plus `flags` in the
    /// low bits) into the lock at `path`.
    HoldLock {
        object: String,
        path: String,
        owner: String,
        #[serde(default)]
        flags: u64,
    },
    /// A link whose target is not of the pointee type.
    InjectCast { src: String, path: String, dst: String },
    /// A link left over from an object freed as the pointee type and
    /// reallocated as the target's type.
    InjectStale { src: String, path: String, dst: String },
    /// Declares that nothing identifies `object`.
    LeaveUnrooted { object: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Path of the catalog document, for tools that load specs from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    pub pointer_size: u8,
    pub endianness: Endianness,
    pub seed: u64,
    pub gp_sizes: Vec<u64>,
    #[serde(default)]
    pub typed_caches: Vec<TypedCache>,
    /// Fill pointer-sized integers with object addresses.
    #[serde(default)]
    pub adversarial: bool,
    /// Probability of an empty slot before each object.
    #[serde(default)]
    pub free_slot_ratio: f64,
    #[serde(default)]
    pub directives: Vec<Directive>,
}

impl SynthSpec {
    pub fn new(pointer_size: u8, gp_sizes: &[u64], seed: u64) -> Self {
        SynthSpec {
            catalog: None,
            pointer_size,
            endianness: Endianness::Little,
            seed,
            gp_sizes: gp_sizes.to_vec(),
            typed_caches: Vec::new(),
            adversarial: false,
            free_slot_ratio: 0.0,
            directives: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn typed_cache(&mut self, name: &str, ty: &str) -> &mut Self {
        self.typed_caches.push(TypedCache { name: name.into(), ty: ty.into() });
        self
    }

    pub fn alloc(&mut self, name: &str, ty: &str) -> &mut Self {
        self.push_alloc(name, ty, None, None, None)
    }

    pub fn alloc_array(&mut self, name: &str, ty: &str, count: u64) -> &mut Self {
        self.push_alloc(name, ty, Some(count), None, None)
    }

    pub fn alloc_fam(&mut self, name: &str, ty: &str, fam_count: u64) -> &mut Self {
        self.push_alloc(name, ty, None, Some(fam_count), None)
    }

    pub fn alloc_in(&mut self, name: &str, ty: &str, cache: &str) -> &mut Self {
        self.push_alloc(name, ty, None, None, Some(cache.into()))
    }

    fn push_alloc(
        &mut self,
        name: &str,
        ty: &str,
        count: Option<u64>,
        fam: Option<u64>,
        cache: Option<String>,
    ) -> &mut Self {
        self.directives.push(Directive::Alloc { name: name.into(), ty: ty.into(), count, fam_count: fam, cache });
        self
    }

    pub fn static_object(&mut self, symbol: &str, ty: &str) -> &mut Self {
        self.directives.push(Directive::Static { symbol: symbol.into(), ty: ty.into() });
        self
    }

    pub fn link(&mut self, src: &str, path: &str, dst: &str) -> &mut Self {
        self.link_into(src, path, dst, "")
    }

    pub fn link_into(&mut self, src: &str, path: &str, dst: &str, dst_path: &str) -> &mut Self {
        self.directives.push(Directive::Link {
            src: src.into(),
            path: path.into(),
            dst: dst.into(),
            dst_path: dst_path.into(),
        });
        self
    }

    pub fn hold_lock(&mut self, object: &str, path: &str, owner: &str, flags: u64) -> &mut Self {
        self.directives.push(Directive::HoldLock {
            object: object.into(),
            path: path.into(),
            owner: owner.into(),
            flags,
        });
        self
    }

    pub fn inject_cast(&mut self, src: &str, path: &str, dst: &str) -> &mut Self {
        self.directives.push(Directive::InjectCast { src: src.into(), path: path.into(), dst: dst.into() });
        self
    }

    pub fn inject_stale(&mut self, src: &str, path: &str, dst: &str) -> &mut Self {
        self.directives.push(Directive::InjectStale { src: src.into(), path: path.into(), dst: dst.into() });
        self
    }

    pub fn leave_unrooted(&mut self, object: &str) -> &mut Self {
        self.directives.push(Directive::LeaveUnrooted { object: object.into() });
        self
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub dump: DumpDocument,
    pub truth: GroundTruth,
}

/// Name of the general-purpose cache for a size class.
pub fn gp_cache_name(size: u64) -> String {
    format!("kmem_alloc_{size}")
}

/// Lowest heap address used for the given pointer size.
pub fn heap_base(pointer_size: u8) -> u64 {
    if pointer_size == 4 {
        0x3000_0000
    } else {
        0x300_0000_0000
    }
}

pub const STATICS_BASE: u64 = 0x0140_0000;

const SEGMENT_ALIGN: u64 = 0x2000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ref {
    Heap(usize),
    Static(usize),
}

struct HeapPlan {
    name: String,
    ty: TypeId,
    kind: ObjectKind,
    count: u64,
    request: u64,
    cache: usize,
    base: u64,
}

struct StaticPlan {
    symbol: String,
    ty: TypeId,
    size: u64,
    base: u64,
}

struct CachePlan {
    name: String,
    object_size: u64,
    general_purpose: bool,
    ty: Option<TypeId>,
    /// Slot index → heap object, `None` for a free slot.
    slots: Vec<Option<usize>>,
    base: u64,
}

/// A pending pointer store.
struct Store {
    src: Ref,
    src_path: String,
    dst: Ref,
    dst_path: String,
    typed: bool,
}

struct Ctx<'a> {
    catalog: &'a TypeCatalog,
    ps: u8,
    endianness: Endianness,
    heap: Vec<HeapPlan>,
    statics: Vec<StaticPlan>,
    names: HashMap<String, Ref>,
}

impl Ctx<'_> {
    fn lookup(&self, name: &str) -> Result<Ref> {
        self.names.get(name).copied().ok_or_else(|| SynthError::UndefinedObject(name.to_string()))
    }

    fn base_of(&self, r: Ref) -> u64 {
        match r {
            Ref::Heap(i) => self.heap[i].base,
            Ref::Static(i) => self.statics[i].base,
        }
    }

    fn name_of(&self, r: Ref) -> &str {
        match r {
            Ref::Heap(i) => &self.heap[i].name,
            Ref::Static(i) => &self.statics[i].symbol,
        }
    }

    /// Offset and type of the member named by `path` within object `r`.
    fn resolve(&self, r: Ref, path: &str) -> Result<(u64, TypeId)> {
        let bad = |why: &str| SynthError::BadPath {
            object: self.name_of(r).to_string(),
            path: path.to_string(),
            why: why.to_string(),
        };
        let steps = parse_path(path).ok_or_else(|| bad("syntax"))?;
        let (mut ty, extent, array_count, fam) = match r {
            Ref::Heap(i) => {
                let h = &self.heap[i];
                let fam = match h.kind {
                    ObjectKind::Fam => Some(self.catalog.detect_fam(h.ty).ok().flatten().expect("fam type")),
                    _ => None,
                };
                let count = (h.kind == ObjectKind::Array).then_some(h.count);
                (h.ty, h.request, count, fam)
            }
            Ref::Static(i) => (self.statics[i].ty, self.statics[i].size, None, None),
        };
        let mut off = 0;
        let mut rest = steps.as_slice();
        if let Some(count) = array_count {
            let mut idx = 0;
            if let Some(Step::Index(i)) = rest.first() {
                idx = *i;
                rest = &rest[1..];
            }
            if idx >= count {
                return Err(bad("index beyond allocation"));
            }
            off = idx * self.catalog.size_of(ty);
        }
        for (depth, step) in rest.iter().enumerate() {
            let def = self.catalog.def(self.catalog.resolve_id(ty));
            match (step, &def.shape) {
                (Step::Field(name), TypeShape::Struct(members) | TypeShape::Union(members)) => {
                    let m = members.iter().find(|m| &*m.name == name).ok_or_else(|| bad("no such member"))?;
                    off += m.offset;
                    ty = m.ty;
                }
                (Step::Index(i), TypeShape::Array { element, count }) => {
                    let is_fam_member = depth == 1 && fam.is_some_and(|f| f.offset == off);
                    if *i >= *count && !is_fam_member {
                        return Err(bad("index out of bounds"));
                    }
                    off += i * self.catalog.size_of(*element);
                    ty = *element;
                }
                _ => return Err(bad("step does not match type")),
            }
        }
        if off + self.catalog.size_of(ty) > extent {
            return Err(bad("beyond object"));
        }
        Ok((off, ty))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Field(String),
    Index(u64),
}

/// `a.b[3].c`, `[2].next`, or empty.
fn parse_path(path: &str) -> Option<Vec<Step>> {
    let mut out = Vec::new();
    let mut rest = path.trim();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('[') {
            let end = r.find(']')?;
            out.push(Step::Index(r[..end].trim().parse().ok()?));
            rest = &r[end + 1..];
        } else {
            let r = rest.strip_prefix('.').unwrap_or(rest);
            let end = r.find(['.', '[']).unwrap_or(r.len());
            if end == 0 {
                return None;
            }
            out.push(Step::Field(r[..end].to_string()));
            rest = &r[end..];
        }
    }
    Some(out)
}

/// Runs the script in `spec` against `catalog`.
pub fn generate(spec: &SynthSpec, catalog: &TypeCatalog) -> Result<Generated> {
    let ps = spec.pointer_size;
    if ps != 4 && ps != 8 {
        return Err(SynthError::PointerSize(ps));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lookup = |name: &str| catalog.lookup(name).ok_or_else(|| SynthError::UnknownType(name.to_string()));

    let mut gp_sizes = spec.gp_sizes.clone();
    gp_sizes.sort_unstable();
    gp_sizes.dedup();
    let mut caches: Vec<CachePlan> = gp_sizes
        .iter()
        .map(|&size| CachePlan {
            name: gp_cache_name(size),
            object_size: size,
            general_purpose: true,
            ty: None,
            slots: Vec::new(),
            base: 0,
        })
        .collect();
    let mut typed_index = HashMap::new();
    for tc in &spec.typed_caches {
        let ty = catalog.resolve_id(lookup(&tc.ty)?);
        typed_index.insert(tc.name.clone(), caches.len());
        caches.push(CachePlan {
            name: tc.name.clone(),
            object_size: align_up(catalog.size_of(ty).max(1), ps as u64),
            general_purpose: false,
            ty: Some(ty),
            slots: Vec::new(),
            base: 0,
        });
    }

    let mut ctx =
        Ctx { catalog, ps, endianness: spec.endianness, heap: Vec::new(), statics: Vec::new(), names: HashMap::new() };
    let mut stores = Vec::new();
    let mut locks = Vec::new();
    let mut unrooted = Vec::new();
    let mut stale = Vec::new();
    let mut casts = Vec::new();

    for d in &spec.directives {
        match d {
            Directive::Alloc { name, ty, count, fam_count, cache } => {
                if ctx.names.contains_key(name) {
                    return Err(SynthError::DuplicateObject(name.clone()));
                }
                let declared = lookup(ty)?;
                let tid = catalog.resolve_id(declared);
                let tsize = catalog.size_of(tid);
                let fam = catalog.detect_fam(tid).ok().flatten();
                let (kind, n, request) = match (count, fam_count, fam) {
                    (_, Some(n), Some(f)) => {
                        let msize = catalog.size_of(f.element);
                        (ObjectKind::Fam, *n, (f.offset + n * msize).max(tsize))
                    }
                    (_, Some(_), None) => return Err(SynthError::NotFam(ty.clone())),
                    (Some(n), None, _) if *n > 1 => (ObjectKind::Array, *n, n * tsize),
                    (_, None, Some(f)) => (ObjectKind::Fam, f.declared_count, tsize),
                    (_, None, None) => (ObjectKind::Single, 1, tsize),
                };
                if request == 0 {
                    return Err(SynthError::ZeroRequest { name: name.clone() });
                }
                let cache_idx = match cache {
                    Some(c) => {
                        let &idx = typed_index
                            .get(c)
                            .ok_or_else(|| SynthError::UnknownCache { name: name.clone(), cache: c.clone() })?;
                        if caches[idx].ty != Some(tid) || kind == ObjectKind::Array {
                            return Err(SynthError::CacheType { name: name.clone(), cache: c.clone() });
                        }
                        idx
                    }
                    None => gp_sizes
                        .iter()
                        .position(|&s| s >= request)
                        .ok_or(SynthError::NoCache { name: name.clone(), size: request })?,
                };
                let idx = ctx.heap.len();
                ctx.heap.push(HeapPlan {
                    name: name.clone(),
                    ty: tid,
                    kind,
                    count: n,
                    request,
                    cache: cache_idx,
                    base: 0,
                });
                ctx.names.insert(name.clone(), Ref::Heap(idx));
                if spec.free_slot_ratio > 0.0 && rng.gen_bool(spec.free_slot_ratio.min(1.0)) {
                    caches[cache_idx].slots.push(None);
                }
                caches[cache_idx].slots.push(Some(idx));
            }
            Directive::Static { symbol, ty } => {
                if ctx.names.contains_key(symbol) {
                    return Err(SynthError::DuplicateObject(symbol.clone()));
                }
                let tid = lookup(ty)?;
                let idx = ctx.statics.len();
                ctx.statics.push(StaticPlan { symbol: symbol.clone(), ty: tid, size: catalog.size_of(tid), base: 0 });
                ctx.names.insert(symbol.clone(), Ref::Static(idx));
            }
            Directive::Link { src, path, dst, dst_path } => {
                stores.push((src.clone(), path.clone(), dst.clone(), dst_path.clone(), true));
            }
            Directive::InjectCast { src, path, dst } => {
                stores.push((src.clone(), path.clone(), dst.clone(), String::new(), false));
                casts.push((src.clone(), path.clone(), dst.clone()));
            }
            Directive::InjectStale { src, path, dst } => {
                stores.push((src.clone(), path.clone(), dst.clone(), String::new(), false));
                stale.push((src.clone(), path.clone(), dst.clone()));
            }
            Directive::HoldLock { object, path, owner, flags } => {
                locks.push((object.clone(), path.clone(), owner.clone(), *flags));
            }
            Directive::LeaveUnrooted { object } => unrooted.push(object.clone()),
        }
    }
    let stores: Vec<Store> = stores
        .into_iter()
        .map(|(src, src_path, dst, dst_path, typed)| {
            Ok(Store { src: ctx.lookup(&src)?, src_path, dst: ctx.lookup(&dst)?, dst_path, typed })
        })
        .collect::<Result<_>>()?;

    // layout: one segment per nonempty cache, then the statics segment
    let mut cursor = heap_base(ps) + rng.gen_range(0..16u64) * SEGMENT_ALIGN;
    for cache in caches.iter_mut() {
        if cache.slots.is_empty() {
            continue;
        }
        cache.base = cursor;
        for (k, slot) in cache.slots.iter().enumerate() {
            if let Some(i) = slot {
                ctx.heap[*i].base = cache.base + k as u64 * cache.object_size;
            }
        }
        let len = cache.slots.len() as u64 * cache.object_size;
        cursor = align_up(cursor + len, SEGMENT_ALIGN) + rng.gen_range(1..4u64) * SEGMENT_ALIGN;
    }
    let mut scursor = STATICS_BASE;
    for s in ctx.statics.iter_mut() {
        s.base = scursor;
        scursor = align_up(scursor + s.size.max(1), 8);
    }

    // contents
    let object_addrs: Vec<u64> = ctx.heap.iter().map(|h| h.base).collect();
    let mut filler = Filler {
        catalog,
        ps,
        endianness: spec.endianness,
        adversarial: spec.adversarial,
        object_addrs: &object_addrs,
        rng: &mut rng,
    };
    let mut heap_bytes: Vec<Vec<u8>> =
        caches.iter().map(|c| vec![0u8; c.slots.len() * c.object_size as usize]).collect();
    for h in &ctx.heap {
        let cache = &caches[h.cache];
        let start = (h.base - cache.base) as usize;
        let buf = &mut heap_bytes[h.cache][start..start + h.request as usize];
        match h.kind {
            ObjectKind::Single => filler.fill(buf, 0, h.ty),
            ObjectKind::Array => {
                let tsize = catalog.size_of(h.ty);
                for i in 0..h.count {
                    filler.fill(buf, i * tsize, h.ty);
                }
            }
            ObjectKind::Fam => {
                filler.fill(buf, 0, h.ty);
                let f = catalog.detect_fam(h.ty).ok().flatten().expect("fam type");
                let msize = catalog.size_of(f.element);
                for k in f.declared_count..h.count {
                    filler.fill(buf, f.offset + k * msize, f.element);
                }
            }
        }
    }
    let mut static_bytes = vec![0u8; (scursor - STATICS_BASE) as usize];
    for s in &ctx.statics {
        let start = (s.base - STATICS_BASE) as usize;
        filler.fill(&mut static_bytes[start..start + s.size as usize], 0, s.ty);
    }

    let write_word =
        |ctx: &Ctx, heap_bytes: &mut Vec<Vec<u8>>, static_bytes: &mut Vec<u8>, r: Ref, off: u64, value: u64| {
            let ps = ctx.ps as usize;
            let slice = match r {
                Ref::Heap(i) => {
                    let h = &ctx.heap[i];
                    let start = (h.base - caches[h.cache].base + off) as usize;
                    &mut heap_bytes[h.cache][start..start + ps]
                }
                Ref::Static(i) => {
                    let start = (ctx.statics[i].base - STATICS_BASE + off) as usize;
                    &mut static_bytes[start..start + ps]
                }
            };
            encode_word(value, ctx.ps, ctx.endianness, slice);
        };

    // pointer stores; remember typed edges for rootedness
    let mut typed_edges: Vec<(Ref, Ref)> = Vec::new();
    for s in &stores {
        let (off, ty) = ctx.resolve(s.src, &s.src_path)?;
        let def = catalog.def(catalog.resolve_id(ty));
        let TypeShape::Pointer(pointee) = def.shape else {
            return Err(SynthError::NotPointer { object: ctx.name_of(s.src).to_string(), path: s.src_path.clone() });
        };
        let (dst_off, _) = if s.dst_path.is_empty() { (0, pointee) } else { ctx.resolve(s.dst, &s.dst_path)? };
        let value = ctx.base_of(s.dst) + dst_off;
        write_word(&ctx, &mut heap_bytes, &mut static_bytes, s.src, off, value);
        let pointee = catalog.resolve_id(pointee);
        if s.typed && catalog.size_of(pointee) > 0 && catalog.def(pointee).kind() != TypeKind::Function {
            typed_edges.push((s.src, s.dst));
        }
    }

    let model = LockModel::default();
    let mut lock_truth = Vec::new();
    for (object, path, owner, flags) in &locks {
        let r = ctx.lookup(object)?;
        let (off, ty) = ctx.resolve(r, path)?;
        if !catalog.is_sync(ty) {
            return Err(SynthError::NotLock { object: object.clone(), path: path.clone() });
        }
        let owner_addr = match owner.strip_prefix("0x") {
            Some(_) => parse_hex(owner).ok_or_else(|| SynthError::BadOwner(owner.clone()))?,
            None => ctx.base_of(ctx.lookup(owner)?),
        };
        if owner_addr == 0 || owner_addr & !model.owner_mask != 0 {
            return Err(SynthError::BadOwner(owner.clone()));
        }
        let lock = ctx.base_of(r) + off;
        write_word(
            &ctx,
            &mut heap_bytes,
            &mut static_bytes,
            r,
            off + model.owner_word_offset,
            owner_addr | (flags & !model.owner_mask),
        );
        lock_truth.push(LockTruth { addr: lock, owner: owner_addr });
    }
    lock_truth.sort_by_key(|l| l.addr);

    // rooted: reachable through typed links from statics and typed caches
    let mut rooted = vec![false; ctx.heap.len()];
    let mut adjacency: BTreeMap<Ref, Vec<Ref>> = BTreeMap::new();
    for &(a, b) in &typed_edges {
        adjacency.entry(a).or_default().push(b);
    }
    let mut queue: VecDeque<Ref> = (0..ctx.statics.len()).map(Ref::Static).collect();
    for (i, h) in ctx.heap.iter().enumerate() {
        if !caches[h.cache].general_purpose {
            rooted[i] = true;
            queue.push_back(Ref::Heap(i));
        }
    }
    while let Some(r) = queue.pop_front() {
        for &next in adjacency.get(&r).map(Vec::as_slice).unwrap_or(&[]) {
            if let Ref::Heap(i) = next {
                if !rooted[i] {
                    rooted[i] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    for name in &unrooted {
        if let Ref::Heap(i) = ctx.lookup(name)? {
            rooted[i] = false;
        }
    }

    let conflicts = stale
        .iter()
        .map(|(src, path, dst)| {
            let s = ctx.lookup(src)?;
            let d = ctx.lookup(dst)?;
            let (off, ty) = ctx.resolve(s, path)?;
            let TypeShape::Pointer(pointee) = catalog.def(catalog.resolve_id(ty)).shape else {
                return Err(SynthError::NotPointer { object: src.clone(), path: path.clone() });
            };
            let true_ty = match d {
                Ref::Heap(i) => ctx.heap[i].ty,
                Ref::Static(i) => ctx.statics[i].ty,
            };
            Ok(ConflictTruth {
                base: ctx.base_of(d),
                stale_type: catalog.name(catalog.resolve_id(pointee)).to_string(),
                true_type: catalog.name(catalog.resolve_id(true_ty)).to_string(),
                referrer: ctx.base_of(s) + off,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cast_truth = casts
        .iter()
        .map(|(src, path, dst)| {
            let s = ctx.lookup(src)?;
            let (off, _) = ctx.resolve(s, path)?;
            Ok((ctx.base_of(s) + off, ctx.base_of(ctx.lookup(dst)?)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dump = DumpDocument {
        format_version: 1,
        pointer_size: ps,
        endianness: spec.endianness,
        segments: Vec::new(),
        caches: Vec::new(),
        objects: Vec::new(),
        statics: Vec::new(),
    };
    for (k, cache) in caches.iter().enumerate() {
        dump.caches.push(CacheEntry {
            id: k as u32 + 1,
            name: cache.name.clone(),
            object_size: cache.object_size,
            general_purpose: cache.general_purpose,
        });
        if !cache.slots.is_empty() {
            dump.segments.push(SegmentEntry::new(cache.base, &heap_bytes[k]));
        }
    }
    if !static_bytes.is_empty() {
        dump.segments.push(SegmentEntry::new(STATICS_BASE, &static_bytes));
    }
    let mut objects: Vec<ObjectTruth> = Vec::with_capacity(ctx.heap.len());
    for (i, h) in ctx.heap.iter().enumerate() {
        let cache = &caches[h.cache];
        dump.objects.push(ObjectEntry { base: h.base, size: cache.object_size, cache: h.cache as u32 + 1 });
        objects.push(ObjectTruth {
            name: h.name.clone(),
            base: h.base,
            ty: catalog.name(h.ty).to_string(),
            kind: h.kind,
            count: h.count,
            rooted: rooted[i],
        });
    }
    dump.objects.sort_by_key(|o| o.base);
    objects.sort_by_key(|o| o.base);
    for s in &ctx.statics {
        dump.statics.push(StaticEntry { symbol: s.symbol.clone(), base: s.base, ty: catalog.name(s.ty).to_string() });
    }
    let truth = GroundTruth { objects, locks: lock_truth, conflicts, casts: cast_truth };
    Ok(Generated { dump, truth })
}

fn align_up(v: u64, a: u64) -> u64 {
    v.div_ceil(a) * a
}

struct Filler<'a, R: Rng> {
    catalog: &'a TypeCatalog,
    ps: u8,
    endianness: Endianness,
    adversarial: bool,
    object_addrs: &'a [u64],
    rng: &'a mut R,
}

impl<R: Rng> Filler<'_, R> {
    /// Writes plausible contents for one `ty` at `off`: small odd integers,
    /// lowercase letters in chars, zero in pointers, locks and unions.
    fn fill(&mut self, buf: &mut [u8], off: u64, ty: TypeId) {
        let catalog = self.catalog;
        let def = catalog.def(catalog.resolve_id(ty));
        if def.sync_primitive || catalog.is_sync(ty) {
            return;
        }
        let at = off as usize;
        match &def.shape {
            TypeShape::Base => {
                let size = def.size as usize;
                if size == 0 {
                    return;
                }
                if size == 1 && def.name.contains("char") {
                    buf[at] = b'a' + self.rng.gen_range(0..26u8);
                } else if size == 1 {
                    buf[at] = 2 * self.rng.gen_range(0..16u8) + 1;
                } else if self.adversarial && size == self.ps as usize && !self.object_addrs.is_empty() {
                    let v = self.object_addrs[self.rng.gen_range(0..self.object_addrs.len())];
                    encode_word(v, self.ps, self.endianness, &mut buf[at..at + size]);
                } else {
                    let v = 2 * self.rng.gen_range(0..128u64) + 1;
                    write_int(v, self.endianness, &mut buf[at..at + size]);
                }
            }
            TypeShape::Struct(members) => {
                for m in members {
                    self.fill(buf, off + m.offset, m.ty);
                }
            }
            TypeShape::Array { element, count } => {
                let esize = self.catalog.size_of(*element);
                for i in 0..*count {
                    self.fill(buf, off + i * esize, *element);
                }
            }
            TypeShape::Union(_) | TypeShape::Pointer(_) | TypeShape::Function | TypeShape::Typedef(_) => {}
        }
    }
}

fn write_int(v: u64, endianness: Endianness, out: &mut [u8]) {
    let n = out.len().min(8);
    let bytes = match endianness {
        Endianness::Little => v.to_le_bytes(),
        Endianness::Big => v.to_be_bytes(),
    };
    match endianness {
        Endianness::Little => out[..n].copy_from_slice(&bytes[..n]),
        Endianness::Big => out[..n].copy_from_slice(&bytes[8 - n..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_syntax() {
        assert_eq!(parse_path(""), Some(vec![]));
        assert_eq!(
            parse_path("a.b[3].c"),
            Some(vec![Step::Field("a".into()), Step::Field("b".into()), Step::Index(3), Step::Field("c".into())])
        );
        assert_eq!(parse_path("[2].next"), Some(vec![Step::Index(2), Step::Field("next".into())]));
        assert_eq!(parse_path("a..b"), None);
        assert_eq!(parse_path("a[x]"), None);
    }

    #[test]
    fn big_endian_ints_keep_low_bytes() {
        let mut b = [0u8; 4];
        write_int(0x11, Endianness::Big, &mut b);
        assert_eq!(b, [0, 0, 0, 0x11]);
        write_int(0x11, Endianness::Little, &mut b);
        assert_eq!(b, [0x11, 0, 0, 0]);
    }
}
