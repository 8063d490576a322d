//! Dump image loading and address queries.

use std::collections::HashMap;
use std::fmt;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::typecat::{TypeCatalog, TypeId};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("malformed dump document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unsupported pointer size {0}")]
    PointerSize(u8),
    #[error("segment at {0:#x}: bad base64 data")]
    SegmentData(u64),
    #[error("segment at {0:#x} is not pointer-aligned")]
    SegmentAlignment(u64),
    #[error("segments at {0:#x} and {1:#x} overlap")]
    SegmentOverlap(u64, u64),
    #[error("duplicate cache id {0}")]
    DuplicateCache(u32),
    #[error("cache `{0}` has zero object size")]
    ZeroCacheSize(String),
    #[error("general-purpose caches share object size {0}")]
    DuplicateGpSize(u64),
    #[error("object at {0:#x}: unknown cache id {1}")]
    UnknownCache(u64, u32),
    #[error("object at {base:#x}: size {size} exceeds cache object size {slot}")]
    ObjectTooLarge { base: u64, size: u64, slot: u64 },
    #[error("object at {0:#x}: zero size")]
    ZeroObject(u64),
    #[error("object at {0:#x} is not pointer-aligned")]
    ObjectAlignment(u64),
    #[error("objects at {0:#x} and {1:#x} overlap")]
    ObjectOverlap(u64, u64),
    #[error("{what} at {base:#x} lies outside every segment")]
    Unbacked { what: String, base: u64 },
    #[error("static `{symbol}`: unknown type `{ty}`")]
    UnknownStaticType { symbol: String, ty: String },
    #[error("address {0:#x} is unmapped")]
    Unmapped(u64),
    #[error("address {0:#x} is misaligned")]
    Misaligned(u64),
}

pub type Result<T, E = DumpError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
}

/// Serde adapter for `0x`-prefixed hex addresses.
pub mod hex_addr {
    use super::*;

    pub fn serialize<S: Serializer>(addr: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{addr:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        parse_hex(&text).ok_or_else(|| serde::de::Error::custom(format!("bad hex address `{text}`")))
    }
}

/// Parses a hex address with an optional `0x` prefix.
pub fn parse_hex(text: &str) -> Option<u64> {
    let t = text.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    if t.is_empty() {
        return None;
    }
    u64::from_str_radix(t, 16).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpDocument {
    pub format_version: u32,
    pub pointer_size: u8,
    pub endianness: Endianness,
    pub segments: Vec<SegmentEntry>,
    pub caches: Vec<CacheEntry>,
    pub objects: Vec<ObjectEntry>,
    pub statics: Vec<StaticEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    #[serde(with = "hex_addr")]
    pub base: u64,
    /// Base64-encoded raw bytes.
    pub data: String,
}

impl SegmentEntry {
    pub fn new(base: u64, bytes: &[u8]) -> Self {
        SegmentEntry { base, data: base64::engine::general_purpose::STANDARD.encode(bytes) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheEntry {
    pub id: u32,
    pub name: String,
    pub object_size: u64,
    pub general_purpose: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    #[serde(with = "hex_addr")]
    pub base: u64,
    pub size: u64,
    pub cache: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticEntry {
    pub symbol: String,
    #[serde(with = "hex_addr")]
    pub base: u64,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheId(pub u32);

impl fmt::Display for CacheId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub base: u64,
    pub bytes: Vec<u8>,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapObject {
    pub base: u64,
    pub size: u64,
    pub cache: CacheId,
}

impl HeapObject {
    pub fn end(&self) -> u64 {
        self.base + self.size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    pub id: CacheId,
    pub name: String,
    pub object_size: u64,
    pub general_purpose: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticObject {
    pub symbol: String,
    pub base: u64,
    pub size: u64,
    pub ty: TypeId,
}

#[derive(Debug, Clone)]
pub struct DumpImage {
    pointer_size: u8,
    endianness: Endianness,
    segments: Vec<Segment>,
    caches: Vec<Cache>,
    cache_index: HashMap<CacheId, usize>,
    objects: Vec<HeapObject>,
    statics: Vec<StaticObject>,
    gp_sizes: Vec<u64>,
}

impl DumpImage {
    pub fn from_json(text: &str, catalog: &TypeCatalog) -> Result<Self> {
        let doc: DumpDocument = serde_json::from_str(text)?;
        Self::load(&doc, catalog)
    }

    pub fn load(doc: &DumpDocument, catalog: &TypeCatalog) -> Result<Self> {
        if doc.format_version != 1 {
            return Err(DumpError::Version(doc.format_version));
        }
        let ps = doc.pointer_size;
        if ps != 4 && ps != 8 {
            return Err(DumpError::PointerSize(ps));
        }
        let align = ps as u64;

        let mut segments = Vec::with_capacity(doc.segments.len());
        for s in &doc.segments {
            if s.base % align != 0 {
                return Err(DumpError::SegmentAlignment(s.base));
            }
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(&s.data)
                .map_err(|_| DumpError::SegmentData(s.base))?;
            segments.push(Segment { base: s.base, bytes });
        }
        segments.sort_by_key(|s| s.base);
        for w in segments.windows(2) {
            if w[0].end() > w[1].base {
                return Err(DumpError::SegmentOverlap(w[0].base, w[1].base));
            }
        }

        let mut caches = Vec::with_capacity(doc.caches.len());
        let mut cache_index = HashMap::new();
        let mut gp_sizes = Vec::new();
        for c in &doc.caches {
            if cache_index.insert(CacheId(c.id), caches.len()).is_some() {
                return Err(DumpError::DuplicateCache(c.id));
            }
            if c.object_size == 0 {
                return Err(DumpError::ZeroCacheSize(c.name.clone()));
            }
            if c.general_purpose {
                if gp_sizes.contains(&c.object_size) {
                    return Err(DumpError::DuplicateGpSize(c.object_size));
                }
                gp_sizes.push(c.object_size);
            }
            caches.push(Cache {
                id: CacheId(c.id),
                name: c.name.clone(),
                object_size: c.object_size,
                general_purpose: c.general_purpose,
            });
        }
        gp_sizes.sort_unstable();

        let mut image = DumpImage {
            pointer_size: ps,
            endianness: doc.endianness,
            segments,
            caches,
            cache_index,
            objects: Vec::with_capacity(doc.objects.len()),
            statics: Vec::with_capacity(doc.statics.len()),
            gp_sizes,
        };

        for o in &doc.objects {
            let cache = image.cache(CacheId(o.cache)).ok_or(DumpError::UnknownCache(o.base, o.cache))?;
            if o.size == 0 {
                return Err(DumpError::ZeroObject(o.base));
            }
            if o.size > cache.object_size {
                return Err(DumpError::ObjectTooLarge { base: o.base, size: o.size, slot: cache.object_size });
            }
            if o.base % align != 0 {
                return Err(DumpError::ObjectAlignment(o.base));
            }
            if !image.range_backed(o.base, o.size) {
                return Err(DumpError::Unbacked { what: "object".into(), base: o.base });
            }
            image.objects.push(HeapObject { base: o.base, size: o.size, cache: CacheId(o.cache) });
        }
        image.objects.sort_by_key(|o| o.base);
        for w in image.objects.windows(2) {
            if w[0].end() > w[1].base {
                return Err(DumpError::ObjectOverlap(w[0].base, w[1].base));
            }
        }

        for s in &doc.statics {
            let ty = catalog
                .lookup(&s.ty)
                .ok_or_else(|| DumpError::UnknownStaticType { symbol: s.symbol.clone(), ty: s.ty.clone() })?;
            let size = catalog.size_of(ty);
            if !image.range_backed(s.base, size.max(1)) {
                return Err(DumpError::Unbacked { what: format!("static `{}`", s.symbol), base: s.base });
            }
            image.statics.push(StaticObject { symbol: s.symbol.clone(), base: s.base, size, ty });
        }
        image.statics.sort_by_key(|s| s.base);
        Ok(image)
    }

    pub fn pointer_size(&self) -> u8 {
        self.pointer_size
    }

    pub fn endianness(&self) -> Endianness {
        self.endianness
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn caches(&self) -> &[Cache] {
        &self.caches
    }

    pub fn objects(&self) -> &[HeapObject] {
        &self.objects
    }

    pub fn statics(&self) -> &[StaticObject] {
        &self.statics
    }

    pub fn cache(&self, id: CacheId) -> Option<&Cache> {
        self.cache_index.get(&id).map(|&i| &self.caches[i])
    }

    pub fn cache_by_name(&self, name: &str) -> Option<&Cache> {
        self.caches.iter().find(|c| c.name == name)
    }

    fn segment_index(&self, addr: u64) -> Option<usize> {
        let i = self.segments.partition_point(|s| s.base <= addr);
        (i > 0 && self.segments[i - 1].contains(addr)).then(|| i - 1)
    }

    pub fn segment_containing(&self, addr: u64) -> Option<&Segment> {
        self.segment_index(addr).map(|i| &self.segments[i])
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.segment_index(addr).is_some()
    }

    fn range_backed(&self, base: u64, len: u64) -> bool {
        self.bytes(base, len).is_some()
    }

    /// Raw bytes of `[addr, addr + len)` if the range lies in one segment.
    pub fn bytes(&self, addr: u64, len: u64) -> Option<&[u8]> {
        let seg = self.segment_containing(addr)?;
        let start = (addr - seg.base) as usize;
        let end = start.checked_add(len as usize)?;
        seg.bytes.get(start..end)
    }

    pub fn decode_word(&self, bytes: &[u8]) -> u64 {
        decode_word(bytes, self.pointer_size, self.endianness)
    }

    /// Reads the pointer-width word at an aligned, mapped address.
    pub fn read_word(&self, addr: u64) -> Result<u64> {
        if !addr.is_multiple_of(self.pointer_size as u64) {
            return Err(DumpError::Misaligned(addr));
        }
        let bytes = self.bytes(addr, self.pointer_size as u64).ok_or(DumpError::Unmapped(addr))?;
        Ok(self.decode_word(bytes))
    }

    /// Index of the heap object holding `addr` and the offset into it.
    pub fn object_index_containing(&self, addr: u64) -> Option<(usize, u64)> {
        let i = self.objects.partition_point(|o| o.base <= addr);
        if i == 0 {
            return None;
        }
        let o = &self.objects[i - 1];
        (addr < o.end()).then(|| (i - 1, addr - o.base))
    }

    pub fn object_containing(&self, addr: u64) -> Option<(&HeapObject, u64)> {
        self.object_index_containing(addr).map(|(i, off)| (&self.objects[i], off))
    }

    pub fn static_containing(&self, addr: u64) -> Option<(&StaticObject, u64)> {
        let i = self.statics.partition_point(|s| s.base <= addr);
        if i == 0 {
            return None;
        }
        let s = &self.statics[i - 1];
        (addr < s.base + s.size.max(1)).then(|| (s, addr - s.base))
    }

    pub fn static_by_symbol(&self, symbol: &str) -> Option<&StaticObject> {
        self.statics.iter().find(|s| s.symbol == symbol)
    }

    /// Largest general-purpose cache size strictly below `size`.
    pub fn next_smaller_gp_cache(&self, size: u64) -> Option<u64> {
        next_smaller(&self.gp_sizes, size)
    }

    pub fn gp_sizes(&self) -> &[u64] {
        &self.gp_sizes
    }
}

/// Largest entry of an ascending ladder strictly below `size`.
pub fn next_smaller(sorted_sizes: &[u64], size: u64) -> Option<u64> {
    let i = sorted_sizes.partition_point(|&s| s < size);
    (i > 0).then(|| sorted_sizes[i - 1])
}

pub fn decode_word(bytes: &[u8], pointer_size: u8, endianness: Endianness) -> u64 {
    match (pointer_size, endianness) {
        (4, Endianness::Little) => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as u64,
        (4, Endianness::Big) => u32::from_be_bytes(bytes[..4].try_into().unwrap()) as u64,
        (_, Endianness::Little) => u64::from_le_bytes(bytes[..8].try_into().unwrap()),
        (_, Endianness::Big) => u64::from_be_bytes(bytes[..8].try_into().unwrap()),
    }
}

pub fn encode_word(value: u64, pointer_size: u8, endianness: Endianness, out: &mut [u8]) {
    match (pointer_size, endianness) {
        (4, Endianness::Little) => out[..4].copy_from_slice(&(value as u32).to_le_bytes()),
        (4, Endianness::Big) => out[..4].copy_from_slice(&(value as u32).to_be_bytes()),
        (_, Endianness::Little) => out[..8].copy_from_slice(&value.to_le_bytes()),
        (_, Endianness::Big) => out[..8].copy_from_slice(&value.to_be_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typecat::{CatalogDocument, TypeEntry};

    fn catalog() -> TypeCatalog {
        TypeCatalog::load(&CatalogDocument {
            types: vec![
                TypeEntry::base("int", "int", 4),
                TypeEntry::structure("foo_t", "foo_t", 16, &[("a", 0, "int")]),
                TypeEntry::pointer("foo_t *", "foo_t *", 4, "foo_t"),
            ],
        })
        .unwrap()
    }

    fn doc(objects: Vec<ObjectEntry>, statics: Vec<StaticEntry>) -> DumpDocument {
        DumpDocument {
            format_version: 1,
            pointer_size: 4,
            endianness: Endianness::Little,
            segments: vec![SegmentEntry::new(0x1000, &[0u8; 64])],
            caches: vec![CacheEntry { id: 1, name: "kmem_alloc_16".into(), object_size: 16, general_purpose: true }],
            objects,
            statics,
        }
    }

    fn obj(base: u64) -> ObjectEntry {
        ObjectEntry { base, size: 16, cache: 1 }
    }

    #[test]
    fn loads_minimal_image() {
        let cat = catalog();
        let st = StaticEntry { symbol: "foo_list".into(), base: 0x1030, ty: "foo_t *".into() };
        let img = DumpImage::load(&doc(vec![obj(0x1000)], vec![st]), &cat).unwrap();
        assert_eq!(img.objects().len(), 1);
        assert_eq!(img.statics()[0].size, 4);
        let empty = DumpImage::load(&doc(vec![], vec![]), &cat).unwrap();
        assert!(empty.objects().is_empty());
    }

    #[test]
    fn rejects_overlap_and_bad_refs() {
        let cat = catalog();
        assert!(matches!(
            DumpImage::load(&doc(vec![obj(0x1000), obj(0x100c)], vec![]), &cat),
            Err(DumpError::ObjectOverlap(0x1000, 0x100c))
        ));
        let mut bad_cache = obj(0x1000);
        bad_cache.cache = 9;
        assert!(matches!(DumpImage::load(&doc(vec![bad_cache], vec![]), &cat), Err(DumpError::UnknownCache(..))));
        assert!(matches!(DumpImage::load(&doc(vec![obj(0x2000)], vec![]), &cat), Err(DumpError::Unbacked { .. })));
        let st = StaticEntry { symbol: "x".into(), base: 0x1000, ty: "nope".into() };
        assert!(matches!(DumpImage::load(&doc(vec![], vec![st]), &cat), Err(DumpError::UnknownStaticType { .. })));
    }

    #[test]
    fn read_word_endianness() {
        let cat = catalog();
        let mut d = doc(vec![], vec![]);
        let mut bytes = [0u8; 64];
        bytes[0] = 1;
        // a corrupted word at 0xde4ecd20
        bytes[16..20].copy_from_slice(&0x2300_0001u32.to_le_bytes());
        d.segments = vec![SegmentEntry::new(0x1000, &bytes)];
        let img = DumpImage::load(&d, &cat).unwrap();
        assert_eq!(img.read_word(0x1000).unwrap(), 1);
        assert_eq!(img.read_word(0x1010).unwrap(), 0x2300_0001);
        assert!(matches!(img.read_word(0x9000), Err(DumpError::Unmapped(_))));
        assert!(matches!(img.read_word(0x1002), Err(DumpError::Misaligned(_))));

        d.endianness = Endianness::Big;
        let img = DumpImage::load(&d, &cat).unwrap();
        assert_eq!(img.read_word(0x1000).unwrap(), 0x0100_0000);
    }

    #[test]
    fn object_containing_half_open() {
        let cat = catalog();
        let img = DumpImage::load(&doc(vec![obj(0x1000), obj(0x1020)], vec![]), &cat).unwrap();
        assert_eq!(img.object_containing(0x1000).map(|(o, off)| (o.base, off)), Some((0x1000, 0)));
        assert_eq!(img.object_containing(0x1004).map(|(o, off)| (o.base, off)), Some((0x1000, 4)));
        assert!(img.object_containing(0x1010).is_none());
        assert!(img.object_containing(0xfff).is_none());
    }

    #[test]
    fn next_smaller_ladder() {
        assert_eq!(next_smaller(&[128, 160, 224], 224), Some(160));
        assert_eq!(next_smaller(&[128], 128), None);
        assert_eq!(next_smaller(&[128, 160, 224], 1000), Some(224));
    }

    #[test]
    fn hex_parsing() {
        assert_eq!(parse_hex("0x30062034c3c"), Some(0x30062034c3c));
        assert_eq!(parse_hex("33a31007088"), Some(0x33a31007088));
        assert_eq!(parse_hex("0x"), None);
        assert_eq!(parse_hex("zz"), None);
    }
}
