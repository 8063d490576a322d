//! Compiler-style type catalog.
//!
//! A [`TypeCatalog`] is loaded once from a [`CatalogDocument`] and is
//! immutable afterwards. Besides plain lookups it answers the structural
//! questions the inference passes keep asking: where the pointers are inside
//! an instance of a type, whether a struct ends in a flexible array member,
//! and where synchronization primitives are embedded.

mod document;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use document::{CatalogDocument, KindTag, MemberEntry, TypeEntry};

/// Flag string marking a type as a lock, condition variable or similar.
pub const SYNC_PRIMITIVE: &str = "sync_primitive";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("malformed catalog document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("duplicate type id `{0}`")]
    DuplicateId(String),
    #[error("type `{ty}`: missing field `{field}`")]
    MissingField { ty: String, field: &'static str },
    #[error("type `{ty}`: field `{field}` not allowed for this kind")]
    UnexpectedField { ty: String, field: &'static str },
    #[error("type `{ty}`: reference to unknown type `{reference}`")]
    DanglingReference { ty: String, reference: String },
    #[error("type `{0}`: typedef chain is cyclic")]
    CyclicTypedef(String),
    #[error("type `{0}`: contains itself by value")]
    CyclicEmbedding(String),
    #[error("type `{ty}`: size inconsistency: {detail}")]
    SizeMismatch { ty: String, detail: String },
    #[error("type `{ty}`: member `{member}` does not fit within the type")]
    MemberOutOfBounds { ty: String, member: String },
    #[error("type `{ty}`: member `{member}` offset out of order")]
    MemberOrder { ty: String, member: String },
    #[error("type `{ty}`: union member `{member}` has nonzero offset")]
    UnionOffset { ty: String, member: String },
    #[error("type `{ty}`: unknown flag `{flag}`")]
    UnknownFlag { ty: String, flag: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown type id {0}")]
    UnknownTypeId(u32),
    #[error("type `{0}` is not a struct")]
    NotStruct(String),
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

/// Index of a type inside its catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u32);

impl TypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeKind {
    Base,
    Struct,
    Union,
    Pointer,
    Array,
    Typedef,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub name: Arc<str>,
    pub offset: u64,
    pub ty: TypeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeShape {
    Base,
    Struct(Vec<Member>),
    Union(Vec<Member>),
    Pointer(TypeId),
    Array { element: TypeId, count: u64 },
    Typedef(TypeId),
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDef {
    pub id: TypeId,
    /// Identifier used by the catalog document.
    pub key: String,
    pub name: Arc<str>,
    pub size: u64,
    pub shape: TypeShape,
    pub sync_primitive: bool,
}

impl TypeDef {
    pub fn kind(&self) -> TypeKind {
        match self.shape {
            TypeShape::Base => TypeKind::Base,
            TypeShape::Struct(_) => TypeKind::Struct,
            TypeShape::Union(_) => TypeKind::Union,
            TypeShape::Pointer(_) => TypeKind::Pointer,
            TypeShape::Array { .. } => TypeKind::Array,
            TypeShape::Typedef(_) => TypeKind::Typedef,
            TypeShape::Function => TypeKind::Function,
        }
    }

    pub fn members(&self) -> &[Member] {
        match &self.shape {
            TypeShape::Struct(m) | TypeShape::Union(m) => m,
            _ => &[],
        }
    }

    pub fn is_struct(&self) -> bool {
        matches!(self.shape, TypeShape::Struct(_))
    }
}

/// One step of a [`MemberPath`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathStep {
    Field(Arc<str>),
    Index(u64),
}

/// Route from an outermost type down to one of its constituents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemberPath {
    /// Display name of the outermost type.
    pub root: Arc<str>,
    /// `(container type name, step)` pairs, outermost first.
    pub steps: Vec<(Arc<str>, PathStep)>,
    pub terminal: TypeId,
    /// Byte offset of the terminal from the outermost base.
    pub offset: u64,
}

impl MemberPath {
    fn empty(root: Arc<str>, terminal: TypeId) -> Self {
        MemberPath { root, steps: Vec::new(), terminal, offset: 0 }
    }

    fn prefixed(&self, root: &Arc<str>, container: &Arc<str>, step: PathStep, shift: u64) -> Self {
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.push((container.clone(), step));
        steps.extend(self.steps.iter().cloned());
        MemberPath { root: root.clone(), steps, terminal: self.terminal, offset: self.offset + shift }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Member names only, e.g. `serial_lock` or `tn_vnode.v_lock`.
    pub fn member_suffix(&self) -> String {
        let mut out = String::new();
        for (_, step) in &self.steps {
            match step {
                PathStep::Field(name) => {
                    if !out.is_empty() {
                        out.push('.');
                    }
                    out.push_str(name);
                }
                PathStep::Index(i) => {
                    out.push_str(&format!("[{i}]"));
                }
            }
        }
        out
    }
}

impl fmt::Display for MemberPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.root)?;
        for (_, step) in &self.steps {
            match step {
                PathStep::Field(name) => write!(f, ".{name}")?,
                PathStep::Index(i) => write!(f, "[{i}]")?,
            }
        }
        Ok(())
    }
}

/// A pointer-typed location within an instance of some type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointerMember {
    pub offset: u64,
    pub pointee: TypeId,
    pub path: MemberPath,
}

/// A synchronization primitive embedded within an instance of some type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncMember {
    pub offset: u64,
    pub ty: TypeId,
    pub path: MemberPath,
}

/// Shape of a flexible array member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlexibleArray {
    pub element: TypeId,
    pub offset: u64,
    /// 1 for the `[1]` idiom, 0 for C99 `[]`.
    pub declared_count: u64,
}

pub struct TypeCatalog {
    types: Vec<TypeDef>,
    by_key: HashMap<String, TypeId>,
    by_name: HashMap<String, TypeId>,
    pointers: Vec<OnceLock<Arc<[PointerMember]>>>,
    syncs: Vec<OnceLock<Arc<[SyncMember]>>>,
}

impl fmt::Debug for TypeCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TypeCatalog").field("types", &self.types.len()).finish()
    }
}

impl TypeCatalog {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CatalogDocument = serde_json::from_str(text)?;
        Self::load(&doc)
    }

    /// Validates a document and builds the catalog.
    pub fn load(doc: &CatalogDocument) -> Result<Self> {
        let mut by_key = HashMap::with_capacity(doc.types.len());
        for (i, entry) in doc.types.iter().enumerate() {
            if by_key.insert(entry.id.clone(), TypeId(i as u32)).is_some() {
                return Err(CatalogError::DuplicateId(entry.id.clone()));
            }
        }
        let reference = |entry: &TypeEntry, key: &str| -> Result<TypeId> {
            by_key
                .get(key)
                .copied()
                .ok_or_else(|| CatalogError::DanglingReference { ty: entry.id.clone(), reference: key.to_string() })
        };

        let mut types = Vec::with_capacity(doc.types.len());
        for (i, entry) in doc.types.iter().enumerate() {
            check_fields(entry)?;
            let shape = match entry.kind {
                KindTag::Base => TypeShape::Base,
                KindTag::Function => TypeShape::Function,
                KindTag::Pointer => TypeShape::Pointer(reference(entry, entry.pointee.as_deref().unwrap())?),
                KindTag::Typedef => TypeShape::Typedef(reference(entry, entry.target.as_deref().unwrap())?),
                KindTag::Array => TypeShape::Array {
                    element: reference(entry, entry.element_type.as_deref().unwrap())?,
                    count: entry.element_count.unwrap(),
                },
                KindTag::Struct | KindTag::Union => {
                    let mut members = Vec::new();
                    for m in entry.members.as_ref().unwrap() {
                        members.push(Member {
                            name: m.name.as_str().into(),
                            offset: m.offset,
                            ty: reference(entry, &m.ty)?,
                        });
                    }
                    if entry.kind == KindTag::Struct {
                        TypeShape::Struct(members)
                    } else {
                        TypeShape::Union(members)
                    }
                }
            };
            let mut sync_primitive = false;
            for flag in &entry.flags {
                if flag == SYNC_PRIMITIVE {
                    sync_primitive = true;
                } else {
                    return Err(CatalogError::UnknownFlag { ty: entry.id.clone(), flag: flag.clone() });
                }
            }
            types.push(TypeDef {
                id: TypeId(i as u32),
                key: entry.id.clone(),
                name: entry.name.as_str().into(),
                size: entry.size,
                shape,
                sync_primitive,
            });
        }

        let mut by_name = HashMap::with_capacity(types.len());
        for t in &types {
            by_name.entry(t.name.to_string()).or_insert(t.id);
        }
        let n = types.len();
        let catalog = TypeCatalog {
            types,
            by_key,
            by_name,
            pointers: (0..n).map(|_| OnceLock::new()).collect(),
            syncs: (0..n).map(|_| OnceLock::new()).collect(),
        };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<()> {
        // typedef chains first: every later check resolves through them
        for t in &self.types {
            let mut cur = t;
            let mut steps = 0;
            while let TypeShape::Typedef(target) = cur.shape {
                steps += 1;
                if steps > self.types.len() {
                    return Err(CatalogError::CyclicTypedef(t.key.clone()));
                }
                cur = &self.types[target.index()];
            }
        }
        for t in &self.types {
            let mismatch = |detail: String| CatalogError::SizeMismatch { ty: t.key.clone(), detail };
            match &t.shape {
                TypeShape::Typedef(target) => {
                    let resolved = self.resolve_def(*target);
                    if resolved.size != t.size {
                        return Err(mismatch(format!("typedef size {} but target size {}", t.size, resolved.size)));
                    }
                }
                TypeShape::Array { element, count } => {
                    let expect = count.checked_mul(self.types[element.index()].size);
                    if expect != Some(t.size) {
                        return Err(mismatch(format!(
                            "array of {count} x {} bytes declared as {} bytes",
                            self.types[element.index()].size,
                            t.size
                        )));
                    }
                }
                TypeShape::Struct(members) => {
                    let mut prev: Option<u64> = None;
                    for m in members {
                        if prev.is_some_and(|p| m.offset <= p) {
                            return Err(CatalogError::MemberOrder { ty: t.key.clone(), member: m.name.to_string() });
                        }
                        prev = Some(m.offset);
                        self.check_member_fits(t, m)?;
                    }
                }
                TypeShape::Union(members) => {
                    for m in members {
                        if m.offset != 0 {
                            return Err(CatalogError::UnionOffset { ty: t.key.clone(), member: m.name.to_string() });
                        }
                        self.check_member_fits(t, m)?;
                    }
                }
                TypeShape::Base | TypeShape::Pointer(_) | TypeShape::Function => {}
            }
        }
        self.check_embedding()
    }

    fn check_member_fits(&self, t: &TypeDef, m: &Member) -> Result<()> {
        let end = m.offset.checked_add(self.types[m.ty.index()].size);
        if end.is_none_or(|e| e > t.size) {
            return Err(CatalogError::MemberOutOfBounds { ty: t.key.clone(), member: m.name.to_string() });
        }
        Ok(())
    }

    /// Rejects types that contain themselves by value.
    fn check_embedding(&self) -> Result<()> {
        #[derive(Clone, Copy, PartialEq)]
        enum State {
            New,
            Active,
            Done,
        }
        let mut state = vec![State::New; self.types.len()];
        for start in 0..self.types.len() {
            if state[start] != State::New {
                continue;
            }
            // iterative DFS over by-value containment
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            state[start] = State::Active;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let children = self.embedded_children(node);
                if *next < children.len() {
                    let child = children[*next];
                    *next += 1;
                    match state[child] {
                        State::Active => return Err(CatalogError::CyclicEmbedding(self.types[child].key.clone())),
                        State::New => {
                            state[child] = State::Active;
                            stack.push((child, 0));
                        }
                        State::Done => {}
                    }
                } else {
                    state[node] = State::Done;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    fn embedded_children(&self, idx: usize) -> Vec<usize> {
        match &self.types[idx].shape {
            TypeShape::Struct(m) | TypeShape::Union(m) => m.iter().map(|m| m.ty.index()).collect(),
            TypeShape::Array { element, .. } => vec![element.index()],
            TypeShape::Typedef(t) => vec![t.index()],
            _ => Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TypeDef> {
        self.types.iter()
    }

    pub fn get(&self, id: TypeId) -> Result<&TypeDef> {
        self.types.get(id.index()).ok_or(CatalogError::UnknownTypeId(id.0))
    }

    /// Panicking accessor for ids that came out of this catalog.
    pub fn def(&self, id: TypeId) -> &TypeDef {
        &self.types[id.index()]
    }

    pub fn by_key(&self, key: &str) -> Option<TypeId> {
        self.by_key.get(key).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<TypeId> {
        self.by_name.get(name).copied()
    }

    /// Finds a type by document id or by name. Bare names also match their
    /// `struct X` / `union X` spellings and vice versa.
    pub fn lookup(&self, text: &str) -> Option<TypeId> {
        let text = text.trim();
        if let Some(id) = self.by_key(text).or_else(|| self.by_name(text)) {
            return Some(id);
        }
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if let Some(id) = self.by_name(&normalized) {
            return Some(id);
        }
        for prefix in ["struct ", "union "] {
            if let Some(bare) = normalized.strip_prefix(prefix) {
                if let Some(id) = self.by_name(bare) {
                    return Some(id);
                }
            } else if let Some(id) = self.by_name(&format!("{prefix}{normalized}")) {
                return Some(id);
            }
        }
        None
    }

    pub fn require(&self, text: &str) -> Result<TypeId> {
        self.lookup(text).ok_or_else(|| CatalogError::UnknownType(text.to_string()))
    }

    pub fn name(&self, id: TypeId) -> &str {
        &self.types[id.index()].name
    }

    pub fn size_of(&self, id: TypeId) -> u64 {
        self.types[id.index()].size
    }

    fn resolve_def(&self, id: TypeId) -> &TypeDef {
        let mut cur = &self.types[id.index()];
        while let TypeShape::Typedef(target) = cur.shape {
            cur = &self.types[target.index()];
        }
        cur
    }

    /// Chases typedefs until a non-typedef type is reached.
    pub fn resolve(&self, id: TypeId) -> Result<&TypeDef> {
        self.get(id)?;
        Ok(self.resolve_def(id))
    }

    pub fn resolve_id(&self, id: TypeId) -> TypeId {
        self.resolve_def(id).id
    }

    /// True if the type or anything along its typedef chain is flagged.
    pub fn is_sync(&self, id: TypeId) -> bool {
        let mut cur = &self.types[id.index()];
        loop {
            if cur.sync_primitive {
                return true;
            }
            match cur.shape {
                TypeShape::Typedef(t) => cur = &self.types[t.index()],
                _ => return false,
            }
        }
    }

    /// Every pointer-typed location within one instance of `id`, flattened
    /// through embedded structs, unions and fixed arrays, in ascending offset
    /// order. A pointer type itself yields its single slot at offset 0.
    /// Pointers to functions are skipped.
    pub fn pointer_members(&self, id: TypeId) -> Result<Arc<[PointerMember]>> {
        self.get(id)?;
        Ok(self.pointer_members_of(id))
    }

    fn pointer_members_of(&self, id: TypeId) -> Arc<[PointerMember]> {
        self.pointers[id.index()]
            .get_or_init(|| {
                let t = &self.types[id.index()];
                let mut out = Vec::new();
                match &t.shape {
                    TypeShape::Pointer(p) => {
                        if self.resolve_def(*p).kind() != TypeKind::Function {
                            out.push(PointerMember {
                                offset: 0,
                                pointee: *p,
                                path: MemberPath::empty(t.name.clone(), id),
                            });
                        }
                    }
                    TypeShape::Typedef(target) => {
                        for pm in self.pointer_members_of(*target).iter() {
                            let mut pm = pm.clone();
                            pm.path.root = t.name.clone();
                            out.push(pm);
                        }
                    }
                    TypeShape::Struct(members) | TypeShape::Union(members) => {
                        for m in members {
                            for pm in self.pointer_members_of(m.ty).iter() {
                                out.push(PointerMember {
                                    offset: pm.offset + m.offset,
                                    pointee: pm.pointee,
                                    path: pm.path.prefixed(&t.name, &t.name, PathStep::Field(m.name.clone()), m.offset),
                                });
                            }
                        }
                        out.sort_by_key(|pm| pm.offset);
                    }
                    TypeShape::Array { element, count } => {
                        let inner = self.pointer_members_of(*element);
                        if !inner.is_empty() {
                            let esize = self.types[element.index()].size;
                            for i in 0..*count {
                                for pm in inner.iter() {
                                    out.push(PointerMember {
                                        offset: pm.offset + i * esize,
                                        pointee: pm.pointee,
                                        path: pm.path.prefixed(&t.name, &t.name, PathStep::Index(i), i * esize),
                                    });
                                }
                            }
                        }
                    }
                    TypeShape::Base | TypeShape::Function => {}
                }
                out.into()
            })
            .clone()
    }

    /// Detects a struct ending in an array of one (or zero) elements.
    pub fn detect_fam(&self, id: TypeId) -> Result<Option<FlexibleArray>> {
        let t = self.resolve(id)?;
        let TypeShape::Struct(members) = &t.shape else {
            return Err(CatalogError::NotStruct(t.name.to_string()));
        };
        let Some(last) = members.last() else { return Ok(None) };
        match self.resolve_def(last.ty).shape {
            TypeShape::Array { element, count } if count <= 1 => {
                Ok(Some(FlexibleArray { element, offset: last.offset, declared_count: count }))
            }
            _ => Ok(None),
        }
    }

    /// Every embedded synchronization primitive, with offsets from the
    /// outermost base. A flagged type reports itself at offset 0.
    pub fn sync_members(&self, id: TypeId) -> Result<Arc<[SyncMember]>> {
        self.get(id)?;
        Ok(self.sync_members_of(id))
    }

    fn sync_members_of(&self, id: TypeId) -> Arc<[SyncMember]> {
        self.syncs[id.index()]
            .get_or_init(|| {
                let t = &self.types[id.index()];
                if self.is_sync(id) {
                    return vec![SyncMember { offset: 0, ty: id, path: MemberPath::empty(t.name.clone(), id) }].into();
                }
                let mut out = Vec::new();
                match &t.shape {
                    TypeShape::Typedef(target) => {
                        for sm in self.sync_members_of(*target).iter() {
                            let mut sm = sm.clone();
                            sm.path.root = t.name.clone();
                            out.push(sm);
                        }
                    }
                    TypeShape::Struct(members) | TypeShape::Union(members) => {
                        for m in members {
                            for sm in self.sync_members_of(m.ty).iter() {
                                out.push(SyncMember {
                                    offset: sm.offset + m.offset,
                                    ty: sm.ty,
                                    path: sm.path.prefixed(&t.name, &t.name, PathStep::Field(m.name.clone()), m.offset),
                                });
                            }
                        }
                        out.sort_by_key(|sm| sm.offset);
                    }
                    TypeShape::Array { element, count } => {
                        let inner = self.sync_members_of(*element);
                        if !inner.is_empty() {
                            let esize = self.types[element.index()].size;
                            for i in 0..*count {
                                for sm in inner.iter() {
                                    out.push(SyncMember {
                                        offset: sm.offset + i * esize,
                                        ty: sm.ty,
                                        path: sm.path.prefixed(&t.name, &t.name, PathStep::Index(i), i * esize),
                                    });
                                }
                            }
                        }
                    }
                    _ => {}
                }
                out.into()
            })
            .clone()
    }

    /// Resolved types that begin exactly at `offset` within an instance of
    /// `id`, outermost first (the type itself when `offset` is 0).
    pub fn types_at_offset(&self, id: TypeId, offset: u64) -> Vec<TypeId> {
        let mut out = Vec::new();
        let mut frontier = vec![(self.resolve_id(id), offset)];
        while let Some((ty, off)) = frontier.pop() {
            let t = self.resolve_def(ty);
            if off == 0 {
                out.push(t.id);
            }
            match &t.shape {
                TypeShape::Struct(members) | TypeShape::Union(members) => {
                    for m in members {
                        let msize = self.types[m.ty.index()].size;
                        if off >= m.offset && (off < m.offset + msize || (off == m.offset && msize == 0)) {
                            frontier.push((m.ty, off - m.offset));
                        }
                    }
                }
                TypeShape::Array { element, count } => {
                    let esize = self.types[element.index()].size;
                    if esize > 0 && off / esize < *count.max(&1) {
                        frontier.push((*element, off % esize));
                    }
                }
                _ => {}
            }
        }
        out
    }
}

fn check_fields(entry: &TypeEntry) -> Result<()> {
    let ty = || entry.id.clone();
    let want = |present: bool, allowed: bool, field: &'static str| -> Result<()> {
        match (present, allowed) {
            (false, true) => Err(CatalogError::MissingField { ty: ty(), field }),
            (true, false) => Err(CatalogError::UnexpectedField { ty: ty(), field }),
            _ => Ok(()),
        }
    };
    let k = entry.kind;
    want(entry.members.is_some(), matches!(k, KindTag::Struct | KindTag::Union), "members")?;
    want(entry.pointee.is_some(), k == KindTag::Pointer, "pointee")?;
    want(entry.element_type.is_some(), k == KindTag::Array, "element_type")?;
    want(entry.element_count.is_some(), k == KindTag::Array, "element_count")?;
    want(entry.target.is_some(), k == KindTag::Typedef, "target")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linked foo/bar layout, 32-bit pointers.
    fn foo_catalog() -> TypeCatalog {
        let doc = CatalogDocument {
            types: vec![
                TypeEntry::base("int", "int", 4),
                TypeEntry::base("char", "char", 1),
                TypeEntry::structure(
                    "struct foo",
                    "struct foo",
                    16,
                    &[
                        ("foo_next", 0, "foo_t *"),
                        ("foo_name", 4, "char *"),
                        ("foo_bar", 8, "bar_t *"),
                        ("foo_val", 12, "int"),
                    ],
                ),
                TypeEntry::typedef("foo_t", "foo_t", 16, "struct foo"),
                TypeEntry::structure("struct bar", "struct bar", 8, &[("bar_x", 0, "int"), ("bar_data", 4, "char *")]),
                TypeEntry::typedef("bar_t", "bar_t", 8, "struct bar"),
                TypeEntry::pointer("foo_t *", "foo_t *", 4, "foo_t"),
                TypeEntry::pointer("char *", "char *", 4, "char"),
                TypeEntry::pointer("bar_t *", "bar_t *", 4, "bar_t"),
            ],
        };
        TypeCatalog::load(&doc).unwrap()
    }

    #[test]
    fn minimal_catalog() {
        let cat = TypeCatalog::from_json(r#"{"types":[{"id":"int","kind":"base","name":"int","size":4}]}"#).unwrap();
        assert_eq!(cat.len(), 1);
        assert_eq!(cat.size_of(cat.lookup("int").unwrap()), 4);
    }

    #[test]
    fn foo_layout_loads() {
        let cat = foo_catalog();
        let foo = cat.resolve(cat.lookup("foo_t").unwrap()).unwrap();
        assert_eq!(foo.size, 16);
        assert_eq!(foo.members().len(), 4);
        assert_eq!(&*foo.name, "struct foo");
    }

    #[test]
    fn pointer_members_of_foo() {
        let cat = foo_catalog();
        let pm = cat.pointer_members(cat.lookup("foo_t").unwrap()).unwrap();
        let got: Vec<_> = pm.iter().map(|p| (p.offset, cat.name(p.pointee).to_string())).collect();
        assert_eq!(got, vec![(0, "foo_t".into()), (4, "char".into()), (8, "bar_t".into())]);
        assert_eq!(pm[1].path.to_string(), "foo_t.foo_name");
        let pm = cat.pointer_members(cat.lookup("struct foo").unwrap()).unwrap();
        assert_eq!(pm[1].path.to_string(), "struct foo.foo_name");
        assert!(cat.pointer_members(cat.lookup("int").unwrap()).unwrap().is_empty());
    }

    #[test]
    fn nested_pointer_members() {
        let doc = CatalogDocument {
            types: vec![
                TypeEntry::base("char", "char", 1),
                TypeEntry::base("int", "int", 4),
                TypeEntry::pointer("char *", "char *", 8, "char"),
                TypeEntry::structure("inner", "struct foo_inner", 8, &[("p", 0, "char *")]),
                TypeEntry::structure("outer", "struct outer", 16, &[("a", 0, "inner"), ("b", 8, "int")]),
            ],
        };
        let cat = TypeCatalog::load(&doc).unwrap();
        let pm = cat.pointer_members(cat.lookup("outer").unwrap()).unwrap();
        assert_eq!(pm.len(), 1);
        assert_eq!((pm[0].offset, pm[0].pointee), (0, cat.lookup("char").unwrap()));
        assert_eq!(pm[0].path.to_string(), "struct outer.a.p");
    }

    #[test]
    fn resolve_chases_typedefs() {
        let doc = CatalogDocument {
            types: vec![
                TypeEntry::base("c", "C", 2),
                TypeEntry::typedef("b", "B", 2, "c"),
                TypeEntry::typedef("a", "A", 2, "b"),
            ],
        };
        let cat = TypeCatalog::load(&doc).unwrap();
        let a = cat.lookup("A").unwrap();
        assert_eq!(&*cat.resolve(a).unwrap().name, "C");
        let c = cat.lookup("C").unwrap();
        assert_eq!(cat.resolve(c).unwrap().id, c);
        assert!(matches!(cat.resolve(TypeId(99)), Err(CatalogError::UnknownTypeId(99))));
    }

    #[test]
    fn fam_detection() {
        let doc = CatalogDocument {
            types: vec![
                TypeEntry::base("int", "int", 4),
                TypeEntry::base("mumble_t", "mumble_t", 4),
                TypeEntry::array("mumble_t[1]", "mumble_t [1]", 4, "mumble_t", 1),
                TypeEntry::array("mumble_t[0]", "mumble_t []", 0, "mumble_t", 0),
                TypeEntry::array("int[4]", "int [4]", 16, "int", 4),
                TypeEntry::structure(
                    "struct foo",
                    "struct foo",
                    12,
                    &[("foo_bar", 0, "int"), ("foo_baz", 4, "int"), ("foo_mumble", 8, "mumble_t[1]")],
                ),
                TypeEntry::typedef("foo_t", "foo_t", 12, "struct foo"),
                TypeEntry::structure("c99", "struct c99", 8, &[("n", 0, "int"), ("rest", 8, "mumble_t[0]")]),
                TypeEntry::structure("four", "struct four", 20, &[("n", 0, "int"), ("v", 4, "int[4]")]),
            ],
        };
        let cat = TypeCatalog::load(&doc).unwrap();
        let fam = cat.detect_fam(cat.lookup("foo_t").unwrap()).unwrap().unwrap();
        assert_eq!((fam.element, fam.offset), (cat.lookup("mumble_t").unwrap(), 8));
        assert_eq!(fam.offset + cat.size_of(fam.element), 12);
        let c99 = cat.detect_fam(cat.lookup("c99").unwrap()).unwrap().unwrap();
        assert_eq!((c99.offset, c99.declared_count), (8, 0));
        assert_eq!(cat.detect_fam(cat.lookup("four").unwrap()).unwrap(), None);
        assert!(matches!(cat.detect_fam(cat.lookup("int").unwrap()), Err(CatalogError::NotStruct(_))));
        assert_eq!(cat.detect_fam(foo_catalog().lookup("foo_t").unwrap()).unwrap_or(None), None);
    }

    #[test]
    fn linked_foo_has_no_fam() {
        let cat = foo_catalog();
        assert_eq!(cat.detect_fam(cat.lookup("foo_t").unwrap()).unwrap(), None);
    }

    fn sync_catalog() -> TypeCatalog {
        let doc = CatalogDocument {
            types: vec![
                TypeEntry::base("char", "char", 1),
                TypeEntry::base("uintptr_t", "uintptr_t", 8),
                TypeEntry::base("size_t", "size_t", 8),
                TypeEntry::structure("struct mutex", "struct mutex", 8, &[("_owner", 0, "uintptr_t")])
                    .with_flag(SYNC_PRIMITIVE),
                TypeEntry::typedef("kmutex_t", "kmutex_t", 8, "struct mutex"),
                TypeEntry::array("kmutex_t[2]", "kmutex_t [2]", 16, "kmutex_t", 2),
                TypeEntry::structure(
                    "struct anon_map",
                    "struct anon_map",
                    24,
                    &[("size", 0, "size_t"), ("serial_lock", 8, "kmutex_t"), ("lock", 16, "kmutex_t")],
                ),
                TypeEntry::structure("pair", "struct pair", 24, &[("m", 0, "kmutex_t[2]"), ("x", 16, "size_t")]),
            ],
        };
        TypeCatalog::load(&doc).unwrap()
    }

    #[test]
    fn sync_members_found() {
        let cat = sync_catalog();
        let sm = cat.sync_members(cat.lookup("struct anon_map").unwrap()).unwrap();
        assert_eq!(sm.len(), 2);
        assert_eq!((sm[0].offset, sm[0].path.to_string()), (8, "struct anon_map.serial_lock".to_string()));
        let sm = cat.sync_members(cat.lookup("pair").unwrap()).unwrap();
        let got: Vec<_> = sm.iter().map(|s| (s.offset, cat.name(s.ty))).collect();
        assert_eq!(got, vec![(0, "kmutex_t"), (8, "kmutex_t")]);
        assert_eq!(sm[1].path.to_string(), "struct pair.m[1]");
        assert!(cat.sync_members(cat.lookup("char").unwrap()).unwrap().is_empty());
        let whole = cat.sync_members(cat.lookup("kmutex_t").unwrap()).unwrap();
        assert_eq!(whole.len(), 1);
        assert!(whole[0].path.is_empty());
    }

    #[test]
    fn rejects_bad_documents() {
        let oob = r#"{"types":[{"id":"int","kind":"base","name":"int","size":4},
            {"id":"s","kind":"struct","name":"struct s","size":4,"members":[{"name":"a","offset":8,"type":"int"}]}]}"#;
        assert!(matches!(TypeCatalog::from_json(oob), Err(CatalogError::MemberOutOfBounds { .. })));

        let dangling = r#"{"types":[{"id":"p","kind":"pointer","name":"p","size":8,"pointee":"nothing"}]}"#;
        match TypeCatalog::from_json(dangling) {
            Err(CatalogError::DanglingReference { ty, reference }) => {
                assert_eq!((ty.as_str(), reference.as_str()), ("p", "nothing"))
            }
            other => panic!("{other:?}"),
        }

        let cyclic = r#"{"types":[{"id":"a","kind":"typedef","name":"a","size":4,"target":"b"},
            {"id":"b","kind":"typedef","name":"b","size":4,"target":"a"}]}"#;
        assert!(matches!(TypeCatalog::from_json(cyclic), Err(CatalogError::CyclicTypedef(_))));

        let unknown_field = r#"{"types":[{"id":"int","kind":"base","name":"int","size":4,"color":"red"}]}"#;
        assert!(matches!(TypeCatalog::from_json(unknown_field), Err(CatalogError::Malformed(_))));

        let bad_array = r#"{"types":[{"id":"int","kind":"base","name":"int","size":4},
            {"id":"a","kind":"array","name":"int[3]","size":10,"element_type":"int","element_count":3}]}"#;
        assert!(matches!(TypeCatalog::from_json(bad_array), Err(CatalogError::SizeMismatch { .. })));

        let self_embed = r#"{"types":[{"id":"s","kind":"struct","name":"s","size":4,"members":[{"name":"me","offset":0,"type":"s"}]}]}"#;
        assert!(matches!(TypeCatalog::from_json(self_embed), Err(CatalogError::CyclicEmbedding(_))));

        let wrong_field = r#"{"types":[{"id":"int","kind":"base","name":"int","size":4,"pointee":"int"}]}"#;
        assert!(matches!(TypeCatalog::from_json(wrong_field), Err(CatalogError::UnexpectedField { .. })));
    }

    #[test]
    fn lookup_normalizes_struct_spelling() {
        let cat = sync_catalog();
        assert_eq!(cat.lookup("anon_map"), cat.lookup("struct anon_map"));
        assert_eq!(cat.lookup("struct  kmutex_t"), cat.lookup("kmutex_t"));
        assert_eq!(cat.lookup("nope"), None);
    }

    #[test]
    fn types_at_offset_walks_members() {
        let cat = sync_catalog();
        let am = cat.lookup("struct anon_map").unwrap();
        let mutex = cat.lookup("struct mutex").unwrap();
        assert_eq!(cat.types_at_offset(am, 8)[0], mutex);
        let pair = cat.lookup("pair").unwrap();
        let at8 = cat.types_at_offset(pair, 8);
        assert!(at8.contains(&mutex));
    }
}
