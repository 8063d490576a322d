//! On-disk form of the type catalog.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct CatalogDocument {
    pub types: Vec<TypeEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Base,
    Struct,
    Union,
    Pointer,
    Array,
    Typedef,
    /// Code, never data. Pointers to functions carry no propagation.
    Function,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TypeEntry {
    pub id: String,
    pub kind: KindTag,
    pub name: String,
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<MemberEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointee: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct MemberEntry {
    pub name: String,
    pub offset: u64,
    #[serde(rename = "type")]
    pub ty: String,
}

impl TypeEntry {
    fn bare(id: &str, kind: KindTag, name: &str, size: u64) -> Self {
        TypeEntry {
            id: id.to_string(),
            kind,
            name: name.to_string(),
            size,
            members: None,
            pointee: None,
            element_type: None,
            element_count: None,
            target: None,
            flags: Vec::new(),
        }
    }

    pub fn base(id: &str, name: &str, size: u64) -> Self {
        Self::bare(id, KindTag::Base, name, size)
    }

    pub fn function(id: &str, name: &str) -> Self {
        Self::bare(id, KindTag::Function, name, 0)
    }

    pub fn pointer(id: &str, name: &str, size: u64, pointee: &str) -> Self {
        let mut e = Self::bare(id, KindTag::Pointer, name, size);
        e.pointee = Some(pointee.to_string());
        e
    }

    pub fn array(id: &str, name: &str, size: u64, element: &str, count: u64) -> Self {
        let mut e = Self::bare(id, KindTag::Array, name, size);
        e.element_type = Some(element.to_string());
        e.element_count = Some(count);
        e
    }

    pub fn typedef(id: &str, name: &str, size: u64, target: &str) -> Self {
        let mut e = Self::bare(id, KindTag::Typedef, name, size);
        e.target = Some(target.to_string());
        e
    }

    pub fn structure(id: &str, name: &str, size: u64, members: &[(&str, u64, &str)]) -> Self {
        let mut e = Self::bare(id, KindTag::Struct, name, size);
        e.members = Some(members.iter().map(|&(n, o, t)| MemberEntry::new(n, o, t)).collect());
        e
    }

    pub fn union(id: &str, name: &str, size: u64, members: &[(&str, &str)]) -> Self {
        let mut e = Self::bare(id, KindTag::Union, name, size);
        e.members = Some(members.iter().map(|&(n, t)| MemberEntry::new(n, 0, t)).collect());
        e
    }

    pub fn with_flag(mut self, flag: &str) -> Self {
        self.flags.push(flag.to_string());
        self
    }
}

impl MemberEntry {
    pub fn new(name: &str, offset: u64, ty: &str) -> Self {
        MemberEntry { name: name.to_string(), offset, ty: ty.to_string() }
    }
}
