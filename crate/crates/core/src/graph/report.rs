use std::fmt;

use super::{FragmentNote, NodeId, TypeGraph};
use crate::typecat::{MemberPath, TypeId, TypeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Certainty {
    Known,
    Conjectured,
    Fragment,
    Conflict,
    Unknown,
}

/// One candidate type together with the pointer that suggested it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alternative {
    pub ty: TypeId,
    pub type_name: String,
    /// Base of the referring object.
    pub from_base: u64,
    /// Offset of the pointer within the referring object.
    pub from_offset: u64,
    /// Type through which the pointer was read.
    pub referring_type: String,
}

/// Answer to "what is the type of this address".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeReport {
    pub addr: u64,
    pub node: Option<NodeId>,
    /// Start of the region described (the node base, or a fragment start).
    pub base: u64,
    pub offset: u64,
    pub symbol: Option<String>,
    pub certainty: Certainty,
    pub ty: Option<TypeId>,
    /// Type as displayed, including array or flexible-array shape.
    pub type_name: Option<String>,
    /// Member path that produced a base-type or fragment inference.
    pub via: Option<String>,
    pub alternatives: Vec<Alternative>,
    pub rejected: Vec<Alternative>,
}

impl TypeGraph {
    pub fn whattype(&self, addr: u64) -> TypeReport {
        let mut report = TypeReport {
            addr,
            node: None,
            base: addr,
            offset: 0,
            symbol: None,
            certainty: Certainty::Unknown,
            ty: None,
            type_name: None,
            via: None,
            alternatives: Vec::new(),
            rejected: Vec::new(),
        };
        let Some((id, offset)) = self.node_containing(addr) else { return report };
        let node = self.node(id);
        report.node = Some(id);
        report.base = node.base;
        report.offset = offset;
        report.symbol = node.symbol().map(str::to_string);
        report.certainty = node.certainty();
        report.rejected =
            node.rejected.iter().map(|r| self.alternative(r.ty, r.referrer, r.src_offset, &r.via)).collect();

        match report.certainty {
            Certainty::Known | Certainty::Conjectured => {
                let inf = &node.inferences[0];
                report.ty = Some(inf.ty);
                report.type_name = Some(self.shape_name(node, inf.ty));
                if let Some(r) = &inf.referrer {
                    if self.type_kind(inf.ty) == TypeKind::Base {
                        report.via = Some(r.via.to_string());
                    }
                }
            }
            Certainty::Conflict => {
                report.alternatives = node
                    .inferences
                    .iter()
                    .map(|inf| match &inf.referrer {
                        Some(r) => self.alternative(inf.ty, r.node, r.src_offset, &r.via),
                        None => Alternative {
                            ty: inf.ty,
                            type_name: self.catalog.name(inf.ty).to_string(),
                            from_base: node.base,
                            from_offset: 0,
                            referring_type: "pinned".to_string(),
                        },
                    })
                    .collect();
            }
            Certainty::Fragment => {
                if let Some(f) = self.covering_fragment(&node.fragments, offset) {
                    report.base = node.base + f.offset;
                    report.offset = offset - f.offset;
                    report.ty = Some(f.ty);
                    report.type_name = Some(self.catalog.name(f.ty).to_string());
                    report.via = Some(f.via.to_string());
                } else {
                    report.certainty = Certainty::Unknown;
                }
            }
            Certainty::Unknown => {}
        }
        report
    }

    /// Innermost fragment covering `offset`: the one starting closest below it.
    fn covering_fragment<'a>(&self, fragments: &'a [FragmentNote], offset: u64) -> Option<&'a FragmentNote> {
        fragments
            .iter()
            .filter(|f| f.offset <= offset && offset < f.offset + self.catalog.size_of(f.ty).max(1))
            .max_by_key(|f| (f.offset, std::cmp::Reverse(self.catalog.size_of(f.ty))))
    }

    fn alternative(&self, ty: TypeId, referrer: NodeId, src_offset: u64, via: &MemberPath) -> Alternative {
        Alternative {
            ty,
            type_name: self.catalog.name(ty).to_string(),
            from_base: self.node(referrer).base,
            from_offset: src_offset,
            referring_type: via.root.to_string(),
        }
    }
}

impl fmt::Display for TypeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.node.is_none() {
            return write!(f, "{:x} is not within any object", self.addr);
        }
        write!(f, "{:x} is {:x}+{:x}, ", self.addr, self.base, self.offset)?;
        let name = self.type_name.as_deref().unwrap_or("unknown");
        match self.certainty {
            Certainty::Known => write!(f, "{name}")?,
            Certainty::Conjectured | Certainty::Fragment => write!(f, "possibly {name}")?,
            Certainty::Conflict => write!(f, "possibly one of the following:")?,
            Certainty::Unknown => write!(f, "unknown")?,
        }
        if let Some(via) = &self.via {
            write!(f, " ({via})")?;
        }
        if let (Some(sym), Certainty::Known) = (&self.symbol, self.certainty) {
            write!(f, " ({sym})")?;
        }
        for alt in &self.alternatives {
            write!(
                f,
                "\n  {} (from {:x}+{:x}, type {})",
                alt.type_name, alt.from_base, alt.from_offset, alt.referring_type
            )?;
        }
        for alt in &self.rejected {
            write!(
                f,
                "\n  not {} (from {:x}+{:x}, type {})",
                alt.type_name, alt.from_base, alt.from_offset, alt.referring_type
            )?;
        }
        Ok(())
    }
}
