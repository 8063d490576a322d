use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dumpio::hex_addr;
use crate::graph::{ArrayVerdict, Certainty, Node, TypeGraph};
use crate::typecat::{TypeCatalog, TypeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Single,
    Array,
    /// Struct with a flexible array member; `count` is the total number of
    /// trailing-array elements.
    Fam,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTruth {
    pub name: String,
    #[serde(with = "hex_addr")]
    pub base: u64,
    #[serde(rename = "type")]
    pub ty: String,
    pub kind: ObjectKind,
    pub count: u64,
    pub rooted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockTruth {
    #[serde(with = "hex_addr")]
    pub addr: u64,
    #[serde(with = "hex_addr")]
    pub owner: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictTruth {
    #[serde(with = "hex_addr")]
    pub base: u64,
    pub stale_type: String,
    pub true_type: String,
    /// Address of the stale pointer.
    #[serde(with = "hex_addr")]
    pub referrer: u64,
}

/// What the synthesizer actually put in the dump.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub objects: Vec<ObjectTruth>,
    #[serde(default)]
    pub locks: Vec<LockTruth>,
    #[serde(default)]
    pub conflicts: Vec<ConflictTruth>,
    /// `(pointer address, target base)` of every injected cast.
    #[serde(default)]
    pub casts: Vec<(u64, u64)>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn object_at(&self, base: u64) -> Option<&ObjectTruth> {
        self.objects.binary_search_by_key(&base, |o| o.base).ok().map(|i| &self.objects[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&ObjectTruth> {
        self.objects.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth object {0:#x} has no heap node")]
    MissingNode(u64),
    #[error("truth names unknown type `{0}`")]
    UnknownType(String),
    #[error("truth covers {truth} objects, graph has {graph} heap nodes")]
    Coverage { truth: usize, graph: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Misidentified {
    pub base: u64,
    pub truth: String,
    pub inferred: String,
}

/// Scores of one graph against its ground truth. The five categories
/// (correct, misidentified, conflicts, fragments, unknown) partition nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalReport {
    pub nodes: u64,
    pub correct_known: u64,
    pub correct_conjectured: u64,
    pub misidentified: u64,
    pub conflicts: u64,
    pub fragments: u64,
    /// Fragment-only nodes whose every fragment fits the true layout.
    pub fragments_consistent: u64,
    pub unknown: u64,
    pub rooted: u64,
    pub details: Vec<Misidentified>,
}

impl EvalReport {
    pub fn correct(&self) -> u64 {
        self.correct_known + self.correct_conjectured
    }

    pub fn recognition_rate(&self) -> f64 {
        ratio(self.correct() + self.fragments_consistent, self.nodes)
    }

    /// Misidentified nodes over rooted nodes.
    pub fn misidentification_rate(&self) -> f64 {
        ratio(self.misidentified, self.rooted)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes:                 {}", self.nodes)?;
        writeln!(f, "correct (known):       {}", self.correct_known)?;
        writeln!(f, "correct (conjectured): {}", self.correct_conjectured)?;
        writeln!(f, "misidentified:         {}", self.misidentified)?;
        writeln!(f, "conflicts:             {}", self.conflicts)?;
        writeln!(f, "fragments:             {} ({} consistent)", self.fragments, self.fragments_consistent)?;
        writeln!(f, "unknown:               {}", self.unknown)?;
        writeln!(f, "rooted:                {}", self.rooted)?;
        writeln!(f, "recognition rate:      {:.2}%", self.recognition_rate() * 100.0)?;
        write!(f, "misidentification:     {:.2}%", self.misidentification_rate() * 100.0)?;
        for m in &self.details {
            write!(f, "\n  {:x}: is {}, inferred {}", m.base, m.truth, m.inferred)?;
        }
        Ok(())
    }
}

/// Scores every heap node of a processed graph against `truth`.
pub fn evaluate(graph: &TypeGraph, truth: &GroundTruth) -> Result<EvalReport, EvalError> {
    let catalog = graph.catalog();
    if truth.objects.len() != graph.heap_count() {
        return Err(EvalError::Coverage { truth: truth.objects.len(), graph: graph.heap_count() });
    }
    let mut r = EvalReport::default();
    for t in &truth.objects {
        let id = graph.node_at(t.base).ok_or(EvalError::MissingNode(t.base))?;
        let node = graph.node(id);
        if node.is_static() {
            return Err(EvalError::MissingNode(t.base));
        }
        let ty = catalog.lookup(&t.ty).ok_or_else(|| EvalError::UnknownType(t.ty.clone()))?;
        let ty = catalog.resolve_id(ty);
        r.nodes += 1;
        if t.rooted {
            r.rooted += 1;
        }
        match node.certainty() {
            Certainty::Known | Certainty::Conjectured => {
                let inferred = node.inferences[0].ty;
                if inferred == ty && shape_matches(node, t) {
                    if node.known {
                        r.correct_known += 1;
                    } else {
                        r.correct_conjectured += 1;
                    }
                } else {
                    r.misidentified += 1;
                    r.details.push(Misidentified {
                        base: t.base,
                        truth: describe(t),
                        inferred: graph.shape_name(node, inferred),
                    });
                }
            }
            Certainty::Conflict => r.conflicts += 1,
            Certainty::Fragment => {
                r.fragments += 1;
                if node.fragments.iter().all(|f| fragment_fits(catalog, ty, t, f.offset, f.ty)) {
                    r.fragments_consistent += 1;
                }
            }
            Certainty::Unknown => r.unknown += 1,
        }
    }
    Ok(r)
}

fn describe(t: &ObjectTruth) -> String {
    match t.kind {
        ObjectKind::Single => t.ty.clone(),
        ObjectKind::Array => format!("{}[{}]", t.ty, t.count),
        ObjectKind::Fam => format!("{} with [{}]", t.ty, t.count),
    }
}

fn shape_matches(node: &Node, t: &ObjectTruth) -> bool {
    match (t.kind, node.verdict) {
        (ObjectKind::Single, ArrayVerdict::Undetermined | ArrayVerdict::NotArray) => true,
        (ObjectKind::Array, ArrayVerdict::Array { count }) => count == t.count,
        (ObjectKind::Fam, ArrayVerdict::Fam { count, .. }) => count == t.count,
        _ => false,
    }
}

/// Whether a `frag` instance at `offset` is consistent with the true layout.
fn fragment_fits(catalog: &TypeCatalog, ty: TypeId, t: &ObjectTruth, offset: u64, frag: TypeId) -> bool {
    let frag = catalog.resolve_id(frag);
    let tsize = catalog.size_of(ty).max(1);
    let (within, off) = match t.kind {
        ObjectKind::Array => (ty, offset % tsize),
        ObjectKind::Fam => match catalog.detect_fam(ty).ok().flatten() {
            Some(f) if offset >= f.offset + f.declared_count * catalog.size_of(f.element) => {
                (f.element, (offset - f.offset) % catalog.size_of(f.element).max(1))
            }
            _ => (ty, offset),
        },
        ObjectKind::Single => (ty, offset),
    };
    catalog.types_at_offset(within, off).contains(&frag)
}
