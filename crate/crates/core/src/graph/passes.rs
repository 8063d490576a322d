use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use super::{
    ArrayVerdict, FragmentNote, GraphError, Inference, NodeId, PassKind, PassStats, Referrer, Result, TypeGraph,
};
use crate::typecat::{MemberPath, TypeId, TypeKind};

/// Allocator-size test for a hypothesized array.
///
/// An array of `type_size` elements in `object_size` bytes would use
/// `object_size - object_size % type_size` bytes; if a general-purpose cache
/// of that size or larger (but still smaller than the object) exists, the
/// allocator would have used it, so the object is not such an array.
pub fn check_array(object_size: u64, type_size: u64, next_smaller: Option<u64>) -> bool {
    let used = object_size - object_size % type_size;
    !matches!(next_smaller, Some(smaller) if used <= smaller)
}

/// Number of flexible-array elements fitting in `object_size` bytes when the
/// array starts at `start` and elements are `element_size` bytes.
pub fn fam_count(object_size: u64, start: u64, element_size: u64) -> u64 {
    if element_size == 0 || start > object_size {
        return 0;
    }
    (object_size - start) / element_size
}

#[derive(Clone, Copy)]
struct WorkItem {
    node: NodeId,
    ty: TypeId,
    offset: u64,
    /// The node's own type, as opposed to a fragment interpretation.
    own: bool,
}

#[derive(Default)]
struct PassCtx {
    queue: VecDeque<NodeId>,
    work: Vec<WorkItem>,
    visited: HashSet<(NodeId, TypeId, u64)>,
    changed: bool,
}

impl TypeGraph {
    /// Runs the full pass sequence from a clean state (known and pinned
    /// types are kept) and returns one [`PassStats`] per pass.
    ///
    /// Order: initial snapshot, conservative propagation, array
    /// determination (to fixpoint), coalescence, non-array inference, then a
    /// final array determination and conservative sweep for nodes that only
    /// became eligible late.
    pub fn run(&mut self) -> Vec<PassStats> {
        let started = Instant::now();
        let first_run = self.history.is_empty() && self.build_time > Duration::ZERO;
        self.reset();
        let initial_time = if first_run { self.build_time } else { started.elapsed() };
        let mut total = initial_time;
        let mut out = vec![PassStats::collect(self, "initial", None, initial_time, total).with_initial(self.initial)];

        let schedule = [
            PassKind::Conservative,
            PassKind::Array,
            PassKind::Coalesce,
            PassKind::NonArray,
            PassKind::Array,
            PassKind::Conservative,
        ];
        for (i, kind) in schedule.into_iter().enumerate() {
            let t = Instant::now();
            match kind {
                PassKind::Conservative => self.pass_conservative(),
                PassKind::Array => self.pass_array(),
                PassKind::Coalesce => self.pass_coalesce(),
                PassKind::NonArray => self.pass_nonarray(),
            };
            let elapsed = t.elapsed();
            total += elapsed;
            out.push(PassStats::collect(self, &(i + 1).to_string(), Some(kind), elapsed, total));
        }
        self.history = out.clone();
        out
    }

    /// Pins the node holding `addr` to `ty` and reprocesses the graph.
    pub fn istype(&mut self, addr: u64, ty: TypeId) -> Result<Vec<PassStats>> {
        let (id, _) = self.node_containing(addr).ok_or(GraphError::NoObject(addr))?;
        let ty = self.catalog.resolve_id(ty);
        let node = &self.nodes[id.index()];
        if node.known {
            let known = node.inferences[0].ty;
            if known != ty {
                return Err(GraphError::KnownConflict { addr, known: self.catalog.name(known).to_string() });
            }
        } else {
            self.pins.insert(id, ty);
        }
        Ok(self.run())
    }

    /// Conservative propagation from every node with a trusted single type.
    pub fn pass_conservative(&mut self) -> PassStats {
        let t = Instant::now();
        let mut ctx = PassCtx::default();
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            let Some(ty) = node.single_type() else { continue };
            let tsize = self.catalog.size_of(ty);
            let seed = node.known
                || node.pinned
                || (!node.marked
                    && node.verdict == ArrayVerdict::Undetermined
                    && tsize <= node.size
                    && node.size < 2 * tsize);
            if seed {
                self.nodes[idx].marked = true;
                ctx.queue.push_back(node_id(idx));
            }
        }
        self.drain(&mut ctx);
        PassStats::collect(self, "conservative", Some(PassKind::Conservative), t.elapsed(), t.elapsed())
    }

    /// Array and FAM determination over nodes whose single inferred type is
    /// at most half the object size. Repeats until nothing changes.
    pub fn pass_array(&mut self) -> PassStats {
        let t = Instant::now();
        loop {
            let mut ctx = PassCtx::default();
            let mut verdicts = 0;
            for idx in 0..self.nodes.len() {
                let node = &self.nodes[idx];
                if node.known || node.pinned || node.marked || node.is_static() {
                    continue;
                }
                if node.verdict != ArrayVerdict::Undetermined {
                    continue;
                }
                let Some(ty) = node.single_type() else { continue };
                let tsize = self.catalog.size_of(ty);
                if tsize == 0 || node.size < 2 * tsize {
                    continue;
                }
                verdicts += 1;
                let verdict = self.determine_array(node_id(idx), ty);
                self.nodes[idx].verdict = verdict;
                if verdict != ArrayVerdict::NotArray {
                    self.nodes[idx].marked = true;
                    self.push_elements(&mut ctx, node_id(idx), ty, verdict);
                    self.drain(&mut ctx);
                }
            }
            if verdicts == 0 && !ctx.changed {
                break;
            }
        }
        PassStats::collect(self, "array", Some(PassKind::Array), t.elapsed(), t.elapsed())
    }

    /// Drops non-struct inferences from nodes that also carry a struct one.
    pub fn pass_coalesce(&mut self) -> PassStats {
        let t = Instant::now();
        let kinds: Vec<Vec<bool>> = self
            .nodes
            .iter()
            .map(|n| n.inferences.iter().map(|i| self.type_kind(i.ty) == TypeKind::Struct).collect())
            .collect();
        for (node, is_struct) in self.nodes.iter_mut().zip(kinds) {
            if node.inferences.len() < 2 {
                continue;
            }
            if is_struct.iter().any(|&s| s) && is_struct.iter().any(|&s| !s) {
                let mut keep = is_struct.into_iter();
                node.inferences.retain(|_| keep.next().unwrap());
            }
        }
        PassStats::collect(self, "coalesce", Some(PassKind::Coalesce), t.elapsed(), t.elapsed())
    }

    /// Propagates single-inference nodes that were judged not to be arrays,
    /// treating the type as one instance at offset 0.
    pub fn pass_nonarray(&mut self) -> PassStats {
        let t = Instant::now();
        let mut ctx = PassCtx::default();
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            if node.marked || node.verdict != ArrayVerdict::NotArray {
                continue;
            }
            let Some(ty) = node.single_type() else { continue };
            if 2 * self.catalog.size_of(ty) >= node.size {
                continue;
            }
            self.nodes[idx].marked = true;
            ctx.work.push(WorkItem { node: node_id(idx), ty, offset: 0, own: true });
            self.drain(&mut ctx);
        }
        PassStats::collect(self, "nonarray", Some(PassKind::NonArray), t.elapsed(), t.elapsed())
    }

    /// Checks that every pointer member of `count` consecutive `element`s
    /// starting at `start` holds NULL or an address inside mapped memory.
    pub fn verify_array(&self, node: NodeId, element: TypeId, start: u64, count: u64) -> bool {
        let base = self.nodes[node.index()].base;
        let esize = self.catalog.size_of(element);
        let members = self.catalog.pointer_members(element).expect("catalog type");
        if members.is_empty() {
            return true;
        }
        for i in 0..count {
            for pm in members.iter() {
                let addr = base + start + i * esize + pm.offset;
                match self.image.read_word(addr) {
                    Ok(0) => {}
                    Ok(word) if self.image.is_mapped(word) => {}
                    _ => return false,
                }
            }
        }
        true
    }

    fn determine_array(&self, id: NodeId, ty: TypeId) -> ArrayVerdict {
        let node = &self.nodes[id.index()];
        let tdef = self.catalog.def(ty);
        if tdef.is_struct() {
            if let Ok(Some(fam)) = self.catalog.detect_fam(ty) {
                let esize = self.catalog.size_of(fam.element);
                let count = fam_count(node.size, fam.offset, esize);
                let trailing_start = fam.offset + fam.declared_count * esize;
                let ok = self.verify_array(id, ty, 0, 1)
                    && self.verify_array(id, fam.element, trailing_start, count.saturating_sub(fam.declared_count));
                return if ok { ArrayVerdict::Fam { element: fam.element, count } } else { ArrayVerdict::NotArray };
            }
        }
        let general = node.cache().and_then(|c| self.image.cache(c)).is_some_and(|c| c.general_purpose);
        let count = node.size / tdef.size;
        if general
            && check_array(node.size, tdef.size, self.image.next_smaller_gp_cache(node.size))
            && self.verify_array(id, ty, 0, count)
        {
            ArrayVerdict::Array { count }
        } else {
            ArrayVerdict::NotArray
        }
    }

    fn push_elements(&self, ctx: &mut PassCtx, node: NodeId, ty: TypeId, verdict: ArrayVerdict) {
        match verdict {
            ArrayVerdict::Array { count } => {
                let tsize = self.catalog.size_of(ty);
                for i in (0..count).rev() {
                    ctx.work.push(WorkItem { node, ty, offset: i * tsize, own: true });
                }
            }
            ArrayVerdict::Fam { element, count } => {
                let fam = self.catalog.detect_fam(ty).ok().flatten().expect("fam verdict on fam type");
                let esize = self.catalog.size_of(element);
                for k in (fam.declared_count..count).rev() {
                    ctx.work.push(WorkItem { node, ty: element, offset: fam.offset + k * esize, own: true });
                }
                ctx.work.push(WorkItem { node, ty, offset: 0, own: true });
            }
            ArrayVerdict::Undetermined | ArrayVerdict::NotArray => {}
        }
    }

    /// Processes the BFS queue to exhaustion.
    fn drain(&mut self, ctx: &mut PassCtx) {
        loop {
            self.run_work(ctx);
            let Some(id) = ctx.queue.pop_front() else { break };
            self.process_node(ctx, id);
        }
    }

    fn process_node(&mut self, ctx: &mut PassCtx, id: NodeId) {
        let node = &self.nodes[id.index()];
        // acquired a second inference while queued
        let Some(ty) = node.single_type() else { return };
        let tsize = self.catalog.size_of(ty);
        if tsize > node.size {
            return;
        }
        ctx.work.push(WorkItem { node: id, ty, offset: 0, own: true });
        self.run_work(ctx);

        // Flexible array members of objects inside the propagation window:
        // the trailing elements are part of the same allocation.
        if node_is_heap_undetermined(self, id) && self.catalog.def(ty).is_struct() {
            if let Ok(Some(fam)) = self.catalog.detect_fam(ty) {
                let size = self.nodes[id.index()].size;
                let esize = self.catalog.size_of(fam.element);
                let count = fam_count(size, fam.offset, esize);
                let trailing_start = fam.offset + fam.declared_count * esize;
                let extra = count.saturating_sub(fam.declared_count);
                if self.verify_array(id, fam.element, trailing_start, extra) {
                    let verdict = ArrayVerdict::Fam { element: fam.element, count };
                    self.nodes[id.index()].verdict = verdict;
                    for k in (fam.declared_count..count).rev() {
                        ctx.work.push(WorkItem {
                            node: id,
                            ty: fam.element,
                            offset: fam.offset + k * esize,
                            own: true,
                        });
                    }
                    self.run_work(ctx);
                }
            }
        }
    }

    fn run_work(&mut self, ctx: &mut PassCtx) {
        while let Some(item) = ctx.work.pop() {
            self.through(ctx, item);
        }
    }

    /// Through-propagation of one typed region of a node: every pointer
    /// member of `item.ty` at `item.offset` is followed to its edge.
    fn through(&mut self, ctx: &mut PassCtx, item: WorkItem) {
        let WorkItem { node: n, ty, offset: b, own } = item;
        if own && self.nodes[n.index()].inferences.len() > 1 {
            return;
        }
        if !ctx.visited.insert((n, ty, b)) {
            return;
        }
        let catalog = self.catalog.clone();
        let members = catalog.pointer_members(ty).expect("catalog type");
        for pm in members.iter() {
            let src_offset = b + pm.offset;
            let Some(&edge) = self.edge_at(n, src_offset) else { continue };
            let pointee = catalog.resolve(pm.pointee).expect("catalog type");
            if pointee.size == 0 || pointee.kind() == TypeKind::Function {
                continue;
            }
            let r = pointee.id;
            let rsize = pointee.size;
            let dst = edge.dst;
            let dsize = self.nodes[dst.index()].size;
            let dst_offset = edge.dst_offset;

            let oversize = if dst_offset == 0 {
                rsize > dsize
            } else {
                pointee.kind() != TypeKind::Base && dst_offset + rsize > dsize
            };
            if pointee.kind() == TypeKind::Union || oversize {
                self.reject(dst, dst_offset, r, &pm.path, n, src_offset);
                continue;
            }
            if dst_offset == 0 {
                let referrer = Referrer { node: n, src_offset, via: pm.path.clone() };
                let window = dsize < 2 * rsize;
                self.add_inference(ctx, dst, r, referrer, window);
            } else {
                self.add_fragment(ctx, dst, dst_offset, r, &pm.path, n, src_offset);
                ctx.work.push(WorkItem { node: dst, ty: r, offset: dst_offset, own: false });
            }
        }
    }

    fn add_inference(&mut self, ctx: &mut PassCtx, dst: NodeId, ty: TypeId, referrer: Referrer, window: bool) {
        let node = &self.nodes[dst.index()];
        if node.known || node.pinned {
            if node.inferences[0].ty != ty {
                let via = referrer.via.clone();
                self.reject(dst, 0, ty, &via, referrer.node, referrer.src_offset);
            }
            return;
        }
        if node.inferences.iter().any(|i| i.ty == ty) {
            return;
        }
        let node = &mut self.nodes[dst.index()];
        node.inferences.push(Inference { ty, referrer: Some(referrer) });
        ctx.changed = true;
        if node.inferences.len() == 1 {
            if !node.marked && window {
                node.marked = true;
                ctx.queue.push_back(dst);
            }
        } else {
            // conflicting inferences freeze the node
            node.marked = false;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn add_fragment(
        &mut self,
        ctx: &mut PassCtx,
        dst: NodeId,
        offset: u64,
        ty: TypeId,
        via: &MemberPath,
        referrer: NodeId,
        src_offset: u64,
    ) {
        if self.fragment_keys.insert((dst, offset, ty, referrer)) {
            let note = FragmentNote { offset, ty, via: via.clone(), referrer, src_offset };
            self.nodes[dst.index()].fragments.push(note);
            ctx.changed = true;
        }
    }

    fn reject(&mut self, dst: NodeId, offset: u64, ty: TypeId, via: &MemberPath, referrer: NodeId, src_offset: u64) {
        let node = &mut self.nodes[dst.index()];
        if !node.rejected.iter().any(|r| r.offset == offset && r.ty == ty && r.referrer == referrer) {
            node.rejected.push(FragmentNote { offset, ty, via: via.clone(), referrer, src_offset });
        }
    }
}

fn node_id(idx: usize) -> NodeId {
    NodeId(idx as u32)
}

fn node_is_heap_undetermined(g: &TypeGraph, id: NodeId) -> bool {
    let n = &g.nodes[id.index()];
    !n.is_static() && n.verdict == ArrayVerdict::Undetermined
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct transcription of the allocator argument: the object is not an
    /// array when some cache no larger than needed would have fit it.
    fn brute(object_size: u64, type_size: u64, ladder: &[u64]) -> bool {
        let mut elements = 0;
        while (elements + 1) * type_size <= object_size {
            elements += 1;
        }
        let needed = elements * type_size;
        !ladder.iter().any(|&c| c < object_size && c >= needed)
    }

    #[test]
    fn array_check_at_next_smaller_boundary() {
        assert!(!check_array(224, 76, Some(160)));
        assert!(check_array(224, 76, Some(128)));
        assert!(check_array(224, 76, None));
        assert_eq!(brute(224, 76, &[128, 160, 224]), check_array(224, 76, Some(160)));
    }

    #[test]
    fn fam_count_arithmetic() {
        // foo_t of 12 bytes ending in mumble_t[1] at offset 8, 24-byte object
        assert_eq!(fam_count(24, 8, 4), 4);
        assert_eq!(fam_count(12, 8, 4), 1);
        assert_eq!(fam_count(8, 8, 0), 0);
    }

    proptest::proptest! {
        #[test]
        fn check_array_matches_brute(obj in 2u64..5000, t in 1u64..600, ladder in proptest::collection::btree_set(1u64..5000, 0..12)) {
            proptest::prop_assume!(obj >= 2 * t);
            let ladder: Vec<u64> = ladder.into_iter().collect();
            let next = crate::dumpio::next_smaller(&ladder, obj);
            proptest::prop_assert_eq!(check_array(obj, t, next), brute(obj, t, &ladder));
        }
    }
}
