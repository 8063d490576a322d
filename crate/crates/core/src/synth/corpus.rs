//! Ready-made catalogs and scenarios.
//!
//! [`kernel_catalog`] describes a small kernel-like world (processes,
//! threads, vnodes, address spaces with embedded AVL nodes, locks, a
//! flexible-array struct, ...) laid out for either pointer size. The
//! scenario builders script dumps over it that exercise one capability
//! each.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{generate, GroundTruth, SynthError, SynthSpec};
use crate::dumpio::{DumpDocument, DumpError, DumpImage};
use crate::graph::{CacheTableDocument, CacheTableEntry, CacheTypeTable, GraphError, TypeGraph};
use crate::typecat::{CatalogDocument, CatalogError, TypeCatalog, TypeEntry, SYNC_PRIMITIVE};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lays out C structs for a given pointer size and collects catalog entries.
#[derive(Debug, Clone)]
pub struct CatalogBuilder {
    ps: u64,
    entries: Vec<TypeEntry>,
    /// size and alignment per type id
    layout: HashMap<String, (u64, u64)>,
}

impl CatalogBuilder {
    pub fn new(pointer_size: u8) -> Self {
        CatalogBuilder { ps: pointer_size as u64, entries: Vec::new(), layout: HashMap::new() }
    }

    fn push(&mut self, entry: TypeEntry, align: u64) {
        self.layout.insert(entry.id.clone(), (entry.size, align.max(1)));
        self.entries.push(entry);
    }

    fn size_align(&self, id: &str) -> (u64, u64) {
        *self.layout.get(id).unwrap_or_else(|| panic!("type `{id}` used before definition"))
    }

    pub fn base(&mut self, name: &str, size: u64) -> &mut Self {
        self.push(TypeEntry::base(name, name, size), size.clamp(1, self.ps));
        self
    }

    pub fn function(&mut self, name: &str) -> &mut Self {
        self.push(TypeEntry::function(name, name), 1);
        self
    }

    /// Adds `pointee *` if missing and returns its id. The pointee may be
    /// defined later.
    pub fn pointer(&mut self, pointee: &str) -> String {
        let id = if pointee.ends_with('*') { format!("{pointee}*") } else { format!("{pointee} *") };
        if !self.layout.contains_key(&id) {
            self.push(TypeEntry::pointer(&id, &id, self.ps, pointee), self.ps);
        }
        id
    }

    /// Adds `element[count]` if missing and returns its id.
    pub fn array(&mut self, element: &str, count: u64) -> String {
        let id = format!("{element}[{count}]");
        if !self.layout.contains_key(&id) {
            let (size, align) = self.size_align(element);
            self.push(TypeEntry::array(&id, &id, size * count, element, count), align);
        }
        id
    }

    pub fn typedef(&mut self, name: &str, target: &str) -> &mut Self {
        let (size, align) = self.size_align(target);
        self.push(TypeEntry::typedef(name, name, size, target), align);
        self
    }

    /// Naturally aligned struct; member types must already be defined
    /// (pointers excepted, see [`pointer`](Self::pointer)).
    pub fn structure(&mut self, name: &str, fields: &[(&str, &str)]) -> &mut Self {
        self.structure_flagged(name, fields, false)
    }

    pub fn sync_structure(&mut self, name: &str, fields: &[(&str, &str)]) -> &mut Self {
        self.structure_flagged(name, fields, true)
    }

    fn structure_flagged(&mut self, name: &str, fields: &[(&str, &str)], sync: bool) -> &mut Self {
        let mut off: u64 = 0;
        let mut align = 1;
        let mut members = Vec::new();
        for &(fname, fty) in fields {
            let (size, a) = self.size_align(fty);
            off = off.div_ceil(a) * a;
            members.push((fname, off, fty));
            off += size;
            align = align.max(a);
        }
        let size = off.div_ceil(align) * align;
        let mut entry = TypeEntry::structure(name, name, size, &members);
        if sync {
            entry = entry.with_flag(SYNC_PRIMITIVE);
        }
        self.push(entry, align);
        self
    }

    pub fn size_of(&self, id: &str) -> u64 {
        self.size_align(id).0
    }

    pub fn finish(&self) -> CatalogDocument {
        CatalogDocument { types: self.entries.clone() }
    }
}

/// Kernel-like catalog for pointer size 4 or 8.
pub fn kernel_catalog(pointer_size: u8) -> CatalogDocument {
    kernel_builder(pointer_size).finish()
}

fn kernel_builder(pointer_size: u8) -> CatalogBuilder {
    let mut b = CatalogBuilder::new(pointer_size);
    let ps = pointer_size as u64;
    b.base("char", 1)
        .base("short", 2)
        .base("int", 4)
        .base("long", ps)
        .base("uintptr_t", ps)
        .base("ushort_t", 2)
        .base("void", 0)
        .function("void (void)");
    let void_p = b.pointer("void");
    let char_p = b.pointer("char");
    let fn_p = b.pointer("void (void)");
    b.sync_structure("struct mutex", &[("_opaque", "uintptr_t")]).typedef("kmutex_t", "struct mutex");
    b.sync_structure("struct _kcondvar", &[("_opaque", "ushort_t")]).typedef("kcondvar_t", "struct _kcondvar");

    let ints4 = b.array("int", 4);
    let chars16 = b.array("char", 16);
    let longs4 = b.array("long", 4);
    b.structure(
        "struct cred",
        &[("cr_ref", "int"), ("cr_uid", "int"), ("cr_gid", "int"), ("cr_ngroups", "int"), ("cr_groups", &ints4)],
    )
    .typedef("cred_t", "struct cred");

    let vnode_p = b.pointer("struct vnode");
    b.structure(
        "struct vnode",
        &[
            ("v_lock", "kmutex_t"),
            ("v_flag", "int"),
            ("v_count", "int"),
            ("v_data", &void_p),
            ("v_path", &char_p),
            ("v_next", &vnode_p),
            ("v_type", "int"),
        ],
    )
    .typedef("vnode_t", "struct vnode");

    b.structure(
        "struct uf_entry",
        &[
            ("uf_file", &void_p),
            ("uf_vnode", &vnode_p),
            ("uf_flag", "short"),
            ("uf_busy", "short"),
            ("uf_refcnt", "int"),
            ("uf_lock", "kmutex_t"),
            ("uf_cv", "kcondvar_t"),
        ],
    );

    let kthread_p = b.pointer("kthread_t");
    let proc_p = b.pointer("struct proc");
    let kmutex_p = b.pointer("kmutex_t");
    b.structure(
        "struct kthread",
        &[
            ("t_link", &kthread_p),
            ("t_procp", &proc_p),
            ("t_state", "int"),
            ("t_pri", "int"),
            ("t_wchan", &void_p),
            ("t_startpc", &fn_p),
            ("t_lockp", &kmutex_p),
        ],
    )
    .typedef("kthread_t", "struct kthread");

    // address space: segments hang off an AVL tree whose nodes are embedded
    let avl_p = b.pointer("struct avl_node");
    let avl_children = b.array(&avl_p, 2);
    b.structure("struct avl_node", &[("avl_child", &avl_children), ("avl_parent", &avl_p)]);
    b.structure("struct avl_tree", &[("avl_root", &avl_p), ("avl_numnodes", "long")]);
    let as_p = b.pointer("struct as");
    let seg_p = b.pointer("struct seg");
    b.structure(
        "struct seg",
        &[
            ("s_base", "uintptr_t"),
            ("s_size", "long"),
            ("s_tree", "struct avl_node"),
            ("s_as", &as_p),
            ("s_next", &seg_p),
            ("s_data", &void_p),
        ],
    );
    b.structure(
        "struct as",
        &[("a_lock", "kmutex_t"), ("a_segtree", "struct avl_tree"), ("a_seglast", &seg_p), ("a_nsegs", "int")],
    );

    let cred_p = b.pointer("cred_t");
    let uf_p = b.pointer("struct uf_entry");
    b.structure(
        "struct proc",
        &[
            ("p_next", &proc_p),
            ("p_prev", &proc_p),
            ("p_lock", "kmutex_t"),
            ("p_tlist", &kthread_p),
            ("p_cred", &cred_p),
            ("p_as", &as_p),
            ("p_files", &uf_p),
            ("p_exec", &vnode_p),
            ("p_pid", "int"),
            ("p_nfiles", "int"),
            ("p_comm", &chars16),
        ],
    )
    .typedef("proc_t", "struct proc");

    // singly linked list with a string and a side structure
    let foo_p = b.pointer("foo_t");
    let bar_p = b.pointer("bar_t");
    b.structure("struct foo", &[("foo_next", &foo_p), ("foo_name", &char_p), ("foo_bar", &bar_p), ("foo_val", "int")])
        .typedef("foo_t", "struct foo");
    b.structure("struct bar", &[("bar_val", "long"), ("bar_foo", &foo_p), ("bar_cred", &cred_p)])
        .typedef("bar_t", "struct bar");

    let rnode_p = b.pointer("struct rnode");
    b.structure(
        "struct rnode",
        &[("r_vnode", &vnode_p), ("r_path", &char_p), ("r_size", "long"), ("r_next", &rnode_p)],
    );

    let amp_p = b.pointer("struct anon_map");
    b.structure(
        "struct anon_map",
        &[("size", "long"), ("serial_lock", "kmutex_t"), ("ahp", &void_p), ("refcnt", "int"), ("am_next", &amp_p)],
    );

    // flexible array member
    b.structure("struct mumble", &[("me_vp", &vnode_p), ("me_val", "long")]).typedef("mumble_t", "struct mumble");
    let mumble1 = b.array("mumble_t", 1);
    let fam_p = b.pointer("struct fam_hdr");
    b.structure("struct fam_hdr", &[("fh_next", &fam_p), ("fh_n", "long"), ("fh_ent", &mumble1)]);

    // lock-bearing table element, 56 bytes with 8-byte pointers
    b.structure(
        "struct tbf",
        &[("tbf_lock", "kmutex_t"), ("tbf_conn", &void_p), ("tbf_cnt", "long"), ("tbf_pad", &longs4)],
    );

    let drv_p = b.pointer("struct drv_node");
    b.structure("struct drv_node", &[("dn_next", &drv_p), ("dn_val", "long")]);

    // larger type beginning with a smaller one
    let enode_p = b.pointer("struct enode");
    b.structure("struct enode", &[("en_next", &enode_p), ("en_val", "long")]);
    b.structure("struct lnode", &[("ln_elem", "struct enode"), ("ln_x", "long"), ("ln_y", "long")]);

    b.array("struct tbf", 32);
    b.pointer(&vnode_p);
    b.pointer("proc_t");
    b.pointer("vnode_t");

    let xnode_p = b.pointer("struct xnode");
    b.structure(
        "struct xnode",
        &[("xn_left", &xnode_p), ("xn_right", &xnode_p), ("xn_key", "long"), ("xn_gen", "long")],
    );
    b
}

/// General-purpose size classes of a Solaris-like allocator.
pub fn solaris_ladder() -> Vec<u64> {
    let mut v: Vec<u64> = (1..=8).map(|i| i * 8).collect();
    v.extend([
        80, 96, 112, 128, 160, 192, 224, 256, 320, 384, 448, 512, 640, 768, 896, 1024, 1152, 1344, 1600, 2048, 2688,
        4096, 8192, 12288, 16384,
    ]);
    v
}

/// A catalog plus a scenario over it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub catalog: CatalogDocument,
    pub spec: SynthSpec,
}

/// Everything needed to build a graph from a generated corpus.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub catalog: Arc<TypeCatalog>,
    pub dump: DumpDocument,
    pub image: Arc<DumpImage>,
    pub table: CacheTypeTable,
    pub table_doc: CacheTableDocument,
    pub truth: GroundTruth,
}

impl Materialized {
    /// A fresh, unprocessed graph.
    pub fn graph(&self) -> Result<TypeGraph, CorpusError> {
        Ok(TypeGraph::build(self.image.clone(), self.catalog.clone(), self.table.clone())?)
    }

    /// A graph after the full pass sequence.
    pub fn processed(&self) -> Result<TypeGraph, CorpusError> {
        let mut g = self.graph()?;
        g.run();
        Ok(g)
    }
}

/// Paths of a corpus written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFiles {
    pub dump: PathBuf,
    pub catalog: PathBuf,
    pub cache_table: PathBuf,
    /// Always `<dump>.truth`.
    pub truth: PathBuf,
}

impl Materialized {
    /// Writes `<stem>.dump`, `<stem>.types`, `<stem>.caches` and
    /// `<stem>.dump.truth` under `dir`.
    pub fn write_files(&self, catalog: &CatalogDocument, dir: &Path, stem: &str) -> io::Result<CorpusFiles> {
        let files = CorpusFiles {
            dump: dir.join(format!("{stem}.dump")),
            catalog: dir.join(format!("{stem}.types")),
            cache_table: dir.join(format!("{stem}.caches")),
            truth: dir.join(format!("{stem}.dump.truth")),
        };
        fs::write(&files.dump, serde_json::to_string(&self.dump)?)?;
        fs::write(&files.catalog, serde_json::to_string_pretty(catalog)?)?;
        fs::write(&files.cache_table, serde_json::to_string_pretty(&self.table_doc)?)?;
        fs::write(&files.truth, self.truth.to_json())?;
        Ok(files)
    }
}

impl Corpus {
    /// Generates the corpus and writes it under `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<CorpusFiles, CorpusError> {
        let m = self.materialize()?;
        Ok(m.write_files(&self.catalog, dir, stem)?)
    }

    pub fn materialize(&self) -> Result<Materialized, CorpusError> {
        let catalog = Arc::new(TypeCatalog::load(&self.catalog)?);
        let generated = generate(&self.spec, &catalog)?;
        let image = Arc::new(DumpImage::load(&generated.dump, &catalog)?);
        let table_doc = CacheTableDocument {
            entries: self
                .spec
                .typed_caches
                .iter()
                .map(|c| CacheTableEntry { cache: c.name.clone(), ty: c.ty.clone() })
                .collect(),
        };
        let table = CacheTypeTable::load(&table_doc, &catalog)?;
        Ok(Materialized { catalog, dump: generated.dump, image, table, table_doc, truth: generated.truth })
    }
}

fn kernel_spec(pointer_size: u8, seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::new(pointer_size, &solaris_ladder(), seed);
    spec.typed_cache("process_cache", "proc_t").typed_cache("thread_cache", "kthread_t");
    spec
}

/// String lengths that fill a general-purpose slot exactly, so the array
/// pass recovers the allocated length.
const STRING_LENGTHS: [u64; 6] = [16, 24, 32, 40, 48, 64];

/// Emits objects for a population of processes and the structures hanging
/// off them, plus list-, array- and FAM-shaped side structures. Everything
/// is reachable from statics or typed caches through typed pointers.
struct World<'a> {
    spec: &'a mut SynthSpec,
    rng: ChaCha8Rng,
    n: usize,
}

impl World<'_> {
    fn name(&mut self, prefix: &str) -> String {
        self.n += 1;
        format!("{prefix}{}", self.n)
    }

    fn string(&mut self, src: &str, path: &str) {
        let len = *STRING_LENGTHS.choose(&mut self.rng).unwrap();
        let s = self.name("str");
        self.spec.alloc_array(&s, "char", len).link(src, path, &s);
    }

    fn vnode(&mut self) -> String {
        let v = self.name("vn");
        self.spec.alloc(&v, "vnode_t");
        self.string(&v, "v_path");
        v
    }

    fn process(&mut self, prev: Option<&str>) -> String {
        let p = self.name("proc");
        let t = self.name("thread");
        let c = self.name("cred");
        let a = self.name("as");
        self.spec
            .alloc_in(&p, "proc_t", "process_cache")
            .alloc_in(&t, "kthread_t", "thread_cache")
            .alloc(&c, "cred_t")
            .alloc(&a, "struct as")
            .link(&p, "p_tlist", &t)
            .link(&t, "t_procp", &p)
            .link(&p, "p_cred", &c)
            .link(&p, "p_as", &a);
        if let Some(prev) = prev {
            self.spec.link(prev, "p_next", &p).link(&p, "p_prev", prev);
        }

        // segments: a list through s_next plus an AVL tree through the
        // embedded s_tree nodes
        let nsegs = self.rng.gen_range(2..=4);
        let segs: Vec<String> = (0..nsegs).map(|_| self.name("seg")).collect();
        for s in &segs {
            self.spec.alloc(s, "struct seg").link(s, "s_as", &a);
        }
        for w in segs.windows(2) {
            self.spec.link(&w[0], "s_next", &w[1]);
        }
        self.spec.link(&a, "a_seglast", &segs[0]);
        self.spec.link_into(&a, "a_segtree.avl_root", &segs[0], "s_tree");
        for (i, s) in segs.iter().enumerate().skip(1) {
            let parent = &segs[(i - 1) / 2];
            let slot = if i % 2 == 1 { "s_tree.avl_child[0]" } else { "s_tree.avl_child[1]" };
            self.spec.link_into(parent, slot, s, "s_tree").link_into(s, "s_tree.avl_parent", parent, "s_tree");
        }

        // open files: an array of uf_entry sized to fill its slot
        let nfiles = *[2u64, 4, 8, 16].choose(&mut self.rng).unwrap();
        let files = self.name("files");
        self.spec.alloc_array(&files, "struct uf_entry", nfiles).link(&p, "p_files", &files);
        for i in 0..nfiles {
            if self.rng.gen_bool(0.5) {
                let v = self.vnode();
                self.spec.link(&files, &format!("[{i}].uf_vnode"), &v);
            }
        }
        let exec = self.vnode();
        self.spec.link(&p, "p_exec", &exec);
        p
    }

    fn foo_chain(&mut self, head: &str, len: usize) {
        let mut prev = head.to_string();
        let mut path = "";
        for _ in 0..len {
            let f = self.name("foo");
            let bar = self.name("bar");
            let c = self.name("cred");
            self.spec
                .alloc(&f, "foo_t")
                .link(&prev, path, &f)
                .alloc(&bar, "bar_t")
                .link(&f, "foo_bar", &bar)
                .link(&bar, "bar_foo", &f)
                .alloc(&c, "cred_t")
                .link(&bar, "bar_cred", &c);
            self.string(&f, "foo_name");
            prev = f;
            path = "foo_next";
        }
    }

    fn rnode_chain(&mut self, head: &str, len: usize) {
        let mut prev = head.to_string();
        let mut path = "";
        for _ in 0..len {
            let r = self.name("rnode");
            let v = self.vnode();
            self.spec.alloc(&r, "struct rnode").link(&prev, path, &r).link(&r, "r_vnode", &v);
            if self.rng.gen_bool(0.25) {
                // a path suffix: only an interior pointer reaches the buffer
                let s = self.name("str");
                self.spec.alloc_array(&s, "char", 32).link_into(&r, "r_path", &s, "[4]");
            } else {
                self.string(&r, "r_path");
            }
            prev = r;
            path = "r_next";
        }
    }

    fn fam_chain(&mut self, head: &str, len: usize) {
        // trailing counts whose request fills a slot of the Solaris ladder
        // (header 16 bytes, 16-byte elements, 8-byte pointers)
        const COUNTS: [u64; 11] = [1, 2, 3, 4, 5, 6, 7, 9, 11, 13, 15];
        let mut prev = head.to_string();
        let mut path = "";
        for _ in 0..len {
            let h = self.name("fam");
            let n = *COUNTS.choose(&mut self.rng).unwrap();
            self.spec.alloc_fam(&h, "struct fam_hdr", n).link(&prev, path, &h);
            for k in 0..n {
                if self.rng.gen_bool(0.5) {
                    let v = self.vnode();
                    self.spec.link(&h, &format!("fh_ent[{k}].me_vp"), &v);
                }
            }
            prev = h;
            path = "fh_next";
        }
    }

    fn drv_arrays(&mut self, head: &str, len: usize) {
        const COUNTS: [u64; 8] = [4, 5, 6, 8, 10, 12, 16, 20];
        let mut prev = head.to_string();
        let mut path = String::new();
        for _ in 0..len {
            let arr = self.name("drv");
            let n = *COUNTS.choose(&mut self.rng).unwrap();
            self.spec.alloc_array(&arr, "struct drv_node", n).link(&prev, &path, &arr);
            // a lone node hanging off the first element
            let single = self.name("dn");
            self.spec.alloc(&single, "struct drv_node").link(&arr, "[1].dn_next", &single);
            prev = arr;
            path = format!("[{}].dn_next", n - 1);
        }
    }

    fn vnode_hash(&mut self, head: &str) {
        let n = *[16u64, 32, 64].choose(&mut self.rng).unwrap();
        let table = self.name("vnhash");
        self.spec.alloc_array(&table, "struct vnode *", n).link(head, "", &table);
        for i in 0..n {
            if self.rng.gen_bool(0.7) {
                let v = self.vnode();
                self.spec.link(&table, &format!("[{i}]"), &v);
            }
        }
    }
}

/// A cast-free, fully rooted corpus mixing every scenario type. `units`
/// scales it; each unit contributes roughly 35 heap objects.
pub fn recognition_corpus(pointer_size: u8, seed: u64, units: usize) -> Corpus {
    let catalog = kernel_catalog(pointer_size);
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("practive", "proc_t *")
        .static_object("foo_list", "foo_t *")
        .static_object("rpfreelist", "struct rnode *")
        .static_object("fam_list", "struct fam_hdr *")
        .static_object("drv_state", "struct drv_node *")
        .static_object("tbftable", "struct tbf[32]")
        .static_object("pageout_mutex", "kmutex_t");
    let mut w = World { spec: &mut spec, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), n: 0 };
    let mut hashes = Vec::new();
    let mut prev: Option<String> = None;
    for u in 0..units {
        let p = w.process(prev.as_deref());
        if u == 0 {
            w.spec.link("practive", "", &p);
        }
        prev = Some(p);
        if u % 8 == 0 {
            let h = format!("vn_hash{u}");
            w.spec.static_object(&h, "struct vnode **");
            hashes.push(h);
        }
    }
    for h in &hashes {
        w.vnode_hash(h);
    }
    w.foo_chain("foo_list", units);
    w.rnode_chain("rpfreelist", units / 2);
    w.fam_chain("fam_list", units / 2);
    w.drv_arrays("drv_state", units / 2);
    Corpus { catalog, spec }
}

/// `typed` of `total` heap objects come from typed caches; the rest hang off
/// them through typed pointers.
pub fn typed_fraction_corpus(pointer_size: u8, seed: u64, total: usize, typed: usize) -> Corpus {
    assert!(typed.is_multiple_of(2) && typed <= total && total - typed <= typed / 2 * 5, "unsupported proportions");
    let catalog = kernel_catalog(pointer_size);
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("practive", "proc_t *");
    let procs = typed / 2;
    let mut untyped = total - typed;
    for i in 0..procs {
        let p = format!("proc{i}");
        let t = format!("thread{i}");
        spec.alloc_in(&p, "proc_t", "process_cache")
            .alloc_in(&t, "kthread_t", "thread_cache")
            .link(&p, "p_tlist", &t)
            .link(&t, "t_procp", &p);
        if i == 0 {
            spec.link("practive", "", &p);
        } else {
            spec.link(&format!("proc{}", i - 1), "p_next", &p);
        }
    }
    // distribute untyped objects round-robin over the processes' pointers
    let slots = ["p_cred", "p_exec", "p_as", "thread_lock", "v_path"];
    'outer: for slot in slots {
        for i in 0..procs {
            if untyped == 0 {
                break 'outer;
            }
            let name = format!("{slot}{i}");
            match slot {
                "p_cred" => spec.alloc(&name, "cred_t").link(&format!("proc{i}"), slot, &name),
                "p_exec" => spec.alloc(&name, "vnode_t").link(&format!("proc{i}"), slot, &name),
                "p_as" => spec.alloc(&name, "struct as").link(&format!("proc{i}"), slot, &name),
                "thread_lock" => spec.alloc(&name, "kmutex_t").link(&format!("thread{i}"), "t_lockp", &name),
                _ => spec.alloc_array(&name, "char", 32).link(&format!("p_exec{i}"), slot, &name),
            };
            untyped -= 1;
        }
    }
    Corpus { catalog, spec }
}

/// Catalog with a minimal flexible-array shape: two ints followed by a
/// one-element array of four-byte `mumble_t`.
pub fn fam_catalog(pointer_size: u8) -> CatalogDocument {
    let mut b = CatalogBuilder::new(pointer_size);
    b.base("int", 4).base("char", 1);
    b.structure("struct mumble", &[("m_val", "int")]).typedef("mumble_t", "struct mumble");
    let m1 = b.array("mumble_t", 1);
    b.structure("struct foo", &[("foo_bar", "int"), ("foo_baz", "int"), ("foo_mumble", &m1)])
        .typedef("foo_t", "struct foo");
    let foo_p = b.pointer("foo_t");
    b.array(&foo_p, 16);
    b.finish()
}

/// Sixteen flexible-array objects with trailing counts 1 through 16, on a
/// 32-bit dump whose size classes step by four bytes so every request fills
/// its slot.
pub fn fam_corpus(seed: u64) -> Corpus {
    let catalog = fam_catalog(4);
    let ladder: Vec<u64> = (2..=32).map(|i| i * 4).collect();
    let mut spec = SynthSpec::new(4, &ladder, seed);
    spec.static_object("foo_tab", "foo_t *[16]");
    for n in 1..=16u64 {
        let name = format!("fam{n}");
        spec.alloc_fam(&name, "foo_t", n).link("foo_tab", &format!("[{}]", n - 1), &name);
    }
    Corpus { catalog, spec }
}

/// `count` objects of `struct lnode` (which begins with an embedded
/// `struct enode`), each referenced at its base both as an lnode and as an
/// enode.
pub fn embedded_first_corpus(pointer_size: u8, seed: u64, count: usize) -> Corpus {
    let mut b = kernel_builder(pointer_size);
    let l_p = b.pointer("struct lnode");
    let e_p = b.pointer("struct enode");
    let ltab = b.array(&l_p, count as u64);
    let etab = b.array(&e_p, count as u64);
    let catalog = b.finish();
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("ltab", &ltab).static_object("etab", &etab);
    for i in 0..count {
        let name = format!("l{i}");
        spec.alloc(&name, "struct lnode").link("ltab", &format!("[{i}]"), &name).link("etab", &format!("[{i}]"), &name);
    }
    Corpus { catalog, spec }
}

/// `count` use-after-free scenarios: each credential belongs to a process,
/// but a `bar_t` pointer in a list element still refers to its memory.
pub fn use_after_free_corpus(pointer_size: u8, seed: u64, count: usize) -> Corpus {
    let catalog = kernel_catalog(pointer_size);
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("practive", "proc_t *").static_object("foo_list", "foo_t *");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let p = format!("proc{i}");
        let c = format!("cred{i}");
        let f = format!("foo{i}");
        let s = format!("name{i}");
        spec.alloc_in(&p, "proc_t", "process_cache")
            .alloc(&c, "cred_t")
            .link(&p, "p_cred", &c)
            .alloc(&f, "foo_t")
            .alloc_array(&s, "char", *STRING_LENGTHS.choose(&mut rng).unwrap())
            .link(&f, "foo_name", &s)
            .inject_stale(&f, "foo_bar", &c);
        if i == 0 {
            spec.link("practive", "", &p).link("foo_list", "", &f);
        } else {
            spec.link(&format!("proc{}", i - 1), "p_next", &p).link(&format!("foo{}", i - 1), "foo_next", &f);
        }
    }
    Corpus { catalog, spec }
}

/// Locks in identified objects, `held` of them held and `unheld` free.
/// Held locks are spread over anon_map serial locks, vnode locks, a static
/// mutex, and a mutex allocated on its own.
pub fn locks_corpus(pointer_size: u8, seed: u64, held: usize, unheld: usize) -> Corpus {
    assert!(held >= 2, "need room for the static and standalone locks");
    let catalog = kernel_catalog(pointer_size);
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("amp_list", "struct anon_map *")
        .static_object("vn_list", "vnode_t *")
        .static_object("pageout_mutex", "kmutex_t")
        .static_object("ufs_scan_lock", "kmutex_t")
        .static_object("thread_list", "kthread_t *");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let threads: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
    for (i, t) in threads.iter().enumerate() {
        spec.alloc_in(t, "kthread_t", "thread_cache");
        if i == 0 {
            spec.link("thread_list", "", t);
        } else {
            spec.link(&threads[i - 1], "t_link", t);
        }
    }
    // the standalone mutex and the static are always held
    spec.alloc("lone", "kmutex_t").link(&threads[0], "t_lockp", "lone");
    spec.hold_lock("lone", "", &threads[1], 0);
    spec.hold_lock("pageout_mutex", "", &threads[2], 1);

    // remaining locks live in anon_maps and vnodes, 3:1
    let rest_held = held - 2;
    let rest_unheld = unheld - 1; // ufs_scan_lock is the free static
    let total = rest_held + rest_unheld;
    let mut flags: Vec<bool> = (0..total).map(|i| i < rest_held).collect();
    flags.shuffle(&mut rng);
    let (mut prev_a, mut prev_v): (Option<String>, Option<String>) = (None, None);
    for (i, is_held) in flags.into_iter().enumerate() {
        let (obj, path) = if i % 4 == 3 {
            let v = format!("vn{i}");
            spec.alloc(&v, "vnode_t");
            match &prev_v {
                None => spec.link("vn_list", "", &v),
                Some(p) => spec.link(p, "v_next", &v),
            };
            prev_v = Some(v.clone());
            (v, "v_lock")
        } else {
            let a = format!("amp{i}");
            spec.alloc(&a, "struct anon_map");
            match &prev_a {
                None => spec.link("amp_list", "", &a),
                Some(p) => spec.link(p, "am_next", &a),
            };
            prev_a = Some(a.clone());
            (a, "serial_lock")
        };
        if is_held {
            let owner = threads.choose(&mut rng).unwrap().clone();
            spec.hold_lock(&obj, path, &owner, rng.gen_range(0..8));
        }
    }
    Corpus { catalog, spec }
}

/// Arrays that do and do not risk false sharing at a 64-byte granularity.
pub fn false_sharing_corpus(pointer_size: u8, seed: u64) -> Corpus {
    let mut b = kernel_builder(pointer_size);
    let mutexes16 = b.array("struct mutex", 16);
    let mutexes4 = b.array("struct mutex", 4);
    let drv8 = b.array("struct drv_node", 8);
    let catalog = b.finish();
    let mut spec = kernel_spec(pointer_size, seed);
    spec.static_object("tbftable", "struct tbf[32]")
        .static_object("fx_list_lock", &mutexes16)
        .static_object("small_locks", &mutexes4)
        .static_object("drv_table", &drv8)
        .static_object("practive", "proc_t *")
        .static_object("hash_locks", "kmutex_t *")
        .static_object("drv_state", "struct drv_node *");
    // uf_entry tables: 67 entries fill a 2688-byte slot, 2 entries an 80-byte one
    for (i, n) in [67u64, 67, 2, 16].into_iter().enumerate() {
        let p = format!("proc{i}");
        let files = format!("files{i}");
        spec.alloc_in(&p, "proc_t", "process_cache")
            .alloc_array(&files, "struct uf_entry", n)
            .link(&p, "p_files", &files);
        if i == 0 {
            spec.link("practive", "", &p);
        } else {
            spec.link(&format!("proc{}", i - 1), "p_next", &p);
        }
    }
    spec.alloc_array("locks", "kmutex_t", 512).link("hash_locks", "", "locks");
    spec.alloc_array("drvs", "struct drv_node", 16).link("drv_state", "", "drvs");
    Corpus { catalog, spec }
}

/// A recognition corpus plus a `count`-object binary tree reachable only
/// through a `void *` static.
pub fn opaque_subgraph_corpus(pointer_size: u8, seed: u64, units: usize, count: usize) -> Corpus {
    let mut corpus = recognition_corpus(pointer_size, seed, units);
    let spec = &mut corpus.spec;
    spec.static_object("opaque_root", "void *");
    for i in 0..count {
        let x = format!("x{i}");
        spec.alloc(&x, "struct xnode").leave_unrooted(&x);
        if i == 0 {
            spec.link("opaque_root", "", &x);
        } else {
            let parent = format!("x{}", (i - 1) / 2);
            let side = if i % 2 == 1 { "xn_left" } else { "xn_right" };
            spec.link(&parent, side, &x);
        }
    }
    corpus
}

/// Random pointer graph over `nodes` objects with `void *` slots, a random
/// subset of them in a typed cache. Nothing propagates, so which nodes are
/// unknown is fixed by the typed subset.
pub fn random_graph_corpus(seed: u64, nodes: usize, edges: usize) -> Corpus {
    let mut b = CatalogBuilder::new(8);
    b.base("void", 0).base("long", 8);
    let vp = b.pointer("void");
    let slots = b.array(&vp, 4);
    b.structure("struct gnode", &[("g_ptr", &slots), ("g_val", "long")]);
    let catalog = b.finish();
    let mut spec = SynthSpec::new(8, &[40, 48, 64], seed);
    spec.typed_cache("gnode_cache", "struct gnode");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..nodes {
        let name = format!("g{i}");
        if rng.gen_bool(0.3) {
            spec.alloc_in(&name, "struct gnode", "gnode_cache");
        } else {
            spec.alloc(&name, "struct gnode");
        }
    }
    let mut used = std::collections::HashSet::new();
    for _ in 0..edges {
        let src = rng.gen_range(0..nodes);
        let slot = rng.gen_range(0..4);
        if !used.insert((src, slot)) {
            continue;
        }
        let dst = rng.gen_range(0..nodes);
        spec.link(&format!("g{src}"), &format!("g_ptr[{slot}]"), &format!("g{dst}"));
    }
    Corpus { catalog, spec }
}

/// A two-element list: a static `foo_t *` pointing
/// at a `foo_t` whose members point at a second `foo_t`, a string and a
/// `bar_t`. 32-bit.
pub fn foo_list_corpus(seed: u64) -> Corpus {
    let catalog = kernel_catalog(4);
    let mut spec = kernel_spec(4, seed);
    spec.static_object("foo_list", "foo_t *")
        .alloc("first", "foo_t")
        .alloc("second", "foo_t")
        .alloc_array("name", "char", 16)
        .alloc("bar", "bar_t")
        .link("foo_list", "", "first")
        .link("first", "foo_next", "second")
        .link("first", "foo_name", "name")
        .link("first", "foo_bar", "bar");
    Corpus { catalog, spec }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let b64 = kernel_builder(8);
        assert_eq!(b64.size_of("struct uf_entry"), 40);
        assert_eq!(b64.size_of("struct tbf"), 56);
        assert_eq!(b64.size_of("struct tbf[32]"), 1792);
        assert_eq!(b64.size_of("struct fam_hdr"), 32);
        assert_eq!(b64.size_of("struct lnode"), 32);
        let b32 = kernel_builder(4);
        // foo_next, foo_name, foo_bar, foo_val at 0, 4, 8, 12
        assert_eq!(b32.size_of("struct foo"), 16);
        let fam = fam_catalog(4);
        let foo = fam.types.iter().find(|t| t.id == "struct foo").unwrap();
        assert_eq!(foo.size, 12);
        assert_eq!(foo.members.as_ref().unwrap()[2].offset, 8);
    }

    #[test]
    fn catalogs_load() {
        for ps in [4, 8] {
            TypeCatalog::load(&kernel_catalog(ps)).unwrap();
        }
        TypeCatalog::load(&fam_catalog(4)).unwrap();
    }
}
