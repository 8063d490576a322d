use proptest::prelude::*;

use typegraph::dumpio::{encode_word, DumpImage, Endianness};
use typegraph::graph::{ArrayVerdict, Certainty, TypeGraph};
use typegraph::synth::corpus::{kernel_catalog, locks_corpus, recognition_corpus, Materialized};
use typegraph::synth::{evaluate, generate, Directive, ObjectKind};
use typegraph::typecat::{TypeCatalog, TypeShape};

fn small_config() -> ProptestConfig {
    ProptestConfig { cases: 12, ..ProptestConfig::default() }
}

/// Largest n with n * t <= size, by counting.
fn fit(size: u64, t: u64) -> u64 {
    let mut n = 0;
    while (n + 1) * t <= size {
        n += 1;
    }
    n
}

/// Every pointer member of every element is null or mapped.
fn pointer_words_valid(g: &TypeGraph, base: u64, element: typegraph::typecat::TypeId, count: u64) -> bool {
    let cat = g.catalog();
    let t = cat.size_of(element);
    let ptrs = cat.pointer_members(element).unwrap();
    (0..count).all(|i| {
        ptrs.iter().all(|p| {
            let w = g.image().read_word(base + i * t + p.offset).unwrap();
            w == 0 || g.image().is_mapped(w)
        })
    })
}

fn check_graph_invariants(m: &Materialized, g: &TypeGraph) {
    let cat = g.catalog();
    let history = g.history();
    for w in history[1..].windows(2) {
        assert!(w[1].known_or_conjectured >= w[0].known_or_conjectured, "monotonic");
        assert_eq!(w[1].known, w[0].known);
    }
    let mut conflicts = 0;
    for n in g.heap_nodes() {
        if n.certainty() == Certainty::Conflict {
            conflicts += 1;
            assert!(!n.marked, "conflict nodes are frozen");
        }
        // known nodes keep their cache type
        if let Some(cache) = n.cache() {
            let name = &g.image().cache(cache).unwrap().name;
            if let Some(ty) = g.table().get(name) {
                assert!(n.known);
                assert_eq!(n.inferences.len(), 1);
                assert_eq!(n.inferences[0].ty, cat.resolve_id(ty));
            }
        }
        // fragments are interior and never base inferences
        assert!(n.fragments.iter().all(|f| f.offset > 0));
        if let ArrayVerdict::Array { count } = n.verdict {
            let ty = n.single_type().unwrap();
            let t = cat.size_of(ty);
            let smaller = g.image().gp_sizes().iter().copied().filter(|&s| s < n.size).max();
            let used = fit(n.size, t) * t;
            assert!(smaller.is_none_or(|s| used > s), "array check holds post hoc");
            assert_eq!(count, fit(n.size, t));
            assert!(pointer_words_valid(g, n.base, ty, count));
        }
    }
    assert_eq!(conflicts, history.last().unwrap().conflicts);
    assert_eq!(conflicts == 0, typegraph::analyzers::conflicts(g).is_empty());

    let report = evaluate(g, &m.truth).unwrap();
    assert_eq!(report.misidentified, 0, "{report}");
    let typed = m.truth.objects.iter().filter(|o| m.table.get(&cache_of(m, o.base)).is_some()).count();
    assert_eq!(report.correct_known as usize, typed);
}

fn cache_of(m: &Materialized, base: u64) -> String {
    let (obj, _) = m.image.object_containing(base).unwrap();
    m.image.cache(obj.cache).unwrap().name.clone()
}

proptest! {
    #![proptest_config(small_config())]

    #[test]
    fn cast_free_corpora_are_never_misidentified(seed in any::<u64>(), units in 2usize..24, wide in any::<bool>()) {
        let ps = if wide { 8 } else { 4 };
        let m = recognition_corpus(ps, seed, units).materialize().unwrap();
        let g = m.processed().unwrap();
        check_graph_invariants(&m, &g);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), units in 2usize..12) {
        let m = recognition_corpus(8, seed, units).materialize().unwrap();
        let render = |g: &TypeGraph| -> String {
            let mut s = String::new();
            for n in g.nodes() {
                s.push_str(&format!("{}\n{}\n", g.whattype(n.base), g.whattype(n.base + n.size / 2)));
            }
            s
        };
        let (a, b) = (m.processed().unwrap(), m.processed().unwrap());
        prop_assert_eq!(render(&a), render(&b));
        let strip = |g: &TypeGraph| g.history().iter().map(|p| (p.known, p.conjectured, p.conflicts, p.candidates, p.unmarked)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn istype_never_overrides_known(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let m = recognition_corpus(8, seed, 4).materialize().unwrap();
        let mut g = m.processed().unwrap();
        let known: Vec<u64> = g.heap_nodes().filter(|n| n.known).map(|n| n.base).collect();
        let victim = known[pick.index(known.len())];
        let cred = g.catalog().require("cred_t").unwrap();
        prop_assert!(g.istype(victim, cred).is_err());
        let vnode = g.catalog().require("vnode_t").unwrap();
        let other = m.truth.objects.iter().find(|o| o.ty == "struct vnode").unwrap().base;
        g.istype(other, vnode).unwrap();
        for base in known {
            let n = g.node(g.node_at(base).unwrap());
            prop_assert!(n.known && n.inferences.len() == 1);
        }
    }

    #[test]
    fn generation_is_replayable(seed in any::<u64>()) {
        let c = recognition_corpus(8, seed, 3);
        let cat = TypeCatalog::load(&c.catalog).unwrap();
        let a = generate(&c.spec, &cat).unwrap();
        let b = generate(&c.spec, &cat).unwrap();
        prop_assert_eq!(a.dump, b.dump);
        prop_assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn word_round_trip(value in any::<u64>(), big in any::<bool>(), wide in any::<bool>()) {
        let ps: u8 = if wide { 8 } else { 4 };
        let endianness = if big { Endianness::Big } else { Endianness::Little };
        let value = if wide { value } else { value & 0xffff_ffff };
        let mut buf = vec![0u8; ps as usize];
        encode_word(value, ps, endianness, &mut buf);
        prop_assert_eq!(typegraph::dumpio::decode_word(&buf, ps, endianness), value);
    }
}

#[test]
fn slot_size_law() {
    let c = recognition_corpus(8, 17, 10);
    let m = c.materialize().unwrap();
    let cat = &m.catalog;
    let ladder = &c.spec.gp_sizes;
    for o in &m.truth.objects {
        let (obj, _) = m.image.object_containing(o.base).unwrap();
        let cache = m.image.cache(obj.cache).unwrap();
        if !cache.general_purpose {
            continue;
        }
        let ty = cat.lookup(&o.ty).unwrap();
        let request = match o.kind {
            ObjectKind::Single => cat.size_of(ty),
            ObjectKind::Array => cat.size_of(ty) * o.count,
            ObjectKind::Fam => {
                let fam = cat.detect_fam(ty).unwrap().unwrap();
                fam.offset + o.count * cat.size_of(fam.element)
            }
        };
        let want = ladder.iter().copied().filter(|&s| s >= request).min().unwrap();
        assert_eq!(obj.size, want, "{}", o.name);
    }
}

#[test]
fn edges_are_exactly_the_scripted_links() {
    for c in [recognition_corpus(8, 5, 12), locks_corpus(8, 5, 30, 30)] {
        let m = c.materialize().unwrap();
        let g = m.graph().unwrap();
        let scripted = c
            .spec
            .directives
            .iter()
            .filter(|d| {
                matches!(
                    d,
                    Directive::Link { .. }
                        | Directive::InjectCast { .. }
                        | Directive::InjectStale { .. }
                        | Directive::HoldLock { .. }
                )
            })
            .count();
        assert_eq!(g.edges().len(), scripted);
    }
}

#[test]
fn object_lookup_matches_linear_scan() {
    let m = recognition_corpus(8, 23, 6).materialize().unwrap();
    let img: &DumpImage = &m.image;
    let objs = img.objects();
    let mut probes: Vec<u64> = Vec::new();
    for o in objs {
        probes.extend([o.base.wrapping_sub(1), o.base, o.base + o.size / 2, o.base + o.size - 1, o.base + o.size]);
    }
    for a in probes {
        let linear = objs.iter().position(|o| o.base <= a && a < o.base + o.size);
        assert_eq!(img.object_index_containing(a).map(|(i, _)| i), linear, "{a:#x}");
    }
    for s in 1..20_000u64 {
        if let Some(v) = img.next_smaller_gp_cache(s) {
            assert!(v < s);
        }
    }
}

#[test]
fn catalog_invariants() {
    for ps in [4u8, 8] {
        let cat = TypeCatalog::load(&kernel_catalog(ps)).unwrap();
        for def in cat.iter() {
            let id = def.id;
            assert_eq!(cat.resolve_id(cat.resolve_id(id)), cat.resolve_id(id));
            let ptrs = cat.pointer_members(id).unwrap();
            for w in ptrs.windows(2) {
                assert!(w[0].offset < w[1].offset);
            }
            assert!(ptrs.iter().all(|p| p.offset + ps as u64 <= def.size));
            if let Ok(Some(f)) = cat.detect_fam(id) {
                if f.declared_count == 1 {
                    assert_eq!(f.offset + cat.size_of(f.element), def.size);
                }
            }
        }
        for name in ["struct cred", "struct drv_node", "struct foo", "struct avl_node"] {
            assert!(cat.sync_members(cat.require(name).unwrap()).unwrap().is_empty());
        }
        let uf = cat.require("struct uf_entry").unwrap();
        assert_eq!(cat.sync_members(uf).unwrap().len(), 2);
        let tbf32 = cat.require("struct tbf[32]").unwrap();
        assert!(matches!(cat.def(tbf32).shape, TypeShape::Array { count: 32, .. }));
        assert_eq!(cat.sync_members(tbf32).unwrap().len(), 32);
    }
}

#[test]
fn findlocks_reports_exactly_the_held_locks() {
    for seed in 0..4 {
        let m = locks_corpus(8, seed, 20 + seed as usize * 7, 15).materialize().unwrap();
        let g = m.processed().unwrap();
        let found: Vec<(u64, u64)> = typegraph::analyzers::findlocks(&g, &Default::default())
            .unwrap()
            .iter()
            .map(|r| (r.addr, r.owner))
            .collect();
        let mut want: Vec<(u64, u64)> = m.truth.locks.iter().map(|l| (l.addr, l.owner)).collect();
        want.sort();
        assert_eq!(found, want);
    }
}
