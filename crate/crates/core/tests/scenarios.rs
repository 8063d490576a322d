use typegraph::graph::{ArrayVerdict, Certainty};
use typegraph::synth::corpus::{foo_list_corpus, recognition_corpus};
use typegraph::synth::evaluate;

#[test]
fn list_edges_and_inferences() {
    let m = foo_list_corpus(3).materialize().unwrap();
    let g = m.processed().unwrap();
    let at = |name: &str| g.node_at(m.truth.by_name(name).unwrap().base).unwrap();
    let head = g.node_at(m.image.static_by_symbol("foo_list").unwrap().base).unwrap();
    let first = at("first");

    let mut edges: Vec<(u64, u64, u64)> =
        g.edges().iter().map(|e| (g.node(e.src).base, e.src_offset, g.node(e.dst).base)).collect();
    edges.sort();
    let mut want = vec![
        (g.node(head).base, 0, g.node(first).base),
        (g.node(first).base, 0, g.node(at("second")).base),
        (g.node(first).base, 4, g.node(at("name")).base),
        (g.node(first).base, 8, g.node(at("bar")).base),
    ];
    want.sort();
    assert_eq!(edges, want);
    assert!(g.edges().iter().all(|e| e.dst_offset == 0));

    let foo = g.catalog().require("struct foo").unwrap();
    for name in ["first", "second"] {
        let n = g.node(at(name));
        assert_eq!(n.certainty(), Certainty::Conjectured);
        assert_eq!(n.single_type(), Some(foo));
    }
    let name = g.node(at("name"));
    assert_eq!(name.verdict, ArrayVerdict::Array { count: 16 });
    let via = name.inferences[0].referrer.as_ref().unwrap();
    assert_eq!(via.node, first);
    assert_eq!(via.src_offset, 4);
    assert_eq!(via.via.to_string(), "struct foo.foo_name");
}

#[test]
fn containment_is_half_open() {
    let m = foo_list_corpus(3).materialize().unwrap();
    let g = m.processed().unwrap();
    let second = m.truth.by_name("second").unwrap().base;
    let n = g.node(g.node_at(second).unwrap());
    let last = g.whattype(second + n.size - 1);
    assert_eq!(last.base, second);
    assert_eq!(last.offset, n.size - 1);
    // one past the end belongs to the next slot
    let next = g.whattype(second + n.size);
    assert_ne!(next.base, second);
    let before = g.whattype(second - 1);
    assert!(before.base < second && before.node.is_some());
    assert_eq!(g.whattype(0x10).to_string(), "10 is not within any object");
}

#[test]
fn fragment_only_buffers_name_their_referrer() {
    let m = recognition_corpus(8, 9, 40).materialize().unwrap();
    let g = m.processed().unwrap();
    let frag = g.heap_nodes().find(|n| n.certainty() == Certainty::Fragment).expect("an interior-only buffer");
    let report = g.whattype(frag.base + 4);
    assert_eq!(
        report.to_string(),
        format!("{:x} is {:x}+0, possibly char (struct rnode.r_path)", frag.base + 4, frag.base + 4)
    );
    assert_eq!(g.whattype(frag.base).certainty, Certainty::Unknown);
}

#[test]
fn adversarial_fill_adds_phantom_edges() {
    let clean = recognition_corpus(8, 4, 10);
    let mut noisy = clean.clone();
    noisy.spec.adversarial = true;
    let a = clean.materialize().unwrap().graph().unwrap();
    let b = noisy.materialize().unwrap().graph().unwrap();
    assert!(b.edges().len() > a.edges().len());
}

#[test]
fn truth_is_stable_across_pointer_sizes() {
    for ps in [4, 8] {
        let m = recognition_corpus(ps, 2, 6).materialize().unwrap();
        let r = evaluate(&m.processed().unwrap(), &m.truth).unwrap();
        assert_eq!(r.misidentified, 0);
        assert_eq!(r.unknown, 0);
        assert_eq!(r.fragments, r.fragments_consistent);
    }
}
