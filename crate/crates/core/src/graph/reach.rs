use fixedbitset::FixedBitSet;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::{NodeId, TypeGraph};

/// Number of unknown nodes reachable from each node.
///
/// A node is unknown when it has neither an inference nor a fragment note.
/// The count for a node never includes the node itself.
#[derive(Debug, Clone)]
pub struct Reach {
    counts: Vec<u64>,
}

impl Reach {
    pub fn compute(g: &TypeGraph) -> Self {
        let n = g.nodes().len();
        let mut dg: DiGraph<(), ()> = DiGraph::with_capacity(n, g.edges().len());
        for _ in 0..n {
            dg.add_node(());
        }
        for e in g.edges() {
            dg.add_edge(NodeIndex::new(e.src.index()), NodeIndex::new(e.dst.index()), ());
        }
        let unknown: Vec<bool> = g.nodes().iter().map(|x| x.inferences.is_empty() && x.fragments.is_empty()).collect();

        // tarjan_scc yields components in reverse topological order, so every
        // successor component is finished before its predecessors
        let sccs = tarjan_scc(&dg);
        let mut comp_of = vec![0usize; n];
        for (c, members) in sccs.iter().enumerate() {
            for v in members {
                comp_of[v.index()] = c;
            }
        }
        let mut sets: Vec<FixedBitSet> = Vec::with_capacity(sccs.len());
        for (c, members) in sccs.iter().enumerate() {
            let mut set = FixedBitSet::with_capacity(n);
            let cyclic = members.len() > 1 || members.iter().any(|&v| dg.contains_edge(v, v));
            for &v in members {
                if cyclic && unknown[v.index()] {
                    set.insert(v.index());
                }
                for w in dg.neighbors(v) {
                    let wc = comp_of[w.index()];
                    if wc != c {
                        set.union_with(&sets[wc]);
                        if unknown[w.index()] {
                            set.insert(w.index());
                        }
                    }
                }
            }
            sets.push(set);
        }
        let counts = (0..n)
            .map(|v| {
                let set = &sets[comp_of[v]];
                set.count_ones(..) as u64 - u64::from(set.contains(v))
            })
            .collect();
        Reach { counts }
    }

    pub fn of(&self, id: NodeId) -> u64 {
        self.counts[id.index()]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

impl TypeGraph {
    pub fn reach(&self) -> Reach {
        Reach::compute(self)
    }

    /// The unidentified node whose type, if known, could identify the most
    /// unknown nodes. Ties go to the lowest base address. Known, pinned and
    /// conjectured nodes are not candidates; `None` when no candidate has
    /// a nonzero reach.
    pub fn greatest_reach(&self) -> Option<(NodeId, u64)> {
        let reach = self.reach();
        self.nodes()
            .iter()
            .filter(|n| !n.is_identified())
            .map(|n| (n.id, reach.of(n.id)))
            .filter(|&(_, r)| r > 0)
            // nodes are in base order, so the first maximum wins ties
            .fold(None, |best: Option<(NodeId, u64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
    }
}
