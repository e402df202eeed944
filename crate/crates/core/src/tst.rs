//! Total suffix tree: the context tree closed under taking any contiguous
//! piece of a context path. Two histories with the same longest match in this
//! tree receive the same PPM prediction, and the match for `history·a` is a
//! function of the match for `history` and `a` alone.

use std::collections::BTreeSet;

use crate::context::{ContextTree, SymbolDistribution};
use crate::contour::RelSymbol;

pub type TstNodeId = u32;
pub const TST_ROOT: TstNodeId = 0;

#[derive(Debug, Clone)]
struct TstNode {
    children: [Option<TstNodeId>; 3],
    path: Vec<RelSymbol>,
    dist: SymbolDistribution,
    next: [TstNodeId; 3],
}

#[derive(Debug, Clone)]
pub struct TotalSuffixTree {
    depth: usize,
    nodes: Vec<TstNode>,
}

pub fn build_tst(tree: &ContextTree) -> TotalSuffixTree {
    let mut paths: BTreeSet<Vec<RelSymbol>> = BTreeSet::new();
    for (path, _) in tree.records() {
        for a in 0..path.len() {
            for b in a + 1..=path.len() {
                paths.insert(path[a..b].to_vec());
            }
        }
    }
    let mut tst = TotalSuffixTree {
        depth: tree.depth(),
        nodes: vec![TstNode {
            children: [None; 3],
            path: Vec::new(),
            dist: tree.distribution_for_reversed(&[]),
            next: [TST_ROOT; 3],
        }],
    };
    // BTreeSet order puts every path after its proper prefixes
    for path in paths {
        let parent = tst.find(&path[..path.len() - 1]).expect("prefix inserted first");
        let id = tst.nodes.len() as TstNodeId;
        tst.nodes.push(TstNode {
            children: [None; 3],
            dist: tree.distribution_for_reversed(&path),
            path: path.clone(),
            next: [TST_ROOT; 3],
        });
        tst.nodes[parent as usize].children[path[path.len() - 1].index()] = Some(id);
    }
    for id in 0..tst.nodes.len() {
        for a in RelSymbol::ALL {
            let mut ext = Vec::with_capacity(tst.nodes[id].path.len() + 1);
            ext.push(a);
            ext.extend_from_slice(&tst.nodes[id].path);
            tst.nodes[id].next[a.index()] = tst.longest_match(&ext);
        }
    }
    tst
}

impl TotalSuffixTree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of nodes, root excluded.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Node for an exact reversed path.
    pub fn find(&self, reversed_path: &[RelSymbol]) -> Option<TstNodeId> {
        reversed_path
            .iter()
            .try_fold(TST_ROOT, |id, s| self.nodes[id as usize].children[s.index()])
    }

    pub fn contains(&self, reversed_path: &[RelSymbol]) -> bool {
        self.find(reversed_path).is_some()
    }

    /// Deepest node along a reversed path.
    pub fn longest_match(&self, reversed_path: &[RelSymbol]) -> TstNodeId {
        let mut id = TST_ROOT;
        for s in reversed_path {
            match self.nodes[id as usize].children[s.index()] {
                Some(c) => id = c,
                None => break,
            }
        }
        id
    }

    /// Node matching a chronological history (most recent symbol last).
    pub fn node_for_history(&self, history: &[RelSymbol]) -> TstNodeId {
        let mut id = TST_ROOT;
        for s in history.iter().rev() {
            match self.nodes[id as usize].children[s.index()] {
                Some(c) => id = c,
                None => break,
            }
        }
        id
    }

    /// Shortest suffix of `history` that still identifies its node, in
    /// chronological order.
    pub fn truncate_history(&self, history: &[RelSymbol]) -> Vec<RelSymbol> {
        let keep = self.path(self.node_for_history(history)).len();
        history[history.len() - keep..].to_vec()
    }

    /// Reversed context path of a node.
    pub fn path(&self, id: TstNodeId) -> &[RelSymbol] {
        &self.nodes[id as usize].path
    }

    /// Node reached after appending `a` to any history that maps to `id`.
    pub fn transition(&self, id: TstNodeId, a: RelSymbol) -> TstNodeId {
        self.nodes[id as usize].next[a.index()]
    }

    /// PPM prediction shared by all histories that map to `id`.
    pub fn distribution(&self, id: TstNodeId) -> SymbolDistribution {
        self.nodes[id as usize].dist
    }

    pub fn paths(&self) -> impl Iterator<Item = &[RelSymbol]> {
        self.nodes.iter().skip(1).map(|n| n.path.as_slice())
    }
}

pub fn truncate_history(tst: &TotalSuffixTree, history: &[RelSymbol]) -> Vec<RelSymbol> {
    tst.truncate_history(history)
}
