//! Ternary counting context tree, PPM probabilities and rate estimation.
//!
//! Contexts are stored most-recent-symbol-first: the child of node `u` along
//! symbol `a` is the context `u` extended one symbol further into the past.

use crate::contour::{DccString, RelSymbol};
use crate::error::{Error, Result};

pub type NodeId = u32;
pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, Default)]
pub(crate) struct Node {
    pub(crate) children: [Option<NodeId>; 3],
    pub(crate) counts: [u32; 3],
}

impl Node {
    fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    fn distinct(&self) -> u64 {
        self.counts.iter().filter(|&&c| c > 0).count() as u64
    }
}

/// Probabilities for `l`, `s`, `r` in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolDistribution(pub [f64; 3]);

impl SymbolDistribution {
    pub fn uniform() -> Self {
        SymbolDistribution([1.0 / 3.0; 3])
    }

    pub fn p(&self, s: RelSymbol) -> f64 {
        self.0[s.index()]
    }
}

#[derive(Debug, Clone)]
pub struct ContextTree {
    depth: usize,
    training_length: usize,
    training_count: usize,
    pub(crate) nodes: Vec<Node>,
    visits: u64,
}

/// Smallest `d` with `3^d >= len`.
pub fn depth_for_length(len: usize) -> usize {
    let mut d = 0;
    let mut reach: u128 = 1;
    while reach < len as u128 {
        reach *= 3;
        d += 1;
    }
    d
}

/// Count every symbol of every training string (after its first `D`
/// symbols) under each of its `1..=D` preceding contexts.
pub fn build_tree(training: &[DccString]) -> Result<ContextTree> {
    let total: usize = training.iter().map(|x| x.symbols.len()).sum();
    if training.is_empty() || total == 0 {
        return Err(Error::InvalidArgument("no training data".into()));
    }
    let mut tree = ContextTree::empty(depth_for_length(total));
    tree.training_length = total;
    tree.training_count = training.len();
    for x in training {
        tree.add_string(&x.symbols);
    }
    Ok(tree)
}

impl ContextTree {
    /// A tree with no counts; every prediction is uniform.
    pub fn empty(depth: usize) -> Self {
        ContextTree { depth, training_length: 0, training_count: 0, nodes: vec![Node::default()], visits: 0 }
    }

    /// Build from explicit `(reversed path, counts)` records. Missing
    /// intermediate nodes are created with zero counts.
    pub fn from_records(depth: usize, records: &[(Vec<RelSymbol>, [u32; 3])]) -> Result<Self> {
        let mut tree = ContextTree::empty(depth);
        for (path, counts) in records {
            if path.is_empty() || path.len() > depth {
                return Err(Error::InvalidArgument(format!("context length {} outside 1..={depth}", path.len())));
            }
            let id = tree.ensure_path(path);
            tree.nodes[id as usize].counts = *counts;
        }
        Ok(tree)
    }

    fn ensure_path(&mut self, path: &[RelSymbol]) -> NodeId {
        let mut id = ROOT;
        for s in path {
            id = match self.nodes[id as usize].children[s.index()] {
                Some(c) => c,
                None => {
                    let c = self.nodes.len() as NodeId;
                    self.nodes.push(Node::default());
                    self.nodes[id as usize].children[s.index()] = Some(c);
                    c
                }
            };
        }
        id
    }

    fn add_string(&mut self, symbols: &[RelSymbol]) {
        let d = self.depth;
        // 0-based i here is the 1-based position i+1
        for i in d..symbols.len() {
            let x = symbols[i].index();
            let mut id = ROOT;
            for k in 1..=d {
                let s = symbols[i - k];
                id = match self.nodes[id as usize].children[s.index()] {
                    Some(c) => c,
                    None => {
                        let c = self.nodes.len() as NodeId;
                        self.nodes.push(Node::default());
                        self.nodes[id as usize].children[s.index()] = Some(c);
                        c
                    }
                };
                self.nodes[id as usize].counts[x] += 1;
                self.visits += 1;
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn training_length(&self) -> usize {
        self.training_length
    }

    pub fn training_count(&self) -> usize {
        self.training_count
    }

    /// Counter increments performed while building.
    pub fn visits(&self) -> u64 {
        self.visits
    }

    /// Number of nodes, root excluded.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn find(&self, reversed_path: &[RelSymbol]) -> Option<NodeId> {
        reversed_path
            .iter()
            .try_fold(ROOT, |id, s| self.nodes[id as usize].children[s.index()])
    }

    /// `N(x·u)` for each `x`, where `u` is given most-recent-first.
    pub fn counts(&self, reversed_path: &[RelSymbol]) -> Option<[u32; 3]> {
        self.find(reversed_path).map(|id| self.nodes[id as usize].counts)
    }

    pub(crate) fn child(&self, id: NodeId, s: RelSymbol) -> Option<NodeId> {
        self.nodes[id as usize].children[s.index()]
    }

    /// Node paths (most recent first) with their counters, depth-first,
    /// children visited in `l, s, r` order. The root is excluded.
    pub fn records(&self) -> Vec<(Vec<RelSymbol>, [u32; 3])> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut path = Vec::new();
        self.walk(ROOT, &mut path, &mut out);
        out
    }

    fn walk(&self, id: NodeId, path: &mut Vec<RelSymbol>, out: &mut Vec<(Vec<RelSymbol>, [u32; 3])>) {
        for s in RelSymbol::ALL {
            if let Some(c) = self.child(id, s) {
                path.push(s);
                out.push((path.clone(), self.nodes[c as usize].counts));
                self.walk(c, path, out);
                path.pop();
            }
        }
    }

    /// Node ids from the root down to the deepest node matching `history`
    /// (chronological order, most recent symbol last).
    pub(crate) fn match_chain(&self, history: &[RelSymbol]) -> Vec<NodeId> {
        let mut chain = vec![ROOT];
        let mut id = ROOT;
        for s in history.iter().rev().take(self.depth) {
            match self.child(id, *s) {
                Some(c) => {
                    chain.push(c);
                    id = c;
                }
                None => break,
            }
        }
        chain
    }

    fn distribution_for_chain(&self, chain: &[NodeId]) -> SymbolDistribution {
        let mut p = [0.0; 3];
        for (x, slot) in p.iter_mut().enumerate() {
            *slot = self.escape_probability(chain, x);
        }
        let sum: f64 = p.iter().sum();
        for v in &mut p {
            *v /= sum;
        }
        SymbolDistribution(p)
    }

    fn escape_probability(&self, chain: &[NodeId], x: usize) -> f64 {
        let mut weight = 1.0;
        for &id in chain.iter().skip(1).rev() {
            let node = &self.nodes[id as usize];
            let total = node.total();
            if total == 0 {
                continue;
            }
            let distinct = node.distinct();
            let denom = (distinct + total) as f64;
            if node.counts[x] > 0 {
                return weight * node.counts[x] as f64 / denom;
            }
            weight *= distinct as f64 / denom;
        }
        weight / 3.0
    }

    /// PPM prediction for the next symbol given `history` (oldest first).
    pub fn ppm_probability(&self, history: &[RelSymbol]) -> SymbolDistribution {
        self.distribution_for_chain(&self.match_chain(history))
    }

    /// Distribution at the deepest node matching a reversed context path.
    pub(crate) fn distribution_for_reversed(&self, reversed: &[RelSymbol]) -> SymbolDistribution {
        let mut chain = vec![ROOT];
        let mut id = ROOT;
        for s in reversed.iter().take(self.depth) {
            match self.child(id, *s) {
                Some(c) => {
                    chain.push(c);
                    id = c;
                }
                None => break,
            }
        }
        self.distribution_for_chain(&chain)
    }
}

impl PartialEq for ContextTree {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.records() == other.records()
    }
}

pub fn ppm_probability(tree: &ContextTree, history: &[RelSymbol]) -> SymbolDistribution {
    tree.ppm_probability(history)
}

/// Ideal code length in bits of symbols `start_index..=len` (1-based).
pub fn estimate_rate(tree: &ContextTree, x: &DccString, start_index: usize) -> f64 {
    let start = start_index.max(1);
    (start..=x.symbols.len())
        .map(|i| {
            let dist = tree.ppm_probability(&x.symbols[..i - 1]);
            -dist.p(x.symbols[i - 1]).log2()
        })
        .sum()
}

const TREE_MAGIC: &[u8; 4] = b"JCTX";
const TREE_VERSION: u8 = 1;

pub fn serialize_tree(tree: &ContextTree) -> Vec<u8> {
    let records = tree.records();
    let mut out = Vec::with_capacity(11 + records.len() * 16);
    out.extend_from_slice(TREE_MAGIC);
    out.push(TREE_VERSION);
    out.extend_from_slice(&(tree.depth as u16).to_be_bytes());
    out.extend_from_slice(&(records.len() as u32).to_be_bytes());
    for (path, counts) in &records {
        out.extend_from_slice(&(path.len() as u16).to_be_bytes());
        out.extend(path.iter().map(|s| s.index() as u8));
        for c in counts {
            out.extend_from_slice(&c.to_be_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::TreeFormat { offset: self.pos, reason: format!("unexpected end of data reading {what}") });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn deserialize_tree(data: &[u8]) -> Result<ContextTree> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(4, "magic")? != TREE_MAGIC {
        return Err(Error::TreeFormat { offset: 0, reason: "bad magic".into() });
    }
    let version = cur.take(1, "version")?[0];
    if version != TREE_VERSION {
        return Err(Error::TreeFormat { offset: 4, reason: format!("unsupported version {version}") });
    }
    let depth = cur.u16("depth")? as usize;
    let count = cur.u32("node count")?;
    let mut tree = ContextTree::empty(depth);
    for _ in 0..count {
        let rec_start = cur.pos;
        let len = cur.u16("path length")? as usize;
        if len == 0 || len > depth {
            return Err(Error::TreeFormat { offset: rec_start, reason: format!("path length {len} outside 1..={depth}") });
        }
        let sym_start = cur.pos;
        let raw = cur.take(len, "path")?;
        let mut path = Vec::with_capacity(len);
        for (k, &b) in raw.iter().enumerate() {
            if b > 2 {
                return Err(Error::TreeFormat { offset: sym_start + k, reason: format!("bad symbol code {b}") });
            }
            path.push(RelSymbol::from_index(b as usize));
        }
        let parent = tree.find(&path[..len - 1]);
        let exists = tree.find(&path).is_some();
        if parent.is_none() || exists {
            return Err(Error::TreeFormat { offset: rec_start, reason: "record out of depth-first order".into() });
        }
        let id = tree.ensure_path(&path);
        let mut counts = [0u32; 3];
        for c in &mut counts {
            *c = cur.u32("counter")?;
        }
        tree.nodes[id as usize].counts = counts;
    }
    if cur.pos != data.len() {
        return Err(Error::TreeFormat { offset: cur.pos, reason: "trailing bytes".into() });
    }
    Ok(tree)
}
