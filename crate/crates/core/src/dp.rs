//! Exact Lagrangian joint denoising and coding of a noisy chain code.
//!
//! The objective for a candidate `x̂` is
//! `J = burst error cost + β Σ straightness + λ R(x̂)`, where the rate `R`
//! counts symbols after the fixed prefix `y_1..y_D`. The search runs over
//! two families of states: GOOD (the candidate's edge is the observed edge
//! `e_y(j)`) and BAD (inside a burst, the candidate's edge has left the
//! observed path). Every move consumes at least one observed symbol, so the
//! states are processed in layers of the matched index `j`.
//!
//! Memo keys hold the candidate's context only through its longest match in
//! the total suffix tree, which preserves every PPM prediction.

use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::coder;
use crate::context::{estimate_rate, ContextTree};
use crate::contour::{next_edge, DccString, Direction, Edge, GridBounds, Point, RelSymbol};
use crate::error::{Error, Result};
use crate::error_model::BurstCosts;
use crate::geometry::{distortion, prior_cost, prior_cost_table, word_code, StraightnessTable};
use crate::tst::{build_tst, TotalSuffixTree};

/// Context tree with its derived suffix tree, shared read-only by solvers.
#[derive(Debug, Clone)]
pub struct RateModel {
    tree: ContextTree,
    tst: TotalSuffixTree,
}

impl RateModel {
    pub fn new(tree: ContextTree) -> Self {
        let tst = build_tst(&tree);
        RateModel { tree, tst }
    }

    pub fn tree(&self) -> &ContextTree {
        &self.tree
    }

    pub fn tst(&self) -> &TotalSuffixTree {
        &self.tst
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }
}

/// How the solver indexes the candidate's past for rate prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextIndex {
    /// Longest match in the total suffix tree.
    #[default]
    SuffixTree,
    /// The full last-`D` symbols (reference mode).
    Full,
}

#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    pub costs: BurstCosts,
    pub beta: f64,
    pub ds: usize,
    pub lambda: f64,
    pub model: Arc<RateModel>,
    pub bounds: GridBounds,
    pub index: ContextIndex,
}

impl ObjectiveConfig {
    pub fn new(costs: BurstCosts, model: Arc<RateModel>, bounds: GridBounds) -> Self {
        ObjectiveConfig { costs, beta: 3.0, ds: 4, lambda: 0.0, model, bounds, index: ContextIndex::SuffixTree }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ObjectiveConfig { lambda, ..self.clone() }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        ObjectiveConfig { beta, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.ds == 0 || self.ds > 12 {
            return Err(Error::InvalidArgument(format!("Ds must lie in 1..=12, got {}", self.ds)));
        }
        let BurstCosts { c0, c1, c2 } = self.costs;
        if !(c1 > 0.0 && c2 > 0.0 && c0.is_finite() && c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidArgument("burst costs must be finite with c1, c2 > 0".into()));
        }
        Ok(())
    }

    /// Cost charged when a burst opens: one burst plus its first wrong symbol.
    pub fn open_cost(&self) -> f64 {
        self.costs.c0 + self.costs.c1 + self.costs.c2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub error: f64,
    pub prior: f64,
    /// `λ · rate_bits`.
    pub rate: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.error + self.prior + self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DpStats {
    /// Distinct memo keys expanded.
    pub evaluated_keys: u64,
    /// Largest number of keys alive in one layer.
    pub peak_layer: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub xhat: DccString,
    pub cost: f64,
    pub breakdown: CostBreakdown,
    /// Ideal code length of symbols `D+1..` under the model, in bits.
    pub rate_bits: f64,
    pub stats: DpStats,
    /// The observation was too short to optimize and was returned as is.
    pub passthrough: bool,
}

/// Prediction tables for one way of indexing contexts.
struct ContextTable {
    next: Vec<[u32; 3]>,
    bits: Vec<[f64; 3]>,
}

impl ContextTable {
    fn trivial() -> Self {
        ContextTable { next: vec![[0; 3]], bits: vec![[0.0; 3]] }
    }

    fn suffix_tree(tst: &TotalSuffixTree) -> Self {
        let n = tst.node_count() + 1;
        let mut next = Vec::with_capacity(n);
        let mut bits = Vec::with_capacity(n);
        for id in 0..n as u32 {
            next.push(RelSymbol::ALL.map(|a| tst.transition(id, a)));
            let d = tst.distribution(id);
            bits.push(RelSymbol::ALL.map(|a| -d.p(a).log2()));
        }
        ContextTable { next, bits }
    }

    fn full(tree: &ContextTree) -> Self {
        let d = tree.depth();
        let size = 3usize.pow(d as u32);
        let mut next = Vec::with_capacity(size);
        let mut bits = Vec::with_capacity(size);
        let mut word = vec![RelSymbol::L; d];
        for code in 0..size {
            let mut c = code;
            for slot in word.iter_mut().rev() {
                *slot = RelSymbol::from_index(c % 3);
                c /= 3;
            }
            next.push([0, 1, 2].map(|a| ((code * 3 + a) % size) as u32));
            let dist = tree.ppm_probability(&word);
            bits.push(RelSymbol::ALL.map(|a| -dist.p(a).log2()));
        }
        ContextTable { next, bits }
    }

    fn start(&self, cfg: &ObjectiveConfig, history: &[RelSymbol]) -> u32 {
        if self.next.len() == 1 {
            return 0;
        }
        match cfg.index {
            ContextIndex::SuffixTree => cfg.model.tst().node_for_history(history),
            ContextIndex::Full => {
                let d = cfg.model.depth();
                word_code(&history[history.len() - d..]) as u32
            }
        }
    }
}

/// Memo key packed into 128 bits: context, prior suffix, capped position,
/// state flag and the candidate's current edge.
type Key = u128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct KeyParts {
    bad: bool,
    ctx: u32,
    suffix: u32,
    pos: u8,
    edge: u32,
}

impl KeyParts {
    fn pack(self) -> Key {
        (self.ctx as u128) << 96 | (self.edge as u128) << 64 | (self.suffix as u128) << 32 | (self.pos as u128) << 1 | self.bad as u128
    }

    fn unpack(k: Key) -> Self {
        KeyParts {
            bad: k & 1 == 1,
            pos: ((k >> 1) & 0xff) as u8,
            suffix: (k >> 32) as u32,
            edge: (k >> 64) as u32,
            ctx: (k >> 96) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Move {
    symbol: RelSymbol,
    error: f64,
    prior: f64,
    rate_bits: f64,
    layer: usize,
    key: Key,
}

/// Rectangle of grid points a candidate can occupy, with dense indexing.
struct Grid {
    m0: i32,
    n0: i32,
    width: i32,
    height: i32,
}

impl Grid {
    fn index(&self, p: Point) -> Option<u32> {
        let (dm, dn) = (p.m - self.m0, p.n - self.n0);
        (dm >= 0 && dn >= 0 && dm < self.width && dn < self.height).then(|| (dn * self.width + dm) as u32)
    }

    fn encode(&self, e: Edge) -> Option<u32> {
        self.index(e.end).map(|i| i * 4 + e.dir.index() as u32)
    }

    fn decode(&self, code: u32) -> Edge {
        let i = (code / 4) as i32;
        Edge::new(Point::new(self.m0 + i % self.width, self.n0 + i / self.width), Direction::from_index((code % 4) as usize))
    }
}

struct Instance<'a> {
    cfg: &'a ObjectiveConfig,
    y_edges: Vec<Edge>,
    y_syms: &'a [RelSymbol],
    edge_index: FxHashMap<Edge, Vec<usize>>,
    table: ContextTable,
    straight: StraightnessTable,
    suffix_mod: u32,
    grid: Grid,
}

const TIE_EPS: f64 = 1e-12;

fn strictly_better(candidate: f64, best: f64) -> bool {
    candidate < best - TIE_EPS * best.abs().max(1.0)
}

impl<'a> Instance<'a> {
    fn ly(&self) -> usize {
        self.y_syms.len()
    }

    fn successors(&self, key: Key, j: usize, out: &mut Vec<Move>) {
        out.clear();
        let cfg = self.cfg;
        let ly = self.ly();
        let k = KeyParts::unpack(key);
        if !k.bad && j == ly {
            return;
        }
        let edge = self.grid.decode(k.edge);
        let full_window = k.pos as usize == cfg.ds + 1;
        for a in RelSymbol::ALL {
            let e = next_edge(edge, a);
            if !cfg.bounds.contains(e.end) {
                continue;
            }
            let Some(edge_code) = self.grid.encode(e) else { continue };
            let ai = a.index();
            let prior = if full_window && cfg.beta > 0.0 {
                cfg.beta * self.straight.by_code((k.suffix * 3 + ai as u32) as usize)
            } else {
                0.0
            };
            let rate_bits = if cfg.lambda > 0.0 { self.table.bits[k.ctx as usize][ai] } else { 0.0 };
            let next = KeyParts {
                bad: false,
                ctx: self.table.next[k.ctx as usize][ai],
                suffix: (k.suffix * 3 + ai as u32) % self.suffix_mod,
                pos: (k.pos + 1).min(cfg.ds as u8 + 1),
                edge: edge_code,
            };
            let mv = |error: f64, layer: usize, bad: bool| Move {
                symbol: a,
                error,
                prior,
                rate_bits,
                layer,
                key: KeyParts { bad, ..next }.pack(),
            };
            if !k.bad {
                if a == self.y_syms[j] {
                    out.push(mv(0.0, j + 1, false));
                } else if j + 1 < ly {
                    out.push(mv(cfg.open_cost(), j + 1, true));
                }
                continue;
            }
            let ks = self.edge_index.get(&e).map(|v| &v[v.partition_point(|&x| x <= j)..]).unwrap_or(&[]);
            if ks.is_empty() {
                if j + 1 < ly {
                    out.push(mv(cfg.costs.c1, j + 1, true));
                }
            } else {
                for &k in ks {
                    out.push(mv(cfg.costs.c2 * (k - j - 1) as f64, k, false));
                }
            }
        }
    }

    fn move_cost(&self, m: &Move) -> f64 {
        m.error + m.prior + self.cfg.lambda * m.rate_bits
    }
}

/// Lower bounds on the cost-to-go from a relaxation that keeps only the last
/// `r < Ds` symbols and forgets the coding context: a move pays the cheapest
/// window cost over the forgotten symbols and the cheapest code length over
/// all contexts. States are `(flag, edge, j, last r symbols)`.
struct Relaxed {
    good: Vec<f64>,
    bad: Vec<f32>,
    edges: usize,
    hist: u32,
    local: Vec<f64>,
}

/// One relaxed move: symbol, burst cost, target layer, target BAD edge (if
/// any) and target history.
type RelaxedMove = (RelSymbol, f64, usize, Option<u32>, u32);

/// Upper limit on relaxed table entries.
const RELAXED_ENTRIES: usize = 1 << 26;

impl Relaxed {
    fn new(inst: &Instance, d: usize) -> Self {
        let cfg = inst.cfg;
        let ly = inst.ly();
        let edges = (inst.grid.width * inst.grid.height) as usize * 4;
        let windows = d >= cfg.ds && cfg.beta > 0.0;
        let mut r = if windows { cfg.ds.min(3) } else { 0 };
        while r > 0 && (ly + 1) * edges * 3usize.pow(r as u32) > RELAXED_ENTRIES {
            r -= 1;
        }
        let hist = 3u32.pow(r as u32);
        let forgotten = inst.suffix_mod / hist;
        let code_min: Vec<f64> = (0..3)
            .map(|ai| if cfg.lambda > 0.0 { cfg.lambda * inst.table.bits.iter().map(|b| b[ai]).fold(f64::INFINITY, f64::min) } else { 0.0 })
            .collect();
        let local = (0..hist * 3)
            .map(|wa| {
                let (w, ai) = (wa / 3, wa % 3);
                let window = if windows {
                    let best = (0..forgotten).map(|u| inst.straight.by_code(((u * hist + w) * 3 + ai) as usize)).fold(f64::INFINITY, f64::min);
                    cfg.beta * best
                } else {
                    0.0
                };
                window + code_min[ai as usize]
            })
            .collect();
        let mut rx = Relaxed { good: vec![f64::INFINITY; (ly + 1) * hist as usize], bad: Vec::new(), edges, hist, local };
        rx.bad = vec![f32::INFINITY; (ly + 1) * edges * hist as usize];
        for w in 0..hist as usize {
            rx.good[ly * hist as usize + w] = 0.0;
        }
        let mut buf = Vec::new();
        for j in (d..ly).rev() {
            for code in 0..edges as u32 {
                if !cfg.bounds.contains(inst.grid.decode(code).end) {
                    continue;
                }
                for w in 0..hist {
                    rx.moves(inst, Some(code), j, w, &mut buf);
                    let best = buf.iter().map(|m| rx.move_total(m, w)).fold(f64::INFINITY, f64::min);
                    let at = rx.bad_index(code, j, w);
                    rx.bad[at] = best as f32;
                }
            }
            for w in 0..hist {
                rx.moves(inst, None, j, w, &mut buf);
                rx.good[j * hist as usize + w as usize] = buf.iter().map(|m| rx.move_total(m, w)).fold(f64::INFINITY, f64::min);
            }
        }
        rx
    }

    fn bad_index(&self, code: u32, j: usize, w: u32) -> usize {
        (j * self.edges + code as usize) * self.hist as usize + w as usize
    }

    /// Moves from the GOOD state (`bad_edge = None`) or a BAD state at layer `j`.
    fn moves(&self, inst: &Instance, bad_edge: Option<u32>, j: usize, w: u32, out: &mut Vec<RelaxedMove>) {
        out.clear();
        let cfg = inst.cfg;
        let ly = inst.ly();
        let edge = match bad_edge {
            Some(code) => inst.grid.decode(code),
            None => inst.y_edges[j],
        };
        for a in RelSymbol::ALL {
            let e = next_edge(edge, a);
            if !cfg.bounds.contains(e.end) {
                continue;
            }
            let Some(code) = inst.grid.encode(e) else { continue };
            let w2 = (w * 3 + a.index() as u32) % self.hist;
            if bad_edge.is_none() {
                if a == inst.y_syms[j] {
                    out.push((a, 0.0, j + 1, None, w2));
                } else if j + 1 < ly {
                    out.push((a, cfg.open_cost(), j + 1, Some(code), w2));
                }
                continue;
            }
            let ks = inst.edge_index.get(&e).map(|v| &v[v.partition_point(|&x| x <= j)..]).unwrap_or(&[]);
            if ks.is_empty() {
                if j + 1 < ly {
                    out.push((a, cfg.costs.c1, j + 1, Some(code), w2));
                }
            } else {
                for &k in ks {
                    out.push((a, cfg.costs.c2 * (k - j - 1) as f64, k, None, w2));
                }
            }
        }
    }

    fn state(&self, bad_edge: Option<u32>, j: usize, w: u32) -> f64 {
        match bad_edge {
            None => self.good[j * self.hist as usize + w as usize],
            Some(code) => {
                let h = self.bad[self.bad_index(code, j, w)] as f64;
                // undo any upward rounding of the f32 store
                if h.is_finite() { h - 1e-6 * h.abs().max(1.0) } else { h }
            }
        }
    }

    fn move_total(&self, m: &RelaxedMove, w: u32) -> f64 {
        m.1 + self.local[(w * 3) as usize + m.0.index()] + self.state(m.3, m.2, m.4)
    }

    fn bound(&self, key: Key, layer: usize) -> f64 {
        let k = KeyParts::unpack(key);
        self.state(k.bad.then_some(k.edge), layer, k.suffix % self.hist).max(0.0)
    }

    /// True cost of the relaxed optimum's move sequence, a feasible candidate.
    fn upper_bound(&self, inst: &Instance, start: Key, d: usize) -> f64 {
        let mut w = KeyParts::unpack(start).suffix % self.hist;
        if !self.state(None, d, w).is_finite() {
            return f64::INFINITY;
        }
        let (mut key, mut j, mut state) = (start, d, None);
        let (mut total, mut buf, mut real) = (0.0, Vec::new(), Vec::new());
        while state.is_some() || j < inst.ly() {
            self.moves(inst, state, j, w, &mut buf);
            let Some(best) = buf.iter().copied().min_by(|a, b| self.move_total(a, w).total_cmp(&self.move_total(b, w))) else {
                return f64::INFINITY;
            };
            inst.successors(key, j, &mut real);
            let m = real
                .iter()
                .find(|m| m.symbol == best.0 && m.layer == best.2 && (m.key & 1 == 1) == best.3.is_some())
                .expect("relaxed and exact moves agree on feasibility");
            total += inst.move_cost(m);
            key = m.key;
            (j, state, w) = (best.2, best.3, best.4);
        }
        total
    }
}

/// Cost of copying the observation, if it stays inside the bounds.
fn observation_cost(inst: &Instance, start: Key, d: usize) -> f64 {
    let (mut key, mut total, mut moves) = (start, 0.0, Vec::new());
    for j in d..inst.ly() {
        inst.successors(key, j, &mut moves);
        match moves.iter().find(|m| m.layer == j + 1 && m.key & 1 == 0) {
            Some(m) => {
                total += inst.move_cost(m);
                key = m.key;
            }
            None => return f64::INFINITY,
        }
    }
    total
}

fn passthrough(y: &DccString, cfg: &ObjectiveConfig) -> Solution {
    let prior = prior_cost(y, cfg.beta, cfg.ds);
    let d = cfg.model.depth();
    let rate_bits = estimate_rate(cfg.model.tree(), y, d + 1);
    let breakdown = CostBreakdown { error: 0.0, prior, rate: cfg.lambda * rate_bits };
    Solution { xhat: y.clone(), cost: breakdown.total(), breakdown, rate_bits, stats: DpStats::default(), passthrough: true }
}

/// Minimize the Lagrangian objective over every candidate that starts with
/// `y_1..y_D`, ends on the observed final edge and stays inside the bounds.
/// Among optimal candidates the lexicographically smallest (`l < s < r`)
/// symbol choice is taken at each step.
pub fn joint_denoise(y: &DccString, cfg: &ObjectiveConfig) -> Result<Solution> {
    cfg.validate()?;
    let d = cfg.model.depth();
    let ly = y.symbols.len();
    if ly < d + 1 {
        log::warn!("contour with {ly} symbols is too short for context depth {d}; passed through");
        return Ok(passthrough(y, cfg));
    }
    let y_edges = y.realize();
    if !cfg.bounds.contains(y.start) || y_edges[..=d].iter().any(|e| !cfg.bounds.contains(e.end)) {
        return Err(Error::Infeasible("fixed prefix leaves the grid bounds".into()));
    }
    let mut edge_index: FxHashMap<Edge, Vec<usize>> = FxHashMap::default();
    for (k, e) in y_edges.iter().enumerate() {
        edge_index.entry(*e).or_default().push(k);
    }
    // a candidate farther than L_y from every observed edge can never rejoin
    let reach = ly as i32 + 1;
    let (lo, hi) = y_edges.iter().fold((y.start, y.start), |(lo, hi), e| {
        (Point::new(lo.m.min(e.end.m), lo.n.min(e.end.n)), Point::new(hi.m.max(e.end.m), hi.n.max(e.end.n)))
    });
    let b = cfg.bounds;
    let (m0, m1) = ((lo.m - reach).max(b.m_min), (hi.m + reach).min(b.m_max));
    let (n0, n1) = ((lo.n - reach).max(b.n_min), (hi.n + reach).min(b.n_max));
    let grid = Grid { m0, n0, width: m1 - m0 + 1, height: n1 - n0 + 1 };
    let table = if cfg.lambda == 0.0 {
        ContextTable::trivial()
    } else {
        match cfg.index {
            ContextIndex::SuffixTree => ContextTable::suffix_tree(cfg.model.tst()),
            ContextIndex::Full => ContextTable::full(cfg.model.tree()),
        }
    };
    let prefix = &y.symbols[..d];
    let start = KeyParts {
        bad: false,
        ctx: table.start(cfg, prefix),
        suffix: word_code(&prefix[prefix.len().saturating_sub(cfg.ds)..]) as u32,
        pos: (d + 1).min(cfg.ds + 1) as u8,
        edge: grid.encode(y_edges[d]).expect("prefix edge inside the grid"),
    }
    .pack();
    let inst = Instance {
        cfg,
        y_edges,
        y_syms: &y.symbols,
        edge_index,
        table,
        straight: StraightnessTable::new(cfg.ds),
        suffix_mod: 3u32.pow(cfg.ds as u32),
        grid,
    };

    let mut moves = Vec::new();
    let relaxed = Relaxed::new(&inst, d);
    let upper = relaxed.upper_bound(&inst, start, d).min(observation_cost(&inst, start, d));
    let prune_above = if upper.is_finite() { upper + 1e-9 * upper.abs().max(1.0) } else { f64::INFINITY };

    // Forward pass: cheapest arrival cost per key, pruned by the bound.
    let mut slots: Vec<FxHashMap<Key, u32>> = (0..=ly).map(|_| FxHashMap::default()).collect();
    let mut keys: Vec<Vec<Key>> = vec![Vec::new(); ly + 1];
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); ly + 1];
    slots[d].insert(start, 0);
    keys[d].push(start);
    value[d].push(0.0);
    let mut stats = DpStats::default();
    for j in d..=ly {
        stats.peak_layer = stats.peak_layer.max(keys[j].len() as u64);
        stats.evaluated_keys += keys[j].len() as u64;
        for idx in 0..keys[j].len() {
            let here = value[j][idx];
            inst.successors(keys[j][idx], j, &mut moves);
            for m in &moves {
                let cost = here + inst.move_cost(m);
                let bound = relaxed.bound(m.key, m.layer);
                if cost + bound > prune_above {
                    continue;
                }
                let layer = m.layer;
                match slots[layer].entry(m.key) {
                    std::collections::hash_map::Entry::Occupied(o) => {
                        let v = &mut value[layer][*o.get() as usize];
                        if cost < *v {
                            *v = cost;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(keys[layer].len() as u32);
                        keys[layer].push(m.key);
                        value[layer].push(cost);
                    }
                }
            }
        }
    }
    drop(relaxed);

    // Backward pass: cost-to-go replaces the arrival cost in place.
    let best_move = |key: Key, j: usize, togo: &[Vec<f64>], moves: &mut Vec<Move>| -> Option<(Move, f64)> {
        inst.successors(key, j, moves);
        let mut best: Option<(Move, f64)> = None;
        for m in moves.iter() {
            let Some(&slot) = slots[m.layer].get(&m.key) else { continue };
            let rest = togo[m.layer][slot as usize];
            if rest.is_infinite() {
                continue;
            }
            let total = inst.move_cost(m) + rest;
            if best.is_none_or(|(_, b)| strictly_better(total, b)) {
                best = Some((*m, total));
            }
        }
        best
    };
    for j in (d..=ly).rev() {
        for idx in 0..keys[j].len() {
            let key = keys[j][idx];
            value[j][idx] = if key & 1 == 0 && j == ly {
                0.0
            } else {
                best_move(key, j, &value, &mut moves).map_or(f64::INFINITY, |(_, c)| c)
            };
        }
    }
    if value[d][0].is_infinite() {
        return Err(Error::Infeasible("no candidate reaches the final observed edge inside the bounds".into()));
    }

    let mut symbols = prefix.to_vec();
    let mut breakdown = CostBreakdown { error: 0.0, prior: prior_cost_table(prefix, cfg.beta, &inst.straight), rate: 0.0 };
    let mut rate_bits = 0.0;
    let (mut key, mut j) = (start, d);
    while let Some((m, _)) = best_move(key, j, &value, &mut moves) {
        symbols.push(m.symbol);
        breakdown.error += m.error;
        breakdown.prior += m.prior;
        rate_bits += m.rate_bits;
        key = m.key;
        j = m.layer;
    }
    debug_assert!(key & 1 == 0 && j == ly);
    let xhat = DccString { start: y.start, first_dir: y.first_dir, symbols, closed: y.closed };
    if cfg.lambda == 0.0 {
        rate_bits = estimate_rate(cfg.model.tree(), &xhat, d + 1);
    }
    breakdown.rate = cfg.lambda * rate_bits;
    Ok(Solution { xhat, cost: breakdown.total(), breakdown, rate_bits, stats, passthrough: false })
}

/// Cost of appending `symbol` to `history`: the straightness of the window of
/// the last `Ds + 1` symbols (once that many exist) weighted by `β`, plus `λ`
/// times the code length of the symbol under the truncated context.
pub fn local_cost(history: &[RelSymbol], symbol: RelSymbol, cfg: &ObjectiveConfig) -> f64 {
    let mut window: Vec<RelSymbol> = history[history.len().saturating_sub(cfg.ds)..].to_vec();
    window.push(symbol);
    let prior = if window.len() == cfg.ds + 1 { cfg.beta * crate::geometry::word_straightness(&window) } else { 0.0 };
    let tst = cfg.model.tst();
    let dist = tst.distribution(tst.node_for_history(history));
    prior - cfg.lambda * dist.p(symbol).log2()
}

/// Cheapest burst accounting that explains `y` from a fixed candidate under
/// the solver's move rules, or `None` when no alignment exists.
pub fn alignment_cost(xhat: &DccString, y: &DccString, prefix: usize, costs: &BurstCosts) -> Option<f64> {
    let xe = xhat.realize();
    let ye = y.realize();
    let (lx, ly) = (xhat.symbols.len(), y.symbols.len());
    if lx < prefix || ly < prefix || xhat.symbols[..prefix] != y.symbols[..prefix] {
        return None;
    }
    let open = costs.c0 + costs.c1 + costs.c2;
    // good[i][j]: candidate edge i sits on observed edge j; bad likewise inside a burst
    let mut good = vec![vec![f64::INFINITY; ly + 1]; lx + 1];
    let mut bad = vec![vec![f64::INFINITY; ly + 1]; lx + 1];
    good[prefix][prefix] = 0.0;
    for i in prefix..lx {
        for j in prefix..=ly {
            if good[i][j].is_finite() && j < ly {
                let g = good[i][j];
                if xhat.symbols[i] == y.symbols[j] {
                    good[i + 1][j + 1] = good[i + 1][j + 1].min(g);
                } else if j + 1 < ly {
                    bad[i + 1][j + 1] = bad[i + 1][j + 1].min(g + open);
                }
            }
            if bad[i][j].is_finite() {
                let b = bad[i][j];
                let e = xe[i + 1];
                let ks: Vec<usize> = (j + 1..=ly).filter(|&k| ye[k] == e).collect();
                if ks.is_empty() {
                    if j + 1 < ly {
                        bad[i + 1][j + 1] = bad[i + 1][j + 1].min(b + costs.c1);
                    }
                } else {
                    for k in ks {
                        good[i + 1][k] = good[i + 1][k].min(b + costs.c2 * (k - j - 1) as f64);
                    }
                }
            }
        }
    }
    let v = good[lx][ly];
    v.is_finite().then_some(v)
}

/// Exhaustive reference solver for short observations.
pub fn brute_force(y: &DccString, cfg: &ObjectiveConfig, limit: usize) -> Result<Solution> {
    cfg.validate()?;
    let ly = y.symbols.len();
    if ly > limit {
        return Err(Error::InvalidArgument(format!("observation of {ly} symbols exceeds the limit {limit}")));
    }
    let d = cfg.model.depth();
    if ly < d + 1 {
        return Ok(passthrough(y, cfg));
    }
    let target = *y.realize().last().unwrap();
    let prefix = &y.symbols[..d];
    let mut best: Option<Solution> = None;
    for len in d + 1..=ly {
        let free = len - d;
        for code in 0..3usize.pow(free as u32) {
            let mut symbols = prefix.to_vec();
            let mut c = code;
            let mut tail = vec![RelSymbol::L; free];
            for slot in tail.iter_mut().rev() {
                *slot = RelSymbol::from_index(c % 3);
                c /= 3;
            }
            symbols.extend(tail);
            let cand = DccString { start: y.start, first_dir: y.first_dir, symbols, closed: y.closed };
            if !cfg.bounds.contains_string(&cand) || cand.last_edge() != target {
                continue;
            }
            let Some(error) = alignment_cost(&cand, y, d, &cfg.costs) else { continue };
            let prior = prior_cost(&cand, cfg.beta, cfg.ds);
            let rate_bits = estimate_rate(cfg.model.tree(), &cand, d + 1);
            let breakdown = CostBreakdown { error, prior, rate: cfg.lambda * rate_bits };
            let cost = breakdown.total();
            let better = match &best {
                None => true,
                Some(b) => strictly_better(cost, b.cost) || (!strictly_better(b.cost, cost) && cand.symbols < b.xhat.symbols),
            };
            if better {
                best = Some(Solution { xhat: cand, cost, breakdown, rate_bits, stats: DpStats::default(), passthrough: false });
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("no candidate reaches the final observed edge inside the bounds".into()))
}

#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub solution: Solution,
    pub lambda: f64,
    /// `(λ, rate_bits)` for every solve, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// Smallest `λ` (to within `1e-4`) whose optimum needs at most `r_max` bits.
pub fn lambda_search(y: &DccString, cfg: &ObjectiveConfig, r_max: f64, max_iter: usize) -> Result<LambdaSearch> {
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!("rate budget must be positive, got {r_max}")));
    }
    let mut trace = Vec::new();
    let base = joint_denoise(y, &cfg.with_lambda(0.0))?;
    trace.push((0.0, base.rate_bits));
    if base.rate_bits <= r_max {
        return Ok(LambdaSearch { solution: base, lambda: 0.0, trace });
    }
    let mut hi = 1.0;
    let mut hi_sol = None;
    for _ in 0..max_iter {
        let s = joint_denoise(y, &cfg.with_lambda(hi))?;
        trace.push((hi, s.rate_bits));
        if s.rate_bits <= r_max {
            hi_sol = Some(s);
            break;
        }
        hi *= 2.0;
    }
    let Some(mut best) = hi_sol else {
        return Err(Error::Infeasible(format!("rate budget {r_max} bits not met at lambda {hi}")));
    };
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo >= 1e-4 {
        let mid = 0.5 * (lo + hi);
        let s = joint_denoise(y, &cfg.with_lambda(mid))?;
        trace.push((mid, s.rate_bits));
        if s.rate_bits <= r_max {
            hi = mid;
            let exact = s.rate_bits == r_max;
            best = s;
            if exact {
                break;
            }
        } else {
            lo = mid;
        }
    }
    Ok(LambdaSearch { solution: best, lambda: hi, trace })
}

#[derive(Debug, Clone)]
pub struct SeparatePoint {
    pub beta: f64,
    pub solution: Solution,
    /// Coded payload bits of the solution alone.
    pub payload_bits: u64,
    pub symbols: usize,
    pub distortion: f64,
}

/// Denoise with `λ = 0` at each `β` of the schedule, then code the result
/// losslessly. Distortion is measured against `reference`.
pub fn separate_baseline(y: &DccString, reference: &DccString, cfg: &ObjectiveConfig, beta_schedule: &[f64]) -> Result<Vec<SeparatePoint>> {
    if beta_schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("beta schedule must be nondecreasing".into()));
    }
    beta_schedule
        .iter()
        .map(|&beta| {
            let solution = joint_denoise(y, &cfg.with_beta(beta).with_lambda(0.0))?;
            let bits = coder::encode(std::slice::from_ref(&solution.xhat), cfg.model.tree())?;
            Ok(SeparatePoint {
                beta,
                payload_bits: bits.payload_bits(),
                symbols: solution.xhat.symbols.len(),
                distortion: distortion(&solution.xhat, reference),
                solution,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_tree;
    use crate::contour::{parse_symbols, Direction};
    use crate::error_model::TransitionParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dcc(s: &str) -> DccString {
        DccString::new(Point::new(6, 6), Direction::E, parse_symbols(s).unwrap())
    }

    fn config(tree: ContextTree, lambda: f64, beta: f64) -> ObjectiveConfig {
        let costs = TransitionParams::new(0.1, 0.5, 0.5).unwrap().costs();
        let mut cfg = ObjectiveConfig::new(costs, Arc::new(RateModel::new(tree)), GridBounds::for_image(40, 40));
        cfg.lambda = lambda;
        cfg.beta = beta;
        cfg
    }

    #[test]
    fn clean_input_is_kept() {
        let y = dcc("srsrssrlsr");
        let tree = build_tree(&[dcc("srsrsrsrss")]).unwrap();
        let sol = joint_denoise(&y, &config(tree, 0.0, 0.0)).unwrap();
        assert_eq!(sol.xhat, y);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn short_input_passes_through() {
        let tree = build_tree(&[dcc("srsrsrsrsslrlrlrsrsrlrslrs")]).unwrap();
        assert_eq!(tree.depth(), 3);
        let y = dcc("srs");
        let sol = joint_denoise(&y, &config(tree, 1.0, 3.0)).unwrap();
        assert!(sol.passthrough);
        assert_eq!(sol.xhat, y);
    }

    #[test]
    fn local_cost_examples() {
        let tree = build_tree(&[dcc("ssrssrssr")]).unwrap();
        let cfg = config(tree.clone(), 0.0, 3.0);
        assert_eq!(local_cost(&parse_symbols("ssss").unwrap(), RelSymbol::S, &cfg), 0.0);
        let cfg = config(tree.clone(), 2.0, 0.0);
        let h = parse_symbols("lrss").unwrap();
        let want = -2.0 * tree.ppm_probability(&h).p(RelSymbol::R).log2();
        assert!((local_cost(&h, RelSymbol::R, &cfg) - want).abs() < 1e-12);
        let cfg = config(tree.clone(), 2.0, 3.0);
        let window = parse_symbols("rssr").unwrap();
        let h = parse_symbols("lrss").unwrap();
        let mut w = h.clone();
        w.push(RelSymbol::R);
        let s = crate::geometry::word_straightness(&w);
        assert!(s > 0.0);
        assert!((local_cost(&h, RelSymbol::R, &cfg) - (3.0 * s + want)).abs() < 1e-12);
        let _ = window;
    }

    #[test]
    fn one_flip_is_repaired() {
        // a straight run with one spurious turn pair
        let clean = dcc("sssssss");
        let tree = build_tree(&[clean.clone()]).unwrap();
        let y = dcc("ssslrsss");
        let y_last = y.last_edge();
        let cfg = config(tree, 0.0, 3.0);
        let sol = joint_denoise(&y, &cfg).unwrap();
        assert_eq!(sol.xhat.last_edge(), y_last);
        let brute = brute_force(&y, &cfg, 8).unwrap();
        assert!((sol.cost - brute.cost).abs() < 1e-9, "{} vs {}", sol.cost, brute.cost);
        assert!((sol.breakdown.total() - sol.cost).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let train_len = rng.random_range(1..9);
            let train: String = (0..train_len).map(|_| ['l', 's', 'r'][rng.random_range(0..3)]).collect();
            let tree = build_tree(&[dcc(&train)]).unwrap();
            let ly = rng.random_range(tree.depth() + 1..=7);
            let ys: String = (0..ly).map(|_| ['l', 's', 's', 'r'][rng.random_range(0..4)]).collect();
            let y = DccString::new(Point::new(5, 5), Direction::N, parse_symbols(&ys).unwrap());
            let params = TransitionParams::new(rng.random_range(0.02..0.5), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)).unwrap();
            let mut cfg = config(tree, rng.random_range(0.0..2.0), rng.random_range(0.0..4.0));
            cfg.costs = params.costs();
            cfg.ds = rng.random_range(1..4);
            let dp = joint_denoise(&y, &cfg).unwrap();
            let bf = brute_force(&y, &cfg, 8).unwrap();
            assert!((dp.cost - bf.cost).abs() < 1e-9, "{ys}: dp {} bf {}", dp.cost, bf.cost);
            let full = joint_denoise(&y, &ObjectiveConfig { index: ContextIndex::Full, ..cfg.clone() }).unwrap();
            assert_eq!(full.cost, dp.cost);
            assert!((dp.breakdown.prior - prior_cost(&dp.xhat, cfg.beta, cfg.ds)).abs() < 1e-9);
            let d = cfg.model.depth();
            assert!((dp.rate_bits - estimate_rate(cfg.model.tree(), &dp.xhat, d + 1)).abs() < 1e-9);
            assert_eq!(dp.xhat.symbols[..d], y.symbols[..d]);
            assert!(dp.xhat.len() <= y.len());
        }
    }

    #[test]
    fn lambda_search_meets_budget() {
        let tree = build_tree(&[dcc("sssssssssrsssssssssr")]).unwrap();
        let y = dcc("sslsrsssrss");
        let cfg = config(tree, 0.0, 1.0);
        let base = joint_denoise(&y, &cfg).unwrap();
        let res = lambda_search(&y, &cfg, base.rate_bits + 1.0, 30).unwrap();
        assert_eq!(res.lambda, 0.0);
        let budget = base.rate_bits * 0.5;
        if let Ok(res) = lambda_search(&y, &cfg, budget, 30) {
            assert!(res.solution.rate_bits <= budget);
        }
    }
}
