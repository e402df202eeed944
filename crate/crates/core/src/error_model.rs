//! Three-state burst-error channel between a clean chain code `x` and its
//! noisy observation `y`.
//!
//! State 0 copies the next `x` symbol. State 1 replaces it with a wrong
//! symbol. A run of state 2 consumes one `x` symbol and emits one or more
//! arbitrary symbols. A burst is one excursion 0 → 1…1 → 2…2 → 0 and is
//! always followed by at least one state-0 visit. The chain starts from a
//! virtual state 0, so every emitted symbol corresponds to one transition.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::contour::{next_edge, DccString, GridBounds, RelSymbol};
use crate::error::{Error, Result};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionParams {
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstCosts {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TransitionParams {
    pub fn new(p: f64, q1: f64, q2: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q1", q1), ("q2", q2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        Ok(TransitionParams { p, q1, q2 })
    }

    /// Per-burst, per-wrong-symbol and per-inserted-symbol costs of the
    /// linearized negative log-likelihood.
    pub fn costs(&self) -> BurstCosts {
        let (p, q1, q2) = (self.p, self.q1, self.q2);
        BurstCosts {
            c0: -(p.ln() + (q1 / (1.0 - q1)).ln() + (q2 / (1.0 - q2)).ln()),
            c1: -(1.0 - q1).ln(),
            c2: -(1.0 - q2).ln(),
        }
    }

    pub fn max_abs_diff(&self, other: &TransitionParams) -> f64 {
        (self.p - other.p).abs().max((self.q1 - other.q1).abs()).max((self.q2 - other.q2).abs())
    }
}

impl fmt::Display for TransitionParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} q1={} q2={}", self.p, self.q1, self.q2)
    }
}

fn parse_pairs(s: &str) -> Result<Vec<(String, f64)>> {
    s.split_whitespace()
        .map(|tok| {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{tok}`")))?;
            let v: f64 = v.parse().map_err(|_| Error::Parse(format!("bad number `{v}` for `{k}`")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn lookup(pairs: &[(String, f64)], key: &str) -> Result<f64> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))
}

impl FromStr for TransitionParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pairs = parse_pairs(s)?;
        TransitionParams::new(lookup(&pairs, "p")?, lookup(&pairs, "q1")?, lookup(&pairs, "q2")?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidParams {
    pub pprime: f64,
    pub lambdaprime: f64,
}

impl fmt::Display for IidParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pprime={} lambdaprime={}", self.pprime, self.lambdaprime)
    }
}

impl FromStr for IidParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pairs = parse_pairs(s)?;
        let pprime = lookup(&pairs, "pprime")?;
        let lambdaprime = lookup(&pairs, "lambdaprime")?;
        if !(pprime > 0.0 && pprime < 1.0) || !(lambdaprime >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid iid parameters {pprime} {lambdaprime}")));
        }
        Ok(IidParams { pprime, lambdaprime })
    }
}

/// State path of the channel, stored as run lengths. `l0` has one more entry
/// than `l1` and `l2`: the good run before each burst plus the trailing one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BurstAnnotation {
    pub l0: Vec<usize>,
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
}

impl BurstAnnotation {
    pub fn from_runs(l0: Vec<usize>, l1: Vec<usize>, l2: Vec<usize>) -> Result<Self> {
        let k = l1.len();
        if l2.len() != k || l0.len() != k + 1 {
            return Err(Error::InvalidArgument("run vectors disagree on the burst count".into()));
        }
        if l1.iter().chain(l2.iter()).any(|&v| v == 0) || l0[1..].iter().any(|&v| v == 0) {
            return Err(Error::InvalidArgument("bursts need non-empty runs and a good symbol after each".into()));
        }
        Ok(BurstAnnotation { l0, l1, l2 })
    }

    /// Number of bursts `K`.
    pub fn k(&self) -> usize {
        self.l1.len()
    }

    /// Visits to state 1, `Λ`.
    pub fn lambda(&self) -> usize {
        self.l1.iter().sum()
    }

    /// Visits to state 2, `Δ`.
    pub fn delta(&self) -> usize {
        self.l2.iter().sum()
    }

    /// Visits to state 0, `Γ`.
    pub fn gamma(&self) -> usize {
        self.l0.iter().sum()
    }

    /// Net length increase `Δ − K`.
    pub fn delta_prime(&self) -> usize {
        self.delta() - self.k()
    }

    /// One state per emitted symbol.
    pub fn states(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.l0[0]];
        for k in 0..self.k() {
            out.extend(std::iter::repeat_n(1u8, self.l1[k]));
            out.extend(std::iter::repeat_n(2u8, self.l2[k]));
            out.extend(std::iter::repeat_n(0u8, self.l0[k + 1]));
        }
        out
    }

    pub fn x_len(&self) -> usize {
        self.gamma() + self.lambda() + self.k()
    }

    pub fn y_len(&self) -> usize {
        self.gamma() + self.lambda() + self.delta()
    }

    /// Per-`x`-symbol error flags and, per error, the length increase it
    /// caused (only the symbol replaced by a state-2 run grows the string).
    pub fn iid_view(&self) -> (Vec<bool>, Vec<usize>) {
        let mut flags = vec![false; self.l0[0]];
        let mut increases = Vec::new();
        for k in 0..self.k() {
            flags.extend(std::iter::repeat_n(true, self.l1[k] + 1));
            increases.extend(std::iter::repeat_n(0, self.l1[k]));
            increases.push(self.l2[k] - 1);
            flags.extend(std::iter::repeat_n(false, self.l0[k + 1]));
        }
        (flags, increases)
    }
}

/// Run the channel over `x`. Bursts only start while at least three `x`
/// symbols remain so the walk can end in state 0. Replacement and inserted
/// symbols are uniform over the allowed choices; with `bounds`, choices that
/// would leave the grid are excluded when any alternative exists.
pub fn corrupt_string<R: Rng + ?Sized>(
    x: &DccString,
    params: &TransitionParams,
    bounds: Option<&GridBounds>,
    rng: &mut R,
) -> (DccString, BurstAnnotation) {
    let xs = &x.symbols;
    let n = xs.len();
    let mut ys: Vec<RelSymbol> = Vec::with_capacity(n + n / 4);
    let mut edge = x.first_edge();
    let mut ann = BurstAnnotation { l0: vec![0], l1: Vec::new(), l2: Vec::new() };

    let pick = |choices: &[RelSymbol], edge: crate::contour::Edge, rng: &mut R| -> RelSymbol {
        let ok: Vec<RelSymbol> = match bounds {
            Some(b) => choices.iter().copied().filter(|&s| b.contains(next_edge(edge, s).end)).collect(),
            None => choices.to_vec(),
        };
        let pool = if ok.is_empty() { choices } else { &ok };
        pool[rng.random_range(0..pool.len())]
    };

    let mut i = 0;
    while i < n {
        let remaining = n - i;
        if remaining >= 3 && rng.random_bool(params.p) {
            // state 1: at least one wrong symbol
            let mut l1 = 0;
            loop {
                let wrong: Vec<RelSymbol> = RelSymbol::ALL.iter().copied().filter(|&s| s != xs[i]).collect();
                let s = pick(&wrong, edge, rng);
                ys.push(s);
                edge = next_edge(edge, s);
                i += 1;
                l1 += 1;
                // keep one symbol for state 2 and one for the state-0 visit after it
                if n - i < 3 || rng.random_bool(params.q1) {
                    break;
                }
            }
            // state 2: consumes x_i, emits l2 >= 1 symbols
            i += 1;
            let mut l2 = 0;
            loop {
                let s = pick(&RelSymbol::ALL, edge, rng);
                ys.push(s);
                edge = next_edge(edge, s);
                l2 += 1;
                if rng.random_bool(params.q2) {
                    break;
                }
            }
            ann.l1.push(l1);
            ann.l2.push(l2);
            ann.l0.push(0);
            // forced state-0 visit
        }
        let s = xs[i];
        ys.push(s);
        edge = next_edge(edge, s);
        *ann.l0.last_mut().unwrap() += 1;
        i += 1;
    }
    let y = DccString { start: x.start, first_dir: x.first_dir, symbols: ys, closed: x.closed };
    (y, ann)
}

/// Full negative log-likelihood of a state path (natural log).
pub fn neg_log_likelihood_exact(a: &BurstAnnotation, params: &TransitionParams) -> f64 {
    let k = a.k() as f64;
    let (gamma, lambda, delta) = (a.gamma() as f64, a.lambda() as f64, a.delta() as f64);
    let TransitionParams { p, q1, q2 } = *params;
    -k * (p.ln() + q1.ln() + q2.ln())
        - (gamma - k) * (1.0 - p).ln()
        - (lambda - k) * (1.0 - q1).ln()
        - (delta - k) * (1.0 - q2).ln()
}

/// Linearized form dropping the good-state term.
pub fn neg_log_likelihood_approx(k: usize, lambda: usize, delta_prime: usize, costs: &BurstCosts) -> f64 {
    (costs.c0 + costs.c2) * k as f64 + costs.c1 * lambda as f64 + costs.c2 * delta_prime as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    cost: f64,
    bursts: u32,
}

impl Score {
    const INF: Score = Score { cost: f64::INFINITY, bursts: u32::MAX };

    fn add(self, c: f64, b: u32) -> Score {
        if self.cost.is_infinite() {
            return Score::INF;
        }
        Score { cost: self.cost + c, bursts: self.bursts + b }
    }

    fn better(self, other: Score) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.bursts < other.bursts)
    }
}

/// The better of two candidates; the first wins ties.
fn prefer(a: (Score, From), b: (Score, From)) -> (Score, From) {
    let best = if b.0.better(a.0) { b } else { a };
    if best.0.cost.is_infinite() {
        (Score::INF, From::None)
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum From {
    None,
    G,
    C,
    B,
}

/// Most likely state path explaining `y` from `x`, scored with the full
/// likelihood. Ties prefer fewer bursts, then good-state predecessors.
pub fn align_strings(x: &DccString, y: &DccString, params: &TransitionParams) -> Result<BurstAnnotation> {
    align_symbols(&x.symbols, &y.symbols, params)
}

pub fn align_symbols(x: &[RelSymbol], y: &[RelSymbol], params: &TransitionParams) -> Result<BurstAnnotation> {
    let (lx, ly) = (x.len(), y.len());
    if ly < lx {
        return Err(Error::Infeasible(format!("noisy string ({ly}) shorter than clean string ({lx})")));
    }
    let band = ly - lx;
    let TransitionParams { p, q1, q2 } = *params;
    let a0 = -(1.0 - p).ln();
    let a1 = -(1.0 - q1).ln();
    let a2 = -(1.0 - q2).ln();
    let open = -p.ln() - q1.ln() - q2.ln() + (1.0 - p).ln() + (1.0 - q1).ln() + (1.0 - q2).ln() + a1;

    let w = band + 1;
    let idx = |i: usize, d: usize| i * w + d;
    let cells = (lx + 1) * w;
    // g: last visit was state 0 (or start); b: in state 1; c: in a state-2 run
    let mut g = vec![Score::INF; cells];
    let mut b = vec![Score::INF; cells];
    let mut c = vec![Score::INF; cells];
    let mut g_from = vec![From::None; cells];
    let mut b_from = vec![From::None; cells];
    let mut c_from = vec![From::None; cells];
    g[idx(0, 0)] = Score { cost: 0.0, bursts: 0 };

    for i in 1..=lx {
        for d in 0..=band {
            let j = i + d;
            let here = idx(i, d);
            let diag = idx(i - 1, d);
            if x[i - 1] == y[j - 1] {
                // a good visit follows another good visit, the start, or a closed run
                (g[here], g_from[here]) = prefer((g[diag].add(a0, 0), From::G), (c[diag].add(a0, 0), From::C));
            } else {
                (b[here], b_from[here]) = prefer((g[diag].add(open, 1), From::G), (b[diag].add(a1, 0), From::B));
            }
            let extend = if d > 0 { c[idx(i, d - 1)].add(a2, 0) } else { Score::INF };
            (c[here], c_from[here]) = prefer((b[diag].add(a2, 0), From::B), (extend, From::C));
        }
    }

    if g[idx(lx, band)].cost.is_infinite() {
        return Err(Error::Infeasible("no state path explains the observation".into()));
    }
    // backtrack into per-symbol states, newest first
    let mut states = Vec::with_capacity(ly);
    let (mut i, mut d, mut which) = (lx, band, From::G);
    while i > 0 || d > 0 {
        let here = idx(i, d);
        match which {
            From::G => {
                states.push(0u8);
                which = g_from[here];
                i -= 1;
            }
            From::B => {
                states.push(1u8);
                which = b_from[here];
                i -= 1;
            }
            From::C => {
                states.push(2u8);
                let prev = c_from[here];
                if prev == From::C {
                    d -= 1;
                } else {
                    i -= 1;
                }
                which = prev;
            }
            From::None => unreachable!("backtrack left the feasible region"),
        }
    }
    states.reverse();
    Ok(annotation_from_states(&states))
}

/// Run-length view of a per-symbol state sequence.
pub fn annotation_from_states(states: &[u8]) -> BurstAnnotation {
    let mut ann = BurstAnnotation { l0: vec![0], l1: Vec::new(), l2: Vec::new() };
    let mut prev = 0u8;
    for &s in states {
        match (prev, s) {
            (_, 0) => *ann.l0.last_mut().unwrap() += 1,
            (0, 1) => {
                ann.l1.push(1);
                ann.l2.push(0);
                ann.l0.push(0);
            }
            (_, 1) => *ann.l1.last_mut().unwrap() += 1,
            (_, 2) => *ann.l2.last_mut().unwrap() += 1,
            _ => unreachable!(),
        }
        prev = s;
    }
    ann
}

/// Transition counts of a set of state paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransitionCounts {
    pub bursts: u64,
    pub good: u64,
    pub wrong: u64,
    pub inserted: u64,
}

impl TransitionCounts {
    pub fn add(&mut self, a: &BurstAnnotation) {
        self.bursts += a.k() as u64;
        self.good += a.gamma() as u64;
        self.wrong += a.lambda() as u64;
        self.inserted += a.delta() as u64;
    }

    /// Maximum-likelihood parameters, clamped away from 0 and 1. A state
    /// that is never left gets the ceiling and a warning.
    pub fn params(&self) -> TransitionParams {
        let ratio = |num: u64, den: u64, name: &str| {
            if den == 0 {
                log::warn!("state for {name} never visited; using {}", 1.0 - PROB_FLOOR);
                1.0 - PROB_FLOOR
            } else {
                clamp_prob(num as f64 / den as f64)
            }
        };
        TransitionParams {
            p: ratio(self.bursts, self.good, "p"),
            q1: ratio(self.bursts, self.wrong, "q1"),
            q2: ratio(self.bursts, self.inserted, "q2"),
        }
    }
}

pub fn estimate_from_annotations(annotations: &[BurstAnnotation]) -> TransitionParams {
    let mut counts = TransitionCounts::default();
    for a in annotations {
        counts.add(a);
    }
    counts.params()
}

/// Align each `(x, y)` pair under `align_params` and count transitions.
/// Pairs that admit no alignment are skipped with a warning.
pub fn estimate_from_pairs(pairs: &[(DccString, DccString)], align_params: &TransitionParams) -> Result<TransitionParams> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to estimate from".into()));
    }
    let mut annotations = Vec::with_capacity(pairs.len());
    for (k, (x, y)) in pairs.iter().enumerate() {
        match align_strings(x, y, align_params) {
            Ok(a) => annotations.push(a),
            Err(e) => log::warn!("pair {k} skipped: {e}"),
        }
    }
    if annotations.is_empty() {
        return Err(Error::Infeasible("no pair could be aligned".into()));
    }
    Ok(estimate_from_annotations(&annotations))
}

#[derive(Debug, Clone)]
pub struct AlternatingResult {
    pub params: TransitionParams,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TransitionParams>,
}

/// Alternate between denoising every observation with the current
/// parameters and re-estimating the parameters from the resulting pairs.
pub fn estimate_alternating<F>(
    ys: &[DccString],
    init: TransitionParams,
    tol: f64,
    max_iter: usize,
    denoiser: F,
) -> Result<AlternatingResult>
where
    F: Fn(&DccString, &TransitionParams) -> Result<DccString> + Sync,
{
    use rayon::prelude::*;
    let mut params = init;
    let mut trajectory = vec![init];
    for it in 1..=max_iter {
        let pairs: Vec<(DccString, DccString)> = ys
            .par_iter()
            .map(|y| denoiser(y, &params).map(|x| (x, y.clone())))
            .collect::<Result<_>>()?;
        let next = estimate_from_pairs(&pairs, &params)?;
        trajectory.push(next);
        let change = next.max_abs_diff(&params);
        params = next;
        if change < tol {
            return Ok(AlternatingResult { params, iterations: it, converged: true, trajectory });
        }
    }
    log::warn!("alternating estimation did not converge in {max_iter} iterations");
    Ok(AlternatingResult { params, iterations: max_iter, converged: false, trajectory })
}

/// Maximum-likelihood iid parameters from per-symbol error flags and per-error increases.
pub fn estimate_iid(views: &[(Vec<bool>, Vec<usize>)]) -> IidParams {
    let symbols: usize = views.iter().map(|(f, _)| f.len()).sum();
    let errors: usize = views.iter().map(|(f, _)| f.iter().filter(|&&e| e).count()).sum();
    let increase: usize = views.iter().flat_map(|(_, inc)| inc.iter()).sum();
    let pprime = if symbols == 0 { PROB_FLOOR } else { clamp_prob(errors as f64 / symbols as f64) };
    let lambdaprime = if errors == 0 { 0.0 } else { increase as f64 / errors as f64 };
    IidParams { pprime, lambdaprime }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Coin-toss error flags with a Poisson length increase per error.
pub fn iid_neg_log_likelihood(flags: &[bool], increases: &[usize], params: &IidParams) -> f64 {
    let (p, lam) = (params.pprime, params.lambdaprime);
    let bern: f64 = flags.iter().map(|&e| if e { p.ln() } else { (1.0 - p).ln() }).sum();
    let pois: f64 = increases
        .iter()
        .map(|&k| {
            if lam == 0.0 {
                if k == 0 { 0.0 } else { f64::NEG_INFINITY }
            } else {
                k as f64 * lam.ln() - lam - ln_factorial(k)
            }
        })
        .sum();
    -bern - pois
}

pub fn aic(k: usize, neg_log_likelihood: f64) -> f64 {
    2.0 * k as f64 + 2.0 * neg_log_likelihood
}

pub fn relative_likelihood(aic_a: f64, aic_b: f64) -> f64 {
    ((aic_a - aic_b) / 2.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{parse_symbols, Direction, Point};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dcc(s: &str) -> DccString {
        DccString::new(Point::new(0, 0), Direction::E, parse_symbols(s).unwrap())
    }

    /// Product of transition probabilities along a state path, from a virtual state 0.
    fn path_probability(states: &[u8], p: &TransitionParams) -> f64 {
        let mut prob = 1.0;
        let mut prev = 0u8;
        for &s in states {
            prob *= match (prev, s) {
                (0, 0) => 1.0 - p.p,
                (0, 1) => p.p,
                (1, 1) => 1.0 - p.q1,
                (1, 2) => p.q1,
                (2, 2) => 1.0 - p.q2,
                (2, 0) => p.q2,
                _ => 0.0,
            };
            prev = s;
        }
        prob
    }

    /// Exhaustive minimum over all state sequences consistent with (x, y).
    fn brute_align(x: &[RelSymbol], y: &[RelSymbol], p: &TransitionParams) -> Option<f64> {
        let n = y.len();
        let mut best: Option<f64> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let states: Vec<u8> = (0..n).map(|_| { let s = (c % 3) as u8; c /= 3; s }).collect();
            let mut i = 0;
            let mut prev = 0u8;
            let mut ok = true;
            for (j, &s) in states.iter().enumerate() {
                let valid = match (prev, s) {
                    (0, 0) | (2, 0) => i < x.len() && x[i] == y[j],
                    (0, 1) | (1, 1) => i < x.len() && x[i] != y[j],
                    (1, 2) => i < x.len(),
                    (2, 2) => true,
                    _ => false,
                };
                if !valid {
                    ok = false;
                    break;
                }
                if !(prev == 2 && s == 2) {
                    i += 1;
                }
                prev = s;
            }
            if !ok || i != x.len() || states.last().is_some_and(|&s| s != 0) {
                continue;
            }
            let nll = -path_probability(&states, p).ln();
            best = Some(best.map_or(nll, |b: f64| b.min(nll)));
        }
        best
    }

    #[test]
    fn exact_likelihood_examples() {
        let params = TransitionParams::new(0.1, 0.5, 0.5).unwrap();
        let a = BurstAnnotation::from_runs(vec![10], vec![], vec![]).unwrap();
        assert_relative_eq!(neg_log_likelihood_exact(&a, &params), -10.0 * 0.9f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(neg_log_likelihood_exact(&a, &params), 1.0536051565782628, epsilon = 1e-12);
        let a = BurstAnnotation::from_runs(vec![5, 5], vec![1], vec![1]).unwrap();
        let want = -(0.1f64.ln() + 2.0 * 0.5f64.ln()) - 9.0 * 0.9f64.ln();
        assert_relative_eq!(neg_log_likelihood_exact(&a, &params), want, epsilon = 1e-12);
        assert_relative_eq!(neg_log_likelihood_exact(&a, &params), -path_probability(&a.states(), &params).ln(), epsilon = 1e-12);
    }

    #[test]
    fn approx_likelihood_examples() {
        let params = TransitionParams::new(0.1, 0.5, 0.5).unwrap();
        let costs = params.costs();
        assert_relative_eq!(costs.c0, 10f64.ln(), epsilon = 1e-12);
        assert_eq!(neg_log_likelihood_approx(0, 0, 0, &costs), 0.0);
        let v = neg_log_likelihood_approx(1, 2, 0, &costs);
        assert_relative_eq!(v, 10f64.ln() + 3.0 * 2f64.ln(), epsilon = 1e-12);
        assert!((v - 4.3820).abs() < 1e-4);
    }

    #[test]
    fn counting_estimates() {
        let a = BurstAnnotation::from_runs(vec![50, 45], vec![2], vec![3]).unwrap();
        let est = estimate_from_annotations(&[a]);
        assert_relative_eq!(est.q1, 0.5);
        assert_relative_eq!(est.q2, 1.0 / 3.0);
        assert_relative_eq!(est.p, 1.0 / 95.0);
        let x = dcc("srlsrllrsr");
        let est = estimate_from_pairs(&[(x.clone(), x)], &TransitionParams::new(0.05, 0.5, 0.5).unwrap()).unwrap();
        assert_eq!(est.p, PROB_FLOOR);
        assert_eq!(est.q1, 1.0 - PROB_FLOOR);
    }

    #[test]
    fn identical_strings_align_without_bursts() {
        let x = dcc("srlsrllrsrss");
        let a = align_strings(&x, &x, &TransitionParams::new(0.05, 0.5, 0.5).unwrap()).unwrap();
        assert_eq!(a.k(), 0);
        assert_eq!(a.gamma(), 12);
        assert!(align_strings(&dcc("sss"), &dcc("ss"), &TransitionParams::new(0.05, 0.5, 0.5).unwrap()).is_err());
    }

    #[test]
    fn near_zero_p_keeps_string() {
        let x = dcc(&"srlsrllrsrss".repeat(10));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, a) = corrupt_string(&x, &TransitionParams::new(1e-12, 0.5, 0.5).unwrap(), None, &mut rng);
        assert_eq!(y, x);
        assert_eq!(a.k(), 0);
    }

    #[test]
    fn wrong_run_length_is_geometric() {
        let params = TransitionParams::new(0.05, 0.5, 0.5).unwrap();
        let x = dcc(&"srlsrllrsrss".repeat(20));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut runs = Vec::new();
        for _ in 0..2000 {
            let (_, a) = corrupt_string(&x, &params, None, &mut rng);
            runs.extend(a.l1.iter().map(|&v| v as f64));
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        // variance of a geometric with q = 1/2 is (1-q)/q^2 = 2
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n).sqrt(), "mean {mean} over {n}");
    }

    #[test]
    fn iid_examples() {
        let params = IidParams { pprime: 0.1, lambdaprime: 0.7 };
        let flags = vec![false; 10];
        assert_relative_eq!(iid_neg_log_likelihood(&flags, &[], &params), -10.0 * 0.9f64.ln(), epsilon = 1e-12);
        let mut flags = vec![false; 10];
        flags[4] = true;
        let want = -9.0 * 0.9f64.ln() - 0.1f64.ln() - (-0.7f64).exp().ln();
        assert_relative_eq!(iid_neg_log_likelihood(&flags, &[0], &params), want, epsilon = 1e-12);
        let a = BurstAnnotation::from_runs(vec![3, 2], vec![2], vec![4]).unwrap();
        let (f, inc) = a.iid_view();
        assert_eq!(f.len(), a.x_len());
        assert_eq!(inc, vec![0, 0, 3]);
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic(3, 64.0), 134.0);
        assert_relative_eq!(relative_likelihood(128.0, 134.0), (-3.0f64).exp(), epsilon = 1e-15);
        assert_eq!(relative_likelihood(5.5, 5.5), 1.0);
    }

    #[test]
    fn params_text() {
        let p: TransitionParams = "p=0.1 q1=0.25 q2=0.5".parse().unwrap();
        assert_eq!(p, TransitionParams::new(0.1, 0.25, 0.5).unwrap());
        assert_eq!(p.to_string().parse::<TransitionParams>().unwrap(), p);
        assert!("p=0.1 q1=1.5 q2=0.5".parse::<TransitionParams>().is_err());
        let i: IidParams = "pprime=0.2 lambdaprime=1.5".parse().unwrap();
        assert_eq!(i.lambdaprime, 1.5);
    }

    fn arb_params() -> impl Strategy<Value = TransitionParams> {
        (0.02f64..0.6, 0.1f64..0.9, 0.1f64..0.9).prop_map(|(p, q1, q2)| TransitionParams::new(p, q1, q2).unwrap())
    }

    proptest! {
        #[test]
        fn channel_invariants(seed in any::<u64>(), params in arb_params(), len in 0usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let syms: Vec<RelSymbol> = (0..len).map(|_| RelSymbol::from_index(rng.random_range(0..3))).collect();
            let x = DccString::new(Point::new(0, 0), Direction::N, syms);
            let (y, a) = corrupt_string(&x, &params, None, &mut rng);
            prop_assert!(a.lambda() >= a.k() && a.delta() >= a.k());
            prop_assert_eq!(a.delta_prime(), y.len() - x.len());
            prop_assert_eq!(a.x_len(), x.len());
            prop_assert_eq!(a.y_len(), y.len());
            prop_assert_eq!(a.states().len(), y.len());
            let nll = neg_log_likelihood_exact(&a, &params);
            prop_assert!((nll + path_probability(&a.states(), &params).ln()).abs() < 1e-9);
            let approx = neg_log_likelihood_approx(a.k(), a.lambda(), a.delta_prime(), &params.costs());
            let gap = (a.gamma() as f64 - a.k() as f64) * (1.0 - params.p).ln();
            prop_assert!((approx - nll - gap).abs() < 1e-9);
            let best = align_strings(&x, &y, &params).unwrap();
            prop_assert!(neg_log_likelihood_exact(&best, &params) <= nll + 1e-9);
        }

        #[test]
        fn alignment_matches_enumeration(
            xs in prop::collection::vec(0usize..3, 1..5),
            extra in prop::collection::vec(0usize..3, 0..3),
            flips in prop::collection::vec(any::<bool>(), 6),
            params in arb_params(),
        ) {
            let x: Vec<RelSymbol> = xs.iter().map(|&i| RelSymbol::from_index(i)).collect();
            let mut y = x.clone();
            for (k, f) in flips.iter().enumerate().take(y.len()) {
                if *f { y[k] = RelSymbol::from_index((y[k].index() + 1) % 3); }
            }
            y.extend(extra.iter().map(|&i| RelSymbol::from_index(i)));
            y.truncate(6);
            prop_assume!(y.len() >= x.len());
            let oracle = brute_align(&x, &y, &params);
            match align_symbols(&x, &y, &params) {
                Ok(a) => {
                    let got = neg_log_likelihood_exact(&a, &params);
                    prop_assert!(oracle.is_some());
                    prop_assert!((got - oracle.unwrap()).abs() < 1e-9, "{} vs {:?}", got, oracle);
                }
                Err(_) => prop_assert!(oracle.is_none()),
            }
        }
    }
}
