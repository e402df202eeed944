//! Experiment plumbing: synthetic corpora, denoising runs and rate-distortion
//! sweeps with CSV output.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coder;
use crate::context::build_tree;
use crate::contour::{DccString, GridBounds};
use crate::dp::{joint_denoise, ObjectiveConfig, RateModel, Solution};
use crate::error::{Error, Result};
use crate::error_model::{estimate_from_pairs, TransitionParams};
use crate::geometry::distortion;
use crate::mask::{corrupt_mask, trace_contours, GridMask};
use crate::synth::{sequence, ShapeKind};

/// One target frame: its noisy contours, optional ground truth and the
/// model trained on earlier frames.
#[derive(Debug, Clone)]
pub struct FrameTask {
    pub model: Arc<RateModel>,
    pub bounds: GridBounds,
    pub noisy: Vec<DccString>,
    /// Ground-truth contour per noisy contour, when known.
    pub reference: Option<Vec<DccString>>,
    /// Clean contours of the frame before corruption.
    pub clean: Vec<DccString>,
}

impl FrameTask {
    pub fn contour_count(&self) -> usize {
        self.noisy.len()
    }
}

/// Clean contour closest to `y` in the distortion sense, rotated so that
/// its first edge is the one nearest to the first edge of `y`.
pub fn nearest_reference(y: &DccString, clean: &[DccString]) -> Option<DccString> {
    let x = clean.iter().min_by(|a, b| distortion(y, a).total_cmp(&distortion(y, b)))?;
    let target = y.first_edge();
    let k = x
        .realize()
        .iter()
        .enumerate()
        .min_by_key(|(_, e)| (e.end.manhattan(target.end), e.dir != target.dir))
        .map_or(0, |(k, _)| k);
    Some(x.reanchored(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub kinds: Vec<ShapeKind>,
    pub width: usize,
    pub height: usize,
    /// Sequences generated per shape kind.
    pub sequences: usize,
    pub delta: f64,
    pub seed: u64,
}

/// Build frame tasks: each sequence has three frames; the first two train
/// the context tree and the third is corrupted and traced.
pub fn synthetic_corpus(corpus_cfg: &CorpusConfig) -> Result<Vec<FrameTask>> {
    if corpus_cfg.kinds.is_empty() || corpus_cfg.sequences == 0 {
        return Err(Error::InvalidArgument("corpus needs at least one shape kind and sequence".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_cfg.seed);
    let mut tasks = Vec::new();
    for _ in 0..corpus_cfg.sequences {
        for &kind in &corpus_cfg.kinds {
            let frames = sequence(kind, corpus_cfg.width, corpus_cfg.height, 3, &mut rng)?;
            tasks.push(frame_task(&frames[..2], &frames[2], corpus_cfg.delta, &mut rng)?);
        }
    }
    Ok(tasks)
}

pub fn frame_task(training: &[GridMask], target: &GridMask, delta: f64, rng: &mut ChaCha8Rng) -> Result<FrameTask> {
    let train: Vec<DccString> = training.iter().flat_map(trace_contours).collect();
    let tree = build_tree(&train)?;
    let clean = trace_contours(target);
    let (noisy_mask, _) = corrupt_mask(target, delta, rng)?;
    let noisy = trace_contours(&noisy_mask);
    let reference = noisy.iter().map(|y| nearest_reference(y, &clean)).collect::<Option<Vec<_>>>();
    Ok(FrameTask {
        model: Arc::new(RateModel::new(tree)),
        bounds: GridBounds::for_image(target.width(), target.height()),
        noisy,
        reference,
        clean,
    })
}

/// Rotate two closed contours to start on a shared edge whose `run`
/// neighbours on both sides also agree, so that both symbol strings start
/// and end in agreement and can be aligned.
pub fn common_anchor(x: &DccString, y: &DccString, run: usize) -> Option<(DccString, DccString)> {
    let (xe, ye) = (x.realize(), y.realize());
    let (nx, ny) = (xe.len(), ye.len());
    let at_x: std::collections::HashMap<_, usize> = xe.iter().enumerate().map(|(k, e)| (*e, k)).collect();
    (0..ny).find_map(|ky| {
        let kx = *at_x.get(&ye[ky])?;
        (1..=run).all(|t| xe[(kx + t) % nx] == ye[(ky + t) % ny] && xe[(kx + nx - t % nx) % nx] == ye[(ky + ny - t % ny) % ny]).then(|| (x.reanchored(kx), y.reanchored(ky)))
    })
}

/// Channel parameters estimated from every (ground truth, noisy) pair that
/// shares an anchor edge.
pub fn estimate_corpus_params(tasks: &[FrameTask], align: &TransitionParams) -> Result<TransitionParams> {
    let pairs: Vec<(DccString, DccString)> = tasks
        .iter()
        .filter_map(|t| t.reference.as_ref().map(|r| (t, r)))
        .flat_map(|(t, r)| r.iter().zip(&t.noisy))
        .filter_map(|(x, y)| common_anchor(x, y, 3))
        .collect();
    estimate_from_pairs(&pairs, align)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub params: TransitionParams,
    pub beta: f64,
    pub ds: usize,
}

impl SolverSettings {
    pub fn config(&self, task: &FrameTask, lambda: f64) -> ObjectiveConfig {
        let mut cfg = ObjectiveConfig::new(self.params.costs(), task.model.clone(), task.bounds);
        cfg.beta = self.beta;
        cfg.ds = self.ds;
        cfg.lambda = lambda;
        cfg
    }
}

/// Solve every contour of every task; results keep the task/contour order.
pub fn denoise_tasks(tasks: &[FrameTask], settings: &SolverSettings, lambda: f64, beta: f64) -> Result<Vec<Vec<Solution>>> {
    let jobs: Vec<(usize, usize)> = tasks.iter().enumerate().flat_map(|(t, task)| (0..task.noisy.len()).map(move |c| (t, c))).collect();
    let solved: Vec<Solution> = jobs
        .par_iter()
        .map(|&(t, c)| {
            let cfg = settings.config(&tasks[t], lambda).with_beta(beta);
            joint_denoise(&tasks[t].noisy[c], &cfg)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Vec<Solution>> = tasks.iter().map(|t| Vec::with_capacity(t.noisy.len())).collect();
    for ((t, _), s) in jobs.into_iter().zip(solved) {
        out[t].push(s);
    }
    Ok(out)
}

/// Distortion references per task: ground truth when available, otherwise
/// the `λ = 0` MAP solution at the configured `β`.
pub fn resolve_references(tasks: &[FrameTask], settings: &SolverSettings) -> Result<Vec<Vec<DccString>>> {
    let missing: Vec<usize> = (0..tasks.len()).filter(|&t| tasks[t].reference.is_none()).collect();
    let map = if missing.is_empty() {
        Vec::new()
    } else {
        let subset: Vec<FrameTask> = missing.iter().map(|&t| tasks[t].clone()).collect();
        denoise_tasks(&subset, settings, 0.0, settings.beta)?
    };
    Ok(tasks
        .iter()
        .enumerate()
        .map(|(t, task)| match &task.reference {
            Some(r) => r.clone(),
            None => {
                let i = missing.iter().position(|&m| m == t).unwrap();
                map[i].iter().map(|s| s.xhat.clone()).collect()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub lambda: f64,
    pub beta: f64,
    pub rate_bits_per_symbol: f64,
    pub distortion: f64,
    pub contours: usize,
    pub millis: u64,
    pub payload_bits: u64,
    /// Bits including contour headers.
    pub total_bits: u64,
    /// Observed symbols of the contours coded; the rate normalizer.
    pub symbols: u64,
    /// Symbols actually coded.
    pub coded_symbols: u64,
    /// Objective rate term summed over contours (symbols after the prefix).
    pub objective_rate_bits: f64,
    /// Burst error cost plus prior, summed over contours.
    pub lagrangian_distortion: f64,
}

pub const CSV_HEADER: &str = "lambda,beta,rate_bits_per_symbol,distortion,contours,millis";

pub fn write_csv(points: &[RdPoint]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.lambda, p.beta, p.rate_bits_per_symbol, p.distortion, p.contours, p.millis);
    }
    s
}

pub fn read_csv(text: &str) -> Result<Vec<(f64, f64, f64, f64, usize, u64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or wrong CSV header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("expected 6 fields in '{l}'")));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| Error::Parse(format!("field {i} of '{l}': {e}")));
            let int = |i: usize| f[i].parse::<u64>().map_err(|e| Error::Parse(format!("field {i} of '{l}': {e}")));
            Ok((num(0)?, num(1)?, num(2)?, num(3)?, int(4)? as usize, int(5)?))
        })
        .collect()
}

fn rd_point(tasks: &[FrameTask], refs: &[Vec<DccString>], solutions: &[Vec<Solution>], lambda: f64, beta: f64, millis: u64) -> Result<RdPoint> {
    let mut point = RdPoint {
        lambda,
        beta,
        rate_bits_per_symbol: 0.0,
        distortion: 0.0,
        contours: 0,
        millis,
        payload_bits: 0,
        total_bits: 0,
        symbols: 0,
        coded_symbols: 0,
        objective_rate_bits: 0.0,
        lagrangian_distortion: 0.0,
    };
    for (t, task) in tasks.iter().enumerate() {
        let xs: Vec<DccString> = solutions[t].iter().map(|s| s.xhat.clone()).collect();
        let bits = coder::encode(&xs, task.model.tree())?;
        point.payload_bits += bits.payload_bits();
        point.total_bits += bits.to_bytes().len() as u64 * 8;
        point.coded_symbols += bits.symbol_count();
        point.symbols += task.noisy.iter().map(|y| y.symbols.len() as u64).sum::<u64>();
        point.contours += xs.len();
        for (s, r) in solutions[t].iter().zip(&refs[t]) {
            point.distortion += distortion(&s.xhat, r);
            point.objective_rate_bits += s.rate_bits;
            point.lagrangian_distortion += s.breakdown.error + s.breakdown.prior;
        }
    }
    point.rate_bits_per_symbol = if point.symbols == 0 { 0.0 } else { point.payload_bits as f64 / point.symbols as f64 };
    Ok(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    #[default]
    Measured,
    /// Write zero milliseconds so reruns are byte-identical.
    Off,
}

fn elapsed(start: Instant, timing: Timing) -> u64 {
    match timing {
        Timing::Measured => start.elapsed().as_millis() as u64,
        Timing::Off => 0,
    }
}

/// Joint scheme: one RD point per `λ` at the configured `β`.
pub fn joint_sweep(tasks: &[FrameTask], settings: &SolverSettings, lambdas: &[f64], timing: Timing) -> Result<Vec<RdPoint>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    let refs = resolve_references(tasks, settings)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let start = Instant::now();
            let sols = denoise_tasks(tasks, settings, lambda, settings.beta)?;
            rd_point(tasks, &refs, &sols, lambda, settings.beta, elapsed(start, timing))
        })
        .collect()
}

/// Separate scheme: `λ = 0` denoising at each `β`, then lossless coding.
pub fn separate_sweep(tasks: &[FrameTask], settings: &SolverSettings, betas: &[f64], timing: Timing) -> Result<Vec<RdPoint>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("beta schedule is empty".into()));
    }
    if betas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("beta schedule must be nondecreasing".into()));
    }
    let refs = resolve_references(tasks, settings)?;
    betas
        .iter()
        .map(|&beta| {
            let start = Instant::now();
            let sols = denoise_tasks(tasks, settings, 0.0, beta)?;
            rd_point(tasks, &refs, &sols, 0.0, beta, elapsed(start, timing))
        })
        .collect()
}

/// Piecewise-linear distortion of a curve at `rate`, or `None` outside its
/// rate range. Points with equal rate keep the smallest distortion.
pub fn interpolate(curve: &[(f64, f64)], rate: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let (first, last) = (pts.first()?, pts.last()?);
    if rate < first.0 || rate > last.0 {
        return None;
    }
    for w in pts.windows(2) {
        let ((r0, d0), (r1, d1)) = (w[0], w[1]);
        if rate >= r0 && rate <= r1 {
            let t = if r1 > r0 { (rate - r0) / (r1 - r0) } else { 0.0 };
            return Some(d0 + t * (d1 - d0));
        }
    }
    Some(first.1)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dominance {
    /// Matched rates compared.
    pub checked: usize,
    /// Rates where the first curve is worse, with both distortions.
    pub violations: Vec<(f64, f64, f64)>,
    /// Whether the first curve is strictly better somewhere.
    pub strict: bool,
}

/// Compare two `(rate, distortion)` curves at every rate of either curve that
/// lies in the overlap of their rate ranges.
pub fn dominance(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> Dominance {
    let mut rates: Vec<f64> = a.iter().chain(b).map(|p| p.0).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let mut out = Dominance::default();
    for r in rates {
        let (Some(da), Some(db)) = (interpolate(a, r), interpolate(b, r)) else { continue };
        out.checked += 1;
        if da > db + tol {
            out.violations.push((r, da, db));
        } else if da < db - tol {
            out.strict = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let p = RdPoint {
            lambda: 0.5,
            beta: 3.0,
            rate_bits_per_symbol: 1.25,
            distortion: 12.0,
            contours: 4,
            millis: 0,
            payload_bits: 10,
            total_bits: 20,
            symbols: 8,
            coded_symbols: 8,
            objective_rate_bits: 9.0,
            lagrangian_distortion: 1.0,
        };
        let text = write_csv(&[p.clone(), p]);
        assert!(text.starts_with(CSV_HEADER));
        let rows = read_csv(&text).unwrap();
        assert_eq!(rows, vec![(0.5, 3.0, 1.25, 12.0, 4, 0); 2]);
        assert!(read_csv("a,b\n").is_err());
    }

    #[test]
    fn interpolation_and_dominance() {
        let a = [(1.0, 10.0), (2.0, 4.0)];
        assert_eq!(interpolate(&a, 1.5), Some(7.0));
        assert_eq!(interpolate(&a, 0.5), None);
        let b = [(1.0, 10.0), (3.0, 2.0)];
        // b at 2.0 is 6.0, a is 4.0
        let d = dominance(&a, &b, 1e-9);
        assert_eq!(d.checked, 2);
        assert!(d.violations.is_empty());
        assert!(d.strict);
        let d = dominance(&b, &a, 1e-9);
        assert_eq!(d.violations.len(), 1);
    }

    #[test]
    fn corpus_has_references() {
        let corpus_cfg = CorpusConfig { kinds: vec![ShapeKind::Rectangle], width: 32, height: 32, sequences: 1, delta: 0.1, seed: 4 };
        let tasks = synthetic_corpus(&corpus_cfg).unwrap();
        assert_eq!(tasks.len(), 1);
        let t = &tasks[0];
        assert!(!t.noisy.is_empty());
        assert_eq!(t.reference.as_ref().unwrap().len(), t.noisy.len());
        assert!(!t.model.tree().is_empty());
    }
}
