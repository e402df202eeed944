use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use jdcc_core::context::{deserialize_tree, serialize_tree};
use jdcc_core::contour::{read_contours, write_contours};
use jdcc_core::error_model::{
    aic, align_strings, estimate_alternating, estimate_from_pairs, estimate_iid, iid_neg_log_likelihood,
    neg_log_likelihood_exact, relative_likelihood,
};
use jdcc_core::harness::{
    common_anchor, estimate_corpus_params, joint_sweep, separate_sweep, synthetic_corpus, write_csv, CorpusConfig,
    RdPoint, SolverSettings, Timing,
};
use jdcc_core::mask::{read_pgm, write_pgm};
use jdcc_core::synth::{sequence, ShapeKind};
use jdcc_core::{
    build_tree, corrupt_mask, decode, encode, estimate_rate, joint_denoise, lambda_search, measure_rate,
    trace_contours, Bitstream, ContextTree, DccString, Error, GridBounds, IidParams, ObjectiveConfig, RateModel,
    TransitionParams,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "jdcc", version, about = "Lossless coding and joint denoising of chain-coded contours")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a context tree from training masks (PGM) or contour files.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject boundary noise into a mask.
    Corrupt {
        mask: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Losslessly code contours (from a contour file or a mask).
    Encode {
        input: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a bitstream back to contours.
    Decode {
        input: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Denoise and code noisy contours in one optimization.
    Denoise(DenoiseArgs),
    /// Estimate channel parameters from clean/noisy pairs, or from noisy
    /// contours alone by alternating denoising and estimation.
    Estimate(EstimateArgs),
    /// Compare the burst model against the iid model by AIC.
    Aic {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// Fitted from the same pairs when omitted.
        #[arg(long)]
        iid_params: Option<PathBuf>,
    },
    /// Rate-distortion sweep of the joint and separate schemes on a synthetic corpus.
    RdSweep(SweepArgs),
    /// Write synthetic mask sequences as PGM files.
    GenShapes {
        #[arg(long, default_value = "rect")]
        kind: ShapeKind,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DenoiseArgs {
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 4)]
    ds: usize,
    /// Rate budget in bits per observed symbol; searches λ per contour.
    #[arg(long)]
    rmax: Option<f64>,
    /// Image size bounding the solution; taken from the mask for PGM input.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    noisy: PathBuf,
    /// Ground-truth contours, paired with the noisy ones by position.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Alignment parameters for pairs, or the starting point when alternating.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Required when alternating.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 4)]
    ds: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated shape kinds.
    #[arg(long, default_value = "rect,circle", value_delimiter = ',')]
    kinds: Vec<ShapeKind>,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    sequences: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimated from the corpus when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 4)]
    ds: usize,
    #[arg(long, default_value = "0,0.5,1,2,4,8", value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Multiples of --beta for the separate scheme.
    #[arg(long, default_value = "1,1.5,2,3,5,8", value_delimiter = ',')]
    beta_schedule: Vec<f64>,
    /// Write 0 in the millis column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Output prefix; writes <out>_joint.csv and <out>_separate.csv.
    #[arg(long)]
    out: PathBuf,
}

fn read_params(path: &Path) -> anyhow::Result<TransitionParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.trim().parse()?)
}

fn read_tree(path: &Path) -> anyhow::Result<ContextTree> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(deserialize_tree(&data)?)
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Contours of a PGM mask or a contour file, plus the image size for masks.
fn load_contours(path: &Path) -> anyhow::Result<(Vec<DccString>, Option<(usize, usize)>)> {
    if is_pgm(path) {
        let mask = read_pgm(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)?;
        Ok((trace_contours(&mask), Some((mask.width(), mask.height()))))
    } else {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok((read_contours(&text)?, None))
    }
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn train(inputs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let mut contours = Vec::new();
    for p in inputs {
        contours.extend(load_contours(p)?.0);
    }
    if contours.iter().all(|c| c.is_empty()) {
        return Err(Error::InvalidArgument("no contours found in the training inputs".into()).into());
    }
    let tree = build_tree(&contours)?;
    write(out, serialize_tree(&tree))?;
    println!(
        "contours={} symbols={} depth={} nodes={}",
        tree.training_count(),
        tree.training_length(),
        tree.depth(),
        tree.node_count()
    );
    Ok(())
}

fn corrupt(mask: &Path, delta: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let m = read_pgm(&fs::read(mask).with_context(|| format!("reading {}", mask.display()))?)?;
    let (noisy, report) = corrupt_mask(&m, delta, &mut ChaCha8Rng::seed_from_u64(seed))?;
    write(out, write_pgm(&noisy))?;
    println!("boundary_edges={} replacements={}", report.boundary_edges, report.replacements);
    Ok(())
}

fn encode_cmd(input: &Path, tree: &Path, out: &Path) -> anyhow::Result<()> {
    let (contours, _) = load_contours(input)?;
    let tree = read_tree(tree)?;
    let bits = encode(&contours, &tree)?;
    let bytes = bits.to_bytes();
    write(out, &bytes)?;
    let ideal: f64 = contours.iter().map(|c| estimate_rate(&tree, c, 1)).sum();
    println!(
        "contours={} symbols={} payload_bits={} total_bits={} bits_per_symbol={:.6} ideal_bits={:.1}",
        contours.len(),
        bits.symbol_count(),
        bits.payload_bits(),
        bytes.len() * 8,
        measure_rate(&bits)?,
        ideal
    );
    Ok(())
}

fn decode_cmd(input: &Path, tree: &Path, out: &Path) -> anyhow::Result<()> {
    let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let bits = Bitstream::from_bytes(&data)?;
    let contours = decode(&bits, &read_tree(tree)?)?;
    write(out, write_contours(&contours))?;
    println!("contours={} symbols={}", contours.len(), bits.symbol_count());
    Ok(())
}

fn denoise(a: &DenoiseArgs) -> anyhow::Result<()> {
    let (noisy, size) = load_contours(&a.input)?;
    let size = size.or(a.width.zip(a.height));
    // without an image size, keep coordinates representable in the bitstream header
    let bounds = match size {
        Some((w, h)) => GridBounds::for_image(w, h),
        None => GridBounds::new(0, u16::MAX as i32, 0, u16::MAX as i32)?,
    };
    let params = read_params(&a.params)?;
    let model = Arc::new(RateModel::new(read_tree(&a.tree)?));
    let mut cfg = ObjectiveConfig::new(params.costs(), model, bounds);
    cfg.beta = a.beta;
    cfg.ds = a.ds;
    cfg.lambda = a.lambda;
    cfg.validate()?;
    let mut out = Vec::with_capacity(noisy.len());
    for (k, y) in noisy.iter().enumerate() {
        let (sol, lambda) = match a.rmax {
            Some(r) => {
                let res = lambda_search(y, &cfg, r * y.len() as f64, 40)?;
                (res.solution, res.lambda)
            }
            None => (joint_denoise(y, &cfg)?, a.lambda),
        };
        println!(
            "contour={k} ly={} lx={} lambda={lambda} cost={:.6} error={:.6} prior={:.6} rate_bits={:.3}{}",
            y.len(),
            sol.xhat.len(),
            sol.cost,
            sol.breakdown.error,
            sol.breakdown.prior,
            sol.rate_bits,
            if sol.passthrough { " passthrough" } else { "" }
        );
        out.push(sol.xhat);
    }
    write(&a.out, write_contours(&out))
}

fn read_contour_file(path: &Path) -> anyhow::Result<Vec<DccString>> {
    Ok(load_contours(path)?.0)
}

/// Pairs clean and noisy contours by position; closed pairs are rotated to
/// a shared anchor edge when one exists.
fn pairs(clean: &[DccString], noisy: &[DccString]) -> anyhow::Result<Vec<(DccString, DccString)>> {
    if clean.len() != noisy.len() {
        bail!(Error::InvalidArgument(format!("{} clean vs {} noisy contours", clean.len(), noisy.len())));
    }
    Ok(clean
        .iter()
        .zip(noisy)
        .map(|(x, y)| {
            if x.closed && y.closed {
                common_anchor(x, y, 3).unwrap_or_else(|| (x.clone(), y.clone()))
            } else {
                (x.clone(), y.clone())
            }
        })
        .collect())
}

fn estimate(a: &EstimateArgs) -> anyhow::Result<()> {
    let noisy = read_contour_file(&a.noisy)?;
    let init = match &a.params {
        Some(p) => read_params(p)?,
        None => TransitionParams::new(0.5, 0.5, 0.5)?,
    };
    let params = match &a.clean {
        Some(clean) => estimate_from_pairs(&pairs(&read_contour_file(clean)?, &noisy)?, &init)?,
        None => {
            let Some(tree) = &a.tree else {
                bail!(Error::InvalidArgument("alternating estimation needs --tree".into()));
            };
            let model = Arc::new(RateModel::new(read_tree(tree)?));
            let bounds = GridBounds::new(0, u16::MAX as i32, 0, u16::MAX as i32)?;
            let (beta, ds) = (a.beta, a.ds);
            let denoiser = |y: &DccString, p: &TransitionParams| -> jdcc_core::Result<DccString> {
                let mut cfg = ObjectiveConfig::new(p.costs(), model.clone(), bounds);
                cfg.beta = beta;
                cfg.ds = ds;
                joint_denoise(y, &cfg).map(|s| s.xhat)
            };
            let res = estimate_alternating(&noisy, init, a.tol, a.max_iter, denoiser)?;
            for (k, p) in res.trajectory.iter().enumerate() {
                println!("iteration={k} {p}");
            }
            println!("converged={} iterations={}", res.converged, res.iterations);
            res.params
        }
    };
    println!("{params}");
    write(&a.out, format!("{params}\n"))
}

fn aic_cmd(clean: &Path, noisy: &Path, params: &Path, iid: Option<&Path>) -> anyhow::Result<()> {
    let params = read_params(params)?;
    let pairs = pairs(&read_contour_file(clean)?, &read_contour_file(noisy)?)?;
    let mut annotations = Vec::with_capacity(pairs.len());
    for (k, (x, y)) in pairs.iter().enumerate() {
        match align_strings(x, y, &params) {
            Ok(a) => annotations.push(a),
            Err(e) => log::warn!("pair {k} skipped: {e}"),
        }
    }
    if annotations.is_empty() {
        bail!(Error::Infeasible("no pair could be aligned".into()));
    }
    let views: Vec<_> = annotations.iter().map(|a| a.iid_view()).collect();
    let iid: IidParams = match iid {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?.trim().parse()?,
        None => estimate_iid(&views),
    };
    let n = annotations.len() as f64;
    let proposed = annotations.iter().map(|a| aic(3, neg_log_likelihood_exact(a, &params))).sum::<f64>() / n;
    let baseline = views.iter().map(|(f, inc)| aic(2, iid_neg_log_likelihood(f, inc, &iid))).sum::<f64>() / n;
    println!("pairs={} {params} {iid}", annotations.len());
    println!("aic_proposed={proposed:.4} k=3");
    println!("aic_iid={baseline:.4} k=2");
    println!("relative_likelihood_iid={:.6e}", relative_likelihood(proposed, baseline));
    Ok(())
}

fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let corpus_cfg = CorpusConfig {
        kinds: a.kinds.clone(),
        width: a.size,
        height: a.size,
        sequences: a.sequences,
        delta: a.delta,
        seed: a.seed,
    };
    let tasks = synthetic_corpus(&corpus_cfg)?;
    let params = match &a.params {
        Some(p) => read_params(p)?,
        None => estimate_corpus_params(&tasks, &TransitionParams::new(0.05, 0.5, 0.5)?)?,
    };
    let settings = SolverSettings { params, beta: a.beta, ds: a.ds };
    let timing = if a.no_timing { Timing::Off } else { Timing::Measured };
    let betas: Vec<f64> = a.beta_schedule.iter().map(|m| m * a.beta).collect();
    let joint = joint_sweep(&tasks, &settings, &a.lambda, timing)?;
    let separate = separate_sweep(&tasks, &settings, &betas, timing)?;
    let prefix = a.out.to_string_lossy();
    write(Path::new(&format!("{prefix}_joint.csv")), write_csv(&joint))?;
    write(Path::new(&format!("{prefix}_separate.csv")), write_csv(&separate))?;
    println!("{params}");
    let show = |name: &str, pts: &[RdPoint]| {
        for p in pts {
            println!(
                "{name} lambda={} beta={} rate={:.4} distortion={:.2} payload_bits={} total_bits={}",
                p.lambda, p.beta, p.rate_bits_per_symbol, p.distortion, p.payload_bits, p.total_bits
            );
        }
    };
    show("joint", &joint);
    show("separate", &separate);
    Ok(())
}

fn gen_shapes(kind: ShapeKind, size: usize, frames: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    let masks = sequence(kind, size, size, frames, &mut ChaCha8Rng::seed_from_u64(seed))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (t, m) in masks.iter().enumerate() {
        write(&out.join(format!("{}_{t:03}.pgm", kind.name())), write_pgm(m))?;
    }
    println!("wrote {} frames to {}", masks.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { inputs, out } => train(&inputs, &out),
        Command::Corrupt { mask, delta, seed, out } => corrupt(&mask, delta, seed, &out),
        Command::Encode { input, tree, out } => encode_cmd(&input, &tree, &out),
        Command::Decode { input, tree, out } => decode_cmd(&input, &tree, &out),
        Command::Denoise(a) => denoise(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Aic { clean, noisy, params, iid_params } => aic_cmd(&clean, &noisy, &params, iid_params.as_deref()),
        Command::RdSweep(a) => sweep(&a),
        Command::GenShapes { kind, size, frames, seed, out } => gen_shapes(kind, size, frames, seed, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = std::env::var("JDCC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("JDCC_THREADS ignored: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
