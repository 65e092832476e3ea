//! Command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lewis::{self, BlockStructure};
use crate::linalg::read_csv_matrix;
use crate::norms::{apply_weights, read_weights, write_weights, Instance, SumNorm};
use crate::rng::SeedStream;
use crate::sampler::{mean_power_check, sample_mu, uniform_ball_walk, RoundedNorm, SampleBatch, SamplerConfig};
use crate::sparsify::{homotopy_sparsify, sparsify_once, sparsify_p_power, SparsifyConfig};
use crate::verify::{cut_function_of, empirical_eps, exact_cut_eps, Probes};
use crate::weights::{estimate_tau, tau_sample_count, to_probabilities, DEFAULT_C_W};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "normforge", version, about = "Sparsify sums of semi-norms")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw samples from exp(−N(x)^p̂).
    Sample(SampleArgs),
    /// Estimate importance masses τ and sampling probabilities ρ.
    Weights(WeightsArgs),
    /// Sparsify an instance.
    Sparsify(SparsifyArgs),
    /// Block Lewis weights with a certificate.
    Lewis(LewisArgs),
    /// Measure the approximation error of a reweighting.
    Verify(VerifyArgs),
    /// Timing and evaluation-count table.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    #[arg(long)]
    instance: PathBuf,
    /// Override the instance's power p.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Rounding {
    /// Lower rounding constant: r‖x‖₂ ≤ N(x) off the kernel.
    #[arg(long)]
    r: Option<f64>,
    /// Upper rounding constant: N(x) ≤ R‖x‖₂.
    #[arg(long = "R")]
    big_r: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    rounding: Rounding,
    /// Exponent of the target density; omit for uniform points on the unit ball.
    #[arg(long)]
    phat: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 4)]
    chains: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct WeightsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    rounding: Rounding,
    /// Samples from `sample --phat`; drawn afresh when omitted.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Number of samples to draw (default ⌈200·√ln n·ln(m+n)⌉).
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SparsifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    rounding: Rounding,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long = "c-m", default_value_t = 0.5)]
    c_m: f64,
    /// τ sample count per stage.
    #[arg(long)]
    count: Option<usize>,
    /// Sparsify once from these samples instead of running the homotopy.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Probe budget.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// Enumerate every cut (graph and hyperedge instances, n ≤ 20).
    #[arg(long)]
    exact_cuts: bool,
    /// Extra probes: samples written by `sample`.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct LewisArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    blocks: PathBuf,
    /// Overrides q from the blocks file.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Certificate probes.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    rounding: Rounding,
    /// Points per timing loop.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Also time the homotopy driver stage by stage.
    #[arg(long)]
    homotopy: bool,
}

/// Written next to every output file as `<out>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub timings: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, config: Value, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            config,
            seed,
            timings: BTreeMap::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn time(&mut self, label: &str, start: Instant) {
        self.timings.insert(label.into(), start.elapsed().as_secs_f64());
    }

    fn finish(self, primary: Option<&Path>) -> Result<()> {
        if let Some(p) = primary {
            let mut name = p.as_os_str().to_owned();
            name.push(".manifest.json");
            fs::write(PathBuf::from(name), serde_json::to_string_pretty(&self)?)?;
        }
        Ok(())
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code: 0 on success, 1 when a verification or certificate fails,
/// 2 on usage or input errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("NORMFORGE_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Sparsify(a) => cmd_sparsify(a),
        Command::Lewis(a) => cmd_lewis(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::StageFailure { .. } | Error::WeightSumBudget(_) => EXIT_FAIL,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn load_norm(c: &Common) -> Result<SumNorm> {
    let norm = Instance::load(&c.instance)?.to_norm()?;
    match c.p {
        Some(p) => norm.with_power(p),
        None => Ok(norm),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

/// Declared rounding constants, or 0.5·min and 2·max of N(x)/‖x‖₂ over
/// random directions when not given.
fn rounding_for(norm: &SumNorm, r: &Rounding, seed: u64) -> Result<(f64, f64)> {
    if let (Some(lo), Some(hi)) = (r.r, r.big_r) {
        return Ok((lo, hi));
    }
    let n = norm.dim();
    let mut rng = SeedStream::new(seed).child("cli-rounding", 0).rng();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..512 {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = norm.eval_unchecked(&x) / len;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let lo = r.r.unwrap_or(0.5 * lo);
    let hi = r.big_r.unwrap_or(2.0 * hi);
    if !(lo > 0.0) {
        return Err(Error::InvalidParameter("could not estimate r; pass --r and --R".into()));
    }
    log::info!("rounding constants r = {lo:e}, R = {hi:e}");
    Ok((lo, hi))
}

fn load_batch(path: &Path) -> Result<SampleBatch> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn cmd_sample(a: SampleArgs) -> Result<bool> {
    let start = Instant::now();
    let mut man = RunManifest::new("sample", serde_json::to_value(&a)?, a.common.seed);
    let norm = load_norm(&a.common)?;
    let (r, big_r) = rounding_for(&norm, &a.rounding, a.common.seed)?;
    let rounded = RoundedNorm::new(norm.clone(), r, big_r)?;
    let cfg = SamplerConfig {
        burn_in: a.burn_in,
        steps_per_sample: a.steps,
        chains: a.chains,
        ..SamplerConfig::default()
    }
    .with_seed(a.common.seed);
    let batch = match a.phat {
        Some(ph) => sample_mu(&rounded, ph, a.count, &cfg)?,
        None => uniform_ball_walk(&rounded, a.count, &cfg)?,
    };
    if batch.phat.is_some() {
        let m = mean_power_check(&batch, &norm)?;
        log::info!("mean N^p̂ = {:.4} (expected {:.4}, pass {})", m.mean, m.expected, m.pass);
    }
    emit(a.common.out.as_deref(), &batch)?;
    man.time("total", start);
    if let Some(o) = &a.common.out {
        man.artifacts.push(o.display().to_string());
    }
    man.finish(a.common.out.as_deref())?;
    Ok(true)
}

fn cmd_weights(a: WeightsArgs) -> Result<bool> {
    let start = Instant::now();
    let mut man = RunManifest::new("weights", serde_json::to_value(&a)?, a.common.seed);
    let norm = load_norm(&a.common)?;
    let phat = norm.phat();
    let batch = match &a.samples {
        Some(p) => load_batch(p)?,
        None => {
            let (r, big_r) = rounding_for(&norm, &a.rounding, a.common.seed)?;
            let k = a.count.unwrap_or_else(|| tau_sample_count(norm.dim(), norm.len(), DEFAULT_C_W));
            let cfg = SamplerConfig::default().with_seed(a.common.seed);
            sample_mu(&RoundedNorm::new(norm.clone(), r, big_r)?, phat, k, &cfg)?
        }
    };
    man.time("sample", start);
    let t = Instant::now();
    let tau = estimate_tau(&norm, &batch, norm.p())?;
    let rho = to_probabilities(&tau)?;
    man.time("tau", t);
    emit(a.common.out.as_deref(), &json!({ "k": tau.k, "p": tau.p, "tau": tau.tau, "rho": rho.rho }))?;
    if let Some(o) = &a.common.out {
        man.artifacts.push(o.display().to_string());
    }
    man.finish(a.common.out.as_deref())?;
    Ok(true)
}

fn cmd_sparsify(a: SparsifyArgs) -> Result<bool> {
    let start = Instant::now();
    let mut man = RunManifest::new("sparsify", serde_json::to_value(&a)?, a.common.seed);
    let norm = load_norm(&a.common)?;
    let mut cfg = SparsifyConfig {
        epsilon: a.epsilon,
        c_m: a.c_m,
        k_tau: a.count,
        ..SparsifyConfig::default()
    }
    .with_seed(a.common.seed);
    let res = match &a.samples {
        Some(p) => sparsify_once(&norm, &load_batch(p)?, &cfg)?,
        None if norm.p() <= 2.0 => {
            let (r, big_r) = rounding_for(&norm, &a.rounding, a.common.seed)?;
            homotopy_sparsify(&norm, r, big_r, &cfg)?
        }
        None => {
            cfg.rounding = None;
            sparsify_p_power(&norm, &cfg)?
        }
    };
    man.time("sparsify", start);
    log::info!(
        "M = {}, support {} of {}, {} stage(s)",
        res.draws,
        res.support.len(),
        norm.len(),
        res.stage_log.len()
    );
    match &a.common.out {
        Some(o) => {
            write_weights(o, &res.weights)?;
            man.artifacts.push(o.display().to_string());
        }
        None => emit(None, &res.weights)?,
    }
    if let Some(rep) = &a.report {
        fs::write(rep, serde_json::to_string_pretty(&res)?)?;
        man.artifacts.push(rep.display().to_string());
    }
    man.finish(a.common.out.as_deref().or(a.report.as_deref()))?;
    Ok(true)
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let start = Instant::now();
    let mut man = RunManifest::new("verify", serde_json::to_value(&a)?, a.common.seed);
    let norm = load_norm(&a.common)?;
    let w = read_weights(&a.weights, norm.len())?;
    let report = if a.exact_cuts {
        let f = cut_function_of(&norm)?;
        exact_cut_eps(&f, &w, a.epsilon)?
    } else {
        let sparse = apply_weights(&norm, &w)?;
        let mut probes = Probes::with_budget(a.count);
        if let Some(s) = &a.samples {
            probes.mu_samples = load_batch(s)?.points;
        }
        let mut rng = SeedStream::new(a.common.seed).child("verify", 0).rng();
        empirical_eps(&norm, &sparse, &probes, a.epsilon, &mut rng)?
    };
    man.time("verify", start);
    println!(
        "max_rel_err = {:e} (epsilon {}, {})",
        report.max_rel_err,
        a.epsilon,
        if report.pass { "pass" } else { "FAIL" }
    );
    let target = a.report.as_deref().or(a.common.out.as_deref());
    if let Some(p) = target {
        fs::write(p, serde_json::to_string_pretty(&report)?)?;
        man.artifacts.push(p.display().to_string());
    }
    man.finish(target)?;
    Ok(report.pass)
}

fn cmd_lewis(a: LewisArgs) -> Result<bool> {
    let start = Instant::now();
    let mut man = RunManifest::new("lewis", serde_json::to_value(&a)?, a.seed);
    let m = read_csv_matrix(fs::File::open(&a.matrix)?)?;
    let mut blocks = BlockStructure::load(&a.blocks, m.nrows())?;
    if let Some(q) = a.q {
        blocks.q = q;
        blocks.validate(m.nrows())?;
    }
    let res = lewis::block_lewis_fixed_point(&m, &blocks, a.tol, a.max_iter)?;
    man.time("fixed_point", start);
    let t = Instant::now();
    let mut rng = SeedStream::new(a.seed).child("certify", 0).rng();
    let cert = lewis::certify(&res, &m, &blocks, a.count, &mut rng)?;
    man.time("certify", t);
    let rho = if blocks.q == 2.0 {
        Some(lewis::sos_lp_probs(&m, &blocks, &res)?.rho)
    } else {
        None
    };
    let body = json!({
        "w": res.w,
        "alpha": res.alpha,
        "alpha_sum": res.alpha_sum(),
        "rho": rho,
        "iterations": res.iterations,
        "residual": res.residual,
        "converged": res.converged,
        "monotone_tail": res.monotone_tail,
        "certificate": cert,
    });
    emit(a.out.as_deref(), &body)?;
    if let Some(o) = &a.out {
        man.artifacts.push(o.display().to_string());
    }
    man.finish(a.out.as_deref())?;
    if !cert.pass {
        for f in cert.failures() {
            eprintln!("certificate check ({}) failed: excess {:e}", f.check, f.worst);
        }
    }
    Ok(cert.pass)
}

#[derive(Serialize)]
struct BenchRow {
    task: String,
    stage: String,
    items: u64,
    seconds: f64,
    rate: f64,
    evals: u64,
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let norm = load_norm(&a.common)?;
    if norm.is_empty() {
        return Err(Error::InvalidParameter("instance has no terms".into()));
    }
    let mut man = RunManifest::new("bench", serde_json::to_value(&a)?, a.common.seed);
    let n = norm.dim();
    let counter = norm.counter().clone();
    let mut rows = Vec::new();
    let mut row = |task: &str, stage: String, items: u64, secs: f64, evals: u64| {
        rows.push(BenchRow {
            task: task.into(),
            stage,
            items,
            seconds: secs,
            rate: if secs > 0.0 { items as f64 / secs } else { f64::INFINITY },
            evals,
        });
    };

    let mut rng = SeedStream::new(a.common.seed).child("bench", 0).rng();
    let points: Vec<Vec<f64>> = (0..a.count)
        .map(|_| (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
        .collect();
    counter.reset();
    let t = Instant::now();
    let mut acc = 0.0;
    for x in &points {
        acc += norm.eval_pow_unchecked(x);
    }
    std::hint::black_box(acc);
    row("eval", "-".into(), counter.get(), t.elapsed().as_secs_f64(), counter.get());

    let (r, big_r) = rounding_for(&norm, &a.rounding, a.common.seed)?;
    let rounded = RoundedNorm::new(norm.clone(), r, big_r)?;
    let cfg = SamplerConfig::default().with_seed(a.common.seed);
    counter.reset();
    let t = Instant::now();
    let batch = sample_mu(&rounded, norm.phat(), a.count, &cfg)?;
    row("walk", "-".into(), batch.len() as u64, t.elapsed().as_secs_f64(), counter.get());

    let scfg = SparsifyConfig::default().with_epsilon(a.epsilon).with_seed(a.common.seed);
    counter.reset();
    let t = Instant::now();
    let once = sparsify_once(&norm, &batch, &scfg)?;
    row("sparsify_once", "-".into(), once.draws as u64, t.elapsed().as_secs_f64(), counter.get());

    if a.homotopy && norm.p() <= 2.0 {
        counter.reset();
        let res = homotopy_sparsify(&norm, r, big_r, &scfg)?;
        for s in &res.stage_log {
            row("homotopy", s.stage.to_string(), s.samples as u64, s.wall_ms / 1e3, s.evals);
        }
    }

    let mut wtr: csv::Writer<Box<dyn std::io::Write>> = match &a.common.out {
        Some(p) => csv::Writer::from_writer(Box::new(fs::File::create(p)?)),
        None => csv::Writer::from_writer(Box::new(std::io::stdout())),
    };
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    if let Some(o) = &a.common.out {
        man.artifacts.push(o.display().to_string());
    }
    man.finish(a.common.out.as_deref())?;
    Ok(true)
}
