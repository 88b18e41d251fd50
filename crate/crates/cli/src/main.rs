//! Command-line driver for simulated maximum likelihood estimation of
//! discretely observed diffusions: simulate data, estimate log-likelihoods
//! by sequential Monte Carlo, locate the MLE with the sequential
//! kriging-based search, reproduce the replicated benchmark tables, and fit
//! the competing diffusion models to stock prices.
//!
//! Every subcommand is a pure function of its inputs and `--seed`, so
//! rerunning a command reproduces its output files bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sde_mle::harness::{
    bench_gcir, bench_ou, default_box, emit_contour, gcir_table_spec, ingest_prices,
    ou_table_spec, param_names, stock_analysis, BenchOutcome, ExperimentSpec, StockReport,
};
use sde_mle::models::{euler_subsample, model_by_name};
use sde_mle::rng::{stream, tag};
use sde_mle::skbo::{
    coverage_experiment, load_checkpoint, run_skbo_resumed, save_checkpoint, simulate_series,
    AcquisitionMode, LrtRegion, RaoRegion, SkboCheckpoint, SkboConfig, SkboResult, SkboTrace,
};
use sde_mle::smc::loglik_estimate;
use sde_mle::{ObservedSeries, Sampler, SdeModel, SmcConfig, ThetaBox};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "sde-mle",
    version,
    about = "Maximum likelihood for discretely observed diffusions via \
             Monte Carlo likelihood estimates and sequential kriging-based search"
)]
struct Cli {
    /// Master random seed; all randomness derives from it.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// JSON experiment description (bench commands); overrides built-ins.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for output files, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for parallel transition estimation (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observed series from a built-in model and write it as CSV
    Simulate(SimulateArgs),
    /// Estimate the log-likelihood of a data file at one parameter value
    Loglik(LoglikArgs),
    /// Search for the maximum likelihood estimate on a data file
    Skbo(SkboArgs),
    /// Replicated mean-reversion benchmark (exact MLE, search, space-filling)
    BenchOu(BenchArgs),
    /// Replicated benchmark for the nonlinear state-dependent diffusion
    BenchGcir(BenchArgs),
    /// Compare proportional- and power-diffusion fits on daily prices
    Stocks(StocksArgs),
    /// Evaluate the estimated log-likelihood over a two-parameter grid
    Contour(ContourArgs),
    /// Repeated-sampling coverage of the likelihood-ratio region
    Coverage(CoverageArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SamplerArg {
    /// forward Euler imputation
    Pedersen,
    /// Brownian bridge tied down at the next observation
    Bridge,
    /// Brownian bridge with drift- and diffusion-aware conditioning
    ModifiedBridge,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Sampler {
        match s {
            SamplerArg::Pedersen => Sampler::Pedersen,
            SamplerArg::Bridge => Sampler::BrownianBridge,
            SamplerArg::ModifiedBridge => Sampler::ModifiedBrownianBridge,
        }
    }
}

/// Monte Carlo likelihood settings shared by the estimating subcommands.
#[derive(Args)]
struct SmcArgs {
    /// Imputed subintervals per observation interval.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Importance-sample paths per transition (default: K squared).
    #[arg(long)]
    m: Option<usize>,

    /// Importance sampler for the imputed path.
    #[arg(long, value_enum, default_value_t = SamplerArg::ModifiedBridge)]
    sampler: SamplerArg,
}

impl SmcArgs {
    fn config(&self, seed: u64) -> Result<SmcConfig> {
        let sampler = Sampler::from(self.sampler);
        let config = match self.m {
            Some(m) => SmcConfig::new(self.k, m, sampler, seed),
            None => SmcConfig::with_default_m(self.k, sampler, seed),
        }?;
        Ok(config)
    }
}

/// Search-loop sizing flags; unset fields keep the per-model defaults.
#[derive(Args)]
struct SearchArgs {
    /// Initial space-filling design size (default: 10 per dimension).
    #[arg(long)]
    n_init: Option<usize>,

    /// Total evaluation budget (default: 25 per dimension).
    #[arg(long)]
    max_points: Option<usize>,

    /// Acquisition candidates per iteration (default: 2000 per dimension).
    #[arg(long)]
    candidate_pool: Option<usize>,

    /// Polish the acquisition maximizer by projected gradient ascent.
    #[arg(long)]
    polish: bool,

    /// Search box as comma-separated lo:hi ranges, e.g. "0:4,-6:-0.5".
    #[arg(long = "box", value_name = "RANGES")]
    theta_box: Option<String>,
}

impl SearchArgs {
    fn config(&self, model: &SdeModel, smc: SmcConfig, seed: u64) -> Result<SkboConfig> {
        let theta_box = resolve_box(self.theta_box.as_deref(), model)?;
        let mut config = SkboConfig::for_box(theta_box, smc, seed);
        self.apply(&mut config);
        Ok(config)
    }

    fn apply(&self, config: &mut SkboConfig) {
        if let Some(n) = self.n_init {
            config.n_init = n;
        }
        if let Some(n) = self.max_points {
            config.max_points = n;
        }
        if let Some(n) = self.candidate_pool {
            config.candidate_pool = n;
        }
        if self.polish {
            config.acquisition_mode = AcquisitionMode::LocalPolish;
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model name: ou, gcir, gbm, or gen-gbm.
    #[arg(long)]
    model: String,

    /// Generating parameters, natural scale, comma separated.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    theta: String,

    /// Observations to record.
    #[arg(long, default_value_t = 1000)]
    n_obs: usize,

    /// Observation spacing.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,

    /// Euler substeps per observation; omit for the exact law when one
    /// exists (128 substeps otherwise).
    #[arg(long)]
    stride: Option<usize>,

    /// Simulation start (default: stationary mean, or 1 clamped to the
    /// state space).
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
}

#[derive(Args)]
struct LoglikArgs {
    #[arg(long)]
    model: String,

    /// Evaluation point, natural scale, comma separated.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    theta: String,

    /// Series CSV with columns t,x.
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    smc: SmcArgs,
}

#[derive(Args)]
struct SkboArgs {
    #[arg(long)]
    model: String,

    /// Series CSV with columns t,x.
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    smc: SmcArgs,

    #[command(flatten)]
    search: SearchArgs,

    /// Confidence-region level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Region grid nodes per axis.
    #[arg(long, default_value_t = 60)]
    resolution: usize,

    /// Write a resumable checkpoint here after the run.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,

    /// Resume from a checkpoint, replaying its recorded evaluations.
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Replicates (default: 100 mean-reversion, 25 nonlinear).
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct StocksArgs {
    /// Price CSV with Date and Adj Close columns.
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    smc: SmcArgs,

    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct ContourArgs {
    #[arg(long)]
    model: String,

    /// Series CSV with columns t,x.
    #[arg(long)]
    data: PathBuf,

    /// Grid nodes per axis.
    #[arg(long, default_value_t = 40)]
    resolution: usize,

    #[command(flatten)]
    smc: SmcArgs,

    /// Grid box as comma-separated lo:hi ranges (default: model box).
    #[arg(long = "box", value_name = "RANGES")]
    theta_box: Option<String>,

    /// Overlay the trace recorded in this checkpoint file.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long, default_value = "ou")]
    model: String,

    /// Generating parameters, natural scale, comma separated.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true, default_value = "2,-3")]
    theta: String,

    #[arg(long, default_value_t = 200)]
    reps: usize,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, default_value_t = 1000)]
    n_obs: usize,

    #[arg(long, default_value_t = 0.1)]
    dt: f64,

    #[command(flatten)]
    smc: SmcArgs,

    #[command(flatten)]
    search: SearchArgs,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, seed, &out_dir(&cli, None)?),
        Command::Loglik(args) => cmd_loglik(args, seed, &out_dir(&cli, None)?),
        Command::Skbo(args) => cmd_skbo(args, seed, &out_dir(&cli, None)?),
        Command::BenchOu(args) => cmd_bench(&cli, args, Bench::Ou),
        Command::BenchGcir(args) => cmd_bench(&cli, args, Bench::Gcir),
        Command::Stocks(args) => cmd_stocks(args, seed, &out_dir(&cli, None)?),
        Command::Contour(args) => cmd_contour(args, seed, &out_dir(&cli, None)?),
        Command::Coverage(args) => cmd_coverage(args, seed, &out_dir(&cli, None)?),
    }
}

/// `--out`, else the spec's output directory, else the working directory.
fn out_dir(cli: &Cli, spec_out: Option<&Path>) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| spec_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn resolve_model(name: &str) -> Result<SdeModel> {
    model_by_name(name)
        .with_context(|| format!("unknown model {name:?}; expected ou, gcir, gbm, or gen-gbm"))
}

fn parse_theta(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad parameter value {s:?}"))
        })
        .collect()
}

/// Parse "lo:hi,lo:hi,..." into a box.
fn parse_box(ranges: &str) -> Result<ThetaBox> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for range in ranges.split(',') {
        let (lo, hi) = range
            .split_once(':')
            .with_context(|| format!("bad range {range:?}; expected lo:hi"))?;
        lower.push(lo.trim().parse::<f64>().with_context(|| format!("bad bound {lo:?}"))?);
        upper.push(hi.trim().parse::<f64>().with_context(|| format!("bad bound {hi:?}"))?);
    }
    Ok(ThetaBox::new(lower, upper)?)
}

fn resolve_box(ranges: Option<&str>, model: &SdeModel) -> Result<ThetaBox> {
    let theta_box = match ranges {
        Some(s) => parse_box(s)?,
        None => default_box(model.name)
            .with_context(|| format!("model {:?} has no default search box", model.name))?,
    };
    if theta_box.dim() != model.p {
        bail!(
            "search box has {} dimensions, model {:?} has {}",
            theta_box.dim(),
            model.name,
            model.p
        );
    }
    Ok(theta_box)
}

/// Series CSV: optional header line, then rows `t,x`.
fn load_series(path: &Path) -> Result<ObservedSeries> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.chars().any(|c| c.is_ascii_alphabetic())) {
            continue;
        }
        let (t, x) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected t,x", path.display(), i + 1))?;
        times.push(t.trim().parse::<f64>().with_context(|| {
            format!("{}:{}: bad time {t:?}", path.display(), i + 1)
        })?);
        values.push(x.trim().parse::<f64>().with_context(|| {
            format!("{}:{}: bad value {x:?}", path.display(), i + 1)
        })?);
    }
    Ok(ObservedSeries::new(times, values)?)
}

fn write_series(path: &Path, series: &ObservedSeries) -> Result<()> {
    let mut text = String::from("t,x\n");
    for (t, x) in series.times().iter().zip(series.values()) {
        text.push_str(&format!("{t},{x}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(args: &SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let natural = parse_theta(&args.theta)?;
    let theta = model.search_point(&natural)?;
    let mut rng = stream(seed, &[tag::SIMULATE, 0]);
    let series = match args.stride {
        None => simulate_series(&model, &theta, args.n_obs, args.dt, &mut rng)?,
        Some(stride) => {
            if stride == 0 {
                bail!("stride must be at least 1");
            }
            let x0 = args.x0.unwrap_or_else(|| model.clamp_state(1.0));
            euler_subsample(
                &model,
                &theta,
                x0,
                args.dt / stride as f64,
                args.n_obs * stride,
                stride,
                &mut rng,
            )?
        }
    };
    let path = out.join("series.csv");
    write_series(&path, &series)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "simulate",
            "model": model.name,
            "theta": natural,
            "n_obs": args.n_obs,
            "dt": args.dt,
            "stride": args.stride,
            "seed": seed,
            "series": path,
        }),
    )?;
    println!(
        "wrote {} ({} observations of {})",
        path.display(),
        series.values().len(),
        model.name
    );
    Ok(())
}

fn cmd_loglik(args: &LoglikArgs, seed: u64, out: &Path) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let natural = parse_theta(&args.theta)?;
    let theta = model.search_point(&natural)?;
    let series = load_series(&args.data)?;
    let smc = args.smc.config(seed)?;
    let mut rng = stream(seed, &[tag::SMC, 0]);
    let est = loglik_estimate(&model, &theta, &series, &smc, &mut rng)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "loglik",
            "model": model.name,
            "theta": natural,
            "n_transitions": series.n_transitions(),
            "k": smc.k,
            "m": smc.m,
            "sampler": smc.sampler,
            "seed": seed,
            "loglik": est.value,
            "mc_se": est.mc_se,
            "floored": est.floored,
        }),
    )?;
    println!(
        "loglik {:.6} (mc se {:.6}{}) over {} transitions",
        est.value,
        est.mc_se,
        if est.floored { ", floored" } else { "" },
        series.n_transitions()
    );
    Ok(())
}

/// Trace rows in evaluation order, coordinates in search scale.
fn write_trace_csv(path: &Path, trace: &SkboTrace, p: usize) -> Result<()> {
    let mut text = String::from("index");
    for i in 0..p {
        text.push_str(&format!(",theta{i}"));
    }
    text.push_str(",y,mc_se,floored,eval_failed,ei,eta_at_hat,elapsed_s\n");
    for e in &trace.entries {
        text.push_str(&format!("{}", e.index));
        for c in e.theta.coords() {
            text.push_str(&format!(",{c}"));
        }
        let ei = e.ei.map(|v| v.to_string()).unwrap_or_default();
        let eta = e.eta_at_hat.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            e.y, e.mc_se, e.floored, e.eval_failed, ei, eta, e.elapsed_s
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Grid mask rows `theta0,...,inside`, last axis fastest, matching the
/// region's flat mask layout.
fn write_region_mask(path: &Path, region: &LrtRegion) -> Result<()> {
    let p = region.axes.len();
    let r = region.resolution();
    let mut text = String::new();
    for i in 0..p {
        text.push_str(&format!("theta{i},"));
    }
    text.push_str("inside\n");
    for (flat, &inside) in region.mask.iter().enumerate() {
        for (a, axis) in region.axes.iter().enumerate() {
            let idx = (flat / r.pow((p - 1 - a) as u32)) % r;
            text.push_str(&format!("{},", axis[idx]));
        }
        text.push_str(if inside { "1\n" } else { "0\n" });
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_region_contour(path: &Path, region: &LrtRegion) -> Result<()> {
    let mut text = String::from("x0,y0,x1,y1\n");
    for [[x0, y0], [x1, y1]] in &region.contour {
        text.push_str(&format!("{x0},{y0},{x1},{y1}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn rao_json(rao: &RaoRegion) -> serde_json::Value {
    let p = rao.center.dim();
    let matrix: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| rao.matrix[(i, j)]).collect())
        .collect();
    json!({
        "center": rao.center.coords(),
        "matrix": matrix,
        "radius2": rao.radius2,
        "projected": rao.projected,
        "on_boundary": rao.on_boundary,
    })
}

fn cmd_skbo(args: &SkboArgs, seed: u64, out: &Path) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let series = load_series(&args.data)?;
    let smc = args.smc.config(seed)?;
    // A checkpoint carries the full configuration of the original run;
    // sizing flags still apply so a resume can extend the budget.
    let (mut config, prior) = match &args.resume {
        Some(path) => {
            let cp = load_checkpoint(path)?;
            (cp.config, Some(cp.trace))
        }
        None => (args.search.config(&model, smc, seed)?, None),
    };
    if args.resume.is_some() {
        args.search.apply(&mut config);
    }

    let result = run_skbo_resumed(&model, &series, &config, prior.as_ref())?;
    let natural = model.natural(&result.theta_hat)?;

    write_trace_csv(&out.join("trace.csv"), &result.trace, model.p)?;
    let mut outputs = vec!["trace.csv".to_string()];

    let region = if model.p <= 3 {
        Some(result.lrt_region(args.alpha, args.resolution)?)
    } else {
        None
    };
    if let Some(region) = &region {
        write_region_mask(&out.join("region_mask.csv"), region)?;
        outputs.push("region_mask.csv".into());
        if model.p == 2 {
            write_region_contour(&out.join("region_contour.csv"), region)?;
            outputs.push("region_contour.csv".into());
        }
    }
    let rao = result.rao_region(args.alpha).ok();

    if let Some(path) = &args.checkpoint {
        save_checkpoint(
            path,
            &SkboCheckpoint {
                config: config.clone(),
                trace: result.trace.clone(),
                design: None,
                hyper: None,
            },
        )?;
        println!("checkpoint {}", path.display());
    }

    let floored = result.trace.entries.iter().filter(|e| e.floored).count();
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "skbo",
            "model": model.name,
            "n_transitions": series.n_transitions(),
            "k": config.smc.k,
            "m": config.smc.m,
            "sampler": config.smc.sampler,
            "seed": config.seed,
            "param_names": param_names(model.name),
            "theta_hat": result.theta_hat.coords(),
            "theta_hat_natural": natural,
            "eta_at_hat": result.eta_at_hat,
            "stop_reason": result.stop_reason,
            "evaluations": result.trace.entries.len(),
            "added": result.trace.entries.len().saturating_sub(config.n_init),
            "floored_evaluations": floored,
            "alpha": args.alpha,
            "lrt_threshold": region.as_ref().map(|r| r.threshold),
            "lrt_fraction_inside": region.as_ref().map(|r| r.fraction_inside()),
            "rao": rao.as_ref().map(rao_json),
        }),
    )?;

    println!("{}", describe_estimate(&model, &result, &natural));
    println!("wrote {} in {}", outputs.join(", "), out.display());
    Ok(())
}

fn describe_estimate(model: &SdeModel, result: &SkboResult, natural: &[f64]) -> String {
    let names = param_names(model.name);
    let pairs: Vec<String> = names
        .iter()
        .zip(natural)
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect();
    format!(
        "estimate {} (kriging mean {:.3}) after {} evaluations, stopped on {:?}",
        pairs.join(" "),
        result.eta_at_hat,
        result.trace.entries.len(),
        result.stop_reason
    )
}

enum Bench {
    Ou,
    Gcir,
}

fn cmd_bench(cli: &Cli, args: &BenchArgs, which: Bench) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let mut spec: ExperimentSpec = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let mut spec: ExperimentSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            spec
        }
        None => match which {
            Bench::Ou => ou_table_spec(args.reps.unwrap_or(100), seed),
            Bench::Gcir => gcir_table_spec(args.reps.unwrap_or(25), seed),
        },
    };
    if let Some(reps) = args.reps {
        spec.n_reps = reps;
    }
    spec.validate()?;
    let out = out_dir(cli, spec.out_dir.as_deref())?;

    let outcome: BenchOutcome = match which {
        Bench::Ou => bench_ou(&spec)?,
        Bench::Gcir => bench_gcir(&spec)?,
    };

    let table_path = out.join("result_table.csv");
    fs::write(&table_path, outcome.table.to_csv())
        .with_context(|| format!("writing {}", table_path.display()))?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": match which { Bench::Ou => "bench-ou", Bench::Gcir => "bench-gcir" },
            "spec": spec,
            "failures": outcome.failures,
            "table": outcome.table,
            "replicates": outcome.replicates,
        }),
    )?;

    println!("{}", outcome.table.format_2dp());
    if outcome.failures > 0 {
        println!("failed replicates: {}", outcome.failures);
    }
    println!("wrote {}", table_path.display());
    Ok(())
}

fn cmd_stocks(args: &StocksArgs, seed: u64, out: &Path) -> Result<()> {
    let prices = ingest_prices(&args.data)?;
    let model = resolve_model("gen-gbm")?;
    let smc = args.smc.config(seed)?;
    let config = args.search.config(&model, smc, seed)?;
    let report = stock_analysis(&prices, &config)?;

    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "stocks",
            "data": args.data,
            "seed": seed,
            "report": report,
        }),
    )?;
    print_stock_report(&report);
    Ok(())
}

fn print_stock_report(report: &StockReport) {
    println!("{} observations", report.n_obs);
    println!("{:<8} {:>2} {:>12} {:>12}  parameters", "model", "k", "loglik", "aic");
    let row = |model: &str, k: usize, loglik: f64, aic: f64, theta: &[f64]| {
        let params: Vec<String> = theta.iter().map(|v| format!("{v:.5}")).collect();
        println!(
            "{model:<8} {k:>2} {loglik:>12.2} {aic:>12.2}  ({})",
            params.join(", ")
        );
    };
    row(
        &report.gbm.model,
        report.gbm.k,
        report.gbm.loglik,
        report.gbm.aic,
        &report.gbm.theta,
    );
    match &report.gen {
        Some(gen) => {
            row(&gen.model, gen.k, gen.loglik, gen.aic, &gen.theta);
            println!(
                "LRT statistic {:.3} (p = {:.4}), {} added evaluations, loglik se {:.3}",
                report.lrt_stat.unwrap_or(f64::NAN),
                report.lrt_p_value.unwrap_or(f64::NAN),
                report.gen_added.unwrap_or(0),
                report.gen_loglik_se.unwrap_or(f64::NAN),
            );
        }
        None => println!("power-diffusion search failed; proportional fit only"),
    }
}

fn cmd_contour(args: &ContourArgs, seed: u64, out: &Path) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let series = load_series(&args.data)?;
    let theta_box = resolve_box(args.theta_box.as_deref(), &model)?;
    let smc = args.smc.config(seed)?;
    let trace = match &args.trace {
        Some(path) => Some(load_checkpoint(path)?.trace),
        None => None,
    };
    let path = out.join("contour.csv");
    let rows = emit_contour(
        &model,
        &series,
        &theta_box,
        &smc,
        args.resolution,
        trace.as_ref(),
        &path,
    )?;
    println!("wrote {} ({rows} data rows)", path.display());
    Ok(())
}

fn cmd_coverage(args: &CoverageArgs, seed: u64, out: &Path) -> Result<()> {
    let model = resolve_model(&args.model)?;
    let natural = parse_theta(&args.theta)?;
    let theta_true = model.search_point(&natural)?;
    let smc = args.smc.config(seed)?;
    let config = args.search.config(&model, smc, seed)?;
    let outcome = coverage_experiment(
        &model,
        &theta_true,
        args.n_obs,
        args.dt,
        args.reps,
        &config,
        args.alpha,
    )?;

    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "coverage",
            "model": model.name,
            "theta_true": natural,
            "n_obs": args.n_obs,
            "dt": args.dt,
            "n_reps": args.reps,
            "alpha": args.alpha,
            "k": config.smc.k,
            "m": config.smc.m,
            "seed": seed,
            "outcome": outcome,
        }),
    )?;
    println!(
        "coverage {:.3} (se {:.3}) from {} replicates, {} failed",
        outcome.coverage, outcome.se, outcome.n_effective, outcome.failures
    );
    Ok(())
}
