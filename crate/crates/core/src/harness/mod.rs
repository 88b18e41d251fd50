//! Experiment harness: replicated benchmark runs with exact, sequential,
//! and space-filling estimators, aggregated into bootstrap-qualified
//! result tables, plus the price-data application and plot-data emission.
//!
//! Replicates are driven by a master seed: replicate r simulates from
//! stream (seed, SIMULATE, r) and searches with seeds derived from
//! (seed, REPLICATE, r), so each method and noise setting sees the same
//! simulated series and whole tables reproduce bitwise.

mod app;

pub use app::{
    emit_contour, ingest_prices, stock_analysis, ModelRow, PriceSeries, StockReport, TRADING_DT,
};

use crate::gp::GpState;
use crate::models::{
    euler_subsample, gcir, model_by_name, ou_exact_loglik, ou_exact_mle, ou_simulate_exact,
    ModelError, ObservedSeries, SdeModel, ThetaBox, ThetaPoint,
};
use crate::rng::{derive_path, stream, tag};
use crate::skbo::{
    incumbent, latin_hypercube, replicate_seed, run_skbo, AcquisitionMode, SkboConfig, SkboError,
};
use crate::smc::{loglik_estimate, Sampler, SmcConfig, SmcError, LOG_FLOOR};
use crate::util::{chi2_quantile, ksum, mean, sample_sd};
use crate::gp::{fit_posterior_mode, DesignSet, GpPrior};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    BadSpec(String),
    #[error("price file row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("price file: missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("contour emission needs a two-parameter model, got {0}")]
    NotTwoParameter(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error(transparent)]
    Skbo(#[from] SkboError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Skbo,
    Naive,
    Exact,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Skbo => "skbo",
            Method::Naive => "naive",
            Method::Exact => "exact",
        })
    }
}

/// One noise setting for the likelihood estimator; the particle count
/// defaults to the square of the imputation count when omitted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmcGridEntry {
    pub k: usize,
    #[serde(default)]
    pub m: Option<usize>,
}

impl SmcGridEntry {
    pub fn to_config(self, sampler: Sampler, seed: u64) -> Result<SmcConfig, SmcError> {
        match self.m {
            Some(m) => SmcConfig::new(self.k, m, sampler, seed),
            None => SmcConfig::with_default_m(self.k, sampler, seed),
        }
    }

    pub fn label(&self) -> String {
        format!("K={} M={}", self.k, self.m.unwrap_or(self.k * self.k))
    }
}

/// Search-loop sizing shared by every replicate; the box and noise
/// setting are filled in per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkboTemplate {
    pub n_init: usize,
    pub max_points: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_patience")]
    pub stop_patience: usize,
    #[serde(default)]
    pub acquisition_mode: Option<AcquisitionMode>,
    #[serde(default)]
    pub candidate_pool: Option<usize>,
}

fn default_stop_tol() -> f64 {
    0.01
}

fn default_patience() -> usize {
    5
}

impl SkboTemplate {
    pub fn instantiate(&self, theta_box: ThetaBox, smc: SmcConfig, seed: u64) -> SkboConfig {
        let p = theta_box.dim();
        SkboConfig {
            theta_box,
            n_init: self.n_init,
            max_points: self.max_points,
            stop_tol: self.stop_tol,
            stop_patience: self.stop_patience,
            acquisition_mode: self.acquisition_mode.unwrap_or(AcquisitionMode::CandidateGrid),
            candidate_pool: self.candidate_pool.unwrap_or(2000 * p),
            smc,
            seed,
        }
    }
}

/// Full description of one replicated benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub model: String,
    /// natural-scale generating parameters (simulation experiments)
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
    /// observed data instead of simulation (price experiments)
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    pub n_reps: usize,
    /// observations per simulated series
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    /// observation spacing
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Euler substeps per observation; absent means exact simulation
    #[serde(default)]
    pub sim_stride: Option<usize>,
    /// simulation start for Euler paths
    #[serde(default)]
    pub x0: Option<f64>,
    pub smc_grid: Vec<SmcGridEntry>,
    pub methods: Vec<Method>,
    pub skbo: SkboTemplate,
    /// search box; defaults per model when absent
    #[serde(default)]
    pub theta_box: Option<ThetaBox>,
    /// space-filling budget for the naive method; defaults to 25p
    #[serde(default)]
    pub naive_points: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_n_obs() -> usize {
    1000
}

fn default_dt() -> f64 {
    0.1
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<SdeModel, HarnessError> {
        let model = model_by_name(&self.model)
            .ok_or_else(|| HarnessError::BadSpec(format!("unknown model {:?}", self.model)))?;
        if self.n_reps == 0 {
            return Err(HarnessError::BadSpec("n_reps must be at least 1".into()));
        }
        if self.smc_grid.is_empty() && self.methods.iter().any(|m| *m != Method::Exact) {
            return Err(HarnessError::BadSpec(
                "smc_grid must be nonempty for estimated likelihoods".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::BadSpec("methods must be nonempty".into()));
        }
        if self.methods.contains(&Method::Exact) && model.exact_transition.is_none() {
            return Err(HarnessError::BadSpec(format!(
                "model {:?} has no exact transition law for method \"exact\"",
                self.model
            )));
        }
        if let Some(tt) = &self.theta_true {
            // The natural-scale point must map into the search scale.
            model.search_point(tt)?;
        }
        if let Some(b) = &self.theta_box {
            if b.dim() != model.p {
                return Err(HarnessError::BadSpec(format!(
                    "theta_box has {} dimensions, model {:?} has {}",
                    b.dim(),
                    self.model,
                    model.p
                )));
            }
        }
        Ok(model)
    }

    fn resolved_box(&self, model: &SdeModel) -> Result<ThetaBox, HarnessError> {
        match &self.theta_box {
            Some(b) => Ok(b.clone()),
            None => default_box(model.name).ok_or_else(|| {
                HarnessError::BadSpec(format!("no default search box for model {:?}", model.name))
            }),
        }
    }
}

/// Built-in search boxes covering the generating values with wide margin.
pub fn default_box(model_name: &str) -> Option<ThetaBox> {
    let (lo, hi) = match model_name {
        "ou" => (vec![0.0, -6.0], vec![4.0, -0.5]),
        "gcir" => (vec![-1.0, -2.0, -2.0, -3.0], vec![2.0, 1.0, 2.0, 3.0]),
        "gen-gbm" | "gen_gbm" | "gengbm" => (vec![-1.0, -3.0, -3.0], vec![1.0, 2.0, 5.0]),
        _ => return None,
    };
    ThetaBox::new(lo, hi).ok()
}

/// Space-filling baseline: evaluate the likelihood on one Latin-hypercube
/// design, fit the surrogate once, and (as in the sequential method) take
/// the design point with the highest kriging mean. Designs smaller than
/// three points skip the surrogate and use the raw responses.
pub struct NaiveFit {
    pub theta_hat: ThetaPoint,
    pub eta_at_hat: f64,
    pub n_evals: usize,
    pub gp: Option<GpState>,
}

pub fn naive_baseline<R: Rng + ?Sized>(
    model: &SdeModel,
    series: &ObservedSeries,
    theta_box: &ThetaBox,
    n_points: usize,
    smc: &SmcConfig,
    rng: &mut R,
) -> Result<NaiveFit, HarnessError> {
    if n_points == 0 {
        return Err(HarnessError::BadSpec("naive design needs points".into()));
    }
    let points = latin_hypercube(theta_box, n_points, rng);
    let floor_y = LOG_FLOOR * series.n_transitions() as f64;
    let mut ys = Vec::with_capacity(n_points);
    let mut ses = Vec::with_capacity(n_points);
    for theta in &points {
        match loglik_estimate(model, theta, series, smc, rng) {
            Ok(est) => {
                ys.push(est.value);
                ses.push(est.mc_se);
            }
            Err(_) => {
                ys.push(floor_y);
                ses.push(0.0);
            }
        }
    }
    if n_points < 3 {
        let (i, _) = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("responses are finite"))
            .expect("design is nonempty");
        return Ok(NaiveFit {
            theta_hat: points[i].clone(),
            eta_at_hat: ys[i],
            n_evals: n_points,
            gp: None,
        });
    }
    let design = DesignSet::new(theta_box.clone(), points, ys, ses).map_err(SkboError::from)?;
    let state =
        fit_posterior_mode(&design, GpPrior::RangeOverScale, None).map_err(SkboError::from)?;
    let (i, eta) = incumbent(&state);
    Ok(NaiveFit {
        theta_hat: state.design().points()[i].clone(),
        eta_at_hat: eta,
        n_evals: n_points,
        gp: Some(state),
    })
}

/// One fitted estimate inside a replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    /// noise setting label, or "exact"
    pub setting: String,
    /// natural-scale estimate
    pub theta: Vec<f64>,
    pub evals: usize,
    /// points beyond the initial design (sequential method only)
    pub added: usize,
    pub time_s: f64,
    /// truth inside the exact-likelihood ratio region (exact method only)
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub estimates: Vec<EstimateRecord>,
}

/// Per-parameter summary statistics with bootstrap standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamStats {
    pub name: String,
    pub bias: f64,
    pub bias_se: f64,
    pub sd: f64,
    pub sd_se: f64,
    pub rmse: f64,
    pub rmse_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub setting: String,
    pub n_replicates: usize,
    pub per_param: Vec<ParamStats>,
    pub avg_added: f64,
    pub avg_evals: f64,
    pub avg_time_s: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultTable {
    pub experiment: String,
    pub param_names: Vec<String>,
    pub rows: Vec<MethodSummary>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Natural-scale parameter names per model.
pub fn param_names(model_name: &str) -> Vec<String> {
    let names: &[&str] = match model_name {
        "ou" => &["theta0", "theta1"],
        "gcir" => &["theta0", "theta1", "gamma", "psi"],
        "gbm" => &["theta0", "gamma"],
        "gen-gbm" | "gen_gbm" | "gengbm" => &["theta0", "gamma", "psi"],
        _ => return Vec::new(),
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn rmse_of(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Standard error of `stat` under resampling replicates with replacement.
fn bootstrap_se<R: Rng + ?Sized>(
    values: &[f64],
    stat: impl Fn(&[f64]) -> f64,
    rng: &mut R,
) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = Vec::with_capacity(n);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        resample.clear();
        for _ in 0..n {
            resample.push(values[rng.random_range(0..n)]);
        }
        stats.push(stat(&resample));
    }
    sample_sd(&stats)
}

/// Group replicate estimates by (method, setting) and summarize each
/// group against the generating parameters.
pub fn aggregate_table(
    experiment: &str,
    model_name: &str,
    theta_true: &[f64],
    records: &[ReplicateRecord],
    seed: u64,
) -> ResultTable {
    let names = param_names(model_name);
    let mut keys: Vec<(Method, String)> = Vec::new();
    for r in records {
        for e in &r.estimates {
            let key = (e.method, e.setting.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }

    let mut rows = Vec::with_capacity(keys.len());
    for (gi, (method, setting)) in keys.iter().enumerate() {
        let group: Vec<&EstimateRecord> = records
            .iter()
            .flat_map(|r| &r.estimates)
            .filter(|e| e.method == *method && e.setting == *setting)
            .collect();
        let n = group.len();
        let mut rng = stream(seed, &[tag::BOOTSTRAP, gi as u64]);
        let per_param = (0..theta_true.len())
            .map(|j| {
                let truth = theta_true[j];
                let ests: Vec<f64> = group.iter().map(|e| e.theta[j]).collect();
                let errs: Vec<f64> = ests.iter().map(|x| x - truth).collect();
                ParamStats {
                    name: names.get(j).cloned().unwrap_or_else(|| format!("theta{j}")),
                    bias: mean(&errs),
                    bias_se: bootstrap_se(&errs, mean, &mut rng),
                    sd: sample_sd(&ests),
                    sd_se: bootstrap_se(&ests, sample_sd, &mut rng),
                    rmse: rmse_of(&errs),
                    rmse_se: bootstrap_se(&errs, rmse_of, &mut rng),
                }
            })
            .collect();
        let covered: Vec<f64> = group
            .iter()
            .filter_map(|e| e.covered.map(|c| c as u8 as f64))
            .collect();
        rows.push(MethodSummary {
            method: *method,
            setting: setting.clone(),
            n_replicates: n,
            per_param,
            avg_added: mean(&group.iter().map(|e| e.added as f64).collect::<Vec<_>>()),
            avg_evals: mean(&group.iter().map(|e| e.evals as f64).collect::<Vec<_>>()),
            avg_time_s: mean(&group.iter().map(|e| e.time_s).collect::<Vec<_>>()),
            coverage: if covered.is_empty() {
                None
            } else {
                Some(mean(&covered))
            },
        });
    }
    ResultTable {
        experiment: experiment.to_string(),
        param_names: names,
        rows,
    }
}

impl ResultTable {
    /// Machine-readable long form, one row per (method, setting, param).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,setting,param,bias,bias_se,sd,sd_se,rmse,rmse_se,avg_added,avg_evals,avg_time_s,coverage,n\n",
        );
        for row in &self.rows {
            for p in &row.per_param {
                let coverage = row
                    .coverage
                    .map(|c| format!("{c:.3}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{:.1},{:.1},{:.3},{},{}",
                    row.method,
                    row.setting,
                    p.name,
                    p.bias,
                    p.bias_se,
                    p.sd,
                    p.sd_se,
                    p.rmse,
                    p.rmse_se,
                    row.avg_added,
                    row.avg_evals,
                    row.avg_time_s,
                    coverage,
                    row.n_replicates
                );
            }
        }
        out
    }

    /// Human-readable table, two decimals throughout.
    pub fn format_2dp(&self) -> String {
        let mut out = format!("experiment: {}\n", self.experiment);
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{} [{}]  n={}  avg added {:.1}  avg evals {:.1}  avg time {:.2}s{}",
                row.method,
                row.setting,
                row.n_replicates,
                row.avg_added,
                row.avg_evals,
                row.avg_time_s,
                row.coverage
                    .map(|c| format!("  coverage {:.1}%", 100.0 * c))
                    .unwrap_or_default()
            );
            for p in &row.per_param {
                let _ = writeln!(
                    out,
                    "  {:<8} bias {:>6.2} ({:.2})  sd {:>5.2} ({:.2})  rmse {:>5.2} ({:.2})",
                    p.name, p.bias, p.bias_se, p.sd, p.sd_se, p.rmse, p.rmse_se
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub table: ResultTable,
    pub replicates: Vec<ReplicateRecord>,
    /// replicates dropped entirely (simulation or every method failed)
    pub failures: usize,
}

/// Run the estimators configured in `spec` on one simulated series, using
/// seeds derived from `rep_seed`.
fn run_methods(
    spec: &ExperimentSpec,
    model: &SdeModel,
    theta_box: &ThetaBox,
    series: &ObservedSeries,
    theta_true: &[f64],
    rep_seed: u64,
) -> Result<Vec<EstimateRecord>, HarnessError> {
    let mut estimates = Vec::new();
    for method in &spec.methods {
        match method {
            Method::Exact => {
                let clock = Instant::now();
                let fit = ou_exact_mle(series)?;
                let ll_true = ou_exact_loglik(theta_true[0], theta_true[1], series)?;
                let covered =
                    2.0 * (fit.loglik - ll_true) <= chi2_quantile(0.95, model.p);
                estimates.push(EstimateRecord {
                    method: Method::Exact,
                    setting: "exact".into(),
                    theta: vec![fit.theta0, fit.theta1],
                    evals: 0,
                    added: 0,
                    time_s: clock.elapsed().as_secs_f64(),
                    covered: Some(covered),
                });
            }
            Method::Skbo => {
                for (g, entry) in spec.smc_grid.iter().enumerate() {
                    let seed = derive_path(rep_seed, &[tag::SKBO_EVAL, g as u64]);
                    let smc = entry.to_config(Sampler::ModifiedBrownianBridge, seed)?;
                    let config = spec.skbo.instantiate(theta_box.clone(), smc, seed);
                    let clock = Instant::now();
                    let result = run_skbo(model, series, &config)?;
                    estimates.push(EstimateRecord {
                        method: Method::Skbo,
                        setting: entry.label(),
                        theta: model.natural(&result.theta_hat)?,
                        evals: result.trace.entries.len(),
                        added: result.trace.entries.len() - config.n_init,
                        time_s: clock.elapsed().as_secs_f64(),
                        covered: None,
                    });
                }
            }
            Method::Naive => {
                for (g, entry) in spec.smc_grid.iter().enumerate() {
                    let seed = derive_path(rep_seed, &[tag::LHS, g as u64]);
                    let smc = entry.to_config(Sampler::ModifiedBrownianBridge, seed)?;
                    let n_points = spec.naive_points.unwrap_or(25 * model.p);
                    let mut rng = stream(seed, &[tag::LHS, 0]);
                    let clock = Instant::now();
                    let fit =
                        naive_baseline(model, series, theta_box, n_points, &smc, &mut rng)?;
                    estimates.push(EstimateRecord {
                        method: Method::Naive,
                        setting: entry.label(),
                        theta: model.natural(&fit.theta_hat)?,
                        evals: fit.n_evals,
                        added: 0,
                        time_s: clock.elapsed().as_secs_f64(),
                        covered: None,
                    });
                }
            }
        }
    }
    Ok(estimates)
}

fn run_bench(
    spec: &ExperimentSpec,
    model: &SdeModel,
    simulate: impl Fn(&ExperimentSpec, &[f64], u64) -> Result<ObservedSeries, ModelError>,
) -> Result<BenchOutcome, HarnessError> {
    let theta_true = spec
        .theta_true
        .clone()
        .ok_or_else(|| HarnessError::BadSpec("benchmark needs theta_true".into()))?;
    let theta_box = spec.resolved_box(model)?;
    let mut replicates = Vec::with_capacity(spec.n_reps);
    let mut failures = 0usize;
    for rep in 0..spec.n_reps {
        let series = match simulate(spec, &theta_true, rep as u64) {
            Ok(s) => s,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let rep_seed = replicate_seed(spec.seed, rep as u64);
        match run_methods(spec, model, &theta_box, &series, &theta_true, rep_seed) {
            Ok(estimates) => replicates.push(ReplicateRecord { rep, estimates }),
            Err(_) => failures += 1,
        }
    }
    if replicates.is_empty() {
        return Err(HarnessError::BadSpec(
            "every benchmark replicate failed".into(),
        ));
    }
    let table = aggregate_table(&spec.id, model.name, &theta_true, &replicates, spec.seed);
    Ok(BenchOutcome {
        table,
        replicates,
        failures,
    })
}

/// Mean-reverting benchmark: exact stationary simulation, with the exact
/// maximum-likelihood column available alongside the estimators.
pub fn bench_ou(spec: &ExperimentSpec) -> Result<BenchOutcome, HarnessError> {
    let model = spec.validate()?;
    if model.name != "ou" {
        return Err(HarnessError::BadSpec(format!(
            "bench_ou expects the mean-reverting model, got {:?}",
            spec.model
        )));
    }
    run_bench(spec, &model, |spec, tt, rep| {
        let mut rng = stream(spec.seed, &[tag::SIMULATE, rep]);
        ou_simulate_exact(tt[0], tt[1], spec.n_obs, spec.dt, &mut rng)
    })
}

/// Power-diffusion benchmark: fine Euler grid subsampled to the
/// observation spacing; no exact column exists for this model.
pub fn bench_gcir(spec: &ExperimentSpec) -> Result<BenchOutcome, HarnessError> {
    let model = spec.validate()?;
    if model.name != "gcir" {
        return Err(HarnessError::BadSpec(format!(
            "bench_gcir expects the power-diffusion model, got {:?}",
            spec.model
        )));
    }
    if spec.methods.contains(&Method::Exact) {
        return Err(HarnessError::BadSpec(
            "the power-diffusion model has no exact likelihood".into(),
        ));
    }
    run_bench(spec, &model, |spec, tt, rep| {
        let model = gcir();
        let theta = model.search_point(tt)?;
        let stride = spec.sim_stride.unwrap_or(100);
        let fine_dt = spec.dt / stride as f64;
        let x0 = spec.x0.unwrap_or(1.0);
        let mut rng = stream(spec.seed, &[tag::SIMULATE, rep]);
        euler_subsample(&model, &theta, x0, fine_dt, spec.n_obs * stride, stride, &mut rng)
    })
}

/// Convenience builders mirroring the published protocols at the
/// configured replicate count.
pub fn ou_table_spec(n_reps: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        id: "ou-table".into(),
        model: "ou".into(),
        theta_true: Some(vec![2.0, -3.0]),
        data_path: None,
        n_reps,
        n_obs: 1000,
        dt: 0.1,
        sim_stride: None,
        x0: None,
        smc_grid: vec![
            SmcGridEntry { k: 5, m: Some(25) },
            SmcGridEntry { k: 10, m: Some(100) },
        ],
        methods: vec![Method::Exact, Method::Skbo, Method::Naive],
        skbo: SkboTemplate {
            n_init: 20,
            max_points: 50,
            stop_tol: 0.01,
            stop_patience: 5,
            acquisition_mode: None,
            candidate_pool: None,
        },
        theta_box: None,
        naive_points: None,
        seed,
        out_dir: None,
    }
}

pub fn gcir_table_spec(n_reps: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        id: "gcir-table".into(),
        model: "gcir".into(),
        theta_true: Some(vec![0.5, -0.25, 1.0, 0.75]),
        data_path: None,
        n_reps,
        n_obs: 1000,
        dt: 0.1,
        sim_stride: Some(100),
        x0: Some(1.0),
        smc_grid: vec![
            SmcGridEntry { k: 5, m: Some(25) },
            SmcGridEntry { k: 10, m: Some(100) },
        ],
        methods: vec![Method::Skbo, Method::Naive],
        skbo: SkboTemplate {
            n_init: 20,
            max_points: 100,
            stop_tol: 0.01,
            stop_patience: 5,
            acquisition_mode: None,
            candidate_pool: None,
        },
        theta_box: None,
        naive_points: None,
        seed,
        out_dir: None,
    }
}

/// Total log-likelihood helper used by the information criteria: twice
/// the parameter count minus twice the maximized log-likelihood.
pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

/// Kahan-summed mean absolute error helper for paired comparisons.
pub fn paired_wins(a_errors: &[f64], b_errors: &[f64]) -> f64 {
    assert_eq!(a_errors.len(), b_errors.len());
    let wins: Vec<f64> = a_errors
        .iter()
        .zip(b_errors)
        .map(|(a, b)| (a.abs() <= b.abs()) as u8 as f64)
        .collect();
    ksum(&wins) / wins.len() as f64
}
