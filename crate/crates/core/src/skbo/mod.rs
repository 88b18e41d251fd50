//! Sequential search for the maximizer of a noisy, expensive surface.
//!
//! The loop seeds the box with a Latin hypercube, models the responses
//! with the GP surrogate, and repeatedly adds the point where expected
//! improvement peaks, re-estimating the surface after every addition.
//! The running estimate is always the explored point with the highest
//! kriging mean, and the loop stops when that estimate stays put for a
//! configured number of additions or the evaluation budget is spent.
//!
//! Every random stream is derived from the config seed and an evaluation
//! or iteration index, so an interrupted run resumed from its trace
//! replays bit-for-bit.

mod region;

pub use region::{
    coverage_experiment, lrt_contains, lrt_region, rao_region, simulate_series, CoverageOutcome,
    LrtRegion, RaoRegion,
};

use crate::gp::{fit_posterior_mode, DesignSet, GpError, GpHyper, GpPrior, GpState};
use crate::models::{ModelError, ObservedSeries, SdeModel, ThetaBox, ThetaPoint};
use crate::rng::{derive_path, stream, tag};
use crate::smc::{loglik_estimate, SmcConfig, SmcError, LOG_FLOOR};
use crate::util::{norm_cdf, norm_pdf};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkboError {
    #[error("invalid search configuration: {0}")]
    BadConfig(&'static str),
    #[error("surrogate fit failed after {evaluations} evaluations: {source}")]
    FitAborted {
        evaluations: usize,
        source: GpError,
    },
    #[error("confidence-region grids support at most 3 dimensions, got {0}")]
    RegionDimension(usize),
    #[error("checkpoint i/o: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How `maximize_ei` hunts for the acquisition peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMode {
    /// best point of the candidate pool
    CandidateGrid,
    /// candidate pool, then gradient ascent from the top few
    LocalPolish,
}

/// Controls for one sequential search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkboConfig {
    pub theta_box: ThetaBox,
    pub n_init: usize,
    pub max_points: usize,
    /// estimate movement below this (sup norm, natural scale) counts as
    /// "no change" for the stopping rule
    pub stop_tol: f64,
    pub stop_patience: usize,
    pub acquisition_mode: AcquisitionMode,
    pub candidate_pool: usize,
    pub smc: SmcConfig,
    pub seed: u64,
}

impl SkboConfig {
    /// Defaults scaled to the box dimension p: 10p initial points, 25p
    /// total budget, 2000p acquisition candidates.
    pub fn for_box(theta_box: ThetaBox, smc: SmcConfig, seed: u64) -> Self {
        let p = theta_box.dim();
        Self {
            theta_box,
            n_init: 10 * p,
            max_points: 25 * p,
            stop_tol: 0.01,
            stop_patience: 5,
            acquisition_mode: AcquisitionMode::CandidateGrid,
            candidate_pool: 2000 * p,
            smc,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SkboError> {
        if self.n_init < 1 {
            return Err(SkboError::BadConfig("n_init must be at least 1"));
        }
        if self.n_init >= self.max_points {
            return Err(SkboError::BadConfig("n_init must be below max_points"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(SkboError::BadConfig("stop_tol must be positive"));
        }
        if self.stop_patience < 1 {
            return Err(SkboError::BadConfig("stop_patience must be at least 1"));
        }
        if self.candidate_pool < 1 {
            return Err(SkboError::BadConfig("candidate_pool must be at least 1"));
        }
        Ok(())
    }
}

/// One evaluated point in the order it was added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub theta: ThetaPoint,
    pub y: f64,
    pub mc_se: f64,
    /// some observation interval had its density floored
    pub floored: bool,
    /// the evaluation itself errored and was recorded as floored
    pub eval_failed: bool,
    /// acquisition value that selected this point; None for initial design
    pub ei: Option<f64>,
    /// running estimate after refitting with this point
    pub theta_hat: Option<ThetaPoint>,
    pub eta_at_hat: Option<f64>,
    pub hyper: Option<GpHyper>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkboTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    Budget,
}

/// Finished search: the estimate, its kriging mean, the full trace, and
/// the final surrogate.
#[derive(Debug, Clone)]
pub struct SkboResult {
    pub theta_hat: ThetaPoint,
    pub eta_at_hat: f64,
    pub trace: SkboTrace,
    pub stop_reason: StopReason,
    pub gp: GpState,
}

impl SkboResult {
    /// Likelihood-ratio confidence region over a grid; p = 2 also gets a
    /// marching-squares contour.
    pub fn lrt_region(&self, alpha: f64, resolution: usize) -> Result<LrtRegion, SkboError> {
        lrt_region(&self.gp, &self.theta_hat, alpha, resolution)
    }

    /// Ellipsoidal score-based confidence region from the surrogate's
    /// curvature at the estimate.
    pub fn rao_region(&self, alpha: f64) -> Result<RaoRegion, SkboError> {
        rao_region(&self.gp, &self.theta_hat, alpha)
    }
}

/// n points, each coordinate occupying n distinct equal-width strata of
/// its box edge, uniformly jittered within the stratum.
pub fn latin_hypercube<R: Rng + ?Sized>(
    theta_box: &ThetaBox,
    n: usize,
    rng: &mut R,
) -> Vec<ThetaPoint> {
    assert!(n >= 1, "latin hypercube needs at least one point");
    let p = theta_box.dim();
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        strata.push(order);
    }
    (0..n)
        .map(|i| {
            let unit: Vec<f64> = (0..p)
                .map(|j| (strata[j][i] as f64 + rng.random_range(0.0..1.0)) / n as f64)
                .collect();
            theta_box.from_unit(&unit)
        })
        .collect()
}

/// Closed-form expected improvement for a Gaussian predictive value with
/// mean excess `d` over the incumbent and standard deviation `v`. The
/// `v = 0` case is the continuous limit max(0, d).
pub fn ei_value(d: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return d.max(0.0);
    }
    let z = d / v;
    // Tail rounding can turn the tiny positive true value negative.
    (d * norm_cdf(z) + v * norm_pdf(z)).max(0.0)
}

/// Expected improvement of the surrogate at `theta` over `eta_best`, the
/// incumbent maximum of the kriging mean over explored points.
pub fn expected_improvement(state: &GpState, theta: &ThetaPoint, eta_best: f64) -> f64 {
    ei_value(state.kriging_mean(theta) - eta_best, state.kriging_sd(theta))
}

/// Gradient of expected improvement with respect to the natural
/// coordinates: dEI = dmean * Phi(d/v) + dsd * phi(d/v). Errs where the
/// predictive variance vanishes; callers fall back to value-only search.
pub fn ei_gradient(
    state: &GpState,
    theta: &ThetaPoint,
    eta_best: f64,
) -> Result<Vec<f64>, GpError> {
    let (dmean, dsd) = state.kriging_gradients(theta)?;
    let d = state.kriging_mean(theta) - eta_best;
    let v = state.kriging_sd(theta);
    if v == 0.0 {
        return Err(GpError::ZeroVariance);
    }
    let z = d / v;
    let (cdf, pdf) = (norm_cdf(z), norm_pdf(z));
    Ok(dmean
        .iter()
        .zip(&dsd)
        .map(|(m, s)| m * cdf + s * pdf)
        .collect())
}

/// Highest kriging mean over the explored design points, with the lowest
/// index winning ties.
pub(crate) fn incumbent(state: &GpState) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in state.design().points().iter().enumerate() {
        let m = state.kriging_mean(p);
        if m > best.1 {
            best = (i, m);
        }
    }
    best
}

/// Find the acquisition peak over a fresh candidate pool (plus explored
/// points and their midpoints with the incumbent), optionally polished by
/// gradient ascent from the best few candidates.
pub fn maximize_ei<R: Rng + ?Sized>(
    state: &GpState,
    config: &SkboConfig,
    rng: &mut R,
) -> (ThetaPoint, f64) {
    let b = state.design().theta_box();
    let (best_idx, eta_best) = incumbent(state);
    let hat = &state.design().points()[best_idx];

    let mut candidates = latin_hypercube(b, config.candidate_pool, rng);
    for p in state.design().points() {
        candidates.push(p.clone());
        // Midpoint toward the incumbent probes the basin between an
        // explored point and the current best.
        let mid: Vec<f64> = p
            .coords()
            .iter()
            .zip(hat.coords())
            .map(|(a, c)| 0.5 * (a + c))
            .collect();
        candidates.push(ThetaPoint::from_slice(&mid).expect("midpoint of finite points"));
    }

    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, t)| (expected_improvement(state, t, eta_best), i))
        .collect();
    // Descending EI, index ascending for determinism on ties.
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let (mut best_ei, best_i) = scored[0];
    let mut best_theta = candidates[best_i].clone();

    if config.acquisition_mode == AcquisitionMode::LocalPolish {
        for &(e0, i) in scored.iter().take(5) {
            if let Some((t, e)) = polish(state, &candidates[i], e0, eta_best) {
                if e > best_ei {
                    best_ei = e;
                    best_theta = t;
                }
            }
        }
    }
    (best_theta, best_ei)
}

/// Backtracking gradient ascent on EI in unit coordinates, projected into
/// the box, with at most 100 objective evaluations.
fn polish(
    state: &GpState,
    start: &ThetaPoint,
    start_ei: f64,
    eta_best: f64,
) -> Option<(ThetaPoint, f64)> {
    let b = state.design().theta_box();
    let p = b.dim();
    let mut u = b.to_unit(start);
    let mut best = start_ei;
    let mut step = 0.05;
    let mut evals = 0;
    while evals < 100 {
        let theta = b.from_unit(&u);
        let g = match ei_gradient(state, &theta, eta_best) {
            Ok(g) => g,
            Err(_) => break,
        };
        // Chain rule into unit coordinates.
        let gu: Vec<f64> = (0..p).map(|j| g[j] * b.width(j)).collect();
        let gmax = gu.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if gmax < 1e-14 {
            break;
        }
        let mut accepted = false;
        while evals < 100 && step >= 1e-12 {
            let u_try: Vec<f64> = (0..p)
                .map(|j| (u[j] + step * gu[j] / gmax).clamp(0.0, 1.0))
                .collect();
            evals += 1;
            let e_try = expected_improvement(state, &b.from_unit(&u_try), eta_best);
            if e_try > best {
                u = u_try;
                best = e_try;
                step *= 1.8;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((b.from_unit(&u), best))
}

struct EvalOutcome {
    y: f64,
    mc_se: f64,
    floored: bool,
    failed: bool,
}

/// Run the full loop against an SMC likelihood estimator for `model` on
/// `series`. All randomness is keyed by `config.seed`.
pub fn run_skbo(
    model: &SdeModel,
    series: &ObservedSeries,
    config: &SkboConfig,
) -> Result<SkboResult, SkboError> {
    run_skbo_resumed(model, series, config, None)
}

/// As [`run_skbo`], but reuse evaluations recorded in an earlier trace of
/// the same configuration. Because streams are derived from the config
/// seed and the evaluation index, the continuation is identical to the
/// run that was interrupted.
pub fn run_skbo_resumed(
    model: &SdeModel,
    series: &ObservedSeries,
    config: &SkboConfig,
    prior_trace: Option<&SkboTrace>,
) -> Result<SkboResult, SkboError> {
    if config.theta_box.dim() != model.p {
        return Err(SkboError::BadConfig("box dimension must match model"));
    }
    let n_floor = series.n_transitions() as f64;
    let eval = |idx: usize, theta: &ThetaPoint| {
        let mut rng = stream(config.seed, &[tag::SKBO_EVAL, idx as u64]);
        match loglik_estimate(model, theta, series, &config.smc, &mut rng) {
            Ok(est) => EvalOutcome {
                y: est.value,
                mc_se: est.mc_se,
                floored: est.floored,
                failed: false,
            },
            // A failed likelihood evaluation is treated like a point with
            // no density mass so the search can continue around it.
            Err(_) => EvalOutcome {
                y: LOG_FLOOR * n_floor,
                mc_se: 0.0,
                floored: true,
                failed: true,
            },
        }
    };
    let to_natural = |theta: &ThetaPoint| {
        model
            .natural(theta)
            .expect("box dimension was validated against the model")
    };
    run_driver(config, eval, to_natural, prior_trace)
}

/// Shared loop over an arbitrary evaluator; `to_natural` maps estimates
/// to the scale on which the stopping tolerance is measured.
fn run_driver(
    config: &SkboConfig,
    mut eval: impl FnMut(usize, &ThetaPoint) -> EvalOutcome,
    to_natural: impl Fn(&ThetaPoint) -> Vec<f64>,
    prior_trace: Option<&SkboTrace>,
) -> Result<SkboResult, SkboError> {
    config.validate()?;
    let started = Instant::now();
    let b = &config.theta_box;
    let replay = prior_trace.map(|t| t.entries.as_slice()).unwrap_or(&[]);

    let mut points: Vec<ThetaPoint> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ses: Vec<f64> = Vec::new();
    let mut entries: Vec<TraceEntry> = Vec::new();

    let run_eval = |idx: usize,
                        theta: &ThetaPoint,
                        ei: Option<f64>,
                        eval: &mut dyn FnMut(usize, &ThetaPoint) -> EvalOutcome|
     -> (ThetaPoint, f64, f64, bool, bool) {
        if let Some(e) = replay.get(idx) {
            (e.theta.clone(), e.y, e.mc_se, e.floored, e.eval_failed)
        } else {
            let out = eval(idx, theta);
            let _ = ei;
            (theta.clone(), out.y, out.mc_se, out.floored, out.failed)
        }
    };

    // Initial space-filling design.
    let init = latin_hypercube(b, config.n_init, &mut stream(config.seed, &[tag::LHS, 0]));
    for (idx, theta) in init.iter().enumerate() {
        let (theta, y, mc_se, floored, failed) = run_eval(idx, theta, None, &mut eval);
        points.push(theta.clone());
        ys.push(y);
        ses.push(mc_se);
        entries.push(TraceEntry {
            index: idx,
            theta,
            y,
            mc_se,
            floored,
            eval_failed: failed,
            ei: None,
            theta_hat: None,
            eta_at_hat: None,
            hyper: None,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
    }

    let fit_full = |points: &[ThetaPoint], ys: &[f64], ses: &[f64], warm: Option<GpHyper>| {
        let design = DesignSet::new(b.clone(), points.to_vec(), ys.to_vec(), ses.to_vec())?;
        fit_posterior_mode(&design, GpPrior::RangeOverScale, warm)
    };

    let mut state = fit_full(&points, &ys, &ses, None).map_err(|source| SkboError::FitAborted {
        evaluations: points.len(),
        source,
    })?;
    let (mut hat_idx, mut eta_best) = incumbent(&state);
    let mut hat_natural = to_natural(&points[hat_idx]);
    let mut calm_streak = 0usize;
    let mut stop_reason = StopReason::Budget;

    let mut iteration = 0u64;
    while points.len() < config.max_points {
        let idx = points.len();
        let replayed = replay.get(idx).is_some();
        let (theta_plus, ei) = if replayed {
            let e = &replay[idx];
            (e.theta.clone(), e.ei.unwrap_or(0.0))
        } else {
            let mut rng = stream(config.seed, &[tag::CANDIDATE, iteration]);
            maximize_ei(&state, config, &mut rng)
        };
        let (theta, y, mc_se, floored, failed) = run_eval(idx, &theta_plus, Some(ei), &mut eval);
        points.push(theta.clone());
        ys.push(y);
        ses.push(mc_se);

        // Refit after every addition: cheap warm restart from the current
        // mode, with a full multi-start sweep every fifth point.
        let added = points.len() - config.n_init;
        state = if added % 5 == 0 {
            fit_full(&points, &ys, &ses, Some(*state.hyper()))
        } else {
            let design = DesignSet::new(b.clone(), points.clone(), ys.clone(), ses.clone())
                .and_then(|d| refit_warm(&d, *state.hyper()));
            design
        }
        .map_err(|source| SkboError::FitAborted {
            evaluations: points.len(),
            source,
        })?;

        let (new_idx, new_eta) = incumbent(&state);
        let new_natural = to_natural(&points[new_idx]);
        let moved = hat_natural
            .iter()
            .zip(&new_natural)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if moved < config.stop_tol {
            calm_streak += 1;
        } else {
            calm_streak = 0;
        }
        hat_idx = new_idx;
        eta_best = new_eta;
        hat_natural = new_natural;

        entries.push(TraceEntry {
            index: idx,
            theta,
            y,
            mc_se,
            floored,
            eval_failed: failed,
            ei: Some(ei),
            theta_hat: Some(points[hat_idx].clone()),
            eta_at_hat: Some(eta_best),
            hyper: Some(*state.hyper()),
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        iteration += 1;

        if calm_streak >= config.stop_patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    Ok(SkboResult {
        theta_hat: points[hat_idx].clone(),
        eta_at_hat: eta_best,
        trace: SkboTrace { entries },
        stop_reason,
        gp: state,
    })
}

/// Single-start refit from a previous mode; used between the periodic
/// full multi-start sweeps.
fn refit_warm(design: &DesignSet, warm: GpHyper) -> Result<GpState, GpError> {
    use crate::optim::{nelder_mead_max, NelderMeadOpts};
    let lo = [-12.0, (1e-3_f64).ln(), -12.0];
    let hi = [12.0, (1e3_f64).ln(), 12.0];
    let start = [
        warm.tau2.ln().clamp(lo[0], hi[0]),
        warm.eta.ln().clamp(lo[1], hi[1]),
        warm.sigma2.max(1e-12).ln().clamp(lo[2], hi[2]),
    ];
    let objective = |x: &[f64]| {
        crate::gp::profile_log_posterior(
            design,
            GpPrior::RangeOverScale,
            x[0].exp(),
            x[1].exp(),
            x[2].exp(),
        )
        .map(|(v, _)| v)
        .unwrap_or(f64::NEG_INFINITY)
    };
    let opts = NelderMeadOpts {
        max_iter: 200,
        tol: 1e-8,
        xtol: 1e-5,
        init_step: 0.05,
    };
    let (x, best) = nelder_mead_max(objective, &start, &lo, &hi, &opts);
    if !best.is_finite() {
        return Err(GpError::FitFailed);
    }
    let (tau2, eta, sigma2) = (x[0].exp(), x[1].exp(), x[2].exp());
    let (_, beta) =
        crate::gp::profile_log_posterior(design, GpPrior::RangeOverScale, tau2, eta, sigma2)?;
    GpState::from_hyper(design.clone(), GpHyper::new(beta, tau2, eta, sigma2)?)
}

/// Everything needed to resume an interrupted search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkboCheckpoint {
    pub config: SkboConfig,
    pub trace: SkboTrace,
    pub design: Option<DesignSet>,
    pub hyper: Option<GpHyper>,
}

pub fn save_checkpoint(path: &std::path::Path, cp: &SkboCheckpoint) -> Result<(), SkboError> {
    let text =
        serde_json::to_string_pretty(cp).map_err(|e| SkboError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| SkboError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<SkboCheckpoint, SkboError> {
    let text = std::fs::read_to_string(path).map_err(|e| SkboError::Checkpoint(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| SkboError::Checkpoint(e.to_string()))
}

/// Derived seed for one replicate of a repeated experiment.
pub fn replicate_seed(seed: u64, rep: u64) -> u64 {
    derive_path(seed, &[tag::REPLICATE, rep])
}
