//! Monte Carlo estimation of transition densities and log-likelihoods.
//!
//! A transition density without a closed form is approximated by imputing
//! K-1 interior states between consecutive observations and importance
//! sampling M paths from one of the samplers in [`bridge`]. All weight
//! arithmetic is done in log space; per-interval estimates are combined
//! with compensated summation and a delta-method standard error.

mod bridge;

pub use bridge::{
    sample_bridge_euler, sample_bridge_euler_with_noise, sample_bridge_modified,
    sample_bridge_modified_with_noise, sample_pedersen, sample_pedersen_with_noise, BridgeDraw,
};

use crate::models::{ModelError, ObservedSeries, SdeModel, ThetaPoint};
use crate::rng::{self, tag};
use crate::util::{ksum, log_sum_exp, norm_log_pdf, KahanSum};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log contribution assigned to an interval whose estimate is zero;
/// close to the smallest representable log density.
pub const LOG_FLOOR: f64 = -745.0;

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("K must be at least 1, got {0}")]
    BadK(usize),
    #[error("M must be at least 1, got {0}")]
    BadM(usize),
    #[error("K must be at least 2 for bridge sampling, got {0}")]
    BridgeNeedsK2(usize),
    #[error("observation lag must be positive, got {0}")]
    NonPositiveLag(f64),
    #[error("expected {expected} noise values, got {got}")]
    NoiseLengthMismatch { expected: usize, got: usize },
    #[error("diffusion must be positive at x={x}, got {sigma}")]
    NonPositiveDiffusion { x: f64, sigma: f64 },
    #[error("diffusion is not finite at x={x} ({sigma})")]
    NonFiniteDiffusion { x: f64, sigma: f64 },
    #[error("drift is not finite at x={x} ({mu})")]
    NonFiniteDrift { x: f64, mu: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Importance sampler choice for the interior states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Pedersen,
    BrownianBridge,
    ModifiedBrownianBridge,
}

/// Controls for one likelihood estimation: K subintervals per
/// observation interval, M importance draws, sampler, and the seed that
/// keys the per-transition substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub k: usize,
    pub m: usize,
    pub sampler: Sampler,
    pub seed: u64,
}

impl SmcConfig {
    pub fn new(k: usize, m: usize, sampler: Sampler, seed: u64) -> Result<Self, SmcError> {
        if k < 1 {
            return Err(SmcError::BadK(k));
        }
        if m < 1 {
            return Err(SmcError::BadM(m));
        }
        Ok(Self { k, m, sampler, seed })
    }

    /// M defaults to K^2 when unspecified.
    pub fn with_default_m(k: usize, sampler: Sampler, seed: u64) -> Result<Self, SmcError> {
        Self::new(k, k * k, sampler, seed)
    }
}

/// One-interval estimate. `log_p` and `rel_se` are the numerically safe
/// forms; `p_hat`/`se` are their density-scale counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate {
    pub p_hat: f64,
    pub se: f64,
    pub log_p: f64,
    /// se / p_hat, which is scale-free and survives underflow.
    pub rel_se: f64,
    /// Every importance weight vanished; the caller applies the floor.
    pub all_zero: bool,
}

/// Estimated log-likelihood of a series at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikEstimate {
    pub value: f64,
    pub mc_se: f64,
    /// Per-interval log density estimates; `value` is their sum.
    pub per_transition: Vec<f64>,
    /// Some interval had all-zero weights and was floored at [`LOG_FLOOR`].
    pub floored: bool,
}

/// Log of the one-step Euler transition density
/// `phi(x_to; x_from + mu dt, sigma^2 dt)`.
pub fn euler_log_density(
    model: &SdeModel,
    theta: &ThetaPoint,
    x_from: f64,
    x_to: f64,
    dt: f64,
) -> Result<f64, SmcError> {
    let natural = model.natural(theta)?;
    euler_log_density_natural(model, &natural, x_from, x_to, dt)
}

/// One-step Euler transition density in density scale.
pub fn euler_density(
    model: &SdeModel,
    theta: &ThetaPoint,
    x_from: f64,
    x_to: f64,
    dt: f64,
) -> Result<f64, SmcError> {
    euler_log_density(model, theta, x_from, x_to, dt).map(f64::exp)
}

fn euler_log_density_natural(
    model: &SdeModel,
    natural: &[f64],
    x_from: f64,
    x_to: f64,
    dt: f64,
) -> Result<f64, SmcError> {
    if dt <= 0.0 {
        return Err(SmcError::NonPositiveLag(dt));
    }
    let mu = (model.drift)(x_from, natural);
    let sigma = (model.diffusion)(x_from, natural);
    if !mu.is_finite() {
        return Err(SmcError::NonFiniteDrift { x: x_from, mu });
    }
    if !sigma.is_finite() {
        return Err(SmcError::NonFiniteDiffusion { x: x_from, sigma });
    }
    if sigma <= 0.0 {
        return Err(SmcError::NonPositiveDiffusion { x: x_from, sigma });
    }
    Ok(norm_log_pdf(x_to, x_from + mu * dt, sigma * sigma * dt))
}

/// The substream feeding transition `index`, derived from a base seed.
/// Published so callers can reproduce individual intervals of a
/// likelihood evaluation.
pub fn transition_stream(base: u64, index: usize) -> ChaCha8Rng {
    rng::stream(base, &[tag::TRANSITION, index as u64])
}

/// Estimate one transition density `x0 -> x_delta` over lag `delta` by
/// importance sampling (or exactly via the Euler density when K = 1).
pub fn transition_estimate<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    x_delta: f64,
    delta: f64,
    config: &SmcConfig,
    rng: &mut R,
) -> Result<TransitionEstimate, SmcError> {
    let natural = model.natural(theta)?;
    transition_estimate_natural(model, &natural, x0, x_delta, delta, config, rng)
}

fn transition_estimate_natural<R: Rng + ?Sized>(
    model: &SdeModel,
    natural: &[f64],
    x0: f64,
    x_delta: f64,
    delta: f64,
    config: &SmcConfig,
    rng: &mut R,
) -> Result<TransitionEstimate, SmcError> {
    if config.k < 1 {
        return Err(SmcError::BadK(config.k));
    }
    if config.m < 1 {
        return Err(SmcError::BadM(config.m));
    }
    if config.k == 1 {
        let log_p = euler_log_density_natural(model, natural, x0, x_delta, delta)?;
        return Ok(TransitionEstimate {
            p_hat: log_p.exp(),
            se: 0.0,
            log_p,
            rel_se: 0.0,
            all_zero: !log_p.is_finite(),
        });
    }

    let k = config.k;
    let h = delta / k as f64;
    let mut log_weights = Vec::with_capacity(config.m);
    for _ in 0..config.m {
        let draw =
            bridge::sample_for_estimate(model, natural, x0, x_delta, delta, k, config.sampler, rng)?;
        let mut num = KahanSum::new();
        let mut prev = x0;
        for &xk in &draw.interior {
            num.add(euler_log_density_natural(model, natural, prev, xk, h)?);
            prev = xk;
        }
        num.add(euler_log_density_natural(model, natural, prev, x_delta, h)?);
        log_weights.push(num.value() - draw.log_q);
    }

    let hi = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() {
        return Ok(TransitionEstimate {
            p_hat: 0.0,
            se: 0.0,
            log_p: f64::NEG_INFINITY,
            rel_se: 0.0,
            all_zero: true,
        });
    }
    let m = config.m as f64;
    let log_p = log_sum_exp(&log_weights) - m.ln();
    // Scaled weights in [0, 1]: their spread gives the relative SE.
    let w: Vec<f64> = log_weights.iter().map(|&lw| (lw - hi).exp()).collect();
    let w_mean = crate::util::mean(&w);
    let w_sd = crate::util::sample_sd(&w);
    let rel_se = if w_mean > 0.0 {
        w_sd / (m.sqrt() * w_mean)
    } else {
        0.0
    };
    let p_hat = log_p.exp();
    Ok(TransitionEstimate {
        p_hat,
        se: rel_se * p_hat,
        log_p,
        rel_se,
        all_zero: false,
    })
}

/// Estimate the log-likelihood of `series` at `theta`: the sum over
/// observation intervals of estimated log transition densities.
///
/// One u64 is drawn from `rng` as the base seed; interval `i` then uses
/// [`transition_stream`]`(base, i)`, so the result does not depend on
/// evaluation order and intervals can be estimated in parallel.
pub fn loglik_estimate<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    series: &ObservedSeries,
    config: &SmcConfig,
    rng: &mut R,
) -> Result<LoglikEstimate, SmcError> {
    let natural = model.natural(theta)?;
    let base: u64 = rng.random();
    let transitions: Vec<(f64, f64, f64)> = series.transitions().collect();
    let estimates: Vec<TransitionEstimate> = transitions
        .par_iter()
        .enumerate()
        .map(|(i, &(x_from, x_to, dt))| {
            let mut stream = transition_stream(base, i);
            transition_estimate_natural(model, &natural, x_from, x_to, dt, config, &mut stream)
        })
        .collect::<Result<_, _>>()?;

    let mut floored = false;
    let mut per_transition = Vec::with_capacity(estimates.len());
    let mut var_acc = KahanSum::new();
    for est in &estimates {
        // p_hat underflows to 0 whenever log_p < LOG_FLOOR, so flooring on
        // it also covers estimates below representable density scale.
        if est.all_zero || est.p_hat == 0.0 {
            floored = true;
            per_transition.push(LOG_FLOOR);
        } else {
            per_transition.push(est.log_p);
            var_acc.add(est.rel_se * est.rel_se);
        }
    }
    Ok(LoglikEstimate {
        value: ksum(&per_transition),
        mc_se: var_acc.value().sqrt(),
        per_transition,
        floored,
    })
}
