//! Importance samplers for the interior points of one observation
//! interval. Each sampler returns the K-1 imputed states together with
//! the log density of the draw under its own proposal.

use super::SmcError;
use crate::models::{SdeModel, ThetaPoint};
use crate::util::norm_log_pdf;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One imputed path: interior states X_{tau_1}..X_{tau_{K-1}} and the log
/// proposal density log q of the draw. Deterministic (zero-variance)
/// steps contribute nothing to log q.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeDraw {
    pub interior: Vec<f64>,
    pub log_q: f64,
}

/// How the proposal chooses the Gaussian law of step k.
#[derive(Clone, Copy)]
enum Proposal {
    /// Sequential one-step Euler law, right endpoint ignored.
    Forward,
    /// Pull toward the endpoint, full Euler step variance.
    Bridge,
    /// Pull toward the endpoint, variance shrunk by (K-k)/(K-k+1).
    BridgeShrunk,
}

fn sample_with(
    model: &SdeModel,
    natural: &[f64],
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    z: &[f64],
    proposal: Proposal,
) -> Result<BridgeDraw, SmcError> {
    if k < 2 {
        return Err(SmcError::BridgeNeedsK2(k));
    }
    if delta <= 0.0 {
        return Err(SmcError::NonPositiveLag(delta));
    }
    if z.len() != k - 1 {
        return Err(SmcError::NoiseLengthMismatch {
            expected: k - 1,
            got: z.len(),
        });
    }
    let h = delta / k as f64;
    let mut interior = Vec::with_capacity(k - 1);
    let mut log_q = 0.0;
    let mut x = x0;
    for step in 1..k {
        let sigma = (model.diffusion)(x, natural);
        if !sigma.is_finite() {
            return Err(SmcError::NonFiniteDiffusion { x, sigma });
        }
        let remaining = (k - step + 1) as f64;
        let (mean, var) = match proposal {
            Proposal::Forward => {
                let mu = (model.drift)(x, natural);
                if !mu.is_finite() {
                    return Err(SmcError::NonFiniteDrift { x, mu });
                }
                (x + mu * h, sigma * sigma * h)
            }
            Proposal::Bridge => (x + (x_delta - x) / remaining, sigma * sigma * h),
            Proposal::BridgeShrunk => (
                x + (x_delta - x) / remaining,
                (k - step) as f64 / remaining * h * sigma * sigma,
            ),
        };
        let next = if var > 0.0 {
            let raw = mean + var.sqrt() * z[step - 1];
            let clamped = model.clamp_state(raw);
            log_q += norm_log_pdf(clamped, mean, var);
            clamped
        } else {
            model.clamp_state(mean)
        };
        interior.push(next);
        x = next;
    }
    Ok(BridgeDraw { interior, log_q })
}

fn draw_noise<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k.saturating_sub(1))
        .map(|_| StandardNormal.sample(rng))
        .collect()
}

/// Endpoint-conditioned sampler with the per-step variance shrink factor
/// (K-k)/(K-k+1). For constant diffusion the interior marginals are those
/// of an exact Brownian bridge between the endpoints.
pub fn sample_bridge_modified<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    rng: &mut R,
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    let z = draw_noise(k, rng);
    sample_with(model, &natural, x0, x_delta, delta, k, &z, Proposal::BridgeShrunk)
}

/// Deterministic-noise variant of [`sample_bridge_modified`]; `z` supplies
/// the K-1 standard normal draws.
pub fn sample_bridge_modified_with_noise(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    z: &[f64],
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    sample_with(model, &natural, x0, x_delta, delta, k, z, Proposal::BridgeShrunk)
}

/// Euler discretization of the bridge diffusion pulled toward the right
/// endpoint, without the variance shrink factor.
pub fn sample_bridge_euler<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    rng: &mut R,
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    let z = draw_noise(k, rng);
    sample_with(model, &natural, x0, x_delta, delta, k, &z, Proposal::Bridge)
}

/// Deterministic-noise variant of [`sample_bridge_euler`].
pub fn sample_bridge_euler_with_noise(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    z: &[f64],
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    sample_with(model, &natural, x0, x_delta, delta, k, z, Proposal::Bridge)
}

/// Sequential forward Euler sampler; the right endpoint plays no role in
/// the proposal, so the importance weight collapses to the final Euler
/// density factor.
pub fn sample_pedersen<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    delta: f64,
    k: usize,
    rng: &mut R,
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    let z = draw_noise(k, rng);
    sample_with(model, &natural, x0, f64::NAN, delta, k, &z, Proposal::Forward)
}

/// Deterministic-noise variant of [`sample_pedersen`].
pub fn sample_pedersen_with_noise(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    delta: f64,
    k: usize,
    z: &[f64],
) -> Result<BridgeDraw, SmcError> {
    let natural = model.natural(theta)?;
    sample_with(model, &natural, x0, f64::NAN, delta, k, z, Proposal::Forward)
}

/// Internal entry point used by the transition estimator: natural
/// parameters precomputed, sampler chosen by config.
pub(super) fn sample_for_estimate<R: Rng + ?Sized>(
    model: &SdeModel,
    natural: &[f64],
    x0: f64,
    x_delta: f64,
    delta: f64,
    k: usize,
    sampler: super::Sampler,
    rng: &mut R,
) -> Result<BridgeDraw, SmcError> {
    let z = draw_noise(k, rng);
    let proposal = match sampler {
        super::Sampler::Pedersen => Proposal::Forward,
        super::Sampler::BrownianBridge => Proposal::Bridge,
        super::Sampler::ModifiedBrownianBridge => Proposal::BridgeShrunk,
    };
    sample_with(model, natural, x0, x_delta, delta, k, &z, proposal)
}
