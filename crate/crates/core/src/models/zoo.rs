//! The model catalog and the closed forms attached to it.

use super::{ModelError, ObservedSeries, SdeModel, Transform};
use crate::optim::golden_section_max;
use crate::util::{ksum, mean, norm_log_pdf};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn linear_drift(x: f64, n: &[f64]) -> f64 {
    n[0] + n[1] * x
}

fn unit_diffusion(_x: f64, _n: &[f64]) -> f64 {
    1.0
}

fn power_diffusion(x: f64, n: &[f64]) -> f64 {
    // natural layout: (theta0, theta1, gamma, psi)
    n[2] * x.powf(n[3])
}

fn proportional_drift(x: f64, n: &[f64]) -> f64 {
    n[0] * x
}

fn proportional_diffusion(x: f64, n: &[f64]) -> f64 {
    n[1] * x
}

fn gen_power_diffusion(x: f64, n: &[f64]) -> f64 {
    // natural layout: (theta0, gamma, psi)
    n[1] * x.powf(n[2])
}

fn gcir_to_natural(s: &[f64]) -> Vec<f64> {
    vec![s[0], s[1], s[2].exp(), sigmoid(s[3])]
}

fn gcir_from_natural(n: &[f64]) -> Vec<f64> {
    vec![n[0], n[1], n[2].ln(), logit(n[3])]
}

fn gen_gbm_to_natural(s: &[f64]) -> Vec<f64> {
    vec![s[0], s[1].exp(), sigmoid(s[2])]
}

fn gen_gbm_from_natural(n: &[f64]) -> Vec<f64> {
    vec![n[0], n[1].ln(), logit(n[2])]
}

fn ou_transition_entry(n: &[f64], x0: f64, dt: f64) -> Result<(f64, f64), ModelError> {
    ou_exact_transition(n[0], n[1], x0, dt)
}

fn ou_stationary_entry(n: &[f64]) -> Result<(f64, f64), ModelError> {
    ou_stationary(n[0], n[1])
}

/// Mean-reverting model with linear drift `theta0 + theta1 x` and unit
/// diffusion. Search scale equals the natural scale.
pub fn ou() -> SdeModel {
    SdeModel {
        name: "ou",
        p: 2,
        drift: linear_drift,
        diffusion: unit_diffusion,
        transform: None,
        exact_transition: Some(ou_transition_entry),
        stationary: Some(ou_stationary_entry),
        state_lower_bound: None,
    }
}

/// Linear drift with power diffusion `gamma x^psi`. Natural parameters
/// (theta0, theta1, gamma, psi); search scale uses log gamma and
/// logit psi so the box stays unconstrained.
pub fn gcir() -> SdeModel {
    SdeModel {
        name: "gcir",
        p: 4,
        drift: linear_drift,
        diffusion: power_diffusion,
        transform: Some(Transform {
            to_natural: gcir_to_natural,
            from_natural: gcir_from_natural,
        }),
        exact_transition: None,
        stationary: None,
        state_lower_bound: Some(0.0),
    }
}

/// Proportional drift and diffusion (natural parameters theta0, gamma;
/// gamma > 0 required). No search transform: this model is fit in closed
/// form, not searched.
pub fn gbm() -> SdeModel {
    SdeModel {
        name: "gbm",
        p: 2,
        drift: proportional_drift,
        diffusion: proportional_diffusion,
        transform: None,
        exact_transition: None,
        stationary: None,
        state_lower_bound: Some(0.0),
    }
}

/// Proportional drift with power diffusion `gamma x^psi`. Natural
/// parameters (theta0, gamma, psi); search scale (theta0, log gamma,
/// logit psi).
pub fn gen_gbm() -> SdeModel {
    SdeModel {
        name: "gen-gbm",
        p: 3,
        drift: proportional_drift,
        diffusion: gen_power_diffusion,
        transform: Some(Transform {
            to_natural: gen_gbm_to_natural,
            from_natural: gen_gbm_from_natural,
        }),
        exact_transition: None,
        stationary: None,
        state_lower_bound: Some(0.0),
    }
}

pub fn model_zoo() -> Vec<SdeModel> {
    vec![ou(), gcir(), gbm(), gen_gbm()]
}

pub fn model_by_name(name: &str) -> Option<SdeModel> {
    match name {
        "ou" => Some(ou()),
        "gcir" => Some(gcir()),
        "gbm" => Some(gbm()),
        "gen-gbm" | "gen_gbm" | "gengbm" => Some(gen_gbm()),
        _ => None,
    }
}

/// Conditional law of the mean-reverting model after lag `dt`:
/// mean `x0 e^{theta1 dt} + theta0/(-theta1) (1 - e^{theta1 dt})`,
/// variance `(1 - e^{2 theta1 dt})/(-2 theta1)`. Requires theta1 < 0.
pub fn ou_exact_transition(
    theta0: f64,
    theta1: f64,
    x0: f64,
    dt: f64,
) -> Result<(f64, f64), ModelError> {
    if theta1 >= 0.0 {
        return Err(ModelError::NonNegativeRate(theta1));
    }
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    let a = (theta1 * dt).exp();
    let mean = x0 * a + theta0 / (-theta1) * (1.0 - a);
    let var = (1.0 - a * a) / (-2.0 * theta1);
    Ok((mean, var))
}

/// Stationary law of the mean-reverting model: mean `theta0/(-theta1)`,
/// variance `1/(-2 theta1)`. Requires theta1 < 0.
pub fn ou_stationary(theta0: f64, theta1: f64) -> Result<(f64, f64), ModelError> {
    if theta1 >= 0.0 {
        return Err(ModelError::NonNegativeRate(theta1));
    }
    Ok((theta0 / (-theta1), 1.0 / (-2.0 * theta1)))
}

/// Exact conditional log-likelihood of a series under the mean-reverting
/// model, summed over transitions (conditional on the first observation).
pub fn ou_exact_loglik(
    theta0: f64,
    theta1: f64,
    series: &ObservedSeries,
) -> Result<f64, ModelError> {
    let mut terms = Vec::with_capacity(series.n_transitions());
    for (x_from, x_to, dt) in series.transitions() {
        let (m, v) = ou_exact_transition(theta0, theta1, x_from, dt)?;
        terms.push(norm_log_pdf(x_to, m, v));
    }
    Ok(ksum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuFit {
    pub theta0: f64,
    pub theta1: f64,
    pub loglik: f64,
}

/// Exact MLE for the mean-reverting model on a uniformly spaced series.
///
/// theta0 has a closed-form conditional maximizer given theta1, so the
/// search reduces to a 1-D profile likelihood maximized by a coarse scan
/// followed by golden-section refinement (bracket tolerance 1e-8).
pub fn ou_exact_mle(series: &ObservedSeries) -> Result<OuFit, ModelError> {
    let dt = series.uniform_dt().ok_or(ModelError::NonUniformSpacing)?;
    let v = series.values();
    let n = series.n_transitions() as f64;

    // Sufficient statistics: the profile likelihood is O(1) per candidate.
    let from = &v[..v.len() - 1];
    let to = &v[1..];
    let s1 = ksum(from);
    let s2 = ksum(to);
    let s11 = ksum(&from.iter().map(|x| x * x).collect::<Vec<_>>());
    let s22 = ksum(&to.iter().map(|x| x * x).collect::<Vec<_>>());
    let s12 = ksum(&from.iter().zip(to).map(|(a, b)| a * b).collect::<Vec<_>>());

    let profile = |theta1: f64| -> (f64, f64) {
        let a = (theta1 * dt).exp();
        let s = (1.0 - a) / (-theta1);
        let theta0 = (s2 - a * s1) / (n * s);
        let b = theta0 * s;
        let rss = s22 - 2.0 * a * s12 - 2.0 * b * s2
            + a * a * s11
            + 2.0 * a * b * s1
            + n * b * b;
        let var = (1.0 - a * a) / (-2.0 * theta1);
        let loglik = -0.5 * (rss / var + n * var.ln() + n * (2.0 * std::f64::consts::PI).ln());
        (theta0, loglik)
    };

    // Coarse scan over the rate magnitude on a log grid, then refine.
    let (lo, hi) = (-50.0_f64, -1e-4_f64);
    let grid: Vec<f64> = crate::util::linspace((-lo).ln(), (-hi).ln(), 400)
        .into_iter()
        .map(|u| -u.exp())
        .collect();
    let mut best_i = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &t1) in grid.iter().enumerate() {
        let (_, ll) = profile(t1);
        if ll > best_val {
            best_val = ll;
            best_i = i;
        }
    }
    let left = if best_i == 0 { grid[0] } else { grid[best_i - 1] };
    let right = if best_i + 1 == grid.len() {
        grid[grid.len() - 1]
    } else {
        grid[best_i + 1]
    };
    let (theta1, _) = golden_section_max(|t1| profile(t1).1, left.min(right), left.max(right), 1e-8);
    let (theta0, loglik) = profile(theta1);
    Ok(OuFit {
        theta0,
        theta1,
        loglik,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmFit {
    pub theta0: f64,
    pub gamma: f64,
    /// Log-likelihood in price scale (log-return density plus the
    /// change-of-variables term), so it is comparable with path-imputation
    /// likelihoods of price models.
    pub loglik: f64,
    /// Set when the returns have zero variance; gamma is 0 and the
    /// likelihood degenerates.
    pub degenerate: bool,
}

/// Closed-form MLE for the proportional-drift, proportional-diffusion
/// model on a uniformly spaced positive series.
pub fn gbm_exact_mle(series: &ObservedSeries, dt: f64) -> Result<GbmFit, ModelError> {
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    for (index, &value) in series.values().iter().enumerate() {
        if value <= 0.0 {
            return Err(ModelError::NonPositiveValue { index, value });
        }
    }
    let v = series.values();
    let n = series.n_transitions();
    let returns: Vec<f64> = (1..v.len()).map(|i| (v[i] / v[i - 1]).ln()).collect();
    let r_bar = mean(&returns);
    let ss = ksum(
        &returns
            .iter()
            .map(|r| (r - r_bar) * (r - r_bar))
            .collect::<Vec<_>>(),
    );
    let gamma2 = ss / (n as f64 * dt);
    let theta0 = r_bar / dt + gamma2 / 2.0;

    // Constant-growth data makes the return variance collapse; check against
    // a relative scale because rounding keeps ss a few ulps above zero.
    let return_scale = r_bar.abs().max(f64::MIN_POSITIVE);
    if gamma2 * dt <= (1e-10 * return_scale).powi(2) {
        return Ok(GbmFit {
            theta0: r_bar / dt,
            gamma: 0.0,
            loglik: f64::INFINITY,
            degenerate: true,
        });
    }

    let ret_mean = (theta0 - gamma2 / 2.0) * dt;
    let ret_var = gamma2 * dt;
    let mut terms: Vec<f64> = returns
        .iter()
        .map(|&r| norm_log_pdf(r, ret_mean, ret_var))
        .collect();
    // Change of variables from log-price to price at each new observation.
    terms.extend(v[1..].iter().map(|x| -x.ln()));
    Ok(GbmFit {
        theta0,
        gamma: gamma2.sqrt(),
        loglik: ksum(&terms),
        degenerate: false,
    })
}
