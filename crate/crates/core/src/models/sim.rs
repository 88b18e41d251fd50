//! Path simulation: Euler-Maruyama stepping plus exact samplers for the
//! models with closed-form transitions.

use super::{ModelError, ObservedSeries, SdeModel, ThetaPoint};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One Euler-Maruyama step, with the positivity policy applied.
fn euler_step(
    model: &SdeModel,
    natural: &[f64],
    x: f64,
    dt: f64,
    z: f64,
    step: usize,
) -> Result<f64, ModelError> {
    let mu = (model.drift)(x, natural);
    let sigma = (model.diffusion)(x, natural);
    if !mu.is_finite() || !sigma.is_finite() {
        return Err(ModelError::NonFiniteState { step });
    }
    let next = x + mu * dt + sigma * dt.sqrt() * z;
    if !next.is_finite() {
        return Err(ModelError::NonFiniteState { step });
    }
    Ok(model.clamp_state(next))
}

/// Simulate `n_steps` Euler steps with supplied standard normal draws.
/// Returns the full path of length `n_steps + 1` starting at `x0`.
pub fn euler_simulate_with_noise(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    dt: f64,
    z: &[f64],
) -> Result<Vec<f64>, ModelError> {
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    let natural = model.natural(theta)?;
    let mut path = Vec::with_capacity(z.len() + 1);
    path.push(model.clamp_state(x0));
    for (k, &zk) in z.iter().enumerate() {
        let next = euler_step(model, &natural, path[k], dt, zk, k)?;
        path.push(next);
    }
    Ok(path)
}

/// Simulate `n_steps` Euler steps drawing the noise from `rng`.
pub fn euler_simulate<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let z: Vec<f64> = (0..n_steps).map(|_| StandardNormal.sample(rng)).collect();
    euler_simulate_with_noise(model, theta, x0, dt, &z)
}

/// Fine Euler simulation retaining every `stride`-th state (including the
/// start), producing a series observed at spacing `stride * dt`.
pub fn euler_subsample<R: Rng + ?Sized>(
    model: &SdeModel,
    theta: &ThetaPoint,
    x0: f64,
    dt: f64,
    n_steps: usize,
    stride: usize,
    rng: &mut R,
) -> Result<ObservedSeries, ModelError> {
    assert!(stride >= 1 && n_steps % stride == 0);
    let path = euler_simulate(model, theta, x0, dt, n_steps, rng)?;
    let values: Vec<f64> = path.iter().step_by(stride).copied().collect();
    ObservedSeries::with_uniform_times(values, dt * stride as f64)
}

/// Exact trajectory of the mean-reverting model: stationary start, then
/// sequential draws from the closed-form conditional law. Produces `n`
/// transitions (n + 1 observations) at spacing `dt`.
pub fn ou_simulate_exact<R: Rng + ?Sized>(
    theta0: f64,
    theta1: f64,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<ObservedSeries, ModelError> {
    let (m0, v0) = super::ou_stationary(theta0, theta1)?;
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    let mut values = Vec::with_capacity(n + 1);
    let z0: f64 = StandardNormal.sample(rng);
    values.push(m0 + v0.sqrt() * z0);
    for i in 0..n {
        let (m, v) = super::ou_exact_transition(theta0, theta1, values[i], dt)?;
        let z: f64 = StandardNormal.sample(rng);
        values.push(m + v.sqrt() * z);
    }
    ObservedSeries::with_uniform_times(values, dt)
}

/// Exact trajectory of the proportional-drift model via its lognormal
/// transition: log X steps are iid Gaussian.
pub fn gbm_simulate_exact<R: Rng + ?Sized>(
    theta0: f64,
    gamma: f64,
    x0: f64,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<ObservedSeries, ModelError> {
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    if x0 <= 0.0 {
        return Err(ModelError::NonPositiveValue { index: 0, value: x0 });
    }
    if gamma <= 0.0 {
        return Err(ModelError::NonPositiveValue { index: 1, value: gamma });
    }
    let drift = (theta0 - gamma * gamma / 2.0) * dt;
    let scale = gamma * dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    values.push(x0);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        values.push(values[i] * (drift + scale * z).exp());
    }
    ObservedSeries::with_uniform_times(values, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gbm, gcir, ou};
    use crate::rng::{stream, tag};
    use crate::util::{mean, sample_variance};
    use approx::assert_relative_eq;

    fn theta(coords: &[f64]) -> ThetaPoint {
        ThetaPoint::from_slice(coords).unwrap()
    }

    #[test]
    fn unit_noise_identity_step() {
        // Zero drift, unit diffusion, dt=1: the path is the noise cumsum.
        let m = SdeModel {
            name: "wiener",
            p: 0,
            drift: |_, _| 0.0,
            diffusion: |_, _| 1.0,
            transform: None,
            exact_transition: None,
            stationary: None,
            state_lower_bound: None,
        };
        let path = euler_simulate_with_noise(&m, &theta(&[]), 0.0, 1.0, &[0.5]).unwrap();
        assert_eq!(path, vec![0.0, 0.5]);
    }

    #[test]
    fn drift_root_is_fixed_point_without_noise() {
        let m = ou();
        let x0 = 2.0 / 3.0;
        let path = euler_simulate_with_noise(&m, &theta(&[2.0, -3.0]), x0, 0.01, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(path[1], x0, epsilon = 1e-14);
        assert_relative_eq!(path[2], x0, epsilon = 1e-14);
    }

    #[test]
    fn zero_drift_unit_diffusion_is_brownian() {
        let m = SdeModel {
            name: "wiener",
            p: 0,
            drift: |_, _| 0.0,
            diffusion: |_, _| 1.0,
            transform: None,
            exact_transition: None,
            stationary: None,
            state_lower_bound: None,
        };
        let (n_paths, n_steps, dt) = (10_000, 10, 0.1);
        let mut rng = stream(21, &[tag::SIMULATE]);
        let mut finals = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let path = euler_simulate(&m, &theta(&[]), 0.0, dt, n_steps, &mut rng).unwrap();
            finals.push(path[n_steps]);
        }
        let t = n_steps as f64 * dt;
        let mean_se = (t / n_paths as f64).sqrt();
        let var_se = t * (2.0 / (n_paths as f64 - 1.0)).sqrt();
        assert!(mean(&finals).abs() <= 4.0 * mean_se);
        assert!((sample_variance(&finals) - t).abs() <= 4.0 * var_se);
    }

    #[test]
    fn divergent_parameters_error_with_step_index() {
        let m = gbm();
        let err = euler_simulate_with_noise(&m, &theta(&[1e308, 1.0]), 1.0, 1.0, &[0.0, 0.0])
            .unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteState { .. }));
    }

    #[test]
    fn positivity_clamp_keeps_state_above_floor() {
        let m = gcir();
        // Large negative noise would push the state below zero.
        let t = m.search_point(&[0.5, -0.25, 1.0, 0.75]).unwrap();
        let path = euler_simulate_with_noise(&m, &t, 0.05, 0.1, &[-8.0, 1.0]).unwrap();
        assert!(path.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn subsampled_coarse_mean_matches_fine_grid_oracle() {
        // Long-run mean of the power-diffusion process, test grid dt=1e-3
        // with stride 100 against independent dt=1e-4 runs.
        let m = gcir();
        let t = m.search_point(&[0.5, -0.25, 1.0, 0.75]).unwrap();
        let mut rng = stream(31, &[tag::SIMULATE, 0]);
        let series = euler_subsample(&m, &t, 1.0, 1e-3, 100_000, 100, &mut rng).unwrap();
        assert_eq!(series.values().len(), 1001);
        let test_mean = mean(series.values());

        let reps = 10;
        let mut oracle_means = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut orng = stream(31, &[tag::SIMULATE, 1 + r as u64]);
            let path = euler_simulate(&m, &t, 1.0, 1e-4, 1_000_000, &mut orng).unwrap();
            oracle_means.push(mean(&path));
        }
        let mu = mean(&oracle_means);
        let sd = sample_variance(&oracle_means).sqrt();
        let band = 3.0 * sd * (1.0 + 1.0 / reps as f64).sqrt();
        assert!(
            (test_mean - mu).abs() <= band,
            "mean {} vs oracle {} (band {})",
            test_mean,
            mu,
            band
        );
    }

    #[test]
    fn exact_ou_trajectory_has_stationary_moments() {
        let mut rng = stream(41, &[tag::SIMULATE]);
        let series = ou_simulate_exact(2.0, -3.0, 4000, 0.1, &mut rng).unwrap();
        // Autocorrelation inflates the variance of the sample mean by
        // (1+a)/(1-a) with a = exp(theta1 dt).
        let a = (-0.3_f64).exp();
        let n = series.values().len() as f64;
        let infl = (1.0 + a) / (1.0 - a);
        let mean_se = ((1.0 / 6.0) * infl / n).sqrt();
        assert!((mean(series.values()) - 2.0 / 3.0).abs() <= 4.0 * mean_se);
        let var = sample_variance(series.values());
        let var_se = (1.0 / 6.0) * (2.0 * infl / n).sqrt();
        assert!((var - 1.0 / 6.0).abs() <= 4.0 * var_se);
    }

    #[test]
    fn exact_gbm_returns_are_gaussian() {
        let (theta0, gamma, dt, n) = (0.45, 0.37, 1.0 / 252.0, 5000);
        let mut rng = stream(51, &[tag::SIMULATE]);
        let series = gbm_simulate_exact(theta0, gamma, 100.0, n, dt, &mut rng).unwrap();
        let v = series.values();
        let returns: Vec<f64> = (1..v.len()).map(|i| (v[i] / v[i - 1]).ln()).collect();
        let m_true = (theta0 - gamma * gamma / 2.0) * dt;
        let v_true = gamma * gamma * dt;
        let nf = n as f64;
        assert!((mean(&returns) - m_true).abs() <= 4.0 * (v_true / nf).sqrt());
        assert!(
            (sample_variance(&returns) - v_true).abs() <= 4.0 * v_true * (2.0 / (nf - 1.0)).sqrt()
        );
    }

    #[test]
    fn euler_simulate_is_deterministic_given_stream() {
        let m = ou();
        let t = theta(&[2.0, -3.0]);
        let mut r1 = stream(5, &[tag::SIMULATE, 8]);
        let mut r2 = stream(5, &[tag::SIMULATE, 8]);
        let p1 = euler_simulate(&m, &t, 0.0, 0.1, 50, &mut r1).unwrap();
        let p2 = euler_simulate(&m, &t, 0.0, 0.1, 50, &mut r2).unwrap();
        assert_eq!(p1, p2);
    }
}
