//! Scalar diffusion models and observed data.
//!
//! An [`SdeModel`] bundles drift and diffusion functions of
//! `dX = mu(X, theta) dt + sigma(X, theta) dW` together with optional
//! closed forms (exact transitions, stationary law) and an optional
//! bijection between the natural parameters and the unconstrained scale
//! used for search. Parameter vectors handled by optimizers are always
//! on the search scale; drift and diffusion always receive natural
//! parameters.

mod sim;
mod zoo;

pub use sim::{
    euler_simulate, euler_simulate_with_noise, euler_subsample, gbm_simulate_exact,
    ou_simulate_exact,
};
pub use zoo::{
    gbm, gbm_exact_mle, gcir, gen_gbm, model_by_name, model_zoo, ou, ou_exact_loglik,
    ou_exact_mle, ou_exact_transition, ou_stationary, GbmFit, OuFit,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// States of lower-bounded models are clamped to `bound + STATE_FLOOR`
/// whenever a simulated step would cross the bound.
pub const STATE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("times and values lengths differ ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("series needs at least 2 observations, got {0}")]
    SeriesTooShort(usize),
    #[error("times not strictly increasing at index {0}")]
    NonIncreasingTimes(usize),
    #[error("box bounds invalid at coordinate {0}: lower must be strictly below upper")]
    BadBounds(usize),
    #[error("mean-reversion rate must be negative, got {0}")]
    NonNegativeRate(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("value at index {index} must be positive, got {value}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("simulation produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("series is not uniformly spaced (required for this estimator)")]
    NonUniformSpacing,
    #[error("model '{0}' has no {1}")]
    MissingCapability(&'static str, &'static str),
}

/// Parameter vector on the unconstrained search scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaPoint {
    coords: Vec<f64>,
}

impl ThetaPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in coords.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { index, value });
            }
        }
        Ok(Self { coords })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self, ModelError> {
        Self::new(coords.to_vec())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Compact search region: an axis-aligned box on the search scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ThetaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() {
                return Err(ModelError::NonFinite { index: i, value: lo });
            }
            if !hi.is_finite() {
                return Err(ModelError::NonFinite { index: i, value: hi });
            }
            if lo >= hi {
                return Err(ModelError::BadBounds(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> ThetaPoint {
        let coords = (0..self.dim())
            .map(|i| 0.5 * (self.lower[i] + self.upper[i]))
            .collect();
        ThetaPoint { coords }
    }

    pub fn contains(&self, theta: &ThetaPoint) -> bool {
        theta.dim() == self.dim()
            && theta
                .coords
                .iter()
                .enumerate()
                .all(|(i, &c)| c >= self.lower[i] && c <= self.upper[i])
    }

    pub fn clamp(&self, theta: &ThetaPoint) -> ThetaPoint {
        let coords = theta
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| c.clamp(self.lower[i], self.upper[i]))
            .collect();
        ThetaPoint { coords }
    }

    /// Affine map of a point into the unit hypercube.
    pub fn to_unit(&self, theta: &ThetaPoint) -> Vec<f64> {
        theta
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| (c - self.lower[i]) / self.width(i))
            .collect()
    }

    /// Inverse of [`ThetaBox::to_unit`].
    pub fn from_unit(&self, unit: &[f64]) -> ThetaPoint {
        let coords = unit
            .iter()
            .enumerate()
            .map(|(i, &u)| self.lower[i] + u * self.width(i))
            .collect();
        ThetaPoint { coords }
    }
}

/// Discretely observed path: values X_{t_0}..X_{t_N} at strictly
/// increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ObservedSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if times.len() != values.len() {
            return Err(ModelError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if values.len() < 2 {
            return Err(ModelError::SeriesTooShort(values.len()));
        }
        for (index, &value) in times.iter().chain(values.iter()).enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite {
                    index: index % times.len(),
                    value,
                });
            }
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(ModelError::NonIncreasingTimes(i));
            }
        }
        Ok(Self { times, values })
    }

    /// Series observed at 0, dt, 2dt, ...
    pub fn with_uniform_times(values: Vec<f64>, dt: f64) -> Result<Self, ModelError> {
        if dt <= 0.0 {
            return Err(ModelError::NonPositiveStep(dt));
        }
        let times = (0..values.len()).map(|i| i as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of transitions N (one less than the number of observations).
    pub fn n_transitions(&self) -> usize {
        self.values.len() - 1
    }

    /// Iterate over (x_from, x_to, dt) triples.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (1..self.values.len()).map(move |i| {
            (
                self.values[i - 1],
                self.values[i],
                self.times[i] - self.times[i - 1],
            )
        })
    }

    /// The common spacing, if the series is uniformly spaced to a relative
    /// tolerance of 1e-9.
    pub fn uniform_dt(&self) -> Option<f64> {
        let dt = self.times[1] - self.times[0];
        let ok = self
            .transitions()
            .all(|(_, _, d)| (d - dt).abs() <= 1e-9 * dt.abs());
        ok.then_some(dt)
    }
}

/// Bijection between natural model parameters and the unconstrained
/// search scale.
#[derive(Debug, Clone, Copy)]
pub struct Transform {
    pub to_natural: fn(&[f64]) -> Vec<f64>,
    pub from_natural: fn(&[f64]) -> Vec<f64>,
}

/// A scalar diffusion model. `drift` and `diffusion` take the state and
/// the natural parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct SdeModel {
    pub name: &'static str,
    pub p: usize,
    pub drift: fn(f64, &[f64]) -> f64,
    pub diffusion: fn(f64, &[f64]) -> f64,
    pub transform: Option<Transform>,
    /// Gaussian exact transition law `(natural, x0, dt) -> (mean, var)`.
    pub exact_transition: Option<fn(&[f64], f64, f64) -> Result<(f64, f64), ModelError>>,
    /// Gaussian stationary law `(natural) -> (mean, var)`.
    pub stationary: Option<fn(&[f64]) -> Result<(f64, f64), ModelError>>,
    pub state_lower_bound: Option<f64>,
}

impl SdeModel {
    /// Map a search-scale point to natural parameters.
    pub fn natural(&self, theta: &ThetaPoint) -> Result<Vec<f64>, ModelError> {
        if theta.dim() != self.p {
            return Err(ModelError::DimensionMismatch {
                expected: self.p,
                got: theta.dim(),
            });
        }
        Ok(match self.transform {
            Some(t) => (t.to_natural)(theta.coords()),
            None => theta.coords().to_vec(),
        })
    }

    /// Map natural parameters back to the search scale.
    pub fn search_point(&self, natural: &[f64]) -> Result<ThetaPoint, ModelError> {
        if natural.len() != self.p {
            return Err(ModelError::DimensionMismatch {
                expected: self.p,
                got: natural.len(),
            });
        }
        let coords = match self.transform {
            Some(t) => (t.from_natural)(natural),
            None => natural.to_vec(),
        };
        ThetaPoint::new(coords)
    }

    /// Apply the positivity policy to a candidate state.
    pub fn clamp_state(&self, x: f64) -> f64 {
        match self.state_lower_bound {
            Some(lb) if x <= lb + STATE_FLOOR => lb + STATE_FLOOR,
            _ => x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_point_rejects_non_finite() {
        assert!(ThetaPoint::new(vec![0.0, f64::NAN]).is_err());
        assert!(ThetaPoint::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(ThetaPoint::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn box_validates_bounds() {
        assert!(ThetaBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(ThetaBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = ThetaBox::new(vec![0.0, -6.0], vec![4.0, -0.5]).unwrap();
        assert!(b.contains(&ThetaPoint::from_slice(&[2.0, -3.0]).unwrap()));
        assert!(!b.contains(&ThetaPoint::from_slice(&[5.0, -3.0]).unwrap()));
    }

    #[test]
    fn box_unit_map_round_trips() {
        let b = ThetaBox::new(vec![-1.0, 2.0], vec![3.0, 10.0]).unwrap();
        let p = ThetaPoint::from_slice(&[0.5, 7.0]).unwrap();
        let u = b.to_unit(&p);
        assert_eq!(u, vec![0.375, 0.625]);
        let q = b.from_unit(&u);
        for (a, c) in p.coords().iter().zip(q.coords()) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn series_validation() {
        assert!(ObservedSeries::new(vec![0.0], vec![1.0]).is_err());
        assert!(ObservedSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(ObservedSeries::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let s = ObservedSeries::with_uniform_times(vec![1.0, 2.0, 4.0], 0.5).unwrap();
        assert_eq!(s.n_transitions(), 2);
        assert_eq!(s.uniform_dt(), Some(0.5));
        let trans: Vec<_> = s.transitions().collect();
        assert_eq!(trans, vec![(1.0, 2.0, 0.5), (2.0, 4.0, 0.5)]);
    }

    #[test]
    fn nonuniform_series_detected() {
        let s = ObservedSeries::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.uniform_dt(), None);
    }

    #[test]
    fn clamp_state_applies_floor() {
        let m = gcir();
        assert_eq!(m.clamp_state(-0.3), m.state_lower_bound.unwrap() + STATE_FLOOR);
        assert_eq!(m.clamp_state(0.5), 0.5);
        let ou = ou();
        assert_eq!(ou.clamp_state(-5.0), -5.0);
    }
}
