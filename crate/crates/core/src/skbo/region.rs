//! Confidence regions read off the fitted surrogate, and the coverage
//! experiment that checks them against the truth on simulated data.
//!
//! Two constructions: the likelihood-ratio region keeps every point whose
//! surrogate log likelihood is within half a chi-square quantile of the
//! maximum, evaluated over a grid (with a marching-squares contour in two
//! dimensions); the score-form region is the ellipsoid defined by the
//! curvature of the surrogate at the estimate.

use super::{run_skbo, SkboConfig, SkboError};
use crate::gp::GpState;
use crate::models::{ModelError, ObservedSeries, SdeModel, ThetaPoint};
use crate::rng::{derive_path, stream, tag};
use crate::util::{chi2_quantile, linspace};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Grid-based likelihood-ratio confidence region. The mask is row-major
/// with the last axis fastest; `contour` is populated for two dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrtRegion {
    pub alpha: f64,
    pub threshold: f64,
    pub theta_hat: ThetaPoint,
    /// node coordinates along each axis, all of length `resolution`
    pub axes: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    /// marching-squares boundary segments, natural coordinates
    pub contour: Vec<[[f64; 2]; 2]>,
}

impl LrtRegion {
    pub fn resolution(&self) -> usize {
        self.axes[0].len()
    }

    /// Mask entry at multi-index `idx` (one index per axis).
    pub fn mask_at(&self, idx: &[usize]) -> bool {
        assert_eq!(idx.len(), self.axes.len());
        let r = self.resolution();
        let mut flat = 0usize;
        for &i in idx {
            assert!(i < r);
            flat = flat * r + i;
        }
        self.mask[flat]
    }

    pub fn fraction_inside(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }
}

/// Whether `theta` is inside the likelihood-ratio region at the given
/// chi-square threshold: twice the surrogate drop from the maximum stays
/// below it. Grid-free, so usable on arbitrary points.
pub fn lrt_contains(gp: &GpState, theta_hat: &ThetaPoint, theta: &ThetaPoint, threshold: f64) -> bool {
    2.0 * (gp.kriging_mean(theta_hat) - gp.kriging_mean(theta)) <= threshold
}

/// Evaluate the likelihood-ratio region over a `resolution`-per-axis grid
/// of the search box. Supports up to three dimensions; two-dimensional
/// regions also get a linear-interpolation boundary contour.
pub fn lrt_region(
    gp: &GpState,
    theta_hat: &ThetaPoint,
    alpha: f64,
    resolution: usize,
) -> Result<LrtRegion, SkboError> {
    let b = gp.design().theta_box();
    let p = b.dim();
    if p > 3 {
        return Err(SkboError::RegionDimension(p));
    }
    assert!(resolution >= 2, "grid needs at least two nodes per axis");
    let threshold = chi2_quantile(1.0 - alpha, p);
    let eta_hat = gp.kriging_mean(theta_hat);

    let axes: Vec<Vec<f64>> = (0..p)
        .map(|j| linspace(b.lower()[j], b.upper()[j], resolution))
        .collect();

    // Margin g >= 0 marks the inside; reused for both mask and contour.
    let margin = |coords: &[f64]| {
        let t = ThetaPoint::from_slice(coords).expect("grid nodes are finite");
        threshold - 2.0 * (eta_hat - gp.kriging_mean(&t))
    };

    let n_nodes = resolution.pow(p as u32);
    let mut g = Vec::with_capacity(n_nodes);
    let mut coords = vec![0.0_f64; p];
    for flat in 0..n_nodes {
        let mut rem = flat;
        for j in (0..p).rev() {
            coords[j] = axes[j][rem % resolution];
            rem /= resolution;
        }
        g.push(margin(&coords));
    }
    let mask: Vec<bool> = g.iter().map(|&v| v >= 0.0).collect();

    let contour = if p == 2 {
        marching_squares(&axes[0], &axes[1], |i, j| g[i * resolution + j])
    } else {
        Vec::new()
    };

    Ok(LrtRegion {
        alpha,
        threshold,
        theta_hat: theta_hat.clone(),
        axes,
        mask,
        contour,
    })
}

/// Zero-level segments of a scalar field sampled on a rectilinear grid,
/// one linear-interpolation segment pair per cell, with the ambiguous
/// saddle cases split by the cell-center average.
fn marching_squares(
    xs: &[f64],
    ys: &[f64],
    g: impl Fn(usize, usize) -> f64,
) -> Vec<[[f64; 2]; 2]> {
    let mut segments = Vec::new();
    let cross = |a: [f64; 2], ga: f64, b: [f64; 2], gb: f64| {
        let t = ga / (ga - gb);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    };
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            let (ga, gb) = (g(i, j), g(i + 1, j));
            let (gc, gd) = (g(i + 1, j + 1), g(i, j + 1));
            let (pa, pb) = ([xs[i], ys[j]], [xs[i + 1], ys[j]]);
            let (pc, pd) = ([xs[i + 1], ys[j + 1]], [xs[i], ys[j + 1]]);
            let code = (ga >= 0.0) as usize
                | ((gb >= 0.0) as usize) << 1
                | ((gc >= 0.0) as usize) << 2
                | ((gd >= 0.0) as usize) << 3;
            if code == 0 || code == 15 {
                continue;
            }
            let bottom = || cross(pa, ga, pb, gb);
            let right = || cross(pb, gb, pc, gc);
            let top = || cross(pd, gd, pc, gc);
            let left = || cross(pa, ga, pd, gd);
            match code {
                1 | 14 => segments.push([left(), bottom()]),
                2 | 13 => segments.push([bottom(), right()]),
                3 | 12 => segments.push([left(), right()]),
                4 | 11 => segments.push([right(), top()]),
                6 | 9 => segments.push([bottom(), top()]),
                7 | 8 => segments.push([left(), top()]),
                5 | 10 => {
                    // Saddle: the center sign picks which corners connect.
                    let center_inside = (ga + gb + gc + gd) >= 0.0;
                    let first_inside = code == 5;
                    if center_inside == first_inside {
                        segments.push([left(), top()]);
                        segments.push([bottom(), right()]);
                    } else {
                        segments.push([left(), bottom()]);
                        segments.push([right(), top()]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    segments
}

/// Ellipsoidal confidence region from the surrogate curvature: points
/// where the quadratic form of the observed-information estimate stays
/// within the chi-square radius.
#[derive(Debug, Clone)]
pub struct RaoRegion {
    pub center: ThetaPoint,
    /// information matrix defining the quadratic form (positive definite)
    pub matrix: DMatrix<f64>,
    pub radius2: f64,
    /// eigenvalue flooring was needed to make the curvature usable
    pub projected: bool,
    /// the estimate sits on the search-box boundary, so the curvature is
    /// one-sided there
    pub on_boundary: bool,
}

impl RaoRegion {
    pub fn contains(&self, theta: &ThetaPoint) -> bool {
        let d = DVector::from_iterator(
            theta.dim(),
            theta
                .coords()
                .iter()
                .zip(self.center.coords())
                .map(|(a, b)| a - b),
        );
        (&self.matrix * &d).dot(&d) <= self.radius2
    }
}

pub fn rao_region(gp: &GpState, theta_hat: &ThetaPoint, alpha: f64) -> Result<RaoRegion, SkboError> {
    let p = gp.design().theta_box().dim();
    let info = gp.fisher_information(theta_hat)?;
    Ok(RaoRegion {
        center: theta_hat.clone(),
        matrix: info.matrix,
        radius2: chi2_quantile(1.0 - alpha, p),
        projected: info.projected,
        on_boundary: info.on_boundary,
    })
}

/// Outcome of a repeated-sampling coverage check of the likelihood-ratio
/// region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageOutcome {
    /// fraction of successful replicates whose region covered the truth
    pub coverage: f64,
    /// binomial standard error of that fraction
    pub se: f64,
    pub n_effective: usize,
    /// replicates dropped because the search failed outright
    pub failures: usize,
}

/// Simulate one series from the model at `theta_true`: the closed-form
/// Gaussian laws when the model carries them, otherwise a fine Euler grid
/// (128 substeps per observation) started from the stationary mean or,
/// failing that, from 1 in the admissible state space.
pub fn simulate_series<R: Rng + ?Sized>(
    model: &SdeModel,
    theta_true: &ThetaPoint,
    n_obs: usize,
    dt: f64,
    rng: &mut R,
) -> Result<ObservedSeries, ModelError> {
    let natural = model.natural(theta_true)?;
    if let (Some(stationary), Some(transition)) = (model.stationary, model.exact_transition) {
        let (m0, v0) = stationary(&natural)?;
        let z0: f64 = StandardNormal.sample(rng);
        let mut values = Vec::with_capacity(n_obs + 1);
        values.push(model.clamp_state(m0 + v0.sqrt() * z0));
        for i in 0..n_obs {
            let (m, v) = transition(&natural, values[i], dt)?;
            let z: f64 = StandardNormal.sample(rng);
            values.push(model.clamp_state(m + v.sqrt() * z));
        }
        return ObservedSeries::with_uniform_times(values, dt);
    }
    let x0 = match model.stationary {
        Some(stationary) => stationary(&natural)?.0,
        None => model.clamp_state(1.0),
    };
    let sub = 128;
    crate::models::euler_subsample(model, theta_true, x0, dt / sub as f64, n_obs * sub, sub, rng)
}

/// Repeatedly simulate at `theta_true`, run the full search on each
/// series, and record how often the level `1 - alpha` likelihood-ratio
/// region contains the truth. Replicates whose search fails are excluded
/// and counted.
pub fn coverage_experiment(
    model: &SdeModel,
    theta_true: &ThetaPoint,
    n_obs: usize,
    dt: f64,
    n_reps: usize,
    config: &SkboConfig,
    alpha: f64,
) -> Result<CoverageOutcome, SkboError> {
    config.validate()?;
    if n_reps == 0 {
        return Err(SkboError::BadConfig("coverage needs at least one replicate"));
    }
    let p = config.theta_box.dim();
    let threshold = chi2_quantile(1.0 - alpha, p);
    let mut hits = 0usize;
    let mut failures = 0usize;
    for rep in 0..n_reps {
        let mut sim_rng = stream(config.seed, &[tag::SIMULATE, rep as u64]);
        let series = match simulate_series(model, theta_true, n_obs, dt, &mut sim_rng) {
            Ok(s) => s,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let mut rep_config = config.clone();
        rep_config.seed = derive_path(config.seed, &[tag::REPLICATE, rep as u64]);
        match run_skbo(model, &series, &rep_config) {
            Ok(result) => {
                if lrt_contains(&result.gp, &result.theta_hat, theta_true, threshold) {
                    hits += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let n_effective = n_reps - failures;
    if n_effective == 0 {
        return Err(SkboError::BadConfig("every coverage replicate failed"));
    }
    let coverage = hits as f64 / n_effective as f64;
    let se = (coverage * (1.0 - coverage) / n_effective as f64).sqrt();
    Ok(CoverageOutcome {
        coverage,
        se,
        n_effective,
        failures,
    })
}
