//! Gaussian-process surrogate for a noisy objective surface on a box.
//!
//! The surrogate works in normalized coordinates: design points are mapped
//! into the unit hypercube and responses are centered and scaled before
//! fitting, which keeps a single isotropic range parameter meaningful across
//! axes of very different widths. Predictions are mapped back to the
//! original scales, so callers never see the internal coordinates.
//!
//! Covariance is squared-exponential, `tau2 * exp(-||u - u'||^2 / eta)`,
//! plus a nugget `sigma2` absorbing Monte Carlo noise in the responses.
//! Hyperparameters are chosen as the mode of their posterior under an
//! improper scale-balancing prior, with the constant mean `beta` profiled
//! out in closed form.

use crate::models::{ModelError, ThetaBox, ThetaPoint};
use crate::optim::{multi_start_max, NelderMeadOpts};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Jitter escalation: start clean, then add `JITTER_START * tau2` scaling
/// by 10 until `JITTER_CAP * tau2` before giving up on the factorization.
const JITTER_START: f64 = 1e-10;
const JITTER_CAP: f64 = 1e-4;

/// Search bounds for the posterior-mode fit, on the log scale.
const LOG_TAU2_BOUNDS: (f64, f64) = (-12.0, 12.0);
const LOG_SIGMA2_BOUNDS: (f64, f64) = (-12.0, 12.0);
const LOG_ETA_LO: f64 = -6.907755278982137; // ln(1e-3)
const LOG_ETA_HI: f64 = 6.907755278982137; // ln(1e3)

#[derive(Debug, Error)]
pub enum GpError {
    #[error("design needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("design lengths differ: {points} points, {y} responses, {mc_se} error bars")]
    LengthMismatch {
        points: usize,
        y: usize,
        mc_se: usize,
    },
    #[error("design point {0} lies outside the search box")]
    PointOutsideBox(usize),
    #[error("non-finite response at index {0}")]
    NonFiniteResponse(usize),
    #[error("error bar at index {0} must be finite and nonnegative")]
    BadErrorBar(usize),
    #[error("design points are all collocated; the range is unidentifiable")]
    Collocated,
    #[error("covariance is not positive definite even after jitter escalation")]
    NotPositiveDefinite,
    #[error("invalid hyperparameters: {0}")]
    BadHyper(&'static str),
    #[error("kriging sd gradient is undefined where the variance is zero")]
    ZeroVariance,
    #[error("hyperparameter search found no feasible mode")]
    FitFailed,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Evaluated objective values tied to the box they were sampled from.
///
/// `y_center`/`y_scale` record the affine response standardization chosen
/// at construction; they are part of the surrogate's identity and are
/// serialized with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSet {
    theta_box: ThetaBox,
    points: Vec<ThetaPoint>,
    y: Vec<f64>,
    mc_se: Vec<f64>,
    y_center: f64,
    y_scale: f64,
}

impl DesignSet {
    /// Build a design, centering responses on their mean and scaling by
    /// their sample standard deviation (falling back to 1 when degenerate).
    pub fn new(
        theta_box: ThetaBox,
        points: Vec<ThetaPoint>,
        y: Vec<f64>,
        mc_se: Vec<f64>,
    ) -> Result<Self, GpError> {
        let mut d = Self::validated(theta_box, points, y, mc_se)?;
        d.y_center = crate::util::mean(&d.y);
        let sd = if d.y.len() > 1 {
            crate::util::sample_sd(&d.y)
        } else {
            0.0
        };
        d.y_scale = if sd.is_finite() && sd > 1e-12 { sd } else { 1.0 };
        Ok(d)
    }

    /// Build a design that keeps responses in their raw units.
    pub fn new_unscaled(
        theta_box: ThetaBox,
        points: Vec<ThetaPoint>,
        y: Vec<f64>,
        mc_se: Vec<f64>,
    ) -> Result<Self, GpError> {
        Self::validated(theta_box, points, y, mc_se)
    }

    fn validated(
        theta_box: ThetaBox,
        points: Vec<ThetaPoint>,
        y: Vec<f64>,
        mc_se: Vec<f64>,
    ) -> Result<Self, GpError> {
        if points.len() != y.len() || points.len() != mc_se.len() {
            return Err(GpError::LengthMismatch {
                points: points.len(),
                y: y.len(),
                mc_se: mc_se.len(),
            });
        }
        if points.is_empty() {
            return Err(GpError::TooFewPoints { need: 1, got: 0 });
        }
        for (i, p) in points.iter().enumerate() {
            if !theta_box.contains(p) {
                return Err(GpError::PointOutsideBox(i));
            }
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(GpError::NonFiniteResponse(i));
            }
        }
        for (i, &s) in mc_se.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(GpError::BadErrorBar(i));
            }
        }
        Ok(Self {
            theta_box,
            points,
            y,
            mc_se,
            y_center: 0.0,
            y_scale: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn theta_box(&self) -> &ThetaBox {
        &self.theta_box
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.points
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn mc_se(&self) -> &[f64] {
        &self.mc_se
    }

    pub fn y_center(&self) -> f64 {
        self.y_center
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    /// Normalized coordinates of every design point, one row per point.
    fn unit_rows(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| self.theta_box.to_unit(p))
            .collect()
    }

    /// Responses on the standardized scale the GP actually sees.
    fn standardized(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.y.len(),
            self.y.iter().map(|&v| (v - self.y_center) / self.y_scale),
        )
    }
}

/// Stationary-GP hyperparameters on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub beta: f64,
    pub tau2: f64,
    pub eta: f64,
    pub sigma2: f64,
}

impl GpHyper {
    pub fn new(beta: f64, tau2: f64, eta: f64, sigma2: f64) -> Result<Self, GpError> {
        if !(beta.is_finite() && tau2.is_finite() && eta.is_finite() && sigma2.is_finite()) {
            return Err(GpError::BadHyper("all fields must be finite"));
        }
        if tau2 <= 0.0 {
            return Err(GpError::BadHyper("tau2 must be positive"));
        }
        if eta <= 0.0 {
            return Err(GpError::BadHyper("eta must be positive"));
        }
        if sigma2 < 0.0 {
            return Err(GpError::BadHyper("sigma2 must be nonnegative"));
        }
        Ok(Self {
            beta,
            tau2,
            eta,
            sigma2,
        })
    }
}

/// Log-prior over `(tau2, eta, sigma2)`; `beta` is flat in every variant.
#[derive(Clone, Copy)]
pub enum GpPrior {
    /// density proportional to eta / (sigma2 + tau2)
    RangeOverScale,
    /// flat in the searched log-coordinates
    Flat,
    /// user-supplied log density of (tau2, eta, sigma2)
    Custom(fn(f64, f64, f64) -> f64),
}

impl GpPrior {
    fn log_density(&self, tau2: f64, eta: f64, sigma2: f64) -> f64 {
        match self {
            GpPrior::RangeOverScale => eta.ln() - (sigma2 + tau2).ln(),
            GpPrior::Flat => 0.0,
            GpPrior::Custom(f) => f(tau2, eta, sigma2),
        }
    }
}

impl Default for GpPrior {
    fn default() -> Self {
        GpPrior::RangeOverScale
    }
}

/// Fitted surrogate: hyperparameters plus the factorization cache needed
/// for O(n^2) predictions.
///
/// Immutable once built; all prediction methods take `&self`.
#[derive(Debug, Clone)]
pub struct GpState {
    hyper: GpHyper,
    design: DesignSet,
    unit: Vec<Vec<f64>>,
    /// Lower-triangular factor L with L L^T = tau2 R + (sigma2 + jitter) I.
    chol: DMatrix<f64>,
    /// (tau2 R + (sigma2 + jitter) I)^{-1} (z - beta 1)
    alpha: DVector<f64>,
    jitter: f64,
}

fn pairwise_sq_dists(unit: &[Vec<f64>]) -> DMatrix<f64> {
    let n = unit.len();
    DMatrix::from_fn(n, n, |i, j| {
        unit[i]
            .iter()
            .zip(&unit[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Factor `tau2 exp(-d2/eta) + sigma2 I`, escalating diagonal jitter until
/// the Cholesky succeeds. Returns the lower factor and the jitter used.
fn factor_covariance(
    d2: &DMatrix<f64>,
    tau2: f64,
    eta: f64,
    sigma2: f64,
) -> Option<(DMatrix<f64>, f64)> {
    let n = d2.nrows();
    let mut jitter = 0.0;
    loop {
        let sigma = DMatrix::from_fn(n, n, |i, j| {
            let k = tau2 * (-d2[(i, j)] / eta).exp();
            if i == j {
                k + sigma2 + jitter
            } else {
                k
            }
        });
        if let Some(c) = Cholesky::new(sigma) {
            return Some((c.unpack(), jitter));
        }
        jitter = if jitter == 0.0 {
            JITTER_START * tau2
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_CAP * tau2 {
            return None;
        }
    }
}

/// Solve (L L^T) x = b given the lower factor.
fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let fwd = l
        .solve_lower_triangular(b)
        .expect("factor has positive diagonal");
    l.tr_solve_lower_triangular(&fwd)
        .expect("factor has positive diagonal")
}

fn log_det_from_factor(l: &DMatrix<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Log posterior of `(tau2, eta, sigma2)` with the constant mean profiled
/// out by generalized least squares. Returns the value and the profiled
/// mean on the standardized scale.
pub fn profile_log_posterior(
    design: &DesignSet,
    prior: GpPrior,
    tau2: f64,
    eta: f64,
    sigma2: f64,
) -> Result<(f64, f64), GpError> {
    let d2 = pairwise_sq_dists(&design.unit_rows());
    profile_log_posterior_given(design, &d2, prior, tau2, eta, sigma2)
}

fn profile_log_posterior_given(
    design: &DesignSet,
    d2: &DMatrix<f64>,
    prior: GpPrior,
    tau2: f64,
    eta: f64,
    sigma2: f64,
) -> Result<(f64, f64), GpError> {
    let n = design.len();
    let (l, _) = factor_covariance(d2, tau2, eta, sigma2).ok_or(GpError::NotPositiveDefinite)?;
    let z = design.standardized();
    let ones = DVector::from_element(n, 1.0);
    let si_z = chol_solve(&l, &z);
    let si_1 = chol_solve(&l, &ones);
    let denom = ones.dot(&si_1);
    if !(denom.is_finite() && denom > 0.0) {
        return Err(GpError::NotPositiveDefinite);
    }
    let beta = ones.dot(&si_z) / denom;
    let resid = &z - &ones * beta;
    // (z - beta 1)' Sigma^{-1} (z - beta 1), reusing the solves above.
    let quad = resid.dot(&si_z) - beta * resid.dot(&si_1);
    let log_ml = -0.5 * quad
        - 0.5 * log_det_from_factor(&l)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok((log_ml + prior.log_density(tau2, eta, sigma2), beta))
}

/// Fit hyperparameters by maximizing the profiled log posterior on the log
/// scale from several deterministic starts, then cache the factorization.
pub fn fit_posterior_mode(
    design: &DesignSet,
    prior: GpPrior,
    init: Option<GpHyper>,
) -> Result<GpState, GpError> {
    let n = design.len();
    if n < 3 {
        return Err(GpError::TooFewPoints { need: 3, got: n });
    }
    let unit = design.unit_rows();
    let d2 = pairwise_sq_dists(&unit);
    let max_d2 = d2.iter().cloned().fold(0.0_f64, f64::max);
    if max_d2 <= 1e-20 {
        return Err(GpError::Collocated);
    }

    // Coordinates: (log tau2, log eta, log sigma2).
    let objective = |x: &[f64]| {
        match profile_log_posterior_given(design, &d2, prior, x[0].exp(), x[1].exp(), x[2].exp()) {
            Ok((v, _)) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    };

    let lo = [LOG_TAU2_BOUNDS.0, LOG_ETA_LO, LOG_SIGMA2_BOUNDS.0];
    let hi = [LOG_TAU2_BOUNDS.1, LOG_ETA_HI, LOG_SIGMA2_BOUNDS.1];
    let mut starts = vec![
        vec![0.0, 0.0, -2.0],
        vec![0.0, -3.0, -2.0],
        vec![0.0, 3.0, 0.0],
        vec![-2.0, -1.0, -6.0],
        vec![2.0, 1.0, -4.0],
    ];
    if let Some(h) = init {
        if h.tau2 > 0.0 && h.eta > 0.0 && h.sigma2 > 0.0 {
            starts.push(vec![h.tau2.ln(), h.eta.ln(), h.sigma2.ln()]);
        }
    }
    let opts = NelderMeadOpts {
        max_iter: 400,
        tol: 1e-9,
        xtol: 1e-6,
        init_step: 0.15,
    };
    let (x, best) = multi_start_max(objective, &starts, &lo, &hi, &opts);
    if !best.is_finite() {
        return Err(GpError::FitFailed);
    }
    let (tau2, eta, sigma2) = (x[0].exp(), x[1].exp(), x[2].exp());
    let (_, beta) = profile_log_posterior_given(design, &d2, prior, tau2, eta, sigma2)?;
    GpState::from_hyper(design.clone(), GpHyper::new(beta, tau2, eta, sigma2)?)
}

impl GpState {
    /// Cache the factorization for a fixed set of hyperparameters.
    pub fn from_hyper(design: DesignSet, hyper: GpHyper) -> Result<Self, GpError> {
        let unit = design.unit_rows();
        let d2 = pairwise_sq_dists(&unit);
        let (chol, jitter) = factor_covariance(&d2, hyper.tau2, hyper.eta, hyper.sigma2)
            .ok_or(GpError::NotPositiveDefinite)?;
        let z = design.standardized();
        let resid = &z - DVector::from_element(z.len(), hyper.beta);
        let alpha = chol_solve(&chol, &resid);
        Ok(Self {
            hyper,
            design,
            unit,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn dim(&self) -> usize {
        self.design.theta_box().dim()
    }

    /// Covariances between a normalized point and every design point.
    fn cov_vector(&self, u: &[f64]) -> DVector<f64> {
        let (tau2, eta) = (self.hyper.tau2, self.hyper.eta);
        DVector::from_iterator(
            self.unit.len(),
            self.unit.iter().map(|ui| {
                let d2: f64 = ui
                    .iter()
                    .zip(u)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                tau2 * (-d2 / eta).exp()
            }),
        )
    }

    /// Posterior predictive mean in original response units.
    pub fn kriging_mean(&self, theta: &ThetaPoint) -> f64 {
        let u = self.design.theta_box().to_unit(theta);
        let c = self.cov_vector(&u);
        let m = self.hyper.beta + c.dot(&self.alpha);
        self.design.y_center + self.design.y_scale * m
    }

    /// Posterior predictive variance in squared original response units,
    /// clamped at zero.
    pub fn kriging_variance(&self, theta: &ThetaPoint) -> f64 {
        let u = self.design.theta_box().to_unit(theta);
        let c = self.cov_vector(&u);
        let s = chol_solve(&self.chol, &c);
        let v2 = (self.hyper.tau2 - c.dot(&s)).max(0.0);
        v2 * self.design.y_scale * self.design.y_scale
    }

    pub fn kriging_sd(&self, theta: &ThetaPoint) -> f64 {
        self.kriging_variance(theta).sqrt()
    }

    /// Gradient of the kriging mean with respect to the natural (box-scale)
    /// coordinates. Defined everywhere.
    pub fn mean_gradient(&self, theta: &ThetaPoint) -> Vec<f64> {
        let u = self.design.theta_box().to_unit(theta);
        self.mean_gradient_at_unit(&u)
    }

    fn mean_gradient_at_unit(&self, u: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let c = self.cov_vector(u);
        let mut g = vec![0.0; p];
        for (i, ui) in self.unit.iter().enumerate() {
            // dc_i/du_j = -(2/eta) (u_j - u_ij) c_i
            let w = self.alpha[i] * c[i] * (-2.0 / self.hyper.eta);
            for j in 0..p {
                g[j] += w * (u[j] - ui[j]);
            }
        }
        let b = self.design.theta_box();
        for (j, gj) in g.iter_mut().enumerate() {
            *gj *= self.design.y_scale / b.width(j);
        }
        g
    }

    /// Gradients of the kriging mean and of the kriging standard deviation
    /// with respect to the natural coordinates. Errs where the predictive
    /// variance is exactly zero, since the sd is not differentiable there.
    pub fn kriging_gradients(&self, theta: &ThetaPoint) -> Result<(Vec<f64>, Vec<f64>), GpError> {
        let p = self.dim();
        let u = self.design.theta_box().to_unit(theta);
        let dmean = self.mean_gradient_at_unit(&u);

        let c = self.cov_vector(&u);
        let s = chol_solve(&self.chol, &c);
        let v2 = (self.hyper.tau2 - c.dot(&s)).max(0.0);
        let y_scale = self.design.y_scale;
        let v = v2.sqrt() * y_scale;
        if v == 0.0 {
            return Err(GpError::ZeroVariance);
        }
        // dv2/du_j = -2 s' (dc/du_j); dv/dtheta_j chains the normalizations.
        let mut dsd = vec![0.0; p];
        for (i, ui) in self.unit.iter().enumerate() {
            let w = s[i] * c[i] * (-2.0 / self.hyper.eta);
            for j in 0..p {
                dsd[j] += -2.0 * w * (u[j] - ui[j]);
            }
        }
        let b = self.design.theta_box();
        for (j, dj) in dsd.iter_mut().enumerate() {
            // v in original units already; dv2 here is in standardized
            // units, so convert: dv = y_scale^2 dv2_std / (2 v).
            *dj = *dj * y_scale * y_scale / (2.0 * v) / b.width(j);
        }
        Ok((dmean, dsd))
    }

    /// Extend the design by one evaluated point, reusing the factorization
    /// via a bordered Cholesky update. Hyperparameters, response
    /// standardization, and jitter are kept as they are.
    pub fn with_added_point(
        &self,
        theta: ThetaPoint,
        y: f64,
        mc_se: f64,
    ) -> Result<Self, GpError> {
        let n = self.design.len();
        if !self.design.theta_box().contains(&theta) {
            return Err(GpError::PointOutsideBox(n));
        }
        if !y.is_finite() {
            return Err(GpError::NonFiniteResponse(n));
        }
        if !mc_se.is_finite() || mc_se < 0.0 {
            return Err(GpError::BadErrorBar(n));
        }

        let u_new = self.design.theta_box().to_unit(&theta);
        let c = self.cov_vector(&u_new);
        let kappa = self.hyper.tau2 + self.hyper.sigma2 + self.jitter;
        let l_row = self
            .chol
            .solve_lower_triangular(&c)
            .expect("factor has positive diagonal");
        let d2 = kappa - l_row.dot(&l_row);
        if d2 <= 0.0 {
            return Err(GpError::NotPositiveDefinite);
        }

        let mut chol = DMatrix::zeros(n + 1, n + 1);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        for i in 0..n {
            chol[(n, i)] = l_row[i];
        }
        chol[(n, n)] = d2.sqrt();

        let mut design = self.design.clone();
        design.points.push(theta);
        design.y.push(y);
        design.mc_se.push(mc_se);
        let mut unit = self.unit.clone();
        unit.push(u_new);
        let z = design.standardized();
        let resid = &z - DVector::from_element(z.len(), self.hyper.beta);
        let alpha = chol_solve(&chol, &resid);
        Ok(Self {
            hyper: self.hyper,
            design,
            unit,
            chol,
            alpha,
            jitter: self.jitter,
        })
    }

    /// Observed-information estimate at an interior maximizer: the negated
    /// Hessian of the kriging mean, from central differences of the
    /// analytic gradient, symmetrized and floored to positive definiteness.
    pub fn fisher_information(&self, theta_hat: &ThetaPoint) -> Result<FisherInfo, GpError> {
        let p = self.dim();
        if theta_hat.dim() != p {
            return Err(GpError::Model(ModelError::DimensionMismatch {
                expected: p,
                got: theta_hat.dim(),
            }));
        }
        let b = self.design.theta_box();
        let u = b.to_unit(theta_hat);
        let on_boundary = u.iter().any(|&ui| !(1e-9..=1.0 - 1e-9).contains(&ui));

        let h = 1e-4;
        let mut hess = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let gp = self.mean_gradient_at_unit(&up);
            let gm = self.mean_gradient_at_unit(&dn);
            for i in 0..p {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h * b.width(j));
            }
        }
        let fisher = (-(&hess) - hess.transpose()) * 0.5;

        let eig = fisher.clone().symmetric_eigen();
        let mut projected = false;
        let matrix = if eig.eigenvalues.iter().any(|&l| l < 1e-8) {
            projected = true;
            let floored = DVector::from_iterator(p, eig.eigenvalues.iter().map(|&l| l.max(1e-8)));
            let m = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
            (&m + m.transpose()) * 0.5
        } else {
            fisher
        };
        Ok(FisherInfo {
            matrix,
            projected,
            on_boundary,
        })
    }
}

/// Negated kriging-mean Hessian with diagnostics from its computation.
#[derive(Debug, Clone)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    /// eigenvalues were floored to reach positive definiteness
    pub projected: bool,
    /// requested point sat on the box boundary
    pub on_boundary: bool,
}

/// Serialized form: the factorization is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct GpStateRepr {
    hyper: GpHyper,
    design: DesignSet,
}

impl Serialize for GpState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GpStateRepr {
            hyper: self.hyper,
            design: self.design.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GpState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = GpStateRepr::deserialize(d)?;
        GpState::from_hyper(repr.design, repr.hyper).map_err(serde::de::Error::custom)
    }
}
