//! Price-data application and plot-data emission: ingest daily closing
//! prices, compare the proportional-diffusion model against its
//! power-diffusion generalization by AIC and a likelihood-ratio test, and
//! dump likelihood surfaces as CSV grids for external plotting.

use super::{aic, HarnessError};
use crate::models::{gbm_exact_mle, gen_gbm, ObservedSeries, SdeModel, ThetaBox};
use crate::rng::{derive_path, stream, tag};
use crate::skbo::{run_skbo, SkboConfig, SkboTrace};
use crate::smc::{loglik_estimate, SmcConfig, LOG_FLOOR};
use crate::util::norm_cdf;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Trading-day spacing: roughly 252 sessions per calendar year.
pub const TRADING_DT: f64 = 1.0 / 252.0;

/// Validated daily price history, sorted by date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    adjusted_close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, adjusted_close: Vec<f64>) -> Result<Self, HarnessError> {
        if dates.len() != adjusted_close.len() {
            return Err(HarnessError::BadSpec(
                "dates and prices must have equal length".into(),
            ));
        }
        let mut rows: Vec<(NaiveDate, f64, usize)> = dates
            .into_iter()
            .zip(adjusted_close)
            .enumerate()
            .map(|(i, (d, p))| (d, p, i + 1))
            .collect();
        rows.sort_by_key(|r| r.0);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(HarnessError::BadRow {
                    row: pair[1].2,
                    message: format!("duplicate date {}", pair[1].0),
                });
            }
        }
        for (date, price, row) in &rows {
            if !price.is_finite() || *price <= 0.0 {
                return Err(HarnessError::BadRow {
                    row: *row,
                    message: format!("nonpositive price {price} on {date}"),
                });
            }
        }
        Ok(Self {
            dates: rows.iter().map(|r| r.0).collect(),
            adjusted_close: rows.iter().map(|r| r.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.adjusted_close
    }

    /// Observation series at the trading-day spacing.
    pub fn to_observed(&self) -> Result<ObservedSeries, HarnessError> {
        Ok(ObservedSeries::with_uniform_times(
            self.adjusted_close.clone(),
            TRADING_DT,
        )?)
    }
}

/// Read a CSV price history with `Date` (ISO-8601) and `Adj Close`
/// columns. Rows may arrive in any order; error messages carry 1-based
/// data-row numbers.
pub fn ingest_prices(path: &Path) -> Result<PriceSeries, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &'static str| -> Result<usize, HarnessError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(HarnessError::MissingColumn(name))
    };
    let date_col = find("Date")?;
    let price_col = find("Adj Close")?;

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let date_text = record.get(date_col).unwrap_or_default().trim();
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|e| {
            HarnessError::BadRow {
                row,
                message: format!("bad date {date_text:?}: {e}"),
            }
        })?;
        let price_text = record.get(price_col).unwrap_or_default().trim();
        let price: f64 = price_text.parse().map_err(|e| HarnessError::BadRow {
            row,
            message: format!("bad price {price_text:?}: {e}"),
        })?;
        dates.push(date);
        prices.push(price);
    }
    PriceSeries::new(dates, prices)
}

/// One fitted model in the comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    /// parameter count entering the information criterion
    pub k: usize,
    /// natural-scale estimates
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
}

/// Model comparison on one price history. The generalized fit is absent
/// when the search fails; the exact baseline always reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StockReport {
    pub n_obs: usize,
    pub gbm: ModelRow,
    pub gen: Option<ModelRow>,
    /// search evaluations beyond the initial design
    pub gen_added: Option<usize>,
    /// Monte Carlo standard error of the re-estimated log-likelihood
    pub gen_loglik_se: Option<f64>,
    pub lrt_stat: Option<f64>,
    pub lrt_p_value: Option<f64>,
}

/// Upper-tail probability of a 1-df chi-square variate: the square of a
/// standard normal, so the tail is twice the normal tail.
fn chi2_upper_tail_1df(stat: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    2.0 * (1.0 - norm_cdf(stat.sqrt()))
}

/// Compare the closed-form proportional-diffusion fit against the
/// power-diffusion generalization fitted by the sequential search.
///
/// The generalization's maximized log-likelihood is re-estimated at the
/// fitted point with a finer sampler (twice the imputation, four times
/// the particles) rather than read off the surrogate, whose kriging mean
/// smooths over estimator noise. Both likelihoods are in price scale, so
/// the information criteria are comparable.
pub fn stock_analysis(
    prices: &PriceSeries,
    skbo: &SkboConfig,
) -> Result<StockReport, HarnessError> {
    if prices.len() < 100 {
        return Err(HarnessError::BadSpec(format!(
            "stock analysis needs at least 100 observations, got {}",
            prices.len()
        )));
    }
    let series = prices.to_observed()?;
    let n_obs = prices.len();

    let gbm_fit = gbm_exact_mle(&series, TRADING_DT)?;
    let gbm_row = ModelRow {
        model: "gbm".into(),
        k: 2,
        theta: vec![gbm_fit.theta0, gbm_fit.gamma],
        loglik: gbm_fit.loglik,
        aic: aic(2, gbm_fit.loglik),
    };

    let model = gen_gbm();
    let (gen, gen_added, gen_loglik_se, lrt_stat, lrt_p_value) =
        match run_skbo(&model, &series, skbo) {
            Ok(result) => {
                let refine = SmcConfig::new(
                    2 * skbo.smc.k,
                    4 * skbo.smc.m,
                    skbo.smc.sampler,
                    derive_path(skbo.seed, &[tag::SMC, 0]),
                )?;
                let mut rng = stream(refine.seed, &[tag::SMC, 0]);
                let est = loglik_estimate(&model, &result.theta_hat, &series, &refine, &mut rng)?;
                let row = ModelRow {
                    model: "gen-gbm".into(),
                    k: 3,
                    theta: model.natural(&result.theta_hat)?,
                    loglik: est.value,
                    aic: aic(3, est.value),
                };
                let stat = 2.0 * (est.value - gbm_fit.loglik);
                let added = result.trace.entries.len() - skbo.n_init;
                (
                    Some(row),
                    Some(added),
                    Some(est.mc_se),
                    Some(stat),
                    Some(chi2_upper_tail_1df(stat)),
                )
            }
            Err(_) => (None, None, None, None, None),
        };

    Ok(StockReport {
        n_obs,
        gbm: gbm_row,
        gen,
        gen_added,
        gen_loglik_se,
        lrt_stat,
        lrt_p_value,
    })
}

/// Evaluate the estimated log-likelihood over a two-parameter grid and
/// write it, plus any search trace, as CSV rows `kind,theta0,theta1,y,mc_se`.
/// Grid node (i, j) draws from stream (seed, SMC, i*resolution + j), so
/// every cell is reproducible in isolation. Returns the data-row count.
pub fn emit_contour(
    model: &SdeModel,
    series: &ObservedSeries,
    theta_box: &ThetaBox,
    smc: &SmcConfig,
    resolution: usize,
    trace: Option<&SkboTrace>,
    out_path: &Path,
) -> Result<usize, HarnessError> {
    if model.p != 2 || theta_box.dim() != 2 {
        return Err(HarnessError::NotTwoParameter(model.p));
    }
    assert!(resolution >= 2, "a grid needs at least two nodes per axis");
    let xs = crate::util::linspace(theta_box.lower()[0], theta_box.upper()[0], resolution);
    let ys = crate::util::linspace(theta_box.lower()[1], theta_box.upper()[1], resolution);
    let floor_y = LOG_FLOOR * series.n_transitions() as f64;

    let mut out = String::from("kind,theta0,theta1,y,mc_se\n");
    let mut rows = 0usize;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let theta = crate::models::ThetaPoint::from_slice(&[x, y])?;
            let flat = (i * resolution + j) as u64;
            let mut rng = stream(smc.seed, &[tag::SMC, flat]);
            let (value, se) = match loglik_estimate(model, &theta, series, smc, &mut rng) {
                Ok(est) => (est.value, est.mc_se),
                Err(_) => (floor_y, 0.0),
            };
            let _ = writeln!(out, "grid,{x},{y},{value},{se}");
            rows += 1;
        }
    }
    if let Some(trace) = trace {
        for e in &trace.entries {
            let c = e.theta.coords();
            let _ = writeln!(out, "trace,{},{},{},{}", c[0], c[1], e.y, e.mc_se);
            rows += 1;
        }
    }
    std::fs::write(out_path, out)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::default_box;
    use crate::models::{gbm_simulate_exact, ou, ou_simulate_exact};
    use crate::skbo::AcquisitionMode;
    use crate::smc::Sampler;
    use approx::assert_relative_eq;

    fn write_csv(name: &str, body: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn two_row_file_ingests_in_order() {
        let path = write_csv(
            "prices_two_rows.csv",
            "Date,Adj Close\n2020-01-02,100.0\n2020-01-03,101.0\n",
        );
        let prices = ingest_prices(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(prices.len(), 2);
        assert_eq!(prices.prices(), &[100.0, 101.0]);
        let series = prices.to_observed().unwrap();
        assert_relative_eq!(series.uniform_dt().unwrap(), 1.0 / 252.0);
    }

    #[test]
    fn unsorted_rows_are_sorted_by_date() {
        let path = write_csv(
            "prices_unsorted.csv",
            "Date,Adj Close\n2020-01-03,101.0\n2020-01-02,100.0\n",
        );
        let prices = ingest_prices(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(prices.prices(), &[100.0, 101.0]);
        assert!(prices.dates()[0] < prices.dates()[1]);
    }

    #[test]
    fn zero_price_errors_with_row_number() {
        let path = write_csv(
            "prices_zero.csv",
            "Date,Adj Close\n2020-01-02,100.0\n2020-01-03,0.0\n",
        );
        let err = ingest_prices(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        match err {
            HarnessError::BadRow { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("nonpositive"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_dates_are_rejected() {
        let path = write_csv(
            "prices_dup.csv",
            "Date,Adj Close\n2020-01-02,100.0\n2020-01-02,101.0\n",
        );
        let err = ingest_prices(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, HarnessError::BadRow { .. }));
    }

    #[test]
    fn missing_column_is_named() {
        let path = write_csv("prices_nocol.csv", "Date,Close\n2020-01-02,100.0\n");
        let err = ingest_prices(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, HarnessError::MissingColumn("Adj Close")));
    }

    #[test]
    fn extra_columns_and_order_do_not_matter() {
        let path = write_csv(
            "prices_extra.csv",
            "Open,Adj Close,Date\n99.0,100.0,2020-01-02\n100.5,101.0,2020-01-03\n",
        );
        let prices = ingest_prices(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(prices.prices(), &[100.0, 101.0]);
    }

    fn synthetic_prices(n: usize, seed: u64) -> PriceSeries {
        let mut rng = stream(seed, &[tag::SIMULATE, 0]);
        let series = gbm_simulate_exact(0.45, 0.37, 100.0, n, TRADING_DT, &mut rng).unwrap();
        let start = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let dates: Vec<NaiveDate> = (0..series.values().len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        PriceSeries::new(dates, series.values().to_vec()).unwrap()
    }

    fn tiny_stock_config(seed: u64) -> SkboConfig {
        SkboConfig {
            theta_box: default_box("gen-gbm").unwrap(),
            n_init: 10,
            max_points: 14,
            stop_tol: 0.01,
            stop_patience: 3,
            acquisition_mode: AcquisitionMode::CandidateGrid,
            candidate_pool: 300,
            smc: SmcConfig::new(2, 10, Sampler::ModifiedBrownianBridge, 0).unwrap(),
            seed,
        }
    }

    #[test]
    fn stock_analysis_reports_both_models_with_consistent_criteria() {
        let prices = synthetic_prices(150, 23);
        let report = stock_analysis(&prices, &tiny_stock_config(23)).unwrap();
        assert_eq!(report.n_obs, 151);
        assert_eq!(report.gbm.k, 2);
        assert!(report.gbm.loglik.is_finite());
        assert_relative_eq!(report.gbm.aic, aic(2, report.gbm.loglik), epsilon = 1e-12);

        let gen = report.gen.as_ref().expect("search succeeded");
        assert_eq!(gen.k, 3);
        assert_eq!(gen.theta.len(), 3);
        assert_relative_eq!(gen.aic, aic(3, gen.loglik), epsilon = 1e-12);
        // psi is reported in natural scale, inside (0, 1) by construction
        // of the logistic transform... the search box maps to (0, 1).
        assert!(gen.theta[2] > 0.0 && gen.theta[2] < 1.0);

        let stat = report.lrt_stat.unwrap();
        assert_relative_eq!(stat, 2.0 * (gen.loglik - report.gbm.loglik), epsilon = 1e-10);
        let p = report.lrt_p_value.unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(report.gen_loglik_se.unwrap() >= 0.0);
        assert!(report.gen_added.unwrap() <= 4);
    }

    #[test]
    fn stock_analysis_requires_enough_history() {
        let prices = synthetic_prices(50, 29);
        let err = stock_analysis(&prices, &tiny_stock_config(29)).unwrap_err();
        assert!(matches!(err, HarnessError::BadSpec(_)));
    }

    #[test]
    fn chi2_one_df_tail_matches_known_points() {
        // 95th percentile of a 1-df chi square is 3.8415.
        assert_relative_eq!(chi2_upper_tail_1df(3.841458820694124), 0.05, epsilon = 1e-9);
        assert_relative_eq!(chi2_upper_tail_1df(0.0), 1.0);
        assert!(chi2_upper_tail_1df(-2.0) == 1.0);
    }

    #[test]
    fn contour_grid_covers_box_and_matches_direct_estimates() {
        let model = ou();
        let mut sim = stream(31, &[tag::SIMULATE, 0]);
        let series = ou_simulate_exact(2.0, -3.0, 15, 0.1, &mut sim).unwrap();
        let b = default_box("ou").unwrap();
        let smc = SmcConfig::new(2, 10, Sampler::ModifiedBrownianBridge, 77).unwrap();
        let path = std::env::temp_dir().join("contour_test.csv");
        let rows = emit_contour(&model, &series, &b, &smc, 3, None, &path).unwrap();
        assert_eq!(rows, 9);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10, "header plus nine data rows");
        assert_eq!(lines[0], "kind,theta0,theta1,y,mc_se");

        // Corner nodes appear verbatim.
        assert!(lines.iter().any(|l| l.starts_with("grid,0,-6,")));
        assert!(lines.iter().any(|l| l.starts_with("grid,4,-0.5,")));

        // Row (i=2, j=1) reproduces a direct call on stream (seed, SMC, 7).
        let fields: Vec<&str> = lines[8].split(',').collect();
        let theta = crate::models::ThetaPoint::from_slice(&[
            fields[1].parse().unwrap(),
            fields[2].parse().unwrap(),
        ])
        .unwrap();
        let mut rng = stream(77, &[tag::SMC, 7]);
        let est = loglik_estimate(&model, &theta, &series, &smc, &mut rng).unwrap();
        assert_eq!(fields[3].parse::<f64>().unwrap(), est.value);
        assert_eq!(fields[4].parse::<f64>().unwrap(), est.mc_se);
    }

    #[test]
    fn contour_rejects_wrong_dimension() {
        let model = gen_gbm();
        let series = ObservedSeries::with_uniform_times(vec![1.0, 1.1, 1.2], 0.1).unwrap();
        let b = default_box("gen-gbm").unwrap();
        let smc = SmcConfig::new(2, 4, Sampler::ModifiedBrownianBridge, 0).unwrap();
        let path = std::env::temp_dir().join("contour_bad.csv");
        let err = emit_contour(&model, &series, &b, &smc, 3, None, &path).unwrap_err();
        assert!(matches!(err, HarnessError::NotTwoParameter(3)));
    }

    #[test]
    fn contour_includes_trace_rows() {
        let model = ou();
        let mut sim = stream(37, &[tag::SIMULATE, 0]);
        let series = ou_simulate_exact(2.0, -3.0, 12, 0.1, &mut sim).unwrap();
        let b = default_box("ou").unwrap();
        let smc = SmcConfig::new(2, 8, Sampler::ModifiedBrownianBridge, 5).unwrap();
        let trace = SkboTrace {
            entries: vec![crate::skbo::TraceEntry {
                index: 0,
                theta: crate::models::ThetaPoint::from_slice(&[1.5, -2.5]).unwrap(),
                y: -20.0,
                mc_se: 0.3,
                floored: false,
                eval_failed: false,
                ei: None,
                theta_hat: None,
                eta_at_hat: None,
                hyper: None,
                elapsed_s: 0.0,
            }],
        };
        let path = std::env::temp_dir().join("contour_trace.csv");
        let rows = emit_contour(&model, &series, &b, &smc, 2, Some(&trace), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(rows, 5);
        assert!(text.contains("trace,1.5,-2.5,-20,0.3"));
    }
}
