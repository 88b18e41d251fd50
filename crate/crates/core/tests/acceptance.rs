//! End-to-end accuracy gates for the whole stack, one test per criterion.
//!
//! Every test prints a single `ACCEPTANCE <n> <label>: PASS/FAIL` line
//! (run with `--nocapture` to see them on success) and asserts the same
//! condition, so the suite both documents and enforces the bar. The
//! statistical checks use seeds frozen after the tolerances were verified
//! with independent oracles: closed-form densities, Monte Carlo reference
//! estimates, and finite differences.

use chrono::{Days, NaiveDate};
use once_cell::sync::Lazy;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sde_mle::gp::{DesignSet, GpHyper, GpState};
use sde_mle::harness::{
    aic, bench_gcir, bench_ou, default_box, gcir_table_spec, ou_table_spec, stock_analysis,
    BenchOutcome, Method, MethodSummary, PriceSeries, ResultTable, SmcGridEntry, TRADING_DT,
};
use sde_mle::models::{
    gbm_exact_mle, gbm_simulate_exact, gen_gbm, ou, ou_exact_transition, ou_stationary,
};
use sde_mle::rng::{stream, tag};
use sde_mle::skbo::{
    coverage_experiment, ei_gradient, ei_value, expected_improvement, latin_hypercube,
    lrt_contains, rao_region, replicate_seed, simulate_series, SkboConfig,
};
use sde_mle::smc::{sample_bridge_modified, transition_estimate};
use sde_mle::util::{chi2_quantile, linspace, norm_log_pdf, KahanSum};
use sde_mle::{Sampler, SmcConfig, ThetaBox, ThetaPoint};

/// 0.95 quantile of a 1-df chi-square variate.
const CHI2_95_DF1: f64 = 3.841458820694124;

fn verdict(n: u32, label: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {label}: {word} ({detail})");
    assert!(pass, "ACCEPTANCE {n} {label}: FAIL ({detail})");
}

fn point(coords: &[f64]) -> ThetaPoint {
    ThetaPoint::new(coords.to_vec()).unwrap()
}

// ---------------------------------------------------------------------
// 1. Closed-form expected improvement against a brute-force Monte Carlo
//    oracle: E max(d + v Z, 0) over ten million standard normal draws.
//    The normalized distance d/v is kept above -3.5 so every instance
//    leaves the oracle with a nonzero standard error to test against.

#[test]
fn criterion_01_expected_improvement_closed_form() {
    let mut rng = stream(0xEC01, &[tag::CANDIDATE, 1]);
    let n = 10_000_000usize;
    let mut worst_z = 0.0f64;
    for _ in 0..50 {
        let v = rng.random_range(0.05..2.0);
        let d = v * rng.random_range(-3.5..3.0);
        let closed = ei_value(d, v);
        let mut sum = KahanSum::new();
        let mut sumsq = KahanSum::new();
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = (d + v * z).max(0.0);
            sum.add(x);
            sumsq.add(x * x);
        }
        let mean = sum.value() / n as f64;
        let var = (sumsq.value() - n as f64 * mean * mean) / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        worst_z = worst_z.max((closed - mean).abs() / se);
    }
    verdict(
        1,
        "expected improvement closed form",
        worst_z <= 4.0,
        &format!("worst |closed - MC| = {worst_z:.2} standard errors, limit 4"),
    );
}

// ---------------------------------------------------------------------
// 2. Analytic gradients of the kriging mean, kriging standard deviation,
//    and expected improvement against central finite differences.

#[test]
fn criterion_02_surrogate_gradients() {
    let mut rng = stream(0xEC02, &[tag::CANDIDATE, 2]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..2 {
            let l = rng.random_range(-3.0..0.0);
            let w = rng.random_range(1.0..4.0);
            lo.push(l);
            hi.push(l + w);
        }
        let tb = ThetaBox::new(lo, hi).unwrap();
        let n = rng.random_range(5..10);
        let pts = latin_hypercube(&tb, n, &mut rng);
        let (a, b, c, d) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let y: Vec<f64> = pts
            .iter()
            .map(|p| {
                let x = p.coords();
                a * (1.3 * x[0]).sin() + b * (0.7 * x[1]).cos() + c * x[0] * x[1] + d * x[0]
            })
            .collect();
        let design = DesignSet::new(tb.clone(), pts.clone(), y, vec![0.0; n]).unwrap();
        let hyper = GpHyper::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.3..1.5),
            0.01,
        )
        .unwrap();
        let state = GpState::from_hyper(design, hyper).unwrap();
        let eta_best = pts
            .iter()
            .map(|p| state.kriging_mean(p))
            .fold(f64::NEG_INFINITY, f64::max);

        let theta = tb.from_unit(&[rng.random_range(0.15..0.85), rng.random_range(0.15..0.85)]);
        let (dmean, dsd) = state.kriging_gradients(&theta).unwrap();
        let dei = ei_gradient(&state, &theta, eta_best).unwrap();

        for axis in 0..2 {
            let h = 1e-6 * tb.width(axis);
            let mut up = theta.coords().to_vec();
            let mut dn = up.clone();
            up[axis] += h;
            dn[axis] -= h;
            let (up, dn) = (point(&up), point(&dn));
            let fd = |f: &dyn Fn(&ThetaPoint) -> f64| (f(&up) - f(&dn)) / (2.0 * h);

            let fd_mean = fd(&|p| state.kriging_mean(p));
            let fd_sd = fd(&|p| state.kriging_sd(p));
            let fd_ei = fd(&|p| expected_improvement(&state, p, eta_best));
            for (g, f) in [(dmean[axis], fd_mean), (dsd[axis], fd_sd), (dei[axis], fd_ei)] {
                worst = worst.max((g - f).abs() / (1.0 + f.abs()));
            }
        }
    }
    verdict(
        2,
        "surrogate gradients",
        worst <= 1e-5,
        &format!("worst relative gap to central differences = {worst:.2e}, limit 1e-5"),
    );
}

// ---------------------------------------------------------------------
// 3. With constant diffusion the modified bridge proposal is exactly a
//    Brownian bridge: interior means, variances, and cross-covariances
//    must match the closed form within Monte Carlo error.

#[test]
fn criterion_03_bridge_sampler_law() {
    let model = ou();
    let theta = point(&[2.0, -3.0]);
    let (x0, x_delta, delta, k) = (0.3, 0.9, 0.5, 5usize);
    let n = 100_000usize;
    let dim = k - 1;

    let mut rng = stream(0xEC03, &[tag::SMC, 3]);
    let mut sums = vec![KahanSum::new(); dim];
    let mut prods = vec![vec![KahanSum::new(); dim]; dim];
    for _ in 0..n {
        let draw = sample_bridge_modified(&model, &theta, x0, x_delta, delta, k, &mut rng).unwrap();
        assert_eq!(draw.interior.len(), dim);
        for a in 0..dim {
            sums[a].add(draw.interior[a]);
            for b in a..dim {
                prods[a][b].add(draw.interior[a] * draw.interior[b]);
            }
        }
    }
    let nf = n as f64;
    let means: Vec<f64> = sums.iter().map(|s| s.value() / nf).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        for b in a..dim {
            cov[a][b] = (prods[a][b].value() - nf * means[a] * means[b]) / (nf - 1.0);
        }
    }

    // Brownian bridge from x0 to x_delta with unit diffusion.
    let tau = |j: usize| (j + 1) as f64 * delta / k as f64;
    let mut worst_z = 0.0f64;
    for a in 0..dim {
        let exact_mean = x0 + (x_delta - x0) * tau(a) / delta;
        let se_mean = (cov[a][a] / nf).sqrt();
        worst_z = worst_z.max((means[a] - exact_mean).abs() / se_mean);
        for b in a..dim {
            let exact_cov = tau(a) * (delta - tau(b)) / delta;
            let se = if a == b {
                cov[a][a] * (2.0 / (nf - 1.0)).sqrt()
            } else {
                ((cov[a][a] * cov[b][b] + cov[a][b] * cov[a][b]) / (nf - 1.0)).sqrt()
            };
            worst_z = worst_z.max((cov[a][b] - exact_cov).abs() / se);
        }
    }
    verdict(
        3,
        "bridge sampler law",
        worst_z <= 4.0,
        &format!("worst moment deviation = {worst_z:.2} standard errors over {n} draws, limit 4"),
    );
}

// ---------------------------------------------------------------------
// 4. The importance-sampling transition estimate against the exact
//    mean-reverting transition density at random state pairs.

#[test]
fn criterion_04_transition_density_estimator() {
    let model = ou();
    let theta = point(&[2.0, -3.0]);
    let delta = 0.1;
    let config = SmcConfig::new(20, 10_000, Sampler::ModifiedBrownianBridge, 0xEC04).unwrap();
    let (st_mean, st_var) = ou_stationary(2.0, -3.0).unwrap();

    let mut pair_rng = stream(0xEC04, &[tag::TRANSITION, 0]);
    let mut worst = 0.0f64;
    let mut pass = true;
    for i in 0..10u64 {
        let x0 = st_mean + st_var.sqrt() * pair_rng.random_range(-2.0..2.0);
        let (m, v) = ou_exact_transition(2.0, -3.0, x0, delta).unwrap();
        let x_delta = m + v.sqrt() * pair_rng.random_range(-1.75..1.75);
        let exact = norm_log_pdf(x_delta, m, v).exp();

        let mut rng = stream(0xEC04, &[tag::TRANSITION, i + 1]);
        let est =
            transition_estimate(&model, &theta, x0, x_delta, delta, &config, &mut rng).unwrap();
        let rel = (est.p_hat / exact - 1.0).abs();
        let tol = (3.0 * est.rel_se).max(0.02);
        worst = worst.max(rel / tol);
        pass &= rel <= tol;
    }
    verdict(
        4,
        "transition density estimator",
        pass,
        &format!("worst relative error = {worst:.2} of its max(2%, 3 SE) allowance"),
    );
}

// ---------------------------------------------------------------------
// 5. With the nugget at zero the surrogate interpolates its design.

#[test]
fn criterion_05_noise_free_interpolation() {
    let tb = ThetaBox::new(vec![-2.0, -1.0], vec![3.0, 4.0]).unwrap();
    let mut rng = stream(0xEC05, &[tag::LHS, 5]);
    let pts = latin_hypercube(&tb, 30, &mut rng);
    let y: Vec<f64> = pts
        .iter()
        .map(|p| {
            let x = p.coords();
            10.0 * x[0].sin() + 3.0 * (2.0 * x[1]).cos() + x[0] * x[1]
        })
        .collect();
    let design = DesignSet::new(tb, pts.clone(), y.clone(), vec![0.0; 30]).unwrap();
    let state = GpState::from_hyper(design, GpHyper::new(0.0, 1.0, 0.4, 0.0).unwrap()).unwrap();

    let scale = state.design().y_scale();
    let worst = pts
        .iter()
        .zip(&y)
        .map(|(p, yi)| (state.kriging_mean(p) - yi).abs())
        .fold(0.0f64, f64::max);
    verdict(
        5,
        "noise-free interpolation",
        worst <= 1e-6 * scale,
        &format!("max |fit - response| = {:.2e} of the response scale, limit 1e-6", worst / scale),
    );
}

// ---------------------------------------------------------------------
// 6. The closed-form proportional-growth fit against an independently
//    derived log-return maximum likelihood oracle.

#[test]
fn criterion_06_proportional_growth_exact_fit() {
    let dt = 1.0 / 252.0;
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = stream(0xEC06, &[tag::SIMULATE, i]);
        let theta0 = rng.random_range(-0.3..0.5);
        let gamma = rng.random_range(0.1..0.6);
        let series = gbm_simulate_exact(theta0, gamma, 100.0, 250, dt, &mut rng).unwrap();
        let fit = gbm_exact_mle(&series, dt).unwrap();
        assert!(!fit.degenerate);

        let v = series.values();
        let n = (v.len() - 1) as f64;
        let r: Vec<f64> = (1..v.len()).map(|j| (v[j] / v[j - 1]).ln()).collect();
        let r_bar = r.iter().sum::<f64>() / n;
        let s2 = r.iter().map(|x| (x - r_bar) * (x - r_bar)).sum::<f64>() / n;
        let gamma_hat = (s2 / dt).sqrt();
        let theta0_hat = r_bar / dt + s2 / (2.0 * dt);
        let jacobian: f64 = v[1..].iter().map(|x| x.ln()).sum();
        let loglik = -0.5 * n * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * n - jacobian;

        for (got, want) in [
            (fit.theta0, theta0_hat),
            (fit.gamma, gamma_hat),
            (fit.loglik, loglik),
        ] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    verdict(
        6,
        "proportional-growth exact fit",
        worst <= 1e-10,
        &format!("worst relative disagreement with the oracle = {worst:.2e}, limit 1e-10"),
    );
}

// ---------------------------------------------------------------------
// 7-9. The mean-reverting benchmark: 100 replicates of the exact, the
//      sequential-search, and the fixed-grid estimators at two noise
//      settings. Shared across the next three tests.

static OU_TABLE: Lazy<BenchOutcome> =
    Lazy::new(|| bench_ou(&ou_table_spec(100, 20260818)).expect("benchmark must run"));

fn find_row<'a>(table: &'a ResultTable, method: Method, setting: &str) -> &'a MethodSummary {
    table
        .rows
        .iter()
        .find(|r| r.method == method && r.setting == setting)
        .unwrap_or_else(|| panic!("missing row {method:?} {setting}"))
}

#[test]
fn criterion_07_sequential_search_accuracy() {
    let outcome = &*OU_TABLE;
    let skbo = find_row(&outcome.table, Method::Skbo, "K=10 M=100");
    let naive = find_row(&outcome.table, Method::Naive, "K=10 M=100");
    let pass = outcome.failures == 0
        && skbo.per_param[0].rmse <= 0.4
        && skbo.per_param[1].rmse <= 0.5
        && skbo.avg_added <= 25.0
        && skbo.avg_evals < naive.avg_evals;
    verdict(
        7,
        "sequential search accuracy",
        pass,
        &format!(
            "rmse = ({:.3}, {:.3}) vs limits (0.4, 0.5), avg added = {:.1} vs 25, \
             evaluations {:.1} < fixed grid {:.1}, failed replicates = {}",
            skbo.per_param[0].rmse,
            skbo.per_param[1].rmse,
            skbo.avg_added,
            skbo.avg_evals,
            naive.avg_evals,
            outcome.failures
        ),
    );
}

#[test]
fn criterion_08_exact_likelihood_reference_column() {
    let outcome = &*OU_TABLE;
    let exact = find_row(&outcome.table, Method::Exact, "exact");
    let sd = exact.per_param[0].sd;
    let coverage = exact.coverage.expect("exact column reports coverage");
    let pass = (0.15..=0.35).contains(&sd) && (0.93..=1.0).contains(&coverage);
    verdict(
        8,
        "exact-likelihood reference column",
        pass,
        &format!("sd(theta0) = {sd:.3} in [0.15, 0.35], coverage = {coverage:.3} in [0.93, 1.0]"),
    );
}

#[test]
fn criterion_09_search_beats_fixed_grid() {
    let outcome = &*OU_TABLE;
    let mut pass = true;
    let mut detail = String::new();
    for setting in ["K=5 M=25", "K=10 M=100"] {
        let skbo = find_row(&outcome.table, Method::Skbo, setting);
        let naive = find_row(&outcome.table, Method::Naive, setting);
        for a in 0..2 {
            pass &= skbo.per_param[a].rmse <= naive.per_param[a].rmse;
        }
        detail.push_str(&format!(
            "{setting}: search rmse ({:.3}, {:.3}) vs grid ({:.3}, {:.3}); ",
            skbo.per_param[0].rmse,
            skbo.per_param[1].rmse,
            naive.per_param[0].rmse,
            naive.per_param[1].rmse
        ));
    }
    verdict(9, "search beats fixed grid", pass, detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------------
// 10. The power-diffusion benchmark: 25 replicates of the sequential
//     search on the four-parameter model, judged on the diffusion
//     exponent and the evaluation budget.

static GCIR_TABLE: Lazy<BenchOutcome> = Lazy::new(|| {
    let mut spec = gcir_table_spec(25, 20260510);
    spec.smc_grid = vec![SmcGridEntry { k: 10, m: Some(100) }];
    spec.methods = vec![Method::Skbo];
    bench_gcir(&spec).expect("benchmark must run")
});

#[test]
fn criterion_10_power_diffusion_search_accuracy() {
    let outcome = &*GCIR_TABLE;
    let skbo = find_row(&outcome.table, Method::Skbo, "K=10 M=100");
    let gamma_rmse = skbo.per_param[2].rmse;
    let pass = outcome.failures == 0 && gamma_rmse <= 0.35 && skbo.avg_added <= 80.0;
    verdict(
        10,
        "power-diffusion search accuracy",
        pass,
        &format!(
            "rmse(gamma) = {gamma_rmse:.3} vs limit 0.35, avg added = {:.1} vs 80, \
             failed replicates = {}",
            skbo.avg_added, outcome.failures
        ),
    );
}

// ---------------------------------------------------------------------
// 11. Coverage of the likelihood-ratio region over full repetitions of
//     simulate-search-test at the 95% level.

#[test]
fn criterion_11_region_coverage() {
    let model = ou();
    let theta_true = model.search_point(&[2.0, -3.0]).unwrap();
    let seed = 20260811u64;
    let smc = SmcConfig::new(10, 100, Sampler::ModifiedBrownianBridge, seed).unwrap();
    let config = SkboConfig::for_box(default_box("ou").unwrap(), smc, seed);
    let outcome = coverage_experiment(&model, &theta_true, 1000, 0.1, 200, &config, 0.05).unwrap();
    let pass = outcome.failures == 0 && (0.75..=0.99).contains(&outcome.coverage);
    verdict(
        11,
        "region coverage",
        pass,
        &format!(
            "coverage = {:.3} in [0.75, 0.99] over {} replicates, failed = {}",
            outcome.coverage, outcome.n_effective, outcome.failures
        ),
    );
}

// ---------------------------------------------------------------------
// 12. On an exactly quadratic surface the likelihood-ratio region and
//     the score-based ellipse describe the same set.

#[test]
fn criterion_12_ratio_and_score_regions_agree() {
    let res = 33;
    let tb = ThetaBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let grid = linspace(-3.0, 3.0, res);
    let mut pts = Vec::new();
    let mut y = Vec::new();
    for &a in &grid {
        for &b in &grid {
            pts.push(point(&[a, b]));
            y.push(-(2.0 * a * a + a * b + b * b));
        }
    }
    let n = pts.len();
    let design = DesignSet::new(tb, pts, y, vec![0.0; n]).unwrap();
    let state = GpState::from_hyper(design, GpHyper::new(0.0, 1.0, 0.02, 0.0).unwrap()).unwrap();

    let hat = point(&[0.0, 0.0]);
    let threshold = chi2_quantile(0.95, 2);
    let ellipse = rao_region(&state, &hat, 0.05).unwrap();

    let (mut sym, mut union) = (0usize, 0usize);
    for &a in &linspace(-3.0, 3.0, 200) {
        for &b in &linspace(-3.0, 3.0, 200) {
            let p = point(&[a, b]);
            let in_lrt = lrt_contains(&state, &hat, &p, threshold);
            let in_rao = ellipse.contains(&p);
            sym += usize::from(in_lrt != in_rao);
            union += usize::from(in_lrt || in_rao);
        }
    }
    let ratio = sym as f64 / union as f64;
    verdict(
        12,
        "ratio and score regions agree",
        ratio < 0.02,
        &format!("symmetric difference = {:.2}% of the union, limit 2%", 100.0 * ratio),
    );
}

// ---------------------------------------------------------------------
// 13. Model comparison on price series: the information criterion
//     arithmetic, the null calibration of the ratio test on data from
//     the restricted model, and recovery of the diffusion exponent on
//     data from the larger model.

fn synthetic_prices(values: &[f64]) -> PriceSeries {
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
    let dates: Vec<NaiveDate> = (0..values.len())
        .map(|i| start.checked_add_days(Days::new(i as u64)).unwrap())
        .collect();
    PriceSeries::new(dates, values.to_vec()).unwrap()
}

fn stock_config(rep_seed: u64) -> SkboConfig {
    let smc = SmcConfig::new(10, 100, Sampler::ModifiedBrownianBridge, rep_seed).unwrap();
    SkboConfig::for_box(default_box("gen-gbm").unwrap(), smc, rep_seed)
}

/// Exponent-study configuration: the box an analyst would choose for a
/// low-priced series (drift within one, diffusion scale well around the
/// proportional fit, exponent free across (0.27, 0.95)), with a patient
/// stopping rule. The default box spans corners thousands of log-units
/// below the peak, which keeps expected improvement exploring instead of
/// refining; tightening the box restores the explore/refine balance.
fn exponent_study_config(rep_seed: u64) -> SkboConfig {
    let smc = SmcConfig::new(10, 100, Sampler::ModifiedBrownianBridge, rep_seed).unwrap();
    let tight = ThetaBox::new(vec![-0.5, -2.0, -1.0], vec![0.9, 0.7, 3.0]).unwrap();
    let mut config = SkboConfig::for_box(tight, smc, rep_seed);
    config.max_points = 100;
    config.stop_patience = 10;
    config.stop_tol = 0.005;
    config
}

#[test]
fn criterion_13_model_comparison_calibration() {
    // Information criterion arithmetic on the published-scale example.
    let aic_ok = aic(2, -6797.0) == 13598.0;

    // Null: data from the restricted model should rarely reject it.
    const NULL_SEED: u64 = 0xEC13_0001;
    let null_reps = 40;
    let mut below = 0;
    for rep in 0..null_reps as u64 {
        let mut rng = stream(NULL_SEED, &[tag::SIMULATE, rep]);
        let series = gbm_simulate_exact(0.08, 0.25, 100.0, 1000, TRADING_DT, &mut rng).unwrap();
        let prices = synthetic_prices(series.values());
        let report = stock_analysis(&prices, &stock_config(replicate_seed(NULL_SEED, rep))).unwrap();
        if matches!(report.lrt_stat, Some(s) if s < CHI2_95_DF1) {
            below += 1;
        }
    }

    // Alternative: the diffusion exponent should be recovered from data
    // that actually departs from proportional diffusion.
    const ALT_SEED: u64 = 0xEC13_0002;
    let model = gen_gbm();
    let psi_true = 0.75;
    let alt_reps = 20;
    let mut close = 0;
    for rep in 0..alt_reps as u64 {
        let mut rng = stream(ALT_SEED, &[tag::SIMULATE, rep]);
        let theta_true = model.search_point(&[0.2, 0.3, psi_true]).unwrap();
        let series = simulate_series(&model, &theta_true, 2500, TRADING_DT, &mut rng).unwrap();
        let prices = synthetic_prices(series.values());
        let config = exponent_study_config(replicate_seed(ALT_SEED, rep));
        let report = stock_analysis(&prices, &config).unwrap();
        if let Some(gen) = &report.gen {
            if (gen.theta[2] - psi_true).abs() < 0.15 {
                close += 1;
            }
        }
    }

    let null_ok = below * 100 >= 85 * null_reps;
    let alt_ok = close * 100 >= 70 * alt_reps;
    verdict(
        13,
        "model comparison calibration",
        aic_ok && null_ok && alt_ok,
        &format!(
            "aic(2, -6797) = 13598: {aic_ok}; null kept in {below}/{null_reps} (need 85%); \
             exponent within 0.15 in {close}/{alt_reps} (need 70%)"
        ),
    );
}
