//! Derivative-free optimizers: box-bounded Nelder-Mead and golden-section
//! line search. Both maximize; negate the objective to minimize.

/// Nelder-Mead controls. `init_step` sizes the starting simplex as a
/// fraction of each box width; convergence needs both the value spread
/// (`tol`, relative) and the simplex diameter (`xtol`, relative) small.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOpts {
    pub max_iter: usize,
    pub tol: f64,
    pub xtol: f64,
    pub init_step: f64,
}

impl Default for NelderMeadOpts {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            xtol: 1e-7,
            init_step: 0.1,
        }
    }
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Maximize `f` over the box `[lo, hi]` starting from `x0`. Trial points are
/// clamped into the box, so the simplex can collapse onto a face; callers
/// wanting interior optima should multi-start. Returns `(argmax, max)`.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOpts,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    assert!(n > 0 && lo.len() == n && hi.len() == n);

    // Work with g = -f so the textbook (minimizing) update rules apply.
    // NaN objectives rank worst instead of poisoning the sort.
    let mut eval = |x: &[f64]| {
        let g = -f(x);
        if g.is_nan() {
            f64::INFINITY
        } else {
            g
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lo, hi);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let width = hi[i] - lo[i];
        let step = if width > 0.0 { opts.init_step * width } else { opts.init_step.max(1e-4) };
        // Step inward if the vertex would leave the box.
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        clamp_into(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..opts.max_iter {
        // Order ascending in g (best first).
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();

        let value_spread_small = (fv[n] - fv[0]).abs() <= opts.tol * (1.0 + fv[0].abs());
        let diameter_small = {
            let mut diam = 0.0_f64;
            let mut scale = 0.0_f64;
            for i in 0..n {
                scale = scale.max(simplex[0][i].abs());
                for v in simplex.iter().skip(1) {
                    diam = diam.max((v[i] - simplex[0][i]).abs());
                }
            }
            diam <= opts.xtol * (1.0 + scale)
        };
        if value_spread_small && diameter_small {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }

        let mut reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - simplex[n][i]))
            .collect();
        clamp_into(&mut reflect, lo, hi);
        let fr = eval(&reflect);

        if fr < fv[0] {
            let mut expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (reflect[i] - centroid[i]))
                .collect();
            clamp_into(&mut expand, lo, hi);
            let fe = eval(&expand);
            if fe < fr {
                simplex[n] = expand;
                fv[n] = fe;
            } else {
                simplex[n] = reflect;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = reflect;
            fv[n] = fr;
        } else {
            // Contract outside (toward the reflected point) when reflection
            // at least beat the worst vertex, inside otherwise.
            let accepted = if fr < fv[n] {
                let mut contract: Vec<f64> = (0..n)
                    .map(|i| centroid[i] + rho * (reflect[i] - centroid[i]))
                    .collect();
                clamp_into(&mut contract, lo, hi);
                let fc = eval(&contract);
                if fc <= fr {
                    simplex[n] = contract;
                    fv[n] = fc;
                    true
                } else {
                    false
                }
            } else {
                let mut contract: Vec<f64> = (0..n)
                    .map(|i| centroid[i] + rho * (simplex[n][i] - centroid[i]))
                    .collect();
                clamp_into(&mut contract, lo, hi);
                let fc = eval(&contract);
                if fc < fv[n] {
                    simplex[n] = contract;
                    fv[n] = fc;
                    true
                } else {
                    false
                }
            };
            if !accepted {
                for j in 1..=n {
                    for i in 0..n {
                        simplex[j][i] = simplex[0][i] + sigma * (simplex[j][i] - simplex[0][i]);
                    }
                    clamp_into(&mut simplex[j], lo, hi);
                    fv[j] = eval(&simplex[j]);
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    (simplex[best].clone(), -fv[best])
}

/// Maximize from several starts and keep the best. Starts are clamped into
/// the box.
pub fn multi_start_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    starts: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOpts,
) -> (Vec<f64>, f64) {
    assert!(!starts.is_empty());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (x, v) = nelder_mead_max(&mut f, s, lo, hi, opts);
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    }
    best.unwrap()
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)` once the bracket is shorter than `tol`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    (x, fx)
}
