//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS/FAIL` line (run with `--nocapture` to see the PASS
//! lines; FAIL lines surface in the panic message).
//!
//! Criteria 1-3 gate the three shipped coverage experiments against fixed
//! reference tables at the default Heston parameter set; 4-10 gate internal
//! consistency, distributional behavior and determinism.

use amle_core::asymptotics::{mixed_normal_statistic, sigma_n};
use amle_core::estimator::amle_linear;
use amle_core::experiment::{
    replicate_runs, run_coverage_experiment, DfMode, ExperimentConfig, ModelConfig,
};
use amle_core::heston::{heston_amle, heston_hessian, heston_model, heston_sigma_n, HestonParams};
use amle_core::likelihood::LikelihoodContext;
use amle_core::model::ModelSpec;
use amle_core::numerics::{
    chi2_cdf, chi2_quantile, pinv_sqrt_with_rank, standard_normals, sym_eigen, Mat, NoiseSource,
    DEFAULT_RANK_TOL,
};
use amle_core::simulate::{euler_simulate, TimeGrid};

/// Reference coverage targets for the three shipped experiment configs.
const EXPECTED_L12_P025: [f64; 6] = [0.675, 0.812, 0.867, 0.942, 0.952, 0.972];
const EXPECTED_L14_P05: [f64; 8] = [0.589, 0.740, 0.826, 0.884, 0.911, 0.935, 0.944, 0.95];
const EXPECTED_L16_P05: [f64; 9] =
    [0.596, 0.726, 0.831, 0.904, 0.921, 0.931, 0.933, 0.939, 0.955];

fn table_config(l: u32, k_max: u32, p_tail: f64, m: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        ModelConfig::Heston(HestonParams::default()),
        l,
        (3..=k_max).collect(),
    );
    cfg.p_tail = p_tail;
    cfg.replicates = m;
    cfg.master_seed = seed;
    cfg.df_mode = DfMode::Fixed(2);
    cfg
}

fn report(criterion: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("{line}");
    assert!(pass, "{line}");
}

/// Coverage comparison shared by criteria 1-3: absolute tolerance per level
/// plus the monotone-trend check (no decrease beyond binomial noise).
fn check_table(
    criterion: &str,
    cfg: &ExperimentConfig,
    expected: &[f64],
    tol: f64,
    extra_note: Option<String>,
) {
    let table = run_coverage_experiment(cfg).unwrap();
    let got: Vec<f64> = table.rows.iter().map(|r| r.coverage).collect();
    assert_eq!(got.len(), expected.len());

    let mut rows = Vec::new();
    let mut pass = true;
    for ((row, &want), &have) in table.rows.iter().zip(expected).zip(&got) {
        let ok = (have - want).abs() <= tol;
        pass &= ok;
        rows.push(format!(
            "k={} got {:.3} want {:.3}{}",
            row.level,
            have,
            want,
            if ok { "" } else { " <-- out of tolerance" }
        ));
    }
    let noise = 2.0 * (cfg.p_tail * (1.0 - cfg.p_tail) / cfg.replicates as f64).sqrt();
    for w in got.windows(2) {
        if w[1] < w[0] - noise {
            pass = false;
            rows.push(format!("trend violation: {:.3} -> {:.3}", w[0], w[1]));
        }
    }
    let mut detail = format!("tolerance ±{tol}; {}", rows.join("; "));
    if let Some(note) = extra_note {
        detail.push_str(&format!("; {note}"));
    }
    report(criterion, pass, &detail);
}

#[test]
fn criterion_01_coverage_l12_p025() {
    let cfg = table_config(12, 8, 0.025, 1000, 1);

    // Diagnostic companion run: the same experiment with the volatility
    // reversion and price-drift coefficients transposed (b=2, beta=-0.8).
    // Not asserted; printed as evidence alongside the gated run.
    let swapped_params = HestonParams { b: 2.0, beta: -0.8, ..Default::default() };
    let mut swapped_cfg = cfg.clone();
    swapped_cfg.model = ModelConfig::Heston(swapped_params);
    let swapped = run_coverage_experiment(&swapped_cfg).unwrap();
    let swapped_row: Vec<String> =
        swapped.rows.iter().map(|r| format!("{:.3}", r.coverage)).collect();
    let note = format!(
        "note: with b/beta transposed (b=2, beta=-0.8) the computed coverages are [{}]",
        swapped_row.join(", ")
    );

    check_table("1 (coverage l=12 p=0.025 M=1000)", &cfg, &EXPECTED_L12_P025, 0.05, Some(note));
}

#[test]
fn criterion_02_coverage_l14_p05() {
    let cfg = table_config(14, 10, 0.05, 1000, 2);
    check_table("2 (coverage l=14 p=0.05 M=1000)", &cfg, &EXPECTED_L14_P05, 0.05, None);
}

#[test]
fn criterion_03_coverage_l16_p05() {
    // Run at the full M=1000 with tolerance ±0.06 (the reduced-M fallback
    // was not needed).
    let cfg = table_config(16, 11, 0.05, 1000, 3);
    check_table("3 (coverage l=16 p=0.05 M=1000)", &cfg, &EXPECTED_L16_P05, 0.06, None);
}

#[test]
fn criterion_04_oracle_equivalence() {
    let p = HestonParams::default();
    let model = heston_model(&p).unwrap();
    let grid = TimeGrid::new(p.horizon, 1 << 10).unwrap();
    let mut worst_amle = 0.0f64;
    let mut worst_sigma = 0.0f64;
    let mut worst_hess = 0.0f64;
    for stream in 0..50 {
        let path = euler_simulate(
            &model,
            &p.theta(),
            &p.initial_state(),
            grid,
            &NoiseSource::new(404, stream),
        )
        .unwrap();

        let closed = heston_amle(&path).unwrap();
        let generic = amle_linear(&model, &path).unwrap().theta;
        let scale = closed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amle_dev = closed
            .iter()
            .zip(&generic)
            .map(|(c, g)| (c - g).abs())
            .fold(0.0f64, f64::max)
            / scale;
        worst_amle = worst_amle.max(amle_dev);

        let closed_sigma = heston_sigma_n(&p, &path).unwrap();
        let generic_sigma = sigma_n(&model, &path, &closed).unwrap();
        worst_sigma = worst_sigma
            .max(generic_sigma.sub(&closed_sigma).max_abs() / closed_sigma.max_abs());

        let ctx = LikelihoodContext::new(&model, &path).unwrap();
        let closed_hess = heston_hessian(&p, &path).unwrap();
        let generic_hess = ctx.hessian(&closed).unwrap();
        worst_hess =
            worst_hess.max(generic_hess.sub(&closed_hess).max_abs() / closed_hess.max_abs());
    }
    let pass = worst_amle <= 1e-9 && worst_sigma <= 1e-8 && worst_hess <= 1e-10;
    report(
        "4 (closed forms vs generic machinery, 50 replicates)",
        pass,
        &format!(
            "max rel dev: estimator {worst_amle:.2e} (tol 1e-9), covariance {worst_sigma:.2e} \
             (tol 1e-8), hessian {worst_hess:.2e} (tol 1e-10)"
        ),
    );
}

fn nonlinear_model() -> ModelSpec {
    ModelSpec::new(
        "nonlinear2",
        2,
        2,
        |x, th| vec![th[0] + th[1].sin() * x[0], th[0].cos() * x[0]],
        |_x| Mat::from_rows(&[&[1.0, 0.0], &[0.3, 0.9]]),
    )
    .with_drift_jac_theta(|x, th| {
        Mat::from_rows(&[&[1.0, th[1].cos() * x[0]], &[-th[0].sin() * x[0], 0.0]])
    })
    .with_drift_hess_theta(|x, th, i, j| match (i, j) {
        (0, 0) => vec![0.0, -th[0].cos() * x[0]],
        (1, 1) => vec![-th[1].sin() * x[0], 0.0],
        _ => vec![0.0, 0.0],
    })
}

#[test]
fn criterion_05_derivative_correctness() {
    let p = HestonParams::default();
    let heston = heston_model(&p).unwrap();
    let nonlin = nonlinear_model();
    let mut g = NoiseSource::new(505, 0).gaussians();

    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for rep in 0..20u64 {
        let (model, theta, x0): (&ModelSpec, Vec<f64>, Vec<f64>) = if rep % 2 == 0 {
            let theta = vec![
                2.0 + g.next_normal(),
                -0.8 + g.next_normal(),
                g.next_normal(),
                2.0 + g.next_normal(),
            ];
            (&heston, theta, p.initial_state())
        } else {
            let theta = vec![0.4 + 0.3 * g.next_normal(), 0.9 + 0.3 * g.next_normal()];
            (&nonlin, theta, vec![0.5, 0.0])
        };
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let truth = if rep % 2 == 0 { p.theta() } else { vec![0.4, 0.9] };
        let path =
            euler_simulate(model, &truth, &x0, grid, &NoiseSource::new(505, rep + 1)).unwrap();
        let ctx = LikelihoodContext::new(model, &path).unwrap();

        let grad = ctx.gradient(&theta).unwrap();
        let gscale = grad.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..theta.len() {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (ctx.value(&tp).unwrap() - ctx.value(&tm).unwrap()) / (2.0 * h);
            worst_grad = worst_grad.max((grad[j] - fd).abs() / gscale);
        }

        let hess = ctx.hessian(&theta).unwrap();
        let hscale = hess.max_abs().max(1.0);
        for j in 0..theta.len() {
            let h = 1e-5 * (1.0 + theta[j].abs());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let gp = ctx.gradient(&tp).unwrap();
            let gm = ctx.gradient(&tm).unwrap();
            for i in 0..theta.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                worst_hess = worst_hess.max((hess[(i, j)] - fd).abs() / hscale);
            }
        }
    }
    let pass = worst_grad <= 1e-6 && worst_hess <= 1e-5;
    report(
        "5 (analytic derivatives vs finite differences, 20 pairs)",
        pass,
        &format!("max rel dev: gradient {worst_grad:.2e} (tol 1e-6), hessian {worst_hess:.2e} (tol 1e-5)"),
    );
}

#[test]
fn criterion_06_simulator_gaussian_law() {
    // mu = 0, nu = I, T = 1: X_T - x0 is exactly N(0, I) under the scheme.
    let model = ModelSpec::new("bm", 2, 1, |_x, _t| vec![0.0, 0.0], |_x| Mat::identity(2));
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let reps = 10_000usize;
    let mut cov = [[0.0f64; 2]; 2];
    for m in 0..reps {
        let path = euler_simulate(
            &model,
            &[0.0],
            &[0.0, 0.0],
            grid,
            &NoiseSource::new(606, m as u64),
        )
        .unwrap();
        let x = path.last_state();
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += x[a] * x[b];
            }
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for (a, row) in cov.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            *entry /= reps as f64;
            let want = if a == b { 1.0 } else { 0.0 };
            // Var of the sample second moment: (S_aa S_bb + S_ab^2) / N.
            let se = ((1.0 + want) / reps as f64).sqrt();
            let ok = (*entry - want).abs() <= 3.0 * se;
            pass &= ok;
            detail.push(format!("cov[{a}][{b}]={:.4} (want {want} ± {:.4})", entry, 3.0 * se));
        }
    }
    report("6 (simulator Gaussian law, 10^4 replicates)", pass, &detail.join(", "));
}

#[test]
fn criterion_07_statistic_distribution() {
    // Empirical CDF of the statistic at k=10, l=14 vs chi-square(2).
    let mut cfg = table_config(14, 10, 0.05, 1000, 7);
    cfg.subsample_levels = vec![10];
    let runs = replicate_runs(&cfg).unwrap();
    let mut stats: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter_map(|r| r.outcomes[0].as_ref().ok())
        .map(|o| o.statistic)
        .collect();
    assert_eq!(stats.len(), 1000, "unexpected replicate failures");
    stats.sort_by(f64::total_cmp);
    let n = stats.len() as f64;
    let mut ks = 0.0f64;
    for (i, &s) in stats.iter().enumerate() {
        let f = chi2_cdf(s, 2);
        ks = ks.max((f - i as f64 / n).abs());
        ks = ks.max(((i + 1) as f64 / n - f).abs());
    }
    report(
        "7 (statistic vs chi-square(2) at k=10, l=14)",
        ks < 0.06,
        &format!("KS distance {ks:.4} (tol 0.06) over 1000 replicates"),
    );
}

#[test]
fn criterion_08_rate_boundedness() {
    // Median of |theta_bar - theta_hat| / sqrt(dt) across k = 5..10.
    let mut cfg = table_config(14, 10, 0.05, 200, 8);
    cfg.subsample_levels = (5..=10).collect();
    let runs = replicate_runs(&cfg).unwrap();
    let mut medians = Vec::new();
    for (idx, &k) in cfg.subsample_levels.iter().enumerate() {
        let dt = 1.0 / (1u64 << k) as f64;
        let mut scaled: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter_map(|r| {
                r.outcomes[idx].as_ref().ok().map(|o| {
                    let d2: f64 = o
                        .theta_bar
                        .iter()
                        .zip(&r.theta_hat)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d2.sqrt() / dt.sqrt()
                })
            })
            .collect();
        scaled.sort_by(f64::total_cmp);
        medians.push(scaled[scaled.len() / 2]);
    }
    let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = medians.iter().cloned().fold(0.0f64, f64::max);
    let detail = format!(
        "medians by level {:?} -> spread factor {:.2} (tol 3)",
        medians.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>(),
        hi / lo
    );
    report("8 (scaled estimator gap bounded across levels)", hi / lo < 3.0, &detail);
}

#[test]
fn criterion_09_numerics_unit_targets() {
    let mut pass = true;
    let mut details = Vec::new();

    // Chi-square quantiles against closed forms, deterministic across calls.
    let mut worst_q = 0.0f64;
    for p in [0.5, 0.1, 0.05, 0.025, 0.01] {
        let q1 = chi2_quantile(p, 2).unwrap();
        let q2 = chi2_quantile(p, 2).unwrap();
        assert_eq!(q1, q2);
        worst_q = worst_q.max((q1 - (-2.0 * p.ln())).abs());
    }
    pass &= worst_q <= 1e-9;
    details.push(format!("chi2 quantile dev {worst_q:.2e} (tol 1e-9)"));

    // pinv_sqrt projector property and sym_eigen reconstruction.
    let mut g = NoiseSource::new(909, 0).gaussians();
    let mut worst_proj = 0.0f64;
    let mut worst_recon = 0.0f64;
    for _ in 0..25 {
        let raw = Mat::from_fn(4, 4, |_, _| g.next_normal());
        let a = raw.add(&raw.transpose()).scaled(0.5);
        let eig = sym_eigen(&a).unwrap();
        worst_recon = worst_recon
            .max(eig.reconstruct().sub(&a).max_abs() / a.inf_norm().max(1.0));

        let psd = raw.matmul(&raw.transpose()).symmetrized();
        let (b, rank) = pinv_sqrt_with_rank(&psd, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 4);
        let proj = b.matmul(&psd).matmul(&b.transpose());
        worst_proj = worst_proj.max(proj.matmul(&proj).sub(&proj).max_abs());
    }
    pass &= worst_proj <= 1e-9 && worst_recon <= 1e-10;
    details.push(format!("projector dev {worst_proj:.2e} (tol 1e-9)"));
    details.push(format!("eigen reconstruction dev {worst_recon:.2e} (tol 1e-10)"));

    // Gaussian stream determinism.
    let a = standard_normals(&NoiseSource::new(909, 1), 128);
    let b = standard_normals(&NoiseSource::new(909, 1), 128);
    pass &= a == b;
    details.push("noise streams deterministic".into());

    report("9 (numerics unit targets)", pass, &details.join(", "));
}

#[test]
fn criterion_10_determinism_of_coverage_csv() {
    let cfg = table_config(12, 8, 0.025, 1000, 1);
    let first = run_coverage_experiment(&cfg).unwrap().to_csv();
    let second = run_coverage_experiment(&cfg).unwrap().to_csv();
    report(
        "10 (byte-identical coverage tables across runs)",
        first == second,
        &format!("{} bytes compared", first.len()),
    );
}

// Direct checks of the whitening construction used by criteria 1-3, kept
// here because they gate the same statistic.
#[test]
fn statistic_construction_sanity() {
    let p = HestonParams::default();
    let model = heston_model(&p).unwrap();
    let grid = TimeGrid::new(p.horizon, 1 << 8).unwrap();
    let path = euler_simulate(
        &model,
        &p.theta(),
        &p.initial_state(),
        grid,
        &NoiseSource::new(11, 0),
    )
    .unwrap();
    let theta_bar = heston_amle(&path).unwrap();
    let sigma = heston_sigma_n(&p, &path).unwrap();
    let hessian = heston_hessian(&p, &path).unwrap();
    let report = mixed_normal_statistic(
        &sigma,
        &hessian,
        &theta_bar,
        &theta_bar,
        path.grid().dt(),
        DEFAULT_RANK_TOL,
    )
    .unwrap();
    assert_eq!(report.statistic, 0.0);
    assert_eq!(report.rank, 2);
    let proj = report
        .pinv_sqrt_sigma
        .matmul(&sigma)
        .matmul(&report.pinv_sqrt_sigma.transpose());
    assert!(proj.matmul(&proj).sub(&proj).max_abs() <= 1e-9);
}
