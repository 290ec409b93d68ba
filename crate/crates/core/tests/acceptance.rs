//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line for its
//! criterion and then asserts it. Run with `--nocapture` to see the lines.
//!
//! Multi-seed criteria use seeds 1..=5 with no reselection.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ppn::datagen::{gen_gmm_data, gen_linear_factor_data, gen_nonlinear_factor_data, gen_regression_data, DataPreset};
use ppn::estimators::{bayes_factor, harmonic_mean_marginal_likelihood, sym_kl_estimate};
use ppn::linear::{ppca_em_fit, regression_fit_b, EmConfig, PredictiveVariance};
use ppn::mixture::{gmm_gibbs_fit, GibbsConfig};
use ppn::special::{chi_square_cdf, ks_distance};
use ppn::*;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(id: u32, name: &str, ok: bool, detail: &str, elapsed: Duration) {
    let tag = if ok { "PASS" } else { "FAIL" };
    // Straight to the handle so the line shows even when libtest captures output.
    let line = format!("[{tag}] criterion {id:>2}: {name} | {detail} | {:.1}s\n", elapsed.as_secs_f64());
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn split_of(data: &Dataset, seed: u64) -> DataSplit {
    split_data(data, [1.0 / 3.0; 3], Seed::new(seed)).unwrap()
}

fn study(data: &Dataset, models: &[Model], cfg: &CheckConfig, seed: u64) -> StudyReport {
    let specs: Vec<_> = models.iter().map(DiagnosticSpec::for_model).collect();
    ppn_study(&split_of(data, seed), models, &specs, cfg, &Seed::new(seed).stream("study")).unwrap()
}

struct GmmRuns {
    reports: Vec<StudyReport>,
    elapsed: Duration,
}

// Criteria 1, 2 and 7 share the same chains.
fn gmm_runs() -> &'static GmmRuns {
    static RUNS: OnceLock<GmmRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let models: Vec<Model> = (1..=4).map(Model::gmm).collect();
        let reports = SEEDS
            .iter()
            .map(|&seed| study(&gen_gmm_data(1500, seed).unwrap(), &models, &CheckConfig::default(), seed))
            .collect();
        GmmRuns {
            reports,
            elapsed: start.elapsed(),
        }
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2}"))
}

#[test]
fn criterion_01_gmm_study_pattern() {
    let runs = gmm_runs();
    let mut held = 0;
    let mut detail = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&runs.reports) {
        let all_pass = r.diagonal.iter().all(|c| c.pass);
        let kl = |a: &str, b: &str| r.pair(a, b).map(|p| p.sym_kl);
        let (k31, k32, k43) = (kl("gmm-k3", "gmm-k1"), kl("gmm-k3", "gmm-k2"), kl("gmm-k4", "gmm-k3"));
        let ok = all_pass
            && k31.is_some_and(|v| v > 1.0)
            && k32.is_some_and(|v| v > 1.0)
            && k43.is_some_and(|v| v <= 1.0);
        held += ok as usize;
        detail.push(format!(
            "s{seed}:{}pass k3<-k1={} k3<-k2={} k4<-k3={}",
            r.diagonal.iter().filter(|c| c.pass).count(),
            fmt_opt(k31),
            fmt_opt(k32),
            fmt_opt(k43)
        ));
    }
    let ok = held >= 4 && runs.elapsed < Duration::from_secs(600);
    report(1, "GMM study pattern", ok, &format!("{held}/5 seeds; {}", detail.join("; ")), runs.elapsed);
    assert!(ok);
}

#[test]
fn criterion_02_gmm_p_values() {
    let runs = gmm_runs();
    let in_band = |p: f64| (0.22..=0.62).contains(&p);
    let mut held = (0, 0);
    let mut detail = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&runs.reports) {
        let p3 = r.check("gmm-k3").unwrap().p_value;
        let p4 = r.check("gmm-k4").unwrap().p_value;
        held.0 += in_band(p3) as usize;
        held.1 += in_band(p4) as usize;
        detail.push(format!("s{seed}: p3={p3:.3} p4={p4:.3}"));
    }
    let ok = held.0 >= 4 && held.1 >= 4;
    report(
        2,
        "GMM p-values in [0.22, 0.62]",
        ok,
        &format!("K3 {}/5, K4 {}/5; {}", held.0, held.1, detail.join("; ")),
        runs.elapsed,
    );
    assert!(ok);
}

#[test]
fn criterion_03_regression_sym_kl() {
    let start = Instant::now();
    let models = [Model::new(ModelKind::RegressionIntercept), Model::new(ModelKind::RegressionCovariates)];
    let cfg = CheckConfig {
        replicates: 2000,
        ..CheckConfig::default()
    };
    let mut held = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let r = study(&gen_regression_data(6000, 10, 2.5, seed).unwrap(), &models, &cfg, seed);
        let kl = r.pair("reg-covariates", "reg-intercept").map(|p| p.sym_kl);
        let ok = r.diagonal.iter().all(|c| c.pass) && kl.is_some_and(|v| v <= 0.6);
        held += ok as usize;
        detail.push(format!(
            "s{seed}: pA={:.3} pB={:.3} kl={}",
            r.diagonal[0].p_value,
            r.diagonal[1].p_value,
            fmt_opt(kl)
        ));
    }
    let elapsed = start.elapsed();
    let ok = held >= 4 && elapsed < Duration::from_secs(60);
    report(3, "regression sym-KL", ok, &format!("{held}/5 seeds; {}", detail.join("; ")), elapsed);
    assert!(ok);
}

#[test]
fn criterion_04_chi_square_limit() {
    let start = Instant::now();
    let data = gen_regression_data(6000, 10, 2.5, 1).unwrap();
    let split = split_of(&data, 1);
    let n = split.x_out.n_rows();
    let (a, b) = (Model::new(ModelKind::RegressionIntercept), Model::new(ModelKind::RegressionCovariates));
    let mut cfg = CheckConfig {
        replicates: 10_000,
        ..CheckConfig::default()
    };
    cfg.fit.regression_variance = PredictiveVariance::AsPrinted;
    let spec = DiagnosticSpec::for_model(&b);
    let out = ppn_check(&split, &b, &a, &spec, &cfg, &Seed::new(1).stream("prop")).unwrap();
    let cdf = |x: f64| chi_square_cdf(x, n as f64).unwrap();
    let halve = |v: &[f64]| v.iter().map(|d| d / 2.0).collect::<Vec<_>>();
    let ks_a = ks_distance(&halve(&out.samples_b), cdf);
    let ks_b = ks_distance(&halve(&out.samples_a), cdf);
    let elapsed = start.elapsed();
    let ok = ks_a < 0.03 && ks_b < 0.03 && elapsed < Duration::from_secs(60);
    report(
        4,
        "chi-square limit of d_B/2",
        ok,
        &format!("n={n}; KS(rep A)={ks_a:.4} KS(rep B)={ks_b:.4}"),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn criterion_05_multinomial_pattern() {
    let start = Instant::now();
    let models: Vec<Model> = (1..=4).map(Model::multinomial).collect();
    let cfg = CheckConfig::default();
    let mut held = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let data = DataPreset::Multinomial.generate(510, seed).unwrap();
        let split = split_of(&data, seed);
        let stream = Seed::new(seed).stream("ppn");
        let kl = |owner: usize, source: usize| {
            let spec = DiagnosticSpec::for_model(&models[owner - 1]);
            ppn_check(&split, &models[owner - 1], &models[source - 1], &spec, &cfg, &stream.derive(&format!("{owner}-{source}")))
                .unwrap()
                .sym_kl
        };
        let (k21, k32, k42) = (kl(2, 1), kl(3, 2), kl(4, 2));
        let ok = k21 > 1.0 && k32 <= 1.0 && k42 <= 1.0;
        held += ok as usize;
        detail.push(format!("s{seed}: k2<-k1={k21:.2} k3<-k2={k32:.2} k4<-k2={k42:.2}"));
    }
    let elapsed = start.elapsed();
    let ok = held >= 4 && elapsed < Duration::from_secs(300);
    report(5, "multinomial PPN pattern", ok, &format!("{held}/5 seeds; {}", detail.join("; ")), elapsed);
    assert!(ok);
}

#[test]
fn criterion_06_factor_model_contrast() {
    let start = Instant::now();
    let cfg = CheckConfig::default();
    let check = |data: &Dataset, k: usize, seed: u64| {
        let m = Model::ppca(k);
        heldout_predictive_check(
            &split_of(data, seed),
            &m,
            &DiagnosticSpec::for_model(&m),
            &cfg,
            &Seed::new(seed).stream("factor"),
        )
        .unwrap()
    };
    let mut held = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let nonlinear = gen_nonlinear_factor_data(3000, seed).unwrap();
        let linear = gen_linear_factor_data(3000, seed).unwrap();
        let (n2, n5, l2) = (check(&nonlinear, 2, seed), check(&nonlinear, 5, seed), check(&linear, 2, seed));
        let ok = !n2.pass && n5.pass && l2.pass;
        held += ok as usize;
        detail.push(format!(
            "s{seed}: nonlinear p2={:.3} p5={:.3}, linear p2={:.3}",
            n2.p_value, n5.p_value, l2.p_value
        ));
    }
    let elapsed = start.elapsed();
    let ok = held >= 4 && elapsed < Duration::from_secs(120);
    report(6, "PPCA check contrast", ok, &format!("{held}/5 seeds; {}", detail.join("; ")), elapsed);
    assert!(ok);
}

#[test]
fn criterion_07_bayes_factors() {
    let runs = gmm_runs();
    let start = Instant::now();
    let mut held = 0;
    let mut detail = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&runs.reports) {
        let ev = |id: &str| r.check(id).unwrap().log_evidence.unwrap();
        let bf31 = bayes_factor(ev("gmm-k3"), ev("gmm-k1"));
        let bf43 = bayes_factor(ev("gmm-k4"), ev("gmm-k3"));
        let ok = bf31 > 3.0 && (0.5..=2.0).contains(&bf43);
        held += ok as usize;
        detail.push(format!("s{seed}: BF31={bf31:.3e} BF43={bf43:.3e}"));
    }
    let elapsed = start.elapsed();
    let ok = held >= 4 && elapsed < Duration::from_secs(120);
    report(7, "Bayes-factor pattern", ok, &format!("{held}/5 seeds; {}", detail.join("; ")), elapsed);
    assert!(ok);
}

/// Regularized lower incomplete gamma by its power series, with Γ(a + 1)
/// built exactly for integer and half-integer `a`.
fn chi_square_series(x: f64, dof: u32) -> f64 {
    let a = dof as f64 / 2.0;
    let h = x / 2.0;
    // ln Γ(a + 1) = ln a + ln(a − 1) + ... down to Γ(1) = 1 or Γ(1/2) = √π.
    let mut ln_gamma = 0.0;
    let mut t = a;
    while t > 0.25 {
        ln_gamma += t.ln();
        t -= 1.0;
    }
    if dof % 2 == 1 {
        ln_gamma += std::f64::consts::PI.sqrt().ln();
    }
    let mut term = (a * h.ln() - h - ln_gamma).exp();
    let mut sum = term;
    let mut i = 1.0;
    while term > 1e-18 * sum {
        term *= h / (a + i);
        sum += term;
        i += 1.0;
    }
    sum
}

#[test]
fn criterion_08_estimators() {
    let start = Instant::now();
    let mut s = Seed::new(8).stream("estimators");
    let p: Vec<f64> = (0..50_000).map(|_| s.normal(0.0, 1.0)).collect();
    let q: Vec<f64> = (0..50_000).map(|_| s.normal(1.0, 1.0)).collect();
    let kl = sym_kl_estimate(&p, &q).unwrap();
    let kl_ok = (kl - 0.5).abs() <= 0.05;

    // y_i ~ Normal(μ, 1), μ ~ Normal(0, τ²), with nτ² < 1 so the
    // harmonic-mean estimator has finite variance.
    let (n, tau2) = (10usize, 0.05);
    let y: Vec<f64> = (0..n).map(|_| s.normal(0.3, 1.0)).collect();
    let (sum, sumsq) = (y.iter().sum::<f64>(), y.iter().map(|v| v * v).sum::<f64>());
    let closed = -0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * (1.0 + n as f64 * tau2).ln()
        - 0.5 * (sumsq - tau2 * sum * sum / (1.0 + n as f64 * tau2));
    let post_var = 1.0 / (n as f64 + 1.0 / tau2);
    let post_mean = post_var * sum;
    let loglik: Vec<f64> = (0..100_000)
        .map(|_| {
            let mu = s.normal(post_mean, post_var.sqrt());
            y.iter()
                .map(|v| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (v - mu).powi(2))
                .sum()
        })
        .collect();
    let hm = harmonic_mean_marginal_likelihood(&loglik).unwrap();
    let hm_ok = (hm - closed).abs() < 0.5;

    let mut worst = 0.0f64;
    for dof in [1u32, 2, 3, 7, 20] {
        for i in 0..10 {
            let x = 0.05 + i as f64 * 0.35 * dof as f64;
            let got = chi_square_cdf(x, dof as f64).unwrap();
            worst = worst.max((got - chi_square_series(x, dof)).abs());
        }
    }
    let cdf_ok = worst < 1e-10;
    let elapsed = start.elapsed();
    let ok = kl_ok && hm_ok && cdf_ok && elapsed < Duration::from_secs(30);
    report(
        8,
        "estimator unit suite",
        ok,
        &format!("symKL={kl:.4}; HM={hm:.3} vs closed {closed:.3}; CDF max err {worst:.2e} over 50 points"),
        elapsed,
    );
    assert!(ok);
}

#[test]
fn criterion_09_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        r#"{
            "data": { "preset": "gmm", "n": 600 },
            "models": [
                { "kind": "gmm", "components": 1 },
                { "kind": "gmm", "components": 2 },
                { "kind": "gmm", "components": 3 }
            ],
            "seed": 11
        }"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = ppn::cli::run_cli_with(
            ["ppn", "study", "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()],
            &mut o,
            &mut e,
        );
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&e));
        std::fs::read(out.join("report.json")).unwrap()
    };
    let (first, second) = (run("a"), run("b"));
    let elapsed = start.elapsed();
    let ok = first == second && elapsed < Duration::from_secs(60);
    report(9, "byte-identical report.json", ok, &format!("{} bytes", first.len()), elapsed);
    assert!(ok);
}

#[test]
fn criterion_10_conjugate_suite() {
    let start = Instant::now();
    let mut s = Seed::new(10).stream("conjugate");

    // K = 1 Gibbs against the Normal / Inverse-Gamma full conditionals.
    let n = 2000;
    let (true_mean, true_sd) = ([1.0, -2.0], [2f64.sqrt(), 0.5f64.sqrt()]);
    let x = DMatrix::from_fn(n, 2, |_, j| s.normal(true_mean[j], true_sd[j]));
    let data = Dataset::continuous(x.clone()).unwrap();
    let draws = gmm_gibbs_fit(&data, 1, &GibbsConfig::default(), &mut s.derive("fit")).unwrap();
    let mut gibbs_ok = true;
    let mut gibbs_detail = String::new();
    for j in 0..2 {
        let col = x.column(j);
        let xbar = col.mean();
        let ss: f64 = col.iter().map(|v| (v - xbar).powi(2)).sum();
        let mus: Vec<f64> = draws.states.iter().map(|st| st.means[(0, j)]).collect();
        let vars: Vec<f64> = draws.states.iter().map(|st| st.variances[(0, j)]).collect();
        let mean_mu = mus.iter().sum::<f64>() / mus.len() as f64;
        let mean_var = vars.iter().sum::<f64>() / vars.len() as f64;
        // σ² | μ, x ~ IG(1 + n/2, 1 + ½Σ(x − μ)²), averaged over μ with
        // E[(x̄ − μ)²] ≈ σ²/n; μ | σ², x has mean ≈ x̄ and variance σ²/n.
        let var_oracle = (1.0 + 0.5 * ss + 0.5 * mean_var) / (n as f64 / 2.0);
        let post_sd = (var_oracle / n as f64).sqrt();
        let mu_ok = (mean_mu - xbar).abs() < 3.0 * post_sd;
        let var_ok = (mean_var / var_oracle - 1.0).abs() < 0.01;
        gibbs_ok &= mu_ok && var_ok;
        gibbs_detail += &format!("d{j}: mu {mean_mu:.4}/{xbar:.4} var {mean_var:.4}/{var_oracle:.4} ");
    }

    // OLS against a direct normal-equations solve with an intercept column.
    let (n_ols, p) = (50, 3);
    let xs = DMatrix::from_fn(n_ols, p, |_, _| s.standard_normal());
    let y: Vec<f64> = (0..n_ols).map(|i| 0.7 + xs[(i, 0)] - 2.0 * xs[(i, 2)] + s.normal(0.0, 0.3)).collect();
    let design = DMatrix::from_fn(n_ols, p + 1, |i, j| if j == 0 { 1.0 } else { xs[(i, j - 1)] });
    let yv = DVector::from_vec(y.clone());
    let oracle = (design.transpose() * &design).lu().solve(&(design.transpose() * &yv)).unwrap();
    let fit = regression_fit_b(&y, &xs).unwrap();
    let mut ols_err = (fit.intercept - oracle[0]).abs();
    for j in 0..p {
        ols_err = ols_err.max((fit.coefficients[j] - oracle[j + 1]).abs());
    }
    let ols_ok = ols_err < 1e-10;

    // PPCA noise variance against the mean discarded eigenvalue, and EM
    // monotonicity.
    let g = 6;
    let z = DMatrix::from_fn(1500, 2, |_, _| s.standard_normal());
    let w = DMatrix::from_fn(g, 2, |i, j| ((i + 2 * j) as f64).sin() * 3.0);
    let noise = DMatrix::from_fn(1500, g, |_, _| s.normal(0.0, 0.8));
    let xf = z * w.transpose() + noise;
    let em = EmConfig {
        tol: 1e-14,
        max_iters: 20_000,
    };
    let pf = ppca_em_fit(&Dataset::continuous(xf.clone()).unwrap(), 2, &em).unwrap();
    let means = DVector::from_fn(g, |j, _| xf.column(j).mean());
    let mut cov = DMatrix::zeros(g, g);
    for row in xf.row_iter() {
        let c = row.transpose() - &means;
        cov += &c * c.transpose();
    }
    cov /= 1500.0;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let discarded = eig[2..].iter().sum::<f64>() / (g - 2) as f64;
    let sigma_err = (pf.params.noise_variance - discarded).abs();
    let sigma_ok = sigma_err < 1e-6;
    let monotone = pf
        .log_likelihoods
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));

    let elapsed = start.elapsed();
    let ok = gibbs_ok && ols_ok && sigma_ok && monotone && elapsed < Duration::from_secs(60);
    report(
        10,
        "conjugate-correctness suite",
        ok,
        &format!(
            "gibbs {gibbs_detail}; OLS err {ols_err:.1e}; sigma2 err {sigma_err:.1e}; EM monotone {monotone} over {} iters",
            pf.log_likelihoods.len()
        ),
        elapsed,
    );
    assert!(ok);
}
