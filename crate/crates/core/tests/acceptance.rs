//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --release -p comprior --test acceptance`.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::Instant;

use comprior::data::{bundled_path, resolve_dataset};
use comprior::study::Setting;
use comprior::{
    chi_square_gof, conjugate_propriety, fit_dataset, ln_factorial, log_likelihood, log_normalizer,
    log_pmf, log_posterior, log_prior_density, logz_hessian, preset, propriety_check, run_chains,
    run_study, sample_cmp, summarize, CmpParams, ConjugateHyper, Draws, McmcConfig, Param,
    Posterior, PriorSpec, SeedSpec, StudyConfig, SufficientStats, TruncationPolicy,
};
use rand::Rng;

enum Status {
    Pass,
    Fail,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        }
    }
}

type Check = fn() -> comprior::Result<Outcome>;

// study parameter grid: λ ∈ {3, 4, 5} × ν ∈ {0.5, 1, 2}
fn grid() -> Vec<CmpParams> {
    let mut out = Vec::new();
    for l in [3.0, 4.0, 5.0] {
        for n in [0.5, 1.0, 2.0] {
            out.push(CmpParams::new(l, n).unwrap());
        }
    }
    out
}

fn analytic_special_cases() -> comprior::Result<Outcome> {
    let pol = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for l in [0.1, 0.5, 2.0, 4.0] {
        let poisson = CmpParams::new(l, 1.0)?;
        worst = worst.max((log_normalizer(&poisson, &pol)? - l).abs());
        for x in 0..=30u64 {
            let exact = x as f64 * f64::ln(l) - l - ln_factorial(x);
            worst = worst.max((log_pmf(x, &poisson, &pol)? - exact).abs());
        }
        if l < 1.0 {
            let geometric = CmpParams::new(l, 0.0)?;
            worst = worst.max((log_normalizer(&geometric, &pol)? + f64::ln(1.0 - l)).abs());
            for x in 0..=30u64 {
                let exact = x as f64 * f64::ln(l) + f64::ln(1.0 - l);
                worst = worst.max((log_pmf(x, &geometric, &pol)? - exact).abs());
            }
        }
        let bernoulli = CmpParams::new(l, 1e8)?;
        worst = worst.max((log_normalizer(&bernoulli, &pol)? - f64::ln(1.0 + l)).abs());
        worst = worst.max((log_pmf(0, &bernoulli, &pol)? + f64::ln(1.0 + l)).abs());
        worst = worst.max((log_pmf(1, &bernoulli, &pol)? - f64::ln(l / (1.0 + l))).abs());
    }
    Ok(Outcome::new(
        worst < 1e-9,
        format!("max abs error {worst:.2e} (tolerance 1e-9)"),
    ))
}

fn derivative_oracle() -> comprior::Result<Outcome> {
    let pol = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for p in grid() {
        let (l, n) = (p.lambda(), p.nu());
        let lz = |l: f64, n: f64| log_normalizer(&CmpParams::new(l, n).unwrap(), &pol).unwrap();
        let d = logz_hessian(&p, &pol)?;
        let h1 = 1e-5;
        let h2 = 1e-4;
        let pairs = [
            (d.d_dlambda, (lz(l + h1, n) - lz(l - h1, n)) / (2.0 * h1)),
            (d.d_dnu, (lz(l, n + h1) - lz(l, n - h1)) / (2.0 * h1)),
            (
                d.d2_dlambda2,
                (lz(l + h2, n) - 2.0 * lz(l, n) + lz(l - h2, n)) / (h2 * h2),
            ),
            (
                d.d2_dnu2,
                (lz(l, n + h2) - 2.0 * lz(l, n) + lz(l, n - h2)) / (h2 * h2),
            ),
            (
                d.d2_dlambda_dnu,
                (lz(l + h2, n + h2) - lz(l + h2, n - h2) - lz(l - h2, n + h2) + lz(l - h2, n - h2))
                    / (4.0 * h2 * h2),
            ),
        ];
        for (analytic, fd) in pairs {
            // d²/dλ² is exactly zero at ν = 1; relative error uses a 1e-2 floor
            worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-2));
        }
    }
    Ok(Outcome::new(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 9 points x 5 partials (tolerance 1e-4)"),
    ))
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

fn conjugacy_identity() -> comprior::Result<Outcome> {
    let pol = TruncationPolicy::default();
    let mut rng = SeedSpec::new(3, 0).rng();
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let h = ConjugateHyper::new(
            rng.random_range(0.05..5.0),
            rng.random_range(0.05..5.0),
            rng.random_range(0.05..5.0),
        )?;
        let truth = CmpParams::new(rng.random_range(0.5..6.0), rng.random_range(0.3..2.5))?;
        let data = sample_cmp(
            truth,
            rng.random_range(5..80),
            SeedSpec::new(3, case + 1),
            &pol,
        )?;
        let stats = SufficientStats::from_data(&data)?;
        let updated = PriorSpec::Conjugate(h.updated(&stats));
        let spec = PriorSpec::Conjugate(h);
        let (mut via_posterior, mut via_sum) = (Vec::new(), Vec::new());
        for l in [0.5, 1.5, 3.0, 6.0, 12.0] {
            for n in [0.3, 0.7, 1.0, 1.8, 3.0] {
                let p = CmpParams::new(l, n)?;
                let target = log_prior_density(&updated, &p, &pol)?;
                via_posterior.push(log_posterior(&spec, &stats, &p, &pol)? - target);
                let sum = log_prior_density(&spec, &p, &pol)? + log_likelihood(&stats, &p, &pol)?;
                via_sum.push(sum - target);
            }
        }
        worst = worst.max(variance(&via_posterior)).max(variance(&via_sum));
    }
    Ok(Outcome::new(
        worst < 1e-10,
        format!("max variance of differences {worst:.2e} over 20 cases (tolerance 1e-10)"),
    ))
}

fn propriety_checker() -> comprior::Result<Outcome> {
    let mut failures = Vec::new();
    let mut expect = |label: String, got: bool, want: bool| {
        if got != want {
            failures.push(label);
        }
    };
    let h = |a, b, c| ConjugateHyper::new(a, b, c).unwrap();
    expect(
        "(1,1,1)".into(),
        conjugate_propriety(&h(1.0, 1.0, 1.0)),
        true,
    );
    expect(
        "(2,ln2,2)".into(),
        conjugate_propriety(&h(2.0, LN_2, 2.0)),
        true,
    );
    for k in [0.01, 0.1, 1.0, 10.0] {
        expect(format!("a=b=c={k}"), conjugate_propriety(&h(k, k, k)), true);
    }
    // c = 1 with a single pseudo-observation x': b = ln(x'!) sits on the
    // excluded boundary; any larger b is proper
    for x in 0..=20u64 {
        let b = ln_factorial(x);
        if b > 0.0 {
            let check = propriety_check(&h(x as f64, b, 1.0));
            expect(format!("x'={x} boundary"), check.proper, false);
            expect(
                format!("x'={x} above boundary"),
                conjugate_propriety(&h(x as f64, b * (1.0 + 1e-9) + 1e-12, 1.0)),
                true,
            );
        } else {
            expect(
                format!("x'={x} b=0 rejected"),
                ConjugateHyper::new(x as f64, b, 1.0).is_ok(),
                false,
            );
        }
    }
    let detail = if failures.is_empty() {
        "all 6 named cases and the c=1 single-point boundary behave as required".to_string()
    } else {
        format!("wrong verdicts: {}", failures.join(", "))
    };
    Ok(Outcome::new(failures.is_empty(), detail))
}

/// Monte Carlo standard error of a pooled median from batch medians of
/// `BATCH` consecutive draws within each chain.
fn median_mcse(draws: &Draws, p: Param) -> f64 {
    const BATCH: usize = 250;
    let mut medians = Vec::new();
    for chain in draws.param(p) {
        for batch in chain.chunks_exact(BATCH) {
            let mut b = batch.to_vec();
            b.sort_by(f64::total_cmp);
            medians.push(comprior::mcmc::quantile_sorted(&b, 0.5));
        }
    }
    let k = medians.len() as f64;
    (variance(&medians) * k / (k - 1.0) / k).sqrt()
}

fn sampler_oracle_equivalence() -> comprior::Result<Outcome> {
    let pol = TruncationPolicy::default();
    let cfg = McmcConfig::default();
    let mut rng = SeedSpec::new(5, 0).rng();
    let mut worst: f64 = 0.0;
    let mut cases = 0u64;
    let mut attempt = 0u64;
    while cases < 5 {
        attempt += 1;
        let h = ConjugateHyper::new(
            rng.random_range(0.2..3.0),
            rng.random_range(0.2..3.0),
            rng.random_range(0.2..3.0),
        )?;
        let truth = CmpParams::new(rng.random_range(1.0..5.0), rng.random_range(0.4..2.0))?;
        let data = sample_cmp(
            truth,
            rng.random_range(10..60),
            SeedSpec::new(5, attempt),
            &pol,
        )?;
        let stats = SufficientStats::from_data(&data)?;
        if !propriety_check(&h.updated(&stats)).proper {
            continue;
        }
        cases += 1;
        let with_data = Posterior::new(PriorSpec::Conjugate(h), stats, pol);
        let prior_only = Posterior::new(
            PriorSpec::Conjugate(h.updated(&stats)),
            SufficientStats::empty(),
            pol,
        );
        let a = run_chains(&with_data, &cfg, SeedSpec::new(50, cases))?;
        let b = run_chains(&prior_only, &cfg, SeedSpec::new(51, cases))?;
        let (sa, sb) = (summarize(&a)?, summarize(&b)?);
        for p in Param::ALL {
            let se = median_mcse(&a, p).hypot(median_mcse(&b, p));
            let z = (sa.get(p).median - sb.get(p).median).abs() / se;
            worst = worst.max(z);
        }
    }
    Ok(Outcome::new(
        worst <= 3.0,
        format!(
            "max |median difference| / MCSE = {worst:.2} over 5 cases x 2 parameters (limit 3)"
        ),
    ))
}

fn study_cell(setting: Setting, n: usize, prior: &str) -> comprior::Result<(f64, f64, f64)> {
    let cfg = StudyConfig {
        settings: vec![setting],
        sample_sizes: vec![n],
        replicates: 25,
        priors: vec![prior.to_string()],
        ..StudyConfig::default()
    };
    let cells = run_study(&cfg)?;
    let get = |p: Param| cells.iter().find(|c| c.param == p).expect("cell present");
    let (l, v) = (get(Param::Lambda), get(Param::Nu));
    Ok((
        l.mse.unwrap_or(f64::NAN),
        l.coverage.unwrap_or(f64::NAN),
        v.coverage.unwrap_or(f64::NAN),
    ))
}

fn study_reproduction() -> comprior::Result<Outcome> {
    let (over_mse, over_cov_l, over_cov_n) =
        study_cell(Setting::new("over", 3.0, 0.5), 75, "conj-1")?;
    let (under_mse, under_cov_l, _) = study_cell(Setting::new("under", 3.0, 2.0), 25, "jeffreys")?;

    let parts = [
        (
            (0.84..=1.0).contains(&over_cov_l) && (0.84..=1.0).contains(&over_cov_n),
            format!("over/75/conj-1 coverage {over_cov_l:.2}/{over_cov_n:.2} in [0.84, 1]"),
        ),
        (
            (0.105 / 2.0..=0.105 * 2.0).contains(&over_mse),
            format!("over/75/conj-1 MSE(lambda) {over_mse:.3} within x2 of 0.105"),
        ),
        (
            under_cov_l <= 0.20,
            format!("under/25/jeffreys coverage(lambda) {under_cov_l:.2} <= 0.20"),
        ),
        (
            under_mse > 1.0,
            format!("under/25/jeffreys MSE(lambda) {under_mse:.3} > 1"),
        ),
    ];
    let ok = parts.iter().all(|(ok, _)| *ok);
    let detail = parts
        .iter()
        .map(|(ok, d)| format!("{d}: {}", if *ok { "ok" } else { "NO" }))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome::new(ok, detail))
}

// (name, lower, upper) bands on the ν median; textile also bands λ
const TABLE4_NU: [(&str, f64, f64); 4] = [
    ("textile-faults", 0.103, 0.421),
    ("crab-satellites", f64::NEG_INFINITY, 0.11),
    ("slovak-poem", 2.4, 4.3),
    ("hungarian-words", 3.0, 3.1),
];

fn fit_bundled(name: &str, base_terms: usize) -> comprior::Result<comprior::PosteriorSummary> {
    let ds = resolve_dataset(name)?;
    let (report, _) = fit_dataset(
        &ds,
        "conj-1",
        preset("conj-1")?,
        &McmcConfig::default(),
        SeedSpec::new(2024, 0),
        TruncationPolicy::with_base_terms(base_terms)?,
    )?;
    Ok(report.summary)
}

fn data_illustrations() -> comprior::Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut skipped = Vec::new();
    for (name, lo, hi) in TABLE4_NU {
        if bundled_path(name).is_none() {
            skipped.push(name);
            continue;
        }
        let s = fit_bundled(name, 101)?;
        let mut good = s.nu.median > lo && s.nu.median < hi;
        if name == "textile-faults" {
            good &= s.lambda.median > 1.144 && s.lambda.median < 2.409;
        }
        let rhat = s.lambda.rhat.max(s.nu.rhat);
        good &= rhat < 1.02;
        ok &= good;
        parts.push(format!(
            "{name} lambda {:.3} nu {:.4} rhat {rhat:.3}{}",
            s.lambda.median,
            s.nu.median,
            if good { "" } else { " NO" }
        ));
    }
    if !skipped.is_empty() {
        parts.push(format!("not bundled, skipped: {}", skipped.join(", ")));
    }
    Ok(Outcome::new(ok, parts.join("; ")))
}

fn rng_fidelity() -> comprior::Result<Outcome> {
    let pol = TruncationPolicy::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (l, n)) in [(4.0, 1.0), (3.0, 0.5), (3.0, 2.0)].into_iter().enumerate() {
        let params = CmpParams::new(l, n)?;
        let xs = sample_cmp(params, 100_000, SeedSpec::new(8, i as u64), &pol)?;
        let test = chi_square_gof(&xs, params, &pol, 21)?;
        let len = xs.len() as f64;
        let mean = xs.iter().sum::<u64>() as f64 / len;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (len - 1.0);
        let ratio = var / mean;
        let direction = if n < 1.0 {
            ratio > 1.0
        } else if n > 1.0 {
            ratio < 1.0
        } else {
            (ratio - 1.0).abs() < 0.03
        };
        let good = test.passes(0.001) && direction;
        ok &= good;
        parts.push(format!(
            "({l},{n}) p={:.3} df={} var/mean={ratio:.3}{}",
            test.p_value,
            test.df,
            if good { "" } else { " NO" }
        ));
    }
    Ok(Outcome::new(ok, parts.join("; ")))
}

fn truncation_robustness() -> comprior::Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut fitted = Vec::new();
    for (name, _, _) in TABLE4_NU {
        if bundled_path(name).is_none() {
            continue;
        }
        let a = fit_bundled(name, 101)?;
        let b = fit_bundled(name, 500)?;
        for p in Param::ALL {
            worst = worst.max((a.get(p).median - b.get(p).median).abs());
        }
        fitted.push(name);
    }
    Ok(Outcome::new(
        worst <= 1e-4,
        format!(
            "max |median change| {worst:.2e} (limit 1e-4) over {}",
            fitted.join(", ")
        ),
    ))
}

fn main() -> ExitCode {
    let checks: [(u32, &str, Check); 9] = [
        (1, "analytic special cases", analytic_special_cases),
        (2, "derivative oracle", derivative_oracle),
        (3, "conjugacy identity", conjugacy_identity),
        (4, "propriety checker", propriety_checker),
        (5, "sampler oracle equivalence", sampler_oracle_equivalence),
        (6, "desk-scale study reproduction", study_reproduction),
        (7, "data illustrations", data_illustrations),
        (8, "rng fidelity", rng_fidelity),
        (9, "truncation robustness", truncation_robustness),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let label = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
        };
        println!(
            "criterion {id} [{label}] {name}: {} ({secs:.1} s)",
            outcome.detail
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
