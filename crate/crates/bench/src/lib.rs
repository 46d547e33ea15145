//! Shared fixtures for the criterion benchmarks.

use comprior::{
    preset, sample_cmp, CmpParams, Posterior, SeedSpec, SufficientStats, TruncationPolicy,
};

/// The three study settings `(name, λ, ν)`.
pub const SETTINGS: [(&str, f64, f64); 3] =
    [("equi", 4.0, 1.0), ("over", 3.0, 0.5), ("under", 3.0, 2.0)];

/// A conj-1 posterior for `n` draws from `CMP(λ, ν)`.
pub fn study_posterior(lambda: f64, nu: f64, n: usize) -> Posterior {
    let policy = TruncationPolicy::default();
    let params = CmpParams::new(lambda, nu).expect("valid parameters");
    let data = sample_cmp(params, n, SeedSpec::new(1, 0), &policy).expect("sampling succeeds");
    Posterior::new(
        preset("conj-1").expect("preset exists"),
        SufficientStats::from_data(&data).expect("non-empty data"),
        policy,
    )
}
