//! Bayesian inference for the Conway-Maxwell-Poisson (CMP) count
//! distribution under conjugate-family, flat and Jeffreys priors.
//!
//! The crate is organized bottom-up:
//!
//! * [`cmp`]: stabilized normalizer, pmf, moments and derivatives of `ln Z`.
//! * [`priors`]: the conjugate family with its propriety condition, the flat
//!   prior `1/λ` and the Jeffreys prior.
//! * [`posterior`]: sufficient statistics, log posteriors and flat-prior
//!   posterior propriety.
//! * [`rng`]: seeded streams and inverse-CDF CMP variates.
//! * [`mcmc`]: adaptive random-walk Metropolis, split R̂, summaries.
//! * [`study`]: the bias / MSE / coverage simulation harness.
//! * [`data`] and [`report`]: dataset ingestion and fit reports.

pub mod cmp;
pub mod data;
pub mod error;
pub mod mcmc;
pub mod posterior;
pub mod priors;
pub mod report;
pub mod rng;
pub mod study;

pub use cmp::{
    ln_factorial, log_likelihood, log_normalizer, log_pmf, logz_hessian, moments, Cmp, CmpMoments,
    CmpParams, LogZDerivatives, TruncationPolicy,
};
pub use data::{load_dataset, CountData, CountDataset};
pub use error::{Error, Result};
pub use mcmc::{
    run_chains, split_rhat, summarize, Draws, McmcConfig, Param, ParamSummary, PosteriorSummary,
    ProposalShape,
};
pub use posterior::{
    flat_posterior_propriety, log_posterior, sufficient_stats, Posterior, SufficientStats,
};
pub use priors::{
    conjugate_propriety, log_prior_density, preset, preset_priors, propriety_check, ConjugateHyper,
    PriorSpec, ProprietyCheck,
};
pub use report::{fit_dataset, FitReport};
pub use rng::{chi_square_gof, sample_cmp, ChiSquareTest, CmpSampler, SeedSpec};
pub use study::{render_tables, run_study, CellResult, StudyConfig, TableFormat};
