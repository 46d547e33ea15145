//! Sufficient statistics, log posteriors and posterior propriety.

use serde::{Deserialize, Serialize};

use crate::cmp::{ln_factorial, log_likelihood, CmpParams, TruncationPolicy};
use crate::error::{Error, Result};
use crate::priors::{log_prior_density, propriety_check, ConjugateHyper, PriorSpec};

/// `(n, S1 = Σ xᵢ, S2 = Σ ln(xᵢ!))`, all the CMP likelihood needs from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    n: u64,
    s1: u64,
    s2: f64,
}

impl SufficientStats {
    pub fn from_data(data: &[u64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self::from_frequencies(data.iter().map(|&x| (x, 1))))
    }

    /// Accumulates `(value, count)` pairs without expanding them.
    pub fn from_frequencies<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut stats = Self::empty();
        for (value, count) in pairs {
            stats.n += count;
            stats.s1 += value * count;
            if value > 1 {
                stats.s2 += count as f64 * ln_factorial(value);
            }
        }
        stats
    }

    /// Statistics of a dataset with no observations. Only meaningful as a
    /// target for prior-only sampling.
    pub fn empty() -> Self {
        Self {
            n: 0,
            s1: 0,
            s2: 0.0,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn s1(&self) -> u64 {
        self.s1
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn xbar(&self) -> f64 {
        self.s1 as f64 / self.n as f64
    }

    pub fn mean_lnfact(&self) -> f64 {
        self.s2 / self.n as f64
    }

    /// Returns the statistics with one more observation appended.
    pub fn with_observation(mut self, x: u64) -> Self {
        self.n += 1;
        self.s1 += x;
        self.s2 += ln_factorial(x);
        self
    }
}

pub fn sufficient_stats(data: &[u64]) -> Result<SufficientStats> {
    SufficientStats::from_data(data)
}

/// Unnormalized log posterior: log prior plus log likelihood.
pub fn log_posterior(
    spec: &PriorSpec,
    stats: &SufficientStats,
    params: &CmpParams,
    policy: &TruncationPolicy,
) -> Result<f64> {
    if let PriorSpec::Conjugate(h) = spec {
        // one series evaluation instead of two
        return log_prior_density(&PriorSpec::Conjugate(h.updated(stats)), params, policy);
    }
    Ok(log_prior_density(spec, params, policy)? + log_likelihood(stats, params, policy)?)
}

/// Whether the flat-prior posterior `λ^{S1−1} e^{−ν S2} Z^{−n}` is proper:
/// `S1, S2, n > 0` and `(S1, S2, n)` satisfy the conjugate propriety
/// condition, i.e. `S2/n > ln(⌊x̄⌋!) + (x̄ − ⌊x̄⌋)·ln(⌊x̄⌋ + 1)`.
pub fn flat_posterior_propriety(stats: &SufficientStats) -> bool {
    if stats.n == 0 || stats.s1 == 0 || stats.s2 <= 0.0 {
        return false;
    }
    let Ok(h) = ConjugateHyper::new(stats.s1 as f64, stats.s2, stats.n as f64) else {
        return false;
    };
    propriety_check(&h).proper
}

/// A posterior target: prior, data and truncation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub spec: PriorSpec,
    pub stats: SufficientStats,
    pub policy: TruncationPolicy,
}

impl Posterior {
    pub fn new(spec: PriorSpec, stats: SufficientStats, policy: TruncationPolicy) -> Self {
        Self {
            spec,
            stats,
            policy,
        }
    }

    pub fn log_density(&self, params: &CmpParams) -> Result<f64> {
        log_posterior(&self.spec, &self.stats, params, &self.policy)
    }

    /// Refuses posteriors known to be improper. Conjugate posteriors from an
    /// improper prior are checked through their updated hyperparameters,
    /// flat ones through
    /// [`flat_posterior_propriety`]. Jeffreys posteriors are not decidable
    /// and always pass.
    pub fn check_propriety(&self) -> Result<()> {
        match self.spec {
            PriorSpec::Flat if !flat_posterior_propriety(&self.stats) => {
                Err(Error::ImproperPosterior(format!(
                    "flat prior with n = {}, S1 = {}, S2 = {:.6}; at least one count above 1 \
                     is required and S2/n must exceed ln(floor(xbar)!) + frac(xbar)·ln(floor(xbar) + 1)",
                    self.stats.n, self.stats.s1, self.stats.s2
                )))
            }
            // a proper prior times a pmf-bounded likelihood is always proper
            PriorSpec::Conjugate(h) if !propriety_check(&h).proper => {
                let updated = h.updated(&self.stats);
                let check = propriety_check(&updated);
                if check.proper {
                    Ok(())
                } else {
                    Err(Error::ImproperPosterior(format!(
                        "conjugate posterior (a = {}, b = {}, c = {}) fails b/c > {:.6} (b/c = {:.6})",
                        updated.a(),
                        updated.b(),
                        updated.c(),
                        check.rhs,
                        check.lhs
                    )))
                }
            }
            _ => Ok(()),
        }
    }
}
