//! The Conway-Maxwell-Poisson distribution in the (λ, ν) parameterization.
//!
//! The normalizer `Z(λ, ν) = Σ_j λ^j / (j!)^ν` has no closed form. Every
//! quantity here is evaluated from a truncated series in the log domain:
//! terms `t_j = j·ln λ − ν·lnΓ(j + 1)` are accumulated with a running-max
//! log-sum-exp, starting from [`TruncationPolicy::base_terms`] and extending
//! until the remaining tail is negligible.

use std::sync::OnceLock;

use libm::lgamma as ln_gamma;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::SufficientStats;

const LN_FACTORIAL_TABLE_LEN: usize = 20_000;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..LN_FACTORIAL_TABLE_LEN)
            .map(|j| if j < 2 { 0.0 } else { ln_gamma(j as f64 + 1.0) })
            .collect()
    })
}

/// `ln(x!)` evaluated as `lnΓ(x + 1)`. Exactly zero for `x ∈ {0, 1}`.
pub fn ln_factorial(x: u64) -> f64 {
    match usize::try_from(x) {
        Ok(i) if i < LN_FACTORIAL_TABLE_LEN => ln_factorial_table()[i],
        _ => ln_gamma(x as f64 + 1.0),
    }
}

/// Location of a CMP distribution: generalized rate `lambda > 0` and
/// dispersion `nu ≥ 0`. `nu = 0` is only valid for `lambda < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmpParams {
    lambda: f64,
    nu: f64,
}

impl CmpParams {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidParams { lambda, nu, reason };
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(invalid("lambda must be finite and positive"));
        }
        if !nu.is_finite() || nu < 0.0 {
            return Err(invalid("nu must be finite and nonnegative"));
        }
        if nu == 0.0 && lambda >= 1.0 {
            return Err(invalid("nu = 0 requires lambda < 1 (geometric case)"));
        }
        Ok(Self { lambda, nu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Controls how many series terms are summed.
///
/// Summation always covers at least `base_terms` terms. It then extends one
/// term at a time until an upper bound on the remaining tail falls below
/// `tail_tol` relative to the running sum, and fails once `max_terms` is
/// reached without meeting that bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    base_terms: usize,
    tail_tol: f64,
    max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            base_terms: 101,
            tail_tol: 1e-10,
            max_terms: 10_000,
        }
    }
}

impl TruncationPolicy {
    pub fn new(base_terms: usize, tail_tol: f64, max_terms: usize) -> Result<Self> {
        if base_terms < 2 {
            return Err(Error::InvalidPolicy("base_terms must be at least 2"));
        }
        if max_terms < base_terms {
            return Err(Error::InvalidPolicy(
                "max_terms must be at least base_terms",
            ));
        }
        if !(tail_tol.is_finite() && tail_tol > 0.0) {
            return Err(Error::InvalidPolicy("tail_tol must be finite and positive"));
        }
        Ok(Self {
            base_terms,
            tail_tol,
            max_terms,
        })
    }

    /// Default tolerances with a different starting length. `max_terms` is
    /// raised if needed to stay above `base_terms`.
    pub fn with_base_terms(base_terms: usize) -> Result<Self> {
        let d = Self::default();
        Self::new(base_terms, d.tail_tol, d.max_terms.max(base_terms))
    }

    pub fn base_terms(&self) -> usize {
        self.base_terms
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    ln_lambda: f64,
    nu: f64,
}

impl Terms {
    fn new(params: &CmpParams) -> Self {
        Self {
            ln_lambda: params.lambda.ln(),
            nu: params.nu,
        }
    }

    #[inline]
    fn at(&self, j: usize) -> f64 {
        let lf = ln_factorial(j as u64);
        // 0 * ln(j!) must stay 0 even when nu is huge
        let damp = if lf == 0.0 { 0.0 } else { self.nu * lf };
        j as f64 * self.ln_lambda - damp
    }

    /// `ln(t_k / t_{k-1}) = ln λ − ν ln k`, nonincreasing in k.
    #[inline]
    fn log_ratio(&self, k: usize) -> f64 {
        self.ln_lambda - self.nu * (k as f64).ln()
    }
}

#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, t: f64) {
        if t > self.max {
            self.scaled = self.scaled * (self.max - t).exp() + 1.0;
            self.max = t;
        } else {
            self.scaled += (t - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

/// A CMP distribution with its normalizer already evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cmp {
    params: CmpParams,
    log_z: f64,
    terms: usize,
}

impl Cmp {
    pub fn new(params: CmpParams, policy: &TruncationPolicy) -> Result<Self> {
        let series = Terms::new(&params);
        let mut acc = LogSumExp::new();
        for j in 0..policy.base_terms {
            acc.push(series.at(j));
        }
        let log_tol = policy.tail_tol.ln();
        let mut k = policy.base_terms;
        loop {
            let log_sum = acc.value();
            let last = series.at(k - 1);
            let r = series.log_ratio(k);
            if r < 0.0 {
                // terms decay at least geometrically with ratio e^r from here on
                let tail = last + r - (-r.exp()).ln_1p();
                if tail.max(last) - log_sum < log_tol {
                    break;
                }
            }
            if k >= policy.max_terms {
                return Err(Error::TruncationNotConverged {
                    terms: k,
                    lambda: params.lambda,
                    nu: params.nu,
                });
            }
            acc.push(series.at(k));
            k += 1;
        }
        Ok(Self {
            params,
            log_z: acc.value(),
            terms: k,
        })
    }

    pub fn params(&self) -> CmpParams {
        self.params
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    /// Number of series terms `K` used (indices `0..K`).
    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn log_pmf(&self, x: u64) -> f64 {
        x as f64 * self.params.lambda.ln() - self.params.nu * ln_factorial(x) - self.log_z
    }

    /// Probabilities of `0..K` under the truncated series.
    pub fn probabilities(&self) -> Vec<f64> {
        let series = Terms::new(&self.params);
        (0..self.terms)
            .map(|j| (series.at(j) - self.log_z).exp())
            .collect()
    }

    pub fn moments(&self) -> CmpMoments {
        let probs = self.probabilities();
        let lnf: Vec<f64> = (0..self.terms).map(|j| ln_factorial(j as u64)).collect();

        let (mut e_x, mut e_x2, mut e_l, mut e_l2, mut e_xl) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, (&p, &l)) in probs.iter().zip(&lnf).enumerate() {
            let x = j as f64;
            e_x += p * x;
            e_x2 += p * x * x;
            e_l += p * l;
            e_l2 += p * l * l;
            e_xl += p * x * l;
        }

        // central moments from a second pass; the raw differences cancel badly
        let (mut var_x, mut var_l, mut cov) = (0.0, 0.0, 0.0);
        for (j, (&p, &l)) in probs.iter().zip(&lnf).enumerate() {
            let dx = j as f64 - e_x;
            let dl = l - e_l;
            var_x += p * dx * dx;
            var_l += p * dl * dl;
            cov += p * dx * dl;
        }

        CmpMoments {
            e_x,
            e_x2,
            e_lnfact: e_l,
            e_lnfact2: e_l2,
            e_x_lnfact: e_xl,
            var_x,
            var_lnfact: var_l,
            cov_x_lnfact: cov,
        }
    }
}

/// Expectations of `X` and `ln X!` under a CMP distribution.
///
/// Raw moments are reported alongside central moments; the central ones are
/// accumulated around the means directly rather than derived from the raw
/// sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmpMoments {
    pub e_x: f64,
    pub e_x2: f64,
    pub e_lnfact: f64,
    pub e_lnfact2: f64,
    pub e_x_lnfact: f64,
    pub var_x: f64,
    pub var_lnfact: f64,
    pub cov_x_lnfact: f64,
}

/// First and second partial derivatives of `ln Z(λ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogZDerivatives {
    pub d_dlambda: f64,
    pub d_dnu: f64,
    pub d2_dlambda2: f64,
    pub d2_dnu2: f64,
    pub d2_dlambda_dnu: f64,
}

impl LogZDerivatives {
    pub fn from_moments(lambda: f64, m: &CmpMoments) -> Self {
        Self {
            d_dlambda: m.e_x / lambda,
            d_dnu: -m.e_lnfact,
            d2_dlambda2: (m.var_x - m.e_x) / (lambda * lambda),
            d2_dnu2: m.var_lnfact,
            d2_dlambda_dnu: -m.cov_x_lnfact / lambda,
        }
    }
}

pub fn log_normalizer(params: &CmpParams, policy: &TruncationPolicy) -> Result<f64> {
    Ok(Cmp::new(*params, policy)?.log_normalizer())
}

pub fn log_pmf(x: u64, params: &CmpParams, policy: &TruncationPolicy) -> Result<f64> {
    Ok(Cmp::new(*params, policy)?.log_pmf(x))
}

/// `S1·ln λ − ν·S2 − n·ln Z(λ, ν)`.
pub fn log_likelihood(
    stats: &SufficientStats,
    params: &CmpParams,
    policy: &TruncationPolicy,
) -> Result<f64> {
    if stats.n() == 0 {
        return Ok(0.0);
    }
    let log_z = log_normalizer(params, policy)?;
    Ok(stats.s1() as f64 * params.lambda.ln() - params.nu * stats.s2() - stats.n() as f64 * log_z)
}

pub fn moments(params: &CmpParams, policy: &TruncationPolicy) -> Result<CmpMoments> {
    Ok(Cmp::new(*params, policy)?.moments())
}

pub fn logz_hessian(params: &CmpParams, policy: &TruncationPolicy) -> Result<LogZDerivatives> {
    let m = moments(params, policy)?;
    Ok(LogZDerivatives::from_moments(params.lambda, &m))
}
