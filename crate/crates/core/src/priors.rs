//! Prior families for `(λ, ν)`: the conjugate family, its flat limit `1/λ`,
//! and the Jeffreys prior built from the Fisher information.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cmp::{ln_factorial, log_normalizer, moments, CmpParams, TruncationPolicy};
use crate::error::{Error, Result};
use crate::posterior::SufficientStats;

/// Hyperparameters of `π(λ, ν) ∝ λ^{a−1} e^{−νb} Z(λ, ν)^{−c}`.
///
/// Under the "additional data" reading, `a` is a sum of pseudo-counts, `b`
/// the sum of their log-factorials and `c` their number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateHyper {
    a: f64,
    b: f64,
    c: f64,
}

impl ConjugateHyper {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(a) && ok(b) && ok(c) {
            Ok(Self { a, b, c })
        } else {
            Err(Error::InvalidHyper { a, b, c })
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Posterior hyperparameters `(a + S1, b + S2, c + n)`.
    pub fn updated(&self, stats: &SufficientStats) -> Self {
        Self {
            a: self.a + stats.s1() as f64,
            b: self.b + stats.s2(),
            c: self.c + stats.n() as f64,
        }
    }
}

/// Both sides of the conjugate propriety inequality `lhs > rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProprietyCheck {
    /// `b / c`
    pub lhs: f64,
    /// `ln(⌊a/c⌋!) + (a/c − ⌊a/c⌋)·ln(⌊a/c⌋ + 1)`
    pub rhs: f64,
    pub proper: bool,
}

pub fn propriety_check(h: &ConjugateHyper) -> ProprietyCheck {
    let ratio = h.a / h.c;
    let floor = ratio.floor();
    let rhs = ln_factorial(floor as u64) + (ratio - floor) * (floor + 1.0).ln();
    let lhs = h.b / h.c;
    ProprietyCheck {
        lhs,
        rhs,
        proper: lhs > rhs,
    }
}

/// Whether the normalized conjugate prior with these hyperparameters is a
/// proper density. The inequality is strict.
pub fn conjugate_propriety(h: &ConjugateHyper) -> bool {
    propriety_check(h).proper
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSpec {
    Conjugate(ConjugateHyper),
    /// `π(λ, ν) ∝ 1/λ`, the limit of the conjugate family as `(a, b, c) → 0`.
    Flat,
    /// `π(λ, ν) ∝ sqrt(det 𝓘₁(λ, ν))` with the single-observation information.
    Jeffreys,
}

impl PriorSpec {
    /// Flat and Jeffreys priors are always reported improper.
    pub fn is_proper(&self) -> bool {
        match self {
            PriorSpec::Conjugate(h) => conjugate_propriety(h),
            PriorSpec::Flat | PriorSpec::Jeffreys => false,
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Conjugate(h) => write!(f, "conjugate(a={}, b={}, c={})", h.a, h.b, h.c),
            PriorSpec::Flat => f.write_str("flat"),
            PriorSpec::Jeffreys => f.write_str("jeffreys"),
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "conj-1",
    "conj-data",
    "conj-0.1",
    "conj-0.01",
    "flat",
    "jeffreys",
];

/// The six study priors, in the column order of the result tables.
pub fn preset_priors() -> Vec<(&'static str, PriorSpec)> {
    PRESET_NAMES
        .iter()
        .map(|&name| (name, preset(name).expect("preset names resolve")))
        .collect()
}

pub fn preset(name: &str) -> Result<PriorSpec> {
    let conj = |a, b, c| ConjugateHyper::new(a, b, c).map(PriorSpec::Conjugate);
    match name {
        "conj-1" => conj(1.0, 1.0, 1.0),
        // pseudo-data x' = [2, 0]
        "conj-data" => conj(2.0, std::f64::consts::LN_2, 2.0),
        "conj-0.1" => conj(0.1, 0.1, 0.1),
        "conj-0.01" => conj(0.01, 0.01, 0.01),
        "flat" => Ok(PriorSpec::Flat),
        "jeffreys" => Ok(PriorSpec::Jeffreys),
        other => Err(Error::UnknownPrior(other.to_string())),
    }
}

/// Determinant of the single-observation Fisher information,
/// `[Var(X)/λ²]·Var(ln X!) − [Cov(X, ln X!)/λ]²`.
pub fn jeffreys_information_det(params: &CmpParams, policy: &TruncationPolicy) -> Result<f64> {
    let m = moments(params, policy)?;
    let l = params.lambda();
    let i_ll = m.var_x / (l * l);
    let i_ln = m.cov_x_lnfact / l;
    Ok(i_ll * m.var_lnfact - i_ln * i_ln)
}

pub fn jeffreys_log_density(params: &CmpParams, policy: &TruncationPolicy) -> Result<f64> {
    if params.nu() <= 0.0 {
        return Err(Error::InvalidParams {
            lambda: params.lambda(),
            nu: params.nu(),
            reason: "the Jeffreys prior requires nu > 0",
        });
    }
    let det = jeffreys_information_det(params, policy)?;
    if det > 0.0 && det.is_finite() {
        Ok(0.5 * det.ln())
    } else {
        Err(Error::NonPositiveDeterminant {
            lambda: params.lambda(),
            nu: params.nu(),
            det,
        })
    }
}

/// Unnormalized log prior density.
pub fn log_prior_density(
    spec: &PriorSpec,
    params: &CmpParams,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let ln_lambda = params.lambda().ln();
    match spec {
        PriorSpec::Conjugate(h) => {
            let log_z = log_normalizer(params, policy)?;
            Ok((h.a - 1.0) * ln_lambda - params.nu() * h.b - h.c * log_z)
        }
        PriorSpec::Flat => Ok(-ln_lambda),
        PriorSpec::Jeffreys => jeffreys_log_density(params, policy),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{E, LN_2};

    use super::*;

    fn hyper(a: f64, b: f64, c: f64) -> ConjugateHyper {
        ConjugateHyper::new(a, b, c).unwrap()
    }

    fn params(l: f64, n: f64) -> CmpParams {
        CmpParams::new(l, n).unwrap()
    }

    #[test]
    fn propriety_examples() {
        assert!(conjugate_propriety(&hyper(1.0, 1.0, 1.0)));
        assert!(conjugate_propriety(&hyper(2.0, LN_2, 2.0)));
        assert!(conjugate_propriety(&hyper(1.0, 1e-12, 1.0)));
        assert!(conjugate_propriety(&hyper(0.1, 0.1, 0.1)));
        assert!(ConjugateHyper::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_pseudo_observation_is_never_proper() {
        // c = 1, a = x', b = ln(x'!) sits exactly on the boundary
        for x in 0..20u64 {
            let b = ln_factorial(x);
            if b > 0.0 {
                assert!(!conjugate_propriety(&hyper(x as f64, b, 1.0)), "x' = {x}");
            }
        }
    }

    #[test]
    fn improper_example() {
        let c = propriety_check(&hyper(3.0, 0.1, 1.0));
        assert!(!c.proper);
        assert!((c.rhs - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        let all = preset_priors();
        assert_eq!(all.len(), 6);
        let names: Vec<_> = all.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, PRESET_NAMES);
        assert_eq!(
            preset("conj-data").unwrap(),
            PriorSpec::Conjugate(hyper(2.0, LN_2, 2.0))
        );
        for (_, spec) in &all[..4] {
            assert!(spec.is_proper());
        }
        assert!(!PriorSpec::Flat.is_proper());
        assert!(!PriorSpec::Jeffreys.is_proper());
        assert!(matches!(preset("conj-2"), Err(Error::UnknownPrior(_))));
    }

    #[test]
    fn flat_density() {
        let pol = TruncationPolicy::default();
        assert_eq!(
            log_prior_density(&PriorSpec::Flat, &params(1.0, 7.0), &pol).unwrap(),
            0.0
        );
        let v = log_prior_density(&PriorSpec::Flat, &params(E, 0.2), &pol).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn conj_one_density() {
        let pol = TruncationPolicy::default();
        let spec = PriorSpec::Conjugate(hyper(1.0, 1.0, 1.0));
        for (l, n) in [(0.3, 0.2), (3.0, 1.5), (10.0, 4.0)] {
            let p = params(l, n);
            let lz = log_normalizer(&p, &pol).unwrap();
            let v = log_prior_density(&spec, &p, &pol).unwrap();
            assert!((v - (-n - lz)).abs() < 1e-12);
        }
    }

    #[test]
    fn jeffreys_density_at_poisson_point() {
        // Poisson(4) central moments, mpmath over 500 terms
        let (var_x, var_l, cov): (f64, f64, f64) =
            (4.0, 9.622_629_008_868_96, 6.077_418_248_729_184);
        let det = (var_x / 16.0) * var_l - (cov / 4.0).powi(2);
        let expected = 0.5 * det.ln();
        let pol = TruncationPolicy::default();
        let got = log_prior_density(&PriorSpec::Jeffreys, &params(4.0, 1.0), &pol).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - -1.165_394_728_496_280_4).abs() < 1e-9);
    }

    #[test]
    fn jeffreys_requires_positive_nu() {
        let pol = TruncationPolicy::default();
        assert!(log_prior_density(&PriorSpec::Jeffreys, &params(0.5, 0.0), &pol).is_err());
    }

    #[test]
    fn small_conjugate_approaches_flat() {
        let pol = TruncationPolicy::default();
        let p = params(2.0, 1.5);
        let eps = 1e-6;
        let conj =
            log_prior_density(&PriorSpec::Conjugate(hyper(eps, eps, eps)), &p, &pol).unwrap();
        let flat = log_prior_density(&PriorSpec::Flat, &p, &pol).unwrap();
        assert!((conj - flat).abs() < 1e-4);
    }

    #[test]
    fn updated_hyper() {
        let s = SufficientStats::from_data(&[2, 0]).unwrap();
        let u = hyper(1.0, 1.0, 1.0).updated(&s);
        assert_eq!((u.a(), u.c()), (3.0, 3.0));
        assert!((u.b() - (1.0 + LN_2)).abs() < 1e-15);
    }
}
