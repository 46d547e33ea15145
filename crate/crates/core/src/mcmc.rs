//! Adaptive random-walk Metropolis over `(ln λ, ν)` with split-R̂ diagnostics
//! and posterior summaries.
//!
//! The posterior ridge follows `ln λ ≈ ν·ln μ` for a data-determined `μ`, which
//! is a straight line in `(ln λ, ν)` but bends sharply in `(ln λ, ln ν)` when
//! `ν` is small; a single adapted covariance fits the straight ridge far
//! better. Proposals with `ν` below `nu_floor` are outside the support and
//! simply rejected.
//!
//! Each chain runs independently on its own stream derived from the fit seed
//! and the chain index, so results do not depend on scheduling. During warmup
//! the log step size follows a Robbins-Monro recursion toward
//! `target_accept`, and the proposal shape is re-estimated from the draws of
//! each warmup quarter. Everything is frozen once warmup ends.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmp::CmpParams;
use crate::error::{Error, Result};
use crate::posterior::Posterior;
use crate::rng::SeedSpec;

/// How the proposal covariance is adapted during warmup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalShape {
    /// Per-coordinate variances only.
    Diagonal,
    /// Full 2×2 covariance.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub keep: usize,
    pub target_accept: f64,
    /// Chains start at `ln λ₀ = ln(max(x̄, 0.5)) + jitter·z₁` and
    /// `ln ν₀ = jitter·z₂` with standard normal `z`.
    pub init_jitter: f64,
    /// Lower edge of the `ν` support seen by the sampler.
    pub nu_floor: f64,
    pub shape: ProposalShape,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 2000,
            keep: 2000,
            target_accept: 0.30,
            init_jitter: 0.5,
            nu_floor: 1e-4,
            shape: ProposalShape::Dense,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.chains < 2 {
            return bad("at least 2 chains are required for R-hat");
        }
        if self.keep < 100 {
            return bad("keep must be at least 100");
        }
        if self.warmup < 8 {
            return bad("warmup must be at least 8");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(self.init_jitter.is_finite() && self.init_jitter > 0.0) {
            return bad("init_jitter must be positive");
        }
        if !(self.nu_floor.is_finite() && self.nu_floor > 0.0) {
            return bad("nu_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Lambda,
    Nu,
}

impl Param {
    pub const ALL: [Param; 2] = [Param::Lambda, Param::Nu];

    pub fn name(&self) -> &'static str {
        match self {
            Param::Lambda => "lambda",
            Param::Nu => "nu",
        }
    }
}

/// Retained draws on the natural scale, indexed `[chain][iteration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub lambda: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    /// Post-warmup acceptance rate per chain.
    pub acceptance_rate: Vec<f64>,
    /// Post-warmup proposals whose log posterior was non-finite or could not
    /// be evaluated, per chain.
    pub divergences: Vec<usize>,
    /// Frozen proposal scale per chain.
    pub step_size: Vec<f64>,
    pub nu_floor: f64,
}

impl Draws {
    /// Wraps externally produced chains, e.g. for diagnostics on synthetic
    /// output. Sampler metadata is left empty.
    pub fn from_chains(lambda: Vec<Vec<f64>>, nu: Vec<Vec<f64>>) -> Self {
        let m = lambda.len();
        Self {
            lambda,
            nu,
            acceptance_rate: vec![f64::NAN; m],
            divergences: vec![0; m],
            step_size: vec![f64::NAN; m],
            nu_floor: 0.0,
        }
    }

    pub fn chains(&self) -> usize {
        self.lambda.len()
    }

    /// Shortest chain length.
    pub fn iterations(&self) -> usize {
        self.lambda.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn n_kept(&self) -> usize {
        self.lambda.iter().map(Vec::len).sum()
    }

    pub fn param(&self, p: Param) -> &[Vec<f64>] {
        match p {
            Param::Lambda => &self.lambda,
            Param::Nu => &self.nu,
        }
    }

    pub fn pooled(&self, p: Param) -> Vec<f64> {
        self.param(p).iter().flatten().copied().collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    pub fn divergence_rate(&self) -> f64 {
        self.total_divergences() as f64 / self.n_kept().max(1) as f64
    }

    /// More than 1% of post-warmup proposals diverged.
    pub fn flagged(&self) -> bool {
        self.divergence_rate() > 0.01
    }

    /// Columns `chain,iter,lambda,nu`; chains and iterations are 0-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["chain", "iter", "lambda", "nu"])?;
        for (c, (ls, ns)) in self.lambda.iter().zip(&self.nu).enumerate() {
            for (i, (l, n)) in ls.iter().zip(ns).enumerate() {
                w.write_record([c.to_string(), i.to_string(), l.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    // lower-triangular Cholesky factor [[l11, 0], [l21, l22]]
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Shape {
    fn identity() -> Self {
        Self {
            l11: 1.0,
            l21: 0.0,
            l22: 1.0,
        }
    }

    fn from_window(w: &Welford, kind: ProposalShape) -> Self {
        let n = w.n as f64;
        // shrink toward a small multiple of the identity while windows are short
        let shrink = |v: f64, reg: f64| (n / (n + 5.0)) * v + reg * (5.0 / (n + 5.0));
        let (v11, v22, v12) = w.cov();
        let s11 = shrink(v11, 1e-3);
        let s22 = shrink(v22, 1e-3);
        let s12 = match kind {
            ProposalShape::Dense => shrink(v12, 0.0),
            ProposalShape::Diagonal => 0.0,
        };
        let l11 = s11.sqrt();
        let l21 = s12 / l11;
        let rest = s22 - l21 * l21;
        if !(l11.is_finite() && rest.is_finite() && rest > 0.0) {
            return Self::identity();
        }
        Self {
            l11,
            l21,
            l22: rest.sqrt(),
        }
    }

    fn apply(&self, z1: f64, z2: f64) -> (f64, f64) {
        (self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: [f64; 2],
    m2: [f64; 3],
}

impl Welford {
    fn push(&mut self, x: [f64; 2]) {
        self.n += 1;
        let n = self.n as f64;
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        self.mean[0] += d0 / n;
        self.mean[1] += d1 / n;
        self.m2[0] += d0 * (x[0] - self.mean[0]);
        self.m2[1] += d1 * (x[1] - self.mean[1]);
        self.m2[2] += d0 * (x[1] - self.mean[1]);
    }

    fn cov(&self) -> (f64, f64, f64) {
        let d = (self.n.max(2) - 1) as f64;
        (self.m2[0] / d, self.m2[1] / d, self.m2[2] / d)
    }
}

enum Eval {
    Finite(f64),
    /// Outside the sampler's support (below the ν floor); rejected silently.
    Excluded,
    Divergent,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

// `u = ln λ`; the Jacobian of λ = e^u contributes `u`.
fn log_target(post: &Posterior, u: f64, nu: f64, nu_floor: f64) -> Eval {
    let lambda = u.exp();
    if nu.is_nan() || nu < nu_floor {
        return Eval::Excluded;
    }
    let Ok(params) = CmpParams::new(lambda, nu) else {
        return Eval::Divergent;
    };
    match post.log_density(&params) {
        Ok(lp) if lp.is_finite() => Eval::Finite(lp + u),
        _ => Eval::Divergent,
    }
}

const INIT_ATTEMPTS: usize = 100;
// optimal random-walk scale for a 2-dimensional Gaussian target
const INITIAL_LOG_STEP: f64 = 0.520_212_394_2; // ln(2.38 / sqrt(2))
const RM_OFFSET: f64 = 10.0;
const RM_DECAY: f64 = 0.6;

struct ChainOutput {
    lambda: Vec<f64>,
    nu: Vec<f64>,
    acceptance_rate: f64,
    divergences: usize,
    step_size: f64,
}

fn run_chain(
    post: &Posterior,
    config: &McmcConfig,
    seed: SeedSpec,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = seed.derive(chain as u64).rng();

    let xbar = if post.stats.n() > 0 {
        post.stats.xbar()
    } else {
        0.0
    };
    let u_center = xbar.max(0.5).ln();

    let mut state = None;
    for _ in 0..INIT_ATTEMPTS {
        let u = u_center + config.init_jitter * normal(&mut rng);
        let nu = (config.init_jitter * normal(&mut rng)).exp();
        if let Eval::Finite(lp) = log_target(post, u, nu, config.nu_floor) {
            state = Some(([u, nu], lp));
            break;
        }
    }
    let (mut theta, mut lp) = state.ok_or(Error::InitializationFailed {
        chain,
        attempts: INIT_ATTEMPTS,
    })?;

    let mut shape = Shape::identity();
    let mut log_step = INITIAL_LOG_STEP;
    let mut rm_t = 0usize;
    let mut window = Welford::default();
    let quarter = (config.warmup / 4).max(1);
    let mut tail_log_step_sum = 0.0;
    let mut tail_count = 0usize;

    let mut lambda = Vec::with_capacity(config.keep);
    let mut nu = Vec::with_capacity(config.keep);
    let mut accepted = 0usize;
    let mut divergences = 0usize;
    let mut step = log_step.exp();

    for iter in 0..config.warmup + config.keep {
        let warm = iter < config.warmup;
        if !warm && iter == config.warmup {
            step = (tail_log_step_sum / tail_count.max(1) as f64).exp();
        } else if warm {
            step = log_step.exp();
        }

        let (d0, d1) = shape.apply(normal(&mut rng), normal(&mut rng));
        let proposal = [theta[0] + step * d0, theta[1] + step * d1];
        let log_u: f64 = rng.random::<f64>().ln();

        let accept_prob = match log_target(post, proposal[0], proposal[1], config.nu_floor) {
            Eval::Finite(lp_new) => {
                let ratio = (lp_new - lp).min(0.0).exp();
                if log_u < lp_new - lp {
                    theta = proposal;
                    lp = lp_new;
                    if !warm {
                        accepted += 1;
                    }
                }
                ratio
            }
            Eval::Excluded => 0.0,
            Eval::Divergent => {
                if !warm {
                    divergences += 1;
                }
                0.0
            }
        };

        if warm {
            rm_t += 1;
            let gain = (rm_t as f64 + RM_OFFSET).powf(-RM_DECAY);
            log_step += gain * (accept_prob - config.target_accept);
            window.push(theta);
            if iter >= config.warmup - quarter {
                tail_log_step_sum += log_step;
                tail_count += 1;
            }
            let end_of_quarter = (iter + 1) % quarter == 0 && iter + 1 < config.warmup;
            if end_of_quarter && window.n >= 10 {
                shape = Shape::from_window(&window, config.shape);
                window = Welford::default();
                log_step = INITIAL_LOG_STEP;
                rm_t = 0;
            }
        } else {
            lambda.push(theta[0].exp());
            nu.push(theta[1]);
        }
    }

    if divergences == config.keep {
        return Err(Error::AllDivergent { chain });
    }

    Ok(ChainOutput {
        lambda,
        nu,
        acceptance_rate: accepted as f64 / config.keep as f64,
        divergences,
        step_size: step,
    })
}

/// Samples the posterior with `config.chains` independent chains.
///
/// Posteriors known to be improper are refused before any sampling. Chain
/// `i` draws from `seed.derive(i)`.
pub fn run_chains(post: &Posterior, config: &McmcConfig, seed: SeedSpec) -> Result<Draws> {
    config.validate()?;
    post.check_propriety()?;

    let outputs = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(post, config, seed, c))
        .collect::<Result<Vec<_>>>()?;

    let mut draws = Draws {
        lambda: Vec::with_capacity(outputs.len()),
        nu: Vec::with_capacity(outputs.len()),
        acceptance_rate: Vec::with_capacity(outputs.len()),
        divergences: Vec::with_capacity(outputs.len()),
        step_size: Vec::with_capacity(outputs.len()),
        nu_floor: config.nu_floor,
    };
    for out in outputs {
        draws.lambda.push(out.lambda);
        draws.nu.push(out.nu);
        draws.acceptance_rate.push(out.acceptance_rate);
        draws.divergences.push(out.divergences);
        draws.step_size.push(out.step_size);
    }
    Ok(draws)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Split potential scale reduction factor.
///
/// Each chain is cut into two halves (the middle draw of an odd-length chain
/// is dropped), and over the resulting halves of length `n`:
/// `R̂ = sqrt(((n − 1)/n · W + B/n) / W)`, where `W` is the mean within-half
/// variance and `B/n` the sample variance of the half means.
pub fn split_rhat(draws: &Draws, param: Param) -> Result<f64> {
    let chains = draws.param(param);
    if chains.len() < 2 {
        return Err(Error::InvalidConfig("R-hat needs at least 2 chains".into()));
    }
    let len = draws.iterations();
    if len < 100 {
        return Err(Error::InvalidConfig(
            "R-hat needs at least 100 iterations per chain".into(),
        ));
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..len]])
        .collect();

    let within = mean(
        &halves
            .iter()
            .map(|h| sample_variance(h))
            .collect::<Vec<_>>(),
    );
    if within.is_nan() || within <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let between_over_n = sample_variance(&halves.iter().map(|h| mean(h)).collect::<Vec<_>>());
    let n = half as f64;
    let var_plus = (n - 1.0) / n * within + between_over_n;
    Ok((var_plus / within).sqrt())
}

/// Linear-interpolation quantile of sorted data: with `h = (N − 1)·p`, the
/// value `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋ + 1] − x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub median: f64,
    pub cri_low: f64,
    pub cri_high: f64,
    pub rhat: f64,
}

impl ParamSummary {
    pub fn covers(&self, value: f64) -> bool {
        self.cri_low <= value && value <= self.cri_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub lambda: ParamSummary,
    pub nu: ParamSummary,
    pub n_kept: usize,
}

impl PosteriorSummary {
    pub fn get(&self, p: Param) -> &ParamSummary {
        match p {
            Param::Lambda => &self.lambda,
            Param::Nu => &self.nu,
        }
    }
}

/// Pooled median and equal-tailed 95% interval per parameter, with split R̂.
pub fn summarize(draws: &Draws) -> Result<PosteriorSummary> {
    if draws.n_kept() == 0 {
        return Err(Error::InvalidConfig("no draws to summarize".into()));
    }
    let one = |p: Param| -> Result<ParamSummary> {
        let mut xs = draws.pooled(p);
        xs.sort_by(f64::total_cmp);
        Ok(ParamSummary {
            median: quantile_sorted(&xs, 0.5),
            cri_low: quantile_sorted(&xs, 0.025),
            cri_high: quantile_sorted(&xs, 0.975),
            rhat: split_rhat(draws, p)?,
        })
    };
    Ok(PosteriorSummary {
        lambda: one(Param::Lambda)?,
        nu: one(Param::Nu)?,
        n_kept: draws.n_kept(),
    })
}
