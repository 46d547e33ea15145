//! Single-dataset fits and their reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cmp::TruncationPolicy;
use crate::data::CountDataset;
use crate::error::Result;
use crate::mcmc::{run_chains, summarize, Draws, McmcConfig, PosteriorSummary};
use crate::posterior::Posterior;
use crate::priors::PriorSpec;
use crate::rng::SeedSpec;

/// Everything needed to recompute a fit, plus its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dataset: String,
    pub n: u64,
    pub s1: u64,
    pub s2: f64,
    pub prior: String,
    pub prior_spec: PriorSpec,
    pub summary: PosteriorSummary,
    pub acceptance_rate: Vec<f64>,
    pub divergences: Vec<usize>,
    pub divergence_flag: bool,
    pub nu_floor: f64,
    pub config: McmcConfig,
    pub truncation: TruncationPolicy,
    pub seed: SeedSpec,
}

pub fn fit_dataset(
    dataset: &CountDataset,
    prior_name: &str,
    spec: PriorSpec,
    config: &McmcConfig,
    seed: SeedSpec,
    policy: TruncationPolicy,
) -> Result<(FitReport, Draws)> {
    let stats = dataset.stats()?;
    let post = Posterior::new(spec, stats, policy);
    let draws = run_chains(&post, config, seed)?;
    let summary = summarize(&draws)?;
    let report = FitReport {
        dataset: dataset.name.clone(),
        n: stats.n(),
        s1: stats.s1(),
        s2: stats.s2(),
        prior: prior_name.to_string(),
        prior_spec: spec,
        summary,
        acceptance_rate: draws.acceptance_rate.clone(),
        divergences: draws.divergences.clone(),
        divergence_flag: draws.flagged(),
        nu_floor: draws.nu_floor,
        config: *config,
        truncation: policy,
        seed,
    };
    Ok((report, draws))
}

/// Four significant digits, in the style of published estimate tables.
fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    format!("{:.*}", digits.max(0) as usize, x)
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "prior: {} ({})", self.prior, self.prior_spec);
        let _ = writeln!(
            out,
            "chains: {} x {} kept after {} warmup, seed {}",
            self.config.chains, self.config.keep, self.config.warmup, self.seed.master_seed
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<18} {:>7}  {:<6}  {:<28} {:>6}",
            "Data", "n", "Param.", "Est. (CrI)", "R-hat"
        );
        for (i, (name, s)) in [("lambda", &self.summary.lambda), ("nu", &self.summary.nu)]
            .into_iter()
            .enumerate()
        {
            let (data, n) = if i == 0 {
                (self.dataset.as_str(), self.n.to_string())
            } else {
                ("", String::new())
            };
            let est = format!(
                "{} ({}, {})",
                sig4(s.median),
                sig4(s.cri_low),
                sig4(s.cri_high)
            );
            let _ = writeln!(
                out,
                "{data:<18} {n:>7}  {name:<6}  {est:<28} {:>6.3}",
                s.rhat
            );
        }
        let _ = writeln!(out);
        let acc: Vec<String> = self
            .acceptance_rate
            .iter()
            .map(|a| format!("{a:.2}"))
            .collect();
        let _ = writeln!(out, "acceptance: {}", acc.join(" "));
        let total: usize = self.divergences.iter().sum();
        let _ = writeln!(
            out,
            "divergent proposals: {total}{}",
            if self.divergence_flag {
                "  [WARNING: more than 1% of post-warmup proposals]"
            } else {
                ""
            }
        );
        let _ = writeln!(out, "nu floor: {}", self.nu_floor);
        out
    }
}
