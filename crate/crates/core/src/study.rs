//! Simulation study: repeated fits of simulated CMP data under several
//! priors, summarized as bias, MSE and coverage of the 95% credible interval.
//!
//! The point estimate is the posterior median. Each `(setting, n, replicate)`
//! dataset comes from its own stream, and each prior's chains from a stream
//! derived from the dataset stream and the prior name, so the output does not
//! depend on how fits are scheduled across threads.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmp::{CmpParams, TruncationPolicy};
use crate::error::{Error, Result};
use crate::mcmc::{run_chains, summarize, McmcConfig, Param};
use crate::posterior::{Posterior, SufficientStats};
use crate::priors::{preset, PriorSpec, PRESET_NAMES};
use crate::rng::{sample_cmp, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub lambda: f64,
    pub nu: f64,
}

impl Setting {
    pub fn new(name: &str, lambda: f64, nu: f64) -> Self {
        Self {
            name: name.to_string(),
            lambda,
            nu,
        }
    }

    pub fn truth(&self, p: Param) -> f64 {
        match p {
            Param::Lambda => self.lambda,
            Param::Nu => self.nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub settings: Vec<Setting>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub mcmc: McmcConfig,
    pub priors: Vec<String>,
    pub master_seed: u64,
    pub truncation: TruncationPolicy,
    /// Replicate-level results are appended here as JSON lines, and records
    /// already present are reused instead of refitted.
    pub results_path: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            settings: vec![
                Setting::new("equi", 4.0, 1.0),
                Setting::new("over", 3.0, 0.5),
                Setting::new("under", 3.0, 2.0),
            ],
            sample_sizes: vec![25, 75, 125],
            replicates: 100,
            mcmc: McmcConfig::default(),
            priors: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            master_seed: 20_240_601,
            truncation: TruncationPolicy::default(),
            results_path: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}'")))
}

/// Parses `name:lambda:nu`.
pub fn parse_setting(s: &str) -> Result<Setting> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    match parts.as_slice() {
        [name, l, n] => Ok(Setting::new(
            name,
            parse_one("settings", l)?,
            parse_one("settings", n)?,
        )),
        [name] => match *name {
            "equi" => Ok(Setting::new("equi", 4.0, 1.0)),
            "over" => Ok(Setting::new("over", 3.0, 0.5)),
            "under" => Ok(Setting::new("under", 3.0, 2.0)),
            other => Err(Error::InvalidConfig(format!(
                "unknown setting '{other}' (use equi, over, under or name:lambda:nu)"
            ))),
        },
        _ => Err(Error::InvalidConfig(format!("malformed setting '{s}'"))),
    }
}

impl StudyConfig {
    /// Reads `key = value` lines over the defaults. Keys: `settings`
    /// (comma-separated `name:lambda:nu` or `equi`/`over`/`under`),
    /// `sample_sizes`, `replicates`, `priors`, `seed`, `chains`, `warmup`,
    /// `keep`, `target_accept`, `trunc_terms`, `results`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("line {}: expected key = value", idx + 1))
                })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "settings" => {
                    cfg.settings = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(parse_setting)
                        .collect::<Result<_>>()?
                }
                "sample_sizes" | "n" => cfg.sample_sizes = parse_list(key, value)?,
                "replicates" => cfg.replicates = parse_one(key, value)?,
                "priors" => cfg.priors = parse_list(key, value)?,
                "seed" | "master_seed" => cfg.master_seed = parse_one(key, value)?,
                "chains" => cfg.mcmc.chains = parse_one(key, value)?,
                "warmup" => cfg.mcmc.warmup = parse_one(key, value)?,
                "keep" => cfg.mcmc.keep = parse_one(key, value)?,
                "target_accept" => cfg.mcmc.target_accept = parse_one(key, value)?,
                "trunc_terms" => {
                    cfg.truncation = TruncationPolicy::with_base_terms(parse_one(key, value)?)?
                }
                "results" => cfg.results_path = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key '{other}'",
                        idx + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<Vec<PriorSpec>> {
        self.mcmc.validate()?;
        if self.settings.is_empty() || self.sample_sizes.is_empty() || self.priors.is_empty() {
            return Err(Error::InvalidConfig(
                "settings, sample sizes and priors must be nonempty".into(),
            ));
        }
        if self.replicates == 0 || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidConfig(
                "replicates and sample sizes must be positive".into(),
            ));
        }
        for s in &self.settings {
            CmpParams::new(s.lambda, s.nu)?;
        }
        self.priors.iter().map(|p| preset(p)).collect()
    }
}

/// Posterior median and 95% interval of one parameter in one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub median: f64,
    pub low: f64,
    pub high: f64,
}

/// One fit of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub setting: String,
    pub n: usize,
    pub replicate: usize,
    pub prior: String,
    /// Identifies the truth, seed, sampler and truncation settings the record
    /// was produced under; records from other runs are ignored on resume.
    pub signature: String,
    pub lambda: Option<Estimate>,
    pub nu: Option<Estimate>,
    pub divergences: usize,
    pub error: Option<String>,
}

impl ReplicateRecord {
    fn estimate(&self, p: Param) -> Option<&Estimate> {
        match p {
            Param::Lambda => self.lambda.as_ref(),
            Param::Nu => self.nu.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub setting: String,
    pub param: Param,
    pub n: usize,
    pub prior: String,
    /// `None` when every replicate failed.
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn dataset_seed(master: u64, setting: &Setting, n: usize, replicate: usize) -> SeedSpec {
    SeedSpec::new(master, 0)
        .derive(fnv1a(&setting.name))
        .derive(n as u64)
        .derive(replicate as u64)
}

fn signature(cfg: &StudyConfig, setting: &Setting) -> String {
    let m = &cfg.mcmc;
    format!(
        "seed={};lambda={};nu={};chains={};warmup={};keep={};accept={};jitter={};floor={};shape={:?};trunc={}/{}/{}",
        cfg.master_seed,
        setting.lambda,
        setting.nu,
        m.chains,
        m.warmup,
        m.keep,
        m.target_accept,
        m.init_jitter,
        m.nu_floor,
        m.shape,
        cfg.truncation.base_terms(),
        cfg.truncation.tail_tol(),
        cfg.truncation.max_terms()
    )
}

type Key = (String, usize, usize, String);

fn key_of(r: &ReplicateRecord) -> Key {
    (r.setting.clone(), r.n, r.replicate, r.prior.clone())
}

fn fit_replicate(
    cfg: &StudyConfig,
    setting: &Setting,
    n: usize,
    replicate: usize,
    prior_name: &str,
    spec: PriorSpec,
) -> ReplicateRecord {
    let mut rec = ReplicateRecord {
        setting: setting.name.clone(),
        n,
        replicate,
        prior: prior_name.to_string(),
        signature: signature(cfg, setting),
        lambda: None,
        nu: None,
        divergences: 0,
        error: None,
    };
    let seed = dataset_seed(cfg.master_seed, setting, n, replicate);
    let outcome = (|| -> Result<_> {
        let truth = CmpParams::new(setting.lambda, setting.nu)?;
        let data = sample_cmp(truth, n, seed, &cfg.truncation)?;
        let stats = SufficientStats::from_data(&data)?;
        let post = Posterior::new(spec, stats, cfg.truncation);
        let draws = run_chains(&post, &cfg.mcmc, seed.derive(fnv1a(prior_name)))?;
        Ok((summarize(&draws)?, draws.total_divergences()))
    })();
    match outcome {
        Ok((s, div)) => {
            let est = |p: &crate::mcmc::ParamSummary| Estimate {
                median: p.median,
                low: p.cri_low,
                high: p.cri_high,
            };
            rec.lambda = Some(est(&s.lambda));
            rec.nu = Some(est(&s.nu));
            rec.divergences = div;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn load_records(path: &PathBuf) -> Result<Vec<ReplicateRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a run killed mid-write can leave a truncated last line
        if let Ok(rec) = serde_json::from_str(&line) {
            out.push(rec);
        }
    }
    Ok(out)
}

/// Fits every `(setting, n, replicate, prior)` combination and returns one
/// [`CellResult`] per `(setting, parameter, n, prior)`, ordered that way with
/// each level in configuration order.
///
/// Individual fit failures are counted in `n_failed`, never fatal.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<CellResult>> {
    Ok(aggregate(cfg, &run_replicates(cfg)?))
}

/// Produces (or reloads) every replicate-level record.
pub fn run_replicates(cfg: &StudyConfig) -> Result<Vec<ReplicateRecord>> {
    let specs = cfg.validate()?;

    let mut known: HashMap<Key, ReplicateRecord> = HashMap::new();
    if let Some(path) = &cfg.results_path {
        for rec in load_records(path)? {
            known.insert(key_of(&rec), rec);
        }
    }

    let mut tasks = Vec::new();
    for setting in &cfg.settings {
        let sig = signature(cfg, setting);
        for &n in &cfg.sample_sizes {
            for rep in 0..cfg.replicates {
                for (name, spec) in cfg.priors.iter().zip(&specs) {
                    let key = (setting.name.clone(), n, rep, name.clone());
                    let done = known.get(&key).is_some_and(|r| r.signature == sig);
                    if !done {
                        tasks.push((setting, n, rep, name.as_str(), *spec));
                    }
                }
            }
        }
    }

    let sink = match &cfg.results_path {
        Some(path) => Some(Mutex::new(
            OpenOptions::new().create(true).append(true).open(path)?,
        )),
        None => None,
    };

    let fresh: Vec<ReplicateRecord> = tasks
        .par_iter()
        .map(
            |&(setting, n, rep, name, spec)| -> Result<ReplicateRecord> {
                let rec = fit_replicate(cfg, setting, n, rep, name, spec);
                if let Some(sink) = &sink {
                    let line = serde_json::to_string(&rec)?;
                    let mut f = sink.lock().expect("results file lock poisoned");
                    writeln!(f, "{line}")?;
                    f.flush()?;
                }
                Ok(rec)
            },
        )
        .collect::<Result<_>>()?;

    for rec in fresh {
        known.insert(key_of(&rec), rec);
    }
    let mut out: Vec<ReplicateRecord> = known.into_values().collect();
    out.sort_by_key(key_of);
    Ok(out)
}

/// Reduces replicate records to cells, in configuration order. Records that
/// do not belong to the configuration are ignored.
pub fn aggregate(cfg: &StudyConfig, records: &[ReplicateRecord]) -> Vec<CellResult> {
    let by_key: HashMap<Key, &ReplicateRecord> = records.iter().map(|r| (key_of(r), r)).collect();
    let mut cells = Vec::new();
    for setting in &cfg.settings {
        for param in Param::ALL {
            let truth = setting.truth(param);
            for &n in &cfg.sample_sizes {
                for prior in &cfg.priors {
                    let (mut sum_err, mut sum_sq, mut covered, mut ok, mut failed) =
                        (0.0, 0.0, 0usize, 0usize, 0usize);
                    for rep in 0..cfg.replicates {
                        let key = (setting.name.clone(), n, rep, prior.clone());
                        match by_key.get(&key).and_then(|r| r.estimate(param)) {
                            Some(e) => {
                                let err = e.median - truth;
                                sum_err += err;
                                sum_sq += err * err;
                                covered += usize::from(e.low <= truth && truth <= e.high);
                                ok += 1;
                            }
                            None => failed += 1,
                        }
                    }
                    let avg = |v: f64| (ok > 0).then(|| v / ok as f64);
                    cells.push(CellResult {
                        setting: setting.name.clone(),
                        param,
                        n,
                        prior: prior.clone(),
                        bias: avg(sum_err),
                        mse: avg(sum_sq),
                        coverage: avg(covered as f64),
                        n_ok: ok,
                        n_failed: failed,
                    });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "text" => Ok(Self::Text),
            other => Err(Error::InvalidConfig(format!(
                "unknown format '{other}' (csv, json or text)"
            ))),
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Text => "text",
        })
    }
}

/// Renders cells in the order given.
pub fn render_tables(results: &[CellResult], format: TableFormat) -> Result<String> {
    if results.is_empty() {
        return Err(Error::InvalidConfig("no study results to render".into()));
    }
    match format {
        TableFormat::Json => Ok(serde_json::to_string_pretty(results)?),
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for cell in results {
                w.serialize(cell)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Text => Ok(render_text(results)),
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

fn render_text(results: &[CellResult]) -> String {
    let priors = unique(results.iter().map(|c| c.prior.as_str()));
    let mut rows: Vec<(&str, Param, usize)> = Vec::new();
    for c in results {
        let row = (c.setting.as_str(), c.param, c.n);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let lookup: HashMap<(&str, Param, usize, &str), &CellResult> = results
        .iter()
        .map(|c| ((c.setting.as_str(), c.param, c.n, c.prior.as_str()), c))
        .collect();

    type Metric = (&'static str, fn(&CellResult) -> Option<f64>, usize);
    let metrics: [Metric; 3] = [
        ("MSE", |c| c.mse, 3),
        ("Coverage of 95% CrI", |c| c.coverage, 2),
        ("Bias", |c| c.bias, 3),
    ];

    let width = 14;
    let mut out = String::new();
    for (title, get, digits) in metrics {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<8} {:<7} {:>5}", "Disp.", "Param.", "n");
        for p in &priors {
            let _ = write!(out, " {p:>width$}");
        }
        let _ = writeln!(out);
        let mut last: Option<(&str, Param)> = None;
        for &(setting, param, n) in &rows {
            let (s_lbl, p_lbl) = match last {
                Some((s, p)) if s == setting && p == param => ("", ""),
                Some((s, _)) if s == setting => ("", param.name()),
                _ => (setting, param.name()),
            };
            last = Some((setting, param));
            let _ = write!(out, "{s_lbl:<8} {p_lbl:<7} {n:>5}");
            for p in &priors {
                let cell = match lookup.get(&(setting, param, n, *p)) {
                    None => String::new(),
                    Some(c) => match get(c) {
                        None => format!("\u{2014} ({} failed)", c.n_failed),
                        Some(v) if c.n_failed > 0 => format!("{v:.digits$} ({}f)", c.n_failed),
                        Some(v) => format!("{v:.digits$}"),
                    },
                };
                let _ = write!(out, " {cell:>width$}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
    }
    out
}
