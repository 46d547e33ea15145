use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use comprior::data::{resolve_dataset, DATA_DIR_ENV};
use comprior::study::{parse_setting, StudyConfig, TableFormat};
use comprior::{
    fit_dataset, preset, propriety_check, render_tables, run_study, sample_cmp, Cmp, CmpParams,
    ConjugateHyper, McmcConfig, PriorSpec, ProposalShape, SeedSpec, TruncationPolicy,
};

#[derive(Parser)]
#[command(
    name = "comprior",
    version,
    about = "Bayesian inference for Conway-Maxwell-Poisson counts"
)]
struct Cli {
    /// Directory holding the bundled datasets.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a dataset and report posterior medians, 95% intervals and R-hat.
    Fit(FitArgs),
    /// Run the simulation study and print bias / MSE / coverage tables.
    Study(StudyArgs),
    /// Draw CMP variates, one per line.
    Rand(RandArgs),
    /// Check the conjugate propriety condition for (a, b, c).
    CheckPrior(CheckPriorArgs),
    /// Tabulate the CMP pmf.
    Pmf(PmfArgs),
}

#[derive(Args, Clone)]
struct SamplerArgs {
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 2000)]
    warmup: usize,
    #[arg(long, default_value_t = 2000)]
    keep: usize,
    /// Proposal covariance adapted during warmup.
    #[arg(long, value_enum, default_value_t = Proposal::Dense)]
    proposal: Proposal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Proposal {
    Diagonal,
    Dense,
}

impl SamplerArgs {
    fn config(&self) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            warmup: self.warmup,
            keep: self.keep,
            shape: match self.proposal {
                Proposal::Diagonal => ProposalShape::Diagonal,
                Proposal::Dense => ProposalShape::Dense,
            },
            ..McmcConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset file, or the name of a bundled dataset (textile-faults,
    /// crab-satellites, slovak-poem, hungarian-words).
    dataset: String,
    #[arg(long, default_value = "conj-1",
          value_parser = ["conj-1", "conj-data", "conj-0.1", "conj-0.01", "flat", "jeffreys"])]
    prior: String,
    /// Conjugate hyperparameter overrides; all three must be given.
    #[arg(long, requires_all = ["b", "c"])]
    a: Option<f64>,
    #[arg(long, requires_all = ["a", "c"])]
    b: Option<f64>,
    #[arg(long, requires_all = ["a", "b"])]
    c: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 101)]
    trunc_terms: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export retained draws as CSV (chain, iter, lambda, nu).
    #[arg(long)]
    draws: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Key-value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated settings: equi, over, under, or name:lambda:nu.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<String>>,
    /// Comma-separated sample sizes.
    #[arg(long = "n", value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated prior presets.
    #[arg(long, value_delimiter = ',')]
    priors: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    keep: Option<usize>,
    #[arg(long)]
    trunc_terms: Option<usize>,
    /// Replicate-level results file (JSON lines); reused on rerun.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RandArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    nu: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long, default_value_t = 101)]
    trunc_terms: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckPriorArgs {
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Args)]
struct PmfArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    nu: f64,
    /// Largest value to tabulate; defaults to where the upper tail drops
    /// below 1e-6.
    #[arg(long)]
    max: Option<u64>,
    #[arg(long, default_value_t = 101)]
    trunc_terms: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let dataset = resolve_dataset(&args.dataset)?;
    let (name, spec) = match (args.a, args.b, args.c) {
        (Some(a), Some(b), Some(c)) => {
            let spec = PriorSpec::Conjugate(ConjugateHyper::new(a, b, c)?);
            (spec.to_string(), spec)
        }
        _ => (args.prior.clone(), preset(&args.prior)?),
    };
    let policy = TruncationPolicy::with_base_terms(args.trunc_terms)?;
    let (report, draws) = fit_dataset(
        &dataset,
        &name,
        spec,
        &args.sampler.config(),
        SeedSpec::new(args.seed, 0),
        policy,
    )?;
    if let Some(path) = &args.draws {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        draws.write_csv(io::BufWriter::new(file))?;
    }
    let text = match args.format {
        Format::Json => report.to_json()? + "\n",
        Format::Text => report.to_text(),
        Format::Csv => bail!("fit reports are available as json or text"),
    };
    emit(args.out.as_deref(), &text)
}

fn study(args: StudyArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            StudyConfig::from_kv_str(&text)?
        }
        None => StudyConfig::default(),
    };
    if let Some(s) = &args.settings {
        cfg.settings = s
            .iter()
            .map(|s| parse_setting(s))
            .collect::<comprior::Result<_>>()?;
    }
    if let Some(n) = args.sample_sizes {
        cfg.sample_sizes = n;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(p) = args.priors {
        cfg.priors = p;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(c) = args.chains {
        cfg.mcmc.chains = c;
    }
    if let Some(w) = args.warmup {
        cfg.mcmc.warmup = w;
    }
    if let Some(k) = args.keep {
        cfg.mcmc.keep = k;
    }
    if let Some(t) = args.trunc_terms {
        cfg.truncation = TruncationPolicy::with_base_terms(t)?;
    }
    if args.results.is_some() {
        cfg.results_path = args.results;
    }
    let cells = run_study(&cfg)?;
    let format = match args.format {
        Format::Csv => TableFormat::Csv,
        Format::Json => TableFormat::Json,
        Format::Text => TableFormat::Text,
    };
    emit(args.out.as_deref(), &render_tables(&cells, format)?)
}

fn rand(args: RandArgs) -> Result<()> {
    let params = CmpParams::new(args.lambda, args.nu)?;
    let policy = TruncationPolicy::with_base_terms(args.trunc_terms)?;
    let draws = sample_cmp(
        params,
        args.count,
        SeedSpec::new(args.seed, args.stream),
        &policy,
    )?;
    let mut text = String::with_capacity(draws.len() * 3);
    for x in draws {
        text.push_str(&x.to_string());
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn check_prior(args: CheckPriorArgs) -> Result<bool> {
    let h = ConjugateHyper::new(args.a, args.b, args.c)?;
    let check = propriety_check(&h);
    println!("{}", if check.proper { "proper" } else { "improper" });
    println!("lhs = b/c = {}", check.lhs);
    println!(
        "rhs = ln(floor(a/c)!) + frac(a/c)*ln(floor(a/c)+1) = {}",
        check.rhs
    );
    Ok(check.proper)
}

fn pmf(args: PmfArgs) -> Result<()> {
    let params = CmpParams::new(args.lambda, args.nu)?;
    let dist = Cmp::new(
        params,
        &TruncationPolicy::with_base_terms(args.trunc_terms)?,
    )?;
    let probs = dist.probabilities();
    let max = match args.max {
        Some(m) => m,
        None => {
            let mut cum = 0.0;
            let mut last = probs.len() as u64 - 1;
            for (x, p) in probs.iter().enumerate() {
                cum += p;
                if 1.0 - cum < 1e-6 {
                    last = x as u64;
                    break;
                }
            }
            last
        }
    };
    let rows: Vec<(u64, f64)> = (0..=max).map(|x| (x, dist.log_pmf(x).exp())).collect();
    let text = match args.format {
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(x, p)| serde_json::json!({ "x": x, "pmf": p }))
                .collect();
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => {
            let mut s = String::from("x,pmf\n");
            for (x, p) in rows {
                s.push_str(&format!("{x},{p}\n"));
            }
            s
        }
        Format::Text => {
            let mut s = format!(
                "# CMP(lambda = {}, nu = {}), ln Z = {}\n",
                args.lambda,
                args.nu,
                dist.log_normalizer()
            );
            for (x, p) in rows {
                s.push_str(&format!("{x:>5}  {p:.10}\n"));
            }
            s
        }
    };
    emit(None, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = &cli.data_dir {
        // resolve_dataset reads the variable
        std::env::set_var(DATA_DIR_ENV, dir);
    }
    let outcome = match cli.command {
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Study(a) => study(a).map(|_| true),
        Command::Rand(a) => rand(a).map(|_| true),
        Command::CheckPrior(a) => check_prior(a),
        Command::Pmf(a) => pmf(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
