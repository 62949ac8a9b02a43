//! `ultramedian`: generate, validate and solve ultrametric 1-median instances
//! and run the batch experiments.
//!
//! Exit codes: 0 success, 2 usage or domain error, 3 I/O, 4 invalid
//! instance, 5 experiment assertion failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ultramedian::generators::{generate, Family, GenSpec};
use ultramedian::harness::{
    run_flip_rate, run_key_lemma, run_ratio_sweep, run_success_rate, Caps, Experiment, TrialBatchReport, TrialBatchSpec,
};
use ultramedian::median::{
    approx_median_theorem, approx_median_with, brute_force_median, ApproxParams, Audit, CostTable, Fallback,
    MedianReport,
};
use ultramedian::metric::{
    isosceles_check, load_instance, write_dendrogram, write_matrix, DistanceOracle, MetricSpace, PointId, Space,
    ValidateOptions, Verdict,
};
use ultramedian::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ultramedian", version, about = "Approximate 1-median in ultrametric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance from a spec string such as `k-level:n=4,k=2`.
    Gen {
        spec: GenSpec,
        out: PathBuf,
        /// Output format; defaults to dendrogram for `.dnd`/`.tree` paths.
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
    /// Classify an instance as ultrametric, metric-only or invalid.
    Validate {
        #[command(flatten)]
        source: InstanceSource,
        /// Accept zero distances between distinct points with a warning.
        #[arg(long)]
        allow_pseudo: bool,
        /// Exit 4 unless the instance is ultrametric.
        #[arg(long)]
        require_ultrametric: bool,
        /// Triple budget for the isosceles check (all triples when n^3 fits).
        #[arg(long, default_value_t = 10_000_000)]
        isosceles_budget: u64,
    },
    /// Sampling 1-median.
    Solve {
        #[command(flatten)]
        source: InstanceSource,
        #[command(flatten)]
        params: ParamArgs,
        /// Audit against brute force (default: on when n <= the audit cap).
        #[arg(long, overrides_with = "no_audit")]
        audit: bool,
        #[arg(long)]
        no_audit: bool,
        /// Run the (1+eps) wrapper, which samples with eps/4.
        #[arg(long)]
        theorem: bool,
        #[arg(long)]
        require_ultrametric: bool,
        #[arg(long)]
        allow_pseudo: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Kv)]
        format: ReportFormat,
    },
    /// Exact 1-median by brute force.
    SolveExact {
        #[command(flatten)]
        source: InstanceSource,
        #[arg(long)]
        require_ultrametric: bool,
        #[arg(long)]
        allow_pseudo: bool,
    },
    /// Run a batch experiment and write CSV/JSON reports.
    Experiment {
        kind: ExperimentKind,
        #[command(flatten)]
        args: ExperimentArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OutFormat {
    Matrix,
    Dendrogram,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ReportFormat {
    Kv,
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExperimentKind {
    SuccessRate,
    FlipRate,
    KeyLemma,
    RatioSweep,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct InstanceSource {
    /// Instance file (matrix or dendrogram format).
    instance: Option<PathBuf>,
    /// Generate the instance instead of loading it.
    #[arg(long = "gen", value_name = "SPEC")]
    gen: Option<GenSpec>,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 8.0)]
    c_h: f64,
    #[arg(long, default_value_t = 8.0)]
    c_k: f64,
    /// Seed of the sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "auto", value_parser = parse_fallback)]
    fallback: Fallback,
    /// Use the original constants c_h = c_k = 1e9.
    #[arg(long)]
    paper_constants: bool,
}

impl ParamArgs {
    fn to_params(&self) -> ApproxParams {
        let (c_h, c_k) = if self.paper_constants {
            (ultramedian::median::PAPER_CONSTANT, ultramedian::median::PAPER_CONSTANT)
        } else {
            (self.c_h, self.c_k)
        };
        ApproxParams {
            epsilon: self.epsilon,
            c_h,
            c_k,
            seed: self.seed,
            fallback: self.fallback,
        }
    }
}

fn parse_fallback(s: &str) -> std::result::Result<Fallback, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Full instance spec; overrides --family/--n/--seed/--levels/--delta.
    #[arg(long = "gen", value_name = "SPEC")]
    gen: Option<GenSpec>,
    #[arg(long, default_value = "random-dendrogram")]
    family: Family,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Level count of k-level instances.
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 8.0)]
    c_h: f64,
    #[arg(long, default_value_t = 8.0)]
    c_k: f64,
    /// Master seed; trial i uses a stream derived from (master seed, i).
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long, default_value = "auto", value_parser = parse_fallback)]
    fallback: Fallback,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Instance count for key-lemma (defaults to --trials).
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long)]
    no_audit: bool,
    /// flip-rate: cheaper point (default: the optimum).
    #[arg(long)]
    a: Option<u32>,
    /// flip-rate: costlier point (default: cheapest point beyond (1+eps) OPT).
    #[arg(long)]
    b: Option<u32>,
    /// flip-rate: evaluator sample size (default: the sampler's k).
    #[arg(long)]
    evaluators: Option<u64>,
    /// ratio-sweep: comma-separated epsilons.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5")]
    epsilons: Vec<f64>,
    /// ratio-sweep: comma-separated families.
    #[arg(long, value_delimiter = ',', default_value = "random-dendrogram,perturbed-metric")]
    families: Vec<Family>,
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let caps = Caps::from_env()?;
    match cli.command {
        Command::Gen { spec, out, format } => cmd_gen(&spec, &out, format),
        Command::Validate {
            source,
            allow_pseudo,
            require_ultrametric,
            isosceles_budget,
        } => cmd_validate(&source, &caps, allow_pseudo, require_ultrametric, isosceles_budget),
        Command::Solve {
            source,
            params,
            audit,
            no_audit,
            theorem,
            require_ultrametric,
            allow_pseudo,
            format,
        } => {
            let audit = match (audit, no_audit) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            cmd_solve(
                &source,
                &params.to_params(),
                &caps,
                audit,
                theorem,
                (require_ultrametric, allow_pseudo),
                format,
            )
        }
        Command::SolveExact {
            source,
            require_ultrametric,
            allow_pseudo,
        } => cmd_solve_exact(&source, &caps, require_ultrametric, allow_pseudo),
        Command::Experiment { kind, args } => cmd_experiment(kind, &args, &caps),
    }
}

fn load(source: &InstanceSource) -> Result<Space> {
    match (&source.instance, &source.gen) {
        (Some(path), None) => load_instance(path),
        (None, Some(spec)) => Ok(generate(spec)?.space),
        _ => Err(Error::Domain("give exactly one of an instance path or --gen".into())),
    }
}

fn validate_options(caps: &Caps, allow_pseudo: bool) -> ValidateOptions {
    let mut opts = ValidateOptions {
        allow_pseudo,
        ..Default::default()
    };
    if std::env::var_os(ultramedian::harness::MAX_N_ENV).is_some() {
        opts.full_cap = caps.audit;
    }
    opts
}

/// Validates and maps an unusable verdict to exit code 4.
fn check_instance(space: &Space, caps: &Caps, require_ultrametric: bool, allow_pseudo: bool) -> Result<Verdict> {
    let v = space.validate(&validate_options(caps, allow_pseudo))?;
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    match v.verdict {
        Verdict::Invalid(w) => Err(Error::InvalidInstance(w)),
        Verdict::MetricOnly(w) if require_ultrametric => Err(Error::InvalidInstance(w)),
        verdict => Ok(verdict),
    }
}

fn cmd_gen(spec: &GenSpec, out: &Path, format: Option<OutFormat>) -> Result<u8> {
    let instance = generate(spec)?;
    let format = format.unwrap_or_else(|| match out.extension().and_then(|e| e.to_str()) {
        Some("dnd") | Some("tree") => OutFormat::Dendrogram,
        _ => OutFormat::Matrix,
    });
    let text = match (format, &instance.space) {
        (OutFormat::Matrix, space) => write_matrix(&space.to_matrix()),
        (OutFormat::Dendrogram, Space::Dendrogram(d)) => write_dendrogram(d),
        (OutFormat::Dendrogram, Space::Matrix(_)) => {
            return Err(Error::Domain(format!(
                "{} instances have no dendrogram form",
                spec.family
            )));
        }
    };
    std::fs::write(out, text)?;
    let verdict = match instance.verdict {
        Some(v) => v,
        None => instance.space.validate(&ValidateOptions::default())?.verdict,
    };
    println!("wrote {} ({} points): {verdict}", out.display(), instance.space.len());
    Ok(0)
}

fn cmd_validate(
    source: &InstanceSource,
    caps: &Caps,
    allow_pseudo: bool,
    require_ultrametric: bool,
    isosceles_budget: u64,
) -> Result<u8> {
    let space = load(source)?;
    let v = match &space {
        // materialize so the triple check covers the tree too
        Space::Dendrogram(d) if d.len() <= validate_options(caps, allow_pseudo).full_cap => {
            ultramedian::metric::validate_with(&d.to_matrix(), &validate_options(caps, allow_pseudo))?
        }
        _ => space.validate(&validate_options(caps, allow_pseudo))?,
    };
    for w in &v.warnings {
        println!("warning: {w}");
    }
    println!("n={}", space.len());
    println!("verdict={}", v.verdict.label());
    println!("exhaustive={}", v.exhaustive);
    match v.verdict {
        Verdict::MetricOnly(w) | Verdict::Invalid(w) => println!("witness={w}"),
        Verdict::Ultrametric => {
            let iso = isosceles_check(&space, isosceles_budget, 0);
            println!("isosceles={}", if iso.is_none() { "pass" } else { "fail" });
            if let Some(w) = iso {
                println!("witness={w}");
            }
        }
    }
    let ok = match v.verdict {
        Verdict::Invalid(_) => false,
        Verdict::MetricOnly(_) => !require_ultrametric,
        Verdict::Ultrametric => true,
    };
    Ok(if ok { 0 } else { 4 })
}

fn cmd_solve(
    source: &InstanceSource,
    params: &ApproxParams,
    caps: &Caps,
    audit: Option<bool>,
    theorem: bool,
    (require_ultrametric, allow_pseudo): (bool, bool),
    format: ReportFormat,
) -> Result<u8> {
    params.hk()?;
    let space = load(source)?;
    check_instance(&space, caps, require_ultrametric, allow_pseudo)?;
    let n = space.len();
    let audit = audit.unwrap_or(n <= caps.audit);
    if audit && n > caps.audit {
        return Err(Error::CapExceeded {
            what: "exact audit; rerun with --no-audit",
            n,
            cap: caps.audit,
        });
    }
    let table = if audit { Some(CostTable::compute(&space)?) } else { None };
    let audit = table.as_ref().map_or(Audit::None, Audit::Table);
    let oracle = DistanceOracle::new(&space);
    let report = if theorem {
        approx_median_theorem(&oracle, params, audit)?
    } else {
        approx_median_with(&oracle, params, audit)?
    };
    print_report(&report, format)?;
    Ok(0)
}

fn print_report(report: &MedianReport, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Kv => print!("{}", report.to_key_value()),
        ReportFormat::Csv => println!("{}\n{}", MedianReport::csv_header(), report.to_csv_row()),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(report)?),
    }
    Ok(())
}

fn cmd_solve_exact(source: &InstanceSource, caps: &Caps, require_ultrametric: bool, allow_pseudo: bool) -> Result<u8> {
    let space = load(source)?;
    check_instance(&space, caps, require_ultrametric, allow_pseudo)?;
    let oracle = DistanceOracle::new(&space);
    let (selected, opt_cost) = brute_force_median(&oracle)?;
    println!("selected={selected}");
    println!("opt_cost={opt_cost}");
    println!("queries_used={}", oracle.query_count());
    Ok(0)
}

fn cmd_experiment(kind: ExperimentKind, args: &ExperimentArgs, caps: &Caps) -> Result<u8> {
    let instance = match &args.gen {
        Some(spec) => spec.clone(),
        None => GenSpec::new(args.family, args.n, args.seed)
            .with_k(args.levels)
            .with_delta(args.delta),
    };
    let params = ApproxParams {
        epsilon: args.epsilon,
        c_h: args.c_h,
        c_k: args.c_k,
        seed: args.master_seed,
        fallback: args.fallback,
    };
    let experiment = match kind {
        ExperimentKind::SuccessRate => Experiment::SuccessRate,
        ExperimentKind::FlipRate => Experiment::FlipRate,
        ExperimentKind::KeyLemma => Experiment::KeyLemma,
        ExperimentKind::RatioSweep => Experiment::RatioSweep,
    };
    let trials = match (experiment, args.instances) {
        (Experiment::KeyLemma, Some(count)) => count,
        _ => args.trials,
    };
    let mut spec = TrialBatchSpec::new(experiment, instance, params, trials).with_parallelism(args.parallelism);
    spec.audit = !args.no_audit;
    spec.caps = *caps;

    let report = match experiment {
        Experiment::SuccessRate => run_success_rate(&spec)?,
        Experiment::FlipRate => {
            let pair = match (args.a, args.b) {
                (Some(a), Some(b)) => Some((PointId::new(a)?, PointId::new(b)?)),
                (None, None) => None,
                _ => return Err(Error::Domain("give both --a and --b, or neither".into())),
            };
            run_flip_rate(&spec, pair, args.evaluators)?
        }
        Experiment::KeyLemma => run_key_lemma(&spec)?,
        Experiment::RatioSweep => run_ratio_sweep(&spec, &args.epsilons, &args.families)?,
    };
    emit(&report, args)?;
    Ok(if report.passed() { 0 } else { 5 })
}

fn emit(report: &TrialBatchReport, args: &ExperimentArgs) -> Result<()> {
    if let Some(path) = &args.csv {
        report.write_csv(path)?;
    }
    if let Some(path) = &args.json {
        report.write_json(path)?;
    }
    for (k, v) in &report.aggregates {
        println!("{k}={v}");
    }
    for c in &report.checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    eprintln!(
        "{}: {} row(s) in {:.3}s",
        report.experiment,
        report.rows.len(),
        report.wall_time_s
    );
    Ok(())
}
