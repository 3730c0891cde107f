//! Command-line front end: instance generation, evaluation runs, sweeps,
//! dataset export and audit, property verification, and a stub agent for
//! the external-policy protocol.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coopcache::dataset::{audit_dataset, generate_grpo, generate_sft, AuditReport, ExpertConfig};
use coopcache::harness::{
    aggregate, evaluate, evaluate_instance, read_reports, run_verify, sweep, write_reports,
    write_sweep, EvalReport, InstanceSpec, Preset, RunConfig, SweepAxis, VerifyConfig,
};
use coopcache::policies::external::{read_frame, write_frame};
use coopcache::policies::PolicySpec;
use coopcache::traffic::{Instance, InstanceConfig};

#[derive(Parser)]
#[command(name = "coopcache", version, about = "Cooperative edge-caching environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one instance and write its canonical JSON.
    GenInstance {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate policies on one instance per seed and write report tables.
    Run(RunArgs),
    /// Evaluate policies while varying one instance parameter.
    Sweep(SweepArgs),
    /// Export expert demonstrations (or GRPO prompt states) as JSONL.
    ExportSft(ExportArgs),
    /// Re-parse every record of a JSONL dataset and summarize it.
    Audit {
        path: PathBuf,
    },
    /// Check shaping guarantees, action-space growth and parser robustness.
    Verify(VerifyArgs),
    /// Re-emit report tables from a saved reports.json.
    Report {
        input: PathBuf,
        #[arg(long, env = "COOPCACHE_OUTPUT_DIR")]
        output_dir: PathBuf,
    },
    /// Minimal external agent: answers every framed prompt with all-NoOp.
    StubAgent {
        #[arg(long, value_enum, default_value_t = StubMode::Noop)]
        mode: StubMode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StubMode {
    /// One `BS n: NOOP` line per BS.
    Noop,
    /// A line that never parses.
    Garbage,
}

#[derive(Args, Clone, Default)]
struct InstanceArgs {
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    library_size: Option<u32>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    zipf_alpha: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Evaluated slots.
    #[arg(long)]
    slots: Option<usize>,
    /// Look-ahead reserve at the end of the trace.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    TwoBs,
    FiveBs,
}

impl InstanceArgs {
    /// Flags take precedence over `base`.
    fn overlay(&self, base: &InstanceSpec) -> InstanceSpec {
        let mut s = base.clone();
        if let Some(p) = self.preset {
            s.preset = match p {
                PresetArg::TwoBs => Preset::TwoBs,
                PresetArg::FiveBs => Preset::FiveBs,
            };
        }
        s.num_users = self.users.or(s.num_users);
        s.library_size = self.library_size.or(s.library_size);
        s.capacity = self.capacity.or(s.capacity);
        s.groups = self.groups.or(s.groups);
        s.zipf_alpha = self.zipf_alpha.or(s.zipf_alpha);
        s.warmup = self.warmup.or(s.warmup);
        s.slots = self.slots.or(s.slots);
        s.horizon = self.horizon.or(s.horizon);
        s
    }

    fn resolve(&self) -> Result<InstanceConfig> {
        Ok(self.overlay(&InstanceSpec::default()).resolve()?)
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Repeatable; replaces the configured policy list.
    #[arg(long = "policy")]
    policies: Vec<PolicySpec>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, env = "COOPCACHE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Demonstration records to export per seed.
    #[arg(long)]
    sft_records: Option<usize>,
    #[arg(long)]
    extern_timeout_ms: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long = "policy")]
    policies: Vec<PolicySpec>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    #[arg(long, env = "COOPCACHE_OUTPUT_DIR", default_value = "out")]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 30_000)]
    extern_timeout_ms: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Use a saved instance instead of building one.
    #[arg(long, conflicts_with = "seed")]
    instance_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 500)]
    records: usize,
    /// Expert look-ahead.
    #[arg(long, default_value_t = 10)]
    expert_horizon: usize,
    #[arg(long, default_value_t = 0.9)]
    expert_discount: f64,
    /// Export prompt states with the expert witness instead of pairs.
    #[arg(long)]
    grpo: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 100_000)]
    fuzz_cases: usize,
    #[arg(long, default_value_t = 1_000)]
    round_trips: usize,
    #[arg(long, env = "COOPCACHE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenInstance {
            instance,
            seed,
            out,
        } => {
            let inst = Instance::build(&instance.resolve()?, seed)?;
            inst.save(&out)?;
            println!("{}\t{}", out.display(), inst.hash()?);
        }
        Command::Run(args) => run(args)?,
        Command::Sweep(args) => run_sweep(args)?,
        Command::ExportSft(args) => export(args)?,
        Command::Audit { path } => {
            let report = audit_dataset(&path)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !audit_clean(&report) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Verify(args) => return verify(args),
        Command::Report { input, output_dir } => {
            let reports = read_reports(&input)?;
            write_reports(&output_dir, &reports)?;
            print_table(&reports);
        }
        Command::StubAgent { mode } => stub_agent(mode)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn audit_clean(r: &AuditReport) -> bool {
    r.invalid.is_empty() && r.gate_violations.is_empty()
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    cfg.instance = args.instance.overlay(&cfg.instance);
    if !args.policies.is_empty() {
        cfg.policies = args.policies;
    }
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds;
    }
    if let Some(n) = args.sft_records {
        cfg.sft_records = n;
    }
    if let Some(ms) = args.extern_timeout_ms {
        cfg.extern_timeout_ms = ms;
    }
    let out = args
        .output_dir
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let instance_cfg = cfg.validate()?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let instances: Vec<Instance> = if cfg.instance_files.is_empty() {
        cfg.seeds
            .iter()
            .map(|&s| Instance::build(&instance_cfg, s))
            .collect::<coopcache::Result<_>>()?
    } else {
        cfg.instance_files
            .iter()
            .map(|p| Instance::load(p))
            .collect::<coopcache::Result<_>>()?
    };
    let timeout = cfg.extern_timeout();
    let reports = if cfg.instance_files.is_empty() {
        evaluate(&instance_cfg, &cfg.seeds, &cfg.policies, instance_cfg.slots, timeout)?
    } else {
        let mut all = Vec::new();
        for inst in &instances {
            all.extend(evaluate_instance(inst, &cfg.policies, inst.config.slots, timeout)?);
        }
        all
    };
    for inst in &instances {
        inst.save(&out.join(format!("instance_seed{}.json", inst.seed)))?;
        if cfg.sft_records > 0 {
            let expert = ExpertConfig {
                horizon: cfg.reward.horizon,
                discount: cfg.reward.discount,
                warmup: inst.config.warmup,
            };
            let export = generate_sft(inst, &expert, cfg.sft_records)?;
            if let Some(t) = &export.truncated {
                log::warn!("seed {}: only {} of {} records", inst.seed, t.emitted, t.requested);
            }
            export.write(&out.join(format!("sft_seed{}.jsonl", inst.seed)))?;
        }
    }
    // the effective configuration, without the output location
    let mut echo = cfg.clone();
    echo.output_dir = None;
    std::fs::write(out.join("run_config.toml"), toml::to_string(&echo)?)?;
    write_reports(&out, &reports)?;
    print_table(&reports);
    Ok(())
}

fn print_table(reports: &[EvalReport]) {
    let rows = aggregate(reports);
    let Some(first) = rows.first() else {
        return;
    };
    let w = rows.iter().map(|r| r.policy.len()).max().unwrap_or(0).max(8) + 2;
    print!("{:<w$}", "policy");
    for (t, _) in &first.checkpoints {
        print!("{t:>8}");
    }
    println!("{:>8}{:>9}", "mean", "invalid");
    for r in &rows {
        print!("{:<w$}", r.policy);
        for (_, v) in &r.checkpoints {
            print!("{v:>8.3}");
        }
        println!("{:>8.3}{:>9}", r.mean, r.invalid);
    }
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let base = args.instance.resolve()?;
    let policies = if args.policies.is_empty() {
        ["oracle:1", "lru", "lfu"]
            .iter()
            .map(|s| s.parse())
            .collect::<coopcache::Result<Vec<PolicySpec>>>()?
    } else {
        args.policies
    };
    let rows = sweep(
        &base,
        args.axis,
        &args.values,
        &args.seeds,
        &policies,
        base.slots,
        Duration::from_millis(args.extern_timeout_ms),
    )?;
    write_sweep(&args.output_dir, &rows)?;
    let agg = std::fs::read_to_string(args.output_dir.join("sweep_aggregate.tsv"))?;
    print!("{agg}");
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let instance = match &args.instance_file {
        Some(p) => Instance::load(p)?,
        None => Instance::build(&args.instance.resolve()?, args.seed.unwrap_or(1))?,
    };
    if args.expert_horizon > instance.config.horizon {
        bail!(
            "expert horizon {} exceeds the trace reserve {}",
            args.expert_horizon,
            instance.config.horizon
        );
    }
    let cfg = ExpertConfig {
        horizon: args.expert_horizon,
        discount: args.expert_discount,
        warmup: instance.config.warmup,
    };
    let (emitted, truncated) = if args.grpo {
        let e = generate_grpo(&instance, &cfg, args.records)?;
        e.write(&args.out)?;
        (e.records.len(), e.truncated)
    } else {
        let e = generate_sft(&instance, &cfg, args.records)?;
        e.write(&args.out)?;
        (e.records.len(), e.truncated)
    };
    println!("{}\t{emitted} records", args.out.display());
    if truncated.is_some() {
        eprintln!("warning: requested {} records, instance yields {emitted}", args.records);
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let cfg = VerifyConfig {
        seeds: args.seeds,
        samples: args.samples,
        fuzz_cases: args.fuzz_cases,
        round_trips: args.round_trips,
        ..VerifyConfig::default()
    };
    let report = run_verify(&cfg)?;
    for p in &report.pbrs {
        println!(
            "shaping seed {}: {} slots, {} BS checks, {} write pairs, {} demotion cases, {}",
            p.seed,
            p.slots.len(),
            p.bs_checks,
            p.write_pairs,
            p.demotion_cases,
            if p.passed() { "ok" } else { "FAILED" }
        );
        for v in &p.violations {
            println!("  {v}");
        }
        for n in &p.notes {
            println!("  note: {n}");
        }
    }
    for g in &report.growth {
        println!(
            "growth B={}: {} slots, bound applicable at {}, violations {}",
            g.num_bs, g.slots, g.bound_applicable, g.bound_violations
        );
    }
    println!(
        "fuzz: {} cases, {} panics, {} valid, {} infeasible valid",
        report.fuzz.cases, report.fuzz.panics, report.fuzz.valid, report.fuzz.infeasible_valid
    );
    println!(
        "round trip: {} cases, {} failures",
        report.round_trip.cases, report.round_trip.failures
    );
    if let Some(dir) = &args.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        std::fs::write(dir.join("verify.json"), json)?;
    }
    let ok = report.passed();
    println!("{}", if ok { "verify: PASS" } else { "verify: FAIL" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn count_bs(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| {
            l.strip_prefix("BS ")
                .and_then(|r| r.split_once(' '))
                .is_some_and(|(n, rest)| n.parse::<u32>().is_ok() && rest.starts_with("CACHE:"))
        })
        .count()
}

fn stub_agent(mode: StubMode) -> Result<()> {
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let stdout = std::io::stdout();
    let mut output = stdout.lock();
    while let Some(prompt) = read_frame(&mut input)? {
        let reply = match mode {
            StubMode::Noop => (1..=count_bs(&prompt))
                .map(|b| format!("BS {b}: NOOP"))
                .collect::<Vec<_>>()
                .join("\n"),
            StubMode::Garbage => "I would rather not".to_string(),
        };
        write_frame(&mut output, &reply)?;
        output.flush()?;
    }
    Ok(())
}

