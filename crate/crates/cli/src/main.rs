use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fairrank::constraints::{auto_sigma, build_bundle, GroupPreset, NoiseFamily, UncertainUtilityModel, DEFAULT_TRIALS};
use fairrank::experiment::{gen_synthetic, run_grid, write_items_csv, write_outputs, ExperimentConfig, SyntheticSpec};
use fairrank::lp::build_fair_lp;
use fairrank::metrics::{
    baseline_greedy_group_fair, baseline_sjk21_gf_if, baseline_sjk21_if, baseline_unconstrained,
    compute_metrics, compute_metrics_sampled,
};
use fairrank::model::{load_instance, save_instance};
use fairrank::pipeline::{run_main_algorithm, sample_many};
use fairrank::RankingPolicy;

#[derive(Parser)]
#[command(name = "fairrank", version, about = "Fair ranking under individual and group constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a ranking policy for an instance file.
    Solve(SolveArgs),
    /// Draw rankings from a saved policy, one CSV line per ranking.
    Sample(SampleArgs),
    /// Build individual and group constraints for an instance.
    GenConstraints(GenConstraintsArgs),
    /// Run a (phi, gamma) experiment grid.
    Experiment(ExperimentArgs),
    /// Generate a dataset.
    #[command(subcommand)]
    GenData(GenData),
    /// Evaluate a policy against an instance.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Main,
    Sjk21If,
    Sjk21GfIf,
    Csv18Greedy,
    Unconstrained,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "main")]
    algorithm: AlgorithmArg,
    /// Also write the marginal LP in CPLEX LP text format.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Equal,
    Proportional,
    PhiUpper,
    /// Keep the instance's own group bounds.
    Keep,
}

#[derive(Args)]
struct GenConstraintsArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Noise standard deviation; chosen from the utility spread when absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    truncated: bool,
    #[arg(long, value_enum, default_value = "keep")]
    preset: PresetArg,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    /// Bundle output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the instance with the bundle merged in.
    #[arg(long)]
    merged: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenData {
    /// Two-group synthetic items.
    Synthetic {
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        majority_frac: f64,
        #[arg(long, default_value_t = 0.7)]
        mu_major: f64,
        #[arg(long, default_value_t = 0.35)]
        mu_minor: f64,
        #[arg(long, default_value_t = 0.1)]
        sd: f64,
    },
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    /// Estimate from this many sampled rankings instead of exact weights.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn solve(args: SolveArgs) -> Result<()> {
    let inst = load_instance(&args.instance).with_context(|| format!("loading {}", args.instance.display()))?;
    if let Some(path) = &args.dump_lp {
        std::fs::write(path, build_fair_lp(&inst).to_lp_text())?;
    }
    let policy = match args.algorithm {
        AlgorithmArg::Main => run_main_algorithm(&inst)?,
        AlgorithmArg::Sjk21If => baseline_sjk21_if(&inst)?,
        AlgorithmArg::Sjk21GfIf => baseline_sjk21_gf_if(&inst)?,
        AlgorithmArg::Csv18Greedy => baseline_greedy_group_fair(&inst)?,
        AlgorithmArg::Unconstrained => baseline_unconstrained(&inst),
    };
    policy.save(&args.out)?;
    log::info!("wrote {} rankings to {}", policy.policy.len(), args.out.display());
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let policy = RankingPolicy::load(&args.policy)?;
    let draws = sample_many(&policy, args.seed, args.count);
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let n = draws.first().map_or(0, |r| r.n());
    let header: Vec<String> = (1..=n).map(|t| format!("position_{t}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in &draws {
        let line: Vec<String> = r.items().iter().map(|i| (i + 1).to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn gen_constraints(args: GenConstraintsArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    let k = inst.blocks.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let sigma = args.sigma.unwrap_or_else(|| auto_sigma(&inst.rho, k));
    let mut model = UncertainUtilityModel::homoscedastic(inst.rho.clone(), sigma)?;
    if args.truncated {
        model.family = NoiseFamily::TruncatedNormal;
    }
    let preset = match args.preset {
        PresetArg::Equal => Some(GroupPreset::Equal),
        PresetArg::Proportional => Some(GroupPreset::Proportional),
        PresetArg::PhiUpper => Some(GroupPreset::PhiUpper { phi: args.phi }),
        PresetArg::Keep => None,
    };
    let bundle = build_bundle(&inst, &model, preset, args.gamma, args.trials, args.seed)?;
    let text = serde_json::to_string_pretty(&bundle.restricted_to(inst.declared_blocks))?;
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    if let Some(p) = &args.merged {
        save_instance(&bundle.apply(&inst)?, p)?;
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    let Some(dir) = cfg.out_dir.clone() else {
        bail!("no output directory: pass --out or set out_dir in the config");
    };
    let rows = run_grid(&cfg)?;
    write_outputs(&rows, &dir)?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.ok()).collect();
    for r in &failed {
        eprintln!(
            "cell failed: seed={} phi={} gamma={} algorithm={}: {}",
            r.seed, r.phi, r.gamma, r.algorithm, r.status
        );
    }
    eprintln!("{} rows written to {}, {} failed", rows.len(), dir.display(), failed.len());
    Ok(failed.is_empty())
}

fn gen_data(cmd: GenData) -> Result<()> {
    match cmd {
        GenData::Synthetic { m, seed, out, majority_frac, mu_major, mu_minor, sd } => {
            let spec = SyntheticSpec { m, majority_frac, mu_major, mu_minor, sd };
            write_items_csv(&gen_synthetic(&spec, seed)?, &out)?;
        }
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let policy = RankingPolicy::load(&args.policy)?;
    let inst = load_instance(&args.instance)?;
    let report = match args.samples {
        Some(s) => compute_metrics_sampled(&policy, &inst, s, args.seed)?,
        None => compute_metrics(&policy, &inst)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a).map(|_| true),
        Command::Sample(a) => sample(a).map(|_| true),
        Command::GenConstraints(a) => gen_constraints(a).map(|_| true),
        Command::Experiment(a) => experiment(a),
        Command::GenData(c) => gen_data(c).map(|_| true),
        Command::Metrics(a) => metrics(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
