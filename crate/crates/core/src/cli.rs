//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::analysis::{self, NormSeries, Verdict};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::init::{self, FieldMask, Recipe};
use crate::integrator;
use crate::model::{c1_bound, iteration_cap, sigma, RateQuery};
use crate::state;

pub const NORMS_FILE: &str = "norms.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONSTANTS_FILE: &str = "constants.json";
pub const ECHO_FILE: &str = "effective.conf";

#[derive(Debug, Parser)]
#[command(name = "turbdecay", version, about = "Decay-rate laboratory for the compressible k-epsilon system")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file of `key=value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for random initial data; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decay exponents, convolution constants and iteration caps.
    Rates(RatesArgs),
    /// Box run of the linearized system.
    RunLinear,
    /// Box run of the full nonlinear system.
    RunNonlinear,
    /// Whole-space linear decay exponents against their targets.
    VerifyRates,
    /// Convolution-bound lattice and energy-functional equivalence sweep.
    VerifyConstants,
    /// Decay claims fitted from a norms.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Lebesgue exponent of the initial data.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Target Lebesgue exponent; prints a single rate.
    #[arg(long)]
    pub q: Option<f64>,
    /// Derivative order for `--q`.
    #[arg(long, default_value_t = 0)]
    pub l: u32,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Norm series to fit (default: `<out>/norms.csv`).
    #[arg(long, value_name = "PATH")]
    pub norms: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    kind: &'a str,
    message: String,
}

/// Parses arguments, dispatches and returns the exit status: 0 when every
/// verdict passes, 1 when one fails, 2 on error.
pub fn main() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(&cli) {
        Ok(v) if v.passed() => 0,
        Ok(_) => 1,
        Err(e) => {
            let json = ErrorJson {
                kind: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&json).expect("error serializes"));
            2
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<Verdict> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Rates(args) => rates(args),
        Command::RunLinear => run_box(&cli.global, true),
        Command::RunNonlinear => run_box(&cli.global, false),
        Command::VerifyRates => verify_rates(&cli.global),
        Command::VerifyConstants => verify_constants(&cli.global),
        Command::Report(args) => report(&cli.global, args),
    }
}

/// Config file (or defaults), then `--seed`, then `--set` overrides.
pub fn load_config(global: &GlobalArgs) -> Result<Config> {
    let mut config = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        config.apply_override(&format!("seed={seed}"))?;
    }
    for assignment in &global.overrides {
        config.apply_override(assignment)?;
    }
    Ok(config)
}

fn prepare_out(out: &Path, config: &Config) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(ECHO_FILE), config.echo())?;
    Ok(())
}

fn rates(args: &RatesArgs) -> Result<Verdict> {
    if let Some(q) = args.q {
        println!("{}", sigma(RateQuery::new(args.p, q, args.l))?);
        return Ok(Verdict::Pass);
    }
    println!("sigma(p={}, q; l)", args.p);
    println!("{:>6} {:>10} {:>10} {:>10}", "q", "l=0", "l=1", "l=2");
    for q in [2.0, 3.0, 6.0] {
        let row = (0..3)
            .map(|l| sigma(RateQuery::new(args.p, q, l)).map(|s| format!("{s:>10.6}")))
            .collect::<Result<Vec<_>>>()?;
        println!("{q:>6} {}", row.join(" "));
    }
    println!();
    println!("C1(r1, r2) = 2^(r2+1) / (r1-1)");
    println!("{:>6} {:>10} {:>10} {:>10}", "r1", "r2=0", "r2=r1/2", "r2=r1");
    for r1 in analysis::LATTICE_R1 {
        let row = [0.0, 0.5 * r1, r1]
            .iter()
            .map(|&r2| c1_bound(r1, r2).map(|c| format!("{c:>10.6}")))
            .collect::<Result<Vec<_>>>()?;
        println!("{r1:>6} {}", row.join(" "));
    }
    if (1.0..1.2).contains(&args.p) {
        println!();
        println!("N(n, p={})", args.p);
        let caps = (1..=8)
            .map(|n| iteration_cap(n, args.p).map(|c| format!("n={n}: {}", c.value)))
            .collect::<Result<Vec<_>>>()?;
        println!("{}", caps.join("  "));
    }
    Ok(Verdict::Pass)
}

fn run_box(global: &GlobalArgs, linear: bool) -> Result<Verdict> {
    let mut config = load_config(global)?;
    config.run.linear_only = linear;
    prepare_out(&global.out, &config)?;
    let recipe = config.init.recipe();
    let data = init::make_initial_data(&recipe, config.grid, config.seed, config.init.delta)?;
    if data.h3_norm > config.run.delta_warning {
        warn!(
            "initial H^3 norm {:.3e} exceeds the small-data threshold {:.3e}",
            data.h3_norm, config.run.delta_warning
        );
    }
    let t_wrap = init::fidelity_window(&recipe, config.grid, &config.constants());
    if config.run.t_end > t_wrap {
        warn!("t_end = {} lies beyond the fidelity window {t_wrap:.3}", config.run.t_end);
    }
    let trajectory = integrator::run(&config.run, &data.state, Some(&global.out))?;
    let last = trajectory.entries.last().expect("at least the initial record");
    println!(
        "{} steps of {:.6} to t = {}; {} records in {}",
        trajectory.steps,
        trajectory.dt,
        last.t,
        trajectory.entries.len(),
        global.out.join(NORMS_FILE).display()
    );
    Ok(Verdict::Pass)
}

fn verify_rates(global: &GlobalArgs) -> Result<Verdict> {
    let config = load_config(global)?;
    prepare_out(&global.out, &config)?;
    let report = analysis::radial_rate_report(&config.constants(), analysis::REFERENCE_WIDTH, analysis::RADIAL_WINDOW)?;
    for c in &report.checks {
        println!(
            "{:<9} l={} fitted {:+.4} target {:+.4} tol {:.2}  {:?}",
            c.name, c.l, c.fitted_exponent, c.target_exponent, c.tolerance, c.verdict
        );
    }
    fs::write(global.out.join(REPORT_FILE), report.to_json())?;
    Ok(report.verdict)
}

#[derive(Serialize)]
struct ConstantsReport {
    schema: u32,
    convolution: analysis::ConvolutionReport,
    equivalence: analysis::Equivalence,
    c1_weight: f64,
    verdict: Verdict,
}

/// States used by the equivalence sweep.
pub fn equivalence_states(count: usize, seed: u64) -> Result<Vec<state::SpectralState>> {
    let grid = Grid::new(16, 12.0)?;
    let recipe = Recipe::RandomSmooth {
        amplitude: 0.1,
        decay_rate: 3.0,
        envelope_width: 1.5,
        fields: FieldMask::ALL,
    };
    (0..count as u64)
        .map(|i| state::to_spectral(&init::make_initial_data(&recipe, grid, seed.wrapping_add(i), None)?.state))
        .collect()
}

fn verify_constants(global: &GlobalArgs) -> Result<Verdict> {
    let config = load_config(global)?;
    prepare_out(&global.out, &config)?;
    let convolution = analysis::verify_convolution_lattice(1e-10)?;
    let states = equivalence_states(100, config.seed)?;
    let equivalence = analysis::check_equivalence(&states, config.run.c1_weight)?;
    let ok = convolution.pass
        && equivalence.c2.is_finite()
        && equivalence.cauchy_schwarz
        && equivalence.min_ratio > 0.0;
    println!(
        "convolution bound: max ratio {:.6} over {} entries  {:?}",
        convolution.max_ratio,
        convolution.entries.len(),
        Verdict::from_bool(convolution.pass)
    );
    println!(
        "equivalence: C2 = {:.6} over {} states (ratio range [{:.6}, {:.6}])",
        equivalence.c2, equivalence.samples, equivalence.min_ratio, equivalence.max_ratio
    );
    let report = ConstantsReport {
        schema: 1,
        convolution,
        equivalence,
        c1_weight: config.run.c1_weight,
        verdict: Verdict::from_bool(ok),
    };
    fs::write(
        global.out.join(CONSTANTS_FILE),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report.verdict)
}

fn report(global: &GlobalArgs, args: &ReportArgs) -> Result<Verdict> {
    let config = load_config(global)?;
    let norms = args.norms.clone().unwrap_or_else(|| global.out.join(NORMS_FILE));
    let series = NormSeries::read_csv(&norms)?;
    let mut settings = config.report.clone();
    settings.t_wrap = Some(init::fidelity_window(&config.init.recipe(), config.grid, &config.constants()));
    let report = analysis::decay_report(&series, &settings)?;
    info!("fit window [{}, {}]", report.window[0], report.window[1]);
    for c in &report.claims {
        match c.fitted_exponent {
            Some(e) => println!(
                "{:<8} {:<7} fitted {:+.4} target {:+.4} slack {:.2}  {:?}",
                c.claim,
                format!("{:?}", c.norm).to_lowercase(),
                e,
                c.target_exponent,
                c.slack,
                c.verdict
            ),
            None => println!("{:<8} degenerate (identically zero)  {:?}", c.claim, c.verdict),
        }
    }
    fs::create_dir_all(&global.out)?;
    fs::write(global.out.join(REPORT_FILE), report.to_json())?;
    Ok(report.verdict)
}
