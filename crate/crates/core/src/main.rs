use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use repshare::experiment::{
    run_experiment, ExperimentKind, ExperimentReport, ExperimentSpec, Sweep, DEFAULT_WINDOW,
};
use repshare::oracle_check::{corrupted_greedy, oracle_check, oracle_check_with, OracleLimits};
use repshare::sim::{parse_scenario, ScenarioConfig};

/// Reputation-weighted resource sharing simulator.
#[derive(Debug, Parser)]
#[command(name = "repshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario file, optionally over several seeds and a sweep.
    Run {
        /// Scenario file (TOML). Defaults apply when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Parameter sweep, e.g. `serving.theta=0.5,1,2`.
        #[arg(long)]
        sweep: Option<Sweep>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a canned experiment.
    Experiment {
        /// capacity-tiers, free-riders, strategies, interest-routing or all.
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the greedy allocator with exhaustive search on random
    /// instances.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_requesters: usize,
        #[arg(long, default_value_t = 8)]
        max_demand: u64,
        #[arg(long, default_value_t = 10)]
        max_capacity: u64,
        /// Check a deliberately broken allocator instead.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Seeds, comma separated. Defaults to the scenario seed or the
    /// experiment's own list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long, env = "REPSHARE_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Aggregation window, in iterations.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: u64,
    /// Do not echo resolved scenarios.
    #[arg(long)]
    quiet: bool,
}

fn echo(spec: &ExperimentSpec, quiet: bool) {
    if quiet {
        return;
    }
    println!("# experiment {}", spec.kind);
    if let Some(s) = &spec.sweep {
        println!("# sweep {} = {}", s.key, s.values.join(","));
    }
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    println!("# seeds {}", seeds.join(","));
    print!("{}", spec.base.to_toml());
}

fn report(r: &ExperimentReport) {
    println!(
        "wrote {} run files, {} and {}",
        r.run_files.len(),
        r.aggregate_file.display(),
        r.manifest_file.display()
    );
}

fn apply_common(spec: &mut ExperimentSpec, common: &Common) {
    if !common.seed.is_empty() {
        spec.seeds = common.seed.clone();
    }
    spec.output = common.out.clone();
    spec.jobs = common.jobs;
    spec.window = common.window;
}

fn run_scenario(scenario: Option<PathBuf>, sweep: Option<Sweep>, common: Common) -> Result<()> {
    let base = match &scenario {
        Some(p) => parse_scenario(p)?,
        None => ScenarioConfig::default().resolve()?,
    };
    let mut spec = ExperimentSpec {
        kind: ExperimentKind::Custom,
        seeds: vec![base.seed],
        base,
        sweep,
        output: PathBuf::new(),
        window: DEFAULT_WINDOW,
        jobs: 0,
    };
    apply_common(&mut spec, &common);
    spec.validate()?;
    echo(&spec, common.quiet);
    report(&run_experiment(&spec)?);
    Ok(())
}

fn run_canned(kind: &str, common: Common) -> Result<()> {
    let kinds = if kind == "all" {
        ExperimentKind::CANNED.to_vec()
    } else {
        vec![kind.parse::<ExperimentKind>()?]
    };
    for k in kinds {
        let mut spec = ExperimentSpec::canned(k, &common.out)?;
        apply_common(&mut spec, &common);
        spec.validate()?;
        echo(&spec, common.quiet);
        report(&run_experiment(&spec).with_context(|| format!("experiment {k}"))?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            sweep,
            common,
        } => run_scenario(scenario, sweep, common),
        Command::Experiment { kind, common } => run_canned(&kind, common),
        Command::OracleCheck {
            trials,
            seed,
            max_requesters,
            max_demand,
            max_capacity,
            corrupt,
        } => {
            let limits = OracleLimits {
                max_requesters,
                max_demand,
                max_capacity,
                ..OracleLimits::default()
            };
            let r = if corrupt {
                oracle_check_with(&limits, trials, seed, corrupted_greedy)
            } else {
                oracle_check(&limits, trials, seed)
            };
            println!(
                "trials {} max_gap {:e} infeasible {}",
                r.trials, r.max_gap, r.infeasible
            );
            if r.passed() {
                println!("oracle check passed");
                return ExitCode::SUCCESS;
            }
            if let Some(w) = &r.worst {
                println!(
                    "worst instance: demands {:?} capacity {}",
                    w.demands, w.capacity
                );
            }
            println!("oracle check FAILED");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
