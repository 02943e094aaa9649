use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flsvi_harness::config::ExperimentConfig;
use flsvi_harness::envs::{make_env, EnvSpec};
use flsvi_harness::output::ExperimentSummary;
use flsvi_harness::runner::{run_experiment, sweep};
use flsvi_harness::verify::{self, OptimismParams, Report};
use flsvi_harness::HarnessError;

#[derive(Parser)]
#[command(name = "flsvi", version, about = "Run and verify F-LSVI experiments")]
struct Cli {
    /// Output directory for CSV and JSON files.
    #[arg(long, global = true, env = "FLSVI_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = default_jobs())]
    jobs: usize,
    /// Replace the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config.
    Run { config: PathBuf },
    /// Run a config at several practical β values.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
    },
    /// Run one of the invariant suites.
    Verify {
        suite: Suite,
        /// Config for the optimism suite.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print V* and Q* of an environment given as JSON or a path to JSON.
    Dp { env_spec: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Sampling,
    Sensitivity,
    Bonus,
    Optimism,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.run.seeds = vec![s];
    }
    Ok(cfg)
}

fn print_summary(s: &ExperimentSummary) {
    println!(
        "{} ({}): mean final regret {:?}, std {:?}",
        s.label.as_deref().unwrap_or("run"),
        &s.config_hash[..12],
        s.mean_final_cum_regret,
        s.std_final_cum_regret
    );
    for r in &s.runs {
        match &r.error {
            Some(e) => println!("  seed {}: FAILED {e}", r.seed),
            None => println!(
                "  seed {}: regret {:.4}, exponent {}",
                r.seed,
                r.final_cum_regret.unwrap_or(f64::NAN),
                r.exponent
                    .map(|f| format!("{:.3} ± {:.3}", f.exponent, f.stderr))
                    .unwrap_or_else(|| "n/a".into())
            ),
        }
    }
}

fn run_suite(suite: Suite, config: Option<PathBuf>, jobs: usize) -> Result<Vec<Report>, HarnessError> {
    Ok(match suite {
        Suite::Sampling => {
            let r = verify::sampling_default(500)?;
            vec![r.norm_preservation, r.size_bounds]
        }
        Suite::Sensitivity => vec![
            verify::sensitivity_dominance(Default::default())?,
            verify::sensitivity_sum_bound(Default::default())?,
        ],
        Suite::Bonus => vec![verify::bonus_sandwich(Default::default())?],
        Suite::Optimism => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::from_json(include_str!("../configs/optimism.json"))?,
            };
            let seeds = cfg.run.seeds.clone();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| HarnessError::Io(e.to_string()))?;
            vec![pool.install(|| {
                verify::optimism(&OptimismParams {
                    config: cfg,
                    seeds,
                    tolerance: 1e-9,
                    required_fraction: 0.95,
                })
            })?]
        }
    })
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let s = run_experiment(&cfg, &cli.out_dir, cli.jobs)?;
            print_summary(&s);
            Ok(!s.failed())
        }
        Command::Sweep { config, beta } => {
            let cfg = load(&config, cli.seed)?;
            let all = sweep(&cfg, &beta, &cli.out_dir, cli.jobs)?;
            all.iter().for_each(print_summary);
            Ok(all.iter().all(|s| !s.failed()))
        }
        Command::Verify { suite, config } => {
            let reports = run_suite(suite, config, cli.jobs)?;
            for r in &reports {
                println!("{}", serde_json::to_string(r).expect("report serializes"));
            }
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Dp { env_spec } => {
            let text = if env_spec.trim_start().starts_with('{') {
                env_spec
            } else {
                std::fs::read_to_string(&env_spec).map_err(|e| HarnessError::Config(format!("{env_spec}: {e}")))?
            };
            let spec: EnvSpec = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
            let inst = make_env(&spec).map_err(|e| HarnessError::Config(e.to_string()))?;
            let opt = inst.mdp.optimal_values();
            let out = serde_json::json!({ "v": opt.v, "q": opt.q });
            println!("{}", serde_json::to_string_pretty(&out).expect("values serialize"));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
