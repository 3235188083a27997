use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hts_routing::controllers::{PolicyKind, SolveMode};
use hts_routing::harness::{run_monte_carlo_with, sweep_window_with, AggregateMetrics, HarnessError, WindowSweep};
use hts_routing::io::{emit_outputs, load_config, parse_config, Summary};
use hts_routing::ScenarioConfig;

#[derive(Parser)]
#[command(name = "hts-route", version, about = "Routing policies for satellite payload queues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single method.
    Run {
        #[command(flatten)]
        common: Common,
        /// Policy: batch_hindsight, static_batch, proportional, mpc(W), windowless_mpc.
        #[arg(long, default_value = "mpc(10)")]
        method: PolicyKind,
    },
    /// Compare several methods on shared demand.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policies; defaults to the five standard methods.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<PolicyKind>,
    },
    /// Sweep the MPC window.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20")]
        windows: Vec<usize>,
    },
    /// Check a configuration and print the resolved values.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides num_runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Solve the full multi-module LPs instead of the reduced symmetric ones.
    #[arg(long)]
    full_lp: bool,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn config_from(path: Option<&PathBuf>) -> Result<ScenarioConfig, Failure> {
    match path {
        Some(p) => load_config(p),
        None => parse_config(""),
    }
    .map_err(|e| Failure::Input(e.to_string()))
}

impl Common {
    fn resolve(&self) -> Result<(ScenarioConfig, SolveMode), Failure> {
        let mut c = config_from(self.config.as_ref())?;
        if let Some(s) = self.seed {
            c.base_seed = s;
        }
        if let Some(r) = self.runs {
            c.num_runs = r;
        }
        c.validate().map_err(|e| Failure::Input(e.to_string()))?;
        let mode = if self.full_lp { SolveMode::Full } else { SolveMode::Symmetric };
        Ok((c, mode))
    }

    fn finish(&self, metrics: &AggregateMetrics, sweep: Option<&WindowSweep>) -> Result<(), Failure> {
        let bundle = emit_outputs(metrics, sweep, &self.out).map_err(|e| Failure::Input(e.to_string()))?;
        print_table(&Summary::new(metrics, sweep));
        if let Some(s) = sweep {
            for d in &s.differences {
                if let Some(pct) = d.percent {
                    println!("W={} vs W={}: {pct:+.2}%", d.smaller, d.larger);
                }
            }
        }
        println!("wrote {} records and {} charts to {}", bundle.records, bundle.charts.len(), self.out.display());
        Ok(())
    }
}

fn print_table(s: &Summary) {
    println!("{:<18} {:>12} {:>10} {:>10}", "method", "mean cost", "std", "gap %");
    for m in &s.methods {
        let gap = m.gap_percent.map_or_else(|| "-".to_string(), |g| format!("{g:.2}"));
        println!("{:<18} {:>12.3} {:>10.3} {:>10}", m.method, m.mean_cost, m.std_cost, gap);
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, method } => {
            let (c, mode) = common.resolve()?;
            let m = run_monte_carlo_with(&c, &[method], mode)?;
            common.finish(&m, None)
        }
        Command::Compare { common, methods } => {
            let (c, mode) = common.resolve()?;
            let methods = if methods.is_empty() { PolicyKind::standard_set(c.window) } else { methods };
            let m = run_monte_carlo_with(&c, &methods, mode)?;
            common.finish(&m, None)
        }
        Command::Sweep { common, windows } => {
            let (c, mode) = common.resolve()?;
            let s = sweep_window_with(&c, &windows, mode)?;
            common.finish(&s.metrics, Some(&s))
        }
        Command::Validate { config } => {
            let c = config_from(config.as_ref())?;
            print!("{}", serde_yaml::to_string(&c).map_err(|e| Failure::Input(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(2)
        }
    }
}
