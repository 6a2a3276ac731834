use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gogar_rl::gogar::ClosureMode;
use gogar_rl::harness::{commands, run, ExperimentConfig};
use gogar_rl::Error;

#[derive(Parser)]
#[command(name = "gogar", version, about = "Actor-critic training and GOGAR scorekeeping on finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train as described by a config file and write a run directory.
    Run { config: PathBuf },
    /// Print optimal values and actions from value iteration.
    Oracle {
        mdp: PathBuf,
        /// Also write the optimal policy as a policy checkpoint.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Turn a deterministic policy into a token graph and check it against
    /// its GOGAR universe.
    Bridge {
        mdp: PathBuf,
        /// Checkpoint file, or an inline list such as `0,1,-`.
        policy: String,
        /// Use the greedy policy of a stochastic checkpoint.
        #[arg(long)]
        greedy: bool,
        /// Unit id to take from a population checkpoint.
        #[arg(long)]
        unit: Option<String>,
    },
    /// Apply a move script to a universe and print the final boxes.
    GogarSim {
        universe: PathBuf,
        script: PathBuf,
        /// Commit to direct consequences only.
        #[arg(long)]
        direct: bool,
        /// Write the game as a trace file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Replay a trace file and check every game in it.
    Replay { trace: PathBuf },
}

fn write(path: &PathBuf, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command) -> Result<String, Error> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run(&cfg)?;
            Ok(format!(
                "{}: {} metrics rows written to {}\n",
                cfg.algorithm,
                summary.metrics_rows,
                summary.output_dir.display()
            ))
        }
        Command::Oracle { mdp, policy_out } => {
            let (text, policy) = commands::oracle(&mdp)?;
            if let Some(path) = policy_out {
                write(&path, &policy.to_text())?;
            }
            Ok(text)
        }
        Command::Bridge {
            mdp,
            policy,
            greedy,
            unit,
        } => commands::bridge(&mdp, &policy, greedy, unit.as_deref()),
        Command::GogarSim {
            universe,
            script,
            direct,
            trace_out,
        } => {
            let mode = if direct {
                ClosureMode::Direct
            } else {
                ClosureMode::Transitive
            };
            let (text, trace) = commands::gogar_sim(&universe, &script, mode)?;
            if let Some(path) = trace_out {
                write(&path, &trace)?;
            }
            Ok(text)
        }
        Command::Replay { trace } => commands::replay(&trace),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let color = std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal();
            let label = if color { "\x1b[31merror\x1b[0m" } else { "error" };
            let msg = e.to_string();
            if msg.starts_with(e.module()) {
                eprintln!("{label}: {msg}");
            } else {
                eprintln!("{label}: {}: {msg}", e.module());
            }
            ExitCode::FAILURE
        }
    }
}
