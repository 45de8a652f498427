use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use functional_grasp::cli_io::{
    cmd_demo, cmd_evaluate, cmd_export, cmd_heatmap, cmd_plan, parse_weights, workers_from_env, EvaluateArgs,
    HeatmapArgs, PlanArgs,
};
use functional_grasp::Result;

#[derive(Parser)]
#[command(name = "fgrasp", version, about = "Functional grasp planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grade palm placements over the object and write heatmap.{ply,csv,json}.
    Heatmap {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        hand: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Anneal wrist pose and eigengrasp amplitudes against a heatmap.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        hand: PathBuf,
        /// Heatmap JSON header; the CSV is read from next to it.
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Energy weights as `alpha,beta,gamma`.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Close the fingers of a planned grasp and report grasp quality.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        hand: PathBuf,
        #[arg(long, conflicts_with = "contacts", required_unless_present = "contacts")]
        grasp: Option<PathBuf>,
        /// JSON list of `{position, normal}` contacts, bypassing the hand.
        #[arg(long)]
        contacts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a demo object, its scenarios and the built-in hands.
    Demo {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write the posed hand of a grasp as a PLY skeleton.
    Export {
        #[arg(long)]
        grasp: PathBuf,
        #[arg(long)]
        hand: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Heatmap {
            scenario,
            hand,
            out,
            seed,
        } => {
            let outputs = cmd_heatmap(&HeatmapArgs {
                scenario,
                hand,
                out,
                seed,
                workers: workers_from_env()?,
            })?;
            println!("{}", outputs.json.display());
        }
        Command::Plan {
            scenario,
            hand,
            heatmap,
            out,
            seed,
            steps,
            weights,
        } => {
            let outputs = cmd_plan(&PlanArgs {
                scenario,
                hand,
                heatmap,
                out,
                seed,
                steps,
                weights: weights.as_deref().map(parse_weights).transpose()?,
            })?;
            println!(
                "best seed {} energy {:.6} -> {}",
                outputs.best.candidate.seed,
                outputs.best.candidate.energy.e_hybrid,
                outputs.best_file.display()
            );
        }
        Command::Evaluate {
            scenario,
            hand,
            grasp,
            contacts,
            out,
        } => {
            let report = cmd_evaluate(&EvaluateArgs {
                scenario,
                hand,
                grasp,
                contacts,
                out,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Demo { name, out } => {
            for path in cmd_demo(&name, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Export { grasp, hand, out } => cmd_export(&grasp, &hand, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
