use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ezag_core::hierarchy::{gossip_advantage, gossip_projection, predicted_hier_messages};
use ezag_core::oracles::{coupon_expected_draws, markov_cover_expectation};
use ezag_harness::output::resolve_dir;
use ezag_harness::{builtin, load_spec, run_experiment, RunOptions};

#[derive(Parser)]
#[command(name = "ezag", version, about = "Run aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a spec file or built-in spec and write its CSVs.
    Run {
        spec: String,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<u32>,
        /// Include the large network sizes.
        #[arg(long)]
        full: bool,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in specs.
    ListSpecs,
    /// Check a spec without running it.
    Validate { spec: String },
    /// Evaluate a reference computation.
    Oracle {
        #[command(subcommand)]
        oracle: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Expected draws to collect B coupons.
    Coupon { b: u64 },
    /// Exact simple-random-walk cover time of a small named graph.
    Cover {
        #[arg(value_parser = ["path", "cycle", "clique", "star"])]
        shape: String,
        n: usize,
    },
    /// N (P + 1) for the hierarchy.
    HierMessages { n: u64, delta: u64 },
    /// n ln(n)^exponent and the advantage factor ln(n)^(exponent - 1).
    Gossip { n: u64, exponent: f64 },
}

fn graph(shape: &str, n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|v| match shape {
            "path" => [v.wrapping_sub(1), v + 1].into_iter().filter(|&u| u < n).collect(),
            "cycle" if n > 2 => vec![(v + n - 1) % n, (v + 1) % n],
            "cycle" => (0..n).filter(|&u| u != v).collect(),
            "clique" => (0..n).filter(|&u| u != v).collect(),
            _ if v == 0 => (1..n).collect(),
            _ => vec![0],
        })
        .collect()
}

fn execute(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::ListSpecs => {
            for (name, about) in builtin::names() {
                println!("{name:<12} {about}");
            }
        }
        Command::Validate { spec } => {
            let s = load_spec(&spec).map_err(|e| e.to_string())?;
            s.validate().map_err(|e| e.to_string())?;
            println!("{}: ok", s.name);
        }
        Command::Run { spec, trials, full, out, threads } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| e.to_string())?;
            }
            let s = load_spec(&spec).map_err(|e| e.to_string())?;
            let dir = resolve_dir(out.as_deref(), &s);
            let a = run_experiment(&s, &RunOptions { full, trials }, &dir).map_err(|e| e.to_string())?;
            println!("{}\n{}\n{}", a.trials.display(), a.summary.display(), a.manifest.display());
        }
        Command::Oracle { oracle } => {
            let v = match oracle {
                Oracle::Coupon { b } => coupon_expected_draws(b).map_err(|e| e.to_string())?,
                Oracle::Cover { shape, n } => markov_cover_expectation(&graph(&shape, n), 0).map_err(|e| e.to_string())?,
                Oracle::HierMessages { n, delta } => predicted_hier_messages(n, delta).map_err(|e| e.to_string())? as f64,
                Oracle::Gossip { n, exponent } => {
                    let g = gossip_projection(n, exponent).map_err(|e| e.to_string())?;
                    let a = gossip_advantage(n, exponent).map_err(|e| e.to_string())?;
                    println!("advantage {a}");
                    g
                }
            };
            println!("{v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
