use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lvx_cli::{run, CliError, Command, RunConfig};

/// Condition checks, moment-bound equations and Monte Carlo runs for
/// stochastic Volterra equations driven by Lévy bases.
#[derive(Parser, Debug)]
#[command(name = "lvx", version)]
struct Args {
    /// check | volterra | simulate | stability | reproduce-example
    command: String,
    /// Model file, or an example name for reproduce-example
    config: String,
    /// Override a model-file key, e.g. --set run.p_exponent=1.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory
    #[arg(long, default_value = "lvx-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Kernel rate for reproduce-example
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Print the full report
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn threads_from_env() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LVX_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Usage(format!("LVX_THREADS must be a positive integer, found {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = threads_from_env().and_then(|_| {
        let rc = RunConfig {
            command: args.command.parse::<Command>()?,
            config: args.config,
            overrides: args.set,
            out: args.out,
            seed: args.seed,
            lambda: args.lambda,
            verbosity: args.verbose,
        };
        let o = run(&rc)?;
        if rc.verbosity > 0 {
            if let Ok(t) = std::fs::read_to_string(rc.out.join("report.txt")) {
                print!("{t}");
            }
        }
        Ok(o)
    });
    match result {
        Ok(o) => {
            println!("{}", o.summary);
            ExitCode::from(o.code as u8)
        }
        Err(e) => {
            eprintln!("lvx: {e}");
            if let CliError::Numerical { trace, .. } = &e {
                for (i, d) in trace {
                    eprintln!("  iteration {i}: residual {d:e}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
