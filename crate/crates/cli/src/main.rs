use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plgd::experiment::{Mode, Record, EXIT_ERROR, EXIT_OK};
use plgd::sweep::{self, Axis};
use plgd::{load_config, run_config, Overrides};

#[derive(Parser)]
#[command(name = "plgd", version, about = "Certified gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides `problem.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Certificates, ledger, descent and bound verdicts.
    Run { config: PathBuf },
    /// Certificates and ledger only.
    Check { config: PathBuf },
    /// Runs the config once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn summarize(r: &Record) {
    let fd = r.fd.worst();
    eprintln!(
        "finite differences: worst relative error {fd:.3e} over {} probes",
        r.fd.probes
    );
    for w in &r.problem.warnings {
        eprintln!("warning: {w}");
    }
    if !r.fd_passed() {
        eprintln!("finite-difference check failed; descent skipped");
        return;
    }
    if let Some(l) = r.ledger() {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        eprintln!(
            "alpha {:.6e}  L {}  lambda {}  q {}",
            l.alpha,
            show(l.l),
            show(l.lambda),
            show(l.q)
        );
    }
    if let Some(o) = &r.output {
        for v in &o.verdicts.finals {
            eprintln!("{:<16} {}", v.name, v.outcome.as_str());
        }
        eprintln!(
            "{} iterations, outcome {}",
            o.verdicts.actual_iterations,
            o.verdicts.outcome().as_str()
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let o = Overrides {
        seed: cli.seed,
        out: cli.out,
    };
    let code = match cli.command {
        Command::Run { config } => exec(&config, &o, Mode::Run),
        Command::Check { config } => exec(&config, &o, Mode::Check),
        Command::Sweep { config, axis, values } => match load_config(&config, &o) {
            Ok(cfg) => {
                let dir = cfg.output.dir.clone();
                match sweep::sweep(&cfg, axis, &values, &dir) {
                    Ok(rows) => rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK),
                    Err(e) => {
                        eprintln!("error: {e}");
                        EXIT_ERROR
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
    };
    ExitCode::from(code as u8)
}

fn exec(config: &std::path::Path, o: &Overrides, mode: Mode) -> i32 {
    match run_config(config, o, mode) {
        Ok(r) => {
            summarize(&r);
            r.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
