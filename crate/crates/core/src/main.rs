use clap::Parser;
use lyapspec::cli::config::ExperimentConfig;
use lyapspec::cli::{exit_code, run, Command, RunOptions, EXIT_CONFIG};
use lyapspec::precision::Precision;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

/// Lyapunov spectra of rational maps via thermodynamic formalism.
#[derive(Parser, Debug)]
#[command(name = "lyapspec", version)]
struct Args {
    command: Command,
    /// JSON experiment configuration (optional for `selftest`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "double")]
    precision: PrecisionArg,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool");
    }
    let cfg = match (&args.config, args.command) {
        (Some(path), _) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        },
        (None, Command::Selftest) => ExperimentConfig::parse(r#"{"version": 1}"#).expect("default config"),
        (None, _) => {
            eprintln!("error: --config is required for this command");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let opts = RunOptions {
        out: args.out,
        precision: match args.precision {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::extended(),
        },
        parallel: args.threads != Some(1),
    };
    let result = run(args.command, &cfg, &opts);
    match &result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for reason in &outcome.degraded {
                eprintln!("degraded: {reason}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
