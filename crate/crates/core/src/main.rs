use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use loggas::config::{ExperimentConfig, ExperimentKind};
use loggas::{report, runner};

const EXIT_USAGE: u8 = 64;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser)]
#[command(name = "loggas", version, about = "Experiments on logarithmic mean-field particle systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write trajectory snapshots.
    #[arg(long)]
    dump: bool,
}

#[derive(Subcommand)]
enum Command {
    KernelVerify(RunArgs),
    Zsweep(RunArgs),
    MomentsVerify(RunArgs),
    SdeRun(RunArgs),
    MvSolve(RunArgs),
    MflSweep(RunArgs),
    Gibbs(RunArgs),
    /// Merge the records under DIR into summary.json and plot files.
    Report { dir: PathBuf },
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, (u8, String)> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| (EXIT_NO_INPUT, format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", args.config.display())))?;
    if cfg.kind != kind {
        return Err((
            EXIT_USAGE,
            format!("config kind is {} but the subcommand is {}", cfg.kind.name(), kind.name()),
        ));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Ok(w) = std::env::var("LOGGAS_WORKERS") {
        cfg.workers = w
            .parse()
            .map_err(|_| (EXIT_USAGE, format!("LOGGAS_WORKERS={w} is not a worker count")))?;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    cfg.dump |= args.dump;
    cfg.resolve().map_err(|e| (EXIT_USAGE, e.to_string()))?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> u8 {
    let cfg = match load(kind, args) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    match runner::run(&cfg) {
        Ok(rec) => {
            for v in &rec.verdicts {
                println!("{:?} {}: {}", v.status, v.check, v.detail);
            }
            println!("results in {}", cfg.output.display());
            rec.exit_code() as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOFTWARE
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let code = match &cli.command {
        Command::KernelVerify(a) => run(ExperimentKind::KernelVerify, a),
        Command::Zsweep(a) => run(ExperimentKind::Zsweep, a),
        Command::MomentsVerify(a) => run(ExperimentKind::MomentsVerify, a),
        Command::SdeRun(a) => run(ExperimentKind::SdeRun, a),
        Command::MvSolve(a) => run(ExperimentKind::MvSolve, a),
        Command::MflSweep(a) => run(ExperimentKind::MflSweep, a),
        Command::Gibbs(a) => run(ExperimentKind::Gibbs, a),
        Command::Report { dir } => match report::report(dir) {
            Ok(Some(s)) => {
                println!("{} sections, {} skipped", s.sections.len(), s.skipped.len());
                s.exit_code as u8
            }
            Ok(None) => {
                eprintln!("error: no experiment records in {}", dir.display());
                EXIT_NO_INPUT
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_NO_INPUT
            }
        },
    };
    ExitCode::from(code)
}
