use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ranger21::Preset;
use ranger21_bench::output::{fmt_f64, write_summaries};
use ranger21_bench::{emit_csv, parse_config, run_benchmark, RunConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_ALL_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "bench", version, about = "Deterministic optimizer benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimizer in the config and write curves.csv and summary.csv.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output`, else ./bench-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Print the learning-rate schedule of the first ranger21 optimizer as step,eta_t CSV.
    Schedule { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

enum Failure {
    Config(String),
    Io(String),
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn warn(cfg: &RunConfig) {
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<u8, Failure> {
    let mut cfg = load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if !quiet {
        warn(&cfg);
    }
    let out_dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let result = run_benchmark(&cfg).map_err(|e| Failure::Config(e.to_string()))?;

    let io_err = |e: io::Error| Failure::Io(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(&out_dir).map_err(io_err)?;
    emit_csv(&result.records, &out_dir.join("curves.csv")).map_err(io_err)?;
    let summary = fs::File::create(out_dir.join("summary.csv")).map_err(io_err)?;
    write_summaries(&result.summaries, summary).map_err(io_err)?;

    if !quiet {
        println!(
            "{:<16} {:>24} {:>24} {:>10}",
            "optimizer", "final_loss", "best_loss", "status"
        );
        for s in &result.summaries {
            let status = match s.diverged_at {
                Some(t) => format!("diverged@{t}"),
                None => "ok".into(),
            };
            let show = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "-".into());
            println!(
                "{:<16} {:>24} {:>24} {:>10}",
                s.optimizer,
                show(s.final_loss),
                show(s.best_loss),
                status
            );
        }
    }
    Ok(if result.all_diverged() {
        EXIT_ALL_DIVERGED
    } else {
        0
    })
}

fn schedule(config: &Path) -> Result<u8, Failure> {
    let cfg = load(config)?;
    warn(&cfg);
    let ranger = cfg.optimizers.iter().find_map(|o| match o.preset {
        Preset::Ranger21(c) => Some(c),
        Preset::AdamW(_) => None,
    });
    let stdout = io::stdout();
    let mut w = io::BufWriter::new(stdout.lock());
    let io_err = |e: io::Error| Failure::Io(e.to_string());
    writeln!(w, "step,eta_t").map_err(io_err)?;
    for t in 1..=cfg.t_max {
        let eta = match (&ranger, &cfg.optimizers[0].preset) {
            (Some(c), _) => c.lr_at(t).map_err(|e| Failure::Config(e.to_string()))?,
            (None, Preset::AdamW(a)) => a.lr,
            (None, Preset::Ranger21(_)) => unreachable!(),
        };
        writeln!(w, "{t},{}", fmt_f64(eta)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(0)
}

fn validate(config: &Path) -> Result<u8, Failure> {
    let cfg = load(config)?;
    warn(&cfg);
    println!(
        "{}: ok ({} optimizer(s), t_max = {})",
        config.display(),
        cfg.optimizers.len(),
        cfg.t_max
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            quiet,
        } => run(&config, out, seed, quiet),
        Command::Schedule { config } => schedule(&config),
        Command::Validate { config } => validate(&config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
