use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fwdsig::config::RunConfig;
use fwdsig::run::{cmd_audit_causality, cmd_diagnose_shifts, cmd_run};
use fwdsig::Error;

#[derive(Parser)]
#[command(name = "fwdsig", version, about = "Causal composite market observable: build, decide, backtest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// input OHLCV CSV
    #[arg(long)]
    input: Option<PathBuf>,
    /// output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// hysteresis threshold
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write trace/positions/equity/metrics
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// regime split datetime, repeatable
        #[arg(long = "split")]
        splits: Vec<String>,
    },
    /// Prefix-invariance causality audit (bit-exact)
    Audit {
        #[command(flatten)]
        common: CommonOpts,
        /// number of random cut points
        #[arg(long)]
        cuts: Option<usize>,
        /// RNG seed for cut sampling
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Non-causal forward-shift diagnostic, one equity column per shift
    DiagnoseShifts {
        #[command(flatten)]
        common: CommonOpts,
        /// comma-separated non-negative shifts, e.g. 0,1,2
        #[arg(long)]
        shifts: Option<String>,
    },
}

fn effective_config(common: &CommonOpts) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(input) = &common.input {
        cfg.input = input.to_string_lossy().into_owned();
    }
    if let Some(out) = &common.out {
        cfg.out = out.to_string_lossy().into_owned();
    }
    if let Some(theta) = common.theta {
        cfg.decision.theta = theta;
    }
    Ok(cfg)
}

fn parse_shifts(raw: &str) -> Result<Vec<usize>, Error> {
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid shift '{s}': must be a non-negative integer")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { common, splits } => {
            let mut cfg = effective_config(&common)?;
            if !splits.is_empty() {
                cfg.splits = splits;
            }
            let reports = cmd_run(&cfg)?;
            println!("wrote artifacts to {}", cfg.out);
            println!("period,end_v,cum_ret_pct,mdd_pct,trades_per_month");
            for r in &reports {
                println!(
                    "{},{},{},{},{}",
                    r.label, r.end_v, r.cum_ret_pct, r.mdd_pct, r.trades_per_month
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { common, cuts, seed } => {
            let cfg = effective_config(&common)?;
            let cuts = cuts.unwrap_or(if cfg.cuts > 0 { cfg.cuts } else { 50 });
            let seed = seed.unwrap_or(cfg.seed);
            let report = cmd_audit_causality(&cfg, cuts, seed)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            match &report.failure {
                None => {
                    println!("PASS: {} prefix cuts bit-identical to the full run", report.cuts.len());
                    Ok(ExitCode::SUCCESS)
                }
                Some(f) => {
                    println!(
                        "FAIL: prefix of length {} diverges at timestamp {} column {}",
                        f.cut, f.timestamp, f.column
                    );
                    Ok(ExitCode::from(3))
                }
            }
        }
        Command::DiagnoseShifts { common, shifts } => {
            let mut cfg = effective_config(&common)?;
            if let Some(raw) = &shifts {
                cfg.shifts = parse_shifts(raw)?;
            }
            let path = cmd_diagnose_shifts(&cfg)?;
            println!("wrote non-causal shift diagnostic to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
