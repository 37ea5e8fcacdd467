use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mprexp::commands;
use mprexp::config::{parse_eps_list, OutputFormat, Overrides, RunConfig};
use mprexp::error::CliResult;
use mprexp::report::Table;
use mprexp::tables::{self, TableRun};

/// Expansions of power-utility value functions in the market price of risk,
/// with Monte-Carlo primal and dual bounds.
#[derive(Debug, Parser)]
#[command(name = "mprexp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// INI run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Number of simulated paths.
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,

    /// Euler time step; must divide the horizon.
    #[arg(long, global = true, value_name = "X")]
    dt: Option<f64>,

    /// Random seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Comma-separated perturbation sizes.
    #[arg(long, global = true, value_name = "LIST", allow_hyphen_values = true)]
    eps: Option<String>,

    /// 10^6 paths at dt = 0.001 unless --paths or --dt say otherwise.
    #[arg(long = "paper-scale", global = true)]
    full_scale: bool,

    /// Also write CSV to this file.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Standard output format: csv | table.
    #[arg(long, global = true, value_name = "FORMAT")]
    format: Option<String>,

    /// Print the effective configuration as INI and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expansion certainty equivalents against exact values (deterministic).
    Table1,
    /// Monte-Carlo bounds in the Ornstein-Uhlenbeck model.
    Table2,
    /// Monte-Carlo bounds in the square-root factor model.
    Table3,
    /// Expansion coefficients and approximations for the configured model.
    Expand {
        /// Compare with central differences of the exact value.
        #[arg(long)]
        check_fd: bool,
    },
    /// Certainty equivalent of the configured strategy.
    Simulate,
}

fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        paths: cli.paths,
        dt: cli.dt,
        seed: cli.seed,
        eps: cli.eps.as_deref().map(parse_eps_list).transpose()?,
        full_scale: cli.full_scale,
        format: cli.format.as_deref().map(OutputFormat::parse).transpose()?,
        out: cli.out.clone(),
    };
    cfg.apply(&overrides)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = effective_config(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_ini_string());
        return Ok(());
    }
    let out: Vec<Table> = match cli.command {
        Command::Table1 => vec![tables::table1(&TableRun::from_config(&cfg))?],
        Command::Table2 => vec![tables::table2(&TableRun::from_config(&cfg))?],
        Command::Table3 => vec![tables::table3(&TableRun::from_config(&cfg))?],
        Command::Expand { check_fd } => {
            let mut v = vec![commands::expand(&cfg)?];
            if check_fd {
                v.push(commands::check_fd(&cfg)?);
            }
            v
        }
        Command::Simulate => vec![commands::simulate(&cfg)?],
    };
    let mut csv = Vec::new();
    for (i, t) in out.iter().enumerate() {
        if i > 0 {
            csv.push(b'\n');
        }
        t.write_csv(&mut csv)?;
    }
    if let Some(path) = &cfg.out {
        std::fs::write(path, &csv)?;
    }
    let mut stdout = std::io::stdout().lock();
    match cfg.format {
        OutputFormat::Csv => stdout.write_all(&csv)?,
        OutputFormat::Table => {
            for (i, t) in out.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                write!(stdout, "{}", t.render())?;
            }
        }
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
