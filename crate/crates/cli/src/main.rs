use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use switchfm::tables::{write_atomic, Alpha1Source};
use switchfm::Exec;
use switchfm_cli::commands::{
    cmd_gen_tables, cmd_ingest_check, cmd_mc, cmd_test, CalibrationMethod, GenTablesArgs, McArgs, TableChoice,
};
use switchfm_cli::config::{parse_tau_list, EmpiricalConfig, Overrides};

#[derive(Parser)]
#[command(name = "switchfm", version, about = "Switching-FM predictive quantile regression test")]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// TOML run configuration; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// dp, ep, bm, or a column name.
    #[arg(long)]
    predictor: Option<String>,
    /// First month, yyyymm.
    #[arg(long)]
    start: Option<i64>,
    /// Last month, yyyymm.
    #[arg(long)]
    end: Option<i64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the switching-FM test across quantiles.
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated quantile levels (default: the nine deciles).
        #[arg(long)]
        tau_list: Option<String>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long)]
        tables_dir: Option<PathBuf>,
        /// paper or generated.
        #[arg(long)]
        alpha1_source: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate the critical value tables.
    GenTables {
        /// z, dfgls, alpha1 or all.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value = "tables")]
        tables_dir: PathBuf,
        #[arg(long, default_value_t = 20_151_231)]
        seed: u64,
        /// Desk-scale sizes are the default; this restores the published ones.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        sim_t: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        alpha2: f64,
        /// First-stage calibration: limit or feasible.
        #[arg(long, default_value = "limit")]
        method: String,
    },
    /// Run one of the published Monte Carlo experiments.
    Mc {
        /// Experiment number, 3 to 7.
        #[arg(long)]
        table: u32,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value_t = 20_151_231)]
        seed: u64,
        #[arg(long, default_value = "tables")]
        tables_dir: PathBuf,
        #[arg(long, default_value = "paper")]
        alpha1_source: String,
        #[arg(long, default_value_t = 0.1)]
        alpha2: f64,
        #[arg(long, default_value = "mc_out")]
        out_dir: PathBuf,
    },
    /// Validate and summarize an input file.
    IngestCheck {
        #[command(flatten)]
        data: DataArgs,
    },
}

fn overrides(d: &DataArgs) -> Overrides {
    Overrides {
        input: d.input.clone(),
        predictor: d.predictor.clone(),
        start: d.start,
        end: d.end,
        ..Default::default()
    }
}

fn emit(text: &str, output: Option<&PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("setting up the thread pool")?;
    let exec = if cli.threads == 1 { Exec::Sequential } else { Exec::default() };
    match cli.cmd {
        Command::Test {
            data,
            tau_list,
            alpha2,
            tables_dir,
            alpha1_source,
            output,
        } => {
            let ov = Overrides {
                taus: tau_list.as_deref().map(parse_tau_list).transpose()?,
                alpha2,
                tables_dir,
                alpha1_source,
                output,
                ..overrides(&data)
            };
            let cfg = EmpiricalConfig::load(data.config.as_deref(), ov)?;
            emit(&cmd_test(&cfg)?, cfg.output_path.as_ref())
        }
        Command::IngestCheck { data } => {
            let cfg = EmpiricalConfig::load(data.config.as_deref(), overrides(&data))?;
            emit(&cmd_ingest_check(&cfg)?, None)
        }
        Command::GenTables {
            kind,
            tables_dir,
            seed,
            paper_scale,
            reps,
            sim_t,
            alpha2,
            method,
        } => {
            let args = GenTablesArgs {
                kind: TableChoice::parse(&kind)?,
                out_dir: tables_dir,
                seed,
                paper_scale,
                reps,
                sim_t,
                alpha2,
                method: CalibrationMethod::parse(&method)?,
                exec,
            };
            emit(&cmd_gen_tables(&args)?, None)
        }
        Command::Mc {
            table,
            reps,
            paper_scale,
            seed,
            tables_dir,
            alpha1_source,
            alpha2,
            out_dir,
        } => {
            let args = McArgs {
                table,
                reps,
                paper_scale,
                seed,
                tables_dir,
                alpha1_source: Alpha1Source::parse(&alpha1_source)?,
                alpha2,
                out_dir,
                exec,
            };
            for p in cmd_mc(&args)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
