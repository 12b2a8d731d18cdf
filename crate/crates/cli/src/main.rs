//! Command-line front end: experiment runs, the exact-solver oracle check,
//! the runtime table and fronthaul accounting.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use lrhp::channel::fronthaul_accounting;
use lrhp::harness::{
    emit_csv, emit_timing_csv, oracle_check, run_experiment, runtime_benchmark, ExperimentSpec, Manifest, Metric,
    Preset,
};
use lrhp::{Error, SystemConfig};

const EXIT_SPEC: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "lrhp", version, about = "Limited-resolution hybrid precoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file and write CSV + manifest.
    Run {
        spec: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value_t = 0, help = "worker threads (0 = all cores)")]
        parallel: usize,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Compare the sphere decoder with exhaustive search.
    OracleCheck {
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Mean single-thread design time per RF-chain count.
    BenchRuntime {
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        rf: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, value_enum, default_value = "paper")]
        preset: PresetArg,
    },
    /// Fronthaul bits per symbol for the given system size.
    Budget {
        #[arg(long)]
        levels: u32,
        #[arg(long, default_value_t = 140)]
        nsym: usize,
        #[arg(long, default_value_t = 8)]
        m_rf: usize,
        #[arg(long, default_value_t = 2)]
        n_users: usize,
        #[arg(long, default_value_t = 64)]
        n_subcarriers: usize,
        #[arg(long, default_value_t = 64)]
        n_tx: usize,
        #[arg(long, default_value_t = 16)]
        modulation: u32,
        #[arg(long, default_value_t = 12)]
        iq_bits: u32,
        #[arg(long, default_value_t = 15.0)]
        capacity: f64,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_numerical() {
        ExitCode::from(EXIT_NUMERICAL)
    } else {
        ExitCode::from(EXIT_SPEC)
    }
}

fn preset(p: PresetArg) -> Preset {
    match p {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    }
}

fn run(spec: PathBuf, out: PathBuf, parallel: usize, preset_arg: Option<PresetArg>) -> ExitCode {
    let spec = match ExperimentSpec::load(&spec).and_then(|s| {
        let s = match preset_arg {
            Some(p) => s.with_preset(preset(p)),
            None => s,
        };
        s.validate()?;
        Ok(s)
    }) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SPEC);
        }
    };
    let threads = if parallel == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        parallel
    };
    let start = Instant::now();
    let rows = match run_experiment(&spec, threads) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    let wall = start.elapsed().as_secs_f64();
    let manifest = Manifest::new(&spec, preset_arg.map(preset), threads, &rows, wall);
    let written = std::fs::create_dir_all(&out).map_err(Error::from).and_then(|_| {
        emit_csv(&rows, &out.join(&manifest.csv))?;
        if spec.outputs.contains(&Metric::Runtime) {
            emit_timing_csv(&rows, &out.join(format!("{}_timing.csv", spec.name)))?;
        }
        manifest.write(&out.join(format!("{}_manifest.json", spec.name)))
    });
    if let Err(e) = written {
        return exit_for(&e);
    }
    println!(
        "{}: {} rows ({} errors) in {:.1} s -> {}",
        spec.name,
        manifest.rows,
        manifest.error_rows,
        wall,
        out.join(&manifest.csv).display()
    );
    if manifest.error_rows > 0 {
        ExitCode::from(EXIT_NUMERICAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { spec, out, parallel, preset } => run(spec, out, parallel, preset),
        Command::OracleCheck { instances, seed } => match oracle_check(instances, seed) {
            Ok(r) => {
                println!(
                    "{} instances, {} mismatches, max gap {:.3e}, nodes {} of {} ({:.1}% pruned), {:.2} s",
                    r.instances,
                    r.mismatches.len(),
                    r.max_gap,
                    r.sesd_nodes,
                    r.full_tree_nodes,
                    100.0 * (1.0 - r.sesd_nodes as f64 / r.full_tree_nodes.max(1) as f64),
                    r.elapsed_s
                );
                if r.passed() {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("mismatching instances: {:?}", r.mismatches);
                    ExitCode::from(EXIT_ACCEPTANCE)
                }
            }
            Err(e) => exit_for(&e),
        },
        Command::BenchRuntime { rf, trials, preset: p } => {
            let mut cfg = SystemConfig::default();
            if let PresetArg::Desk = p {
                cfg = SystemConfig::desk();
            }
            match runtime_benchmark(&rf, &cfg, trials) {
                Ok(rows) => {
                    println!("solver  m_rf  mean_s      std_s       outer_iters");
                    for r in rows {
                        println!(
                            "{:<7} {:<5} {:<11.4e} {:<11.4e} {:.1}",
                            r.solver.name(),
                            r.m_rf,
                            r.mean_s,
                            r.std_s,
                            r.mean_outer_iterations
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Budget { levels, nsym, m_rf, n_users, n_subcarriers, n_tx, modulation, iq_bits, capacity } => {
            let cfg = SystemConfig {
                quant_levels: levels,
                n_sym: nsym,
                m_rf,
                n_users,
                n_subcarriers,
                n_tx,
                fronthaul_budget_bits_per_symbol: capacity,
                ..SystemConfig::default()
            };
            match cfg.validate().and_then(|_| fronthaul_accounting(&cfg, modulation, iq_bits)) {
                Ok(b) => {
                    println!("data_bits_per_symbol            {:.2}", b.data_bits_per_symbol);
                    println!("precoder_update_bits_per_symbol {:.2}", b.precoder_update_bits_per_symbol);
                    println!("proposed_total                  {:.2}", b.proposed_total);
                    println!("conventional_total              {:.2}", b.conventional_total);
                    println!("iq_bits                         {}", b.iq_bits);
                    println!("max_levels_log2                 {:.4}", b.max_levels_log2);
                    match b.max_levels() {
                        Some(l) => println!("max_levels                      {l}"),
                        None => println!("max_levels                      none"),
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
