use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kinetic_core::app::{convergence_study, run_bench, CaseConfig};
use kinetic_core::{parse_config, run_case, Method, Order};

/// Steady-state kinetic equation solver.
#[derive(Parser)]
#[command(name = "kinetic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case and write moments.csv, history.csv and summary.json.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grid convergence study against a finer second-order reference.
    Study {
        config: PathBuf,
        /// Cells per axis of each grid, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        /// Cells per axis of the reference grid.
        #[arg(long = "ref")]
        reference: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every combination of a config matrix (`key=a|b` alternatives).
    Bench {
        matrix: PathBuf,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// si, sgs-fp, sgs-pfp or mg-sgs-pfp.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the published grid sizes instead of the desk-scale defaults.
    #[arg(long)]
    paper_scale: bool,
}

fn load(path: &PathBuf, o: &Overrides) -> Result<CaseConfig> {
    let mut text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if o.paper_scale && !text.contains("paper_scale") {
        text.push_str("\npaper_scale=true\n");
    }
    let mut c = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(m) = o.method {
        c.method = m;
    }
    if let Some(e) = o.eps {
        c.knudsen = e;
    }
    if let Some(n) = o.order {
        c.order = Order::from_number(n)?;
    }
    if let Some(out) = &o.out {
        c.output = out.clone();
    }
    c.parallel |= threads()?;
    c.validate()?;
    Ok(c)
}

/// Sets up the rayon pool from `KINETIC_THREADS`; more than one thread
/// enables the parallel per-cell phases.
fn threads() -> Result<bool> {
    let Ok(v) = std::env::var("KINETIC_THREADS") else {
        return Ok(false);
    };
    let n: usize = v.trim().parse().with_context(|| format!("KINETIC_THREADS={v}"))?;
    if n == 0 {
        bail!("KINETIC_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    Ok(n > 1)
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, overrides } => {
            let c = load(&config, &overrides)?;
            let out = run_case(&c)?;
            let s = &out.summary;
            println!(
                "{} {} eps={} order={}: {:?} after {} iterations, residual {:.3e}, {} fallbacks, {:.2}s",
                s.case,
                s.method,
                s.eps,
                s.order,
                s.status,
                s.iterations,
                s.final_residual.unwrap_or(f64::NAN),
                s.fallbacks,
                s.elapsed_seconds
            );
            println!("artifacts in {}", out.output.display());
            Ok(if s.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Study {
            config,
            grids,
            reference,
            overrides,
        } => {
            let c = load(&config, &overrides)?;
            let table = convergence_study(&c, &grids, reference)?;
            fs::create_dir_all(&c.output)?;
            let path = c.output.join("study.csv");
            table.write_csv(&path)?;
            println!("{:>8} {:>12} {:>12} {:>12}", "cells", "dx", "err_rho", "err_T");
            for r in &table.rows {
                println!("{:>8} {:>12.4e} {:>12.4e} {:>12.4e}", r.cells, r.spacing, r.err_density, r.err_temperature);
            }
            println!("slope rho {:.3}, slope T {:.3}", table.slope_density, table.slope_temperature);
            println!("table in {}", path.display());
            Ok(if table.rows.iter().all(|r| r.converged) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Bench { matrix, out } => {
            threads()?;
            let text = fs::read_to_string(&matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let rows = run_bench(&text, &out)?;
            for r in &rows {
                println!(
                    "{:<40} iters {:>6} residual {:.3e} avg inner {:>6.2} {:>8.2}s",
                    r.label, r.iterations, r.final_residual, r.avg_inner, r.elapsed_seconds
                );
            }
            println!("table in {}", out.join("bench.csv").display());
            Ok(if rows.iter().all(|r| r.converged) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
