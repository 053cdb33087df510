use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voss_core::benchmark::{
    multi_segment_rows, parse_paths, single_segment_rows, write_comparison_csv, write_long_csv,
    BenchmarkOptions, RhoSSource,
};
use voss_core::feeder::{expand_distributed_loads_with, parse_feeder, Lumping};
use voss_core::line_oracle::{sweep_rho, write_sweep_csv};
use voss_core::powerflow::{solve, SolveOptions, DEFAULT_NEAR_ZERO_FRACTION};
use voss_core::sensors::{ingest_csv, loss_curve, write_curves, ChainConfig};
use voss_core::Error;

/// Voltage-only technical-loss estimation for radial distribution feeders.
#[derive(Debug, Parser)]
#[command(name = "voss", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Power-flow convergence tolerance on per-unit voltage change.
    #[arg(long, global = true, default_value_t = SolveOptions::default().tol)]
    tol: f64,
    /// Power-flow iteration limit.
    #[arg(long, global = true, default_value_t = SolveOptions::default().max_iter)]
    max_iter: usize,
    /// Exclude lines whose input power is below this fraction of feeder base power.
    #[arg(long, global = true, default_value_t = DEFAULT_NEAR_ZERO_FRACTION)]
    near_zero_threshold: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the power flow of a feeder and write node and segment CSVs.
    Solve {
        feeder: PathBuf,
        /// How distributed loads become spot loads: `midpoint` or `split-ends`.
        #[arg(long, default_value = "midpoint")]
        lumping: Lumping,
    },
    /// Compare voltage-only estimates with simulated losses.
    Benchmark {
        feeder: PathBuf,
        /// Multi-segment paths as FROM-TO pairs, e.g. `800-814,816-822`.
        #[arg(long)]
        paths: Option<String>,
        /// `simulated` or `estimate:<rho_s>`.
        #[arg(long, default_value = "simulated")]
        rho_s_source: RhoSSource,
        /// How distributed loads become spot loads: `midpoint` or `split-ends`.
        #[arg(long, default_value = "split-ends")]
        lumping: Lumping,
    },
    /// Sweep the uniform-leakage line against the closed-form correction factor.
    Oracle {
        /// Comma-separated leakage fractions in [0, 1].
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
        )]
        rho_list: Vec<f64>,
        /// Number of segments the line is divided into.
        #[arg(long, default_value_t = 10_000)]
        segments: usize,
    },
    /// Turn sensor voltage series into loss curves along a sensor chain.
    Sensors {
        /// CSV with header `sensor_id,timestamp,voltage_v`.
        data: PathBuf,
        /// TOML chain configuration.
        chain: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::VoltageCollapse { .. } => 3,
        _ => 2,
    }
}

fn create_out_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn solve_options(g: &Global) -> SolveOptions {
    SolveOptions {
        tol: g.tol,
        max_iter: g.max_iter,
    }
}

fn validate_global(g: &Global) -> Result<(), String> {
    if !(g.tol.is_finite() && g.tol > 0.0) {
        return Err(format!("--tol must be positive, got {}", g.tol));
    }
    if g.max_iter == 0 {
        return Err("--max-iter must be at least 1".to_string());
    }
    if !(g.near_zero_threshold.is_finite() && g.near_zero_threshold >= 0.0) {
        return Err(format!(
            "--near-zero-threshold must be nonnegative, got {}",
            g.near_zero_threshold
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    match cli.command {
        Command::Solve { feeder, lumping } => {
            let model = parse_feeder(&feeder)?;
            let sol = solve(
                &expand_distributed_loads_with(&model, lumping),
                &solve_options(g),
            )?;
            create_out_dir(&g.out_dir)?;
            let nodes = g.out_dir.join(format!("{}_nodes.csv", model.name));
            let segments = g.out_dir.join(format!("{}_segments.csv", model.name));
            sol.write_node_csv(create(&nodes)?)?;
            sol.write_segment_csv(create(&segments)?)?;
            let loss = sol.total_loss();
            println!(
                "{}: converged in {} iterations, power-balance residual {:.3e} pu, losses {:.3} kW {:.3} kvar",
                model.name,
                sol.iterations,
                sol.power_balance_residual(),
                loss.re,
                loss.im
            );
            println!("wrote {} and {}", nodes.display(), segments.display());
        }
        Command::Benchmark {
            feeder,
            paths,
            rho_s_source,
            lumping,
        } => {
            let model = parse_feeder(&feeder)?;
            let paths = paths.as_deref().map(parse_paths).transpose()?;
            let opts = BenchmarkOptions {
                solve: solve_options(g),
                near_zero_fraction: g.near_zero_threshold,
                lumping,
            };
            let sol = solve(&expand_distributed_loads_with(&model, lumping), &opts.solve)?;
            create_out_dir(&g.out_dir)?;
            let single = single_segment_rows(&model, &sol, &opts)?;
            let excluded: Vec<String> = single
                .iter()
                .filter(|r| r.is_excluded())
                .map(|r| format!("{}/{}", r.line, r.phase))
                .collect();
            let out = g.out_dir.join(format!("single_segment_{}.csv", model.name));
            write_comparison_csv(&single, create(&out)?)?;
            write_long_csv(
                &single,
                create(&g.out_dir.join(format!("plot_single_{}.csv", model.name)))?,
            )?;
            println!(
                "{}: {} line-phase rows, {} excluded{}",
                model.name,
                single.len(),
                excluded.len(),
                if excluded.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", excluded.join(", "))
                }
            );
            println!("wrote {}", out.display());
            if let Some(paths) = paths {
                let multi = multi_segment_rows(&model, &sol, &paths, rho_s_source, &opts)?;
                let out = g.out_dir.join(format!("multi_segment_{}.csv", model.name));
                write_comparison_csv(&multi, create(&out)?)?;
                write_long_csv(
                    &multi,
                    create(&g.out_dir.join(format!("plot_multi_{}.csv", model.name)))?,
                )?;
                println!(
                    "{:<10} {:>5} {:>10} {:>8} {:>10} {:>10}",
                    "path", "phase", "voss", "c_hat", "corrected", "true"
                );
                for r in &multi {
                    println!(
                        "{:<10} {:>5} {:>10.4} {:>8.4} {:>10.4} {:>10.4}",
                        r.line,
                        r.phase.to_string(),
                        r.voss_single,
                        r.c_hat,
                        r.voss_corrected,
                        r.true_loss
                    );
                }
                println!("wrote {}", out.display());
            }
        }
        Command::Oracle { rho_list, segments } => {
            let rows = sweep_rho(&rho_list, segments)?;
            create_out_dir(&g.out_dir)?;
            let out = g.out_dir.join("oracle_sweep.csv");
            write_sweep_csv(&rows, create(&out)?)?;
            let worst = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
            println!(
                "{} values of rho, {segments} segments, max deviation {worst:.3e}",
                rows.len()
            );
            println!("wrote {}", out.display());
        }
        Command::Sensors { data, chain } => {
            let chain = ChainConfig::load(&chain)?;
            let ingested = ingest_csv(&data, chain.nominal_voltage)?;
            let duplicates = ingested.duplicates;
            let curves = loss_curve(&chain, &ingested.into_map())?;
            create_out_dir(&g.out_dir)?;
            let written = write_curves(&curves, &g.out_dir)?;
            if duplicates > 0 {
                println!("dropped {duplicates} duplicate samples");
            }
            for (curve, path) in curves.iter().zip(&written) {
                let valid = curve
                    .points
                    .iter()
                    .filter(|p| p.loss_fraction.is_some())
                    .count();
                println!(
                    "{} -> {}: {} of {} points estimated, wrote {}",
                    curve.upstream,
                    curve.downstream,
                    valid,
                    curve.points.len(),
                    path.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = validate_global(&cli.global) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
