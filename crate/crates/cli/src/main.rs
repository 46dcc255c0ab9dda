//! Batch simulation harness: closed-loop scenario runs, the tabletop
//! experiment suite, and the danger-map measurement mode.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dangermap::sim::{metrics_csv, DangerMapReport, LatencyReport, SimOutput};
use dangermap::{run_closed_loop, run_danger_map_test, run_experiment_suite, Scenario, SimOptions};

#[derive(Parser)]
#[command(name = "dmap", version, about = "Closed-loop manipulator planning simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file and write metrics, logs, and map snapshots.
    Simulate {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Override the scenario's rng seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's run count.
        #[arg(long)]
        runs: Option<u32>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Disable all worker parallelism; outputs must be identical.
        #[arg(long)]
        single_thread: bool,
    },
    /// Run the built-in experiment suite and write the comparison table.
    Experiments {
        /// Suite name; only "paper" exists.
        #[arg(long)]
        suite: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Disable all worker parallelism; outputs must be identical.
        #[arg(long)]
        single_thread: bool,
    },
    /// Hold the arm still and measure the time-averaged danger map.
    Dangermap {
        /// Scenario TOML file with a [measure] block.
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Disable all worker parallelism; outputs must be identical.
        #[arg(long)]
        single_thread: bool,
    },
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn report_latency(name: &str, lat: &LatencyReport) {
    eprintln!(
        "{name}: {} ticks, pipeline latency mean {:.2} ms, max {:.2} ms",
        lat.ticks, lat.mean_ms, lat.max_ms
    );
}

fn write_sim_output(dir: &Path, out: &SimOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&out.metrics, &out.aggregate))?;
    fs::write(dir.join("events.log"), &out.events)?;
    fs::write(dir.join("ee_trace.txt"), &out.ee_trace)?;
    fs::write(dir.join("danger_map.txt"), &out.danger_map)?;
    fs::write(dir.join("binary_map.txt"), &out.binary_map)?;
    Ok(())
}

fn write_danger_report(dir: &Path, report: &DangerMapReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("bands.txt"), &report.table)?;
    fs::write(dir.join("averaged_map.txt"), &report.averaged_map)?;
    fs::write(dir.join("final_map.txt"), &report.final_map)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate { scenario, seed, runs, out, single_thread } => {
            let sc = load_scenario(&scenario)?;
            let opts = SimOptions { seed, runs, single_thread, record_ticks: false };
            let output = run_closed_loop(&sc, &opts)?;
            write_sim_output(&out, &output)?;
            report_latency(&output.scenario_name, &output.latency);
            print!("{}", metrics_csv(&output.metrics, &output.aggregate));
        }
        Cmd::Experiments { suite, out, single_thread } => {
            if suite != "paper" {
                bail!("unknown suite '{suite}', expected 'paper'");
            }
            let opts = SimOptions { single_thread, ..SimOptions::default() };
            let report = run_experiment_suite(&opts)?;
            fs::create_dir_all(&out)?;
            for output in &report.outputs {
                write_sim_output(&out.join(&output.scenario_name), output)?;
                report_latency(&output.scenario_name, &output.latency);
            }
            fs::write(out.join("comparison.txt"), &report.comparison)?;
            print!("{}", report.comparison);
        }
        Cmd::Dangermap { scenario, out, single_thread } => {
            let sc = load_scenario(&scenario)?;
            let opts = SimOptions { single_thread, ..SimOptions::default() };
            let report = run_danger_map_test(&sc, &opts)?;
            write_danger_report(&out, &report)?;
            report_latency(&sc.name, &report.latency);
            print!("{}", report.table);
        }
    }
    Ok(())
}
