use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use splitwise::decision::{self, DecisionOptions, Rate, Strategy};
use splitwise::net::{self, DeviceOptions};
use splitwise::profile::{self, load_profile_file};
use splitwise::scenario::{self, BaselinePolicy, Scenario, ScenarioOptions};
use splitwise::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "splitwise",
    version,
    about = "Latency-optimal split computing over a profiled network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
struct Grid {
    /// Batch sizes, comma separated [default: 1,2,4,...,64]
    #[arg(long, value_delimiter = ',')]
    batches: Option<Vec<u32>>,
    /// Data rates with unit suffix bps, kbps or mbps (bytes per second) [default: 1mbps,...,128mbps]
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<Rate>>,
}

impl Grid {
    fn resolve(&self) -> (Vec<u32>, Vec<f64>) {
        let batches = self.batches.clone().unwrap_or_else(decision::default_batches);
        let rates = match &self.rates {
            Some(r) => r.iter().map(|r| r.0).collect(),
            None => decision::default_rates_bps(),
        };
        (batches, rates)
    }
}

#[derive(Debug, clap::Args)]
struct Search {
    /// Exclude full offloading (raw inputs stay on the device)
    #[arg(long)]
    no_full_offload: bool,
    /// Consider every layer as a split point, not only compressive bottlenecks
    #[arg(long)]
    all_layers: bool,
    /// Interpolate timings for unmeasured batch sizes
    #[arg(long)]
    interpolate: bool,
}

impl Search {
    fn options(&self) -> DecisionOptions {
        DecisionOptions {
            allow_full_offload: !self.no_full_offload,
            all_layers: self.all_layers,
            interpolate: self.interpolate,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report compression ratios, natural and compressive bottlenecks
    Bottlenecks {
        profile: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Optimal strategy for every (batch, rate) cell
    Surface {
        profile: PathBuf,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        search: Search,
        #[arg(long, value_enum, default_value = "csv")]
        out: Format,
        /// Write here instead of stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Per-cell relative gain of dynamic selection over a baseline
    GainMap {
        profile: PathBuf,
        /// static:<layer>, full or none
        #[arg(long)]
        baseline: BaselinePolicy,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        search: Search,
        #[arg(long, value_enum, default_value = "csv")]
        out: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Replay a scenario and report the average gain over a baseline
    Scenario {
        profile: PathBuf,
        scenario: PathBuf,
        /// static:<layer>, full or none
        #[arg(long)]
        baseline: BaselinePolicy,
        /// Extra latency charged whenever the dynamic strategy changes
        #[arg(long, default_value_t = 0.0)]
        penalty_ms: f64,
        #[command(flatten)]
        search: Search,
        #[arg(long, value_enum, default_value = "json")]
        out: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the server agent
    Serve {
        profile: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Run the device agent over a scenario
    Device {
        profile: PathBuf,
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// Report path; `.csv` selects CSV, anything else JSON. Stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        no_full_offload: bool,
        /// Do not contact the server for steps that run fully on the device
        #[arg(long)]
        no_offload_silent: bool,
        /// Use this strategy at every step (full_offload, no_offload or split@<layer>)
        #[arg(long)]
        force: Option<Strategy>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                Error::Argument(format!("cannot create {}: {e}", p.display()))
            })?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(mut w: Box<dyn Write>, json: &str) -> Result<()> {
    writeln!(w, "{json}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::Argument(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bottlenecks { profile, json } => {
            let p = load_profile_file(&profile)?;
            let report = profile::bottleneck_report(&p);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("profile: {} ({} layers)", p.name(), p.depth());
                println!("ratios: {:?}", report.ratios);
                println!("natural ({}): {:?}", report.natural.len(), report.natural);
                println!("compressive ({}): {:?}", report.compressive.len(), report.compressive);
            }
        }
        Command::Surface {
            profile,
            grid,
            search,
            out,
            output: path,
        } => {
            let p = load_profile_file(&profile)?;
            let (batches, rates) = grid.resolve();
            let surface = decision::decision_surface_with(&p, &batches, &rates, &search.options())?;
            let w = output(path.as_deref())?;
            match out {
                Format::Csv => surface.write_csv(w)?,
                Format::Json => write_json(w, &surface.to_json())?,
            }
        }
        Command::GainMap {
            profile,
            baseline,
            grid,
            search,
            out,
            output: path,
        } => {
            let p = load_profile_file(&profile)?;
            let (batches, rates) = grid.resolve();
            let map = scenario::gain_map_with(&p, baseline, &batches, &rates, &search.options())?;
            let w = output(path.as_deref())?;
            match out {
                Format::Csv => map.write_csv(w)?,
                Format::Json => write_json(w, &map.to_json())?,
            }
        }
        Command::Scenario {
            profile,
            scenario: scenario_path,
            baseline,
            penalty_ms,
            search,
            out,
            output: path,
        } => {
            let p = load_profile_file(&profile)?;
            let s = Scenario::load_file(&scenario_path)?;
            let opts = ScenarioOptions {
                decision: search.options(),
                switch_penalty_ms: penalty_ms,
            };
            let report = scenario::evaluate_scenario_with(&p, &s, baseline, &opts)?;
            let w = output(path.as_deref())?;
            match out {
                Format::Csv => report.write_csv(w)?,
                Format::Json => write_json(w, &report.to_json())?,
            }
        }
        Command::Serve { profile, listen } => {
            let p = load_profile_file(&profile)?;
            net::serve(listen.as_str(), p)?;
        }
        Command::Device {
            profile,
            scenario: scenario_path,
            connect,
            report,
            no_full_offload,
            no_offload_silent,
            force,
        } => {
            let p = load_profile_file(&profile)?;
            let s = Scenario::load_file(&scenario_path)?;
            let opts = DeviceOptions {
                decision: DecisionOptions::restricted(!no_full_offload),
                force,
                no_offload_silent,
            };
            let run = net::run_device_with(connect.as_str(), &p, &s, &opts)?;
            let failed = run.records.iter().filter(|r| !r.is_ok()).count();
            eprintln!("{} requests, {} failed", run.records.len(), failed);
            let csv = report
                .as_ref()
                .is_some_and(|r| r.extension().is_some_and(|e| e == "csv"));
            let w = output(report.as_deref())?;
            if csv {
                run.write_csv(w)?;
            } else {
                write_json(w, &run.to_json())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPLITWISE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { 3 } else { 2 })
        }
    }
}
