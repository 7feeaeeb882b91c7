use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ocrp_core::acceptance::{run_selected, CRITERIA};
use ocrp_core::config::ExperimentConfig;
use ocrp_core::error::{invalid, Result};
use ocrp_core::experiments::{
    absorption_law, entrance_law, excursion_scaling, hitting_frequency, nested_path_marginal, pseudo_stationarity,
    ranked_lengths, tree_spinal_laws,
};
use ocrp_core::nested::tree::LabeledTree;
use ocrp_core::nested::{check_fragmentation_identity, nested_pcrp, NestedPair};
use ocrp_core::ocrp::{enumerate_bruteforce_law, exact_law, sample_pdip, seat_next, structural_pdip};
use ocrp_core::pcrp::simulate_pcrp;
use ocrp_core::rng::labeled_stream;
use ocrp_core::scaffold::sample_clade;
use ocrp_core::stats::{write_reports_csv, TestReport};
use ocrp_core::updown::{simulate_updown, DEFAULT_EVENT_BUDGET};
use ocrp_core::Composition;

/// Environment variable fixing the number of worker threads.
const THREADS_ENV: &str = "OCRP_THREADS";

#[derive(Parser)]
#[command(
    name = "ocrp",
    version,
    about = "Ordered Chinese restaurant processes and their up-down chains"
)]
struct Cli {
    /// Configuration file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    theta1: Option<f64>,
    #[arg(long, global = true)]
    theta2: Option<f64>,
    #[arg(long, global = true)]
    coarse_alpha: Option<f64>,
    #[arg(long, global = true)]
    coarse_theta1: Option<f64>,
    #[arg(long, global = true)]
    coarse_theta2: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    n: Option<u64>,
    #[arg(long, global = true)]
    resolution: Option<u64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    time: Option<f64>,
    #[arg(long, global = true)]
    cap: Option<f64>,
    #[arg(long, global = true)]
    replicates: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Starting composition such as `3,1,2`, or `empty`.
    #[arg(long, global = true)]
    from: Option<Composition>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl From<Overrides> for ExperimentConfig {
    fn from(o: Overrides) -> Self {
        Self {
            alpha: o.alpha,
            theta1: o.theta1,
            theta2: o.theta2,
            coarse_alpha: o.coarse_alpha,
            coarse_theta1: o.coarse_theta1,
            coarse_theta2: o.coarse_theta2,
            gamma: o.gamma,
            n: o.n,
            resolution: o.resolution,
            horizon: o.horizon,
            time: o.time,
            cap: o.cap,
            replicates: o.replicates,
            seed: o.seed,
            from: o.from,
            out: o.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact composition law of size `n` as CSV.
    ExactLaw,
    /// Composition law of size `n` by enumerating seating sequences.
    Bruteforce,
    /// Simulates one path.
    Simulate {
        #[arg(long, value_enum, default_value_t = Process::Pcrp)]
        process: Process,
    },
    /// Scaling experiments for the up-down chain.
    Converge {
        #[arg(long, value_enum)]
        kind: ConvergeKind,
    },
    /// Conditional composition laws of the restaurant started from an
    /// exact sample.
    Pseudostat {
        #[arg(long, default_value_t = 6)]
        max_mass: u64,
    },
    /// Samples an interval partition, or checks its ranked block masses.
    Pdip {
        /// Assemble from a Dirichlet split instead of one restaurant.
        #[arg(long)]
        structural: bool,
        #[arg(long)]
        check: bool,
    },
    /// Fragmentation identity between coarse and fine partitions.
    Frag,
    /// Simulates a nested pair of up-down restaurants. The coarse rule has
    /// parameters `(coarse-alpha, coarse-theta1, coarse-alpha)`.
    Nested {
        #[arg(long)]
        check: bool,
    },
    /// Grows an alpha-gamma tree and reports its spinal compositions.
    Tree {
        #[arg(long)]
        check: bool,
    },
    /// Runs the acceptance suite.
    Acceptance {
        /// Comma-separated criterion ids; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Process {
    Ocrp,
    Pcrp,
    Chain,
    Clade,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvergeKind {
    Hitting,
    Excursion,
    Entrance,
    Absorption,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

const DEFAULT_PARAMS: (f64, f64, f64) = (0.5, 0.3, 0.7);
const DEFAULT_COARSE: (f64, f64, f64) = (0.25, 0.3, 0.25);
const DEFAULT_FINE: (f64, f64, f64) = (0.5, 0.0, 0.25);

fn output(cfg: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes the reports and returns whether all passed.
fn emit_reports(cfg: &ExperimentConfig, reports: &[TestReport]) -> Result<bool> {
    let mut w = output(cfg)?;
    write_reports_csv(reports, &mut w)?;
    w.flush()?;
    Ok(reports.iter().all(|r| r.pass))
}

fn emit_json(cfg: &ExperimentConfig, value: &serde_json::Value) -> Result<bool> {
    let mut w = output(cfg)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(true)
}

fn run(command: Command, cfg: ExperimentConfig) -> Result<bool> {
    let seed = cfg.seed.unwrap_or(0);
    let mut rng = labeled_stream(seed, "cli", 0);
    match command {
        Command::ExactLaw | Command::Bruteforce => {
            let n = cfg.n.unwrap_or(4);
            let p = cfg.params(DEFAULT_PARAMS)?;
            let law = if matches!(command, Command::ExactLaw) {
                exact_law(n, &p)?
            } else {
                enumerate_bruteforce_law(n, &p)?
            };
            let mut w = output(&cfg)?;
            law.write_csv(&mut w)?;
            w.flush()?;
            Ok(true)
        }
        Command::Simulate { process } => {
            let p = cfg.params(DEFAULT_PARAMS)?;
            let horizon = cfg.horizon.unwrap_or(1.0);
            let mut w = output(&cfg)?;
            match process {
                Process::Ocrp => {
                    writeln!(w, "n,composition")?;
                    let mut c = cfg.from.clone().unwrap_or_else(Composition::empty);
                    writeln!(w, "{},{c}", c.total())?;
                    for _ in 0..cfg.n.unwrap_or(10) {
                        c = seat_next(&c, &p, &mut rng)?;
                        writeln!(w, "{},{c}", c.total())?;
                    }
                }
                Process::Pcrp => {
                    let start = cfg.from.clone().unwrap_or_else(Composition::empty);
                    simulate_pcrp(&start, &p, horizon, false, &mut rng)?.write_csv(&mut w)?;
                }
                Process::Chain => {
                    let k = cfg.from.as_ref().map_or(cfg.n.unwrap_or(1), Composition::total);
                    simulate_updown(k, p.theta(), horizon, &mut rng)?.write_csv(&mut w)?;
                }
                Process::Clade => {
                    let m = cfg.from.as_ref().map_or(cfg.n.unwrap_or(1), Composition::total);
                    let clade = sample_clade(m, p.alpha, DEFAULT_EVENT_BUDGET, &mut rng)?;
                    writeln!(w, "{}", clade.to_json()?)?;
                }
            }
            w.flush()?;
            Ok(true)
        }
        Command::Converge { kind } => {
            let theta = cfg.params(DEFAULT_PARAMS)?.theta();
            let report = match kind {
                ConvergeKind::Hitting => {
                    hitting_frequency(cfg.n.unwrap_or(5), theta, cfg.replicates.unwrap_or(100_000), seed)?
                }
                ConvergeKind::Excursion => excursion_scaling(
                    theta,
                    cfg.n.unwrap_or(100) as f64,
                    cfg.time.unwrap_or(1.0),
                    cfg.replicates.unwrap_or(100_000),
                    0.15,
                    seed,
                )?,
                ConvergeKind::Entrance => entrance_law(
                    theta,
                    cfg.n.unwrap_or(200) as f64,
                    cfg.time.unwrap_or(0.5),
                    cfg.replicates.unwrap_or(10_000),
                    seed,
                )?,
                ConvergeKind::Absorption => absorption_law(
                    theta,
                    cfg.n.unwrap_or(200),
                    cfg.cap.unwrap_or(2.0),
                    cfg.replicates.unwrap_or(10_000),
                    seed,
                )?,
            };
            emit_reports(&cfg, &[report])
        }
        Command::Pseudostat { max_mass } => {
            let reports = pseudo_stationarity(
                &cfg.params(DEFAULT_PARAMS)?,
                cfg.n.unwrap_or(4),
                cfg.time.unwrap_or(0.5),
                max_mass,
                cfg.replicates.unwrap_or(100_000),
                seed,
            )?;
            emit_reports(&cfg, &reports)
        }
        Command::Pdip { structural, check } => {
            let p = cfg.params(DEFAULT_PARAMS)?;
            let resolution = cfg.resolution.unwrap_or(100_000);
            if check {
                return emit_reports(
                    &cfg,
                    &ranked_lengths(&p, resolution, cfg.replicates.unwrap_or(1_000), seed)?,
                );
            }
            let ip = if structural {
                structural_pdip(&p, resolution, &mut rng)?
            } else {
                sample_pdip(&p, resolution, &mut rng)?
            };
            let mut w = output(&cfg)?;
            writeln!(w, "left,right")?;
            for (a, b) in ip.blocks() {
                writeln!(w, "{a},{b}")?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Frag => {
            let reports = check_fragmentation_identity(
                &cfg.coarse_params(DEFAULT_COARSE)?,
                &cfg.params(DEFAULT_FINE)?,
                cfg.replicates.unwrap_or(1_000),
                cfg.resolution.unwrap_or(10_000),
                seed,
            )?;
            emit_reports(&cfg, &reports)
        }
        Command::Nested { check } => {
            let coarse_alpha = cfg.coarse_alpha.unwrap_or(0.25);
            let coarse_theta = cfg.coarse_theta1.unwrap_or(0.3);
            let fine = cfg.params((0.5, 0.1, 0.15))?;
            let start = NestedPair::empty();
            if check {
                let report = nested_path_marginal(
                    &start,
                    coarse_alpha,
                    coarse_theta,
                    &fine,
                    cfg.time.unwrap_or(0.5),
                    cfg.replicates.unwrap_or(10_000),
                    seed,
                )?;
                return emit_reports(&cfg, &[report]);
            }
            let path = nested_pcrp(
                &start,
                coarse_alpha,
                coarse_theta,
                &fine,
                cfg.horizon.unwrap_or(1.0),
                &mut rng,
            )?;
            let mut w = output(&cfg)?;
            writeln!(w, "time,coarse,fine")?;
            writeln!(w, "0,{},{}", path.initial.coarse(), path.initial.fine())?;
            for (t, pair) in &path.events {
                writeln!(w, "{t},{},{}", pair.coarse(), pair.fine())?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Tree { check } => {
            let alpha = cfg.alpha.unwrap_or(0.5);
            let gamma = cfg.gamma.unwrap_or(0.4);
            let n = cfg.n.unwrap_or(5) as usize;
            if check {
                return emit_reports(
                    &cfg,
                    &tree_spinal_laws(alpha, gamma, n, cfg.replicates.unwrap_or(10_000), seed)?,
                );
            }
            let mut tree = LabeledTree::grow(n, alpha, gamma, &mut rng)?;
            if let Some(h) = cfg.horizon {
                tree.run_updown(alpha, gamma, h, &mut rng)?;
            }
            let pair = tree.spinal_decomposition().ok();
            emit_json(
                &cfg,
                &json!({
                    "tree": tree.to_json(),
                    "coarse": pair.as_ref().map(|p| p.coarse().to_string()),
                    "fine": pair.as_ref().map(|p| p.fine().to_string()),
                }),
            )
        }
        Command::Acceptance { only, format } => {
            let seed = cfg
                .seed
                .ok_or_else(|| invalid("acceptance needs a seed (--seed or `seed =` in the config)"))?;
            let ids: Vec<&str> = if only.is_empty() {
                CRITERIA.to_vec()
            } else {
                only.iter().map(String::as_str).collect()
            };
            if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
                return Err(invalid(format!("unknown criterion {bad}")));
            }
            let summary = run_selected(&ids, seed)?;
            if !matches!(format, Format::Text) {
                for line in summary.lines() {
                    eprintln!("{line}");
                }
            }
            let mut w = output(&cfg)?;
            match format {
                Format::Json => writeln!(w, "{}", summary.to_json())?,
                Format::Csv => summary.write_csv(&mut w)?,
                Format::Text => {
                    for line in summary.lines() {
                        writeln!(w, "{line}")?;
                    }
                }
            }
            w.flush()?;
            Ok(summary.pass)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| {
        let file = match &cli.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        run(cli.command, file.merged(cli.overrides.into()))
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
