mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disco_core::equivariance::{EquivKind, FilterCase, TABLE_ROTATIONS, TABLE_SIGNALS};
use disco_core::profiler::CostConfig;
use disco_core::FilterKind;

use config::{ConvConfig, EquivConfig, FilterSpec, GradcheckConfig, ProfileConfig, Report, RunConfig};
use failure::Failure;

#[derive(Parser)]
#[command(
    name = "disco",
    version,
    about = "DISCO spherical convolutions: convolve, measure equivariance, profile costs"
)]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write a JSON report with the run configuration and results.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    /// Rerun the configuration stored in a report and compare the results.
    #[arg(long)]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Convolve every channel of an SSIG file with one filter.
    Conv(ConvArgs),
    /// One row of the equivariance table as CSV on standard output.
    Equiv(EquivArgs),
    /// Analytic cost scaling report.
    Profile(ProfileArgs),
    /// Check the backward pass against dense and finite-difference oracles.
    Gradcheck(GradcheckArgs),
    /// Write the bundled fixture files.
    Fixtures {
        #[arg(long, default_value = "crates/cli/fixtures")]
        dir: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<FilterKind, String> {
    match s {
        "axisym" | "axisymmetric" => Ok(FilterKind::Axisymmetric),
        "separable" => Ok(FilterKind::Separable),
        "directional" => Ok(FilterKind::Directional),
        _ => Err(format!("unknown filter kind {s:?} (axisym|separable|directional)")),
    }
}

#[derive(Args)]
struct ConvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Load the filter from a file instead of generating it.
    #[arg(long, conflicts_with_all = ["kind", "nodes", "cutoff_cells", "filter_seed"])]
    filter_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, default_value = "axisym")]
    kind: FilterKind,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    /// Cutoff in units of pi / L.
    #[arg(long, default_value_t = 3.0)]
    cutoff_cells: f64,
    /// Draw random node values with this seed.
    #[arg(long)]
    filter_seed: Option<u64>,
    /// Also save the filter that was used.
    #[arg(long)]
    save_filter: Option<PathBuf>,
    #[arg(long)]
    transposed: bool,
    /// Output at twice the input bandlimit (transposed only).
    #[arg(long)]
    upsample: bool,
    /// Fail unless the output is constant on each ring and nearly constant across rings.
    #[arg(long)]
    verify_constant: bool,
    /// Allowed cross-ring spread, relative to the largest output magnitude.
    #[arg(long, default_value_t = 0.05)]
    constant_tol: f64,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long = "L", default_value_t = 128)]
    l: u32,
    #[arg(long, default_value = "axisym")]
    kind: EquivKind,
    #[arg(long, default_value = "best")]
    case: FilterCase,
    /// Fixed rotation colatitude in degrees; uniform rotations when omitted.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TABLE_SIGNALS)]
    signals: usize,
    #[arg(long, default_value_t = TABLE_ROTATIONS)]
    rotations: usize,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long = "L-list", value_delimiter = ',', default_value = "64,128,256,512,1024")]
    l_list: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    cutoff_cells: f64,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    /// Count the rotated coordinates kept for training.
    #[arg(long)]
    training: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long = "L", default_value_t = 8)]
    l: u32,
    #[arg(long, value_parser = parse_kind, default_value = "axisym")]
    kind: FilterKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    cutoff_cells: f64,
}

fn config_for(command: Command) -> Result<Option<RunConfig>, Failure> {
    Ok(Some(match command {
        Command::Conv(a) => {
            let filter = match a.filter_file {
                Some(path) => FilterSpec::File { path },
                None => FilterSpec::Generated {
                    kind: a.kind,
                    nodes: a.nodes,
                    cutoff_cells: a.cutoff_cells,
                    seed: a.filter_seed,
                },
            };
            if let Some(path) = &a.save_filter {
                if !a.input.exists() {
                    return Err(Failure::Usage(format!("input {} does not exist", a.input.display())));
                }
                let l = disco_core::io::read_signal(&a.input)?.bandlimit().get();
                filter.resolve(l)?.save(path)?;
            }
            RunConfig::Conv(ConvConfig {
                input: a.input,
                output: a.output,
                filter,
                transposed: a.transposed,
                upsample: a.upsample,
                verify_constant: a.verify_constant,
                constant_tol: a.constant_tol,
            })
        }
        Command::Equiv(a) => RunConfig::Equiv(EquivConfig {
            l: a.l,
            kind: a.kind,
            case: a.case,
            beta_deg: a.beta,
            seed: a.seed,
            n_signals: a.signals,
            n_rotations: a.rotations,
        }),
        Command::Profile(a) => RunConfig::Profile(ProfileConfig {
            l_list: a.l_list,
            out: a.out,
            cost: CostConfig {
                n_nodes: a.nodes,
                cutoff_cells: a.cutoff_cells,
                training: a.training,
                ..CostConfig::default()
            },
        }),
        Command::Gradcheck(a) => RunConfig::Gradcheck(GradcheckConfig {
            l: a.l,
            kind: a.kind,
            seed: a.seed,
            cutoff_cells: a.cutoff_cells,
        }),
        Command::Fixtures { dir } => {
            commands::write_fixtures(&dir)?;
            eprintln!("fixtures written to {}", dir.display());
            return Ok(None);
        }
    }))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let (config, stored) = match (cli.replay, cli.command) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--replay takes no subcommand".into())),
        (Some(path), None) => {
            if !path.exists() {
                return Err(Failure::Usage(format!("report {} does not exist", path.display())));
            }
            let report: Report = serde_json::from_slice(&std::fs::read(&path)?)?;
            if report.version != Report::VERSION {
                return Err(Failure::Io(format!("unsupported report version {}", report.version)));
            }
            (report.config, Some(report.result))
        }
        (None, Some(command)) => match config_for(command)? {
            Some(c) => (c, None),
            None => return Ok(()),
        },
        (None, None) => return Err(Failure::Usage("no command given; see --help".into())),
    };
    let outcome = commands::run(&config)?;
    if let Some(path) = &cli.report {
        let report = Report {
            version: Report::VERSION,
            config: config.clone(),
            result: outcome.result.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some(stored) = stored {
        if stored != outcome.result {
            return Err(Failure::Check("replayed results differ from the report".into()));
        }
        eprintln!("replay matches the stored report");
    }
    if !outcome.passed {
        return Err(Failure::Check("see the diagnostics above".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("disco: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
