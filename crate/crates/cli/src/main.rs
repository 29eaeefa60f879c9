use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chcrit::Kind;
use chcrit_cli::commands::{self, Status};
use chcrit_cli::config::RunConfig;
use chcrit_cli::manifest::Outputs;
use clap::{Args, Parser, Subcommand};

/// Minimizers and critical nuclei of the renormalized Cahn-Hilliard energy
/// on the two-torus.
///
/// Exit codes: 0 ok, 1 error, 2 not converged, 3 no droplet regime,
/// 4 no saddle on the string.
#[derive(Parser)]
#[command(name = "chcrit", version)]
struct Cli {
    /// key=value file; flags of the same name override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    #[arg(long, global = true)]
    phi: Option<f64>,
    #[arg(long, global = true)]
    xi: Option<f64>,
    /// String intervals M.
    #[arg(long, global = true)]
    images: Option<usize>,
    #[arg(long, global = true)]
    dt0: Option<f64>,
    #[arg(long = "tol-disp", global = true)]
    tol_disp: Option<f64>,
    #[arg(long = "tol-grad", global = true)]
    tol_grad: Option<f64>,
    /// Descent steps (minimize) or outer iterations (string).
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CHF1 field (minimize) or CHS1 checkpoint (string).
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    #[arg(long, global = true)]
    levels: Option<usize>,
    #[arg(long, global = true)]
    rays: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "init-noise", global = true)]
    init_noise: Option<f64>,
    /// CHF1 field for diagnose and geometry.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    kind: Option<Kind>,
    /// CHF1 field for the far end of the string.
    #[arg(long = "endpoint-b", global = true)]
    endpoint_b: Option<PathBuf>,
    #[arg(long = "c-star", global = true)]
    c_star: Option<f64>,
    #[arg(long = "checkpoint-every", global = true)]
    checkpoint_every: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sharp-interface constants and critical volumes.
    Constants,
    /// Steepest descent from the droplet ansatz to the local minimizer.
    Minimize,
    /// String Method between the constant state and a droplet.
    String,
    /// Observables of a stored field.
    Diagnose,
    /// Level-set convexity, ray monotonicity and (H2) on a stored field.
    Geometry,
    /// Aggregates observables CSVs across phi into raw and rate tables.
    Table {
        /// CSV files of observables rows.
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Minimize => "minimize",
            Command::String => "string",
            Command::Diagnose => "diagnose",
            Command::Geometry => "geometry",
            Command::Table { .. } => "table",
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    if let Some(p) = &cli.config {
        c.apply_file(p)?;
    }
    let f = &cli.flags;
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = &f.$field { c.$field = v.clone(); })*
        };
    }
    macro_rules! take_opt {
        ($($field:ident),*) => {
            $(if let Some(v) = &f.$field { c.$field = Some(v.clone()); })*
        };
    }
    take!(phi, xi, tol_disp, tol_grad, out, levels, rays, seed, init_noise, c_star, checkpoint_every);
    take_opt!(images, dt0, max_iters, resume, workers, input, kind, endpoint_b);
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<Status> {
    let cfg = build_config(&cli)?;
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let out = Outputs::create(&cfg.out, cli.command.name(), cfg.to_text())?;
    match &cli.command {
        Command::Constants => commands::constants(&cfg, out),
        Command::Minimize => commands::minimize(&cfg, out),
        Command::String => commands::string(&cfg, out),
        Command::Diagnose => commands::diagnose(&cfg, out),
        Command::Geometry => commands::geometry(&cfg, out),
        Command::Table { inputs } => commands::table(&cfg, inputs, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(commands::error_code(&e) as u8)
        }
    }
}
