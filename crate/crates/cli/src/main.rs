//! `lorentz-lab`: runs one Lorentz gas experiment and writes its outputs.
//!
//! Settings come from built-in defaults, then an optional flat TOML file
//! (`--config`), then command-line flags. The output directory can also be
//! set through `LORENTZ_OUT_DIR`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorentz_core::config::{Experiment, RunConfig, ScheduleKind};
use lorentz_core::runner::{exit_code, run, EXIT_OK};
use lorentz_core::statistics::mismatch::EnvironmentMode;

#[derive(Debug, Parser)]
#[command(
    name = "lorentz-lab",
    version,
    about = "Lorentz gas and random flight coupling experiments"
)]
struct Cli {
    #[command(subcommand)]
    experiment: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// One Lorentz trajectory in a fresh environment.
    Simulate,
    /// Coupled Lorentz/flight ensembles with per-replica stopping times.
    Couple,
    /// Frequency of an early mismatch against its bound shape.
    Mismatch,
    /// Near-encounter events of independent flights.
    Events,
    /// Ball occupation of a flight against the γ integral.
    Green,
    /// Diffusive limit of a single flight.
    Donsker,
    /// Triangular-array averages over one fixed environment.
    Quenched,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Self::Simulate => Experiment::Simulate,
            Self::Couple => Experiment::Couple,
            Self::Mismatch => Experiment::Mismatch,
            Self::Events => Experiment::Events,
            Self::Green => Experiment::Green,
            Self::Donsker => Experiment::Donsker,
            Self::Quenched => Experiment::Quenched,
        }
    }
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

#[derive(Debug, Args)]
struct Opts {
    /// Flat TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Time horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    /// Number of coupled trajectories.
    #[arg(long = "N", global = true)]
    n_traj: Option<usize>,
    /// Half-angle of the initial velocity cap.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Place initial velocities on an arc with this spacing.
    #[arg(long, global = true)]
    w: Option<f64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Initial velocity for `simulate`, as x,y,z.
    #[arg(long, global = true, value_parser = parse_vec3, allow_hyphen_values = true)]
    v0: Option<[f64; 3]>,
    /// Cap axis, as x,y,z.
    #[arg(long, global = true, value_parser = parse_vec3, allow_hyphen_values = true)]
    axis: Option<[f64; 3]>,
    /// `annealed` or `quenched` environments across replicas.
    #[arg(long, global = true)]
    mode: Option<EnvironmentMode>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    cell_side: Option<f64>,
    /// Green target ball centre, as x,y,z.
    #[arg(long, global = true, value_parser = parse_vec3, allow_hyphen_values = true)]
    x0: Option<[f64; 3]>,
    /// Green target ball radius.
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    escape_factor: Option<f64>,
    /// `geometric`, `power` or `rows`.
    #[arg(long, global = true)]
    schedule: Option<ScheduleKind>,
    #[arg(long, global = true)]
    n_min: Option<u32>,
    #[arg(long, global = true)]
    n_max: Option<u32>,
    #[arg(long, global = true)]
    flight_replicas: Option<usize>,
    #[arg(long, global = true)]
    wiener_paths: Option<usize>,
    #[arg(long, global = true)]
    wiener_steps: Option<usize>,
    /// Write trajectories as CSV.
    #[arg(long, global = true)]
    dump: bool,
    /// Run even if `r T > 1` or the schedule is not admissible.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LORENTZ_OUT_DIR")]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> lorentz_core::Result<RunConfig> {
    let o = cli.opts;
    let mut c = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    c.experiment = cli.experiment.experiment();
    set(&mut c.eps, o.eps);
    set(&mut c.horizon, o.horizon);
    set(&mut c.n_traj, o.n_traj);
    set(&mut c.replicas, o.replicas);
    set(&mut c.seed, o.seed);
    set(&mut c.axis, o.axis);
    set(&mut c.mode, o.mode);
    set(&mut c.cell_side, o.cell_side);
    set(&mut c.x0, o.x0);
    set(&mut c.a, o.a);
    set(&mut c.escape_factor, o.escape_factor);
    set(&mut c.schedule, o.schedule);
    set(&mut c.n_min, o.n_min);
    set(&mut c.n_max, o.n_max);
    set(&mut c.flight_replicas, o.flight_replicas);
    set(&mut c.wiener_paths, o.wiener_paths);
    set(&mut c.wiener_steps, o.wiener_steps);
    set(&mut c.out, o.out);
    if o.beta.is_some() {
        c.beta = o.beta;
    }
    if o.w.is_some() {
        c.w = o.w;
    }
    if o.v0.is_some() {
        c.v0 = o.v0;
    }
    if o.rho.is_some() {
        c.rho = o.rho;
    }
    if o.threads.is_some() {
        c.threads = o.threads;
    }
    c.dump |= o.dump;
    c.force |= o.force;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = build_config(cli).and_then(|c| run(&c));
    match outcome {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", o.manifest.display());
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("lorentz-lab: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
