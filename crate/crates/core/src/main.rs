use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spolf::harness::{run_bench, trajectory, write_summary, BenchConfig};
use spolf::{generate, run, Algorithm, Error, GridSpec, GridWorld, LinkKind, RunConfig};

#[derive(Parser)]
#[command(name = "spolf", version, about = "Safe exploration on feature-based grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and write it as JSON.
    GenEnv(GenEnvArgs),
    /// Run one agent on a world file and write its trajectory CSV.
    Run(RunArgs),
    /// Run a multi-seed benchmark described by a JSON config.
    Bench(BenchArgs),
    /// Re-render summary.md (and optionally SVG charts) from a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    width: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    height: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..), default_value_t = 5)]
    dim: u32,
    /// Link of the safety function.
    #[arg(long, default_value = "sigmoid")]
    link: LinkKind,
    /// Link of the reward function.
    #[arg(long, default_value = "identity")]
    reward_link: LinkKind,
    /// Safety threshold h.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Observation noise on both channels.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Default sensor radius stored in the file.
    #[arg(long, default_value_t = 3)]
    fov: usize,
    #[arg(long)]
    min_safe_region: Option<usize>,
    #[arg(long)]
    unsafe_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value = "spolf")]
    algo: Algorithm,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    /// Sensor radius; defaults to the world's.
    #[arg(long)]
    fov: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = spolf::planner::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    delta_r: f64,
    #[arg(long, default_value_t = 0.05)]
    delta_g: f64,
    #[arg(long, default_value_t = 10)]
    prior_safety: usize,
    #[arg(long, default_value_t = 10)]
    prior_reward: usize,
    /// Stay in exploration mode until its target is reached.
    #[arg(long)]
    no_early_exit: bool,
    /// Fill the step_wall_nanos column.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (overrides SPOLF_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's output_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    svg: bool,
}

/// Exit status for an error: 3 for a safety breach, 1 for generation
/// failures, 2 for bad input.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SafetyBreach { .. } => 3,
        Error::GenerationFailed { .. } => 1,
        _ => 2,
    }
}

fn gen_env(a: GenEnvArgs) -> Result<(), Error> {
    let (w, h) = (a.width as usize, a.height as usize);
    let mut spec = GridSpec::new(w, h, a.dim as usize, a.seed);
    spec.link_kind_safety = a.link;
    spec.link_kind_reward = a.reward_link;
    spec.safety_threshold = a.h;
    spec.noise_sigma_r = a.sigma;
    spec.noise_sigma_g = a.sigma;
    spec.fov_radius = a.fov;
    if let Some(m) = a.min_safe_region {
        spec.min_safe_region = m;
    }
    if let Some(f) = a.unsafe_fraction {
        spec.unsafe_fraction = f;
    }
    generate(&spec)?.save(&a.out)
}

fn run_cmd(a: RunArgs) -> Result<(), Error> {
    let world = GridWorld::load(&a.env)?;
    let mut cfg = RunConfig::new(a.algo, a.steps, a.seed);
    cfg.fov_radius = a.fov;
    cfg.gamma = a.gamma;
    cfg.delta_r = a.delta_r;
    cfg.delta_g = a.delta_g;
    cfg.prior_safety_samples = a.prior_safety;
    cfg.prior_reward_samples = a.prior_reward;
    cfg.etse_early_exit = !a.no_early_exit;
    cfg.timing = a.timing;
    let traj = run(&world, &cfg)?;
    trajectory::write_csv(&a.out, &traj.records)
}

fn bench(a: BenchArgs) -> Result<ExitCode, Error> {
    let mut cfg = BenchConfig::load(&a.config)?;
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if let Some(dir) = a.out_dir {
        cfg.output_dir = dir;
    }
    let outcome = run_bench(&cfg)?;
    let failed: Vec<_> = outcome.failures().collect();
    if failed.is_empty() {
        println!("{} runs written to {}", outcome.runs.len(), cfg.output_dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    for f in &failed {
        eprintln!(
            "failed: {} fov {} seed {}: {}",
            f.key.algorithm,
            f.key.fov,
            f.key.seed,
            f.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("{} of {} runs failed", failed.len(), outcome.runs.len());
    Ok(ExitCode::from(1))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenEnv(a) => gen_env(a).map(|_| ExitCode::SUCCESS),
        Command::Run(a) => run_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Bench(a) => bench(a),
        Command::Report(a) => write_summary(&a.dir, a.svg).map(|p| {
            println!("wrote {}", p.display());
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e))
    })
}
