use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scr_lyapunov::pipeline::{self, oracle_check, run_stage, Outcome, RunConfig, Stage, SystemKind};
use scr_lyapunov::space::Domain;

#[derive(Parser)]
#[command(name = "scrl", version, about = "Strong chain recurrence and Lyapunov functions on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every stage, from the chain graph to the verification report.
    Analyze(Common),
    /// Strong chain recurrent set for each --epsilon.
    Scr(Common),
    /// Chain recurrent set for each --epsilon.
    Cr(Common),
    /// Stable pairs and the greedy cover (needs `scr`).
    Pairs(Common),
    /// Per-pair and combined Lyapunov functions (needs `pairs`).
    Lyapunov(Common),
    /// Monotonicity and strict decrease of the combined function (needs `lyapunov`).
    Verify(Common),
    /// Checks SCR inside CR and monotonicity in epsilon (needs `scr` and `cr`).
    Compare(Common),
    /// Fast graph algorithms against brute-force oracles.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Circle,
    Square,
    Roof,
    Identity,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Circle,
    Square,
    Roof,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    system: Option<SystemArg>,
    /// Domain of the identity and custom systems.
    #[arg(long, value_enum)]
    domain: Option<DomainArg>,
    /// Image table `point_index,m,image_index` for the custom system.
    #[arg(long)]
    sampled_csv: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    /// Repeatable; the first value drives pairs, lyapunov and verify.
    #[arg(long)]
    epsilon: Vec<f64>,
    #[arg(long = "T")]
    t_step: Option<f64>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    prune_radius: Option<f64>,
    /// Seed ball radii in units of the grid resolution.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    seed_stride: Option<usize>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    t_probe: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> scr_lyapunov::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.system {
            cfg.system = match s {
                SystemArg::Circle => SystemKind::Circle,
                SystemArg::Square => SystemKind::Square,
                SystemArg::Roof => SystemKind::Roof,
                SystemArg::Identity => SystemKind::Identity,
                SystemArg::Custom => SystemKind::Custom,
            };
        }
        if let Some(d) = self.domain {
            cfg.domain = match d {
                DomainArg::Circle => Domain::Circle,
                DomainArg::Square => Domain::UnitSquare,
                DomainArg::Roof => Domain::Roof,
            };
        }
        if let Some((first, rest)) = self.epsilon.split_first() {
            cfg.epsilon = *first;
            cfg.extra_epsilons = rest.to_vec();
        }
        set(&mut cfg.sampled_csv, self.sampled_csv.clone().map(Some));
        set(&mut cfg.grid_n, self.grid.map(Some));
        set(&mut cfg.t_step, self.t_step);
        set(&mut cfg.m_max, self.m_max);
        set(&mut cfg.prune_radius, self.prune_radius.map(Some));
        set(&mut cfg.pairs.radii, self.radii.clone());
        set(&mut cfg.pairs.seed_stride, self.seed_stride.map(Some));
        set(&mut cfg.lyapunov.s_max, self.s_max);
        set(&mut cfg.t_probe, self.t_probe);
        set(&mut cfg.margin, self.margin.map(Some));
        set(&mut cfg.output_dir, self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> scr_lyapunov::Result<Outcome> {
    pipeline::init_threads()?;
    let (common, stage) = match cli.command {
        Command::OracleCheck { seeds, rng_seed, out } => {
            let report = oracle_check(seeds, rng_seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("oracle_report.json"), text + "\n")?;
                }
                None => println!("{text}"),
            }
            return Ok(if report.passed { Outcome::Passed } else { Outcome::PropertyFailed });
        }
        Command::Analyze(c) => (c, Stage::Analyze),
        Command::Scr(c) => (c, Stage::Scr),
        Command::Cr(c) => (c, Stage::Cr),
        Command::Pairs(c) => (c, Stage::Pairs),
        Command::Lyapunov(c) => (c, Stage::Lyapunov),
        Command::Verify(c) => (c, Stage::Verify),
        Command::Compare(c) => (c, Stage::Compare),
    };
    let cfg = common.resolve()?;
    let outcome = run_stage(&cfg, stage)?;
    eprintln!("artifacts in {}", cfg.output_dir.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            if outcome == Outcome::PropertyFailed {
                eprintln!("ran to completion, but a checked property failed; see the report");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
